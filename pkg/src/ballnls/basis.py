"""Radial sine eigenbasis on the unit ball.

Eigenfunctions e_n(x) = sin(n pi |x|)/|x| with Dirichlet boundary, their
L^p norms, the quartic correlation tensor c(n,n1,n2,n3) = int_B e_n e_n1
e_n2 e_n3 dx with its near-resonant truncated view, the diagonal sigma
sums, and lattice-point counting on circles.

All integrals over the ball reduce to 4*pi * int_0^1 f(r) r^2 dr for
radial f.  Integrands with 1/r factors are always evaluated through their
regular sinc form, never by dividing near r = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, permutations

import numpy as np
from scipy.integrate import quad
from scipy.special import sici

from .errors import DomainError, ResolutionError

__all__ = [
    "QuadratureRule",
    "CorrelationTensor",
    "TruncatedTensorView",
    "gauss_legendre_rule",
    "rule_for_modes",
    "eigenfunction_value",
    "eigenfunction_lp_norm",
    "inner_product",
    "correlation",
    "correlation_quadrature",
    "build_tensor",
    "quartic_form",
    "sigma_sum",
    "count_circle_representations",
    "max_circle_count",
]

# L2 norm squared of every eigenfunction: 4*pi*int_0^1 sin^2(n*pi*r) dr = 2*pi.
EIGEN_NORM_SQ = 2.0 * np.pi


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights for int_0^1 f(r) dr, plus a resolution tag.

    ``order`` is the total node count; the default constructors place at
    least 8 nodes per half-oscillation of the highest requested mode.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise DomainError("nodes and weights must be matching 1-d arrays")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("quadrature nodes must be strictly increasing")
        if nodes[0] <= 0 or nodes[-1] > 1:
            raise DomainError("quadrature nodes must lie in (0, 1]")
        if np.any(weights <= 0):
            raise DomainError("quadrature weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-14:
            raise DomainError("rule does not reproduce int_0^1 1 dr")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def integrate(self, values: np.ndarray) -> float | np.ndarray:
        """Integrate sampled values f(nodes) over [0, 1]."""
        return np.asarray(values) @ self.weights


def gauss_legendre_rule(panels: int, degree: int = 8) -> QuadratureRule:
    """Composite Gauss-Legendre rule on [0, 1] with `panels` x `degree` nodes."""
    if panels < 1 or degree < 2:
        raise DomainError("need panels >= 1 and degree >= 2")
    x, w = np.polynomial.legendre.leggauss(degree)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = (half[:, None] * x[None, :] + mid[:, None]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return QuadratureRule(nodes, weights, order=nodes.size)


def rule_for_modes(n_top: int, nodes_per_oscillation: int = 8) -> QuadratureRule:
    """Rule resolving products of modes up to n_top.

    sin(n_top*pi*r) has n_top half-oscillations on [0,1]; we place
    `nodes_per_oscillation` nodes on each.
    """
    if n_top < 1:
        raise DomainError("n_top must be >= 1")
    total = max(32, nodes_per_oscillation * n_top)
    degree = 8
    panels = max(4, math.ceil(total / degree))
    return gauss_legendre_rule(panels, degree)


def _check_index(n: int, name: str = "n") -> int:
    n = int(n)
    if n < 1:
        raise DomainError(f"{name} must be a positive integer, got {n}")
    return n


def eigenfunction_value(n: int, r):
    """Evaluate e_n(r) = sin(n pi r)/r, with the limit n*pi at r = 0."""
    n = _check_index(n)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(r_arr > 1):
        raise DomainError("radius must lie in [0, 1]")
    # sin(n pi r)/r = n pi sinc(n r), regular at the origin.
    vals = n * np.pi * np.sinc(n * r_arr)
    return float(vals) if np.isscalar(r) else vals


def eigenfunction_lp_norm(n: int, p: float, rule: QuadratureRule) -> float:
    """(4 pi int_0^1 |e_n(r)|^p r^2 dr)^(1/p) via the rule."""
    n = _check_index(n)
    if p < 1:
        raise DomainError("p must be >= 1")
    if rule.order < 8 * n:
        raise ResolutionError(
            f"rule with {rule.order} nodes under-resolves mode {n}; "
            f"need >= {8 * n}"
        )
    vals = np.abs(eigenfunction_value(n, rule.nodes)) ** p * rule.nodes**2
    return float((4.0 * np.pi * rule.integrate(vals)) ** (1.0 / p))


def inner_product(m: int, n: int) -> float:
    """<e_m, e_n>_{L^2(B)} = 2 pi delta_{mn}, analytically."""
    m = _check_index(m, "m")
    n = _check_index(n, "n")
    return EIGEN_NORM_SQ if m == n else 0.0


def _correlation_k_values(n, n1, n2, n3):
    """Frequencies and signs of the eight-cosine expansion of the product."""
    s1, s2 = n - n1, n + n1
    s3, s4 = n2 - n3, n2 + n3
    ks = np.array(
        [s1 - s3, s1 + s3, s1 - s4, s1 + s4, s2 - s3, s2 + s3, s2 - s4, s2 + s4],
        dtype=float,
    )
    eps = np.array([1, 1, -1, -1, -1, -1, 1, 1], dtype=float)
    return ks, eps


def correlation(n: int, n1: int, n2: int, n3: int) -> float:
    """c(n,n1,n2,n3) = 4 pi int_0^1 prod sin(n_i pi r) / r^2 dr, closed form.

    Product-to-sum expansion into eight cosines (coefficient sum zero),
    then int_0^1 (cos(q r) - 1)/r^2 dr = (1 - cos q) - q Si(q) termwise.
    """
    n, n1, n2, n3 = (_check_index(v) for v in (n, n1, n2, n3))
    ks, eps = _correlation_k_values(n, n1, n2, n3)
    q = np.abs(ks) * np.pi
    si = sici(q)[0]
    return float(4.0 * np.pi * np.sum(eps * ((1.0 - np.cos(q)) - q * si)) / 8.0)


def correlation_quadrature(
    n: int, n1: int, n2: int, n3: int, tol: float = 1e-12
) -> float:
    """Independent adaptive-quadrature path for c(n,n1,n2,n3).

    Integrates the regular form prod e_{n_i}(r) * r^2; serves as the
    oracle for the sine-integral closed form.
    """
    n, n1, n2, n3 = (_check_index(v) for v in (n, n1, n2, n3))
    amp = n * n1 * n2 * n3 * np.pi**4

    def integrand(r):
        return (
            amp
            * np.sinc(n * r)
            * np.sinc(n1 * r)
            * np.sinc(n2 * r)
            * np.sinc(n3 * r)
            * r**2
        )

    limit = max(200, 4 * (n + n1 + n2 + n3))
    val, _ = quad(integrand, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=limit)
    return float(4.0 * np.pi * val)


def _correlation_batch(tuples: np.ndarray) -> np.ndarray:
    """Vectorized closed form over an (M, 4) integer index array."""
    n, n1, n2, n3 = tuples.T.astype(float)
    s1, s2 = n - n1, n + n1
    s3, s4 = n2 - n3, n2 + n3
    ks = np.stack(
        [s1 - s3, s1 + s3, s1 - s4, s1 + s4, s2 - s3, s2 + s3, s2 - s4, s2 + s4],
        axis=1,
    )
    eps = np.array([1, 1, -1, -1, -1, -1, 1, 1], dtype=float)
    q = np.abs(ks) * np.pi
    si = sici(q)[0]
    return 4.0 * np.pi * ((eps * ((1.0 - np.cos(q)) - q * si)).sum(axis=1)) / 8.0


@dataclass(frozen=True)
class CorrelationTensor:
    """Fully symmetric quartic tensor c(n,n1,n2,n3), indices <= n_max.

    Values are stored once per canonical (sorted) tuple.  ``bound_constant``
    is the empirical C with |c| <= C * min(indices) over all stored tuples.
    """

    n_max: int
    values: dict = field(repr=False)
    bound_constant: float
    quad_order: int = 0
    _dense_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def value(self, n: int, n1: int, n2: int, n3: int) -> float:
        key = tuple(sorted((int(n), int(n1), int(n2), int(n3))))
        if key[-1] > self.n_max:
            raise ResolutionError(
                f"index {key[-1]} exceeds tensor cutoff n_max={self.n_max}"
            )
        if key[0] < 1:
            raise DomainError("indices must be >= 1")
        return self.values[key]

    def dense(self, N: int | None = None) -> np.ndarray:
        """Dense (N,N,N,N) array C[n-1,n1-1,n2-1,n3-1], cached per N."""
        N = self.n_max if N is None else int(N)
        if N > self.n_max:
            raise ResolutionError(f"N={N} exceeds tensor cutoff {self.n_max}")
        if N not in self._dense_cache:
            C = np.zeros((N, N, N, N))
            for key, v in self.values.items():
                if key[3] > N:
                    continue
                i, j, k, l = (x - 1 for x in key)
                for p in set(permutations((i, j, k, l))):
                    C[p] = v
            self._dense_cache[N] = C
        return self._dense_cache[N]

    def contraction_matrix(self, N: int) -> np.ndarray:
        """C reshaped to (n1*n2, n*n3) so cubic terms become two GEMMs."""
        key = ("M1", N)
        if key not in self._dense_cache:
            C = self.dense(N)
            self._dense_cache[key] = np.ascontiguousarray(
                C.transpose(1, 2, 0, 3).reshape(N * N, N * N)
            )
        return self._dense_cache[key]


@dataclass(frozen=True)
class TruncatedTensorView:
    """c_K: entries vanish when |n^2 - n1^2 + n2^2 - n3^2| >= 10 K."""

    base: CorrelationTensor
    K: float

    def __post_init__(self):
        if self.K <= 0:
            raise DomainError("truncation threshold K must be positive")

    @property
    def n_max(self) -> int:
        return self.base.n_max

    def value(self, n: int, n1: int, n2: int, n3: int) -> float:
        if abs(n**2 - n1**2 + n2**2 - n3**2) >= 10.0 * self.K:
            # still validate the cutoff like the base tensor would
            if max(n, n1, n2, n3) > self.base.n_max:
                raise ResolutionError("index exceeds tensor cutoff")
            return 0.0
        return self.base.value(n, n1, n2, n3)

    def dense(self, N: int | None = None) -> np.ndarray:
        N = self.base.n_max if N is None else int(N)
        C = self.base.dense(N).copy()
        sq = (np.arange(1, N + 1) ** 2).astype(float)
        res = (
            sq[:, None, None, None]
            - sq[None, :, None, None]
            + sq[None, None, :, None]
            - sq[None, None, None, :]
        )
        C[np.abs(res) >= 10.0 * self.K] = 0.0
        return C


def build_tensor(n_max: int, rule: QuadratureRule | None = None) -> CorrelationTensor:
    """Populate all canonical tuples with entries <= n_max.

    The closed-form sine-integral path fills the tensor; the quadrature
    rule, when given, only records its order for cache metadata (the
    dual-path cross-check lives in the test suite and in correlation()).
    """
    n_max = _check_index(n_max, "n_max")
    canon = np.array(
        list(combinations_with_replacement(range(1, n_max + 1), 4)), dtype=np.int64
    )
    vals = _correlation_batch(canon)
    values = {tuple(int(i) for i in t): float(v) for t, v in zip(canon, vals)}
    mins = canon[:, 0].astype(float)  # tuples are sorted ascending
    bound_constant = float(np.max(np.abs(vals) / mins))
    return CorrelationTensor(
        n_max=n_max,
        values=values,
        bound_constant=bound_constant,
        quad_order=0 if rule is None else rule.order,
    )


def quartic_form(coeffs: np.ndarray, tensor: CorrelationTensor) -> float:
    """int_B |u|^4 dx for u = sum a_n e_n, by exact tensor contraction.

    Real and non-negative up to a 1e-10 relative imaginary residue, which
    is checked and discarded.
    """
    a = np.asarray(coeffs, dtype=complex)
    N = a.size
    if N == 0:
        return 0.0
    M1 = tensor.contraction_matrix(N)
    D = (a[:, None] * np.conj(a)[None, :]).reshape(-1)
    F = (D @ M1).reshape(N, N)
    q = np.conj(a) @ (F @ a)
    if abs(q.imag) > 1e-10 * max(abs(q), 1.0):
        raise FloatingPointError(f"quartic form has imaginary residue {q.imag:.3e}")
    return float(max(q.real, 0.0))


def sigma_sum(n: int, N2: int, tensor: CorrelationTensor) -> float:
    """sigma_{n,N2} = sum_{N2 <= n2 < 2 N2} c(n,n,n2,n2) / n2^2."""
    n = _check_index(n)
    N2 = _check_index(N2, "N2")
    if 2 * N2 - 1 > tensor.n_max or n > tensor.n_max:
        raise ResolutionError(
            f"sigma sum needs indices up to {max(2 * N2 - 1, n)}, "
            f"tensor cutoff is {tensor.n_max}"
        )
    return float(
        sum(tensor.value(n, n, n2, n2) / n2**2 for n2 in range(N2, 2 * N2))
    )


def count_circle_representations(l: int, N: int) -> int:
    """|{(n,n') in [0,N]^2 : n^2 + n'^2 = l}| by direct enumeration."""
    l = int(l)
    N = int(N)
    if l < 0:
        raise DomainError("l must be non-negative")
    if N < 0:
        raise DomainError("N must be non-negative")
    count = 0
    for n in range(0, min(N, math.isqrt(l)) + 1):
        rem = l - n * n
        m = math.isqrt(rem)
        if m * m == rem and m <= N:
            count += 1
    return count


def max_circle_count(N: int, l_max: int | None = None) -> tuple[int, int]:
    """(max count, argmax l) over all l <= l_max (default 2 N^2)."""
    N = int(N)
    if N < 0:
        raise DomainError("N must be non-negative")
    l_max = 2 * N * N if l_max is None else int(l_max)
    n = np.arange(N + 1, dtype=np.int64)
    sums = (n[:, None] ** 2 + n[None, :] ** 2).ravel()
    sums = sums[sums <= l_max]
    counts = np.bincount(sums)
    return int(counts.max()), int(np.argmax(counts))
