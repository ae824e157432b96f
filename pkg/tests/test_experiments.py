import math

import numpy as np
import pytest

from ballnls.basis import build_tensor
from ballnls.errors import DomainError, FitDegenerateError, PrecisionError
from ballnls.experiments import (
    block_observable,
    chaos_observable,
    choose_window,
    ks_critical_value,
    ks_statistic,
    observable_table,
    run_convergence_ladder,
    run_embedding_study,
    run_invariance,
    run_tail_experiment,
)
from ballnls.measures import FreeMeasureSpec, RngStream, sample_free


class TestKS:
    def test_identical_samples_zero(self):
        x = np.array([0.1, 0.4, 0.7])
        assert ks_statistic(x, x.copy()) == 0.0

    def test_disjoint_samples_one(self):
        assert ks_statistic(np.zeros(5), np.ones(5)) == 1.0

    def test_matches_closed_form(self):
        x = np.array([1.0, 2.0])
        y = np.array([1.5])
        # F_x jumps to .5 at 1, F_y jumps to 1 at 1.5: sup diff at 1.5
        assert ks_statistic(x, y) == pytest.approx(0.5)

    def test_critical_value(self):
        # c(0.01) = sqrt(-ln(0.005)/2) ~ 1.6276
        got = ks_critical_value(1000, 1000, alpha=0.01)
        assert got == pytest.approx(
            math.sqrt(-math.log(0.005) / 2.0) * math.sqrt(2 / 1000), rel=1e-12
        )

    def test_gaussian_calibration(self):
        gen = np.random.default_rng(0)
        stats = [
            ks_statistic(gen.standard_normal(500), gen.standard_normal(500))
            for _ in range(40)
        ]
        crit = ks_critical_value(500, 500, alpha=0.01)
        # under the null ~1% exceedances expected; allow a couple
        assert sum(s >= crit for s in stats) <= 3


class TestInvariance:
    def test_t_zero_exact_zeros(self):
        rep = run_invariance(
            N=4, samples=150, t_compare=0.0, beta_q=0.25, rng=RngStream(seed=1)
        )
        assert all(ks == 0.0 for _, ks, _ in rep.observables)
        assert rep.all_pass()

    def test_free_flow_modulus_invariance(self):
        # coupling 0 preserves |a_n| so modulus observables stay put
        rep = run_invariance(
            N=4,
            samples=300,
            t_compare=0.3,
            beta_q=0.0,
            rng=RngStream(seed=2),
            coupling=0.0,
        )
        # |a_n| drifts only by integrator rounding, so the empirical CDFs can
        # interleave by at most a few grid steps
        table = dict((name, ks) for name, ks, _ in rep.observables)
        assert table["abs_a1_sq"] <= 2 / 300
        assert table["mode_index"] <= 2 / 300
        assert rep.all_pass()

    def test_small_sample_rejected(self):
        with pytest.raises(DomainError):
            run_invariance(N=4, samples=50, t_compare=0.1, beta_q=0.25)

    def test_observable_table_keys(self):
        tensor = build_tensor(4)
        A = sample_free(FreeMeasureSpec.derived(4), RngStream(seed=0)).coeffs
        table = observable_table(A[None, :], tensor)
        assert set(table) == {"l4_norm_fourth", "re_a1", "abs_a1_sq", "mode_index"}
        assert table["l4_norm_fourth"][0] > 0


class TestTails:
    def test_precondition(self):
        with pytest.raises(PrecisionError):
            run_tail_experiment("L4_x", N=8, samples=10)

    def test_degenerate_point_mass(self):
        from ballnls.experiments import _fit_tail

        with pytest.raises(FitDegenerateError):
            _fit_tail(np.ones(10_000))

    def test_gaussian_norm_kappa_two(self):
        # ||phi||_{L^4} is a Gaussian-norm functional: kappa close to 2
        fit = run_tail_experiment(
            "L4_x", N=8, samples=20_000, rng=RngStream(seed=3), bootstrap=8
        )
        assert 1.5 <= fit.fitted_kappa <= 3.0
        assert np.all(np.diff(fit.empirical_log_survival) <= 1e-12)
        assert fit.kappa_stderr > 0

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            run_tail_experiment("L9", N=4, samples=10_000, rng=RngStream(seed=0))


class TestBlocks:
    def test_block_observable_single_block(self):
        # data in one dyadic block: the max equals that block's value
        R, S, N = 9, 3, 8
        mod_sq = np.zeros((R, S, N))
        mod_sq[:, :, 2] = 1.0  # mode 3 lives in block [2, 4)
        vals = block_observable(mod_sq, dt_rec=1.0 / (R - 1))
        # B = 2: sqrt(2) * (int (2 pi)^3 dt)^{1/6}
        expected = math.sqrt(2.0) * (2 * math.pi) ** 0.5
        assert np.allclose(vals, expected)

    def test_zero_field(self):
        mod_sq = np.zeros((5, 2, 4))
        assert np.all(block_observable(mod_sq, dt_rec=0.25) == 0)

    def test_chaos_observable_centering(self):
        tensor = build_tensor(8)
        # |g|^2 identically 1 => centered sum vanishes
        avg = np.ones((3, 8))
        vals = chaos_observable(avg, N2=2, tensor=tensor, n_top=4)
        assert np.allclose(vals, 0.0)

    def test_chaos_block_exceeds_truncation(self):
        tensor = build_tensor(8)
        with pytest.raises(DomainError):
            chaos_observable(np.ones((2, 8)), N2=8, tensor=tensor, n_top=4)


class TestLadder:
    def test_coupling_zero_closed_form(self):
        # linear flow: D_N is exactly the missing high-mode initial mass
        seed = 13
        spec = FreeMeasureSpec.derived(16)
        master = sample_free(spec, RngStream(seed))
        s = 0.4
        ladder = run_convergence_ladder(
            seed=seed,
            N_values=(4, 8, 16),
            s=s,
            t_end=0.25,
            coupling=0.0,
            record_points=8,
        )
        for (N_lo, N_hi), got in zip(((4, 8), (8, 16)), ladder.diffs):
            n = np.arange(N_lo + 1, N_hi + 1)
            tail = master.coeffs[N_lo:N_hi]
            expected = math.sqrt(
                float(2 * np.pi * np.sum(n ** (2 * s) * np.abs(tail) ** 2))
            )
            assert got == pytest.approx(expected, rel=1e-9)

    def test_duplicate_levels_give_zero(self):
        ladder = run_convergence_ladder(
            seed=1, N_values=(4, 4), s=0.2, t_end=0.125, record_points=4
        )
        assert ladder.diffs[0] == 0.0

    def test_non_dyadic_rejected(self):
        with pytest.raises(DomainError):
            run_convergence_ladder(seed=0, N_values=(3, 6), s=0.2, t_end=0.1)

    def test_s_range(self):
        with pytest.raises(DomainError):
            run_convergence_ladder(seed=0, N_values=(4, 8), s=0.6, t_end=0.1)

    def test_decreasing_with_positive_exponent(self):
        ladder = run_convergence_ladder(
            seed=3, N_values=(4, 8, 16), s=0.4, t_end=0.25, record_points=16
        )
        assert np.all(np.diff(ladder.diffs) < 0)
        assert ladder.fitted_exponent > 0


class TestEmbeddings:
    def test_single_entry_closed_form(self):
        # one spectral entry: both norms reduce to one term each
        from ballnls.norms import (
            SpaceTimeSpectrum,
            mixed_norm_l2t,
            xsb_norm,
        )
        from ballnls.basis import eigenfunction_lp_norm, rule_for_modes

        N, n, m = 2, 1, 3
        M = 2 * N * N
        vals = np.zeros((N, 2 * M + 1), dtype=complex)
        vals[n - 1, m + M] = 2.0
        spec = SpaceTimeSpectrum(N=N, M_half=M, values=vals)
        rule = rule_for_modes(8)
        p, s, b = 2.5, 0.0, 0.3
        ratio = mixed_norm_l2t(spec, p, rule) / xsb_norm(spec, s, b)
        expected = eigenfunction_lp_norm(n, p, rule) / (1.0 + abs(n * n - m)) ** b
        assert ratio == pytest.approx(expected, rel=1e-9)

    def test_clause_validation(self):
        from ballnls.norms import NormParams

        with pytest.raises(DomainError):
            run_embedding_study(
                "i", N=4, trials=2, params=NormParams(s=0, b=0.1, p=2.5, q=2)
            )
        with pytest.raises(DomainError):
            run_embedding_study("iv", N=4, trials=2)

    def test_reports_finite_max(self):
        rep = run_embedding_study("i", N=8, trials=5, rng=RngStream(seed=4))
        assert rep.max_ratio > 0 and np.isfinite(rep.max_ratio)
        assert rep.ratios.shape == (5,)

    def test_reproducible(self):
        a = run_embedding_study("vii", N=4, trials=3, rng=RngStream(seed=9))
        b = run_embedding_study("vii", N=4, trials=3, rng=RngStream(seed=9))
        assert np.array_equal(a.ratios, b.ratios)


class TestChooseWindow:
    def test_arithmetic(self):
        assert choose_window(2, math.log(2.0)) == pytest.approx(1.0)

    def test_monotone(self):
        values = [choose_window(n, 1.0) for n in (2, 4, 16, 256)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_validation(self):
        with pytest.raises(DomainError):
            choose_window(1, 1.0)
        with pytest.raises(DomainError):
            choose_window(4, 0.0)

    def test_subwindow_splitting_is_bookkeeping(self):
        # evolving [0, T] then [T, 2T] equals one pass over [0, 2T]
        from ballnls.dynamics import IntegratorConfig, evolve
        from ballnls.basis import build_tensor

        tensor = build_tensor(4)
        state = sample_free(FreeMeasureSpec.derived(4), RngStream(seed=5))
        cfg = IntegratorConfig(method="reference_rk4", dt=1e-3, dt_record=0.05)
        whole = evolve(state, 0.2, cfg, tensor=tensor)
        half = evolve(state, 0.1, cfg, tensor=tensor)
        rest = evolve(half.states[-1], 0.2, cfg, tensor=tensor)
        assert np.allclose(
            rest.states[-1].coeffs, whole.states[-1].coeffs, atol=1e-13
        )
