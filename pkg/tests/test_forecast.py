import math

import numpy as np
import pytest

from shredkit.forecast import (DivergenceError, LatentSequenceForecaster,
                               SindyForecaster, SindyLibrarySpec, SindyModel,
                               build_library, coefficient_rows,
                               equations_text, finite_difference_derivatives,
                               fit_recurrent_forecaster, sindy_consistency,
                               sindy_consistency_grad, sindy_fit,
                               sindy_forecast, sindy_threshold)

from oracles import rk4_trajectory


def linear_model(matrix, dt, dim=None, poly_order=1, include_sine=False):
    """SindyModel with coefficients set directly from a linear system z' = A z."""
    matrix = np.asarray(matrix, dtype=float)
    dim = dim or matrix.shape[0]
    spec = SindyLibrarySpec(dim=dim, poly_order=poly_order,
                            include_sine=include_sine)
    coeffs = np.zeros((spec.n_terms, dim))
    coeffs[1:1 + dim, :] = matrix.T
    return SindyModel(library=spec, coeffs=coeffs, dt=dt, threshold=0.0,
                      mask=np.ones_like(coeffs, dtype=bool))


class TestLibrary:
    def test_linear_two_dim(self):
        spec = SindyLibrarySpec(dim=2, poly_order=1)
        theta = build_library(np.array([[2.0, 3.0]]), spec)
        assert np.allclose(theta, [[1.0, 2.0, 3.0]])
        assert spec.labels() == ["1", "x0", "x1"]

    def test_sine_terms(self):
        spec = SindyLibrarySpec(dim=1, poly_order=1, include_sine=True)
        theta = build_library(np.array([[0.5]]), spec)
        assert np.allclose(theta, [[1.0, 0.5, 0.479425538604203]], atol=1e-12)

    def test_quadratic_graded_lex_order(self):
        spec = SindyLibrarySpec(dim=2, poly_order=2)
        a, b = 2.0, 3.0
        theta = build_library(np.array([[a, b]]), spec)
        assert np.allclose(theta, [[1.0, a, b, a * a, a * b, b * b]])
        assert spec.labels() == ["1", "x0", "x1", "x0*x0", "x0*x1", "x1*x1"]

    def test_column_order_is_pure_function_of_spec(self):
        s1 = SindyLibrarySpec(dim=3, poly_order=2, include_sine=True)
        s2 = SindyLibrarySpec(dim=3, poly_order=2, include_sine=True)
        assert s1.terms() == s2.terms()

    def test_dimension_mismatch(self):
        spec = SindyLibrarySpec(dim=2)
        with pytest.raises(ValueError, match="width"):
            build_library(np.ones((3, 3)), spec)


class TestSindyFit:
    def test_recovers_exponential_decay(self):
        t = np.arange(1000) * 0.01
        z = np.exp(-t)[:, None]
        model = sindy_fit(z, 0.01, SindyLibrarySpec(dim=1, poly_order=1))
        assert model.coeffs[1, 0] == pytest.approx(-1.0, abs=1e-2)
        assert abs(model.coeffs[0, 0]) < 1e-2

    def test_constant_trajectory_gives_zero_coefficients(self):
        z = np.full((50, 2), 1.5)
        model = sindy_fit(z, 0.1, SindyLibrarySpec(dim=2, poly_order=1))
        assert np.max(np.abs(model.coeffs)) < 1e-8

    def test_recovers_rotation_matrix(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        z = np.vstack([[1.0, 0.0],
                       rk4_trajectory(lambda s: a @ s, [1.0, 0.0], 0.01, 999)])
        model = sindy_fit(z, 0.01, SindyLibrarySpec(dim=2, poly_order=1))
        assert np.allclose(model.coeffs[1:3].T, a, atol=1e-2)

    def test_too_few_samples(self):
        with pytest.raises(ValueError, match="3 samples"):
            sindy_fit(np.ones((2, 1)), 0.1, SindyLibrarySpec(dim=1))

    def test_nonpositive_dt(self):
        with pytest.raises(ValueError, match="dt"):
            sindy_fit(np.ones((5, 1)), 0.0, SindyLibrarySpec(dim=1))

    def test_mask_keeps_pruned_terms_at_zero(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((100, 2))
        spec = SindyLibrarySpec(dim=2, poly_order=1)
        mask = np.ones((3, 2), dtype=bool)
        mask[0, :] = False  # constant term pruned
        model = sindy_fit(z, 0.1, spec, mask=mask)
        assert np.all(model.coeffs[0] == 0.0)


class TestThreshold:
    def test_masks_small_entries(self):
        spec = SindyLibrarySpec(dim=1, poly_order=1)
        model = SindyModel(spec, np.array([[0.04], [0.06]]), dt=0.1,
                           threshold=0.05, mask=np.ones((2, 1), dtype=bool))
        out = sindy_threshold(model, 0.05)
        assert np.allclose(out.coeffs, [[0.0], [0.06]])
        assert not out.mask[0, 0] and out.mask[1, 0]

    def test_zero_threshold_keeps_everything(self):
        spec = SindyLibrarySpec(dim=1, poly_order=1)
        coeffs = np.array([[0.001], [-0.5]])
        model = SindyModel(spec, coeffs.copy(), dt=0.1, threshold=0.0,
                           mask=np.ones((2, 1), dtype=bool))
        out = sindy_threshold(model, 0.0)
        assert np.array_equal(out.coeffs, coeffs)

    def test_idempotent(self):
        spec = SindyLibrarySpec(dim=1, poly_order=1)
        model = SindyModel(spec, np.array([[0.04], [0.06]]), dt=0.1,
                           threshold=0.05, mask=np.ones((2, 1), dtype=bool))
        once = sindy_threshold(model, 0.05)
        twice = sindy_threshold(once, 0.05)
        assert np.array_equal(once.coeffs, twice.coeffs)
        assert np.array_equal(once.mask, twice.mask)

    def test_monotone_in_tau(self):
        rng = np.random.default_rng(1)
        spec = SindyLibrarySpec(dim=3, poly_order=2)
        coeffs = rng.standard_normal((spec.n_terms, 3)) * 0.1
        model = SindyModel(spec, coeffs, dt=0.1, threshold=0.0,
                           mask=np.ones_like(coeffs, dtype=bool))
        counts = [np.count_nonzero(sindy_threshold(model, tau).coeffs)
                  for tau in (0.0, 0.02, 0.05, 0.1, 0.5)]
        assert all(b <= a for a, b in zip(counts, counts[1:]))

    def test_surviving_entries_exceed_tau_after_pass(self):
        rng = np.random.default_rng(2)
        spec = SindyLibrarySpec(dim=2, poly_order=2)
        coeffs = rng.standard_normal((spec.n_terms, 2))
        model = SindyModel(spec, coeffs, dt=0.1, threshold=0.05,
                           mask=np.ones_like(coeffs, dtype=bool))
        out = sindy_threshold(model, 0.05)
        nz = out.coeffs[out.coeffs != 0.0]
        assert np.all(np.abs(nz) >= 0.05)


class TestConsistency:
    def test_linear_dynamics_residual_is_discretization_level(self):
        # z(t) = exp(-t) solves z' = -z exactly; only the stencil error remains
        dt = 0.01
        t = np.arange(400) * dt
        z = np.exp(-t)[:, None]
        model = linear_model([[-1.0]], dt)
        assert sindy_consistency(z, model) <= (dt ** 2) ** 2

    def test_zero_coefficients_constant_sequence(self):
        spec = SindyLibrarySpec(dim=2, poly_order=1)
        model = SindyModel(spec, np.zeros((3, 2)), dt=0.1, threshold=0.0,
                           mask=np.ones((3, 2), dtype=bool))
        z = np.full((20, 2), 0.7)
        assert sindy_consistency(z, model) == pytest.approx(0.0, abs=1e-25)

    def test_zero_coefficients_equal_mean_squared_derivative(self):
        rng = np.random.default_rng(3)
        spec = SindyLibrarySpec(dim=2, poly_order=1)
        model = SindyModel(spec, np.zeros((3, 2)), dt=0.1, threshold=0.0,
                           mask=np.ones((3, 2), dtype=bool))
        z = rng.standard_normal((30, 2))
        dz = finite_difference_derivatives(z, 0.1)
        assert sindy_consistency(z, model) == pytest.approx(
            np.mean(dz ** 2), abs=1e-14)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        spec = SindyLibrarySpec(dim=2, poly_order=2, include_sine=True)
        coeffs = rng.standard_normal((spec.n_terms, 2)) * 0.5
        model = SindyModel(spec, coeffs, dt=0.3, threshold=0.0,
                           mask=np.ones_like(coeffs, dtype=bool))
        z = rng.standard_normal((7, 2))
        _, grad = sindy_consistency_grad(z, model)
        step = 1e-6
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                orig = z[i, j]
                z[i, j] = orig + step
                up = sindy_consistency(z, model)
                z[i, j] = orig - step
                dn = sindy_consistency(z, model)
                z[i, j] = orig
                fd = (up - dn) / (2 * step)
                assert grad[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_too_short_sequence(self):
        model = linear_model([[-1.0]], 0.1)
        with pytest.raises(ValueError, match="3"):
            sindy_consistency(np.ones((2, 1)), model)


class TestForecast:
    def test_zero_steps_empty(self):
        model = linear_model([[-1.0]], 0.1)
        out = sindy_forecast(model, [1.0], 0)
        assert out.shape == (0, 1)

    def test_exponential_decay_reaches_one_over_e(self):
        model = linear_model([[-1.0]], 0.1)
        out = sindy_forecast(model, [1.0], 10)
        assert out[-1, 0] == pytest.approx(0.36787944117144233, abs=1e-6)

    def test_rotation_conserves_norm(self):
        model = linear_model([[0.0, 1.0], [-1.0, 0.0]], 0.1)
        out = sindy_forecast(model, [1.0, 0.0], 100)
        norms = np.linalg.norm(out, axis=1)
        assert np.max(np.abs(norms - 1.0)) <= 1e-6

    def test_rk4_order_halving_dt(self):
        # local truncation O(dt^5) -> global O(dt^4): halving dt shrinks the
        # end-state error by about 16x
        errs = []
        for dt in (0.1, 0.05):
            model = linear_model([[-1.0]], dt)
            steps = int(round(1.0 / dt))
            out = sindy_forecast(model, [1.0], steps)
            errs.append(abs(out[-1, 0] - math.exp(-1.0)))
        ratio = errs[0] / errs[1]
        assert 8.0 <= ratio <= 32.0

    def test_divergence_carries_partial_trajectory(self):
        # z' = z^2 from z0=3 at dt=1 blows up quickly under RK4
        spec = SindyLibrarySpec(dim=1, poly_order=2)
        coeffs = np.zeros((spec.n_terms, 1))
        coeffs[2, 0] = 1.0
        model = SindyModel(spec, coeffs, dt=1.0, threshold=0.0,
                           mask=np.ones_like(coeffs, dtype=bool))
        with pytest.raises(DivergenceError) as excinfo:
            sindy_forecast(model, [3.0], 50)
        err = excinfo.value
        assert err.steps_completed < 50
        assert err.partial.shape == (err.steps_completed, 1)
        assert np.all(np.isfinite(err.partial))

    def test_matches_independent_rk4(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        model = linear_model(a, 0.05)
        ours = sindy_forecast(model, [0.3, -0.4], 40)
        reference = rk4_trajectory(lambda s: a @ s, [0.3, -0.4], 0.05, 40)
        assert np.allclose(ours, reference, atol=1e-12)


class TestSupportRecovery:
    @pytest.mark.parametrize("seed", range(10))
    def test_thresholding_recovers_true_support(self, seed):
        # slow spirals explore enough of state space that the quadratic
        # candidates fit essentially nothing; the linear part stays above tau
        rng = np.random.default_rng(200 + seed)
        decay = rng.uniform(0.08, 0.3)
        rot = rng.uniform(0.5, 1.5)
        a = np.array([[-decay, rot], [-rot, -decay]])
        z = np.vstack([[1.0, -0.5],
                       rk4_trajectory(lambda s: a @ s, [1.0, -0.5], 0.01, 999)])
        spec = SindyLibrarySpec(dim=2, poly_order=2)
        model = sindy_threshold(sindy_fit(z, 0.01, spec), 0.05)
        support = model.coeffs != 0.0
        expected = np.zeros_like(support)
        expected[1:3] = True  # every entry of a exceeds tau by construction
        assert np.array_equal(support, expected)
        assert np.allclose(model.coeffs[1:3].T, a, atol=1e-2)


class TestEquationExport:
    def test_text_format(self):
        spec = SindyLibrarySpec(dim=2, poly_order=1)
        coeffs = np.array([[0.048, 0.0], [-0.122, 0.0], [0.0, 0.25]])
        model = SindyModel(spec, coeffs, dt=0.2, threshold=0.05,
                           mask=np.ones((3, 2), dtype=bool))
        text = equations_text(model)
        assert text.splitlines() == ["dx0/dt = 0.048 - 0.122 x0",
                                     "dx1/dt = 0.250 x1"]

    def test_zero_equation(self):
        spec = SindyLibrarySpec(dim=1, poly_order=1)
        model = SindyModel(spec, np.zeros((2, 1)), dt=0.2, threshold=0.0,
                           mask=np.ones((2, 1), dtype=bool))
        assert equations_text(model) == "dx0/dt = 0"

    def test_coefficient_rows(self):
        spec = SindyLibrarySpec(dim=2, poly_order=1)
        coeffs = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
        model = SindyModel(spec, coeffs, dt=0.2, threshold=0.0,
                           mask=np.ones((3, 2), dtype=bool))
        rows = coefficient_rows(model)
        assert ("1", 0, 0.1) in rows and ("x1", 1, 0.6) in rows
        assert len(rows) == 6


class TestRecurrentForecaster:
    def test_constant_sequence_learned(self):
        latents = np.tile([0.4, -0.2], (60, 1))
        rf = fit_recurrent_forecaster(latents, window=5, epochs=200, seed=0)
        pred = rf.predict(latents[:5])
        assert np.mean((pred - latents[0]) ** 2) <= 1e-6
        rollout = rf.forecast(latents[:5], 10)
        assert np.max(np.abs(rollout - latents[0])) <= 1e-2

    def test_sine_wave_rollout(self):
        t = np.arange(240) * 0.1
        latents = np.sin(t)[:, None]
        rf = fit_recurrent_forecaster(latents, window=20, epochs=400,
                                      hidden_size=32, seed=1)
        seed_window = latents[150:170]
        rollout = rf.forecast(seed_window, 50)
        truth = np.sin((np.arange(170, 220)) * 0.1)[:, None]
        rel = np.linalg.norm(rollout - truth) / np.linalg.norm(truth)
        assert rel <= 0.1

    def test_zero_steps_empty(self):
        latents = np.tile([0.1], (30, 1))
        rf = fit_recurrent_forecaster(latents, window=4, epochs=10, seed=0)
        assert rf.forecast(latents[:4], 0).shape == (0, 1)

    def test_seed_determinism(self):
        latents = np.sin(np.arange(50) * 0.2)[:, None]
        rf1 = fit_recurrent_forecaster(latents, window=5, epochs=20, seed=3)
        rf2 = fit_recurrent_forecaster(latents, window=5, epochs=20, seed=3)
        assert all(np.array_equal(a, b)
                   for a, b in zip(rf1.params(), rf2.params()))

    def test_wrong_seed_length(self):
        latents = np.tile([0.1], (30, 1))
        rf = fit_recurrent_forecaster(latents, window=5, epochs=5, seed=0)
        with pytest.raises(ValueError, match="seed window"):
            rf.forecast(latents[:4], 3)

    def test_insufficient_data(self):
        with pytest.raises(ValueError, match="window"):
            fit_recurrent_forecaster(np.ones((5, 1)), window=5)


class TestForecasterWrappers:
    def test_sindy_wrapper_forecasts_from_last_row(self):
        fc = SindyForecaster(poly_order=1, dt=0.1)
        fc.configure(1)
        t = np.arange(500) * 0.1
        fc.refit(np.exp(-t)[:, None])
        seed_latents = np.array([[5.0], [1.0]])
        out = fc.forecast(seed_latents, 10)
        assert out[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-2)

    def test_wrapper_requires_fit(self):
        fc = SindyForecaster()
        with pytest.raises(ValueError, match="not fitted"):
            fc.forecast(np.ones((1, 3)), 5)
        rf = LatentSequenceForecaster(window=3)
        with pytest.raises(ValueError, match="not fitted"):
            rf.forecast(np.ones((5, 2)), 5)

    def test_sequence_wrapper_seed_length_check(self):
        rf = LatentSequenceForecaster(window=6, epochs=5)
        rf.fit(np.tile([0.2], (30, 1)))
        with pytest.raises(ValueError, match="at least 6"):
            rf.forecast(np.ones((4, 1)), 2)
