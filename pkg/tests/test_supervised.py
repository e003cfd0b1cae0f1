"""R2TL: joint objective, supervised coefficient solve, weights and prediction."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtlearn import kernels
from rtlearn.exceptions import DimensionError
from rtlearn.recurrent import RtlConfig, build_recurrent_system, fit_rtl, solve_coefficients
from rtlearn.supervised import (
    BlockRegressionMatrix,
    Normalization,
    R2tlConfig,
    TrainedModel,
    fit_r2tl,
    fit_rtl_regressor,
    predict,
    r2tl_objective,
    solve_coefficients_supervised,
    supervised_normal_equations,
    update_regression_weights,
)
from rtlearn.transform import transform_penalty


def instance(rng, d=3, k=2, n=6):
    T = np.hstack([rng.standard_normal((k, d)), 0.3 * rng.standard_normal((k, k))])
    return T, rng.standard_normal((d, n)), rng.standard_normal(k), rng.standard_normal(k), rng.standard_normal(n)


def dense_normal_equations(T, X, z0, w, l, mu):
    """Assemble D, W and rhs column by column and solve the normal equations."""
    sys = build_recurrent_system(T, X, z0)
    k, n = sys.k, sys.n
    D = np.zeros((k * n, k * n))
    for c in range(k * n):
        e = np.zeros(k * n)
        e[c] = 1.0
        D[:, c] = sys.matvec(e)
    W = np.zeros((n, k * n))
    for c in range(k * n):
        e = np.zeros(k * n)
        e[c] = 1.0
        W[:, c] = BlockRegressionMatrix(w, n) @ e
    A = D.T @ D + mu * W.T @ W
    b = D.T @ sys.rhs.ravel() + mu * W.T @ l
    return A, b, np.linalg.solve(A, b).reshape(n, k).T


class TestObjective:
    def test_zero_weights(self, rng):
        T, X, z0, _, l = instance(rng)
        Z = rng.standard_normal((2, 6))
        base = r2tl_objective(T, X, Z, z0, np.zeros(2), l, 0.0, 0.0, 0.1)
        assert r2tl_objective(T, X, Z, z0, np.zeros(2), l, 1.0, 0.0, 0.1) - base == pytest.approx(l @ l, rel=1e-12)

    def test_perfect_model_is_penalty_only(self, rng):
        T, X, z0, w, _ = instance(rng)
        Z = solve_coefficients(build_recurrent_system(T, X, z0))
        val = r2tl_objective(T, X, Z, z0, w, w @ Z, 1.0, 0.0, 0.3)
        assert val == pytest.approx(0.3 * transform_penalty(T), rel=1e-12)

    def test_loop_oracle(self, rng):
        T, X, z0, w, l = instance(rng, 2, 2, 5)
        Z = rng.standard_normal((2, 5))
        mu, gamma, lam = 0.7, 0.2, 0.1
        total, prev = 0.0, z0
        for i in range(5):
            r = T @ np.concatenate([X[:, i], prev]) - Z[:, i]
            total += sum(v * v for v in r) + mu * (l[i] - sum(w[j] * Z[j, i] for j in range(2))) ** 2
            prev = Z[:, i]
        total += gamma * sum(v * v for v in w)
        G = T @ T.T
        total += lam * (np.sum(T * T) - 0.5 * np.log(G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]))
        assert r2tl_objective(T, X, Z, z0, w, l, mu, gamma, lam) == pytest.approx(total, rel=1e-12)

    def test_dimension_mismatch(self, rng):
        T, X, z0, w, l = instance(rng)
        with pytest.raises(DimensionError):
            r2tl_objective(T, X, np.zeros((2, 6)), z0, w, l[:5], 1.0, 0.1, 0.1)


class TestSupervisedSolve:
    def test_mu_zero_matches_unsupervised(self, rng):
        T, X, z0, w, l = instance(rng, n=12)
        a = solve_coefficients_supervised(T, X, z0, w, l, 0.0)
        b = solve_coefficients(build_recurrent_system(T, X, z0))
        assert np.abs(a - b).max() < 1e-10

    def test_normal_equations_at_mu_zero(self, rng):
        # the block-tridiagonal path itself, bypassing the mu == 0 shortcut
        T, X, z0, w, l = instance(rng, n=12)
        Z = kernels.block_tridiag_solve(*supervised_normal_equations(T, X, z0, w, l, 0.0)).T
        assert np.abs(Z - solve_coefficients(build_recurrent_system(T, X, z0))).max() < 1e-10

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 12), st.floats(0, 50), st.integers(0, 10_000))
    def test_matches_dense_oracle(self, k, n, mu, seed):
        rng = np.random.default_rng(seed)
        T, X, z0, w, l = instance(rng, 3, k, n)
        Z = solve_coefficients_supervised(T, X, z0, w, l, mu)
        A, b, ref = dense_normal_equations(T, X, z0, w, l, mu)
        assert np.abs(A @ Z.T.ravel() - b).max() < 1e-8
        assert np.abs(Z - ref).max() < 1e-8 * max(1.0, np.abs(ref).max())

    def test_large_mu_pins_first_coordinate(self, rng):
        T, X, z0, _, l = instance(rng, n=8)
        w = np.array([1.0, 0.0])
        errs = [np.abs(solve_coefficients_supervised(T, X, z0, w, l, mu)[0] - l).max() for mu in (1e2, 1e4, 1e8)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-6

    def test_negative_mu(self, rng):
        T, X, z0, w, l = instance(rng)
        with pytest.raises(ValueError):
            solve_coefficients_supervised(T, X, z0, w, l, -1.0)


class TestWeights:
    def test_decoupled_identity(self):
        l = np.array([1.0, -2.0, 3.0])
        np.testing.assert_allclose(update_regression_weights(np.eye(3), l, 1.0, 1e-12), l, atol=1e-10)

    def test_zero_target(self, rng):
        assert np.all(update_regression_weights(rng.standard_normal((3, 9)), np.zeros(9), 1.0, 0.05) == 0)

    def test_gradient_vanishes(self, rng):
        Z = rng.standard_normal((4, 15))
        l = rng.standard_normal(15)
        mu, gamma = 1.3, 0.05
        w = update_regression_weights(Z, l, mu, gamma)

        def f(v):
            r = l - v @ Z
            return mu * r @ r + gamma * v @ v

        h = 1e-6
        g = [(f(w + h * e) - f(w - h * e)) / (2 * h) for e in np.eye(4)]
        assert np.abs(g).max() < 1e-6

    def test_norm_shrinks_with_gamma(self, rng):
        Z = rng.standard_normal((4, 20))
        l = rng.standard_normal(20)
        norms = [np.linalg.norm(update_regression_weights(Z, l, 1.0, g)) for g in (1.0, 1e2, 1e4)]
        assert norms[0] >= norms[1] >= norms[2]

    def test_block_operator(self, rng):
        w = rng.standard_normal(3)
        z = rng.standard_normal(12)
        W = BlockRegressionMatrix(w, 4)
        np.testing.assert_allclose(W @ z, W.dense() @ z, atol=1e-14)


@pytest.fixture(scope="module")
def fitted(small_design):
    cfg = R2tlConfig(k=8, max_iters=6)
    return fit_r2tl(small_design.X, small_design.l, cfg), small_design


class TestFit:
    def test_trace_non_increasing(self, fitted):
        tr = np.array(fitted[0].objective_trace)
        assert np.all(tr[1:] <= tr[:-1] + 1e-8 * np.abs(tr[:-1]))

    def test_mu_zero_reduces_to_rtl(self, small_design):
        cfg = R2tlConfig(k=6, mu=0.0, gamma=0.0, max_iters=4)
        a = fit_r2tl(small_design.X, small_design.l, cfg)
        Xn = a.normalization.inputs(small_design.X)
        b = fit_rtl(Xn, RtlConfig(k=6, max_iters=4))
        assert np.abs(a.transform - b.transform).max() < 1e-8

    def test_rtl_regressor_kind(self, small_design):
        m = fit_rtl_regressor(small_design.X, small_design.l, R2tlConfig(k=6, max_iters=3))
        assert m.kind == "rtl" and m.weights.shape == (6,)

    def test_deterministic(self, fitted, small_design):
        again = fit_r2tl(small_design.X, small_design.l, R2tlConfig(k=8, max_iters=6))
        np.testing.assert_array_equal(predict(fitted[0], small_design.X), predict(again, small_design.X))

    @pytest.mark.parametrize("kwargs", [dict(k=0), dict(k=2, lam=0.0), dict(k=2, gamma=0.0), dict(k=2, input_scaling="minmax")])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            R2tlConfig(**kwargs)


class TestPredict:
    def test_zero_weights_give_target_mean(self, fitted):
        model, dm = fitted
        from dataclasses import replace

        flat = replace(model, weights=np.zeros(model.k))
        np.testing.assert_allclose(predict(flat, dm.X), dm.l.mean(), rtol=1e-12)

    def test_refeeding_training_inputs(self, fitted):
        model, dm = fitted
        Xn = model.normalization.inputs(dm.X)
        Z = solve_coefficients(build_recurrent_system(model.transform, Xn, model.z0))
        np.testing.assert_allclose(predict(model, dm.X), model.normalization.untarget(model.weights @ Z), rtol=1e-13)

    def test_carry_uses_final_state(self, fitted):
        model, dm = fitted
        a = predict(model, dm.X[:, :3], z0="carry")
        b = predict(model, dm.X[:, :3], z0=model.z_last)
        np.testing.assert_array_equal(a, b)

    def test_scalar_end_to_end(self, rng):
        # 2 features, 5 samples: normalization, recursion and read-out by hand
        X = rng.standard_normal((2, 5))
        l = rng.standard_normal(5)
        norm = Normalization.fit(X, l, "zscore")
        T = np.array([[0.5, -0.2, 0.3]])
        model = TrainedModel("r2tl", T, np.array([1.7]), np.zeros(1), 2, R2tlConfig(k=1), norm)
        out, z = [], 0.0
        for i in range(5):
            x0 = (X[0, i] - X[0].mean()) / X[0].std()
            x1 = (X[1, i] - X[1].mean()) / X[1].std()
            z = 0.5 * x0 - 0.2 * x1 + 0.3 * z
            out.append(1.7 * z * l.std() + l.mean())
        np.testing.assert_allclose(predict(model, X), out, rtol=1e-12)

    def test_target_blind_signature(self):
        import inspect

        assert list(inspect.signature(predict).parameters) == ["model", "X_test", "z0"]

    def test_wrong_rows(self, fitted):
        with pytest.raises(DimensionError):
            predict(fitted[0], np.ones((3, 2)))


@pytest.mark.parametrize("scaling, factor", [("zscore", 1.0), ("unit_energy", np.sqrt(4))])
def test_normalization_modes(rng, scaling, factor):
    X = rng.standard_normal((4, 30)) * 3 + 1
    norm = Normalization.fit(X, rng.standard_normal(30), scaling)
    np.testing.assert_allclose(norm.inputs(X).std(axis=1), 1.0 / factor, rtol=1e-12)


def test_converges_within_twenty_on_synthetic_load():
    from conftest import synth_dataset
    from rtlearn.pipeline import basis_count, build_design_matrix

    dm = build_design_matrix(synth_dataset(120, seed=0), 3)
    tr = fit_r2tl(dm.X, dm.l, R2tlConfig(k=basis_count(dm.d))).objective_trace
    assert len(tr) - 1 <= 20 and abs(tr[-2] - tr[-1]) < 1e-4 * abs(tr[-2])
