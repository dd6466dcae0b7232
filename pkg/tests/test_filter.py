import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqrtkf import (
    DimensionMismatch,
    FullCovEstimate,
    SingularFactor,
    StateEstimate,
    SystemModel,
    innovate,
    kalman_gain,
    kf_step,
    predict,
    random_system,
    simulate,
    sqkf_step,
    update,
)
from sqrtkf.linalg import cholesky


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def scalar_model(a=2.0):
    return SystemModel([[a]], [[0.0]], [[1.0]], [[1.0]], [[1.0]])


def random_estimate(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n + 1, n))
    return StateEstimate(rng.standard_normal(n), cholesky(X.T @ X + 0.5 * np.eye(n)))


class TestTypes:
    def test_estimate_is_read_only(self):
        est = StateEstimate([1.0, 2.0], np.eye(2))
        with pytest.raises(ValueError):
            est.mean[0] = 3.0

    def test_estimate_rejects_lower_factor(self):
        with pytest.raises(ValueError):
            StateEstimate([0.0, 0.0], [[1.0, 0.0], [1.0, 1.0]])

    def test_from_covariance(self):
        est = StateEstimate.from_covariance([0.0, 0.0], [[4.0, 2.0], [2.0, 5.0]])
        np.testing.assert_allclose(est.cov, [[4.0, 2.0], [2.0, 5.0]], rtol=1e-15)

    def test_model_rejects_singular_measurement_noise(self):
        with pytest.raises(SingularFactor):
            SystemModel(np.eye(2), np.zeros((2, 0)), np.eye(2), np.eye(2), np.diag([1.0, 0.0]))

    def test_model_allows_singular_process_noise(self):
        m = SystemModel(np.eye(2), np.zeros((2, 0)), np.eye(2), np.zeros((2, 2)), np.eye(2))
        assert m.p == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(A=np.ones((2, 3))),
            dict(B=np.ones((3, 1))),
            dict(C=np.ones((1, 3))),
            dict(noise_v=np.eye(2)),
        ],
    )
    def test_model_dimension_checks(self, kwargs):
        base = dict(A=np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)), noise_w=np.eye(2), noise_v=np.eye(1))
        base.update(kwargs)
        with pytest.raises(DimensionMismatch):
            SystemModel(**base)

    def test_model_astype(self):
        m = random_system(3, 2, 1, 0.9, 0).astype(np.float32)
        assert all(getattr(m, k).dtype == np.float32 for k in ("A", "B", "C", "noise_w", "noise_v"))


class TestPredict:
    def test_scalar(self):
        out = predict(StateEstimate([1.0], [[1.0]]), scalar_model(), [0.0])
        assert out.mean[0] == 2.0
        # 2 * 1 * 2 + 1 = 5
        assert out.factor[0, 0] == pytest.approx(np.sqrt(5.0), rel=1e-15)

    def test_identity_without_noise(self):
        est = random_estimate(3, 5)
        m = SystemModel(np.eye(3), np.zeros((3, 0)), np.eye(3), np.zeros((3, 3)), np.eye(3))
        out = predict(est, m)
        np.testing.assert_array_equal(out.mean, est.mean)
        np.testing.assert_allclose(out.factor, est.factor, rtol=1e-14, atol=1e-14)

    def test_random_against_full_covariance(self):
        m = random_system(3, 2, 1, 0.9, 11)
        est = random_estimate(3, 12)
        u = np.array([0.7])
        out = predict(est, m, u)
        np.testing.assert_allclose(out.mean, m.A @ est.mean + m.B @ u, rtol=1e-14)
        assert rel_fro(out.cov, m.A @ est.cov @ m.A.T + m.W) <= 1e-12

    def test_control_dimension_checked(self):
        with pytest.raises(DimensionMismatch):
            predict(random_estimate(3, 0), random_system(3, 2, 1, 0.9, 0), [1.0, 2.0])


class TestInnovate:
    def test_scalar(self):
        inn = innovate(StateEstimate([1.0], [[1.0]]), scalar_model(), [3.0])
        assert inn.residual[0] == 2.0
        assert inn.factor[0, 0] == pytest.approx(np.sqrt(2.0), rel=1e-15)

    def test_zero_measurement_map(self):
        m = SystemModel(np.eye(3), np.zeros((3, 0)), np.zeros((2, 3)), np.eye(3), [[2.0, 1.0], [0.0, 3.0]])
        inn = innovate(random_estimate(3, 1), m, [4.0, 5.0])
        np.testing.assert_array_equal(inn.residual, [4.0, 5.0])
        np.testing.assert_allclose(inn.factor, m.noise_v, rtol=1e-15)

    def test_random_against_full_covariance(self):
        m = random_system(3, 2, 0, 0.9, 21)
        est = random_estimate(3, 22)
        y = np.array([0.3, -1.2])
        inn = innovate(est, m, y)
        np.testing.assert_allclose(inn.residual, y - m.C @ est.mean, rtol=1e-14)
        S = m.C @ est.cov @ m.C.T + m.V
        assert rel_fro(inn.factor.T @ inn.factor, S) <= 1e-12

    def test_measurement_length_checked(self):
        with pytest.raises(DimensionMismatch):
            innovate(StateEstimate([1.0], [[1.0]]), scalar_model(), [1.0, 2.0])


class TestGain:
    def test_scalar(self):
        L = kalman_gain(StateEstimate([1.0], [[1.0]]), [[1.0]], [[np.sqrt(2.0)]])
        assert L[0, 0] == pytest.approx(0.5, rel=1e-15)

    def test_zero_measurement_map(self):
        L = kalman_gain(random_estimate(3, 3), np.zeros((2, 3)), np.eye(2))
        np.testing.assert_array_equal(L, np.zeros((3, 2)))

    def test_random_against_dense_inverse(self):
        m = random_system(4, 2, 0, 0.9, 31)
        est = random_estimate(4, 32)
        G = innovate(est, m, np.zeros(2)).factor
        S = m.C @ est.cov @ m.C.T + m.V
        oracle = est.cov @ m.C.T @ np.linalg.inv(S)
        assert rel_fro(kalman_gain(est, m.C, G), oracle) <= 1e-10

    def test_singular_innovation_factor(self):
        with pytest.raises(SingularFactor):
            kalman_gain(StateEstimate([1.0], [[1.0]]), [[1.0]], [[0.0]])


class TestUpdate:
    def test_zero_gain(self):
        m = random_system(3, 2, 0, 0.9, 41)
        est = random_estimate(3, 42)
        inn = innovate(est, m, [1.0, 1.0])
        out = update(est, m, inn, np.zeros((3, 2)))
        np.testing.assert_array_equal(out.mean, est.mean)
        np.testing.assert_allclose(out.factor, est.factor, rtol=1e-14, atol=1e-15)

    def test_scalar(self):
        m = SystemModel([[1.0]], [[0.0]], [[1.0]], [[0.0]], [[1.0]])
        pred = StateEstimate([2.0], [[1.0]])
        inn = innovate(pred, m, [4.0])
        out = update(pred, m, inn, np.array([[0.5]]))
        assert out.mean[0] == 3.0
        # (1 - 0.5)^2 * 1 + 0.5^2 * 1
        assert out.factor[0, 0] == pytest.approx(np.sqrt(0.5), rel=1e-15)

    def test_random_against_joseph_form(self):
        m = random_system(3, 2, 0, 0.9, 51)
        est = random_estimate(3, 52)
        inn = innovate(est, m, [0.4, -0.1])
        L = kalman_gain(est, m.C, inn.factor)
        out = update(est, m, inn, L)
        I_LC = np.eye(3) - L @ m.C
        joseph = I_LC @ est.cov @ I_LC.T + L @ m.V @ L.T
        assert rel_fro(out.cov, joseph) <= 1e-12
        np.testing.assert_allclose(out.mean, est.mean + L @ inn.residual, rtol=1e-14)


class TestSteps:
    def test_scalar_end_to_end(self):
        est = sqkf_step(StateEstimate([1.0], [[1.0]]), scalar_model(), [0.0], [3.0])
        assert abs(est.mean[0] - (2.0 + 5.0 / 6.0)) <= 1e-14 * (2.0 + 5.0 / 6.0)
        assert abs(est.cov[0, 0] - 5.0 / 6.0) <= 1e-14 * 5.0 / 6.0
        ref = kf_step(FullCovEstimate([1.0], [[1.0]]), scalar_model(), [0.0], [3.0])
        assert abs(ref.mean[0] - (2.0 + 5.0 / 6.0)) <= 1e-14 * 3
        assert abs(ref.cov[0, 0] - 5.0 / 6.0) <= 1e-14

    def test_step_is_composition(self):
        m = random_system(4, 2, 1, 0.9, 61)
        est = random_estimate(4, 62)
        u, y = np.array([0.2]), np.array([1.0, -0.5])
        pred = predict(est, m, u)
        inn = innovate(pred, m, y)
        manual = update(pred, m, inn, kalman_gain(pred, m.C, inn.factor))
        step = sqkf_step(est, m, u, y)
        np.testing.assert_array_equal(step.mean, manual.mean)
        np.testing.assert_array_equal(step.factor, manual.factor)

    def test_deterministic(self):
        m = random_system(4, 2, 1, 0.9, 63)
        est = random_estimate(4, 64)
        a = sqkf_step(est, m, [0.1], [0.2, 0.3])
        b = sqkf_step(est, m, [0.1], [0.2, 0.3])
        assert a.mean.tobytes() == b.mean.tobytes() and a.factor.tobytes() == b.factor.tobytes()

    def test_long_run_matches_reference(self):
        m = random_system(6, 3, 2, 0.95, 71)
        rng = np.random.default_rng(72)
        controls = rng.standard_normal((100, 2))
        traj = simulate(m, rng.standard_normal(6), controls, 100, seed=73)
        sq = StateEstimate(np.zeros(6), np.eye(6))
        kf = FullCovEstimate(np.zeros(6), np.eye(6))
        for t in range(100):
            sq = sqkf_step(sq, m, controls[t], traj.measurements[t])
            kf = kf_step(kf, m, controls[t], traj.measurements[t])
        assert np.linalg.norm(sq.mean - kf.mean) <= 1e-9 * np.linalg.norm(kf.mean)
        assert rel_fro(sq.cov, kf.cov) <= 1e-9

    def test_kf_without_measurement_is_pure_prediction(self):
        m = SystemModel([[0.9, 0.1], [0.0, 0.8]], np.zeros((2, 0)), np.zeros((1, 2)), np.eye(2) * 0.1, [[1.0]])
        est = FullCovEstimate([1.0, -1.0], np.eye(2))
        out = kf_step(est, m, None, [5.0])
        np.testing.assert_allclose(out.mean, m.A @ est.mean, rtol=1e-15)
        np.testing.assert_allclose(out.cov, m.A @ m.A.T + m.W, rtol=1e-15)

    def test_joseph_equals_short_form(self):
        m = random_system(4, 2, 0, 0.9, 81)
        est = random_estimate(4, 82)
        pred_cov = m.A @ est.cov @ m.A.T + m.W
        L = pred_cov @ m.C.T @ np.linalg.inv(m.C @ pred_cov @ m.C.T + m.V)
        out = kf_step(FullCovEstimate(est.mean, est.cov), m, None, [0.0, 0.0])
        assert rel_fro(out.cov, pred_cov - L @ m.C @ pred_cov) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(1, 6),
    m_dim=st.integers(1, 3),
    p=st.integers(0, 2),
    seed=st.integers(0, 2**31 - 1),
)
def test_reference_covariance_stays_symmetric(n, m_dim, p, seed):
    m_dim = min(m_dim, n)
    model = random_system(n, m_dim, p, 0.9, seed)
    traj = simulate(model, np.zeros(n), np.zeros((20, p)), 20, seed=seed + 1)
    kf = FullCovEstimate(np.zeros(n), np.eye(n))
    for t in range(20):
        kf = kf_step(kf, model, traj.controls[t], traj.measurements[t])
        assert np.linalg.norm(kf.cov - kf.cov.T) <= 1e-12 * np.linalg.norm(kf.cov)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2**31 - 1))
def test_factor_is_psd_at_any_precision(dtype, n, seed):
    model = random_system(n, min(n, 2), 1, 0.99, seed).astype(dtype)
    traj = simulate(model.astype(np.float64), np.zeros(n), np.zeros((30, 1)), 30, seed=seed)
    est = StateEstimate(np.zeros(n, dtype), np.eye(n, dtype=dtype))
    eps = np.finfo(dtype).eps
    for t in range(30):
        est = sqkf_step(est, model, traj.controls[t].astype(dtype), traj.measurements[t].astype(dtype))
        assert est.mean.dtype == dtype and est.factor.dtype == dtype
        F = est.factor.astype(np.float64)
        eig = np.linalg.eigvalsh(F.T @ F)
        assert eig[0] >= -n * eps * np.abs(eig).max()


def test_gain_path_uses_only_triangular_solves(monkeypatch):
    def forbidden(*args, **kwargs):
        raise AssertionError("dense solve/inverse used in the gain path")

    monkeypatch.setattr(np.linalg, "solve", forbidden)
    monkeypatch.setattr(np.linalg, "inv", forbidden)
    m = random_system(4, 2, 0, 0.9, 91)
    est = random_estimate(4, 92)
    sqkf_step(est, m, None, [0.1, 0.2])
