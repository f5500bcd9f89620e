import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.linalg import lsqr as scipy_lsqr

from mplsqr.lsqr import (
    GivensState,
    SolverBreakdown,
    SolverConfig,
    UpdateState,
    givens_step,
    kappa_rhat,
    lsqr_iterates,
    rhat_matrix,
    solve,
    update_error_bound,
    update_step,
)
from mplsqr.operators import DenseOperator
from mplsqr.precision import F32, F64, emulated
from mplsqr.problems import make_instance
from mplsqr.stopping import Rule

U64 = F64.unit
D = SolverConfig()
SPD = SolverConfig(spec_bidiag=F32, spec_update=F64)
SS = SolverConfig(spec_bidiag=F32, spec_update=F32)


def bare(A, b):
    return SimpleNamespace(A=DenseOperator(A), b=np.asarray(b, dtype=float))


def krylov_solutions(A, b, kmax):
    """min ||A x - b|| over K_k(A^T A, A^T b) via an explicit orthonormal basis."""
    V = np.zeros((A.shape[1], 0))
    v = A.T @ b
    out = []
    for _ in range(kmax):
        for _ in range(2):
            v = v - V @ (V.T @ v)
        V = np.column_stack([V, v / np.linalg.norm(v)])
        y = np.linalg.lstsq(A @ V, b, rcond=None)[0]
        out.append(V @ y)
        v = A.T @ (A @ V[:, -1])
    return out


def random_conditioned(rng, m, n, cond):
    U, _ = np.linalg.qr(rng.standard_normal((m, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (U * np.geomspace(1.0, 1.0 / cond, n)) @ V.T


class TestGivens:
    def test_three_four_five(self):
        g = givens_step(GivensState(rho_bar=3.0, phi_bar=2.0), 4.0, 1.0)
        assert (g.rho, g.c, g.s) == (5.0, 0.6, 0.8)
        assert g.theta == pytest.approx(0.8) and g.phi == pytest.approx(1.2)

    def test_no_rotation(self):
        g = givens_step(GivensState(rho_bar=2.5, phi_bar=1.0), 0.0, 3.0)
        assert g.rho == 2.5 and g.c == 1.0 and g.s == 0.0 and g.phi_bar == 0.0

    def test_degenerate(self):
        with pytest.raises(SolverBreakdown):
            givens_step(GivensState(rho_bar=0.0, phi_bar=1.0), 0.0, 1.0)

    def test_start(self):
        g = GivensState.start(2.0, 5.0)
        assert g.rho_bar == 2.0 and g.phi_bar == 5.0

    @given(
        rb=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6),
        beta=st.floats(1e-6, 1e3),
        alpha=st.floats(1e-6, 1e3),
        pb=st.floats(-1e3, 1e3),
    )
    def test_matches_explicit_rotation(self, rb, beta, alpha, pb):
        g = givens_step(GivensState(rho_bar=rb, phi_bar=pb), beta, alpha)
        assert abs(g.c**2 + g.s**2 - 1) <= 4 * U64
        assert g.rho > 0
        Q = np.array([[g.c, g.s], [g.s, -g.c]])
        out = Q @ np.array([[rb, 0.0, pb], [beta, alpha, 0.0]])
        scale = max(abs(rb), beta, alpha, abs(pb), 1e-300)
        expect = np.array([[g.rho, g.theta, g.phi], [0.0, g.rho_bar, g.phi_bar]])
        assert np.all(np.abs(out - expect) <= 4 * U64 * scale)
        assert abs(g.phi_bar) <= abs(pb)


class TestUpdate:
    def test_start(self):
        q = np.array([0.6, 0.8])
        u = UpdateState.start(q, F64)
        assert np.array_equal(u.x, np.zeros(2)) and np.array_equal(u.w, q)

    def test_zero_phi_keeps_x(self):
        u = UpdateState(x=np.array([1.0, 2.0]), w=np.array([0.3, 0.4]), spec_update=F64)
        v = update_step(u, np.array([1.0, 0.0]), 2.0, 0.0, 1.0)
        assert np.array_equal(v.x, u.x)

    def test_last_step_without_q(self):
        u = UpdateState(x=np.zeros(2), w=np.array([1.0, 1.0]), spec_update=F64)
        v = update_step(u, None, 2.0, 1.0, 0.0)
        assert np.array_equal(v.x, [0.5, 0.5]) and v.w is u.w

    def test_zero_rho(self):
        u = UpdateState.start(np.ones(2), F64)
        with pytest.raises(SolverBreakdown):
            update_step(u, None, 0.0, 1.0, 0.0)

    def test_working_format(self):
        u = UpdateState.start(np.full(3, 1 / 3), F32)
        v = update_step(u, np.full(3, 0.1), 3.0, 1.0, 0.7)
        assert v.x.dtype == np.float32 and v.w.dtype == np.float32


class TestRhat:
    def test_k1(self):
        assert kappa_rhat([2.0], []) == 1.0

    def test_identity(self):
        assert kappa_rhat([1.0, 2.0, 3.0], [0.0, 0.0]) == pytest.approx(1.0)

    def test_matches_numpy_cond(self):
        rng = np.random.default_rng(0)
        rho = rng.uniform(0.5, 2, 8)
        theta = rng.uniform(-1, 1, 7)
        R = np.eye(8) + np.diag(theta / rho[:7], 1)
        assert np.array_equal(rhat_matrix(rho, theta), R)
        assert kappa_rhat(rho, theta) == pytest.approx(np.linalg.cond(R), rel=1e-12)

    def test_bound_values(self):
        assert update_error_bound(1, 1.0, 1.0) == 6.0
        assert update_error_bound(4, 2.0, 0.5) == pytest.approx(2 * (1 + 10 * 2) * 0.5)
        assert update_error_bound(9, 1.0, F32.unit) == pytest.approx(3 * (1 + 17) * F32.unit)


class TestSmallCases:
    def test_identity_one_step(self):
        b = np.array([1.0, -2.0, 0.5, 4.0])
        h = solve(bare(np.eye(4), b), SolverConfig(stop_rules=()))
        assert h.n_iter == 1 and h.stopped_by == "bidiagonalization terminated"
        assert np.allclose(h.iterate(1), b, rtol=4 * U64)

    @pytest.mark.parametrize("spec", [F32, emulated(12)])
    def test_identity_one_step_low(self, spec):
        b = np.array([1.0, -2.0, 0.5, 4.0])
        cfg = SolverConfig(spec_bidiag=spec, spec_update=spec, stop_rules=())
        h = solve(bare(np.eye(4), b), cfg)
        assert np.allclose(h.iterate(1), b, rtol=20 * spec.unit)

    def test_diagonal_least_squares(self):
        A = np.diag([1.0, 0.5, 0.25, 0.125])
        b = np.ones(4)
        h = solve(bare(A, b), SolverConfig(stop_rules=(), max_iter=4))
        ref = np.linalg.lstsq(A, b, rcond=None)[0]
        assert np.linalg.norm(h.iterate(4) - ref) <= 1e-12 * np.linalg.norm(ref)

    @pytest.mark.parametrize("seed", range(5))
    def test_against_krylov_oracle(self, seed):
        rng = np.random.default_rng(seed)
        A = random_conditioned(rng, 10, 6, 1e4)
        b = rng.standard_normal(10)
        h = solve(bare(A, b), SolverConfig(stop_rules=(), max_iter=6))
        ref = krylov_solutions(A, b, 6)
        svd_ref = lsqr_iterates(A, b, 6)
        for k in range(1, h.n_iter + 1):
            x = h.iterate(k)
            assert np.linalg.norm(x - ref[k - 1]) <= 1e-10 * np.linalg.norm(ref[k - 1])
            assert np.linalg.norm(x - svd_ref[k - 1]) <= 1e-10 * np.linalg.norm(svd_ref[k - 1])

    @pytest.mark.parametrize("k", [1, 3, 8])
    def test_against_scipy_lsqr(self, k):
        rng = np.random.default_rng(10 + k)
        A = random_conditioned(rng, 40, 20, 10.0)
        b = rng.standard_normal(40)
        h = solve(bare(A, b), SolverConfig(stop_rules=(), max_iter=k))
        ref = scipy_lsqr(A, b, atol=0, btol=0, conlim=0, iter_lim=k)[0]
        assert np.linalg.norm(h.iterate(k) - ref) <= 1e-10 * np.linalg.norm(ref)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            SolverConfig(max_iter=0)
        with pytest.raises(ValueError):
            SolverConfig(history="sometimes")
        with pytest.raises(ValueError):
            SolverConfig(stop_rules=("gcv",))
        with pytest.raises(ValueError):
            SolverConfig(tau=1.0)

    def test_iterates_not_kept(self):
        inst = make_instance("shaw", 64, 1e-2, 0)
        h = solve(inst, SolverConfig(max_iter=5, keep_iterates=False))
        with pytest.raises(ValueError):
            h.iterate(1)


@pytest.fixture(scope="module")
def shaw1000():
    inst = make_instance("shaw", 1000, 1e-3, 0)
    return inst, {lbl: solve(inst, cfg.__class__(**{**cfg.__dict__, "max_iter": 30}))
                  for lbl, cfg in (("d", D), ("spd", SPD), ("ss", SS))}


class TestShaw:
    def test_optimal_d(self, shaw1000):
        _, h = shaw1000
        k0 = h["d"].decisions[Rule.OPTIMAL].k1
        re = h["d"].re[k0 - 1]
        assert 0.03 <= re <= 0.05 and abs(k0 - 8) <= 2

    def test_single_matches_double(self, shaw1000):
        _, h = shaw1000
        k0 = h["d"].decisions[Rule.OPTIMAL].k1
        assert h["ss"].decisions[Rule.OPTIMAL].k1 == k0
        assert float(f"{h['ss'].re[k0 - 1]:.3g}") == float(f"{h['d'].re[k0 - 1]:.3g}")

    def test_kappa_small(self, shaw1000):
        _, h = shaw1000
        assert 1 <= h["d"].kappa_rhat[19] < 1e3
        assert all(k >= 1 for k in h["d"].kappa_rhat)

    def test_update_precision_bound(self, shaw1000):
        _, h = shaw1000
        ss, spd = h["ss"], h["spd"]
        for k in range(1, 31):
            a, b = ss.iterate(k), spd.iterate(k)
            rel = np.linalg.norm(a - b) / np.linalg.norm(b)
            kap = spd.kappa_rhat[k - 1]
            assert rel <= 10 * math.sqrt(k) * (2 + 2 * math.sqrt(k) + k) * kap * F32.unit

    def test_phi_bar_monotone(self, shaw1000):
        _, h = shaw1000
        for hist in h.values():
            assert np.all(np.diff(hist.phi_bar) <= 0)

    def test_deterministic(self, shaw1000):
        inst, h = shaw1000
        again = solve(inst, SolverConfig(spec_bidiag=F32, spec_update=F32, max_iter=30))
        assert again.re == h["ss"].re and again.phi_bar == h["ss"].phi_bar
        assert all(np.array_equal(a, b) for a, b in zip(again.iterates, h["ss"].iterates))


@pytest.fixture(scope="module")
def shaw200():
    inst = make_instance("shaw", 200, 1e-3, 0)
    return inst, solve(inst, SolverConfig(max_iter=30, stop_rules=()))


def test_residual_identity_shaw200(shaw200):
    inst, h = shaw200
    M = inst.A.to_dense()
    nb = np.linalg.norm(inst.b)
    for k in range(1, h.n_iter + 1):
        r = np.linalg.norm(M @ h.iterate(k) - inst.b)
        assert abs(h.phi_bar[k - 1] - r) <= 1e-8 * nb, f"k = {k}, ||x_k|| = {h.norm_x[k - 1]:.2e}"


def test_residual_identity_to_roundoff_shaw200(shaw200):
    # past k = 20 the iterates reach ||x_k|| ~ 1e13, and forming A x_k alone
    # then costs about u ||A|| ||x_k||; allow for that on top of 1e-8 ||b||
    inst, h = shaw200
    M = inst.A.to_dense()
    nA, nb = np.linalg.norm(M, 2), np.linalg.norm(inst.b)
    for k in range(1, h.n_iter + 1):
        r = np.linalg.norm(M @ h.iterate(k) - inst.b)
        tol = 1e-8 * nb + 1e3 * k * U64 * nA * h.norm_x[k - 1]
        assert abs(h.phi_bar[k - 1] - r) <= tol


def test_gravity_extreme_noise_single_loses_accuracy():
    inst = make_instance("gravity", 2000, 1e-7, 0)
    kw = dict(max_iter=200, history="overshoot", keep_iterates=False)
    d = solve(inst, SolverConfig(**kw))
    ss = solve(inst, SolverConfig(spec_bidiag=F32, spec_update=F32, **kw))
    assert min(ss.re) > min(d.re)


class TestHistoryModes:
    def test_stop_mode(self):
        inst = make_instance("heat", 100, 1e-2, 0)
        h = solve(inst, SolverConfig(history="stop", max_iter=100))
        k1 = h.decisions[Rule.DP].k1
        assert h.n_iter == k1 and h.stopped_by == "stop rule"
        assert h.phi_bar[k1 - 1] <= 1.001 * inst.noise_norm
        assert h.phi_bar[k1 - 2] > 1.001 * inst.noise_norm

    def test_overshoot_mode(self):
        inst = make_instance("heat", 100, 1e-2, 0)
        h = solve(inst, SolverConfig(history="overshoot", max_iter=100))
        k1 = h.decisions[Rule.DP].k1
        assert h.n_iter == min(100, max(math.ceil(1.5 * k1), k1 + 20))

    def test_unknown_noise_disables_dp(self):
        rng = np.random.default_rng(0)
        h = solve(bare(rng.standard_normal((20, 10)), rng.standard_normal(20)),
                  SolverConfig(max_iter=5, stop_rules=("dp",)))
        assert Rule.DP not in h.decisions


@settings(max_examples=15)
@given(
    problem=st.sampled_from(["shaw", "deriv2", "gravity", "heat"]),
    seed=st.integers(0, 1000),
    spec_b=st.sampled_from([F64, F32, emulated(14)]),
    spec_u=st.sampled_from([F64, F32, emulated(14)]),
)
def test_phi_bar_non_increasing(problem, seed, spec_b, spec_u):
    inst = make_instance(problem, 40, 1e-2, seed)
    h = solve(inst, SolverConfig(spec_bidiag=spec_b, spec_update=spec_u, max_iter=25,
                                 keep_iterates=False))
    assert np.all(np.diff(h.phi_bar) <= 0)
    assert all(k >= 1 for k in h.kappa_rhat)
