import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mplsqr import bidiag
from mplsqr.bidiag import lower_bidiagonal, orthogonality_level, recurrence_residual
from mplsqr.precision import F32, F64, emulated, round_scalar, vec_norm
from mplsqr.problems import make_instance


def run(A, b, spec, k, reorth=True):
    st_ = bidiag.init(A, b, spec, reorth)
    while st_.k < k and not st_.terminated:
        bidiag.step(st_)
    return st_


def golub_kahan_reference(A, b, k):
    """Textbook bidiagonalization in double with full MGS reorthogonalization."""
    m, n = A.shape
    P = np.zeros((m, k + 1))
    Q = np.zeros((n, k + 1))
    alpha, beta = np.zeros(k + 1), np.zeros(k + 1)
    beta[0] = np.linalg.norm(b)
    P[:, 0] = b / beta[0]
    r = A.T @ P[:, 0]
    alpha[0] = np.linalg.norm(r)
    Q[:, 0] = r / alpha[0]
    for j in range(k):
        s = A @ Q[:, j] - alpha[j] * P[:, j]
        for _ in range(2):
            for i in range(j + 1):
                s -= (P[:, i] @ s) * P[:, i]
        beta[j + 1] = np.linalg.norm(s)
        P[:, j + 1] = s / beta[j + 1]
        r = A.T @ P[:, j + 1] - beta[j + 1] * Q[:, j]
        for _ in range(2):
            for i in range(j + 1):
                r -= (Q[:, i] @ r) * Q[:, i]
        alpha[j + 1] = np.linalg.norm(r)
        Q[:, j + 1] = r / alpha[j + 1]
    return alpha, beta, P, Q


SMALL_A = np.diag([1.0, 0.5, 0.25, 0.125])
SMALL_B = np.ones(4)


class TestInit:
    def test_identity(self):
        st_ = bidiag.init(np.eye(5), 3 * np.eye(5)[0], F64)
        assert st_.beta[0] == 3 and st_.alpha[0] == 1
        assert np.array_equal(st_.p(1), np.eye(5)[0]) and np.array_equal(st_.q(1), np.eye(5)[0])

    def test_zero_b(self):
        with pytest.raises(ValueError):
            bidiag.init(np.eye(3), np.zeros(3), F64)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            bidiag.init(np.eye(3), np.ones(4), F64)

    def test_orthogonal_to_range(self):
        A = np.zeros((3, 2))
        A[0, 0] = A[1, 1] = 1.0
        st_ = bidiag.init(A, np.array([0.0, 0.0, 2.0]), F64)
        assert st_.terminated and st_.alpha == [0.0]

    @pytest.mark.parametrize("spec", [F64, F32, emulated(16)])
    def test_shaw_first_vectors(self, spec):
        inst = make_instance("shaw", 1000, 1e-3, 0)
        st_ = bidiag.init(inst.A, inst.b, spec)
        assert st_.alpha[0] > 0
        q1 = st_.q(1).astype(np.float64)
        assert abs(np.linalg.norm(q1) - 1) <= 4 * spec.unit
        # beta_1 is ||b|| in spec precision
        assert st_.beta[0] == vec_norm(inst.b, spec)
        assert abs(st_.beta[0] - np.linalg.norm(inst.b)) <= 1001 * spec.unit * np.linalg.norm(inst.b)


class TestStep:
    def test_identity_terminates_at_one(self):
        b = np.arange(1.0, 6.0)
        st_ = run(np.eye(5), b, F64, 10)
        assert st_.terminated and st_.k == 1
        assert st_.beta[1] == 0
        with pytest.raises(RuntimeError):
            bidiag.step(st_)

    def test_small_diagonal_orthogonality(self):
        st_ = run(SMALL_A, SMALL_B, F64, 4)
        Q = st_.Q[:, :4].astype(np.float64)
        assert np.linalg.norm(np.eye(4) - Q.T @ Q, 2) <= 1e-14
        # Krylov space of dimension 4: nothing left after four steps
        assert st_.terminated and st_.k == 4

    def test_small_diagonal_emulated(self):
        st_ = run(SMALL_A, SMALL_B, emulated(12), 4)
        assert st_.nu <= 100 * 4 * 2.0**-12
        ref = orthogonality_level(st_.Q)
        assert st_.nu == pytest.approx(ref, abs=1e-15)

    def test_levels_match_dense_gram(self):
        st_ = run(SMALL_A, SMALL_B, F64, 3)
        assert st_.nu == pytest.approx(orthogonality_level(st_.Q), abs=1e-15)
        assert st_.mu == pytest.approx(orthogonality_level(st_.P), abs=1e-15)

    def test_against_reference(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((60, 40))
        b = rng.standard_normal(60)
        k = 25
        st_ = run(A, b, F64, k)
        alpha, beta, P, Q = golub_kahan_reference(A, b, k)
        assert np.allclose(st_.alpha, alpha, rtol=1e-10)
        assert np.allclose(st_.beta, beta, rtol=1e-10)
        # vectors agree up to sign conventions, which are fixed by alpha, beta > 0
        assert np.allclose(st_.P, P, atol=1e-10) and np.allclose(st_.Q, Q, atol=1e-10)

    def test_recurrence_residual_native64(self):
        inst = make_instance("shaw", 200, 1e-3, 0)
        st_ = run(inst.A, inst.b, F64, 30)
        normA = np.linalg.norm(inst.A.to_dense(), 2)
        assert recurrence_residual(st_) <= 1e3 * st_.k * F64.unit * normA
        B = lower_bidiagonal(st_)
        assert B.shape == (st_.k + 1, st_.k)

    @pytest.mark.parametrize("spec", [F64, F32, emulated(16)])
    def test_reorth_orthogonality_shaw(self, spec):
        inst = make_instance("shaw", 200, 1e-3, 1)
        st_ = bidiag.init(inst.A, inst.b, spec)
        while st_.k < 30 and not st_.terminated:
            bidiag.step(st_)
            bound = 100 * (st_.k + 1) * spec.unit
            assert st_.mu <= bound and st_.nu <= bound
            assert all(a > 0 for a in st_.alpha) and all(b > 0 for b in st_.beta)
        for i in range(1, st_.n_p + 1):
            assert abs(np.linalg.norm(st_.p(i).astype(float)) - 1) <= 4 * spec.unit
        for i in range(1, st_.n_q + 1):
            assert abs(np.linalg.norm(st_.q(i).astype(float)) - 1) <= 4 * spec.unit

    def test_no_reorth_loses_orthogonality(self):
        inst = make_instance("shaw", 200, 1e-3, 0)
        on = run(inst.A, inst.b, F64, 30, reorth=True)
        off = run(inst.A, inst.b, F64, 30, reorth=False)
        assert off.nu > on.nu
        assert off.nu > 1e-6

    def test_working_format(self):
        st_ = run(SMALL_A, SMALL_B, emulated(10), 2)
        for a in st_.alpha + st_.beta:
            assert round_scalar(a, emulated(10)) == a
        assert st_.P.dtype == np.float64
        assert run(SMALL_A, SMALL_B, F32, 2).Q.dtype == np.float32


class TestOrthogonalityLevel:
    def test_orthonormal(self):
        Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((20, 6)))
        assert orthogonality_level(Q) <= 1e-15

    def test_repeated_column(self):
        e1 = np.eye(4)[:, :1]
        assert orthogonality_level(np.hstack([e1, e1])) == pytest.approx(1.0)

    def test_single_column(self):
        assert orthogonality_level(np.ones((3, 1))) == 0.0

    @settings(max_examples=30)
    @given(seed=st.integers(0, 2**31), k=st.integers(2, 8), c=st.floats(-0.9, 0.9))
    def test_two_vector_angle(self, seed, k, c):
        # for two unit vectors the level is |cos angle|
        rng = np.random.default_rng(seed)
        u, v = np.linalg.qr(rng.standard_normal((k + 2, 2)))[0].T
        w = c * u + np.sqrt(1 - c * c) * v
        assert orthogonality_level(np.column_stack([u, w])) == pytest.approx(abs(c), abs=1e-12)
