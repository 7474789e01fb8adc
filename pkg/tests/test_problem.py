import numpy as np
import pytest

from mewls_tools.datagen import example2
from mewls_tools.errors import (
    DimensionMismatchError,
    NonPositiveWeightError,
    RankDeficientError,
    SingularMatrixError,
    ZeroResidualError,
)
from mewls_tools.numerics import solve_linear
from mewls_tools.problem import (
    BranchState,
    Problem,
    entropy,
    eval_F,
    feasibility,
    gibbs_consistency,
    gibbs_weights,
    is_degenerate_start,
    jacobian,
    ols_initial,
    residuals,
    weighted_mse,
)


def random_problem(rng: np.random.Generator, m: int, n: int) -> Problem:
    return Problem(rng.normal(size=(m, n)), rng.normal(size=m))


def random_state(rng: np.random.Generator, p: Problem) -> BranchState:
    w = rng.uniform(0.5, 1.5, size=p.m)
    return BranchState(
        lam=float(rng.normal()),
        mu=float(rng.uniform(0, 3)),
        w=w / w.sum(),
        x=rng.normal(size=p.n),
        E=float(rng.uniform(0.1, 1.0)),
    )


class TestProblem:
    def test_shapes_and_read_only(self):
        p = Problem(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), [1.0, 2.0, 4.0])
        assert (p.m, p.n) == (3, 2)
        with pytest.raises(ValueError, match="read-only"):
            p.A[0, 0] = 5.0

    def test_one_dimensional_design_becomes_column(self):
        p = Problem(np.ones(4).reshape(-1, 1), [0.0, 1.0, 2.0, 3.0])
        assert (p.m, p.n) == (4, 1)

    @pytest.mark.parametrize(
        ("A", "b"),
        [
            (np.ones((2, 3)), np.ones(2)),
            (np.ones((3, 1)), np.ones(4)),
        ],
    )
    def test_dimension_mismatch(self, A, b):
        with pytest.raises(DimensionMismatchError):
            Problem(A, b)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficientError):
            Problem(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]), np.ones(3))

    def test_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            Problem(np.ones((3, 1)), [1.0, np.nan, 2.0])

    def test_fingerprint(self):
        A = np.array([[1.0], [1.0], [1.0]])
        p1 = Problem(A, [0.0, 1.0, 2.0])
        p2 = Problem(A.copy(), [0.0, 1.0, 2.0])
        p3 = Problem(A, [0.0, 1.0, 2.5])
        assert p1.fingerprint == p2.fingerprint
        assert p1.fingerprint != p3.fingerprint

    def test_rows(self):
        p = Problem(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), [1.0, 2.0, 4.0])
        sub = p.rows([0, 1])
        assert np.array_equal(sub.A, np.eye(2))
        assert np.array_equal(sub.b, [1.0, 2.0])


class TestBranchState:
    def test_vector_round_trip(self):
        y = BranchState(
            lam=0.5, mu=1.5, w=np.array([0.25, 0.75]), x=np.array([3.0]), E=0.2
        )
        v = y.as_vector()
        assert np.array_equal(v, [0.5, 1.5, 0.25, 0.75, 3.0])
        y2 = BranchState.from_vector(v, 2, 0.2)
        assert y2.lam == y.lam and y2.mu == y.mu and y2.E == y.E
        assert np.array_equal(y2.w, y.w) and np.array_equal(y2.x, y.x)

    def test_at(self):
        y = BranchState(lam=0.0, mu=0.0, w=np.ones(2) / 2, x=np.zeros(1), E=1.0)
        assert y.at(0.5).E == 0.5
        assert y.E == 1.0


def test_entropy():
    assert entropy(np.full(4, 0.25)) == pytest.approx(np.log(4))
    assert entropy(np.array([1.0, 0.0, 0.0])) == 0.0


def test_weighted_mse_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        weighted_mse(np.ones(3), np.ones(2))


class TestOlsInitial:
    def test_eight_point_start(self):
        _, p = example2("eight")
        ols, y0 = ols_initial(p)
        assert ols.E_uw == pytest.approx(0.05, rel=1e-12)
        assert np.allclose(ols.x_star, [0.5, 0.0], atol=1e-12)
        assert ols.E_uw == pytest.approx(np.mean(ols.r_star**2), rel=1e-12)
        assert y0.mu == 0.0
        assert np.allclose(y0.w, 1 / 8)
        assert not is_degenerate_start(ols)

    def test_start_is_stationary(self):
        rng = np.random.default_rng(3)
        p = random_problem(rng, 7, 2)
        _, y0 = ols_initial(p)
        assert np.max(np.abs(eval_F(p, y0))) <= 1e-12
        assert gibbs_consistency(p, y0) <= 1e-14
        assert feasibility(p, y0).holds(p, y0.E)

    def test_four_point_is_degenerate(self):
        _, p = example2("four")
        ols, _ = ols_initial(p)
        assert is_degenerate_start(ols)

    def test_consistent_system(self):
        A = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
        with pytest.raises(ZeroResidualError):
            ols_initial(Problem(A, A @ [1.0, 2.0]))


class TestEvalF:
    def test_matches_direct_transcription(self):
        rng = np.random.default_rng(5)
        p = random_problem(rng, 3, 1)
        y = random_state(rng, p)
        a, b = p.A[:, 0], p.b
        r = a * y.x[0] - b
        expected = [
            sum(y.w) - 1,
            sum(y.w[i] * r[i] ** 2 for i in range(3)) - y.E,
            *[np.log(y.w[i]) + 1 + y.lam + y.mu * r[i] ** 2 for i in range(3)],
            sum(a[i] * y.w[i] * r[i] for i in range(3)),
        ]
        assert np.allclose(eval_F(p, y), expected, rtol=0, atol=1e-13)

    def test_non_positive_weight(self):
        p = Problem(np.ones((3, 1)), [0.0, 1.0, 2.0])
        w = np.array([0.5, 0.5, 0.0])
        y = BranchState(lam=0.0, mu=0.0, w=w, x=np.ones(1), E=1.0)
        with pytest.raises(NonPositiveWeightError):
            eval_F(p, y)
        with pytest.raises(NonPositiveWeightError):
            jacobian(p, y)


def central_differences(p: Problem, y: BranchState, h: float = 1e-6) -> np.ndarray:
    v = y.as_vector()
    cols = []
    for k in range(v.size):
        e = np.zeros(v.size)
        e[k] = h
        F_plus = eval_F(p, BranchState.from_vector(v + e, p.m, y.E))
        F_minus = eval_F(p, BranchState.from_vector(v - e, p.m, y.E))
        cols.append((F_plus - F_minus) / (2 * h))
    return np.column_stack(cols)


class TestJacobian:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_finite_differences_off_branch(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(3, 11))
        n = int(rng.integers(1, min(3, m - 1) + 1))
        p = random_problem(rng, m, n)
        y = random_state(rng, p)
        assert np.max(np.abs(jacobian(p, y) - central_differences(p, y))) <= 1e-6

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_finite_differences_on_branch(self, seed):
        from mewls_tools.continuation import sample_at, trace_branch
        from mewls_tools.models import ContinuationConfig

        rng = np.random.default_rng(100 + seed)
        m = int(rng.integers(4, 11))
        n = int(rng.integers(1, 3))
        p = random_problem(rng, m, n)
        ols, _ = ols_initial(p)
        cfg = ContinuationConfig(E_target=0.9 * ols.E_uw)
        traj, _ = trace_branch(p, cfg)
        y = sample_at(p, traj, float(rng.uniform(traj.E_min, traj.E_uw)))
        J = jacobian(p, y)
        assert np.max(np.abs(J - central_differences(p, y))) <= 1e-6
        assert np.max(np.abs(J - jacobian(p, y, on_branch=True))) <= 1e-8

    def test_on_branch_form_drops_only_mse_row_x_block(self):
        rng = np.random.default_rng(1)
        p = random_problem(rng, 5, 2)
        y = random_state(rng, p)
        diff = jacobian(p, y) - jacobian(p, y, on_branch=True)
        assert np.count_nonzero(np.delete(diff, 1, axis=0)) == 0
        assert np.count_nonzero(diff[1, : 2 + p.m]) == 0
        assert np.allclose(diff[1, 2 + p.m :], 2 * p.A.T @ (y.w * residuals(p, y.x)))

    def test_singular_at_four_point_start(self):
        _, p = example2("four")
        _, y0 = ols_initial(p)
        e2 = np.zeros(2 + p.m + p.n)
        e2[1] = 1.0
        with pytest.raises(SingularMatrixError):
            solve_linear(jacobian(p, y0), e2)

    def test_nonsingular_at_eight_point_start(self):
        _, p = example2("eight")
        _, y0 = ols_initial(p)
        e2 = np.zeros(2 + p.m + p.n)
        e2[1] = 1.0
        assert np.all(np.isfinite(solve_linear(jacobian(p, y0), e2)))


class TestGibbsWeights:
    @pytest.mark.parametrize("mu", [0.0, 1.0, 50.0, 1e4])
    def test_normalized(self, mu):
        r = np.random.default_rng(0).normal(size=12)
        w = gibbs_weights(mu, r)
        assert abs(w.sum() - 1) <= 1e-14
        assert np.all(w >= 0)

    def test_shift_invariant(self):
        r = np.random.default_rng(2).normal(size=6)
        shifted = np.sqrt(r**2 + 3.0)
        w = gibbs_weights(2.0, r)
        assert np.allclose(w, gibbs_weights(2.0, shifted), rtol=0, atol=1e-13)

    def test_zero_multiplier_is_uniform(self):
        assert np.allclose(gibbs_weights(0.0, np.arange(5.0)), 0.2, atol=1e-15)

    def test_large_residuals_get_small_weights(self):
        w = gibbs_weights(10.0, np.array([0.0, 0.5, 1.0]))
        assert w[0] > w[1] > w[2]

    def test_consistency_detects_perturbation(self):
        p = Problem(np.ones((4, 1)), [0.0, 0.1, 0.2, 1.0])
        _, y0 = ols_initial(p)
        w = y0.w.copy()
        w[2] += 1e-3
        assert gibbs_consistency(p, y0._replace(w=w)) == pytest.approx(1e-3, rel=1e-9)


def test_feasibility_flags_violations():
    p = Problem(np.ones((4, 1)), [0.0, 0.1, 0.2, 1.0])
    _, y0 = ols_initial(p)
    assert feasibility(p, y0).holds(p, y0.E)
    off = feasibility(p, y0._replace(x=y0.x + 0.1))
    assert off.normal_equations == pytest.approx(0.1)
    assert not off.holds(p, y0.E)
