import warnings

import numpy as np
import pytest

from proxrl.envs import random_mdp, random_walk_5
from proxrl.errors import NonConvergence, SingularBasis, StepSizeOutOfRange, StepSizeWarning
from proxrl.geometry import FeasibleSet
from proxrl.mdp import FeatureBasis, MarkovRewardProcess
from proxrl.vi import (
    ProjectedAffineEquation,
    VIProblem,
    basic_projection_solve,
    estimate_lipschitz,
    extragradient_solve,
    projected_equation_estimate,
    projected_equation_solve,
    rotation_problem,
)

# f(x) = x'Qx/2 + c'x on [0, 1]^2 with F = grad f
Q = np.array([[2.0, 0.5], [0.5, 1.0]])
C = np.array([-3.0, 1.0])
BOX = FeasibleSet.box([0.0, 0.0], [1.0, 1.0])


def box_quadratic():
    return VIProblem.affine(Q, C, BOX)


def box_kkt_oracle():
    # enumerate which coordinates sit at 0, 1 or inside; keep the KKT-valid candidate
    best = None
    for pattern in np.ndindex(3, 3):
        x = np.zeros(2)
        free = [i for i in range(2) if pattern[i] == 2]
        for i in range(2):
            x[i] = {0: 0.0, 1: 1.0}.get(pattern[i], 0.0)
        if free:
            fixed = [i for i in range(2) if i not in free]
            rhs = -C[free] - Q[np.ix_(free, fixed)] @ x[fixed]
            x[free] = np.linalg.solve(Q[np.ix_(free, free)], rhs)
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            continue
        g = Q @ x + C
        ok = all((pattern[i] == 0 and g[i] >= -1e-12) or (pattern[i] == 1 and g[i] <= 1e-12)
                 or pattern[i] == 2 for i in range(2))
        if ok:
            best = x
    return best


class TestProblem:
    def test_lipschitz_estimate(self):
        rng = np.random.default_rng(42)
        M = rng.standard_normal((6, 4))
        assert estimate_lipschitz(M) == pytest.approx(np.linalg.norm(M, 2), rel=1e-8)
        assert estimate_lipschitz(np.zeros((2, 2))) == 0.0

    def test_affine_moduli(self):
        vi = box_quadratic()
        assert vi.L == pytest.approx(np.linalg.eigvalsh(Q)[-1], rel=1e-8)
        assert vi.mu_mono == pytest.approx(np.linalg.eigvalsh(Q)[0])
        assert rotation_problem().mu_mono == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            VIProblem.from_field(lambda x: x, BOX, L=0.0)
        with pytest.raises(ValueError):
            VIProblem.from_field(lambda x: x, BOX, L=1.0, mu_mono=-1.0)


class TestBasicProjection:
    def test_box_quadratic_matches_kkt(self):
        vi = box_quadratic()
        a = vi.L ** 2 / (2 * vi.mu_mono) * 1.5
        res = basic_projection_solve(vi, a, np.zeros(2), tol=1e-13, max_iter=100_000)
        assert res.converged
        np.testing.assert_allclose(res.x, box_kkt_oracle(), atol=1e-8)

    def test_matrix_metric(self):
        vi = box_quadratic()
        res = basic_projection_solve(vi, np.diag([4.0, 3.0]), np.zeros(2), tol=1e-13,
                                     max_iter=100_000)
        np.testing.assert_allclose(res.x, box_kkt_oracle(), atol=1e-8)

    def test_start_at_solution(self):
        vi = box_quadratic()
        x = box_kkt_oracle()
        res = basic_projection_solve(vi, 5.0, x)
        assert res.converged and res.iterations == 1
        np.testing.assert_allclose(res.x, x, atol=1e-12)

    @pytest.mark.parametrize("gamma", [0.1, 1.0])
    def test_fixed_point_characterisation(self, gamma):
        vi = box_quadratic()
        res = basic_projection_solve(vi, 3.0, np.zeros(2), tol=1e-12, max_iter=100_000)
        assert vi.residual(res.x, gamma) <= 1e-10

    def test_vertex_optimality(self):
        vi = box_quadratic()
        x = basic_projection_solve(vi, 3.0, np.zeros(2), tol=1e-13, max_iter=100_000).x
        for v in ([0, 0], [1, 0], [0, 1], [1, 1]):
            assert vi.F(x) @ (np.array(v) - x) >= -1e-8

    def test_rotation_field_fails(self):
        vi = rotation_problem()
        norms = []
        res = basic_projection_solve(vi, 10.0, np.ones(2), max_iter=10_000,
                                     callback=lambda k, x: norms.append(np.linalg.norm(x)))
        assert not res.converged and res.iterations == 10_000
        assert min(norms) >= 0.5
        with pytest.raises(NonConvergence):
            basic_projection_solve(vi, 10.0, np.ones(2), max_iter=100, raise_on_failure=True)

    def test_nonpositive_alpha(self):
        with pytest.raises(StepSizeOutOfRange):
            basic_projection_solve(box_quadratic(), 0.0, np.zeros(2))


class TestExtragradient:
    def test_box_quadratic_matches_basic_projection(self):
        vi = box_quadratic()
        eg = extragradient_solve(vi, 0.2, np.zeros(2), tol=1e-13, max_iter=100_000)
        bp = basic_projection_solve(vi, 3.0, np.zeros(2), tol=1e-13, max_iter=100_000)
        np.testing.assert_allclose(eg.x, bp.x, atol=1e-8)
        np.testing.assert_allclose(eg.x, box_kkt_oracle(), atol=1e-8)

    @pytest.mark.parametrize("gamma", [0.1, 1.0])
    def test_fixed_point_characterisation(self, gamma):
        vi = rotation_problem()
        res = extragradient_solve(vi, 0.5, np.ones(2), tol=1e-11, max_iter=100_000)
        assert res.converged and vi.residual(res.x, gamma) <= 1e-10

    def test_rotation_converges(self):
        res = extragradient_solve(rotation_problem(), 0.1, np.ones(2), max_iter=10_000)
        assert res.converged and np.linalg.norm(res.x) <= 1e-3

    def test_distance_decreases_monotonically(self):
        norms = [np.sqrt(2.0)]
        extragradient_solve(rotation_problem(), 0.1, np.ones(2), max_iter=2000,
                            callback=lambda k, x: norms.append(np.linalg.norm(x)))
        assert np.all(np.diff(norms) < 1e-12)
        assert norms[-1] < norms[0]

    def test_zero_alpha_rejected(self):
        with pytest.raises(StepSizeOutOfRange):
            extragradient_solve(rotation_problem(), 0.0, np.ones(2))

    def test_large_alpha_warns(self):
        with pytest.warns(StepSizeWarning):
            extragradient_solve(rotation_problem(), 0.9, np.ones(2), max_iter=10)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            extragradient_solve(rotation_problem(), 0.5, np.ones(2), max_iter=10)


class TestProjectedEquation:
    def test_tabular_is_exact(self):
        mrp, _ = random_walk_5()
        pe = ProjectedAffineEquation.from_mrp(mrp, FeatureBasis.tabular(7))
        np.testing.assert_allclose(projected_equation_solve(pe), mrp.value_function(), atol=1e-10)

    def test_sampling_converges(self):
        mrp, basis = random_mdp(20, 3, 5, seed=1)
        pe = ProjectedAffineEquation.from_mrp(mrp, basis)
        C, d = pe.exact()
        Ck, dk = projected_equation_estimate(pe, 100_000, seed=0)
        assert np.linalg.norm(Ck - C) / np.linalg.norm(C) <= 5e-2
        assert np.linalg.norm(dk - d) / np.linalg.norm(d) <= 5e-2
        r = projected_equation_solve(pe, Ck, dk)
        assert np.linalg.norm(r - projected_equation_solve(pe)) <= 0.1 * np.linalg.norm(r)

    def test_one_dimensional(self):
        # Phi = e_1 on two states: C = xi_1 (1 - a_11), d = xi_1 b_1
        A = np.array([[0.4, 0.3], [0.1, 0.2]])
        pe = ProjectedAffineEquation(A, [2.0, 5.0], [[1.0], [0.0]], [0.25, 0.75])
        C, d = pe.exact()
        assert C[0, 0] == pytest.approx(0.25 * 0.6) and d[0] == pytest.approx(0.5)
        assert projected_equation_solve(pe)[0] == pytest.approx(2.0 / 0.6)

    def test_column_probabilities(self):
        A = np.array([[0.0, -2.0, 1.0], [0.0, 0.0, 0.0], [1.0, 1.0, 2.0]])
        pe = ProjectedAffineEquation(A, np.zeros(3), np.eye(3), np.full(3, 1 / 3))
        P = pe.column_probs
        np.testing.assert_allclose(P.sum(axis=1), 1.0)
        np.testing.assert_allclose(P[0], [0, 2 / 3, 1 / 3])
        np.testing.assert_allclose(P[1], 1 / 3)
        assert np.all(P[A != 0] > 0)

    def test_singular(self):
        A = np.eye(2)
        pe = ProjectedAffineEquation(A, [1.0, 1.0], [[1.0], [1.0]], [0.5, 0.5])
        with pytest.raises(SingularBasis):
            projected_equation_solve(pe)

    def test_validation(self):
        with pytest.raises(ValueError):
            ProjectedAffineEquation(np.eye(2), [1.0], np.eye(2), [0.5, 0.5])
        with pytest.raises(ValueError):
            ProjectedAffineEquation(np.eye(2), [1.0, 1.0], np.eye(2), [1.0, 0.0])

    def test_seeded(self):
        mrp, basis = random_mdp(10, 2, 3, seed=4)
        pe = ProjectedAffineEquation.from_mrp(mrp, basis)
        a, b = projected_equation_estimate(pe, 500, 3), projected_equation_estimate(pe, 500, 3)
        np.testing.assert_array_equal(a[0], b[0])
