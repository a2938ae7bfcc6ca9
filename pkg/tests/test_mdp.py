import numpy as np
import pytest

from proxrl.envs import BAIRD_THETA0, baird_star, random_walk_5, two_state
from proxrl.errors import DimensionMismatch, SingularBasis
from proxrl.mdp import (
    FeatureBasis,
    MarkovRewardProcess,
    bellman_apply,
    build_gtd_system,
    expectations,
    iid_sampler,
    load_mrp,
    mspbe,
    mspbe_grad,
    mstde,
    mstde_grad,
    neu,
    neu_grad,
    sample_indices,
    sampled_gtd_matrices,
    save_mrp,
    stationary_distribution,
    td_fixed_point,
    trajectory_sampler,
    value_error,
)

BAIRD_MSPBE0 = 67.59154285714288


def random_instance(rng, n=5, d=3, gamma=0.9):
    P = rng.random((n, n))
    P /= P.sum(axis=1, keepdims=True)
    xi = rng.random(n) + 0.1
    xi /= xi.sum()
    mrp = MarkovRewardProcess(P, rng.standard_normal(n), gamma, xi)
    return mrp, FeatureBasis.explicit(rng.standard_normal((n, d)))


def dense_mspbe(mrp, Phi, theta):
    # ||Phi theta - Pi T(Phi theta)||_Xi^2 with the Xi-weighted projection Pi
    Xi = np.diag(mrp.xi)
    Pi = Phi @ np.linalg.pinv(Phi.T @ Xi @ Phi) @ Phi.T @ Xi
    v = Phi @ theta
    r = v - Pi @ (mrp.R + mrp.gamma * mrp.P @ v)
    return r @ Xi @ r


def central_diff(f, x, h=1e-5):
    return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.size)])


class TestMarkovRewardProcess:
    def test_rejects_non_stochastic(self):
        with pytest.raises(ValueError):
            MarkovRewardProcess([[0.5, 0.4], [0, 1]], [0, 0], 0.9, [0.5, 0.5])

    def test_rejects_bad_xi(self):
        with pytest.raises(ValueError):
            MarkovRewardProcess([[0, 1], [0, 1]], [0, 0], 0.9, [0.0, 1.0])

    def test_rejects_gamma_one(self):
        with pytest.raises(ValueError):
            MarkovRewardProcess([[0, 1], [0, 1]], [0, 0], 1.0, [0.5, 0.5])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            MarkovRewardProcess([[0, 1], [0, 1]], [0, 0, 0], 0.9, [0.5, 0.5])

    def test_arrays_are_frozen(self):
        mrp, _ = two_state()
        with pytest.raises(ValueError):
            mrp.P[0, 0] = 1.0

    def test_text_round_trip(self, tmp_path):
        mrp, _ = random_walk_5()
        path = tmp_path / "rw.mrp"
        save_mrp(mrp, path)
        back = load_mrp(path)
        np.testing.assert_array_equal(back.P, mrp.P)
        np.testing.assert_array_equal(back.R, mrp.R)
        np.testing.assert_array_equal(back.xi, mrp.xi)
        np.testing.assert_array_equal(back.terminal, mrp.terminal)
        np.testing.assert_array_equal(back.restart, mrp.restart)
        assert back.gamma == mrp.gamma
        assert path.read_text().startswith("# proxrl-mrp v1\nn 7\n")

    def test_stationary_distribution(self):
        rng = np.random.default_rng(42)
        P = rng.random((6, 6))
        P /= P.sum(axis=1, keepdims=True)
        x = stationary_distribution(P)
        np.testing.assert_allclose(x @ P, x, atol=1e-12)
        assert x.sum() == pytest.approx(1.0)


class TestFeatureBasis:
    def test_rank_check(self):
        with pytest.raises(SingularBasis):
            FeatureBasis.explicit([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])

    def test_more_features_than_states(self):
        with pytest.raises(SingularBasis):
            FeatureBasis.explicit(np.ones((2, 3)))

    def test_rank_deficient_opt_in(self):
        b = FeatureBasis.explicit(np.ones((2, 3)), allow_rank_deficient=True)
        assert b.d == 3

    def test_noise_augmented_is_seeded(self):
        base = FeatureBasis.tabular(4)
        a = FeatureBasis.noise_augmented(base, 3, seed=7, allow_rank_deficient=True)
        b = FeatureBasis.noise_augmented(base, 3, seed=7, allow_rank_deficient=True)
        np.testing.assert_array_equal(a.matrix(), b.matrix())
        assert a.d == 7


class TestBellman:
    def test_gamma_zero_returns_reward(self):
        mrp = MarkovRewardProcess([[0.3, 0.7], [1, 0]], [1.0, 2.0], 0.0, [0.5, 0.5])
        np.testing.assert_array_equal(bellman_apply(mrp, np.array([5.0, 9.0])), [1.0, 2.0])

    def test_fixed_point(self):
        rng = np.random.default_rng(42)
        mrp, _ = random_instance(rng)
        V = mrp.value_function()
        np.testing.assert_allclose(bellman_apply(mrp, V), V, atol=1e-12)

    def test_two_state(self):
        mrp, _ = two_state()
        np.testing.assert_array_equal(bellman_apply(mrp, np.zeros(2)), [0.0, -1.0])

    def test_dimension_mismatch(self):
        mrp, _ = two_state()
        with pytest.raises(DimensionMismatch):
            bellman_apply(mrp, np.zeros(3))


class TestObjectives:
    def test_mspbe_zero_at_fixed_point(self):
        rng = np.random.default_rng(42)
        mrp, basis = random_instance(rng)
        assert mspbe(mrp, basis, td_fixed_point(mrp, basis)) <= 1e-12

    def test_two_state_fixed_point(self):
        mrp, basis = two_state()
        assert mspbe(mrp, basis, [-5.0]) <= 1e-12

    def test_baird_initial_value(self):
        mrp, basis = baird_star()
        val = mspbe(mrp, basis, BAIRD_THETA0)
        assert val == pytest.approx(dense_mspbe(mrp, basis.matrix(), BAIRD_THETA0), rel=1e-12)
        assert val == pytest.approx(BAIRD_MSPBE0, rel=1e-12)

    def test_mspbe_matches_projection_form(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            mrp, basis = random_instance(rng)
            th = rng.standard_normal(3)
            assert mspbe(mrp, basis, th) == pytest.approx(dense_mspbe(mrp, basis.matrix(), th),
                                                          rel=1e-10)

    def test_neu_zero_at_fixed_point(self):
        rng = np.random.default_rng(42)
        mrp, basis = random_instance(rng)
        assert neu(mrp, basis, td_fixed_point(mrp, basis)) <= 1e-20

    def test_neu_two_state_at_zero(self):
        # E[delta phi] at theta = 0 is sum_s xi_s phi_s R_s = -2 xi_2
        mrp, basis = two_state()
        assert neu(mrp, basis, [0.0]) == pytest.approx((2 * mrp.xi[1]) ** 2, rel=1e-14)

    def test_neu_zero_reward(self):
        rng = np.random.default_rng(42)
        mrp, basis = random_instance(rng)
        mrp0 = MarkovRewardProcess(mrp.P, 0 * mrp.R, mrp.gamma, mrp.xi)
        assert neu(mrp0, basis, np.zeros(3)) == 0.0

    def test_gradients_vanish_at_fixed_point(self):
        rng = np.random.default_rng(42)
        mrp, basis = random_instance(rng)
        th = td_fixed_point(mrp, basis)
        assert np.abs(neu_grad(mrp, basis, th)).max() <= 1e-10
        assert np.abs(mspbe_grad(mrp, basis, th)).max() <= 1e-10

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            mrp, basis = random_instance(rng)
            th = rng.standard_normal(3)
            for f, g in ((neu, neu_grad), (mspbe, mspbe_grad), (mstde, mstde_grad)):
                fd = central_diff(lambda t: f(mrp, basis, t), th)
                exact = g(mrp, basis, th)
                assert np.linalg.norm(fd - exact) <= 1e-5 * np.linalg.norm(exact)

    def test_tabular_gamma_zero_is_regression(self):
        rng = np.random.default_rng(42)
        mrp, _ = random_instance(rng, gamma=0.0)
        basis = FeatureBasis.tabular(5)
        th = rng.standard_normal(5)
        X = np.diag(mrp.xi)
        np.testing.assert_allclose(mspbe_grad(mrp, basis, th), -2 * X @ (mrp.R - th), atol=1e-12)
        np.testing.assert_allclose(neu_grad(mrp, basis, th), -2 * X @ X @ (mrp.R - th), atol=1e-12)

    def test_orthonormal_features_make_mspbe_equal_neu(self):
        rng = np.random.default_rng(42)
        mrp, basis = random_instance(rng)
        M = expectations(mrp, basis).M
        Phi = basis.matrix() @ np.linalg.inv(np.linalg.cholesky(M)).T
        ob = FeatureBasis.explicit(Phi)
        np.testing.assert_allclose(expectations(mrp, ob).M, np.eye(3), atol=1e-12)
        for _ in range(5):
            th = rng.standard_normal(3)
            assert abs(mspbe(mrp, ob, th) - neu(mrp, ob, th)) <= 1e-10

    def test_singular_covariance_rejected(self):
        # a feature that lives only on a zero-weight direction cannot be checked by rank alone
        mrp, _ = two_state()
        with pytest.raises(SingularBasis):
            expectations(mrp, FeatureBasis.explicit([[1.0, 0.0], [1.0, 1e-12]],
                                                    allow_rank_deficient=False))

    def test_value_error(self):
        mrp, basis = two_state()
        V = mrp.value_function()
        np.testing.assert_allclose(V, [-9.0, -10.0])
        assert value_error(mrp, basis, [-5.0]) == pytest.approx(4.0)
        tab = FeatureBasis.tabular(2)
        assert value_error(mrp, tab, V) == pytest.approx(0.0, abs=1e-12)
        assert value_error(mrp, tab, V, "xi_weighted") == pytest.approx(0.0, abs=1e-12)

    def test_value_error_gamma_zero(self):
        mrp = MarkovRewardProcess([[0, 1], [1, 0]], [1.0, -2.0], 0.0, [0.5, 0.5])
        assert value_error(mrp, FeatureBasis.tabular(2), [1.0, -2.0]) == 0.0


class TestGtdSystem:
    def test_two_state_solution(self):
        mrp, basis = two_state()
        w, th = build_gtd_system(mrp, basis, eta=1.0).solve()
        assert th[0] == pytest.approx(-5.0, abs=1e-6)
        assert abs(w[0]) <= 1e-10

    def test_tabular_recovers_values(self):
        rng = np.random.default_rng(42)
        mrp, _ = random_instance(rng)
        _, th = build_gtd_system(mrp, FeatureBasis.tabular(5), eta=2.0).solve()
        np.testing.assert_allclose(th, mrp.value_function(), atol=1e-10)

    def test_baird(self):
        mrp, basis = baird_star()
        _, th = build_gtd_system(mrp, basis, eta=1.0).solve()
        assert mspbe(mrp, basis, th) <= 1e-10

    def test_random_solution_is_mspbe_minimiser(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            mrp, basis = random_instance(rng)
            w, th = build_gtd_system(mrp, basis, eta=0.5).solve()
            assert mspbe(mrp, basis, th) <= 1e-10

    def test_eta_must_be_positive(self):
        mrp, basis = two_state()
        with pytest.raises(ValueError):
            build_gtd_system(mrp, basis, 0.0)


class TestSampling:
    def test_seeded_streams_match(self):
        mrp, basis = random_walk_5()
        a, b = iid_sampler(mrp, basis, 3), iid_sampler(mrp, basis, 3)
        for _ in range(100):
            x, y = next(a), next(b)
            assert (x.s, x.s_next, x.r) == (y.s, y.s_next, y.r)

    def test_state_frequencies(self):
        rng = np.random.default_rng(42)
        mrp, _ = random_instance(rng)
        n = 100_000
        s, s2 = sample_indices(mrp, n, np.random.default_rng(0))
        freq = np.bincount(s, minlength=5) / n
        sigma = np.sqrt(mrp.xi * (1 - mrp.xi) / n)
        assert np.all(np.abs(freq - mrp.xi) <= 4 * sigma)  # five simultaneous checks
        # transitions out of the most visited state follow its row of P
        k = int(np.argmax(freq))
        nxt = np.bincount(s2[s == k], minlength=5) / np.sum(s == k)
        sig = np.sqrt(mrp.P[k] * (1 - mrp.P[k]) / np.sum(s == k))
        assert np.all(np.abs(nxt - mrp.P[k]) <= 4 * sig)

    def test_feature_covariance(self):
        rng = np.random.default_rng(42)
        mrp, basis = random_instance(rng)
        s, _ = sample_indices(mrp, 100_000, np.random.default_rng(1))
        F = basis.matrix()[s]
        M_hat = F.T @ F / s.size
        M = expectations(mrp, basis).M
        assert np.linalg.norm(M_hat - M) / np.linalg.norm(M) <= 5e-2

    def test_gtd_matrices_unbiased(self):
        rng = np.random.default_rng(42)
        mrp, basis = random_instance(rng)
        sys = build_gtd_system(mrp, basis, eta=2.0)
        Phi = basis.matrix()
        s, s2 = sample_indices(mrp, 100_000, np.random.default_rng(2))
        phi, phin, r = Phi[s], Phi[s2], mrp.R[s]
        g, eta = mrp.gamma, 2.0
        dphi = phi - g * phin
        # the per-sample blocks, averaged in closed form
        A_hat = np.block([
            [eta * phi.T @ phi, eta * phi.T @ dphi],
            [g * phin.T @ phi, phi.T @ dphi],
        ]) / s.size
        b_hat = np.concatenate([eta * phi.T @ r, phi.T @ r]) / s.size
        assert np.linalg.norm(A_hat - sys.A) / np.linalg.norm(sys.A) <= 5e-2
        assert np.linalg.norm(b_hat - sys.b) / np.linalg.norm(sys.b) <= 5e-2
        # the closed-form average agrees with the per-sample constructor
        smp = next(iid_sampler(mrp, basis, 0))
        A1, b1 = sampled_gtd_matrices(smp, g, eta)
        np.testing.assert_allclose(A1[:3, :3], eta * np.outer(smp.phi, smp.phi))
        np.testing.assert_allclose(b1[3:], smp.r * smp.phi)

    def test_trajectory_restarts_after_terminal(self):
        mrp, basis = random_walk_5()
        stream = trajectory_sampler(mrp, basis, 0)
        samples = [next(stream) for _ in range(500)]
        assert samples[0].start
        assert not any(mrp.terminal[x.s] for x in samples)
        for prev, cur in zip(samples, samples[1:]):
            if mrp.terminal[prev.s_next]:
                assert cur.start and cur.s == 2
            else:
                assert not cur.start and cur.s == prev.s_next
