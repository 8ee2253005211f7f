import numpy as np
import pytest

from trustfactor.data import (
    FactorModel,
    Hyperparams,
    SocialGraph,
    SparseRatings,
    extract_triplets,
    init_model,
    lazy_triplets,
    sample_triplets,
)
from trustfactor.experiments import SyntheticSpec, synth_generate
from trustfactor.objective import social_gradient, triplet_batch_gradient
from trustfactor.optimize import (
    StepSchedule,
    early_stop_monitor,
    fit_gd,
    fit_sgd,
)
from trustfactor.seeding import substream


def single_rating_instance():
    return SparseRatings.from_entries(1, 1, [(0, 0, 3.0)])


def social_instance(seed=0):
    """Small rated instance with a non-trivial constraint set."""
    spec = SyntheticSpec(n=24, m=12, rank=2, clusters=2, density=0.6,
                         noise_sigma=0.1, n_trust=30, n_distrust=30, seed=seed)
    ratings, graph, _ = synth_generate(spec)
    return ratings, graph


class TestStepSchedule:
    def test_constant(self):
        sched = StepSchedule("constant", 0.05)
        assert sched.rate(1) == sched.rate(100) == 0.05

    def test_inverse_sqrt(self):
        sched = StepSchedule("inverse-sqrt", 0.1)
        assert sched.rate(1) == 0.1
        assert sched.rate(4) == pytest.approx(0.05)


class TestEarlyStop:
    def test_strictly_decreasing_never_stops(self):
        assert not early_stop_monitor([1.0, 0.9, 0.8, 0.7], patience=1)

    def test_rule_trace(self):
        assert not early_stop_monitor([1.0, 1.1], patience=2)
        assert early_stop_monitor([1.0, 1.1, 1.2], patience=2)

    def test_patience_zero(self):
        assert not early_stop_monitor([1.0, 0.9], patience=0)
        assert early_stop_monitor([1.0, 1.0], patience=0)


class TestFitGd:
    def test_one_dimensional_contraction(self):
        # k=1, single rating r, lambdas 0: the residual e = uv - r follows
        # e' = e * (1 - eta (u^2 + v^2)) + O(eta^2); with small eta the
        # iteration contracts monotonically toward 0
        ratings = single_rating_instance()
        hp = Hyperparams(k=1, eta0=0.01, epochs=400)
        model0 = FactorModel(np.array([[0.5]]), np.array([[0.4]]), 1)
        model, report = fit_gd(ratings, None, hp, model0=model0)
        # closed-form oracle: simulate the same two-parameter recursion
        u, v = 0.5, 0.4
        expected = []
        for _ in range(400):
            e = u * v - 3.0
            u, v = u - 0.01 * e * v, v - 0.01 * e * u
            expected.append(abs(u * v - 3.0))
        assert abs(model.U[0, 0] * model.V[0, 0] - 3.0) == pytest.approx(
            expected[-1], abs=1e-12)
        assert expected[-1] < 1e-6
        assert all(b <= a + 1e-15 for a, b in zip(expected, expected[1:]))
        objectives = report.objectives()
        assert all(b <= a + 1e-15 for a, b in zip(objectives, objectives[1:]))
        assert objectives[0] <= report.initial_objective

    def test_zero_step_size_keeps_init(self):
        ratings = single_rating_instance()
        hp = Hyperparams(k=2, eta0=0.0, epochs=5)
        model, _ = fit_gd(ratings, None, hp, seed=3)
        reference = init_model(1, 1, 2, seed=3)
        assert np.array_equal(model.U, reference.U)
        assert np.array_equal(model.V, reference.V)

    def test_planted_recovery(self):
        rng = substream(0, "planted")
        u_star = rng.normal(0, 1, (20, 2))
        v_star = rng.normal(0, 1, (15, 2))
        full = np.clip(u_star @ v_star.T, -4.0, 4.0)
        mask = rng.random((20, 15)) < 0.8
        users, items = np.nonzero(mask)
        ratings = SparseRatings(20, 15, users, items, full[users, items],
                                r_min=-4.0, r_max=4.0)
        hp = Hyperparams(k=2, eta0=1e-2, epochs=2000, clamp_predictions=False)
        _, report = fit_gd(ratings, None, hp, seed=1, eval_every=50)
        assert report.records[-1].train_rmse < 0.05

    def test_divergence_detected(self):
        ratings = single_rating_instance()
        hp = Hyperparams(k=1, eta0=50.0, epochs=200)
        model0 = FactorModel(np.array([[2.0]]), np.array([[2.0]]), 1)
        model, report = fit_gd(ratings, None, hp, model0=model0)
        assert report.stop_reason == "divergence"
        assert np.all(np.isfinite(model.U)) and np.all(np.isfinite(model.V))

    def test_lazy_store_refused_for_margin(self):
        ratings, graph = social_instance()
        hp = Hyperparams(k=2, social="triplet-margin", lambda_s=1.0, epochs=2)
        with pytest.raises(ValueError, match="materialized"):
            fit_gd(ratings, lazy_triplets(graph), hp)

    def test_early_stop_fires(self):
        ratings, _ = social_instance()
        users = ratings.users[::2]
        items = ratings.items[::2]
        values = ratings.values[::2]
        train = SparseRatings(ratings.n, ratings.m, users, items, values)
        val = SparseRatings(ratings.n, ratings.m, ratings.users[1::2],
                            ratings.items[1::2], ratings.values[1::2])
        # large eta overfits quickly; validation RMSE turns upward
        hp = Hyperparams(k=6, eta0=0.05, epochs=400)
        _, report = fit_gd(train, None, hp, validation=val, seed=2, patience=3)
        assert report.stop_reason == "early-stop"
        assert len(report.records) < 400


class TestFitSgd:
    def test_full_enumeration_equals_gd(self):
        ratings, graph = social_instance()
        store = extract_triplets(graph)
        hp = Hyperparams(k=3, social="triplet-margin", lambda_s=1.5,
                         lambda_u=0.1, lambda_v=0.1, eta0=0.01, epochs=25,
                         batch_size=store.total)
        gd_model, gd_report = fit_gd(ratings, store, hp, seed=5)
        sgd_model, sgd_report = fit_sgd(ratings, store, hp, seed=5,
                                        sample_mode="enumerate")
        assert np.array_equal(gd_model.U, sgd_model.U)
        assert np.array_equal(gd_model.V, sgd_model.V)
        assert gd_report.signature() == sgd_report.signature()

    def test_empty_constraints_match_plain_mf(self):
        ratings, _ = social_instance()
        graph = SocialGraph.from_edges(ratings.n, [(0, 1), (2, 3)], [])
        store = extract_triplets(graph)
        hp_margin = Hyperparams(k=3, social="triplet-margin", lambda_s=2.0,
                                eta0=0.01, epochs=20)
        hp_plain = hp_margin.replace(social="none", lambda_s=0.0)
        a, _ = fit_sgd(ratings, store, hp_margin, seed=7)
        b, _ = fit_gd(ratings, None, hp_plain, seed=7)
        assert np.max(np.abs(a.U - b.U)) <= 1e-12
        assert np.max(np.abs(a.V - b.V)) <= 1e-12

    def test_single_triplet_estimator_unbiased(self):
        # hub user 0 with four trusted and two distrusted friends: the eight
        # overlapping constraints keep the single-draw dispersion low enough
        # for a 10k-draw Monte Carlo check
        graph = SocialGraph.from_edges(
            7, [(0, 1), (0, 3), (0, 5), (0, 6)], [(0, 2), (0, 4)])
        store = extract_triplets(graph)
        hp = Hyperparams(k=3, social="triplet-margin", lambda_s=1.0)
        rng = substream(123, "unbiased")
        U = rng.normal(0, 0.5, (graph.n, 3))
        full = social_gradient(U, store, hp)
        acc = np.zeros_like(U)
        draws = 10_000
        batch = sample_triplets(store, rng, draws)
        for row in range(draws):
            acc += triplet_batch_gradient(U, batch[row : row + 1], hp, hp.lambda_s)
        mean = acc / draws
        rel = np.linalg.norm(mean - full) / np.linalg.norm(full)
        assert rel < 0.02

    def test_batch_size_exceeding_constraints_rejected(self):
        ratings, graph = social_instance()
        store = extract_triplets(graph)
        hp = Hyperparams(k=2, social="triplet-margin", lambda_s=1.0,
                         batch_size=store.total + 1, epochs=1)
        with pytest.raises(ValueError, match="exceeds"):
            fit_sgd(ratings, store, hp)

    def test_lazy_sampling_supported(self):
        ratings, graph = social_instance()
        store = lazy_triplets(graph)
        hp = Hyperparams(k=2, social="triplet-margin", lambda_s=1.0,
                         batch_size=8, epochs=5)
        model, report = fit_sgd(ratings, store, hp, seed=1)
        assert report.stop_reason == "max-iters"
        assert np.all(np.isfinite(model.U))

    def test_paper_literal_scaling_shrinks_social_step(self):
        ratings, graph = social_instance()
        store = extract_triplets(graph)
        base = Hyperparams(k=2, social="triplet-margin", lambda_s=5.0,
                           batch_size=4, epochs=1, eta0=0.1)
        literal = base.replace(sign_convention="paper-literal")
        m_default, _ = fit_sgd(ratings, store, base, seed=9)
        m_literal, _ = fit_sgd(ratings, store, literal, seed=9)
        plain, _ = fit_sgd(ratings, store, base.replace(lambda_s=0.0), seed=9)
        step_default = np.linalg.norm(m_default.U - plain.U)
        step_literal = np.linalg.norm(m_literal.U - plain.U)
        assert step_literal < step_default or step_default == 0.0


class TestDeterminism:
    def test_equal_seeds_equal_reports(self):
        ratings, graph = social_instance()
        store = extract_triplets(graph)
        hp = Hyperparams(k=3, social="triplet-margin", lambda_s=1.0,
                         batch_size=8, epochs=15, eta0=0.01)
        m1, r1 = fit_sgd(ratings, store, hp, seed=42)
        m2, r2 = fit_sgd(ratings, store, hp, seed=42)
        assert np.array_equal(m1.U, m2.U) and np.array_equal(m1.V, m2.V)
        assert r1.signature() == r2.signature()

    def test_different_seeds_differ(self):
        ratings, graph = social_instance()
        store = extract_triplets(graph)
        hp = Hyperparams(k=3, social="triplet-margin", lambda_s=1.0,
                         batch_size=8, epochs=15, eta0=0.01)
        m1, _ = fit_sgd(ratings, store, hp, seed=1)
        m2, _ = fit_sgd(ratings, store, hp, seed=2)
        assert not np.array_equal(m1.U, m2.U)
