import math

import numpy as np
import pytest

from trustfactor.data import (
    FactorModel,
    Hyperparams,
    SocialGraph,
    SparseRatings,
    extract_triplets,
    lazy_triplets,
)
from trustfactor.objective import (
    grad,
    loss_value,
    margin_argument,
    objective_value,
    social_gradient,
    trace_identity_check,
    triplet_term,
)

from conftest import random_graph, random_ratings


def dense_trace(U, triplet):
    """Oracle: build the full C matrix and take the actual matrix trace."""
    i, j, k = triplet
    n = U.shape[0]
    C = np.zeros((n, n))
    C[i, k] = C[k, i] = C[j, j] = 1.0
    C[k, k] = C[i, j] = C[j, i] = -1.0
    return float(np.trace(C @ U @ U.T))


def finite_difference_grad(model, ratings, store, hp, h=1e-5):
    """Oracle: central differences over every entry of U and V."""
    gU = np.zeros_like(model.U)
    gV = np.zeros_like(model.V)
    for arr, out in ((model.U, gU), (model.V, gV)):
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            up = objective_value(model, ratings, store, hp)
            arr[idx] = orig - h
            down = objective_value(model, ratings, store, hp)
            arr[idx] = orig
            out[idx] = (up - down) / (2 * h)
            it.iternext()
    return gU, gV


def small_instance(seed, social="triplet-margin", loss="hinge", convention="figure1"):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 11))
    m = int(rng.integers(3, 9))
    k = int(rng.integers(1, 5))
    ratings = random_ratings(rng, n, m, density=0.5)
    while True:
        trust, distrust = [], []
        for u in range(n):
            for v in range(n):
                if u == v:
                    continue
                draw = rng.random()
                if draw < 0.25:
                    trust.append((u, v))
                elif draw < 0.5:
                    distrust.append((u, v))
        graph = SocialGraph.from_edges(n, trust, distrust)
        store = extract_triplets(graph)
        if 1 <= store.total <= 30:
            break
    hp = Hyperparams(
        k=k,
        lambda_u=float(rng.uniform(0.05, 1.5)),
        lambda_v=float(rng.uniform(0.05, 1.5)),
        lambda_s=float(rng.uniform(0.1, 2.0)),
        alpha=float(rng.uniform(0.1, 1.0)),
        beta=float(rng.uniform(0.1, 1.0)),
        loss=loss,
        sign_convention=convention,
        social=social,
    )
    model = FactorModel(rng.normal(0, 1.0, (n, k)), rng.normal(0, 1.0, (m, k)), k)
    if social == "triplet-margin" and loss == "hinge" and store.total:
        # keep every margin argument away from the hinge kink so central
        # differences stay valid
        for _ in range(40):
            z = np.array([
                margin_argument(model.U, i, j, kk, convention)
                for i, j, kk in store.triplets.tolist()
            ])
            if np.all(np.abs(z - 1.0) > 1e-3):
                break
            model.U *= 1.017
    return model, ratings, store, hp


class TestLossValue:
    def test_hinge_at_margin(self):
        assert loss_value("hinge", 1.0) == 0.0

    def test_logistic_at_zero(self):
        assert loss_value("logistic", 0.0) == pytest.approx(math.log(2), abs=1e-12)

    def test_hinge_violation(self):
        assert loss_value("hinge", -0.5) == 1.5

    def test_logistic_stable_at_extremes(self):
        assert loss_value("logistic", 1e4) == 0.0
        assert loss_value("logistic", -1e4) == pytest.approx(1e4)
        assert math.isfinite(loss_value("logistic", -750.0))

    def test_properties(self):
        # convex, non-negative, non-increasing in z
        for kind in ("hinge", "logistic"):
            zs = np.linspace(-5, 5, 101)
            vals = [loss_value(kind, z) for z in zs]
            assert all(v >= 0 for v in vals)
            assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_hinge_zero_iff_margin_met(self):
        assert loss_value("hinge", 1.0 + 1e-9) == 0.0
        assert loss_value("hinge", 1.0 - 1e-9) > 0.0
        assert loss_value("logistic", 100.0) >= 0.0


class TestTripletTerm:
    U = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])

    def test_satisfied_with_margin(self):
        # d2(i,k) = 4, d2(i,j) = 1, z = 3 -> no penalty
        assert triplet_term(self.U, (0, 1, 2)) == 0.0

    def test_equidistant(self):
        U = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        assert triplet_term(U, (0, 1, 2)) == 1.0

    def test_coincident(self):
        U = np.zeros((3, 2))
        assert triplet_term(U, (0, 1, 2)) == 1.0

    def test_paper_literal_flips_sign(self):
        z_fig = margin_argument(self.U, 0, 1, 2, "figure1")
        z_lit = margin_argument(self.U, 0, 1, 2, "paper-literal")
        assert z_fig == -z_lit == 3.0


class TestTraceIdentity:
    def test_hand_example(self):
        U = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        assert trace_identity_check(U, (0, 1, 2)) == pytest.approx(-3.0)

    def test_coincident_rows_vanish(self):
        U = np.ones((3, 2))
        assert trace_identity_check(U, (0, 1, 2)) == 0.0

    def test_against_dense_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            n = int(rng.integers(3, 9))
            k = int(rng.integers(1, 5))
            U = rng.normal(0, 2, (n, k))
            i, j, kk = rng.choice(n, size=3, replace=False)
            closed = trace_identity_check(U, (i, j, kk))
            dij = float(np.sum((U[i] - U[j]) ** 2))
            dik = float(np.sum((U[i] - U[kk]) ** 2))
            assert abs(closed - dense_trace(U, (i, j, kk))) <= 1e-10
            assert abs(closed - (dij - dik)) <= 1e-10


class TestObjectiveValue:
    def test_single_rating_zero_factors(self):
        ratings = SparseRatings.from_entries(1, 1, [(0, 0, 4.0)])
        model = FactorModel(np.zeros((1, 2)), np.zeros((1, 2)), 2)
        hp = Hyperparams(k=2)
        assert objective_value(model, ratings, None, hp) == 8.0

    def test_perfect_fit_vanishes(self):
        U = np.array([[1.0, 0.0], [0.0, 1.0]])
        V = np.array([[2.0, 3.0]])
        model = FactorModel(U, V, 2)
        ratings = SparseRatings.from_entries(2, 1, [(0, 0, 2.0), (1, 0, 3.0)])
        graph = SocialGraph.from_edges(2, [], [])
        store = extract_triplets(graph)
        hp = Hyperparams(k=2, social="triplet-margin", lambda_s=3.0)
        assert objective_value(model, ratings, store, hp) == 0.0

    def test_frobenius_only(self):
        model = FactorModel(np.eye(2), np.zeros((1, 2)), 2)
        ratings = SparseRatings(2, 1, [], [], [])
        hp = Hyperparams(k=2, lambda_u=2.0)
        assert objective_value(model, ratings, None, hp) == 2.0

    def test_empty_constraint_set_matches_none(self, rng):
        ratings = random_ratings(rng, 5, 4)
        graph = SocialGraph.from_edges(5, [(0, 1), (2, 3)], [])
        store = extract_triplets(graph)
        model = FactorModel(rng.normal(0, 1, (5, 3)), rng.normal(0, 1, (4, 3)), 3)
        base = Hyperparams(k=3, lambda_u=0.3, lambda_v=0.2)
        margin = base.replace(social="triplet-margin", lambda_s=2.0)
        assert objective_value(model, ratings, store, margin) == \
            objective_value(model, ratings, store, base)
        gU_a, gV_a = grad(model, ratings, store, margin)
        gU_b, gV_b = grad(model, ratings, store, base)
        assert np.array_equal(gU_a, gU_b) and np.array_equal(gV_a, gV_b)

    def test_translation_invariance_of_social_terms(self, rng):
        graph = random_graph(rng, n_max=8)
        store = extract_triplets(graph)
        U = rng.normal(0, 1, (graph.n, 3))
        shifted = U + rng.normal(0, 2, 3)
        for social in ("trust-pull", "distrust-push", "triplet-margin"):
            hp = Hyperparams(k=3, social=social, alpha=0.7, beta=0.4, lambda_s=1.3)
            from trustfactor.objective import social_objective
            assert social_objective(U, store, hp) == pytest.approx(
                social_objective(shifted, store, hp), rel=1e-9, abs=1e-9)

    def test_lazy_and_materialized_agree(self, rng):
        graph = random_graph(rng, n_max=9)
        ratings = random_ratings(rng, graph.n, 5)
        model = FactorModel(rng.normal(0, 1, (graph.n, 2)), rng.normal(0, 1, (5, 2)), 2)
        hp = Hyperparams(k=2, social="triplet-margin", lambda_s=1.0)
        mat = extract_triplets(graph)
        laz = lazy_triplets(graph)
        assert objective_value(model, ratings, mat, hp) == pytest.approx(
            objective_value(model, ratings, laz, hp), rel=1e-12)

    def test_non_negative_variants(self, rng):
        for _ in range(20):
            graph = random_graph(rng, n_max=7)
            ratings = random_ratings(rng, graph.n, 4)
            model = FactorModel(
                rng.normal(0, 1, (graph.n, 2)), rng.normal(0, 1, (4, 2)), 2)
            store = extract_triplets(graph)
            for social in ("none", "trust-pull", "triplet-margin"):
                hp = Hyperparams(k=2, social=social, alpha=0.5, lambda_s=1.0,
                                 lambda_u=0.1, lambda_v=0.1)
                assert objective_value(model, ratings, store, hp) >= 0.0


class TestGrad:
    def test_stationary_at_perfect_fit(self):
        U = np.array([[1.0, 0.0], [0.0, 1.0]])
        V = np.array([[2.0, 3.0]])
        model = FactorModel(U, V, 2)
        ratings = SparseRatings.from_entries(2, 1, [(0, 0, 2.0), (1, 0, 3.0)])
        hp = Hyperparams(k=2)
        gU, gV = grad(model, ratings, None, hp)
        assert np.all(gU == 0.0) and np.all(gV == 0.0)

    def test_inactive_hinge_contributes_nothing(self):
        U = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 0.0]])
        graph = SocialGraph.from_edges(3, [(0, 1)], [(0, 2)])
        store = extract_triplets(graph)
        hp = Hyperparams(k=2, social="triplet-margin", lambda_s=2.0)
        assert np.all(social_gradient(U, store, hp) == 0.0)

    def test_lazy_store_refused(self, rng):
        graph = random_graph(rng, n_max=6)
        store = lazy_triplets(graph)
        U = rng.normal(0, 1, (graph.n, 2))
        hp = Hyperparams(k=2, social="triplet-margin", lambda_s=1.0)
        if store.total:
            with pytest.raises(ValueError, match="materialized"):
                social_gradient(U, store, hp)

    @pytest.mark.parametrize("social", ["none", "trust-pull", "distrust-push", "triplet-margin"])
    @pytest.mark.parametrize("loss", ["hinge", "logistic"])
    @pytest.mark.parametrize("convention", ["figure1", "paper-literal"])
    def test_matches_finite_differences(self, social, loss, convention):
        for seed in range(3):
            model, ratings, store, hp = small_instance(
                1000 + seed, social, loss, convention)
            gU, gV = grad(model, ratings, store, hp)
            fU, fV = finite_difference_grad(model, ratings, store, hp)
            num = np.sqrt(np.sum((gU - fU) ** 2) + np.sum((gV - fV) ** 2))
            den = max(np.sqrt(np.sum(fU ** 2) + np.sum(fV ** 2)), 1e-12)
            assert num / den < 1e-6
