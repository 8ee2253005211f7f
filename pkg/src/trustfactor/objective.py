"""Loss functions, the social triplet term, full objective, analytic gradients.

Everything here works per-triplet on the three touched rows of U; no n x n
auxiliary matrix is ever formed.
"""

from __future__ import annotations

import numpy as np

from .data import (
    MATERIALIZED,
    FactorModel,
    Hyperparams,
    SparseRatings,
    TripletStore,
)

HINGE = "hinge"
LOGISTIC = "logistic"
FIGURE1 = "figure1"
PAPER_LITERAL = "paper-literal"


def _sigmoid(x):
    """Numerically stable logistic function, scalar or array."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def loss_value(kind: str, z: float) -> float:
    """Margin penalty at argument z.

    hinge: max(0, 1 - z). logistic: log(1 + exp(-z)), computed stably for
    large |z|.
    """
    if kind == HINGE:
        return max(0.0, 1.0 - float(z))
    if kind == LOGISTIC:
        return float(np.logaddexp(0.0, -float(z)))
    raise ValueError(f"unknown loss kind {kind!r}")


def _loss_values(kind, z):
    if kind == HINGE:
        return np.maximum(0.0, 1.0 - z)
    return np.logaddexp(0.0, -z)


def _loss_slope(kind, z):
    """d loss / dz. Hinge uses the 0 subgradient at the kink z = 1."""
    if kind == HINGE:
        return -(z < 1.0).astype(np.float64)
    return -_sigmoid(-z)


def margin_argument(U, i, j, k, convention: str = FIGURE1) -> float:
    """Signed squared-distance gap of one triplet under the convention.

    figure1:       z = ||U_i - U_k||^2 - ||U_i - U_j||^2
    paper-literal: z = ||U_i - U_j||^2 - ||U_i - U_k||^2
    """
    dij = float(np.sum((U[i] - U[j]) ** 2))
    dik = float(np.sum((U[i] - U[k]) ** 2))
    if convention == FIGURE1:
        return dik - dij
    if convention == PAPER_LITERAL:
        return dij - dik
    raise ValueError(f"unknown sign convention {convention!r}")


def triplet_term(U, triplet, kind: str = HINGE, convention: str = FIGURE1) -> float:
    """Penalty contributed by one (i, j, k) constraint."""
    i, j, k = triplet
    return loss_value(kind, margin_argument(U, i, j, k, convention))


def trace_identity_check(U, triplet) -> float:
    """Tr(C U U^T) from the six nonzero entries of the per-triplet C matrix.

    C has C[i,k] = C[k,i] = C[j,j] = 1 and C[k,k] = C[i,j] = C[j,i] = -1;
    the trace collapses to ||U_i - U_j||^2 - ||U_i - U_k||^2.
    """
    i, j, k = triplet
    ui, uj, uk = U[i], U[j], U[k]
    return float(2.0 * (ui @ uk) + uj @ uj - uk @ uk - 2.0 * (ui @ uj))


def _margin_arguments(U, i_idx, j_idx, k_idx, convention):
    dij = np.sum((U[i_idx] - U[j_idx]) ** 2, axis=1)
    dik = np.sum((U[i_idx] - U[k_idx]) ** 2, axis=1)
    if convention == FIGURE1:
        return dik - dij
    if convention == PAPER_LITERAL:
        return dij - dik
    raise ValueError(f"unknown sign convention {convention!r}")


def social_objective(U, store: TripletStore | None, hp: Hyperparams) -> float:
    """Value of the social term alone (0 for the 'none' variant)."""
    if hp.social == "none":
        return 0.0
    if store is None:
        raise ValueError("social term requires a triplet store (carrying the graph)")
    graph = store.graph
    if hp.social == "trust-pull":
        edges = graph.trust_edge_array
        if len(edges) == 0:
            return 0.0
        d = U[edges[:, 0]] - U[edges[:, 1]]
        return 0.5 * hp.alpha * float(np.sum(d * d))
    if hp.social == "distrust-push":
        edges = graph.distrust_edge_array
        if len(edges) == 0:
            return 0.0
        d = U[edges[:, 0]] - U[edges[:, 1]]
        return -0.5 * hp.beta * float(np.sum(d * d))
    # triplet-margin; empty constraint set contributes nothing (no division)
    if store.total == 0:
        return 0.0
    acc = 0.0
    for i_idx, j_idx, k_idx in store.iter_blocks():
        z = _margin_arguments(U, i_idx, j_idx, k_idx, hp.sign_convention)
        acc += float(np.sum(_loss_values(hp.loss, z)))
    return hp.lambda_s / store.total * acc


def objective_value(model: FactorModel, ratings: SparseRatings,
                    store: TripletStore | None, hp: Hyperparams) -> float:
    """Full training objective.

    0.5 * sum of squared residuals over observed ratings
    + lambda_u/2 ||U||_F^2 + lambda_v/2 ||V||_F^2 + social term.
    Residuals use raw (unclamped) predictions.
    """
    U, V = model.U, model.V
    e = np.einsum("ij,ij->i", U[ratings.users], V[ratings.items]) - ratings.values
    value = 0.5 * float(e @ e)
    value += 0.5 * hp.lambda_u * float(np.sum(U * U))
    value += 0.5 * hp.lambda_v * float(np.sum(V * V))
    return value + social_objective(U, store, hp)


def triplet_batch_gradient(U, triplets: np.ndarray, hp: Hyperparams, scale: float) -> np.ndarray:
    """Gradient of `scale * sum of triplet penalties` over the given batch.

    Each triplet with nonzero slope w touches exactly three rows:
      row i += scale * w * dz/dU_i,  likewise for j and k,
    with dz computed under the active sign convention.
    """
    g = np.zeros_like(U)
    if len(triplets) == 0:
        return g
    i_idx, j_idx, k_idx = triplets[:, 0], triplets[:, 1], triplets[:, 2]
    ui, uj, uk = U[i_idx], U[j_idx], U[k_idx]
    z = _margin_arguments(U, i_idx, j_idx, k_idx, hp.sign_convention)
    w = _loss_slope(hp.loss, z) * scale
    sign = 1.0 if hp.sign_convention == FIGURE1 else -1.0
    # figure1 partials: dz/dU_i = 2(U_j - U_k), dz/dU_j = 2(U_i - U_j),
    # dz/dU_k = 2(U_k - U_i); paper-literal negates all three.
    coeff = (sign * 2.0 * w)[:, None]
    np.add.at(g, i_idx, coeff * (uj - uk))
    np.add.at(g, j_idx, coeff * (ui - uj))
    np.add.at(g, k_idx, coeff * (uk - ui))
    return g


def social_gradient(U, store: TripletStore | None, hp: Hyperparams) -> np.ndarray:
    """Gradient of the social term with respect to U (full, not sampled)."""
    if hp.social == "none":
        return np.zeros_like(U)
    if store is None:
        raise ValueError("social term requires a triplet store (carrying the graph)")
    graph = store.graph
    if hp.social in ("trust-pull", "distrust-push"):
        weight = hp.alpha if hp.social == "trust-pull" else -hp.beta
        edges = graph.trust_edge_array if hp.social == "trust-pull" else graph.distrust_edge_array
        g = np.zeros_like(U)
        if len(edges):
            d = U[edges[:, 0]] - U[edges[:, 1]]
            np.add.at(g, edges[:, 0], weight * d)
            np.add.at(g, edges[:, 1], -weight * d)
        return g
    if store.total == 0:
        return np.zeros_like(U)
    if store.mode != MATERIALIZED:
        raise ValueError("full gradient requires materialized triplets")
    return triplet_batch_gradient(U, store.triplets, hp, hp.lambda_s / store.total)


def rating_gradients(model: FactorModel, ratings: SparseRatings):
    """Gradients of the squared-residual term for U and V."""
    U, V = model.U, model.V
    uu, ii = ratings.users, ratings.items
    e = np.einsum("ij,ij->i", U[uu], V[ii]) - ratings.values
    gU = np.zeros_like(U)
    gV = np.zeros_like(V)
    np.add.at(gU, uu, e[:, None] * V[ii])
    np.add.at(gV, ii, e[:, None] * U[uu])
    return gU, gV


def grad(model: FactorModel, ratings: SparseRatings,
         store: TripletStore | None, hp: Hyperparams):
    """Full analytic gradient of the objective: (dL/dU, dL/dV)."""
    gU, gV = rating_gradients(model, ratings)
    gU += hp.lambda_u * model.U
    gV += hp.lambda_v * model.V
    gU += social_gradient(model.U, store, hp)
    return gU, gV
