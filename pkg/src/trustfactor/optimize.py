"""Batch gradient descent and mini-batch SGD over the factorization objective."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import (
    LAZY,
    FactorModel,
    Hyperparams,
    SparseRatings,
    TripletStore,
    init_model,
    predict_many,
    sample_triplets,
)
from .metrics import mae, rmse
from .objective import (
    PAPER_LITERAL,
    objective_value,
    rating_gradients,
    social_gradient,
    triplet_batch_gradient,
)
from .seeding import substream

DIVERGENCE_LIMIT = 1e8

STOP_MAX_ITERS = "max-iters"
STOP_EARLY = "early-stop"
STOP_DIVERGENCE = "divergence"


@dataclass(frozen=True)
class StepSchedule:
    """Step size eta_t for t >= 1: constant eta0 or eta0 / sqrt(t)."""

    kind: str = "constant"
    eta0: float = 0.01

    def __post_init__(self):
        if self.kind not in ("constant", "inverse-sqrt"):
            raise ValueError(f"unknown schedule {self.kind!r}")

    def rate(self, t: int) -> float:
        if self.kind == "constant":
            return self.eta0
        return self.eta0 / np.sqrt(t)


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    train_rmse: float
    val_rmse: float | None = None
    val_mae: float | None = None
    elapsed: float = 0.0


@dataclass
class FitReport:
    """Per-iteration telemetry plus why training stopped."""

    initial_objective: float
    records: list = field(default_factory=list)
    stop_reason: str = STOP_MAX_ITERS

    def objectives(self):
        return [r.objective for r in self.records]

    def val_rmses(self):
        return [r.val_rmse for r in self.records if r.val_rmse is not None]

    def signature(self):
        """Deterministic content (everything except wall-clock)."""
        return (
            self.initial_objective,
            self.stop_reason,
            tuple(
                (r.iteration, r.objective, r.train_rmse, r.val_rmse, r.val_mae)
                for r in self.records
            ),
        )


def early_stop_monitor(val_rmse_window, patience: int) -> bool:
    """True once validation RMSE has failed to improve for `patience`
    consecutive evaluations (patience 0 stops at the first non-improvement)."""
    threshold = max(int(patience), 1)
    best = np.inf
    streak = 0
    for value in val_rmse_window:
        if value < best:
            best = value
            streak = 0
        else:
            streak += 1
            if streak >= threshold:
                return True
    return False


def _evaluate(model, ratings, clamp, r_min, r_max):
    pred = predict_many(model, ratings.users, ratings.items, clamp, r_min, r_max)
    pairs = list(zip(ratings.values.tolist(), pred.tolist()))
    return mae(pairs), rmse(pairs)


def _diverged(model) -> bool:
    return (
        not np.all(np.isfinite(model.U))
        or not np.all(np.isfinite(model.V))
        or max(np.abs(model.U).max(initial=0.0), np.abs(model.V).max(initial=0.0)) > DIVERGENCE_LIMIT
    )


def _run(ratings, store, hp, validation, seed, social_grad_fn,
         patience, eval_every, model0):
    if model0 is not None:
        model = model0.copy()
    else:
        model = init_model(ratings.n, ratings.m, hp.k, seed)
    schedule = StepSchedule(hp.schedule, hp.eta0)
    report = FitReport(initial_objective=objective_value(model, ratings, store, hp))
    start = time.perf_counter()
    val_history = []
    previous = None
    for t in range(1, hp.epochs + 1):
        previous = (model.U.copy(), model.V.copy())
        gU, gV = rating_gradients(model, ratings)
        gU += hp.lambda_u * model.U
        gV += hp.lambda_v * model.V
        gU += social_grad_fn(model.U, t)
        eta = schedule.rate(t)
        model.U -= eta * gU
        model.V -= eta * gV
        if _diverged(model):
            model.U, model.V = previous
            report.stop_reason = STOP_DIVERGENCE
            break
        if t % eval_every == 0 or t == hp.epochs:
            train_mae_, train_rmse_ = _evaluate(
                model, ratings, hp.clamp_predictions, ratings.r_min, ratings.r_max)
            rec = IterationRecord(
                iteration=t,
                objective=objective_value(model, ratings, store, hp),
                train_rmse=train_rmse_,
                elapsed=time.perf_counter() - start,
            )
            if validation is not None and validation.nnz:
                rec.val_mae, rec.val_rmse = _evaluate(
                    model, validation, hp.clamp_predictions, ratings.r_min, ratings.r_max)
                val_history.append(rec.val_rmse)
            report.records.append(rec)
            if (
                patience is not None
                and val_history
                and early_stop_monitor(val_history, patience)
            ):
                report.stop_reason = STOP_EARLY
                break
    return model, report


def fit_gd(ratings: SparseRatings, store: TripletStore | None, hp: Hyperparams,
           validation: SparseRatings | None = None, seed: int = 0,
           patience: int | None = None, eval_every: int = 1,
           model0: FactorModel | None = None):
    """Full-gradient descent; returns (model, report).

    The triplet-margin social term needs a materialized store here, since the
    full gradient enumerates every constraint.
    """
    if hp.social == "triplet-margin" and store is not None and store.mode == LAZY:
        raise ValueError("full gradient requires materialized triplets")

    def social_grad_fn(U, t):
        return social_gradient(U, store, hp)

    return _run(ratings, store, hp, validation, seed, social_grad_fn,
                patience, eval_every, model0)


def fit_sgd(ratings: SparseRatings, store: TripletStore | None, hp: Hyperparams,
            validation: SparseRatings | None = None, seed: int = 0,
            sample_seed: int | None = None, patience: int | None = None,
            eval_every: int = 1, model0: FactorModel | None = None,
            sample_mode: str = "uniform"):
    """Mini-batch SGD: per iteration, B triplets sampled uniformly drive the
    social term; the rating residual and Frobenius gradients stay exact.

    The batch gradient is scaled by lambda_s / B, the unbiased estimate of the
    full term; under the paper-literal fidelity convention the scaling is
    lambda_s / (B * total) instead. `sample_mode="enumerate"` replaces
    sampling with the full constraint set, which reduces each step to the
    batch GD update.
    """
    if sample_mode not in ("uniform", "enumerate"):
        raise ValueError(f"unknown sample_mode {sample_mode!r}")
    use_triplets = hp.social == "triplet-margin" and store is not None and store.total > 0
    if use_triplets:
        if sample_mode == "uniform" and hp.batch_size > store.total:
            raise ValueError(
                f"batch_size {hp.batch_size} exceeds constraint count {store.total}")
        if sample_mode == "enumerate" and store.mode == LAZY:
            raise ValueError("enumeration requires materialized triplets")
    rng = substream(seed if sample_seed is None else sample_seed, "sgd")

    def social_grad_fn(U, t):
        if not use_triplets:
            return social_gradient(U, store, hp)
        if sample_mode == "enumerate":
            batch = store.triplets
        else:
            batch = sample_triplets(store, rng, hp.batch_size)
        scale = hp.lambda_s / len(batch)
        if hp.sign_convention == PAPER_LITERAL:
            scale /= store.total
        return triplet_batch_gradient(U, batch, hp, scale)

    return _run(ratings, store, hp, validation, seed, social_grad_fn,
                patience, eval_every, model0)
