"""Experiment protocols: splits, grid search, social/rating consistency,
majority-vote relation prediction, distrust trade-off sweeps, and a seeded
synthetic generator that makes every protocol runnable at desk scale."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import (
    FactorModel,
    Hyperparams,
    SocialGraph,
    SparseRatings,
    TripletStore,
    extract_triplets,
    predict_many,
)
from .metrics import RankedList, average_precision, mae, ndcg_at_k, precision_recall_at_k, rmse
from .neighborhood import RatingTable, _pcc_from_dicts
from .optimize import fit_gd, fit_sgd
from .seeding import substream

DEFAULT_BIN_EDGES = (0, 20, 40, 60, 80)


def worker_count() -> int:
    """Parallelism cap from TRUSTFACTOR_THREADS (0 = auto, unset = serial)."""
    raw = os.environ.get("TRUSTFACTOR_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        return 1
    if value == 0:
        return os.cpu_count() or 1
    return max(1, value)


def _map_tasks(fn, args_list):
    """Run fn over args in order; results are position-stable regardless of
    the worker count, so outputs stay deterministic."""
    threads = worker_count()
    if threads <= 1 or len(args_list) <= 1:
        return [fn(*args) for args in args_list]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda args: fn(*args), args_list))


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitSpec:
    fraction: float = 0.9
    seed: int = 0
    repetitions: int = 5

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError("train fraction must lie strictly between 0 and 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")


def split_ratings(ratings: SparseRatings, spec: SplitSpec, repetition: int = 0):
    """Uniform random partition of the observed entries into (train, test).

    The train side gets floor(fraction * nnz) entries; the social graph is
    untouched by splitting.
    """
    rng = substream(spec.seed, f"split:{repetition}")
    n_train = int(spec.fraction * ratings.nnz)
    if n_train == 0 or n_train == ratings.nnz:
        raise ValueError(
            f"fraction {spec.fraction} leaves an empty side for {ratings.nnz} ratings")
    perm = rng.permutation(ratings.nnz)
    return ratings.subset(np.sort(perm[:n_train])), ratings.subset(np.sort(perm[n_train:]))


def cold_start_split(ratings: SparseRatings, user_fraction: float, seed: int = 0,
                     repetition: int = 0):
    """Move every rating of a sampled user subset to the test side.

    Returns (train, test, cold_users). Cold users keep their social edges;
    that is the side information meant to rescue them.
    """
    if not 0.0 < user_fraction < 1.0:
        raise ValueError("cold-start user fraction must lie strictly between 0 and 1")
    rng = substream(seed, f"coldstart:{repetition}")
    n_cold = int(user_fraction * ratings.n)
    cold = np.sort(rng.permutation(ratings.n)[:n_cold])
    cold_set = set(cold.tolist())
    is_cold = np.isin(ratings.users, cold)
    train = ratings.subset(np.flatnonzero(~is_cold))
    test = ratings.subset(np.flatnonzero(is_cold))
    return train, test, cold_set


# ---------------------------------------------------------------------------
# model evaluation helpers


def evaluate_model(model: FactorModel, test: SparseRatings, clamp: bool = True):
    """(MAE, RMSE) of the model on a held-out rating set."""
    if test.nnz == 0:
        raise ValueError("empty test set")
    pred = predict_many(model, test.users, test.items, clamp, test.r_min, test.r_max)
    pairs = list(zip(test.values.tolist(), pred.tolist()))
    return mae(pairs), rmse(pairs)


def fit_method(train: SparseRatings, store: TripletStore | None, hp: Hyperparams,
               optimizer: str = "gd", validation: SparseRatings | None = None,
               seed: int = 0, patience: int | None = None, eval_every: int = 1):
    if optimizer == "gd":
        return fit_gd(train, store, hp, validation, seed=seed,
                      patience=patience, eval_every=eval_every)
    if optimizer == "sgd":
        return fit_sgd(train, store, hp, validation, seed=seed,
                       patience=patience, eval_every=eval_every)
    raise ValueError(f"unknown optimizer {optimizer!r}")


# ---------------------------------------------------------------------------
# grid search


@dataclass
class GridResult:
    param_names: tuple
    rows: list              # (value_a, value_b, validation_rmse)
    best: tuple             # (value_a, value_b, validation_rmse)


def grid_search(train: SparseRatings, validation: SparseRatings,
                store: TripletStore | None, hp: Hyperparams,
                second_param: str, lambda_s_values, second_values,
                optimizer: str = "gd", seed: int = 0) -> GridResult:
    """Sweep (lambda_s x second_param), fit each point, score validation RMSE.

    second_param is "lambda_v" or "lambda_u". Diverged fits score +inf and
    never abort the sweep. Ties break toward smaller lambda_s, then the
    smaller second value.
    """
    if second_param not in ("lambda_v", "lambda_u"):
        raise ValueError("second_param must be lambda_v or lambda_u")
    points = [(float(a), float(b)) for a in lambda_s_values for b in second_values]
    if not points:
        raise ValueError("empty grid")

    def run_point(ls, second):
        point_hp = hp.replace(lambda_s=ls, **{second_param: second})
        model, report = fit_method(train, store, point_hp, optimizer, seed=seed)
        if report.stop_reason == "divergence":
            return ls, second, float("inf")
        try:
            _, val_rmse = evaluate_model(model, validation, point_hp.clamp_predictions)
        except ValueError:
            return ls, second, float("inf")
        return ls, second, val_rmse

    rows = _map_tasks(run_point, points)
    best = min(rows, key=lambda r: (r[2], r[0], r[1]))
    return GridResult(("lambda_s", second_param), rows, best)


# ---------------------------------------------------------------------------
# consistency of social relations and rating information


def _bin_label(count, edges):
    for lo, hi in zip(edges, edges[1:]):
        if lo <= count < hi:
            return f"[{lo},{hi})"
    return f">={edges[-1]}"


@dataclass
class ConsistencyResult:
    relation: str
    bins: dict  # label -> dict of metric name -> value, plus user count


def consistency_eval(ratings: SparseRatings, graph: SocialGraph, relation: str = "trust",
                     bin_edges=DEFAULT_BIN_EDGES) -> ConsistencyResult:
    """Rank each user's co-raters by rating similarity and score how well the
    ranking recovers the explicit trust (or distrust) list.

    Candidates are users sharing at least one co-rated item, ordered by
    Pearson similarity, descending for trust and ascending for distrust.
    Equal-similarity runs are ordered relevant-first (the optimistic ordering,
    needed because bivalent relations admit no intrinsic order). Users without
    any relevant candidate are skipped. Metrics are averaged within
    rating-count bins.
    """
    if relation not in ("trust", "distrust"):
        raise ValueError("relation must be 'trust' or 'distrust'")
    table = RatingTable(ratings)
    per_bin = {}
    for u in range(ratings.n):
        relevant_set = set(graph.trust_adj[u] if relation == "trust" else graph.distrust_adj[u])
        candidates = set()
        for item in table.by_user[u]:
            candidates.update(table.raters_of[item])
        candidates.discard(u)
        if not candidates:
            continue
        scored = []
        for v in sorted(candidates):
            w = _pcc_from_dicts(table.by_user[u], table.by_user[v], 1)
            scored.append((0.0 if w is None else w, v in relevant_set, v))
        sign = -1.0 if relation == "trust" else 1.0
        scored.sort(key=lambda t: (sign * t[0], not t[1], t[2]))
        flags = RankedList(tuple(1 if rel else 0 for _, rel, _ in scored))
        if flags.total_relevant == 0:
            continue
        row = {
            "ndcg@10": ndcg_at_k(flags, 10),
            "ndcg@20": ndcg_at_k(flags, 20),
            "recall@10": precision_recall_at_k(flags, 10)[1],
            "recall@20": precision_recall_at_k(flags, 20)[1],
            "recall@40": precision_recall_at_k(flags, 40)[1],
            "ap": average_precision(flags),
        }
        label = _bin_label(int(ratings.user_counts[u]), bin_edges)
        per_bin.setdefault(label, []).append(row)
    bins = {}
    for label, rows in per_bin.items():
        agg = {key: sum(r[key] for r in rows) / len(rows) for key in rows[0]}
        agg["map"] = agg.pop("ap")
        agg["users"] = len(rows)
        bins[label] = agg
    return ConsistencyResult(relation, bins)


# ---------------------------------------------------------------------------
# majority-vote relation prediction


@dataclass
class VoteRecord:
    source: int
    target: int
    actual: int
    n_plus: int
    n_minus: int
    predicted: int       # +1, -1, or 0 for abstain
    aligned: bool | None  # None when abstaining


@dataclass
class MajorityVoteResult:
    rows: list           # (setting, relation type, share pct, vote alignment pct or None)
    records: list
    n_heldout: int
    accuracy: float | None  # majority-prediction accuracy over non-abstentions


def majority_vote_eval(graph: SocialGraph, holdout_fraction: float = 0.3,
                       seed: int = 0) -> MajorityVoteResult:
    """Hold out a fraction of signed edges, then predict each held-out edge's
    sign from the votes of the source's trusted neighbors in the training
    graph (v trusts w counts for +, v distrusts w counts for -).

    Prediction follows the strict majority; ties (including no votes) abstain.
    Each table row carries the cell's share of held-out edges and the mean
    fraction of votes agreeing with the true sign; the tie row has no
    alignment value.
    """
    edges = [(u, v, 1) for u, v in graph.trust_edge_array.tolist()]
    edges += [(u, v, -1) for u, v in graph.distrust_edge_array.tolist()]
    if not edges:
        raise ValueError("empty social graph")
    rng = substream(seed, "vote")
    n_hold = int(round(holdout_fraction * len(edges)))
    n_hold = min(max(n_hold, 1), len(edges) - 1) if len(edges) > 1 else 1
    order = rng.permutation(len(edges))
    held = {int(idx) for idx in order[:n_hold]}
    train_trust = [[] for _ in range(graph.n)]
    train_distrust = [[] for _ in range(graph.n)]
    for idx, (u, v, sign) in enumerate(edges):
        if idx in held:
            continue
        (train_trust if sign > 0 else train_distrust)[u].append(v)
    trust_sets = [set(a) for a in train_trust]
    distrust_sets = [set(a) for a in train_distrust]

    records = []
    for idx in sorted(held):
        u, w, sign = edges[idx]
        n_plus = sum(1 for v in train_trust[u] if w in trust_sets[v])
        n_minus = sum(1 for v in train_trust[u] if w in distrust_sets[v])
        if n_plus > n_minus:
            predicted = 1
        elif n_minus > n_plus:
            predicted = -1
        else:
            predicted = 0
        aligned = (predicted == sign) if predicted != 0 else None
        records.append(VoteRecord(u, w, sign, n_plus, n_minus, predicted, aligned))

    total = len(records)
    rows = []
    for setting, sign_filter in (("n+>n-", 1), ("n+>n-", -1), ("n+<n-", 1), ("n+<n-", -1)):
        if setting == "n+>n-":
            cell = [r for r in records if r.n_plus > r.n_minus and r.actual == sign_filter]
        else:
            cell = [r for r in records if r.n_plus < r.n_minus and r.actual == sign_filter]
        share = 100.0 * len(cell) / total
        if cell:
            fractions = [
                (r.n_plus if r.actual > 0 else r.n_minus) / (r.n_plus + r.n_minus)
                for r in cell
            ]
            alignment = 100.0 * sum(fractions) / len(fractions)
        else:
            alignment = None
        rows.append((setting, "+" if sign_filter > 0 else "-", share, alignment))
    ties = [r for r in records if r.n_plus == r.n_minus]
    rows.append(("n+=n-", "any", 100.0 * len(ties) / total, None))
    decided = [r for r in records if r.predicted != 0]
    accuracy = (
        sum(1 for r in decided if r.aligned) / len(decided) if decided else None
    )
    return MajorityVoteResult(rows, records, total, accuracy)


# ---------------------------------------------------------------------------
# trading trust for distrust


@dataclass
class TradeoffResult:
    rows: list  # (method, trust fraction, distrust fraction, mae, rmse)


def _subsample_edges(edges, fraction, rng):
    count = int(round(fraction * len(edges)))
    order = rng.permutation(len(edges))
    return [tuple(edges[int(i)]) for i in sorted(order[:count])]


def distrust_tradeoff_run(ratings: SparseRatings, graph: SocialGraph, hp: Hyperparams,
                          trust_keep: float = 0.9,
                          distrust_fractions=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
                          train_fraction: float = 0.9, optimizer: str = "gd",
                          seed: int = 0) -> TradeoffResult:
    """Fix a trust subsample, sweep growing distrust subsets, and fit the
    margin model at each point against a fixed train/test split. The full
    trust graph under the trust-pull model is fitted once as the reference
    row. Distrust subsets are nested so the sweep isolates the added edges.
    """
    train, test = split_ratings(ratings, SplitSpec(train_fraction, seed, 1))
    trust_edges = graph.trust_edge_array.tolist()
    distrust_edges = graph.distrust_edge_array.tolist()
    kept_trust = _subsample_edges(trust_edges, trust_keep, substream(seed, "sweep:trust"))
    distrust_order = substream(seed, "sweep:distrust").permutation(len(distrust_edges))

    rows = []

    def run_fraction(fraction):
        count = int(round(fraction * len(distrust_edges)))
        kept = [tuple(distrust_edges[int(i)]) for i in np.sort(distrust_order[:count])]
        sub = SocialGraph.from_edges(graph.n, kept_trust, kept)
        store = extract_triplets(sub)
        point_hp = hp.replace(social="triplet-margin")
        model, _ = fit_method(train, store, point_hp, optimizer, seed=seed)
        m, r = evaluate_model(model, test, point_hp.clamp_predictions)
        return ("mf-td", trust_keep, float(fraction), m, r)

    rows.extend(_map_tasks(run_fraction, [(f,) for f in distrust_fractions]))

    full_trust = SocialGraph.from_edges(graph.n, trust_edges, [])
    ref_hp = hp.replace(social="trust-pull")
    ref_store = extract_triplets(full_trust)
    ref_model, _ = fit_method(train, ref_store, ref_hp, optimizer, seed=seed)
    m, r = evaluate_model(ref_model, test, ref_hp.clamp_predictions)
    rows.append(("mf-t", 1.0, 0.0, m, r))
    return TradeoffResult(rows)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-factor generator settings.

    Users fall into `clusters` equal groups; the planted user factors are the
    one-hot cluster indicators (requires rank >= clusters), item factors are
    integers in [item_low, item_high], so noiseless ratings are integral and
    rounding is essentially lossless. Trust edges connect users within a
    cluster, distrust edges cross clusters.

    `light_user_fraction` > 0 skews observations across users while keeping
    the overall density: that fraction of users rates at `light_density_scale`
    times the base density and the rest absorb the remainder. Lightly rating
    users are the ones social side information has to rescue.
    """

    n: int
    m: int
    rank: int
    clusters: int
    density: float
    noise_sigma: float
    n_trust: int
    n_distrust: int
    seed: int = 0
    r_min: float = 1.0
    r_max: float = 5.0
    item_low: int = 1
    item_high: int = 5
    light_user_fraction: float = 0.0
    light_density_scale: float = 1.0

    def __post_init__(self):
        if self.rank < self.clusters:
            raise ValueError("rank must be at least the cluster count")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if self.clusters < 1 or self.n < self.clusters:
            raise ValueError("need at least one user per cluster")
        if self.item_low > self.item_high:
            raise ValueError("item_low must not exceed item_high")
        if not 0.0 <= self.light_user_fraction < 1.0:
            raise ValueError("light_user_fraction must lie in [0, 1)")
        if not 0.0 <= self.light_density_scale <= 1.0:
            raise ValueError("light_density_scale must lie in [0, 1]")
        if self.light_user_fraction > 0:
            heavy = self._heavy_scale()
            if heavy * self.density > 1.0:
                raise ValueError("heavy-user density exceeds 1; lower the skew")

    def _heavy_scale(self) -> float:
        f = self.light_user_fraction
        return (1.0 - f * self.light_density_scale) / (1.0 - f)


def synth_generate(spec: SyntheticSpec):
    """Seeded synthetic instance: (ratings, graph, (U_star, V_star)).

    Ratings are clamp(round(U* V*^T + noise)) sampled at the observation
    density. Every trust edge is intra-cluster and every distrust edge is
    inter-cluster, so the social structure genuinely reflects latent
    similarity.
    """
    rng = substream(spec.seed, "synth")
    assignment = np.sort(np.arange(spec.n) % spec.clusters)
    u_star = np.zeros((spec.n, spec.rank))
    u_star[np.arange(spec.n), assignment] = 1.0
    v_star = rng.integers(spec.item_low, spec.item_high + 1, size=(spec.m, spec.rank)).astype(float)

    full = u_star @ v_star.T
    per_user = np.full(spec.n, spec.density)
    if spec.light_user_fraction > 0:
        n_light = int(spec.light_user_fraction * spec.n)
        light = rng.permutation(spec.n)[:n_light]
        per_user *= spec._heavy_scale()
        per_user[light] = spec.density * spec.light_density_scale
    mask = rng.random((spec.n, spec.m)) < per_user[:, None]
    users, items = np.nonzero(mask)
    noise = rng.normal(0.0, spec.noise_sigma, size=len(users)) if spec.noise_sigma > 0 else 0.0
    values = np.clip(np.rint(full[users, items] + noise), spec.r_min, spec.r_max)
    ratings = SparseRatings(spec.n, spec.m, users, items, values, spec.r_min, spec.r_max)

    members = [np.flatnonzero(assignment == c) for c in range(spec.clusters)]
    intra = [
        (int(a), int(b))
        for c in range(spec.clusters)
        for a in members[c]
        for b in members[c]
        if a != b
    ]
    inter = [
        (int(a), int(b))
        for ca in range(spec.clusters)
        for cb in range(spec.clusters)
        if ca != cb
        for a in members[ca]
        for b in members[cb]
    ]
    if spec.n_trust > len(intra):
        raise ValueError(f"cannot place {spec.n_trust} trust edges; only {len(intra)} intra-cluster pairs")
    if spec.n_distrust > len(inter):
        raise ValueError(f"cannot place {spec.n_distrust} distrust edges; only {len(inter)} inter-cluster pairs")
    trust_idx = rng.choice(len(intra), size=spec.n_trust, replace=False)
    distrust_idx = rng.choice(len(inter), size=spec.n_distrust, replace=False)
    trust_edges = [intra[int(i)] for i in np.sort(trust_idx)]
    distrust_edges = [inter[int(i)] for i in np.sort(distrust_idx)]
    graph = SocialGraph.from_edges(spec.n, trust_edges, distrust_edges)
    return ratings, graph, (u_star, v_star)
