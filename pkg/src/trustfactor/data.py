"""Core data model: sparse ratings, signed social graph, triplets, latent factors.

All containers are immutable after construction (numpy buffers are marked
read-only) except FactorModel, which is mutated by exactly one fit at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .seeding import substream

MATERIALIZED = "materialized"
LAZY = "lazy"

LOSS_KINDS = ("hinge", "logistic")
SIGN_CONVENTIONS = ("figure1", "paper-literal")
SCHEDULES = ("constant", "inverse-sqrt")
SOCIAL_TERMS = ("none", "trust-pull", "distrust-push", "triplet-margin")


def _frozen_array(values, dtype):
    arr = np.ascontiguousarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SparseRatings:
    """Partially observed user-item rating matrix in coordinate form.

    ``users[t], items[t], values[t]`` is the t-th observed entry. Indices are
    dense and 0-based; the mapping from external string ids lives in the io
    layer.
    """

    n: int
    m: int
    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    r_min: float = 1.0
    r_max: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "users", _frozen_array(self.users, np.int64))
        object.__setattr__(self, "items", _frozen_array(self.items, np.int64))
        object.__setattr__(self, "values", _frozen_array(self.values, np.float64))
        if not (len(self.users) == len(self.items) == len(self.values)):
            raise ValueError("users, items, values must have equal length")
        if self.r_min >= self.r_max:
            raise ValueError("r_min must be smaller than r_max")
        if self.nnz:
            if self.users.min() < 0 or self.users.max() >= self.n:
                raise ValueError("user index out of range")
            if self.items.min() < 0 or self.items.max() >= self.m:
                raise ValueError("item index out of range")
            keys = self.users * self.m + self.items
            if len(np.unique(keys)) != self.nnz:
                raise ValueError("duplicate (user, item) pair")
            lo, hi = self.values.min(), self.values.max()
            if lo < self.r_min or hi > self.r_max:
                raise ValueError(
                    f"rating outside [{self.r_min}, {self.r_max}]: saw [{lo}, {hi}]"
                )

    @classmethod
    def from_entries(cls, n, m, entries, r_min=1.0, r_max=5.0):
        """Build from an iterable of (user, item, rating) tuples."""
        entries = list(entries)
        users = [e[0] for e in entries]
        items = [e[1] for e in entries]
        values = [e[2] for e in entries]
        return cls(n, m, users, items, values, r_min, r_max)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def entries(self):
        return list(zip(self.users.tolist(), self.items.tolist(), self.values.tolist()))

    @cached_property
    def global_mean(self) -> float:
        return float(self.values.mean()) if self.nnz else 0.5 * (self.r_min + self.r_max)

    @cached_property
    def user_counts(self) -> np.ndarray:
        counts = np.zeros(self.n, dtype=np.int64)
        np.add.at(counts, self.users, 1)
        counts.setflags(write=False)
        return counts

    @cached_property
    def user_means(self) -> np.ndarray:
        """Mean rating per user; users with no ratings get the global mean."""
        sums = np.zeros(self.n)
        np.add.at(sums, self.users, self.values)
        counts = self.user_counts
        means = np.where(counts > 0, sums / np.maximum(counts, 1), self.global_mean)
        means.setflags(write=False)
        return means

    def subset(self, index: np.ndarray) -> "SparseRatings":
        """Ratings restricted to the given entry positions (same n, m)."""
        index = np.asarray(index, dtype=np.int64)
        return SparseRatings(
            self.n, self.m,
            self.users[index], self.items[index], self.values[index],
            self.r_min, self.r_max,
        )


@dataclass(frozen=True)
class SocialGraph:
    """Signed directed graph over users: per-user trust and distrust lists.

    Adjacency order is preserved from construction; it defines the
    deterministic order of extracted triplets.
    """

    n: int
    trust_adj: tuple
    distrust_adj: tuple

    def __post_init__(self):
        object.__setattr__(self, "trust_adj", tuple(tuple(a) for a in self.trust_adj))
        object.__setattr__(self, "distrust_adj", tuple(tuple(a) for a in self.distrust_adj))
        if len(self.trust_adj) != self.n or len(self.distrust_adj) != self.n:
            raise ValueError("adjacency length must equal user count")
        for u in range(self.n):
            plus, minus = self.trust_adj[u], self.distrust_adj[u]
            for v in plus + minus:
                if not 0 <= v < self.n:
                    raise ValueError(f"neighbor index {v} out of range")
                if v == u:
                    raise ValueError(f"self-edge at user {u}")
            if len(set(plus)) != len(plus) or len(set(minus)) != len(minus):
                raise ValueError(f"duplicate neighbor for user {u}")
            if set(plus) & set(minus):
                raise ValueError(f"user {u} both trusts and distrusts {set(plus) & set(minus)}")

    @classmethod
    def from_edges(cls, n, trust_edges=(), distrust_edges=()):
        """Build from (source, target) edge lists, preserving input order."""
        plus = [[] for _ in range(n)]
        minus = [[] for _ in range(n)]
        for u, v in trust_edges:
            plus[u].append(v)
        for u, v in distrust_edges:
            minus[u].append(v)
        return cls(n, plus, minus)

    @cached_property
    def trust_edge_array(self) -> np.ndarray:
        """(E, 2) array of directed trust edges in adjacency order."""
        edges = [(u, v) for u in range(self.n) for v in self.trust_adj[u]]
        return np.asarray(edges, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def distrust_edge_array(self) -> np.ndarray:
        edges = [(u, v) for u in range(self.n) for v in self.distrust_adj[u]]
        return np.asarray(edges, dtype=np.int64).reshape(-1, 2)

    @property
    def trust_count(self) -> int:
        return sum(len(a) for a in self.trust_adj)

    @property
    def distrust_count(self) -> int:
        return sum(len(a) for a in self.distrust_adj)


@dataclass(frozen=True)
class TripletStore:
    """The social constraint set: (i, j, k) with i trusting j and distrusting k.

    Materialized mode holds the full (total, 3) array; lazy mode keeps only
    per-user counts c(u) = |N+(u)| * |N-(u)| and samples on demand, so the
    full set is never stored.
    """

    mode: str
    graph: SocialGraph
    counts: np.ndarray
    total: int
    triplets: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in (MATERIALIZED, LAZY):
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "counts", _frozen_array(self.counts, np.int64))
        if self.triplets is not None:
            object.__setattr__(self, "triplets", _frozen_array(self.triplets, np.int64))
        if int(self.counts.sum()) != self.total:
            raise ValueError("per-user counts do not sum to total")
        if self.mode == MATERIALIZED and len(self.triplets) != self.total:
            raise ValueError("materialized triplet count mismatch")

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return np.cumsum(self.counts)

    def iter_blocks(self):
        """Yield (i, j, k) index-array blocks covering the whole set.

        Materialized: one block. Lazy: one block per user with c(u) > 0, in
        the same deterministic order, without keeping more than one user's
        cartesian product alive.
        """
        if self.total == 0:
            return
        if self.mode == MATERIALIZED:
            yield self.triplets[:, 0], self.triplets[:, 1], self.triplets[:, 2]
            return
        for u in range(self.graph.n):
            plus = self.graph.trust_adj[u]
            minus = self.graph.distrust_adj[u]
            if not plus or not minus:
                continue
            j = np.repeat(np.asarray(plus, dtype=np.int64), len(minus))
            k = np.tile(np.asarray(minus, dtype=np.int64), len(plus))
            yield np.full(len(j), u, dtype=np.int64), j, k


def _triplet_counts(graph: SocialGraph) -> np.ndarray:
    return np.asarray(
        [len(graph.trust_adj[u]) * len(graph.distrust_adj[u]) for u in range(graph.n)],
        dtype=np.int64,
    )


def extract_triplets(graph: SocialGraph) -> TripletStore:
    """Materialize every (i, j, k) with j in N+(i) and k in N-(i).

    Order is deterministic: i ascending, then j, then k in adjacency order.
    """
    counts = _triplet_counts(graph)
    total = int(counts.sum())
    rows = np.empty((total, 3), dtype=np.int64)
    pos = 0
    for u in range(graph.n):
        c = counts[u]
        if c == 0:
            continue
        plus = np.asarray(graph.trust_adj[u], dtype=np.int64)
        minus = np.asarray(graph.distrust_adj[u], dtype=np.int64)
        rows[pos : pos + c, 0] = u
        rows[pos : pos + c, 1] = np.repeat(plus, len(minus))
        rows[pos : pos + c, 2] = np.tile(minus, len(plus))
        pos += c
    return TripletStore(MATERIALIZED, graph, counts, total, rows)


def lazy_triplets(graph: SocialGraph) -> TripletStore:
    """Constraint set in lazy mode: counts only, sampling without enumeration."""
    counts = _triplet_counts(graph)
    return TripletStore(LAZY, graph, counts, int(counts.sum()))


def sample_triplets(store: TripletStore, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw `size` triplets i.i.d. uniform over the constraint set.

    Lazy mode picks user u with probability c(u)/total, then j uniform in
    N+(u) and k uniform in N-(u), which is exactly the uniform marginal over
    the full cartesian set.
    """
    if store.total == 0:
        raise ValueError("no social constraints")
    if store.mode == MATERIALIZED:
        idx = rng.integers(0, store.total, size=size)
        return store.triplets[idx]
    flat = rng.integers(0, store.total, size=size)
    users = np.searchsorted(store._cumulative, flat, side="right")
    out = np.empty((size, 3), dtype=np.int64)
    for row, u in enumerate(users):
        plus = store.graph.trust_adj[u]
        minus = store.graph.distrust_adj[u]
        out[row, 0] = u
        out[row, 1] = plus[rng.integers(0, len(plus))]
        out[row, 2] = minus[rng.integers(0, len(minus))]
    return out


def sample_triplet(store: TripletStore, rng: np.random.Generator):
    """Single uniform draw; see sample_triplets."""
    i, j, k = sample_triplets(store, rng, 1)[0]
    return int(i), int(j), int(k)


@dataclass
class FactorModel:
    """Latent factor matrices: U rows are users, V rows are items."""

    U: np.ndarray
    V: np.ndarray
    k: int
    seed: int = 0

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        if self.U.ndim != 2 or self.V.ndim != 2:
            raise ValueError("U and V must be 2-d")
        if self.U.shape[1] != self.k or self.V.shape[1] != self.k:
            raise ValueError("latent dimension mismatch")

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def m(self) -> int:
        return self.V.shape[0]

    def copy(self) -> "FactorModel":
        return FactorModel(self.U.copy(), self.V.copy(), self.k, self.seed)


INIT_SCALE = 0.01


def init_model(n: int, m: int, k: int, seed: int = 0, scale: float = INIT_SCALE) -> FactorModel:
    """Gaussian init, mean 0 and small scale, from the named 'init' stream."""
    rng = substream(seed, "init")
    return FactorModel(rng.normal(0.0, scale, (n, k)), rng.normal(0.0, scale, (m, k)), k, seed)


def predict_rating(model: FactorModel, u: int, i: int, clamp: bool = True,
                   r_min: float = 1.0, r_max: float = 5.0) -> float:
    """Dot product of user row u and item row i, optionally clipped to bounds."""
    if not 0 <= u < model.n:
        raise IndexError(f"user index {u} out of range [0, {model.n})")
    if not 0 <= i < model.m:
        raise IndexError(f"item index {i} out of range [0, {model.m})")
    raw = float(model.U[u] @ model.V[i])
    if clamp:
        return float(min(max(raw, r_min), r_max))
    return raw


def predict_many(model: FactorModel, users, items, clamp: bool = True,
                 r_min: float = 1.0, r_max: float = 5.0) -> np.ndarray:
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if len(users) and (users.min() < 0 or users.max() >= model.n):
        raise IndexError("user index out of range")
    if len(items) and (items.min() < 0 or items.max() >= model.m):
        raise IndexError("item index out of range")
    raw = np.einsum("ij,ij->i", model.U[users], model.V[items])
    if clamp:
        return np.clip(raw, r_min, r_max)
    return raw


@dataclass(frozen=True)
class Hyperparams:
    """Everything a fit needs besides the data itself.

    `social` picks the social term variant: "none", "trust-pull" (weight
    alpha), "distrust-push" (weight beta), or "triplet-margin" (weight
    lambda_s with the chosen loss and sign convention).

    `sign_convention` is the fidelity switch. "figure1" scores a triplet by
    z = d2(i,k) - d2(i,j), penalizing unless the distrusted user is farther by
    the unit margin; "paper-literal" flips the argument order and, in SGD,
    also switches the batch scaling to lambda_s / (B * total) instead of the
    unbiased lambda_s / B.
    """

    k: int = 10
    lambda_u: float = 0.0
    lambda_v: float = 0.0
    lambda_s: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    eta0: float = 0.01
    schedule: str = "constant"
    batch_size: int = 1
    epochs: int = 100
    loss: str = "hinge"
    sign_convention: str = "figure1"
    clamp_predictions: bool = True
    social: str = "none"

    def __post_init__(self):
        for name in ("lambda_u", "lambda_v", "lambda_s", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.eta0 < 0:
            raise ValueError("eta0 must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise ValueError(f"sign_convention must be one of {SIGN_CONVENTIONS}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.social not in SOCIAL_TERMS:
            raise ValueError(f"social must be one of {SOCIAL_TERMS}")

    def replace(self, **kw) -> "Hyperparams":
        from dataclasses import replace as _replace
        return _replace(self, **kw)
