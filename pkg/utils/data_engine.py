"""
Datasets, unlearning requests and keyed batch sampling.

Randomness is counter based: every draw is a pure function of
(master_seed, replica, role, step, slot), realised with numpy's Philox bit
generator. The learn, retrain and unlearn trajectories of one replica can
therefore be aligned draw by draw, and replicas can run in any order.
"""

import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.special import expit

from .exceptions import ConfigError, DomainError
from .model_zoo import (
    ConvexityClass,
    LossFamily,
    LossSpec,
    batch_grad,
    batch_loss,
    per_sample_grads,
    sample_domain,
    validate_labels,
)

logger = logging.getLogger(__name__)

UINT64_MASK = (1 << 64) - 1
DOMAIN_RTOL = 1e-9
MINIMIZER_GTOL = 1e-10


class StreamRole(IntEnum):
    TRAIN = 0
    RETRAIN = 1
    UNLEARN = 2
    COUPLE = 3
    NOISE = 4
    CHECK = 5


# -------------------- Randomness --------------------
@dataclass(frozen=True)
class CouplingStream:
    """Keyed randomness source; identical keys give identical draws."""

    master_seed: int
    replica_id: int = 0

    def generator(self, role: StreamRole, t: int, slot: int = 0) -> np.random.Generator:
        if t < 0 or slot < 0 or slot >= (1 << 32):
            raise ConfigError(f"invalid stream key step={t} slot={slot}")
        counter = np.array(
            [0, t, (int(role) << 32) | slot, self.replica_id & UINT64_MASK], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=self.master_seed & UINT64_MASK, counter=counter))

    def for_replica(self, replica_id: int) -> "CouplingStream":
        return CouplingStream(self.master_seed, replica_id)

    def noise_generator(self, release: int) -> np.random.Generator:
        return self.generator(StreamRole.NOISE, release)


# -------------------- Data --------------------
@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    data_radius: float

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=float).ravel()
        if X.shape[0] < 1:
            raise ConfigError("dataset must contain at least one sample")
        if y.shape[0] != X.shape[0]:
            raise ConfigError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("dataset contains non-finite values")
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms > self.data_radius * (1.0 + DOMAIN_RTOL)):
            worst = int(np.argmax(norms))
            raise DomainError(
                f"sample {worst} has norm {norms[worst]:.6g} outside the data ball of radius {self.data_radius:g}"
            )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.features.shape[1])

    def sample(self, i: int):
        return self.features[i], self.labels[i]

    def view(self, indices: Iterable[int]) -> "Dataset":
        idx = np.asarray(list(indices), dtype=int)
        return Dataset(self.features[idx], self.labels[idx], self.data_radius)


@dataclass(frozen=True)
class UnlearnRequest:
    indices: Tuple[int, ...]
    n: int

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ConfigError("unlearning request contains duplicate indices")
        if not idx or not (0 < len(idx) < self.n):
            raise ConfigError(f"unlearning request must satisfy 0 < m < n, got m={len(idx)}, n={self.n}")
        if idx[0] < 0 or idx[-1] >= self.n:
            raise ConfigError(f"unlearning indices must lie in [0, {self.n})")
        object.__setattr__(self, "indices", idx)

    @property
    def m(self) -> int:
        return len(self.indices)

    @property
    def removed_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.indices)] = True
        return mask

    @property
    def retained_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.removed_mask)


@dataclass(frozen=True, eq=False)
class BatchDraw:
    """b dataset indices drawn with replacement."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size < 1:
            raise ConfigError("a batch needs at least one slot")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def b(self) -> int:
        return int(self.indices.size)


def select_request(n: int, m: int, rule: str, seed: Optional[int] = None, indices=None) -> UnlearnRequest:
    """Build an UnlearnRequest with one of the selection rules first_m, random_seeded, explicit_indices."""
    if rule == "first_m":
        return UnlearnRequest(tuple(range(m)), n)
    if rule == "random_seeded":
        if seed is None:
            raise ConfigError("random_seeded selection requires a seed")
        if not (0 < m < n):
            raise ConfigError(f"unlearning request must satisfy 0 < m < n, got m={m}, n={n}")
        chosen = np.random.default_rng(seed).choice(n, size=m, replace=False)
        return UnlearnRequest(tuple(int(i) for i in chosen), n)
    if rule == "explicit_indices":
        if indices is None:
            raise ConfigError("explicit_indices selection requires an index list")
        request = UnlearnRequest(tuple(indices), n)
        if m is not None and request.m != m:
            raise ConfigError(f"m={m} but {request.m} explicit indices were given")
        return request
    raise ConfigError(f"unknown selection rule {rule!r}")


def synthesize_dataset(spec: LossSpec, n: int, seed: int) -> Dataset:
    """Seeded dataset inside the R_z ball; logistic-type labels follow a planted linear model."""
    if n < 1:
        raise ConfigError(f"dataset size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    X, _ = sample_domain(spec, rng, n)
    if spec.family == LossFamily.QUADRATIC:
        y = np.zeros(n)
    else:
        w = rng.standard_normal(spec.dimension)
        w /= max(np.linalg.norm(w), 1e-12)
        p = expit(4.0 * (X @ w) / spec.data_radius)
        hits = rng.random(n) < p
        if spec.family == LossFamily.SMOOTH_NONCONVEX:
            y = hits.astype(float)
        else:
            y = np.where(hits, 1.0, -1.0)
    logger.debug("Synthesized %s dataset n=%s d=%s seed=%s", spec.family.value, n, spec.dimension, seed)
    return Dataset(X, y, spec.data_radius)


def load_csv_dataset(path, data_radius: float, has_header: bool = True) -> Dataset:
    """One row per sample: d feature columns followed by a label column."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    frame = pd.read_csv(path, header=0 if has_header else None)
    if frame.shape[1] < 2:
        raise ConfigError(f"{path} needs at least one feature column and a label column")
    values = frame.to_numpy(dtype=float)
    logger.info("Loaded %s samples with %s features from %s", values.shape[0], values.shape[1] - 1, path)
    return Dataset(values[:, :-1], values[:, -1], float(data_radius))


def check_dataset_labels(dataset: Dataset, spec: LossSpec) -> None:
    if dataset.dimension != spec.dimension:
        raise ConfigError(f"dataset dimension {dataset.dimension} differs from loss dimension {spec.dimension}")
    validate_labels(spec, dataset.labels)


# -------------------- Batches --------------------
def sample_batch(stream: CouplingStream, source_size: int, b: int, t: int, role=StreamRole.TRAIN) -> BatchDraw:
    """b i.i.d. uniform indices in [0, source_size) from the (role, t) substream."""
    if b < 1:
        raise ConfigError(f"batch size must be >= 1, got {b}")
    if source_size < 1:
        raise ConfigError("cannot sample from an empty source")
    return BatchDraw(stream.generator(role, t).integers(0, source_size, size=b))


def sample_retained_batch(stream: CouplingStream, request: UnlearnRequest, b: int, t: int, role) -> BatchDraw:
    """Fresh uniform batch over D', returned as dataset indices."""
    retained = request.retained_indices
    local = sample_batch(stream, retained.size, b, t, role)
    return BatchDraw(retained[local.indices])


def couple_batch(
    draw_full: BatchDraw, dataset: Dataset, request: UnlearnRequest, stream: CouplingStream, t: int
) -> BatchDraw:
    """Coupled D' batch: keep retained slots, redraw removed slots uniformly from D'.

    Each redrawn slot uses its own (COUPLE, t, slot) substream, so the output
    is marginally i.i.d. uniform over D'.
    """
    if request.n != dataset.n:
        raise ConfigError(f"request built for n={request.n} but dataset has n={dataset.n}")
    if np.any(draw_full.indices >= dataset.n):
        raise ConfigError("batch indices exceed the dataset size")
    retained = request.retained_indices
    if retained.size == 0:
        raise ConfigError("the retained dataset is empty")
    removed = request.removed_mask[draw_full.indices]
    if not removed.any():
        return draw_full
    coupled = draw_full.indices.copy()
    for slot in np.flatnonzero(removed):
        pick = stream.generator(StreamRole.COUPLE, t, int(slot)).integers(0, retained.size)
        coupled[slot] = retained[pick]
    return BatchDraw(coupled)


# -------------------- Exact full-gradient quantities --------------------
def full_loss(dataset: Dataset, spec: LossSpec, theta, indices=None) -> float:
    X, y = dataset.features, dataset.labels
    if indices is not None:
        X, y = X[indices], y[indices]
    return batch_loss(spec, X, y, theta)


def full_grad(dataset: Dataset, spec: LossSpec, theta, indices=None) -> np.ndarray:
    X, y = dataset.features, dataset.labels
    if indices is not None:
        X, y = X[indices], y[indices]
    return batch_grad(spec, X, y, theta)


def mean_sq_grad_norm(dataset: Dataset, spec: LossSpec, theta, indices=None) -> float:
    """E_{z ~ D} ||grad l(z; theta)||^2."""
    X, y = dataset.features, dataset.labels
    if indices is not None:
        X, y = X[indices], y[indices]
    grads = per_sample_grads(spec, X, y, theta)
    return float(np.mean(np.sum(grads ** 2, axis=1)))


def unlearning_bias(dataset: Dataset, request: UnlearnRequest, spec: LossSpec, theta) -> np.ndarray:
    """grad L_{D'}(theta) - grad L_D(theta)."""
    return full_grad(dataset, spec, theta, request.retained_indices) - full_grad(dataset, spec, theta)


def chi_square_empirical(n: int, m: int) -> float:
    """chi^2(P_{D'} || P_D) between the empirical distributions: m/(n-m)."""
    if not (0 < m < n):
        raise ConfigError(f"chi-square divergence needs 0 < m < n, got m={m}, n={n}")
    return m / (n - m)


@dataclass(frozen=True, eq=False)
class MinimizerResult:
    value: float
    theta: Optional[np.ndarray]
    grad_norm: float
    oracle: str  # "closed_form", "numeric", or "lower_bound"


def _ridge_logistic_hessian(X, y, spec: LossSpec, theta) -> np.ndarray:
    p = expit(y * (X @ theta))
    weights = p * (1.0 - p)
    return (X * weights[:, None]).T @ X / X.shape[0] + spec.ridge * np.eye(spec.dimension)


def minimize_full_loss(dataset: Dataset, spec: LossSpec, indices=None) -> MinimizerResult:
    """L*_D and its minimiser.

    Quadratic: closed form. Other strongly convex families: trust-region Newton
    run to gradient norm 1e-10. Remaining families: the certified lower bound 0.
    """
    X, y = dataset.features, dataset.labels
    if indices is not None:
        X, y = X[indices], y[indices]
    if spec.family == LossFamily.QUADRATIC:
        theta = X.mean(axis=0)
        return MinimizerResult(batch_loss(spec, X, y, theta), theta, 0.0, "closed_form")
    if spec.convexity_class != ConvexityClass.STRONGLY_CONVEX:
        return MinimizerResult(0.0, None, math.nan, "lower_bound")

    def fun(theta):
        return batch_loss(spec, X, y, theta), batch_grad(spec, X, y, theta)

    result = optimize.minimize(
        fun,
        np.zeros(spec.dimension),
        jac=True,
        hess=lambda theta: _ridge_logistic_hessian(X, y, spec, theta),
        method="trust-exact",
        options={"gtol": MINIMIZER_GTOL, "maxiter": 500},
    )
    grad_norm = float(np.linalg.norm(batch_grad(spec, X, y, result.x)))
    if grad_norm > 10 * MINIMIZER_GTOL:
        logger.warning("Minimizer stopped at gradient norm %.3g (%s)", grad_norm, result.message)
    return MinimizerResult(float(result.fun), np.asarray(result.x), grad_norm, "numeric")
