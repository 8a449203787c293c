"""
SGD / PSGD trajectory execution for rewind-to-delete and descent-to-delete.

Three trajectories share one CouplingStream per replica:
  - learn    theta_t    : T steps on L_D, batches from (TRAIN, t)
  - retrain  theta'_t   : T steps on L_D', batches coupled slot-wise to learn
  - unlearn  theta''_k  : K steps on L_D'
        R2D: from the checkpoint theta_{T-K}, reusing the retrain batches of
             steps T-K .. T-1
        D2D: from theta_T, fresh D' batches from (UNLEARN, k)

No noise is added here; releases are produced by certify.add_calibrated_noise.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np

from .data_engine import (
    BatchDraw,
    CouplingStream,
    Dataset,
    StreamRole,
    UnlearnRequest,
    couple_batch,
    full_grad,
    sample_batch,
    sample_retained_batch,
)
from .exceptions import ConfigError, NumericDivergenceError, StateError
from .model_zoo import LossSpec, ProjectionSet, batch_grad
from .serialization import dump_json, load_json

logger = logging.getLogger(__name__)

RECORD_FORMAT_VERSION = 1
DEFAULT_DIVERGENCE_LIMIT = 1e12


class Algorithm(str, Enum):
    R2D = "R2D"
    D2D = "D2D"


# -------------------- Types --------------------
@dataclass(frozen=True)
class RunConfig:
    eta: float
    T: int
    K: int
    batch_size: int
    dimension: int
    projected: bool
    algorithm: Algorithm
    seed: int
    theta0: Tuple[float, ...]
    projection: Optional[ProjectionSet] = None
    store_iterates: bool = False
    record_every: int = 1
    diagnostics: bool = False
    divergence_limit: float = DEFAULT_DIVERGENCE_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "theta0", tuple(float(v) for v in self.theta0))
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ConfigError(f"step size must be finite and nonnegative, got {self.eta}")
        if not (0 <= self.K <= self.T):
            raise ConfigError(f"iteration counts must satisfy 0 <= K <= T, got K={self.K}, T={self.T}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.record_every < 1:
            raise ConfigError(f"record_every must be >= 1, got {self.record_every}")
        if len(self.theta0) != self.dimension:
            raise ConfigError(f"theta0 has {len(self.theta0)} coordinates, expected {self.dimension}")
        if not all(math.isfinite(v) for v in self.theta0):
            raise ConfigError("theta0 must be finite")
        if self.projected:
            if self.projection is None:
                raise ConfigError("projected runs need a projection set")
            if len(self.projection.center) != self.dimension:
                raise ConfigError("projection center dimension differs from theta0")
            if not self.projection.contains(self.theta0_array, rtol=1e-9):
                raise ConfigError("theta0 must lie inside the projection set")

    @property
    def theta0_array(self) -> np.ndarray:
        return np.asarray(self.theta0, dtype=float)

    @property
    def checkpoint_step(self) -> int:
        """theta_{T-K} for R2D, theta_T for D2D."""
        return self.T - self.K if self.algorithm == Algorithm.R2D else self.T


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    role: str
    algorithm: Algorithm
    projected: bool
    eta: float
    T: int
    K: int
    batch_size: int
    seed: int
    replica_id: int
    theta0: np.ndarray
    final: np.ndarray
    checkpoint: Optional[np.ndarray] = None
    iterate_steps: Tuple[int, ...] = ()
    iterates: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    grad_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    batches: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int64))

    @property
    def steps(self) -> int:
        return self.K if self.role == "unlearn" else self.T

    def iterate_at(self, t: int) -> np.ndarray:
        try:
            return self.iterates[self.iterate_steps.index(t)]
        except ValueError as exc:
            raise StateError(f"iterate {t} of the {self.role} trajectory was not stored") from exc

    def as_dict(self):
        return {
            "format_version": RECORD_FORMAT_VERSION,
            "role": self.role,
            "algorithm": self.algorithm.value,
            "projected": self.projected,
            "eta": self.eta,
            "T": self.T,
            "K": self.K,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "replica_id": self.replica_id,
            "theta0": self.theta0,
            "checkpoint": self.checkpoint,
            "final": self.final,
            "iterate_steps": list(self.iterate_steps),
            "iterates": self.iterates,
            "grad_norms": self.grad_norms,
            "batches": self.batches,
        }

    @classmethod
    def from_dict(cls, data) -> "TrajectoryRecord":
        version = data.get("format_version")
        if version != RECORD_FORMAT_VERSION:
            raise StateError(f"unsupported trajectory format version {version!r}")
        d = len(data["theta0"])
        checkpoint = data.get("checkpoint")
        return cls(
            role=data["role"],
            algorithm=Algorithm(data["algorithm"]),
            projected=bool(data["projected"]),
            eta=float(data["eta"]),
            T=int(data["T"]),
            K=int(data["K"]),
            batch_size=int(data["batch_size"]),
            seed=int(data["seed"]),
            replica_id=int(data["replica_id"]),
            theta0=np.asarray(data["theta0"], dtype=float),
            final=np.asarray(data["final"], dtype=float),
            checkpoint=None if checkpoint is None else np.asarray(checkpoint, dtype=float),
            iterate_steps=tuple(int(t) for t in data.get("iterate_steps", [])),
            iterates=np.asarray(data.get("iterates") or np.zeros((0, d)), dtype=float).reshape(-1, d),
            grad_norms=np.asarray(data.get("grad_norms", []), dtype=float),
            batches=np.asarray(data.get("batches") or np.zeros((0, data["batch_size"])), dtype=np.int64),
        )


@dataclass(frozen=True, eq=False)
class CoupledTriple:
    learn: TrajectoryRecord
    retrain: TrajectoryRecord
    unlearn: TrajectoryRecord
    steps: Tuple[int, ...]
    train_retrain_distances: np.ndarray  # ||theta_t - theta'_t|| at `steps`
    final_distance: float  # ||theta'_T - theta''_K||


# -------------------- Steps --------------------
def _check_divergence(theta: np.ndarray, step: int, limit: float, role: str) -> np.ndarray:
    norm = float(np.linalg.norm(theta))
    if not math.isfinite(norm) or norm > limit:
        raise NumericDivergenceError(step, norm, role)
    return theta


def step_sgd(theta, batch: BatchDraw, dataset_view: Dataset, spec: LossSpec, eta: float,
             step: int = 0, divergence_limit: float = DEFAULT_DIVERGENCE_LIMIT, role: str = "") -> np.ndarray:
    """theta - eta * mean of per-sample gradients over the batch."""
    idx = batch.indices
    if idx.max() >= dataset_view.n or idx.min() < 0:
        raise ConfigError(f"batch indices out of range for a dataset of size {dataset_view.n}")
    g = batch_grad(spec, dataset_view.features[idx], dataset_view.labels[idx], theta)
    updated = np.asarray(theta, dtype=float) - eta * g
    return _check_divergence(updated, step, divergence_limit, role)


def step_psgd(theta, batch: BatchDraw, dataset_view: Dataset, spec: LossSpec, eta: float,
              proj: ProjectionSet, step: int = 0, divergence_limit: float = DEFAULT_DIVERGENCE_LIMIT,
              role: str = "") -> np.ndarray:
    return proj.project(step_sgd(theta, batch, dataset_view, spec, eta, step, divergence_limit, role))


# -------------------- Trajectories --------------------
def _execute(cfg: RunConfig, dataset: Dataset, spec: LossSpec, start: np.ndarray, steps: int,
             batch_for: Callable[[int], BatchDraw], role: str, replica_id: int,
             grad_indices=None, checkpoint_at: Optional[int] = None) -> TrajectoryRecord:
    """Shared loop; `grad_indices` selects the loss whose gradient norm is logged."""
    theta = np.asarray(start, dtype=float).copy()
    checkpoint = theta.copy() if checkpoint_at == 0 else None
    recorded_steps: List[int] = [0]
    recorded: List[np.ndarray] = [theta.copy()]
    grad_norms: List[float] = []
    batches: List[np.ndarray] = []

    for t in range(steps):
        if cfg.diagnostics:
            grad_norms.append(float(np.linalg.norm(full_grad(dataset, spec, theta, grad_indices))))
        batch = batch_for(t)
        if cfg.projected:
            theta = step_psgd(theta, batch, dataset, spec, cfg.eta, cfg.projection, t + 1, cfg.divergence_limit, role)
        else:
            theta = step_sgd(theta, batch, dataset, spec, cfg.eta, t + 1, cfg.divergence_limit, role)
        if cfg.diagnostics:
            batches.append(batch.indices)
        if checkpoint_at == t + 1:
            checkpoint = theta.copy()
        if cfg.store_iterates and ((t + 1) % cfg.record_every == 0 or t + 1 == steps):
            recorded_steps.append(t + 1)
            recorded.append(theta.copy())

    if cfg.diagnostics:
        grad_norms.append(float(np.linalg.norm(full_grad(dataset, spec, theta, grad_indices))))
    if not cfg.store_iterates and steps > 0:
        recorded_steps.append(steps)
        recorded.append(theta.copy())

    return TrajectoryRecord(
        role=role,
        algorithm=cfg.algorithm,
        projected=cfg.projected,
        eta=cfg.eta,
        T=cfg.T,
        K=cfg.K,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        replica_id=replica_id,
        theta0=np.asarray(start, dtype=float).copy(),
        final=theta,
        checkpoint=checkpoint,
        iterate_steps=tuple(recorded_steps),
        iterates=np.vstack(recorded),
        grad_norms=np.asarray(grad_norms, dtype=float),
        batches=np.vstack(batches) if batches else np.zeros((0, cfg.batch_size), dtype=np.int64),
    )


def _check_dimensions(cfg: RunConfig, dataset: Dataset, spec: LossSpec) -> None:
    if cfg.dimension != spec.dimension or dataset.dimension != spec.dimension:
        raise ConfigError(
            f"dimension mismatch: run {cfg.dimension}, dataset {dataset.dimension}, loss {spec.dimension}"
        )


def _retrain_batch(cfg, dataset, request, stream, t) -> BatchDraw:
    draw = sample_batch(stream, dataset.n, cfg.batch_size, t, StreamRole.TRAIN)
    return couple_batch(draw, dataset, request, stream, t)


def run_learn(cfg: RunConfig, dataset: Dataset, spec: LossSpec, stream: CouplingStream) -> TrajectoryRecord:
    """T steps on L_D from theta0, saving the rewind checkpoint."""
    _check_dimensions(cfg, dataset, spec)
    return _execute(
        cfg, dataset, spec, cfg.theta0_array, cfg.T,
        lambda t: sample_batch(stream, dataset.n, cfg.batch_size, t, StreamRole.TRAIN),
        "learn", stream.replica_id, checkpoint_at=cfg.checkpoint_step,
    )


def run_retrain(cfg: RunConfig, dataset: Dataset, request: UnlearnRequest, spec: LossSpec,
                stream: CouplingStream, coupled: bool = True) -> TrajectoryRecord:
    """T steps on L_D' from theta0.

    With coupled=False the batches come from the independent RETRAIN substream
    instead of the slot-wise coupling to the learn draws.
    """
    _check_dimensions(cfg, dataset, spec)
    if coupled:
        batch_for = lambda t: _retrain_batch(cfg, dataset, request, stream, t)  # noqa: E731
    else:
        batch_for = lambda t: sample_retained_batch(stream, request, cfg.batch_size, t, StreamRole.RETRAIN)  # noqa: E731
    return _execute(
        cfg, dataset, spec, cfg.theta0_array, cfg.T, batch_for, "retrain", stream.replica_id,
        grad_indices=request.retained_indices,
    )


def run_unlearn(cfg: RunConfig, dataset: Dataset, request: UnlearnRequest, spec: LossSpec,
                stream: CouplingStream, learn_record: TrajectoryRecord,
                start: Optional[np.ndarray] = None) -> TrajectoryRecord:
    """K steps on L_D' from the learn checkpoint.

    `start` overrides the rewind point (used by the noisy-release mode, where
    unlearning resumes from the published noisy model).
    """
    _check_dimensions(cfg, dataset, spec)
    if learn_record.checkpoint is None:
        raise StateError("learn record has no checkpoint to unlearn from")
    mismatched = [
        name for name in ("T", "K", "eta", "batch_size", "seed", "projected")
        if getattr(learn_record, name) != getattr(cfg, name)
    ]
    if learn_record.algorithm != cfg.algorithm:
        mismatched.append("algorithm")
    if mismatched:
        raise StateError(f"learn record does not match the run config ({', '.join(mismatched)})")

    origin = learn_record.checkpoint if start is None else np.asarray(start, dtype=float)
    if cfg.algorithm == Algorithm.R2D:
        offset = cfg.T - cfg.K
        batch_for = lambda k: _retrain_batch(cfg, dataset, request, stream, offset + k)  # noqa: E731
    else:
        batch_for = lambda k: sample_retained_batch(stream, request, cfg.batch_size, k, StreamRole.UNLEARN)  # noqa: E731
    return _execute(
        cfg, dataset, spec, origin, cfg.K, batch_for, "unlearn", stream.replica_id,
        grad_indices=request.retained_indices,
    )


def run_coupled_triple(cfg: RunConfig, dataset: Dataset, request: UnlearnRequest, spec: LossSpec,
                       replica_id: int) -> CoupledTriple:
    """Learn, retrain and unlearn under one stream, with the coupled distances."""
    cfg = replace(cfg, store_iterates=True)
    stream = CouplingStream(cfg.seed, replica_id)
    learn = run_learn(cfg, dataset, spec, stream)
    retrain = run_retrain(cfg, dataset, request, spec, stream)
    unlearn = run_unlearn(cfg, dataset, request, spec, stream, learn)
    distances = np.linalg.norm(learn.iterates - retrain.iterates, axis=1)
    final_distance = float(np.linalg.norm(retrain.final - unlearn.final))
    logger.debug("Replica %s: final coupled distance %.6g", replica_id, final_distance)
    return CoupledTriple(learn, retrain, unlearn, learn.iterate_steps, distances, final_distance)


# -------------------- Replicas and records --------------------
def run_replicas(fn: Callable, replica_ids: Iterable[int], workers: int = 1) -> list:
    """Ordered map over replica ids; results never depend on `workers`."""
    replica_ids = list(replica_ids)
    if workers <= 1 or len(replica_ids) <= 1:
        return [fn(r) for r in replica_ids]
    chunksize = max(1, len(replica_ids) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, replica_ids, chunksize=chunksize))


def save_record(record: TrajectoryRecord, path):
    return dump_json(record.as_dict(), path)


def load_record(path) -> TrajectoryRecord:
    return TrajectoryRecord.from_dict(load_json(path))
