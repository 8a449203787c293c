"""
Synthetic loss families with analytically certified constants.

- Quadratic         l(z; theta) = 0.5 * ||theta - x||^2
- RidgeLogistic     log(1 + exp(-y <x, theta>)) + (lambda/2) ||theta||^2
- Logistic          log(1 + exp(-y <x, theta>))
- SmoothNonconvex   0.5 * (sigmoid(<x, theta>) - y)^2

Samples are (x, y) pairs with ||x|| <= R_z. Quadratic ignores y, logistic
families use y in {-1, +1}, SmoothNonconvex uses y in [0, 1].
Every constant is closed form in (R_z, family params, projection ball, theta0);
nothing is estimated from data.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError, DomainError

logger = logging.getLogger(__name__)

# sup |sigmoid''| = sqrt(3)/18, sup sigmoid'^2 = 1/16
NONCONVEX_CURVATURE = 1.0 / 16.0 + math.sqrt(3.0) / 18.0
# sup_u |sigmoid(u) - y| * sigmoid'(u) over y in [0, 1]
NONCONVEX_SLOPE = 4.0 / 27.0


class LossFamily(str, Enum):
    QUADRATIC = "Quadratic"
    RIDGE_LOGISTIC = "RidgeLogistic"
    LOGISTIC = "Logistic"
    SMOOTH_NONCONVEX = "SmoothNonconvex"


class ConvexityClass(str, Enum):
    STRONGLY_CONVEX = "StronglyConvex"
    CONVEX = "Convex"
    NONCONVEX = "Nonconvex"


FAMILY_CONVEXITY = {
    LossFamily.QUADRATIC: ConvexityClass.STRONGLY_CONVEX,
    LossFamily.RIDGE_LOGISTIC: ConvexityClass.STRONGLY_CONVEX,
    LossFamily.LOGISTIC: ConvexityClass.CONVEX,
    LossFamily.SMOOTH_NONCONVEX: ConvexityClass.NONCONVEX,
}


# -------------------- Types --------------------
@dataclass(frozen=True)
class ProjectionSet:
    """Closed Euclidean ball {theta : ||theta - center|| <= radius}."""

    center: Tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ConfigError(f"projection radius must be positive and finite, got {self.radius}")
        if not all(math.isfinite(c) for c in self.center):
            raise ConfigError("projection center must be finite")

    @classmethod
    def ball(cls, dimension: int, radius: float, center=None) -> "ProjectionSet":
        if center is None:
            center = np.zeros(dimension)
        center = tuple(float(c) for c in np.asarray(center, dtype=float).ravel())
        if len(center) != dimension:
            raise ConfigError(f"projection center has {len(center)} coordinates, expected {dimension}")
        return cls(center=center, radius=float(radius))

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def outer_radius(self) -> float:
        """sup of ||theta|| over the ball."""
        return float(np.linalg.norm(self.center_array)) + self.radius

    def contains(self, theta: np.ndarray, rtol: float = 1e-12) -> bool:
        gap = float(np.linalg.norm(np.asarray(theta, dtype=float) - self.center_array))
        return gap <= self.radius * (1.0 + rtol)

    def project(self, theta: np.ndarray) -> np.ndarray:
        """Euclidean projection: scale (theta - center) back to the radius when outside."""
        c = self.center_array
        offset = np.asarray(theta, dtype=float) - c
        norm = float(np.linalg.norm(offset))
        if norm <= self.radius:
            return c + offset
        return c + offset * (self.radius / norm)


@dataclass(frozen=True)
class LossSpec:
    family: LossFamily
    dimension: int
    smoothness: float
    strong_convexity: float
    convexity_class: ConvexityClass
    grad_bound: float
    noise_B: float
    noise_C: float
    loss_at_init: float
    interp_const: float
    data_radius: float
    ridge: float = 0.0
    params: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dimension}")
        constants = {
            "L": self.smoothness,
            "mu": self.strong_convexity,
            "G": self.grad_bound,
            "B": self.noise_B,
            "C": self.noise_C,
            "loss_at_init": self.loss_at_init,
            "interp_const": self.interp_const,
            "R_z": self.data_radius,
        }
        for name, value in constants.items():
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"constant {name} must be finite and nonnegative, got {value}")
        if self.smoothness <= 0:
            raise ConfigError("smoothness L must be positive")
        if self.strong_convexity > self.smoothness:
            raise ConfigError(f"mu={self.strong_convexity} exceeds L={self.smoothness}")
        strongly = self.convexity_class == ConvexityClass.STRONGLY_CONVEX
        if strongly != (self.strong_convexity > 0):
            raise ConfigError("convexity class StronglyConvex requires mu > 0 and vice versa")

    # Short aliases used throughout the certification formulas.
    @property
    def L(self) -> float:
        return self.smoothness

    @property
    def mu(self) -> float:
        return self.strong_convexity

    @property
    def G(self) -> float:
        return self.grad_bound

    def as_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family.value,
            "dimension": self.dimension,
            "L": self.smoothness,
            "mu": self.strong_convexity,
            "convexity_class": self.convexity_class.value,
            "G": self.grad_bound,
            "B": self.noise_B,
            "C": self.noise_C,
            "loss_at_init": self.loss_at_init,
            "interp_const": self.interp_const,
            "data_radius": self.data_radius,
            "ridge": self.ridge,
        }


# -------------------- Vectorised losses --------------------
def _as_batch(spec: LossSpec, X, y, theta):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    theta = np.asarray(theta, dtype=float).ravel()
    if X.shape[1] != spec.dimension or theta.shape[0] != spec.dimension:
        raise DomainError(
            f"dimension mismatch: samples {X.shape[1]}, theta {theta.shape[0]}, spec {spec.dimension}"
        )
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(theta))):
        raise DomainError("non-finite sample or parameter")
    return X, y, theta


def _loss_rows(spec: LossSpec, X, y, Theta) -> np.ndarray:
    """Entry i is l(z_i; Theta_i)."""
    if spec.family == LossFamily.QUADRATIC:
        return 0.5 * np.sum((Theta - X) ** 2, axis=1)
    u = np.sum(X * Theta, axis=1)
    if spec.family in (LossFamily.LOGISTIC, LossFamily.RIDGE_LOGISTIC):
        losses = np.logaddexp(0.0, -y * u)
        if spec.family == LossFamily.RIDGE_LOGISTIC:
            losses = losses + 0.5 * spec.ridge * np.sum(Theta ** 2, axis=1)
        return losses
    return 0.5 * (expit(u) - y) ** 2


def _grad_rows(spec: LossSpec, X, y, Theta) -> np.ndarray:
    """Row i is grad l(z_i; Theta_i)."""
    if spec.family == LossFamily.QUADRATIC:
        return Theta - X
    u = np.sum(X * Theta, axis=1)
    if spec.family in (LossFamily.LOGISTIC, LossFamily.RIDGE_LOGISTIC):
        grads = (-(y * expit(-y * u)))[:, None] * X
        if spec.family == LossFamily.RIDGE_LOGISTIC:
            grads = grads + spec.ridge * Theta
        return grads
    p = expit(u)
    return ((p - y) * p * (1.0 - p))[:, None] * X


def per_sample_grads(spec: LossSpec, X, y, theta) -> np.ndarray:
    """Matrix whose i-th row is grad l(z_i; theta)."""
    X, y, theta = _as_batch(spec, X, y, theta)
    return _grad_rows(spec, X, y, np.broadcast_to(theta, X.shape))


def _as_pairs(spec: LossSpec, X, y, Theta):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
    if X.shape != Theta.shape or X.shape[1] != spec.dimension or y.shape[0] != X.shape[0]:
        raise DomainError(f"paired shapes differ: samples {X.shape}, labels {y.shape}, parameters {Theta.shape}")
    return X, y, Theta


def paired_losses(spec: LossSpec, X, y, Theta) -> np.ndarray:
    """l(z_i; Theta_i) for aligned rows of samples and parameters."""
    return _loss_rows(spec, *_as_pairs(spec, X, y, Theta))


def paired_grads(spec: LossSpec, X, y, Theta) -> np.ndarray:
    """grad l(z_i; Theta_i) for aligned rows of samples and parameters."""
    return _grad_rows(spec, *_as_pairs(spec, X, y, Theta))


def batch_loss(spec: LossSpec, X, y, theta) -> float:
    X, y, theta = _as_batch(spec, X, y, theta)
    return float(np.mean(_loss_rows(spec, X, y, np.broadcast_to(theta, X.shape))))


def batch_grad(spec: LossSpec, X, y, theta) -> np.ndarray:
    return per_sample_grads(spec, X, y, theta).mean(axis=0)


def eval_loss(spec: LossSpec, z, theta) -> float:
    """l(z; theta) for a single sample z = (x, y)."""
    x, label = z
    return batch_loss(spec, np.asarray(x, dtype=float)[None, :], [label], theta)


def eval_grad(spec: LossSpec, z, theta) -> np.ndarray:
    """Analytic gradient of eval_loss in theta."""
    x, label = z
    return per_sample_grads(spec, np.asarray(x, dtype=float)[None, :], [label], theta)[0]


# -------------------- Data domain --------------------
def validate_labels(spec: LossSpec, y: np.ndarray) -> None:
    y = np.asarray(y, dtype=float)
    if spec.family in (LossFamily.LOGISTIC, LossFamily.RIDGE_LOGISTIC):
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise DomainError(f"{spec.family.value} labels must be -1 or +1")
    elif spec.family == LossFamily.SMOOTH_NONCONVEX:
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise DomainError("SmoothNonconvex labels must lie in [0, 1]")


def sample_domain(spec: LossSpec, rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Draw `size` samples: features uniform in the R_z ball, labels from the family's label set."""
    d = spec.dimension
    directions = rng.standard_normal((size, d))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = spec.data_radius * rng.random(size) ** (1.0 / d)
    X = directions / norms * radii[:, None]
    if spec.family in (LossFamily.LOGISTIC, LossFamily.RIDGE_LOGISTIC):
        y = rng.choice(np.array([-1.0, 1.0]), size=size)
    elif spec.family == LossFamily.SMOOTH_NONCONVEX:
        y = rng.integers(0, 2, size=size).astype(float)
    else:
        y = np.zeros(size)
    return X, y


# -------------------- Certified constants --------------------
def _family_constants(family, ridge, R, rho, theta0_norm):
    """Closed forms (L, mu, G, loss_at_init, interp_const) for one family.

    rho is sup ||theta|| over the projection ball.
    """
    if family == LossFamily.QUADRATIC:
        return 1.0, 1.0, rho + R, 0.5 * (theta0_norm + R) ** 2, 0.5 * R ** 2
    if family == LossFamily.RIDGE_LOGISTIC:
        L = ridge + R ** 2 / 4.0
        G = R * float(expit(R * rho)) + ridge * rho
        init = float(np.logaddexp(0.0, R * theta0_norm)) + 0.5 * ridge * theta0_norm ** 2
        return L, ridge, G, init, math.log(2.0)
    if family == LossFamily.LOGISTIC:
        L = R ** 2 / 4.0
        G = R * float(expit(R * rho))
        return L, 0.0, G, float(np.logaddexp(0.0, R * theta0_norm)), math.log(2.0)
    L = R ** 2 * NONCONVEX_CURVATURE
    G = R * NONCONVEX_SLOPE
    init = 0.5 * float(expit(R * theta0_norm)) ** 2
    return L, 0.0, G, init, 0.125


def certified_constants(
    family,
    family_params: Optional[Dict[str, Any]],
    data_radius: float,
    projection: ProjectionSet,
    theta0,
) -> LossSpec:
    """Build a LossSpec with every constant derived in closed form.

    Args:
        family: LossFamily (or its string value)
        family_params: e.g. {"lambda": 0.1} for RidgeLogistic
        data_radius: R_z, bound on ||x|| over the data domain
        projection: ball used for the gradient bound G
        theta0: initial point

    Returns:
        LossSpec
    """
    # Local import: certify is imported by callers of this module.
    from .certify import SamplingScheme, abc_constants, assumption4_constants

    try:
        family = LossFamily(family)
    except ValueError as exc:
        raise ConfigError(f"unknown loss family {family!r}") from exc
    params = dict(family_params or {})
    R = float(data_radius)
    if not (math.isfinite(R) and R > 0):
        raise ConfigError(f"data radius R_z must be positive and finite, got {data_radius}")
    theta0 = np.asarray(theta0, dtype=float).ravel()
    if not np.all(np.isfinite(theta0)):
        raise DomainError("theta0 must be finite")
    d = theta0.shape[0]
    if len(projection.center) != d:
        raise ConfigError("projection center dimension differs from theta0")

    ridge = 0.0
    if family == LossFamily.RIDGE_LOGISTIC:
        ridge = float(params.get("lambda", 0.0))
        if not (math.isfinite(ridge) and ridge > 0):
            raise ConfigError(f"RidgeLogistic requires lambda > 0, got {params.get('lambda')}")
    elif params.get("lambda") not in (None, 0, 0.0):
        raise ConfigError(f"lambda is only meaningful for RidgeLogistic, not {family.value}")

    L, mu, G, init, interp = _family_constants(
        family, ridge, R, projection.outer_radius, float(np.linalg.norm(theta0))
    )

    if family == LossFamily.QUADRATIC:
        # E||theta - x||^2 = ||grad L_D||^2 + mean ||x - xbar||^2 <= ||grad L_D||^2 + R^2
        B, C = 1.0, R ** 2
    elif family == LossFamily.RIDGE_LOGISTIC:
        A, B0, C0 = abc_constants(L, 1, interp, SamplingScheme.WITH_REPLACEMENT)
        B, C = assumption4_constants(A, B0, C0, mu)
    elif family == LossFamily.LOGISTIC:
        B, C = 0.0, R ** 2
    else:
        B, C = 0.0, (R * NONCONVEX_SLOPE) ** 2

    spec = LossSpec(
        family=family,
        dimension=d,
        smoothness=L,
        strong_convexity=mu,
        convexity_class=FAMILY_CONVEXITY[family],
        grad_bound=G,
        noise_B=B,
        noise_C=C,
        loss_at_init=init,
        interp_const=interp,
        data_radius=R,
        ridge=ridge,
        params=params,
    )
    logger.debug("Certified constants for %s: %s", family.value, spec.as_dict())
    return spec
