"""
Closed-form sensitivity bounds and Gaussian noise calibration for certified unlearning.

- Sensitivity Sigma for PSGD-R2D, SGD-R2D (first moment) and SGD-D2D (second moment)
- Noise scale sigma via the relaxed Gaussian mechanism, guarantee (epsilon, 2 delta)
- Iteration planning: D2D training horizon T, R2D unlearning length K for a target Sigma
- ABC constants of the stochastic gradient for with/without replacement sampling

All inputs are certified constants (see model_zoo), never dataset statistics.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from .exceptions import CertificationError, ConfigError
from .model_zoo import ConvexityClass, LossSpec

logger = logging.getLogger(__name__)

# Relative slack for step-size comparisons against closed-form thresholds.
STEP_RTOL = 1e-12
# Slack used when turning a real-valued iteration count into an integer.
ITERATION_TOL = 1e-9


class MomentOrder(str, Enum):
    FIRST = "FirstMoment"
    SECOND = "SecondMoment"


class Method(str, Enum):
    PSGD_R2D = "PSGD_R2D"
    SGD_R2D = "SGD_R2D"
    SGD_D2D = "SGD_D2D"


class FormulaVariant(str, Enum):
    MAIN = "MainText"
    APPENDIX = "Appendix"

    @classmethod
    def parse(cls, value) -> "FormulaVariant":
        if isinstance(value, cls):
            return value
        aliases = {"main": cls.MAIN, "maintext": cls.MAIN, "appendix": cls.APPENDIX}
        try:
            return aliases[str(value).lower()]
        except KeyError as exc:
            raise ConfigError(f"unknown formula variant {value!r}") from exc


class SamplingScheme(str, Enum):
    WITH_REPLACEMENT = "WithReplacement"
    WITHOUT_REPLACEMENT = "WithoutReplacement"


class NoiseMode(str, Enum):
    """Where unlearning resumes: the noiseless checkpoint (certified) or the published noisy model."""

    NOISELESS_CHECKPOINT = "noiseless_checkpoint"
    NOISY_RELEASE = "noisy_release"


Regime = ConvexityClass


# -------------------- Types --------------------
@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class SensitivityBound:
    value: float
    moment: MomentOrder
    regime: Regime
    method: Method
    variant: FormulaVariant
    gamma: float

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise CertificationError(f"sensitivity must be finite and nonnegative, got {self.value}")

    def tail_radius(self, delta: float) -> float:
        """Radius exceeded with probability at most delta (Markov on the bounded moment)."""
        if self.moment == MomentOrder.FIRST:
            return self.value / delta
        return self.value / math.sqrt(delta)

    def as_dict(self):
        return {
            "Sigma": self.value,
            "moment": self.moment.value,
            "regime": self.regime.value,
            "method": self.method.value,
            "variant": self.variant.value,
            "gamma": self.gamma,
        }


@dataclass(frozen=True)
class NoiseScale:
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError(f"noise scale must be nonnegative, got {self.sigma}")


@dataclass(frozen=True)
class HorizonPlan:
    T: int
    warning: Optional[str] = None


# -------------------- Preconditions --------------------
def _check_counts(n: int, m: int, T: int, K: int) -> None:
    if not (0 < m < n):
        raise ConfigError(f"unlearning request size must satisfy 0 < m < n, got m={m}, n={n}")
    if not (0 <= K <= T):
        raise ConfigError(f"iteration counts must satisfy 0 <= K <= T, got K={K}, T={T}")


def _require(eta: float, bound: float, inequality: str, context: str) -> None:
    if eta > bound * (1.0 + STEP_RTOL):
        raise CertificationError(f"eta={eta:g} violates {inequality} = {bound:g} ({context})")


def check_step_size(method, regime, eta: float, L: float, mu: float, B: float = 0.0) -> None:
    """Raise CertificationError if eta is outside the admissible range for `method` and `regime`."""
    method, regime = Method(method), Regime(regime)
    if not (math.isfinite(eta) and eta > 0):
        raise CertificationError(f"eta must be positive and finite, got {eta}")
    if method in (Method.SGD_R2D, Method.SGD_D2D) and B > 0:
        _require(eta, 1.0 / (B * L), "eta <= 1/(B L)", "SGD convergence under relative noise bound")
    if method == Method.SGD_D2D:
        if regime != Regime.STRONGLY_CONVEX or mu <= 0:
            raise CertificationError("SGD-D2D requires a strongly convex loss (mu > 0)")
        return
    if regime == Regime.CONVEX:
        _require(eta, 2.0 / L, "eta <= 2/L", "convex nonexpansive gradient map")
    elif regime == Regime.STRONGLY_CONVEX:
        if mu <= 0:
            raise CertificationError("strongly convex regime requires mu > 0")
        _require(eta, mu / L ** 2, "eta <= mu/L^2", "strongly convex contraction")


def d2d_fraction_threshold(B: float) -> float:
    return 1.0 / (6.0 * B + 1.0)


def check_d2d_fraction(n: int, m: int, B: float) -> None:
    threshold = d2d_fraction_threshold(B)
    if not m / n < threshold:
        raise CertificationError(
            f"m/n={m / n:g} violates m/n < 1/(6B+1) = {threshold:g} (SGD-D2D bias folding)"
        )


def gamma(regime, eta: float, L: float, mu: float) -> float:
    """Per-step contraction factor of the gradient map."""
    regime = Regime(regime)
    if regime == Regime.STRONGLY_CONVEX:
        return math.sqrt(max(0.0, 1.0 - eta * mu))
    if regime == Regime.CONVEX:
        return 1.0
    return 1.0 + eta * L


def _geometric_window(g: float, K: int, T: int) -> float:
    """sum_{tau=K}^{T-1} g^tau, i.e. (g^K - g^T)/(1 - g) for g != 1."""
    if g == 1.0:
        return float(T - K)
    return (g ** K - g ** T) / (1.0 - g)


# -------------------- Sensitivity --------------------
def sigma_psgd_r2d(regime, eta, L, mu, G, n, m, T, K, variant=FormulaVariant.APPENDIX) -> SensitivityBound:
    """First-moment sensitivity of PSGD-R2D."""
    regime, variant = Regime(regime), FormulaVariant.parse(variant)
    _check_counts(n, m, T, K)
    check_step_size(Method.PSGD_R2D, regime, eta, L, mu)
    g = gamma(regime, eta, L, mu)
    if regime == Regime.NONCONVEX:
        value = 2.0 * G * m * ((1.0 + eta * L) ** T - (1.0 + eta * L) ** K) / (n * L)
    elif regime == Regime.CONVEX:
        value = 2.0 * eta * G * m * (T - K) / n
    elif variant == FormulaVariant.MAIN:
        value = 2.0 * eta * G * m * (g ** K - g ** T) / (n * mu)
    else:
        value = 2.0 * eta * G * m * _geometric_window(g, K, T) / n
    return SensitivityBound(max(0.0, value), MomentOrder.FIRST, regime, Method.PSGD_R2D, variant, g)


def sgd_bracket(eta, L, B, C, loss_at_init, n, m, horizon) -> float:
    """The square-rooted term shared by the SGD-R2D bounds."""
    return (
        3.0 * B * (2.0 * loss_at_init / eta + L * eta * C * horizon) * (3.0 * n - m) / (n - m)
        + 6.0 * C * (4.0 * n - 3.0 * m) / (n - m)
    )


def sigma_sgd_r2d(
    regime, eta, L, mu, B, C, loss_at_init, n, m, T, K, variant=FormulaVariant.APPENDIX
) -> SensitivityBound:
    """First-moment sensitivity of SGD-R2D (no projection)."""
    regime, variant = Regime(regime), FormulaVariant.parse(variant)
    _check_counts(n, m, T, K)
    check_step_size(Method.SGD_R2D, regime, eta, L, mu, B)
    g = gamma(regime, eta, L, mu)
    root = math.sqrt(sgd_bracket(eta, L, B, C, loss_at_init, n, m, T - K))
    if regime == Regime.NONCONVEX:
        prefactor = ((1.0 + eta * L) ** T - (1.0 + eta * L) ** K) / L
    elif regime == Regime.CONVEX:
        prefactor = eta * (T - K)
    elif variant == FormulaVariant.MAIN:
        prefactor = (g ** K - g ** T) / mu
    else:
        prefactor = eta * _geometric_window(g, K, T)
    return SensitivityBound(max(0.0, prefactor * root), MomentOrder.FIRST, regime, Method.SGD_R2D, variant, g)


def sigma_sgd_d2d(eta, L, mu, B, C, K, n: Optional[int] = None, m: Optional[int] = None) -> SensitivityBound:
    """Second-moment sensitivity of SGD-D2D; returns Sigma (not Sigma^2)."""
    if K < 0:
        raise ConfigError(f"K must be nonnegative, got {K}")
    if B <= 0:
        raise CertificationError("SGD-D2D requires B > 0 in the relative noise bound")
    check_step_size(Method.SGD_D2D, Regime.STRONGLY_CONVEX, eta, L, mu, B)
    if n is not None and m is not None:
        if not (0 < m < n):
            raise ConfigError(f"unlearning request size must satisfy 0 < m < n, got m={m}, n={n}")
        check_d2d_fraction(n, m, B)
    q = 1.0 - eta * mu / 2.0
    sigma_sq = 5.0 * C / (mu ** 2 * B) * (q ** (2 * K) + 2.0 * q ** K) + 4.0 * L * eta * C / mu ** 2
    return SensitivityBound(
        math.sqrt(max(0.0, sigma_sq)),
        MomentOrder.SECOND,
        Regime.STRONGLY_CONVEX,
        Method.SGD_D2D,
        FormulaVariant.APPENDIX,
        math.sqrt(1.0 - eta * mu),
    )


def sensitivity_for(method, regime, spec: LossSpec, n, m, eta, T, K, variant=FormulaVariant.APPENDIX):
    """Dispatch to the bound of `method` using the constants of `spec`."""
    method = Method(method)
    if method == Method.PSGD_R2D:
        return sigma_psgd_r2d(regime, eta, spec.L, spec.mu, spec.G, n, m, T, K, variant)
    if method == Method.SGD_R2D:
        return sigma_sgd_r2d(
            regime, eta, spec.L, spec.mu, spec.noise_B, spec.noise_C, spec.loss_at_init, n, m, T, K, variant
        )
    return sigma_sgd_d2d(eta, spec.L, spec.mu, spec.noise_B, spec.noise_C, K, n=n, m=m)


# -------------------- Coupled-iterate bounds --------------------
def coupled_divergence_bound(t: int, eta: float, G: float, m: int, n: int, g: float) -> float:
    """Bound on E||theta_t - theta'_t|| for coupled PSGD runs on D and D'."""
    return 2.0 * eta * G * m / n * _geometric_window(g, 0, t)


def sgd_coupled_divergence_bound(t, eta, L, B, C, loss_at_init, n, m, g) -> float:
    """Bound on E||theta_t - theta'_t|| for coupled SGD runs without projection."""
    return eta * _geometric_window(g, 0, t) * math.sqrt(sgd_bracket(eta, L, B, C, loss_at_init, n, m, t))


# -------------------- Planning --------------------
def _ceil_iterations(x: float) -> int:
    return int(math.ceil(x - ITERATION_TOL))


def d2d_training_horizon(K, eta, mu, B, C, loss_at_init) -> HorizonPlan:
    """Training length T for SGD-D2D; T=K with a warning when theta0 already sits in the target neighbourhood."""
    if K < 0:
        raise ConfigError(f"K must be nonnegative, got {K}")
    if not (mu > 0 and B > 0 and 0 < eta * mu < 2):
        raise CertificationError("training horizon needs mu > 0, B > 0 and 0 < eta*mu < 2")
    if C < 0:
        raise CertificationError(f"training horizon needs C >= 0, got C={C}")
    if C == 0:
        warning = "C = 0: the stationary noise floor vanishes, using T=K"
        logger.warning(warning)
        return HorizonPlan(T=int(K), warning=warning)
    target = 5.0 * C / (4.0 * B * mu)
    if loss_at_init < target:
        warning = (
            f"loss_at_init={loss_at_init:g} <= 5C/(4 B mu)={target:g}: "
            "training already inside the target neighbourhood, using T=K"
        )
        logger.warning(warning)
        return HorizonPlan(T=int(K), warning=warning)
    extra = (math.log(loss_at_init) - math.log(target)) / math.log(1.0 / (1.0 - eta * mu / 2.0))
    return HorizonPlan(T=int(K) + max(0, _ceil_iterations(extra)))


def sigma_cap(eta, mu, G, n, m, T, variant=FormulaVariant.APPENDIX) -> float:
    """Uniform (K=0) upper bound on the strongly convex PSGD-R2D sensitivity."""
    g = math.sqrt(1.0 - eta * mu)
    if FormulaVariant.parse(variant) == FormulaVariant.MAIN:
        return 2.0 * eta * G * m * (1.0 - g ** T) / (n * mu)
    return 2.0 * eta * G * m * _geometric_window(g, 0, T) / n


def k_for_sigma(sigma_target, eta, mu, G, n, m, T, variant=FormulaVariant.APPENDIX) -> int:
    """Smallest K whose strongly convex PSGD-R2D sensitivity is <= sigma_target."""
    variant = FormulaVariant.parse(variant)
    if not (mu > 0 and 0 < eta * mu < 1):
        raise CertificationError("unlearning-length planning needs a strongly convex loss with eta*mu < 1")
    if not (0 < m < n) or T < 0:
        raise ConfigError(f"invalid planning inputs n={n}, m={m}, T={T}")
    if G == 0 or sigma_target >= sigma_cap(eta, mu, G, n, m, T, variant):
        return 0
    if sigma_target <= 0:
        return int(T)
    g = math.sqrt(1.0 - eta * mu)
    denominator = n * mu if variant == FormulaVariant.MAIN else n * (1.0 - g)
    argument = denominator * sigma_target / (2.0 * m * eta * G) + g ** T
    if argument >= 1.0:
        return 0
    return min(int(T), max(0, _ceil_iterations(math.log(argument) / math.log(g))))


# -------------------- Noise --------------------
def calibrate_noise(bound: SensitivityBound, budget: PrivacyBudget) -> NoiseScale:
    """Relaxed Gaussian mechanism; the resulting guarantee is (epsilon, 2*delta)."""
    log_term = 2.0 * math.log(1.25 / budget.delta)
    if bound.moment == MomentOrder.FIRST:
        sigma = bound.value * math.sqrt(log_term) / (budget.epsilon * budget.delta)
    else:
        sigma = bound.value / budget.epsilon * math.sqrt(log_term / budget.delta)
    return NoiseScale(sigma)


def add_calibrated_noise(theta, sigma: float, stream, release: int = 0) -> np.ndarray:
    """theta + xi with xi ~ N(0, sigma^2 I), drawn from the stream's noise substream."""
    if sigma < 0:
        raise ConfigError(f"noise scale must be nonnegative, got {sigma}")
    theta = np.asarray(theta, dtype=float)
    if sigma == 0:
        return theta.copy()
    xi = stream.noise_generator(release).standard_normal(theta.shape)
    return theta + sigma * xi


def gaussian_privacy_curve(delta_mean: float, sigma: float, epsilon: float) -> float:
    """sup_S P[X in S] - e^eps P[Y in S] for X ~ N(0, s^2), Y ~ N(Delta, s^2)."""
    if delta_mean == 0:
        return 0.0
    if sigma <= 0:
        raise ConfigError("privacy curve needs sigma > 0")
    a = delta_mean / (2.0 * sigma)
    b = epsilon * sigma / delta_mean
    return float(stats.norm.cdf(a - b) - math.exp(epsilon) * stats.norm.cdf(-a - b))


# -------------------- ABC constants --------------------
def abc_constants(L: float, b: int, interp_const: float, scheme, n: Optional[int] = None) -> Tuple[float, float, float]:
    """(A, B, C) bounding the stochastic gradient second moment for batch size b."""
    scheme = SamplingScheme(scheme)
    if b < 1:
        raise ConfigError(f"batch size must be >= 1, got {b}")
    if scheme == SamplingScheme.WITH_REPLACEMENT:
        A = L / b
        B = 1.0 - 1.0 / b
    else:
        if n is None or not (1 <= b <= n):
            raise ConfigError(f"sampling without replacement needs 1 <= b <= n, got b={b}, n={n}")
        if n == 1:
            return 0.0, 1.0, 0.0
        A = (n - b) * L / (b * (n - 1))
        B = n * (b - 1) / (b * (n - 1))
    return A, B, 2.0 * A * interp_const


def assumption4_constants(A: float, B: float, C: float, mu: float) -> Tuple[float, float]:
    """Fold the A-term into B through the PL inequality: (B + A/mu, C)."""
    if mu <= 0:
        raise ConfigError("PL conversion of ABC constants requires mu > 0")
    return B + A / mu, C


# -------------------- End-to-end calibration --------------------
def calibrate(setup) -> dict:
    """Sensitivity, noise scale and iteration plans for one ExperimentSetup; runs no trajectories."""
    run, spec = setup.run, setup.spec
    n, m = setup.dataset.n, setup.request.m
    bound = sensitivity_for(setup.method, setup.regime, spec, n, m, run.eta, run.T, run.K, setup.variant)
    noise = calibrate_noise(bound, setup.budget)
    warnings = list(setup.warnings)
    if setup.noise_mode == NoiseMode.NOISY_RELEASE:
        message = "noisy_release mode: unlearning resumes from the noisy model, which the bounds do not cover"
        logger.warning(message)
        warnings.append(message)

    plan = dict(setup.plan)
    plan.update({"T": run.T, "K": run.K})
    if setup.method == Method.PSGD_R2D and setup.regime == Regime.STRONGLY_CONVEX:
        plan["sigma_cap"] = sigma_cap(run.eta, spec.mu, spec.G, n, m, run.T, setup.variant)
        if setup.target_sigma is not None:
            plan["target_sigma"] = setup.target_sigma
            plan["K_for_target"] = k_for_sigma(setup.target_sigma, run.eta, spec.mu, spec.G, n, m, run.T, setup.variant)

    logger.info(
        "Calibrated %s (%s): Sigma=%.6g sigma=%.6g", setup.method.value, setup.regime.value, bound.value, noise.sigma
    )
    return {
        "name": setup.name,
        "method": setup.method.value,
        "regime": setup.regime.value,
        "variant": FormulaVariant.parse(setup.variant).value,
        "noise_mode": setup.noise_mode.value,
        "constants": spec.as_dict(),
        "n": n,
        "m": m,
        "eta": run.eta,
        "batch_size": run.batch_size,
        "sensitivity": bound.as_dict(),
        "sigma": noise.sigma,
        "epsilon": setup.budget.epsilon,
        "delta": setup.budget.delta,
        "guarantee": {"epsilon": setup.budget.epsilon, "delta": 2.0 * setup.budget.delta},
        "tail_radius": bound.tail_radius(setup.budget.delta),
        "plan": plan,
        "warnings": warnings,
    }
