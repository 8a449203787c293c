"""
Executable checks for every quantitative inequality the certification relies on.

Exact checks evaluate an inequality on many random instances and count
violations. Statistical checks run coupled replicas and compare a Monte Carlo
mean against a bound on an expectation: pass iff mean <= bound + 3 * SE.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .certify import (
    MomentOrder,
    PrivacyBudget,
    Regime,
    calibrate_noise,
    coupled_divergence_bound,
    d2d_fraction_threshold,
    gamma,
    gaussian_privacy_curve,
    sensitivity_for,
    sgd_coupled_divergence_bound,
)
from .data_engine import (
    Dataset,
    UnlearnRequest,
    chi_square_empirical,
    full_grad,
    full_loss,
    mean_sq_grad_norm,
    minimize_full_loss,
    unlearning_bias,
)
from .exceptions import ConfigError
from .model_zoo import ConvexityClass, LossSpec, ProjectionSet, paired_grads, paired_losses, sample_domain
from .sgd_engine import Algorithm, RunConfig, run_coupled_triple, run_replicas

logger = logging.getLogger(__name__)

ABS_TOL = 1e-10
REL_TOL = 1e-9
SE_MULTIPLIER = 3.0
FD_STEP = 1e-5
FD_RTOL = 1e-5
FD_FLOOR = 1e-4
SUITES = ("exact", "statistical", "all")


# -------------------- Reports --------------------
@dataclass
class CheckReport:
    name: str
    instances: int
    violations: int
    worst_margin: float
    passed: bool
    statistical: bool = False
    mean: Optional[float] = None
    standard_error: Optional[float] = None
    bound: Optional[float] = None
    skipped: bool = False
    note: str = ""
    oracle: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "instances": self.instances,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "passed": self.passed,
            "statistical": self.statistical,
            "mean": self.mean,
            "standard_error": self.standard_error,
            "bound": self.bound,
            "skipped": self.skipped,
            "note": self.note,
            "oracle": self.oracle,
            "details": self.details,
        }

    def summary_line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        text = f"{status} {self.name}: {self.instances} instances, {self.violations} violations"
        if self.mean is not None:
            text += f", mean {self.mean:.6g} +/- {self.standard_error:.3g} vs bound {self.bound:.6g}"
        if self.note:
            text += f" ({self.note})"
        return text


def _skipped(name: str, note: str) -> CheckReport:
    logger.info("Skipping %s: %s", name, note)
    return CheckReport(name, 0, 0, 0.0, True, skipped=True, note=note)


def _exact_report(name: str, observed, bounds, note: str = "", oracle=None, rtol=REL_TOL, atol=ABS_TOL) -> CheckReport:
    """observed <= bound on every instance, up to floating-point slack."""
    observed = np.asarray(observed, dtype=float).ravel()
    bounds = np.broadcast_to(np.asarray(bounds, dtype=float), observed.shape)
    margins = bounds - observed
    violations = int(np.sum(margins < -(atol + rtol * np.abs(bounds))))
    worst = float(margins.min()) if margins.size else 0.0
    return CheckReport(name, int(observed.size), violations, worst, violations == 0, note=note, oracle=oracle)


def _mean_se(samples) -> Tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        return float(samples.mean()), 0.0
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(samples.size))


def _statistical_passes(mean: float, se: float, bound: float) -> bool:
    return mean <= bound + SE_MULTIPLIER * se + ABS_TOL + REL_TOL * abs(bound)


# -------------------- Random instances --------------------
def uniform_ball(rng: np.random.Generator, size: int, dimension: int, radius: float, center=None) -> np.ndarray:
    directions = rng.standard_normal((size, dimension))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    points = directions / norms * (radius * rng.random(size) ** (1.0 / dimension))[:, None]
    if center is not None:
        points = points + np.asarray(center, dtype=float)
    return points


def _default_radius(spec: LossSpec) -> float:
    return 2.0 * (spec.data_radius + 1.0)


def _parameter_pairs(spec, rng, trials, radius):
    A = uniform_ball(rng, trials, spec.dimension, radius)
    B = uniform_ball(rng, trials, spec.dimension, radius)
    # a few coincident pairs cover the theta1 = theta2 corner
    B[: max(1, trials // 100)] = A[: max(1, trials // 100)]
    return A, B


# -------------------- Loss certificates --------------------
def check_gradient_agreement(spec: LossSpec, trials: int = 100, seed: int = 0, theta_radius=None) -> CheckReport:
    """Analytic gradients against central finite differences, relative error < 1e-5."""
    rng = np.random.default_rng(seed)
    d = spec.dimension
    Theta = uniform_ball(rng, trials, d, theta_radius or _default_radius(spec))
    X, y = sample_domain(spec, rng, trials)
    analytic = paired_grads(spec, X, y, Theta)

    shifts = np.kron(np.ones((trials, 1)), FD_STEP * np.eye(d))
    Xr, yr, Tr = np.repeat(X, d, axis=0), np.repeat(y, d), np.repeat(Theta, d, axis=0)
    numeric = (paired_losses(spec, Xr, yr, Tr + shifts) - paired_losses(spec, Xr, yr, Tr - shifts)) / (2 * FD_STEP)
    numeric = numeric.reshape(trials, d)

    scale = np.maximum(np.maximum(np.linalg.norm(analytic, axis=1), np.linalg.norm(numeric, axis=1)), FD_FLOOR)
    rel_error = np.linalg.norm(analytic - numeric, axis=1) / scale
    report = _exact_report("gradient_agreement", rel_error, FD_RTOL, atol=0.0, rtol=0.0)
    report.details["max_relative_error"] = float(rel_error.max())
    return report


def check_smoothness(spec: LossSpec, trials: int = 10_000, seed: int = 0, theta_radius=None) -> CheckReport:
    rng = np.random.default_rng(seed)
    A, B = _parameter_pairs(spec, rng, trials, theta_radius or _default_radius(spec))
    X, y = sample_domain(spec, rng, trials)
    gap = np.linalg.norm(paired_grads(spec, X, y, A) - paired_grads(spec, X, y, B), axis=1)
    return _exact_report("smoothness", gap, spec.L * np.linalg.norm(A - B, axis=1))


def check_strong_convexity(spec: LossSpec, trials: int = 10_000, seed: int = 0, theta_radius=None) -> CheckReport:
    """<grad(a) - grad(b), a - b> >= mu ||a - b||^2 per sample (mu = 0: monotonicity)."""
    if spec.convexity_class == ConvexityClass.NONCONVEX:
        return _skipped("strong_convexity", "no convexity certificate for a nonconvex family")
    rng = np.random.default_rng(seed)
    A, B = _parameter_pairs(spec, rng, trials, theta_radius or _default_radius(spec))
    X, y = sample_domain(spec, rng, trials)
    inner = np.sum((paired_grads(spec, X, y, A) - paired_grads(spec, X, y, B)) * (A - B), axis=1)
    # written as observed <= bound with observed = -inner
    return _exact_report("strong_convexity", -inner, -spec.mu * np.sum((A - B) ** 2, axis=1))


def check_gradient_bound(spec: LossSpec, projection: ProjectionSet, trials: int = 10_000, seed: int = 0) -> CheckReport:
    """||grad l(z; theta)|| <= G over the projection ball, boundary included."""
    rng = np.random.default_rng(seed)
    Theta = uniform_ball(rng, trials, spec.dimension, projection.radius, projection.center_array)
    half = trials // 2
    offsets = Theta[:half] - projection.center_array
    norms = np.maximum(np.linalg.norm(offsets, axis=1, keepdims=True), 1e-300)
    Theta[:half] = projection.center_array + offsets / norms * projection.radius
    X, y = sample_domain(spec, rng, trials)
    # sample radius pushed to R_z on half the instances
    xnorms = np.maximum(np.linalg.norm(X[:half], axis=1, keepdims=True), 1e-300)
    X[:half] = X[:half] / xnorms * spec.data_radius
    observed = np.linalg.norm(paired_grads(spec, X, y, Theta), axis=1)
    return _exact_report("gradient_bound", observed, spec.G)


def check_init_loss_bound(spec: LossSpec, theta0, trials: int = 10_000, seed: int = 0) -> CheckReport:
    rng = np.random.default_rng(seed)
    X, y = sample_domain(spec, rng, trials)
    Theta = np.broadcast_to(np.asarray(theta0, dtype=float), X.shape)
    return _exact_report("init_loss_bound", paired_losses(spec, X, y, Theta), spec.loss_at_init)


def check_projection_nonexpansive(spec: LossSpec, projection: ProjectionSet, trials: int = 10_000, seed: int = 0) -> CheckReport:
    rng = np.random.default_rng(seed)
    radius = 3.0 * projection.outer_radius + 1.0
    U = uniform_ball(rng, trials, spec.dimension, radius)
    V = uniform_ball(rng, trials, spec.dimension, radius)
    PU = np.array([projection.project(u) for u in U])
    PV = np.array([projection.project(v) for v in V])
    return _exact_report(
        "projection_nonexpansive", np.linalg.norm(PU - PV, axis=1), np.linalg.norm(U - V, axis=1)
    )


def check_contraction(spec: LossSpec, eta: float, trials: int = 10_000, seed: int = 0,
                      batch_size: int = 4, theta_radius=None) -> CheckReport:
    """Gradient-map contraction for single samples and batch averages.

    T(theta) = theta - eta * grad l(z; theta). Checked: expansion by at most
    1 + eta*L always; the family's regime bound (nonexpansive for convex,
    squared factor 1 - eta*mu for strongly convex) for single-sample and
    batch-averaged maps. eta outside the regime's range is expected to fail.
    """
    rng = np.random.default_rng(seed)
    d = spec.dimension
    A, B = _parameter_pairs(spec, rng, trials, theta_radius or _default_radius(spec))
    X, y = sample_domain(spec, rng, trials * batch_size)
    base = np.linalg.norm(A - B, axis=1)

    def mapped_distance(Xs, ys, reps):
        Ta = np.repeat(A, reps, axis=0)
        Tb = np.repeat(B, reps, axis=0)
        ga = paired_grads(spec, Xs, ys, Ta).reshape(trials, reps, d).mean(axis=1)
        gb = paired_grads(spec, Xs, ys, Tb).reshape(trials, reps, d).mean(axis=1)
        return np.linalg.norm((A - eta * ga) - (B - eta * gb), axis=1)

    single = mapped_distance(X[:trials], y[:trials], 1)
    batched = mapped_distance(X, y, batch_size)

    observed = [single]
    bounds = [(1.0 + eta * spec.L) * base]
    if spec.convexity_class == ConvexityClass.CONVEX:
        observed += [single, batched]
        bounds += [base, base]
    elif spec.convexity_class == ConvexityClass.STRONGLY_CONVEX:
        factor = 1.0 - eta * spec.mu
        observed += [single ** 2, batched ** 2]
        bounds += [factor * base ** 2, factor * base ** 2]
    else:
        observed.append(batched)
        bounds.append((1.0 + eta * spec.L) * base)

    report = _exact_report("contraction", np.concatenate(observed), np.concatenate(bounds))
    report.details.update({
        "eta": eta,
        "gamma": gamma(spec.convexity_class, eta, spec.L, spec.mu),
        "regime": spec.convexity_class.value,
    })
    return report


# -------------------- Dataset-level inequalities --------------------
def check_bias_bounds(dataset: Dataset, request: UnlearnRequest, spec: LossSpec, trials: int = 10_000,
                      seed: int = 0, theta_radius=None) -> CheckReport:
    """Chi-square bias bound always; relative bias bound when B > 0 and m/n <= 1/(6B+1)."""
    rng = np.random.default_rng(seed)
    Theta = uniform_ball(rng, trials, spec.dimension, theta_radius or _default_radius(spec))
    chi2 = chi_square_empirical(request.n, request.m)
    relative = spec.noise_B > 0 and request.m / request.n <= d2d_fraction_threshold(spec.noise_B)
    retained = request.retained_indices

    observed, bounds = [], []
    for theta in Theta:
        bias_sq = float(np.sum(unlearning_bias(dataset, request, spec, theta) ** 2))
        observed.append(bias_sq)
        bounds.append(chi2 * mean_sq_grad_norm(dataset, spec, theta))
        if relative:
            retained_sq = float(np.sum(full_grad(dataset, spec, theta, retained) ** 2))
            observed.append(bias_sq)
            bounds.append(0.5 * retained_sq + spec.noise_C / (4.0 * spec.noise_B))

    note = "" if relative else "relative bias bound not applicable (B = 0 or m/n above 1/(6B+1))"
    report = _exact_report("bias_bounds", observed, bounds, note=note)
    report.details.update({"chi_square": chi2, "relative_checked": relative})
    return report


def check_quadratic_growth(spec: LossSpec, dataset: Dataset, trials: int = 10_000, seed: int = 0,
                           theta_radius=None) -> CheckReport:
    if spec.convexity_class != ConvexityClass.STRONGLY_CONVEX:
        return _skipped("quadratic_growth", "requires a strongly convex family")
    optimum = minimize_full_loss(dataset, spec)
    rng = np.random.default_rng(seed)
    Theta = optimum.theta + uniform_ball(rng, trials, spec.dimension, theta_radius or _default_radius(spec))
    Theta[0] = optimum.theta
    gaps = np.array([full_loss(dataset, spec, theta) for theta in Theta]) - optimum.value
    growth = 0.5 * spec.mu * np.sum((Theta - optimum.theta) ** 2, axis=1)
    # observed <= bound form: growth <= gap
    atol = ABS_TOL if optimum.oracle == "closed_form" else 1e-8
    report = _exact_report("quadratic_growth", growth, gaps, oracle=optimum.oracle, rtol=1e-6, atol=atol)
    report.details["minimum"] = optimum.value
    return report


def check_gaussian_indistinguishability_1d(delta_mean: float, sigma: float, epsilon: float, delta: float) -> CheckReport:
    """Worst-case privacy curve of two 1-d Gaussians delta_mean apart must not exceed delta."""
    if delta_mean == 0:
        report = _exact_report("gaussian_indistinguishability_1d", [0.0], [delta], note="identical distributions")
    else:
        if sigma <= 0:
            raise ConfigError("1-d indistinguishability check needs sigma > 0")
        curve = gaussian_privacy_curve(delta_mean, sigma, epsilon)
        report = _exact_report("gaussian_indistinguishability_1d", [curve], [delta], oracle="analytic")
        report.details["curve"] = curve
    report.details.update({"Delta": delta_mean, "sigma": sigma, "epsilon": epsilon, "delta": delta})
    return report


# -------------------- Coupled replicas --------------------
@dataclass(frozen=True, eq=False)
class ReplicaSummary:
    replica_id: int
    steps: Tuple[int, ...]
    distances: np.ndarray
    final_distance: float
    same_loss_violations: int
    same_loss_margin: float
    grad_sq_sum: float
    retained_loss_final: float


def _summarize_replica(cfg: RunConfig, dataset: Dataset, request: UnlearnRequest, spec: LossSpec,
                       g: float, replica_id: int) -> ReplicaSummary:
    triple = run_coupled_triple(cfg, dataset, request, spec, replica_id)
    violations, margin = 0, 0.0
    if cfg.algorithm == Algorithm.R2D:
        offset = cfg.T - cfg.K
        gaps = np.linalg.norm(triple.retrain.iterates[offset:] - triple.unlearn.iterates, axis=1)
        bounds = gaps[0] * g ** np.arange(cfg.K + 1)
        margins = bounds - gaps
        violations = int(np.sum(margins < -(ABS_TOL + REL_TOL * gaps[0])))
        margin = float(margins.min())
    grad_sq = float(np.sum(triple.learn.grad_norms[: cfg.T] ** 2))
    retained_loss = full_loss(dataset, spec, triple.learn.final, request.retained_indices)
    return ReplicaSummary(
        replica_id, triple.steps, triple.train_retrain_distances, triple.final_distance,
        violations, margin, grad_sq, retained_loss,
    )


def collect_replica_summaries(cfg: RunConfig, dataset: Dataset, request: UnlearnRequest, spec: LossSpec,
                              replicas: int, regime=None, workers: int = 1, min_replicas: int = 100) -> List[ReplicaSummary]:
    """Run coupled triples once for every statistical check; ordered by replica id."""
    if replicas < min_replicas:
        raise ConfigError(f"statistical checks need at least {min_replicas} replicas, got {replicas}")
    regime = Regime(regime or spec.convexity_class)
    g = gamma(regime, cfg.eta, spec.L, spec.mu)
    cfg = replace(cfg, store_iterates=True, record_every=1, diagnostics=True)
    logger.info("Running %s coupled replicas (T=%s, K=%s, workers=%s)", replicas, cfg.T, cfg.K, workers)
    return run_replicas(partial(_summarize_replica, cfg, dataset, request, spec, g), range(replicas), workers)


def _summaries(summaries, cfg, dataset, request, spec, replicas, regime, workers, min_replicas):
    if summaries is None:
        return collect_replica_summaries(cfg, dataset, request, spec, replicas, regime, workers, min_replicas)
    if len(summaries) < min_replicas:
        raise ConfigError(f"statistical checks need at least {min_replicas} replicas, got {len(summaries)}")
    return summaries


def check_coupled_divergence(cfg: RunConfig, dataset: Dataset, request: UnlearnRequest, spec: LossSpec,
                             replicas: int, regime=None, workers: int = 1, summaries=None,
                             min_replicas: int = 100) -> CheckReport:
    """Mean ||theta_t - theta'_t|| against the coupled-iterate bound at every recorded t."""
    regime = Regime(regime or spec.convexity_class)
    g = gamma(regime, cfg.eta, spec.L, spec.mu)
    n, m = request.n, request.m
    if not cfg.projected and spec.noise_B * spec.L * cfg.eta > 1.0:
        return _skipped("coupled_divergence", "unprojected bound needs eta <= 1/(B L)")
    summaries = _summaries(summaries, cfg, dataset, request, spec, replicas, regime, workers, min_replicas)

    steps = summaries[0].steps
    distances = np.vstack([s.distances for s in summaries])
    means = distances.mean(axis=0)
    ses = distances.std(axis=0, ddof=1) / math.sqrt(distances.shape[0])
    if cfg.projected:
        bounds = np.array([coupled_divergence_bound(t, cfg.eta, spec.G, m, n, g) for t in steps])
    else:
        bounds = np.array([
            sgd_coupled_divergence_bound(t, cfg.eta, spec.L, spec.noise_B, spec.noise_C, spec.loss_at_init, n, m, g)
            for t in steps
        ])
    failing = [i for i in range(len(steps)) if not _statistical_passes(means[i], ses[i], bounds[i])]
    margins = bounds - means
    return CheckReport(
        "coupled_divergence",
        int(distances.shape[0]),
        len(failing),
        float(margins.min()),
        not failing,
        statistical=True,
        mean=float(means[-1]),
        standard_error=float(ses[-1]),
        bound=float(bounds[-1]),
        details={"failing_steps": [int(steps[i]) for i in failing], "recorded_steps": len(steps), "gamma": g},
    )


def check_end_to_end_sensitivity(cfg: RunConfig, dataset: Dataset, request: UnlearnRequest, spec: LossSpec,
                                 budget: PrivacyBudget, replicas: int, method, regime=None, variant="appendix",
                                 workers: int = 1, summaries=None, min_replicas: int = 100) -> CheckReport:
    """E||theta'_T - theta''_K|| (or its square for D2D) against Sigma, plus the Markov tail."""
    regime = Regime(regime or spec.convexity_class)
    bound = sensitivity_for(method, regime, spec, request.n, request.m, cfg.eta, cfg.T, cfg.K, variant)
    summaries = _summaries(summaries, cfg, dataset, request, spec, replicas, regime, workers, min_replicas)

    finals = np.array([s.final_distance for s in summaries])
    if bound.moment == MomentOrder.FIRST:
        samples, target = finals, bound.value
    else:
        samples, target = finals ** 2, bound.value ** 2
    mean, se = _mean_se(samples)
    radius = bound.tail_radius(budget.delta)
    tail = float(np.mean(finals > radius))
    tail_limit = budget.delta + SE_MULTIPLIER * math.sqrt(budget.delta * (1 - budget.delta) / finals.size)
    mean_ok = _statistical_passes(mean, se, target)
    tail_ok = tail <= tail_limit
    return CheckReport(
        "end_to_end_sensitivity",
        int(finals.size),
        int(not mean_ok) + int(not tail_ok),
        float(target - mean),
        mean_ok and tail_ok,
        statistical=True,
        mean=mean,
        standard_error=se,
        bound=target,
        details={
            "Sigma": bound.value,
            "moment": bound.moment.value,
            "tail_radius": radius,
            "tail_fraction": tail,
            "tail_limit": tail_limit,
        },
    )


def check_same_loss_contraction(cfg: RunConfig, dataset: Dataset, request: UnlearnRequest, spec: LossSpec,
                                replicas: int, regime=None, workers: int = 1, summaries=None,
                                min_replicas: int = 100) -> CheckReport:
    """Per replica: ||theta'_{T-K+k} - theta''_k|| <= gamma^k ||theta'_{T-K} - theta''_0||."""
    if cfg.algorithm != Algorithm.R2D:
        return _skipped("same_loss_contraction", "only rewind-to-delete shares batches with the retrain run")
    regime = Regime(regime or spec.convexity_class)
    summaries = _summaries(summaries, cfg, dataset, request, spec, replicas, regime, workers, min_replicas)
    violations = sum(s.same_loss_violations for s in summaries)
    return CheckReport(
        "same_loss_contraction",
        len(summaries) * (cfg.K + 1),
        violations,
        float(min(s.same_loss_margin for s in summaries)),
        violations == 0,
        details={"gamma": gamma(regime, cfg.eta, spec.L, spec.mu)},
    )


def check_sgd_convergence(cfg: RunConfig, dataset: Dataset, spec: LossSpec, replicas: int, request=None,
                          workers: int = 1, summaries=None, min_replicas: int = 100) -> CheckReport:
    """E sum_t ||grad L_D(theta_t)||^2 <= (2/eta)(L_D(theta0) - L*_D) + L eta C T."""
    if cfg.projected:
        return _skipped("sgd_convergence", "applies to unprojected SGD")
    if not cfg.eta > 0 or cfg.eta * spec.L * max(spec.noise_B, 1.0) > 1.0:
        return _skipped("sgd_convergence", "needs eta <= 1/(L max(B, 1))")
    if summaries is None and request is None:
        raise ConfigError("sgd_convergence needs either replica summaries or an unlearning request")
    summaries = _summaries(summaries, cfg, dataset, request, spec, replicas, None, workers, min_replicas)
    optimum = minimize_full_loss(dataset, spec)
    bound = (2.0 / cfg.eta) * (full_loss(dataset, spec, cfg.theta0_array) - optimum.value) \
        + spec.L * cfg.eta * spec.noise_C * cfg.T
    mean, se = _mean_se([s.grad_sq_sum for s in summaries])
    passed = _statistical_passes(mean, se, bound)
    return CheckReport(
        "sgd_convergence", len(summaries), int(not passed), float(bound - mean), passed,
        statistical=True, mean=mean, standard_error=se, bound=float(bound), oracle=optimum.oracle,
    )


def check_biased_descent(cfg: RunConfig, dataset: Dataset, request: UnlearnRequest, spec: LossSpec,
                         replicas: int, workers: int = 1, summaries=None, min_replicas: int = 100) -> CheckReport:
    """Loss gap on D' after T SGD steps on D."""
    B, C, L, mu = spec.noise_B, spec.noise_C, spec.L, spec.mu
    if spec.convexity_class != ConvexityClass.STRONGLY_CONVEX or B <= 0:
        return _skipped("biased_descent", "requires a strongly convex family with B > 0")
    if cfg.projected:
        return _skipped("biased_descent", "applies to unprojected SGD")
    if cfg.eta > 1.0 / (B * L) or not request.m / request.n < d2d_fraction_threshold(B):
        return _skipped("biased_descent", "needs eta <= 1/(B L) and m/n < 1/(6B+1)")
    summaries = _summaries(summaries, cfg, dataset, request, spec, replicas, None, workers, min_replicas)
    retained = request.retained_indices
    optimum = minimize_full_loss(dataset, spec, retained)
    initial_gap = full_loss(dataset, spec, cfg.theta0_array, retained) - optimum.value
    bound = (1.0 - cfg.eta * mu / 2.0) ** cfg.T * initial_gap + C / (4.0 * B * mu) + L * cfg.eta * C / mu
    mean, se = _mean_se([s.retained_loss_final - optimum.value for s in summaries])
    passed = _statistical_passes(mean, se, bound)
    return CheckReport(
        "biased_descent", len(summaries), int(not passed), float(bound - mean), passed,
        statistical=True, mean=mean, standard_error=se, bound=float(bound), oracle=optimum.oracle,
    )


# -------------------- Suites --------------------
def _exact_suite(setup) -> List[CheckReport]:
    spec, trials, seed = setup.spec, setup.trials, setup.seed
    eta = setup.contraction_eta if setup.contraction_eta is not None else setup.run.eta
    reports = [
        check_gradient_agreement(spec, trials, seed),
        check_smoothness(spec, trials, seed),
        check_strong_convexity(spec, trials, seed),
        check_gradient_bound(spec, setup.projection, trials, seed),
        check_init_loss_bound(spec, setup.run.theta0, trials, seed),
        check_projection_nonexpansive(spec, setup.projection, trials, seed),
        check_contraction(spec, eta, trials, seed, batch_size=setup.run.batch_size),
        check_bias_bounds(setup.dataset, setup.request, spec, trials, seed),
        check_quadratic_growth(spec, setup.dataset, trials, seed),
    ]
    bound = sensitivity_for(
        setup.method, setup.regime, spec, setup.n, setup.m, setup.run.eta, setup.run.T, setup.run.K, setup.variant
    )
    noise = calibrate_noise(bound, setup.budget)
    reports.append(check_gaussian_indistinguishability_1d(
        bound.tail_radius(setup.budget.delta), noise.sigma, setup.budget.epsilon, setup.budget.delta
    ))
    return reports


def _statistical_suite(setup, replicas: int, workers: int, min_replicas: int) -> List[CheckReport]:
    cfg, spec = setup.run, setup.spec
    summaries = collect_replica_summaries(
        cfg, setup.dataset, setup.request, spec, replicas, setup.regime, workers, min_replicas
    )
    common = dict(workers=workers, summaries=summaries, min_replicas=min_replicas)
    return [
        check_coupled_divergence(cfg, setup.dataset, setup.request, spec, replicas, setup.regime, **common),
        check_end_to_end_sensitivity(
            cfg, setup.dataset, setup.request, spec, setup.budget, replicas,
            setup.method, setup.regime, setup.variant, **common,
        ),
        check_same_loss_contraction(cfg, setup.dataset, setup.request, spec, replicas, setup.regime, **common),
        check_sgd_convergence(cfg, setup.dataset, spec, replicas, setup.request, **common),
        check_biased_descent(cfg, setup.dataset, setup.request, spec, replicas, **common),
    ]


def run_suite(setup, suite: str = "all", replicas: Optional[int] = None, workers: int = 1,
              min_replicas: int = 100) -> List[CheckReport]:
    """Run the exact and/or statistical checks for one ExperimentSetup."""
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
    reports: List[CheckReport] = []
    if suite in ("exact", "all"):
        reports += _exact_suite(setup)
    if suite in ("statistical", "all"):
        reports += _statistical_suite(setup, replicas or setup.replicas, workers, min_replicas)
    for report in reports:
        report.details.setdefault("config", setup.name)
        log = logger.info if report.passed else logger.warning
        log("%s", report.summary_line())
    return reports
