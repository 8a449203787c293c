"""
Experiment orchestration shared by the management commands.

- Builds an ExperimentSetup from a raw JSON config (validation, certified
  constants, dataset, request, horizon / unlearning-length planning)
- Runs learn -> unlearn (-> coupled retrain) over replicas and writes artifacts
- Sweeps one config axis for privacy / utility / complexity tables
- Runs the verification suites and persists ExperimentRecord rows
"""

import copy
import json
import logging
import math
from dataclasses import replace
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from django.conf import settings

from utils.certify import (
    FormulaVariant,
    Method,
    NoiseMode,
    PrivacyBudget,
    Regime,
    add_calibrated_noise,
    calibrate,
    d2d_training_horizon,
    k_for_sigma,
    sensitivity_for,
)
from utils.data_engine import (
    CouplingStream,
    check_dataset_labels,
    load_csv_dataset,
    select_request,
    synthesize_dataset,
)
from utils.exceptions import CertificationError, ConfigError
from utils.experiment import ExperimentSetup
from utils.model_zoo import ConvexityClass, ProjectionSet, certified_constants
from utils.serialization import dump_json, load_json, safe_json, write_table
from utils.sgd_engine import Algorithm, RunConfig, run_learn, run_replicas, run_retrain, run_unlearn, save_record
from utils.verify import collect_replica_summaries, run_suite

from .forms import validate_config
from .models import ExperimentRecord

logger = logging.getLogger(__name__)

REGIME_STRENGTH = {
    ConvexityClass.NONCONVEX: 0,
    ConvexityClass.CONVEX: 1,
    ConvexityClass.STRONGLY_CONVEX: 2,
}
DEFAULT_METHOD = {
    (True, Algorithm.R2D): Method.PSGD_R2D,
    (False, Algorithm.R2D): Method.SGD_R2D,
    (False, Algorithm.D2D): Method.SGD_D2D,
}
SWEEP_PATHS = {'K': ('run', 'K'), 'T': ('run', 'T'), 'epsilon': ('privacy', 'epsilon'), 'm': ('unlearn', 'm')}


# -------------------- Config loading --------------------
def load_config(path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = load_json(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    raw.setdefault('name', path.stem)
    logger.info("Loaded config %s", path)
    return raw


def apply_overrides(raw, seed=None, replicas=None, variant=None, store_iterates=None,
                    record_every=None) -> Dict[str, Any]:
    """Copy of raw with command-line overrides applied."""
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw['seed'] = seed
    if replicas is not None:
        raw['replicas'] = replicas
    if variant is not None:
        raw.setdefault('certify', {})['variant'] = variant
    if store_iterates is not None:
        raw.setdefault('run', {})['store_iterates'] = store_iterates
    if record_every is not None:
        raw.setdefault('run', {}).update(store_iterates=True, record_every=record_every)
    return raw


def _resolve_method(run, certify, projected):
    key = (projected, Algorithm(run['algorithm']))
    default = DEFAULT_METHOD.get(key)
    method = Method(certify['method']) if certify.get('method') else default
    if method is None or method != default:
        raise ConfigError(
            f"method {method.value if method else None} does not match a "
            f"{'projected' if projected else 'unprojected'} {run['algorithm']} run"
        )
    return method


def _resolve_regime(certify, spec) -> Regime:
    regime = Regime(certify['regime']) if certify.get('regime') else spec.convexity_class
    if REGIME_STRENGTH[regime] > REGIME_STRENGTH[spec.convexity_class]:
        raise CertificationError(
            f"regime {regime.value} is stronger than the certified class {spec.convexity_class.value} of {spec.family.value}"
        )
    return regime


def _load_dataset(dataset_cfg, loss_cfg):
    """CSV data is read before the loss spec exists, because it fixes d."""
    if dataset_cfg['source'] == 'csv':
        return load_csv_dataset(dataset_cfg['path'], loss_cfg['data_radius'], dataset_cfg['has_header'])
    return None


def build_setup(raw, divergence_limit: Optional[float] = None) -> ExperimentSetup:
    """Validate `raw` and check every certification precondition; no trajectory is run."""
    cleaned = validate_config(raw)
    top, loss_cfg, data_cfg = cleaned['experiment'], cleaned['loss'], cleaned['dataset']
    unlearn_cfg, run_cfg, certify_cfg = cleaned['unlearn'], cleaned['run'], cleaned['certify']
    seed = top['seed']
    warnings: List[str] = []
    plan: Dict[str, Any] = {}

    csv_dataset = _load_dataset(data_cfg, loss_cfg)
    d = csv_dataset.dimension if csv_dataset is not None else data_cfg['d']
    if data_cfg['source'] == 'csv' and data_cfg.get('d') is not None and data_cfg['d'] != d:
        raise ConfigError(f"dataset.d={data_cfg['d']} differs from the data dimension {d}")
    theta0 = np.zeros(d) if run_cfg['theta0'] is None else np.asarray(run_cfg['theta0'], dtype=float)
    if theta0.shape[0] != d:
        raise ConfigError(f"run.theta0 has {theta0.shape[0]} coordinates, expected d={d}")

    projection_cfg = loss_cfg['projection']
    if projection_cfg is None:
        if run_cfg['projected']:
            raise ConfigError("projected runs need loss.projection")
        projection = ProjectionSet.ball(d, float(np.linalg.norm(theta0)) + loss_cfg['data_radius'])
    else:
        projection = ProjectionSet.ball(d, projection_cfg['radius'], projection_cfg['center'])

    spec = certified_constants(loss_cfg['family'], loss_cfg['params'], loss_cfg['data_radius'], projection, theta0)
    if csv_dataset is not None:
        check_dataset_labels(csv_dataset, spec)
        dataset = csv_dataset
    else:
        dataset = synthesize_dataset(spec, data_cfg['n'], seed if data_cfg['seed'] is None else data_cfg['seed'])

    request = select_request(
        dataset.n,
        unlearn_cfg['m'],
        unlearn_cfg['selection'],
        seed=seed if unlearn_cfg['seed'] is None else unlearn_cfg['seed'],
        indices=unlearn_cfg['indices'],
    )

    method = _resolve_method(run_cfg, certify_cfg, run_cfg['projected'])
    regime = _resolve_regime(certify_cfg, spec)
    variant = FormulaVariant.parse(certify_cfg['variant'])
    T, K, eta = run_cfg['T'], run_cfg['K'], run_cfg['eta']

    if run_cfg['plan_horizon']:
        horizon = d2d_training_horizon(K, eta, spec.mu, spec.noise_B, spec.noise_C, spec.loss_at_init)
        T = horizon.T
        plan['T_source'] = 'd2d_training_horizon'
        if horizon.warning:
            warnings.append(horizon.warning)

    target_sigma = certify_cfg.get('target_sigma')
    if target_sigma is not None:
        if method == Method.PSGD_R2D and regime == Regime.STRONGLY_CONVEX:
            K = k_for_sigma(target_sigma, eta, spec.mu, spec.G, dataset.n, request.m, T, variant)
            plan['K_source'] = 'target_sigma'
        else:
            message = "target_sigma planning applies to strongly convex PSGD-R2D only; keeping run.K"
            logger.warning(message)
            warnings.append(message)

    run = RunConfig(
        eta=eta,
        T=T,
        K=K,
        batch_size=run_cfg['batch_size'],
        dimension=d,
        projected=run_cfg['projected'],
        algorithm=run_cfg['algorithm'],
        seed=seed,
        theta0=tuple(theta0),
        projection=projection if run_cfg['projected'] else None,
        store_iterates=run_cfg['store_iterates'],
        record_every=run_cfg['record_every'],
        diagnostics=run_cfg['diagnostics'],
        divergence_limit=divergence_limit or settings.UNLEARN_DIVERGENCE_LIMIT,
    )
    budget = PrivacyBudget(cleaned['privacy']['epsilon'], cleaned['privacy']['delta'])
    # raises CertificationError naming the failed inequality
    sensitivity_for(method, regime, spec, dataset.n, request.m, eta, T, K, variant)

    return ExperimentSetup(
        name=top['name'] or 'experiment',
        seed=seed,
        replicas=top['replicas'],
        spec=spec,
        projection=projection,
        dataset=dataset,
        request=request,
        run=run,
        budget=budget,
        method=method,
        regime=regime,
        variant=variant,
        noise_mode=NoiseMode(certify_cfg['noise_mode']),
        target_sigma=target_sigma,
        trials=cleaned['verify']['trials'],
        contraction_eta=cleaned['verify']['contraction_eta'],
        negative_fixture=top['negative_fixture'],
        plan=plan,
        warnings=tuple(warnings),
    )


# -------------------- run --------------------
def _run_replica(setup: ExperimentSetup, sigma: float, coupled: bool, replica_id: int) -> Dict[str, Any]:
    cfg = replace(setup.run, store_iterates=True) if coupled else setup.run
    stream = CouplingStream(setup.seed, replica_id)
    learn = run_learn(cfg, setup.dataset, setup.spec, stream)
    learn_release = add_calibrated_noise(learn.final, sigma, stream, release=0)

    start = None
    if setup.noise_mode == NoiseMode.NOISY_RELEASE:
        if cfg.algorithm == Algorithm.D2D:
            start = learn_release
        else:
            start = add_calibrated_noise(learn.checkpoint, sigma, stream, release=2)
    unlearn = run_unlearn(cfg, setup.dataset, setup.request, setup.spec, stream, learn, start=start)
    result = {
        'learn': learn,
        'unlearn': unlearn,
        'learn_release': learn_release,
        'unlearn_release': add_calibrated_noise(unlearn.final, sigma, stream, release=1),
    }
    if coupled:
        retrain = run_retrain(cfg, setup.dataset, setup.request, setup.spec, stream)
        result['retrain'] = retrain
        result['steps'] = learn.iterate_steps
        result['distances'] = np.linalg.norm(learn.iterates - retrain.iterates, axis=1)
        result['dist_final'] = float(np.linalg.norm(retrain.final - unlearn.final))
    return result


def run_experiment(setup: ExperimentSetup, out_dir, coupled: bool = False, workers: int = 1) -> Dict[str, Any]:
    """Learn, unlearn and release over all replicas; artifacts are written in replica order."""
    out_dir = Path(out_dir)
    calibration = calibrate(setup)
    sigma = calibration['sigma']
    logger.info("Running %s replicas of %s into %s", setup.replicas, setup.name, out_dir)
    results = run_replicas(partial(_run_replica, setup, sigma, coupled), range(setup.replicas), workers)

    d = setup.spec.dimension
    coordinates = [f"theta_{j}" for j in range(d)]
    release_rows, distance_rows, finals = [], [], []
    for replica_id, result in enumerate(results):
        save_record(result['learn'], out_dir / f"learn_replica{replica_id}.json")
        save_record(result['unlearn'], out_dir / f"unlearn_replica{replica_id}.json")
        for role in ('learn', 'unlearn'):
            row = {'replica': replica_id, 'role': role}
            row.update(zip(coordinates, result[f'{role}_release']))
            release_rows.append(row)
        if coupled:
            save_record(result['retrain'], out_dir / f"retrain_replica{replica_id}.json")
            finals.append(result['dist_final'])
            for t, dist in zip(result['steps'], result['distances']):
                distance_rows.append({
                    'replica': replica_id,
                    't': t,
                    'dist_train_retrain': dist,
                    'dist_final': result['dist_final'],
                })

    write_table(release_rows, out_dir / 'releases.csv', ['replica', 'role'] + coordinates)
    files = ['releases.csv']
    summary = {'calibration': calibration, 'replicas': setup.replicas, 'coupled': coupled}
    if coupled:
        write_table(distance_rows, out_dir / 'distances.csv', ['replica', 't', 'dist_train_retrain', 'dist_final'])
        files.append('distances.csv')
        finals = np.asarray(finals)
        summary['dist_final_mean'] = float(finals.mean())
        summary['dist_final_se'] = float(finals.std(ddof=1) / math.sqrt(finals.size)) if finals.size > 1 else 0.0
    summary['files'] = files
    dump_json(summary, out_dir / 'summary.json')
    logger.info("Wrote %s replicas to %s", setup.replicas, out_dir)
    return summary


# -------------------- sweep --------------------
def sweep_experiment(raw, axis: str, values, monte_carlo: bool = False, workers: int = 1,
                     min_replicas: int = 100) -> List[Dict[str, Any]]:
    """One calibration row per axis value; the config is rebuilt and re-validated per value."""
    if axis not in SWEEP_PATHS:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    section, key = SWEEP_PATHS[axis]
    rows = []
    for value in values:
        variant_raw = copy.deepcopy(raw)
        variant_raw.setdefault(section, {})[key] = value
        setup = build_setup(variant_raw)
        calibration = calibrate(setup)
        row = {
            axis: value,
            'T': setup.run.T,
            'K': setup.run.K,
            'm': setup.m,
            'epsilon': setup.budget.epsilon,
            'Sigma': calibration['sensitivity']['Sigma'],
            'sigma': calibration['sigma'],
            'mc_mean': None,
            'mc_se': None,
        }
        if monte_carlo:
            summaries = collect_replica_summaries(
                setup.run, setup.dataset, setup.request, setup.spec, setup.replicas,
                setup.regime, workers, min_replicas,
            )
            finals = np.array([s.final_distance for s in summaries])
            row['mc_mean'] = float(finals.mean())
            row['mc_se'] = float(finals.std(ddof=1) / math.sqrt(finals.size))
        logger.debug("Sweep %s=%s: Sigma=%.6g", axis, value, row['Sigma'])
        rows.append(row)
    return rows


def sweep_columns(axis: str) -> List[str]:
    columns = [axis] + [c for c in ('T', 'K', 'm', 'epsilon') if c != axis]
    return columns + ['Sigma', 'sigma', 'mc_mean', 'mc_se']


# -------------------- verify --------------------
def reference_configs(directory=None) -> List[Path]:
    """Shipped configs, negative fixtures excluded."""
    directory = Path(directory or settings.UNLEARN_REFERENCE_CONFIG_DIR)
    paths = []
    for path in sorted(directory.glob('*.json')):
        if not load_json(path).get('negative_fixture'):
            paths.append(path)
    return paths


def verify_experiment(setup: ExperimentSetup, suite: str, replicas=None, workers: int = 1,
                      min_replicas: int = 100) -> List[Dict[str, Any]]:
    reports = run_suite(setup, suite, replicas, workers, min_replicas)
    return [report.as_dict() for report in reports]


# -------------------- records --------------------
def record_experiment(command: str, raw, summary, exit_status: int, out_dir='') -> ExperimentRecord:
    raw = raw or {}
    return ExperimentRecord.objects.create(
        command=command,
        config_name=str(raw.get('name', '')),
        config_digest=ExperimentRecord.digest(raw),
        config=raw,
        summary=safe_json(summary),
        exit_status=exit_status,
        output_dir=str(out_dir or ''),
    )
