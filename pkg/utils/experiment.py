"""Fully resolved experiment: every object a command needs, built once from a validated config."""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from .certify import FormulaVariant, Method, NoiseMode, PrivacyBudget, Regime
from .data_engine import Dataset, UnlearnRequest
from .model_zoo import LossSpec, ProjectionSet
from .sgd_engine import RunConfig


@dataclass(frozen=True, eq=False)
class ExperimentSetup:
    name: str
    seed: int
    replicas: int
    spec: LossSpec
    projection: ProjectionSet
    dataset: Dataset
    request: UnlearnRequest
    run: RunConfig
    budget: PrivacyBudget
    method: Method
    regime: Regime
    variant: FormulaVariant = FormulaVariant.APPENDIX
    noise_mode: NoiseMode = NoiseMode.NOISELESS_CHECKPOINT
    target_sigma: Optional[float] = None
    trials: int = 10_000
    contraction_eta: Optional[float] = None
    negative_fixture: bool = False
    plan: Dict[str, Any] = field(default_factory=dict)
    warnings: Tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def m(self) -> int:
        return self.request.m
