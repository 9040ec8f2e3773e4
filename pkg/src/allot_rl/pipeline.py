"""Glue between market data and training: phase slicing and multi-phase runs."""

from __future__ import annotations

from dataclasses import dataclass, field

from .env import TcSchedule
from .marketdata import FeatureFrame, FeatureSpec, PhasePlan, ReturnPanel, source_rows_for, split_phases
from .metrics import PerformanceReport, performance_report, periods_per_year
from .oracle import OracleConfig
from .ppo.algo import PpoConfig
from .ppo.network import NetworkParams
from .ppo.trainer import PhaseResult, Trace, TrainingData, benchmark_policy, deploy, mean_policy, train_phase
from .synth import BootstrapConfig


@dataclass
class PhaseData:
    train: TrainingData
    valid: FeatureFrame
    test: FeatureFrame

    def split(self, name: str) -> FeatureFrame:
        return {"train": self.train.frame, "valid": self.valid, "test": self.test}[name]


def phase_data(panel: ReturnPanel, spec: FeatureSpec, plan: PhasePlan, phase: int) -> PhaseData:
    frame = spec.build(panel)
    train, valid, test = split_phases(frame, plan, phase)
    source = source_rows_for(train, panel, spec)
    return PhaseData(TrainingData(train, source, spec), valid, test)


@dataclass
class ExperimentSettings:
    """Everything a phase needs besides data; defaults follow the published hyperparameters."""

    ppo: PpoConfig = field(default_factory=PpoConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    features: FeatureSpec = field(default_factory=FeatureSpec)
    reward_kind: str = "regret"
    reward_params: dict = field(default_factory=dict)
    tc_max: float = 0.0025
    ramp_episodes: int = 100
    convexity_first: float = 1.0
    convexity_later: float = 0.45
    tc_schedule: bool = True
    initial_weights: tuple[float, ...] = (0.0, 1.0, 0.0)

    def schedule(self, phase_index: int, episode_length: int) -> TcSchedule:
        return TcSchedule(
            tc_max=self.tc_max,
            ramp_steps=max(1, self.ramp_episodes * episode_length),
            convexity=self.convexity_first if phase_index == 0 else self.convexity_later,
            enabled=self.tc_schedule,
        )

    def eval_schedule(self) -> TcSchedule:
        return TcSchedule(self.tc_max, 1, 1.0, enabled=False)


def run_phase(
    data: PhaseData,
    settings: ExperimentSettings,
    phase_index: int,
    seed: int,
    init: NetworkParams | None = None,
) -> PhaseResult:
    sched = settings.schedule(phase_index, len(data.train.frame) - 1)
    return train_phase(
        data.train,
        data.valid,
        settings.ppo,
        sched,
        settings.reward_kind,
        settings.bootstrap,
        init,
        settings.oracle,
        settings.features.stride,
        seed,
        settings.reward_params,
        settings.initial_weights,
    )


def evaluate(
    params: NetworkParams | None, frame: FeatureFrame, settings: ExperimentSettings, diagnostics: bool = True
) -> tuple[PerformanceReport, Trace]:
    """Deployment rollout; ``params=None`` evaluates the constant 60/40 benchmark."""
    policy = benchmark_policy if params is None else mean_policy(params)
    trace = deploy(
        policy, frame, settings.eval_schedule(), settings.oracle, settings.features.stride, diagnostics,
        settings.initial_weights,
    )
    ppy = periods_per_year(settings.features.stride)
    return performance_report(trace.net_returns, ppy, settings.oracle.risk_free), trace
