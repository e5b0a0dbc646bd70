"""Simulator for BB84 over a Sagnac loop with AOM frequency-shift phase modulation."""

from .attacks import (
    AttackFamily,
    AttackResult,
    EveStrategy,
    RemapConfig,
    evaluate_attack,
    intercept_resend,
    optimize_attack,
    remap_delta_from_fiber,
    remapped_phase_set,
    security_margin,
)
from .optics import (
    ConfigError,
    ModulatorConfig,
    OpticsConfig,
    PhaseShift,
    arm_probabilities,
    channel_transmittance,
    click_probabilities,
    frequency_for_phase,
    phase_shift,
    qber_from_visibility,
)
from .protocol import (
    Bb84Symbol,
    DecoyPlan,
    IntensityClass,
    Outcome,
    PulseRecord,
    QberEstimate,
    Records,
    assign_intensity,
    bob_phase,
    encode_phase,
    estimate_qber,
    measure,
    per_intensity_stats,
    sift,
)
from .sim import DriftConfig, DriftState, RunSummary, SimConfig, drift_step, run_protocol, summarize

__version__ = "0.1.0"

__all__ = [
    "AttackFamily",
    "AttackResult",
    "EveStrategy",
    "RemapConfig",
    "evaluate_attack",
    "intercept_resend",
    "optimize_attack",
    "remap_delta_from_fiber",
    "remapped_phase_set",
    "security_margin",
    "ConfigError",
    "ModulatorConfig",
    "OpticsConfig",
    "PhaseShift",
    "arm_probabilities",
    "channel_transmittance",
    "click_probabilities",
    "frequency_for_phase",
    "phase_shift",
    "qber_from_visibility",
    "Bb84Symbol",
    "DecoyPlan",
    "IntensityClass",
    "Outcome",
    "PulseRecord",
    "QberEstimate",
    "Records",
    "assign_intensity",
    "bob_phase",
    "encode_phase",
    "estimate_qber",
    "measure",
    "per_intensity_stats",
    "sift",
    "DriftConfig",
    "DriftState",
    "RunSummary",
    "SimConfig",
    "drift_step",
    "run_protocol",
    "summarize",
]
