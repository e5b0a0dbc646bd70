"""Command-line front end: ``design``, ``simulate``, ``attack`` and ``sweep``.

Configuration is a YAML mapping. Unknown keys are rejected so a typo in a
physics parameter cannot silently fall back to a default. Every run writes
``config.effective.yaml`` (defaults resolved) next to its outputs; feeding
that file back reproduces the outputs byte for byte.

Exit codes: 0 success, 1 validation error, 2 runtime or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .attacks import (
    AttackFamily,
    EveStrategy,
    InfeasibleAttack,
    RemapConfig,
    evaluate_attack,
    optimize_attack,
    security_margin,
)
from .optics import (
    ConfigError,
    ModulatorConfig,
    OpticsConfig,
    frequency_for_phase,
    phase_shift,
    qber_from_visibility,
    reduce_phase,
)
from .protocol import (
    DecoyPlan,
    IntensityClass,
    Records,
    expected_qber,
    read_replay_file,
)
from .sim import (
    AttackConfig,
    DriftConfig,
    SimConfig,
    SummaryAccumulator,
    attack_applicable,
    _Engine,
    attack_report,
    resolve_delta,
    run_protocol,
)

RECORD_COLUMNS = ("index", "time_s", "alice_bit", "alice_basis", "intensity",
                  "bob_basis", "outcome", "eve_touched", "sifted", "error")
EFFECTIVE_CONFIG = "config.effective.yaml"
SWEEP_AXES = ("visibility", "distance", "delta")
MIN_REPLAY_SIFTED = 1000

_TOP_KEYS = {"pulses", "repetition_rate", "mode", "master_seed", "qber_window", "bob_fixed_basis",
             "replay_file", "workers", "modulator", "optics", "decoy", "drift", "attack", "sweep"}
_SEARCH_KEYS = {"analyzers", "resend", "delta_min", "delta_max", "delta_step", "angle_step",
                "resend_step", "refine_candidates"}
_ATTACK_KEYS = {"delta", "eve_length_delta", "strategy", "search", "replay_pulses"}
_SWEEP_KEYS = {"axis", "start", "stop", "points"}


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    start: float
    stop: float
    points: int

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"must be one of {SWEEP_AXES}", "sweep.axis")
        if self.points < 1:
            raise ConfigError("empty range: need at least one point", "sweep.points")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class AttackSpec:
    """Attack section as written; ``delta`` may be left open for the search."""

    delta: float | None = None
    eve_length_delta: float | None = None
    strategy: EveStrategy | None = None
    family: AttackFamily = dataclasses.field(default_factory=AttackFamily)
    replay_pulses: int | None = None


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig
    attack: AttackSpec | None
    sweep: SweepSpec | None
    effective: dict


# -- parsing ------------------------------------------------------------------

def _section(raw: Any, allowed: set[str], path: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("must be a mapping", path or "<root>")
    for key in raw:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", where)
    return raw


def _typed(section: dict, key: str, kind, path: str, default):
    if key not in section or section[key] is None and kind is not type(None):
        return default
    value = section[key]
    where = f"{path}.{key}" if path else key
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError("must be true or false", where)
    elif kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("must be an integer", where)
    elif kind is float:
        if isinstance(value, str):
            # YAML 1.1 reads 4.0e7 (no exponent sign) as a string
            try:
                value = float(value)
            except ValueError:
                raise ConfigError("must be a number", where) from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("must be a number", where)
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError("must be finite", where)
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError("must be a string", where)
    return value


def _build(cls, section: dict, path: str, types: dict[str, type]):
    kwargs = {}
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    for name, kind in types.items():
        kwargs[name] = _typed(section, name, kind, path, defaults[name])
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}.{exc.key}" if exc.key else path) from None


_MODULATOR_TYPES = {"effective_index": float, "delay_length": float, "paired_aoms": bool,
                    "base_frequency": float, "frequency_resolution": float}
_OPTICS_TYPES = {"visibility": float, "loop_length": float, "attenuation": float, "insertion_loss": float,
                 "detector_efficiency": float, "dark_count_prob": float, "mean_photon_number": float}
_DRIFT_TYPES = {"enabled": bool, "sigma": float, "ramp": float}


def _parse_decoy(raw, optics: OpticsConfig) -> DecoyPlan | None:
    if raw is None:
        return None
    sec = _section(raw, {"signal", "decoy", "vacuum"}, "decoy")
    classes, probs = [], []
    for label in ("signal", "decoy", "vacuum"):
        if label not in sec:
            continue
        path = f"decoy.{label}"
        entry = _section(sec[label], {"probability", "mu"}, path)
        default_mu = {"signal": optics.mean_photon_number, "vacuum": 0.0}.get(label)
        mu = _typed(entry, "mu", float, path, default_mu)
        if mu is None:
            raise ConfigError("required", f"{path}.mu")
        p = _typed(entry, "probability", float, path, None)
        if p is None:
            raise ConfigError("required", f"{path}.probability")
        if not 0 <= p <= 1:
            raise ConfigError("must lie in [0, 1]", f"{path}.probability")
        if mu < 0:
            raise ConfigError("must be >= 0", f"{path}.mu")
        classes.append(IntensityClass(label, mu))
        probs.append(p)
    try:
        return DecoyPlan(tuple(classes), tuple(probs))
    except ValueError as exc:
        raise ConfigError(str(exc), "decoy") from None


def _parse_strategy(raw, path: str) -> EveStrategy:
    sec = _section(raw, {"angles", "weights", "policy"}, path)
    for key in ("angles", "policy"):
        if key not in sec:
            raise ConfigError("required", f"{path}.{key}")
    try:
        angles = [float(a) for a in sec["angles"]]
        weights = [float(w) for w in sec.get("weights") or [1.0 / len(angles)] * len(angles)]
        policy = []
        for pair in sec["policy"]:
            if not isinstance(pair, (list, tuple)):
                raise TypeError
            policy.append(tuple(None if s in (None, "vacuum") else float(s) for s in pair))
    except (TypeError, ValueError):
        raise ConfigError("angles/weights must be number lists; policy a list of [resend, resend] pairs "
                          "(phase in radians or null/'vacuum')", path) from None
    try:
        return EveStrategy(tuple(angles), tuple(weights), tuple(policy))
    except InfeasibleAttack as exc:
        raise ConfigError(str(exc), path) from None


def _parse_family(raw) -> AttackFamily:
    path = "attack.search"
    sec = _section(raw, _SEARCH_KEYS, path)
    base = AttackFamily()
    kw = dict(
        analyzers=_typed(sec, "analyzers", int, path, base.analyzers),
        resend=_typed(sec, "resend", str, path, base.resend),
        delta_bounds=(_typed(sec, "delta_min", float, path, base.delta_bounds[0]),
                      _typed(sec, "delta_max", float, path, base.delta_bounds[1])),
        delta_step=_typed(sec, "delta_step", float, path, base.delta_step),
        angle_step=_typed(sec, "angle_step", float, path, base.angle_step),
        resend_step=_typed(sec, "resend_step", float, path, base.resend_step),
        refine_candidates=_typed(sec, "refine_candidates", int, path, base.refine_candidates),
    )
    try:
        return AttackFamily(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def _parse_attack(raw) -> AttackSpec | None:
    if raw is None:
        return None
    sec = _section(raw, _ATTACK_KEYS, "attack")
    delta = _typed(sec, "delta", float, "attack", None)
    length = _typed(sec, "eve_length_delta", float, "attack", None)
    if delta is not None and length is not None:
        raise ConfigError("give at most one of delta or eve_length_delta", "attack")
    if delta is not None:
        try:
            RemapConfig(delta)
        except ValueError as exc:
            raise ConfigError(str(exc), "attack.delta") from None
    if length is not None and not length > 0:
        raise ConfigError("must be > 0", "attack.eve_length_delta")
    strategy = _parse_strategy(sec["strategy"], "attack.strategy") if sec.get("strategy") is not None else None
    replay = _typed(sec, "replay_pulses", int, "attack", None)
    if replay is not None and replay < 1:
        raise ConfigError("must be >= 1", "attack.replay_pulses")
    return AttackSpec(delta, length, strategy, _parse_family(sec.get("search")), replay)


def _parse_sweep(raw) -> SweepSpec | None:
    if raw is None:
        return None
    sec = _section(raw, _SWEEP_KEYS, "sweep")
    axis = _typed(sec, "axis", str, "sweep", None)
    start = _typed(sec, "start", float, "sweep", None)
    stop = _typed(sec, "stop", float, "sweep", None)
    points = _typed(sec, "points", int, "sweep", None)
    if None in (axis, start, stop, points):
        raise ConfigError("axis, start, stop and points are required", "sweep")
    return SweepSpec(axis, start, stop, points)


def config_from_mapping(raw: Any, base_dir: Path | None = None) -> RunConfig:
    """Validate a parsed YAML document and fill in defaults."""
    if raw is None:
        raw = {}
    top = _section(raw, _TOP_KEYS, "")
    modulator = _build(ModulatorConfig, _section(top.get("modulator"), set(_MODULATOR_TYPES), "modulator"),
                       "modulator", _MODULATOR_TYPES)
    optics = _build(OpticsConfig, _section(top.get("optics"), set(_OPTICS_TYPES), "optics"),
                    "optics", _OPTICS_TYPES)
    drift = _build(DriftConfig, _section(top.get("drift"), set(_DRIFT_TYPES), "drift"), "drift", _DRIFT_TYPES)
    decoy = _parse_decoy(top.get("decoy"), optics)
    attack = _parse_attack(top.get("attack"))
    sweep = _parse_sweep(top.get("sweep"))
    replay = _typed(top, "replay_file", str, "", None)
    if replay is not None:
        rpath = Path(replay)
        if not rpath.is_absolute() and base_dir is not None:
            rpath = base_dir / rpath
        if not rpath.is_file():
            raise ConfigError(f"file not found: {rpath}", "replay_file")
        replay = str(rpath)

    sim_attack = None
    if attack is not None and (attack.delta is not None or attack.eve_length_delta is not None):
        sim_attack = AttackConfig(attack.delta, attack.eve_length_delta, attack.strategy, attack.family)
    kw = dict(
        pulses=_typed(top, "pulses", int, "", 100_000),
        repetition_rate=_typed(top, "repetition_rate", float, "", 1000.0),
        mode=_typed(top, "mode", str, "", "simplified"),
        master_seed=_typed(top, "master_seed", int, "", 0),
        qber_window=_typed(top, "qber_window", int, "", None),
        bob_fixed_basis=_typed(top, "bob_fixed_basis", int, "", 0),
        workers=_typed(top, "workers", int, "", 1),
    )
    sim = SimConfig(modulator=modulator, optics=optics, drift=drift, decoy_plan=decoy,
                    attack=sim_attack, replay_file=replay, **kw)
    if replay is not None:
        try:
            read_replay_file(replay, sim.plan)
        except ValueError as exc:
            raise ConfigError(str(exc), "replay_file") from None
    run = RunConfig(sim, attack, sweep, {})
    return dataclasses.replace(run, effective=effective_mapping(run))


def parse_config(path: str | Path | None) -> RunConfig:
    """Load and validate a YAML config file; ``None`` gives all defaults.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ConfigError
        Malformed YAML, unknown keys or out-of-range values, with the
        dotted key path in the message.
    """
    if path is None:
        return config_from_mapping({})
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    return config_from_mapping(raw, p.parent)


def with_seed(run: RunConfig, seed: int) -> RunConfig:
    sim = dataclasses.replace(run.sim, master_seed=seed)
    out = dataclasses.replace(run, sim=sim)
    return dataclasses.replace(out, effective=effective_mapping(out))


def _strategy_dict(s: EveStrategy | None):
    return None if s is None else s.to_dict()


def effective_mapping(run: RunConfig) -> dict:
    """Fully resolved config as plain data, in the input schema."""
    sim = run.sim
    out: dict[str, Any] = {
        "pulses": int(sim.pulses),
        "repetition_rate": float(sim.repetition_rate),
        "mode": sim.mode,
        "master_seed": int(sim.master_seed),
        "qber_window": int(sim.qber_window),
        "bob_fixed_basis": int(sim.bob_fixed_basis),
        "replay_file": sim.replay_file,
        "workers": int(sim.workers),
        "modulator": dataclasses.asdict(sim.modulator),
        "optics": dataclasses.asdict(sim.optics),
        "drift": dataclasses.asdict(sim.drift),
    }
    if sim.decoy_plan is not None:
        out["decoy"] = {c.label: {"probability": float(p), "mu": float(c.mean_photon_number)}
                        for c, p in zip(sim.decoy_plan.classes, sim.decoy_plan.probabilities)}
    if run.attack is not None:
        a = run.attack
        fam = a.family
        out["attack"] = {
            "delta": a.delta,
            "eve_length_delta": a.eve_length_delta,
            "strategy": _strategy_dict(a.strategy),
            "search": {"analyzers": fam.analyzers, "resend": fam.resend,
                       "delta_min": fam.delta_bounds[0], "delta_max": fam.delta_bounds[1],
                       "delta_step": fam.delta_step, "angle_step": fam.angle_step,
                       "resend_step": fam.resend_step, "refine_candidates": fam.refine_candidates},
            "replay_pulses": a.replay_pulses,
        }
    if run.sweep is not None:
        out["sweep"] = dataclasses.asdict(run.sweep)
    return out


# -- output helpers -----------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_clean(data), indent=2) + "\n", encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_effective(out: Path, run: RunConfig) -> None:
    out.joinpath(EFFECTIVE_CONFIG).write_text(
        yaml.safe_dump(_clean(run.effective), sort_keys=False), encoding="utf-8")


_OUTCOME_LABELS = np.array(["none", "ch1", "ch2"])


def format_records(rec: Records) -> str:
    """Records CSV rows (no header) for one block."""
    labels = np.array([c.label for c in rec.classes])
    sifted = rec.sifted
    cols = [
        rec.index.tolist(),
        [repr(t) for t in rec.time.tolist()],
        rec.alice_bit.tolist(),
        rec.alice_basis.tolist(),
        labels[rec.intensity].tolist(),
        rec.bob_basis.tolist(),
        _OUTCOME_LABELS[rec.outcome].tolist(),
        rec.eve_touched.astype(np.int8).tolist(),
        sifted.astype(np.int8).tolist(),
        rec.error.astype(np.int8).tolist(),
    ]
    buf = io.StringIO()
    for row in zip(*cols):
        buf.write(",".join(map(str, row)))
        buf.write("\n")
    return buf.getvalue()


def _summary_rows(summary) -> list[tuple[str, Any]]:
    d = _clean(summary.to_dict())
    rows = []
    for key in ("total_sent", "total_detected", "total_sifted", "double_clicks", "detection_rate", "sift_fraction"):
        rows.append((key, d[key]))
    ov = d["overall"] or {}
    for key in ("qber", "std_error", "sifted_count", "error_count"):
        rows.append((f"overall.{key}", ov.get(key)))
    for label, st in d["per_intensity"].items():
        rows.append((f"{label}.gain", st["gain"]))
        rows.append((f"{label}.qber", (st["qber"] or {}).get("qber")))
    rows.append(("warnings", ";".join(d["warnings"])))
    return rows


# -- subcommands --------------------------------------------------------------

def design_table(modulator: ModulatorConfig) -> list[dict]:
    """Four-row frequency plan for the BB84 phases."""
    base = phase_shift(modulator.base_frequency, modulator)
    rows = []
    for k in range(4):
        target = k * math.pi / 2
        exact = modulator.base_frequency + target / modulator.radians_per_hertz
        quantized = frequency_for_phase(target, modulator)
        got = reduce_phase(phase_shift(quantized, modulator) - base)
        residual = (got - target + math.pi) % (2 * math.pi) - math.pi
        rows.append({"phase_rad": target, "frequency_hz": exact, "quantized_hz": quantized,
                     "residual_phase_rad": residual})
    return rows


def cmd_design(run: RunConfig, out: Path, fmt: str) -> dict:
    rows = design_table(run.sim.modulator)
    step = rows[1]["frequency_hz"] - rows[0]["frequency_hz"]
    report = {"modulator": dataclasses.asdict(run.sim.modulator), "step_hz": step, "rows": rows}
    if fmt == "csv":
        write_csv(out / "design.csv", list(rows[0]), [list(r.values()) for r in rows])
    else:
        write_json(out / "design.json", report)
    return report


def cmd_simulate(run: RunConfig, out: Path, fmt: str):
    sim = run.sim
    engine = _Engine(sim)
    acc = SummaryAccumulator(sim.pulses, sim.qber_window, engine.plan.classes, sim.repetition_rate)
    with open(out / "records.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(RECORD_COLUMNS) + "\n")
        for rec in engine.iter_blocks():
            acc.add(rec)
            fh.write(format_records(rec))
    summary = acc.result()
    if engine.attack is not None:
        summary.attack = attack_report(sim, *engine.attack)
    _write_summary(out, summary, fmt)
    return summary


def _write_summary(out: Path, summary, fmt: str) -> None:
    if fmt == "csv":
        write_csv(out / "summary.csv", ["field", "value"], _summary_rows(summary))
        write_csv(out / "qber_series.csv", ["start_index", "stop_index", "start_time_s", "qber", "std_error",
                                            "sifted_count", "error_count"],
                  [[p.start_index, p.stop_index, p.start_time,
                    *((p.estimate.qber, p.estimate.std_error, p.estimate.sifted_count, p.estimate.error_count)
                      if p.estimate else (None,) * 4)] for p in summary.series])
    else:
        write_json(out / "summary.json", summary.to_dict())


def attack_scenario(run: RunConfig) -> dict:
    """Evaluate or optimize the configured attack and replay it by Monte Carlo."""
    sim = run.sim
    spec = run.attack or AttackSpec()
    ok, why = attack_applicable(sim.modulator)
    report: dict[str, Any] = {"applicable": ok}
    if not ok:
        report["reason"] = f"attack inapplicable: {why}"
        return report
    if spec.delta is not None or spec.eve_length_delta is not None:
        delta = resolve_delta(AttackConfig(spec.delta, spec.eve_length_delta), sim.modulator)
        family = dataclasses.replace(spec.family, delta_bounds=(delta, delta))
    else:
        family = spec.family
        delta = None
    trace = []
    # exact figures assume an ideal Bob; the replay uses the configured optics
    if spec.strategy is not None and delta is not None:
        strategy = spec.strategy
        result = evaluate_attack(strategy, RemapConfig(delta))
    else:
        best = optimize_attack(family)
        delta, strategy, result, trace = best.delta, best.strategy, best.result, list(best.trace)
    at_config = evaluate_attack(strategy, RemapConfig(delta), sim.optics)
    report.update({
        "delta": delta,
        "exact_qber": result.qber,
        "exact_qber_at_config_visibility": at_config.qber,
        "eve_information": result.eve_information,
        "certain_fraction": result.certain_fraction,
        "detection_suppression": result.detection_suppression,
        "security_margin": security_margin(result.qber).value,
        "strategy": strategy.to_dict(),
        "breakdown": [dataclasses.asdict(b) for b in result.breakdown],
        "search_trace": trace,
    })
    # Bob picks bases at random so the replay sifts both bases, like the exact figure
    replay_cfg = dataclasses.replace(
        sim, pulses=spec.replay_pulses or sim.pulses, qber_window=None, mode="full",
        attack=AttackConfig(delta=delta, strategy=strategy, family=family))
    with warnings.catch_warnings():
        # replay warnings are recorded in the report instead
        warnings.simplefilter("ignore", RuntimeWarning)
        _, summary = run_protocol(replay_cfg, keep_records=False)
    ov = summary.overall
    report["replay"] = {
        "pulses": replay_cfg.pulses,
        "qber": ov.qber if ov else None,
        "std_error": ov.std_error if ov else None,
        "sifted_count": ov.sifted_count if ov else 0,
        "warnings": summary.warnings,
    }
    if (ov.sifted_count if ov else 0) < MIN_REPLAY_SIFTED:
        report["replay"]["warnings"].append(
            f"fewer than {MIN_REPLAY_SIFTED} sifted bits; raise attack.replay_pulses or attack.search.delta_min")
    return report


def cmd_attack(run: RunConfig, out: Path, fmt: str) -> dict:
    report = attack_scenario(run)
    write_json(out / "attack.json", report)
    return report


def sweep_rows(run: RunConfig, axis: str, values) -> list[dict]:
    """One row per sweep point with analytic and simulated error rates."""
    values = list(values)
    if not values:
        raise ConfigError("empty range", "sweep")
    sim = run.sim
    rows = []
    for v in values:
        v = float(v)
        if axis == "visibility":
            optics = dataclasses.replace(sim.optics, visibility=v)
            cfg = dataclasses.replace(sim, optics=optics, attack=None)
            analytic = qber_from_visibility(v)
            expected = expected_qber(optics)
        elif axis == "distance":
            optics = dataclasses.replace(sim.optics, loop_length=v)
            cfg = dataclasses.replace(sim, optics=optics, attack=None)
            analytic = qber_from_visibility(optics.visibility)
            expected = expected_qber(optics)
        elif axis == "delta":
            family = (run.attack.family if run.attack else AttackFamily())
            family = dataclasses.replace(family, delta_bounds=(v, v))
            best = optimize_attack(family)
            cfg = dataclasses.replace(sim, attack=AttackConfig(delta=v, strategy=best.strategy, family=family))
            analytic = best.result.qber
            expected = evaluate_attack(best.strategy, RemapConfig(v), sim.optics).qber
        else:
            raise ConfigError(f"must be one of {SWEEP_AXES}", "sweep.axis")
        _, summary = run_protocol(cfg, keep_records=False)
        ov = summary.overall
        rows.append({
            "axis": axis, "value": v, "analytic_qber": analytic, "expected_qber": expected,
            "simulated_qber": ov.qber if ov else None, "std_error": ov.std_error if ov else None,
            "sifted_count": ov.sifted_count if ov else 0, "detection_rate": summary.detection_rate,
        })
    return rows


def cmd_sweep(run: RunConfig, out: Path, fmt: str, sweep: SweepSpec) -> list[dict]:
    rows = sweep_rows(run, sweep.axis, sweep.values())
    write_csv(out / "sweep.csv", list(rows[0]), [list(r.values()) for r in rows])
    if fmt == "report":
        write_json(out / "sweep.json", {"axis": sweep.axis, "rows": rows})
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sagnac-qkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("design", "AOM driving-frequency table"),
                        ("simulate", "Monte Carlo run, records CSV and summary"),
                        ("attack", "phase-remapping attack evaluation and replay"),
                        ("sweep", "error rate versus visibility, distance or delta")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, default=None, help="YAML config file (defaults if omitted)")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--format", choices=("csv", "report"), default="report")
        if name == "sweep":
            p.add_argument("--axis", choices=SWEEP_AXES)
            p.add_argument("--start", type=float)
            p.add_argument("--stop", type=float)
            p.add_argument("--points", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = parse_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**128:
                raise ConfigError("must lie in [0, 2**128)", "--seed")
            run = with_seed(run, args.seed)
        sweep = None
        if args.command == "sweep":
            base = run.sweep
            sweep = SweepSpec(
                axis=args.axis or (base.axis if base else "visibility"),
                start=args.start if args.start is not None else (base.start if base else 0.90),
                stop=args.stop if args.stop is not None else (base.stop if base else 0.99),
                points=args.points if args.points is not None else (base.points if base else 4),
            )
            run = dataclasses.replace(run, sweep=sweep)
            run = dataclasses.replace(run, effective=effective_mapping(run))
        args.out.mkdir(parents=True, exist_ok=True)
        write_effective(args.out, run)
        if args.command == "design":
            cmd_design(run, args.out, args.format)
        elif args.command == "simulate":
            cmd_simulate(run, args.out, args.format)
        elif args.command == "attack":
            cmd_attack(run, args.out, args.format)
        else:
            cmd_sweep(run, args.out, args.format, sweep)
    except (ConfigError, InfeasibleAttack) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0

if __name__ == "__main__":
    sys.exit(main())
