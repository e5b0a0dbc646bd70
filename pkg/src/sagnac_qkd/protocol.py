"""BB84 phase encoding, detection, sifting and error-rate estimation.

Symbols are indexed ``k = basis + 2 * bit`` so that the encoded phase is
``k * pi / 2``: (basis 0, bit 0) -> 0, (basis 1, bit 0) -> pi/2,
(basis 0, bit 1) -> pi, (basis 1, bit 1) -> 3 pi/2.

Bob decodes bit 0 from ``ch2`` (the constructive port at zero relative
phase) and bit 1 from ``ch1``. Double clicks are assigned to a port by a
fair coin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .optics import (
    OpticsConfig,
    PhaseShift,
    arm_probabilities,
    click_probabilities,
)

HALF_PI = 0.5 * math.pi


class Outcome(IntEnum):
    NONE = 0
    CH1 = 1
    CH2 = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class Bb84Symbol:
    bit: int
    basis: int

    def __post_init__(self):
        if self.bit not in (0, 1) or self.basis not in (0, 1):
            raise ValueError(f"bit and basis must be 0 or 1, got {self.bit}, {self.basis}")

    @property
    def index(self) -> int:
        return self.basis + 2 * self.bit


ALL_SYMBOLS = tuple(Bb84Symbol(bit, basis) for bit in (0, 1) for basis in (0, 1))


def encode_phase(symbol: Bb84Symbol) -> PhaseShift:
    return PhaseShift(symbol.index * HALF_PI)


def bob_phase(basis: int) -> PhaseShift:
    if basis not in (0, 1):
        raise ValueError(f"basis must be 0 or 1, got {basis}")
    return PhaseShift(basis * HALF_PI)


@dataclass(frozen=True)
class IntensityClass:
    label: str
    mean_photon_number: float

    def __post_init__(self):
        if self.label not in INTENSITY_LABELS:
            raise ValueError(f"intensity label must be one of {INTENSITY_LABELS}, got {self.label!r}")
        if not self.mean_photon_number >= 0:
            raise ValueError("mean_photon_number must be >= 0")


INTENSITY_LABELS = ("signal", "decoy", "vacuum")
SIGNAL = IntensityClass("signal", 0.8)


@dataclass(frozen=True)
class DecoyPlan:
    """Sampling plan over intensity classes.

    ``classes`` and ``probabilities`` are parallel tuples. The default plan
    sends only signal pulses.
    """

    classes: tuple[IntensityClass, ...] = (SIGNAL,)
    probabilities: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if len(self.classes) != len(self.probabilities) or not self.classes:
            raise ValueError("decoy plan needs one probability per class")
        p = np.asarray(self.probabilities, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"class probabilities must be >= 0 and sum to 1, got {self.probabilities}")
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate intensity label in decoy plan")

    @classmethod
    def from_mapping(cls, plan: Mapping[str, tuple[float, float]]) -> "DecoyPlan":
        """Build from ``{label: (probability, mu)}``."""
        items = [(label, p, mu) for label, (p, mu) in plan.items()]
        return cls(
            classes=tuple(IntensityClass(label, mu) for label, _, mu in items),
            probabilities=tuple(p for _, p, _ in items),
        )

    def label_index(self, label: str) -> int:
        for i, c in enumerate(self.classes):
            if c.label == label:
                return i
        raise KeyError(label)


def assign_intensity(rng: np.random.Generator, decoy_plan: DecoyPlan | None = None) -> IntensityClass:
    if decoy_plan is None:
        return SIGNAL
    return decoy_plan.classes[int(sample_intensities(rng, decoy_plan, 1)[0])]


def sample_intensities(rng: np.random.Generator, plan: DecoyPlan, size: int) -> np.ndarray:
    """Class indices into ``plan.classes`` for ``size`` pulses."""
    return intensity_indices(rng.random(size), plan)


def intensity_indices(u: np.ndarray, plan: DecoyPlan) -> np.ndarray:
    cdf = np.cumsum(plan.probabilities)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="right").astype(np.int8)


def resolve_clicks(c1, c2, u1, u2, tie):
    """Turn click probabilities and uniforms into outcomes.

    Returns ``(outcome, double)`` arrays; ``tie`` < 0.5 sends a double
    click to ``ch1``.
    """
    k1 = np.asarray(u1) < c1
    k2 = np.asarray(u2) < c2
    double = k1 & k2
    outcome = np.where(k1, Outcome.CH1, Outcome.NONE)
    outcome = np.where(k2 & ~k1, Outcome.CH2, outcome)
    outcome = np.where(double, np.where(np.asarray(tie) < 0.5, Outcome.CH1, Outcome.CH2), outcome)
    return outcome.astype(np.int8), double


def detector_click_probabilities(delta_phi, optics: OpticsConfig, mean_photon_number=None):
    """Per-detector click probabilities for a pulse with relative phase ``delta_phi``."""
    mu = optics.mean_photon_number if mean_photon_number is None else mean_photon_number
    mu_det = np.multiply(mu, optics.transmittance)
    p1, p2 = arm_probabilities(delta_phi, optics.visibility)
    eff, dark = optics.detector_efficiency, optics.dark_count_prob
    return click_probabilities(mu_det, eff, dark, p1), click_probabilities(mu_det, eff, dark, p2)


def measure(alice_phase, bob_phase, optics: OpticsConfig, rng: np.random.Generator,
            mean_photon_number=None, phase_offset=0.0):
    """Sample Bob's detection outcome for one pulse or an array of pulses.

    Scalar inputs return an :class:`Outcome`; array inputs return an
    ``int8`` array of outcome codes.
    """
    dphi = np.subtract(alice_phase, bob_phase) + phase_offset
    c1, c2 = detector_click_probabilities(dphi, optics, mean_photon_number)
    shape = np.shape(c1)
    u = rng.random((3,) + shape)
    outcome, _ = resolve_clicks(c1, c2, u[0], u[1], u[2])
    if shape == ():
        return Outcome(int(outcome))
    return outcome


def outcome_bit(outcome):
    """Bob's bit for a detected outcome: ch2 -> 0, ch1 -> 1."""
    return (np.asarray(outcome) == Outcome.CH1).astype(np.int8)


@dataclass(frozen=True)
class PulseRecord:
    index: int
    time: float
    alice_symbol: Bb84Symbol
    intensity: IntensityClass
    bob_basis: int
    outcome: Outcome
    eve_touched: bool = False
    double_click: bool = False

    @property
    def detected(self) -> bool:
        return self.outcome != Outcome.NONE

    @property
    def sifted(self) -> bool:
        return self.detected and self.bob_basis == self.alice_symbol.basis

    @property
    def bob_bit(self) -> int | None:
        return int(outcome_bit(self.outcome)) if self.detected else None


@dataclass
class Records:
    """Column-oriented pulse records.

    This is the bulk form produced by the simulator; iterate it to get
    :class:`PulseRecord` objects. ``intensity`` holds indices into
    ``classes``.
    """

    index: np.ndarray
    time: np.ndarray
    alice_bit: np.ndarray
    alice_basis: np.ndarray
    intensity: np.ndarray
    bob_basis: np.ndarray
    outcome: np.ndarray
    eve_touched: np.ndarray
    double_click: np.ndarray
    classes: tuple[IntensityClass, ...] = (SIGNAL,)

    COLUMNS = ("index", "time", "alice_bit", "alice_basis", "intensity",
               "bob_basis", "outcome", "eve_touched", "double_click")

    def __len__(self) -> int:
        return len(self.index)

    @property
    def detected(self) -> np.ndarray:
        return self.outcome != Outcome.NONE

    @property
    def sifted(self) -> np.ndarray:
        return self.detected & (self.bob_basis == self.alice_basis)

    @property
    def bob_bit(self) -> np.ndarray:
        return outcome_bit(self.outcome)

    @property
    def error(self) -> np.ndarray:
        return self.sifted & (self.bob_bit != self.alice_bit)

    def __iter__(self) -> Iterator[PulseRecord]:
        for i in range(len(self)):
            yield PulseRecord(
                index=int(self.index[i]),
                time=float(self.time[i]),
                alice_symbol=Bb84Symbol(int(self.alice_bit[i]), int(self.alice_basis[i])),
                intensity=self.classes[int(self.intensity[i])],
                bob_basis=int(self.bob_basis[i]),
                outcome=Outcome(int(self.outcome[i])),
                eve_touched=bool(self.eve_touched[i]),
                double_click=bool(self.double_click[i]),
            )

    @classmethod
    def from_pulses(cls, pulses: Iterable[PulseRecord]) -> "Records":
        pulses = list(pulses)
        classes: list[IntensityClass] = []
        for p in pulses:
            if p.intensity not in classes:
                classes.append(p.intensity)
        classes = classes or [SIGNAL]
        return cls(
            index=np.array([p.index for p in pulses], dtype=np.int64),
            time=np.array([p.time for p in pulses], dtype=float),
            alice_bit=np.array([p.alice_symbol.bit for p in pulses], dtype=np.int8),
            alice_basis=np.array([p.alice_symbol.basis for p in pulses], dtype=np.int8),
            intensity=np.array([classes.index(p.intensity) for p in pulses], dtype=np.int8),
            bob_basis=np.array([p.bob_basis for p in pulses], dtype=np.int8),
            outcome=np.array([int(p.outcome) for p in pulses], dtype=np.int8),
            eve_touched=np.array([p.eve_touched for p in pulses], dtype=bool),
            double_click=np.array([p.double_click for p in pulses], dtype=bool),
            classes=tuple(classes),
        )

    @classmethod
    def concatenate(cls, parts: Sequence["Records"]) -> "Records":
        if not parts:
            raise ValueError("nothing to concatenate")
        cols = {c: np.concatenate([getattr(p, c) for p in parts]) for c in cls.COLUMNS}
        return cls(**cols, classes=parts[0].classes)

    def take(self, mask_or_slice) -> "Records":
        cols = {c: getattr(self, c)[mask_or_slice] for c in self.COLUMNS}
        return Records(**cols, classes=self.classes)


def _as_records(records) -> Records:
    return records if isinstance(records, Records) else Records.from_pulses(records)


def sift(records, fixed_bob_basis: int | None = None) -> np.ndarray:
    """Sifted ``(alice_bit, bob_bit)`` pairs as an ``(n, 2)`` int array.

    With ``fixed_bob_basis`` set (simplified setup), only pulses Alice sent
    in that basis are kept, whatever basis is stored on the record.
    """
    if not isinstance(records, Records) and not records:
        return np.zeros((0, 2), dtype=np.int8)
    rec = _as_records(records)
    if fixed_bob_basis is None:
        keep = rec.sifted
    else:
        keep = rec.detected & (rec.alice_basis == fixed_bob_basis)
    return np.column_stack([rec.alice_bit[keep], rec.bob_bit[keep]]).astype(np.int8)


class NoDataError(ValueError):
    """Raised when an estimate is requested from zero samples."""


@dataclass(frozen=True)
class QberEstimate:
    qber: float
    std_error: float
    sifted_count: int
    error_count: int

    @classmethod
    def from_counts(cls, errors: int, sifted: int) -> "QberEstimate":
        if sifted <= 0:
            raise NoDataError("no sifted bits")
        if not 0 <= errors <= sifted:
            raise ValueError("error count must lie in [0, sifted]")
        q = errors / sifted
        return cls(q, math.sqrt(q * (1.0 - q) / sifted), int(sifted), int(errors))


def estimate_qber(sifted) -> QberEstimate:
    pairs = np.asarray(sifted)
    if pairs.size == 0:
        raise NoDataError("no sifted bits")
    pairs = pairs.reshape(-1, 2)
    errors = int(np.count_nonzero(pairs[:, 0] != pairs[:, 1]))
    return QberEstimate.from_counts(errors, len(pairs))


@dataclass(frozen=True)
class IntensityStats:
    sent: int
    detected: int
    qber: QberEstimate | None

    @property
    def gain(self) -> float:
        return self.detected / self.sent if self.sent else float("nan")


def per_intensity_stats(records) -> dict[str, IntensityStats]:
    rec = _as_records(records)
    out: dict[str, IntensityStats] = {}
    sifted, error, detected = rec.sifted, rec.error, rec.detected
    for i, cls in enumerate(rec.classes):
        m = rec.intensity == i
        n_sift = int(np.count_nonzero(sifted & m))
        q = QberEstimate.from_counts(int(np.count_nonzero(error & m)), n_sift) if n_sift else None
        out[cls.label] = IntensityStats(int(np.count_nonzero(m)), int(np.count_nonzero(detected & m)), q)
    return out


def read_replay_file(path, plan: DecoyPlan | None = None) -> np.ndarray:
    """Parse a replay file into an ``(n, 3)`` array of (bit, basis, class index).

    One symbol per line, ``bit basis [intensity]``; blank lines and ``#``
    comments are skipped. A missing intensity means signal.
    """
    plan = plan or DecoyPlan()
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{lineno}: expected 'bit basis [intensity]'")
        try:
            bit, basis = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bit and basis must be integers") from None
        if bit not in (0, 1) or basis not in (0, 1):
            raise ValueError(f"{path}:{lineno}: bit and basis must be 0 or 1")
        label = parts[2] if len(parts) == 3 else "signal"
        try:
            cls_idx = plan.label_index(label)
        except KeyError:
            raise ValueError(f"{path}:{lineno}: intensity {label!r} not in decoy plan") from None
        rows.append((bit, basis, cls_idx))
    if not rows:
        raise ValueError(f"{path}: replay file holds no symbols")
    return np.asarray(rows, dtype=np.int8)


def write_replay_file(path, symbols: Iterable[tuple[int, int]] | np.ndarray, labels: Sequence[str] | None = None) -> None:
    lines = []
    for i, (bit, basis) in enumerate(np.asarray(symbols).reshape(-1, 2)):
        suffix = f" {labels[i]}" if labels is not None else ""
        lines.append(f"{int(bit)} {int(basis)}{suffix}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def expected_detection_probability(optics: OpticsConfig, mean_photon_number=None) -> float:
    """Probability that at least one detector clicks (phase independent)."""
    mu = optics.mean_photon_number if mean_photon_number is None else mean_photon_number
    x = optics.detector_efficiency * mu * optics.transmittance
    return 1.0 - (1.0 - optics.dark_count_prob) ** 2 * math.exp(-x)


def expected_qber(optics: OpticsConfig, phase_offset: float = 0.0, mean_photon_number=None) -> float:
    """Matched-basis error rate including dark counts and double clicks.

    Closed form: the wrong port alone clicks, or both click and the coin
    picks the wrong port.
    """
    # bit 0 at dphi=offset; bit 1 at dphi=pi+offset gives the same error rate
    c1, c2 = detector_click_probabilities(phase_offset, optics, mean_photon_number)
    c_right, c_wrong = float(c2), float(c1)
    p_det = c_right + c_wrong - c_right * c_wrong
    if p_det == 0.0:
        return float("nan")
    return (c_wrong * (1.0 - c_right) + 0.5 * c_right * c_wrong) / p_det
