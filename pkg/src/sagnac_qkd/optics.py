"""AOM phase modulator, Sagnac interference, fiber loss and gated detection.

Everything here is a pure function of its arguments. Functions that take
probabilities or phases accept numpy arrays as well as scalars, which is
how the Monte Carlo engine calls them.

Port convention: detector ``ch1`` receives ``(1 - V cos dphi) / 2`` and
``ch2`` receives ``(1 + V cos dphi) / 2``, so ``ch2`` is the constructive
port at zero relative phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s, vacuum
TWO_PI = 2.0 * math.pi
PHASE_TOL = 1e-12


class ConfigError(ValueError):
    """A configuration value is outside its allowed range.

    ``key`` carries the dotted key path when the error originates from a
    config file, so diagnostics can name the offending entry.
    """

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


def _check(cond: bool, message: str, key: str) -> None:
    if not cond:
        raise ConfigError(message, key)


@dataclass(frozen=True)
class ModulatorConfig:
    """Fiber and AOM geometry plus the driver frequency plan.

    Attributes
    ----------
    effective_index : float
        Effective refractive index of the fiber (1.468 is typical SMF-28 at
        1550 nm; the value is an assumption, not a measured one).
    delay_length : float
        Fiber length in meters between the two passes through the shifter:
        the loop asymmetry L1 - L2 for a single AOM, or the fiber between
        the up- and down-shifting AOMs for the paired layout.
    paired_aoms : bool
        ``True`` for the up/down shifter pair (no net frequency shift,
        phase doubled), ``False`` for a single up-shifter.
    base_frequency : float
        Driving frequency in Hz that encodes phase 0.
    frequency_resolution : float
        Driver frequency granularity in Hz.
    """

    effective_index: float = 1.468
    delay_length: float = 700.0
    paired_aoms: bool = False
    base_frequency: float = 40e6
    frequency_resolution: float = 1.0

    def __post_init__(self):
        _check(1.0 <= self.effective_index <= 2.0, "must lie in [1, 2]", "effective_index")
        _check(self.delay_length > 0, "must be > 0", "delay_length")
        _check(self.base_frequency > 0, "must be > 0", "base_frequency")
        _check(self.frequency_resolution > 0, "must be > 0", "frequency_resolution")

    @property
    def radians_per_hertz(self) -> float:
        factor = 4.0 if self.paired_aoms else 2.0
        return factor * math.pi * self.effective_index * self.delay_length / SPEED_OF_LIGHT

    @property
    def hertz_per_cycle(self) -> float:
        """Frequency change that advances the relative phase by 2 pi."""
        return TWO_PI / self.radians_per_hertz


@dataclass(frozen=True)
class OpticsConfig:
    """Loop, channel and detector parameters.

    The loss budget defaults (0.2 dB/km, no lumped insertion loss) are
    assumptions; component losses are taken to be folded into the quoted
    overall detection efficiency.
    """

    visibility: float = 0.96
    loop_length: float = 40.0  # km
    attenuation: float = 0.2  # dB/km
    insertion_loss: float = 0.0  # dB
    detector_efficiency: float = 0.10
    dark_count_prob: float = 5e-5
    mean_photon_number: float = 0.8

    def __post_init__(self):
        _check(0.0 <= self.visibility <= 1.0, "must lie in [0, 1]", "visibility")
        _check(self.loop_length >= 0, "must be >= 0", "loop_length")
        _check(self.attenuation >= 0, "must be >= 0", "attenuation")
        _check(self.insertion_loss >= 0, "must be >= 0", "insertion_loss")
        _check(0.0 < self.detector_efficiency <= 1.0, "must lie in (0, 1]", "detector_efficiency")
        _check(0.0 <= self.dark_count_prob < 1.0, "must lie in [0, 1)", "dark_count_prob")
        _check(self.mean_photon_number >= 0, "must be >= 0", "mean_photon_number")

    @property
    def transmittance(self) -> float:
        return channel_transmittance(self.loop_length, self.attenuation, self.insertion_loss)


class PhaseShift(float):
    """A phase in radians, reduced to ``[0, 2 pi)``."""

    def __new__(cls, value: float):
        return super().__new__(cls, reduce_phase(value))

    def __repr__(self):
        return f"PhaseShift({float(self)!r})"


def reduce_phase(value):
    """Reduce a phase (scalar or array) into ``[0, 2 pi)``."""
    if np.ndim(value):
        out = np.mod(np.asarray(value, dtype=float), TWO_PI)
        out[out >= TWO_PI - PHASE_TOL] = 0.0
        return out
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"phase must be finite, got {value}")
    out = math.fmod(value, TWO_PI)
    if out < 0:
        out += TWO_PI
    if out >= TWO_PI - PHASE_TOL:
        out = 0.0
    return out


def phase_shift(f: float, config: ModulatorConfig) -> PhaseShift:
    """Relative phase imprinted by driving the shifter(s) at ``f`` hertz.

    ``2 pi n L f / C`` for one AOM, twice that for the paired layout.
    """
    f = float(f)
    if not math.isfinite(f):
        raise ValueError(f"frequency must be finite, got {f}")
    if f < 0:
        raise ValueError(f"frequency must be >= 0, got {f}")
    # fmod on n*L*f/C cycles keeps precision for f in the tens of MHz
    cycles = (2.0 if config.paired_aoms else 1.0) * config.effective_index * config.delay_length * f / SPEED_OF_LIGHT
    return PhaseShift(TWO_PI * math.fmod(cycles, 1.0))


def quantization_phase_error(config: ModulatorConfig) -> float:
    """Worst-case phase error from rounding to the driver resolution."""
    return 0.5 * config.frequency_resolution * config.radians_per_hertz


def frequency_for_phase(target: float, config: ModulatorConfig) -> float:
    """Driving frequency that encodes ``target`` relative to ``base_frequency``.

    Returns the smallest frequency >= ``base_frequency`` realizing the target
    offset, rounded to the driver resolution.

    Raises
    ------
    ValueError
        If ``target`` is outside ``[0, 2 pi)`` or the resolution is too coarse
        to hit the target within 1% of pi.
    """
    target = float(target)
    if not (0.0 <= target < TWO_PI):
        raise ValueError(f"target phase must lie in [0, 2pi), got {target}")
    exact = config.base_frequency + target / config.radians_per_hertz
    res = config.frequency_resolution
    quantized = round(exact / res) * res
    if quantized < config.base_frequency:
        quantized += res
    err = abs(quantized - exact) * config.radians_per_hertz
    if err > 0.01 * math.pi:
        raise ValueError(
            f"driver resolution {res} Hz gives {err:.4g} rad phase error for target {target:.6g} rad"
            " (limit 0.01*pi); resolution is insufficient"
        )
    return quantized


def arm_probabilities(delta_phi, visibility):
    """Probabilities that a photon exits towards ``ch1`` and ``ch2``."""
    v = np.asarray(visibility, dtype=float)
    if np.any((v < 0) | (v > 1)):
        raise ValueError("visibility must lie in [0, 1]")
    c = visibility * np.cos(delta_phi)
    p1 = 0.5 * (1.0 - c)
    return p1, 1.0 - p1


def qber_from_visibility(visibility: float) -> float:
    """Intrinsic error rate of an interferometer with contrast ``visibility``."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    return (1.0 - visibility) / 2.0


def channel_transmittance(loop_length: float, attenuation: float, insertion_loss: float) -> float:
    if min(loop_length, attenuation, insertion_loss) < 0:
        raise ValueError("loss inputs must be >= 0")
    return 10.0 ** (-(loop_length * attenuation + insertion_loss) / 10.0)


def click_probabilities(mu_at_detectors, efficiency, dark_count_prob, p_arm):
    """Gate click probability of one detector for a weak coherent pulse.

    Poissonian light split by a beam splitter gives independent Poisson
    streams, so each detector is evaluated on its own share ``p_arm``.
    """
    x = np.multiply(np.multiply(efficiency, mu_at_detectors), p_arm)
    return 1.0 - (1.0 - dark_count_prob) * np.exp(-x)
