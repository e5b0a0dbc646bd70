"""Phase-remapping intercept-resend attack: exact evaluation and search.

Eve sends her own pulses through Alice's single-AOM modulator with a fiber
delay of her choosing, so Alice's four driving frequencies imprint the
phases ``{0, delta, 2 delta, 3 delta}`` instead of the BB84 set. Eve then
measures each returned pulse with a projective analyzer on the equator and
either resends a phase state to Bob or suppresses the pulse.

Each pulse is treated as one phase-encoded qubit. Projecting a state of
phase ``phi`` on the analyzer state at angle ``theta`` succeeds with
probability ``cos^2((phi - theta) / 2)``; the second outcome of the same
analyzer is the projection on ``theta + pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from .optics import SPEED_OF_LIGHT, TWO_PI, ModulatorConfig, OpticsConfig

HALF_PI = 0.5 * math.pi
BB84_PHASES = (0.0, HALF_PI, math.pi, 1.5 * math.pi)
SECURE_QBER_BOUND = 0.189

# symbol k = basis + 2 * bit
_BASIS = np.array([0, 1, 0, 1])
_BIT = np.array([0, 0, 1, 1])


class InfeasibleAttack(ValueError):
    """The strategy or family cannot produce an admissible attack."""


@dataclass(frozen=True)
class RemapConfig:
    delta: float

    def __post_init__(self):
        if not (0.0 < self.delta <= HALF_PI + 1e-12):
            raise ValueError(f"remap delta must lie in (0, pi/2], got {self.delta}")

    @property
    def phases(self) -> np.ndarray:
        return remapped_phase_set(self.delta)


def remapped_phase_set(delta: float) -> np.ndarray:
    """Phases Alice's four frequencies imprint on Eve's pulses."""
    if not (0.0 < delta <= HALF_PI + 1e-12):
        raise ValueError(f"remap delta must lie in (0, pi/2], got {delta}")
    return np.arange(4) * float(delta)


def remap_delta_from_fiber(eve_length_delta: float, modulator: ModulatorConfig) -> float:
    """Phase spacing seen by Eve when her fiber delay replaces Alice's.

    Alice's per-symbol frequency step ``df`` (the pi/2 increment designed
    for ``modulator.delay_length``) acts over ``eve_length_delta`` instead.
    """
    if not eve_length_delta > 0:
        raise ValueError("eve_length_delta must be > 0")
    step = modulator.hertz_per_cycle / 4.0
    factor = 4.0 if modulator.paired_aoms else 2.0
    delta = factor * math.pi * modulator.effective_index * eve_length_delta * step / SPEED_OF_LIGHT
    if not (0.0 < delta <= HALF_PI + 1e-12):
        raise ValueError(
            f"Eve's fiber length {eve_length_delta} m gives delta={delta:.6g} rad outside (0, pi/2]"
        )
    return min(delta, HALF_PI)


@dataclass(frozen=True)
class EveStrategy:
    """Measure-and-resend strategy.

    Attributes
    ----------
    angles : tuple of float
        Analyzer angles; one is picked per pulse with ``weights``.
    weights : tuple of float
        Selection probabilities for the analyzers.
    policy : tuple of (resend, resend) pairs
        Per analyzer, the action for outcome 0 (projection on ``angle``)
        and outcome 1 (projection on ``angle + pi``). A float is the phase
        of the state resent to Bob; ``None`` suppresses the pulse.
    """

    angles: tuple[float, ...]
    weights: tuple[float, ...]
    policy: tuple[tuple[float | None, float | None], ...]

    def __post_init__(self):
        if not self.angles:
            raise InfeasibleAttack("strategy needs at least one analyzer")
        if len(self.weights) != len(self.angles):
            raise InfeasibleAttack("one weight per analyzer required")
        if len(self.policy) != len(self.angles) or any(len(p) != 2 for p in self.policy):
            raise InfeasibleAttack("policy must cover both outcomes of every analyzer")
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InfeasibleAttack(f"analyzer weights must be >= 0 and sum to 1, got {self.weights}")

    @property
    def resends_bb84_only(self) -> bool:
        for pair in self.policy:
            for s in pair:
                if s is not None and min(abs(s % TWO_PI - b) for b in (*BB84_PHASES, TWO_PI)) > 1e-9:
                    return False
        return True

    def to_dict(self) -> dict:
        return {
            "angles": [float(a) for a in self.angles],
            "weights": [float(w) for w in self.weights],
            "policy": [[None if s is None else float(s) for s in pair] for pair in self.policy],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EveStrategy":
        return cls(
            angles=tuple(float(a) for a in d["angles"]),
            weights=tuple(float(w) for w in d.get("weights", [1.0 / len(d["angles"])] * len(d["angles"]))),
            policy=tuple(tuple(None if s is None else float(s) for s in pair) for pair in d["policy"]),
        )


def intercept_resend() -> EveStrategy:
    """Textbook attack: measure in a random BB84 basis, resend the result."""
    return EveStrategy(
        angles=(0.0, HALF_PI),
        weights=(0.5, 0.5),
        policy=((0.0, math.pi), (HALF_PI, 1.5 * math.pi)),
    )


def always_resend(phase: float) -> EveStrategy:
    return EveStrategy(angles=(0.0,), weights=(1.0,), policy=((phase, phase),))


def suppress_all() -> EveStrategy:
    return EveStrategy(angles=(0.0,), weights=(1.0,), policy=((None, None),))


@dataclass(frozen=True)
class SymbolBreakdown:
    bit: int
    basis: int
    alice_phase: float
    forwarded: float  # probability Eve resends something
    sifted_error: float  # Bob error rate given sifted and detected


@dataclass(frozen=True)
class AttackResult:
    qber: float
    eve_information: float
    detection_suppression: float
    certain_fraction: float
    mutual_info_eve: float
    mutual_info_bob: float
    sift_probability: float
    breakdown: tuple[SymbolBreakdown, ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        d = {k: float(getattr(self, k)) for k in (
            "qber", "eve_information", "detection_suppression", "certain_fraction",
            "mutual_info_eve", "mutual_info_bob", "sift_probability")}
        d["breakdown"] = [vars(b) | {} for b in self.breakdown]
        return d


def _outcome_table(delta, angles, weights):
    """P(analyzer m, outcome o | symbol k), shape (4, M, 2)."""
    phi = np.arange(4)[:, None, None] * delta
    theta = np.asarray(angles, dtype=float)[None, :, None] + np.array([0.0, math.pi])[None, None, :]
    return np.asarray(weights, dtype=float)[None, :, None] * np.cos(0.5 * (phi - theta)) ** 2


def _bob_bit0(resend, visibility):
    """P(Bob bit 0 | resend phase, Alice's basis), shape (4, M, 2)."""
    s = np.asarray(resend, dtype=float)[None]
    bob = (_BASIS * HALF_PI)[:, None, None]
    return 0.5 * (1.0 + visibility * np.cos(s - bob))


def _resend_array(policy):
    arr = np.array([[np.nan if s is None else s for s in pair] for pair in policy], dtype=float)
    return arr


def _mutual_information(joint: np.ndarray) -> float:
    """I(X;Z) in bits from a joint table with X on axis 0."""
    total = joint.sum()
    if total <= 0:
        return 0.0
    p = joint / total
    px = p.sum(axis=1, keepdims=True)
    pz = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / (px @ pz)[nz])))


def evaluate_attack(strategy: EveStrategy, remap: RemapConfig, optics: OpticsConfig | None = None) -> AttackResult:
    """Exact attack statistics by enumeration of symbols, outcomes and bases.

    Bob measures the resent state ideally apart from the configured
    visibility; dark counts are ignored. The error rate is conditioned on
    Bob detecting the pulse and choosing Alice's basis.

    ``eve_information`` is ``min(1, I(A;E) / I(A;B))`` on the sifted key,
    with both mutual informations conditioned on the announced basis. It
    reaches 1 when Eve's record tells her at least as much about Alice's
    bits as Bob's results do. ``certain_fraction`` is the share of sifted
    bits whose value Bob is forced to by Eve's resend.

    Raises
    ------
    InfeasibleAttack
        If the strategy forwards nothing, so no sifted bits exist.
    """
    V = 1.0 if optics is None else optics.visibility
    P = _outcome_table(remap.delta, strategy.angles, strategy.weights)  # (4, M, 2)
    resend = _resend_array(strategy.policy)
    forwarded = ~np.isnan(resend)
    q0 = _bob_bit0(np.where(forwarded, resend, 0.0), V)
    err = np.where(_BIT[:, None, None] == 1, q0, 1.0 - q0)
    W = P * forwarded[None]
    sift_mass = W.sum()
    if sift_mass <= 0:
        raise InfeasibleAttack("no detections: the strategy suppresses every pulse")
    qber = float((W * err).sum() / sift_mass)

    certain = (np.abs(np.abs(np.cos(np.where(forwarded, resend, 0.0)[None] - (_BASIS * HALF_PI)[:, None, None])) * V - 1.0) < 1e-12)
    certain_fraction = float((W * certain).sum() / sift_mass)

    i_eve = i_bob = 0.0
    for a in (0, 1):
        ks = [a, a + 2]
        w_a = W[ks].sum()
        if w_a <= 0:
            continue
        joint_e = W[ks].reshape(2, -1)
        joint_b = np.stack([
            np.array([(W[k] * q0[k]).sum(), (W[k] * (1.0 - q0[k])).sum()]) for k in ks
        ])
        i_eve += w_a / sift_mass * _mutual_information(joint_e)
        i_bob += w_a / sift_mass * _mutual_information(joint_b)
    if i_bob <= 1e-12:
        eve_info = 1.0
    else:
        eve_info = min(1.0, i_eve / i_bob + 1e-12)

    breakdown = []
    for k in range(4):
        fwd = float(W[k].sum())
        breakdown.append(SymbolBreakdown(
            bit=int(_BIT[k]), basis=int(_BASIS[k]), alice_phase=float(k * remap.delta),
            forwarded=fwd, sifted_error=float((W[k] * err[k]).sum() / fwd) if fwd > 0 else float("nan"),
        ))
    return AttackResult(
        qber=qber,
        eve_information=float(eve_info),
        detection_suppression=float(1.0 - W.sum() / 4.0),
        certain_fraction=certain_fraction,
        mutual_info_eve=float(i_eve),
        mutual_info_bob=float(i_bob),
        sift_probability=float(sift_mass / 8.0),
        breakdown=tuple(breakdown),
    )


class SecurityRegime(str, Enum):
    SECURE = "within proven-secure regime"
    INSECURE = "insecure regime"


def security_margin(qber: float) -> SecurityRegime:
    """Classify a QBER against the 18.9% BB84 security threshold.

    A phase-remapping attack that lands in the secure regime is the
    dangerous case: Alice and Bob would keep the key.
    """
    if not 0.0 <= qber <= 1.0:
        raise ValueError("qber must lie in [0, 1]")
    return SecurityRegime.SECURE if qber < SECURE_QBER_BOUND else SecurityRegime.INSECURE


# -- search -----------------------------------------------------------------

@dataclass(frozen=True)
class AttackFamily:
    """Bounds of the strategy family searched by :func:`optimize_attack`.

    ``resend`` is ``"bb84"`` (resend one of the four ideal states) or
    ``"continuous"`` (any equatorial phase state). The grid spacings are
    used for the coarse stage only.
    """

    analyzers: int = 2
    resend: str = "continuous"
    delta_bounds: tuple[float, float] = (1e-3, HALF_PI)
    delta_step: float = 1e-3
    angle_step: float = math.radians(1.0)
    resend_step: float = math.pi / 12
    refine_candidates: int = 6

    def __post_init__(self):
        if self.analyzers not in (1, 2):
            raise ValueError("analyzers must be 1 or 2")
        if self.resend not in ("bb84", "continuous"):
            raise ValueError("resend must be 'bb84' or 'continuous'")
        lo, hi = self.delta_bounds
        if not (0.0 < lo <= hi <= HALF_PI + 1e-12):
            raise ValueError("delta bounds must satisfy 0 < lo <= hi <= pi/2")
        if self.delta_step <= 0 or self.angle_step <= 0 or self.resend_step <= 0:
            raise ValueError("grid steps must be > 0")

    def delta_grid(self) -> np.ndarray:
        lo, hi = self.delta_bounds
        n = int(math.floor((hi - lo) / self.delta_step + 1e-9)) + 1
        grid = lo + self.delta_step * np.arange(n)
        if hi - grid[-1] > 1e-12:
            grid = np.append(grid, hi)
        return np.minimum(grid, HALF_PI)

    def resend_options(self) -> np.ndarray:
        if self.resend == "bb84":
            return np.array(BB84_PHASES)
        n = int(round(TWO_PI / self.resend_step))
        return np.arange(n) * (TWO_PI / n)

    @classmethod
    def identity_remap(cls, **kw) -> "AttackFamily":
        return cls(delta_bounds=(HALF_PI, HALF_PI), **kw)


@dataclass(frozen=True)
class AttackOptimum:
    delta: float
    strategy: EveStrategy
    result: AttackResult
    trace: tuple[dict, ...] = field(repr=False, default=())


def _strategy_qber(delta, angles, weights, resend, V):
    P = _outcome_table(delta, angles, weights)
    fwd = ~np.isnan(resend)
    q0 = _bob_bit0(np.where(fwd, resend, 0.0), V)
    err = np.where(_BIT[:, None, None] == 1, q0, 1.0 - q0)
    W = P * fwd[None]
    s = W.sum()
    return float((W * err).sum() / s) if s > 1e-300 else 1.0


def _grid_stage(family: AttackFamily, V: float):
    """Exhaustive single-analyzer grid; returns best entry per resend pair.

    Each row is ``(qber, delta, theta, r0, r1)`` where ``r`` indexes the
    resend options and ``-1`` means suppress.
    """
    deltas = family.delta_grid()
    n_half = int(round(math.pi / family.angle_step))
    thetas = np.arange(2 * n_half) * (math.pi / n_half)
    options = family.resend_options()
    R = len(options)
    # error / forwarded mass of one projection outcome for each resend choice
    bob = _BASIS * HALF_PI
    q0 = 0.5 * (1.0 + V * np.cos(options[None, :] - bob[:, None]))  # (4, R)
    e_k = np.where(_BIT[:, None] == 1, q0, 1.0 - q0)
    e_k = np.concatenate([e_k, np.zeros((4, 1))], axis=1)  # suppress at index R
    s_k = np.concatenate([np.ones((4, R)), np.zeros((4, 1))], axis=1)

    best = {}
    chunk = max(1, 4_000_000 // (n_half * (R + 1) ** 2))
    for start in range(0, len(deltas), chunk):
        d = deltas[start:start + chunk]
        P = np.cos(0.5 * (np.arange(4)[None, None, :] * d[:, None, None] - thetas[None, :, None])) ** 2
        E = P @ e_k  # (D, 2H, R+1)
        S = P @ s_k
        E0, E1 = E[:, :n_half], E[:, n_half:]
        S0, S1 = S[:, :n_half], S[:, n_half:]
        num = E0[..., :, None] + E1[..., None, :]
        den = S0[..., :, None] + S1[..., None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
        flat = ratio.reshape(len(d) * n_half, (R + 1) ** 2)
        idx = np.argmin(flat, axis=0)
        vals = flat[idx, np.arange(flat.shape[1])]
        for pair, (i, v) in enumerate(zip(idx, vals)):
            if not np.isfinite(v):
                continue
            if pair not in best or v < best[pair][0] - 1e-15:
                di, ti = divmod(int(i), n_half)
                r0, r1 = divmod(pair, R + 1)
                best[pair] = (float(v), float(d[di]), float(thetas[ti]),
                              -1 if r0 == R else r0, -1 if r1 == R else r1)
    rows = sorted(best.values(), key=lambda r: (r[0], r[1], r[2], r[3], r[4]))
    return rows, options


def _refine(family: AttackFamily, V: float, delta, analyzers):
    """Nelder-Mead over delta, angles, weight and continuous resend phases.

    ``analyzers`` is a list of ``(theta, weight, (s0, s1))`` with ``None``
    for suppressed outcomes; which outcomes are suppressed stays fixed.
    """
    lo, hi = family.delta_bounds
    cont = family.resend == "continuous"
    slots = [(a, o) for a, (_, _, pol) in enumerate(analyzers) for o in (0, 1) if pol[o] is not None]
    x0 = [delta] + [th for th, _, _ in analyzers]
    if len(analyzers) == 2:
        x0.append(analyzers[0][1])
    if cont:
        x0 += [analyzers[a][2][o] for a, o in slots]

    def unpack(x):
        d = float(np.clip(x[0], lo, hi))
        n = len(analyzers)
        angles = tuple(float(t) % TWO_PI for t in x[1:1 + n])
        if n == 2:
            w0 = float(np.clip(x[1 + n], 0.0, 1.0))
            weights = (w0, 1.0 - w0)
            rest = x[2 + n:]
        else:
            weights = (1.0,)
            rest = x[1 + n:]
        policy = [list(pol) for _, _, pol in analyzers]
        if cont:
            for (a, o), s in zip(slots, rest):
                policy[a][o] = float(s) % TWO_PI
        return d, EveStrategy(angles, weights, tuple(tuple(p) for p in policy))

    def objective(x):
        d, strat = unpack(x)
        res = _resend_array(strat.policy)
        return _strategy_qber(d, strat.angles, strat.weights, res, V)

    x0 = np.asarray(x0, dtype=float)
    r = minimize(objective, x0, method="Nelder-Mead",
                 options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000 * len(x0), "maxfev": 8000 * len(x0)})
    x_best = r.x if r.fun <= objective(x0) else x0
    return unpack(x_best)


def optimize_attack(family: AttackFamily | None = None, optics: OpticsConfig | None = None) -> AttackOptimum:
    """Minimum-QBER attack in ``family`` that leaves Eve full information.

    A coarse exhaustive grid over delta, one analyzer angle and the resend
    policy seeds Nelder-Mead refinement of the best candidates. With two
    analyzers, pairs of the best single-analyzer candidates are refined
    jointly, and the single-analyzer optima stay in the candidate pool so
    enlarging the family can never raise the reported minimum.

    Raises
    ------
    InfeasibleAttack
        If no strategy in the family forwards anything with full information.
    """
    family = family or AttackFamily()
    V = 1.0 if optics is None else optics.visibility
    rows, options = _grid_stage(family, V)
    trace: list[dict] = []
    if not rows:
        raise InfeasibleAttack("family contains no strategy that forwards any pulse")
    trace.append({"stage": "grid", "qber": rows[0][0], "delta": rows[0][1], "theta": rows[0][2],
                  "policy": [rows[0][3], rows[0][4]], "evaluated_pairs": len(rows)})

    def as_pol(r):
        return tuple(None if i < 0 else float(options[i]) for i in r)

    seeds = rows[:family.refine_candidates]
    candidates = []
    for q, d, th, r0, r1 in seeds:
        base = [(th, 1.0, as_pol((r0, r1)))]
        candidates.append((q, d, EveStrategy((th,), (1.0,), (as_pol((r0, r1)),))))
        d_r, strat = _refine(family, V, d, base)
        q_r = _strategy_qber(d_r, strat.angles, strat.weights, _resend_array(strat.policy), V)
        trace.append({"stage": "refine-1", "seed_qber": q, "qber": q_r, "delta": d_r})
        candidates.append((q_r, d_r, strat))
    if family.analyzers == 2:
        singles = sorted(candidates, key=lambda c: c[0])[:family.refine_candidates]
        for i in range(len(singles)):
            for j in range(i + 1, len(singles)):
                qi, di, si = singles[i]
                qj, dj, sj = singles[j]
                base = [(si.angles[0], 0.5, si.policy[0]), (sj.angles[0], 0.5, sj.policy[0])]
                d_r, strat = _refine(family, V, min(di, dj), base)
                q_r = _strategy_qber(d_r, strat.angles, strat.weights, _resend_array(strat.policy), V)
                trace.append({"stage": "refine-2", "seed_qber": min(qi, qj), "qber": q_r, "delta": d_r})
                candidates.append((q_r, d_r, strat))

    feasible = []
    for q, d, strat in candidates:
        try:
            res = evaluate_attack(strat, RemapConfig(d), optics)
        except InfeasibleAttack:
            continue
        if res.eve_information >= 1.0 - 1e-9:
            key = (res.qber, d, *strat.angles)
            feasible.append((key, d, strat, res))
    if not feasible:
        raise InfeasibleAttack("no strategy in the family gives Eve full information")
    feasible.sort(key=lambda f: f[0])
    _, d, strat, res = feasible[0]
    trace.append({"stage": "result", "qber": res.qber, "delta": d})
    return AttackOptimum(delta=d, strategy=strat, result=res, trace=tuple(trace))
