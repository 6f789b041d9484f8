"""Modulation law, optimal phase and the iterative optimizers.

When the phases of an active subset of modes are shifted by ``theta``, every
target considered here (a pixel-pair coincidence rate, a sum of such rates,
or a classical intensity) follows

    value(theta) = C + A cos(2 theta + theta_A) + B cos(theta + theta_B).

For a two-photon state, a pair ``(k, l)`` has amplitude
``e^{2i theta} a + e^{i theta} b + c`` where ``a`` collects paths with both
photons through active modes, ``c`` both through reference modes and ``b``
the mixed paths. Then ``A e^{i theta_A} = 2 sum a c*``,
``B e^{i theta_B} = 2 sum (a b* + b c*)`` and ``C = sum |a|^2 + |b|^2 + |c|^2``.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import rng
from .measure import (
    classical_intensity,
    coincidence_map,
    default_target,
    OutputIntensity,
    estimate_gamma,
    pairs_for_sum,
    separable_coincidence_map,
    simulate_frames,
    sum_projection,
    target_value,
)
from .medium import ScatteringMatrix
from .state import TWO_PI, ClassicalField, PhaseMask, SeparableEnsemble, TwoPhotonState

CANONICAL_6 = (0.0, math.pi / 4, math.pi / 2, math.pi, 3 * math.pi / 2, 5 * math.pi / 4)

TargetKind = Literal["sum-coordinate", "pixel-pair", "classical-intensity"]


def wrap(theta):
    out = np.mod(theta, TWO_PI)
    if np.ndim(out) == 0:
        return 0.0 if out >= TWO_PI else float(out)
    out[out >= TWO_PI] = 0.0
    return out


# ------------------------------------------------------------------ types


@dataclass(frozen=True)
class ModulationModel:
    A: float
    B: float
    C: float
    theta_A: float = 0.0
    theta_B: float = 0.0

    def __post_init__(self):
        vals = (self.A, self.B, self.C, self.theta_A, self.theta_B)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("model parameters must be finite")
        if self.A < 0 or self.B < 0:
            raise ValueError("A and B must be nonnegative")

    @classmethod
    def from_phasors(cls, a: complex, b: complex, c: float) -> "ModulationModel":
        """Build from ``A e^{i theta_A}``, ``B e^{i theta_B}`` and ``C``."""
        return cls(abs(a), abs(b), float(c), wrap(np.angle(a)), wrap(np.angle(b)))

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.C + self.A * np.cos(2 * theta + self.theta_A) + self.B * np.cos(theta + self.theta_B)

    def derivative(self, theta):
        return -2 * self.A * np.sin(2 * theta + self.theta_A) - self.B * np.sin(theta + self.theta_B)

    def curvature(self, theta):
        return -4 * self.A * np.cos(2 * theta + self.theta_A) - self.B * np.cos(theta + self.theta_B)


@dataclass(frozen=True)
class QuarticReduction:
    D: float
    phi: float
    e_coef: float
    f_coef: float
    roots: tuple[float, ...]

    def residual(self, y: float) -> float:
        e, f = self.e_coef, self.f_coef
        return y**4 + 2 * e * y**3 + (f * f - 1 + e * e) * y**2 - 2 * e * y - e * e


@dataclass(frozen=True)
class Partition:
    active: np.ndarray  # boolean (N,)

    def __post_init__(self):
        a = np.asarray(self.active, dtype=bool)
        if a.ndim != 1 or not a.any() or a.all():
            raise ValueError("active set must be a non-empty proper subset")
        a.setflags(write=False)
        object.__setattr__(self, "active", a)

    @classmethod
    def from_indices(cls, n_modes: int, indices) -> "Partition":
        a = np.zeros(n_modes, dtype=bool)
        a[np.asarray(list(indices), dtype=int)] = True
        return cls(a)

    @property
    def reference(self) -> np.ndarray:
        return ~self.active


@dataclass(frozen=True)
class TargetSpec:
    """What to maximize.

    ``coord`` is the sum coordinate ``(row, col)`` for ``sum-coordinate``
    (default: the zero-frequency sum), ``((r1, c1), (r2, c2))`` for
    ``pixel-pair`` and ``(row, col)`` for ``classical-intensity`` (default:
    the zero-frequency pixel). ``noise_rel`` is the relative standard
    deviation of multiplicative Gaussian noise applied to scanned samples.
    """

    kind: TargetKind = "sum-coordinate"
    coord: tuple | None = None
    noise_rel: float = 0.0
    zero_diagonal: bool = False

    def __post_init__(self):
        if self.kind not in ("sum-coordinate", "pixel-pair", "classical-intensity"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.noise_rel < 0:
            raise ValueError("noise_rel must be >= 0")

    def resolved(self, out_shape) -> tuple:
        h, w = out_shape
        if self.kind == "sum-coordinate":
            s = tuple(self.coord) if self.coord is not None else default_target(out_shape)
            if not (0 <= s[0] <= 2 * h - 2 and 0 <= s[1] <= 2 * w - 2):
                raise ValueError(f"target {s} out of range")
            return s
        if self.kind == "pixel-pair":
            if self.coord is None:
                raise ValueError("pixel-pair target needs coordinates")
            (r1, c1), (r2, c2) = self.coord
            for r, c in ((r1, c1), (r2, c2)):
                if not (0 <= r < h and 0 <= c < w):
                    raise ValueError(f"pixel {(r, c)} out of range")
            return ((r1, c1), (r2, c2))
        p = tuple(self.coord) if self.coord is not None else (h // 2, w // 2)
        if not (0 <= p[0] < h and 0 <= p[1] < w):
            raise ValueError(f"pixel {p} out of range")
        return p

    def pairs(self, out_shape) -> tuple[np.ndarray, np.ndarray]:
        """Ordered pixel pairs (flat indices) whose coincidences are summed."""
        w = out_shape[1]
        c = self.resolved(out_shape)
        if self.kind == "sum-coordinate":
            return pairs_for_sum(out_shape, c, include_diagonal=not self.zero_diagonal)
        if self.kind == "pixel-pair":
            (r1, c1), (r2, c2) = c
            return np.array([r1 * w + c1]), np.array([r2 * w + c2])
        raise ValueError("classical-intensity target has no pixel pairs")

    def pixel(self, out_shape) -> int:
        if self.kind != "classical-intensity":
            raise ValueError("only classical targets have a single pixel")
        r, c = self.resolved(out_shape)
        return r * out_shape[1] + c


Source = TwoPhotonState | SeparableEnsemble | ClassicalField


@dataclass(frozen=True, eq=False)
class System:
    """An input (two-photon state, separable ensemble or classical field) and a medium."""

    source: Source
    medium: ScatteringMatrix

    def __post_init__(self):
        if self.source.grid.n_modes != self.medium.N:
            raise ValueError("source and medium disagree on the number of modes")

    @property
    def n_modes(self) -> int:
        return self.medium.N

    @property
    def is_classical(self) -> bool:
        return isinstance(self.source, ClassicalField)

    def check_target(self, target: TargetSpec):
        if self.is_classical != (target.kind == "classical-intensity"):
            raise ValueError(f"target {target.kind!r} does not fit a {type(self.source).__name__} input")


@dataclass
class StepRecord:
    index: int
    partition_seed: int
    applied_phase: float
    value_before: float
    value_after: float
    accepted: bool


@dataclass
class OptimizationTrace:
    steps: list[StepRecord] = field(default_factory=list)
    final_mask: PhaseMask | None = None
    wall_clock: float = 0.0
    config: dict = field(default_factory=dict)
    early_stopped: bool = False

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def values(self) -> np.ndarray:
        """Target after each step, preceded by the initial value."""
        if not self.steps:
            return np.zeros(0)
        return np.array([self.steps[0].value_before] + [s.value_after if s.accepted else s.value_before for s in self.steps])

    @property
    def monotone(self) -> bool:
        v = self.values
        return bool(np.all(np.diff(v) >= -1e-12 * np.max(np.abs(v), initial=1.0)))

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("step,value_before,value_after,applied_phase,accepted\n")
            for s in self.steps:
                f.write(f"{s.index},{s.value_before!r},{s.value_after!r},{s.applied_phase!r},{int(s.accepted)}\n")

    def header(self) -> dict:
        return {"config_hash": self.config_hash, "config": self.config, "wall_clock": self.wall_clock,
                "n_steps": len(self.steps), "early_stopped": self.early_stopped}


# ------------------------------------------------------ direct evaluation


def evaluate_batch(system: System, thetas: np.ndarray, target: TargetSpec) -> np.ndarray:
    """Exact target value for each row of ``thetas`` (shape (G, N))."""
    system.check_target(target)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    e = np.exp(1j * thetas)  # (G, N)
    t = system.medium.t
    src = system.source
    if isinstance(src, ClassicalField):
        k = target.pixel(system.medium.out_shape)
        return np.abs((e * src.amplitudes) @ t[k]) ** 2
    k, l = target.pairs(system.medium.out_shape)
    tk, tl = t[k], t[l]  # (P, N)
    if isinstance(src, TwoPhotonState):
        # amp[g, p] = sum_mn tk[p,m] e[g,m] psi[m,n] e[g,n] tl[p,n]
        right = (e[:, None, :] * tl[None, :, :]) @ src.psi.T  # (G, P, N)
        amp = np.sum(e[:, None, :] * tk[None, :, :] * right, axis=-1)
        return np.sum(np.abs(amp) ** 2, axis=1)
    u = np.abs((e[:, None, :] * src.phi[None]) @ tk.T) ** 2  # (G, J, P)
    v = np.abs((e[:, None, :] * src.chi[None]) @ tl.T) ** 2
    return np.einsum("j,gjp,gjp->g", src.weights, u, v)


def evaluate(system: System, mask: PhaseMask | np.ndarray, target: TargetSpec) -> float:
    theta = mask.theta if isinstance(mask, PhaseMask) else np.asarray(mask, dtype=float)
    return float(evaluate_batch(system, theta[None, :], target)[0])


def target_from_maps(system: System, mask: PhaseMask, target: TargetSpec) -> float:
    """Same as :func:`evaluate` but through the full map pipeline (slow oracle)."""
    src, med = system.source, system.medium
    if isinstance(src, ClassicalField):
        r, c = target.resolved(med.out_shape)
        return float(classical_intensity(src, mask, med).image[r, c])
    gmap = coincidence_map(src, mask, med) if isinstance(src, TwoPhotonState) else separable_coincidence_map(src, mask, med)
    if target.kind == "pixel-pair":
        k, l = target.pairs(med.out_shape)
        return float(gmap.gamma[k[0], l[0]])
    return target_value(sum_projection(gmap, target.zero_diagonal), target.resolved(med.out_shape))


# --------------------------------------------------------- modulation law


def predict_modulation(source: Source, mask: PhaseMask, medium: ScatteringMatrix, partition: Partition,
                       target: TargetSpec) -> ModulationModel:
    """Exact modulation coefficients for shifting the active set of ``partition``."""
    system = System(source, medium)
    system.check_target(target)
    act = partition.active
    if act.shape != (medium.N,):
        raise ValueError("partition size does not match the medium")
    e = mask.phasors()
    t = medium.t
    if isinstance(source, ClassicalField):
        row = t[target.pixel(medium.out_shape)] * source.amplitudes * e
        u_m, u_n = row[act].sum(), row[~act].sum()
        return ModulationModel.from_phasors(0.0, 2 * u_m * np.conj(u_n), abs(u_m) ** 2 + abs(u_n) ** 2)
    k, l = target.pairs(medium.out_shape)
    tk, tl = t[k], t[l]
    if isinstance(source, TwoPhotonState):
        psi = source.psi * np.outer(e, e)
        ref = ~act
        y_act = tk[:, act] @ psi[act]  # photon 1 through active modes
        y_ref = tk[:, ref] @ psi[ref]
        a = np.sum(y_act[:, act] * tl[:, act], axis=1)
        c = np.sum(y_ref[:, ref] * tl[:, ref], axis=1)
        b = np.sum(y_act[:, ref] * tl[:, ref], axis=1) + np.sum(y_ref[:, act] * tl[:, act], axis=1)
        big_c = np.sum(np.abs(a) ** 2 + np.abs(b) ** 2 + np.abs(c) ** 2)
        if big_c == 0:
            raise ValueError("target is identically zero")
        return ModulationModel.from_phasors(2 * np.sum(a * np.conj(c)), 2 * np.sum(a * np.conj(b) + b * np.conj(c)), big_c)
    phi = source.phi * e
    chi = source.chi * e
    u_m, u_n = phi[:, act] @ tk[:, act].T, phi[:, ~act] @ tk[:, ~act].T  # (J, P)
    v_m, v_n = chi[:, act] @ tl[:, act].T, chi[:, ~act] @ tl[:, ~act].T
    p_int = np.abs(u_m) ** 2 + np.abs(u_n) ** 2
    q_int = np.abs(v_m) ** 2 + np.abs(v_n) ** 2
    alpha = 2 * u_m * np.conj(u_n)
    beta = 2 * v_m * np.conj(v_n)
    w = source.weights[:, None]
    big_c = np.sum(w * (p_int * q_int + 0.5 * np.real(alpha * np.conj(beta))))
    if big_c == 0:
        raise ValueError("target is identically zero")
    return ModulationModel.from_phasors(np.sum(w * 0.5 * alpha * beta), np.sum(w * (p_int * beta + q_int * alpha)), big_c)


def offset_mask(mask: PhaseMask, partition: Partition, theta: float) -> PhaseMask:
    return PhaseMask(mask.grid, mask.theta + theta * partition.active)


@dataclass(frozen=True)
class FrameScan:
    """Estimate scanned coincidences from simulated frames instead of exactly."""

    P: int = 10000
    pair_rate: float = 5.0
    singles_rate: float = 0.0
    dark_prob: float = 0.0
    efficiency: float = 1.0


def scan_target(system: System, mask: PhaseMask, partition: Partition, phases: Sequence[float], target: TargetSpec,
                gen: np.random.Generator | None = None, mode: Literal["model", "direct", "frames"] = "direct",
                frames: FrameScan | None = None) -> np.ndarray:
    """Target value with the active set offset by each phase.

    ``mode="model"`` evaluates the exact modulation law, ``"direct"`` re-propagates
    the state, ``"frames"`` simulates detector frames and estimates the target.
    Multiplicative noise from ``target.noise_rel`` is then applied using ``gen``.
    """
    phases = np.asarray(phases, dtype=float)
    if phases.size < 1:
        raise ValueError("need at least one phase")
    if mode == "model":
        values = predict_modulation(system.source, mask, system.medium, partition, target)(phases)
    elif mode == "direct":
        values = evaluate_batch(system, mask.theta[None, :] + np.outer(phases, partition.active), target)
    elif mode == "frames":
        if system.is_classical or not isinstance(system.source, TwoPhotonState):
            raise ValueError("frame scans need a two-photon state")
        fs = frames or FrameScan()
        if gen is None:
            raise ValueError("frame scans need a random generator")
        values = np.empty(phases.size)
        meta = {"pair_rate": fs.pair_rate, "singles_rate": fs.singles_rate, "dark_prob": fs.dark_prob, "efficiency": fs.efficiency}
        for i, ph in enumerate(phases):
            gmap = coincidence_map(system.source, offset_mask(mask, partition, ph), system.medium)
            singles = None
            if fs.singles_rate > 0:
                singles = OutputIntensity(gmap.gamma.sum(axis=1).reshape(gmap.out_shape))
            stack = simulate_frames(gmap, singles, fs.P, meta, int(gen.integers(2**63)))
            est = estimate_gamma(stack)
            if target.kind == "pixel-pair":
                k, l = target.pairs(system.medium.out_shape)
                values[i] = est.gamma[k[0], l[0]]
            else:
                values[i] = target_value(sum_projection(est), target.resolved(system.medium.out_shape))
    else:
        raise ValueError(f"unknown scan mode {mode!r}")
    values = np.array(values, dtype=float)
    if target.noise_rel > 0:
        if gen is None:
            raise ValueError("noisy scans need a random generator")
        values = np.clip(values * (1 + target.noise_rel * gen.standard_normal(values.shape)), 0.0, None)
    return values


def extract_6pt(samples) -> ModulationModel:
    """Closed-form model from samples at the six canonical phases.

    ``samples`` is a sequence ordered like :data:`CANONICAL_6` or a mapping
    phase -> value. The imaginary part of ``A e^{i theta_A}`` carries a minus
    sign: with ``value = C + A cos(2 theta + theta_A) + ...`` the pi/4 and 5pi/4
    samples add up to ``2C - 2A sin(theta_A)``.
    """
    if isinstance(samples, dict):
        lookup = {round(float(k), 9): v for k, v in samples.items()}
        try:
            samples = [lookup[round(p, 9)] for p in CANONICAL_6]
        except KeyError as exc:
            raise ValueError("samples must cover the six canonical phases") from exc
    g0, g_q, g_h, g_pi, g_3h, g_5q = (float(v) for v in samples)
    c = (g0 + g_h + g_pi + g_3h) / 4
    a = complex((g0 + g_pi - 2 * c) / 2, -(g_q + g_5q - 2 * c) / 2)
    b = complex((g0 - g_pi) / 2, (g_3h - g_h) / 2)
    return ModulationModel.from_phasors(a, b, c)


def fit_model(phases, values) -> tuple[ModulationModel, float]:
    """Least-squares fit of the modulation law; returns the model and R^2."""
    phases = np.asarray(phases, dtype=float)
    values = np.asarray(values, dtype=float)
    if phases.shape != values.shape or phases.ndim != 1:
        raise ValueError("phases and values must be matching 1-D arrays")
    distinct = np.unique(np.round(np.mod(phases, TWO_PI), 9) % round(TWO_PI, 9))
    if distinct.size < 5:
        raise ValueError("need at least 5 distinct phases")
    design = np.stack([np.cos(2 * phases), np.sin(2 * phases), np.cos(phases), np.sin(phases), np.ones_like(phases)], axis=1)
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    if np.linalg.matrix_rank(design) < 5:
        raise ValueError("rank-deficient design")
    a1, a2, b1, b2, c = coef
    model = ModulationModel.from_phasors(complex(a1, -a2), complex(b1, -b2), c)
    resid = values - design @ coef
    ss_tot = np.sum((values - values.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else float(1 - np.sum(resid**2) / ss_tot)
    return model, r2


# ------------------------------------------------------------ optimal phase


def quartic_reduction(model: ModulationModel) -> QuarticReduction:
    """Stationary points of ``A cos 2x + B cos(x + phi)`` with ``x = theta + theta_A/2``.

    With ``X = cos x``, ``Y = sin x``: ``XY + fY + eX = 0`` and ``X^2 + Y^2 = 1``.
    """
    if model.A == 0:
        raise ValueError("quartic reduction needs A > 0")
    d = model.B / (4 * model.A)
    phi = model.theta_B - model.theta_A / 2
    e, f = d * math.sin(phi), d * math.cos(phi)
    raw = np.roots([1.0, 2 * e, e * e + f * f - 1, -2 * e, -e * e])
    roots = []
    for r in raw:
        if abs(r.imag) <= 1e-7 * max(1.0, abs(r)):
            y = float(np.clip(r.real, -1.0, 1.0))
            # one Newton step against the monic polynomial to tighten the root
            p = y**4 + 2 * e * y**3 + (e * e + f * f - 1) * y**2 - 2 * e * y - e * e
            dp = 4 * y**3 + 6 * e * y**2 + 2 * (e * e + f * f - 1) * y - 2 * e
            if dp != 0:
                y = float(np.clip(y - p / dp, -1.0, 1.0))
            roots.append(y)
    return QuarticReduction(d, phi, e, f, tuple(roots))


def _polish(model: ModulationModel, theta) -> np.ndarray:
    """Newton steps toward the nearest maximum, keeping the best point seen per start."""
    best = np.array(theta, dtype=float)
    best_v = model(best)
    x = best.copy()
    for _ in range(8):
        c = model.curvature(x)
        ok = c < 0
        if not ok.any():
            break
        x = np.where(ok, x - model.derivative(x) / np.where(ok, c, -1.0), x)
        v = model(x)
        better = ok & (v > best_v)
        best = np.where(better, x, best)
        best_v = np.where(better, v, best_v)
    return best


def optimal_phase(model: ModulationModel, tie_tol: float = 1e-12) -> float:
    """Argmax of the modulation law over [0, 2 pi); ties go to the smallest angle."""
    A, B = model.A, model.B
    tA, tB = model.theta_A, model.theta_B
    scale = A + B
    if scale == 0:
        return 0.0
    if A <= 1e-15 * scale:
        return wrap(-tB)
    candidates = [-tB, -tA / 2, -tA / 2 + math.pi, -tB + math.pi / 2]
    if B > 1e-15 * scale:
        if abs(math.remainder(tA - 2 * tB, TWO_PI)) < 1e-13:
            return wrap(-tB)
        q = quartic_reduction(model)
        for y in q.roots:
            xs = [math.asin(y), math.pi - math.asin(y)]
            if abs(y + q.e_coef) > 1e-12:
                xs.append(math.atan2(y, -q.f_coef * y / (y + q.e_coef)))
            candidates.extend(x - tA / 2 for x in xs)
    thetas = wrap(_polish(model, np.array(candidates)))
    values = model(thetas)
    top = values.max()
    tied = thetas[values >= top - tie_tol * scale]
    return float(tied.min())


# --------------------------------------------------------------- optimizers


def _parse_scheme(scheme: str) -> np.ndarray | None:
    if scheme == "6pt":
        return None
    if scheme.startswith("fit(") and scheme.endswith(")"):
        n = int(scheme[4:-1])
        if n < 5:
            raise ValueError("fit scheme needs at least 5 phases")
        return TWO_PI * np.arange(n) / n
    raise ValueError(f"unknown phase scheme {scheme!r}")


def _early_stop(values: list[float], window: int = 20, tol: float = 1e-4) -> bool:
    if len(values) <= window:
        return False
    old, new = values[-window - 1], values[-1]
    return abs(new - old) <= tol * max(abs(old), 1e-300)


def optimize(system: System, target: TargetSpec, steps: int, fraction: float = 0.5, scheme: str = "fit(10)",
             seed: int = 0, mask0: PhaseMask | None = None, reject_on_decrease: bool = False,
             early_stop: bool = False, scan: Literal["model", "direct", "frames"] = "model",
             frames: FrameScan | None = None) -> OptimizationTrace:
    """Random-partition phase optimization.

    Each step picks ``ceil(fraction * N)`` active modes, scans their common
    phase offset, estimates the modulation law and adds its optimal phase to
    the active modes. Recorded values are exact target values.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    system.check_target(target)
    phases = _parse_scheme(scheme)
    if phases is None:
        phases = np.array(CANONICAL_6)
    n = system.n_modes
    n_active = min(max(1, math.ceil(fraction * n)), n - 1) if n > 1 else 0
    if n_active == 0:
        raise ValueError("need at least two modes")
    grid = system.source.grid
    mask = mask0 if mask0 is not None else PhaseMask.flat(grid)
    part_gen = rng.stream(seed, "partition")
    noise_gen = rng.stream(seed, "noise")
    trace = OptimizationTrace(config={"seed": seed, "steps": steps, "fraction": fraction, "scheme": scheme,
                                      "target": target.kind, "coord": target.coord, "noise_rel": target.noise_rel,
                                      "reject_on_decrease": reject_on_decrease, "scan": scan})
    t0 = time.perf_counter()
    history = [evaluate(system, mask, target)]
    for i in range(steps):
        step_seed = int(part_gen.integers(2**63))
        active = np.random.Generator(np.random.PCG64(step_seed)).permutation(n)[:n_active]
        part = Partition.from_indices(n, active)
        exact = predict_modulation(system.source, mask, system.medium, part, target)
        before = history[-1]
        samples = scan_target(system, mask, part, phases, target, noise_gen, scan, frames)
        est = extract_6pt(samples) if scheme == "6pt" else fit_model(phases, samples)[0]
        # round-off-level modulation: nothing to gain, keep the mask
        theta = 0.0 if est.A + est.B <= 1e-10 * abs(est.C) else optimal_phase(est)
        after = float(exact(theta))
        accepted = not (reject_on_decrease and after < before)
        if accepted:
            mask = offset_mask(mask, part, theta)
        trace.steps.append(StepRecord(i, step_seed, theta, before, after, accepted))
        history.append(after if accepted else before)
        if early_stop and _early_stop(history):
            trace.early_stopped = True
            break
    trace.final_mask = mask
    trace.wall_clock = time.perf_counter() - t0
    return trace


def optimize_nonclassical(system: System, target: TargetSpec | None = None, steps: int = 200, fraction: float = 0.5,
                          phase_scheme: str = "fit(10)", seed: int = 0, **kwargs) -> OptimizationTrace:
    target = target or TargetSpec("sum-coordinate")
    if system.is_classical:
        raise ValueError("non-classical optimization needs a two-photon input")
    return optimize(system, target, steps, fraction, phase_scheme, seed, **kwargs)


def optimize_classical(system: System, target: TargetSpec | tuple | None = None, steps: int = 200,
                       fraction: float = 0.5, phase_scheme: str = "fit(10)", seed: int = 0,
                       **kwargs) -> OptimizationTrace:
    if target is None or isinstance(target, tuple):
        target = TargetSpec("classical-intensity", target)
    if not system.is_classical:
        raise ValueError("classical optimization needs a classical field")
    return optimize(system, target, steps, fraction, phase_scheme, seed, **kwargs)


def spins_to_theta(sigma: np.ndarray) -> np.ndarray:
    """sigma = +1 -> 0, sigma = -1 -> pi/2 (so that e^{2i theta} = sigma)."""
    return np.where(np.asarray(sigma) > 0, 0.0, math.pi / 2)


def theta_to_spins(theta: np.ndarray) -> np.ndarray:
    theta = wrap(np.asarray(theta, dtype=float))
    if not np.all(np.isclose(theta, 0.0) | np.isclose(theta, math.pi / 2)):
        raise ValueError("binary masks use phases 0 and pi/2 only")
    return np.where(np.isclose(theta, 0.0), 1, -1)


def optimize_binary_spins(system, target: TargetSpec | None = None, steps: int = 300, flip_fraction: float = 0.25,
                          seed: int = 0, sigma0: np.ndarray | None = None) -> OptimizationTrace:
    """Random multi-spin flips on a {0, pi/2} mask, kept only if the target rises.

    ``system`` is a :class:`System` (target evaluated exactly) or any object
    with ``n_spins`` and ``spin_value(sigma) -> float`` to be maximized.
    The trace records ``-value`` (the energy) before and after each step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0 < flip_fraction <= 1:
        raise ValueError("flip_fraction must lie in (0, 1]")
    if isinstance(system, System):
        target = target or TargetSpec("sum-coordinate")
        system.check_target(target)
        n = system.n_modes

        def value(s):
            return evaluate(system, spins_to_theta(s), target)
    else:
        n = system.n_spins
        value = system.spin_value
    gen = rng.stream(seed, "spins")
    sigma = np.asarray(sigma0, dtype=int).copy() if sigma0 is not None else np.where(gen.random(n) < 0.5, 1, -1)
    n_flip = max(1, int(round(flip_fraction * n)))
    current = value(sigma)
    trace = OptimizationTrace(config={"seed": seed, "steps": steps, "flip_fraction": flip_fraction, "binary": True})
    t0 = time.perf_counter()
    for i in range(steps):
        step_seed = int(gen.integers(2**63))
        flip = np.random.Generator(np.random.PCG64(step_seed)).permutation(n)[:n_flip]
        trial = sigma.copy()
        trial[flip] *= -1
        v = value(trial)
        accepted = v > current
        trace.steps.append(StepRecord(i, step_seed, math.pi / 2, -current, -v, bool(accepted)))
        if accepted:
            sigma, current = trial, v
    trace.wall_clock = time.perf_counter() - t0
    trace.config["final_sigma"] = sigma.tolist()
    if isinstance(system, System):
        trace.final_mask = PhaseMask(system.source.grid, spins_to_theta(sigma))
    return trace


def binary_energies(trace: OptimizationTrace) -> np.ndarray:
    """Energy after each step of a binary-spin trace (initial value first)."""
    return trace.values


# ---------------------------------------------------------------- landscape


def strict_local_maxima(values: np.ndarray) -> int:
    """Count points above all 8 neighbours on a periodic grid."""
    v = np.asarray(values, dtype=float)
    is_max = np.ones(v.shape, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr or dc:
                is_max &= v > np.roll(np.roll(v, dr, axis=0), dc, axis=1)
    return int(is_max.sum())


def landscape_scan(system: System, free_modes: tuple[int, int] = (0, 1), resolution: int = 200,
                   target: TargetSpec | None = None, base_mask: PhaseMask | None = None) -> tuple[np.ndarray, int]:
    """Target over a torus of phases for two modes, and its count of strict local maxima."""
    if system.n_modes < 3:
        raise ValueError("landscape needs at least 3 modes (one kept as reference)")
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    m1, m2 = free_modes
    if m1 == m2:
        raise ValueError("free modes must differ")
    if target is None:
        target = TargetSpec("classical-intensity") if system.is_classical else TargetSpec("sum-coordinate")
    base = base_mask.theta if base_mask is not None else np.zeros(system.n_modes)
    th = TWO_PI * np.arange(resolution) / resolution
    t1, t2 = np.meshgrid(th, th, indexing="ij")
    thetas = np.tile(base, (resolution * resolution, 1))
    thetas[:, m1] = base[m1] + t1.ravel()
    thetas[:, m2] = base[m2] + t2.ravel()
    out = np.empty(resolution * resolution)
    chunk = 4096
    for i in range(0, out.size, chunk):
        out[i:i + chunk] = evaluate_batch(system, thetas[i:i + chunk], target)
    grid = out.reshape(resolution, resolution)
    return grid, strict_local_maxima(grid)


def phasor_similarity(a: PhaseMask | np.ndarray, b: PhaseMask | np.ndarray, weights: np.ndarray | None = None) -> float:
    """|<e^{i a}, e^{i b}>| / N: 1 for masks equal up to a global phase."""
    ta = a.theta if isinstance(a, PhaseMask) else np.asarray(a)
    tb = b.theta if isinstance(b, PhaseMask) else np.asarray(b)
    w = np.ones_like(ta) if weights is None else np.asarray(weights, dtype=float)
    return float(abs(np.sum(w * np.exp(1j * (ta - tb)))) / np.sum(w))

