"""Two-photon input states and classical probe fields on the SLM mode grid.

All states are discretized on a grid of macropixels (input modes). The
two-photon amplitude ``psi[m, n]`` is sampled at macropixel centers and
normalized to unit Frobenius norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

TWO_PI = 2.0 * math.pi

#: Upper bound on the number of mixed-state components built by default.
MAX_COMPONENTS = 4096


@dataclass(frozen=True)
class ModeGrid:
    """Grid of ``n_side`` x ``n_cols`` macropixels of width ``pitch`` (meters).

    ``n_cols`` defaults to ``n_side`` (square grid). Mode index ``n`` maps to
    ``(i, j) = divmod(n, n_cols)`` (row-major); coordinates are centered.
    """

    n_side: int
    pitch: float
    n_cols: int | None = None

    def __post_init__(self):
        if self.n_side < 1 or (self.n_cols is not None and self.n_cols < 1):
            raise ValueError("grid must contain at least one mode")
        if not self.pitch > 0:
            raise ValueError("pitch must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_side, self.n_cols if self.n_cols is not None else self.n_side)

    @property
    def n_modes(self) -> int:
        h, w = self.shape
        return h * w

    def index(self, i: int, j: int) -> int:
        h, w = self.shape
        if not (0 <= i < h and 0 <= j < w):
            raise IndexError((i, j))
        return i * w + j

    def ij(self, n: int) -> tuple[int, int]:
        if not 0 <= n < self.n_modes:
            raise IndexError(n)
        return divmod(n, self.shape[1])

    def coords(self) -> np.ndarray:
        """Mode centers, shape (N, 2), columns (row offset, column offset) in meters."""
        h, w = self.shape
        i, j = np.divmod(np.arange(h * w), w)
        return self.pitch * np.stack([i - (h - 1) / 2.0, j - (w - 1) / 2.0], axis=1)

    def to_dict(self) -> dict:
        h, w = self.shape
        return {"n_side": h, "n_cols": w, "pitch": self.pitch}

    @classmethod
    def from_dict(cls, d: dict) -> "ModeGrid":
        n_cols = d.get("n_cols")
        if n_cols == d["n_side"]:
            n_cols = None
        return cls(int(d["n_side"]), float(d["pitch"]), None if n_cols is None else int(n_cols))


@dataclass(frozen=True)
class GaussianStateParams:
    sigma_r: float  # position correlation width, m
    sigma_k: float  # momentum correlation width, 1/m

    def __post_init__(self):
        if not (self.sigma_r > 0 and self.sigma_k > 0):
            raise ValueError("sigma_r and sigma_k must be positive")


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    grid: ModeGrid
    psi: np.ndarray
    label: str = ""

    def __post_init__(self):
        n = self.grid.n_modes
        if self.psi.shape != (n, n):
            raise ValueError(f"psi must be {n}x{n}, got {self.psi.shape}")
        self.psi.setflags(write=False)


@dataclass(frozen=True, eq=False)
class SeparableEnsemble:
    """Mixture of product states ``sum_j p_j |phi_j chi_j><phi_j chi_j|``.

    ``weights`` has shape (J,), ``phi`` and ``chi`` shape (J, N) with unit rows.
    """

    grid: ModeGrid
    weights: np.ndarray
    phi: np.ndarray
    chi: np.ndarray
    label: str = ""

    def __post_init__(self):
        n = self.grid.n_modes
        j = len(self.weights)
        if self.phi.shape != (j, n) or self.chi.shape != (j, n):
            raise ValueError("component vectors must have shape (J, N)")
        if np.any(self.weights < 0) or not math.isclose(float(self.weights.sum()), 1.0, rel_tol=1e-9):
            raise ValueError("weights must be nonnegative and sum to 1")
        for a in (self.weights, self.phi, self.chi):
            a.setflags(write=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def psi(self, j: int = 0) -> np.ndarray:
        return np.outer(self.phi[j], self.chi[j])


@dataclass(frozen=True, eq=False)
class ClassicalField:
    grid: ModeGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (self.grid.n_modes,):
            raise ValueError("field length must equal the number of modes")
        self.amplitudes.setflags(write=False)


@dataclass(frozen=True, eq=False)
class PhaseMask:
    grid: ModeGrid
    theta: np.ndarray = field(default=None)

    def __post_init__(self):
        theta = self.theta
        if theta is None:
            theta = np.zeros(self.grid.n_modes)
        theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        if theta.shape != (self.grid.n_modes,):
            raise ValueError("mask length must equal the number of modes")
        # 2*pi - tiny can round up to 2*pi under mod
        theta[theta >= TWO_PI] = 0.0
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def flat(cls, grid: ModeGrid) -> "PhaseMask":
        return cls(grid, np.zeros(grid.n_modes))

    def phasors(self) -> np.ndarray:
        return np.exp(1j * self.theta)


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def build_double_gaussian(grid: ModeGrid, params: GaussianStateParams, label: str = "double-gaussian") -> TwoPhotonState:
    r = grid.coords()
    diff = r[:, None, :] - r[None, :, :]
    summ = r[:, None, :] + r[None, :, :]
    # evaluate in log space so extreme widths underflow gracefully
    log_psi = -np.sum(diff**2, axis=-1) / (4.0 * params.sigma_r**2) - np.sum(summ**2, axis=-1) * params.sigma_k**2 / 4.0
    log_psi -= log_psi.max()
    psi = np.exp(log_psi).astype(complex)
    psi = 0.5 * (psi + psi.T)
    return TwoPhotonState(grid, psi / np.linalg.norm(psi), label)


def schmidt_number(params: GaussianStateParams) -> float:
    x = params.sigma_r * params.sigma_k
    return 0.25 * (x + 1.0 / x) ** 2


def gaussian_beam(grid: ModeGrid, sigma_k: float) -> np.ndarray:
    """Normalized real envelope exp(-|r|^2 sigma_k^2 / 8)."""
    if not sigma_k > 0:
        raise ValueError("sigma_k must be positive")
    r2 = np.sum(grid.coords() ** 2, axis=1)
    return _unit(np.exp(-r2 * sigma_k**2 / 8.0))


def build_pure_separable(grid: ModeGrid, sigma_k: float, label: str = "pure-separable") -> SeparableEnsemble:
    phi = gaussian_beam(grid, sigma_k).astype(complex)
    return SeparableEnsemble(grid, np.ones(1), phi[None, :], phi[None, :].copy(), label)


def mixed_q_grid(grid: ModeGrid, n_q: int) -> np.ndarray:
    """Centered uniform grid of transverse wavevectors, shape (n_q**2, 2)."""
    q1 = (np.arange(n_q) - (n_q - 1) / 2.0) * (TWO_PI / (n_q * grid.pitch))
    qa, qb = np.meshgrid(q1, q1, indexing="ij")
    return np.stack([qa.ravel(), qb.ravel()], axis=1)


def build_mixed_separable(
    grid: ModeGrid,
    params: GaussianStateParams,
    n_q: int,
    max_components: int = MAX_COMPONENTS,
    label: str = "mixed-separable",
) -> SeparableEnsemble:
    """Separable mixture reproducing the entangled state's sum-coordinate image.

    Component ``q`` pairs a Gaussian-envelope tilted wave ``phi_q`` with a
    plane wave ``chi_q`` of opposite tilt, so that behind a Fourier lens the
    two photons land at mirror positions (momentum anti-correlation).

    The envelope ``exp(-|r|^2 sigma_k^2)`` makes the sum-momentum spread of
    every component equal to that of :func:`build_double_gaussian`.
    """
    if n_q < 1:
        raise ValueError("n_q must be >= 1")
    if n_q * n_q > max_components:
        raise ValueError(f"n_q**2 = {n_q * n_q} exceeds component cap {max_components}")
    r = grid.coords()
    q = mixed_q_grid(grid, n_q)
    envelope = np.exp(-np.sum(r**2, axis=1) * params.sigma_k**2)
    phase = q @ r.T  # (J, N)
    phi = envelope[None, :] * np.exp(-1j * phase)
    chi = np.exp(1j * phase)
    phi /= np.linalg.norm(phi, axis=1, keepdims=True)
    chi /= np.linalg.norm(chi, axis=1, keepdims=True)
    weights = np.full(len(q), 1.0 / len(q))
    return SeparableEnsemble(grid, weights, phi, chi, label)


def near_diagonal_state(
    grid: ModeGrid,
    alpha: float,
    topology: Literal["chain-1d", "grid-2d"] = "chain-1d",
    label: str = "",
) -> TwoPhotonState:
    """Identity plus nearest-neighbour coupling ``alpha`` (diagonal neighbours: 0)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    n = grid.n_modes
    psi = np.eye(n, dtype=complex)
    if topology == "chain-1d":
        idx = np.arange(n - 1)
        psi[idx, idx + 1] = alpha
        psi[idx + 1, idx] = alpha
    elif topology == "grid-2d":
        h, w = grid.shape
        for m in range(n):
            i, j = divmod(m, w)
            for di, dj in ((1, 0), (0, 1)):
                if i + di < h and j + dj < w:
                    k = grid.index(i + di, j + dj)
                    psi[m, k] = psi[k, m] = alpha
    else:
        raise ValueError(f"unknown topology {topology!r}")
    return TwoPhotonState(grid, psi / np.linalg.norm(psi), label or f"near-diagonal-{topology}")


def apply_mask(state: TwoPhotonState, mask: PhaseMask) -> TwoPhotonState:
    if mask.grid != state.grid:
        raise ValueError("mask and state grids differ")
    e = mask.phasors()
    return TwoPhotonState(state.grid, state.psi * np.outer(e, e), state.label)


def classical_field(grid: ModeGrid, sigma_k: float | None = None) -> ClassicalField:
    """Gaussian probe beam matched to the pure separable state, or flat if ``sigma_k`` is None."""
    if sigma_k is None:
        amp = np.full(grid.n_modes, 1.0 / math.sqrt(grid.n_modes), dtype=complex)
    else:
        amp = gaussian_beam(grid, sigma_k).astype(complex)
    return ClassicalField(grid, amp)
