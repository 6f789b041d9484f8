"""Scattering (transmission) matrices: generation, simulated measurement, storage.

Output pixels live on an ``(h, w)`` camera grid placed in the Fourier plane of
the SLM. Pixel ``(a, b)`` samples spatial frequency
``((a - h//2) / (h * pitch), (b - w//2) / (w * pitch))`` so that the zero
frequency sits on pixel ``(h//2, w//2)``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from . import rng
from .state import ModeGrid

#: Largest matrix (entries) :func:`make_medium` will build.
MAX_ENTRIES = 1 << 26

CMX_MAGIC = b"CMX1"

MediumKind = Literal["iid-complex", "phase-screen-fourier", "dft", "file"]


@dataclass(frozen=True, eq=False)
class ScatteringMatrix:
    """Complex ``M x N`` matrix ``t[k, n]`` from input mode ``n`` to output pixel ``k``."""

    t: np.ndarray
    out_shape: tuple[int, int]
    in_grid: ModeGrid
    scale: dict | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        h, w = self.out_shape
        if self.t.shape != (h * w, self.in_grid.n_modes):
            raise ValueError(f"matrix shape {self.t.shape} does not match out_shape {self.out_shape} x N={self.in_grid.n_modes}")
        if not np.all(np.isfinite(self.t)):
            raise ValueError("scattering matrix has non-finite entries")
        object.__setattr__(self, "out_shape", (int(h), int(w)))
        self.t.setflags(write=False)

    @property
    def M(self) -> int:
        return self.t.shape[0]

    @property
    def N(self) -> int:
        return self.t.shape[1]

    def sidecar(self) -> dict:
        scale = self.scale or {}
        return {
            "kind": self.meta.get("kind", "file"),
            "seed": self.meta.get("seed"),
            "thickness_proxy": self.meta.get("thickness_proxy"),
            "out_shape": list(self.out_shape),
            "in_grid": self.in_grid.to_dict(),
            "lambda": scale.get("lambda"),
            "focal": scale.get("focal"),
            "prng": self.meta.get("prng", rng.PRNG_ID),
        }


@dataclass(frozen=True)
class MediumSpec:
    kind: MediumKind = "phase-screen-fourier"
    seed: int = 0
    thickness_proxy: int = 1
    #: sub-pixels per macropixel side for the phase screen
    screen_oversample: int = 4
    path: str | None = None
    wavelength: float = 810e-9
    focal: float = 0.15

    def __post_init__(self):
        if self.kind not in ("iid-complex", "phase-screen-fourier", "dft", "file"):
            raise ValueError(f"unknown medium kind {self.kind!r}")
        if self.thickness_proxy < 1:
            raise ValueError("thickness_proxy must be >= 1")
        if self.screen_oversample < 1:
            raise ValueError("screen_oversample must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.kind == "file" and not self.path:
            raise ValueError("file medium needs a path")


def output_frequencies(out_shape: tuple[int, int], grid: ModeGrid) -> np.ndarray:
    """Spatial frequency (cycles/m) sampled by each output pixel, shape (M, 2)."""
    h, w = out_shape
    a, b = np.divmod(np.arange(h * w), w)
    return np.stack([(a - h // 2) / (h * grid.pitch), (b - w // 2) / (w * grid.pitch)], axis=1)


def output_pixel_pitch(m: ScatteringMatrix) -> float:
    """Physical output pixel width for a Fourier-plane matrix with scale metadata.

    Uses the kernel ``exp(-2i r.x / (lambda f))`` under which the sum-coordinate
    width of the double-Gaussian state is ``lambda f sigma_k / sqrt(2)``; pixel
    ``a`` then sits at ``x = pi lambda f nu_a``.
    """
    if not m.scale or m.scale.get("lambda") is None or m.scale.get("focal") is None:
        raise ValueError("matrix carries no physical scale")
    h, w = m.out_shape
    if h * m.in_grid.shape[1] != w * m.in_grid.shape[0]:
        raise ValueError("non-square output pixels")
    return math.pi * m.scale["lambda"] * m.scale["focal"] / (h * m.in_grid.pitch)


def _fourier_map(out_shape, grid: ModeGrid, positions: np.ndarray) -> np.ndarray:
    nu = output_frequencies(out_shape, grid)
    h, w = out_shape
    return np.exp(-2j * math.pi * (nu @ positions.T)) / math.sqrt(h * w)


def dft_matrix(out_shape: tuple[int, int], grid: ModeGrid, wavelength: float = 810e-9, focal: float = 0.15) -> ScatteringMatrix:
    """No-medium propagation: a lens mapping the SLM plane onto the camera."""
    h, w = out_shape
    gh, gw = grid.shape
    if h < gh or w < gw:
        raise ValueError("dft output must be at least as large as the input grid")
    t = _fourier_map(out_shape, grid, grid.coords())
    return ScatteringMatrix(t, (h, w), grid, {"lambda": wavelength, "focal": focal}, {"kind": "dft", "seed": None})


def _unitary_dft2(field: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(field, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


def _phase_screen_fourier(spec: MediumSpec, out_shape, grid: ModeGrid) -> np.ndarray:
    gen = rng.stream(spec.seed, "medium")
    s = spec.screen_oversample
    gh, gw = grid.shape
    fh, fw = gh * s, gw * s
    # each macropixel drives its s x s block of screen sub-pixels uniformly
    fields = np.zeros((grid.n_modes, fh, fw), dtype=complex)
    for n in range(grid.n_modes):
        i, j = divmod(n, gw)
        fields[n, i * s:(i + 1) * s, j * s:(j + 1) * s] = 1.0 / s
    sub = ModeGrid(fh, grid.pitch / s, fw)
    for stage in range(spec.thickness_proxy):
        screen = np.exp(2j * math.pi * rng.portable_uniform(gen, (fh, fw)))
        fields = fields * screen
        if stage < spec.thickness_proxy - 1:
            fields = _unitary_dft2(fields)
    return _fourier_map(out_shape, grid, sub.coords()) @ fields.reshape(grid.n_modes, -1).T


def make_medium(spec: MediumSpec, out_shape: tuple[int, int] | int, in_grid: ModeGrid | int) -> ScatteringMatrix:
    """Build a deterministic scattering matrix from ``spec``.

    ``out_shape`` may be an int ``M`` (one row of pixels) and ``in_grid`` an
    int ``N`` (one row of modes, unit pitch) for the non-imaging kinds.
    """
    if isinstance(out_shape, int):
        out_shape = (1, out_shape)
    if isinstance(in_grid, int):
        in_grid = ModeGrid(1, 1.0, in_grid)
    h, w = out_shape
    if h < 1 or w < 1:
        raise ValueError("output shape must be positive")
    entries = h * w * in_grid.n_modes
    s2 = spec.screen_oversample**2 if spec.kind == "phase-screen-fourier" else 1
    if entries * s2 > MAX_ENTRIES:
        raise ValueError(f"medium of {entries} entries exceeds cap {MAX_ENTRIES}")
    scale = {"lambda": spec.wavelength, "focal": spec.focal}
    if spec.kind == "file":
        m = load_matrix(spec.path)
        if m.out_shape != tuple(out_shape) or m.in_grid.n_modes != in_grid.n_modes:
            raise ValueError("file medium dimensions do not match the request")
        return m
    if spec.kind == "dft":
        return dft_matrix((h, w), in_grid, spec.wavelength, spec.focal)
    if spec.kind == "iid-complex":
        gen = rng.stream(spec.seed, "medium")
        u = rng.portable_uniform(gen, (2, h * w, in_grid.n_modes))
        t = u[0] * np.exp(2j * math.pi * u[1])
    else:
        t = _phase_screen_fourier(spec, (h, w), in_grid)
    meta = {"kind": spec.kind, "seed": spec.seed, "thickness_proxy": spec.thickness_proxy, "prng": rng.PRNG_ID}
    return ScatteringMatrix(t, (h, w), in_grid, scale, meta)


def participation_ratio(intensity: np.ndarray, axis=None) -> np.ndarray:
    intensity = np.asarray(intensity, dtype=float)
    return intensity.sum(axis=axis) ** 2 / np.sum(intensity**2, axis=axis)


def measure_tm(medium: ScatteringMatrix, n_phase_steps: int = 4, reference: int = 0) -> ScatteringMatrix:
    """Simulated phase-stepping co-reference holography.

    For every input mode ``n`` the output intensity of ``e_ref + e^{i phi} e_n``
    is recorded at ``n_phase_steps`` equally spaced phases; the first Fourier
    component of that signal is ``t_kn * conj(t_k,ref)``. Each row is then
    rescaled by ``1/|t_k,ref|`` so the estimate equals ``t_kn`` up to the
    per-row phase of the reference mode.
    """
    if n_phase_steps < 3:
        raise ValueError("need at least 3 phase steps")
    t = medium.t
    M, N = t.shape
    phases = 2 * math.pi * np.arange(n_phase_steps) / n_phase_steps
    ref = t[:, reference]
    est = np.empty_like(t)
    for n in range(N):
        if n == reference:
            # intensity alone gives |t_k,ref|^2
            est[:, n] = np.abs(ref) ** 2
            continue
        frames = np.abs(ref[:, None] + t[:, n, None] * np.exp(1j * phases)[None, :]) ** 2
        est[:, n] = frames @ np.exp(-1j * phases) / n_phase_steps
    ref_mod = np.sqrt(np.abs(est[:, reference]))
    safe = np.where(ref_mod > 0, ref_mod, 1.0)
    est = est / safe[:, None]
    meta = dict(medium.meta, kind="measured", n_phase_steps=n_phase_steps)
    return ScatteringMatrix(est, medium.out_shape, medium.in_grid, medium.scale, meta)


def write_cmx(path, a: np.ndarray) -> None:
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError("CMX1 stores 2-D arrays")
    rows, cols = a.shape
    body = np.empty((rows, cols, 2), dtype="<f8")
    body[..., 0] = a.real
    body[..., 1] = a.imag if np.iscomplexobj(a) else 0.0
    with open(path, "wb") as f:
        f.write(CMX_MAGIC + struct.pack("<II", rows, cols))
        f.write(body.tobytes())


def read_cmx(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CMX_MAGIC:
        raise ValueError(f"{path}: bad magic")
    if len(data) < 12:
        raise ValueError(f"{path}: truncated header")
    rows, cols = struct.unpack("<II", data[4:12])
    expected = 12 + rows * cols * 16
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    body = np.frombuffer(data, dtype="<f8", offset=12).reshape(rows, cols, 2)
    return body[..., 0] + 1j * body[..., 1]


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_matrix(m: ScatteringMatrix, path) -> None:
    write_cmx(path, m.t)
    sidecar_path(path).write_text(json.dumps(m.sidecar(), indent=2, sort_keys=True))


def load_matrix(path) -> ScatteringMatrix:
    t = read_cmx(path)
    side = json.loads(sidecar_path(path).read_text())
    grid = ModeGrid.from_dict(side["in_grid"])
    out_shape = tuple(side["out_shape"])
    if t.shape != (out_shape[0] * out_shape[1], grid.n_modes):
        raise ValueError(f"{path}: dimension mismatch with sidecar")
    scale = None
    if side.get("lambda") is not None:
        scale = {"lambda": side["lambda"], "focal": side["focal"]}
    meta = {k: side[k] for k in ("kind", "seed", "thickness_proxy", "prng") if side.get(k) is not None}
    return ScatteringMatrix(t, out_shape, grid, scale, meta)
