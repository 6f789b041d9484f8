"""Coincidence maps, projections, image metrics and simulated detector frames."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .medium import ScatteringMatrix, sidecar_path
from .state import ClassicalField, PhaseMask, SeparableEnsemble, TwoPhotonState

FRS_MAGIC = b"FRS1"


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    gamma: np.ndarray  # (M, M), Gamma[k, l] over flattened output pixels
    out_shape: tuple[int, int]
    diagonal_zeroed: bool = False

    def __post_init__(self):
        h, w = self.out_shape
        if self.gamma.shape != (h * w, h * w):
            raise ValueError("gamma shape does not match out_shape")


@dataclass(frozen=True, eq=False)
class SumProjection:
    """Gamma summed over pixel pairs with equal coordinate sum ``s = k + l``.

    ``image[s_row, s_col]`` with ``0 <= s_row <= 2h-2``; the pair of pixels at
    zero-based positions ``(a, b)`` and ``(c, d)`` lands on ``(a + c, b + d)``.
    """

    image: np.ndarray
    out_shape: tuple[int, int]
    zero_diagonal: bool = False


@dataclass(frozen=True, eq=False)
class OutputIntensity:
    image: np.ndarray


@dataclass(frozen=True, eq=False)
class FrameStack:
    frames: np.ndarray  # (P+1, h, w) uint8 in {0, 1}
    meta: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def out_shape(self) -> tuple[int, int]:
        return self.frames.shape[1:]


def _check_dims(n_modes: int, mask: PhaseMask, medium: ScatteringMatrix):
    if mask.grid.n_modes != n_modes or medium.N != n_modes:
        raise ValueError(f"dimension mismatch: state N={n_modes}, mask N={mask.grid.n_modes}, medium N={medium.N}")


def output_amplitudes(state: TwoPhotonState, mask: PhaseMask, medium: ScatteringMatrix) -> np.ndarray:
    """Two-photon output amplitude ``T (psi o e e^T) T^T``, shape (M, M)."""
    _check_dims(state.grid.n_modes, mask, medium)
    e = mask.phasors()
    t = medium.t
    return t @ (state.psi * np.outer(e, e)) @ t.T


def coincidence_map(state: TwoPhotonState, mask: PhaseMask, medium: ScatteringMatrix) -> CorrelationMap:
    amp = output_amplitudes(state, mask, medium)
    return CorrelationMap(np.abs(amp) ** 2, medium.out_shape)


def separable_coincidence_map(ens: SeparableEnsemble, mask: PhaseMask, medium: ScatteringMatrix) -> CorrelationMap:
    _check_dims(ens.grid.n_modes, mask, medium)
    e = mask.phasors()
    iu = np.abs((ens.phi * e) @ medium.t.T) ** 2  # (J, M)
    iv = np.abs((ens.chi * e) @ medium.t.T) ** 2
    return CorrelationMap((ens.weights[:, None] * iu).T @ iv, medium.out_shape)


def classical_intensity(fld: ClassicalField, mask: PhaseMask, medium: ScatteringMatrix) -> OutputIntensity:
    _check_dims(fld.grid.n_modes, mask, medium)
    out = medium.t @ (fld.amplitudes * mask.phasors())
    return OutputIntensity((np.abs(out) ** 2).reshape(medium.out_shape))


def zero_diagonal(gmap: CorrelationMap) -> CorrelationMap:
    g = gmap.gamma.copy()
    np.fill_diagonal(g, 0.0)
    return CorrelationMap(g, gmap.out_shape, True)


def sum_projection(gmap: CorrelationMap, zero_diagonal: bool = False) -> SumProjection:
    h, w = gmap.out_shape
    g = gmap.gamma
    if zero_diagonal:
        g = g.copy()
        np.fill_diagonal(g, 0.0)
    out = np.zeros((2 * h - 1, 2 * w - 1))
    # fixed accumulation order: first pixel k in row-major order
    for k in range(h * w):
        a, b = divmod(k, w)
        out[a:a + h, b:b + w] += g[k].reshape(h, w)
    return SumProjection(out, (h, w), zero_diagonal or gmap.diagonal_zeroed)


def pair_counts(out_shape: tuple[int, int], include_diagonal: bool = True) -> np.ndarray:
    """Number of ordered pixel pairs feeding each sum-coordinate pixel."""
    h, w = out_shape
    rows = np.minimum(np.arange(2 * h - 1), 2 * h - 2 - np.arange(2 * h - 1)) + 1
    cols = np.minimum(np.arange(2 * w - 1), 2 * w - 2 - np.arange(2 * w - 1)) + 1
    counts = np.outer(rows, cols).astype(float)
    if not include_diagonal:
        # k = l only happens at even sums
        counts[::2, ::2] -= 1
    return counts


def pair_averaged(gp: SumProjection) -> np.ndarray:
    """Projection divided by its pair count (zero where no pair contributes)."""
    counts = pair_counts(gp.out_shape, not gp.zero_diagonal)
    return np.divide(gp.image, counts, out=np.zeros_like(gp.image), where=counts > 0)


def pairs_for_sum(out_shape: tuple[int, int], s: tuple[int, int], include_diagonal: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Ordered pixel pairs (k, l) whose coordinates add up to ``s``."""
    h, w = out_shape
    sr, sc = s
    if not (0 <= sr <= 2 * h - 2 and 0 <= sc <= 2 * w - 2):
        raise IndexError(f"sum coordinate {s} out of range")
    a = np.arange(max(0, sr - h + 1), min(h, sr + 1))
    b = np.arange(max(0, sc - w + 1), min(w, sc + 1))
    aa, bb = np.meshgrid(a, b, indexing="ij")
    k = (aa * w + bb).ravel()
    l = ((sr - aa) * w + (sc - bb)).ravel()
    if not include_diagonal:
        keep = k != l
        k, l = k[keep], l[keep]
    return k, l


def default_target(out_shape: tuple[int, int]) -> tuple[int, int]:
    """Sum coordinate of the pixel pairs symmetric about the zero-frequency pixel."""
    h, w = out_shape
    return (2 * (h // 2), 2 * (w // 2))


def target_value(gp: SumProjection, t_coord) -> float:
    r, c = t_coord
    H, W = gp.image.shape
    if not (0 <= r < H and 0 <= c < W):
        raise IndexError(f"target {t_coord} outside projection of shape {gp.image.shape}")
    return float(gp.image[r, c])


def conditional_image(gmap: CorrelationMap, l: int) -> np.ndarray:
    M = gmap.gamma.shape[0]
    if not 0 <= l < M:
        raise IndexError(l)
    return gmap.gamma[:, l].reshape(gmap.out_shape)


def central_window(gp_shape: tuple[int, int], out_shape: tuple[int, int]) -> tuple[slice, slice]:
    """The h x w block of the projection centered on the zero-frequency sum."""
    h, w = out_shape
    r0 = (h - 1) - h // 2
    c0 = (w - 1) - w // 2
    return slice(max(r0, 0), r0 + h), slice(max(c0, 0), c0 + w)


def enhancement(gp: SumProjection, t_coord, exclusion_radius: int = 1, region: tuple[slice, slice] | None = None) -> float:
    """Target over mean background.

    The background is every pixel of ``region`` (default: the central h x w
    window of the projection, where many pairs contribute) farther than
    ``exclusion_radius`` from the target in Chebyshev distance.
    """
    img = gp.image
    if region is None:
        region = central_window(img.shape, gp.out_shape)
    rows = np.arange(img.shape[0])[region[0]]
    cols = np.arange(img.shape[1])[region[1]]
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    far = np.maximum(np.abs(rr - t_coord[0]), np.abs(cc - t_coord[1])) > exclusion_radius
    if not far.any():
        raise ValueError("background region is empty")
    bg = img[rr[far], cc[far]].mean()
    if bg <= 0:
        raise ValueError("zero background mean")
    return target_value(gp, t_coord) / bg


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """2-D Pearson correlation coefficient."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("images differ in shape")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(np.sum(da * da))
    nb = np.sqrt(np.sum(db * db))
    if na == 0 or nb == 0:
        raise ValueError("zero variance image")
    return float(np.clip(np.sum(da * db) / (na * nb), -1.0, 1.0))


def offdiagonal_similarity(a: CorrelationMap | np.ndarray, b: CorrelationMap | np.ndarray) -> float:
    ga = a.gamma if isinstance(a, CorrelationMap) else a
    gb = b.gamma if isinstance(b, CorrelationMap) else b
    off = ~np.eye(ga.shape[0], dtype=bool)
    return similarity(ga[off], gb[off])


def gaussian_width(image: np.ndarray) -> float:
    """Radial RMS width ``sqrt(var_row + var_col)`` in pixels.

    The median is subtracted first and negative values clipped. For an
    isotropic ``exp(-r^2 / W^2)`` this returns ``W``.
    """
    img = np.asarray(image, dtype=float)
    img = np.clip(img - np.median(img), 0.0, None)
    mass = img.sum()
    if not mass > 0:
        raise ValueError("no mass left after background subtraction")
    r, c = np.indices(img.shape)
    mr = (img * r).sum() / mass
    mc = (img * c).sum() / mass
    var = (img * ((r - mr) ** 2 + (c - mc) ** 2)).sum() / mass
    return float(np.sqrt(var))


def peak_to_mean(image: np.ndarray, pixel: tuple[int, int] | None = None) -> float:
    """Value at ``pixel`` (default: the maximum) divided by the image mean."""
    img = np.asarray(image, dtype=float)
    m = img.mean()
    if m <= 0:
        raise ValueError("image mean is not positive")
    peak = img.max() if pixel is None else img[pixel]
    return float(peak / m)


def simulate_frames(
    gmap: CorrelationMap,
    singles: OutputIntensity | None,
    P: int,
    meta: dict,
    seed: int,
) -> FrameStack:
    """Binary frames from a Poisson pair source, uncorrelated singles and dark counts.

    ``meta`` keys: pair_rate, singles_rate, dark_prob, efficiency (mean
    numbers per frame and probabilities). Returns ``P + 1`` frames.
    """
    if P < 1:
        raise ValueError("P must be >= 1")
    pair_rate = float(meta.get("pair_rate", 0.0))
    singles_rate = float(meta.get("singles_rate", 0.0))
    dark = float(meta.get("dark_prob", 0.0))
    eff = float(meta.get("efficiency", 1.0))
    if min(pair_rate, singles_rate, dark) < 0 or not 0 <= eff <= 1 or dark > 1:
        raise ValueError("rates must be >= 0 and probabilities in [0, 1]")
    h, w = gmap.out_shape
    M = h * w
    n_frames = P + 1
    gen = rng.stream(seed, "frames")
    frames = np.zeros((n_frames, M), dtype=np.uint8)

    if pair_rate > 0:
        g = gmap.gamma.ravel()
        total = g.sum()
        if not total > 0:
            raise ValueError("coincidence map is empty")
        counts = gen.poisson(pair_rate, n_frames)
        which = gen.choice(g.size, size=int(counts.sum()), p=g / total)
        frame_of = np.repeat(np.arange(n_frames), counts)
        k, l = np.divmod(which, M)
        for pix in (k, l):
            kept = gen.random(pix.size) < eff
            frames[frame_of[kept], pix[kept]] = 1

    if singles_rate > 0:
        if singles is None:
            raise ValueError("singles image required when singles_rate > 0")
        s = np.asarray(singles.image, dtype=float).ravel()
        if not s.sum() > 0:
            raise ValueError("singles image is empty")
        counts = gen.poisson(singles_rate, n_frames)
        pix = gen.choice(M, size=int(counts.sum()), p=s / s.sum())
        frame_of = np.repeat(np.arange(n_frames), counts)
        kept = gen.random(pix.size) < eff
        frames[frame_of[kept], pix[kept]] = 1

    if dark > 0:
        frames |= (gen.random(frames.shape) < dark).astype(np.uint8)

    full_meta = {"pair_rate": pair_rate, "singles_rate": singles_rate, "dark_prob": dark, "efficiency": eff, "prng": rng.PRNG_ID}
    return FrameStack(frames.reshape(n_frames, h, w), full_meta, seed)


def neighbor_mask(out_shape: tuple[int, int]) -> np.ndarray:
    """Boolean (M, M) mask of pixel pairs that are 4-neighbours."""
    h, w = out_shape
    a, b = np.divmod(np.arange(h * w), w)
    d = np.abs(a[:, None] - a[None, :]) + np.abs(b[:, None] - b[None, :])
    return d == 1


def estimate_gamma(frames: FrameStack, zero_neighbors: bool = False) -> CorrelationMap:
    """Accidental-subtracted coincidence estimate from consecutive frames."""
    f = frames.frames
    if f.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    P = f.shape[0] - 1
    x = f.reshape(f.shape[0], -1).astype(np.float64)
    now = x[:-1]
    nxt = x[1:]
    g = (now.T @ now - now.T @ nxt) / P
    np.fill_diagonal(g, 0.0)
    if zero_neighbors:
        g[neighbor_mask(frames.out_shape)] = 0.0
    return CorrelationMap(g, tuple(frames.out_shape), True)


# ---------------------------------------------------------------- file I/O


def write_pgm(path, image: np.ndarray) -> dict:
    """16-bit binary PGM, max-normalized; the scale goes to ``<path>.json``."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    vmax = float(img.max()) if img.size else 0.0
    scaled = np.zeros(img.shape) if vmax <= 0 else np.clip(img, 0, None) / vmax
    data = np.round(scaled * 65535).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(data.tobytes())
    side = {"max_value": vmax, "maxval": 65535, "shape": [h, w]}
    sidecar_path(path).write_text(json.dumps(side, sort_keys=True))
    return side


def read_pgm(path) -> np.ndarray:
    """Read a PGM written by :func:`write_pgm`, rescaled using its sidecar when present."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    body = parts[4]
    img = np.frombuffer(body[: h * w * 2], dtype=">u2").reshape(h, w).astype(float) / maxval
    side = sidecar_path(path)
    if side.exists():
        img = img * json.loads(side.read_text())["max_value"]
    return img


def write_csv(path, image: np.ndarray) -> None:
    np.savetxt(path, np.asarray(image, dtype=float), delimiter=",", fmt="%.17g")


def save_frames(stack: FrameStack, path) -> None:
    f = stack.frames
    n, h, w = f.shape
    with open(path, "wb") as fh:
        fh.write(FRS_MAGIC + struct.pack("<III", n, h, w))
        fh.write(np.ascontiguousarray(f, dtype=np.uint8).tobytes())
    side = dict(stack.meta, seed=stack.seed)
    sidecar_path(path).write_text(json.dumps(side, sort_keys=True))


def load_frames(path) -> FrameStack:
    data = Path(path).read_bytes()
    if data[:4] != FRS_MAGIC:
        raise ValueError(f"{path}: bad magic")
    n, h, w = struct.unpack("<III", data[4:16])
    if len(data) != 16 + n * h * w:
        raise ValueError(f"{path}: size does not match header")
    frames = np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, h, w).copy()
    if frames.max(initial=0) > 1:
        raise ValueError(f"{path}: frames must be binary")
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    seed = meta.pop("seed", None)
    return FrameStack(frames, meta, seed)
