"""Multi-spin Hamiltonian induced by a medium and a near-diagonal two-photon state.

Binary phases ``theta_n in {0, pi/2}`` give ``eps_n = e^{i theta_n} in {1, i}``
with ``eps_n**2 = sigma_n``. For a chain state (diagonal plus couplings
``alpha`` between modes ``n`` and ``n + 1``) every pair amplitude is a
multilinear polynomial in the spins once the neighbour products are rewritten
with ``eps_n eps_m = (sigma_n + sigma_m)/2 + i (1 - sigma_n sigma_m)/2``:

    amp = c0 + sum_n c1_n sigma_n + sum_n c2_n sigma_n sigma_{n+1}

Squaring and reducing ``sigma**2 = 1`` leaves terms with one to four spins.
The tensors below store twice the polynomial coefficients so that

    H(sigma) = -1/2 [sum K_n s_n + sum_{n<m} J_nm s_n s_m
                     + sum Lambda s_n s_m s_{m+1} + sum Q s_n s_{n+1} s_m s_{m+1}]

and ``H(sigma) + const_term == -Gamma_T(sigma)`` exactly.

Storage conventions: ``J`` is dense and symmetric with a zero diagonal, each
unordered pair counted once in the energy. ``Lambda`` is a coordinate list of
index triples ``(n, m, m+1)`` and ``Q`` of quadruples ``(n, m, n+1, m+1)``
with ``n + 1 < m``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .medium import ScatteringMatrix, read_cmx, write_cmx
from .shape import OptimizationTrace, TargetSpec, binary_energies, optimize_binary_spins
from .state import near_diagonal_state

TOPOLOGIES = ("chain-1d",)


@dataclass(frozen=True)
class SpinConfig:
    sigma: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma)
        if s.ndim != 1 or not np.all(np.isin(s, (-1, 1))):
            raise ValueError("spins must be a vector of +1/-1")
        object.__setattr__(self, "sigma", s.astype(int))

    def eps(self) -> np.ndarray:
        return np.where(self.sigma > 0, 1.0 + 0j, 1j)


@dataclass(eq=False)
class SpinGlassModel:
    n_spins: int
    const_term: float
    K: np.ndarray
    J: np.ndarray
    lambda_idx: np.ndarray  # (L, 3) rows (n, m, m+1)
    lambda_val: np.ndarray
    q_idx: np.ndarray  # (Q, 4) rows (n, m, n+1, m+1)
    q_val: np.ndarray
    alpha: float
    target: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.n_spins
        if self.K.shape != (n,) or self.J.shape != (n, n):
            raise ValueError("K must have length N and J shape (N, N)")
        if not np.allclose(self.J, self.J.T, rtol=0, atol=0) or np.any(np.diag(self.J) != 0):
            raise ValueError("J must be symmetric with a zero diagonal")
        self.lambda_idx = np.asarray(self.lambda_idx, dtype=int).reshape(-1, 3)
        self.q_idx = np.asarray(self.q_idx, dtype=int).reshape(-1, 4)
        li, qi = self.lambda_idx, self.q_idx
        if len(li) and not np.all(li[:, 2] == li[:, 1] + 1):
            raise ValueError("Lambda support must be (n, m, m+1)")
        if len(qi) and not (np.all(qi[:, 2] == qi[:, 0] + 1) and np.all(qi[:, 3] == qi[:, 1] + 1)):
            raise ValueError("Q support must be (n, m, n+1, m+1)")

    def spin_value(self, s) -> float:
        """Quantity maximized by the binary optimizer (minus the energy)."""
        return -energy(self, s)

    def dense_lambda(self) -> np.ndarray:
        out = np.zeros((self.n_spins,) * 3)
        for (a, b, c), v in zip(self.lambda_idx, self.lambda_val):
            out[a, b, c] = v
        return out

    def to_dict(self) -> dict:
        return {
            "n_spins": self.n_spins,
            "const_term": self.const_term,
            "alpha": self.alpha,
            "target": self.target,
            "K": self.K.tolist(),
            "lambda": {"idx": self.lambda_idx.tolist(), "val": self.lambda_val.tolist()},
            "Q": {"idx": self.q_idx.tolist(), "val": self.q_val.tolist()},
        }


def eps_product(s_n: int, s_m: int) -> complex:
    """``eps_n eps_m`` written through spins only."""
    return 0.5 * (s_n + s_m) + 0.5j * (1 - s_n * s_m)


def _chain_weights(medium: ScatteringMatrix, alpha: float) -> tuple[float, float]:
    psi = near_diagonal_state(medium.in_grid, alpha, "chain-1d").psi
    off = psi[0, 1].real if medium.N > 1 else 0.0
    return psi[0, 0].real, off


def _amplitude_polynomial(medium: ScatteringMatrix, alpha: float, target: TargetSpec):
    """Per-pair coefficients (c0, c1, c2) of the amplitude polynomial."""
    k, l = target.pairs(medium.out_shape)
    tk, tl = medium.t[k], medium.t[l]
    diag, off = _chain_weights(medium, alpha)
    g = off * (tk[:, :-1] * tl[:, 1:] + tk[:, 1:] * tl[:, :-1])  # (P, N-1)
    c1 = diag * tk * tl
    c1[:, :-1] += 0.5 * g
    c1[:, 1:] += 0.5 * g
    c0 = 0.5j * g.sum(axis=1)
    c2 = -0.5j * g
    return c0, c1, c2


def build_spin_glass(T: ScatteringMatrix, alpha: float, target: TargetSpec | None = None,
                     topology: str = "chain-1d") -> SpinGlassModel:
    if topology not in TOPOLOGIES:
        raise ValueError(f"unsupported topology {topology!r}; the Hamiltonian is derived for {TOPOLOGIES}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    target = target or TargetSpec("sum-coordinate")
    if target.kind == "classical-intensity":
        raise ValueError("the spin model needs a coincidence target")
    n = T.N
    c0, c1, c2 = _amplitude_polynomial(T, alpha, target)

    # Real polynomial coefficients of Gamma, keyed by sorted spin index tuple.
    poly: dict[tuple, float] = {}

    def add(idx, v):
        # sigma**2 = 1: indices appearing twice cancel
        key = tuple(sorted(i for i in set(idx) if idx.count(i) % 2))
        poly[key] = poly.get(key, 0.0) + v

    add((), float(np.sum(np.abs(c0) ** 2)))
    # cross terms with the constant amplitude: 2 Re(c0 conj(c))
    r01 = 2 * np.real(c0.conj() @ c1)
    r02 = 2 * np.real(c0.conj() @ c2)
    m11 = np.real(c1.T @ c1.conj())  # (N, N), Re sum_p c1_n conj(c1_m)
    m12 = 2 * np.real(c1.T @ c2.conj())  # (N, N-1)
    m22 = np.real(c2.T @ c2.conj())
    for a in range(n):
        add((), m11[a, a])
        for b in range(a + 1, n):
            add((a, b), 2 * m11[a, b])
    if alpha == 0:
        # no neighbour paths: a conventional two-spin model
        return _assemble(n, poly, alpha, target, T)
    for a in range(n):
        add((a,), r01[a])
    for b in range(n - 1):
        add((b, b + 1), r02[b])
        add((), m22[b, b])
        for a in range(n):
            add((a, b, b + 1), m12[a, b])
        for b2 in range(b + 1, n - 1):
            add((b, b + 1, b2, b2 + 1), 2 * m22[b, b2])
    return _assemble(n, poly, alpha, target, T)


def _assemble(n: int, poly: dict, alpha: float, target: TargetSpec, T: ScatteringMatrix) -> SpinGlassModel:
    K = np.zeros(n)
    J = np.zeros((n, n))
    lam_idx, lam_val, q_idx, q_val = [], [], [], []
    const = 0.0
    for key, v in sorted(poly.items()):
        if len(key) == 0:
            const = v
        elif len(key) == 1:
            K[key[0]] = 2 * v
        elif len(key) == 2:
            J[key] = J[key[::-1]] = 2 * v
        elif len(key) == 3:
            a, b, c = key
            # write as (n, m, m+1); the adjacent pair is (b, c) unless only (a, b) is
            lam_idx.append((a, b, c) if c == b + 1 else (c, a, b))
            lam_val.append(2 * v)
        else:
            a, b, c, d = key
            q_idx.append((a, c, b, d))
            q_val.append(2 * v)
    return SpinGlassModel(
        n_spins=n,
        const_term=-float(const),
        K=K,
        J=J,
        lambda_idx=np.array(lam_idx, dtype=int).reshape(-1, 3),
        lambda_val=np.array(lam_val, dtype=float),
        q_idx=np.array(q_idx, dtype=int).reshape(-1, 4),
        q_val=np.array(q_val, dtype=float),
        alpha=float(alpha),
        target={"kind": target.kind, "coord": np.asarray(target.resolved(T.out_shape)).tolist(),
                "zero_diagonal": target.zero_diagonal},
    )


def _as_sigma(s) -> np.ndarray:
    return s.sigma if isinstance(s, SpinConfig) else np.asarray(s)


def energy(model: SpinGlassModel, s) -> float | np.ndarray:
    """Energy of one configuration (N,) or a batch (B, N)."""
    sigma = _as_sigma(s).astype(float)
    if sigma.shape[-1] != model.n_spins:
        raise ValueError(f"expected {model.n_spins} spins, got {sigma.shape[-1]}")
    total = sigma @ model.K + 0.5 * np.einsum("...n,nm,...m->...", sigma, model.J, sigma)
    if len(model.lambda_val):
        li = model.lambda_idx
        total = total + np.prod(sigma[..., li], axis=-1) @ model.lambda_val
    if len(model.q_val):
        total = total + np.prod(sigma[..., model.q_idx], axis=-1) @ model.q_val
    out = -0.5 * total
    return float(out) if np.ndim(out) == 0 else out


def direct_energy_oracle(T: ScatteringMatrix, alpha: float, target: TargetSpec | None, s,
                         topology: str = "chain-1d") -> float:
    """``-Gamma_T`` by direct propagation of the masked near-diagonal state."""
    target = target or TargetSpec("sum-coordinate")
    sigma = _as_sigma(s)
    if len(sigma) != T.N:
        raise ValueError(f"expected {T.N} spins, got {len(sigma)}")
    psi = near_diagonal_state(T.in_grid, alpha, topology).psi
    eps = SpinConfig(sigma).eps()
    k, l = target.pairs(T.out_shape)
    amp = np.einsum("pm,m,mn,n,pn->p", T.t[k], eps, psi, eps, T.t[l])
    return -float(np.sum(np.abs(amp) ** 2))


def all_configs(n: int) -> np.ndarray:
    return np.array(list(itertools.product((1, -1), repeat=n)), dtype=int)


def exhaustive_minimum(model: SpinGlassModel) -> tuple[np.ndarray, float]:
    if model.n_spins > 20:
        raise ValueError("exhaustive enumeration limited to 20 spins")
    cfgs = all_configs(model.n_spins)
    e = energy(model, cfgs)
    i = int(np.argmin(e))
    return cfgs[i], float(e[i])


def _as_tuple(x):
    return tuple(_as_tuple(v) for v in x) if isinstance(x, (list, tuple)) else x


@dataclass
class _OracleSystem:
    medium: ScatteringMatrix
    alpha: float
    target: TargetSpec

    @property
    def n_spins(self) -> int:
        return self.medium.N

    def spin_value(self, s) -> float:
        return -direct_energy_oracle(self.medium, self.alpha, self.target, s)


def ground_state_search(model: SpinGlassModel, restarts: int = 1, steps: int = 300, seed: int = 0,
                        flip_fraction: float = 0.25, oracle_medium: ScatteringMatrix | None = None
                        ) -> tuple[SpinConfig, float, OptimizationTrace]:
    """Best of ``restarts`` binary random-flip searches.

    With ``oracle_medium`` the search runs on the direct propagation instead of
    the tensors (energies then carry the constant ``-const_term`` offset
    removed so both paths report the same numbers).
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if oracle_medium is not None:
        t = model.target
        system = _OracleSystem(oracle_medium, model.alpha,
                               TargetSpec(t["kind"], _as_tuple(t["coord"]), zero_diagonal=t["zero_diagonal"]))
        shift = -model.const_term
    else:
        system, shift = model, 0.0
    seeds = rng.stream(seed, "ising-restarts").integers(2**31, size=restarts)
    best = None
    for r_seed in seeds:
        tr = optimize_binary_spins(system, steps=steps, flip_fraction=flip_fraction, seed=int(r_seed))
        e = float(binary_energies(tr)[-1]) + shift
        if best is None or e < best[1]:
            best = (SpinConfig(np.array(tr.config["final_sigma"])), e, tr)
    return best


def save_model(model: SpinGlassModel, path) -> list[Path]:
    """Write ``<path>.json`` plus the dense coupling matrix ``<path>.J.cmx``."""
    path = Path(path)
    jpath = path.with_name(path.name + ".J.cmx")
    write_cmx(jpath, model.J)
    d = model.to_dict()
    d["J_file"] = jpath.name
    jsonpath = path.with_name(path.name + ".json")
    jsonpath.write_text(json.dumps(d, indent=2, sort_keys=True))
    return [jsonpath, jpath]


def load_model(path) -> SpinGlassModel:
    path = Path(path)
    d = json.loads(path.with_name(path.name + ".json").read_text())
    J = read_cmx(path.with_name(d["J_file"])).real
    return SpinGlassModel(
        n_spins=d["n_spins"],
        const_term=d["const_term"],
        K=np.array(d["K"], dtype=float),
        J=J,
        lambda_idx=np.array(d["lambda"]["idx"], dtype=int),
        lambda_val=np.array(d["lambda"]["val"], dtype=float),
        q_idx=np.array(d["Q"]["idx"], dtype=int),
        q_val=np.array(d["Q"]["val"], dtype=float),
        alpha=d["alpha"],
        target=d["target"],
    )
