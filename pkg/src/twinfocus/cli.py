"""Scenario runner: ``twinfocus <scenario> [--config PATH] [--seed N] [--out DIR] [--override k=v ...]``.

Every run writes its artifacts into one output directory together with a
``manifest.json`` listing each file with its SHA-256, the effective config,
the PRNG identity and summary metrics. ``twinfocus report M1 M2 ...`` merges
the metrics of several manifests (mean and standard deviation).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import itertools
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, rng
from .ising import build_spin_glass, direct_energy_oracle, ground_state_search, save_model
from .measure import (
    central_window,
    classical_intensity,
    coincidence_map,
    enhancement,
    estimate_gamma,
    offdiagonal_similarity,
    peak_to_mean,
    save_frames,
    separable_coincidence_map,
    similarity,
    simulate_frames,
    sum_projection,
    write_csv,
    write_pgm,
)
from .medium import MediumSpec, make_medium, write_cmx
from .shape import (
    System,
    TargetSpec,
    binary_energies,
    landscape_scan,
    optimize,
)
from .state import (
    GaussianStateParams,
    ModeGrid,
    PhaseMask,
    TwoPhotonState,
    build_double_gaussian,
    build_mixed_separable,
    build_pure_separable,
    classical_field,
    near_diagonal_state,
    schmidt_number,
)

SCENARIOS = {
    "focus-nonclassical": "optimize photon-pair correlations at the zero-frequency sum coordinate",
    "focus-classical": "optimize classical intensity at the central pixel",
    "replay-mask": "send classical light through a mask optimized for photon pairs",
    "sweep-sigma": "replay similarity versus position correlation width sigma_r",
    "sweep-modes": "final enhancement versus number of controlled modes",
    "separable-compare": "entangled, pure and mixed separable inputs against the classical solution",
    "landscape": "target over two free phases of a 3-mode system, with its local maxima",
    "ising": "ground-state search of the spin model induced by a near-diagonal state",
    "frames-demo": "coincidence estimation from simulated binary camera frames",
}

DEFAULTS = {
    "scenario": None,
    "master_seed": 0,
    "output_dir": "twinfocus-out",
    "grid": {"n_side": 8, "pitch": 296e-6},
    "state": {"sigma_r": 2.9e-5, "sigma_k": 8.0e2, "n_q": 8},
    "medium": {"kind": "phase-screen-fourier", "seed": 0, "thickness_proxy": 1, "screen_oversample": 4,
               "path": None, "wavelength": 810e-9, "focal": 0.15},
    "out_shape": [16, 16],
    "target": {"coord": None, "zero_diagonal": False, "noise_rel": 0.0},
    "optimizer": {"steps": 200, "fraction": 0.5, "scheme": "fit(10)", "reject_on_decrease": False,
                  "early_stop": False},
    "sweep": {"sigma_r": np.geomspace(1.6e-6, 1.25e-3, 8).tolist(), "repeats": 5, "n_sides": [4, 8, 16]},
    "landscape": {"source": "classical", "n_modes": 3, "out_pixels": 4, "resolution": 200},
    "ising": {"alpha": 0.1, "restarts": 1, "steps": 300, "flip_fraction": 0.25},
    "frames": {"n_side": 4, "out_side": 8, "P": 100000, "pair_rate": 5.0, "singles_rate": 0.0,
               "dark_prob": 0.0, "efficiency": 1.0},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where + k!r} must be an object")
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def _check(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def validate(cfg: dict) -> dict:
    _check(cfg["scenario"] in SCENARIOS, f"scenario must be one of {sorted(SCENARIOS)}, got {cfg['scenario']!r}")
    _check(isinstance(cfg["master_seed"], int) and cfg["master_seed"] >= 0, "master_seed must be a non-negative int")
    g = cfg["grid"]
    _check(int(g["n_side"]) >= 1, "grid.n_side must be >= 1")
    _check(float(g["pitch"]) > 0, "grid.pitch must be positive")
    s = cfg["state"]
    _check(float(s["sigma_r"]) > 0 and float(s["sigma_k"]) > 0, "state widths must be positive")
    _check(int(s["n_q"]) >= 1, "state.n_q must be >= 1")
    o = cfg["out_shape"]
    _check(len(o) == 2 and min(o) >= 1, "out_shape must be two positive ints")
    if cfg["target"]["coord"] is not None:
        r, c = cfg["target"]["coord"]
        _check(0 <= r <= 2 * o[0] - 2 and 0 <= c <= 2 * o[1] - 2, "target.coord outside the sum-coordinate plane")
    _check(float(cfg["target"]["noise_rel"]) >= 0, "target.noise_rel must be >= 0")
    op = cfg["optimizer"]
    _check(int(op["steps"]) >= 1, "optimizer.steps must be >= 1")
    _check(0 < float(op["fraction"]) < 1, "optimizer.fraction must lie in (0, 1)")
    sw = cfg["sweep"]
    _check(len(sw["sigma_r"]) >= 1 and all(float(x) > 0 for x in sw["sigma_r"]), "sweep.sigma_r must be positive")
    _check(int(sw["repeats"]) >= 1, "sweep.repeats must be >= 1")
    _check(all(int(n) >= 2 for n in sw["n_sides"]), "sweep.n_sides entries must be >= 2")
    ls = cfg["landscape"]
    _check(ls["source"] in ("classical", "quantum"), "landscape.source must be classical or quantum")
    _check(int(ls["n_modes"]) >= 3, "landscape.n_modes must be >= 3")
    _check(0 <= float(cfg["ising"]["alpha"]) <= 1, "ising.alpha must lie in [0, 1]")
    _check(int(cfg["ising"]["restarts"]) >= 1, "ising.restarts must be >= 1")
    fr = cfg["frames"]
    _check(int(fr["P"]) >= 1, "frames.P must be >= 1")
    _check(0 <= float(fr["efficiency"]) <= 1 and 0 <= float(fr["dark_prob"]) <= 1, "frame probabilities must lie in [0, 1]")
    MediumSpec(**{**cfg["medium"], "seed": int(cfg["medium"]["seed"])})  # raises on bad medium fields
    return cfg


def parse_config(source=None, overrides: dict | None = None) -> dict:
    """Load a config from a path, an inline JSON string or a dict, fill defaults and validate."""
    if source is None:
        raw = {}
    elif isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            raw = json.loads(text)
        else:
            raw = json.loads(Path(text).read_text())
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, raw)
    for key, value in (overrides or {}).items():
        _set_dotted(cfg, key, value)
    if cfg["scenario"] is None:
        raise ConfigError("missing scenario")
    return validate(cfg)


def _set_dotted(cfg: dict, key: str, value):
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


# ------------------------------------------------------------------ helpers


class Run:
    """Owns one output directory and records every file written into it."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.files.append(p)
        return p

    def pgm(self, name: str, image):
        p = self.path(name)
        write_pgm(p, image)
        self.files.append(p.with_name(p.name + ".json"))

    def csv_rows(self, name: str, header: list[str], rows):
        with open(self.path(name), "w") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(x) for x in row) + "\n")

    def json(self, name: str, obj):
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))

    def trace(self, name: str, tr):
        tr.to_csv(self.path(name + ".csv"))
        header = {k: v for k, v in tr.header().items() if k != "wall_clock"}
        self.json(name + ".json", header)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer, np.floating)):
        return x.item()
    return str(x)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _grid(cfg, n_side=None) -> ModeGrid:
    return ModeGrid(int(n_side or cfg["grid"]["n_side"]), float(cfg["grid"]["pitch"]))


def _medium(cfg, grid: ModeGrid, out_shape=None, seed=None):
    m = dict(cfg["medium"])
    if seed is not None:
        m["seed"] = seed
    return make_medium(MediumSpec(**m), tuple(out_shape or cfg["out_shape"]), grid)


def _params(cfg, sigma_r=None) -> GaussianStateParams:
    s = cfg["state"]
    return GaussianStateParams(float(sigma_r or s["sigma_r"]), float(s["sigma_k"]))


def _opt_kwargs(cfg) -> dict:
    o = cfg["optimizer"]
    return {"steps": int(o["steps"]), "fraction": float(o["fraction"]), "scheme": o["scheme"],
            "reject_on_decrease": bool(o["reject_on_decrease"]), "early_stop": bool(o["early_stop"])}


def _pair_target(cfg) -> TargetSpec:
    t = cfg["target"]
    coord = tuple(t["coord"]) if t["coord"] is not None else None
    return TargetSpec("sum-coordinate", coord, float(t["noise_rel"]), bool(t["zero_diagonal"]))


def _classical_target(cfg) -> TargetSpec:
    return TargetSpec("classical-intensity", None, float(cfg["target"]["noise_rel"]))


def _center(out_shape) -> tuple[int, int]:
    return (out_shape[0] // 2, out_shape[1] // 2)


def _pair_metrics(state, mask, T, target: TargetSpec) -> tuple[dict, np.ndarray]:
    if isinstance(state, TwoPhotonState):
        gmap = coincidence_map(state, mask, T)
    else:
        gmap = separable_coincidence_map(state, mask, T)
    gp = sum_projection(gmap, target.zero_diagonal)
    t = target.resolved(T.out_shape)
    region = central_window(gp.image.shape, T.out_shape)
    return {"enhancement": enhancement(gp, t, region=region), "target_value": float(gp.image[t])}, gp.image


def _classical_reference(cfg, grid, T, seed):
    fld = classical_field(grid, float(cfg["state"]["sigma_k"]))
    tr = optimize(System(fld, T), _classical_target(cfg), seed=seed, **_opt_kwargs(cfg))
    return fld, tr


# ---------------------------------------------------------------- scenarios


def _focus_nonclassical(cfg, run: Run, seed: int) -> dict:
    grid = _grid(cfg)
    T = _medium(cfg, grid)
    state = build_double_gaussian(grid, _params(cfg))
    target = _pair_target(cfg)
    flat = PhaseMask.flat(grid)
    before, img0 = _pair_metrics(state, flat, T, target)
    tr = optimize(System(state, T), target, seed=seed, **_opt_kwargs(cfg))
    after, img1 = _pair_metrics(state, tr.final_mask, T, target)
    run.trace("trace", tr)
    write_cmx(run.path("mask.cmx"), tr.final_mask.theta[None, :])
    run.pgm("gammaplus_before.pgm", img0)
    run.pgm("gammaplus_after.pgm", img1)
    return {"enhancement": after["enhancement"], "enhancement_before": before["enhancement"],
            "target_before": before["target_value"], "target_after": after["target_value"],
            "monotone": tr.monotone, "schmidt_number": schmidt_number(_params(cfg))}


def _focus_classical(cfg, run: Run, seed: int) -> dict:
    grid = _grid(cfg)
    T = _medium(cfg, grid)
    fld, tr = _classical_reference(cfg, grid, T, seed)
    i0 = classical_intensity(fld, PhaseMask.flat(grid), T).image
    i1 = classical_intensity(fld, tr.final_mask, T).image
    run.trace("trace", tr)
    write_cmx(run.path("mask.cmx"), tr.final_mask.theta[None, :])
    run.pgm("intensity_before.pgm", i0)
    run.pgm("intensity_after.pgm", i1)
    c = _center(T.out_shape)
    return {"peak_to_mean_before": peak_to_mean(i0, c), "peak_to_mean": peak_to_mean(i1, c),
            "monotone": tr.monotone}


def _replay_mask(cfg, run: Run, seed: int) -> dict:
    grid = _grid(cfg)
    T = _medium(cfg, grid)
    state = build_double_gaussian(grid, _params(cfg))
    target = _pair_target(cfg)
    tr = optimize(System(state, T), target, seed=seed, **_opt_kwargs(cfg))
    quantum, gp = _pair_metrics(state, tr.final_mask, T, target)
    fld, ref = _classical_reference(cfg, grid, T, seed)
    replay = classical_intensity(fld, tr.final_mask, T).image
    focus = classical_intensity(fld, ref.final_mask, T).image
    run.trace("trace", tr)
    write_cmx(run.path("mask.cmx"), tr.final_mask.theta[None, :])
    run.pgm("gammaplus_after.pgm", gp)
    run.pgm("replay_intensity.pgm", replay)
    run.pgm("classical_focus.pgm", focus)
    c = _center(T.out_shape)
    return {"enhancement": quantum["enhancement"], "peak_to_mean": peak_to_mean(replay, c),
            "classical_peak_to_mean": peak_to_mean(focus, c), "replay_similarity": similarity(replay, focus)}


def _replay_similarity(cfg, state, grid, T, seed) -> tuple[float, float, float]:
    tr = optimize(System(state, T), _pair_target(cfg), seed=seed, **_opt_kwargs(cfg))
    fld, ref = _classical_reference(cfg, grid, T, seed)
    replay = classical_intensity(fld, tr.final_mask, T).image
    focus = classical_intensity(fld, ref.final_mask, T).image
    enh, _ = _pair_metrics(state, tr.final_mask, T, _pair_target(cfg))
    return similarity(replay, focus), peak_to_mean(replay, _center(T.out_shape)), enh["enhancement"]


def _sweep_sigma(cfg, run: Run, seed: int) -> dict:
    grid = _grid(cfg)
    repeats = int(cfg["sweep"]["repeats"])
    base = int(cfg["medium"]["seed"])
    rows = []
    for sr in cfg["sweep"]["sigma_r"]:
        params = _params(cfg, sr)
        state = build_double_gaussian(grid, params)
        sims = []
        for r in range(repeats):
            T = _medium(cfg, grid, seed=base + r)
            sims.append(_replay_similarity(cfg, state, grid, T, seed + r)[0])
        rows.append((float(sr), schmidt_number(params), float(np.mean(sims)), float(np.std(sims)), repeats))
    run.csv_rows("similarity_vs_sigma_r.csv", ["sigma_r", "schmidt_number", "similarity_mean", "similarity_std", "repeats"], rows)
    return {"sigma_r": [r[0] for r in rows], "similarity_mean": [r[2] for r in rows],
            "similarity_std": [r[3] for r in rows]}


def _sweep_modes(cfg, run: Run, seed: int) -> dict:
    rows = []
    for n in cfg["sweep"]["n_sides"]:
        grid = _grid(cfg, n)
        out = (2 * int(n), 2 * int(n))
        T = _medium(cfg, grid, out_shape=out)
        state = build_double_gaussian(grid, _params(cfg))
        target = TargetSpec("sum-coordinate", None, float(cfg["target"]["noise_rel"]), bool(cfg["target"]["zero_diagonal"]))
        tr = optimize(System(state, T), target, seed=seed, **_opt_kwargs(cfg))
        m, _ = _pair_metrics(state, tr.final_mask, T, target)
        rows.append((int(n) ** 2, m["enhancement"]))
    run.csv_rows("enhancement_vs_modes.csv", ["n_modes", "enhancement"], rows)
    return {"n_modes": [r[0] for r in rows], "enhancement": [r[1] for r in rows]}


def _separable_compare(cfg, run: Run, seed: int) -> dict:
    grid = _grid(cfg)
    params = _params(cfg)
    sources = {
        "entangled": build_double_gaussian(grid, params),
        "pure-separable": build_pure_separable(grid, params.sigma_k),
        "mixed-separable": build_mixed_separable(grid, params, int(cfg["state"]["n_q"])),
    }
    T = _medium(cfg, grid)
    rows, metrics = [], {}
    for name, src in sources.items():
        sim, p2m, enh = _replay_similarity(cfg, src, grid, T, seed)
        rows.append((name, sim, p2m, enh))
        metrics[name] = {"replay_similarity": sim, "peak_to_mean": p2m, "enhancement": enh}
    run.csv_rows("separable_compare.csv", ["source", "replay_similarity", "peak_to_mean", "enhancement"], rows)
    return metrics


def _landscape(cfg, run: Run, seed: int) -> dict:
    ls = cfg["landscape"]
    n = int(ls["n_modes"])
    grid = ModeGrid(1, float(cfg["grid"]["pitch"]), n)
    m = dict(cfg["medium"], kind="iid-complex" if cfg["medium"]["kind"] != "file" else "file")
    T = make_medium(MediumSpec(**m), int(ls["out_pixels"]), grid)
    if ls["source"] == "classical":
        system = System(classical_field(grid), T)
        target = TargetSpec("classical-intensity", (0, int(ls["out_pixels"]) // 2))
    else:
        # sum over a_k^dagger^2: both photons always in the same mode
        system = System(near_diagonal_state(grid, 0.0), T)
        target = TargetSpec("pixel-pair", ((0, 0), (0, 1)))
    values, n_max = landscape_scan(system, (1, 2), int(ls["resolution"]), target)
    write_csv(run.path("landscape.csv"), values)
    run.pgm("landscape.pgm", values)
    return {"strict_local_maxima": n_max, "max_value": float(values.max())}


def _ising(cfg, run: Run, seed: int) -> dict:
    grid = _grid(cfg)
    T = _medium(cfg, grid)
    ic = cfg["ising"]
    target = _pair_target(cfg)
    model = build_spin_glass(T, float(ic["alpha"]), target)
    sigma, e, tr = ground_state_search(model, int(ic["restarts"]), int(ic["steps"]), seed, float(ic["flip_fraction"]))
    for p in save_model(model, run.dir / "spin_glass"):
        run.files.append(p)
    energies = binary_energies(tr)
    run.csv_rows("energy.csv", ["step", "energy"], enumerate(energies))
    oracle = direct_energy_oracle(T, float(ic["alpha"]), target, sigma)
    return {"energy": e, "oracle_energy": oracle, "oracle_mismatch": abs(e + model.const_term - oracle),
            "energy_monotone": bool(np.all(np.diff(energies) <= 0)), "n_spins": model.n_spins}


def _frames_demo(cfg, run: Run, seed: int) -> dict:
    fr = cfg["frames"]
    grid = ModeGrid(int(fr["n_side"]), float(cfg["grid"]["pitch"]))
    out = (int(fr["out_side"]), int(fr["out_side"]))
    T = _medium(cfg, grid, out_shape=out)
    state = build_double_gaussian(grid, _params(cfg))
    mask = PhaseMask.flat(grid)
    gmap = coincidence_map(state, mask, T)
    singles = classical_intensity(classical_field(grid, float(cfg["state"]["sigma_k"])), mask, T)
    meta = {k: float(fr[k]) for k in ("pair_rate", "singles_rate", "dark_prob", "efficiency")}
    stack = simulate_frames(gmap, singles, int(fr["P"]), meta, seed)
    est = estimate_gamma(stack)
    save_frames(stack, run.path("frames.frs"))
    run.files.append(run.dir / "frames.frs.json")
    write_csv(run.path("gamma_hat.csv"), est.gamma)
    write_csv(run.path("gamma_true.csv"), gmap.gamma)
    return {"offdiagonal_similarity": offdiagonal_similarity(est, gmap), "n_frames": int(fr["P"]) + 1}


_RUNNERS = {
    "focus-nonclassical": _focus_nonclassical,
    "focus-classical": _focus_classical,
    "replay-mask": _replay_mask,
    "sweep-sigma": _sweep_sigma,
    "sweep-modes": _sweep_modes,
    "separable-compare": _separable_compare,
    "landscape": _landscape,
    "ising": _ising,
    "frames-demo": _frames_demo,
}


def run_scenario(cfg: dict) -> tuple[int, dict]:
    """Run one validated config; returns (exit status, manifest)."""
    run = Run(cfg["output_dir"])
    seed = int(cfg["master_seed"])
    t0 = time.perf_counter()
    metrics = _RUNNERS[cfg["scenario"]](cfg, run, seed)
    run.json("config.json", cfg)
    manifest = {
        "scenario": cfg["scenario"],
        "version": __version__,
        "prng": rng.PRNG_ID,
        "config": cfg,
        "metrics": metrics,
        "files": [{"name": p.name, "sha256": _sha256(p)} for p in sorted(set(run.files))],
        "wall_clock": time.perf_counter() - t0,
    }
    (run.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable))
    return 0, manifest


# ------------------------------------------------------------------- report


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = prefix + k
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            for i, x in enumerate(v):
                if isinstance(x, (int, float)) and not isinstance(x, bool):
                    out[f"{key}[{i}]"] = x
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out[key] = v
    return out


def report(paths, out_dir=None) -> dict:
    """Mean and (population) standard deviation of every numeric metric."""
    paths = list(paths)
    if not paths:
        raise ValueError("report needs at least one manifest")
    rows = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "manifest.json"
        try:
            m = json.loads(p.read_text())
            rows.append(_flatten(m["metrics"]))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ValueError(f"cannot read manifest {p}: {exc}") from exc
    keys = sorted(set(itertools.chain.from_iterable(rows)))
    summary = {}
    for k in keys:
        vals = np.array([r[k] for r in rows if k in r], dtype=float)
        summary[k] = {"mean": float(vals.mean()), "std": float(vals.std()), "n": int(vals.size)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        with open(out / "summary.csv", "w") as f:
            f.write("metric,mean,std,n\n")
            for k, v in summary.items():
                f.write(f"{k},{v['mean']!r},{v['std']!r},{v['n']}\n")
    return summary


# --------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twinfocus", description="Photon-pair wavefront shaping simulations.")
    p.add_argument("scenario", nargs="?", help="scenario name, or 'report' followed by manifest paths")
    p.add_argument("manifests", nargs="*", help=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON config file or inline JSON object")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config key, value parsed as JSON when possible")
    p.add_argument("--list-scenarios", action="store_true")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.list_scenarios:
        for name, desc in SCENARIOS.items():
            print(f"{name:20s} {desc}")
        return 0
    try:
        if args.scenario == "report":
            summary = report(args.manifests, args.out)
            for k, v in summary.items():
                print(f"{k}: {v['mean']:.6g} +/- {v['std']:.6g} (n={v['n']})")
            return 0
        overrides = dict(parse_override(o) for o in args.override)
        if args.scenario:
            overrides["scenario"] = args.scenario
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.out:
            overrides["output_dir"] = args.out
        cfg = parse_config(args.config, overrides)
        status, manifest = run_scenario(cfg)
    except (ValueError, OSError) as exc:
        print(f"twinfocus: error: {exc}", file=sys.stderr)
        return 2
    for k, v in _flatten(manifest["metrics"]).items():
        print(f"{k} = {v:.6g}")
    print(f"manifest: {Path(cfg['output_dir']) / 'manifest.json'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
