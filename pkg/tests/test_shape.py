import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from conftest import random_complex
from twinfocus.medium import MediumSpec, ScatteringMatrix, make_medium
from twinfocus.shape import (
    CANONICAL_6,
    FrameScan,
    ModulationModel,
    OptimizationTrace,
    Partition,
    System,
    TargetSpec,
    binary_energies,
    evaluate,
    evaluate_batch,
    extract_6pt,
    fit_model,
    landscape_scan,
    offset_mask,
    optimal_phase,
    optimize,
    optimize_binary_spins,
    optimize_classical,
    optimize_nonclassical,
    phasor_similarity,
    predict_modulation,
    quartic_reduction,
    scan_target,
    spins_to_theta,
    strict_local_maxima,
    target_from_maps,
    theta_to_spins,
    wrap,
)
from twinfocus.state import (
    ClassicalField,
    GaussianStateParams,
    ModeGrid,
    PhaseMask,
    SeparableEnsemble,
    TwoPhotonState,
    build_double_gaussian,
    classical_field,
    near_diagonal_state,
)

TWO_PI = 2 * math.pi
MEASURED = dict(A=2.21e-5, B=2.0e-5, C=3.87e-5, theta_A=0.03, theta_B=-0.14)


def circ(a, b):
    return abs(math.remainder(a - b, TWO_PI))


def random_instance(seed, kind):
    """Random (system, mask, partition, target) with N <= 16, M <= 36."""
    gen = np.random.default_rng(seed)
    n = int(gen.integers(2, 17))
    h, w = int(gen.integers(1, 7)), int(gen.integers(1, 7))
    g = ModeGrid(1, 1.0, n)
    T = ScatteringMatrix(random_complex(gen, (h * w, n)), (h, w), g)
    if kind == "classical":
        e = random_complex(gen, n)
        src = ClassicalField(g, e / np.linalg.norm(e))
        target = TargetSpec("classical-intensity", (int(gen.integers(h)), int(gen.integers(w))))
    elif kind == "separable":
        j = int(gen.integers(1, 4))
        phi = random_complex(gen, (j, n))
        chi = random_complex(gen, (j, n))
        wts = gen.random(j)
        src = SeparableEnsemble(g, wts / wts.sum(), phi / np.linalg.norm(phi, axis=1, keepdims=True),
                                chi / np.linalg.norm(chi, axis=1, keepdims=True))
        target = TargetSpec("sum-coordinate", (int(gen.integers(2 * h - 1)), int(gen.integers(2 * w - 1))))
    else:
        psi = random_complex(gen, (n, n))
        psi = psi + psi.T
        src = TwoPhotonState(g, psi / np.linalg.norm(psi))
        if gen.random() < 0.5:
            target = TargetSpec("sum-coordinate", (int(gen.integers(2 * h - 1)), int(gen.integers(2 * w - 1))))
        else:
            pix = [(int(gen.integers(h)), int(gen.integers(w))) for _ in range(2)]
            target = TargetSpec("pixel-pair", tuple(pix))
    mask = PhaseMask(g, gen.uniform(0, TWO_PI, n))
    n_act = int(gen.integers(1, n))
    part = Partition.from_indices(n, gen.permutation(n)[:n_act])
    return System(src, T), mask, part, target


# ---------------------------------------------------------------- types


def test_model_validation():
    with pytest.raises(ValueError):
        ModulationModel(-1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        ModulationModel(1.0, float("nan"), 0.0)


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition(np.zeros(3, bool))
    with pytest.raises(ValueError):
        Partition(np.ones(3, bool))
    p = Partition.from_indices(4, [1, 3])
    assert list(p.reference) == [True, False, True, False]


def test_target_validation():
    with pytest.raises(ValueError):
        TargetSpec("bogus")
    with pytest.raises(ValueError):
        TargetSpec("sum-coordinate", (9, 0)).resolved((2, 2))
    with pytest.raises(ValueError):
        TargetSpec("pixel-pair").resolved((2, 2))
    with pytest.raises(ValueError):
        TargetSpec("classical-intensity", (2, 0)).resolved((2, 2))
    with pytest.raises(ValueError):
        TargetSpec(noise_rel=-0.1)


def test_target_kind_must_fit_source():
    sysq, _, _, _ = random_instance(0, "quantum")
    with pytest.raises(ValueError):
        evaluate(sysq, np.zeros(sysq.n_modes), TargetSpec("classical-intensity"))


# ------------------------------------------------------- modulation law


@pytest.mark.parametrize("kind", ["quantum", "separable", "classical"])
@pytest.mark.parametrize("seed", range(34))
def test_modulation_contract(kind, seed):
    system, mask, part, target = random_instance(seed, kind)
    model = predict_modulation(system.source, mask, system.medium, part, target)
    th = np.linspace(0, TWO_PI, 32, endpoint=False)
    direct = evaluate_batch(system, mask.theta[None, :] + np.outer(th, part.active), target)
    assert np.max(np.abs(model(th) - direct)) / direct.max() < 1e-9


@pytest.mark.parametrize("kind", ["quantum", "separable", "classical"])
def test_evaluate_matches_map_pipeline(kind):
    for seed in range(5):
        system, mask, _, target = random_instance(100 + seed, kind)
        assert evaluate(system, mask, target) == pytest.approx(target_from_maps(system, mask, target), rel=1e-10)


def test_global_shift_leaves_target_unchanged():
    # shifting every mode is a global phase; the partition type forbids an all-active set
    system, mask, _, target = random_instance(7, "quantum")
    v0 = evaluate(system, mask, target)
    v1 = evaluate(system, mask.theta + 0.9, target)
    assert v1 == pytest.approx(v0, rel=1e-12)


def test_diagonal_state_single_modes_has_no_b_term():
    gen = np.random.default_rng(3)
    g = ModeGrid(1, 1.0, 2)
    T = ScatteringMatrix(random_complex(gen, (4, 2)), (2, 2), g)
    s = near_diagonal_state(g, 0.0)
    model = predict_modulation(s, PhaseMask.flat(g), T, Partition.from_indices(2, [0]), TargetSpec())
    assert model.B < 1e-15 * model.C


def test_zero_target_rejected():
    g = ModeGrid(1, 1.0, 2)
    T = ScatteringMatrix(np.zeros((4, 2), complex), (2, 2), g)
    with pytest.raises(ValueError):
        predict_modulation(near_diagonal_state(g, 0.2), PhaseMask.flat(g), T, Partition.from_indices(2, [0]), TargetSpec())


def test_scan_single_phase_is_current_value():
    system, mask, part, target = random_instance(11, "quantum")
    for mode in ("model", "direct"):
        v = scan_target(system, mask, part, [0.0], target, mode=mode)
        assert v[0] == pytest.approx(evaluate(system, mask, target), rel=1e-12)


def test_scan_noise_statistics():
    system, mask, part, _ = random_instance(12, "quantum")
    target = TargetSpec("sum-coordinate", None, noise_rel=0.01)
    exact = scan_target(system, mask, part, CANONICAL_6, TargetSpec(), mode="direct")
    draws = np.array([scan_target(system, mask, part, CANONICAL_6, target, np.random.default_rng(s), mode="direct")
                      for s in range(100)])
    assert not np.allclose(draws[0], draws[1])
    sem = 0.01 * exact / 10
    assert np.all(np.abs(draws.mean(axis=0) - exact) < 3 * sem)
    with pytest.raises(ValueError):
        scan_target(system, mask, part, CANONICAL_6, target, None, mode="direct")


def test_scan_frames_mode_tracks_exact():
    grid = ModeGrid(2, 296e-6)
    T = make_medium(MediumSpec("phase-screen-fourier", seed=1), (4, 4), grid)
    system = System(build_double_gaussian(grid, GaussianStateParams(2.9e-5, 8e2)), T)
    part = Partition.from_indices(4, [0, 1])
    mask = PhaseMask.flat(grid)
    exact = scan_target(system, mask, part, CANONICAL_6, TargetSpec(), mode="direct")
    est = scan_target(system, mask, part, CANONICAL_6, TargetSpec(), np.random.default_rng(0), mode="frames",
                      frames=FrameScan(P=40000, pair_rate=2.0))
    # frames count pairs in proportion to Gamma; compare shapes
    assert np.corrcoef(exact, est)[0, 1] > 0.9


def _synth(model):
    return [float(model(p)) for p in CANONICAL_6]


def test_extract_6pt_known_model():
    m = ModulationModel(1.0, 0.5, 2.0, 0.3, wrap(-0.2))
    r = extract_6pt(_synth(m))
    assert abs(r.A - 1) < 1e-10 and abs(r.B - 0.5) < 1e-10 and abs(r.C - 2) < 1e-10
    assert circ(r.theta_A, 0.3) < 1e-10 and circ(r.theta_B, -0.2) < 1e-10


def test_extract_6pt_a_zero_and_constant():
    r = extract_6pt(_synth(ModulationModel(0.0, 0.8, 1.0, 0.0, 1.1)))
    assert r.A < 1e-12 and circ(r.theta_B, 1.1) < 1e-12
    c = extract_6pt([3.0] * 6)
    assert c.A == 0 and c.B == 0 and c.C == 3.0


def test_extract_6pt_accepts_mapping():
    m = ModulationModel(0.4, 0.2, 1.0, 2.0, 4.0)
    d = dict(zip(CANONICAL_6, _synth(m)))
    assert extract_6pt(d).A == pytest.approx(0.4)
    with pytest.raises(ValueError):
        extract_6pt({0.0: 1.0})


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(-5, 5), st.floats(0, TWO_PI), st.floats(0, TWO_PI))
def test_extract_6pt_round_trip(a, b, c, ta, tb):
    r = extract_6pt(_synth(ModulationModel(a, b, c, ta, tb)))
    assert abs(r.A - a) < 1e-10 * max(1, a) and abs(r.B - b) < 1e-10 * max(1, b) and abs(r.C - c) < 1e-10 * max(1, abs(c))
    assert circ(r.theta_A, ta) < 1e-10 / a * 10 and circ(r.theta_B, tb) < 1e-10 / b * 10


def test_fit_model_exact_recovery():
    m = ModulationModel(0.7, 0.3, 1.5, 1.0, 5.0)
    ph = TWO_PI * np.arange(9) / 9
    r, r2 = fit_model(ph, m(ph))
    assert r2 == pytest.approx(1)
    assert r.A == pytest.approx(0.7) and circ(r.theta_B, 5.0) < 1e-10


def test_fit_model_measured_noise_regime():
    m = ModulationModel(MEASURED["A"], MEASURED["B"], MEASURED["C"], MEASURED["theta_A"], wrap(MEASURED["theta_B"]))
    ph = TWO_PI * np.arange(10) / 10
    r2s = []
    for s in range(200):
        noisy = m(ph) * (1 + 0.03 * np.random.default_rng(s).standard_normal(10))
        r2s.append(fit_model(ph, noisy)[1])
    print(f"measured-scale model, 3% noise: median R^2 = {np.median(r2s):.3f}")
    assert np.median(r2s) > 0.9


def test_fit_model_rank_deficient():
    ph = np.array([0, 1, 2, 3, 0, 1.0])
    with pytest.raises(ValueError):
        fit_model(ph, np.ones(6))


# --------------------------------------------------------- optimal phase


def test_quartic_roots_residual():
    gen = np.random.default_rng(0)
    for _ in range(200):
        m = ModulationModel(gen.random() + 0.01, gen.random() * 3, 0, gen.uniform(0, TWO_PI), gen.uniform(0, TWO_PI))
        q = quartic_reduction(m)
        assert q.D == pytest.approx(m.B / (4 * m.A))
        for y in q.roots:
            assert -1 <= y <= 1 and abs(q.residual(y)) < 1e-9


def test_optimal_phase_trivial_cases():
    assert circ(optimal_phase(ModulationModel(0, 1, 0, 0, 0.7)), -0.7) < 1e-15
    t = optimal_phase(ModulationModel(1, 0, 0, 0.4, 0))
    assert circ(t, -0.2) < 1e-12 or circ(t, -0.2 + math.pi) < 1e-12
    # equal values at both: the smallest angle in [0, 2 pi) wins
    assert t == pytest.approx(math.pi - 0.2)
    assert optimal_phase(ModulationModel(0, 0, 1.0)) == 0.0
    m = ModulationModel(1.0, 0.5, 0, 2 * 1.3, 1.3)
    assert circ(optimal_phase(m), -1.3) < 1e-15


def test_optimal_phase_antiphase_case_is_only_a_candidate():
    # theta_A = 2 theta_B + pi with B < 4A: the maximum is A + B^2/(8A), not at -theta_B + pi/2
    m = ModulationModel(1.0, 0.8, 0.0, math.pi + 0.6, 0.3)
    t = optimal_phase(m)
    assert float(m(t)) == pytest.approx(1 + 0.8**2 / 8, rel=1e-12)
    assert float(m(t)) > float(m(-0.3 + math.pi / 2)) + 1e-3


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, TWO_PI), st.floats(0, TWO_PI))
def test_optimal_phase_beats_grid(a, b, ta, tb):
    assume(a + b > 1e-6)
    m = ModulationModel(a, b, 0.0, ta, tb)
    grid = np.linspace(0, TWO_PI, 20001)
    assert float(m(optimal_phase(m))) >= m(grid).max() - 1e-10


def test_optimal_phase_measured_model():
    m = ModulationModel(MEASURED["A"], MEASURED["B"], MEASURED["C"], MEASURED["theta_A"], wrap(MEASURED["theta_B"]))
    t = optimal_phase(m)
    grid = np.linspace(-math.pi, math.pi, 1_000_001)
    best = grid[np.argmax(m(grid))]
    assert circ(t, best) < 1e-4
    print(f"optimal phase {math.remainder(t, TWO_PI):.5f} rad")


def test_optimal_phase_rejects_nonfinite():
    with pytest.raises(ValueError):
        ModulationModel(float("inf"), 0, 0)


# ----------------------------------------------------------- optimizers


@pytest.fixture(scope="module")
def desk_quantum():
    grid = ModeGrid(4, 296e-6)
    T = make_medium(MediumSpec(seed=0), (8, 8), grid)
    return System(build_double_gaussian(grid, GaussianStateParams(2.9e-5, 8e2)), T)


def test_optimizer_rejects_bad_args(desk_quantum):
    with pytest.raises(ValueError):
        optimize_nonclassical(desk_quantum, steps=0)
    with pytest.raises(ValueError):
        optimize_nonclassical(desk_quantum, fraction=1.0)
    with pytest.raises(ValueError):
        optimize_nonclassical(desk_quantum, phase_scheme="fit(4)")
    with pytest.raises(ValueError):
        optimize_classical(desk_quantum)


@pytest.mark.parametrize("scheme", ["6pt", "fit(10)"])
def test_nonclassical_monotone_and_reproducible(desk_quantum, scheme):
    tr = optimize_nonclassical(desk_quantum, steps=60, phase_scheme=scheme, seed=3)
    assert len(tr.steps) == 60 and tr.monotone
    assert tr.values[-1] > 3 * tr.values[0]
    again = optimize_nonclassical(desk_quantum, steps=60, phase_scheme=scheme, seed=3)
    assert np.array_equal(tr.final_mask.theta, again.final_mask.theta)
    assert tr.config_hash == again.config_hash


def test_direct_scan_matches_model_scan(desk_quantum):
    a = optimize_nonclassical(desk_quantum, steps=10, seed=1, scan="model")
    b = optimize_nonclassical(desk_quantum, steps=10, seed=1, scan="direct")
    assert np.allclose(a.values, b.values, rtol=1e-9)


def test_noisy_reject_on_decrease(desk_quantum):
    target = TargetSpec("sum-coordinate", noise_rel=0.05)
    tr = optimize(desk_quantum, target, 40, seed=2, reject_on_decrease=True)
    assert tr.monotone
    assert all(s.accepted == (s.value_after >= s.value_before) for s in tr.steps)


def test_early_stop(desk_quantum):
    tr = optimize(desk_quantum, TargetSpec(), 2000, seed=0, early_stop=True)
    assert tr.early_stopped and len(tr.steps) < 2000


def test_trace_csv_and_header(desk_quantum, tmp_path):
    tr = optimize_nonclassical(desk_quantum, steps=5, seed=0)
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "step,value_before,value_after,applied_phase,accepted" and len(lines) == 6
    h = tr.header()
    assert h["n_steps"] == 5 and h["config"]["scheme"] == "fit(10)"
    assert OptimizationTrace().values.size == 0


def _classical_system(seed, n=3, out=(2, 2)):
    g = ModeGrid(1, 1.0, n)
    T = make_medium(MediumSpec("iid-complex", seed=seed), out, g)
    gen = np.random.default_rng(seed)
    e = random_complex(gen, n)
    return System(ClassicalField(g, e / np.linalg.norm(e)), T)


@pytest.mark.parametrize("seed", range(5))
def test_classical_reaches_algebraic_maximum(seed):
    system = _classical_system(seed)
    tr = optimize_classical(system, (1, 1), steps=50, seed=seed)
    row = system.medium.t[3]
    best = np.sum(np.abs(row * system.source.amplitudes)) ** 2
    assert tr.values[-1] == pytest.approx(best, rel=0.01)
    assert tr.monotone


def test_classical_restarts_agree():
    system = _classical_system(9, n=8, out=(3, 3))
    best = np.sum(np.abs(system.medium.t[4] * system.source.amplitudes)) ** 2
    for r in range(5):
        m0 = PhaseMask(system.source.grid, np.random.default_rng(r).uniform(0, TWO_PI, 8))
        tr = optimize_classical(system, (1, 1), steps=600, seed=r, mask0=m0)
        assert tr.values[-1] == pytest.approx(best, rel=0.01)


def test_classical_identity_medium_keeps_flat_mask():
    g = ModeGrid(1, 1.0, 4)
    system = System(classical_field(g), ScatteringMatrix(np.eye(4, dtype=complex), (2, 2), g))
    tr = optimize_classical(system, (0, 1), steps=10)
    assert np.allclose(tr.final_mask.theta, 0)


def test_phasor_similarity_global_phase():
    a = np.random.default_rng(0).uniform(0, TWO_PI, 6)
    assert phasor_similarity(a, a + 2.0) == pytest.approx(1)


# ---------------------------------------------------------- binary spins


def test_spin_theta_mapping():
    s = np.array([1, -1, -1, 1])
    th = spins_to_theta(s)
    assert np.allclose(th, [0, math.pi / 2, math.pi / 2, 0])
    assert np.array_equal(theta_to_spins(th), s)
    assert np.allclose(np.exp(2j * th), s)


class _TwoLevel:
    n_spins = 1

    def spin_value(self, s):
        return 1.0 if s[0] < 0 else 0.0


def test_binary_single_spin_full_flip():
    tr = optimize_binary_spins(_TwoLevel(), steps=3, flip_fraction=1.0, seed=0, sigma0=np.array([1]))
    assert tr.config["final_sigma"] == [-1]
    assert [s.accepted for s in tr.steps] == [True, False, False]


def test_binary_energy_non_increasing():
    grid = ModeGrid(8, 296e-6)
    T = make_medium(MediumSpec(seed=0), (16, 16), grid)
    system = System(near_diagonal_state(grid, 0.1), T)
    tr = optimize_binary_spins(system, steps=300, seed=0)
    e = binary_energies(tr)
    assert np.all(np.diff(e) <= 0) and e[-1] < e[0]
    assert set(np.round(tr.final_mask.theta, 12)) <= {0.0, round(math.pi / 2, 12)}


def test_binary_search_ends_in_local_minimum():
    hits = 0
    for seed in range(20):
        n = 2 + seed % 3
        g = ModeGrid(1, 1.0, n)
        T = make_medium(MediumSpec("iid-complex", seed=50 + seed), (3, 3), g)
        system = System(near_diagonal_state(g, 0.1), T)
        values = {s: evaluate(system, spins_to_theta(np.array(s)), TargetSpec())
                  for s in itertools.product((1, -1), repeat=n)}
        tr = optimize_binary_spins(system, steps=60, flip_fraction=0.25, seed=seed)
        final = tuple(tr.config["final_sigma"])
        assert -binary_energies(tr)[-1] == pytest.approx(values[final], rel=1e-12)
        for k in range(n):
            nb = list(final)
            nb[k] *= -1
            assert values[tuple(nb)] <= values[final]
        hits += math.isclose(values[final], max(values.values()), rel_tol=1e-12)
    print(f"single run reached the exhaustive optimum in {hits}/20 cases")


@pytest.mark.xfail(strict=True, reason="a fixed 25% flip set is one spin at N <= 4; a single run is a local search")
def test_binary_single_run_hits_exhaustive_optimum_80_percent():
    hits = 0
    for seed in range(20):
        n = 2 + seed % 3
        g = ModeGrid(1, 1.0, n)
        T = make_medium(MediumSpec("iid-complex", seed=50 + seed), (3, 3), g)
        system = System(near_diagonal_state(g, 0.1), T)
        best = max(evaluate(system, spins_to_theta(np.array(s)), TargetSpec())
                   for s in itertools.product((1, -1), repeat=n))
        tr = optimize_binary_spins(system, steps=300, seed=seed)
        hits += math.isclose(-binary_energies(tr)[-1], best, rel_tol=1e-12)
    assert hits >= 16


# -------------------------------------------------------------- landscape


def test_strict_maxima_counting():
    assert strict_local_maxima(np.zeros((20, 20))) == 0
    v = np.zeros((20, 20))
    v[3, 4] = 1
    v[15, 15] = 2
    assert strict_local_maxima(v) == 2


def test_landscape_constant_target():
    g = ModeGrid(1, 1.0, 3)
    T = ScatteringMatrix(np.zeros((4, 3), complex), (2, 2), g)
    _, n = landscape_scan(System(classical_field(g), T), resolution=32)
    assert n == 0


def test_landscape_argument_checks():
    g = ModeGrid(1, 1.0, 3)
    system = _classical_system(0)
    with pytest.raises(ValueError):
        landscape_scan(system, resolution=8)
    with pytest.raises(ValueError):
        landscape_scan(system, free_modes=(1, 1))
    del g


def test_offset_mask_only_moves_active():
    g = ModeGrid(1, 1.0, 3)
    m = offset_mask(PhaseMask.flat(g), Partition.from_indices(3, [1]), 0.5)
    assert np.allclose(m.theta, [0, 0.5, 0])
