"""End-to-end acceptance checks, one test per criterion.

Each test appends a ``CRITERION n: PASS|FAIL ...`` line that is printed in the
terminal summary (and to stdout when run with ``-s``).
"""

import time
from itertools import combinations

import numpy as np
import pytest

from mriseg.config import PipelineConfig, reference_suite, preset
from mriseg.core import NoiseSpec
from mriseg.diffusion import (
    DiffusionCoefficient,
    PicardSettings,
    assemble_from_faces,
    assemble_system,
    explicit_step_reference,
    picard_denoise,
)
from mriseg.metrics import dice, jaccard, multi_class_report, seg_accuracy
from mriseg.pipeline import run, run_experiment_grid, synthesize
from mriseg.recon import FourierOperator
from mriseg.segment import (
    JenksSettings,
    StructuringElement,
    jenks_classify,
    morphological_close,
    optimal_sdcm,
    segment_image,
)
from mriseg.sparse import DeflationSpace, cg_solve, dpcg_solve, pcg_solve

from conftest import ACCEPTANCE_LINES, dense_diffusion_matrix, two_phase_faces

GRID_SIZE = 512
FLOORS = {"js": 0.97, "dsc": 0.98, "sa": 0.99}


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1

def test_criterion_01_solver_correctness():
    rng = np.random.default_rng(101)
    worst_err, worst_time = 0.0, 0.0
    for n in (4, 8, 16, 24, 32):
        img = rng.random((n, n))
        a = assemble_system(img, DiffusionCoefficient(), eta=0.05)
        b = rng.random(n * n)
        ref = np.linalg.solve(a.toarray(), b)
        defl = DeflationSpace.tiles(n, n, (2, 2) if n < 8 else (4, 4))
        for solve in (
            lambda: cg_solve(a, b, tol=1e-10, max_iter=50000),
            lambda: pcg_solve(a, b, tol=1e-10, max_iter=50000),
            lambda: dpcg_solve(a, b, defl, tol=1e-10, max_iter=50000),
        ):
            t0 = time.perf_counter()
            x, rep = solve()
            worst_time = max(worst_time, time.perf_counter() - t0)
            assert rep.converged
            worst_err = max(worst_err, float(np.abs(x - ref).max()))
    report(1, worst_err <= 1e-8 and worst_time < 1.0,
           f"max abs error {worst_err:.2e} (<= 1e-8), slowest solve {worst_time:.3f}s (< 1s)")


# ---------------------------------------------------------------- 2

def test_criterion_02_deflation_benefit():
    contrast = 1e4
    cx, cy = two_phase_faces(64, contrast)
    a = assemble_from_faces(cx, cy, eta=1e-4)
    b = np.random.default_rng(102).random(64 * 64)
    _, r_pcg = pcg_solve(a, b, tol=1e-8, max_iter=20000)
    _, r_dpcg = dpcg_solve(a, b, DeflationSpace.tiles(64, 64, (4, 4)), tol=1e-8, max_iter=20000)
    ok = r_pcg.converged and r_dpcg.converged and r_dpcg.iterations < r_pcg.iterations
    report(2, ok, f"contrast {contrast:g}: DPCG {r_dpcg.iterations} vs PCG {r_pcg.iterations} iterations")


# ---------------------------------------------------------------- 3

def test_criterion_03_picard_pde_fidelity():
    rng = np.random.default_rng(103)
    c = DiffusionCoefficient("constant", K=1.0)

    f = rng.random((16, 16))
    eta = 0.5
    u, _ = picard_denoise(f, f, c, PicardSettings(eta=eta, lin_tol=1e-12, max_picard=1))
    dense = dense_diffusion_matrix(np.ones((16, 15)), np.ones((15, 16)), eta)
    err_dense = float(np.abs(u.ravel() - np.linalg.solve(dense, f.ravel())).max())

    g = rng.random((8, 8))
    stat, _ = picard_denoise(g, g, c, PicardSettings(eta=1.0, lin_tol=1e-12))
    v = g.copy()
    dt = 0.9 / 5.0
    for _ in range(100_000):
        v = explicit_step_reference(v, c, 1.0, g, dt)
    err_explicit = float(np.abs(v - stat).max())
    report(3, err_dense <= 1e-8 and err_explicit <= 1e-4,
           f"one-step vs dense {err_dense:.2e} (<= 1e-8), explicit limit {err_explicit:.2e} (<= 1e-4)")


# ---------------------------------------------------------------- 4

def test_criterion_04_elastic_net_limits():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    K = 0.1
    ok, notes = True, []
    large = np.logspace(20, 300, 57)
    for d_p in (1.0, 1.2, 1.5, 1.8, 1.9):
        c = DiffusionCoefficient("elastic_net", K=K, d_p=d_p)
        vals = c(large)
        # approach K from above, monotonically, and end within 1e-6 K
        limit_ok = bool(np.all(vals >= K) and np.all(np.diff(vals) <= 0) and abs(vals[-1] - K) <= 1e-6 * K)
        s = rng.exponential(1.0, (100_000, 2)) * 10.0 ** rng.uniform(-6, 6, (100_000, 1))
        lo, hi = s.min(axis=1), s.max(axis=1)
        mono_ok = bool(np.all(c(lo) >= c(hi)))
        ok &= limit_ok and mono_ok
        notes.append(f"d_p={d_p}: |c(1e300)-K|/K={abs(vals[-1] - K) / K:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    report(4, ok, f"{'; '.join(notes)}; 1e5 monotone pairs each; {elapsed:.2f}s (< 1s)")


# ---------------------------------------------------------------- 5

def _brute_force_sdcm(v, k):
    v = np.sort(v)
    n = len(v)
    best = np.inf
    for cuts in combinations(range(1, n), k - 1):
        edges = (0, *cuts, n)
        best = min(best, sum(((v[a:b] - v[a:b].mean()) ** 2).sum() for a, b in zip(edges, edges[1:])))
    return best


def test_criterion_05_jenks_optimality():
    rng = np.random.default_rng(105)
    worst = 0.0
    checked = 0
    while checked < 500:
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(4, n) + 1))
        v = rng.random(n) if rng.random() < 0.7 else rng.integers(0, 6, n).astype(float)
        if len(np.unique(v)) < k:
            continue
        dp = optimal_sdcm(v, k)
        bf = _brute_force_sdcm(v, k)
        worst = max(worst, abs(dp - bf) / max(bf, 1e-300) if bf > 0 else abs(dp))
        checked += 1
    # floating-point sums in a different order: equality up to round-off
    report(5, worst <= 1e-12, f"{checked} instances, worst relative SDCM difference {worst:.1e} (<= 1e-12)")


# ---------------------------------------------------------------- 6

def test_criterion_06_metric_identities():
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(1000):
        shape = tuple(rng.integers(2, 40, 2))
        a = rng.random(shape) < rng.random()
        b = rng.random(shape) < rng.random()
        if not (a.any() or b.any()):
            a[0, 0] = True
        js = jaccard(a, b)
        worst = max(worst, abs(dice(a, b) - 2 * js / (1 + js)))
    oracle_ok = True
    for _ in range(50):
        p = rng.integers(0, 3, (8, 8))
        t = rng.integers(0, 3, (8, 8))
        rep = multi_class_report(p, t)
        for j, s in rep.per_class.items():
            inter = union = agree = sizes = 0
            for y in range(8):
                for x in range(8):
                    ia, ib = p[y, x] == j, t[y, x] == j
                    inter += ia and ib
                    union += ia or ib
                    agree += ia == ib
                    sizes += int(ia) + int(ib)
            oracle_ok &= s.js == inter / union and s.dsc == 2 * inter / sizes and s.sa == agree / 64
        a, b = p == 1, t == 1
        oracle_ok &= seg_accuracy(a, b) == np.sum(a == b) / 64
    report(6, worst <= 1e-12 and oracle_ok,
           f"max |DSC - 2JS/(1+JS)| = {worst:.1e} over 1000 pairs; 8x8 oracle {'equal' if oracle_ok else 'MISMATCH'}")


# ---------------------------------------------------------------- 7-10

@pytest.fixture(scope="module")
def grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("grid")
    suite = reference_suite(("basic", "modified"))
    results = run_experiment_grid(suite, out, size=GRID_SIZE, figures=False)
    return suite, {r.case.name: r for r in results}, out


def _check_floors(n, grid, images):
    suite, results, _ = grid
    lines, ok = [], True
    for case in suite:
        if case.image not in images:
            continue
        r = results.get(case.name)
        if r is None:
            ok = False
            lines.append(f"{case.name} failed")
            continue
        case_ok = r.js >= FLOORS["js"] and r.dsc >= FLOORS["dsc"] and r.sa >= FLOORS["sa"] and r.seconds <= 60
        ok &= case_ok
        lines.append(f"{case.name} JS {100 * r.js:.2f} DSC {100 * r.dsc:.2f} SA {100 * r.sa:.2f} ({r.seconds:.1f}s)")
    report(n, ok, "; ".join(lines))


@pytest.mark.slow
def test_criterion_07_noise_grid(grid):
    _check_floors(7, grid, ("noise0.1", "noise0.3", "noise0.5"))


@pytest.mark.slow
def test_criterion_08_blur_grid(grid):
    _check_floors(8, grid, ("blur-gaussian", "blur-average", "blur-motion"))


@pytest.mark.slow
def test_criterion_09_basic_vs_modified(grid):
    suite, results, _ = grid
    deltas = {}
    for image in {c.image for c in suite}:
        b, m = results.get(f"{image}-basic"), results.get(f"{image}-modified")
        deltas[image] = abs(100 * (b.js - m.js)) if b and m else float("inf")
    worst = max(deltas.values())
    report(9, worst <= 1.0, f"max |dJS| = {worst:.2f} pp (<= 1.0) over {len(deltas)} images")


@pytest.mark.slow
def test_criterion_10_determinism(grid, tmp_path):
    suite, first, out1 = grid
    second = {r.case.name: r for r in run_experiment_grid(suite, tmp_path, size=GRID_SIZE, figures=False)}
    ok = (out1 / "metrics.csv").read_bytes() == (tmp_path / "metrics.csv").read_bytes()
    for name, r in first.items():
        s = second[name]
        ok &= np.array_equal(r.filtered, s.filtered) and np.array_equal(r.segmentation.labels, s.segmentation.labels)
        for img in r.trace.images:
            ok &= np.array_equal(r.trace.images[img], s.trace.images[img])
        for f in (out1 / name).iterdir():
            ok &= f.read_bytes() == (tmp_path / name / f.name).read_bytes()
    report(10, ok, f"{len(first)} cases re-run: CSV rows and images {'bit-identical' if ok else 'DIFFER'}")


# ---------------------------------------------------------------- 11

def test_criterion_11_degenerate_inputs():
    checks = {}
    const = np.full((64, 64), 0.5)
    k = FourierOperator(64, 64).forward(const)
    for approach in ("basic", "modified"):
        cfg = preset("noise0.1", approach).replace(region_grow=False)
        filtered, seg, trace = run(k, cfg)
        checks[f"constant/{approach}"] = bool(np.abs(filtered - const).max() <= 1e-10 and seg.k == 1
                                              and not seg.labels.any())

    clean, degraded, kz, truth = synthesize(NoiseSpec(variance=0.0, seed=9), 64)
    checks["zero-variance noise"] = bool(np.array_equal(clean, degraded))
    for approach in ("basic", "modified"):
        _, seg, _ = run(kz, preset("noise0.1", approach))
        checks[f"clean phantom/{approach}"] = bool(np.array_equal(seg.foreground(), truth.foreground()))

    rng = np.random.default_rng(111)
    x = rng.random((20, 20))
    checks["n_b = 0"] = bool(np.array_equal(morphological_close(x, StructuringElement(0)), x))
    _, seg0, tr0 = run(kz, PipelineConfig(n_b=0))
    checks["n_b = 0 pipeline"] = bool(np.array_equal(tr0.images["closed"], tr0.images["background_removed"]))

    r1 = jenks_classify([0.2] * 10, JenksSettings(n_cl=3))
    lm = segment_image(const, JenksSettings(n_cl=2))
    checks["k = 1"] = r1.k == 1 and r1.gvf == 1.0 and lm.k == 1 and lm.breaks == ()
    bad = [name for name, ok in checks.items() if not ok]
    report(11, not bad, f"{len(checks)} contracts checked" + (f"; failing: {', '.join(bad)}" if bad else ""))
