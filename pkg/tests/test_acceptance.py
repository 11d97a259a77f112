"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line, then asserts.

Run alone with ``pytest tests/test_acceptance.py -s -v``. The desk-suite
criteria (5, 6, 7) share one batch of 60 runs, so this module takes several
minutes on one core.
"""
import time

import numpy as np
import pytest

from evolba import fractal, harness, spectral
from evolba.attack import AttackConfig, bisect_segment, run
from evolba.oracle import Float32View, LinearOracle, SphereOracle, minimal_adversarial_l2
from evolba.remote import OracleServer, RemoteOracle
from evolba.sepcma import fmin
from evolba.tensor import blend
from evolba.trace import AttackTrace

pytestmark = pytest.mark.slow

# Pinned by the pilot (seeds 0-2, distance 2, N=3072): linear ratios 1.100-1.109, sphere 1.115-1.119.
T_LIN = 1.20
T_SPH = 1.20
BUDGET = 30_000


@pytest.fixture
def report_line(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok
    return emit


def test_c1_spectral_exactness(report_line):
    rng = np.random.default_rng(100)
    start = time.perf_counter()
    worst = 0.0
    partition_ok = True
    radii = [0, 5, 25, 50, spectral.max_radius(32, 32)]
    for _ in range(200):
        x = rng.uniform(0, 1, (32, 32, 3))
        f = spectral.dft2(x)
        worst = max(worst, float(np.max(np.abs(spectral.idft2(f, clamp=False) - x))))
        for r in radii:
            partition_ok &= bool(np.array_equal(spectral.lowpass(f, r) + spectral.highpass(f, r), f))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and partition_ok and elapsed < 10
    report_line(1, ok, f"max roundtrip error {worst:.2e}, partition exact={partition_ok}, {elapsed:.2f}s")
    assert ok


def test_c2_binary_search_tolerance(report_line):
    rng = np.random.default_rng(200)
    gaps, queries = [], []
    for _ in range(100):
        w = rng.standard_normal(3072)
        a, b = rng.uniform(0, 1, (2, 32, 32, 3))
        if w @ (b - a).ravel() < 0:
            a, b = b, a
        target = rng.uniform(0.05, 0.95)
        bias = -float(w @ blend(a, b, target).ravel())
        oracle = LinearOracle(w, bias, shape=(32, 32, 3))
        # crossing of the affine margin along the segment, in closed form
        alpha_star = -(w @ a.ravel() + bias) / (w @ (b - a).ravel())
        _, hi = bisect_segment(b, a, oracle, oracle.classify(a), 26)
        queries.append(oracle.budget.used - 1)
        gaps.append(hi - alpha_star)
    gaps = np.array(gaps)
    ok = bool(np.all(gaps > 0) and np.all(gaps <= 2.0 ** -26) and set(queries) == {26})
    report_line(2, ok, f"alpha_u - alpha* in [{gaps.min():.2e}, {gaps.max():.2e}], queries {sorted(set(queries))}")
    assert ok


def test_c3_optimizer_sanity(report_line):
    results = [fmin(lambda x: (x ** 2).sum(axis=1), np.full(20, 3.0), 1.0, 200_000, 1e-10, seed=s)
               for s in range(10)]
    hits = sum(f < 1e-10 and n <= 200_000 for _, f, n in results)
    report_line(3, hits == 10, f"{hits}/10 seeds reach f < 1e-10, max evals {max(n for *_, n in results)}")
    assert hits == 10


def optimality_ratios(make_oracle):
    ratios = []
    for inst in range(5):
        x = harness.synthetic_image(inst)
        for seed in range(10):
            oracle = make_oracle(x, inst)
            _, trace = run(x, oracle, AttackConfig(budget=BUDGET, rng_seed=seed))
            ratios.append(trace.final_l2 / minimal_adversarial_l2(oracle, x))
    return np.array(ratios)


def test_c4_optimality_gap(report_line):
    lin = optimality_ratios(lambda x, i: LinearOracle.around(x, 2.0, seed=i))
    sph = optimality_ratios(lambda x, i: SphereOracle.around(x, 2.0, offset=8.0, seed=i))
    ok = np.median(lin) <= T_LIN and np.median(sph) <= T_SPH
    report_line(4, ok, f"median ratio linear {np.median(lin):.3f} (<= {T_LIN}), "
                       f"sphere {np.median(sph):.3f} (<= {T_SPH}) over 50 runs each")
    assert ok


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    spec = harness.desk_suite(with_init_variant=True)
    return spec, harness.run_experiment(spec, out), out


def test_c5_comparative_trend(desk, report_line):
    _, report, _ = desk
    assert not report.failures
    wins = {}
    for oracle in ("linear", "highfreq"):
        wins[oracle] = sum(report.mean_at("EvolBA", oracle, BUDGET, i) <= report.mean_at("BA", oracle, BUDGET, i)
                           for i in range(10))
    total = sum(wins.values())
    ok = total >= 16  # 8 of every 10 image-oracle cells
    report_line(5, ok, f"EvolBA <= BA at q=30000 in {total}/20 cells "
                       f"(linear {wins['linear']}/10, highfreq {wins['highfreq']}/10)")
    assert ok


def test_c6_init_operator_effect(desk, report_line):
    _, report, _ = desk
    wins = sum(report.mean_at("EvolBA+I", "highfreq", 2000, i) <= report.mean_at("EvolBA", "highfreq", 2000, i)
               for i in range(10))
    plain = report.mean_at("EvolBA", "highfreq", 2000)
    init = report.mean_at("EvolBA+I", "highfreq", 2000)
    report_line(6, wins >= 7, f"EvolBA+I <= EvolBA at q=2000 in {wins}/10 highfreq cells "
                              f"(means {init:.3f} vs {plain:.3f})")
    assert wins >= 7


def test_c7_trace_invariants(desk, report_line):
    spec, report, out = desk
    problems = []
    for rec in report.runs:
        trace = AttackTrace.from_csv(rec.trace_path)
        try:
            trace.check(BUDGET)
        except AssertionError as exc:
            problems.append(f"{rec.trace_path}: {exc}")
        if trace.queries_used != len(trace) or trace.queries_used != rec.queries:
            problems.append(f"{rec.trace_path}: query count mismatch")
    # bitwise reproducibility: re-run one cell twice and compare CSV bytes with the persisted trace
    stem = "EvolBA+I__highfreq__img0__rep0"
    persisted = (out / "runs" / f"{stem}.csv").read_bytes()
    algo = spec.algorithms[2]
    image = harness.resolve_image(spec.images[0])
    seed = harness.derived_seed(spec.seed, 0, 1, 2, 0)
    for k in range(2):
        _, trace = harness.run_algorithm(algo, image, harness.build_oracle(spec.oracles[1], image), seed)
        path = out / f"rerun{k}.csv"
        trace.to_csv(path)
        if path.read_bytes() != persisted:
            problems.append(f"re-run {k} differs from the persisted trace")
    ok = not problems
    report_line(7, ok, f"{len(report.runs)} persisted runs checked, 2 re-runs bitwise identical"
                if ok else "; ".join(problems[:3]))
    assert ok


def test_c8_jump_band_preservation(report_line):
    rng = np.random.default_rng(800)
    size, r = 128, 50
    low = spectral.low_mask(size, size, r)
    worst_low = worst_high = 0.0
    for k in range(50):
        donor, _ = fractal.generate(1000 + k, size, size)
        m = rng.normal(0.5, 0.3, 3 * size * size)
        out = spectral.jump(m, donor, r)
        f_out = spectral.dft2(out.reshape(size, size, 3))
        f_m = spectral.dft2(m.reshape(size, size, 3))
        f_d = spectral.dft2(donor)
        worst_low = max(worst_low, float(np.max(np.abs(f_out - f_m)[low])))
        worst_high = max(worst_high, float(np.max(np.abs(f_out - f_d)[~low])))
    ok = worst_low <= 1e-6 and worst_high <= 1e-6
    report_line(8, ok, f"max deviation low band {worst_low:.2e}, high band {worst_high:.2e} over 50 pairs")
    assert ok


def test_c9_remote_differential(report_line):
    x = harness.synthetic_image(9)
    served = LinearOracle.around(x, 2.0, seed=9)
    local = LinearOracle(served.w, served.b, shape=x.shape)
    server = OracleServer(served)
    server.start_background()
    try:
        rng = np.random.default_rng(900)
        with RemoteOracle.connect(*server.address) as remote:
            agree = sum(remote.classify(y) == local.classify(y) for y in rng.uniform(0, 1, (100,) + x.shape))
            cfg = AttackConfig(budget=5_000, rng_seed=3)
            _, t_remote = run(x, remote, cfg)
        # the wire carries float32, so the local reference sees the same rounding
        _, t_local = run(x, Float32View(local), cfg)
    finally:
        server.shutdown()
        server.server_close()
    same = (t_remote.query == t_local.query and t_remote.event == t_local.event
            and np.array_equal(np.array(t_remote.best_l2), np.array(t_local.best_l2)))
    ok = agree == 100 and same
    report_line(9, ok, f"{agree}/100 labels agree, traces bitwise equal={same} ({len(t_local)} queries)")
    assert ok
