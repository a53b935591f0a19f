"""Acceptance criteria A1 to A13.

Each test prints exactly one ``A<n> PASS|FAIL: ...`` line; the lines are
also collected and repeated in the terminal summary. Thresholds are the
stated tolerances, unchanged.
"""
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import ACCEPTANCE_LINES
from peeksched import cli, core, oracle, scheduling, scoring, sim, workload
from peeksched.core import AccuracySource, ModelProfile
from peeksched.sneakpeek import DirichletBelief, Evidence, posterior
from peeksched.workload import DeadlineDist

DEFAULT = workload.builtin("default_trio")


def report(tag: str, ok: bool, detail: str) -> None:
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def mean_utility(spec, preset, seeds, est=sim.EstimationConfig()):
    return float(np.mean([sim.run_trial(spec, preset, s, est).mean_utility for s in seeds]))


def test_a1_accuracy_decomposition():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        c = int(rng.integers(1, 11))
        z = rng.integers(0, 50, (c, c)).astype(float)
        z[np.arange(c), rng.integers(0, c, c)] += 1  # every row non-empty
        theta = scoring.class_frequencies(z)
        lhs = scoring.theta_accuracy(theta, scoring.recalls_from_confusion(z))
        worst = max(worst, abs(lhs - scoring.accuracy_from_confusion(z)))
    elapsed = time.perf_counter() - t0
    report("A1", worst <= 1e-12 and elapsed < 1.0, f"max |diff| {worst:.2e} over 500 matrices in {elapsed:.3f}s")


def test_a2_quadratic_identity():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(200):
        c = int(rng.integers(1, 9))
        n = int(rng.integers(1, 51))
        probs = rng.dirichlet(np.ones(c), size=n)
        labels = rng.integers(0, c, n)
        theta, mu_p, mean_sq = scoring.quadratic_components(probs, labels, c)
        diff = scoring.quadratic_score_theta(theta, mu_p, mean_sq) - scoring.quadratic_score_direct(probs, labels)
        worst = max(worst, abs(diff))
    report("A2", worst <= 1e-12, f"max |diff| {worst:.2e} over 200 samples")


def test_a3_conjugacy():
    rng = np.random.default_rng(303)
    mismatches = 0
    for _ in range(1000):
        c = int(rng.integers(1, 12))
        alpha = rng.choice([0.5, 1.0, 2.0, 1e-6, 11.4]) * rng.random(c) + 1e-6
        y = rng.integers(0, 60, c)
        got = posterior(DirichletBelief(alpha), Evidence(y)).alpha
        mismatches += not np.array_equal(got, alpha + y)
    report("A3", mismatches == 0, f"{mismatches} mismatches in 1000 cases")


def _with_estimates(inst, seed):
    """Random thetas and a random estimator profile for a small instance."""
    rng = np.random.default_rng([seed, 7])
    thetas = {r.request_id: rng.dirichlet(np.ones(inst.apps[r.app_id].label_count)) for r in inst.requests}
    profiles = {}
    for app_id, app in inst.apps.items():
        n = app.label_count
        z = rng.integers(1, 20, (n, n)).astype(float) + np.diag(rng.integers(10, 60, n))
        profiles[app_id] = ModelProfile(f"{app_id}/sp", z, 0.0, 0.0)
    return thetas, profiles


def test_a4_oracle_equivalence():
    t0 = time.perf_counter()
    grouped_gap, over_global, checked = 0.0, 0.0, 0
    for seed in range(100):
        inst = workload.small_instance(seed, max_apps=3, max_requests=6, max_models=3, penalty="sigmoid")
        thetas, profiles = _with_estimates(inst, seed)
        ctx = scheduling.SchedulingContext(inst.now, inst.requests, inst.apps, thetas, profiles)
        best = oracle.exact_global(inst.requests, inst.apps, origin=inst.now).utility

        g_spec = replace(scheduling.PRESETS["grouped"], brute_force_threshold=3)
        plan = scheduling.schedule_grouped(g_spec, ctx)
        u = core.schedule_utility(plan, inst.requests, inst.apps, origin=inst.now)
        g_best = oracle.exact_grouped(scheduling.build_groups(g_spec, ctx), inst.requests, inst.apps, origin=inst.now)
        grouped_gap = max(grouped_gap, abs(g_best.utility - u))

        for name, spec in scheduling.PRESETS.items():
            if spec.short_circuit:
                apps = {k: scheduling.augment_short_circuit(a, profiles[k]) for k, a in inst.apps.items()}
                plan = scheduling.schedule(spec, ctx)
                u = core.schedule_utility(
                    plan, inst.requests, apps, AccuracySource.DYNAMIC, thetas=thetas, origin=inst.now
                )
                ref = oracle.exact_global(
                    inst.requests, apps, budget=oracle.OracleBudget(5_000_000),
                    accuracy_source=AccuracySource.DYNAMIC, thetas=thetas, origin=inst.now,
                ).utility
            else:
                plan = scheduling.schedule(spec, ctx)
                u = core.schedule_utility(plan, inst.requests, inst.apps, origin=inst.now)
                ref = best
            over_global = max(over_global, u - ref)
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = grouped_gap <= 1e-9 and over_global <= 1e-9 and elapsed < 30.0
    report(
        "A4",
        ok,
        f"grouped vs exact_grouped max gap {grouped_gap:.1e}; max scheduler excess over exact_global "
        f"{max(over_global, 0.0):.1e} ({checked} checks); {elapsed:.1f}s",
    )


def test_a5_estimation_error():
    t0 = time.perf_counter()
    e5 = sim.estimation_errors(DEFAULT, sim.EstimationConfig(k=5), request_total=1000)
    e1 = sim.estimation_errors(DEFAULT, sim.EstimationConfig(k=1), request_total=1000)
    elapsed = time.perf_counter() - t0
    beats_profiled = all(e5.dynamic[a] < e5.profiled[a] for a in e5.dynamic)
    k5_best = all(e5.dynamic[a] <= e1.dynamic[a] for a in e5.dynamic)
    detail = "; ".join(
        f"{a}: dyn k5 {e5.dynamic[a]:.4f} k1 {e1.dynamic[a]:.4f} profiled {e5.profiled[a]:.4f}" for a in e5.dynamic
    )
    report("A5", beats_profiled and k5_best and elapsed < 10.0, f"{detail}; {elapsed:.1f}s")


def test_a6_scheduler_ordering():
    t0 = time.perf_counter()
    util, viol = {}, {}
    for name, spec in scheduling.PRESETS.items():
        ms = [sim.run_trial(DEFAULT, spec, s) for s in range(200)]
        util[name] = float(np.mean([m.mean_utility for m in ms]))
        viol[name] = float(np.mean([m.mean_violation_ms for m in ms]))
    elapsed = time.perf_counter() - t0
    sp, g, lop, loe = util["sneakpeek"], util["grouped"], util["lo-priority"], util["lo-edf"]
    ok = (
        sp > g > lop >= loe
        and sp >= 1.3 * loe
        and viol["sneakpeek"] == min(viol.values())
        and elapsed < 60.0
    )
    detail = ", ".join(f"{n} {util[n]:.4f}/{viol[n]:.1f}ms" for n in util)
    report("A6", ok, f"utility/violation: {detail}; SP/LO-EDF {sp / loe:.2f}x; {elapsed:.1f}s")


def test_a7_deadline_sweep():
    deadlines = [50, 100, 150, 200, 300, 400]
    curves = {}
    for name, spec in scheduling.PRESETS.items():
        curves[name] = [
            mean_utility(replace(DEFAULT, deadline=DeadlineDist("uniform", float(d))), spec, range(100))
            for d in deadlines
        ]
    rhos = {n: float(spearmanr(deadlines, c)[0]) for n, c in curves.items()}
    at400 = [curves[n][-1] for n in scheduling.DATA_OBLIVIOUS]
    spread = max(at400) - min(at400)
    ok = all(r >= 0.9 for r in rhos.values()) and spread <= 0.05
    rho_text = ", ".join(f"{n} {r:.2f}" for n, r in rhos.items())
    report("A7", ok, f"Spearman {rho_text}; data-oblivious spread at 400ms {spread:.4f}")


def test_a8_simulated_estimator_floor():
    grouped = mean_utility(DEFAULT, scheduling.PRESETS["grouped"], range(100))
    sweep = {
        a: mean_utility(DEFAULT, scheduling.PRESETS["sneakpeek"], range(100), sim.EstimationConfig(sp_sim_accuracy=a))
        for a in (0.1, 0.3, 0.5, 0.7, 0.9)
    }
    ok = sweep[0.9] > grouped and sweep[0.1] <= grouped
    text = ", ".join(f"{a}: {u:.4f}" for a, u in sweep.items())
    report("A8", ok, f"SneakPeek by estimator accuracy {text}; Grouped {grouped:.4f}")


def test_a9_model_variance():
    grouped, lop = {}, {}
    for s in (0.0, 0.05, 0.10, 0.20):
        spec = workload.with_spread(DEFAULT, s)
        grouped[s] = mean_utility(spec, scheduling.PRESETS["grouped"], range(100))
        lop[s] = mean_utility(spec, scheduling.PRESETS["lo-priority"], range(100))
    ok = grouped[0.20] > grouped[0.0] and grouped[0.20] > lop[0.20]
    text = ", ".join(f"{s}: G {grouped[s]:.4f} LOP {lop[s]:.4f}" for s in grouped)
    report("A9", ok, text)


def test_a10_prior_study():
    err = {}
    for hint in ("stream", "test"):
        for prior in ("uninformative", "weak", "strong"):
            e = sim.estimation_errors(DEFAULT, sim.EstimationConfig(prior=prior, prior_hint=hint), request_total=1000)
            err[hint, prior] = float(np.mean(list(e.dynamic.values())))
    m_u, m_w, m_s = (err["stream", p] for p in ("uninformative", "weak", "strong"))
    t_u, t_w, t_s = (err["test", p] for p in ("uninformative", "weak", "strong"))
    clauses = {
        "matched uninf<strong": m_u < m_s,
        "matched weak<strong": m_w < m_s,
        "mismatched uninf lowest": t_u < t_w and t_u < t_s,
    }
    text = "; ".join(f"{k} {'ok' if v else 'no'}" for k, v in clauses.items())
    report(
        "A10",
        all(clauses.values()),
        f"{text} (matched u/w/s {m_u:.4f}/{m_w:.4f}/{m_s:.4f}, mismatched {t_u:.4f}/{t_w:.4f}/{t_s:.4f})",
    )


def test_a11_multi_worker():
    one, two = {}, {}
    identical = True
    est = sim.EstimationConfig()
    for name, spec in scheduling.PRESETS.items():
        one[name] = mean_utility(DEFAULT, spec, range(100))
        two[name] = mean_utility(DEFAULT, replace(spec, worker_count=2), range(100))
    for seed in range(100):
        scen = workload.gen_scenario(DEFAULT, seed)
        ctx = scheduling.SchedulingContext(
            scen.now, scen.requests, scen.apps, sim.estimate_thetas(scen, est), sim.sneakpeek_profiles(scen, est)
        )
        for spec in scheduling.PRESETS.values():
            single = scheduling.schedule_grouped(spec, ctx) if spec.selection.grouped else scheduling.schedule_flat(spec, ctx)
            identical &= scheduling.schedule_multiworker(replace(spec, worker_count=1), ctx) == single
    ok = all(two[n] >= one[n] for n in one) and two["grouped"] >= two["lo-edf"] and identical
    text = ", ".join(f"{n} {one[n]:.4f}->{two[n]:.4f}" for n in one)
    report("A11", ok, f"w=1->w=2: {text}; w=1 schedules identical: {identical}")


def test_a12_overhead():
    spec = workload.with_app_count(workload.with_request_count(DEFAULT, 24), 6)
    means = {}
    for name, preset in scheduling.PRESETS.items():
        sim.run_trial(spec, preset, 0)  # warm caches
        means[name] = float(np.mean([sim.run_trial(spec, preset, s).overhead_ms for s in range(20)]))
    worst = max(means.values())
    text = ", ".join(f"{n} {v:.1f}ms" for n, v in means.items())
    report("A12", worst < 50.0, f"mean per-window overhead, 24 requests / 6 apps: {text}")


def test_a13_determinism(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(
        "scenario: default_trio\n"
        "schedulers: [maxacc-edf, lo-edf, lo-priority, grouped, sneakpeek]\n"
        "trials: 5\nbase_seed: 17\n"
        "sweep: {param: deadline_mean, values: [80, 150]}\n"
    )
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.csv"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(b"\n".join(line.rsplit(b",", 1)[0] for line in out.read_bytes().split(b"\n")))
    data_rows = len(outs[0].strip().split(b"\n")) - 1
    report("A13", outs[0] == outs[1], f"two runs of {data_rows} data rows match once the overhead column is dropped")
