"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from slicewatch import config, harness
from slicewatch import slicing_sim as sim
from slicewatch.cca_online import PlDetectorBank, fit_cca, init_tracker, pl_step, residual, t2_score, update_tracker
from slicewatch.harness import ConfusionMatrix, compute_metrics, f1_score
from slicewatch.ocsvm_admm import (
    PnDetector,
    PnDetectorConfig,
    VnAgentState,
    init_pn_detector,
    pn_step,
    update_lambda,
    update_primal,
)
from slicewatch.rff import approx_kernel, map_features, sample_rff_params


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}")
        assert ok, detail

    return emit


# --- 1 -------------------------------------------------------------------------


def test_incremental_covariance_matches_batch(verdict):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        p, d = (int(x) for x in rng.integers(1, 9, 2))
        n = int(rng.integers(3, 501))
        t0 = int(rng.integers(2, min(n, 12) + 1))
        U = rng.normal(size=(n, p)) @ rng.normal(size=(p, p)) + rng.normal(0, 5, p)
        Y = rng.normal(size=(n, d)) * rng.uniform(0.1, 10, d)
        tr = init_tracker(U[:t0], Y[:t0])
        for u, y in zip(U[t0:], Y[t0:]):
            tr = update_tracker(tr, u, y)
        Uc, Yc = U - U.mean(axis=0), Y - Y.mean(axis=0)
        for got, want in (
            (tr.cov_uu(), Uc.T @ Uc / (n - 1)),
            (tr.cov_yy(), Yc.T @ Yc / (n - 1)),
            (tr.cov_uy(), Uc.T @ Yc / (n - 1)),
        ):
            worst = max(worst, np.linalg.norm(got - want) / np.linalg.norm(want))
    elapsed = time.perf_counter() - start
    verdict(1, "incremental covariance", worst < 1e-9 and elapsed < 10, f"max rel err {worst:.2e}, {elapsed:.1f}s")


# --- 2 -------------------------------------------------------------------------


def _kernel_errors(D, seed, X1, X2):
    params = sample_rff_params(6, D, 1.0, seed)
    Z1, Z2 = map_features(params, X1), map_features(params, X2)
    approx = np.array([approx_kernel(a, b) for a, b in zip(Z1, Z2)])
    exact = np.exp(-np.sum((X1 - X2) ** 2, axis=1))
    return np.abs(approx - exact)


def test_random_feature_kernel_fidelity(verdict):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    X1, X2 = rng.uniform(size=(100, 6)), rng.uniform(size=(100, 6))
    err = _kernel_errors(2048, 0, X1, X2)
    curve = [float(np.mean([_kernel_errors(D, s, X1, X2).mean() for s in range(20)])) for D in (64, 256, 1024, 4096)]
    monotone = all(b <= a for a, b in zip(curve, curve[1:]))
    elapsed = time.perf_counter() - start
    ok = err.mean() <= 0.05 and err.max() <= 0.15 and monotone and elapsed < 10
    detail = f"mean {err.mean():.4f}, max {err.max():.4f}, error by D {[round(c, 4) for c in curve]}, {elapsed:.1f}s"
    verdict(2, "kernel approximation", ok, detail)


# --- 3 and 4: independent objective ------------------------------------------------------


def _instance(rng):
    n = int(rng.integers(1, 5))
    D = int(rng.integers(1, 6))
    eta = float(rng.uniform(0.2, 5.0))
    C = float(rng.uniform(0.1, 1.2))
    s = float(rng.uniform(0.05, 1.5))
    agents = [VnAgentState(rng.normal(0, s, D), rng.normal(0, s), rng.normal(0, s, D), rng.normal(0, s)) for _ in range(n)]
    return agents, rng.normal(size=D), eta, C


def _objective(w, rho, lam, me, agents, z, eta):
    val = 0.5 * w @ w - rho - lam * (z @ w - rho) + 2 * me.alpha @ w + 2 * me.beta * rho
    for o in agents:
        val += 0.5 * eta * (np.sum((w - (me.w + o.w) / 2) ** 2) + (rho - (me.rho + o.rho) / 2) ** 2)
    return val


def _dual_grid(me, agents, z, eta, lam):
    """Objective minimised over (w, rho) in closed form, evaluated on a grid of lam."""
    n = len(agents)
    pull_w = sum((me.w + o.w) / 2 for o in agents)
    pull_r = sum((me.rho + o.rho) / 2 for o in agents)
    W = (np.outer(lam, z) - 2 * me.alpha + eta * pull_w) / (1 + eta * n)
    R = (1 - lam - 2 * me.beta + eta * pull_r) / (eta * n)
    val = 0.5 * np.sum(W * W, axis=1) - R - lam * (W @ z - R) + 2 * W @ me.alpha + 2 * me.beta * R
    for o in agents:
        val += 0.5 * eta * (np.sum((W - (me.w + o.w) / 2) ** 2, axis=1) + (R - (me.rho + o.rho) / 2) ** 2)
    return val


def test_dual_update_matches_grid_search(verdict):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst, in_range = 0.0, True
    for _ in range(100):
        agents, z, eta, C = _instance(rng)
        cfg = PnDetectorConfig(eta, C, len(agents), sample_rff_params(1, z.size, 1.0, 0))
        grid = np.linspace(0.0, cfg.lambda_cap, 100_000)
        best = grid[np.argmax(_dual_grid(agents[0], agents, z, eta, grid))]
        lam = update_lambda(agents[0], [(a.w, a.rho) for a in agents], z, cfg)
        in_range &= 0.0 <= lam <= cfg.lambda_cap
        worst = max(worst, abs(lam - best))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and in_range and elapsed < 10
    verdict(3, "dual update", ok, f"max |lambda - grid| {worst:.2e}, all in [0, cap]: {in_range}, {elapsed:.1f}s")


def test_primal_update_is_stationary(verdict):
    rng = np.random.default_rng(4)
    h = 1e-6
    worst = 0.0
    for _ in range(50):
        agents, z, eta, C = _instance(rng)
        cfg = PnDetectorConfig(eta, C, len(agents), sample_rff_params(1, z.size, 1.0, 0))
        nb = [(a.w, a.rho) for a in agents]
        me = agents[0]
        lam = update_lambda(me, nb, z, cfg)
        w, rho = update_primal(me, nb, z, lam, cfg)
        x = np.append(w, rho)
        grad = np.empty_like(x)
        for k in range(x.size):
            e = np.zeros_like(x)
            e[k] = h
            up, dn = x + e, x - e
            grad[k] = (
                _objective(up[:-1], up[-1], lam, me, agents, z, eta) - _objective(dn[:-1], dn[-1], lam, me, agents, z, eta)
            ) / (2 * h)
        worst = max(worst, float(np.linalg.norm(grad)))
    verdict(4, "primal stationarity", worst < 1e-6, f"max gradient norm {worst:.2e}")


# --- 5 -------------------------------------------------------------------------


def test_consensus_on_default_scenario(verdict):
    start = time.perf_counter()
    cfg = config.load_config(overrides=["anomaly_rate=0"])
    inp = harness.input_from_trace(harness.build_run_trace(cfg, "pn-ocsvm", 0))
    q, idx = next((q, idx) for q, idx in inp.pn_groups() if len(idx) == 3)
    X = harness.transform_features(inp.features, cfg["experiment.features"], cfg["ocsvm.warmup"])
    rff = sample_rff_params(X.shape[2], cfg["ocsvm.rff_dim"], cfg["ocsvm.kernel_width"], harness._rff_seed(cfg, 0, q))
    det = PnDetector(PnDetectorConfig(cfg["ocsvm.eta"], cfg["ocsvm.lambda_cap"] / 3, 3, rff, dual=cfg["ocsvm.dual"]))
    step_change = 0.0
    prev = None
    for t in range(1000):
        det.step(X[t, idx], force_commit=t < cfg["ocsvm.warmup"])
        if det.t >= 900:
            if prev is not None:
                step_change = max(step_change, float(np.max(np.abs(det.W - prev))))
            prev = det.W.copy()
    gap = det.consensus_gap()
    elapsed = time.perf_counter() - start
    ok = det.t == 1000 and gap < 1e-2 and step_change < 1e-3 and elapsed < 60
    detail = f"PN {q}: gap {gap:.2e} at iteration {det.t}, max per-step w change {step_change:.2e}, {elapsed:.1f}s"
    verdict(5, "consensus convergence", ok, detail)


# --- 6 -------------------------------------------------------------------------


@pytest.mark.slow
def test_distributed_ocsvm_beats_polluted_baseline(verdict):
    start = time.perf_counter()
    cfg = config.load_config()
    res = harness.run_experiment(cfg, "pn-ocsvm", num_runs=20, variants=("do", "baseline_artd"))
    do = res.reports["do"].metadata["run_mean"]
    base = res.reports["baseline_artd"].metadata["run_mean"]
    elapsed = time.perf_counter() - start
    base_f1 = base["f1"] if base["f1"] is not None else 0.0
    ok = do["recall"] >= base["recall"] and do["f1"] is not None and do["f1"] >= base_f1 and elapsed < 300
    detail = (
        f"DO recall {do['recall']:.3f} f1 {do['f1']:.3f} vs polluted baseline recall {base['recall']:.3f} "
        f"f1 {base_f1:.3f}, {elapsed:.0f}s"
    )
    verdict(6, "node detection ordering", ok, detail)


# --- 7 -------------------------------------------------------------------------


def test_residual_covariance_and_nonnegative_score(verdict):
    rng = np.random.default_rng(7)
    p, d = 4, 3
    A = rng.normal(size=(p + d, p + d))
    data = rng.normal(size=(400, p + d)) @ A.T + rng.normal(size=p + d)
    model = fit_cca(init_tracker(data[:, :p], data[:, p:]))
    tr = init_tracker(data[:, :p], data[:, p:])
    mean = np.concatenate([tr.mean_u, tr.mean_y])
    cov = np.block([[tr.cov_uu(), tr.cov_uy()], [tr.cov_uy().T, tr.cov_yy()]])
    draws = rng.multivariate_normal(mean, cov, size=5000)
    r = residual(model, draws[:, :p], draws[:, p:])
    dist = float(np.linalg.norm(np.cov(r, rowvar=False) - model.residual_cov()))
    scale = 10.0 ** rng.uniform(-3, 3, (1_000_000, 1))
    U = rng.normal(size=(1_000_000, p)) * scale
    Y = rng.standard_cauchy(size=(1_000_000, d))
    t2 = t2_score(model, residual(model, U, Y))
    ok = dist < 0.1 and bool(np.all(t2 >= 0))
    verdict(7, "residual structure", ok, f"cov distance {dist:.4f}, min T2 over 1e6 inputs {t2.min():.2e}")


# --- 8 -------------------------------------------------------------------------


@pytest.mark.slow
def test_distributed_cca_link_detection(verdict):
    start = time.perf_counter()
    cfg = config.load_config()
    assert cfg["cca.t0"] == 10 and cfg["cca.threshold_mode"] == "quantile"
    res = harness.run_experiment(cfg, "pl-cca", num_runs=20, variants=("do", "baseline_artd"))
    cm = ConfusionMatrix(**res.reports["do"].counts)
    recall = cm.tp / (cm.tp + cm.fn)
    fpr = cm.fp / (cm.fp + cm.tn)
    do_mean = res.reports["do"].metadata["run_mean"]["recall"]
    base_mean = res.reports["baseline_artd"].metadata["run_mean"]["recall"]
    elapsed = time.perf_counter() - start
    ok = recall >= 0.9 and fpr <= 0.1 and do_mean >= base_mean and elapsed < 300
    detail = (
        f"recall {recall:.3f}, FPR {fpr:.3f}, mean recall DO {do_mean:.3f} vs no-rollback polluted "
        f"{base_mean:.3f}, {elapsed:.0f}s"
    )
    verdict(8, "link detection", ok, detail)


# --- 9 -------------------------------------------------------------------------


def _forced_trace(kind):
    scfg = sim.ScenarioConfig(horizon=500, anomaly_rate=0.0)
    net, embs, _ = sim.build_scenario(scfg)
    targets = sim.anomaly_targets(net, kind)
    events = [
        sim.AnomalyEvent(tgt, start, start + length, 0.5)
        for tgt in targets
        for start, length in ((120, 30), (260, 40), (420, 25))
    ]
    return sim.generate_trace(net, embs, sim.AnomalySchedule(events, 500), scfg.seed_noise)


def test_rollback_restores_last_committed_state(verdict):
    cfg = config.defaults()
    warm = 100
    pn_checks = pl_checks = 0
    problems = []

    inp = harness.input_from_trace(_forced_trace("pn"))
    X = harness.transform_features(inp.features, "log-standardize", warm)
    for q, idx in inp.pn_groups():
        rff = sample_rff_params(X.shape[2], cfg["ocsvm.rff_dim"], cfg["ocsvm.kernel_width"], q)
        pcfg = PnDetectorConfig(cfg["ocsvm.eta"], cfg["ocsvm.lambda_cap"] / len(idx), len(idx), rff)
        det = PnDetector(pcfg)
        agents = init_pn_detector(pcfg)
        committed = det.state()
        committed_agents = [a.copy() for a in agents]
        for t in range(500):
            v = det.step(X[t, idx], force_commit=t < warm)
            fv = pn_step(agents, X[t, idx], pcfg, t, rollback=t >= warm)
            if v.is_anomalous and not v.committed:
                pn_checks += 1
                if not all(np.array_equal(a, b) for a, b in zip(det.state(), committed)):
                    problems.append(f"PN {q} step {t}")
            else:
                committed = det.state()
            if fv.is_anomalous and not fv.committed:
                if not all(a.equals(b) for a, b in zip(agents, committed_agents)):
                    problems.append(f"PN {q} step {t} (per-agent path)")
            else:
                committed_agents = [a.copy() for a in agents]

    inp = harness.input_from_trace(_forced_trace("pl"))
    X = harness.transform_features(inp.features, "log-standardize", warm)
    groups = inp.pl_groups()
    order = [k for _, idx in groups for k in idx]
    Xu, Xy = X[:, [inp.vls[k][0] for k in order]], X[:, [inp.vls[k][1] for k in order]]
    bank = PlDetectorBank([len(idx) for _, idx in groups], X.shape[2], X.shape[2], t0=10, threshold=1.0)
    bounds = np.cumsum([0] + bank.group_sizes)
    trackers = None
    committed = None
    for t in range(500):
        verdicts = bank.step(Xu[t], Xy[t], force_commit=t < warm)
        if verdicts is None:
            continue
        state = bank.state()
        if committed is None:
            committed = state
            trackers = [bank.trackers(g) for g in range(bank.num_groups)]
            continue
        for g, v in enumerate(verdicts):
            sl = slice(bounds[g], bounds[g + 1])
            if v.is_anomalous and not v.committed:
                pl_checks += 1
                if not all(np.array_equal(a[sl], b[sl]) for a, b in zip(state, committed)):
                    problems.append(f"PL group {g} step {t}")
        committed = state
        # per-link functional path on the same stream
        if t >= warm:
            for g in range(bank.num_groups):
                pairs = [(Xu[t, k], Xy[t, k]) for k in range(bounds[g], bounds[g + 1])]
                before = trackers[g]
                fv, trackers[g] = pl_step(before, pairs, 1.0, t)
                if fv.is_anomalous and not all(a.equals(b) for a, b in zip(trackers[g], before)):
                    problems.append(f"PL group {g} step {t} (functional path)")
        else:
            trackers = [bank.trackers(g) for g in range(bank.num_groups)]

    ok = not problems and pn_checks > 0 and pl_checks > 0
    detail = f"{pn_checks} node and {pl_checks} link rollbacks checked, mismatches: {problems[:3] or 'none'}"
    verdict(9, "rollback", ok, detail)


# --- 10 ------------------------------------------------------------------------


def test_metric_arithmetic(verdict):
    f1 = f1_score(0.969, 0.988)
    ident = compute_metrics(ConfusionMatrix(tp=1, tn=1))
    undefined = compute_metrics(ConfusionMatrix(tn=3, fn=0))
    no_pos = compute_metrics(ConfusionMatrix(tn=2, fn=1))
    ok = (
        round(f1, 3) == 0.978
        and (ident.accuracy, ident.precision, ident.recall, ident.f1) == (1.0, 1.0, 1.0, 1.0)
        and undefined.precision is None
        and undefined.recall is None
        and undefined.f1 is None
        and no_pos.precision is None
        and no_pos.recall == 0.0
        and not math.isnan(ident.f1)
    )
    verdict(10, "metric arithmetic", ok, f"f1(0.969, 0.988) = {f1:.4f}, identity case all 1, undefined -> None")


# --- 11 ------------------------------------------------------------------------


@pytest.mark.slow
def test_bench_is_byte_reproducible(verdict, tmp_path):
    cfg_path = tmp_path / "bench.yaml"
    cfg_path.write_text("horizon: 600\nexperiment:\n  num_runs: 2\n")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        env = dict(os.environ)
        env.pop("SLICEWATCH_OUTPUT_DIR", None)
        proc = subprocess.run(
            [sys.executable, "-m", "slicewatch.cli", "bench", "-c", str(cfg_path), "-o", str(out)],
            capture_output=True,
            text=True,
            env=env,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    names = sorted(os.listdir(outs[0]))
    same = names == sorted(os.listdir(outs[1])) and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names
    )
    verdict(11, "bench determinism", same and "report.json" in names, f"files compared: {', '.join(names)}")
