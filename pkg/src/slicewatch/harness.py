"""Experiment orchestration: streams traces through detectors and scores them.

Three variants per mode:

    do             distributed detector with rollback (one agent per VN for
                   nodes, one tracker per VL for links)
    baseline       nodes: one agent per PN on the concatenated VN vector;
                   links: the same trackers with rollback disabled
    baseline_artd  baseline whose training window was polluted with
                   unlabelled anomalies at the configured ratio

The first ``ocsvm.warmup`` (nodes) or ``cca.calibration`` (links) steps are a
training window: every update is committed, nothing is scored, and no
scheduled anomaly starts inside it. Pollution is the only source of
anomalous training data.
"""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import config as config_mod
from . import slicing_sim as sim
from .cca_online import PlDetectorBank, quantile_threshold
from .errors import CsvFormatError, InvalidConfigError
from .ocsvm_admm import PnDetector, PnDetectorConfig
from .rff import sample_rff_params

MODES = ("pn-ocsvm", "pl-cca")
VARIANTS = ("do", "baseline", "baseline_artd")
REPORT_SCHEMA = "slicewatch-report/1"
TRACKED_COMPONENTS = 3

# ---------------------------------------------------------------------------
# confusion matrix and metrics


@dataclass
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self):
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def score_verdict(cm, predicted_anomalous, actual_anomalous):
    """Increment exactly one counter of ``cm`` and return it."""
    if predicted_anomalous and actual_anomalous:
        cm.tp += 1
    elif predicted_anomalous:
        cm.fp += 1
    elif actual_anomalous:
        cm.fn += 1
    else:
        cm.tn += 1
    return cm


def _ratio(num, den):
    return None if den == 0 else num / den


def f1_score(precision, recall):
    """Harmonic mean; undefined when either input is undefined or both are 0."""
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class MetricReport:
    """Metrics with ``None`` standing for undefined (zero denominator)."""

    accuracy: float = None
    precision: float = None
    recall: float = None
    f1: float = None
    counts: dict = field(default_factory=dict)
    per_target: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": dict(self.counts),
            "per_target": {k: v.to_dict() for k, v in self.per_target.items()},
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["accuracy"],
            d["precision"],
            d["recall"],
            d["f1"],
            dict(d.get("counts", {})),
            {k: cls.from_dict(v) for k, v in d.get("per_target", {}).items()},
            dict(d.get("metadata", {})),
        )


def compute_metrics(cm):
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    return MetricReport(
        accuracy=_ratio(cm.tp + cm.tn, cm.total),
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        counts=cm.as_dict(),
    )


METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


def mean_metrics(reports):
    """Per-metric mean over reports, skipping undefined entries."""
    out = {}
    for name in METRIC_NAMES:
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        out[name] = float(np.mean(vals)) if vals else None
    return out


# ---------------------------------------------------------------------------
# detector-facing view of a trace


@dataclass
class DetectionInput:
    """Everything the detectors need from a trace, simulated or ingested.

    ``features`` is (steps, num_vns, p). ``vls`` lists (upstream, downstream)
    VN indices; ``vl_pls[k]`` the physical links VL k is routed over. Label
    arrays are (steps, len(pn_ids)) and (steps, len(pl_ids)) or ``None``.
    """

    features: np.ndarray
    vn_pn: list
    vls: list
    vl_pls: list
    pn_ids: list
    pl_ids: list
    pn_labels: np.ndarray = None
    pl_labels: np.ndarray = None

    @property
    def horizon(self):
        return self.features.shape[0]

    def pn_groups(self):
        """(pn, [vn indices]) for every PN hosting at least one VN."""
        out = []
        for q in self.pn_ids:
            idx = [k for k, pn in enumerate(self.vn_pn) if pn == q]
            if idx:
                out.append((q, idx))
        return out

    def pl_groups(self):
        """(pl, [vl indices]) for every PL carrying at least one VL."""
        out = []
        for r in self.pl_ids:
            idx = [k for k, pls in enumerate(self.vl_pls) if r in pls]
            if idx:
                out.append((r, idx))
        return out


def input_from_trace(trace):
    index = trace.vn_index()
    vn_pn = [None] * len(trace.vn_ids)
    vls, vl_pls = [], []
    for emb in trace.embeddings:
        for vn in emb.vn_chain:
            vn_pn[index[vn]] = emb.vn_to_pn[vn]
        for vl in emb.vls():
            vls.append((index[vl[0]], index[vl[1]]))
            vl_pls.append(emb.vl_links(vl))
    return DetectionInput(
        trace.features, vn_pn, vls, vl_pls, trace.pn_ids, list(trace.pl_ids), trace.pn_labels, trace.pl_labels
    )


def transform_features(X, how, ref_steps):
    """``none``, ``log`` or ``log-standardize`` (per VN and feature, using the first ``ref_steps`` steps)."""
    if how == "none":
        return np.asarray(X, dtype=float)
    L = np.log(np.maximum(X, 1e-12))
    if how == "log":
        return L
    if how != "log-standardize":
        raise InvalidConfigError(f"unknown feature transform {how!r}")
    ref = L[: max(int(ref_steps), 2)]
    mu = ref.mean(axis=0)
    sd = ref.std(axis=0, ddof=1)
    return (L - mu) / np.where(sd > 0, sd, 1.0)


# ---------------------------------------------------------------------------
# scenario construction


def scenario_config(cfg, mode, run=0):
    window = cfg["ocsvm.warmup"] if mode == "pn-ocsvm" else cfg["cca.calibration"]
    return sim.ScenarioConfig(
        num_pns=cfg["num_pns"],
        link_probability=cfg["link_probability"],
        num_sfcs=cfg["num_sfcs"],
        chain_min=cfg["chain_min"],
        chain_max=cfg["chain_max"],
        service_mix=tuple(cfg["service_mix"]),
        horizon=cfg["horizon"],
        anomaly_rate=cfg["anomaly_rate"],
        anomaly_duration=cfg["anomaly_duration"],
        anomaly_targets="pn" if mode == "pn-ocsvm" else "pl",
        anomaly_start=window,
        loss_mean=cfg["loss_mean"],
        loss_var=cfg["loss_var"],
        noise_sigma=cfg["noise_sigma"],
        load_sigma=cfg["load_sigma"],
        seed_topology=cfg["seeds.topology"] + run,
        seed_embedding=cfg["seeds.embedding"] + run,
        seed_anomaly=cfg["seeds.anomaly"] + run,
        seed_noise=cfg["seeds.noise"] + run,
    )


def pollution_events(targets, window, ratio, block, mean_loss, var_loss, seed):
    """Unlabelled anomalies covering ``round(ratio * window)`` steps of ``[0, window)`` per target.

    Steps come in blocks of ``block`` (the last one possibly shorter) placed
    on distinct, randomly chosen block-aligned slots.
    """
    total = int(round(ratio * window))
    if total == 0 or not targets:
        return []
    block = max(1, min(int(block), total))
    n_blocks = -(-total // block)
    slots = window // block
    if n_blocks > slots:
        raise InvalidConfigError(f"cannot place {total} polluted steps in a window of {window}")
    rng = np.random.default_rng(seed)
    events = []
    for target in targets:
        chosen = np.sort(rng.choice(slots, size=n_blocks, replace=False))
        losses = sim.draw_loss(rng, mean_loss, var_loss, size=n_blocks)
        left = total
        for s, loss in zip(chosen, losses):
            length = min(block, left)
            events.append(sim.AnomalyEvent(target, int(s * block), int(s * block + length), float(loss)))
            left -= length
    return events


def build_run_trace(cfg, mode, run=0, pollute=False):
    scfg = scenario_config(cfg, mode, run)
    net, embs, sched = sim.build_scenario(scfg)
    if pollute:
        window = scfg.anomaly_start
        kinds = "pn" if mode == "pn-ocsvm" else "pl"
        extra = pollution_events(
            sim.anomaly_targets(net, kinds),
            window,
            cfg["experiment.artd"],
            int(round(cfg["anomaly_duration"])),
            cfg["loss_mean"],
            cfg["loss_var"],
            seed=cfg["seeds.pollution"] + run,
        )
        sched = sched.with_events(extra)
    return sim.generate_trace(net, embs, sched, scfg.seed_noise, scfg.noise_sigma, scfg.load_sigma)


# ---------------------------------------------------------------------------
# single runs


@dataclass
class RunOutcome:
    cm: ConfusionMatrix
    per_target: dict  # target label -> ConfusionMatrix
    step_counts: np.ndarray  # (steps, 4): tp, fp, fn, tn summed over targets
    flagged: dict  # target label -> number of scored steps flagged
    convergence: list = field(default_factory=list)

    def report(self):
        rep = compute_metrics(self.cm)
        rep.per_target = {k: compute_metrics(v) for k, v in self.per_target.items()}
        return rep


def _score(outcome, key, t, predicted, labels, col):
    outcome.flagged[key] = outcome.flagged.get(key, 0) + int(predicted)
    if labels is None:
        return
    actual = bool(labels[t, col])
    score_verdict(outcome.cm, predicted, actual)
    score_verdict(outcome.per_target.setdefault(key, ConfusionMatrix()), predicted, actual)
    slot = 0 if predicted and actual else 1 if predicted else 2 if actual else 3
    outcome.step_counts[t, slot] += 1


def _rff_seed(cfg, run, target):
    return int(np.random.SeedSequence([cfg["seeds.rff"], run, target]).generate_state(1)[0])


def designated_pn(inp, cfg):
    groups = inp.pn_groups()
    if not groups:
        return None
    want = cfg["experiment.designated_pn"]
    if want >= 0:
        return want if any(q == want for q, _ in groups) else None
    return max(groups, key=lambda g: (len(g[1]), -g[0]))[0]


def run_pn(inp, cfg, variant="do", run=0, record_convergence=False):
    """Node detection over one trace; returns a :class:`RunOutcome`."""
    W = cfg["ocsvm.warmup"]
    X = transform_features(inp.features, cfg["experiment.features"], W)
    p = X.shape[2]
    H = inp.horizon
    single = variant != "do"
    rollback = True if variant == "do" else cfg["experiment.baseline_rollback"]
    groups = inp.pn_groups()
    dets = []
    for q, idx in groups:
        n_agents = 1 if single else len(idx)
        dim_in = p * len(idx) if single else p
        rff = sample_rff_params(dim_in, cfg["ocsvm.rff_dim"], cfg["ocsvm.kernel_width"], _rff_seed(cfg, run, q))
        pcfg = PnDetectorConfig(
            cfg["ocsvm.eta"], cfg["ocsvm.lambda_cap"] / n_agents, n_agents, rff, dual=cfg["ocsvm.dual"]
        )
        dets.append(PnDetector(pcfg, rollback=rollback))
    watch = designated_pn(inp, cfg) if record_convergence else None
    col = {q: k for k, q in enumerate(inp.pn_ids)}
    out = RunOutcome(ConfusionMatrix(), {}, np.zeros((H, 4), dtype=np.int64), {})
    for t in range(H):
        for (q, idx), det in zip(groups, dets):
            sample = X[t, idx].reshape(1, -1) if single else X[t, idx]
            verdict = det.step(sample, force_commit=t < W)
            if q == watch:
                gap = det.consensus_gap()
                for j in range(det.config.num_agents):
                    w = det.W[j]
                    out.convergence.append(
                        [t, j, float(det.rho[j]), float(np.linalg.norm(w))]
                        + [float(x) for x in w[:TRACKED_COMPONENTS]]
                        + [gap]
                    )
            if t >= W:
                _score(out, f"pn:{q}", t, verdict.is_anomalous, inp.pn_labels, col[q])
    return out


def _calibrate(bank, X_u, X_y, start, stop):
    """Per-link quantile thresholds from steps [start, stop) scored under the current models."""
    per_group = [[] for _ in range(bank.num_groups)]
    for s in range(start, stop):
        scores = bank.scores(X_u[s], X_y[s])
        lo = 0
        for g, n in enumerate(bank.group_sizes):
            per_group[g].append(float(np.max(scores[lo : lo + n])))
            lo += n
    return per_group


def run_pl(inp, cfg, variant="do", run=0):
    """Link detection over one trace; returns a :class:`RunOutcome`."""
    W = cfg["cca.calibration"]
    t0 = cfg["cca.t0"]
    X = transform_features(inp.features, cfg["experiment.features"], W)
    H = inp.horizon
    groups = inp.pl_groups()
    if not groups:
        return RunOutcome(ConfusionMatrix(), {}, np.zeros((H, 4), dtype=np.int64), {})
    order = [k for _, idx in groups for k in idx]
    ups = [inp.vls[k][0] for k in order]
    downs = [inp.vls[k][1] for k in order]
    X_u = X[:, ups]
    X_y = X[:, downs]
    fixed = cfg["cca.threshold_mode"] == "fixed"
    bank = PlDetectorBank(
        [len(idx) for _, idx in groups],
        X.shape[2],
        X.shape[2],
        t0=t0,
        threshold=cfg["cca.threshold"],
        floor=cfg["cca.floor"],
        rollback=(variant == "do"),
    )
    col = {r: k for k, r in enumerate(inp.pl_ids)}
    out = RunOutcome(ConfusionMatrix(), {}, np.zeros((H, 4), dtype=np.int64), {})
    for t in range(H):
        if t == W and not fixed:
            cal = _calibrate(bank, X_u, X_y, max(t0, W // 2), W)
            bank.thresholds[:] = [max(quantile_threshold(c, cfg["cca.quantile"]), 1e-12) for c in cal]
        verdicts = bank.step(X_u[t], X_y[t], force_commit=t < W)
        if t < W or verdicts is None:
            continue
        for (r, _), v in zip(groups, verdicts):
            _score(out, f"pl:{r[0]}-{r[1]}", t, v.is_anomalous, inp.pl_labels, col[r])
    return out


# ---------------------------------------------------------------------------
# Monte Carlo experiments


@dataclass
class ExperimentResult:
    mode: str
    reports: dict  # variant -> pooled MetricReport
    run_reports: dict  # variant -> list of per-run MetricReport
    curves: dict  # variant -> list of (step, MetricReport)
    convergence: list


def _curve(step_counts, start, every, how):
    points = []
    H = step_counts.shape[0]
    stops = list(range(start + every, H, every))
    if not stops or stops[-1] != H:
        stops.append(H)
    lo = start
    for stop in stops:
        a = start if how == "cumulative" else lo
        tp, fp, fn, tn = (int(x) for x in step_counts[a:stop].sum(axis=0))
        points.append((stop - 1, compute_metrics(ConfusionMatrix(tp, tn, fp, fn))))
        lo = stop
    return points


def run_experiment(cfg, mode, num_runs=None, variants=VARIANTS):
    if mode not in MODES:
        raise InvalidConfigError(f"mode must be one of {MODES}, got {mode!r}")
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise InvalidConfigError(f"unknown variants {bad}")
    runs = cfg["experiment.num_runs"] if num_runs is None else int(num_runs)
    if runs < 1:
        raise InvalidConfigError("num_runs must be >= 1")
    start = cfg["ocsvm.warmup"] if mode == "pn-ocsvm" else cfg["cca.calibration"]
    pooled = {v: ConfusionMatrix() for v in variants}
    per_run = {v: [] for v in variants}
    counts = {v: np.zeros((cfg["horizon"], 4), dtype=np.int64) for v in variants}
    convergence = []
    for r in range(runs):
        clean = None
        for v in variants:
            if v == "baseline_artd":
                inp = input_from_trace(build_run_trace(cfg, mode, r, pollute=True))
            else:
                if clean is None:
                    clean = input_from_trace(build_run_trace(cfg, mode, r))
                inp = clean
            if mode == "pn-ocsvm":
                res = run_pn(inp, cfg, v, r, record_convergence=(r == 0 and v == "do"))
            else:
                res = run_pl(inp, cfg, v, r)
            if res.convergence:
                convergence = res.convergence
            pooled[v] = pooled[v] + res.cm
            counts[v] += res.step_counts
            rep = res.report()
            rep.metadata = {"run": r}
            per_run[v].append(rep)
    reports = {}
    curves = {}
    for v in variants:
        rep = compute_metrics(pooled[v])
        rep.metadata = {"run_mean": mean_metrics(per_run[v]), "runs": runs}
        reports[v] = rep
        curves[v] = _curve(counts[v], start, cfg["experiment.curve_every"], cfg["experiment.curve"])
    return ExperimentResult(mode, reports, per_run, curves, convergence)


def experiment_report(cfg, results):
    """Plain-dict report for one or more :class:`ExperimentResult`."""
    body = {}
    for res in results:
        body[res.mode] = {
            v: dict(res.reports[v].to_dict(), runs=[r.to_dict() for r in res.run_reports[v]]) for v in res.reports
        }
    return {
        "schema": REPORT_SCHEMA,
        "config": dict(cfg),
        "config_hash": config_mod.config_hash(cfg),
        "seeds": config_mod.seeds_of(cfg),
        "experiments": body,
    }


CURVE_HEADER = ("variant", "step", "accuracy", "precision", "recall", "f1")
CONVERGENCE_HEADER = ("step", "agent", "rho", "w_norm") + tuple(
    f"w_{i + 1}" for i in range(TRACKED_COMPONENTS)
) + ("consensus_gap",)


def experiment_series(results):
    series = {}
    for res in results:
        rows = []
        for v, points in res.curves.items():
            for step, rep in points:
                rows.append([v, step] + [getattr(rep, m) for m in METRIC_NAMES])
        series[f"curve_{res.mode}"] = (CURVE_HEADER, rows)
        if res.convergence:
            series["convergence"] = (CONVERGENCE_HEADER, res.convergence)
    return series


# ---------------------------------------------------------------------------
# files


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_results(report, series, out_dir):
    """Write ``report.json`` and one CSV per series; returns the written paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        path = os.path.join(out_dir, "report.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(report, sort_keys=True, indent=2, allow_nan=False))
            fh.write("\n")
        paths.append(path)
        for name in sorted(series):
            header, rows = series[name]
            path = os.path.join(out_dir, f"{name}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([_cell(x) for x in row])
            paths.append(path)
    except OSError as exc:
        raise OSError(f"cannot write results to {out_dir}: {exc.strerror}") from exc
    return paths


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# measurement CSV

BASE_COLUMNS = ("time", "slice_id", "sfc_id", "vn_id", "pn_id")
LABEL_COLUMNS = ("pn_label", "pl_label")


def export_csv(trace, path, labels=True):
    """One row per (time, VN) in chain order.

    ``slice_id`` is the chain's service type. With ``labels`` two trailing
    columns mark whether the VN's host PN and the links into the VN are
    anomalous at that step.
    """
    p = trace.features.shape[2]
    header = list(BASE_COLUMNS) + [f"feature_{i + 1}" for i in range(p)]
    if labels:
        header += list(LABEL_COLUMNS)
    index = trace.vn_index()
    pn_col = {q: k for k, q in enumerate(trace.pn_ids)}
    pl_col = {r: k for k, r in enumerate(trace.pl_ids)}
    rows_meta = []
    for emb in trace.embeddings:
        prev = None
        for vn in emb.vn_chain:
            links = emb.vl_links((prev, vn)) if prev is not None else []
            rows_meta.append((emb, vn, links))
            prev = vn
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(trace.horizon):
            for emb, vn, links in rows_meta:
                row = [t, emb.service_type, emb.sfc_id, vn, emb.vn_to_pn[vn]]
                row += [repr(float(x)) for x in trace.features[t, index[vn]]]
                if labels:
                    row.append(int(trace.pn_labels[t, pn_col[emb.vn_to_pn[vn]]]))
                    row.append(int(any(trace.pl_labels[t, pl_col[r]] for r in links)))
                w.writerow(row)
    return path


@dataclass
class MeasurementStreams:
    """Ingested measurements: one time-ordered stream per VN.

    ``features`` is (steps, num_vns, p) with VNs in order of first
    appearance; ``chains`` maps each sfc_id to its VNs in that order.
    """

    times: list
    vn_ids: list
    slice_of: dict
    sfc_of: dict
    pn_of: dict
    chains: dict
    feature_names: list
    features: np.ndarray
    pn_label: np.ndarray = None
    pl_label: np.ndarray = None

    @property
    def num_entries(self):
        return self.features.shape[0] * self.features.shape[1]

    def stream(self, vn):
        return self.features[:, self.vn_ids.index(vn)]

    def to_input(self):
        """Detector view. Links are inferred as host-PN pairs of consecutive VNs."""
        vn_pn = [self.pn_of[v] for v in self.vn_ids]
        index = {v: k for k, v in enumerate(self.vn_ids)}
        vls, vl_pls = [], []
        for chain in self.chains.values():
            for a, b in zip(chain[:-1], chain[1:]):
                pa, pb = self.pn_of[a], self.pn_of[b]
                vls.append((index[a], index[b]))
                vl_pls.append([sim.link_key(pa, pb)] if pa != pb else [])
        pn_ids = sorted(set(vn_pn))
        pl_ids = sorted({r for pls in vl_pls for r in pls})
        H = len(self.times)
        pn_labels = pl_labels = None
        if self.pn_label is not None:
            pn_labels = np.zeros((H, len(pn_ids)), dtype=bool)
            for k, v in enumerate(self.vn_ids):
                pn_labels[:, pn_ids.index(self.pn_of[v])] |= self.pn_label[:, k]
        if self.pl_label is not None:
            pl_labels = np.zeros((H, len(pl_ids)), dtype=bool)
            for (a, b), pls in zip(vls, vl_pls):
                for r in pls:
                    pl_labels[:, pl_ids.index(r)] |= self.pl_label[:, b]
        return DetectionInput(self.features, vn_pn, vls, vl_pls, pn_ids, pl_ids, pn_labels, pl_labels)


def _parse_id(raw):
    try:
        return int(raw)
    except ValueError:
        return raw


def ingest_csv(path, mapping=None):
    """Read a measurement CSV into :class:`MeasurementStreams`.

    ``mapping`` may rename the base columns (keys ``time``, ``slice_id``,
    ``sfc_id``, ``vn_id``, ``pn_id``), list the feature columns under
    ``features`` and the optional label columns under ``pn_label`` and
    ``pl_label``. By default features are every ``feature_*`` column and
    label columns are used when present.
    """
    mapping = dict(mapping or {})
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("missing-column", f"{path} is empty") from None
        col = {name: i for i, name in enumerate(header)}
        base = {k: mapping.get(k, k) for k in BASE_COLUMNS}
        feats = mapping.get("features") or [h for h in header if h.startswith("feature_")]
        if not feats:
            raise CsvFormatError("missing-column", "no feature columns")
        for name in list(base.values()) + list(feats):
            if name not in col:
                raise CsvFormatError("missing-column", f"column {name!r} not found")
        label_cols = {}
        for k in LABEL_COLUMNS:
            name = mapping.get(k, k)
            if name in col:
                label_cols[k] = col[name]
            elif k in mapping:
                raise CsvFormatError("missing-column", f"column {name!r} not found")

        times, vn_order = [], []
        slice_of, sfc_of, pn_of, chains = {}, {}, {}, {}
        values, labels = {}, {k: {} for k in label_cols}
        last_time = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue

            def cell(name):
                i = col[name]
                if i >= len(row) or row[i].strip() == "":
                    raise CsvFormatError("missing-value", f"empty {name!r}", row=lineno)
                return row[i].strip()

            try:
                t = float(cell(base["time"]))
            except ValueError:
                raise CsvFormatError("unordered-time", "time is not numeric", row=lineno) from None
            if last_time is not None and t < last_time:
                raise CsvFormatError("unordered-time", f"time {t} after {last_time}", row=lineno)
            if last_time is None or t != last_time:
                times.append(t)
            last_time = t
            vn = _parse_id(cell(base["vn_id"]))
            if vn not in pn_of:
                vn_order.append(vn)
                slice_of[vn] = _parse_id(cell(base["slice_id"]))
                sfc_of[vn] = _parse_id(cell(base["sfc_id"]))
                pn_of[vn] = _parse_id(cell(base["pn_id"]))
                chains.setdefault(sfc_of[vn], []).append(vn)
            vec = []
            for name in feats:
                raw = cell(name)
                try:
                    vec.append(float(raw))
                except ValueError:
                    raise CsvFormatError("non-numeric-feature", f"{name}={raw!r}", row=lineno) from None
            key = (len(times) - 1, vn)
            if key in values:
                raise CsvFormatError("duplicate-row", f"second row for vn {vn} at time {t}", row=lineno)
            values[key] = vec
            for k, i in label_cols.items():
                raw = row[i].strip() if i < len(row) else ""
                labels[k][key] = raw not in ("", "0", "false", "False")

    H, V = len(times), len(vn_order)
    X = np.empty((H, V, len(feats)))
    lab = {k: np.zeros((H, V), dtype=bool) for k in label_cols}
    for ti in range(H):
        for k, vn in enumerate(vn_order):
            vec = values.get((ti, vn))
            if vec is None:
                raise CsvFormatError("missing-value", f"vn {vn} has no row at time {times[ti]}")
            X[ti, k] = vec
            for name in label_cols:
                lab[name][ti, k] = labels[name][(ti, vn)]
    return MeasurementStreams(
        times, vn_order, slice_of, sfc_of, pn_of, chains, list(feats), X, lab.get("pn_label"), lab.get("pl_label")
    )
