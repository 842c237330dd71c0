"""Run configuration: a flat table of dotted keys with typed defaults.

Config files are YAML. Scenario keys live at the top level, the rest in
sections::

    num_pns: 10
    horizon: 1500
    seeds: {topology: 1, noise: 4}
    ocsvm: {eta: 1000.0}

Command-line overrides use the same dotted names (``ocsvm.eta=50``); values
are parsed as YAML scalars and coerced to the type of the default.
"""

import hashlib
import json

import yaml

from .errors import InvalidConfigError


class ConfigParseError(InvalidConfigError):
    pass


class UnknownKeyError(InvalidConfigError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"unknown config key {key!r}")


# key -> (default, help)
KEYS = {
    "num_pns": (10, "number of physical nodes"),
    "link_probability": (0.4, "edge probability of the random substrate graph"),
    "num_sfcs": (6, "number of service function chains"),
    "chain_min": (4, "shortest chain length"),
    "chain_max": (6, "longest chain length"),
    "service_mix": ([1 / 3, 1 / 3, 1 / 3], "probabilities of service types 1, 2, 3"),
    "horizon": (1500, "steps per run"),
    "anomaly_rate": (0.005, "per-step probability that a target starts an anomaly window"),
    "anomaly_duration": (20.0, "mean anomaly window length (geometric)"),
    "loss_mean": (0.5, "mean capacity loss of an anomaly"),
    "loss_var": (0.01, "variance of the capacity loss"),
    "noise_sigma": (0.05, "multiplicative observation noise"),
    "load_sigma": (0.2, "log-sd of the per-chain load factor"),
    "seeds.topology": (1, "substrate graph seed"),
    "seeds.embedding": (2, "chain placement seed"),
    "seeds.anomaly": (3, "anomaly schedule seed"),
    "seeds.noise": (4, "measurement noise seed"),
    "seeds.rff": (5, "random feature seed"),
    "seeds.pollution": (6, "seed for anomalies injected into baseline training windows"),
    "ocsvm.eta": (1000.0, "ADMM penalty eta"),
    "ocsvm.lambda_cap": (20.0, "upper bound |J_q| C of every per-sample multiplier"),
    "ocsvm.kernel_width": (20.0, "Gaussian kernel width sigma"),
    "ocsvm.rff_dim": (100, "random feature dimension D"),
    "ocsvm.dual": ("exact", "closed form for the multiplier: exact or printed"),
    "ocsvm.warmup": (200, "steps committed unconditionally and not scored"),
    "cca.t0": (10, "samples used to initialise each tracker"),
    "cca.threshold_mode": ("quantile", "fixed or quantile"),
    "cca.threshold": (1.0, "control limit in fixed mode"),
    "cca.quantile": (0.99, "quantile of calibration scores in quantile mode"),
    "cca.calibration": (200, "steps committed unconditionally and not scored"),
    "cca.floor": (1e-8, "eigenvalue and variance floor"),
    "experiment.num_runs": (20, "Monte Carlo runs"),
    "experiment.artd": (0.1, "anomaly ratio injected into the baseline training window"),
    "experiment.baseline_rollback": (True, "single-agent OCSVM baseline rolls back flagged steps"),
    "experiment.features": ("log-standardize", "feature transform: none, log or log-standardize"),
    "experiment.curve": ("cumulative", "metric curve: cumulative or windowed"),
    "experiment.curve_every": (50, "steps between metric curve points"),
    "experiment.designated_pn": (-1, "PN whose convergence is recorded (-1 = the one hosting most VNs)"),
}

CHOICES = {
    "ocsvm.dual": ("exact", "printed"),
    "cca.threshold_mode": ("fixed", "quantile"),
    "experiment.features": ("none", "log", "log-standardize"),
    "experiment.curve": ("cumulative", "windowed"),
}


def defaults():
    return {k: (list(v[0]) if isinstance(v[0], list) else v[0]) for k, v in KEYS.items()}


def _coerce(key, value):
    default = KEYS[key][0]
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, list):
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return [float(v) for v in value]
        if not isinstance(value, str):
            raise TypeError
    except (TypeError, ValueError):
        raise InvalidConfigError(f"{key}: expected {type(default).__name__}, got {value!r}") from None
    if key in CHOICES and value not in CHOICES[key]:
        raise InvalidConfigError(f"{key}: expected one of {CHOICES[key]}, got {value!r}")
    return value


def _flatten(tree, prefix=""):
    out = {}
    for k, v in tree.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


def validate(cfg):
    if cfg["num_pns"] < 2:
        raise InvalidConfigError("num_pns must be >= 2")
    if not 0 < cfg["link_probability"] <= 1:
        raise InvalidConfigError("link_probability must be in (0, 1]")
    if not 1 <= cfg["chain_min"] <= cfg["chain_max"]:
        raise InvalidConfigError("need 1 <= chain_min <= chain_max")
    if len(cfg["service_mix"]) != 3 or min(cfg["service_mix"]) < 0 or sum(cfg["service_mix"]) <= 0:
        raise InvalidConfigError("service_mix must be three non-negative weights")
    if not 0 <= cfg["anomaly_rate"] <= 1:
        raise InvalidConfigError("anomaly_rate must be in [0, 1]")
    if cfg["experiment.num_runs"] < 1:
        raise InvalidConfigError("experiment.num_runs must be >= 1")
    if not 0 <= cfg["experiment.artd"] < 1:
        raise InvalidConfigError("experiment.artd must be in [0, 1)")
    for key in ("ocsvm.eta", "ocsvm.lambda_cap", "ocsvm.kernel_width", "cca.threshold", "cca.floor"):
        if not cfg[key] > 0:
            raise InvalidConfigError(f"{key} must be > 0")
    if cfg["ocsvm.rff_dim"] < 1:
        raise InvalidConfigError("ocsvm.rff_dim must be >= 1")
    if cfg["cca.t0"] < 2:
        raise InvalidConfigError("cca.t0 must be >= 2")
    if not 0 < cfg["cca.quantile"] <= 1:
        raise InvalidConfigError("cca.quantile must be in (0, 1]")
    if cfg["cca.calibration"] < cfg["cca.t0"] + 2:
        raise InvalidConfigError("cca.calibration must exceed cca.t0 by at least 2")
    for key in ("ocsvm.warmup", "cca.calibration"):
        if not 0 <= cfg[key] < cfg["horizon"]:
            raise InvalidConfigError(f"{key} must be in [0, horizon)")
    if cfg["experiment.curve_every"] < 1:
        raise InvalidConfigError("experiment.curve_every must be >= 1")
    return cfg


def merge(base, updates):
    cfg = dict(base)
    for key, value in updates.items():
        if key not in KEYS:
            raise UnknownKeyError(key)
        cfg[key] = _coerce(key, value)
    return cfg


def load_config(path=None, overrides=()):
    """Defaults, then the YAML file at ``path``, then ``key=value`` overrides."""
    cfg = defaults()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                tree = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigParseError(f"{path}: {exc}") from None
        if tree is None:
            tree = {}
        if not isinstance(tree, dict):
            raise ConfigParseError(f"{path}: top level must be a mapping")
        try:
            cfg = merge(cfg, _flatten(tree))
        except UnknownKeyError as exc:
            raise ConfigParseError(f"{path}: unknown key {exc.key!r}") from None
    cfg = merge(cfg, parse_overrides(overrides))
    return validate(cfg)


def parse_overrides(items):
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigParseError(f"override must look like key=value, got {item!r}")
        if key not in KEYS:
            raise UnknownKeyError(key)
        try:
            out[key] = yaml.safe_load(raw) if raw.strip() else ""
        except yaml.YAMLError:
            raise ConfigParseError(f"cannot parse value of {key}: {raw!r}") from None
    return out


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def seeds_of(cfg):
    return {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("seeds.")}


def to_yaml(cfg):
    tree = {}
    for key, value in cfg.items():
        node = tree
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return yaml.safe_dump(tree, sort_keys=False)
