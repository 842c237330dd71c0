"""Discrete-time generator for a small virtualised network-slicing scenario.

A random connected substrate network hosts a handful of service function
chains. Every step each virtual node reports six measurements produced by a
single-server queueing approximation:

    processing_rate   effective service rate (packets/s)
    data_flow         throughput (kbit/s)
    queuing_delay     M/M/1 waiting time (s)
    processing_delay  1 / service rate (s)
    cpu_usage         affine in utilisation (%)
    memory_usage      affine in utilisation (MB)

All VNs of one chain see the same per-step load factor, which is what makes
neighbouring VNs correlated. Physical-node anomalies scale the service rate
of every hosted VN by (1 - loss). Physical-link anomalies make the link lossy:
each step a fraction loss * U (U uniform on [1 - j, 1 + j]) of the traffic of
every VL routed over the link is dropped. The downstream VN then sees a
jittery, reduced arrival rate that no longer tracks its upstream neighbour,
while VNs further down the chain still agree with each other.

Randomness is keyed by named seeds and, for measurements, by the step index,
so any step can be regenerated on its own.
"""

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import InfeasibleEmbeddingError, InvalidParameterError, UnsatisfiableConfigError

FEATURES = (
    "processing_rate",
    "data_flow",
    "queuing_delay",
    "processing_delay",
    "cpu_usage",
    "memory_usage",
)

# (arrival rate packets/s, packet size kbit) per service type
SERVICE_TYPES = {1: (10.0, 200.0), 2: (100.0, 10.0), 3: (500.0, 1.0)}

UTIL_CAP = 0.98
LOSS_JITTER = 0.5


@dataclass
class SubstrateNetwork:
    nodes: dict  # pn id -> processing capacity (packets/s)
    links: dict  # (a, b) with a < b -> bandwidth (kbit/s)

    def __post_init__(self):
        self.graph = nx.Graph()
        self.graph.add_nodes_from(sorted(self.nodes))
        self.graph.add_edges_from(sorted(self.links))

    @property
    def link_ids(self):
        return sorted(self.links)

    def neighbors(self, q):
        return sorted(self.graph.neighbors(q))

    def is_connected(self):
        return nx.is_connected(self.graph)


def link_key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass
class SfcEmbedding:
    sfc_id: int
    service_type: int
    vn_chain: list
    vn_to_pn: dict
    vl_to_path: dict  # (vn_a, vn_b) -> list of PNs from host(a) to host(b)
    vn_service_rate: dict = field(default_factory=dict)  # packets/s at full capacity
    vl_bandwidth: dict = field(default_factory=dict)  # kbit/s reserved for the VL

    def vls(self):
        return list(zip(self.vn_chain[:-1], self.vn_chain[1:]))

    def vl_links(self, vl):
        path = self.vl_to_path[vl]
        return [link_key(a, b) for a, b in zip(path[:-1], path[1:])]


@dataclass(frozen=True)
class AnomalyEvent:
    target: tuple  # ("pn", q) or ("pl", (a, b))
    start: int
    end: int  # exclusive
    loss: float


@dataclass
class AnomalySchedule:
    events: list
    horizon: int

    def active(self, t):
        return {e.target: e.loss for e in self.events if e.start <= t < e.end}

    def with_events(self, extra):
        return AnomalySchedule(list(self.events) + list(extra), self.horizon)

    def without_before(self, t_end):
        """Drop every event that starts before ``t_end``."""
        return AnomalySchedule([e for e in self.events if e.start >= t_end], self.horizon)


@dataclass
class ScenarioTrace:
    """Per-step measurements of every VN plus ground-truth labels.

    ``features`` has shape (horizon, num_vns, p) in physical units; ``vn_ids``
    gives the VN order of axis 1. Labels are boolean arrays over
    ``network.nodes`` (sorted) and ``network.link_ids``.
    """

    network: SubstrateNetwork
    embeddings: list
    schedule: AnomalySchedule
    vn_ids: list
    features: np.ndarray
    pn_labels: np.ndarray
    pl_labels: np.ndarray

    @property
    def horizon(self):
        return self.features.shape[0]

    @property
    def pn_ids(self):
        return sorted(self.network.nodes)

    @property
    def pl_ids(self):
        return self.network.link_ids

    def vn_index(self):
        return {vn: i for i, vn in enumerate(self.vn_ids)}


@dataclass
class ScenarioConfig:
    num_pns: int = 10
    link_probability: float = 0.4
    num_sfcs: int = 6
    chain_min: int = 4
    chain_max: int = 6
    service_mix: tuple = (1 / 3, 1 / 3, 1 / 3)
    horizon: int = 1500
    anomaly_rate: float = 0.005
    anomaly_duration: float = 20.0
    anomaly_targets: str = "both"
    anomaly_start: int = 0
    loss_mean: float = 0.5
    loss_var: float = 0.01
    noise_sigma: float = 0.05
    load_sigma: float = 0.2
    placement: str = "adjacent"
    node_capacity: tuple = (2000.0, 5000.0)
    link_bandwidth: tuple = (5000.0, 20000.0)
    vn_headroom: tuple = (3.0, 4.0)
    vl_headroom: tuple = (2.0, 3.0)
    seed_topology: int = 1
    seed_embedding: int = 2
    seed_anomaly: int = 3
    seed_noise: int = 4


# ---------------------------------------------------------------------------


def build_network(num_pns, link_probability, capacity_ranges=None, seed=0, max_tries=1000):
    """Connected Erdos-Renyi substrate network, redrawn until connected."""
    if num_pns < 2:
        raise InvalidParameterError(f"need at least 2 PNs, got {num_pns}")
    if not 0 < link_probability <= 1:
        raise InvalidParameterError(f"link probability must be in (0, 1], got {link_probability}")
    ranges = {"node": (2000.0, 5000.0), "link": (5000.0, 20000.0)}
    ranges.update(capacity_ranges or {})
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(num_pns, k=1)
    for _ in range(max_tries):
        mask = rng.random(len(iu[0])) < link_probability
        edges = [(int(a), int(b)) for a, b, m in zip(iu[0], iu[1], mask) if m]
        g = nx.Graph()
        g.add_nodes_from(range(num_pns))
        g.add_edges_from(edges)
        if nx.is_connected(g):
            break
    else:
        raise UnsatisfiableConfigError(
            f"no connected graph with {num_pns} PNs at p={link_probability} after {max_tries} draws"
        )
    node_cap = rng.uniform(*ranges["node"], size=num_pns)
    link_bw = rng.uniform(*ranges["link"], size=len(edges))
    nodes = {q: float(c) for q, c in zip(range(num_pns), node_cap)}
    links = {e: float(b) for e, b in zip(edges, link_bw)}
    return SubstrateNetwork(nodes, links)


def _adjacent_walk(network, length, rng, tries=200):
    pns = sorted(network.nodes)
    for _ in range(tries):
        walk = [int(rng.choice(pns))]
        while len(walk) < length:
            options = [q for q in network.neighbors(walk[-1]) if q not in walk]
            if not options:
                break
            walk.append(int(rng.choice(options)))
        if len(walk) == length:
            return walk
    return None


def embed_sfcs(
    network,
    num_sfcs,
    chain_length_range=(4, 6),
    service_mix=(1 / 3, 1 / 3, 1 / 3),
    seed=0,
    placement="adjacent",
    vn_headroom=(3.0, 4.0),
    vl_headroom=(2.0, 3.0),
):
    """Place ``num_sfcs`` chains on distinct PNs and route their VLs.

    ``placement="adjacent"`` draws a random self-avoiding walk so each VL maps
    onto exactly one PL; ``"uniform"`` picks PNs uniformly without
    replacement and routes VLs along shortest paths.
    """
    lo, hi = chain_length_range
    if lo < 1 or hi < lo:
        raise InvalidParameterError(f"bad chain length range {chain_length_range}")
    if placement not in ("adjacent", "uniform"):
        raise InvalidParameterError(f"unknown placement {placement!r}")
    mix = np.asarray(service_mix, dtype=float)
    if mix.shape != (3,) or np.any(mix < 0) or mix.sum() <= 0:
        raise InvalidParameterError(f"service_mix must be three non-negative weights, got {service_mix}")
    mix = mix / mix.sum()
    rng = np.random.default_rng(seed)
    pns = sorted(network.nodes)
    out = []
    next_vn = 0
    for s in range(num_sfcs):
        stype = int(rng.choice([1, 2, 3], p=mix))
        length = int(rng.integers(lo, hi + 1))
        if length > len(pns):
            raise InfeasibleEmbeddingError(f"chain of {length} VNs needs {length} distinct PNs, network has {len(pns)}")
        if placement == "uniform":
            hosts = [int(q) for q in rng.choice(pns, size=length, replace=False)]
        else:
            hosts = _adjacent_walk(network, length, rng)
            if hosts is None:
                raise InfeasibleEmbeddingError(f"no simple path of {length} PNs found for SFC {s}")
        chain = list(range(next_vn, next_vn + length))
        next_vn += length
        vn_to_pn = dict(zip(chain, hosts))
        vl_to_path = {}
        for a, b in zip(chain[:-1], chain[1:]):
            vl_to_path[(a, b)] = [int(q) for q in nx.shortest_path(network.graph, vn_to_pn[a], vn_to_pn[b])]
        rate, size = SERVICE_TYPES[stype]
        vn_rate = {vn: float(rate * rng.uniform(*vn_headroom)) for vn in chain}
        vl_bw = {vl: float(rate * size * rng.uniform(*vl_headroom)) for vl in vl_to_path}
        out.append(SfcEmbedding(s, stype, chain, vn_to_pn, vl_to_path, vn_rate, vl_bw))
    return out


def anomaly_targets(network, kinds="both"):
    targets = []
    if kinds in ("both", "pn"):
        targets += [("pn", q) for q in sorted(network.nodes)]
    if kinds in ("both", "pl"):
        targets += [("pl", e) for e in network.link_ids]
    if kinds not in ("both", "pn", "pl", "none"):
        raise InvalidParameterError(f"anomaly targets must be both/pn/pl/none, got {kinds!r}")
    return targets


def draw_loss(rng, mean_loss, var_loss, size=None):
    """Capacity-loss fraction ~ N(mean, var) clamped into (0, 1)."""
    return np.clip(rng.normal(mean_loss, np.sqrt(var_loss), size=size), 0.01, 0.99)


def schedule_anomalies(
    horizon,
    rate,
    mean_loss=0.5,
    var_loss=0.01,
    seed=0,
    targets=(),
    mean_duration=20.0,
    start=0,
):
    """Each step every idle target opens an anomaly window with probability ``rate``.

    Window lengths are geometric with mean ``mean_duration``; a target never
    carries two overlapping windows. No window opens before ``start``.
    """
    if horizon < 1:
        raise InvalidParameterError(f"horizon must be >= 1, got {horizon}")
    if not 0 <= rate <= 1:
        raise InvalidParameterError(f"rate must be in [0, 1], got {rate}")
    rng = np.random.default_rng(seed)
    events = []
    if rate == 0 or not targets:
        return AnomalySchedule(events, horizon)
    p_end = 1.0 / max(mean_duration, 1.0)
    for target in targets:
        opens = rng.random(horizon) < rate
        durations = rng.geometric(p_end, size=horizon)
        losses = draw_loss(rng, mean_loss, var_loss, size=horizon)
        t = start
        while t < horizon:
            if opens[t]:
                end = min(t + int(durations[t]), horizon)
                events.append(AnomalyEvent(target, t, end, float(losses[t])))
                t = end
            else:
                t += 1
    events.sort(key=lambda e: (e.start, e.target[0], e.target[1]))
    return AnomalySchedule(events, horizon)


# ---------------------------------------------------------------------------


def _queue(arrival, service):
    util = np.minimum(arrival / service, UTIL_CAP)
    wait = util / (service * (1.0 - util))
    return util, wait


def step_measurements(network, embeddings, schedule, t, noise_seed, noise_sigma=0.05, load_sigma=0.2):
    """Measurements of every VN at step ``t`` plus the labels at ``t``.

    Returns ``(features, pn_label, pl_label)`` where ``features`` is
    (num_vns, 6) in the VN order of the chains.
    """
    active = schedule.active(t)
    rng = np.random.default_rng([int(noise_seed), int(t)])
    n_vns = sum(len(e.vn_chain) for e in embeddings)
    loads = np.exp(load_sigma * rng.standard_normal(len(embeddings)) - 0.5 * load_sigma**2)
    noise = 1.0 + noise_sigma * rng.standard_normal((n_vns, len(FEATURES)))
    noise = np.maximum(noise, 0.05)
    # drawn for every link every step so the stream does not depend on the schedule
    jitter = dict(zip(network.link_ids, rng.uniform(1.0 - LOSS_JITTER, 1.0 + LOSS_JITTER, len(network.link_ids))))

    rows = np.empty((n_vns, len(FEATURES)))
    r = 0
    for emb, load in zip(embeddings, loads):
        rate, size = SERVICE_TYPES[emb.service_type]
        arrival = rate * load
        for k, vn in enumerate(emb.vn_chain):
            pn_loss = active.get(("pn", emb.vn_to_pn[vn]), 0.0)
            service = emb.vn_service_rate[vn] * (1.0 - pn_loss)
            util, wait = _queue(arrival, service)
            out = min(arrival, service)
            rows[r] = (
                service,
                out * size,
                wait,
                1.0 / service,
                5.0 + 90.0 * util,
                48.0 + 64.0 * util,
            )
            r += 1
            if k + 1 < len(emb.vn_chain):
                vl = (vn, emb.vn_chain[k + 1])
                delivered = min(out, emb.vl_bandwidth[vl] / size)
                for pl in emb.vl_links(vl):
                    loss = active.get(("pl", pl), 0.0)
                    if loss:
                        delivered *= max(1.0 - loss * jitter[pl], 0.01)
                arrival = delivered
    pn_label = np.array([("pn", q) in active for q in sorted(network.nodes)], dtype=bool)
    pl_label = np.array([("pl", e) in active for e in network.link_ids], dtype=bool)
    return rows * noise, pn_label, pl_label


def build_scenario(cfg):
    """Network, embeddings and schedule for a :class:`ScenarioConfig`."""
    net = build_network(
        cfg.num_pns,
        cfg.link_probability,
        {"node": tuple(cfg.node_capacity), "link": tuple(cfg.link_bandwidth)},
        seed=cfg.seed_topology,
    )
    embs = embed_sfcs(
        net,
        cfg.num_sfcs,
        (cfg.chain_min, cfg.chain_max),
        cfg.service_mix,
        seed=cfg.seed_embedding,
        placement=cfg.placement,
        vn_headroom=tuple(cfg.vn_headroom),
        vl_headroom=tuple(cfg.vl_headroom),
    )
    sched = schedule_anomalies(
        cfg.horizon,
        cfg.anomaly_rate,
        cfg.loss_mean,
        cfg.loss_var,
        seed=cfg.seed_anomaly,
        targets=anomaly_targets(net, cfg.anomaly_targets),
        mean_duration=cfg.anomaly_duration,
        start=cfg.anomaly_start,
    )
    return net, embs, sched


def simulate(cfg, schedule=None):
    """Full trace for ``cfg``; ``schedule`` overrides the configured one."""
    net, embs, sched = build_scenario(cfg)
    if schedule is not None:
        sched = schedule
    return generate_trace(net, embs, sched, cfg.seed_noise, cfg.noise_sigma, cfg.load_sigma)


def generate_trace(network, embeddings, schedule, noise_seed, noise_sigma=0.05, load_sigma=0.2):
    H = schedule.horizon
    vn_ids = [vn for e in embeddings for vn in e.vn_chain]
    feats = np.empty((H, len(vn_ids), len(FEATURES)))
    pn_lab = np.empty((H, len(network.nodes)), dtype=bool)
    pl_lab = np.empty((H, len(network.links)), dtype=bool)
    for t in range(H):
        feats[t], pn_lab[t], pl_lab[t] = step_measurements(
            network, embeddings, schedule, t, noise_seed, noise_sigma, load_sigma
        )
    return ScenarioTrace(network, embeddings, schedule, vn_ids, feats, pn_lab, pl_lab)
