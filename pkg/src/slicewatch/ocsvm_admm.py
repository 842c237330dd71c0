"""Decentralised online one-class SVM with ADMM consensus.

Each virtual node hosted on a physical node runs one agent holding a local
hyperplane (w, rho) in random-feature space plus consensus multipliers
(alpha, beta). Every step all agents read the same time-t snapshot, take one
closed-form ADMM step on their newest sample, and report the sign of their
discriminant. The physical node is normal only if every agent says so; the
step is then committed, otherwise every agent's state is left untouched.

The per-agent functions (``update_lambda``, ``update_primal``, ...) are the
readable reference path. ``PnDetector`` runs the same round through the
fused kernel in :mod:`slicewatch.kernels`.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, InvalidConfigError, SampleCountError
from .rff import RffParams, map_features

DUAL_FORMS = ("exact", "printed")


@dataclass(frozen=True)
class PnDetectorConfig:
    """Parameters of one physical-node detector.

    ``dual`` selects the closed form used for the per-sample multiplier:
    ``"exact"`` maximises the true dual of the online Lagrangian,
    ``"printed"`` maximises the quadratic with the 1/2 factor dropped from
    the quadratic term, which halves the unclamped maximiser. ``margin_tol``
    absorbs round-off when the KKT conditions put a sample exactly on the
    hyperplane.
    """

    eta: float
    penalty: float
    num_agents: int
    rff: RffParams
    dual: str = "exact"
    margin_tol: float = 1e-9

    def __post_init__(self):
        if self.num_agents < 1:
            raise InvalidConfigError(f"num_agents must be >= 1, got {self.num_agents}")
        if not self.eta > 0:
            raise InvalidConfigError(f"eta must be > 0, got {self.eta}")
        if not self.penalty > 0:
            raise InvalidConfigError(f"penalty must be > 0, got {self.penalty}")
        if self.dual not in DUAL_FORMS:
            raise InvalidConfigError(f"dual must be one of {DUAL_FORMS}, got {self.dual!r}")
        if self.margin_tol < 0:
            raise InvalidConfigError("margin_tol must be >= 0")

    @property
    def A(self):
        return self.eta * self.num_agents + 1.0

    @property
    def lambda_cap(self):
        return self.num_agents * self.penalty

    @property
    def dim(self):
        return self.rff.dim_out


@dataclass
class VnAgentState:
    w: np.ndarray
    rho: float = 0.0
    alpha: np.ndarray = None
    beta: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.alpha is None:
            self.alpha = np.zeros_like(self.w)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.shape != self.w.shape:
            raise DimensionMismatchError("alpha and w must have the same length")

    def copy(self):
        return VnAgentState(self.w.copy(), self.rho, self.alpha.copy(), self.beta, self.lam)

    def equals(self, other):
        """Bit-exact comparison of every field."""
        return (
            np.array_equal(self.w, other.w)
            and np.array_equal(self.alpha, other.alpha)
            and self.rho == other.rho
            and self.beta == other.beta
            and self.lam == other.lam
        )


@dataclass
class PnVerdict:
    time: int
    per_agent_signs: list
    is_anomalous: bool
    committed: bool
    lambdas: np.ndarray = field(default=None, repr=False)
    margins: np.ndarray = field(default=None, repr=False)


def init_pn_detector(config):
    return [VnAgentState(np.zeros(config.dim)) for _ in range(config.num_agents)]


def _neighbor_sums(agent, neighbors):
    """sum_i (w_j + w_i) and sum_i (rho_j + rho_i) over all agents, self included."""
    ws = np.array([np.asarray(w, dtype=float) for w, _ in neighbors])
    rhos = np.array([float(r) for _, r in neighbors])
    n = len(neighbors)
    return n * agent.w + ws.sum(axis=0), n * agent.rho + rhos.sum()


def _dual_coefficients(agent, neighbors, z, config):
    half_eta = 0.5 * config.eta
    sw, srho = _neighbor_sums(agent, neighbors)
    l = 2.0 * agent.alpha - half_eta * sw
    h = 2.0 * agent.beta - half_eta * srho
    A = config.A
    quad = (z @ z) / A + 1.0 / (A - 1.0)
    lin = (z @ l) / A + (1.0 - h) / (A - 1.0)
    return quad, lin, l, h


def dual_objective(lam, quad, lin, dual="exact"):
    """Concave quadratic in the multiplier; ``quad``/``lin`` from the same state."""
    k = 0.5 if dual == "exact" else 1.0
    return -k * quad * lam**2 + lin * lam


def update_lambda(agent, neighbors, z, config):
    z = np.asarray(z, dtype=float)
    if z.shape != agent.w.shape:
        raise DimensionMismatchError(f"feature vector length {z.shape} != {agent.w.shape}")
    if len(neighbors) != config.num_agents:
        raise SampleCountError(f"expected {config.num_agents} neighbour states, got {len(neighbors)}")
    quad, lin, _, _ = _dual_coefficients(agent, neighbors, z, config)
    vertex = lin / quad if config.dual == "exact" else lin / (2.0 * quad)
    return float(np.clip(vertex, 0.0, config.lambda_cap))


def update_primal(agent, neighbors, z, lam, config):
    """Closed-form minimiser of the online Lagrangian in (w, rho) for fixed lam."""
    z = np.asarray(z, dtype=float)
    half_eta = 0.5 * config.eta
    sw, srho = _neighbor_sums(agent, neighbors)
    A = config.A
    w = (z * lam - 2.0 * agent.alpha + half_eta * sw) / A
    rho = (1.0 - lam - 2.0 * agent.beta + half_eta * srho) / (A - 1.0)
    return w, float(rho)


def update_multipliers(agent, neighbors_new, config):
    """``agent.w``/``agent.rho`` must already hold the t+1 estimates, while
    ``agent.alpha``/``agent.beta`` still hold time t."""
    half_eta = 0.5 * config.eta
    ws = np.array([np.asarray(w, dtype=float) for w, _ in neighbors_new])
    rhos = np.array([float(r) for _, r in neighbors_new])
    n = len(neighbors_new)
    alpha = agent.alpha + half_eta * (n * agent.w - ws.sum(axis=0))
    beta = agent.beta + half_eta * (n * agent.rho - rhos.sum())
    return alpha, float(beta)


def online_lagrangian(w, rho, lam, agent, neighbors, z, config):
    """Per-agent online augmented Lagrangian as a function of (w, rho).

    Slack terms are dropped: with 0 <= lam <= |J|C and kappa = |J|C - lam
    they cancel identically.
    """
    eta = config.eta
    w = np.asarray(w, dtype=float)
    val = 0.5 * (w @ w) - rho - lam * (z @ w - rho) + 2.0 * (agent.alpha @ w) + 2.0 * agent.beta * rho
    for wi, ri in neighbors:
        mw = 0.5 * (agent.w + np.asarray(wi, dtype=float))
        mr = 0.5 * (agent.rho + float(ri))
        val += 0.5 * eta * (np.sum((w - mw) ** 2) + (rho - mr) ** 2)
    return float(val)


def discriminant(agent, z, tol=0.0):
    """+1 (normal) if z.w - rho >= 0, else -1. ``tol`` widens the zero band."""
    g = float(np.asarray(z, dtype=float) @ agent.w - agent.rho)
    return 1 if g >= -tol else -1


def _pack(agents):
    W = np.array([a.w for a in agents], dtype=float)
    alpha = np.array([a.alpha for a in agents], dtype=float)
    rho = np.array([a.rho for a in agents], dtype=float)
    beta = np.array([a.beta for a in agents], dtype=float)
    return W, rho, alpha, beta


def pn_step(agents, samples, config, time=0, rollback=True):
    """Advance every agent of one PN by one sample each.

    ``agents`` is updated in place when the step is committed and left
    untouched otherwise. ``rollback=False`` commits regardless of verdict.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if len(agents) != config.num_agents or samples.shape[0] != config.num_agents:
        raise SampleCountError(
            f"PN has {config.num_agents} agents, got {len(agents)} states and {samples.shape[0]} samples"
        )
    Z = map_features(config.rff, samples)
    W, rho, alpha, beta = _pack(agents)
    lam, W1, rho1, alpha1, beta1, margin = kernels.admm_round(
        W, rho, alpha, beta, Z, config.eta, config.lambda_cap, config.dual == "exact"
    )
    signs = [1 if g >= -config.margin_tol else -1 for g in margin]
    anomalous = any(s < 0 for s in signs)
    committed = (not anomalous) or not rollback
    if committed:
        for j, a in enumerate(agents):
            a.w = W1[j].copy()
            a.rho = float(rho1[j])
            a.alpha = alpha1[j].copy()
            a.beta = float(beta1[j])
            a.lam = float(lam[j])
    return PnVerdict(time, signs, anomalous, committed, lam, margin)


def pn_step_reference(agents, samples, config, time=0, rollback=True):
    """Same contract as :func:`pn_step`, built from the per-agent updates."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if len(agents) != config.num_agents or samples.shape[0] != config.num_agents:
        raise SampleCountError("sample count does not match the number of agents")
    snapshot = [(a.w.copy(), a.rho) for a in agents]
    Z = [map_features(config.rff, x) for x in samples]
    provisional = []
    for a, z in zip(agents, Z):
        lam = update_lambda(a, snapshot, z, config)
        w, rho = update_primal(a, snapshot, z, lam, config)
        provisional.append(VnAgentState(w, rho, a.alpha.copy(), a.beta, lam))
    snapshot_new = [(p.w, p.rho) for p in provisional]
    for p in provisional:
        p.alpha, p.beta = update_multipliers(p, snapshot_new, config)
    signs = [discriminant(p, z, config.margin_tol) for p, z in zip(provisional, Z)]
    anomalous = any(s < 0 for s in signs)
    committed = (not anomalous) or not rollback
    if committed:
        for a, p in zip(agents, provisional):
            a.w, a.rho, a.alpha, a.beta, a.lam = p.w, p.rho, p.alpha, p.beta, p.lam
    return PnVerdict(time, signs, anomalous, committed, np.array([p.lam for p in provisional]))


class PnDetector:
    """Array-backed detector for one physical node.

    State lives in stacked arrays (agents x D) so one kernel call advances
    every agent. ``agents()`` exposes per-agent :class:`VnAgentState` copies.
    """

    def __init__(self, config, rollback=True):
        self.config = config
        self.rollback = rollback
        n, D = config.num_agents, config.dim
        self.W = np.zeros((n, D))
        self.alpha = np.zeros((n, D))
        self.rho = np.zeros(n)
        self.beta = np.zeros(n)
        self.lam = np.zeros(n)
        self.t = 0

    def agents(self):
        return [
            VnAgentState(self.W[j].copy(), float(self.rho[j]), self.alpha[j].copy(), float(self.beta[j]), float(self.lam[j]))
            for j in range(self.config.num_agents)
        ]

    def state(self):
        return (self.W.copy(), self.rho.copy(), self.alpha.copy(), self.beta.copy(), self.lam.copy())

    def step(self, samples, force_commit=False):
        cfg = self.config
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[0] != cfg.num_agents:
            raise SampleCountError(f"PN has {cfg.num_agents} agents, got {samples.shape[0]} samples")
        self.t += 1
        Z = map_features(cfg.rff, samples)
        lam, W1, rho1, alpha1, beta1, margin = kernels.admm_round(
            self.W, self.rho, self.alpha, self.beta, Z, cfg.eta, cfg.lambda_cap, cfg.dual == "exact"
        )
        signs = [1 if g >= -cfg.margin_tol else -1 for g in margin]
        anomalous = any(s < 0 for s in signs)
        committed = force_commit or not anomalous or not self.rollback
        if committed:
            self.W, self.rho, self.alpha, self.beta, self.lam = W1, rho1, alpha1, beta1, lam
        return PnVerdict(self.t, signs, anomalous, committed, lam, margin)

    def consensus_gap(self):
        """max over agent pairs of ||w_j - w_i||_inf + |rho_j - rho_i|."""
        n = self.config.num_agents
        gap = 0.0
        for j in range(n):
            for i in range(j + 1, n):
                g = np.max(np.abs(self.W[j] - self.W[i])) + abs(self.rho[j] - self.rho[i])
                gap = max(gap, g)
        return float(gap)
