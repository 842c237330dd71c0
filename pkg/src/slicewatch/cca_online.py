"""Streaming canonical-correlation detector for one physical link.

Every virtual link routed over the physical link contributes a pair stream
(u = upstream VN features, y = downstream VN features). For each pair we keep
running means and scatter matrices, refit the canonical directions after every
committed update, and score new pairs with a T^2 statistic on the residual

    r = J^T (u - mean_u) - diag(s) L^T (y - mean_y)

whose covariance under the fitted Gaussian is I - diag(s)^2.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, InvalidConfigError, NonSymmetricError, SampleCountError, TooFewSamplesError

DEFAULT_FLOOR = 1e-8


@dataclass(frozen=True)
class CovarianceTracker:
    """Running count, means and centred scatter matrices (covariance = scatter / (count - 1))."""

    count: int
    mean_u: np.ndarray
    mean_y: np.ndarray
    scatter_uu: np.ndarray
    scatter_yy: np.ndarray
    scatter_uy: np.ndarray

    @property
    def p(self):
        return self.mean_u.shape[0]

    @property
    def d(self):
        return self.mean_y.shape[0]

    def cov_uu(self):
        return self.scatter_uu / (self.count - 1)

    def cov_yy(self):
        return self.scatter_yy / (self.count - 1)

    def cov_uy(self):
        return self.scatter_uy / (self.count - 1)

    def equals(self, other):
        """Bit-exact comparison, used to check rollback."""
        return self.count == other.count and all(
            np.array_equal(a, b)
            for a, b in zip(
                (self.mean_u, self.mean_y, self.scatter_uu, self.scatter_yy, self.scatter_uy),
                (other.mean_u, other.mean_y, other.scatter_uu, other.scatter_yy, other.scatter_uy),
            )
        )


def init_tracker(u_batch, y_batch):
    U = np.atleast_2d(np.asarray(u_batch, dtype=float))
    Y = np.atleast_2d(np.asarray(y_batch, dtype=float))
    if U.shape[0] != Y.shape[0]:
        raise DimensionMismatchError(f"u and y batches differ in length: {U.shape[0]} vs {Y.shape[0]}")
    n = U.shape[0]
    if n < 2:
        raise TooFewSamplesError(f"need at least 2 samples to form a covariance, got {n}")
    mu = U.mean(axis=0)
    my = Y.mean(axis=0)
    Uc = U - mu
    Yc = Y - my
    return CovarianceTracker(n, mu, my, Uc.T @ Uc, Yc.T @ Yc, Uc.T @ Yc)


def update_tracker(tracker, u_new, y_new):
    """Absorb one pair; returns a new tracker and leaves the old one intact."""
    u = np.asarray(u_new, dtype=float)
    y = np.asarray(y_new, dtype=float)
    if u.shape != (tracker.p,) or y.shape != (tracker.d,):
        raise DimensionMismatchError(
            f"expected u of length {tracker.p} and y of length {tracker.d}, got {u.shape} and {y.shape}"
        )
    mu, my, suu, syy, suy = kernels.scatter_update(
        tracker.count, tracker.mean_u, tracker.mean_y, tracker.scatter_uu, tracker.scatter_yy, tracker.scatter_uy, u, y
    )
    return CovarianceTracker(tracker.count + 1, mu, my, suu, syy, suy)


def inv_sqrt_psd(M, floor=DEFAULT_FLOOR, sym_tol=1e-8):
    """M^(-1/2) by eigendecomposition, eigenvalues clamped below at ``floor``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSymmetricError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > sym_tol * scale:
        raise NonSymmetricError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    vals = np.maximum(vals, floor)
    out = (vecs / np.sqrt(vals)) @ vecs.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class CcaModel:
    J: np.ndarray
    L: np.ndarray
    sigma_k: np.ndarray
    mean_u: np.ndarray
    mean_y: np.ndarray

    @property
    def kappa(self):
        return self.sigma_k.shape[0]

    def residual_cov(self):
        return np.eye(self.kappa) - np.diag(self.sigma_k**2)


def fit_cca(tracker, floor=DEFAULT_FLOOR):
    if tracker.count < 2:
        raise TooFewSamplesError("need count >= 2 to fit")
    iu = inv_sqrt_psd(tracker.cov_uu(), floor)
    iy = inv_sqrt_psd(tracker.cov_yy(), floor)
    K = iu @ tracker.cov_uy() @ iy
    R, s, Vt = np.linalg.svd(K)
    kappa = min(tracker.p, tracker.d)
    J = iu @ R[:, :kappa]
    L = iy @ Vt[:kappa].T
    sigma = np.clip(s[:kappa], 0.0, 1.0)
    return CcaModel(J, L, sigma, tracker.mean_u.copy(), tracker.mean_y.copy())


def residual(model, u, y):
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape[-1] != model.J.shape[0] or y.shape[-1] != model.L.shape[0]:
        raise DimensionMismatchError(
            f"model expects u of length {model.J.shape[0]} and y of length {model.L.shape[0]}"
        )
    return (u - model.mean_u) @ model.J - ((y - model.mean_y) @ model.L) * model.sigma_k


def t2_score(model, r, floor=DEFAULT_FLOOR):
    """r^T (I - diag(s)^2)^-1 r; works on one residual or a batch of rows."""
    r = np.asarray(r, dtype=float)
    if r.shape[-1] != model.kappa:
        raise DimensionMismatchError(f"residual must have length {model.kappa}, got {r.shape[-1]}")
    var = np.maximum(1.0 - model.sigma_k**2, floor)
    out = np.sum(r * r / var, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class PlVerdict:
    time: int
    per_vl_scores: list
    threshold: float
    is_anomalous: bool
    committed: bool


def pl_step(trackers, pairs, threshold, time=0, floor=DEFAULT_FLOOR, rollback=True):
    """One decision for a physical link.

    ``trackers`` is a list with one tracker per mapped VL; ``pairs`` a matching
    list of (u, y). Returns the verdict and the tracker list to keep: the
    provisional updates when normal (or when rollback is off), the input list
    itself when anomalous.
    """
    if len(pairs) != len(trackers):
        raise SampleCountError(f"link carries {len(trackers)} virtual links, got {len(pairs)} pairs")
    provisional = []
    scores = []
    for tr, (u, y) in zip(trackers, pairs):
        nxt = update_tracker(tr, u, y)
        model = fit_cca(nxt, floor)
        scores.append(t2_score(model, residual(model, u, y), floor))
        provisional.append(nxt)
    anomalous = any(s > threshold for s in scores)
    committed = not (anomalous and rollback)
    verdict = PlVerdict(time, scores, float(threshold), anomalous, committed)
    return verdict, (provisional if committed else trackers)


def _inv_sqrt_stack(M, floor):
    vals, vecs = np.linalg.eigh(M)
    vals = np.maximum(vals, floor)
    out = (vecs / np.sqrt(vals)[:, None, :]) @ np.swapaxes(vecs, 1, 2)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def _fit_stack(counts, suu, syy, suy, floor):
    """Batched :func:`fit_cca` over a leading VL axis; returns J, L, sigma."""
    n1 = (counts - 1.0)[:, None, None]
    iu = _inv_sqrt_stack(suu / n1, floor)
    iy = _inv_sqrt_stack(syy / n1, floor)
    K = iu @ (suy / n1) @ iy
    R, s, Vt = np.linalg.svd(K)
    kappa = min(suu.shape[1], syy.shape[1])
    J = iu @ R[:, :, :kappa]
    L = iy @ np.swapaxes(Vt[:, :kappa, :], 1, 2)
    return J, L, np.clip(s[:, :kappa], 0.0, 1.0)


def _t2_stack(J, L, sigma, mean_u, mean_y, U, Y, floor):
    r = np.einsum("vp,vpk->vk", U - mean_u, J) - np.einsum("vd,vdk->vk", Y - mean_y, L) * sigma
    return np.sum(r * r / np.maximum(1.0 - sigma**2, floor), axis=1)


class PlDetectorBank:
    """Independent detectors for several physical links, evaluated together.

    ``group_sizes[g]`` is the number of VLs routed over link g. State for all
    VLs is stacked so one call to :meth:`step` does the whole network with a
    handful of batched linear-algebra calls; commit and rollback are still
    decided per link. The first ``t0`` pairs only fill a buffer, after which
    the trackers are initialised in one batch and verdicts start.
    """

    def __init__(self, group_sizes, p, d, t0=10, threshold=1.0, floor=DEFAULT_FLOOR, rollback=True):
        sizes = [int(n) for n in group_sizes]
        if not sizes or min(sizes) < 1:
            raise InvalidConfigError(f"every link detector needs at least one virtual link, got {sizes}")
        if t0 < 2:
            raise TooFewSamplesError(f"t0 must be >= 2, got {t0}")
        self.group_sizes = sizes
        self.group = np.repeat(np.arange(len(sizes)), sizes)
        self.num_vls = len(self.group)
        self.p = p
        self.d = d
        self.t0 = t0
        self.floor = floor
        self.rollback = rollback
        self.thresholds = np.broadcast_to(np.asarray(threshold, dtype=float), (len(sizes),)).copy()
        if not np.all(self.thresholds > 0):
            raise InvalidConfigError(f"thresholds must be > 0, got {threshold}")
        self.counts = np.zeros(self.num_vls, dtype=np.int64)
        self.mean_u = self.mean_y = self.suu = self.syy = self.suy = None
        self._buffer = []
        self.t = 0

    @property
    def num_groups(self):
        return len(self.group_sizes)

    @property
    def ready(self):
        return self.mean_u is not None

    def _check(self, U, Y):
        U = np.asarray(U, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if U.shape[0] != self.num_vls or Y.shape[0] != self.num_vls:
            raise SampleCountError(f"expected {self.num_vls} pairs, got {U.shape[0]} and {Y.shape[0]}")
        if U.shape != (self.num_vls, self.p) or Y.shape != (self.num_vls, self.d):
            raise DimensionMismatchError(f"expected u of length {self.p} and y of length {self.d}")
        return U, Y

    def _init_from_buffer(self):
        Us = np.array([b[0] for b in self._buffer])
        Ys = np.array([b[1] for b in self._buffer])
        trackers = [init_tracker(Us[:, k], Ys[:, k]) for k in range(self.num_vls)]
        self.counts[:] = self.t0
        self.mean_u = np.array([tr.mean_u for tr in trackers])
        self.mean_y = np.array([tr.mean_y for tr in trackers])
        self.suu = np.array([tr.scatter_uu for tr in trackers])
        self.syy = np.array([tr.scatter_yy for tr in trackers])
        self.suy = np.array([tr.scatter_uy for tr in trackers])
        self._buffer = []

    def step(self, U, Y, force_commit=False):
        """One step for every link. ``U``/``Y`` hold one row per VL in group order.

        Returns a list with one :class:`PlVerdict` per link, or ``None``
        while the warm-up buffer is filling.
        """
        U, Y = self._check(U, Y)
        self.t += 1
        if not self.ready:
            self._buffer.append((U, Y))
            if len(self._buffer) == self.t0:
                self._init_from_buffer()
            return None
        nxt = kernels.scatter_update_stack(self.counts, self.mean_u, self.mean_y, self.suu, self.syy, self.suy, U, Y)
        J, L, sigma = _fit_stack(self.counts + 1.0, *nxt[2:], self.floor)
        scores = _t2_stack(J, L, sigma, nxt[0], nxt[1], U, Y, self.floor)
        flagged = scores > self.thresholds[self.group]
        anomalous = np.zeros(self.num_groups, dtype=bool)
        np.logical_or.at(anomalous, self.group, flagged)
        committed = np.full(self.num_groups, True) if (force_commit or not self.rollback) else ~anomalous
        keep = committed[self.group]
        self.counts = np.where(keep, self.counts + 1, self.counts)
        for name, new in zip(("mean_u", "mean_y", "suu", "syy", "suy"), nxt):
            old = getattr(self, name)
            mask = keep.reshape((-1,) + (1,) * (new.ndim - 1))
            setattr(self, name, np.where(mask, new, old))
        verdicts = []
        lo = 0
        for g, n in enumerate(self.group_sizes):
            verdicts.append(
                PlVerdict(self.t, [float(x) for x in scores[lo : lo + n]], float(self.thresholds[g]), bool(anomalous[g]), bool(committed[g]))
            )
            lo += n
        return verdicts

    def trackers(self, g=None):
        """Per-VL trackers (of link ``g`` only, if given) as :class:`CovarianceTracker`."""
        if not self.ready:
            return None
        idx = range(self.num_vls) if g is None else np.flatnonzero(self.group == g)
        return [
            CovarianceTracker(int(self.counts[k]), self.mean_u[k], self.mean_y[k], self.suu[k], self.syy[k], self.suy[k])
            for k in idx
        ]

    def state(self):
        """Snapshot of everything a step may change, for rollback checks."""
        arrays = (self.counts, self.mean_u, self.mean_y, self.suu, self.syy, self.suy)
        return tuple(None if a is None else a.copy() for a in arrays)

    def scores(self, U, Y):
        """T^2 of each pair under the current models, without touching state."""
        U, Y = self._check(U, Y)
        J, L, sigma = _fit_stack(self.counts.astype(float), self.suu, self.syy, self.suy, self.floor)
        return _t2_stack(J, L, sigma, self.mean_u, self.mean_y, U, Y, self.floor)


class PlDetector(PlDetectorBank):
    """Single physical link: the bank with one group, taking a list of (u, y) pairs."""

    def __init__(self, num_vls, p, d, t0=10, threshold=1.0, floor=DEFAULT_FLOOR, rollback=True):
        super().__init__([num_vls], p, d, t0, threshold, floor, rollback)

    @property
    def threshold(self):
        return float(self.thresholds[0])

    @threshold.setter
    def threshold(self, value):
        self.thresholds[0] = value

    def _pairs(self, pairs):
        if len(pairs) != self.num_vls:
            raise SampleCountError(f"link carries {self.num_vls} virtual links, got {len(pairs)} pairs")
        return np.array([u for u, _ in pairs], dtype=float), np.array([y for _, y in pairs], dtype=float)

    def step(self, pairs, force_commit=False):
        out = super().step(*self._pairs(pairs), force_commit=force_commit)
        return None if out is None else out[0]

    def score(self, pairs):
        return [float(x) for x in self.scores(*self._pairs(pairs))]

    def models(self):
        return [fit_cca(tr, self.floor) for tr in self.trackers()]


def quantile_threshold(scores, q=0.99):
    scores = np.asarray(scores, dtype=float).ravel()
    if scores.size == 0:
        raise TooFewSamplesError("no calibration scores")
    return float(np.quantile(scores, q))
