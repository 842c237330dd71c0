"""Hot inner loops, each in a numba flavour and a vectorised numpy flavour.

The public names (``rff_map``, ``admm_round``, ``scatter_update``,
``scatter_update_stack``) point at the numba version when it is available and
enabled, otherwise at numpy. Both flavours take and return plain float64
arrays and never mutate their inputs, which is what makes commit/rollback in
the detectors a matter of keeping or dropping the returned arrays.
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit

# ---------------------------------------------------------------------------
# random Fourier feature map


def rff_map_numpy(omega, phase, X):
    """Rows of ``X`` (n, p) -> rows of z (n, D)."""
    D = omega.shape[0]
    return np.sqrt(2.0 / D) * np.cos(X @ omega.T + phase)


@njit(cache=True)
def _rff_map_loop(omega, phase, X):
    n, p = X.shape
    D = omega.shape[0]
    scale = np.sqrt(2.0 / D)
    out = np.empty((n, D))
    for r in range(n):
        for i in range(D):
            acc = phase[i]
            for k in range(p):
                acc += omega[i, k] * X[r, k]
            out[r, i] = scale * np.cos(acc)
    return out


# ---------------------------------------------------------------------------
# one synchronous ADMM round of the decentralised online OCSVM
#
# W (N, D), rho (N,), alpha (N, D), beta (N,), Z (N, D)
# returns lam, W_new, rho_new, alpha_new, beta_new, margin (z_j . w_j - rho_j)


def admm_round_numpy(W, rho, alpha, beta, Z, eta, cap, exact):
    N = W.shape[0]
    A = eta * N + 1.0
    half_eta = 0.5 * eta
    # neighbour sums include the self term: sum_i (w_j + w_i) = N w_j + sum_i w_i
    sw = N * W + W.sum(axis=0)
    srho = N * rho + rho.sum()
    l = 2.0 * alpha - half_eta * sw
    h = 2.0 * beta - half_eta * srho

    zz = np.einsum("ij,ij->i", Z, Z)
    zl = np.einsum("ij,ij->i", Z, l)
    quad = zz / A + 1.0 / (A - 1.0)
    lin = zl / A + (1.0 - h) / (A - 1.0)
    vertex = lin / quad if exact else lin / (2.0 * quad)
    lam = np.clip(vertex, 0.0, cap)

    W_new = (Z * lam[:, None] - l) / A
    rho_new = (1.0 - lam - h) / (A - 1.0)

    alpha_new = alpha + half_eta * (N * W_new - W_new.sum(axis=0))
    beta_new = beta + half_eta * (N * rho_new - rho_new.sum())
    margin = np.einsum("ij,ij->i", Z, W_new) - rho_new
    return lam, W_new, rho_new, alpha_new, beta_new, margin


@njit(cache=True)
def _admm_round_loop(W, rho, alpha, beta, Z, eta, cap, exact):
    N, D = W.shape
    A = eta * N + 1.0
    half_eta = 0.5 * eta

    wsum = np.zeros(D)
    for j in range(N):
        for k in range(D):
            wsum[k] += W[j, k]
    rsum = 0.0
    for j in range(N):
        rsum += rho[j]

    lam = np.empty(N)
    W_new = np.empty((N, D))
    rho_new = np.empty(N)
    l = np.empty(D)
    for j in range(N):
        zz = 0.0
        zl = 0.0
        for k in range(D):
            l[k] = 2.0 * alpha[j, k] - half_eta * (N * W[j, k] + wsum[k])
            zz += Z[j, k] * Z[j, k]
            zl += Z[j, k] * l[k]
        h = 2.0 * beta[j] - half_eta * (N * rho[j] + rsum)
        quad = zz / A + 1.0 / (A - 1.0)
        lin = zl / A + (1.0 - h) / (A - 1.0)
        if exact:
            v = lin / quad
        else:
            v = lin / (2.0 * quad)
        if v < 0.0:
            v = 0.0
        elif v > cap:
            v = cap
        lam[j] = v
        for k in range(D):
            W_new[j, k] = (Z[j, k] * v - l[k]) / A
        rho_new[j] = (1.0 - v - h) / (A - 1.0)

    wsum_new = np.zeros(D)
    for j in range(N):
        for k in range(D):
            wsum_new[k] += W_new[j, k]
    rsum_new = 0.0
    for j in range(N):
        rsum_new += rho_new[j]

    alpha_new = np.empty((N, D))
    beta_new = np.empty(N)
    margin = np.empty(N)
    for j in range(N):
        s = 0.0
        for k in range(D):
            alpha_new[j, k] = alpha[j, k] + half_eta * (N * W_new[j, k] - wsum_new[k])
            s += Z[j, k] * W_new[j, k]
        beta_new[j] = beta[j] + half_eta * (N * rho_new[j] - rsum_new)
        margin[j] = s - rho_new[j]
    return lam, W_new, rho_new, alpha_new, beta_new, margin


# ---------------------------------------------------------------------------
# rank-one scatter update for streaming covariance
#
# scatter(t+1) = scatter(t) + t/(t+1) * (c(t) - u)(c(t) - u)^T, c = running mean


def scatter_update_numpy(count, mean_u, mean_y, suu, syy, suy, u, y):
    t = float(count)
    du = mean_u - u
    dy = mean_y - y
    f = t / (t + 1.0)
    suu_new = suu + f * np.outer(du, du)
    syy_new = syy + f * np.outer(dy, dy)
    suy_new = suy + f * np.outer(du, dy)
    mean_u_new = (t * mean_u + u) / (t + 1.0)
    mean_y_new = (t * mean_y + y) / (t + 1.0)
    return mean_u_new, mean_y_new, suu_new, syy_new, suy_new


@njit(cache=True)
def _scatter_update_loop(count, mean_u, mean_y, suu, syy, suy, u, y):
    t = float(count)
    p = mean_u.shape[0]
    d = mean_y.shape[0]
    f = t / (t + 1.0)
    du = mean_u - u
    dy = mean_y - y
    suu_new = np.empty((p, p))
    syy_new = np.empty((d, d))
    suy_new = np.empty((p, d))
    for i in range(p):
        for j in range(p):
            suu_new[i, j] = suu[i, j] + f * du[i] * du[j]
        for j in range(d):
            suy_new[i, j] = suy[i, j] + f * du[i] * dy[j]
    for i in range(d):
        for j in range(d):
            syy_new[i, j] = syy[i, j] + f * dy[i] * dy[j]
    mean_u_new = (t * mean_u + u) / (t + 1.0)
    mean_y_new = (t * mean_y + y) / (t + 1.0)
    return mean_u_new, mean_y_new, suu_new, syy_new, suy_new


# stacked variant: a leading axis over virtual links, each with its own count


def scatter_update_stack_numpy(counts, mean_u, mean_y, suu, syy, suy, U, Y):
    t = counts.astype(np.float64)
    du = mean_u - U
    dy = mean_y - Y
    f = (t / (t + 1.0))[:, None, None]
    suu_new = suu + f * du[:, :, None] * du[:, None, :]
    syy_new = syy + f * dy[:, :, None] * dy[:, None, :]
    suy_new = suy + f * du[:, :, None] * dy[:, None, :]
    tc = t[:, None]
    return (tc * mean_u + U) / (tc + 1.0), (tc * mean_y + Y) / (tc + 1.0), suu_new, syy_new, suy_new


@njit(cache=True)
def _scatter_update_stack_loop(counts, mean_u, mean_y, suu, syy, suy, U, Y):
    V = U.shape[0]
    mu = np.empty_like(mean_u)
    my = np.empty_like(mean_y)
    suu_new = np.empty_like(suu)
    syy_new = np.empty_like(syy)
    suy_new = np.empty_like(suy)
    for v in range(V):
        mu[v], my[v], suu_new[v], syy_new[v], suy_new[v] = _scatter_update_loop(
            counts[v], mean_u[v], mean_y[v], suu[v], syy[v], suy[v], U[v], Y[v]
        )
    return mu, my, suu_new, syy_new, suy_new

if HAVE_NUMBA:
    rff_map_numba = _rff_map_loop
    admm_round_numba = _admm_round_loop
    scatter_update_numba = _scatter_update_loop
    scatter_update_stack_numba = _scatter_update_stack_loop
    rff_map = _rff_map_loop
    admm_round = _admm_round_loop
    scatter_update = _scatter_update_loop
    scatter_update_stack = _scatter_update_stack_loop
else:
    rff_map_numba = admm_round_numba = scatter_update_numba = scatter_update_stack_numba = None
    rff_map = rff_map_numpy
    admm_round = admm_round_numpy
    scatter_update = scatter_update_numpy
    scatter_update_stack = scatter_update_stack_numpy
