"""Independent reference implementations used only by the tests.

Nothing here imports the operators under test: the divergence matrix is
assembled from its defining adjoint relation, the convolution is a direct
double sum and the minimal-flow problem is handed to generic solvers.
"""

import itertools

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog


def grad_matrix(m, n, h):
    """Sparse forward-difference gradient, last row/column zero, as a (2mn x mn) matrix."""
    idx = np.arange(m * n).reshape(m, n)
    rows, cols, vals = [], [], []
    for i, j in itertools.product(range(m), range(n)):
        if i < m - 1:
            rows += [idx[i, j]] * 2
            cols += [idx[i + 1, j], idx[i, j]]
            vals += [1 / h, -1 / h]
        if j < n - 1:
            rows += [m * n + idx[i, j]] * 2
            cols += [idx[i, j + 1], idx[i, j]]
            vals += [1 / h, -1 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * m * n, m * n))


def div_matrix(m, n, h):
    """Divergence defined as minus the transpose of the gradient."""
    return -grad_matrix(m, n, h).T.tocsr()


def minimal_flow_soc(prev, kappa, h):
    """Exact discrete W1 projection cost ``min h^2 sum |sigma|_2`` via a conic solver."""
    import cvxpy as cp

    m, n = prev.shape
    D = div_matrix(m, n, h)
    r = cp.Variable(m * n)
    s = cp.Variable(2 * m * n)
    S = cp.reshape(s, (2, m * n), order="C")
    cons = [r >= 0, r <= kappa.ravel(), r - D @ s == prev.ravel()]
    obj = h * h * cp.sum(cp.norm(S, 2, axis=0))
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="CLARABEL")
    return float(prob.value), np.asarray(r.value).reshape(m, n)


def minimal_flow_l1(prev, kappa, h):
    """LP with the anisotropic cost ``h^2 sum |sigma|_1``.

    The l1 and l2 norms satisfy ``|s|_2 <= |s|_1 <= sqrt(2) |s|_2``, so this
    value brackets the isotropic optimum: ``soc <= l1 <= sqrt(2) * soc``.
    """
    m, n = prev.shape
    N = m * n
    D = div_matrix(m, n, h)
    # variables: r (N), s+ (2N), s- (2N)
    c = np.concatenate([np.zeros(N), np.full(4 * N, h * h)])
    A = sp.hstack([sp.eye(N), -D, D]).tocsr()
    bounds = [(0.0, k) for k in kappa.ravel()] + [(0.0, None)] * (4 * N)
    res = linprog(c, A_eq=A, b_eq=prev.ravel(), bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(res.message)
    return float(res.fun)


def direct_convolution(rho, h, sigma, mu=(0.0, 0.0), padding="zero", norm=1.0):
    """``phi_ij = h^2 sum_kl rho_kl K(x_ij - x_kl)`` evaluated on the grid plus one ghost ring.

    With ``padding="reflect"`` the density is extended by mirror images across
    each wall (and corner), matching a symmetric extension of the data.
    """
    m, n = rho.shape
    R = int(np.ceil((4 * sigma + max(abs(mu[0]), abs(mu[1]))) / h))
    if padding == "zero":
        ext = np.zeros((m + 2 * R + 2, n + 2 * R + 2))
        ext[R + 1:R + 1 + m, R + 1:R + 1 + n] = rho
    else:
        ext = np.pad(rho, R + 1, mode="symmetric")
    out = np.zeros((m + 2, n + 2))
    offs = np.arange(-R, R + 1)
    # taps farther than 4 sigma from the kernel centre are dropped
    dx, dy = offs * h - mu[0], offs * h - mu[1]
    kx = np.where(np.abs(dx) <= 4 * sigma, np.exp(-dx**2 / (2 * sigma**2)), 0.0)
    ky = np.where(np.abs(dy) <= 4 * sigma, np.exp(-dy**2 / (2 * sigma**2)), 0.0)
    for a in range(m + 2):
        for b in range(n + 2):
            # ghost-ring cell (a, b) sits at interior index (a - 1, b - 1)
            win = ext[a:a + 2 * R + 1, b:b + 2 * R + 1]
            out[a, b] = np.sum(win * np.outer(kx[::-1], ky[::-1]))
    return h * h * norm * out
