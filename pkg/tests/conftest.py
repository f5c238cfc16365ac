"""Shared test oracles, all independent of the library's fast paths."""

import numpy as np
import pytest


def dense_conv_reference(atoms: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """Plain-loop "same"-size true convolution with zero padding.

    out[r, c] = sum_i sum_{a,b} d_i[a, b] * z_i[r + s - a, c + s - b]
    with anchor s = (k - 1) // 2 and zeros outside the grid.
    """
    m, k, _ = atoms.shape
    _, h, w = maps.shape
    s = (k - 1) // 2
    out = np.zeros((h, w))
    for i in range(m):
        for a in range(k):
            for b in range(k):
                coef = atoms[i, a, b]
                if coef == 0.0:
                    continue
                for r in range(h):
                    rr = r + s - a
                    if rr < 0 or rr >= h:
                        continue
                    for c in range(w):
                        cc = c + s - b
                        if 0 <= cc < w:
                            out[r, c] += coef * maps[i, rr, cc]
    return out


def cd_sparse_solve(D: np.ndarray, x: np.ndarray, lam: float,
                    iters: int = 50000, tol: float = 1e-14) -> np.ndarray:
    """Cyclic coordinate descent for ``min_z ||D z - x||^2 + lam ||z||_1``.

    Requires unit-norm columns. Run to convergence; used as the
    independent optimum oracle for FISTA and the posterior mode.
    """
    n, m = D.shape
    z = np.zeros(m)
    r = x.astype(np.float64).copy()
    for _ in range(iters):
        delta = 0.0
        for i in range(m):
            old = z[i]
            rho = D[:, i] @ r + old
            new = np.sign(rho) * max(abs(rho) - lam / 2.0, 0.0)
            if new != old:
                r -= D[:, i] * (new - old)
                z[i] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return z


def adjoint_rel_err(apply_fwd, apply_adj, domain_vec, range_vec) -> float:
    """|<A x, y> - <x, A^T y>| / (||A x|| ||y||)."""
    ax = apply_fwd(domain_vec)
    aty = apply_adj(range_vec)
    lhs = float(np.vdot(ax, range_vec))
    rhs = float(np.vdot(domain_vec, aty))
    denom = np.linalg.norm(ax) * np.linalg.norm(range_vec)
    return abs(lhs - rhs) / max(denom, 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
