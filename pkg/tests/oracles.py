"""Reference computations that do not go through the package's solver paths."""

import math

import numpy as np

from afpo.disutility import DisutilityFn
from afpo.pareto_rule import PiecewiseTaxRule


def fairness_oracle_zeta(p) -> float:
    """Log-odds of the fair two-region rule by bisection on ``E[T1] - mu1``.

    ``E[T1]`` is integrated with 64-point Gauss-Legendre on 256 panels of the
    uniform part of the residual-loss law.
    """
    x, w = np.polynomial.legendre.leggauss(64)
    edges = np.linspace(0, p.W, 257)
    mids = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * np.diff(edges)[:, None]
    s = (mids + half * x).ravel()
    fns = [DisutilityFn.cara(p.gamma1), DisutilityFn.cara(p.gamma2)]

    def gap(z):
        a2 = 1.0 / (1.0 + math.exp(-z))
        t1 = PiecewiseTaxRule([1 - a2, a2], fns, [p.w1, p.w2]).evaluate(s)[:, 0]
        return (1 - p.p0) * (half * w * t1.reshape(len(mids), -1)).sum() / p.W - p.mu1

    lo, hi = -p.r2, p.r1
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        # a larger zeta puts more weight on region 2, so region 1 pays more
        lo, hi = (mid, hi) if gap(mid) < 0 else (lo, mid)
    return 0.5 * (lo + hi)


def cara_taxes(alpha, s, gammas, caps, iters: int = 60):
    """Exact CARA Pareto taxes for weight rows ``alpha`` (P, n) at losses ``s`` (A,).

    At multiplier ``e^l`` region i pays ``clip(gamma_i (l - log alpha_i), 0, cap_i)``;
    ``l`` is found by bisection on the aggregate. Returns shape (P, A, n).
    """
    la = np.log(alpha)[:, None, :]
    lo = np.full((alpha.shape[0], len(s)), -50.0)
    hi = np.full_like(lo, 50.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = np.clip(gammas * (mid[..., None] - la), 0, caps).sum(-1) < s
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.clip(gammas * (0.5 * (lo + hi))[..., None] - gammas * la, 0, caps)


def discrete_eta(alpha, atoms, probs, gammas, caps):
    """Exact fairness gaps ``E[eps] - E[T]`` for a discrete residual-claim law."""
    T = cara_taxes(np.atleast_2d(alpha), atoms.sum(axis=1), gammas, caps)
    mu = probs @ atoms
    return mu - (probs[None, :, None] * T).sum(axis=1)


def simplex_grid_search(atoms, probs, gammas, caps, h: float = 1e-3, chunk: int = 50_000):
    """Exhaustive search of the open 3-simplex at resolution ``h`` for the smallest max|eta|."""
    K = int(round(1 / h))
    i, j = np.meshgrid(np.arange(1, K), np.arange(1, K), indexing="ij")
    m = i + j < K
    grid = np.column_stack([i[m], j[m], K - i[m] - j[m]]) * h
    best, best_score = None, np.inf
    for k in range(0, len(grid), chunk):
        part = grid[k:k + chunk]
        score = np.abs(discrete_eta(part, atoms, probs, gammas, caps)).max(axis=1)
        b = int(np.argmin(score))
        if score[b] < best_score:
            best, best_score = part[b], float(score[b])
    return best, best_score, len(grid)
