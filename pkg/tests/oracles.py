"""Independent reference computations used by the tests.

Nothing here imports the package's filter or solver code: matrices are built
by hand in the (A, 0, 1..N, N+1) order and Poisson masses use exact integer
factorials.
"""

import math
from fractions import Fraction

import numpy as np


def pmf_exact(rate, y):
    # float(rate**y / y!) via Fraction keeps the factorial exact; 0 underflows cleanly
    return float(Fraction(rate) ** y / math.factorial(y)) * math.exp(-rate)


def dense_p2(pbar, a_low, a_high):
    pbar = [list(map(float, r)) for r in pbar]
    n = len(pbar)
    size = n + 3
    m = [[0.0] * size for _ in range(size)]
    m[0][0] = 1.0
    m[1][1] = a_low
    m[1][size - 1] = 1.0 - a_low
    for r in range(n):
        for c in range(n + 2):
            m[2 + r][1 + c] = pbar[r][c]
    m[size - 1][1] = 1.0 - a_high
    m[size - 1][size - 1] = a_high
    return np.array(m)


def dense_step(belief, y, rates, pbar, a_low, a_high):
    """Returns (posterior, sigma) by explicit B_y P2^T pi."""
    p2 = dense_p2(pbar, a_low, a_high)
    b_y = np.diag([0.0] + [pmf_exact(r, y) for r in rates])
    unnorm = b_y @ p2.T @ np.asarray(belief, float)
    sig = float(np.ones(len(unnorm)) @ unnorm)
    return unnorm / sig, sig


def dense_run(belief, ys, rates, pbar, a_low, a_high):
    out = []
    b = np.asarray(belief, float)
    for y in ys:
        b, _ = dense_step(b, y, rates, pbar, a_low, a_high)
        out.append(b)
    return out


def shiryaev(ys, pre_rate, post_rate, rho, p0=0.0):
    """Two-state posterior that the change has happened, geometric(rho) prior."""
    p = p0
    out = []
    for y in ys:
        prior = p + (1.0 - p) * rho
        num = prior * pmf_exact(post_rate, y)
        den = num + (1.0 - prior) * pmf_exact(pre_rate, y)
        p = num / den
        out.append(p)
    return out


def rebin(rows, width):
    """Plain-Python fixed-width binning aligned to the first timestamp.

    ``rows`` is a list of (t, count).  Each row covers one sampling period
    (smallest positive gap); trailing partially covered bins are dropped.
    """
    t0 = rows[0][0]
    ts = [t for t, _ in rows]
    gaps = [b - a for a, b in zip(ts, ts[1:]) if b > a]
    period = min(gaps) if gaps else 0
    end = ts[-1] + period
    bins = []
    start = t0
    while start + width <= end + 1e-9:
        bins.append(sum(c for t, c in rows if start <= t < start + width))
        start += width
    return bins


def brute_interpolate(values, M, ql, qh):
    """Linear interpolation on the triangulated grid by searching every triangle.

    ``values`` is a dict {(i, j): v}.  Each unit cell is split by its
    anti-diagonal into a lower and an upper triangle.
    """
    u, v = ql * M, qh * M
    for i in range(M):
        for j in range(M - i):
            tris = [((i, j), (i + 1, j), (i, j + 1))]
            if i + j + 2 <= M:
                tris.append(((i + 1, j + 1), (i + 1, j), (i, j + 1)))
            for tri in tris:
                (x1, y1), (x2, y2), (x3, y3) = tri
                det = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3)
                l1 = ((y2 - y3) * (u - x3) + (x3 - x2) * (v - y3)) / det
                l2 = ((y3 - y1) * (u - x3) + (x1 - x3) * (v - y3)) / det
                l3 = 1.0 - l1 - l2
                if min(l1, l2, l3) >= -1e-12:
                    return l1 * values[tri[0]] + l2 * values[tri[1]] + l3 * values[tri[2]]
    raise ValueError("point outside the simplex")
