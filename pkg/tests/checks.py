"""Independent checkers shared by unit and acceptance tests."""

import numpy as np


def triangular_violations(values, alpha, T, tol=1e-9):
    """Problems with a triangular trajectory, checked from first principles."""
    v = np.asarray(values, dtype=float)
    tau = np.arange(T) / (T - 1)
    problems = []
    if v.shape != (T,):
        return [f"shape {v.shape} != ({T},)"]
    if v.min() < -tol or v.max() > 1 + tol:
        problems.append("values outside [0, 1]")
    if abs(v[0]) > tol or abs(v[-1]) > tol:
        problems.append("endpoints not 0")
    rise = v[tau <= alpha]
    fall = v[tau > alpha]
    if np.any(np.diff(rise) <= 0):
        problems.append("rise not strictly increasing")
    if np.any(np.diff(fall) >= 0):
        problems.append("fall not strictly decreasing")
    # Exactly one peak: nonzero steps go all up, then all down (a single tie
    # at the rise/fall boundary is a flat top, not a second peak).
    d = np.diff(v)
    signs = np.sign(d[d != 0])
    if np.any(np.diff(signs) > 0):
        problems.append("more than one local maximum")
    return problems


def brute_force_ranks(x):
    """Average ranks (1-based) by counting, no sorting."""
    x = list(x)
    return [1 + sum(o < xi for o in x) + (sum(o == xi for o in x) - 1) / 2 for xi in x]


def pearson(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    da, db = a - a.mean(), b - b.mean()
    den = np.sqrt((da @ da) * (db @ db))
    return None if den == 0 else float(da @ db / den)


def spearman_oracle(a, b):
    return pearson(brute_force_ranks(a), brute_force_ranks(b))


def kendall_counts_oracle(a, b):
    conc = disc = ties_a = ties_b = 0
    n = len(a)
    for i in range(n):
        for j in range(i + 1, n):
            da, db = a[j] - a[i], b[j] - b[i]
            if da == 0:
                ties_a += 1
            if db == 0:
                ties_b += 1
            if da * db > 0:
                conc += 1
            elif da * db < 0:
                disc += 1
    return conc, disc, ties_a, ties_b


def kendall_oracle(a, b):
    import math

    n = len(a)
    conc, disc, ties_a, ties_b = kendall_counts_oracle(a, b)
    n0 = n * (n - 1) // 2
    if n0 - ties_a == 0 or n0 - ties_b == 0:
        return None
    return (conc - disc) / math.sqrt((n0 - ties_a) * (n0 - ties_b))


def random_pair(rng, with_ties):
    n = int(rng.integers(2, 51))
    if with_ties:
        a = rng.integers(0, max(2, n // 3), n).astype(float)
        b = rng.integers(0, max(2, n // 3), n).astype(float)
    else:
        a = rng.normal(size=n)
        b = a + rng.normal(scale=1.0, size=n)
    return a, b
