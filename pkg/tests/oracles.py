"""Independent oracles used to verify the package's numerical routes.

Everything here is deliberately written from first principles (binomial sums,
dense trapezoid quadrature) and never calls the implementation paths it is
used to check.
"""

from __future__ import annotations

import math

import numpy as np


def beta_tail_exact(dlts: int, n: int, tau: float) -> float:
    """P(p > tau) for p ~ Beta(1 + dlts, 1 + n - dlts), via the exact identity
    I_x(a, b) = P(Binomial(a + b - 1, x) >= a)."""
    a = 1 + dlts
    b = 1 + n - dlts
    m = a + b - 1
    cdf = sum(
        math.comb(m, j) * tau**j * (1.0 - tau) ** (m - j) for j in range(a, m + 1)
    )
    return 1.0 - cdf


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def posterior_quadrature(
    observations: list[tuple[float, float, bool]],
    prior: tuple[float, float, float, float],
    doses: list[float],
    thresholds: tuple[float, ...] = (),
    n_grid: int = 801,
    span: float = 8.0,
):
    """Posterior summaries by dense trapezoid quadrature over (beta0, log beta1).

    `observations` are (dose, weight, dlt) triples; `prior` is (c1, c2, v1, v2).
    Returns a dict with per-dose posterior mean toxicity and tail
    probabilities P(p_d > theta) for each threshold.
    """
    c1, c2, v1, v2 = prior
    g0 = np.linspace(c1 - span * math.sqrt(v1), c1 + span * math.sqrt(v1), n_grid)
    g1 = np.linspace(c2 - span * math.sqrt(v2), c2 + span * math.sqrt(v2), n_grid)
    b0 = g0[:, None]
    lb1 = g1[None, :]
    beta1 = np.exp(lb1)

    logpost = -0.5 * ((b0 - c1) ** 2 / v1 + (lb1 - c2) ** 2 / v2)
    with np.errstate(divide="ignore"):
        for dose, weight, dlt in observations:
            f = _sigmoid(b0 + beta1 * dose)
            if dlt:
                logpost = logpost + math.log(weight) + np.log(f)
            else:
                logpost = logpost + np.log(1.0 - weight * f)

    w = np.exp(logpost - logpost.max())
    # trapezoid end-point weights in both directions
    t0 = np.ones(n_grid)
    t0[0] = t0[-1] = 0.5
    w = w * t0[:, None] * t0[None, :]
    z = w.sum()

    means = []
    tails: dict[float, list[float]] = {float(t): [] for t in thresholds}
    for dose in doses:
        f = _sigmoid(b0 + beta1 * dose)
        means.append(float((w * f).sum() / z))
        for t in thresholds:
            tails[float(t)].append(float((w * (f > t)).sum() / z))
    return {"mean_tox": means, "tail_above": tails}


def benchmark_select_bruteforce(
    p_true: list[float], tolerances: list[float], target: float
) -> int:
    """Reference selection for the complete-profile benchmark: threshold each
    patient's latent tolerance, average per dose, pick the closest to target
    (ties to the lower dose). Returns a 0-based index."""
    y = [[1.0 if u <= p else 0.0 for p in p_true] for u in tolerances]
    p_hat = [sum(col) / len(tolerances) for col in zip(*y)]
    best, best_dist = 0, float("inf")
    for j, p in enumerate(p_hat):
        d = abs(p - target)
        if d < best_dist:
            best, best_dist = j, d
    return best
