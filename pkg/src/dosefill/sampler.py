"""Adaptive random-walk Metropolis for low-dimensional posteriors.

Runs several chains in lockstep as vectorized numpy operations.  During
burn-in the proposal covariance is re-estimated from the pooled chain history
and the step scale is tuned toward a target acceptance rate; both are frozen
before the sampling phase so the kept draws come from a fixed kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SamplerError(RuntimeError):
    """Raised when the chain fails its post-adaptation health checks."""


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 32
    burnin: int = 192
    draws: int = 6144
    adapt_interval: int = 16
    target_accept: float = 0.35
    accept_min: float = 0.05
    accept_max: float = 0.95
    jitter: float = 1e-9

    def __post_init__(self) -> None:
        if self.chains < 1 or self.draws < 1 or self.burnin < 0:
            raise ValueError("chains/draws must be >= 1 and burnin >= 0")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0.0 <= self.accept_min < self.accept_max <= 1.0:
            raise ValueError("acceptance bounds must satisfy 0 <= min < max <= 1")

    def key(self) -> tuple:
        return (
            self.chains,
            self.burnin,
            self.draws,
            self.adapt_interval,
            self.target_accept,
        )


def _step(log_density, x, lp, chol, z, logu):
    prop = x + z @ chol.T
    lp_prop = log_density(prop)
    accept = logu < lp_prop - lp
    x = np.where(accept[:, None], prop, x)
    lp = np.where(accept, lp_prop, lp)
    return x, lp, accept


def effective_draws(kept: np.ndarray) -> float:
    """Crude effective sample size from lag autocorrelations of the first
    coordinate, summed over chains (initial positive sequence cutoff)."""
    steps, chains, _ = kept.shape
    if steps < 4:
        return float(steps * chains)
    total = 0.0
    series = kept[:, :, 0]
    for c in range(chains):
        x = series[:, c] - series[:, c].mean()
        var = float(x @ x) / steps
        if var <= 0.0:
            total += steps
            continue
        rho_sum = 0.0
        for lag in range(1, min(steps - 1, 200)):
            rho = float(x[:-lag] @ x[lag:]) / (steps * var)
            if rho <= 0.0:
                break
            rho_sum += rho
        total += steps / (1.0 + 2.0 * rho_sum)
    return float(total)


def sample(
    log_density,
    start: np.ndarray,
    init_cov: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, dict]:
    """Sample `config.draws` points from exp(log_density).

    `log_density` maps an (n, d) array to (n,) log densities; `start` holds
    one row per chain.  Returns the pooled draws (draws, d) and diagnostics
    with the sampling-phase acceptance rate and an effective-draw estimate.
    """
    x = np.array(start, dtype=float)
    chains, dim = x.shape
    if chains != config.chains:
        raise ValueError("start must supply one row per configured chain")
    lp = log_density(x)
    if not np.all(np.isfinite(lp)):
        raise SamplerError("non-finite log density at the starting points")

    scale = 2.38**2 / dim
    eye = np.eye(dim)
    cov = np.array(init_cov, dtype=float)
    chol = np.linalg.cholesky(scale * cov + config.jitter * eye)

    keep_per_chain = -(-config.draws // chains)
    total_steps = config.burnin + keep_per_chain
    z_all = rng.standard_normal((total_steps, chains, dim))
    with np.errstate(divide="ignore"):
        logu_all = np.log(rng.random((total_steps, chains)))

    history = np.empty((max(config.burnin, 1), chains, dim))
    accepted = 0
    attempted = 0
    adapt_round = 0
    for t in range(config.burnin):
        x, lp, acc = _step(log_density, x, lp, chol, z_all[t], logu_all[t])
        history[t] = x
        accepted += int(acc.sum())
        attempted += chains
        due = (t + 1) % config.adapt_interval == 0
        if due and t >= config.adapt_interval - 1:
            adapt_round += 1
            rate = accepted / attempted
            scale *= float(np.exp((rate - config.target_accept) / np.sqrt(adapt_round)))
            pooled = history[max(0, (t + 1) // 4) : t + 1].reshape(-1, dim)
            emp = np.cov(pooled, rowvar=False)
            if np.all(np.isfinite(emp)) and np.linalg.det(emp + config.jitter * eye) > 0:
                cov = emp
            chol = np.linalg.cholesky(scale * cov + config.jitter * eye)
            accepted = 0
            attempted = 0

    kept = np.empty((keep_per_chain, chains, dim))
    accepted = 0
    for t in range(keep_per_chain):
        step = config.burnin + t
        x, lp, acc = _step(log_density, x, lp, chol, z_all[step], logu_all[step])
        kept[t] = x
        accepted += int(acc.sum())
    accept_rate = accepted / (keep_per_chain * chains)
    if not config.accept_min <= accept_rate <= config.accept_max:
        raise SamplerError(
            f"acceptance rate {accept_rate:.3f} outside "
            f"[{config.accept_min}, {config.accept_max}] after adaptation"
        )
    draws = kept.reshape(-1, dim)[: config.draws]
    diagnostics = {
        "accept_rate": float(accept_rate),
        "effective_draws": effective_draws(kept),
        "chains": chains,
        "kept_per_chain": keep_per_chain,
    }
    return draws, diagnostics
