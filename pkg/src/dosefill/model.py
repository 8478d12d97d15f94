"""Two-parameter Bayesian logistic dose-toxicity model, plain and TITE-weighted.

The probability of a DLT at dose d is F(d, beta) = expit(beta0 + beta1 * d)
with beta1 > 0, and (beta0, log beta1) carries an independent bivariate
normal prior.  Partially observed patients enter the likelihood through the
weighted response G = w * F with w in [0, 1]; fully observed data are the
w = 1 special case.

Posterior inference is adaptive random-walk Metropolis on (beta0, log beta1);
`DoseToxicityModel` wraps it behind a fit/predict-style estimator surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, log_expit, logit

from .sampler import SamplerConfig, sample
from .scenarios import DoseGrid
from .validation import check_count, check_open_probability, check_positive

_LOG_2PI = math.log(2.0 * math.pi)


class UndefinedCVError(ValueError):
    """CV(MTD) is undefined because the median MTD draw is exactly zero."""


@dataclass(frozen=True)
class PriorHyper:
    """Hyper-parameters of the bivariate normal prior on (beta0, log beta1).

    c1/c2 are the means and v1/v2 the variances of beta0 and log(beta1).
    """

    c1: float
    c2: float
    v1: float
    v2: float

    def __post_init__(self) -> None:
        check_positive(self.v1, "v1")
        check_positive(self.v2, "v2")

    def mean(self) -> np.ndarray:
        return np.array([self.c1, self.c2], dtype=float)

    def cov(self) -> np.ndarray:
        return np.diag([self.v1, self.v2]).astype(float)

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "v1": self.v1, "v2": self.v2}

    @classmethod
    def from_dict(cls, payload: dict) -> "PriorHyper":
        return cls(**{k: float(payload[k]) for k in ("c1", "c2", "v1", "v2")})


#: Relatively vague default prior: odds of 0.5 (p = 1/3) at dose zero,
#: unit median slope per MBq.
VAGUE_PRIOR = PriorHyper(c1=math.log(0.5), c2=0.0, v1=4.0, v2=1.0)

#: Calibration winners per design variant (follow-up cycles x backfilling).
BUILTIN_PRIORS: dict[str, PriorHyper] = {
    "vague": VAGUE_PRIOR,
    "calibrated-1cycle-nobackfill": PriorHyper(
        c1=math.log(1 / 2), c2=math.log(1 / 4), v1=4.0, v2=2.0
    ),
    "calibrated-1cycle-backfill": PriorHyper(
        c1=math.log(1 / 2), c2=math.log(1 / 4), v1=2.0, v2=1.0
    ),
    "calibrated-3cycle-nobackfill": PriorHyper(
        c1=math.log(1 / 16), c2=math.log(1 / 16), v1=1.0, v2=1.0
    ),
    "calibrated-3cycle-backfill": PriorHyper(
        c1=math.log(1 / 16), c2=math.log(1 / 16), v1=1.0, v2=1.0
    ),
}


@dataclass(frozen=True)
class Observation:
    """One patient's contribution to the likelihood.

    `weight` is the follow-up weight w in [0, 1]; an observed DLT forces
    w = 1.
    """

    dose: float
    dlt: bool
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")
        if self.dlt and self.weight != 1.0:
            raise ValueError("an observed DLT carries weight 1")


@dataclass(frozen=True)
class PosteriorDraws:
    """Sampled (beta0, beta1) pairs with beta1 > 0, plus sampler diagnostics."""

    draws: np.ndarray
    accept_rate: float
    effective_draws: float

    def __post_init__(self) -> None:
        draws = np.asarray(self.draws, dtype=float)
        if draws.ndim != 2 or draws.shape[1] != 2 or draws.shape[0] == 0:
            raise ValueError("draws must be a non-empty (n, 2) array")
        if np.any(draws[:, 1] <= 0.0):
            raise ValueError("every draw must have beta1 > 0")
        object.__setattr__(self, "draws", draws)

    def __len__(self) -> int:
        return self.draws.shape[0]

    @property
    def beta0(self) -> np.ndarray:
        return self.draws[:, 0]

    @property
    def beta1(self) -> np.ndarray:
        return self.draws[:, 1]

    def to_csv(self, path: str | Path) -> None:
        lines = ["beta0,beta1"]
        lines += [f"{float(b0)!r},{float(b1)!r}" for b0, b1 in self.draws]
        Path(path).write_text("\n".join(lines) + "\n")


def tox_prob(dose, beta0, beta1):
    """Probability of DLT at `dose` under parameters (beta0, beta1)."""
    beta1 = np.asarray(beta1, dtype=float)
    if np.any(beta1 <= 0.0):
        raise ValueError("beta1 must be positive")
    return expit(np.asarray(beta0, dtype=float) + beta1 * np.asarray(dose, dtype=float))


def tite_weight(cycles_observed: int, total_cycles: int, dlt: bool) -> float:
    """Follow-up weight u/S, or 1 as soon as the patient shows a DLT."""
    check_count(total_cycles, "total_cycles", minimum=1)
    check_count(cycles_observed, "cycles_observed", minimum=0)
    if cycles_observed > total_cycles:
        raise ValueError("cycles_observed cannot exceed total_cycles")
    if dlt:
        return 1.0
    return cycles_observed / total_cycles


def _grouped(observations: Sequence[Observation]):
    """Collapse observations onto unique (dose, weight, dlt) triples."""
    counts: dict[tuple[float, float, bool], int] = {}
    for obs in observations:
        key = (obs.dose, obs.weight, bool(obs.dlt))
        counts[key] = counts.get(key, 0) + 1
    if not counts:
        empty = np.empty(0)
        return empty, empty, empty.astype(bool), empty
    keys = sorted(counts)
    doses = np.array([k[0] for k in keys])
    weights = np.array([k[1] for k in keys])
    ys = np.array([k[2] for k in keys], dtype=bool)
    n = np.array([counts[k] for k in keys], dtype=float)
    if np.any(ys & (weights == 0.0)):
        raise ValueError("a DLT observation cannot carry weight 0")
    return doses, weights, ys, n


def _phi_log_posterior(phi: np.ndarray, grouped, prior: PriorHyper) -> np.ndarray:
    """Log posterior over phi = (beta0, log beta1) rows, up to nothing:
    includes the full normal prior density."""
    doses, weights, ys, counts = grouped
    beta0 = phi[:, 0]
    log_beta1 = phi[:, 1]
    lp = -0.5 * (
        (beta0 - prior.c1) ** 2 / prior.v1
        + (log_beta1 - prior.c2) ** 2 / prior.v2
        + math.log(prior.v1 * prior.v2)
        + 2.0 * _LOG_2PI
    )
    if doses.size == 0:
        return lp
    eta = beta0[:, None] + np.exp(log_beta1)[:, None] * doses[None, :]
    log_f = log_expit(eta)
    with np.errstate(divide="ignore"):
        # log(1 - w F) computed as log((1-w) + w * expit(-eta)) for stability
        log_one_minus_g = np.log((1.0 - weights)[None, :] + weights[None, :] * expit(-eta))
        log_w = np.where(weights > 0.0, np.log(np.maximum(weights, 1e-300)), -np.inf)
    terms = np.where(ys[None, :], log_w[None, :] + log_f, log_one_minus_g)
    return lp + terms @ counts


def log_posterior(
    beta: tuple[float, float],
    observations: Sequence[Observation],
    prior: PriorHyper,
) -> float:
    """Log prior density on (beta0, log beta1) plus the weighted log likelihood.

    With every weight equal to 1 this is the plain (unweighted) model's log
    posterior.
    """
    beta0, beta1 = float(beta[0]), float(beta[1])
    if beta1 <= 0.0:
        raise ValueError("beta1 must be positive")
    phi = np.array([[beta0, math.log(beta1)]])
    return float(_phi_log_posterior(phi, _grouped(observations), prior)[0])


def _make_log_density(grouped, prior: PriorHyper):
    """Fast closure equal to `_phi_log_posterior` up to vectorization details."""
    doses, weights, ys, counts = grouped
    norm = -0.5 * (math.log(prior.v1 * prior.v2) + 2.0 * _LOG_2PI)
    d1, c1 = doses[ys], counts[ys]
    logw_const = float((c1 * np.log(weights[ys])).sum()) if d1.size else 0.0
    d0, c0 = doses[~ys], counts[~ys]
    w0 = weights[~ys]
    one_minus_w0 = 1.0 - w0

    def log_density(phi: np.ndarray) -> np.ndarray:
        beta0 = phi[:, 0]
        log_beta1 = phi[:, 1]
        lp = norm - 0.5 * (
            (beta0 - prior.c1) ** 2 / prior.v1 + (log_beta1 - prior.c2) ** 2 / prior.v2
        )
        if d0.size or d1.size:
            beta1 = np.exp(log_beta1)
            if d1.size:
                lp = lp + log_expit(beta0[:, None] + beta1[:, None] * d1) @ c1 + logw_const
            if d0.size:
                surv = one_minus_w0 + w0 * expit(-beta0[:, None] - beta1[:, None] * d0)
                with np.errstate(divide="ignore"):
                    lp = lp + np.log(surv) @ c0
        return lp

    return log_density


def fit(
    observations: Sequence[Observation],
    prior: PriorHyper = VAGUE_PRIOR,
    config: SamplerConfig = SamplerConfig(),
    seed: int | np.random.Generator | None = 0,
) -> PosteriorDraws:
    """Draw from the posterior of (beta0, beta1) given the observations.

    Deterministic for a fixed (data, prior, config, seed); raises
    `SamplerError` when the chain ends up outside the configured acceptance
    bounds.
    """
    grouped = _grouped(observations)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    log_density = _make_log_density(grouped, prior)
    mean = prior.mean()
    cov = prior.cov()
    chol = np.linalg.cholesky(cov)
    start = mean[None, :] + 0.5 * rng.standard_normal((config.chains, 2)) @ chol.T
    phi_draws, diag = sample(log_density, start, cov, config, rng)
    draws = np.column_stack([phi_draws[:, 0], np.exp(phi_draws[:, 1])])
    return PosteriorDraws(
        draws=draws,
        accept_rate=diag["accept_rate"],
        effective_draws=diag["effective_draws"],
    )


@dataclass(frozen=True)
class DoseSummaries:
    """Per-dose posterior summaries over a dose grid."""

    doses: tuple[float, ...]
    mean_tox: tuple[float, ...]
    #: P(p_d > theta) per threshold, one tuple per dose grid
    tail_above: dict[float, tuple[float, ...]]
    #: P(p_d <= theta) per threshold
    tail_below: dict[float, tuple[float, ...]]

    def as_dict(self) -> dict:
        return {
            "doses": list(self.doses),
            "mean_tox": list(self.mean_tox),
            "tail_above": {repr(k): list(v) for k, v in self.tail_above.items()},
            "tail_below": {repr(k): list(v) for k, v in self.tail_below.items()},
        }


def dose_summaries(
    draws: PosteriorDraws,
    grid: DoseGrid,
    thresholds: Iterable[float] = (),
) -> DoseSummaries:
    """Posterior mean toxicity and tail probabilities at every grid dose."""
    probs = tox_prob(
        np.asarray(grid.doses)[None, :], draws.beta0[:, None], draws.beta1[:, None]
    )
    means = tuple(float(m) for m in probs.mean(axis=0))
    above: dict[float, tuple[float, ...]] = {}
    below: dict[float, tuple[float, ...]] = {}
    for theta in thresholds:
        exceed = probs > theta
        above[float(theta)] = tuple(float(p) for p in exceed.mean(axis=0))
        below[float(theta)] = tuple(float(p) for p in (~exceed).mean(axis=0))
    return DoseSummaries(
        doses=tuple(grid.doses), mean_tox=means, tail_above=above, tail_below=below
    )


def tox_quantiles(
    draws: PosteriorDraws, grid: DoseGrid, qs: Sequence[float] = (0.025, 0.5, 0.975)
) -> dict[float, tuple[float, ...]]:
    """Per-dose posterior quantiles of the toxicity probability."""
    probs = tox_prob(
        np.asarray(grid.doses)[None, :], draws.beta0[:, None], draws.beta1[:, None]
    )
    quants = np.quantile(probs, qs, axis=0)
    return {float(q): tuple(float(x) for x in quants[i]) for i, q in enumerate(qs)}


def mtd_draws(draws: PosteriorDraws, tau: float) -> np.ndarray:
    """Per-draw dose solving F(dose, beta) = tau; unclamped, may leave the grid."""
    check_open_probability(tau, "tau")
    return (logit(tau) - draws.beta0) / draws.beta1


def cv_mtd(values: np.ndarray) -> float:
    """Robust coefficient of variation: 1.4826 * MAD / median.

    Negative when the median is negative (callers read that as "not yet
    precise"); raises `UndefinedCVError` on a zero median.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cv_mtd needs at least one value")
    med = float(np.median(values))
    if med == 0.0:
        raise UndefinedCVError("median of the MTD draws is zero")
    mad = float(np.median(np.abs(values - med)))
    return 1.4826 * mad / med


class DoseToxicityModel:
    """Estimator-style wrapper around the Bayesian dose-toxicity posterior.

    Follows the fit/predict idiom: `fit` consumes observations and returns
    self, after which `draws_` and the prediction helpers are available.
    """

    def __init__(
        self,
        prior: PriorHyper = VAGUE_PRIOR,
        sampler: SamplerConfig = SamplerConfig(),
        seed: int = 0,
    ):
        self.prior = prior
        self.sampler = sampler
        self.seed = seed

    def get_params(self, deep: bool = True) -> dict:
        return {"prior": self.prior, "sampler": self.sampler, "seed": self.seed}

    def set_params(self, **params) -> "DoseToxicityModel":
        for key, value in params.items():
            if key not in ("prior", "sampler", "seed"):
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def fit(
        self, observations: Sequence[Observation], seed: int | None = None
    ) -> "DoseToxicityModel":
        self.draws_ = fit(
            observations,
            prior=self.prior,
            config=self.sampler,
            seed=self.seed if seed is None else seed,
        )
        self.n_observations_ = len(list(observations))
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "draws_"):
            raise RuntimeError("model is not fitted; call fit() first")

    def predict_tox_prob(self, doses) -> np.ndarray:
        """Posterior mean toxicity probability at each dose."""
        self._check_fitted()
        doses = np.atleast_1d(np.asarray(doses, dtype=float))
        probs = tox_prob(
            doses[None, :], self.draws_.beta0[:, None], self.draws_.beta1[:, None]
        )
        return probs.mean(axis=0)

    def tail_prob(self, doses, threshold: float, above: bool = True) -> np.ndarray:
        """Posterior probability that toxicity exceeds (or not) `threshold`."""
        self._check_fitted()
        doses = np.atleast_1d(np.asarray(doses, dtype=float))
        probs = tox_prob(
            doses[None, :], self.draws_.beta0[:, None], self.draws_.beta1[:, None]
        )
        exceed = probs > threshold
        return exceed.mean(axis=0) if above else (~exceed).mean(axis=0)

    def mtd_samples(self, tau: float) -> np.ndarray:
        self._check_fitted()
        return mtd_draws(self.draws_, tau)

    def cv_mtd(self, tau: float) -> float:
        return cv_mtd(self.mtd_samples(tau))
