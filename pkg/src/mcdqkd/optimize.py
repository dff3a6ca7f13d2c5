"""Multi-start derivative-free maximization of the finite-key rate.

Search coordinates are unconstrained reals mapped onto the feasible set:

* ``x[0]``            -> ``p_X`` through a logistic map,
* ``x[1:k]``          -> intensity gaps: softmax weights (with a zero slack logit)
                         share the free budget ``mu_max - mu_min - floors``,
* ``x[k:2k-1]``       -> ``p_mu`` logits, the last logit pinned to zero.

Starting points come from a scrambled Sobol design; the best ``restarts`` of
them are polished with Nelder-Mead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from mcdqkd.channel import ChannelParams, observe
from mcdqkd.decoy import MAX_INTENSITIES, IntensityProfile
from mcdqkd.keyrate import FixedPointError, KeyRateReport, solve_security_fixed_point

log = logging.getLogger(__name__)

RATE_SCALE = 1e5
_LOGIT_CLIP = 35.0
# sampling box for the Sobol design, in search coordinates
_BOX_P_X = (-1.0, 4.0)
_BOX_GAP = (-4.0, 2.0)
_BOX_P_MU = (-4.0, 3.0)


@dataclass(frozen=True)
class OptimizationConfig:
    """Search domain and budget.

    ``spacing_min`` separates consecutive non-vacuum intensities
    ``mu_1 .. mu_{k-1}``; the gap from ``mu_{k-1}`` down to ``mu_k = mu_min`` only
    has to exceed ``vacuum_gap_min``.
    """

    k: int
    s_x: float
    mu_min: float = 1e-6
    spacing_min: float = 0.1
    vacuum_gap_min: float = 1e-3
    mu_max: float = 1.0
    restarts: int = 32
    screen: int = 1024
    seed: int = 0
    tolerance: float = 1e-9
    max_evals: int = 400_000

    def __post_init__(self) -> None:
        if not 3 <= self.k <= MAX_INTENSITIES:
            raise ValueError(f"k must be in 3..{MAX_INTENSITIES}, got {self.k}")
        if self.s_x < 1:
            raise ValueError(f"s_x must be at least 1, got {self.s_x}")
        if not 0.0 <= self.mu_min < self.mu_max <= 1.0:
            raise ValueError("need 0 <= mu_min < mu_max <= 1")
        if self.spacing_min < 0.0 or self.vacuum_gap_min <= 0.0:
            raise ValueError("spacing_min must be >= 0 and vacuum_gap_min > 0")
        if self.free_budget <= 0.0:
            raise ValueError("feasible intensity region is empty")
        if self.restarts < 1 or self.screen < self.restarts:
            raise ValueError("need 1 <= restarts <= screen")

    @property
    def dim(self) -> int:
        return 2 * self.k - 1

    @property
    def free_budget(self) -> float:
        return self.mu_max - self.mu_min - self.vacuum_gap_min - (self.k - 2) * self.spacing_min


@dataclass(frozen=True)
class OptimizationResult:
    best_p_X: float
    best_mu: tuple[float, ...]
    best_p_mu: tuple[float, ...]
    best_report: KeyRateReport
    evals: int
    converged: bool

    @property
    def R(self) -> float:
        return self.best_report.R


def _clip(v: float) -> float:
    return min(max(float(v), -_LOGIT_CLIP), _LOGIT_CLIP)


def _softmax_with_slack(logits) -> list[float]:
    # plain floats: the vectors are tiny and this runs once per objective evaluation
    z = [_clip(v) for v in logits] + [0.0]
    top = max(z)
    w = [math.exp(v - top) for v in z]
    total = math.fsum(w)
    return [v / total for v in w]


def decode(x, config: OptimizationConfig) -> tuple[float, tuple[float, ...], tuple[float, ...]]:
    """Map search coordinates to ``(p_X, mu, p_mu)``."""
    k = config.k
    p_x = 1.0 / (1.0 + math.exp(-_clip(x[0])))

    shares = [w * config.free_budget for w in _softmax_with_slack(x[1:k])[:-1]]
    floors = [config.vacuum_gap_min] + [config.spacing_min] * (k - 2)
    mu = [config.mu_min]
    for floor, share in zip(floors, shares):
        mu.append(mu[-1] + floor + share)
    mu = [min(m, config.mu_max) for m in reversed(mu)]
    return p_x, tuple(mu), tuple(_softmax_with_slack(x[k:]))


class _Objective:
    def __init__(self, channel: ChannelParams, config: OptimizationConfig, kappa: float, eps_cor: float):
        self.channel = channel
        self.config = config
        self.kappa = kappa
        self.eps_cor = eps_cor
        self.evals = 0

    def report(self, x) -> tuple[float, tuple, tuple, KeyRateReport | None]:
        p_x, mu, p_mu = decode(x, self.config)
        self.evals += 1
        try:
            profile = IntensityProfile(mu, p_mu)
            observed = observe(self.channel, profile)
            rep = solve_security_fixed_point(
                profile, observed, p_x, self.config.s_x, self.kappa, self.eps_cor
            )
        except (ValueError, FixedPointError, ZeroDivisionError, OverflowError):
            return p_x, mu, p_mu, None
        return p_x, mu, p_mu, rep

    def score(self, x) -> float:
        """Rate times ``RATE_SCALE``; zero-rate points score their negative raw
        rate, undefined points score ``-inf``."""
        rep = self.report(x)[3]
        return _score(rep)

    def __call__(self, x) -> float:
        return -self.score(x)


def _score(rep: KeyRateReport | None) -> float:
    if rep is None:
        return -math.inf
    if rep.R > 0.0:
        return rep.R * RATE_SCALE
    if math.isfinite(rep.raw_R):
        return rep.raw_R * RATE_SCALE
    return -math.inf


def _polish(objective: _Objective, x0: np.ndarray, config: OptimizationConfig, budget: int):
    """Nelder-Mead with simplex restarts until the improvement falls below tolerance."""
    x = np.asarray(x0, dtype=float)
    f = objective(x)
    converged = False
    while budget > 0 and not converged:
        res = minimize(
            objective,
            x,
            method="Nelder-Mead",
            options={
                "maxfev": min(budget, 200 * config.dim),
                "xatol": 1e-9,
                "fatol": config.tolerance,
                "adaptive": True,
            },
        )
        budget -= res.nfev
        improved = f - res.fun
        if res.fun < f:
            x, f = res.x, res.fun
        converged = not improved > config.tolerance * max(1.0, abs(f))
    return x, f, converged


def optimize(
    channel: ChannelParams,
    config: OptimizationConfig,
    kappa: float = 1e-15,
    eps_cor: float = 1e-15,
) -> OptimizationResult:
    objective = _Objective(channel, config, kappa, eps_cor)
    lo = np.array([_BOX_P_X[0]] + [_BOX_GAP[0]] * (config.k - 1) + [_BOX_P_MU[0]] * (config.k - 1))
    hi = np.array([_BOX_P_X[1]] + [_BOX_GAP[1]] * (config.k - 1) + [_BOX_P_MU[1]] * (config.k - 1))
    sobol = qmc.Sobol(config.dim, scramble=True, seed=config.seed)
    design = qmc.scale(sobol.random(config.screen), lo, hi)

    values = np.array([objective(x) for x in design])
    finite = np.flatnonzero(np.isfinite(values))
    if finite.size == 0:
        log.warning("no feasible start among %d screened points (k=%d, s_x=%g)", config.screen, config.k, config.s_x)
        p_x, mu, p_mu, rep = objective.report(design[0])
        if rep is None:
            rep = _empty_report(config.k)
        return OptimizationResult(p_x, mu, p_mu, _as_zero(rep), objective.evals, converged=False)

    order = finite[np.argsort(values[finite], kind="stable")][: config.restarts]
    per_start = max(1, (config.max_evals - objective.evals) // len(order))

    candidates = []
    for i in order:
        x, f, conv = _polish(objective, design[i], config, per_start)
        p_x, mu, p_mu = decode(x, config)
        candidates.append((f, (p_x, *mu, *p_mu), x, conv))

    # best rate first; ties broken by lexicographic parameter order
    f_best, _, x_best, conv_best = min(candidates, key=lambda c: (c[0], c[1]))
    p_x, mu, p_mu, rep = objective.report(x_best)
    log.info("k=%d s_x=%g R=%.6g evals=%d", config.k, config.s_x, rep.R if rep else 0.0, objective.evals)
    if rep is None or not math.isfinite(f_best):
        rep = _as_zero(rep or _empty_report(config.k))
        return OptimizationResult(p_x, mu, p_mu, rep, objective.evals, converged=False)
    return OptimizationResult(p_x, mu, p_mu, rep, objective.evals, converged=conv_best)


def _as_zero(rep: KeyRateReport) -> KeyRateReport:
    return replace(rep, R=0.0, l_final=0.0)


def _empty_report(k: int) -> KeyRateReport:
    return KeyRateReport(
        R=0.0,
        raw_R=math.nan,
        l_final=0.0,
        eps_sec=math.nan,
        e_p=math.nan,
        e_Z1=math.nan,
        lambda_EC=math.nan,
        b=(0.0,) * k,
        deviation_X=math.nan,
        feasible=False,
        vacuous_gamma=False,
    )
