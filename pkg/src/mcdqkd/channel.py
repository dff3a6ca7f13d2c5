"""Fiber channel model and a seeded finite-sample generator.

The closed forms

    Q(mu)   = (1 + p_ap) (2 p_dc + eta_sys mu)
    Q E(mu) = (1 + p_ap) p_dc + (e_mis eta_ch + p_ap eta_sys / 2) mu

are treated as exact definitions of the simulated channel for ``0 <= mu <= 1``.
The model has no basis dependence, so both bases share one evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from mcdqkd.decoy import IntensityProfile


@dataclass(frozen=True)
class ChannelParams:
    p_ap: float
    p_dc: float
    e_mis: float
    eta_ch: float
    eta_sys: float

    def __post_init__(self) -> None:
        for name in ("p_ap", "p_dc", "e_mis", "eta_ch", "eta_sys"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


# 100 km dedicated fiber link used for the published key-rate table.
REFERENCE_CHANNEL = ChannelParams(p_ap=4e-2, p_dc=6e-7, e_mis=5e-3, eta_ch=1e-2, eta_sys=1e-3)


def _check_mu(mu: float) -> None:
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"channel model is only defined for 0 <= mu <= 1, got {mu}")


def gain(params: ChannelParams, mu: float) -> float:
    _check_mu(mu)
    return (1.0 + params.p_ap) * (2.0 * params.p_dc + params.eta_sys * mu)


def error_gain(params: ChannelParams, mu: float) -> float:
    """Product ``Q E`` of gain and error rate, not the error rate itself."""
    _check_mu(mu)
    return (1.0 + params.p_ap) * params.p_dc + (
        params.e_mis * params.eta_ch + params.p_ap * params.eta_sys / 2.0
    ) * mu


@dataclass(frozen=True)
class ObservedStats:
    """Per-intensity gains and error rates in both bases.

    ``e_x``/``e_z`` are error *rates*; use :meth:`error_gain_x` and
    :meth:`error_gain_z` for the products ``Q E``.
    """

    p_mu: tuple[float, ...]
    q_x: tuple[float, ...]
    e_x: tuple[float, ...]
    q_z: tuple[float, ...]
    e_z: tuple[float, ...]

    def __post_init__(self) -> None:
        k = len(self.p_mu)
        for name in ("q_x", "e_x", "q_z", "e_z"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != k:
                raise ValueError(f"{name} has length {len(values)}, expected {k}")
            object.__setattr__(self, name, values)
        object.__setattr__(self, "p_mu", tuple(float(p) for p in self.p_mu))
        for q in self.q_x + self.q_z:
            if not 0.0 < q <= 1.0:
                raise ValueError(f"gains must be in (0, 1], got {q}")
        for e in self.e_x + self.e_z:
            if not 0.0 <= e <= 1.0:
                raise ValueError(f"error rates must be in [0, 1], got {e}")

    def _mean(self, values) -> float:
        return math.fsum(p * v for p, v in zip(self.p_mu, values))

    def error_gain_x(self) -> tuple[float, ...]:
        return tuple(q * e for q, e in zip(self.q_x, self.e_x))

    def error_gain_z(self) -> tuple[float, ...]:
        return tuple(q * e for q, e in zip(self.q_z, self.e_z))

    @cached_property
    def mean_q_x(self) -> float:
        return self._mean(self.q_x)

    @cached_property
    def mean_q_z(self) -> float:
        return self._mean(self.q_z)

    @cached_property
    def mean_qe_x(self) -> float:
        return self._mean(self.error_gain_x())

    @cached_property
    def mean_qe_z(self) -> float:
        return self._mean(self.error_gain_z())


def observe(params: ChannelParams, profile: IntensityProfile) -> ObservedStats:
    q = []
    e = []
    for mu in profile.mu:
        g = gain(params, mu)
        if g <= 0.0:
            raise ValueError(f"degenerate channel: zero gain at mu={mu}")
        q.append(g)
        e.append(error_gain(params, mu) / g)
    return ObservedStats(p_mu=profile.p_mu, q_x=tuple(q), e_x=tuple(e), q_z=tuple(q), e_z=tuple(e))


@dataclass(frozen=True)
class FiniteSample:
    """Counts from one simulated run of ``T`` pulses.

    ``pulses_*`` count pulses where Alice and Bob both picked the basis, per
    intensity; ``detections_*`` and ``errors_*`` are the corresponding clicks
    and bit errors.  ``s_x``, ``s_z`` and ``s_z_e`` are their totals.
    """

    pulses_x: tuple[int, ...]
    pulses_z: tuple[int, ...]
    detections_x: tuple[int, ...]
    detections_z: tuple[int, ...]
    errors_x: tuple[int, ...]
    errors_z: tuple[int, ...]
    degenerate: bool
    observed: ObservedStats | None = field(default=None)

    @property
    def s_x(self) -> int:
        return sum(self.detections_x)

    @property
    def s_z(self) -> int:
        return sum(self.detections_z)

    @property
    def s_z_e(self) -> int:
        return sum(self.errors_z)


def sample_finite(
    params: ChannelParams,
    profile: IntensityProfile,
    p_x: float,
    T: int,
    seed: int | np.random.Generator | None = None,
) -> FiniteSample:
    """Simulate ``T`` pulses through the channel.

    Every pulse independently picks an intensity, Alice's basis and Bob's
    basis; pulses with mismatched bases are discarded.  The per-pulse draws
    are aggregated with multinomial/binomial sampling, which has the same
    distribution as drawing pulse by pulse.  ``observed`` is ``None`` when some
    (basis, intensity) cell received no pulses or no detections.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0.0 < p_x < 1.0:
        raise ValueError(f"p_x must be in (0, 1), got {p_x}")
    rng = np.random.default_rng(seed)

    p_z = 1.0 - p_x
    k = profile.k
    probs = np.asarray(profile.p_mu)
    cell_probs = np.concatenate([probs * p_x * p_x, probs * p_z * p_z])
    cell_probs = np.append(cell_probs, max(0.0, 1.0 - cell_probs.sum()))
    cell_probs /= cell_probs.sum()
    cells = rng.multinomial(T, cell_probs)
    pulses_x, pulses_z = cells[:k], cells[k : 2 * k]

    q = np.array([gain(params, m) for m in profile.mu])
    e = np.array([error_gain(params, m) for m in profile.mu]) / q
    det_x = rng.binomial(pulses_x, q)
    det_z = rng.binomial(pulses_z, q)
    err_x = rng.binomial(det_x, e)
    err_z = rng.binomial(det_z, e)

    degenerate = bool(np.any(pulses_x == 0) or np.any(pulses_z == 0))
    observed = None
    if not degenerate and np.all(det_x > 0) and np.all(det_z > 0):
        observed = ObservedStats(
            p_mu=profile.p_mu,
            q_x=tuple(det_x / pulses_x),
            e_x=tuple(err_x / det_x),
            q_z=tuple(det_z / pulses_z),
            e_z=tuple(err_z / det_z),
        )

    def ints(a) -> tuple[int, ...]:
        return tuple(int(v) for v in a)

    return FiniteSample(
        pulses_x=ints(pulses_x),
        pulses_z=ints(pulses_z),
        detections_x=ints(det_x),
        detections_z=ints(det_z),
        errors_x=ints(err_x),
        errors_z=ints(err_z),
        degenerate=degenerate,
        observed=observed,
    )
