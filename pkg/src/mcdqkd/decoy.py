"""Decoy-state linear-combination coefficients.

For a phase randomized Poissonian source the quantity ``exp(mu) * Q(mu)`` is a
power series in ``mu`` whose coefficients are ``Y_m / m!``.  Interpolating it
through a subset of the intensities gives linear combinations of the observed
gains that bound the vacuum yield ``Y_0``, the single photon yield ``Y_1`` and
the single photon error product ``Y_1 e_1``.

Index conventions (0-based in code, intensities sorted in decreasing order):

* ``a0`` and ``a2`` use the intensities ``k0 .. k`` (1-based), an even number
  of nodes.
* ``a1`` uses the intensities ``3 - k0 .. k``, an odd number of nodes.

with ``k0 = 1`` for even ``k`` and ``k0 = 2`` for odd ``k``.  Coefficients for
intensities outside a node set are stored as explicit zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

MAX_INTENSITIES = 10
PROBABILITY_SUM_TOL = 1e-12


@dataclass(frozen=True)
class IntensityProfile:
    """Photon intensities ``mu`` (strictly decreasing) and their usage probabilities."""

    mu: tuple[float, ...]
    p_mu: tuple[float, ...]

    def __post_init__(self) -> None:
        mu = tuple(float(m) for m in self.mu)
        p_mu = tuple(float(p) for p in self.p_mu)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "p_mu", p_mu)

        k = len(mu)
        if k < 2:
            raise ValueError(f"need at least 2 intensities, got {k}")
        if k > MAX_INTENSITIES:
            raise ValueError(f"at most {MAX_INTENSITIES} intensities are supported, got {k}")
        if len(p_mu) != k:
            raise ValueError("mu and p_mu must have the same length")
        if not (mu[0] <= 1.0 and mu[-1] >= 0.0):
            raise ValueError(f"intensities must lie in [0, 1], got {mu}")
        if any(a <= b for a, b in zip(mu, mu[1:])):
            raise ValueError(f"intensities must be strictly decreasing, got {mu}")
        if any(not p > 0.0 for p in p_mu):
            raise ValueError(f"usage probabilities must be positive, got {p_mu}")
        if abs(math.fsum(p_mu) - 1.0) > PROBABILITY_SUM_TOL:
            raise ValueError(f"usage probabilities must sum to 1, got {math.fsum(p_mu)!r}")

    @property
    def k(self) -> int:
        return len(self.mu)

    def mean(self, values) -> float:
        """Average ``<f(mu)>`` of per-intensity values weighted by ``p_mu``."""
        return math.fsum(p * v for p, v in zip(self.p_mu, values))

    @cached_property
    def vacuum_weight(self) -> float:
        """``<exp(-mu)>``, the fraction of pulses that carry no photon."""
        return self.mean([math.exp(-m) for m in self.mu])

    @cached_property
    def single_weight(self) -> float:
        """``<mu exp(-mu)>``, the fraction of single photon pulses."""
        return self.mean([m * math.exp(-m) for m in self.mu])


@dataclass(frozen=True)
class DecoyCoefficients:
    a0: tuple[float, ...]
    a1: tuple[float, ...]
    a2: tuple[float, ...]
    k0: int

    def widths(self, p_mu) -> tuple[float, float]:
        """``Width({a1/p})`` and ``Width({a2/p})``."""
        return (
            width([a / p for a, p in zip(self.a1, p_mu)]),
            width([a / p for a, p in zip(self.a2, p_mu)]),
        )


def elementary_symmetric(values, degree: int) -> float:
    """Elementary symmetric polynomial ``e_degree(values)``.

    ``e_0`` is 1 and negative degrees give 0, so that a degenerate node set
    yields an identically zero coefficient.
    """
    values = list(values)
    if degree > len(values):
        raise ValueError(f"degree {degree} exceeds number of values {len(values)}")
    if degree < 0:
        return 0.0
    e = [1.0] + [0.0] * degree
    for x in values:
        for j in range(degree, 0, -1):
            e[j] += e[j - 1] * x
    return e[degree]


def width(values) -> float:
    """``sup - inf`` of a finite set of reals."""
    values = list(values)
    if not values:
        raise ValueError("width of an empty set is undefined")
    return max(values) - min(values)


def parity_offset(k: int) -> int:
    return 1 if k % 2 == 0 else 2


def _ordered_product(factors) -> float:
    # multiply smallest magnitudes first so intermediate values stay near the result scale
    return math.prod(sorted(factors, key=abs))


def compute_coefficients(profile: IntensityProfile) -> DecoyCoefficients:
    mu = profile.mu
    k = len(mu)
    k0 = parity_offset(k)

    def node_set(first: int) -> list[int]:
        return list(range(first - 1, k))

    def denominators(nodes: list[int]) -> dict[int, float]:
        out = {}
        for n in nodes:
            den = _ordered_product(mu[n] - mu[j] for j in nodes if j != n)
            if den == 0.0:
                raise ValueError(f"duplicate intensities in {mu}")
            out[n] = den
        return out

    a0 = [0.0] * k
    a1 = [0.0] * k
    a2 = [0.0] * k

    even_nodes = node_set(k0)
    dens = denominators(even_nodes)
    for n in even_nodes:
        others = [mu[j] for j in even_nodes if j != n]
        scale = math.exp(mu[n]) / dens[n]
        a0[n] = -scale * _ordered_product(others)
        a2[n] = scale * elementary_symmetric(others, len(even_nodes) - 2)

    odd_nodes = node_set(3 - k0)
    dens = denominators(odd_nodes)
    for n in odd_nodes:
        others = [mu[j] for j in odd_nodes if j != n]
        a1[n] = -math.exp(mu[n]) * elementary_symmetric(others, len(odd_nodes) - 2) / dens[n]

    return DecoyCoefficients(a0=tuple(a0), a1=tuple(a1), a2=tuple(a2), k0=k0)
