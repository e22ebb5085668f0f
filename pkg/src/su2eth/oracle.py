"""Closed-form infinite-temperature sector moments and diagonal-line slopes.

Everything here is an exact pencil-and-paper result for the (S, M=0) sector
of the chain, evaluated in plain double precision. It deliberately shares no
code with the diagonalization stack so the two can audit each other.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

__all__ = [
    "MomentSet",
    "LinearCoefficients",
    "moments",
    "linear_coefficients",
    "diagonal_prediction",
    "spin_sector_dimension",
]

_SQRT3 = math.sqrt(3.0)
_SQRT6 = math.sqrt(6.0)


@dataclass(frozen=True)
class MomentSet:
    """Infinite-temperature averages within one (S, M=0) sector.

    eps2/eps2z are the two-site correlators <S_i.S_j> and <S^z_i S^z_j>
    (i != j); eps4/eps4z the four-distinct-site analogues. E0, meanA, meanB
    are first moments of the Hamiltonian and the two bond observables;
    AH, BH, HH are the plain (not connected) joint second moments.
    """

    L: int
    S: int
    lam: float
    eps2: float
    eps2z: float
    eps4: float
    eps4z: float
    E0: float
    meanA: float
    meanB: float
    AH: float
    BH: float
    HH: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LinearCoefficients:
    """Slopes of the diagonal-element line versus E/L at the sector mean."""

    slopeA: float
    slopeB: float


def _validate(L: int, S: int) -> None:
    if L % 2 or L < 6:
        raise ValueError(f"L must be even and at least 6, got {L}; "
                         "the four-site correlators assume non-coincident index sets")
    if not 0 <= S <= L // 2:
        raise ValueError(f"S must satisfy 0 <= S <= L/2 = {L // 2}, got {S}")


def spin_sector_dimension(L: int, S: int) -> int:
    """Number of spin-S multiplets at M = 0: C(L, L/2-S) - C(L, L/2-S-1)."""
    _validate(L, S)
    half = L // 2
    lower = math.comb(L, half - S - 1) if S < half else 0
    return math.comb(L, half - S) - lower


def moments(L: int, S: int, lam: float) -> MomentSet:
    """All closed-form sector moments for coupling ratio lam.

    The four-site correlators follow from squaring the sharp operators
    S^2 and (S^z_tot)^2 and peeling off the coincident-index terms; joint
    moments then reduce to counting shared sites between bond pairs.
    """
    _validate(L, S)
    lam = float(lam)
    if not math.isfinite(lam):
        raise ValueError("coupling ratio must be finite")

    eps2 = (S * (S + 1) - 0.75 * L) / (L * (L - 1))
    eps2z = -1.0 / (4.0 * (L - 1))
    eps4 = (eps2 * eps2 * L * (L - 1) - eps2 * (L - 3) - 0.375) / ((L - 2) * (L - 3))
    eps4z = -(eps2 * (L - 2) / 4.0 + eps2z * (L - 1.5) + 0.125) / ((L - 2) * (L - 3))

    e0 = -(1.0 + lam) * L * eps2
    mean_a = -eps2 / _SQRT3
    mean_b = (3.0 * eps2z - eps2) / _SQRT6

    # second moments of the bond sums, per unit L: same-bond, one shared
    # site, and disjoint contributions
    x = 3.0 / 16.0 + (L - 3) * eps4
    y = eps2 + (L - 4) * eps4
    xz = 1.0 / 16.0 - (eps2 - eps2z) / 4.0 + eps2z / 2.0 + (L - 3) * eps4z
    yz = eps2z + (L - 4) * eps4z

    ah = (x + lam * y) / _SQRT3
    hh = ((1.0 + lam * lam) * x + 2.0 * lam * y) * L
    bh = -(3.0 / _SQRT6) * (xz + lam * yz) + ah / math.sqrt(2.0)

    return MomentSet(L=L, S=S, lam=lam, eps2=eps2, eps2z=eps2z, eps4=eps4,
                     eps4z=eps4z, E0=e0, meanA=mean_a, meanB=mean_b,
                     AH=ah, BH=bh, HH=hh)


def linear_coefficients(L: int, S: int, lam: float) -> LinearCoefficients:
    """Slopes L * <O H>_c / <H^2>_c of the diagonal line at the sector mean."""
    m = moments(L, S, lam)
    variance = m.HH - m.E0 * m.E0
    if variance <= 0.0:
        raise ValueError(f"degenerate energy variance {variance:.3e} at L={L}, S={S}")
    slope_a = L * (m.AH - m.meanA * m.E0) / variance
    slope_b = L * (m.BH - m.meanB * m.E0) / variance
    return LinearCoefficients(slopeA=slope_a, slopeB=slope_b)


def diagonal_prediction(which: str, L: int, S: int, lam: float, energy: float) -> float:
    """First-order prediction for the diagonal element of A or B at energy E."""
    m = moments(L, S, lam)
    coeffs = linear_coefficients(L, S, lam)
    if which == "A":
        return m.meanA + coeffs.slopeA * (energy - m.E0) / L
    if which == "B":
        return m.meanB + coeffs.slopeB * (energy - m.E0) / L
    raise ValueError(f"unknown observable {which!r}, expected 'A' or 'B'")
