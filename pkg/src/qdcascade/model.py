"""Closed-form multiphoton model for a cascaded pair source.

Relates the relative multiphoton probability ``p_m`` (the chance that a
successful cascade is followed by re-excitation and a second cascade in the
same pulse) to measurable quantities:

* ``g2_from_pm``        Poisson-normalized g2(0) of one cascade line
* ``g2_sidepeak_from_pm``  the side-peak-normalized variant (biased low by
  blinking: g2_tilde = eta_blink * g2)
* ``k_from_pm``         fraction of detected pairs originating from a single
  cascade, which fixes the isotropic-noise admixture of the pair state
* ``k_naive_from_g2``   the literature shortcut 1 - k = (gX + gXX)/2 that
  ignores the efficiency factors
* ``k_approx_from_g2``  the corrected first-order relation including the
  preparation and blinking efficiencies

plus a damped-cosine model of the preparation fidelity versus pulse area and
a sweep evaluator that predicts g2, mixing and entanglement across a power
scan.  Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import polarization
from .errors import NoPhysicalSolutionError


@dataclass(frozen=True)
class EfficiencyFactors:
    """Blinking on-time fraction and preparation fidelity, both in (0, 1]."""

    eta_blink: float
    eta_prep: float

    def __post_init__(self):
        for name in ("eta_blink", "eta_prep"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")

    @property
    def product(self) -> float:
        return self.eta_blink * self.eta_prep


@dataclass(frozen=True)
class RabiCurveParams:
    """Damped-cosine preparation-fidelity curve parameters."""

    amplitude: float
    damping: float

    def __post_init__(self):
        if self.amplitude <= 0.0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        if self.damping < 0.0:
            raise ValueError(f"damping must be >= 0, got {self.damping}")


@dataclass(frozen=True)
class GenerationProbabilities:
    """Per-pulse probabilities of generating one or two pairs."""

    p1: float
    p2: float


def _check_pm(p_m: float) -> float:
    p_m = float(p_m)
    if not 0.0 <= p_m < 1.0:
        raise ValueError(f"p_m must be in [0, 1), got {p_m}")
    return p_m


def g2_from_pm(p_m: float, eff: EfficiencyFactors) -> float:
    """Poisson-normalized g2(0): 2 p_m / (eta_blink eta_prep (1 + p_m)^2)."""
    p_m = _check_pm(p_m)
    return 2.0 * p_m / (eff.product * (1.0 + p_m) ** 2)


def g2_sidepeak_from_pm(p_m: float, eta_prep: float) -> float:
    """Side-peak-normalized g2(0): 2 p_m / (eta_prep (1 + p_m)^2).

    Equals ``eta_blink * g2_from_pm(p_m, eff)`` by construction, because the
    side peaks sit a factor eta_blink above the uncorrelated level.
    """
    p_m = _check_pm(p_m)
    eta_prep = float(eta_prep)
    if eta_prep <= 0.0:
        raise ValueError(f"eta_prep must be > 0, got {eta_prep}")
    return 2.0 * p_m / (eta_prep * (1.0 + p_m) ** 2)


def pm_from_g2(g2: float, eff: EfficiencyFactors) -> float:
    """Invert ``g2_from_pm`` on its physical branch p_m in [0, 1).

    Solves g2 c (1 + p)^2 = 2 p with c = eta_blink eta_prep and returns the
    smaller root.  Evaluated as g2 c / (1 - g2 c + sqrt(1 - 2 g2 c)), which
    is free of the subtractive cancellation the textbook quadratic formula
    suffers at small g2 c.
    """
    g2 = float(g2)
    if g2 < 0.0:
        raise ValueError(f"g2 must be >= 0, got {g2}")
    gc = g2 * eff.product
    if 2.0 * gc >= 1.0:
        raise NoPhysicalSolutionError(
            f"g2 * eta_blink * eta_prep = {gc:.6g} >= 1/2: no solution with p_m < 1"
        )
    return gc / (1.0 - gc + math.sqrt(1.0 - 2.0 * gc))


def k_from_pm(p_m: float) -> float:
    """Single-cascade pair fraction: k = 1 - 2 p_m / (1 + 3 p_m)."""
    p_m = float(p_m)
    if not 0.0 <= p_m <= 1.0:
        raise ValueError(f"p_m must be in [0, 1], got {p_m}")
    return 1.0 - 2.0 * p_m / (1.0 + 3.0 * p_m)


def k_naive_from_g2(g_x: float, g_xx: float) -> float:
    """Literature shortcut: k = 1 - (gX + gXX)/2, no efficiency correction."""
    g_x, g_xx = float(g_x), float(g_xx)
    if g_x < 0.0 or g_xx < 0.0:
        raise ValueError("g2 values must be >= 0")
    mean = (g_x + g_xx) / 2.0
    if mean > 1.0:
        raise ValueError(f"mean g2 {mean:.6g} exceeds 1; k would be negative")
    return 1.0 - mean


def k_approx_from_g2(
    g_x: float,
    g_xx: float,
    eff: EfficiencyFactors,
    sidepeak_normalized: bool = False,
) -> float:
    """First-order mixing fraction from measured g2 values.

    ``1 - k = (gX + gXX)/2 * eta_prep * eta_blink`` for Poisson-normalized
    inputs.  With ``sidepeak_normalized=True`` the inputs are taken as
    side-peak-normalized g2_tilde values, which already carry the blinking
    factor, so only eta_prep is applied.
    """
    g_x, g_xx = float(g_x), float(g_xx)
    if g_x < 0.0 or g_xx < 0.0:
        raise ValueError("g2 values must be >= 0")
    scale = eff.eta_prep if sidepeak_normalized else eff.product
    one_minus_k = (g_x + g_xx) / 2.0 * scale
    if not 0.0 <= one_minus_k <= 1.0:
        raise ValueError(f"computed 1 - k = {one_minus_k:.6g} outside [0, 1]")
    return 1.0 - one_minus_k


def prep_fidelity_model(theta: float, params: RabiCurveParams) -> float:
    """Preparation fidelity vs pulse area: (A/2)(1 - exp(-g*theta) cos(theta)).

    Clamped to [0, 1].  ``theta`` is the pulse area in radians.
    """
    theta = float(theta)
    if theta < 0.0:
        raise ValueError(f"pulse area must be >= 0, got {theta}")
    v = 0.5 * params.amplitude * (1.0 - math.exp(-params.damping * theta) * math.cos(theta))
    return min(1.0, max(0.0, v))


def fit_rabi_anchors(eta_pi: float = 0.93, eta_2pi: float = 0.14) -> RabiCurveParams:
    """Solve the damped-cosine parameters hitting given values at pi and 2 pi.

    With x = exp(-damping*pi) the two anchor equations reduce to
    eta_pi (1 - x) = eta_2pi, which has the closed-form solution below.
    """
    if not 0.0 < eta_2pi < eta_pi <= 1.0:
        raise ValueError("anchors must satisfy 0 < eta_2pi < eta_pi <= 1")
    x = 1.0 - eta_2pi / eta_pi
    damping = -math.log(x) / math.pi
    amplitude = 2.0 * eta_pi / (1.0 + x)
    return RabiCurveParams(amplitude=amplitude, damping=damping)


#: default curve anchored at 0.93 (pi pulse) and 0.14 (2 pi pulse)
DEFAULT_RABI = fit_rabi_anchors(0.93, 0.14)


def p2_from_pm(p_m: float, p_pair: float) -> GenerationProbabilities:
    """Split a per-pulse pair probability into single/double-pair parts."""
    p_m = float(p_m)
    p_pair = float(p_pair)
    if not 0.0 <= p_m <= 1.0:
        raise ValueError(f"p_m must be in [0, 1], got {p_m}")
    if not 0.0 <= p_pair <= 1.0:
        raise ValueError(f"p_pair must be in [0, 1], got {p_pair}")
    return GenerationProbabilities(p1=(1.0 - p_m) * p_pair, p2=p_m * p_pair)


@dataclass(frozen=True)
class SweepPoint:
    """Model predictions at one pulse area."""

    theta: float
    eta_prep: float
    g2: float
    g2_sidepeak: float
    k: float
    concurrence: float
    fidelity: float
    concurrence_naive: float


def predict_entanglement_sweep(
    thetas,
    p_m: float,
    eta_blink: float,
    rabi: RabiCurveParams,
    rho0: np.ndarray,
    pm_per_point=None,
    naive_g2_override=None,
) -> list[SweepPoint]:
    """Evaluate the model chain over a pulse-area grid.

    Per grid point: eta_prep from the Rabi curve, g2 (both normalizations)
    from p_m, the single-cascade fraction k, and concurrence/fidelity of the
    isotropically mixed state.  The naive column applies the uncorrected
    k = 1 - g2 relation to the modeled g2 (or to ``naive_g2_override`` values
    where those are finite), exposing the spurious entanglement dip that the
    corrected model avoids.

    ``pm_per_point`` optionally overrides p_m per grid point.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 1 or thetas.size < 1:
        raise ValueError("theta grid must be a 1-d array with at least one point")
    rho0 = polarization.require_valid(rho0)

    if pm_per_point is not None:
        pm_arr = np.asarray(pm_per_point, dtype=float)
        if pm_arr.shape != thetas.shape:
            raise ValueError("pm_per_point must match the theta grid length")
    else:
        pm_arr = np.full(thetas.shape, float(p_m))

    if naive_g2_override is not None:
        ov = np.asarray(naive_g2_override, dtype=float)
        if ov.shape != thetas.shape:
            raise ValueError("naive_g2_override must match the theta grid length")
    else:
        ov = np.full(thetas.shape, np.nan)

    points = []
    for theta, pm_i, g2_ov in zip(thetas, pm_arr, ov):
        eta_p = prep_fidelity_model(theta, rabi)
        eff = EfficiencyFactors(eta_blink=eta_blink, eta_prep=eta_p)
        g2 = g2_from_pm(pm_i, eff)
        g2_tilde = g2_sidepeak_from_pm(pm_i, eta_p)
        k = k_from_pm(pm_i)
        mixed = polarization.werner_mix(rho0, k)
        g2_naive = g2_ov if np.isfinite(g2_ov) else g2
        k_naive = k_naive_from_g2(g2_naive, g2_naive)
        mixed_naive = polarization.werner_mix(rho0, k_naive)
        points.append(
            SweepPoint(
                theta=float(theta),
                eta_prep=eta_p,
                g2=g2,
                g2_sidepeak=g2_tilde,
                k=k,
                concurrence=polarization.concurrence(mixed),
                fidelity=polarization.fidelity_to_phi_plus(mixed),
                concurrence_naive=polarization.concurrence(mixed_naive),
            )
        )
    return points


SWEEP_CSV_HEADER = (
    "theta_rad,eta_prep,g2,g2_tilde,one_minus_k,concurrence,fidelity,concurrence_naive"
)


def sweep_to_csv(points: list[SweepPoint]) -> str:
    """Render sweep results as CSV with 9-significant-digit floats."""
    lines = [SWEEP_CSV_HEADER]
    for p in points:
        values = (
            p.theta,
            p.eta_prep,
            p.g2,
            p.g2_sidepeak,
            1.0 - p.k,
            p.concurrence,
            p.fidelity,
            p.concurrence_naive,
        )
        lines.append(",".join(format(v, ".9g") for v in values))
    return "\n".join(lines) + "\n"
