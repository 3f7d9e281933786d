"""Analytic layer: QBER inference, secret fraction, key-rate bounds.

Rate conventions. A full channel use is one photon from each party (two
qubit slots); a channel occupancy is a single half-link slot, so rates
per occupancy are half the rates per use. The direct-transmission and
repeaterless bounds are quoted per channel use and kept fixed when
memory-node rates are expressed in either normalization, which is how
the headline enhancement ratios are defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .session import QberCell, SessionReport

# Error-rate thresholds of the sifted key: security against individual
# attacks is lost at the secret-fraction zero crossing (1 - 1/sqrt(2))/2,
# unconditional security at 0.110.
QBER_INDIVIDUAL_LIMIT = (1.0 - 1.0 / math.sqrt(2.0)) / 2.0
QBER_UNCONDITIONAL_LIMIT = 0.110

_GRID_STEP = 1e-4


def binary_entropy(x):
    """Shannon entropy h(x) of a binary variable, in bits."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("binary_entropy requires arguments in [0, 1]")
    out = np.zeros_like(arr)
    interior = (arr > 0) & (arr < 1)
    xi = arr[interior]
    out[interior] = -xi * np.log2(xi) - (1.0 - xi) * np.log2(1.0 - xi)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def secret_fraction(qber):
    """Distillable fraction of the sifted key under individual attacks.

    r_s = max(0, h(1/2 + sqrt(E(1-E))) - h(E)). The eavesdropper term is
    the standard individual-attack information bound; the expression
    crosses zero at E = (1 - 1/sqrt(2))/2 ~= 0.1464.
    """
    arr = np.asarray(qber, dtype=float)
    if np.any(arr < 0) or np.any(arr > 0.5):
        raise ValueError("secret_fraction requires QBER in [0, 1/2]")
    eve = binary_entropy(0.5 + np.sqrt(arr * (1.0 - arr)))
    r = np.maximum(0.0, eve - binary_entropy(arr))
    return float(r) if np.isscalar(qber) or arr.ndim == 0 else r


@dataclass(frozen=True)
class QberPosterior:
    """Posterior density of the average QBER on a uniform prior over [0, 1/2]."""

    grid: np.ndarray
    density: np.ndarray  # normalized so sum(density) * step = 1
    ml: float
    interval_low: float
    interval_high: float

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def integrated_below(self, threshold: float) -> float:
        """Posterior probability that the QBER lies below `threshold`."""
        mass = float(self.density[self.grid <= threshold].sum() * self.step)
        return min(1.0, mass)

    def std(self) -> float:
        mean = float((self.grid * self.density).sum() * self.step)
        var = float(((self.grid - mean) ** 2 * self.density).sum() * self.step)
        return math.sqrt(max(var, 0.0))


def qber_posterior(
    cells: Iterable[Union[QberCell, tuple[int, int]]],
    grid_step: float = _GRID_STEP,
) -> QberPosterior:
    """Posterior of the average QBER from per-combination error counts.

    Each cell contributes a binomial likelihood for its observed errors;
    the posterior is the normalized product over all cells, evaluated on
    a uniform grid over [0, 1/2]. The credible interval integrates 34.1%
    of posterior mass on each side of the maximum-likelihood point,
    spilling to the other side at a domain edge.
    """
    pairs = []
    for cell in cells:
        if isinstance(cell, QberCell):
            k, n = cell.errors, cell.n
        else:
            k, n = cell
        if not 0 <= k <= n:
            raise ValueError(f"invalid cell counts: {k} errors of {n}")
        if n > 0:
            pairs.append((k, n))
    if not pairs:
        raise ValueError("qber_posterior requires at least one non-empty cell")

    grid = np.arange(0.0, 0.5 + grid_step / 2.0, grid_step)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_e = np.log(grid)
        log_1me = np.log1p(-grid)
    loglik = np.zeros_like(grid)
    for k, n in pairs:
        term = np.zeros_like(grid)
        if k > 0:
            term = term + k * log_e
        if n - k > 0:
            term = term + (n - k) * log_1me
        loglik += term
    loglik[np.isnan(loglik)] = -np.inf
    loglik -= loglik.max()
    density = np.exp(loglik)
    density /= density.sum() * grid_step

    ml_idx = int(np.argmax(density))
    low_idx, high_idx = _central_interval(density, ml_idx, grid_step, 0.341)
    return QberPosterior(
        grid=grid,
        density=density,
        ml=float(grid[ml_idx]),
        interval_low=float(grid[low_idx]),
        interval_high=float(grid[high_idx]),
    )


def _central_interval(
    density: np.ndarray, ml_idx: int, step: float, side_mass: float
) -> tuple[int, int]:
    cdf = np.cumsum(density) * step
    total = cdf[-1]
    at_ml = cdf[ml_idx]
    below = min(side_mass, at_ml)
    above = min(side_mass, total - at_ml)
    # Spill unreachable mass to the other side so the interval always
    # holds 2 * side_mass when possible.
    below += side_mass - above if above < side_mass else 0.0
    above += side_mass - min(side_mass, at_ml) if at_ml < side_mass else 0.0
    low_idx = int(np.searchsorted(cdf, max(at_ml - below, 0.0)))
    high_idx = int(np.searchsorted(cdf, min(at_ml + above, total - step * 1e-9)))
    return min(low_idx, ml_idx), max(min(high_idx, len(density) - 1), ml_idx)


def rate_direct_bound(p_ab: float, bias: float = 0.5) -> float:
    """Secret-key bound for direct-transmission MDI-QKD, per channel use.

    Unbiased bases give p/2; a basis bias q raises the sifting yield to
    (q^2 + (1-q)^2) p, e.g. 0.98 p at a 99:1 bias.
    """
    if not 0 <= p_ab <= 1:
        raise ValueError(f"p_ab must lie in [0, 1], got {p_ab}")
    if not 0 <= bias <= 1:
        raise ValueError(f"bias must lie in [0, 1], got {bias}")
    return (bias**2 + (1.0 - bias) ** 2) * p_ab


@dataclass(frozen=True)
class PlobBound:
    """Repeaterless secret-key capacity per channel use."""

    linear: float  # 1.44 * p, the small-p linearization
    exact: float   # -log2(1 - p)


def plob_bound(p_ab: float) -> PlobBound:
    if not 0 <= p_ab < 1:
        raise ValueError(f"p_ab must lie in [0, 1), got {p_ab}")
    return PlobBound(linear=1.44 * p_ab, exact=-math.log2(1.0 - p_ab))


def sifted_enhancement(eta: float, n_pi: int, n_sub: int) -> float:
    """Sifted-rate gain of the memory node over direct transmission.

    Per channel occupancy, relative to the p/2 direct bound:

        eta^2 (n_pi - 1)(n_pi - 2) n_sub / (2 n_pi)

    Independent of the photon load n_m for a fixed pulse layout.
    """
    if not 0 <= eta <= 1:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if n_pi < 3:
        raise ValueError(f"n_pi must be at least 3, got {n_pi}")
    if n_sub < 1:
        raise ValueError(f"n_sub must be at least 1, got {n_sub}")
    return eta**2 * (n_pi - 1) * (n_pi - 2) * n_sub / (2.0 * n_pi)


@dataclass(frozen=True)
class BoundsConfig:
    """Inputs of the analytic rate pipeline."""

    eta: float = 0.423
    n_pi: int = 62
    n_sub: int = 2
    p_ab: float = 2.6015e-8  # (0.02 / 124)^2, the benchmark operating point
    basis_bias: float = 0.5

    def __post_init__(self) -> None:
        if not 0 <= self.p_ab < 1:
            raise ValueError(f"p_ab must lie in [0, 1), got {self.p_ab}")
        if not 0 <= self.basis_bias <= 1:
            raise ValueError(f"basis_bias must lie in [0, 1], got {self.basis_bias}")


@dataclass(frozen=True)
class KeyRateReport:
    """Secret-key rates, bound ratios and confidence levels."""

    p_ab: float
    basis_bias: float
    qber_ml: float
    qber_low: float
    qber_high: float
    r_s: float
    sifted_per_use: float
    sifted_per_occupancy: float
    secure_per_use: float
    secure_per_occupancy: float
    ratio_rmax_per_use: float
    ratio_rmax_per_occupancy: float
    ratio_plob_per_use: float
    ratio_plob_per_occupancy: float
    confidence_vs_rmax: Optional[float]
    confidence_vs_plob: Optional[float]


def build_report(
    qber: Union[float, QberPosterior],
    bounds: BoundsConfig,
    session: Optional[SessionReport] = None,
) -> KeyRateReport:
    """Assemble the rate report in both normalizations.

    The bound ratios come from the analytic pipeline (enhancement formula
    times secret fraction), so they satisfy the identity
    ratio_rmax_per_occupancy = sifted_enhancement * r_s * sift_gain
    exactly. Absolute rates use the simulated sifted counts when a
    session report is supplied, otherwise the analytic sifted rate.
    Confidence levels against each bound integrate the QBER posterior
    over the region where the corresponding ratio exceeds one.
    """
    if isinstance(qber, QberPosterior):
        e_ml, e_low, e_high = qber.ml, qber.interval_low, qber.interval_high
        posterior: Optional[QberPosterior] = qber
    else:
        e_ml = e_low = e_high = float(qber)
        posterior = None

    r_s = secret_fraction(e_ml)
    enh_occ = sifted_enhancement(bounds.eta, bounds.n_pi, bounds.n_sub)
    sift_frac = bounds.basis_bias**2 + (1.0 - bounds.basis_bias) ** 2
    sift_gain = sift_frac / 0.5  # yield relative to unbiased sifting
    r_max = rate_direct_bound(bounds.p_ab, bounds.basis_bias)
    plob = plob_bound(bounds.p_ab).linear

    if session is not None and session.channel_occupancies > 0:
        sifted_occ = session.sifted_rate_per_occupancy()
    else:
        sifted_occ = enh_occ * (bounds.p_ab / 2.0) * sift_gain
    sifted_use = 2.0 * sifted_occ
    secure_occ = r_s * sifted_occ
    secure_use = r_s * sifted_use

    def ratio_rmax(rs: np.ndarray | float) -> np.ndarray | float:
        return 2.0 * enh_occ * (bounds.p_ab / 2.0) * sift_gain * rs / r_max

    def ratio_plob(rs: np.ndarray | float) -> np.ndarray | float:
        return 2.0 * enh_occ * (bounds.p_ab / 2.0) * sift_gain * rs / plob if plob > 0 else 0.0

    conf_rmax = conf_plob = None
    if posterior is not None:
        rs_grid = secret_fraction(posterior.grid)
        weight = posterior.density * posterior.step
        conf_rmax = float(weight[ratio_rmax(rs_grid) > 1.0].sum())
        conf_plob = float(weight[ratio_plob(rs_grid) > 1.0].sum())

    return KeyRateReport(
        p_ab=bounds.p_ab,
        basis_bias=bounds.basis_bias,
        qber_ml=e_ml,
        qber_low=e_low,
        qber_high=e_high,
        r_s=r_s,
        sifted_per_use=sifted_use,
        sifted_per_occupancy=sifted_occ,
        secure_per_use=secure_use,
        secure_per_occupancy=secure_occ,
        ratio_rmax_per_use=float(ratio_rmax(r_s)),
        ratio_rmax_per_occupancy=float(ratio_rmax(r_s)) / 2.0,
        ratio_plob_per_use=float(ratio_plob(r_s)),
        ratio_plob_per_occupancy=float(ratio_plob(r_s)) / 2.0,
        confidence_vs_rmax=conf_rmax,
        confidence_vs_plob=conf_plob,
    )
