"""Bogoliubov dispersion: symbol, phase profile, propagator, regularizing
multiplier, admissible-pair algebra, and Strichartz-ratio probes.

The dispersion relation is

    omega(xi) = (1/eps) * sqrt(|xi|^2 + eps^2 kappa^2 |xi|^4),

wave-like at low frequency and Schrodinger-like at high frequency.  The
semigroup e^{it H} it generates is realized as a unitary Fourier multiplier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .spectral import (
    ScalarField,
    apply_multiplier,
    besov_norm,
    mixed_norm,
)

__all__ = [
    "DispersionParams",
    "PhaseProfile",
    "omega",
    "hessian_det",
    "HBoundReport",
    "h_bound_check",
    "propagate",
    "u_eps_power",
    "AdmissiblePair",
    "is_admissible",
    "admissible_dual",
    "StrichartzReport",
    "strichartz_ratio_sweep",
    "duhamel_ratio_sweep",
]


@dataclass(frozen=True)
class DispersionParams:
    """Scaled Mach number eps and capillarity kappa."""

    eps: float
    kappa: float

    def __post_init__(self):
        if self.eps <= 0 or self.kappa <= 0:
            raise ValueError("eps and kappa must be positive")


class PhaseProfile:
    """Radial phase phi(r) = (1/eps) * r * sqrt(1 + (eps*kappa)^2 r^2) with
    its first two derivatives in closed form."""

    def __init__(self, params):
        self.params = params

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        a2 = (self.params.eps * self.params.kappa) ** 2
        return r / self.params.eps * np.sqrt(1.0 + a2 * r**2)

    def dphi(self, r):
        r = np.asarray(r, dtype=float)
        a2 = (self.params.eps * self.params.kappa) ** 2
        return (1.0 + 2.0 * a2 * r**2) / (self.params.eps * np.sqrt(1.0 + a2 * r**2))

    def d2phi(self, r):
        r = np.asarray(r, dtype=float)
        a2 = (self.params.eps * self.params.kappa) ** 2
        return a2 * r * (3.0 + 2.0 * a2 * r**2) / (
            self.params.eps * (1.0 + a2 * r**2) ** 1.5
        )

    def __call__(self, r):
        return self.phi(r), self.dphi(r), self.d2phi(r)


def omega(xi_norm, params):
    """Dispersion relation (1/eps) sqrt(|xi|^2 + eps^2 kappa^2 |xi|^4)."""
    xi_norm = np.asarray(xi_norm, dtype=float)
    if np.any(xi_norm < 0):
        raise ValueError("xi_norm must be nonnegative")
    e, k = params.eps, params.kappa
    return np.sqrt(xi_norm**2 + (e * k) ** 2 * xi_norm**4) / e


def hessian_det(r, params, d):
    """det Hess of the radial phase: h(r) = (phi'(r)/r)^{d-1} * phi''(r)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("hessian_det requires r > 0 (removable singularity at 0)")
    prof = PhaseProfile(params)
    return (prof.dphi(r) / r) ** (d - 1) * prof.d2phi(r)


@dataclass
class HBoundReport:
    """Empirical constant in the h-function bound and its grid stability."""

    max_ratio: float
    witness: float
    refined_max_ratio: float
    stable: bool
    hinv_min: float
    hinv_max: float


def h_bound_check(lambda_grid, kappa, d):
    """Ratio of h(lambda)^{-1/2} to its claimed envelope
    kappa^{-d/2} * (kappa*lambda / sqrt(1+(kappa*lambda)^2))^{(d-2)/2},
    evaluated for the unscaled phase (eps = 1).

    Reports the max ratio (the empirical constant), its witness, and whether
    the max is stable under a 2x grid refinement (< 5% change).
    """
    lam = np.sort(np.asarray(lambda_grid, dtype=float))
    if lam.size == 0:
        raise ValueError("empty lambda grid")
    if d < 2:
        raise ValueError("h-bound is stated for d >= 2")
    params = DispersionParams(1.0, kappa)

    def ratios(values):
        hinv = hessian_det(values, params, d) ** -0.5
        envelope = kappa ** (-d / 2.0) * (
            kappa * values / np.sqrt(1.0 + (kappa * values) ** 2)
        ) ** ((d - 2) / 2.0)
        return hinv, hinv / envelope

    hinv, ratio = ratios(lam)
    idx = int(np.argmax(ratio))
    fine = np.geomspace(lam[0], lam[-1], 2 * lam.size)
    _, ratio_fine = ratios(fine)
    max_ratio = float(ratio[idx])
    refined = float(np.max(ratio_fine))
    stable = bool(np.isfinite(max_ratio)) and abs(refined - max_ratio) < 0.05 * max_ratio
    return HBoundReport(
        max_ratio=max_ratio,
        witness=float(lam[idx]),
        refined_max_ratio=refined,
        stable=stable,
        hinv_min=float(np.min(hinv)),
        hinv_max=float(np.max(hinv)),
    )


# ---------------------------------------------------------------------------
# propagator and regularizing multiplier
# ---------------------------------------------------------------------------

def propagate(f, t, params):
    """Apply e^{it H}: spectrum is multiplied by e^{it omega(|xi|)}."""

    def sym(k):
        kn = np.sqrt(np.sum(k**2, axis=0))
        return np.exp(1j * t * omega(kn, params))

    return apply_multiplier(f, sym)


def u_eps_power(f, alpha, params):
    """Regularizing multiplier m(eps*kappa*|xi|)^alpha with m(s)=s/sqrt(1+s^2).

    kappa = 1 gives the literal operator sqrt(-eps^2 Delta)/sqrt(1-eps^2 Delta);
    the kappa-dependence follows the multiplier as written with capillarity.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0:
        return f

    def sym(k):
        s = params.eps * params.kappa * np.sqrt(np.sum(k**2, axis=0))
        return (s / np.sqrt(1.0 + s**2)) ** alpha

    return apply_multiplier(f, sym)


# ---------------------------------------------------------------------------
# admissible pairs
# ---------------------------------------------------------------------------

def _reciprocal(x):
    if x == math.inf:
        return Fraction(0) if isinstance(x, (int, Fraction)) else 0.0
    if isinstance(x, (int, Fraction)):
        return Fraction(1, 1) / Fraction(x)
    return 1.0 / x


def is_admissible(p, q, d):
    """True iff 2/p + d/q = d/2 with p, q in [2, inf] and (p,q,d) != (2,inf,2).

    Exact for int/Fraction exponents; floats are accepted with 1e-12 slack.
    """
    for expo in (p, q):
        if expo != math.inf and expo < 2:
            return False
    exact = all(isinstance(e, (int, Fraction)) or e == math.inf for e in (p, q))
    if exact:
        gap = 2 * _as_fraction_reciprocal(p) + d * _as_fraction_reciprocal(q) - Fraction(d, 2)
        on_line = gap == 0
    else:
        gap = 2.0 * _reciprocal(float(p)) + d * _reciprocal(float(q)) - d / 2.0
        on_line = abs(gap) <= 1e-12
    if not on_line:
        return False
    return not (p == 2 and q == math.inf and d == 2)


def _as_fraction_reciprocal(x):
    if x == math.inf:
        return Fraction(0)
    return Fraction(1, 1) / Fraction(x)


@dataclass(frozen=True)
class AdmissiblePair:
    """Schrodinger-admissible exponent pair for dimension d."""

    p: float
    q: float
    d: int

    def __post_init__(self):
        if not is_admissible(self.p, self.q, self.d):
            raise ValueError(f"({self.p}, {self.q}) is not admissible in d={self.d}")


def admissible_dual(pair):
    """Holder conjugates (p', q') of an admissible pair."""

    def conj(x):
        if x == math.inf:
            return 1.0
        if x == 1:
            return math.inf
        if isinstance(x, (int, Fraction)):
            fx = Fraction(x)
            return fx / (fx - 1)
        return x / (x - 1.0)

    return conj(pair.p), conj(pair.q)


# ---------------------------------------------------------------------------
# Strichartz-ratio probes
# ---------------------------------------------------------------------------

@dataclass
class StrichartzReport:
    """Measured mixed-norm to data-norm ratios across an eps sweep."""

    pair: AdmissiblePair
    alpha: float
    eps_values: np.ndarray
    lhs_values: np.ndarray
    rhs_values: np.ndarray
    ratios: np.ndarray

    @property
    def max_ratio(self):
        return float(np.max(self.ratios))

    @property
    def nonincreasing_trend(self):
        """True when the fitted trend of ratio vs eps does not grow as eps
        decreases (log-log slope >= -0.05, tolerating measurement wiggle)."""
        slope = np.polyfit(np.log(self.eps_values), np.log(self.ratios), 1)[0]
        return bool(slope >= -0.05)


def strichartz_ratio_sweep(f, kappa, eps_values, pair, alpha, times):
    """Measure ||e^{itH} f||_{L^p_t B^0_{q,2}} / (eps^alpha ||f||_{B^alpha_{2,2}})
    across an eps sweep; the datum f is fixed across the sweep."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    eps_values = np.asarray(sorted(eps_values, reverse=True), dtype=float)
    rhs = besov_norm(f, alpha, 2, 2)
    lhs = np.empty_like(eps_values)
    times = np.asarray(times, dtype=float)
    for i, eps in enumerate(eps_values):
        params = DispersionParams(eps, kappa)
        norms = np.array(
            [besov_norm(propagate(f, t, params), 0.0, pair.q, 2) for t in times]
        )
        lhs[i] = mixed_norm(times, norms, pair.p, None)
    ratios = lhs / (eps_values**alpha * rhs)
    return StrichartzReport(pair, alpha, eps_values, lhs, np.full_like(lhs, rhs), ratios)


def duhamel_ratio_sweep(source, kappa, eps_values, pair, source_pair, alpha, times):
    """Inhomogeneous probe: retarded integral int_{s<t} e^{i(t-s)H} F ds for a
    time-independent source F, measured in L^p_t B^0_{q,2} against
    eps^alpha ||F||_{L^{p1'}_t B^alpha_{q1',2}}.

    The integral is accumulated with an exponential trapezoidal rule, exact
    for the propagator and second order in the source.
    """
    eps_values = np.asarray(sorted(eps_values, reverse=True), dtype=float)
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0:
        raise ValueError("Duhamel probe expects times starting at 0")
    dt = times[1] - times[0]
    grid = source.grid
    p1_conj, q1_conj = admissible_dual(source_pair)
    rhs_space = besov_norm(source, alpha, q1_conj, 2)
    horizon = times[-1]
    rhs_time = horizon ** (1.0 / p1_conj) if p1_conj != math.inf else 1.0
    rhs = rhs_time * rhs_space

    lhs = np.empty_like(eps_values)
    src_hat = source.spectrum()
    for i, eps in enumerate(eps_values):
        params = DispersionParams(eps, kappa)
        phase = np.exp(1j * dt * omega(grid.kmag, params))
        acc = np.zeros_like(src_hat)
        norms = [0.0]
        for _ in times[1:]:
            acc = phase * (acc + 0.5 * dt * src_hat) + 0.5 * dt * src_hat
            field = ScalarField(grid, grid.ifft(acc))
            norms.append(besov_norm(field, 0.0, pair.q, 2))
        lhs[i] = mixed_norm(times, np.asarray(norms), pair.p, None)
    ratios = lhs / (eps_values**alpha * rhs)
    return StrichartzReport(pair, alpha, eps_values, lhs, np.full_like(lhs, rhs), ratios)
