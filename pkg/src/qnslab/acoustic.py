"""Acoustic-wave subsystem of the scaled dynamics.

Extracts the fluctuation pair (sigma, m) = ((rho-1)/eps, rho u) from a fluid
state, assembles the momentum source, symmetrizes to (sigma_tilde, m_tilde) =
((1 - eps^2 kappa^2 Delta)^{1/2} sigma, (-Delta)^{-1/2} div m), evolves the
symmetrized pair exactly under the Bogoliubov rotation, solves forced
(Duhamel) problems with an exponential integrator, and measures acoustic
decay across an eps sweep.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bogoliubov import DispersionParams
from .oscillatory import omega_mesh
from .qns import FluidParams, qns_rhs
from .spectral import (
    ScalarField,
    VectorField,
    besov_norm,
    helmholtz_P,
    helmholtz_Q,
    l2_norm,
    lq_norm,
    mixed_norm,
)

__all__ = [
    "AcousticState",
    "SymmetrizedState",
    "extract_acoustic",
    "source_F",
    "symmetrize",
    "desymmetrize",
    "linear_evolve",
    "linear_acoustic_flow",
    "duhamel_solve",
    "acoustic_series",
    "acoustic_decay_study",
    "linearization_residual",
    "linearization_order",
]


@dataclass(frozen=True)
class AcousticState:
    """Density fluctuation sigma = (rho - 1)/eps and momentum m = rho u."""

    sigma: ScalarField
    m: VectorField
    time: float = 0.0

    def __post_init__(self):
        if self.sigma.grid != self.m.grid:
            raise ValueError("fields must share a grid")


@dataclass(frozen=True)
class SymmetrizedState:
    """(sigma_tilde, m_tilde); both scalar, carried at a common time."""

    sigma_tilde: ScalarField
    m_tilde: ScalarField
    time: float = 0.0

    def __post_init__(self):
        if self.sigma_tilde.grid != self.m_tilde.grid:
            raise ValueError("fields must share a grid")

    def energy(self):
        return l2_norm(self.sigma_tilde) ** 2 + l2_norm(self.m_tilde) ** 2


def _dispersion(params):
    return DispersionParams(params.eps, params.kappa)


def extract_acoustic(fluid, params):
    """(sigma, m) from a fluid state; sigma = ((sqrt rho)^2 - 1)/eps."""
    grid = fluid.grid
    sigma = (fluid.sqrt_rho.values**2 - 1.0) / params.eps
    m = fluid.sqrt_rho.values * fluid.Lambda.values
    return AcousticState(ScalarField(grid, sigma), VectorField(grid, m), fluid.time)


def source_F(fluid, params, dealias=True):
    """Momentum source F = div(-rho u x u - 4 kappa^2 grad s x grad s
    + 2 nu rho Du - (gamma-1) pi I), assembled spectrally.

    rho Du is read through the tensor identity as sqrt(rho) S.
    """
    from .qns import internal_energy_density, viscous_tensor

    grid = fluid.grid
    d = grid.dim
    k = grid.k_mesh
    mask = grid.dealias_mask if dealias else 1.0
    s = fluid.sqrt_rho.values
    lam = fluid.Lambda.values
    grad_s = np.array(
        [grid.ifft(1j * k[ax] * grid.fft(s)).real for ax in range(d)]
    )
    S = viscous_tensor(fluid, params).S
    pi = internal_energy_density(s**2, params.gamma, params.eps)
    out = np.empty((d,) + grid.shape)
    pi_hat = grid.fft(pi)
    for j in range(d):
        acc = -(params.gamma - 1.0) * 1j * k[j] * pi_hat
        for i in range(d):
            flux = (
                -lam[i] * lam[j]
                - 4.0 * params.kappa**2 * grad_s[i] * grad_s[j]
                + 2.0 * params.nu * s * S[i, j]
            )
            acc = acc + 1j * k[i] * grid.fft(flux)
        out[j] = grid.ifft(acc * mask).real
    return VectorField(grid, out)


def _require_mean_zero(field, what):
    dc = abs(np.mean(field.values))
    scale = np.max(np.abs(field.values)) + 1e-300
    if dc > 1e-10 * scale:
        raise ValueError(f"{what} must be mean-zero (got mean {dc:.3e})")


def symmetrize(ac, params):
    """sigma_tilde = (1 - eps^2 kappa^2 Delta)^{1/2} sigma,
    m_tilde = (-Delta)^{-1/2} div m (zero mode mapped to zero)."""
    _require_mean_zero(ac.sigma, "sigma")
    grid = ac.sigma.grid
    ek = params.eps * params.kappa
    s_fac = np.sqrt(1.0 + ek**2 * grid.k2)
    sig_t = grid.ifft(s_fac * ac.sigma.spectrum())
    kmag = grid.kmag.copy()
    origin = (0,) * grid.dim
    kmag[origin] = 1.0
    m_hat = ac.m.spectrum()
    mt_hat = 1j * np.sum(grid.k_mesh * m_hat, axis=0) / kmag
    mt_hat[origin] = 0.0
    m_t = grid.ifft(mt_hat)
    return SymmetrizedState(
        ScalarField(grid, sig_t.real), ScalarField(grid, m_t.real), ac.time
    )


def desymmetrize(sym, params):
    """Invert the symmetrization; the momentum is recovered as its gradient
    (Q) part only, which is all the acoustic system carries."""
    grid = sym.sigma_tilde.grid
    ek = params.eps * params.kappa
    s_fac = np.sqrt(1.0 + ek**2 * grid.k2)
    sigma = grid.ifft(sym.sigma_tilde.spectrum() / s_fac)
    kmag = grid.kmag.copy()
    origin = (0,) * grid.dim
    kmag[origin] = 1.0
    mt_hat = sym.m_tilde.spectrum()
    qm = np.empty((grid.dim,) + grid.shape)
    for ax in range(grid.dim):
        comp = -1j * grid.k_mesh[ax] / kmag * mt_hat
        comp[origin] = 0.0
        qm[ax] = grid.ifft(comp).real
    return AcousticState(ScalarField(grid, sigma.real), VectorField(grid, qm), sym.time)


def _rotation(grid, params, t):
    w = omega_mesh(grid, _dispersion(params))
    return np.cos(w * t), np.sin(w * t)


def linear_evolve(sym, t, params):
    """Exact evolution of the symmetrized system over time t:
    d/dt sigma_tilde = -H m_tilde, d/dt m_tilde = +H sigma_tilde, realized as
    a per-mode rotation (equivalently e^{-/+ i t H} on sigma_tilde -/+ i m_tilde)."""
    grid = sym.sigma_tilde.grid
    cos_t, sin_t = _rotation(grid, params, t)
    sig_hat = sym.sigma_tilde.spectrum()
    mt_hat = sym.m_tilde.spectrum()
    sig_new = grid.ifft(cos_t * sig_hat - sin_t * mt_hat)
    mt_new = grid.ifft(sin_t * sig_hat + cos_t * mt_hat)
    return SymmetrizedState(
        ScalarField(grid, sig_new.real),
        ScalarField(grid, mt_new.real),
        sym.time + t,
    )


def linear_acoustic_flow(ac, t, params):
    """Acoustic evolution of (sigma, m): the gradient part rotates under the
    symmetrized flow, the divergence-free part of m rides along unchanged."""
    pm = helmholtz_P(ac.m)
    sym = symmetrize(ac, params)
    evolved = desymmetrize(linear_evolve(sym, t, params), params)
    m_full = VectorField(ac.m.grid, pm.values + evolved.m.values)
    return AcousticState(evolved.sigma, m_full, ac.time + t)


def duhamel_solve(initial, times, sources, params):
    """Mild solution of the forced symmetrized system on a uniform time grid.

    sources : list of ScalarField, the forcing F_tilde in the m_tilde
    equation sampled at ``times``.  Exponential-trapezoidal quadrature of the
    Duhamel integral: exact for the propagator, second order in the source.
    """
    times = np.asarray(times, dtype=float)
    if len(sources) != len(times):
        raise ValueError("need one source sample per time-grid node")
    dts = np.diff(times)
    if np.any(dts <= 0) or np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        raise ValueError("time grid must be uniform and increasing")
    dt = float(dts[0])
    grid = initial.sigma_tilde.grid
    cos_dt, sin_dt = _rotation(grid, params, dt)
    sig = initial.sigma_tilde.spectrum()
    mt = initial.m_tilde.spectrum()
    out = [initial]
    for n in range(len(times) - 1):
        f_now = sources[n].spectrum()
        f_next = sources[n + 1].spectrum()
        sig_in = sig
        mt_in = mt + 0.5 * dt * f_now
        sig = cos_dt * sig_in - sin_dt * mt_in
        mt = sin_dt * sig_in + cos_dt * mt_in + 0.5 * dt * f_next
        out.append(
            SymmetrizedState(
                ScalarField(grid, grid.ifft(sig).real),
                ScalarField(grid, grid.ifft(mt).real),
                float(times[n + 1]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# linearization consistency
# ---------------------------------------------------------------------------

def _test_profiles(grid):
    x = grid.x_mesh()
    w = 2 * np.pi / grid.lengths[0]
    p = np.sin(w * x[0]) * np.cos(w * x[1]) + 0.4 * np.cos(2 * w * x[1])
    psi = np.cos(w * x[0]) * np.sin(w * x[1])
    phi = np.sin(w * x[0] + 0.3) * np.cos(w * x[1])
    psi_hat, phi_hat = grid.fft(psi), grid.fft(phi)
    q = np.empty((2,) + grid.shape)
    q[0] = grid.ifft(-1j * grid.k_mesh[1] * psi_hat).real
    q[1] = grid.ifft(1j * grid.k_mesh[0] * psi_hat).real
    q[0] += grid.ifft(1j * grid.k_mesh[0] * phi_hat).real
    q[1] += grid.ifft(1j * grid.k_mesh[1] * phi_hat).real
    return p, q


def linearization_residual(grid, params, amplitude, with_velocity=True):
    """L2 gap between the full right-hand side on small data
    (rho, u) = (1 + eps a p, a q) and the exact linearization about (1, 0):
    the acoustic operator plus (for nonzero velocity) the linear viscous term
    nu (Delta m + grad div m).  The gap is the quadratic remainder."""
    from .qns import FluidState

    p, q = _test_profiles(grid)
    a = amplitude
    rho = 1.0 + params.eps * a * p
    u = a * q if with_velocity else np.zeros_like(q)
    s = np.sqrt(rho)
    state = FluidState(ScalarField(grid, s), VectorField(grid, s * u))
    drho, dm = qns_rhs(state, params, dealias=False)

    sigma_hat = grid.fft((rho - 1.0) / params.eps)
    m_hat = grid.fft(rho * u)
    k = grid.k_mesh
    ek = params.eps * params.kappa
    lin_m = np.empty_like(m_hat)
    for j in range(grid.dim):
        lin_m[j] = -(1.0 / params.eps) * 1j * k[j] * (1.0 + ek**2 * grid.k2) * sigma_hat
    if with_velocity:
        divm_hat = np.sum(1j * k * m_hat, axis=0)
        for j in range(grid.dim):
            lin_m[j] += params.nu * (-grid.k2 * m_hat[j] + 1j * k[j] * divm_hat)
    lin_sigma = -np.sum(1j * k * m_hat, axis=0) / params.eps

    gap_m = dm.values - grid.ifft(lin_m).real
    gap_s = drho.values / params.eps - grid.ifft(lin_sigma).real
    return l2_norm(VectorField(grid, gap_m)) + l2_norm(ScalarField(grid, gap_s))


def linearization_order(grid, params, amplitudes=(3e-2, 1e-2, 3e-3), with_velocity=True):
    """Fitted order in amplitude of the linearization residual (expect ~2)."""
    res = [linearization_residual(grid, params, a, with_velocity) for a in amplitudes]
    slope = np.polyfit(np.log(amplitudes), np.log(res), 1)[0]
    return float(slope), np.asarray(res)


# ---------------------------------------------------------------------------
# decay study
# ---------------------------------------------------------------------------

def acoustic_series(result):
    """(times, acoustic states) from a QnsResult's checkpoints."""
    params = result.params
    states = [extract_acoustic(st, params) for st in result.checkpoints]
    return result.checkpoint_times(), states


def acoustic_decay_study(trajectories, gamma, q=2.2, delta=None, sigma_q=4.0):
    """Measured acoustic norms across an eps sweep, with fitted rates.

    trajectories : dict eps -> (times, [AcousticState]) with a common data
    profile across eps.  Measures max_t ||rho-1||_{L2} (continuous-in-time
    proxy), ||Q m||_{L^2_t B^delta_{q,2}}, and for gamma = 2 the mixed norm
    ||sigma||_{L^2_t L^{sigma_q}}.  delta defaults to (1/2)(1/2 - 1/q).
    """
    from .limitlab import RateTable, rate_fit

    if len(trajectories) < 3:
        raise ValueError("need at least 3 eps samples")
    if delta is None:
        delta = 0.5 * (0.5 - 1.0 / q)
    eps_values = np.array(sorted(trajectories, reverse=True), dtype=float)
    norms = {"rho_fluct_sup_l2": [], "qm_l2t_besov": []}
    measure_sigma = abs(gamma - 2.0) < 1e-12
    if measure_sigma:
        norms[f"sigma_l2t_l{sigma_q:g}"] = []
    for eps in eps_values:
        times, states = trajectories[eps]
        rho_l2 = [eps * l2_norm(st.sigma) for st in states]
        norms["rho_fluct_sup_l2"].append(max(rho_l2))
        qm_norms = np.array(
            [besov_norm(helmholtz_Q(st.m), delta, q, 2) for st in states]
        )
        norms["qm_l2t_besov"].append(mixed_norm(times, qm_norms, 2.0, None))
        if measure_sigma:
            sig = np.array([lq_norm(st.sigma, sigma_q) for st in states])
            norms[f"sigma_l2t_l{sigma_q:g}"].append(mixed_norm(times, sig, 2.0, None))
    rates, residuals = {}, {}
    for key, vals in norms.items():
        norms[key] = np.asarray(vals)
        rates[key], residuals[key] = rate_fit(eps_values, norms[key])
    return RateTable(eps_values, norms, rates, residuals)
