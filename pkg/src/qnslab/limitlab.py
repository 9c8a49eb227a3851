"""Low-Mach-limit laboratory.

An incompressible Navier-Stokes reference solver (pseudospectral projection
method with an exact viscous integrating factor), the initial-data exponent
calculators, ill-/well-prepared data generators, eps-sweep convergence
studies against the incompressible reference, the Leray energy check, and
the log-log rate fitter shared by all sweep harnesses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import cumulative_simpson

from .qns import DtPolicy, FluidParams, FluidState, qns_solve, total_energy
from .spectral import (
    ScalarField,
    SpectralGrid,
    VectorField,
    helmholtz_P,
    helmholtz_Q,
    l2_norm,
    lq_norm,
    mixed_norm,
    sobolev_norm,
)

__all__ = [
    "NSState",
    "NSResult",
    "ns_solve",
    "taylor_green_state",
    "beta_exponent",
    "alpha_exponent",
    "make_data",
    "rate_fit",
    "RateTable",
    "StudyConfig",
    "ConvergenceReport",
    "convergence_study",
    "leray_energy_check",
]


# ---------------------------------------------------------------------------
# incompressible reference solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NSState:
    """Divergence-free velocity at a given time."""

    u: VectorField
    time: float = 0.0
    nu: float = 1.0

    def __post_init__(self):
        div = _divergence_norm(self.u)
        h1 = np.sqrt(
            sum(sobolev_norm(ScalarField(self.u.grid, c), 1.0) ** 2 for c in self.u.values)
        )
        if div > 1e-10 * max(h1, 1e-300):
            raise ValueError("NSState requires a divergence-free velocity")


def _divergence_norm(u):
    grid = u.grid
    spec = u.spectrum()
    acc = np.sum(1j * grid.k_mesh * spec, axis=0)
    return l2_norm(ScalarField(grid, grid.ifft(acc)))


@dataclass
class NSResult:
    times: np.ndarray
    series: dict
    checkpoints: list
    final_state: NSState
    dt: float

    def checkpoint_times(self):
        return np.array([st.time for st in self.checkpoints])


def _ns_nonlinear(grid, u_hat, mask):
    """P(-div(u x u)) in spectral space, 2/3 dealiased."""
    d = grid.dim
    u = np.array([grid.ifft(u_hat[j]).real for j in range(d)])
    rhs = np.empty_like(u_hat)
    for j in range(d):
        acc = np.zeros(grid.shape, dtype=complex)
        for i in range(d):
            acc -= 1j * grid.k_mesh[i] * grid.fft(u[i] * u[j])
        rhs[j] = acc * mask
    # Leray projection
    k = grid.k_mesh
    k2 = grid.k2.copy()
    k2[(0,) * d] = 1.0
    dot = np.sum(k * rhs, axis=0) / k2
    for j in range(d):
        rhs[j] -= k[j] * dot
    return rhs


def ns_solve(initial, t_end, dt=None, cfl=0.4, checkpoint_every=None):
    """Pseudospectral solve of incompressible Navier-Stokes.

    Viscosity is integrated exactly (integrating factor), the projected
    nonlinearity with RK4 under the 2/3 rule.  The energy balance
    1/2||u||^2 + nu int ||grad u||^2 is accumulated with composite Simpson
    so resolved smooth runs close the budget to ~1e-6 relative and better.
    """
    grid = initial.u.grid
    nu = initial.nu
    mask = grid.dealias_mask
    u_hat = initial.u.spectrum() * mask
    if dt is None:
        umax = float(np.max(np.abs(initial.u.values)))
        h = min(grid.dx)
        dt = min(cfl * h / max(umax, 1e-12), cfl * h**2 / nu)
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-12)))
    dt = t_end / n_steps
    if checkpoint_every is None:
        checkpoint_every = max(1, n_steps // 80)

    e_half = np.exp(-nu * grid.k2 * dt / 2.0)
    e_full = e_half**2
    cell = grid.cell_volume
    npts = float(np.prod(grid.shape))

    def energy(u_hat):
        return 0.5 * np.sum(np.abs(u_hat) ** 2) / npts**2 * grid.volume

    def grad_sq(u_hat):
        return np.sum(grid.k2 * np.sum(np.abs(u_hat) ** 2, axis=0)) / npts**2 * grid.volume

    times = initial.time + dt * np.arange(n_steps + 1)
    energy_series = np.zeros(n_steps + 1)
    gradsq_series = np.zeros(n_steps + 1)
    energy_series[0] = energy(u_hat)
    gradsq_series[0] = grad_sq(u_hat)
    checkpoints = [NSState(VectorField(grid, grid.ifft(u_hat).real), times[0], nu)]

    for n in range(1, n_steps + 1):
        a = _ns_nonlinear(grid, u_hat, mask)
        b = _ns_nonlinear(grid, e_half * (u_hat + 0.5 * dt * a), mask)
        c = _ns_nonlinear(grid, e_half * u_hat + 0.5 * dt * b, mask)
        d_ = _ns_nonlinear(grid, e_full * u_hat + dt * e_half * c, mask)
        u_hat = e_full * u_hat + (dt / 6.0) * (
            e_full * a + 2.0 * e_half * (b + c) + d_
        )
        energy_series[n] = energy(u_hat)
        gradsq_series[n] = grad_sq(u_hat)
        if n % checkpoint_every == 0 or n == n_steps:
            checkpoints.append(
                NSState(VectorField(grid, grid.ifft(u_hat).real), times[n], nu)
            )
        if not np.isfinite(energy_series[n]):
            raise RuntimeError("ns_solve blow-up (CFL violation)")

    dissipation = nu * np.concatenate(
        [[0.0], cumulative_simpson(gradsq_series, x=times)]
    )
    series = {
        "energy": energy_series,
        "grad_sq": gradsq_series,
        "dissipation": dissipation,
    }
    return NSResult(times, series, checkpoints, checkpoints[-1], dt)


def taylor_green_state(grid, nu):
    """2D Taylor-Green vortex on [0, 2pi]^2: closed-form solution decays as
    e^{-2 nu t} per component."""
    x = grid.x_mesh()
    u = np.array([np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])])
    return NSState(VectorField(grid, u), 0.0, nu)


def leray_energy_check(result, u0, tol_factor=1e-6):
    """Evaluate 1/2||u(t)||^2 + nu int_0^t ||grad u||^2 - 1/2||u0||^2 along a
    trajectory; flags positivity beyond tol_factor * E(0)."""
    e0 = 0.5 * l2_norm(u0) ** 2
    residual = result.series["energy"] + result.series["dissipation"] - e0
    max_residual = float(np.max(residual))
    return {
        "initial_energy": e0,
        "max_residual": max_residual,
        "flagged": max_residual > tol_factor * max(e0, 1e-300),
    }


# ---------------------------------------------------------------------------
# exponent calculators
# ---------------------------------------------------------------------------

def _check_gamma(gamma):
    if not (1 < gamma < 3):
        raise ValueError("gamma must lie in (1, 3)")


def beta_exponent(gamma):
    """Initial-data density rate: beta = 2/(6-gamma) for gamma < 2, else 1.

    Exact (Fraction in, Fraction out); the jump at gamma = 2 is a feature of
    the two branches, not smoothed."""
    _check_gamma(gamma)
    if gamma < 2:
        return 2 / (6 - gamma) if not isinstance(gamma, (int, Fraction)) else Fraction(2, 1) / (6 - gamma)
    return 1 if isinstance(gamma, (int, Fraction)) else 1.0


def alpha_exponent(p, gamma):
    """sqrt(rho)-1 rate in L^p: 2(6-p)/(p(6-gamma)) for gamma < 2, else
    (6-p)/(2p); p in [2, 6] with the boundary p = 6 giving 0."""
    _check_gamma(gamma)
    if not (2 <= p <= 6):
        raise ValueError("p must lie in [2, 6]")
    exact = isinstance(p, (int, Fraction)) and isinstance(gamma, (int, Fraction))
    if exact:
        p = Fraction(p)
        gamma = Fraction(gamma)
    if gamma < 2:
        return 2 * (6 - p) / (p * (6 - gamma))
    return (6 - p) / (2 * p)


# ---------------------------------------------------------------------------
# data generators
# ---------------------------------------------------------------------------

def _periodic_gaussian(grid, center, width):
    x = grid.x_mesh()
    r2 = np.zeros(grid.shape)
    for ax in range(grid.dim):
        L = grid.lengths[ax]
        delta = np.mod(x[ax] - center[ax] + L / 2.0, L) - L / 2.0
        r2 += delta**2
    return np.exp(-r2 / (2.0 * width**2))


def _normalized(values):
    return values / np.max(np.abs(values))


def _data_profiles(grid, width=None):
    """Fixed localized profiles: a mean-zero density dipole, a solenoidal
    velocity (curl of a Gaussian stream), and a gradient velocity."""
    if width is None:
        width = grid.lengths[0] / 48.0  # keeps support within L/8
    c0 = [0.5 * L for L in grid.lengths]
    shift = 1.5 * width
    k = grid.k_mesh

    g_sigma = _periodic_gaussian(grid, [c0[0] + shift, c0[1]], width)
    p_sigma = _normalized(grid.ifft(1j * k[0] * grid.fft(g_sigma)).real)

    psi = _periodic_gaussian(grid, [c0[0] - shift, c0[1] + shift], 1.4 * width)
    psi_hat = grid.fft(psi)
    u_sol = np.empty((grid.dim,) + grid.shape)
    u_sol[0] = grid.ifft(-1j * k[1] * psi_hat).real
    u_sol[1] = grid.ifft(1j * k[0] * psi_hat).real
    u_sol = _normalized(u_sol)

    chi = _periodic_gaussian(grid, [c0[0], c0[1] - shift], 1.2 * width)
    chi_hat = grid.fft(chi)
    u_grad = np.array([grid.ifft(1j * k[ax] * chi_hat).real for ax in range(grid.dim)])
    u_grad = _normalized(u_grad)
    return p_sigma, u_sol, u_grad


def make_data(
    kind, amplitude, eps, gamma, grid, velocity_amplitude=1.0, width=None, kappa=1.0
):
    """Initial data for the eps-scaled system.

    ill_prepared : rho = 1 + eps * a * p (mean-zero localized profile),
    u = O(1) solenoidal + O(1) gradient parts.  well_prepared : rho =
    1 + eps^2 * a * p and u purely divergence-free.  Returns the state and a
    report of E(0) (kappa enters only here), the uniform initial-data
    functionals, and the exact incompressible limit datum P(u).
    """
    if grid.dim != 2:
        raise ValueError("data generators are two-dimensional")
    p_sigma, u_sol, u_grad = _data_profiles(grid, width)
    a_u = velocity_amplitude
    if kind == "ill_prepared":
        rho = 1.0 + eps * amplitude * p_sigma
        u = a_u * (u_sol + u_grad)
    elif kind == "well_prepared":
        rho = 1.0 + eps**2 * amplitude * p_sigma
        u = helmholtz_P(VectorField(grid, a_u * u_sol)).values
    else:
        raise ValueError(f"unknown data kind {kind!r}")
    if np.min(rho) <= 0:
        raise ValueError("amplitude too large: density not positive")
    s = np.sqrt(rho)
    state = FluidState(ScalarField(grid, s), VectorField(grid, s * u), 0.0)

    from .qns import internal_energy_density

    grad_s = np.array(
        [grid.ifft(1j * grid.k_mesh[ax] * grid.fft(s)).real for ax in range(grid.dim)]
    )
    grad_sq = grid.integrate(np.sum(grad_s**2, axis=0))
    pi_l1 = float(grid.integrate(np.abs(internal_energy_density(rho, gamma, eps))))
    report = {
        "grad_sqrt_rho_l2": float(np.sqrt(grad_sq)),
        "sqrt_rho_u_l2": l2_norm(state.Lambda),
        "pi_l1": pi_l1,
        "rho_minus_one_l2": l2_norm(ScalarField(grid, rho - 1.0)),
        "initial_energy": 0.5 * l2_norm(state.Lambda) ** 2
        + 2.0 * kappa**2 * grad_sq
        + pi_l1,
        "limit_u": helmholtz_P(VectorField(grid, u)),
    }
    return state, report


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------

def rate_fit(eps_values, norm_values):
    """Least-squares slope of log(norm) against log(eps).

    Returns (rate, residual) with residual the max absolute log-deviation.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    norm_values = np.asarray(norm_values, dtype=float)
    if eps_values.size < 3:
        raise ValueError("need at least 3 samples")
    if np.any(eps_values <= 0) or np.any(norm_values <= 0):
        raise ValueError("rate_fit requires positive samples")
    lx, ly = np.log(eps_values), np.log(norm_values)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.max(np.abs(ly - (slope * lx + intercept))))
    return float(slope), residual


@dataclass
class RateTable:
    """Measured norms across a decreasing eps sweep with fitted rates."""

    eps_values: np.ndarray
    norms: dict
    rates: dict
    residuals: dict

    def __post_init__(self):
        if len(self.eps_values) < 3:
            raise ValueError("RateTable requires >= 3 eps samples")
        if np.any(np.diff(self.eps_values) >= 0):
            raise ValueError("eps_values must be strictly decreasing")

    def decreasing(self, norm_id):
        vals = self.norms[norm_id]
        return bool(np.all(np.diff(vals) < 0))


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------

@dataclass
class StudyConfig:
    """Desk-scale defaults for the 2D eps sweep."""

    gamma: float = 2.0
    nu: float = 0.1
    kappa: float = 0.08
    eps_values: tuple = (0.4, 0.2, 0.1, 0.05)
    data_kind: str = "ill_prepared"
    t_end: float = 1.0
    grid_points: int = 256
    box_length: float = 44.0
    amplitude: float = 0.25
    velocity_amplitude: float = 0.8
    dt: float = 5e-3
    q: float = 2.2
    n_checkpoints: int = 100
    delta_reg: float = 0.0
    energy_tol: float = 1e-3


@dataclass
class ConvergenceReport:
    config: StudyConfig
    rate_table: RateTable
    ns_result: NSResult
    qns_results: dict
    data_reports: dict
    beta_target: float


def _window_mask(grid):
    """Centered window of half the box per axis (the local-in-space proxy)."""
    x = grid.x_mesh()
    mask = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        L = grid.lengths[ax]
        mask &= np.abs(x[ax] - L / 2.0) <= L / 4.0
    return mask


def _windowed_l2(grid, values, mask):
    return float(np.sqrt(np.sum(values**2 * mask) * grid.cell_volume))


def convergence_study(config=None, grid=None, progress=None):
    """Run the eps sweep against the incompressible reference.

    Per eps: sup_t ||rho-1||_{L2} (rate against beta(gamma)), the global
    ||Q m||_{L^2_t L^q}, and the windowed ||sqrt(rho) u - u||, ||P m - u||
    against the reference trajectory started from the exact limit datum P(u0).
    """
    config = config or StudyConfig()
    if grid is None:
        grid = SpectralGrid(2, config.box_length, config.grid_points)
    n_steps = int(round(config.t_end / config.dt))
    every = max(1, n_steps // config.n_checkpoints)
    while n_steps % every:
        every -= 1

    eps_values = np.array(sorted(config.eps_values, reverse=True), dtype=float)
    qns_results, data_reports = {}, {}
    limit_u = None
    for eps in eps_values:
        params = FluidParams(
            eps=eps,
            nu=config.nu,
            kappa=config.kappa,
            gamma=config.gamma,
            delta_reg=config.delta_reg,
        )
        state, report = make_data(
            config.data_kind,
            config.amplitude,
            eps,
            config.gamma,
            grid,
            velocity_amplitude=config.velocity_amplitude,
        )
        data_reports[eps] = report
        limit_u = report["limit_u"]
        qns_results[eps] = qns_solve(
            state,
            params,
            config.t_end,
            dt_policy=DtPolicy(dt=config.dt),
            checkpoint_every=every,
            energy_tol=config.energy_tol,
        )
        if progress:
            progress(f"qns eps={eps:g} done")

    ns_initial = NSState(limit_u, 0.0, config.nu)
    ns_result = ns_solve(
        ns_initial, config.t_end, dt=config.dt, checkpoint_every=every
    )
    if progress:
        progress("ns reference done")

    mask = _window_mask(grid)
    times = ns_result.checkpoint_times()
    ns_fields = [st.u.values for st in ns_result.checkpoints]

    norms = {
        "rho_fluct_sup_l2": [],
        "qm_l2t_lq": [],
        "lambda_minus_u_l2t_l2_window": [],
        "pm_minus_u_l2t_l2_window": [],
    }
    for eps in eps_values:
        res = qns_results[eps]
        ck_times = res.checkpoint_times()
        if len(ck_times) != len(times) or np.max(np.abs(ck_times - times)) > 1e-9:
            raise RuntimeError("checkpoint grids misaligned between solvers")
        rho_l2, qm_lq, lam_gap, pm_gap = [], [], [], []
        for st, u_ref in zip(res.checkpoints, ns_fields):
            rho = st.sqrt_rho.values**2
            rho_l2.append(l2_norm(ScalarField(grid, rho - 1.0)))
            m = VectorField(grid, st.sqrt_rho.values * st.Lambda.values)
            qm_lq.append(lq_norm(helmholtz_Q(m), config.q))
            lam_gap.append(
                _windowed_l2(
                    grid,
                    np.sqrt(np.sum((st.Lambda.values - u_ref) ** 2, axis=0)),
                    mask,
                )
            )
            pm_gap.append(
                _windowed_l2(
                    grid,
                    np.sqrt(np.sum((helmholtz_P(m).values - u_ref) ** 2, axis=0)),
                    mask,
                )
            )
        norms["rho_fluct_sup_l2"].append(max(rho_l2))
        norms["qm_l2t_lq"].append(mixed_norm(times, np.asarray(qm_lq), 2.0, None))
        norms["lambda_minus_u_l2t_l2_window"].append(
            mixed_norm(times, np.asarray(lam_gap), 2.0, None)
        )
        norms["pm_minus_u_l2t_l2_window"].append(
            mixed_norm(times, np.asarray(pm_gap), 2.0, None)
        )

    rates, residuals = {}, {}
    for key, vals in norms.items():
        norms[key] = np.asarray(vals)
        rates[key], residuals[key] = rate_fit(eps_values, norms[key])
    table = RateTable(eps_values, norms, rates, residuals)
    return ConvergenceReport(
        config,
        table,
        ns_result,
        qns_results,
        data_reports,
        float(beta_exponent(config.gamma)),
    )
