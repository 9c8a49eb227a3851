"""Scaled quantum Navier-Stokes dynamics on a periodic box.

State is carried in the weak-solution variables (sqrt(rho), Lambda) with
Lambda = sqrt(rho) * u; the density is only ever read as (sqrt(rho))^2.
Time stepping is Strang splitting: the stiff 1/eps acoustic part (pressure
linearization plus the linear third-order dispersive term) is integrated
exactly in Fourier space, the remaining nonlinear/viscous/quantum terms with
explicit RK4 under 2/3-rule dealiasing.  The energy, BD entropy, viscous
tensors, the delta-regularized viscosity pair, and the three equivalent
forms of the quantum pressure are all evaluated here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import ScalarField, SpectralGrid, VectorField

__all__ = [
    "FluidParams",
    "FluidState",
    "EnergyReport",
    "ViscousTensors",
    "DtPolicy",
    "QnsResult",
    "SolverAbort",
    "internal_energy_density",
    "total_energy",
    "bd_entropy",
    "viscous_tensor",
    "bohm_forms",
    "regularized_viscosity",
    "qns_rhs",
    "qns_solve",
]


@dataclass(frozen=True)
class FluidParams:
    """Physical and regularization parameters of the scaled system.

    nu > kappa is the standing assumption behind the BD entropy; gamma is the
    adiabatic exponent of the gamma-law pressure P(rho) = rho^gamma / gamma.
    delta_reg switches on the vacuum-safe viscosity (rho + d rho^{7/8} +
    d rho^gamma); rho_floor is the sqrt(rho) threshold below which the
    velocity is not reconstructed.
    """

    eps: float
    nu: float
    kappa: float
    gamma: float
    delta_reg: float = 0.0
    rho_floor: float = 1e-6

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not (self.nu > self.kappa > 0):
            raise ValueError("need nu > kappa > 0")
        if not (1.0 < self.gamma < 3.0):
            raise ValueError("gamma must lie in (1, 3)")
        if self.delta_reg < 0 or self.rho_floor <= 0:
            raise ValueError("delta_reg must be >= 0 and rho_floor > 0")

    @property
    def mu(self):
        return self.nu - math.sqrt(self.nu**2 - self.kappa**2)

    def kappa_tilde_sq(self, c):
        if not (0.0 < c < self.mu):
            raise ValueError(f"c must lie in (0, mu) = (0, {self.mu:.6g})")
        return self.kappa**2 - 2.0 * self.nu * c + c**2


@dataclass(frozen=True)
class FluidState:
    """(sqrt(rho), Lambda) pair at a given time."""

    sqrt_rho: ScalarField
    Lambda: VectorField
    time: float = 0.0

    def __post_init__(self):
        if self.sqrt_rho.grid != self.Lambda.grid:
            raise ValueError("fields must share a grid")
        if np.min(self.sqrt_rho.values) < -1e-12:
            raise ValueError("sqrt_rho must be nonnegative")

    @property
    def grid(self):
        return self.sqrt_rho.grid

    def rho(self):
        return ScalarField(self.grid, self.sqrt_rho.values**2)

    def momentum(self):
        return VectorField(self.grid, self.sqrt_rho.values * self.Lambda.values)

    def mass(self):
        return self.grid.integrate(self.sqrt_rho.values**2)


@dataclass
class EnergyReport:
    """Components of E(t) plus whatever dissipation has been accumulated."""

    kinetic: float
    quantum: float
    internal: float
    dissipation_accumulated: float = 0.0

    @property
    def total(self):
        return self.kinetic + self.quantum + self.internal


def internal_energy_density(rho, gamma, eps):
    """pi(rho) = (rho^gamma - 1 - gamma (rho - 1)) / (eps^2 gamma (gamma-1)).

    Vanishes exactly at rho = 1, convex, finite at vacuum.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    return (rho**gamma - 1.0 - gamma * (rho - 1.0)) / (eps**2 * gamma * (gamma - 1.0))


def _grad_real(grid, values_hat):
    out = np.empty((grid.dim,) + grid.shape)
    for ax in range(grid.dim):
        out[ax] = grid.ifft(1j * grid.k_mesh[ax] * values_hat).real
    return out


def total_energy(state, params, dissipation_accumulated=0.0):
    """E(t) = int 1/2 |Lambda|^2 + 2 kappa^2 |grad sqrt(rho)|^2 + pi(rho)."""
    grid = state.grid
    s = state.sqrt_rho.values
    grad_s = _grad_real(grid, grid.fft(s))
    kinetic = 0.5 * grid.integrate(np.sum(state.Lambda.values**2, axis=0))
    quantum = 2.0 * params.kappa**2 * grid.integrate(np.sum(grad_s**2, axis=0))
    internal = grid.integrate(internal_energy_density(s**2, params.gamma, params.eps))
    return EnergyReport(kinetic, quantum, internal, dissipation_accumulated)


def bd_entropy(state, params, c):
    """BD entropy B(t) = int 1/2 |Lambda + 2c grad sqrt(rho)|^2 + pi
    + kappa_tilde^2 |grad sqrt(rho)|^2, for 0 < c < mu."""
    kt2 = params.kappa_tilde_sq(c)  # validates c
    grid = state.grid
    s = state.sqrt_rho.values
    grad_s = _grad_real(grid, grid.fft(s))
    shifted = state.Lambda.values + 2.0 * c * grad_s
    out = 0.5 * grid.integrate(np.sum(shifted**2, axis=0))
    out += grid.integrate(internal_energy_density(s**2, params.gamma, params.eps))
    out += kt2 * grid.integrate(np.sum(grad_s**2, axis=0))
    return float(out)


@dataclass
class ViscousTensors:
    """T from sqrt(rho) T = grad(rho u) - 2 grad sqrt(rho) x Lambda, and its
    symmetric part S; zero-extended where sqrt(rho) < rho_floor."""

    T: np.ndarray  # (d, d, *grid.shape), T[i, j] = component d_i (.)_j
    S: np.ndarray
    excluded_fraction: float
    flagged: bool


def viscous_tensor(state, params):
    grid = state.grid
    s = state.sqrt_rho.values
    m_hat = grid.fft(state.momentum().values)
    grad_s = _grad_real(grid, grid.fft(s))
    d = grid.dim
    grad_m = np.empty((d, d) + grid.shape)
    for i in range(d):
        for j in range(d):
            grad_m[i, j] = grid.ifft(1j * grid.k_mesh[i] * m_hat[j]).real
    safe = s >= params.rho_floor
    T = np.zeros_like(grad_m)
    lam = state.Lambda.values
    for i in range(d):
        for j in range(d):
            num = grad_m[i, j] - 2.0 * grad_s[i] * lam[j]
            T[i, j] = np.where(safe, num / np.where(safe, s, 1.0), 0.0)
    S = 0.5 * (T + np.swapaxes(T, 0, 1))
    excluded = 1.0 - float(np.mean(safe))
    return ViscousTensors(T, S, excluded, excluded > 0.10)


def bohm_forms(rho, kappa, rho_floor=1e-6):
    """The quantum pressure in its three equivalent forms, as vector fields:

    (A) 2 kappa^2 rho grad(Delta sqrt(rho) / sqrt(rho))
    (B) kappa^2 div(rho Hess(log rho))
    (C) kappa^2 (grad Delta rho - 4 div(grad sqrt(rho) x grad sqrt(rho)))

    Requires rho bounded away from vacuum.
    """
    grid = rho.grid
    r = rho.values
    if np.min(r) < rho_floor:
        raise ValueError("bohm_forms requires rho >= rho_floor everywhere")
    d = grid.dim
    k = grid.k_mesh
    s = np.sqrt(r)
    s_hat = grid.fft(s)
    r_hat = grid.fft(r)

    # (A)
    lap_s = grid.ifft(-grid.k2 * s_hat).real
    ratio_hat = grid.fft(lap_s / s)
    A = 2.0 * kappa**2 * r * _grad_real(grid, ratio_hat)

    # (B)
    log_hat = grid.fft(np.log(r))
    B = np.zeros((d,) + grid.shape)
    for i in range(d):
        for j in range(d):
            hess_ij = grid.ifft(-k[i] * k[j] * log_hat).real
            B[j] += grid.ifft(1j * k[i] * grid.fft(r * hess_ij)).real
    B *= kappa**2

    # (C)
    grad_lap_rho = _grad_real(grid, -grid.k2 * r_hat)
    grad_s = _grad_real(grid, s_hat)
    C = kappa**2 * grad_lap_rho
    for j in range(d):
        acc = np.zeros(grid.shape, dtype=complex)
        for i in range(d):
            acc += 1j * k[i] * grid.fft(grad_s[i] * grad_s[j])
        C[j] -= 4.0 * kappa**2 * grid.ifft(acc).real

    return (
        VectorField(grid, A),
        VectorField(grid, B),
        VectorField(grid, C),
    )


def regularized_viscosity(rho, gamma, delta):
    """Vacuum-safe viscosity pair (h, g):

    h = rho + delta rho^{7/8} + delta rho^gamma,  g = rho h'(rho) - h(rho)
      = -(delta/8) rho^{7/8} + delta (gamma - 1) rho^gamma.

    delta = 0 gives (rho, 0).
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or delta < 0:
        raise ValueError("rho and delta must be nonnegative")
    h = rho + delta * rho ** (7.0 / 8.0) + delta * rho**gamma
    g = -(delta / 8.0) * rho ** (7.0 / 8.0) + delta * (gamma - 1.0) * rho**gamma
    return h, g


# ---------------------------------------------------------------------------
# right-hand side assembly
# ---------------------------------------------------------------------------

def _rho_quantities(grid, params, rho_hat):
    """Per-step density-derived fields shared by all RK stages."""
    rho = np.maximum(grid.ifft(rho_hat).real, 0.0)
    s = np.sqrt(rho)
    safe = s >= params.rho_floor
    grad_s = _grad_real(grid, grid.fft(s))
    h, g = regularized_viscosity(rho, params.gamma, params.delta_reg)
    pi = internal_energy_density(rho, params.gamma, params.eps)
    return {"rho": rho, "s": s, "safe": safe, "grad_s": grad_s, "h": h, "g": g, "pi": pi}


def _nonlinear_momentum_rhs(grid, params, rq, m_hat, mask):
    """Spectral RHS of the non-stiff momentum terms:

    -div(Lambda x Lambda) - (gamma-1) grad pi - 4 kappa^2 div(grad s x grad s)
    + 2 nu div(h Du + g div(u) I),

    with Du reconstructed through the tensor identity where s >= rho_floor.
    Returns (rhs_hat, diagnostics) with pointwise dissipation densities.
    """
    d = grid.dim
    k = grid.k_mesh
    s, safe, grad_s = rq["s"], rq["safe"], rq["grad_s"]
    s_safe = np.where(safe, s, 1.0)

    m = np.empty((d,) + grid.shape)
    for j in range(d):
        m[j] = grid.ifft(m_hat[j]).real
    lam = np.where(safe, m / s_safe, 0.0)

    # Du via sqrt(rho) T = grad m - 2 grad s x Lambda, Du = sym(T)/sqrt(rho)
    Du = np.empty((d, d) + grid.shape)
    for i in range(d):
        for j in range(d):
            Du[i, j] = grid.ifft(1j * k[i] * m_hat[j]).real - 2.0 * grad_s[i] * lam[j]
    Du = 0.5 * (Du + np.swapaxes(Du, 0, 1))
    rho_safe = np.where(safe, rq["rho"], 1.0)
    Du = np.where(safe, Du / rho_safe, 0.0)
    divu = np.einsum("ii...->...", Du)

    visc_diag = 2.0 * params.nu * (rq["h"] * np.sum(Du**2, axis=(0, 1)) + rq["g"] * divu**2)
    plain_diag = 2.0 * params.nu * rq["rho"] * np.sum(Du**2, axis=(0, 1))

    rhs = np.empty((d,) + grid.shape, dtype=complex)
    pi_hat = grid.fft(rq["pi"])
    for j in range(d):
        acc = -(params.gamma - 1.0) * 1j * k[j] * pi_hat
        for i in range(d):
            flux_ij = (
                -lam[i] * lam[j]
                - 4.0 * params.kappa**2 * grad_s[i] * grad_s[j]
                + 2.0 * params.nu * rq["h"] * Du[i, j]
            )
            if i == j:
                flux_ij = flux_ij + 2.0 * params.nu * rq["g"] * divu
            acc = acc + 1j * k[i] * grid.fft(flux_ij)
        rhs[j] = acc * mask
    diag = {
        "visc_dissipation": visc_diag,
        "plain_dissipation": plain_diag,
        "max_speed": float(np.max(np.abs(np.where(safe, m / rho_safe, 0.0)))),
        "lam": lam,
    }
    return rhs, diag


def _acoustic_momentum_rhs(grid, params, rho_hat):
    """Stiff linear part: -(1/eps^2) grad rho + kappa^2 grad Delta rho."""
    d = grid.dim
    rhs = np.empty((d,) + grid.shape, dtype=complex)
    coeff = -(1.0 / params.eps**2) - params.kappa**2 * grid.k2
    for j in range(d):
        rhs[j] = 1j * grid.k_mesh[j] * coeff * rho_hat
    return rhs


def qns_rhs(state, params, dealias=True):
    """Full instantaneous right-hand side d/dt (rho, m).

    Continuity: -div m.  Momentum: -div(Lambda x Lambda) - (1/eps) grad sigma
    - (gamma-1) grad pi + 2 nu div(h Du + g div u I) + quantum pressure in the
    conservative form grad Delta rho - 4 div(grad s x grad s), all spectral.
    """
    grid = state.grid
    rho_hat = grid.fft(state.sqrt_rho.values**2)
    m_hat = grid.fft(state.momentum().values)
    mask = grid.dealias_mask if dealias else 1.0
    rq = _rho_quantities(grid, params, rho_hat)
    n_rhs, _ = _nonlinear_momentum_rhs(grid, params, rq, m_hat, mask)
    a_rhs = _acoustic_momentum_rhs(grid, params, rho_hat)
    drho_hat = -np.sum(1j * grid.k_mesh * m_hat, axis=0)
    drho = grid.ifft(drho_hat).real
    dm = grid.ifft(n_rhs + a_rhs).real
    if not (np.all(np.isfinite(drho)) and np.all(np.isfinite(dm))):
        raise SolverAbort("non-finite value in right-hand side", state)
    return ScalarField(grid, drho), VectorField(grid, dm)


# ---------------------------------------------------------------------------
# exact acoustic half-step
# ---------------------------------------------------------------------------

def _acoustic_phase_tables(grid, params):
    e, kap = params.eps, params.kappa
    kmag = grid.kmag
    s_fac = np.sqrt(1.0 + (e * kap) ** 2 * grid.k2)
    w = kmag * s_fac / e
    unit_k = np.zeros_like(grid.k_mesh)
    nz = kmag > 0
    for ax in range(grid.dim):
        unit_k[ax][nz] = grid.k_mesh[ax][nz] / kmag[nz]
    return s_fac, w, unit_k


def _acoustic_step(grid, params, rho_hat, m_hat, dt, tables):
    """Exact rotation of (sigma_tilde, m_tilde) by angle omega * dt per mode;
    the divergence-free part of m and all zero modes are untouched."""
    s_fac, w, unit_k = tables
    sig_t = s_fac * rho_hat / params.eps
    m_t = 1j * np.sum(unit_k * m_hat, axis=0)
    cos_t, sin_t = np.cos(w * dt), np.sin(w * dt)
    sig_new = cos_t * sig_t - sin_t * m_t
    m_t_new = sin_t * sig_t + cos_t * m_t
    rho_new = params.eps * sig_new / s_fac
    q_old = unit_k * (np.sum(unit_k * m_hat, axis=0))[None]
    m_new = m_hat - q_old + (-1j) * unit_k * m_t_new[None]
    return rho_new, m_new


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

class SolverAbort(RuntimeError):
    """Integration abort carrying a diagnostic snapshot of the state."""

    def __init__(self, reason, snapshot=None):
        self.reason = reason
        self.snapshot = snapshot
        super().__init__(reason)


@dataclass
class DtPolicy:
    """dt = min(c_adv h / max|u|, c_visc h^2 / nu, c_quantum h^2 / kappa),
    optionally capped (dt_max) or overridden (dt); the exact acoustic step
    exempts eps from the CFL."""

    c_adv: float = 0.4
    c_visc: float = 0.4
    c_quantum: float = 0.4
    dt_max: float | None = None
    dt: float | None = None

    def evaluate(self, grid, params, max_speed):
        if self.dt is not None:
            return float(self.dt)
        h = min(grid.dx)
        cands = [
            self.c_visc * h**2 / params.nu,
            self.c_quantum * h**2 / params.kappa,
            self.c_adv * h / max(max_speed, 1e-12),
        ]
        if self.dt_max is not None:
            cands.append(self.dt_max)
        return float(min(cands))


@dataclass
class QnsResult:
    """Trajectory diagnostics and checkpoints from one solve."""

    times: np.ndarray
    series: dict
    checkpoints: list
    final_state: FluidState
    dt: float
    params: FluidParams

    def checkpoint_times(self):
        return np.array([st.time for st in self.checkpoints])


_SERIES_KEYS = (
    "energy",
    "kinetic",
    "internal",
    "quantum",
    "dissipation",
    "plain_dissipation",
    "bd",
    "mass",
    "min_sqrt_rho",
)


def _state_from_spectra(grid, rho_hat, m_hat, params, t):
    rho = np.maximum(grid.ifft(rho_hat).real, 0.0)
    s = np.sqrt(rho)
    safe = s >= params.rho_floor
    m = grid.ifft(m_hat).real
    lam = np.where(safe, m / np.where(safe, s, 1.0), 0.0)
    return FluidState(ScalarField(grid, s), VectorField(grid, lam), t)


def qns_solve(
    initial,
    params,
    t_end,
    dt_policy=None,
    checkpoint_every=None,
    bd_c=None,
    energy_tol=1e-4,
    check_lower_bound=True,
):
    """Integrate the system from a FluidState over [t0, t0 + t_end].

    Returns a QnsResult with per-step scalar series (energy components, both
    dissipation integrands, BD entropy, mass, min sqrt(rho)) and checkpointed
    states.  Aborts (SolverAbort) on CFL violation, non-finite values, energy
    increase beyond energy_tol * E(0) per unit time, or vacuum collapse at
    delta_reg = 0.
    """
    grid = initial.grid
    dt_policy = dt_policy or DtPolicy()
    bd_c = bd_c if bd_c is not None else 0.5 * params.mu
    mask = grid.dealias_mask
    rho_hat = grid.fft(initial.sqrt_rho.values**2) * mask
    m_hat = grid.fft(initial.momentum().values) * mask

    rq = _rho_quantities(grid, params, rho_hat)
    _, diag0 = _nonlinear_momentum_rhs(grid, params, rq, m_hat, mask)
    dt = dt_policy.evaluate(grid, params, diag0["max_speed"])
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-12)))
    dt = t_end / n_steps
    if checkpoint_every is None:
        checkpoint_every = max(1, n_steps // 80)

    tables = _acoustic_phase_tables(grid, params)
    cell = grid.cell_volume

    series = {key: np.zeros(n_steps + 1) for key in _SERIES_KEYS}
    times = initial.time + dt * np.arange(n_steps + 1)
    checkpoints = []

    def record(idx, t, rho_hat, m_hat, diss_rate_pair, prev_pair):
        state = _state_from_spectra(grid, rho_hat, m_hat, params, t)
        rep = total_energy(state, params)
        series["kinetic"][idx] = rep.kinetic
        series["internal"][idx] = rep.internal
        series["quantum"][idx] = rep.quantum
        series["energy"][idx] = rep.total
        series["bd"][idx] = bd_entropy(state, params, bd_c)
        series["mass"][idx] = state.mass()
        series["min_sqrt_rho"][idx] = float(np.min(state.sqrt_rho.values))
        if idx > 0:
            # trapezoidal accumulation of both dissipation bookkeepings
            series["dissipation"][idx] = series["dissipation"][idx - 1] + 0.5 * dt * (
                prev_pair[0] + diss_rate_pair[0]
            )
            series["plain_dissipation"][idx] = series["plain_dissipation"][
                idx - 1
            ] + 0.5 * dt * (prev_pair[1] + diss_rate_pair[1])
        return state

    def dissipation_rates(rho_hat, m_hat):
        rq = _rho_quantities(grid, params, rho_hat)
        _, diag = _nonlinear_momentum_rhs(grid, params, rq, m_hat, mask)
        visc = float(np.sum(diag["visc_dissipation"]) * cell)
        plain = float(np.sum(diag["plain_dissipation"]) * cell)
        if check_lower_bound and visc < plain - 2.0 * params.nu * 1e-10:
            raise SolverAbort(
                "regularized dissipation fell below the rho |Du|^2 lower bound",
                _state_from_spectra(grid, rho_hat, m_hat, params, 0.0),
            )
        return visc, plain, diag["max_speed"]

    visc0, plain0, speed0 = dissipation_rates(rho_hat, m_hat)
    state0 = record(0, times[0], rho_hat, m_hat, (visc0, plain0), (visc0, plain0))
    checkpoints.append(state0)
    e0 = series["energy"][0]
    mass0 = series["mass"][0]
    prev_pair = (visc0, plain0)

    for n in range(1, n_steps + 1):
        rho_hat, m_hat = _acoustic_step(grid, params, rho_hat, m_hat, 0.5 * dt, tables)
        rq = _rho_quantities(grid, params, rho_hat)
        k1, _ = _nonlinear_momentum_rhs(grid, params, rq, m_hat, mask)
        k2, _ = _nonlinear_momentum_rhs(grid, params, rq, m_hat + 0.5 * dt * k1, mask)
        k3, _ = _nonlinear_momentum_rhs(grid, params, rq, m_hat + 0.5 * dt * k2, mask)
        k4, _ = _nonlinear_momentum_rhs(grid, params, rq, m_hat + dt * k3, mask)
        m_hat = m_hat + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho_hat, m_hat = _acoustic_step(grid, params, rho_hat, m_hat, 0.5 * dt, tables)

        if not (
            np.all(np.isfinite(m_hat.real)) and np.all(np.isfinite(rho_hat.real))
        ):
            raise SolverAbort(
                "non-finite spectrum during step",
                _state_from_spectra(
                    grid, np.nan_to_num(rho_hat), np.nan_to_num(m_hat), params, times[n]
                ),
            )
        visc, plain, speed = dissipation_rates(rho_hat, m_hat)
        state = record(n, times[n], rho_hat, m_hat, (visc, plain), prev_pair)
        prev_pair = (visc, plain)

        if params.delta_reg == 0.0 and series["min_sqrt_rho"][n] < params.rho_floor:
            raise SolverAbort("vacuum collapse: min sqrt(rho) below floor", state)
        if dt > 1.25 * dt_policy.evaluate(grid, params, speed):
            raise SolverAbort("CFL violation: flow accelerated past the dt policy", state)
        slack = series["energy"][n] + series["dissipation"][n] - e0
        if slack > energy_tol * abs(e0) * (times[n] - times[0] + dt) + 1e-13:
            raise SolverAbort(
                f"energy increase {slack:.3e} beyond tolerance at t={times[n]:.4g}", state
            )
        if abs(series["mass"][n] - mass0) > 1e-10 * abs(mass0):
            raise SolverAbort("mass drift beyond 1e-10 relative", state)

        if n % checkpoint_every == 0 or n == n_steps:
            checkpoints.append(state)

    return QnsResult(times, series, checkpoints, checkpoints[-1], dt, params)
