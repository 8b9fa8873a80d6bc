"""Host-aware gene expression model: a resource-limited bacterial host
expressing a heterologous protein (gfp).

The cell imports external nutrient, catabolizes it into energy, and
transcribes/translates five proteome classes (ribosomes r, transporters t,
metabolic enzymes m, housekeeping q, and gfp) that compete for ribosomes and
energy. Growth dilutes every intracellular species at a rate set by total
translational activity. Induction of gfp beyond a critical level drains
shared resources and lowers both expression and growth.

Model structure and default constants follow the mechanistic host model of
Weisse et al. (PNAS 2015) with the heterologous-gene extension used in
host-aware circuit design studies; defaults are shipped in
``data/hostaware_defaults.json``.

State vector layout (17 entries):
    [s_int, e,
     m_r, c_r, p_r,
     m_t, c_t, p_t,
     m_m, c_m, p_m,
     m_q, c_q, p_q,
     m_g, c_g, p_g]
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from numba import njit

from . import rosenbrock
from .core import LatentParams

N_STATE = 17
IDX_SI, IDX_E = 0, 1


class SimulationError(RuntimeError):
    """Integration failed; carries a snapshot of the offending state."""

    def __init__(self, message: str, state: np.ndarray | None = None):
        super().__init__(message)
        self.state = None if state is None else np.asarray(state).copy()


@dataclass(frozen=True)
class HostModelParams:
    """Kinetic constants of the host model; see the module docstring for roles."""

    s_ext: float          # external nutrient level (held constant)
    v_t: float            # max nutrient import rate
    K_t: float            # import half-saturation
    v_m: float            # max catabolic rate
    K_m: float            # catabolism half-saturation
    n_s: float            # energy units per substrate molecule
    w_r_max: float        # max transcription rates per class
    w_t_max: float
    w_m_max: float
    w_q_max: float
    w_gfp_max: float      # baseline (reference) gfp induction
    theta_r: float        # transcription energy thresholds
    theta_nr: float       # shared by t, m, q, gfp
    k_b: float            # ribosome-mRNA association (native classes)
    k_u: float            # ribosome-mRNA dissociation (native classes)
    k_b_gfp: float        # gfp-specific binding kinetics (latent)
    k_u_gfp: float
    d_m: float            # mRNA degradation
    d_p: float            # native protein degradation (0 in the source model)
    d_gfp: float          # heterologous protein degradation (tagged reporter)
    gamma_max: float      # peak elongation rate (aa/min)
    K_gamma: float        # elongation energy half-saturation
    n_r: float            # ribosome length (aa)
    n_x: float            # length of non-ribosomal proteins (aa)
    K_q: float            # housekeeping autoregulation threshold (mass fraction)
    h_q: float            # autoregulation Hill coefficient
    mass_ref: float       # reference cell mass M0 (aa) normalizing dilution

    def validate(self) -> None:
        for name in ("v_t", "K_t", "v_m", "K_m", "gamma_max", "K_gamma", "n_r", "n_x", "K_q", "mass_ref"):
            if getattr(self, name) <= 0:
                raise ValueError(f"host model constant {name} must be positive")
        if self.h_q < 1:
            raise ValueError("autoregulation Hill coefficient h_q must be >= 1")

    def with_latents(self, theta: LatentParams) -> "HostModelParams":
        """Apply the latent parameters (n_s, k_b, k_u of gfp) of an episode."""
        updates = {}
        mapping = {"n_s": "n_s", "k_b": "k_b_gfp", "k_u": "k_u_gfp"}
        for name, value in theta:
            if name not in mapping:
                raise KeyError(f"latent parameter {name!r} not part of the host model")
            updates[mapping[name]] = value
        return replace(self, **updates)

    def pack(self, w_gfp_action: float) -> np.ndarray:
        """Flatten into the kernel parameter vector."""
        return np.array([
            self.s_ext, self.v_t, self.K_t, self.v_m, self.K_m, self.n_s,
            self.w_r_max, self.w_t_max, self.w_m_max, self.w_q_max, w_gfp_action,
            self.theta_r, self.theta_nr,
            self.k_b, self.k_u, self.k_b_gfp, self.k_u_gfp,
            self.d_m, self.d_p, self.d_gfp,
            self.gamma_max, self.K_gamma, self.n_r, self.n_x,
            self.K_q, self.h_q, self.mass_ref,
        ])


def load_default_params() -> HostModelParams:
    text = resources.files("circuitrl.data").joinpath("hostaware_defaults.json").read_text()
    obj = json.loads(text)
    p = HostModelParams(**obj["params"])
    p.validate()
    return p


def default_initial_state(params: HostModelParams) -> np.ndarray:
    """Seed the cell with a plausible proteome near the reference mass."""
    total_mass = params.mass_ref
    y = np.zeros(N_STATE)
    y[IDX_SI] = 100.0
    y[IDX_E] = 1000.0
    y[4] = 0.5 * total_mass / params.n_r        # p_r
    each = 0.5 * total_mass / 3.0 / params.n_x
    y[7] = each                                  # p_t
    y[10] = each                                 # p_m
    y[13] = each                                 # p_q
    return y


@njit(cache=True, nogil=True)
def host_rhs(t, y, p, out):
    """Time derivatives of the 17-dimensional host state, written into ``out``."""
    (s_ext, v_t, K_t, v_m, K_m, n_s,
     w_r_max, w_t_max, w_m_max, w_q_max, w_g_max,
     theta_r, theta_nr,
     k_b, k_u, k_b_g, k_u_g,
     d_m, d_p, d_g,
     gamma_max, K_gamma, n_r, n_x,
     K_q, h_q, mass_ref) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7],
                            p[8], p[9], p[10], p[11], p[12], p[13], p[14],
                            p[15], p[16], p[17], p[18], p[19], p[20], p[21],
                            p[22], p[23], p[24], p[25], p[26])

    s_i = y[0]
    e = y[1]
    m_r, c_r, p_r = y[2], y[3], y[4]
    m_t, c_t, p_t = y[5], y[6], y[7]
    m_m, c_m, p_m = y[8], y[9], y[10]
    m_q, c_q, p_q = y[11], y[12], y[13]
    m_g, c_g, p_g = y[14], y[15], y[16]

    gamma_e = gamma_max * e / (K_gamma + e)

    # Dilution at the growth rate, normalized by the reference division mass:
    # the proteome relaxes to total mass ~ mass_ref, where the dynamic mass
    # sum and the reference coincide.
    c_sum = c_r + c_t + c_m + c_q + c_g
    lam = gamma_e * c_sum / mass_ref

    v_imp = p_t * v_t * s_ext / (K_t + s_ext)
    v_cat = p_m * v_m * s_i / (K_m + s_i)

    w_r = w_r_max * e / (theta_r + e)
    w_t = w_t_max * e / (theta_nr + e)
    w_m = w_m_max * e / (theta_nr + e)
    w_g = w_g_max * e / (theta_nr + e)
    rho_q = n_x * p_q / mass_ref
    w_q = w_q_max * e / (theta_nr + e) / (1.0 + (rho_q / K_q) ** h_q)

    # Translation fluxes (proteins/min); each completed round releases the
    # ribosome and the mRNA and consumes n(x) energy units.
    v_r = c_r * gamma_e / n_r
    v_t_fl = c_t * gamma_e / n_x
    v_m_fl = c_m * gamma_e / n_x
    v_q_fl = c_q * gamma_e / n_x
    v_g = c_g * gamma_e / n_x

    b_r = k_b * p_r * m_r
    b_t = k_b * p_r * m_t
    b_m = k_b * p_r * m_m
    b_q = k_b * p_r * m_q
    b_g = k_b_g * p_r * m_g
    u_r = k_u * c_r
    u_t = k_u * c_t
    u_m = k_u * c_m
    u_q = k_u * c_q
    u_g = k_u_g * c_g

    out[0] = v_imp - v_cat - lam * s_i
    out[1] = n_s * v_cat - gamma_e * c_sum - lam * e

    out[2] = w_r - b_r + u_r + v_r - (d_m + lam) * m_r
    out[3] = b_r - u_r - v_r - lam * c_r
    out[4] = (v_r - (d_p + lam) * p_r
              + (v_r + v_t_fl + v_m_fl + v_q_fl + v_g)
              + (u_r + u_t + u_m + u_q + u_g)
              - (b_r + b_t + b_m + b_q + b_g))

    out[5] = w_t - b_t + u_t + v_t_fl - (d_m + lam) * m_t
    out[6] = b_t - u_t - v_t_fl - lam * c_t
    out[7] = v_t_fl - (d_p + lam) * p_t

    out[8] = w_m - b_m + u_m + v_m_fl - (d_m + lam) * m_m
    out[9] = b_m - u_m - v_m_fl - lam * c_m
    out[10] = v_m_fl - (d_p + lam) * p_m

    out[11] = w_q - b_q + u_q + v_q_fl - (d_m + lam) * m_q
    out[12] = b_q - u_q - v_q_fl - lam * c_q
    out[13] = v_q_fl - (d_p + lam) * p_q

    out[14] = w_g - b_g + u_g + v_g - (d_m + lam) * m_g
    out[15] = b_g - u_g - v_g - lam * c_g
    out[16] = v_g - (d_g + lam) * p_g


def derivative(state: np.ndarray, params: HostModelParams, action_w_gfp_max: float) -> np.ndarray:
    """Evaluate the model right-hand side once (python-facing wrapper)."""
    y = np.asarray(state, dtype=float)
    if y.shape != (N_STATE,):
        raise ValueError(f"state must have {N_STATE} entries")
    if np.any(y < 0):
        raise ValueError("state must be nonnegative")
    out = np.empty(N_STATE)
    host_rhs(0.0, y, params.pack(action_w_gfp_max), out)
    if not np.all(np.isfinite(out)):
        raise SimulationError("non-finite derivative", state=y)
    return out


def growth_rate(state: np.ndarray, params: HostModelParams) -> float:
    """Dilution rate lambda = gamma(e) * sum(c_x) / M0 for a given state."""
    y = np.asarray(state, dtype=float)
    e = y[IDX_E]
    gamma_e = params.gamma_max * e / (params.K_gamma + e)
    c_sum = y[3] + y[6] + y[9] + y[12] + y[15]
    return float(gamma_e * c_sum / params.mass_ref)


def total_mass(state: np.ndarray, params: HostModelParams) -> float:
    """Dynamic proteome mass sum (equals mass_ref at the operating point)."""
    y = np.asarray(state, dtype=float)
    c_sum = y[3] + y[6] + y[9] + y[12] + y[15]
    return float(params.n_r * y[4] + params.n_x * (y[7] + y[10] + y[13] + y[16])
                 + params.n_r * c_sum)


@dataclass(frozen=True)
class SteadyStateResult:
    gfp_ss: float
    lambda_ss: float
    residual: float
    steady: bool
    t_reached: float
    state: np.ndarray


@dataclass(frozen=True)
class HostSimSettings:
    t_end: float = 1e5
    ss_tol: float = 1e-8
    rtol: float = 1e-6
    atol: float = 1e-9
    h0: float = 1e-4
    max_steps: int = 2_000_000
    # First phase runs at a coarse tolerance until the residual falls below
    # coarse_ss_tol, then the final approach re-tightens; near the fixed point
    # local errors vanish, so the tight phase costs only a handful of steps.
    coarse_rtol: float = 1e-4
    coarse_atol: float = 1e-7
    coarse_ss_tol: float = 1e-5
    coarse_clamp_tol: float = 1e-6


_REF_STATE_CACHE: dict[tuple, np.ndarray] = {}


def _reference_state(params: HostModelParams, settings: HostSimSettings) -> np.ndarray:
    """Uninduced steady state at the shipped default latents.

    Used as a warm start for every solve: it carries the conserved total
    protein mass and sits much closer to any induced steady state than a
    sparse seed culture does.
    """
    key = (params.s_ext, params.v_t, params.v_m, params.w_r_max, params.w_q_max,
           params.gamma_max, params.n_r, params.n_x, settings.t_end)
    cached = _REF_STATE_CACHE.get(key)
    if cached is not None:
        return cached
    y0 = default_initial_state(params)
    y, _, status, _, steady, _ = rosenbrock.integrate(
        host_rhs, 0.0, y0, settings.t_end, params.pack(0.0),
        settings.rtol, settings.atol, settings.h0, settings.max_steps,
        True, settings.ss_tol)
    if status != rosenbrock.OK or not steady:
        raise SimulationError("reference steady state did not converge", state=y)
    _REF_STATE_CACHE[key] = y
    return y


def simulate_to_steady_state(theta: LatentParams, action: float,
                             settings: HostSimSettings = HostSimSettings(),
                             params: HostModelParams | None = None) -> SteadyStateResult:
    """Integrate until the scaled derivative norm drops below the tolerance.

    Returns steady-state gfp abundance and growth rate. A run that hits the
    time cap before meeting the tolerance is returned flagged (steady=False)
    with its residual rather than raised, since slow-growth corners of the
    prior relax arbitrarily slowly.
    """
    base = load_default_params() if params is None else params
    full = base.with_latents(theta)
    if action < 0:
        raise ValueError("induction action must be nonnegative")
    p = full.pack(action)
    y0 = _reference_state(base, settings)

    # Coarse phase: march quickly toward the attractor.
    y1, t1, status, residual, near, _ = rosenbrock.integrate(
        host_rhs, 0.0, y0.copy(), settings.t_end, p,
        settings.coarse_rtol, settings.coarse_atol, 1.0, settings.max_steps,
        True, settings.coarse_ss_tol, settings.coarse_clamp_tol)

    if status == rosenbrock.OK:
        # Pseudo-transient continuation to the equilibrium; falls back to
        # plain integration below. PTC stays robust for the slow-growth
        # corners of the prior where the Jacobian is nearly singular and the
        # physical relaxation outlasts the integration cap.
        yn, resn, converged = rosenbrock.ptc_refine(
            host_rhs, t1, y1, p, settings.ss_tol, 500, 10.0)
        if converged:
            return SteadyStateResult(
                gfp_ss=float(yn[16]),
                lambda_ss=growth_rate(yn, full),
                residual=float(resn),
                steady=True,
                t_reached=float(t1),
                state=yn,
            )

    if status != rosenbrock.OK:
        # Coarse phase failed outright; restart tight from the warm start.
        y1, t1 = y0.copy(), 0.0

    # Tight phase: final approach at the contract tolerances.
    y, t, status, residual, steady, _ = rosenbrock.integrate(
        host_rhs, t1, y1, settings.t_end, p,
        settings.rtol, settings.atol, 1e-2, settings.max_steps,
        True, settings.ss_tol)
    if status == rosenbrock.STEP_UNDERFLOW:
        raise SimulationError(f"integrator step underflow at t={t:g}", state=y)
    if status == rosenbrock.NONFINITE_STATE:
        raise SimulationError(f"non-finite state at t={t:g}", state=y)
    if status == rosenbrock.NEGATIVE_STATE:
        raise SimulationError(f"negative state beyond clamp tolerance at t={t:g}", state=y)
    if status == rosenbrock.MAX_STEPS_EXCEEDED:
        raise SimulationError(f"step budget exhausted at t={t:g}", state=y)
    return SteadyStateResult(
        gfp_ss=float(y[16]),
        lambda_ss=growth_rate(y, full),
        residual=float(residual),
        steady=bool(steady),
        t_reached=float(t),
        state=y,
    )


def response_curve(theta: LatentParams, action_grid: np.ndarray,
                   settings: HostSimSettings = HostSimSettings(),
                   params: HostModelParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state (gfp, growth) along a sorted grid of induction actions."""
    grid = np.asarray(action_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("action grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) < 0):
        raise ValueError("action grid must be sorted ascending")
    if params is None:
        params = load_default_params()
    gfp = np.empty(grid.size)
    lam = np.empty(grid.size)
    for i, a in enumerate(grid):
        try:
            res = simulate_to_steady_state(theta, float(a), settings, params)
        except SimulationError as exc:
            raise SimulationError(f"grid point {i} (action={a:g}) failed: {exc}",
                                  state=exc.state) from exc
        gfp[i] = res.gfp_ss
        lam[i] = res.lambda_ss
    return gfp, lam
