"""Momentum transport with the solidification viscosity, artificial
pressure, and the mass-diffusion coupling term.

The viscous stage is implicit (the stiff penalty viscosity forbids an
explicit treatment) and is assembled from the energy quadratic form

    E(w) = sum_cells vol * (2 mu_n (D11^2 + D22^2) + lam_n (div)^2)
         + sum_nodes vol_n * 4 mu_n D12^2

so the matrix is symmetric positive definite for every mu_n >= mu > 0,
mu_n + lam_n >= 0.  Convection, the pressure gradient, and the coupling
source are explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from .continuity import PenaltyParams, check_cfl
from .errors import LinearSolveDiverged, NegativeDensity, VacuumCell
from .fields import (StaggeredGrid, VectorField, cell_gradient, run_chunked,
                     tree_sum)
from .geometry import (BoundaryData, CutoffProfile, DomainSpec, wall_cutoff)

VACUUM_FLOOR = 1e-10

# verify() fault-injection hooks; empty in normal operation
_FAULTS: set = set()


def penalty_ramp(z):
    """Smooth, convex, nonnegative ramp vanishing for z <= 0."""
    z = np.asarray(z, dtype=np.float64)
    return np.where(z > 0.0, z * z, 0.0)


@dataclass(frozen=True)
class ViscosityModel:
    mu: float
    lam: float
    stiffness: float          # solidification strength
    offset: float             # erosion radius added back inside the ramp
    cutoff: CutoffProfile     # wall cutoff keeping walls penalty-free
    ramp: callable = field(default=penalty_ramp, repr=False)

    @classmethod
    def from_params(cls, params: PenaltyParams, domain: DomainSpec):
        return cls(mu=params.mu, lam=params.lam, stiffness=params.n_solid,
                   offset=params.r_moll, cutoff=wall_cutoff(domain))


def viscosity_fields(chi: np.ndarray, model: ViscosityModel,
                     wall_distance: np.ndarray):
    """Pointwise solidification viscosities mu_n, lam_n on cells."""
    bump = model.stiffness * model.ramp(chi + model.offset) \
        * model.cutoff.value(wall_distance)
    return model.mu + bump, model.lam + bump


def pressure(rho, params: PenaltyParams):
    """Isentropic pressure with the artificial augmentation."""
    rho = _nonneg(rho)
    return params.a * rho ** params.gamma + params.delta * rho ** params.beta


def pressure_potential(rho, params: PenaltyParams):
    rho = _nonneg(rho)
    return (params.a * rho ** params.gamma / (params.gamma - 1.0)
            + params.delta * rho ** params.beta / (params.beta - 1.0))


def pressure_potential_d1(rho, params: PenaltyParams):
    rho = _nonneg(rho)
    return (params.a * params.gamma / (params.gamma - 1.0)
            * rho ** (params.gamma - 1.0)
            + params.delta * params.beta / (params.beta - 1.0)
            * rho ** (params.beta - 1.0))


def pressure_potential_d2(rho, params: PenaltyParams, floor: float = 1e-12):
    # gamma < 2 makes P'' singular at vacuum; the floor keeps ledger
    # entries finite.
    rho = np.maximum(_nonneg(rho), floor)
    return (params.a * params.gamma * rho ** (params.gamma - 2.0)
            + params.delta * params.beta * rho ** (params.beta - 2.0))


def sound_speed_max(rho, params: PenaltyParams) -> float:
    rmax = float(np.max(_nonneg(rho)))
    dp = params.a * params.gamma * rmax ** (params.gamma - 1.0) \
        + params.delta * params.beta * rmax ** (params.beta - 1.0)
    return float(np.sqrt(dp))


def _nonneg(rho):
    rho = np.asarray(rho, dtype=np.float64)
    if np.min(rho) < -1e-12:
        raise NegativeDensity(f"density minimum {np.min(rho)}")
    return np.maximum(rho, 0.0)


def stress(d11, d12, d22, mu_n, lam_n):
    """Viscous stress tensor 2 mu_n D + lam_n tr(D) I on cells."""
    lam_eff = -lam_n if "flip-lambda-sign" in _FAULTS else lam_n
    tr = lam_eff * (d11 + d22)
    return 2.0 * mu_n * d11 + tr, 2.0 * mu_n * d12, 2.0 * mu_n * d22 + tr


# ---------------------------------------------------------------------------
# Implicit viscous operator: geometry-only pieces are cached per grid.
# ---------------------------------------------------------------------------

_ops_cache: dict = {}


def _grid_ops(grid: StaggeredGrid):
    key = (grid.nx, grid.ny, grid.dx, grid.dy)
    hit = _ops_cache.get(key)
    if hit is not None:
        return hit
    nx, ny, dx, dy = grid.nx, grid.ny, grid.dx, grid.dy
    nu = (nx + 1) * ny
    nv = nx * (ny + 1)
    ndof = nu + nv

    def uidx(i, j):
        return i * ny + j

    def vidx(i, j):
        return nu + i * (ny + 1) + j

    iu, ju = np.meshgrid(np.arange(nx + 1), np.arange(ny), indexing="ij")
    iv, jv = np.meshgrid(np.arange(nx), np.arange(ny + 1), indexing="ij")
    ic, jc = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    inn, jnn = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1),
                           indexing="ij")
    ncell = nx * ny
    nnode = (nx + 1) * (ny + 1)
    cidx = (ic * ny + jc).ravel()
    nidx = (inn * (ny + 1) + jnn).ravel()

    def mat(rows, cols, vals, nrows):
        return sparse.csr_matrix(
            (np.concatenate([np.asarray(v, dtype=np.float64).ravel()
                             for v in vals]),
             (np.concatenate([np.asarray(r).ravel() for r in rows]),
              np.concatenate([np.asarray(c).ravel() for c in cols]))),
            shape=(nrows, ndof))

    # D11 = du/dx on cells
    g_d11 = mat([cidx, cidx],
                [uidx(ic + 1, jc), uidx(ic, jc)],
                [np.full(ncell, 1 / dx), np.full(ncell, -1 / dx)], ncell)
    # D22 = dv/dy on cells
    g_d22 = mat([cidx, cidx],
                [vidx(ic, jc + 1), vidx(ic, jc)],
                [np.full(ncell, 1 / dy), np.full(ncell, -1 / dy)], ncell)
    g_div = g_d11 + g_d22

    # du/dy at nodes: interior rows centered, wall rows one-sided against
    # the tangential wall trace (affine part handled separately).
    rows, cols, vals = [], [], []
    interior = (jnn >= 1) & (jnn <= ny - 1)
    r = nidx[interior.ravel()]
    ii = inn[interior]
    jj = jnn[interior]
    rows += [r, r]
    cols += [uidx(ii, jj), uidx(ii, jj - 1)]
    vals += [np.full(r.size, 1 / dy), np.full(r.size, -1 / dy)]
    bot = nidx[(jnn == 0).ravel()]
    rows += [bot]
    cols += [uidx(np.arange(nx + 1), 0)]
    vals += [np.full(nx + 1, 2 / dy)]
    top = nidx[(jnn == ny).ravel()]
    rows += [top]
    cols += [uidx(np.arange(nx + 1), ny - 1)]
    vals += [np.full(nx + 1, -2 / dy)]
    g_dudy = mat(rows, cols, vals, nnode)

    rows, cols, vals = [], [], []
    interior = (inn >= 1) & (inn <= nx - 1)
    r = nidx[interior.ravel()]
    ii = inn[interior]
    jj = jnn[interior]
    rows += [r, r]
    cols += [vidx(ii, jj), vidx(ii - 1, jj)]
    vals += [np.full(r.size, 1 / dx), np.full(r.size, -1 / dx)]
    lef = nidx[(inn == 0).ravel()]
    rows += [lef]
    cols += [vidx(0, np.arange(ny + 1))]
    vals += [np.full(ny + 1, 2 / dx)]
    rig = nidx[(inn == nx).ravel()]
    rows += [rig]
    cols += [vidx(nx - 1, np.arange(ny + 1))]
    vals += [np.full(ny + 1, -2 / dx)]
    g_dvdx = mat(rows, cols, vals, nnode)

    g_d12 = 0.5 * (g_dudy + g_dvdx)

    bnd = np.zeros(ndof, dtype=bool)
    bnd[uidx(np.zeros(ny, int), np.arange(ny))] = True
    bnd[uidx(np.full(ny, nx), np.arange(ny))] = True
    bnd[vidx(np.arange(nx), np.zeros(nx, int))] = True
    bnd[vidx(np.arange(nx), np.full(nx, ny))] = True

    # node area factors: quarter of a cell per adjacent cell
    adj = np.full((nx + 1, ny + 1), 4.0)
    adj[0, :] = adj[-1, :] = 2.0
    adj[:, 0] = adj[:, -1] = 2.0
    adj[0, 0] = adj[0, -1] = adj[-1, 0] = adj[-1, -1] = 1.0
    node_vol = (adj / 4.0).ravel() * dx * dy

    ops = {
        "g_d11": g_d11, "g_d22": g_d22, "g_div": g_div, "g_d12": g_d12,
        "boundary": bnd, "interior": ~bnd, "node_vol": node_vol,
        "nu": nu, "nv": nv, "uidx": uidx, "vidx": vidx,
    }
    if len(_ops_cache) > 6:
        _ops_cache.clear()
    _ops_cache[key] = ops
    return ops


def _node_average(grid, cells):
    """Cell field to nodes by adjacent-cell average."""
    nx, ny = grid.nx, grid.ny
    s = np.zeros((nx + 1, ny + 1))
    c = np.zeros((nx + 1, ny + 1))
    for di in (0, 1):
        for dj in (0, 1):
            s[di:nx + di, dj:ny + dj] += cells
            c[di:nx + di, dj:ny + dj] += 1.0
    return s / c


def _d12_affine(grid, bc: BoundaryData):
    """Constant part of the node D12 rows coming from tangential wall
    traces (zero trace -> zero vector)."""
    nx, ny, dx, dy = grid.nx, grid.ny, grid.dx, grid.dy
    c = np.zeros((nx + 1, ny + 1))
    xf, yf = grid.xf(), grid.yf()
    ub_b = np.interp(xf, grid.xc(), bc.ub["bottom"][:, 0])
    ub_t = np.interp(xf, grid.xc(), bc.ub["top"][:, 0])
    vb_l = np.interp(yf, grid.yc(), bc.ub["left"][:, 1])
    vb_r = np.interp(yf, grid.yc(), bc.ub["right"][:, 1])
    # du/dy one-sided rows carry -(2/dy) ub_t;  dv/dx rows -(2/dx) vb
    c[:, 0] += -2.0 / dy * ub_b
    c[:, -1] += 2.0 / dy * ub_t
    c[0, :] += -2.0 / dx * vb_l
    c[-1, :] += 2.0 / dx * vb_r
    return 0.5 * c.ravel()


@dataclass
class MomentumStepInfo:
    iterations: int
    solve_residual: float
    visc_quadform: float
    pinned_vacuum_faces: int


def _upwind_convection(grid, rho, vel, bc):
    """Conservative upwind divergence of (m x u) on interior faces."""
    nx, ny, dx, dy = grid.nx, grid.ny, grid.dx, grid.dy
    u, v = vel.u, vel.v
    rbu = np.empty((nx + 1, ny))
    rbu[1:-1, :] = 0.5 * (rho[:-1, :] + rho[1:, :])
    rbu[0, :] = rho[0, :]
    rbu[-1, :] = rho[-1, :]
    rbv = np.empty((nx, ny + 1))
    rbv[:, 1:-1] = 0.5 * (rho[:, :-1] + rho[:, 1:])
    rbv[:, 0] = rho[:, 0]
    rbv[:, -1] = rho[:, -1]
    mx = rbu * u
    my = rbv * v

    conv_u = np.zeros((nx + 1, ny))
    conv_v = np.zeros((nx, ny + 1))

    # x-momentum: x-fluxes at cell centers, y-fluxes at nodes
    fxc = np.empty((nx, ny))

    def wx(lo, hi):
        a = 0.5 * (u[lo:hi, :] + u[lo + 1:hi + 1, :])
        fxc[lo:hi, :] = a * np.where(a > 0, mx[lo:hi, :], mx[lo + 1:hi + 1, :])

    run_chunked(nx, wx)

    fxn = np.empty((nx + 1, ny + 1))
    a_in = 0.5 * (v[:-1, :] + v[1:, :])           # nodes i=1..nx-1
    ub_b = np.interp(grid.xf(), grid.xc(), bc.ub["bottom"][:, 0])
    ub_t = np.interp(grid.xf(), grid.xc(), bc.ub["top"][:, 0])
    fxn[0, :] = 0.0
    fxn[-1, :] = 0.0
    mid = np.where(a_in[:, 1:-1] > 0, mx[1:-1, :-1], mx[1:-1, 1:])
    fxn[1:-1, 1:-1] = a_in[:, 1:-1] * mid
    ghost_b = rbu[1:-1, 0] * ub_b[1:-1]
    ghost_t = rbu[1:-1, -1] * ub_t[1:-1]
    fxn[1:-1, 0] = a_in[:, 0] * np.where(a_in[:, 0] > 0, ghost_b, mx[1:-1, 0])
    fxn[1:-1, -1] = a_in[:, -1] * np.where(a_in[:, -1] > 0, mx[1:-1, -1],
                                           ghost_t)
    conv_u[1:-1, :] = (fxc[1:, :] - fxc[:-1, :]) / dx \
        + (fxn[1:-1, 1:] - fxn[1:-1, :-1]) / dy

    # y-momentum: y-fluxes at cell centers, x-fluxes at nodes
    fyc = np.empty((nx, ny))

    def wy(lo, hi):
        a = 0.5 * (v[lo:hi, :-1] + v[lo:hi, 1:])
        fyc[lo:hi, :] = a * np.where(a > 0, my[lo:hi, :-1], my[lo:hi, 1:])

    run_chunked(nx, wy)

    fyn = np.empty((nx + 1, ny + 1))
    b_in = 0.5 * (u[:, :-1] + u[:, 1:])           # nodes j=1..ny-1
    vb_l = np.interp(grid.yf(), grid.yc(), bc.ub["left"][:, 1])
    vb_r = np.interp(grid.yf(), grid.yc(), bc.ub["right"][:, 1])
    fyn[:, 0] = 0.0
    fyn[:, -1] = 0.0
    mid = np.where(b_in[1:-1, :] > 0, my[:-1, 1:-1], my[1:, 1:-1])
    fyn[1:-1, 1:-1] = b_in[1:-1, :] * mid
    ghost_l = rbv[0, 1:-1] * vb_l[1:-1]
    ghost_r = rbv[-1, 1:-1] * vb_r[1:-1]
    fyn[0, 1:-1] = b_in[0, :] * np.where(b_in[0, :] > 0, ghost_l, my[0, 1:-1])
    fyn[-1, 1:-1] = b_in[-1, :] * np.where(b_in[-1, :] > 0, my[-1, 1:-1],
                                           ghost_r)
    conv_v[:, 1:-1] = (fyc[:, 1:] - fyc[:, :-1]) / dy \
        + (fyn[1:, 1:-1] - fyn[:-1, 1:-1]) / dx

    return conv_u, conv_v, rbu, rbv


def momentum_step(grid: StaggeredGrid, domain: DomainSpec,
                  rho_old: np.ndarray, rho_new: np.ndarray,
                  vel: VectorField, chi: np.ndarray,
                  params: PenaltyParams, dt: float, bc: BoundaryData,
                  model: ViscosityModel = None, source=None,
                  rigid_pin: VectorField = None, hold_mask=None):
    """Advance the face momentum one step; returns (VectorField, info).

    rho_new must come from the same step's continuity update (sequential
    splitting).  rigid_pin supplies replacement velocities for faces that
    fell below the vacuum floor (defaults to the boundary extension).
    hold_mask (u-face and v-face booleans) tethers those faces to the
    rigid_pin values inside the implicit solve; used by the held-body
    diagnostic mode, not by the free-motion scheme.
    """
    check_cfl(grid, vel, bc, dt)
    nx, ny, dx, dy = grid.nx, grid.ny, grid.dx, grid.dy
    vol = grid.cell_volume
    if model is None:
        model = ViscosityModel.from_params(params, domain)

    xc, yc = grid.cell_xy()
    wall_d = domain.boundary_distance(xc, yc)
    mu_n, lam_n = viscosity_fields(chi, model, wall_d)
    mu_node = _node_average(grid, mu_n)

    conv_u, conv_v, rbu_old, rbv_old = _upwind_convection(grid, rho_old,
                                                          vel, bc)

    p = pressure(rho_new, params)
    gp_u = np.zeros((nx + 1, ny))
    gp_u[1:-1, :] = (p[1:, :] - p[:-1, :]) / dx
    gp_v = np.zeros((nx, ny + 1))
    gp_v[:, 1:-1] = (p[:, 1:] - p[:, :-1]) / dy

    # coupling source eps * grad(rho) . grad(u), new density gradient
    grx_c, gry_c = cell_gradient(grid, rho_new)
    ec_u = np.zeros((nx + 1, ny))
    drdx_u = (rho_new[1:, :] - rho_new[:-1, :]) / dx
    drdy_u = 0.5 * (gry_c[:-1, :] + gry_c[1:, :])
    dudx = (vel.u[2:, :] - vel.u[:-2, :]) / (2 * dx)
    dudy = np.empty((nx - 1, ny))
    dudy[:, 1:-1] = (vel.u[1:-1, 2:] - vel.u[1:-1, :-2]) / (2 * dy)
    dudy[:, 0] = (vel.u[1:-1, 1] - vel.u[1:-1, 0]) / dy
    dudy[:, -1] = (vel.u[1:-1, -1] - vel.u[1:-1, -2]) / dy
    ec_u[1:-1, :] = params.eps * (drdx_u * dudx + drdy_u * dudy)

    ec_v = np.zeros((nx, ny + 1))
    drdy_v = (rho_new[:, 1:] - rho_new[:, :-1]) / dy
    drdx_v = 0.5 * (grx_c[:, :-1] + grx_c[:, 1:])
    dvdy = (vel.v[:, 2:] - vel.v[:, :-2]) / (2 * dy)
    dvdx = np.empty((nx, ny - 1))
    dvdx[1:-1, :] = (vel.v[2:, 1:-1] - vel.v[:-2, 1:-1]) / (2 * dx)
    dvdx[0, :] = (vel.v[1, 1:-1] - vel.v[0, 1:-1]) / dx
    dvdx[-1, :] = (vel.v[-1, 1:-1] - vel.v[-2, 1:-1]) / dx
    ec_v[:, 1:-1] = params.eps * (drdy_v * dvdy + drdx_v * dvdx)

    # new-density face mass, for the implicit mass term
    rbu_new = np.empty((nx + 1, ny))
    rbu_new[1:-1, :] = 0.5 * (rho_new[:-1, :] + rho_new[1:, :])
    rbu_new[0, :] = rho_new[0, :]
    rbu_new[-1, :] = rho_new[-1, :]
    rbv_new = np.empty((nx, ny + 1))
    rbv_new[:, 1:-1] = 0.5 * (rho_new[:, :-1] + rho_new[:, 1:])
    rbv_new[:, 0] = rho_new[:, 0]
    rbv_new[:, -1] = rho_new[:, -1]

    ops = _grid_ops(grid)
    ndof = ops["nu"] + ops["nv"]
    mass = np.concatenate([(rbu_new * vol / dt).ravel(),
                           (rbv_new * vol / dt).ravel()])
    rhs = np.concatenate([
        (rbu_old * vel.u * vol / dt - (conv_u + gp_u + ec_u) * vol).ravel(),
        (rbv_old * vel.v * vol / dt - (conv_v + gp_v + ec_v) * vol).ravel()])
    if source is not None:
        src_u, src_v = source
        rhs += np.concatenate([(np.asarray(src_u) * vol).ravel(),
                               (np.asarray(src_v) * vol).ravel()])

    w_mu = (2.0 * mu_n * vol).ravel()
    w_lam = (lam_n * vol).ravel()
    w_node = 4.0 * mu_node.ravel() * ops["node_vol"]
    A = (ops["g_d11"].T @ sparse.diags(w_mu) @ ops["g_d11"]
         + ops["g_d22"].T @ sparse.diags(w_mu) @ ops["g_d22"]
         + ops["g_div"].T @ sparse.diags(w_lam) @ ops["g_div"]
         + ops["g_d12"].T @ sparse.diags(w_node) @ ops["g_d12"])
    c12 = _d12_affine(grid, bc)
    if np.any(c12):
        rhs -= ops["g_d12"].T @ (w_node * c12)
    A = A + sparse.diags(mass)

    # Dirichlet values on boundary faces; vacuum faces get pinned too.
    x_full = np.zeros(ndof)
    uidx, vidx = ops["uidx"], ops["vidx"]
    x_full[uidx(np.zeros(ny, int), np.arange(ny))] = bc.ub["left"][:, 0]
    x_full[uidx(np.full(ny, nx), np.arange(ny))] = bc.ub["right"][:, 0]
    x_full[vidx(np.arange(nx), np.zeros(nx, int))] = bc.ub["bottom"][:, 1]
    x_full[vidx(np.arange(nx), np.full(nx, ny))] = bc.ub["top"][:, 1]

    pinned = ops["boundary"].copy()
    if hold_mask is not None:
        hm = np.concatenate([np.asarray(hold_mask[0], bool).ravel(),
                             np.asarray(hold_mask[1], bool).ravel()])
        hm &= ~ops["boundary"]
        if rigid_pin is not None:
            pv = np.concatenate([rigid_pin.u.ravel(), rigid_pin.v.ravel()])
            x_full[hm] = pv[hm]
        pinned |= hm
    face_rho = np.concatenate([rbu_new.ravel(), rbv_new.ravel()])
    vac = (~ops["boundary"]) & (face_rho <= VACUUM_FLOOR)
    n_vac = int(np.count_nonzero(vac))
    if n_vac:
        m_old = np.concatenate([(rbu_old * vel.u).ravel(),
                                (rbv_old * vel.v).ravel()])
        if np.max(np.abs(m_old[vac])) > 1e-8:
            raise VacuumCell("vacuum face carries nonzero momentum")
        pin_field = rigid_pin if rigid_pin is not None else bc.u_ext
        if pin_field is not None:
            pin_vals = np.concatenate([pin_field.u.ravel(),
                                       pin_field.v.ravel()])
            x_full[vac] = pin_vals[vac]
        pinned |= vac

    free = ~pinned
    A = A.tocsr()
    Aff = A[free][:, free]
    b_free = rhs[free] - A[free][:, pinned] @ x_full[pinned]

    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    dinv = 1.0 / Aff.diagonal()
    x0 = np.concatenate([vel.u.ravel(), vel.v.ravel()])[free]
    sol, info = cg(Aff, b_free, x0=x0, M=sparse.diags(dinv),
                   rtol=1e-10, atol=0.0, maxiter=10 * nx * ny,
                   callback=count)
    bnorm = float(np.linalg.norm(b_free))
    res = float(np.linalg.norm(b_free - Aff @ sol))
    rel = res / bnorm if bnorm > 0 else res
    if info != 0 and rel > 1e-8:
        raise LinearSolveDiverged(
            f"momentum viscous CG: info={info}, rel residual {rel}")
    x_full[free] = sol

    u_new = x_full[:ops["nu"]].reshape(nx + 1, ny)
    v_new = x_full[ops["nu"]:].reshape(nx, ny + 1)
    out = VectorField(grid, u_new, v_new).check_finite()

    r11 = ops["g_d11"] @ x_full
    r22 = ops["g_d22"] @ x_full
    rdv = ops["g_div"] @ x_full
    r12 = ops["g_d12"] @ x_full + c12
    quad = tree_sum(w_mu * (r11 ** 2 + r22 ** 2)) \
        + tree_sum(w_lam * rdv ** 2) + tree_sum(w_node * r12 ** 2)

    return out, MomentumStepInfo(iterations=iters, solve_residual=rel,
                                 visc_quadform=quad,
                                 pinned_vacuum_faces=n_vac)


def viscous_quadratic_form(grid: StaggeredGrid, domain: DomainSpec,
                           chi: np.ndarray, params: PenaltyParams,
                           vel: VectorField, bc: BoundaryData = None,
                           model: ViscosityModel = None) -> float:
    """E(u) of the assembled implicit operator; nonnegative for any
    admissible viscosities."""
    if model is None:
        model = ViscosityModel.from_params(params, domain)
    xc, yc = grid.cell_xy()
    mu_n, lam_n = viscosity_fields(chi, model,
                                   domain.boundary_distance(xc, yc))
    mu_node = _node_average(grid, mu_n)
    ops = _grid_ops(grid)
    vol = grid.cell_volume
    x = np.concatenate([vel.u.ravel(), vel.v.ravel()])
    c12 = _d12_affine(grid, bc) if bc is not None else 0.0
    r11 = ops["g_d11"] @ x
    r22 = ops["g_d22"] @ x
    rdv = ops["g_div"] @ x
    r12 = ops["g_d12"] @ x + c12
    w_mu = (2.0 * mu_n * vol).ravel()
    w_lam = (lam_n * vol).ravel()
    w_node = 4.0 * mu_node.ravel() * ops["node_vol"]
    return tree_sum(w_mu * (r11 ** 2 + r22 ** 2)) \
        + tree_sum(w_lam * rdv ** 2) + tree_sum(w_node * r12 ** 2)
