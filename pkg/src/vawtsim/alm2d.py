"""2D actuator-line solver: incompressible Navier-Stokes with Smagorinsky LES.

Discretization: uniform staggered (MAC) grid. Pressure p and eddy viscosity
live at cell centers, u at vertical faces, v at horizontal faces:

    p, nu_sgs: (ny, nx)      u: (ny, nx + 1)      v: (ny + 1, nx)

Cell (j, i) spans [origin + (i*dx, j*dy), origin + ((i+1)*dx, (j+1)*dy)].
Each step is a forward-Euler predictor (divergence-form advection,
conservative variable-viscosity diffusion, body forces) followed by a
pressure projection, so the discrete divergence vanishes to solver
tolerance after every step. Blade forces enter as Gaussian-smoothed
actuator sources; the fluid receives the reaction force -F.

Boundary conditions per side: "inflow" (Dirichlet velocity), "outflow"
(zero-pressure), "slip" (no penetration, zero shear), "periodic"
(opposite sides must pair up).
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .series import ForceSeries, azimuth_degrees
from .airfoil import blade_load, relative_flow
from .turbine import blade_state, outward_normal, tip_speed_ratio

BC_KINDS = ("inflow", "outflow", "slip", "periodic")


class ConfigurationError(ValueError):
    """Raised when a grid, source, or scenario violates a resolution rule."""


class StepError(RuntimeError):
    """Raised when dt exceeds the advective or diffusive stability limit."""

    def __init__(self, message, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt


@dataclass(frozen=True)
class BoundaryCondition:
    """One side of the domain: kind plus the inflow velocity if applicable."""

    kind: str
    velocity: tuple = None

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ConfigurationError(
                f"unknown boundary kind {self.kind!r}, expected one of {BC_KINDS}"
            )
        if self.kind == "inflow":
            if self.velocity is None:
                raise ConfigurationError("inflow boundary needs a velocity")
            vel = tuple(float(c) for c in self.velocity)
            if len(vel) != 2:
                raise ConfigurationError("inflow velocity must be a 2-vector")
            object.__setattr__(self, "velocity", vel)
        elif self.velocity is not None:
            raise ConfigurationError(
                f"{self.kind} boundary takes no velocity"
            )


OUTFLOW = BoundaryCondition("outflow")
SLIP = BoundaryCondition("slip")
PERIODIC = BoundaryCondition("periodic")


def inflow(u, v=0.0):
    return BoundaryCondition("inflow", (float(u), float(v)))


@dataclass(frozen=True)
class FlowGrid:
    """Uniform staggered grid with a boundary condition on each side."""

    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple
    left: BoundaryCondition
    right: BoundaryCondition
    bottom: BoundaryCondition
    top: BoundaryCondition

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ConfigurationError(
                f"grid needs nx, ny >= 4, got {self.nx} x {self.ny}"
            )
        if self.dx <= 0.0 or self.dy <= 0.0:
            raise ConfigurationError("cell sizes must be positive")
        object.__setattr__(self, "origin",
                           tuple(float(c) for c in self.origin))
        if (self.left.kind == "periodic") != (self.right.kind == "periodic"):
            raise ConfigurationError("periodic left/right sides must pair up")
        if (self.bottom.kind == "periodic") != (self.top.kind == "periodic"):
            raise ConfigurationError("periodic bottom/top sides must pair up")

    @classmethod
    def periodic_box(cls, nx, ny, lx, ly, origin=(0.0, 0.0)):
        """Fully periodic box of physical size lx x ly."""
        return cls(nx, ny, lx / nx, ly / ny, origin,
                   PERIODIC, PERIODIC, PERIODIC, PERIODIC)

    @classmethod
    def channel(cls, nx, ny, dx, dy, origin, inflow_velocity):
        """Left inflow, right zero-pressure outflow, slip top and bottom."""
        u, v = inflow_velocity
        return cls(nx, ny, dx, dy, origin, inflow(u, v), OUTFLOW, SLIP, SLIP)

    @property
    def periodic_x(self):
        return self.left.kind == "periodic"

    @property
    def periodic_y(self):
        return self.bottom.kind == "periodic"

    def cell_centers(self):
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.dx
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.dy
        return x, y

    @property
    def extent(self):
        return (self.origin[0], self.origin[0] + self.nx * self.dx,
                self.origin[1], self.origin[1] + self.ny * self.dy)


@dataclass(frozen=True, eq=False)
class FlowState:
    """Velocity, pressure and eddy-viscosity fields at one instant."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    nu_sgs: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        ny, nxp = self.u.shape
        if self.v.shape != (ny + 1, nxp - 1):
            raise ValueError(
                f"u shape {self.u.shape} and v shape {self.v.shape} disagree"
            )
        if self.p.shape != (ny, nxp - 1) or self.nu_sgs.shape != (ny, nxp - 1):
            raise ValueError("p and nu_sgs must be cell-centered (ny, nx)")

    @classmethod
    def uniform(cls, grid, velocity=(0.0, 0.0)):
        u = np.full((grid.ny, grid.nx + 1), float(velocity[0]))
        v = np.full((grid.ny + 1, grid.nx), float(velocity[1]))
        p = np.zeros((grid.ny, grid.nx))
        return cls(u, v, p, np.zeros_like(p), 0.0)


@dataclass(frozen=True)
class ActuatorSource:
    """Point force of one blade section, smoothed over width epsilon."""

    position: tuple
    force: tuple
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "position",
                           tuple(float(c) for c in self.position))
        object.__setattr__(self, "force",
                           tuple(float(c) for c in self.force))
        if len(self.position) != 2 or len(self.force) != 2:
            raise ValueError("position and force must be 2-vectors")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not all(math.isfinite(c) for c in self.force):
            raise ValueError("force components must be finite")


@dataclass(frozen=True)
class ALMConfig:
    """Actuator-line solver settings (grid resolution, LES model, domain)."""

    cells_per_radius: float = 20.0
    epsilon_cells: float = 2.5
    c_s: float = 0.17
    nu: float = 1.5e-5
    upstream_radii: float = 5.0
    downstream_radii: float = 15.0
    half_height_radii: float = 5.0

    def __post_init__(self):
        for name in ("cells_per_radius", "epsilon_cells", "upstream_radii",
                     "downstream_radii", "half_height_radii"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.c_s < 0.0:
            raise ValueError(f"c_s must be >= 0, got {self.c_s}")
        if self.nu < 0.0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")


# ---------------------------------------------------------------------------
# ghost-cell padding


def _pad_u(u, grid, uv_bc=None):
    """u with one ghost layer per side, filled from the boundary conditions."""
    ny, nxp = u.shape
    up = np.empty((ny + 2, nxp + 2))
    up[1:-1, 1:-1] = u
    core = up[1:-1, :]
    if grid.periodic_x:
        core[:, 0] = u[:, -2]
        core[:, -1] = u[:, 1]
    else:
        for ghost, inner, bc in ((0, 1, grid.left), (-1, -2, grid.right)):
            if bc.kind == "inflow":
                core[:, ghost] = 2.0 * bc.velocity[0] - u[:, inner]
            elif bc.kind == "slip":
                core[:, ghost] = -u[:, inner]
            else:  # outflow: zero gradient
                core[:, ghost] = u[:, 0 if ghost == 0 else -1]
    if grid.periodic_y:
        up[0, :] = up[-2, :]
        up[-1, :] = up[1, :]
    else:
        for ghost, edge, bc in ((0, 1, grid.bottom), (-1, -2, grid.top)):
            if bc.kind == "inflow":
                up[ghost, :] = 2.0 * bc.velocity[0] - up[edge, :]
            else:  # slip or outflow: zero normal gradient of the tangent
                up[ghost, :] = up[edge, :]
    return up


def _pad_v(v, grid):
    """v with one ghost layer per side, filled from the boundary conditions."""
    nyp, nx = v.shape
    vp = np.empty((nyp + 2, nx + 2))
    vp[1:-1, 1:-1] = v
    core = vp[:, 1:-1]
    if grid.periodic_y:
        core[0, :] = v[-2, :]
        core[-1, :] = v[1, :]
    else:
        for ghost, inner, bc in ((0, 1, grid.bottom), (-1, -2, grid.top)):
            if bc.kind == "inflow":
                core[ghost, :] = 2.0 * bc.velocity[1] - v[inner, :]
            elif bc.kind == "slip":
                core[ghost, :] = -v[inner, :]
            else:
                core[ghost, :] = v[0 if ghost == 0 else -1, :]
    if grid.periodic_x:
        vp[:, 0] = vp[:, -2]
        vp[:, -1] = vp[:, 1]
    else:
        for ghost, edge, bc in ((0, 1, grid.left), (-1, -2, grid.right)):
            if bc.kind == "inflow":
                vp[:, ghost] = 2.0 * bc.velocity[1] - vp[:, edge]
            else:
                vp[:, ghost] = vp[:, edge]
    return vp


def _pad_cells(f, grid):
    """Cell field with ghost layers: periodic wrap, otherwise edge copy."""
    mode_x = "wrap" if grid.periodic_x else "edge"
    mode_y = "wrap" if grid.periodic_y else "edge"
    f = np.pad(f, ((0, 0), (1, 1)), mode=mode_x)
    return np.pad(f, ((1, 1), (0, 0)), mode=mode_y)


def _apply_velocity_bc(u, v, grid):
    """Overwrite the boundary faces that the conditions pin (in place)."""
    if grid.periodic_x:
        u[:, -1] = u[:, 0]
    else:
        for col, bc in ((0, grid.left), (-1, grid.right)):
            if bc.kind == "inflow":
                u[:, col] = bc.velocity[0]
            elif bc.kind == "slip":
                u[:, col] = 0.0
    if grid.periodic_y:
        v[-1, :] = v[0, :]
    else:
        for row, bc in ((0, grid.bottom), (-1, grid.top)):
            if bc.kind == "inflow":
                v[row, :] = bc.velocity[1]
            elif bc.kind == "slip":
                v[row, :] = 0.0


# ---------------------------------------------------------------------------
# diagnostics and subgrid model


def _center_velocity(state):
    uc = 0.5 * (state.u[:, :-1] + state.u[:, 1:])
    vc = 0.5 * (state.v[:-1, :] + state.v[1:, :])
    return uc, vc


def smagorinsky(state, grid, c_s):
    """Eddy viscosity (c_s*delta)^2 * sqrt(2 S:S) per cell, delta = sqrt(dx dy).

    Strain components use the natural staggered derivatives (exact at cell
    centers) and centered differences of the cell-averaged velocity for the
    cross terms, so linear velocity fields are differentiated exactly.
    """
    if c_s < 0.0:
        raise ValueError(f"c_s must be >= 0, got {c_s}")
    if c_s == 0.0:
        return np.zeros((grid.ny, grid.nx))
    dudx = (state.u[:, 1:] - state.u[:, :-1]) / grid.dx
    dvdy = (state.v[1:, :] - state.v[:-1, :]) / grid.dy
    uc, vc = _center_velocity(state)
    dudy = np.gradient(uc, grid.dy, axis=0)
    dvdx = np.gradient(vc, grid.dx, axis=1)
    s12 = 0.5 * (dudy + dvdx)
    magnitude = np.sqrt(2.0 * (dudx ** 2 + dvdy ** 2) + 4.0 * s12 ** 2)
    delta_sq = grid.dx * grid.dy
    return (c_s ** 2 * delta_sq) * magnitude


def curl(state, grid):
    """Cell-centered vorticity dv/dx - du/dy."""
    uc, vc = _center_velocity(state)
    return np.gradient(vc, grid.dx, axis=1) - np.gradient(uc, grid.dy, axis=0)


def divergence(state, grid):
    """Cell-centered velocity divergence, 1/s."""
    return _face_divergence(state.u, state.v, grid)


def _face_divergence(u, v, grid):
    return ((u[:, 1:] - u[:, :-1]) / grid.dx
            + (v[1:, :] - v[:-1, :]) / grid.dy)


def normalized_divergence(state, grid):
    """Max net cell flux over max face flux; zero for a still fluid."""
    div = _face_divergence(state.u, state.v, grid)
    max_flux = max(np.abs(state.u).max() * grid.dy,
                   np.abs(state.v).max() * grid.dx)
    if max_flux == 0.0:
        return 0.0
    return float(np.abs(div).max() * grid.dx * grid.dy / max_flux)


# ---------------------------------------------------------------------------
# actuator sources


def project_forces(sources, grid):
    """Gaussian-smoothed reaction forces on the staggered faces, N/m^3.

    Each source's blade force F spreads with kernel
    eta(r) = exp(-|r|^2/eps^2) / (pi eps^2); the fluid receives -F * eta.
    """
    fx = np.zeros((grid.ny, grid.nx + 1))
    fy = np.zeros((grid.ny + 1, grid.nx))
    ox, oy = grid.origin
    x0, x1, y0, y1 = grid.extent
    xu = ox + np.arange(grid.nx + 1) * grid.dx
    yu = oy + (np.arange(grid.ny) + 0.5) * grid.dy
    xv = ox + (np.arange(grid.nx) + 0.5) * grid.dx
    yv = oy + np.arange(grid.ny + 1) * grid.dy
    for src in sources:
        eps = src.epsilon
        if eps < 2.0 * max(grid.dx, grid.dy):
            raise ConfigurationError(
                f"epsilon {eps:.4g} under-resolved: need >= 2*max(dx, dy) "
                f"= {2.0 * max(grid.dx, grid.dy):.4g}"
            )
        px, py = src.position
        margin = 3.0 * eps
        if not (x0 + margin <= px <= x1 - margin
                and y0 + margin <= py <= y1 - margin):
            raise ConfigurationError(
                f"source at ({px:.3g}, {py:.3g}) closer than 3*epsilon "
                f"to the domain boundary"
            )
        peak = 1.0 / (np.pi * eps * eps)
        for field, xs, ys, component in ((fx, xu, yu, src.force[0]),
                                         (fy, xv, yv, src.force[1])):
            if component == 0.0:
                continue
            # Gaussian support window: exp(-25) beyond 5 eps is negligible
            ia = np.searchsorted(xs, px - 5.0 * eps)
            ib = np.searchsorted(xs, px + 5.0 * eps)
            ja = np.searchsorted(ys, py - 5.0 * eps)
            jb = np.searchsorted(ys, py + 5.0 * eps)
            gx = np.exp(-((xs[ia:ib] - px) / eps) ** 2)
            gy = np.exp(-((ys[ja:jb] - py) / eps) ** 2)
            field[ja:jb, ia:ib] -= component * peak * np.outer(gy, gx)
    return fx, fy


# ---------------------------------------------------------------------------
# pressure Poisson solvers, cached per grid


class _SpectralPoisson:
    """Exact solver for the discrete 5-point Laplacian on a periodic box."""

    def __init__(self, grid):
        kx = np.arange(grid.nx // 2 + 1)
        ky = np.arange(grid.ny)
        lam_x = (2.0 * np.cos(2.0 * np.pi * kx / grid.nx) - 2.0) / grid.dx ** 2
        lam_y = (2.0 * np.cos(2.0 * np.pi * ky / grid.ny) - 2.0) / grid.dy ** 2
        lam = lam_y[:, None] + lam_x[None, :]
        lam[0, 0] = 1.0
        self._lam = lam
        self._shape = (grid.ny, grid.nx)

    def solve(self, rhs):
        rhs_hat = np.fft.rfft2(rhs)
        rhs_hat /= self._lam
        rhs_hat[0, 0] = 0.0
        return np.fft.irfft2(rhs_hat, s=self._shape)


def _assemble_laplacian(grid):
    """Sparse matrix of div(grad) exactly matching _phi_gradients.

    Returns (matrix, singular): the operator is singular (constant
    null space) when no side supplies a Dirichlet pressure value.
    """
    from scipy import sparse

    nx, ny = grid.nx, grid.ny
    n = nx * ny
    idx = np.arange(n).reshape(ny, nx)
    rows, cols, vals = [], [], []

    def face(left_cells, right_cells, inv_h_sq):
        # interior flux (phi_R - phi_L)/h feeds div on both sides
        for a, b in ((left_cells, right_cells), (right_cells, left_cells)):
            rows.append(a)
            cols.append(b)
            vals.append(np.full(a.size, inv_h_sq))
            rows.append(a)
            cols.append(a)
            vals.append(np.full(a.size, -inv_h_sq))

    def boundary(cells, bc, inv_h_sq):
        if bc.kind == "outflow":  # Dirichlet phi = 0 at the face
            rows.append(cells)
            cols.append(cells)
            vals.append(np.full(cells.size, -2.0 * inv_h_sq))
        # inflow and slip faces carry no pressure correction

    ihx, ihy = 1.0 / grid.dx ** 2, 1.0 / grid.dy ** 2
    face(idx[:, :-1].ravel(), idx[:, 1:].ravel(), ihx)
    face(idx[:-1, :].ravel(), idx[1:, :].ravel(), ihy)
    if grid.periodic_x:
        face(idx[:, -1].ravel(), idx[:, 0].ravel(), ihx)
    else:
        boundary(idx[:, 0].ravel(), grid.left, ihx)
        boundary(idx[:, -1].ravel(), grid.right, ihx)
    if grid.periodic_y:
        face(idx[-1, :].ravel(), idx[0, :].ravel(), ihy)
    else:
        boundary(idx[0, :].ravel(), grid.bottom, ihy)
        boundary(idx[-1, :].ravel(), grid.top, ihy)

    lap = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()
    sides = (grid.left, grid.right, grid.bottom, grid.top)
    singular = not any(bc.kind == "outflow" for bc in sides)
    return lap, singular


class _DirectPoisson:
    """Sparse LU factorization of -div(grad); exact and deterministic."""

    def __init__(self, grid):
        from scipy.sparse.linalg import splu

        lap, self._singular = _assemble_laplacian(grid)
        a = (-lap).tolil()
        if self._singular:
            # pin cell 0 to remove the constant null space; with a
            # mean-free rhs this leaves the solution exact (up to the
            # constant that gets subtracted again below)
            a[0, 0] += 1.0 / grid.dx ** 2
        self._lu = splu(a.tocsc())
        self._shape = (grid.ny, grid.nx)

    def solve(self, rhs):
        b = -rhs.ravel()
        if self._singular:
            b = b - b.mean()
        phi = self._lu.solve(b)
        if self._singular:
            phi -= phi.mean()
        return phi.reshape(self._shape)


class _IterativePoisson:
    """Algebraic-multigrid CG fallback for grids too large to factorize."""

    def __init__(self, grid):
        import pyamg

        lap, self._singular = _assemble_laplacian(grid)
        a = (-lap).tocsr()
        near_null = np.ones((a.shape[0], 1)) if self._singular else None
        self._solver = pyamg.smoothed_aggregation_solver(a, B=near_null)
        self._shape = (grid.ny, grid.nx)

    def solve(self, rhs):
        b = -rhs.ravel()
        if self._singular:
            b = b - b.mean()
        phi = self._solver.solve(b, x0=np.zeros_like(b), tol=1e-12,
                                 maxiter=200, accel="cg")
        if self._singular:
            phi -= phi.mean()
        return phi.reshape(self._shape)


# above this cell count the LU fill-in gets memory-hungry; fall back to AMG
_DIRECT_CELL_LIMIT = 400_000


@lru_cache(maxsize=8)
def _poisson_solver(grid):
    if grid.periodic_x and grid.periodic_y:
        return _SpectralPoisson(grid)
    if grid.nx * grid.ny <= _DIRECT_CELL_LIMIT:
        return _DirectPoisson(grid)
    return _IterativePoisson(grid)


def _phi_gradients(phi, grid):
    """Face gradients of phi consistent with the Poisson operator."""
    ny, nx = phi.shape
    gx = np.zeros((ny, nx + 1))
    gy = np.zeros((ny + 1, nx))
    gx[:, 1:-1] = (phi[:, 1:] - phi[:, :-1]) / grid.dx
    gy[1:-1, :] = (phi[1:, :] - phi[:-1, :]) / grid.dy
    if grid.periodic_x:
        gx[:, 0] = (phi[:, 0] - phi[:, -1]) / grid.dx
        gx[:, -1] = gx[:, 0]
    else:
        if grid.left.kind == "outflow":
            gx[:, 0] = 2.0 * phi[:, 0] / grid.dx
        if grid.right.kind == "outflow":
            gx[:, -1] = -2.0 * phi[:, -1] / grid.dx
    if grid.periodic_y:
        gy[0, :] = (phi[0, :] - phi[-1, :]) / grid.dy
        gy[-1, :] = gy[0, :]
    else:
        if grid.bottom.kind == "outflow":
            gy[0, :] = 2.0 * phi[0, :] / grid.dy
        if grid.top.kind == "outflow":
            gy[-1, :] = -2.0 * phi[-1, :] / grid.dy
    return gx, gy


# ---------------------------------------------------------------------------
# time stepping


def _dt_limit(u, v, grid, nu_total_max):
    speed = max(np.abs(u).max(), np.abs(v).max())
    h = min(grid.dx, grid.dy)
    limit = math.inf
    if speed > 0.0:
        limit = 0.5 * h / speed
    if nu_total_max > 0.0:
        limit = min(limit, 0.25 * h * h / nu_total_max)
    return limit


def stable_dt(state, grid, nu, c_s):
    """Largest stable step: advective and diffusive limits combined."""
    nu_sgs_max = smagorinsky(state, grid, c_s).max() if c_s > 0.0 else 0.0
    return _dt_limit(state.u, state.v, grid, nu + nu_sgs_max)


def _stage_rate(u, v, grid, nu_pad, nu_node, fx, fy, rho):
    """du/dt and dv/dt on the faces: advection, diffusion, body force."""
    up = _pad_u(u, grid)
    vp = _pad_v(v, grid)

    # advection, divergence form: d(uu)/dx + d(uv)/dy etc.
    uc = 0.5 * (up[1:-1, :-1] + up[1:-1, 1:])        # u at centers, (ny, nx+2)
    un = 0.5 * (up[:-1, 1:-1] + up[1:, 1:-1])        # u at nodes, (ny+1, nx+1)
    vn = 0.5 * (vp[1:-1, :-1] + vp[1:-1, 1:])        # v at nodes, (ny+1, nx+1)
    vc = 0.5 * (vp[:-1, 1:-1] + vp[1:, 1:-1])        # v at centers, (ny+2, nx)
    cross = un * vn
    conv_u = ((uc[:, 1:] ** 2 - uc[:, :-1] ** 2) / grid.dx
              + (cross[1:, :] - cross[:-1, :]) / grid.dy)
    conv_v = ((cross[:, 1:] - cross[:, :-1]) / grid.dx
              + (vc[1:, :] ** 2 - vc[:-1, :] ** 2) / grid.dy)

    # conservative diffusion with viscosity at centers / 4-cell nodes
    flux_ux = nu_pad[1:-1, :] * (up[1:-1, 1:] - up[1:-1, :-1]) / grid.dx
    flux_uy = nu_node * (up[1:, 1:-1] - up[:-1, 1:-1]) / grid.dy
    diff_u = ((flux_ux[:, 1:] - flux_ux[:, :-1]) / grid.dx
              + (flux_uy[1:, :] - flux_uy[:-1, :]) / grid.dy)
    flux_vy = nu_pad[:, 1:-1] * (vp[1:, 1:-1] - vp[:-1, 1:-1]) / grid.dy
    flux_vx = nu_node * (vp[1:-1, 1:] - vp[1:-1, :-1]) / grid.dx
    diff_v = ((flux_vx[:, 1:] - flux_vx[:, :-1]) / grid.dx
              + (flux_vy[1:, :] - flux_vy[:-1, :]) / grid.dy)

    du = diff_u - conv_u
    dv = diff_v - conv_v
    if fx is not None:
        du = du + fx / rho
        dv = dv + fy / rho
    return du, dv


def _project(u, v, grid, dt_eff, solver):
    """Make (u, v) discretely divergence-free in place; returns phi."""
    _apply_velocity_bc(u, v, grid)
    rhs = _face_divergence(u, v, grid) / dt_eff
    phi = solver.solve(rhs)
    gx, gy = _phi_gradients(phi, grid)
    u -= dt_eff * gx
    v -= dt_eff * gy
    _apply_velocity_bc(u, v, grid)
    return phi


def advance(state, grid, dt, nu, c_s, sources=(), rho=1.225):
    """One time step; returns the new state.

    Integrates with a three-stage strong-stability-preserving Runge-Kutta
    scheme (stable for central advection within the CFL bound) and projects
    each stage onto the divergence-free space. The returned pressure is the
    final-stage projection scaled to Pa.

    Raises StepError (with a suggested dt) when dt violates the advective
    CFL limit 0.5*h/max|u| or the diffusive limit 0.25*h^2/(nu + nu_sgs).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if nu < 0.0:
        raise ValueError(f"nu must be >= 0, got {nu}")
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    u0 = state.u.copy()
    v0 = state.v.copy()
    _apply_velocity_bc(u0, v0, grid)
    nu_sgs = smagorinsky(state, grid, c_s)
    limit = _dt_limit(u0, v0, grid, nu + nu_sgs.max())
    if dt > limit * (1.0 + 1e-12):
        raise StepError(
            f"dt = {dt:.4g} exceeds the stability limit {limit:.4g}",
            suggested_dt=limit,
        )

    # eddy viscosity and body forces are frozen over the step
    nu_pad = _pad_cells(nu + nu_sgs, grid)
    nu_node = 0.25 * (nu_pad[:-1, :-1] + nu_pad[:-1, 1:]
                      + nu_pad[1:, :-1] + nu_pad[1:, 1:])
    if sources:
        fx, fy = project_forces(sources, grid)
    else:
        fx = fy = None
    solver = _poisson_solver(grid)

    def rate(u, v):
        return _stage_rate(u, v, grid, nu_pad, nu_node, fx, fy, rho)

    du, dv = rate(u0, v0)
    u1 = u0 + dt * du
    v1 = v0 + dt * dv
    _project(u1, v1, grid, dt, solver)

    du, dv = rate(u1, v1)
    u2 = 0.75 * u0 + 0.25 * (u1 + dt * du)
    v2 = 0.75 * v0 + 0.25 * (v1 + dt * dv)
    _project(u2, v2, grid, 0.25 * dt, solver)

    du, dv = rate(u2, v2)
    u3 = u0 / 3.0 + (2.0 / 3.0) * (u2 + dt * du)
    v3 = v0 / 3.0 + (2.0 / 3.0) * (v2 + dt * dv)
    phi = _project(u3, v3, grid, (2.0 / 3.0) * dt, solver)

    return FlowState(u3, v3, rho * phi, nu_sgs, state.t + dt)


# ---------------------------------------------------------------------------
# velocity sampling


def sample_velocity(state, grid, points):
    """Bilinear velocity at arbitrary points, (m, 2); clamps at the boundary."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ox, oy = grid.origin

    def bilinear(field, gx, gy):
        nyf, nxf = field.shape
        i0 = np.clip(np.floor(gx).astype(int), 0, nxf - 2)
        j0 = np.clip(np.floor(gy).astype(int), 0, nyf - 2)
        tx = np.clip(gx - i0, 0.0, 1.0)
        ty = np.clip(gy - j0, 0.0, 1.0)
        return ((1 - ty) * ((1 - tx) * field[j0, i0] + tx * field[j0, i0 + 1])
                + ty * ((1 - tx) * field[j0 + 1, i0]
                        + tx * field[j0 + 1, i0 + 1]))

    u = bilinear(state.u, (pts[:, 0] - ox) / grid.dx,
                 (pts[:, 1] - oy) / grid.dy - 0.5)
    v = bilinear(state.v, (pts[:, 0] - ox) / grid.dx - 0.5,
                 (pts[:, 1] - oy) / grid.dy)
    out = np.column_stack([u, v])
    return out[0] if np.asarray(points).ndim == 1 else out


# ---------------------------------------------------------------------------
# turbine driver


def turbine_grid(geom, config, u_inf):
    """Channel grid around the rotor: inflow left, outflow right, slip walls."""
    dx = geom.radius / config.cells_per_radius
    nx = round((config.upstream_radii + config.downstream_radii)
               * config.cells_per_radius)
    ny = round(2.0 * config.half_height_radii * config.cells_per_radius)
    origin = (-config.upstream_radii * geom.radius,
              -config.half_height_radii * geom.radius)
    return FlowGrid.channel(nx, ny, dx, dx, origin, (u_inf, 0.0))


def run_alm(scenario, revolutions, diagnostics=None, snapshots=None,
            snapshot_every=0):
    """Run the actuator-line model and emit the normal-force series.

    ``diagnostics``, if given, receives one dict per step with the
    normalized divergence, peak speed and peak eddy viscosity.
    ``snapshots``, if given together with ``snapshot_every`` > 0, receives
    (step, FlowState) pairs every that many steps plus the final state.

    With a stationary rotor (omega = 0) the nominal revolution period
    falls back to the advective time scale 2*pi*radius/u_inf.
    """
    if revolutions < 1:
        raise ValueError("revolutions must be >= 1")
    geom = scenario.geometry
    op = scenario.operating
    config = scenario.alm
    steps = scenario.steps_per_rev
    if config.cells_per_radius < 20.0:
        raise ConfigurationError(
            f"rotor needs >= 20 cells per radius, got {config.cells_per_radius}"
        )
    if config.epsilon_cells < 2.0:
        raise ConfigurationError(
            f"smoothing width needs >= 2 cells, got {config.epsilon_cells}"
        )
    grid = turbine_grid(geom, config, op.u_inf)
    eps = config.epsilon_cells * grid.dx
    period = (2.0 * np.pi / op.omega if op.omega > 0.0
              else 2.0 * np.pi * geom.radius / op.u_inf)
    dt = period / steps
    state = FlowState.uniform(grid, (op.u_inf, 0.0))
    series = ForceSeries(model="alm",
                         tip_speed_ratio=tip_speed_ratio(op, geom),
                         scenario_hash=scenario.scenario_hash())
    for k in range(revolutions * steps):
        t = k * dt
        rev = k // steps
        sources = []
        for b in range(geom.blade_count):
            bs = blade_state(geom, op, t, b)
            local_u = sample_velocity(state, grid, bs.position)
            sample = relative_flow(bs, local_u, op.rho)
            fn, ft = blade_load(sample, scenario.polar, geom.chord_mid)
            fvec = fn * outward_normal(bs.chord_direction) - ft * bs.chord_direction
            sources.append(ActuatorSource(bs.position, fvec, eps))
            series.append(rev, azimuth_degrees(bs.azimuth), b,
                          fn, fn * geom.blade_length)
        state = advance(state, grid, dt, config.nu, config.c_s, sources,
                        rho=op.rho)
        if diagnostics is not None:
            diagnostics.append({
                "t": state.t,
                "div_rel": normalized_divergence(state, grid),
                "max_speed": float(max(np.abs(state.u).max(),
                                       np.abs(state.v).max())),
                "max_nu_sgs": float(state.nu_sgs.max()),
            })
        if snapshots is not None and snapshot_every > 0:
            last = k == revolutions * steps - 1
            if (k + 1) % snapshot_every == 0 or last:
                snapshots.append((k + 1, state))
    return series
