"""Free-vortex rotor model: bound circulation, shedding, and wake advection.

Each blade carries a bound vortex at its quarter-chord point, set every step
from the sampled local flow through Kutta-Joukowski. Changes in bound
circulation are released as point vortices at the trailing edge so that the
total circulation (bound + wake + logged truncated) stays at its initial
value of zero. The wake advects with the regularized Biot-Savart velocity of
all vortices plus the free stream, integrated with RK4 on the coupled system.

Circulation sign convention: gammas are stored in the kernel's
counterclockwise-positive sense. Kutta-Joukowski for a section with lift
coefficient cl gives |Gamma| = 0.5 * chord * |v_rel| * cl; with the rotor
conventions in `turbine` (counterclockwise rotation, positive alpha pushing
the blade outward) the counterclockwise-signed bound circulation is

    Gamma_bound = -0.5 * chord * |v_rel| * cl

so that the force rho * |v_rel| * Gamma acts along the outward normal.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import fastsum
from .airfoil import blade_load, lookup, relative_flow
from .fastsum import kernel_velocity
from .series import ForceSeries, azimuth_degrees
from .turbine import TWO_PI, blade_state

# fraction of the chord from the leading edge to the bound-vortex anchor;
# blade_state.position is the anchor (quarter-chord on the rotor circle)
QUARTER_CHORD = 0.25


@dataclass(frozen=True)
class PointVortex:
    position: np.ndarray
    gamma: float
    core_radius: float

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=float).reshape(2))
        if not self.core_radius > 0.0:
            raise ValueError("core_radius must be > 0")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")


@dataclass(frozen=True)
class VortexConfig:
    """Numerical parameters of the free-vortex model."""

    core_radius_factor: float = 0.5    # shed core radius = factor * chord
    truncation_radii: float = 25.0     # drop wake beyond this many radii downstream
    fastsum_threshold: int = 600       # wake size above which the tree takes over
    theta_open: float = 0.5
    leaf_capacity: int = 16

    def __post_init__(self):
        if not self.core_radius_factor > 0.0:
            raise ValueError("core_radius_factor must be > 0")
        if not self.truncation_radii > 0.0:
            raise ValueError("truncation_radii must be > 0")
        if self.fastsum_threshold < 0 or self.leaf_capacity < 1:
            raise ValueError("fastsum_threshold >= 0 and leaf_capacity >= 1 required")
        if self.theta_open < 0.0:
            raise ValueError("theta_open must be >= 0")


class VortexEnsemble:
    """Ordered collection of point vortices in a uniform free stream.

    Stored as flat arrays for fast kernel evaluation; insertion order is the
    shedding history.
    """

    def __init__(self, free_stream=(0.0, 0.0)):
        self.free_stream = np.asarray(free_stream, dtype=float).reshape(2)
        self._pos = np.empty((0, 2))
        self._gamma = np.empty(0)
        self._core = np.empty(0)

    def __len__(self):
        return len(self._gamma)

    @property
    def positions(self):
        return self._pos

    @property
    def gammas(self):
        return self._gamma

    @property
    def core_radii(self):
        return self._core

    @property
    def vortices(self):
        return [PointVortex(self._pos[i].copy(), float(self._gamma[i]),
                            float(self._core[i])) for i in range(len(self))]

    def append(self, position, gamma, core_radius):
        PointVortex(position, gamma, core_radius)  # validates
        self._pos = np.vstack([self._pos, np.asarray(position, dtype=float).reshape(1, 2)])
        self._gamma = np.append(self._gamma, float(gamma))
        self._core = np.append(self._core, float(core_radius))

    def set_positions(self, new_positions):
        new_positions = np.asarray(new_positions, dtype=float).reshape(-1, 2)
        if new_positions.shape != self._pos.shape:
            raise ValueError("position array shape mismatch")
        self._pos = new_positions

    def drop(self, mask):
        """Remove the masked vortices; returns the sum of dropped gammas."""
        mask = np.asarray(mask, dtype=bool)
        dropped = float(math.fsum(self._gamma[mask]))
        keep = ~mask
        self._pos = self._pos[keep]
        self._gamma = self._gamma[keep]
        self._core = self._core[keep]
        return dropped


@dataclass
class BoundVortex:
    blade_index: int
    gamma: float
    anchor: np.ndarray

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float).reshape(2)


@dataclass
class VortexSimState:
    """Mutable per-run state: wake ensemble, bound vortices, bookkeeping."""

    ensemble: VortexEnsemble
    bound: list
    t: float = 0.0
    step_index: int = 0
    total_shed_circulation: float = 0.0
    truncated_circulation: float = 0.0
    config: VortexConfig = field(default_factory=VortexConfig)
    # set by update_bound_circulation, consumed by shed
    pending_shed: np.ndarray = None
    pending_release: np.ndarray = None
    pending_core: np.ndarray = None


def new_simulation(geom, op, config=None):
    """Fresh state at t = 0: empty wake, zero bound circulation."""
    config = config or VortexConfig()
    ensemble = VortexEnsemble(free_stream=(op.u_inf, 0.0))
    bound = [BoundVortex(b, 0.0, blade_state(geom, op, 0.0, b).position)
             for b in range(geom.blade_count)]
    return VortexSimState(ensemble=ensemble, bound=bound, config=config)


def induced_velocity(ensemble, point):
    """Velocity at one point: free stream plus the regularized kernel sum."""
    point = np.asarray(point, dtype=float).reshape(1, 2)
    u = kernel_velocity(ensemble.positions, ensemble.gammas, ensemble.core_radii,
                        point)[0]
    return u + ensemble.free_stream


def _bound_arrays(bound, geom, config, exclude=None):
    """Source arrays for the bound vortices, optionally excluding one blade."""
    entries = [bv for bv in bound if bv.blade_index != exclude]
    if not entries:
        return np.empty((0, 2)), np.empty(0), np.empty(0)
    pos = np.array([bv.anchor for bv in entries])
    gam = np.array([bv.gamma for bv in entries])
    core = np.full(len(entries), config.core_radius_factor * geom.chord_mid)
    return pos, gam, core


def _field_velocity(state, targets, extra_pos, extra_gamma, extra_core):
    """Velocity of wake + extra sources + free stream at targets.

    Delegates to the Barnes-Hut tree once the combined source count exceeds
    the configured threshold.
    """
    ens = state.ensemble
    src_pos = np.vstack([ens.positions, extra_pos])
    src_gamma = np.concatenate([ens.gammas, extra_gamma])
    src_core = np.concatenate([ens.core_radii, extra_core])
    cfg = state.config
    if len(src_gamma) > cfg.fastsum_threshold and cfg.theta_open > 0.0:
        tree = fastsum.build_arrays(src_pos, src_gamma, src_core,
                                    ens.free_stream, cfg.leaf_capacity)
        return fastsum.eval_many(tree, targets, cfg.theta_open)
    return kernel_velocity(src_pos, src_gamma, src_core, targets) + ens.free_stream


def make_flow_sampler(state, geom):
    """Sampler(point, exclude_blade) giving the local velocity at a blade point.

    Includes free stream, the whole wake, and every bound vortex except the
    excluded blade's own.
    """
    def sampler(point, exclude_blade=None):
        pos, gam, core = _bound_arrays(state.bound, geom, state.config,
                                       exclude=exclude_blade)
        return _field_velocity(state, np.asarray(point, dtype=float).reshape(1, 2),
                               pos, gam, core)[0]
    return sampler


def update_bound_circulation(state, sampler, geom, op, table):
    """Set each blade's bound circulation from the sampled local flow.

    Records the resulting circulation changes for the subsequent shed and
    returns the per-blade (f_normal, f_tangential) loads in N/m.
    """
    chord = geom.chord_mid
    old = np.array([bv.gamma for bv in state.bound])
    loads = []
    new_gammas = np.empty(geom.blade_count)
    release = np.empty((geom.blade_count, 2))
    for b in range(geom.blade_count):
        bs = blade_state(geom, op, state.t, b)
        local_u = sampler(bs.position, b)
        sample = relative_flow(bs, local_u, op.rho)
        cl, _ = lookup(table, sample.alpha)
        speed = float(np.linalg.norm(sample.v_rel))
        new_gammas[b] = -0.5 * chord * speed * cl
        loads.append(blade_load(sample, table, chord))
        # trailing edge sits 3/4 chord behind the quarter-chord anchor
        release[b] = bs.position + (1.0 - QUARTER_CHORD) * chord * bs.chord_direction
        state.bound[b] = BoundVortex(b, float(new_gammas[b]), bs.position)
    state.pending_shed = old - new_gammas
    state.pending_release = release
    state.pending_core = np.full(geom.blade_count,
                                 state.config.core_radius_factor * chord)
    return new_gammas, loads


def shed(state):
    """Release the recorded circulation changes as trailing-edge wake vortices."""
    if state.pending_shed is None:
        return state
    for g, pos, core in zip(state.pending_shed, state.pending_release,
                            state.pending_core):
        if g != 0.0:
            state.ensemble.append(pos, float(g), float(core))
            state.total_shed_circulation += float(g)
    state.pending_shed = None
    state.pending_release = None
    state.pending_core = None
    return state


def advect(ensemble, dt, bound=(), geom=None, config=None):
    """RK4-advance every wake vortex with the full induced velocity field.

    Bound vortices (if given) contribute to the advecting field but do not
    move during the step. Gammas are unchanged.
    """
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    n = len(ensemble)
    if n == 0:
        return ensemble
    config = config or VortexConfig()
    if bound:
        extra_pos, extra_gamma, extra_core = _bound_arrays(bound, geom, config)
    else:
        extra_pos = np.empty((0, 2))
        extra_gamma = np.empty(0)
        extra_core = np.empty(0)
    gammas = ensemble.gammas
    cores = ensemble.core_radii

    def velocity(positions):
        src_pos = np.vstack([positions, extra_pos])
        src_gamma = np.concatenate([gammas, extra_gamma])
        src_core = np.concatenate([cores, extra_core])
        if len(src_gamma) > config.fastsum_threshold and config.theta_open > 0.0:
            tree = fastsum.build_arrays(src_pos, src_gamma, src_core,
                                        ensemble.free_stream, config.leaf_capacity)
            return fastsum.eval_many(tree, positions, config.theta_open)
        return (kernel_velocity(src_pos, src_gamma, src_core, positions)
                + ensemble.free_stream)

    x0 = ensemble.positions
    k1 = velocity(x0)
    k2 = velocity(x0 + 0.5 * dt * k1)
    k3 = velocity(x0 + 0.5 * dt * k2)
    k4 = velocity(x0 + dt * k3)
    ensemble.set_positions(x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    return ensemble


def truncate_wake(state, geom):
    """Drop vortices far downstream; log their circulation for bookkeeping."""
    limit = state.config.truncation_radii * geom.radius
    mask = state.ensemble.positions[:, 0] > limit
    if mask.any():
        state.truncated_circulation += state.ensemble.drop(mask)


def kelvin_residual(state):
    """|sum of all tracked circulation| relative to the total |Gamma| scale."""
    bound = [bv.gamma for bv in state.bound]
    total = math.fsum([*bound, *state.ensemble.gammas.tolist(),
                       state.truncated_circulation])
    scale = (math.fsum(abs(g) for g in bound)
             + math.fsum(np.abs(state.ensemble.gammas).tolist())
             + abs(state.truncated_circulation))
    if scale == 0.0:
        return abs(total)
    return abs(total) / scale


def step(state, geom, op, table, dt):
    """One time step: kinematics, circulation update, shed, advect, truncate.

    Returns (state, loads) where loads is the per-blade list of
    (f_normal, f_tangential) in N/m sampled at the new azimuths.
    """
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    state.t += dt
    state.step_index += 1
    sampler = make_flow_sampler(state, geom)
    _, loads = update_bound_circulation(state, sampler, geom, op, table)
    shed(state)
    advect(state.ensemble, dt, bound=state.bound, geom=geom, config=state.config)
    truncate_wake(state, geom)
    return state, loads


def run(scenario, revolutions, diagnostics=None):
    """Run the free-vortex model and emit the normal-force series.

    ``diagnostics``, if given, is a list that receives one dict per step with
    Kelvin bookkeeping and wake-size data.
    """
    if revolutions < 1:
        raise ValueError("revolutions must be >= 1")
    geom = scenario.geometry
    op = scenario.operating
    if not op.omega > 0.0:
        raise ValueError("free-vortex run requires omega > 0")
    table = scenario.polar
    steps = scenario.steps_per_rev
    dt = TWO_PI / op.omega / steps
    state = new_simulation(geom, op, scenario.vortex)
    series = ForceSeries(model="vortex",
                         tip_speed_ratio=op.omega * geom.radius / op.u_inf,
                         scenario_hash=scenario.scenario_hash())
    for k in range(revolutions * steps):
        state, loads = step(state, geom, op, table, dt)
        rev = k // steps
        for b in range(geom.blade_count):
            az = azimuth_degrees(blade_state(geom, op, state.t, b).azimuth)
            fn = loads[b][0]
            series.append(rev, az, b, fn, fn * geom.blade_length)
        if diagnostics is not None:
            diagnostics.append({"t": state.t,
                                "kelvin_rel": kelvin_residual(state),
                                "wake_count": len(state.ensemble),
                                "truncated": state.truncated_circulation})
    return series
