"""Tabulated airfoil aerodynamics: polar tables, angle of attack, blade loads.

Angle-of-attack sign convention: alpha is the signed angle from the chord
direction (leading edge -> trailing edge) to the relative wind, positive
counterclockwise, i.e. positive when the relative wind approaches from the
pressure side whose lift pushes along the outward blade normal
(chord rotated +90 deg). With the rotor convention in `turbine`, positive
alpha therefore produces a positive (outward) normal force.

Force decomposition, per unit span:

    L = q * chord * cl          (perpendicular to the relative wind)
    D = q * chord * cd          (along the relative wind)
    f_normal     =  L cos(alpha) + D sin(alpha)   # along outward normal
    f_tangential =  L sin(alpha) - D cos(alpha)   # along blade motion, driving > 0
"""

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .turbine import BladeState

PI = np.pi


class PolarFormatError(ValueError):
    """Raised when a polar file or table violates the format contract."""


@dataclass(frozen=True)
class PolarTable:
    """Static airfoil polar: (alpha [rad], cl, cd) rows, alpha strictly increasing.

    The table must span at least [-pi, pi]; lookups wrap alpha periodically.
    """

    airfoil_name: str
    alpha: np.ndarray
    cl: np.ndarray
    cd: np.ndarray
    reynolds: float | None = None
    symmetric: bool = field(default=False)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        cl = np.asarray(self.cl, dtype=float)
        cd = np.asarray(self.cd, dtype=float)
        if alpha.ndim != 1 or alpha.size < 2:
            raise PolarFormatError("polar table needs at least two rows")
        if not (cl.shape == alpha.shape and cd.shape == alpha.shape):
            raise PolarFormatError("alpha, cl, cd must have matching lengths")
        if not np.all(np.diff(alpha) > 0.0):
            raise PolarFormatError("alpha values must be strictly increasing")
        if alpha[0] > -PI + 1e-12 or alpha[-1] < PI - 1e-12:
            raise PolarFormatError(
                f"table must span [-pi, pi], got [{alpha[0]:.6f}, {alpha[-1]:.6f}] rad"
            )
        if np.any(cd < 0.0):
            raise PolarFormatError("cd must be non-negative everywhere")
        if self.symmetric:
            odd_defect = np.max(np.abs(np.interp(-alpha, alpha, cl) + cl))
            if odd_defect > 1e-6:
                raise PolarFormatError(
                    f"table flagged symmetric but cl(-a) + cl(a) reaches {odd_defect:.2e}"
                )
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "cl", cl)
        object.__setattr__(self, "cd", cd)


@dataclass(frozen=True)
class AeroSample:
    """Blade-element inflow: relative wind, angle of attack, dynamic pressure."""

    v_rel: np.ndarray
    alpha: float
    q: float


def wrap_angle(alpha):
    """Wrap angle(s) into [-pi, pi)."""
    return (alpha + PI) % (2.0 * PI) - PI


def lookup(table: PolarTable, alpha: float):
    """Linearly interpolated (cl, cd) at alpha [rad], periodic in 2*pi."""
    a = wrap_angle(alpha)
    return (float(np.interp(a, table.alpha, table.cl)),
            float(np.interp(a, table.alpha, table.cd)))


def relative_flow(blade: BladeState, local_u: np.ndarray, rho: float) -> AeroSample:
    """Relative wind seen by a blade section moving through local flow local_u."""
    v_rel = np.asarray(local_u, dtype=float) - blade.velocity
    speed_sq = float(v_rel @ v_rel)
    if speed_sq == 0.0:
        return AeroSample(v_rel, 0.0, 0.0)
    c = blade.chord_direction
    alpha = float(np.arctan2(c[0] * v_rel[1] - c[1] * v_rel[0], c @ v_rel))
    if alpha <= -PI:
        alpha = PI
    return AeroSample(v_rel, alpha, 0.5 * rho * speed_sq)


def blade_load(sample: AeroSample, table: PolarTable, chord: float):
    """Per-unit-span (f_normal, f_tangential) [N/m] from tabulated coefficients."""
    if chord <= 0.0:
        raise ValueError(f"chord must be positive, got {chord}")
    cl, cd = lookup(table, sample.alpha)
    lift = sample.q * chord * cl
    drag = sample.q * chord * cd
    ca, sa = np.cos(sample.alpha), np.sin(sample.alpha)
    f_normal = lift * ca + drag * sa
    f_tangential = lift * sa - drag * ca
    return f_normal, f_tangential


def load_polar_file(path, airfoil_name: str | None = None,
                    symmetric: bool | None = None) -> PolarTable:
    """Load a polar from plain text: '# comments', then 'alpha_deg, cl, cd' rows.

    Alpha is given in degrees, ascending. Errors report 1-based line numbers.
    When `symmetric` is None the flag is auto-detected from the loaded data.
    """
    path = Path(path)
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = [p.strip() for p in stripped.split(",")]
            if len(parts) != 3:
                raise PolarFormatError(
                    f"{path}:{lineno}: expected 'alpha_deg, cl, cd', got {stripped!r}"
                )
            try:
                rows.append(tuple(float(p) for p in parts))
            except ValueError as exc:
                raise PolarFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise PolarFormatError(f"{path}: no data rows")
    data = np.array(rows)
    alpha = np.radians(data[:, 0])
    name = airfoil_name or path.stem
    if symmetric is None:
        defect = np.max(np.abs(np.interp(-alpha, alpha, data[:, 1]) + data[:, 1]))
        symmetric = bool(defect <= 1e-6)
    try:
        return PolarTable(name, alpha, data[:, 1], data[:, 2], symmetric=symmetric)
    except PolarFormatError as exc:
        raise PolarFormatError(f"{path}: {exc}") from None


@lru_cache(maxsize=1)
def naca0021_polar() -> PolarTable:
    """The bundled synthetic NACA0021 polar (see data file header for provenance)."""
    with resources.as_file(resources.files("vawtsim") / "data" / "naca0021.dat") as p:
        return load_polar_file(p, airfoil_name="NACA0021", symmetric=True)
