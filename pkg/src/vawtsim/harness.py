"""Scenario configuration, run orchestration, comparison, and plotting.

Scenarios are flat INI files with units spelled out in the key names
(omega_rpm, u_inf_mps, ...). The three shipped operating points live in
data/scenarios/ and are addressable by name through scenario_path().
"""

from __future__ import annotations

import configparser
import hashlib
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .airfoil import PolarTable, load_polar_file, naca0021_polar
from .alm2d import ALMConfig, run_alm
from .series import ForceSeries
from .turbine import OperatingPoint, TurbineGeometry, tip_speed_ratio
from .vortex2d import VortexConfig, run as run_vortex

MODELS = ("vortex", "alm")


class ConfigError(ValueError):
    """Raised for malformed, unknown, or invalid scenario configuration."""


@dataclass(frozen=True)
class Scenario:
    """A fully resolved simulation case: turbine, operating point, solver."""

    geometry: TurbineGeometry
    operating: OperatingPoint
    polar: PolarTable
    model: str = "vortex"
    steps_per_rev: int = 72
    revolutions: int = 10
    seed: int = 0
    vortex: VortexConfig = field(default_factory=VortexConfig)
    alm: ALMConfig = field(default_factory=ALMConfig)
    name: str = ""

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.steps_per_rev < 36:
            raise ConfigError(f"steps_per_rev must be >= 36, got {self.steps_per_rev}")
        if self.revolutions < 1:
            raise ConfigError(f"revolutions must be >= 1, got {self.revolutions}")

    def tip_speed_ratio(self):
        return tip_speed_ratio(self.operating, self.geometry)

    def scenario_hash(self):
        """Short digest over every physical and numerical parameter.

        Cosmetic details (file layout, comments, the scenario name) do not
        contribute; any value that changes the computed result does.
        """
        h = hashlib.sha256()
        for line in self._canonical_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()[:16]

    def _canonical_lines(self):
        lines = []
        for prefix, obj, names in (
            ("turbine", self.geometry,
             ("radius", "blade_count", "blade_length", "chord_mid", "tip_chord",
              "taper_length", "pitch_angle", "hub_height", "swept_area")),
            ("operating", self.operating, ("omega", "u_inf", "rho")),
            ("vortex", self.vortex,
             ("core_radius_factor", "truncation_radii", "fastsum_threshold",
              "theta_open", "leaf_capacity")),
            ("alm", self.alm,
             ("cells_per_radius", "epsilon_cells", "c_s", "nu", "upstream_radii",
              "downstream_radii", "half_height_radii")),
        ):
            for name in names:
                lines.append(f"{prefix}.{name}={getattr(obj, name)!r}")
        lines.append(f"run.model={self.model}")
        lines.append(f"run.steps_per_rev={self.steps_per_rev}")
        lines.append(f"run.revolutions={self.revolutions}")
        lines.append(f"run.seed={self.seed}")
        p = self.polar
        digest = hashlib.sha256(
            p.alpha.tobytes() + p.cl.tobytes() + p.cd.tobytes()).hexdigest()
        lines.append(f"polar.name={p.airfoil_name}")
        lines.append(f"polar.table={digest}")
        lines.sort()
        return lines


# recognised sections/keys and their converters
_SCHEMA = {
    "turbine": {
        "radius_m": float, "blade_count": int, "blade_length_m": float,
        "chord_mid_m": float, "tip_chord_m": float, "taper_length_m": float,
        "pitch_deg": float, "hub_height_m": float, "swept_area_m2": float,
        "airfoil": str, "polar_file": str,
    },
    "operating": {"omega_rpm": float, "u_inf_mps": float, "rho_kgpm3": float},
    "run": {"model": str, "revolutions": int, "seed": int},
    "vortex": {
        "steps_per_rev": int, "core_radius_factor": float,
        "truncation_radii": float, "fastsum_threshold": int,
        "theta_open": float, "leaf_capacity": int,
    },
    "alm": {
        "steps_per_rev": int, "cells_per_radius": float, "epsilon_cells": float,
        "c_s": float, "nu_m2ps": float, "upstream_radii": float,
        "downstream_radii": float, "half_height_radii": float,
    },
}

_REQUIRED = {
    "turbine": ("radius_m", "blade_count", "blade_length_m", "chord_mid_m",
                "tip_chord_m", "taper_length_m", "pitch_deg", "hub_height_m",
                "swept_area_m2"),
    "operating": ("omega_rpm", "u_inf_mps"),
}


def _key_lines(text):
    """Map (section, key) -> 1-based line number, for error messages."""
    lines = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            lines.setdefault((section, None), lineno)
        elif "=" in line and section is not None:
            key = line.split("=", 1)[0].strip()
            lines.setdefault((section, key), lineno)
    return lines


def load_config(path, model=None, steps_per_rev=None, revolutions=None,
                theta_open=None):
    """Parse a scenario file, apply overrides, and validate everything.

    Angles are converted from degrees and rotor speed from rpm. Unknown
    sections or keys are rejected with the offending line number.
    """
    path = Path(path)
    text = path.read_text()
    where = _key_lines(text)

    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    raw = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            lineno = where.get((section, None), 0)
            raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
        for key, value in parser.items(section):
            conv = _SCHEMA[section].get(key)
            if conv is None:
                lineno = where.get((section, key), 0)
                raise ConfigError(f"{path}:{lineno}: unknown key "
                                  f"{key!r} in [{section}]")
            try:
                raw[section, key] = conv(value)
            except ValueError:
                lineno = where.get((section, key), 0)
                raise ConfigError(
                    f"{path}:{lineno}: {key} expects {conv.__name__}, "
                    f"got {value!r}") from None

    for section, keys in _REQUIRED.items():
        for key in keys:
            if (section, key) not in raw:
                raise ConfigError(f"{path}: missing required key "
                                  f"{key!r} in [{section}]")

    def get(section, key, default=None):
        return raw.get((section, key), default)

    try:
        geometry = TurbineGeometry(
            radius=get("turbine", "radius_m"),
            blade_count=get("turbine", "blade_count"),
            blade_length=get("turbine", "blade_length_m"),
            chord_mid=get("turbine", "chord_mid_m"),
            tip_chord=get("turbine", "tip_chord_m"),
            taper_length=get("turbine", "taper_length_m"),
            pitch_angle=math.radians(get("turbine", "pitch_deg")),
            hub_height=get("turbine", "hub_height_m"),
            swept_area=get("turbine", "swept_area_m2"),
        )
        operating = OperatingPoint(
            omega=get("operating", "omega_rpm") * 2.0 * math.pi / 60.0,
            u_inf=get("operating", "u_inf_mps"),
            rho=get("operating", "rho_kgpm3", 1.225),
        )
        vortex_cfg = VortexConfig(
            core_radius_factor=get("vortex", "core_radius_factor", 0.5),
            truncation_radii=get("vortex", "truncation_radii", 25.0),
            fastsum_threshold=get("vortex", "fastsum_threshold", 600),
            theta_open=get("vortex", "theta_open", 0.5),
            leaf_capacity=get("vortex", "leaf_capacity", 16),
        )
        alm_cfg = ALMConfig(
            cells_per_radius=get("alm", "cells_per_radius", 20.0),
            epsilon_cells=get("alm", "epsilon_cells", 2.5),
            c_s=get("alm", "c_s", 0.17),
            nu=get("alm", "nu_m2ps", 1.5e-5),
            upstream_radii=get("alm", "upstream_radii", 5.0),
            downstream_radii=get("alm", "downstream_radii", 15.0),
            half_height_radii=get("alm", "half_height_radii", 5.0),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    airfoil = get("turbine", "airfoil")
    polar_file = get("turbine", "polar_file")
    if airfoil and polar_file:
        raise ConfigError(f"{path}: give either 'airfoil' or 'polar_file', not both")
    if polar_file:
        polar = load_polar_file((path.parent / polar_file).resolve())
    elif airfoil is None or airfoil.lower() == "naca0021":
        polar = naca0021_polar()
    else:
        raise ConfigError(f"{path}: unknown airfoil {airfoil!r} "
                          "(bundled: naca0021; or set polar_file)")

    model = model or get("run", "model", "vortex")
    if theta_open is not None:
        vortex_cfg = replace(vortex_cfg, theta_open=theta_open)
    if steps_per_rev is None:
        steps_per_rev = get(model, "steps_per_rev",
                            72 if model == "vortex" else 256)

    try:
        return Scenario(
            geometry=geometry,
            operating=operating,
            polar=polar,
            model=model,
            steps_per_rev=steps_per_rev,
            revolutions=revolutions if revolutions is not None
            else get("run", "revolutions", 10),
            seed=get("run", "seed", 0),
            vortex=vortex_cfg,
            alm=alm_cfg,
            name=path.stem,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def scenario_path(name):
    """Filesystem path of a shipped scenario (tsr_2p55, tsr_3p44, tsr_4p09)."""
    ref = resources.files("vawtsim") / "data" / "scenarios" / f"{name}.cfg"
    with resources.as_file(ref) as p:
        if not p.exists():
            raise ConfigError(f"no shipped scenario named {name!r}")
        return Path(p)


def run_scenario(scenario, diagnostics=None):
    """Run the scenario's model for its configured number of revolutions."""
    if scenario.model == "vortex":
        return run_vortex(scenario, scenario.revolutions, diagnostics=diagnostics)
    return run_alm(scenario, scenario.revolutions, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ComparisonReport:
    """Azimuth-binned comparison of two force series (final revolutions)."""

    bins: int
    bin_centers: np.ndarray
    label_a: str
    label_b: str
    mean_a: np.ndarray
    min_a: np.ndarray
    max_a: np.ndarray
    count_a: np.ndarray
    mean_b: np.ndarray
    min_b: np.ndarray
    max_b: np.ndarray
    count_b: np.ndarray
    rms_difference: float
    peak_azimuth_a: float
    peak_azimuth_b: float

    def summary(self):
        return (f"bins={self.bins} rms_difference={self.rms_difference:.6g} N "
                f"peak[{self.label_a}]={self.peak_azimuth_a:.1f} deg "
                f"peak[{self.label_b}]={self.peak_azimuth_b:.1f} deg")

    def save(self, path):
        path = Path(path)
        lines = [f"# series_a: {self.label_a}",
                 f"# series_b: {self.label_b}",
                 f"# bins: {self.bins}",
                 f"# rms_difference: {self.rms_difference:.15g}",
                 f"# peak_azimuth_a_deg: {self.peak_azimuth_a:.15g}",
                 f"# peak_azimuth_b_deg: {self.peak_azimuth_b:.15g}",
                 "bin_center_deg,mean_a,min_a,max_a,count_a,"
                 "mean_b,min_b,max_b,count_b"]
        for i in range(self.bins):
            lines.append(",".join([f"{self.bin_centers[i]:.15g}"]
                                  + [f"{col[i]:.15g}" for col in
                                     (self.mean_a, self.min_a, self.max_a)]
                                  + [f"{self.count_a[i]:d}"]
                                  + [f"{col[i]:.15g}" for col in
                                     (self.mean_b, self.min_b, self.max_b)]
                                  + [f"{self.count_b[i]:d}"]))
        _atomic_write_text(path, "\n".join(lines) + "\n")
        return path


def _bin_stats(series, bins):
    _, az, _, _, ft = series.final_revolution()
    idx = np.minimum((az * bins / 360.0).astype(int), bins - 1)
    mean = np.full(bins, np.nan)
    lo = np.full(bins, np.nan)
    hi = np.full(bins, np.nan)
    count = np.bincount(idx, minlength=bins)
    for b in np.nonzero(count)[0]:
        vals = ft[idx == b]
        mean[b] = vals.mean()
        lo[b] = vals.min()
        hi[b] = vals.max()
    return mean, lo, hi, count


def _series_label(series):
    lam = series.tip_speed_ratio
    if np.isnan(lam):
        return series.model or "series"
    return f"{series.model} lambda={lam:.2f}"


def compare(a, b, bins=72):
    """Bin both final-revolution force curves by azimuth and difference them.

    The RMS is taken over bins populated in both series, so series with
    different steps_per_rev (or sparse experimental data) compare cleanly.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cannot compare an empty series")
    bins = int(bins)
    if bins < 12:
        raise ValueError(f"bins must be >= 12, got {bins}")
    mean_a, min_a, max_a, count_a = _bin_stats(a, bins)
    mean_b, min_b, max_b, count_b = _bin_stats(b, bins)
    common = (count_a > 0) & (count_b > 0)
    if not common.any():
        raise ValueError("the two series populate no common azimuth bin")
    diff = mean_a[common] - mean_b[common]
    centers = (np.arange(bins) + 0.5) * 360.0 / bins
    peak_a = centers[np.nanargmax(np.abs(mean_a))]
    peak_b = centers[np.nanargmax(np.abs(mean_b))]
    return ComparisonReport(
        bins=bins, bin_centers=centers,
        label_a=_series_label(a), label_b=_series_label(b),
        mean_a=mean_a, min_a=min_a, max_a=max_a, count_a=count_a,
        mean_b=mean_b, min_b=min_b, max_b=max_b, count_b=count_b,
        rms_difference=float(np.sqrt(np.mean(diff ** 2))),
        peak_azimuth_a=float(peak_a), peak_azimuth_b=float(peak_b),
    )


# ---------------------------------------------------------------------------
# plotting


def emit_plot(series_list, path):
    """Normal force vs azimuth, one curve per series, plus the data as CSV.

    The plotted curve is blade 0 over each series' final revolution. The CSV
    lands next to the plot with the same stem and columns
    label,azimuth_deg,fn_total.
    """
    series_list = list(series_list)
    if not series_list:
        raise ValueError("emit_plot needs at least one series")
    for s in series_list:
        if len(s) == 0:
            raise ValueError("cannot plot an empty series")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    if path.suffix.lower() not in (".svg", ".pdf"):
        path = path.with_suffix(".svg")
    curves = []
    for s in series_list:
        az, ft = s.blade_curve(0)
        curves.append((_series_label(s), az, ft))

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for label, az, ft in curves:
        ax.plot(az, ft, label=label)
    ax.set_xlim(0.0, 360.0)
    ax.set_xticks(np.arange(0, 361, 60))
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("normal force F_N (N)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=path.suffix)
    os.close(fd)
    try:
        fig.savefig(tmp)
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)

    csv_path = path.with_suffix(".csv")
    lines = ["label,azimuth_deg,fn_total"]
    for label, az, ft in curves:
        for a_deg, f in zip(az, ft):
            lines.append(f"{label},{a_deg:.15g},{f:.15g}")
    _atomic_write_text(csv_path, "\n".join(lines) + "\n")
    return path


def _atomic_write_text(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
