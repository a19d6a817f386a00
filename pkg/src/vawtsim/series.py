"""Force time series: the common output record of both solvers.

Each sample is the instantaneous normal force on one blade at one azimuth.
``fn_per_span`` is the 2D section force in N/m; ``fn_total`` is the strip
scaling ``fn_per_span * blade_length`` in N, an upper bound that ignores tip
effects.

CSV contract (stable across tools):

    # model: vortex
    # lambda: 3.44123864584486
    # scenario: 5f1c...
    rev,azimuth_deg,blade,fn_per_span,fn_total
    0,5,0,12.3456789012345,61.7283945061726

Comma separated, '.' decimal point, LF line endings, floats printed with 15
significant digits. Files are written atomically (temp file + rename).
"""

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_HEADER = "rev,azimuth_deg,blade,fn_per_span,fn_total"


def azimuth_degrees(azimuth):
    """Radians to degrees in [0, 360), safe against the CSV print precision.

    Values within float noise of 360 snap to 0 so that 15-significant-digit
    printing can never emit the excluded endpoint.
    """
    deg = math.degrees(azimuth) % 360.0
    if deg > 360.0 - 1e-9:
        return 0.0
    return deg


class SeriesFormatError(ValueError):
    """Raised when a force-series CSV violates the format contract."""


@dataclass(frozen=True)
class ForceSample:
    revolution: int
    azimuth_deg: float
    blade_index: int
    fn_per_span: float
    fn_total: float

    def __post_init__(self):
        if not 0.0 <= self.azimuth_deg < 360.0:
            raise ValueError(f"azimuth_deg {self.azimuth_deg} outside [0, 360)")
        if self.revolution < 0 or self.blade_index < 0:
            raise ValueError("revolution and blade_index must be non-negative")


@dataclass
class ForceSeries:
    """Normal-force samples plus the metadata needed to label a comparison."""

    model: str
    tip_speed_ratio: float
    scenario_hash: str = ""
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def append(self, revolution, azimuth_deg, blade_index, fn_per_span, fn_total):
        self.samples.append(ForceSample(revolution, azimuth_deg, blade_index,
                                        fn_per_span, fn_total))

    def as_arrays(self):
        """Columns as numpy arrays: (rev, azimuth_deg, blade, fn_per_span, fn_total)."""
        if not self.samples:
            return (np.empty(0, dtype=int), np.empty(0), np.empty(0, dtype=int),
                    np.empty(0), np.empty(0))
        rev = np.array([s.revolution for s in self.samples], dtype=int)
        az = np.array([s.azimuth_deg for s in self.samples])
        blade = np.array([s.blade_index for s in self.samples], dtype=int)
        fn = np.array([s.fn_per_span for s in self.samples])
        ft = np.array([s.fn_total for s in self.samples])
        return rev, az, blade, fn, ft

    def final_revolution(self):
        """Samples of the last recorded revolution, as column arrays."""
        rev, az, blade, fn, ft = self.as_arrays()
        if rev.size == 0:
            raise ValueError("series is empty")
        keep = rev == rev.max()
        return rev[keep], az[keep], blade[keep], fn[keep], ft[keep]

    def blade_curve(self, blade_index, revolution=None):
        """(azimuth_deg, fn_total) for one blade, sorted by azimuth.

        Defaults to the final revolution.
        """
        rev, az, blade, _, ft = self.as_arrays()
        if rev.size == 0:
            raise ValueError("series is empty")
        if revolution is None:
            revolution = rev.max()
        keep = (rev == revolution) & (blade == blade_index)
        order = np.argsort(az[keep], kind="stable")
        return az[keep][order], ft[keep][order]

    def save(self, path):
        path = Path(path)
        lines = [f"# model: {self.model}",
                 f"# lambda: {self.tip_speed_ratio:.15g}",
                 f"# scenario: {self.scenario_hash}",
                 _HEADER]
        for s in self.samples:
            lines.append(f"{s.revolution},{s.azimuth_deg:.15g},{s.blade_index},"
                         f"{s.fn_per_span:.15g},{s.fn_total:.15g}")
        text = "\n".join(lines) + "\n"
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = {"model": "", "lambda": "nan", "scenario": ""}
        samples = []
        header_seen = False
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line.lstrip("#").strip()
                    key, _, value = body.partition(":")
                    key = key.strip().lower()
                    if key in meta:
                        meta[key] = value.strip()
                    continue
                if not header_seen:
                    if line != _HEADER:
                        raise SeriesFormatError(
                            f"{path}:{lineno}: expected header '{_HEADER}', got '{line}'")
                    header_seen = True
                    continue
                fields = line.split(",")
                if len(fields) != 5:
                    raise SeriesFormatError(
                        f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
                try:
                    samples.append(ForceSample(int(fields[0]), float(fields[1]),
                                               int(fields[2]), float(fields[3]),
                                               float(fields[4])))
                except ValueError as exc:
                    raise SeriesFormatError(f"{path}:{lineno}: {exc}") from exc
        if not header_seen:
            raise SeriesFormatError(f"{path}: missing header line '{_HEADER}'")
        try:
            lam = float(meta["lambda"])
        except ValueError as exc:
            raise SeriesFormatError(f"{path}: bad lambda metadata: {exc}") from exc
        return cls(model=meta["model"], tip_speed_ratio=lam,
                   scenario_hash=meta["scenario"], samples=samples)
