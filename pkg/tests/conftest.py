import numpy as np
import pytest

from vawtsim.airfoil import naca0021_polar
from vawtsim.turbine import OperatingPoint, TurbineGeometry

RPM = 2.0 * np.pi / 60.0


@pytest.fixture(scope="session")
def rotor():
    """The 12 kW H-rotor used throughout the suite."""
    return TurbineGeometry(
        radius=3.24,
        blade_count=3,
        blade_length=5.0,
        chord_mid=0.25,
        tip_chord=0.15,
        taper_length=1.0,
        pitch_angle=np.radians(2.0),
        hub_height=6.0,
        swept_area=32.0,
    )


@pytest.fixture(scope="session")
def operating_points():
    """The three measured (omega, u_inf) pairs, keyed by nominal tip speed ratio."""
    return {
        2.55: OperatingPoint(omega=49.89 * RPM, u_inf=6.64),
        3.44: OperatingPoint(omega=64.81 * RPM, u_inf=6.39),
        4.09: OperatingPoint(omega=65.05 * RPM, u_inf=5.39),
    }


@pytest.fixture(scope="session")
def polar():
    return naca0021_polar()
