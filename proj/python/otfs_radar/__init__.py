"""OTFS MIMO radar simulator: modem, channel, estimator, CRLB and sweeps."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401

import numpy as _np


def deg(x):
    """Degrees to radians."""
    return _np.deg2rad(x)


def kmh(x):
    """km/h to m/s."""
    return x / 3.6
