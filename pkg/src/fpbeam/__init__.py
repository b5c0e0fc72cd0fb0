"""Downlink multicell beamforming and user scheduling simulator."""

__version__ = "0.1.0"

from . import assignment, baselines, fp, network, simulator  # noqa: F401
