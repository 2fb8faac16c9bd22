"""Relative state estimation between two IMU-equipped platforms.

Implements SO(3) primitives, single-platform IMU preintegration, a
dual-platform preintegrated relative-motion factor with analytic
Jacobians, a pinhole fiducial measurement model, a fixed-lag Gauss-Newton
smoother, bias-observability analysis and a synthetic-data harness.
"""

from . import (cli, errors, factor, imu, observability, smoother, so3, synth,
               vision)

__all__ = ["cli", "errors", "factor", "imu", "observability", "smoother",
           "so3", "synth", "vision"]
__version__ = "0.1.0"
