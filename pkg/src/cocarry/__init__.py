"""Human-humanoid collaborative carrying at desk scale.

A reduced-order closed-loop physics environment, a three-stage training
pipeline (whole-body controller, privileged residual teacher, proprioception-
only student), an evaluation harness for compliance metrics, and a realtime
session server for steering the simulated partner.
"""

__version__ = "0.1.0"
