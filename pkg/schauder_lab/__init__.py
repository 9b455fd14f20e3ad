"""Numerical laboratory for the stochastic transport-diffusion equation.

The package simulates Brownian and compensated-Poisson driven mild solutions
through heat-kernel convolution, solves the transport case by a windowed
Picard iteration, and measures the spatial Hölder regularity of the gradient.
"""

from schauder_lab.logging_config import configure_logging, get_logger

__all__ = ["get_logger", "configure_logging"]

__version__ = "0.1.0"
