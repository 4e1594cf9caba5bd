"""Structured-light 3D scanning toolkit.

Pattern generation, acquisition simulation, pattern decoding, ray
triangulation, grid meshing and quality metrics, with a CLI front end
(``slscan``). See README.md for the pipeline walkthrough.
"""

__version__ = "0.1.0"

from . import errors  # noqa: F401
