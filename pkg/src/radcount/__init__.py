"""Counting people in FMCW radar range-azimuth cubes.

Rule-based connected-component counting next to classical regressors, with
synthetic data, metrics and an experiment harness.
"""

from .core import RadarCube, load_cube, save_cube
from .rulecc import RuleCCConfig, predict_sequence

__version__ = "0.1.0"

__all__ = ["RadarCube", "RuleCCConfig", "__version__", "load_cube", "predict_sequence", "save_cube"]
