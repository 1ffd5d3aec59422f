"""argsym: argmin limits of M-estimators, their symmetry, and HulC inference."""

__version__ = "0.1.0"
