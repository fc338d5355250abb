"""Affine processes: Riccati flows, conservativeness and martingale verdicts."""
__version__ = "0.1.0"

from .model import AffineParams, Outcome, Verdict, validate_admissibility  # noqa: E402
from .specfile import dump_spec, load_spec  # noqa: E402

__all__ = ["__version__", "AffineParams", "Outcome", "Verdict", "validate_admissibility",
           "load_spec", "dump_spec"]
