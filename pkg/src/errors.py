"""
Exception hierarchy shared by the solver modules.

Library code raises these; process.py records them per benchmark cell and
main.py maps them to exit codes.
"""
from typing import Optional

import numpy as np


class TpcError(Exception):
    """Base class for every error raised by the TPC solvers"""


class UsageError(TpcError):
    """Caller passed inconsistent dimensions or parameters"""


class InfeasibleError(TpcError):
    """Scenario geometry admits no feasible point"""


class InfeasibleStartError(InfeasibleError):
    """Convex program start point is not strictly feasible"""


class HorizonTooShortError(InfeasibleError):
    """Required number of slots exceeds N/2"""


class TrajectoryInitError(TpcError):
    """Initial trajectory planner could not build a strictly feasible path"""


class SolverError(TpcError):
    """An iterative solver failed to produce a usable iterate"""


class NumericalError(SolverError):
    """Non-finite Newton step or Hessian that cannot be made definite"""

    def __init__(self, message: str, iterate: Optional[np.ndarray] = None):
        if iterate is not None:
            message = f"{message} (iterate: {np.array2string(iterate, threshold=20, precision=6)})"
        super().__init__(message)
        self.iterate = iterate


class TrustRegionError(SolverError):
    """Linearized interference denominator left the positive half-space"""


class StallError(SolverError):
    """Segment-by-segment driver stopped approaching the hovering rate"""

    def __init__(self, message: str, best_rate: float):
        super().__init__(f"{message} (best slot sum rate {best_rate:.6g} bit/s)")
        self.best_rate = best_rate


class OutputError(TpcError):
    """Output files could not be produced"""


class DegenerateGeometryError(UsageError):
    """A UAV coincides with a ground terminal, so the path loss is undefined"""
