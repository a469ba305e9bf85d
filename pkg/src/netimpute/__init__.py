"""netimpute: constraint-aware super-resolution of network telemetry.

Imputes fine-grained telemetry time series from multiple correlated
coarse-grained measurements, keeps the output consistent with exactly what
the monitoring tools reported, and repairs any remaining violations with an
exact solver.
"""

__version__ = "0.1.0"

from .series import (  # noqa: F401
    CoarseBundle,
    CoarsenerSpec,
    FineSeries,
    WindowExample,
    coarsen,
    make_windows,
)
from .constraints import (  # noqa: F401
    Constraint,
    ConstraintSet,
    builtin_library,
    eval_exact,
    eval_smooth,
    load_constraints,
    parse_constraints,
)
from .datagen import TrafficConfig, build_dataset, simulate  # noqa: F401
