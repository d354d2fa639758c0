"""Moment-method null controls for boundary-controlled 1D parabolic systems.

Eigenvalue sequences, spectral-hypothesis checks, extended-precision
biorthogonal families, control synthesis with closed-form verification,
and the truncated control cost with its small-time scaling fits.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CoincidentEigenvalues, DefectiveMode, DegenerateDesign, InsufficientSamples, InvalidSpec,
    MomentLabError, PrecisionTooLow, ResidualTooLarge, SequenceTooShort, VanishingObservation,
    ZeroPerturbation,
)
from .spectra import (  # noqa: E402
    EigenvalueSequence, SystemSpec, complex2x2_sequence, condensing_perturbations,
    condensing_sequence, custom_sequence, generate, heat_sequence, modal_eigenpairs,
    phase_field_sequence,
)
from .hypotheses import (  # noqa: E402
    HypothesisReport, check_H2, check_hypotheses, counting_function, fit_counting, minimal_time,
)
from .biorthogonal import (  # noqa: E402
    BiorthogonalFamily, biorthogonal_family, condensation_slope, gram_matrix, norm_bound_report,
    verify_biorthogonality,
)
from .control import (  # noqa: E402
    ControlSignal, MomentProblem, NullControlReport, modal_coefficients, moments_from_initial_data,
    synthesize_control, verify_null_control,
)
from .cost import (  # noqa: E402
    CostCurve, CostSample, FitResult, control_cost, cost_by_power_iteration, cost_sweep,
    fit_scaling,
)
