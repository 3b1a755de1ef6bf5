"""Matrix orthogonal polynomials with non-symmetric recurrences, their Markov
functions, Dirac-delta perturbations and limit experiments."""

from .asymptotics import (
    ConvergenceTable,
    ExperimentRefused,
    derivative_ratio_experiment,
    inverse_decay_experiment,
    ratio_experiment,
    relative_asymptotics_experiment,
    xi_limit_experiment,
)
from .dirac import (
    DeltaSpec,
    PerturbedFamily,
    RegularityError,
    cd_residual,
    delta_on_P0,
    kernel_at_zero,
    kernel_eval,
    perturbed_biorthogonality,
    perturbed_recurrence,
    perturbed_V,
    regularity_check,
)
from .markov import (
    ContourSpec,
    ConvergenceFailure,
    MarkovEvaluator,
    approximant_F,
    contour_pairing,
    derivative_F,
    example1_closed_forms,
    fixed_point_F,
    perturbed_markov,
)
from .polymat import MatrixPolynomial, ScalarPolynomial, det_and_adjugate, derivative, eval_poly, scalar_roots
from .recurrence import (
    FamilyError,
    InitialTriple,
    RecurrenceFamily,
    VerificationError,
    generate_B1,
    generate_G,
    generate_G1,
    generate_V,
    leading_coefficients,
    liouville_residual,
    transform_initial_conditions,
)
from .sobolev import sobolev_pack
from .spectral import (
    QuadratureRule,
    gershgorin_bound,
    quadrature_apply,
    quadrature_weights,
    truncated_jacobi,
    zeros_of_V,
)

__version__ = "0.1.0"
