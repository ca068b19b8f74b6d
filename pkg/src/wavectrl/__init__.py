"""Observability and control synthesis for Schrodinger equations on
waveguide supercells: spectral calculus, cell decomposition into unit-torus
fibers, matrix-free control Gramians, HUM null control, the nonlinear
fixed point, and dispersive space-time norms."""

__version__ = "0.1.0"

from .grid import (
    Field,
    GridError,
    RepresentationError,
    SobolevIndex,
    WaveguideGrid,
    apply_multiplier,
    bessel_potential,
    constant_field,
    field_conj,
    l2_inner,
    l2_norm,
    mode_field,
    random_field,
    sobolev_inner,
    sobolev_norm,
    to_physical,
    to_spectral,
    translate,
    zero_field,
)
from .regions import (
    ControlRegion,
    CutoffChi,
    RegionError,
    TimeCutoff,
    build_chi,
    build_phi,
    commutator_apply,
    whole_domain_region,
)
from .propagators import (
    BlowUpError,
    HumControlSource,
    NlsParams,
    SourceSchedule,
    Trajectory,
    ZeroSource,
    linear_propagate,
    nls_solve,
    nls_step,
    twisted_propagate,
)
from .floquet import (
    FiberBundle,
    QuasiMomentum,
    fiber_commutes_with_flow,
    floquet_forward,
    floquet_forward_direct,
    floquet_inverse,
    resolvent_ratio,
)
from .observability import (
    GramianSpec,
    gramian_apply,
    make_gramian_spec,
    observability_constant,
    weak_observability_check,
)
from .control import (
    ControlSolution,
    FixedPointConfig,
    HumSolveConfig,
    duality_check,
    exact_control,
    hum_solve,
    linear_null_control,
    nonlinear_null_control,
    v_equation_residual,
)
from .xsb import (
    SpaceTimeField,
    XsbParams,
    gain_integration_scaling,
    trilinear_ratio,
    xsb_norm,
)
