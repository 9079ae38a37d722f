"""One-shot coherence dilution: monotones, free-operation channels and their certification.

Quantities are in bits; fidelity is the squared form ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``.
"""

from .core import (
    ChannelError,
    ChoiChannel,
    DensityMatrix,
    IncoherentState,
    KrausChannel,
    OperationClass,
    PureState,
    StateError,
    apply_channel,
    dephase,
    dmax,
    fidelity,
    kraus_to_choi,
    maximally_coherent,
    tensor,
    tensor_power,
)
from .dilution import (
    DilutionProtocol,
    DimensionCapError,
    PermutationMixture,
    asymptotic_sweep,
    majorize_check,
    one_shot_cost,
    permutation_mixture,
    synthesize_dio,
    synthesize_io,
    synthesize_mio,
)
from .monotones import (
    Ensemble,
    MonotoneResult,
    SmoothingMethod,
    SmoothingParams,
    c_0,
    c_0_eps,
    c_delta_max,
    c_delta_max_eps,
    c_f,
    c_max,
    c_max_eps,
    c_r,
)
from .sdp import SdpOptions, SdpProblem, feasibility, solve
from .verify import (
    Certificate,
    audit_protocol,
    check_class,
    check_cptp,
    property_suite_convexity,
    property_suite_monotonicity,
    sample_channel,
)

__version__ = "0.1.0"

__all__ = [
    "SdpOptions",
    "SdpProblem",
    "feasibility",
    "solve",
    "ChannelError",
    "ChoiChannel",
    "DensityMatrix",
    "IncoherentState",
    "KrausChannel",
    "OperationClass",
    "PureState",
    "StateError",
    "apply_channel",
    "dephase",
    "dmax",
    "fidelity",
    "kraus_to_choi",
    "maximally_coherent",
    "tensor",
    "tensor_power",
    "DilutionProtocol",
    "DimensionCapError",
    "PermutationMixture",
    "asymptotic_sweep",
    "majorize_check",
    "one_shot_cost",
    "permutation_mixture",
    "synthesize_dio",
    "synthesize_io",
    "synthesize_mio",
    "Ensemble",
    "MonotoneResult",
    "SmoothingMethod",
    "SmoothingParams",
    "c_0",
    "c_0_eps",
    "c_delta_max",
    "c_delta_max_eps",
    "c_f",
    "c_max",
    "c_max_eps",
    "c_r",
    "Certificate",
    "audit_protocol",
    "check_class",
    "check_cptp",
    "property_suite_convexity",
    "property_suite_monotonicity",
    "sample_channel",
]
