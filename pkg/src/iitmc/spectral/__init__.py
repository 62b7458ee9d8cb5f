"""Exact spectral analysis of informed chains on enumerable targets."""

from .certificates import (
    BoundReport,
    CertificateFailure,
    ConcentrationCertificate,
    DecompositionCertificate,
    UnimodalCertificate,
    bound_decomposition,
    bound_set,
    bound_unimodal,
    concentration_Z_bounds,
    kappa,
    lemma_bound,
    unimodal_specializations,
    verify_concentration,
    verify_decomposition,
    verify_unimodal,
)
from .exact import (
    DEFAULT_CAP,
    ExactChain,
    ExactKernel,
    NumericalError,
    ads_kernel,
    build_exact,
    mixing_time,
    restrict,
    reversibility_residual,
    rwmh_kernel,
    spectral_gap,
    spectrum,
    trace_kernel,
    transition_function,
    worst_tv,
)

trace = trace_kernel
