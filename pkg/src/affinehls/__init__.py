"""Numerical affine Hardy-Littlewood-Sobolev geometry.

S_alpha(f,h) bodies, radial mean bodies, dual mixed volumes and verifiers for
the HLS-type inequality chains, with error-aware reports.
"""

from .functions import (
    Gaussian,
    GridSampled,
    HlsExtremal,
    Indicator,
    QuadConfig,
    SConcavePeak,
    SimplexExponential,
)
from .geometry import Ball, Box, CrossPolytope, Ellipsoid, Sampled, SimplexGauge, SphereGrid
from .hls import (
    check_representation_identity,
    hls_functional,
    riesz_rearrangement_check,
    verify_corollary_sconcave,
    verify_theorem_1_1,
    verify_theorem_1_2,
    verify_theorem_1_3,
)
from .reports import ChainReport, CheckReport
from .salpha import (
    DivergenceError,
    polar_projection_body_neg,
    radial_mean_body_convex,
    radial_mean_body_fn,
    rho_s_alpha,
    s_alpha_body,
)
from .specialfns import HlsParams

__version__ = "0.1.0"
