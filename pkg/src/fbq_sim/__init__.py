"""Limited-feedback multi-user beamforming simulations: product channel
quantizers, robust zero-forcing power control, and feedback bit allocation."""

__version__ = "0.1.0"

from .channel import (
    ChannelSet,
    ChiSquareMagnitude,
    angle_between,
    angle_to_subspace,
    chi_square_facts,
    sample_channels,
    zero_forcing_beams,
)
from .directions import (
    DirectionCodebook,
    build_grassmannian,
    lambda_m,
    quantize_direction,
    random_rotation,
    verify_cap_bound,
)
from .magnitude import (
    MagnitudeCodebook,
    build_uniform_db,
    expected_inverse_quantized,
    quantize_magnitude,
    quantized_inverse_bound,
    solve_zeta,
)
from .power import (
    PowerAllocation,
    SectorRegion,
    asymptotic_power_terms,
    average_power_bound,
    closed_form_robust,
    csi_zf_power,
    mqcs_min_dir_size,
    worst_case_sinr,
)
from .product import (
    ProductCodebook,
    QuantizedState,
    estimate_outage,
    outage_split,
    quantize_all,
)
from .sdp import LmiProblem, RobustSolution, sdp_matrices, solve_sdp
