"""Massive-MIMO joint communication and sensing simulator."""

__version__ = "0.1.0"

from .geometry import ArrayGeometry, Direction, steering_vector, beam_gain
from .propagation import (
    UserModel,
    UserChannel,
    RadarTarget,
    rayleigh_channel,
    los_channel,
    rice_channel,
    rice_k_factor,
    target_alpha,
    pathloss,
)
from .estimation import make_pilots, pilot_rx, hbar, pm_estimate, lmmse_estimate
from .beamforming import matched_beamformer, pbr_beamformer, zfr_beamformer
from .radar import (
    OfdmParams,
    ofdm_params,
    build_tx_grid,
    echo_synthesize,
    glrt_statistic,
    glrt_detect,
    calibrate_threshold,
    detection_probability,
    natural_grid,
)
from .rates import rate_pm, rate_lmmse, mc_rate_bound, delta_terms
from .harness import noise_variance, drop_users, run_rate_campaign, run_detection_campaign
