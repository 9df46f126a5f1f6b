"""
Robust MSE-based transceiver design for the multiuser MIMO downlink with
imperfect channel state information.

The package evaluates average MSEs under a Kronecker-structured channel
estimation error, converts designs between downlink and a dual uplink, and
optimizes filters and powers for the weighted sum or the weighted maximum
of the users' average MSEs.
"""

__version__ = "0.1.0"

from .amse import (AmseReport, Direction, Transceiver, amse_downlink, amse_uplink,
                   mamse_rx_downlink, mamse_rx_uplink)
from .duality import dl_to_ul_sum, dl_to_ul_user, transfer, ul_to_dl_sum, ul_to_dl_user
from .errors import *  # noqa: F401,F403  (re-export)
from .model import (ChannelInstance, SystemConfig, draw_true_channel, exp_correlation,
                    make_instance, random_instance, sample_instance)
from .powalloc import build_coupling, gp_power, minmax_power
from .solvers import (SolveTrace, algorithm_one, algorithm_two, case1_reference,
                      naive_design, perfect_design, solve)

__all__ = [
    "AmseReport", "Direction", "Transceiver", "amse_downlink", "amse_uplink",
    "mamse_rx_downlink", "mamse_rx_uplink", "dl_to_ul_sum", "dl_to_ul_user", "transfer",
    "ul_to_dl_sum", "ul_to_dl_user", "ChannelInstance", "SystemConfig", "draw_true_channel",
    "exp_correlation", "make_instance", "random_instance", "sample_instance",
    "build_coupling", "gp_power", "minmax_power", "SolveTrace", "algorithm_one",
    "algorithm_two", "case1_reference", "naive_design", "perfect_design", "solve",
]
