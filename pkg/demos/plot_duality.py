"""
Moving a design between downlink and uplink
===========================================

Filters and scalings are shared by both directions; only the power
diagonals change. The user-wise transfer keeps every user's average MSE,
the sum transfer keeps only their total, and both keep the total power.
"""

import numpy as np

from robustmimo import SystemConfig, amse_downlink, amse_uplink, sample_instance, transfer
from robustmimo.solvers import init_transceiver

cfg = SystemConfig().with_snr(15)
inst = sample_instance(cfg, seed=1)
ul = init_transceiver(inst, cfg)
print("uplink per-user AMSE  ", amse_uplink(inst, ul, cfg.sigma2).per_user_trace)

###############################################################################
# User-wise transfer: each user sees the same AMSE in the downlink.

dl, res = transfer(inst, ul, cfg.sigma2, mode="user")
print("downlink per-user AMSE", amse_downlink(inst, dl, cfg.sigma2).per_user_trace)
print("betas", res.betas, "total power", ul.total_power(), "->", dl.total_power())

###############################################################################
# Sum transfer: one scalar, independent of the channel, keeps the sum only.

dl_sum, res = transfer(inst, ul, cfg.sigma2, mode="sum")
rep = amse_downlink(inst, dl_sum, cfg.sigma2)
print("sum transfer: per-user", rep.per_user_trace, "sum", rep.sum, "beta", res.betas[0])

###############################################################################
# Going back restores the original uplink powers.

back, _ = transfer(inst, dl, cfg.sigma2, mode="user")
print("round-trip power error",
      max(np.max(np.abs(a - b)) for a, b in zip(back.power, ul.power)))
