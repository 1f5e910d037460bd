"""Marginally interpretable spatial logistic regression with bridge-process random effects."""

from bridgelogit.bridge import (
    BridgeParams,
    MixingSeriesConfig,
    bridge_cdf,
    bridge_density,
    bridge_log_density,
    bridge_quantile,
    bridge_sample,
    bridge_variance,
    mixing_log_density,
    mixing_sample,
    mvbridge_log_density,
    mvbridge_sample,
    unit_variance_phi,
)

__version__ = "0.1.0"
