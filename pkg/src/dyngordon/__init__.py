"""Log-linearized regime-switching dividend-growth model: pricing, insurance, hedging, estimation."""

import types as _types

__version__ = "0.1.0"

from .errors import (ConvergenceError, DegenerateError, InputError, InvalidModelError, NumericalError,
                     PathLimitError)
from .model import ModelSpec, RegimePath, conditional_moments, load_model
from .measures import bond_price, forward_adjust
from .regimes import continuation_paths, filter_regime_posterior
from .pricing import OptionSpec, bond_price_mixture, price_option_conditional, price_option_mixture
from .insurance import MortalityTable, ProductSpec, load_mortality, premium_conditional, premium_mixture
from .hedging import (ZeroCouponClaim, hedge_step, lambda_conditional, lambda_mixture,
                      omega_bar_conditional, omega_mixture, replay_hedge)
from .estimation import PanelData, Params, loglik, score, simulate_panel, zigzag_estimate
from .montecarlo import SimConfig, estimate_hedge_moments, estimate_price, simulate

__all__ = sorted(name for name, obj in globals().items()
                 if not name.startswith("_") and not isinstance(obj, _types.ModuleType))
