"""Entropy-regularized pricing of American options by policy improvement."""

from .config import ConfigError, load_config
from .lattice import (LatticeModel, american_value, entropy_value_exact, european_value,
                      lattice_dual_upper, lattice_pia)
from .model import (DimensionError, LambdaSchedule, MarketModel, Method, Payoff, PayoffKind,
                    RunConfig, TimeGrid, discount_factor, evaluate_payoff)
from .paths import PathBatch, european_price, simulate
from .pia import (PriceReport, ValueSurface, dual_upper_bound, init_surface, out_of_sample_price,
                  pia_sweep, price, run_classical_penalization, run_pia)
from .regression import Basis, BasisKind, RegressionPlan, build_plan, cond_exp
from .scheme import NumericalError, classical_node, exponential_step, intensity, policy

__version__ = "0.1.0"
