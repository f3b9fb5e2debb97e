"""Detection and backtesting of distributionally robust statistical arbitrage
strategies: data-driven ambiguity sets of perturbed empirical path measures,
bounded feed-forward trading networks trained against a penalized conditional
super-replication objective, and a windowed net-of-cost backtest engine."""

from .backtest import (Metrics, SuiteResult, WindowProfits, buy_and_hold, evaluate,
                       experiment_suite, metrics, one_time_buy_and_hold)
from .costs import CostSpec, step_cost, total_costs
from .market_data import (AssetBounds, PathMatrix, PriceSeries, build_paths,
                          compute_bounds, load_series, normalize_spot)
from .measures import (Perturbation, ScenarioSet, build_ambiguity_set, coupling_cost,
                       empirical_scenarios, perturb, sample_perturbation)
from .objective import (ObjectiveConfig, PenaltyFn, conditional_cell_means,
                        estimate_gamma, penalized_loss, penalized_loss_and_grad)
from .partition import (BoxPartition, OutOfBoundsError, brute_force_cells, cell_index,
                        cell_indices, sample_boxes)
from .strategy_net import GradientBundle, StrategyNetwork, init, net_profit, positions
from .trainer import TrainConfig, TrainingLog, fine_tune_online, train

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
