"""
Seedmix configuration, one attribute per setting of the ini file.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import orjson
from configupdater import ConfigUpdater

from seedmix.evaluation import DEFAULT_LAMBDAS, DEFAULT_THRESHOLDS, ParamGrid
from seedmix.mtl import Formulation, SolverOptions
from seedmix.portfolio import AllocationOptions
from seedmix.risk import RiskBudget
from seedmix.synthetic import SyntheticConfig


@dataclass(eq=False)
class SeedMixConfig:
    # pylint: disable=too-many-instance-attributes

    config_updater: Optional[ConfigUpdater] = None
    """
    The parsed ini file this config was read from, kept so ``to_ini`` preserves its comments.
    """

    experiment: Optional[Path] = None
    """
    experiment.csv with the field trials, see seedmix.ingest for the columns.
    """

    region_soil: Optional[Path] = None
    """
    region_soil.csv, soil and area of every location to plan for.
    """

    region_weather: Optional[Path] = None
    """
    region_weather.csv, one row per location and year.
    """

    synthetic: bool = False
    """
    Generate the experiment and region data from the [synthetic] section instead of reading files.
    Exactly one of ``synthetic`` and the input files may be used.
    """

    out_dir: Path = Path('seedmix_out')
    """
    Where reports are written.
    """

    seed: int = 0
    """
    Seed of the train/test split and of the cross validation folds.
    """

    train_ratio: float = 0.8

    cv_folds: int = 5

    threads: int = 1
    """
    Worker threads for per-location stages and grid search; 1 keeps everything on the calling thread.
    """

    write_distributions: bool = False
    """
    Write mu.csv and sigma.csv of every location under distributions/ (large).
    """

    frontier_location: Optional[str] = None
    """
    Location whose efficient frontier is reported, the first location id when unset.
    """

    allow_nonconverged: bool = False
    """
    Exit with 0 even if a solver stopped at its iteration limit.
    """

    formulation: Formulation = Formulation.MEAN
    """
    mean or graph.
    """

    mean_lambda: float = 0.01

    lambda_l: float = 0.01
    """
    Penalty of the multi-task lasso whose coefficients define the task graph.
    """

    threshold: float = 0.9
    """
    Correlation two tasks must exceed to be joined in the task graph.
    """

    lambda1: float = 0.1
    """
    Weight of the graph penalty.
    """

    lambda2: float = 0.1
    """
    Weight of the L1 penalty of the graph formulation.
    """

    tune: bool = False
    """
    Pick the penalties by grid search with cross validation before training.
    """

    compare: bool = False
    """
    Also fit the other formulation with its configured penalties and report its test scores.
    """

    lambda_grid: List[float] = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    lambda_l_grid: List[float] = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    threshold_grid: List[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    lambda1_grid: List[float] = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    lambda2_grid: List[float] = field(default_factory=lambda: list(DEFAULT_LAMBDAS))

    max_iterations: int = 10000
    tolerance: float = 1e-6
    rho: float = 1.0
    backtracking: float = 0.5

    r_min: float = 0.1
    """
    Risk tolerated on land with productivity index 0.
    """

    r_max: float = 5.1
    """
    Risk tolerated on land with the highest productivity index.
    """

    pi_max: int = 18

    epsilon: float = 1e-6
    """
    Covariance ridge, relative to the mean scenario variance of a location.
    """

    frontier_points: int = 20

    risk_grid: List[float] = field(default_factory=list)
    """
    Risk caps of the reported frontier, spread from the minimum-variance risk to the riskiest variety when empty.
    """

    allocation_tolerance: float = 1e-6
    """
    Relative distance of the achieved risk to its cap at which the bisection over the risk multiplier stops.
    """

    allocation_iterations: int = 5000
    """
    Projected gradient iterations per scalarized allocation problem.
    """

    max_bisections: int = 200
    gamma_low: float = 1e-8
    gamma_high: float = 1e8
    polish_every: int = 10

    top_m: int = 6
    """
    Candidate varieties kept after the first allocation pass.
    """

    max_plan_entries: int = 5

    min_share: float = 0.10
    """
    Varieties below this share of the plan are dropped and the rest renormalized.
    """

    num_varieties: int = 20
    num_locations: int = 200
    first_year: int = 2001
    last_year: int = 2015
    deviation_scale: float = 5.0
    deviation_sparsity: float = 0.5
    noise_std: float = 2.0
    cluster_count: int = 4
    synthetic_seed: int = 0
    min_observations: int = 20
    max_observations: int = 500
    pareto_shape: float = 1.16
    max_area: float = 1.0
    true_task_mean: List[float] = field(default_factory=list)
    """
    11 planted mean coefficients (features then intercept), built in defaults when empty.
    """

    debug: bool = False
    """
    Set logger level to debug
    """

    console_format: str = '<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | {message}'
    """
    Set logger output format
    """

    diagnose_errors: bool = False
    """
    Let loguru show variable values in tracebacks.
    """

    def solver_options(self) -> SolverOptions:
        return SolverOptions(max_iterations=self.max_iterations, tolerance=self.tolerance, rho=self.rho, backtracking=self.backtracking)

    def allocation_options(self) -> AllocationOptions:
        return AllocationOptions(
            tolerance=self.allocation_tolerance,
            max_bisections=self.max_bisections,
            max_iterations=self.allocation_iterations,
            gamma_low=self.gamma_low,
            gamma_high=self.gamma_high,
            polish_every=self.polish_every,
        )

    def risk_budget(self) -> RiskBudget:
        return RiskBudget(r_min=self.r_min, r_max=self.r_max, pi_max=self.pi_max)

    def params(self, formulation: Optional[Formulation] = None) -> Dict[str, float]:
        formulation = Formulation(formulation or self.formulation)
        if formulation == Formulation.MEAN:
            return {'lambda': self.mean_lambda}
        if formulation == Formulation.LASSO:
            return {'lambda_l': self.lambda_l}
        return {'lambda_l': self.lambda_l, 'threshold': self.threshold, 'lambda1': self.lambda1, 'lambda2': self.lambda2}

    def use_params(self, params: Dict[str, float]):
        """
        Take over penalties chosen by tuning.
        """
        names = {'lambda': 'mean_lambda', 'lambda_l': 'lambda_l', 'threshold': 'threshold', 'lambda1': 'lambda1', 'lambda2': 'lambda2'}
        for name, value in params.items():
            setattr(self, names[name], value)

    def param_grid(self) -> ParamGrid:
        return ParamGrid(
            {
                'lambda': self.lambda_grid,
                'lambda_l': self.lambda_l_grid,
                'threshold': self.threshold_grid,
                'lambda1': self.lambda1_grid,
                'lambda2': self.lambda2_grid,
            }
        )

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(
            num_varieties=self.num_varieties,
            num_locations=self.num_locations,
            years=range(self.first_year, self.last_year + 1),
            true_task_mean=list(self.true_task_mean) or None,
            task_deviation_scale=self.deviation_scale,
            deviation_sparsity=self.deviation_sparsity,
            noise_std=self.noise_std,
            cluster_count=self.cluster_count,
            rng_seed=self.synthetic_seed,
            min_observations=self.min_observations,
            max_observations=self.max_observations,
            pareto_shape=self.pareto_shape,
            max_area=self.max_area,
        )

    def __str__(self):
        config = self.to_dict()

        output = []
        for key in config:
            output.append(f'{key}:')
            for value in config[key]:
                output.append(f'  {value}: {config[key][value]}')

        return '\n'.join(output)

    def to_json(self) -> str:
        return orjson.dumps(self.to_dict(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS).decode('UTF-8')

    def to_dict(self) -> dict:
        from seedmix.configuration_utils import field_info

        config: Dict[str, dict] = {}
        for name, (section, _, _) in field_info.items():
            value = getattr(self, name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, Formulation):
                value = value.value
            config.setdefault(section, {})[name] = value

        return config
