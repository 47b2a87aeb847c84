"""
The three stages of a run wired together: estimation (train the yield model), projection (scenarios, distributions
and risk caps per location) and planning (allocations, demand, candidates, plan).  Each stage failure is raised as a
PipelineError naming the stage; ``run_pipeline`` writes the report bundle and removes it again on failure.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

from loguru import logger

from seedmix.configuration import SeedMixConfig
from seedmix.errors import ParameterError, PipelineError, SeedMixError
from seedmix.evaluation import CvResult, grid_search, model_metrics
from seedmix.ingest import load_experiment, load_region, region_gaps
from seedmix.mtl import CoefficientMatrix, Formulation, fit_formulation
from seedmix.normalization import NormalizationSpec, fit_normalizer
from seedmix.planning import DemandVector, StockingPlan, aggregate_demand, allocate_all, finalize_plan, location_risk_caps, ordered_map, rank_top_m, reoptimize_restricted
from seedmix.plots import plot_demand, plot_frontier, plot_plan
from seedmix.portfolio import AllocationWeights, FrontierPoint, default_risk_grid, efficient_frontier, variety_points
from seedmix.records import ExperimentRecord, RegionLocation
from seedmix.reports import (
    MODEL_REPORTS,
    PLAN_REPORTS,
    ReportWriter,
    load_coefficients,
    load_normalizer,
    write_allocations,
    write_coefficients,
    write_cv_report,
    write_demand,
    write_distribution,
    write_frontier,
    write_gaps,
    write_json,
    write_model_meta,
    write_normalizer,
    write_plan,
    write_skipped,
)
from seedmix.risk import YieldDistribution, estimate_distribution, project_scenarios
from seedmix.synthetic import SyntheticData, generate_synthetic
from seedmix.tasks import MultiTaskDataset, assemble_tasks, split_records


@contextmanager
def stage(name: str) -> Iterator[None]:
    """
    Re-raise anything a stage throws as a PipelineError labeled ``name``.
    """
    try:
        yield
    except PipelineError:
        raise
    except (SeedMixError, ValueError, KeyError, ArithmeticError, OSError) as error:
        logger.error('Stage {} failed: {}', name, error)
        raise PipelineError(name, error) from error


@dataclass
class Inputs:
    records: List[ExperimentRecord]
    locations: List[RegionLocation]
    synthetic: Optional[SyntheticData] = None


@dataclass
class TrainedModel:
    W: CoefficientMatrix
    normalizer: NormalizationSpec
    train: MultiTaskDataset
    test: Optional[MultiTaskDataset]
    metrics: Dict[str, object] = field(default_factory=dict)
    cv: Optional[CvResult] = None

    @property
    def converged(self) -> bool:
        return bool(self.W.report is None or self.W.report.converged)


@dataclass
class Projection:
    distributions: Dict[str, YieldDistribution]
    caps: Dict[str, float]
    locations: List[RegionLocation]
    skipped: List[Tuple[str, str]] = field(default_factory=list)


@dataclass
class PlanResult:
    plan: StockingPlan
    demand: DemandVector
    restricted_demand: DemandVector
    candidates: List[str]
    allocations: List[AllocationWeights]
    restricted_allocations: List[AllocationWeights]
    gaps: List[Tuple[str, float, float]]

    @property
    def infeasible(self) -> int:
        return sum(1 for allocation in self.allocations if not allocation.feasible)


def load_inputs(config: SeedMixConfig, need_region: bool = True) -> Inputs:
    with stage('data'):
        if config.synthetic:
            data = generate_synthetic(config.synthetic_config())
            return Inputs(data.records, data.locations, data)

        records = load_experiment(config.experiment) if config.experiment else []
        locations: List[RegionLocation] = []
        if config.region_soil and config.region_weather:
            locations = load_region(config.region_soil, config.region_weather)
        elif need_region:
            raise ParameterError('region_soil and region_weather are required to plan')

        return Inputs(records, locations)


def prepare_datasets(config: SeedMixConfig, inputs: Inputs) -> Tuple[NormalizationSpec, MultiTaskDataset, Optional[MultiTaskDataset]]:
    """
    Train/test split of the trials and the normalizer used for both.  Generated data keeps the generator's normalizer,
    so the fitted coefficients live in the same coordinates as the planted ones.
    """
    train_records, test_records = split_records(inputs.records, config.train_ratio, config.seed)
    normalizer = inputs.synthetic.normalizer if inputs.synthetic else fit_normalizer(train_records)
    train = assemble_tasks(train_records, normalizer)
    test = assemble_tasks(test_records, normalizer) if test_records else None
    logger.info('Split {} trials into {} training and {} test rows', len(inputs.records), train.total_rows, test.total_rows if test else 0)
    return normalizer, train, test


def tune(config: SeedMixConfig, train: MultiTaskDataset, formulation: Optional[Formulation] = None) -> CvResult:
    formulation = Formulation(formulation or config.formulation)
    result = grid_search(train, formulation, config.param_grid(), config.cv_folds, config.seed, config.solver_options(), config.threads)
    logger.info('Best {} parameters {} with validation score {}', formulation.value, result.best, result.best_score)
    return result


def train_model(config: SeedMixConfig, inputs: Inputs) -> TrainedModel:
    """
    Fit the configured formulation on the training split, tuning its penalties first when ``config.tune`` is set.
    """
    with stage('estimation'):
        if not inputs.records:
            raise ParameterError('no experiment records to train on')

        normalizer, train, test = prepare_datasets(config, inputs)
        cv = None
        if config.tune:
            cv = tune(config, train)
            config.use_params(cv.best)

        W = fit_formulation(config.formulation, train, config.params(), config.solver_options())
        datasets = {'train': train, **({'test': test} if test else {})}
        metrics: Dict[str, object] = dict(model_metrics(W, **datasets))
        metrics['converged'] = W.report.converged
        metrics['iterations'] = W.report.iterations
        if not W.report.converged:
            logger.warning('{} solver stopped after {} iterations without converging', config.formulation.value, W.report.iterations)

        if config.compare:
            other = Formulation.GRAPH if config.formulation == Formulation.MEAN else Formulation.MEAN
            rival = fit_formulation(other, train, config.params(other), config.solver_options())
            metrics['comparison'] = {
                'formulation': other.value,
                'penalties': rival.report.penalties,
                'converged': rival.report.converged,
                **model_metrics(rival, **datasets),
            }
            logger.info('Compared with {}: {}', other.value, metrics['comparison'])

        if inputs.synthetic:
            planted = inputs.synthetic.coefficients
            if set(W.variety_ids) == set(planted.variety_ids):
                metrics['planted_max_abs_error'] = float(abs(W.columns(planted.variety_ids) - planted.entries).max())

        logger.info('Trained {} on {} tasks: {}', config.formulation.value, train.num_tasks, {k: v for k, v in metrics.items() if k.endswith('rmse_paper') or k.endswith('rmse_standard')})
        return TrainedModel(W, normalizer, train, test, metrics, cv)


def load_model(model_dir: Path) -> Tuple[CoefficientMatrix, NormalizationSpec]:
    with stage('estimation'):
        model_dir = Path(model_dir)
        W = load_coefficients(model_dir / 'model.csv')
        normalizer = load_normalizer(model_dir / 'normalization.csv')
        if W.feature_names[:-1] != normalizer.feature_names:
            raise ParameterError(f'{model_dir}: model features {W.feature_names[:-1]} do not match the normalizer {normalizer.feature_names}')
        return W, normalizer


def project(config: SeedMixConfig, W: CoefficientMatrix, normalizer: NormalizationSpec, locations: List[RegionLocation]) -> Projection:
    """
    Scenario distribution and risk cap of every location.  Locations with fewer than two weather years are skipped.
    """
    with stage('projection'):
        if not locations:
            raise ParameterError('no region locations')

        gaps = region_gaps(locations)
        usable: List[RegionLocation] = []
        skipped: List[Tuple[str, str]] = []
        for location in sorted(locations, key=lambda item: item.location_id):
            if len(location.weather_history) < 2:
                skipped.append((location.location_id, f'{len(location.weather_history)} weather years'))
                logger.warning('Skipping location {}: fewer than 2 weather years', location.location_id)
            else:
                usable.append(location)
        if not usable:
            raise ParameterError('no location has at least 2 weather years')
        if gaps:
            logger.warning('{} locations miss weather years, their distributions use the years they have', len(gaps))

        def distribution(location: RegionLocation) -> YieldDistribution:
            return estimate_distribution(project_scenarios(W, location, normalizer), config.epsilon)

        distributions = {item.location_id: item for item in ordered_map(distribution, usable, config.threads)}
        caps = location_risk_caps(usable, config.risk_budget())
        logger.info('Projected {} varieties over {} locations', len(W.variety_ids), len(usable))
        return Projection(distributions, caps, usable, skipped)


def plan(config: SeedMixConfig, projection: Projection) -> PlanResult:
    """
    Allocate every location, rank the most demanded varieties, allocate again over them only and turn the restricted
    demand of the best ``max_plan_entries`` into a stocking plan.
    """
    with stage('planning'):
        opts = config.allocation_options()
        allocations = allocate_all(projection.distributions, projection.caps, opts, config.threads)
        demand = aggregate_demand(allocations, projection.locations)
        variety_count = len(demand.variety_ids)
        candidates = rank_top_m(demand, min(config.top_m, variety_count))

        restricted = reoptimize_restricted(candidates, projection.distributions, projection.caps, opts, config.threads)
        restricted_demand = aggregate_demand(restricted, projection.locations)
        keep = sorted(range(len(candidates)), key=lambda i: (-restricted_demand.demand[i], candidates[i]))[: config.max_plan_entries]
        final = finalize_plan(restricted_demand.restrict([candidates[i] for i in keep]), config.min_share, config.max_plan_entries)

        gaps = [
            (full.location_id, full.risk_cap, max(full.expected_yield - reduced.expected_yield, 0.0))
            for full, reduced in zip(allocations, restricted)
        ]
        result = PlanResult(final, demand, restricted_demand, candidates, allocations, restricted, gaps)
        if result.infeasible:
            logger.warning('{} locations could not meet their risk cap, their minimum-variance mix was used', result.infeasible)
        logger.info('Stocking plan: {}', ', '.join(f'{variety_id} {proportion:.2%}' for variety_id, proportion in final.entries))
        return result


def frontiers(config: SeedMixConfig, projection: Projection, candidates: Optional[List[str]] = None) -> Tuple[str, List[FrontierPoint], Optional[List[FrontierPoint]]]:
    """
    Efficient frontier of the reporting location over all varieties and, when ``candidates`` is given, over those only.
    """
    with stage('planning'):
        location_id = config.frontier_location or min(projection.distributions)
        if location_id not in projection.distributions:
            raise ParameterError(f'unknown or skipped location {location_id}')

        distribution = projection.distributions[location_id]
        opts = config.allocation_options()
        grid = list(config.risk_grid) or default_risk_grid(distribution.mean, distribution.covariance, config.frontier_points, opts)
        full = efficient_frontier(distribution.mean, distribution.covariance, grid, opts, location_id, distribution.variety_ids)
        restricted = None
        if candidates:
            reduced = distribution.restrict(candidates)
            restricted = efficient_frontier(reduced.mean, reduced.covariance, grid, opts, location_id, reduced.variety_ids)
        return location_id, full, restricted


def write_model(writer: ReportWriter, config: SeedMixConfig, model: TrainedModel):
    write_coefficients(model.W, writer.path('model.csv'))
    write_model_meta(model.W, writer.path('model_meta.json'))
    write_normalizer(model.normalizer, writer.path('normalization.csv'))
    write_json(model.metrics, writer.path('metrics.json'))
    write_json(config.to_dict(), writer.path('config.json'))
    if model.cv is not None:
        write_cv_report(model.cv, writer.path('cv_report.csv'))


def write_frontier_report(writer: ReportWriter, projection: Projection, location_id: str, full: List[FrontierPoint], restricted: Optional[List[FrontierPoint]], cap: Optional[float] = None):
    write_frontier(full, writer.path('frontier.csv'))
    if restricted:
        write_frontier(restricted, writer.path('frontier_restricted.csv'))
    points = variety_points(projection.distributions[location_id])
    plot_frontier(full, writer.path('frontier.svg'), points, restricted, cap if cap is not None else projection.caps.get(location_id))


def write_plan_report(writer: ReportWriter, config: SeedMixConfig, projection: Projection, result: PlanResult):
    write_allocations(result.allocations, writer.path('allocations.csv'))
    write_allocations(result.restricted_allocations, writer.path('restricted_allocations.csv'))
    write_demand(result.demand, writer.path('demand.csv'))
    write_plan(result.plan, writer.path('plan.csv'))
    write_gaps(result.gaps, writer.path('gaps.csv'))
    if projection.skipped:
        write_skipped(projection.skipped, writer.path('skipped.csv'))
    plot_demand(result.demand, writer.path('demand.svg'))
    plot_plan(result.plan, writer.path('plan.svg'))
    if config.write_distributions:
        for location_id, distribution in sorted(projection.distributions.items()):
            write_distribution(distribution, writer.path(f'distributions/{location_id}/mu.csv'), writer.path(f'distributions/{location_id}/sigma.csv'))


@dataclass
class PipelineResult:
    plan: StockingPlan
    model: Optional[TrainedModel]
    W: CoefficientMatrix
    result: PlanResult
    outputs: List[str]
    converged: bool


def run_pipeline(config: SeedMixConfig, model_dir: Optional[Path] = None) -> PipelineResult:
    """
    Estimation, projection and planning end to end, reports under ``config.out_dir``.  With ``model_dir`` the model
    is read from a previous ``train`` instead of being fitted.  Outputs written before a failure are removed.
    """
    inputs = load_inputs(config)
    owned = PLAN_REPORTS + (MODEL_REPORTS if model_dir is None else ['config.json'])
    with ReportWriter(config.out_dir, owned) as writer:
        model: Optional[TrainedModel] = None
        if model_dir is not None:
            W, normalizer = load_model(model_dir)
        else:
            model = train_model(config, inputs)
            W, normalizer = model.W, model.normalizer

        projection = project(config, W, normalizer, inputs.locations)
        result = plan(config, projection)
        location_id, full, restricted = frontiers(config, projection, result.candidates)

        with stage('report'):
            if model is not None:
                model.metrics['infeasible_locations'] = result.infeasible
                model.metrics['skipped_locations'] = len(projection.skipped)
                write_model(writer, config, model)
            else:
                write_json(config.to_dict(), writer.path('config.json'))
            write_plan_report(writer, config, projection, result)
            write_frontier_report(writer, projection, location_id, full, restricted)

        converged = model.converged if model is not None else True
        return PipelineResult(result.plan, model, W, result, writer.relative(), converged)
