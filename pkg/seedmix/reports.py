"""
CSV and JSON artifacts of a run.  Every CSV has a header row and floats are written in their shortest round-trip form.

model.csv                 variety,feature,value
model_meta.json           formulation, penalties, iterations, converged, objective
normalization.csv         feature,min,max
cv_report.csv             <parameters...>,fold_1..fold_k,mean_score,wall_time
allocations.csv           location_id,variety,weight
demand.csv                variety,demand
plan.csv                  variety,proportion
gaps.csv                  location_id,risk_cap,gap
frontier.csv              risk,expected_yield,<variety weights...>
skipped.csv               location_id,reason
distributions/<id>/       mu.csv (variety,mean) and sigma.csv (variety,<varieties...>)
"""

import shutil
from pathlib import Path
from typing import Any, List, Sequence, Tuple

import numpy
import orjson
import pandas as pd
from loguru import logger

from seedmix.errors import ValidationError
from seedmix.evaluation import CvResult
from seedmix.ingest import parse_numbers, read_table
from seedmix.mtl import CoefficientMatrix, Formulation, SolverReport
from seedmix.normalization import NormalizationSpec
from seedmix.planning import DemandVector, StockingPlan
from seedmix.portfolio import AllocationWeights, FrontierPoint
from seedmix.risk import YieldDistribution


def _write(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, lineterminator='\n')
    return Path(path)


def write_json(data: Any, path: Path) -> Path:
    Path(path).write_bytes(orjson.dumps(data, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY) + b'\n')
    return Path(path)


def read_json(path: Path) -> Any:
    return orjson.loads(Path(path).read_bytes())


def write_coefficients(W: CoefficientMatrix, path: Path) -> Path:
    rows = [(variety_id, feature, float(W.entries[f, v])) for v, variety_id in enumerate(W.variety_ids) for f, feature in enumerate(W.feature_names)]
    return _write(pd.DataFrame(rows, columns=['variety', 'feature', 'value']), path)


def load_coefficients(path: Path) -> CoefficientMatrix:
    frame = read_table(path, ['variety', 'feature', 'value'])
    values = parse_numbers(frame, path, 'value')
    variety_ids = list(dict.fromkeys(frame['variety']))
    feature_names = list(dict.fromkeys(frame['feature']))
    entries = numpy.full((len(feature_names), len(variety_ids)), numpy.nan)
    for variety_id, feature, value in zip(frame['variety'], frame['feature'], values):
        entries[feature_names.index(feature), variety_ids.index(variety_id)] = value
    if numpy.isnan(entries).any():
        raise ValidationError(f'{path}: every variety needs a value for every feature')

    return CoefficientMatrix(entries, variety_ids, feature_names)


def write_model_meta(W: CoefficientMatrix, path: Path) -> Path:
    report = W.report or SolverReport(Formulation.LASSO, {})
    return write_json({**report.to_dict(), 'varieties': len(W.variety_ids), 'features': W.feature_names}, path)


def write_normalizer(spec: NormalizationSpec, path: Path) -> Path:
    rows = [(name, spec.ranges[name][0], spec.ranges[name][1]) for name in spec.feature_names]
    return _write(pd.DataFrame(rows, columns=['feature', 'min', 'max']), path)


def load_normalizer(path: Path) -> NormalizationSpec:
    frame = read_table(path, ['feature', 'min', 'max'])
    low, high = parse_numbers(frame, path, 'min'), parse_numbers(frame, path, 'max')
    names = list(frame['feature'])
    ranges = {name: (float(a), float(b)) for name, a, b in zip(names, low, high)}
    return NormalizationSpec(ranges=ranges, feature_names=names)


def write_cv_report(result: CvResult, path: Path) -> Path:
    names = list(result.combinations[0]) if result.combinations else []
    folds = [f'fold_{f + 1}' for f in range(result.folds)]
    rows = []
    for combination, scores, mean, elapsed in zip(result.combinations, result.fold_scores, result.mean_scores, result.wall_times):
        rows.append([combination[name] for name in names] + list(scores) + [mean, elapsed])

    return _write(pd.DataFrame(rows, columns=names + folds + ['mean_score', 'wall_time']), path)


def write_allocations(allocations: Sequence[AllocationWeights], path: Path) -> Path:
    rows = [(allocation.location_id, variety_id, float(weight)) for allocation in allocations for variety_id, weight in zip(allocation.variety_ids, allocation.weights)]
    return _write(pd.DataFrame(rows, columns=['location_id', 'variety', 'weight']), path)


def write_demand(demand: DemandVector, path: Path) -> Path:
    return _write(pd.DataFrame({'variety': demand.variety_ids, 'demand': demand.demand}), path)


def write_plan(plan: StockingPlan, path: Path) -> Path:
    return _write(pd.DataFrame(plan.entries, columns=['variety', 'proportion']), path)


def write_gaps(gaps: Sequence[Tuple[str, float, float]], path: Path) -> Path:
    return _write(pd.DataFrame(list(gaps), columns=['location_id', 'risk_cap', 'gap']), path)


def write_skipped(skipped: Sequence[Tuple[str, str]], path: Path) -> Path:
    return _write(pd.DataFrame(list(skipped), columns=['location_id', 'reason']), path)


def write_frontier(points: Sequence[FrontierPoint], path: Path) -> Path:
    variety_ids = points[0].weights.variety_ids if points else []
    rows = [[point.risk, point.expected_yield] + [float(w) for w in point.weights.weights] for point in points]
    return _write(pd.DataFrame(rows, columns=['risk', 'expected_yield'] + list(variety_ids)), path)


def write_distribution(distribution: YieldDistribution, mu_path: Path, sigma_path: Path) -> List[Path]:
    mu = _write(pd.DataFrame({'variety': distribution.variety_ids, 'mean': distribution.mean}), mu_path)
    sigma = pd.DataFrame(distribution.covariance, columns=distribution.variety_ids)
    sigma.insert(0, 'variety', distribution.variety_ids)
    return [mu, _write(sigma, sigma_path)]


MODEL_REPORTS = ['model.csv', 'model_meta.json', 'normalization.csv', 'metrics.json', 'config.json', 'cv_report.csv']
FRONTIER_REPORTS = ['frontier.csv', 'frontier_restricted.csv', 'frontier.svg']
PLAN_REPORTS = [
    'allocations.csv',
    'restricted_allocations.csv',
    'demand.csv',
    'plan.csv',
    'gaps.csv',
    'skipped.csv',
    'demand.svg',
    'plan.svg',
    'distributions',
] + FRONTIER_REPORTS
"""
Outputs a command owns inside its output directory.  Those a successful run did not write again are left over from
an earlier run and get removed.
"""


class ReportWriter:
    """
    Hands out paths inside the output directory and remembers what it wrote, so that a failed run can take its
    partial outputs back with ``discard``.  Used as a context manager it discards on any exception and otherwise
    prunes the ``owned`` outputs this run did not write.
    """

    def __init__(self, out_dir: Path, owned: Sequence[str] = ()):
        self.out_dir = Path(out_dir)
        self.owned = list(owned)
        self.written: List[Path] = []
        self.created: List[Path] = []

    def __enter__(self) -> 'ReportWriter':
        if not self.out_dir.exists():
            self.out_dir.mkdir(parents=True)
            self.created.append(self.out_dir)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            self.discard()
        else:
            self.prune()
        return False

    def path(self, name: str) -> Path:
        target = self.out_dir / name
        for parent in reversed(target.relative_to(self.out_dir).parents):
            directory = self.out_dir / parent
            if not directory.exists():
                directory.mkdir()
                self.created.append(directory)
        self.written.append(target)
        return target

    def discard(self):
        for path in reversed(self.written):
            path.unlink(missing_ok=True)
        for directory in reversed(self.created):
            shutil.rmtree(directory, ignore_errors=True)
        logger.info('Removed {} partial outputs from {}', len(self.written), self.out_dir)
        self.written, self.created = [], []

    def relative(self) -> List[str]:
        return sorted(str(path.relative_to(self.out_dir)) for path in self.written if path.exists())

    def prune(self) -> List[str]:
        written = set(self.written)
        stale: List[Path] = []
        for name in self.owned:
            target = self.out_dir / name
            if target.is_dir():
                stale.extend(path for path in sorted(target.rglob('*')) if path.is_file() and path not in written)
            elif target.exists() and target not in written:
                stale.append(target)
        for path in stale:
            path.unlink()
        for name in self.owned:
            target = self.out_dir / name
            if target.is_dir():
                for directory in sorted((path for path in target.rglob('*') if path.is_dir()), reverse=True) + [target]:
                    if not any(directory.iterdir()):
                        directory.rmdir()

        names = [str(path.relative_to(self.out_dir)) for path in stale]
        if names:
            logger.info('Removed {} outputs of an earlier run from {}: {}', len(names), self.out_dir, ', '.join(names))
        return names
