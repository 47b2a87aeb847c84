"""
Per-variety regression tasks.  Each seed variety is one task with its own design matrix X_i (n_i x (p+1), the last
column all ones) and yield vector Y_i.
"""

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy
from loguru import logger

from seedmix.errors import ParameterError, UnknownVarietyError, ValidationError
from seedmix.normalization import NormalizationSpec
from seedmix.records import INTERCEPT, ExperimentRecord


@dataclass(frozen=True, eq=False)
class Task:
    variety_id: str
    X: numpy.ndarray
    Y: numpy.ndarray

    @property
    def size(self) -> int:
        return self.Y.shape[0]


@dataclass(frozen=True, eq=False)
class MultiTaskDataset:
    tasks: List[Task]
    feature_names: List[str] = field(default_factory=list)
    """
    p feature names followed by the intercept marker.
    """

    def __post_init__(self):
        columns = {task.X.shape[1] for task in self.tasks}
        if len(columns) > 1:
            raise ValidationError(f'tasks disagree on column count: {sorted(columns)}')
        for task in self.tasks:
            if task.size < 1:
                raise ValidationError(f'task {task.variety_id} has no rows')
            if task.X.shape[0] != task.size:
                raise ValidationError(f'task {task.variety_id}: X has {task.X.shape[0]} rows, Y has {task.size}')
            if not numpy.all(task.X[:, -1] == 1.0):
                raise ValidationError(f'task {task.variety_id}: last column must be the intercept (all ones)')
        if self.feature_names and columns and len(self.feature_names) != columns.pop():
            raise ValidationError('feature_names does not match the column count')

    @property
    def variety_ids(self) -> List[str]:
        return [task.variety_id for task in self.tasks]

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    @property
    def num_columns(self) -> int:
        return self.tasks[0].X.shape[1] if self.tasks else len(self.feature_names)

    @property
    def sizes(self) -> List[int]:
        return [task.size for task in self.tasks]

    @property
    def total_rows(self) -> int:
        return sum(self.sizes)

    def task(self, variety_id: str) -> Task:
        for task in self.tasks:
            if task.variety_id == variety_id:
                return task
        raise UnknownVarietyError(variety_id)

    def select(self, rows: Mapping[str, numpy.ndarray]) -> 'MultiTaskDataset':
        """
        Sub-dataset holding the given row indices per variety; tasks left without rows are omitted.
        """
        tasks = []
        for task in self.tasks:
            index = rows.get(task.variety_id)
            if index is not None and len(index):
                tasks.append(Task(task.variety_id, task.X[index], task.Y[index]))

        return MultiTaskDataset(tasks=tasks, feature_names=list(self.feature_names))

    def reordered(self, order: Sequence[int]) -> 'MultiTaskDataset':
        return MultiTaskDataset(tasks=[self.tasks[i] for i in order], feature_names=list(self.feature_names))


def _group_by_variety(records: Sequence[ExperimentRecord]) -> Dict[str, List[ExperimentRecord]]:
    groups: Dict[str, List[ExperimentRecord]] = defaultdict(list)
    for record in records:
        groups[record.variety_id].append(record)

    return {variety_id: groups[variety_id] for variety_id in sorted(groups)}


def assemble_tasks(records: Sequence[ExperimentRecord], spec: NormalizationSpec) -> MultiTaskDataset:
    """
    One task per variety (sorted by variety id), rows in record order.  Planting date is not a feature.
    """
    if not records:
        raise ParameterError('cannot assemble tasks from zero records')

    tasks = []
    for variety_id, group in _group_by_variety(records).items():
        raw = numpy.array([[record.features()[name] for name in spec.feature_names] for record in group], dtype=float)
        X = numpy.hstack([spec.transform(raw), numpy.ones((len(group), 1))])
        Y = numpy.array([record.yield_value for record in group], dtype=float)
        tasks.append(Task(variety_id, X, Y))

    logger.debug('Assembled {} tasks from {} records', len(tasks), len(records))
    return MultiTaskDataset(tasks=tasks, feature_names=list(spec.feature_names) + [INTERCEPT])


def _train_count(size: int, ratio: float) -> int:
    if size == 1:
        return 1

    return min(max(int(round(ratio * size)), 1), size - 1)


def _split_indices(sizes: Sequence[int], ratio: float, seed: int) -> List[Tuple[numpy.ndarray, numpy.ndarray]]:
    if not 0 < ratio < 1:
        raise ParameterError(f'train ratio must be in (0, 1), got {ratio}')

    rng = numpy.random.default_rng(seed)
    splits = []
    for size in sizes:
        permutation = rng.permutation(size)
        count = _train_count(size, ratio)
        splits.append((numpy.sort(permutation[:count]), numpy.sort(permutation[count:])))

    return splits


def split_train_test(data: MultiTaskDataset, ratio: float, seed: int) -> Tuple[MultiTaskDataset, MultiTaskDataset]:
    """
    Stratified per variety: every task with at least 2 rows lands on both sides, single-row tasks go to training.
    """
    splits = _split_indices(data.sizes, ratio, seed)
    train = data.select({task.variety_id: split[0] for task, split in zip(data.tasks, splits)})
    test = data.select({task.variety_id: split[1] for task, split in zip(data.tasks, splits)})
    return train, test


def split_records(records: Sequence[ExperimentRecord], ratio: float, seed: int) -> Tuple[List[ExperimentRecord], List[ExperimentRecord]]:
    """
    The same split as ``split_train_test`` applied to records, so the normalizer can be fit on the training part only.
    """
    groups = _group_by_variety(records)
    splits = _split_indices([len(group) for group in groups.values()], ratio, seed)
    train: List[ExperimentRecord] = []
    test: List[ExperimentRecord] = []
    for group, (train_index, test_index) in zip(groups.values(), splits):
        train.extend(group[i] for i in train_index)
        test.extend(group[i] for i in test_index)

    return train, test


def cv_folds(data: MultiTaskDataset, k: int, seed: int) -> List[Dict[str, numpy.ndarray]]:
    """
    Validation row indices per variety for each of the k folds.  Rows of a task are dealt round-robin over the folds
    after a seeded shuffle, so a task with n_i >= 2 keeps training rows in every fold.  Single-row tasks never
    validate.
    """
    if k < 2:
        raise ParameterError(f'k must be at least 2, got {k}')

    rng = numpy.random.default_rng(seed)
    folds: List[Dict[str, numpy.ndarray]] = [{} for _ in range(k)]
    for position, task in enumerate(data.tasks):
        permutation = rng.permutation(task.size)
        if task.size < 2:
            continue
        assignment = (numpy.arange(task.size) + position) % k
        for fold in range(k):
            folds[fold][task.variety_id] = numpy.sort(permutation[assignment == fold])

    return folds


def fold_training_rows(data: MultiTaskDataset, validation: Mapping[str, numpy.ndarray]) -> Dict[str, numpy.ndarray]:
    rows = {}
    for task in data.tasks:
        keep = numpy.ones(task.size, dtype=bool)
        held_out = validation.get(task.variety_id)
        if held_out is not None:
            keep[held_out] = False
        rows[task.variety_id] = numpy.flatnonzero(keep)

    return rows
