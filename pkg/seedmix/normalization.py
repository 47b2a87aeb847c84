"""
Min-max normalization of the weather and soil features.  Yields are never normalized.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy

from seedmix.errors import ParameterError, UnknownFeatureError, ValidationError
from seedmix.records import FEATURE_NAMES, ExperimentRecord


@dataclass(frozen=True)
class NormalizationSpec:
    """
    Per-feature (min, max) fitted on training records.  A feature with min == max is constant and maps to 0.
    """

    ranges: Dict[str, Tuple[float, float]]
    feature_names: List[str] = field(default_factory=lambda: list(FEATURE_NAMES))

    def __post_init__(self):
        for name, (low, high) in self.ranges.items():
            if not low <= high:
                raise ValidationError(f'normalization range for {name} has min {low} > max {high}')
        missing = [name for name in self.feature_names if name not in self.ranges]
        if missing:
            raise ValidationError(f'normalization ranges missing for {missing}')

    @property
    def constant(self) -> List[str]:
        return [name for name in self.feature_names if self.ranges[name][0] == self.ranges[name][1]]

    def bounds(self) -> Tuple[numpy.ndarray, numpy.ndarray]:
        low = numpy.array([self.ranges[name][0] for name in self.feature_names])
        high = numpy.array([self.ranges[name][1] for name in self.feature_names])
        return low, high

    def transform(self, raw: numpy.ndarray) -> numpy.ndarray:
        """
        Normalize the columns of an (n, p) matrix of raw features ordered like ``feature_names``.
        Values outside the fitted range are extrapolated, not clipped.
        """
        low, high = self.bounds()
        width = high - low
        scale = numpy.divide(1.0, width, out=numpy.zeros_like(width), where=width > 0)
        return (numpy.asarray(raw, dtype=float) - low) * scale


def normalizer_from_matrix(raw: numpy.ndarray) -> NormalizationSpec:
    """
    Fit on an (n, p) matrix of raw features ordered like FEATURE_NAMES.
    """
    raw = numpy.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise ParameterError('cannot fit a normalizer on zero records')

    low, high = raw.min(axis=0), raw.max(axis=0)
    ranges = {name: (float(low[i]), float(high[i])) for i, name in enumerate(FEATURE_NAMES)}
    return NormalizationSpec(ranges=ranges)


def fit_normalizer(records: Sequence[ExperimentRecord]) -> NormalizationSpec:
    if not records:
        raise ParameterError('cannot fit a normalizer on zero records')

    return normalizer_from_matrix(numpy.array([[record.features()[name] for name in FEATURE_NAMES] for record in records], dtype=float))


def apply_normalizer(spec: NormalizationSpec, features: Mapping[str, float]) -> numpy.ndarray:
    """
    Normalized feature vector ordered like ``spec.feature_names``.
    """
    for name in features:
        if name not in spec.ranges:
            raise UnknownFeatureError(name)
    missing = [name for name in spec.feature_names if name not in features]
    if missing:
        raise UnknownFeatureError(missing[0])

    raw = numpy.array([[features[name] for name in spec.feature_names]], dtype=float)
    return spec.transform(raw)[0]
