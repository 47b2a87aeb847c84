"""
Synthetic experiment and region datasets with a planted coefficient matrix.

Every variety gets beta_i = mean + cluster deviation + a small jitter, the deviations being sparse and shared within
a cluster so that tasks of one cluster correlate.  Observation counts per variety follow a power law (many varieties
with few trials, a few with many).  Weather is a per-site climate plus a regional anomaly per year, shared by trials
and region locations.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy
from loguru import logger

from seedmix.errors import ParameterError
from seedmix.mtl.model import CoefficientMatrix
from seedmix.normalization import NormalizationSpec, normalizer_from_matrix
from seedmix.records import FEATURE_NAMES, INTERCEPT, PI_MAX, ExperimentRecord, RegionLocation, SoilProfile, WeatherRecord

DEFAULT_TASK_MEAN = [20.0, 15.0, 10.0, 5.0, -8.0, 6.0, -5.0, 4.0, -3.0, 12.0, 120.0]
"""
temp, precip, solar, cec, ph, om, clay, silt, sand, pi, intercept (yield units per unit of normalized feature).
"""

CLIMATE = {
    'temp': (3600.0, 4600.0, 150.0),
    'precip': (350.0, 800.0, 80.0),
    'solar': (950000.0, 1250000.0, 30000.0),
}
"""
site climate range (low, high) and standard deviation of the yearly anomaly.
"""

MIN_NOISELESS_YIELD = 10.0
"""
lowest noiseless yield of a planted variety anywhere in the unit box of normalized features.
"""

SOIL_RANGES = {
    'cec': (5.0, 40.0),
    'ph': (5.0, 9.0),
    'om': (0.5, 6.0),
    'clay': (5.0, 45.0),
    'silt': (10.0, 70.0),
    'sand': (5.0, 80.0),
}


@dataclass
class SyntheticConfig:
    num_varieties: int = 20
    num_locations: int = 200
    years: range = field(default_factory=lambda: range(2001, 2016))
    true_task_mean: Optional[List[float]] = None
    """
    p+1 coefficients ordered like FEATURE_NAMES plus the intercept, DEFAULT_TASK_MEAN when unset.
    """
    task_deviation_scale: float = 5.0
    deviation_sparsity: float = 0.5
    """
    probability that a coefficient of a cluster does not deviate from the mean.
    """
    noise_std: float = 2.0
    """
    standard deviation of the yield noise; a noisy yield below 0 is clipped at 0.
    """
    cluster_count: int = 4
    rng_seed: int = 0
    min_observations: int = 20
    max_observations: int = 500
    pareto_shape: float = 1.16
    max_area: float = 1.0
    """
    region areas are drawn uniformly from [1, max_area].
    """

    def __post_init__(self):
        for name in ('num_varieties', 'num_locations', 'cluster_count', 'min_observations'):
            if getattr(self, name) < 1:
                raise ParameterError(f'{name} must be >= 1, got {getattr(self, name)}')
        if len(self.years) < 1:
            raise ParameterError('years must not be empty')
        if self.max_observations < self.min_observations:
            raise ParameterError(f'max_observations {self.max_observations} < min_observations {self.min_observations}')
        if self.noise_std < 0:
            raise ParameterError(f'noise_std must be >= 0, got {self.noise_std}')
        if self.task_deviation_scale < 0:
            raise ParameterError(f'task_deviation_scale must be >= 0, got {self.task_deviation_scale}')
        if not 0 <= self.deviation_sparsity <= 1:
            raise ParameterError(f'deviation_sparsity must be in [0, 1], got {self.deviation_sparsity}')
        if not self.pareto_shape > 0:
            raise ParameterError(f'pareto_shape must be > 0, got {self.pareto_shape}')
        if self.max_area < 1:
            raise ParameterError(f'max_area must be >= 1, got {self.max_area}')
        if self.true_task_mean is not None and len(self.true_task_mean) != len(FEATURE_NAMES) + 1:
            raise ParameterError(f'true_task_mean needs {len(FEATURE_NAMES) + 1} coefficients, got {len(self.true_task_mean)}')

    @property
    def task_mean(self) -> numpy.ndarray:
        return numpy.array(self.true_task_mean if self.true_task_mean is not None else DEFAULT_TASK_MEAN, dtype=float)


class SyntheticData(NamedTuple):
    records: List[ExperimentRecord]
    locations: List[RegionLocation]
    coefficients: CoefficientMatrix
    """
    planted W, in the coordinates of ``normalizer``.
    """
    normalizer: NormalizationSpec


def variety_ids(count: int) -> List[str]:
    width = max(3, len(str(count - 1)))
    return [f'V{i:0{width}d}' for i in range(count)]


def location_ids(count: int) -> List[str]:
    width = max(4, len(str(count - 1)))
    return [f'L{i:0{width}d}' for i in range(count)]


def planted_coefficients(config: SyntheticConfig, rng: numpy.random.Generator) -> numpy.ndarray:
    size = len(FEATURE_NAMES) + 1
    masks = rng.random((config.cluster_count, size)) >= config.deviation_sparsity
    deviations = config.task_deviation_scale * rng.standard_normal((config.cluster_count, size)) * masks
    jitter = 0.1 * config.task_deviation_scale * rng.standard_normal((config.num_varieties, size))

    entries = numpy.empty((size, config.num_varieties))
    for i in range(config.num_varieties):
        cluster = i % config.cluster_count
        entries[:, i] = config.task_mean + deviations[cluster] + jitter[i] * masks[cluster]

    # normalized trial features lie in [0, 1], so the lowest noiseless yield is the intercept plus the negative slopes
    floor = entries[-1] + numpy.minimum(entries[:-1], 0.0).sum(axis=0)
    entries[-1] += numpy.maximum(MIN_NOISELESS_YIELD - floor, 0.0)
    return entries


def observation_counts(config: SyntheticConfig, rng: numpy.random.Generator) -> numpy.ndarray:
    counts = numpy.round(config.min_observations * (1.0 + rng.pareto(config.pareto_shape, config.num_varieties)))
    return numpy.clip(counts, config.min_observations, config.max_observations).astype(int)


def _soil(rng: numpy.random.Generator) -> SoilProfile:
    values = {name: float(rng.uniform(low, high)) for name, (low, high) in SOIL_RANGES.items()}
    return SoilProfile(
        cec=values['cec'],
        ph=values['ph'],
        organic_matter=values['om'],
        clay=values['clay'],
        silt=values['silt'],
        sand=values['sand'],
        pi=int(rng.integers(0, PI_MAX + 1)),
    )


def _climate(rng: numpy.random.Generator) -> numpy.ndarray:
    return numpy.array([rng.uniform(low, high) for low, high, _ in CLIMATE.values()])


def _weather(year: int, climate: numpy.ndarray, anomaly: numpy.ndarray) -> WeatherRecord:
    temp, precip, solar = climate + anomaly
    return WeatherRecord(year=year, temperature_sum=float(temp), precipitation_sum=float(max(precip, 0.0)), solar_radiation_sum=float(max(solar, 0.0)))


def _coordinates(rng: numpy.random.Generator):
    return float(rng.uniform(40.0, 44.0)), float(rng.uniform(-96.0, -90.0))


def generate_synthetic(config: SyntheticConfig) -> SyntheticData:
    """
    Deterministic for a fixed ``config.rng_seed``.  Yields are X_i beta_i + noise in the coordinates of the returned
    normalizer (fit on all generated trials).  Planted intercepts are raised so that no noiseless yield falls below
    MIN_NOISELESS_YIELD; only noise can push a yield under 0, and such yields are clipped at 0 with a warning, so
    with ``noise_std = 0`` the yields are exactly X_i beta_i.
    """
    rng = numpy.random.default_rng(config.rng_seed)
    ids = variety_ids(config.num_varieties)
    years = list(config.years)
    spread = numpy.array([sd for _, _, sd in CLIMATE.values()])
    anomalies = {year: spread * rng.standard_normal(3) for year in years}

    entries = planted_coefficients(config, rng)
    counts = observation_counts(config, rng)

    trials = []
    for variety_id, count in zip(ids, counts):
        for _ in range(count):
            year = years[int(rng.integers(len(years)))]
            latitude, longitude = _coordinates(rng)
            weather = _weather(year, _climate(rng), anomalies[year])
            trials.append((variety_id, year, latitude, longitude, weather, _soil(rng)))

    raw = numpy.array([[{**weather.features(), **soil.features()}[name] for name in FEATURE_NAMES] for _, _, _, _, weather, soil in trials])
    normalizer = normalizer_from_matrix(raw)
    design = numpy.hstack([normalizer.transform(raw), numpy.ones((len(trials), 1))])
    columns = numpy.array([ids.index(trial[0]) for trial in trials])
    yields = (design * entries[:, columns].T).sum(axis=1)
    if config.noise_std > 0:
        yields = yields + config.noise_std * rng.standard_normal(len(trials))
    negative = int(numpy.count_nonzero(yields < 0))
    if negative:
        logger.warning('Clipped {} negative synthetic yields at 0', negative)
        yields = numpy.maximum(yields, 0.0)

    records = [
        ExperimentRecord(year=year, latitude=latitude, longitude=longitude, weather=weather, soil=soil, variety_id=variety_id, yield_value=float(value))
        for (variety_id, year, latitude, longitude, weather, soil), value in zip(trials, yields)
    ]

    locations = []
    for location_id in location_ids(config.num_locations):
        latitude, longitude = _coordinates(rng)
        climate = _climate(rng)
        soil = _soil(rng)
        history = [_weather(year, climate, anomalies[year] + 0.25 * spread * rng.standard_normal(3)) for year in years]
        area = float(rng.uniform(1.0, config.max_area))
        locations.append(RegionLocation(location_id=location_id, latitude=latitude, longitude=longitude, soil=soil, weather_history=history, area=area))

    coefficients = CoefficientMatrix(entries, ids, list(FEATURE_NAMES) + [INTERCEPT])
    logger.info('Generated {} trials for {} varieties and {} region locations', len(records), len(ids), len(locations))
    return SyntheticData(records=records, locations=locations, coefficients=coefficients, normalizer=normalizer)
