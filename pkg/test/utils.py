"""
Testing utils
"""

import contextlib
import tempfile
from itertools import product
from pathlib import Path
from sys import gettrace as sys_gettrace
from typing import Iterator, List, Optional, Sequence

import numpy
import pandas as pd
from configupdater import ConfigUpdater

from seedmix.configuration import SeedMixConfig
from seedmix.configuration_utils import from_config, resource_file_to_str
from seedmix.mtl import Formulation
from seedmix.records import INTERCEPT, ExperimentRecord, RegionLocation, SoilProfile, WeatherRecord
from seedmix.tasks import MultiTaskDataset, Task


def is_debugging():
    return sys_gettrace() is not None


def load_frontier(path: Path) -> pd.DataFrame:
    """
    frontier.csv as written by seedmix.reports.write_frontier.
    """
    return pd.read_csv(path)


def sample_config() -> SeedMixConfig:
    """
    The packaged defaults, as the CLI reads them before any user file.
    """
    config = ConfigUpdater(allow_no_value=True)
    config.read_string(resource_file_to_str('seedmix', 'seedmix.cfg.default'))
    seedmix_config = from_config(config, SeedMixConfig())
    seedmix_config.config_updater = config
    return seedmix_config


def small_synthetic_config(out_dir: Path, **overrides) -> SeedMixConfig:
    """
    A synthetic run small enough for unit tests.
    """
    config = sample_config()
    config.synthetic = True
    config.out_dir = Path(out_dir)
    config.num_varieties = 6
    config.num_locations = 8
    config.first_year = 2001
    config.last_year = 2008
    config.min_observations = 15
    config.max_observations = 40
    config.noise_std = 1.0
    config.max_iterations = 3000
    config.tolerance = 1e-6
    config.frontier_points = 5
    for name, value in overrides.items():
        setattr(config, name, value)
    return config


@contextlib.contextmanager
def environment() -> Iterator[Path]:
    with tempfile.TemporaryDirectory(prefix='seedmix_test') as tmpdir:
        yield Path(tmpdir)


def soil(pi: int = 9, cec: float = 20.0, ph: float = 7.0, organic_matter: float = 3.0, clay: float = 20.0, silt: float = 40.0, sand: float = 40.0) -> SoilProfile:
    return SoilProfile(cec=cec, ph=ph, organic_matter=organic_matter, clay=clay, silt=silt, sand=sand, pi=pi)


def weather(year: int, temp: float = 4000.0, precip: float = 500.0, solar: float = 1100000.0) -> WeatherRecord:
    return WeatherRecord(year=year, temperature_sum=temp, precipitation_sum=precip, solar_radiation_sum=solar)


def record(variety_id: str, yield_value: float = 100.0, year: int = 2010, temp: float = 4000.0, ph: float = 7.0, planting_date: Optional[int] = None, pi: int = 9) -> ExperimentRecord:
    return ExperimentRecord(
        year=year,
        latitude=42.0,
        longitude=-93.5,
        weather=weather(year, temp=temp),
        soil=soil(pi=pi, ph=ph),
        variety_id=variety_id,
        yield_value=yield_value,
        planting_date=planting_date,
    )


def location(location_id: str, pi: int = 9, years: Sequence[int] = (2001, 2002, 2003), area: float = 1.0, temps: Optional[Sequence[float]] = None) -> RegionLocation:
    temps = temps if temps is not None else [3800.0 + 100.0 * i for i in range(len(years))]
    history = [weather(year, temp=temp) for year, temp in zip(years, temps)]
    return RegionLocation(location_id=location_id, latitude=42.0, longitude=-93.5, soil=soil(pi=pi), weather_history=history, area=area)


def random_dataset(sizes: Sequence[int], columns: int, seed: int, coefficients: Optional[numpy.ndarray] = None, noise: float = 1.0) -> MultiTaskDataset:
    """
    Tasks with uniform features in [0, 1] and an intercept column, Y = X beta + noise.
    """
    rng = numpy.random.default_rng(seed)
    if coefficients is None:
        coefficients = rng.normal(0.0, 3.0, (columns, len(sizes)))
    tasks = []
    for i, size in enumerate(sizes):
        X = numpy.hstack([rng.uniform(0.0, 1.0, (size, columns - 1)), numpy.ones((size, 1))])
        Y = X @ coefficients[:, i] + noise * rng.standard_normal(size)
        tasks.append(Task(f'V{i:03d}', X, Y))
    return MultiTaskDataset(tasks=tasks, feature_names=[f'x{i}' for i in range(columns - 1)] + [INTERCEPT])


def batch_objective(formulation: Formulation, data: MultiTaskDataset, batch: numpy.ndarray, lam: float = 0.0, lam1: float = 0.0, lam2: float = 0.0, G: Optional[numpy.ndarray] = None) -> numpy.ndarray:
    """
    The objective of every coefficient matrix in ``batch`` (shape N x (p+1) x V), summed term by term.
    """
    values = numpy.zeros(batch.shape[0])
    for i, task in enumerate(data.tasks):
        residual = batch[:, :, i] @ task.X.T - task.Y
        values += (residual * residual).sum(axis=1)
    if formulation == Formulation.MEAN:
        values += lam * numpy.abs(batch - batch.mean(axis=2, keepdims=True)).sum(axis=(1, 2))
    elif formulation == Formulation.LASSO:
        values += lam * numpy.abs(batch).sum(axis=(1, 2))
    else:
        if G is not None and G.shape[1]:
            WG = batch @ G
            values += lam1 * (WG * WG).sum(axis=(1, 2))
        values += lam2 * numpy.abs(batch).sum(axis=(1, 2))
    return values


def coefficient_grid_minimum(formulation: Formulation, data: MultiTaskDataset, center: numpy.ndarray, radius: float = 0.1, step: float = 0.01, **penalties) -> float:
    """
    Smallest objective over every grid point (resolution ``step``) within ``radius`` of ``center`` in each coefficient.
    The objectives are convex, so no grid point in the window beating ``center`` means no point anywhere does.
    """
    offsets = numpy.arange(-radius, radius + step / 2, step)
    grid = numpy.array(list(product(offsets, repeat=center.size)))
    batch = center.reshape(1, -1) + grid
    return float(batch_objective(formulation, data, batch.reshape((-1,) + center.shape), **penalties).min())


def simplex_grid(size: int, step: float = 0.01) -> numpy.ndarray:
    units = int(round(1.0 / step))
    if size == 1:
        return numpy.ones((1, 1))
    axes = numpy.meshgrid(*[numpy.arange(units + 1)] * (size - 1), indexing='ij')
    free = numpy.stack([axis.ravel() for axis in axes], axis=1)
    free = free[free.sum(axis=1) <= units]
    return numpy.hstack([free, units - free.sum(axis=1, keepdims=True)]) / units


def simplex_oracle(mu: numpy.ndarray, sigma: numpy.ndarray, cap: float, step: float = 0.01) -> float:
    """
    Best expected yield over the simplex grid points whose risk is within the cap, -inf when none is.
    """
    grid = simplex_grid(len(mu), step)
    risk = numpy.sqrt(numpy.maximum(numpy.einsum('ij,jk,ik->i', grid, sigma, grid), 0.0))
    feasible = risk <= cap
    return float((grid[feasible] @ mu).max()) if feasible.any() else -numpy.inf


def random_covariance(size: int, rng: numpy.random.Generator, scale: float = 1.0) -> numpy.ndarray:
    A = rng.normal(0.0, scale, (size, size + 2))
    return A @ A.T / (size + 2) + 0.05 * numpy.eye(size)


def incidence(num_tasks: int, edges: List[tuple]) -> numpy.ndarray:
    G = numpy.zeros((num_tasks, len(edges)))
    for e, (i, j) in enumerate(edges):
        G[i, e], G[j, e] = 1.0, -1.0
    return G
