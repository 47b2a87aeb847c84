"""
SeedMix Configuration readers/verifier
"""

import os
from argparse import Namespace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from configupdater import ConfigUpdater
from loguru import logger

from seedmix.configuration import SeedMixConfig
from seedmix.mtl import Formulation


def __verify_inputs(config: SeedMixConfig) -> bool:
    """
    Exactly one data source, and every configured input file exists.
    """
    files = {'experiment': config.experiment, 'region_soil': config.region_soil, 'region_weather': config.region_weather}
    configured = [name for name, path in files.items() if path]
    if config.synthetic and configured:
        logger.error('Both synthetic data and input files ({}) are configured, use only one', ', '.join(configured))
        return False

    if not config.synthetic:
        if not configured:
            logger.error('No experiment or region files configured and synthetic is not True')
            return False
        if bool(config.region_soil) != bool(config.region_weather):
            logger.error('region_soil and region_weather must be configured together')
            return False

    success = True
    for name in configured:
        path: Path = files[name]
        if not path.is_file():
            logger.error('Configured {}: "{}" is not a file or does not exist', name, path)
            success = False

    return success


def __verify_range(config: SeedMixConfig, name: str, low: Optional[float] = None, high: Optional[float] = None, strict_low: bool = False) -> bool:
    value = getattr(config, name)
    if low is not None and (value <= low if strict_low else value < low):
        logger.error('{} must be {} {}, got {}', name, '>' if strict_low else '>=', low, value)
        return False
    if high is not None and value > high:
        logger.error('{} must be <= {}, got {}', name, high, value)
        return False

    return True


def __verify_grids(config: SeedMixConfig) -> bool:
    success = True
    for name in ('lambda_grid', 'lambda_l_grid', 'threshold_grid', 'lambda1_grid', 'lambda2_grid'):
        values: List[float] = getattr(config, name)
        if not values:
            logger.error('{} must not be empty', name)
            success = False
        elif any(value < 0 for value in values):
            logger.error('{} must not contain negative values, got {}', name, values)
            success = False

    if any(not 0 <= value <= 1 for value in config.threshold_grid):
        logger.error('threshold_grid values must be in [0, 1], got {}', config.threshold_grid)
        success = False

    return success


def verify_configuration(config: SeedMixConfig) -> bool:
    """
    Checks a SeedMixConfig before any stage runs, logging every problem found.  Returns False if verification failed.
    """
    success = __verify_inputs(config)
    success = __verify_grids(config) and success

    if config.formulation not in (Formulation.MEAN, Formulation.GRAPH):
        logger.error('formulation should be mean or graph, got {}', config.formulation)
        success = False

    checks = [
        ('cv_folds', 2, None, False),
        ('threads', 1, None, False),
        ('mean_lambda', 0.0, None, False),
        ('lambda_l', 0.0, None, False),
        ('threshold', 0.0, 1.0, False),
        ('lambda1', 0.0, None, False),
        ('lambda2', 0.0, None, False),
        ('max_iterations', 1, None, False),
        ('tolerance', 0.0, None, True),
        ('rho', 0.0, None, True),
        ('r_min', 0.0, config.r_max, True),
        ('pi_max', 1, None, False),
        ('epsilon', 0.0, None, False),
        ('frontier_points', 2, None, False),
        ('allocation_tolerance', 0.0, None, True),
        ('allocation_iterations', 1, None, False),
        ('max_bisections', 1, None, False),
        ('gamma_low', 0.0, None, True),
        ('polish_every', 1, None, False),
        ('top_m', 1, None, False),
        ('max_plan_entries', 1, None, False),
        ('min_share', 0.0, 1.0, False),
    ]
    for name, low, high, strict_low in checks:
        success = __verify_range(config, name, low, high, strict_low) and success

    if not 0 < config.train_ratio < 1:
        logger.error('train_ratio must be in (0, 1), got {}', config.train_ratio)
        success = False

    if not 0 < config.backtracking < 1:
        logger.error('backtracking must be in (0, 1), got {}', config.backtracking)
        success = False

    if not config.gamma_low < config.gamma_high:
        logger.error('gamma_low {} must be below gamma_high {}', config.gamma_low, config.gamma_high)
        success = False

    if config.top_m < config.max_plan_entries:
        logger.warning('top_m {} is below max_plan_entries {}, the plan has at most {} varieties', config.top_m, config.max_plan_entries, config.top_m)

    if config.synthetic and config.last_year < config.first_year:
        logger.error('last_year {} is before first_year {}', config.last_year, config.first_year)
        success = False

    return success


# Read and write .ini files utils below


def get_str(updater: ConfigUpdater, section: str, key: str) -> Optional[str]:
    """
    Read a string from an ini file if the config exists, else return None if the config does not
    exist in file.
    """
    if updater.has_option(section, key):
        output = updater.get(section, key)
        return str(output.value) if output.value else output.value

    return None


# Ini file string converters, to and from SeedMixConfig type


def to_bool(value: Optional[str]) -> Optional[bool]:
    return value.strip().lower() == 'true' if value else None


def from_bool(value: Optional[bool]) -> str:
    return str(value) if value is not None else ''


def to_int(value: Optional[str]) -> Optional[int]:
    return int(value) if value is not None else None


def from_int(value: Optional[int]) -> str:
    return str(value) if value is not None else ''


def to_float(value: Optional[str]) -> Optional[float]:
    return float(value) if value is not None else None


def from_float(value: Optional[float]) -> str:
    return repr(float(value)) if value is not None else ''


def to_float_list(value: Optional[str]) -> List[float]:
    return [float(x.strip()) for x in value.split(',') if x.strip()] if value else []


def from_float_list(value: Optional[List[float]]) -> str:
    return ', '.join(repr(float(x)) for x in value) if value else ''


def to_path(value: Optional[str]) -> Optional[Path]:
    return Path(value).resolve() if value else None


def from_path(value: Optional[Path]) -> str:
    return str(value) if value else ''


def to_formulation(value: Optional[str]) -> Optional[Formulation]:
    return Formulation(value.strip().lower()) if value else None


def from_formulation(value: Optional[Formulation]) -> str:
    return value.value if value else ''


field_info: Dict[str, Tuple[str, Optional[Callable[[Optional[str]], Any]], Optional[Callable[[Any], str]]]] = {
    'experiment': ('seedmix', to_path, from_path),
    'region_soil': ('seedmix', to_path, from_path),
    'region_weather': ('seedmix', to_path, from_path),
    'synthetic': ('seedmix', to_bool, from_bool),
    'out_dir': ('seedmix', to_path, from_path),
    'seed': ('seedmix', to_int, from_int),
    'train_ratio': ('seedmix', to_float, from_float),
    'cv_folds': ('seedmix', to_int, from_int),
    'threads': ('seedmix', to_int, from_int),
    'write_distributions': ('seedmix', to_bool, from_bool),
    'frontier_location': ('seedmix', None, None),
    'allow_nonconverged': ('seedmix', to_bool, from_bool),
    'debug': ('seedmix', to_bool, from_bool),
    'console_format': ('seedmix', None, None),
    'diagnose_errors': ('seedmix', to_bool, from_bool),
    'formulation': ('solver', to_formulation, from_formulation),
    'mean_lambda': ('solver', to_float, from_float),
    'lambda_l': ('solver', to_float, from_float),
    'threshold': ('solver', to_float, from_float),
    'lambda1': ('solver', to_float, from_float),
    'lambda2': ('solver', to_float, from_float),
    'tune': ('solver', to_bool, from_bool),
    'compare': ('solver', to_bool, from_bool),
    'lambda_grid': ('solver', to_float_list, from_float_list),
    'lambda_l_grid': ('solver', to_float_list, from_float_list),
    'threshold_grid': ('solver', to_float_list, from_float_list),
    'lambda1_grid': ('solver', to_float_list, from_float_list),
    'lambda2_grid': ('solver', to_float_list, from_float_list),
    'max_iterations': ('solver', to_int, from_int),
    'tolerance': ('solver', to_float, from_float),
    'rho': ('solver', to_float, from_float),
    'backtracking': ('solver', to_float, from_float),
    'r_min': ('risk', to_float, from_float),
    'r_max': ('risk', to_float, from_float),
    'pi_max': ('risk', to_int, from_int),
    'epsilon': ('risk', to_float, from_float),
    'frontier_points': ('risk', to_int, from_int),
    'risk_grid': ('risk', to_float_list, from_float_list),
    'allocation_tolerance': ('risk', to_float, from_float),
    'allocation_iterations': ('risk', to_int, from_int),
    'max_bisections': ('risk', to_int, from_int),
    'gamma_low': ('risk', to_float, from_float),
    'gamma_high': ('risk', to_float, from_float),
    'polish_every': ('risk', to_int, from_int),
    'top_m': ('planning', to_int, from_int),
    'max_plan_entries': ('planning', to_int, from_int),
    'min_share': ('planning', to_float, from_float),
    'num_varieties': ('synthetic', to_int, from_int),
    'num_locations': ('synthetic', to_int, from_int),
    'first_year': ('synthetic', to_int, from_int),
    'last_year': ('synthetic', to_int, from_int),
    'deviation_scale': ('synthetic', to_float, from_float),
    'deviation_sparsity': ('synthetic', to_float, from_float),
    'noise_std': ('synthetic', to_float, from_float),
    'cluster_count': ('synthetic', to_int, from_int),
    'synthetic_seed': ('synthetic', to_int, from_int),
    'min_observations': ('synthetic', to_int, from_int),
    'max_observations': ('synthetic', to_int, from_int),
    'pareto_shape': ('synthetic', to_float, from_float),
    'max_area': ('synthetic', to_float, from_float),
    'true_task_mean': ('synthetic', to_float_list, from_float_list),
}
"""
A mapping from SeedMixConfig field to ini file section - the ini property name and the field name
must be identical.  The conversion of string to and from functions are also provided here allowing
the conversion of types from SeedMixConfig to and from strings.  If the converters are not set then
the string is unaltered.
"""

override_flags: Dict[str, str] = {
    'seed': 'seed',
    'solver': 'formulation',
    'mean_lambda': 'mean_lambda',
    'lambda_l': 'lambda_l',
    'threshold': 'threshold',
    'lambda1': 'lambda1',
    'lambda2': 'lambda2',
    'rmin': 'r_min',
    'rmax': 'r_max',
    'top_m': 'top_m',
    'min_share': 'min_share',
    'threads': 'threads',
    'out': 'out_dir',
    'location': 'frontier_location',
    'cv_folds': 'cv_folds',
    'num_varieties': 'num_varieties',
    'num_locations': 'num_locations',
    'noise_std': 'noise_std',
    'experiment': 'experiment',
    'region_soil': 'region_soil',
    'region_weather': 'region_weather',
}
"""
argparse destination to SeedMixConfig field, for flags that override the ini file.
"""


def to_ini(config: SeedMixConfig) -> str:
    updater = config.config_updater
    for name in field_info.keys():
        info = field_info.get(name)
        if info:
            section = info[0]
            if section:
                value = getattr(config, name)
                convert: Optional[Callable[[Any], str]] = info[2]
                if convert:
                    updater.get(section, name).value = convert(value)
                else:
                    updater.get(section, name).value = value if value is not None else ''

    return str(updater)


def from_config(config: ConfigUpdater, seedmix_config: SeedMixConfig) -> SeedMixConfig:
    """
    Given a config parser pointed at a seedmix.cfg file, return a SeedMixConfig with the file's parameters.
    """
    keys = field_info.keys()
    for name in keys:
        info = field_info.get(name)
        if info and info[0]:
            new_value = get_str(config, info[0], name)
            if new_value or not hasattr(seedmix_config, name):
                type_converter_lambda: Optional[Callable[[Optional[str]], Any]] = info[1]
                if type_converter_lambda:
                    setattr(seedmix_config, name, type_converter_lambda(new_value))
                else:
                    setattr(seedmix_config, name, new_value)

    return seedmix_config


def apply_overrides(config: SeedMixConfig, args: Namespace) -> SeedMixConfig:
    """
    Command line flags win over the ini file; flags that were not given (None) leave the config alone.
    """
    for flag, name in override_flags.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if name == 'formulation':
            value = Formulation(value)
        elif name in ('out_dir', 'experiment', 'region_soil', 'region_weather'):
            value = Path(value).resolve()
        setattr(config, name, value)

    if getattr(args, 'experiment', None):
        config.synthetic = False
    if getattr(args, 'synthetic', False):
        config.synthetic = True
        config.experiment = config.region_soil = config.region_weather = None
    if getattr(args, 'allow_nonconverged', False):
        config.allow_nonconverged = True
    if getattr(args, 'tune', False):
        config.tune = True

    return config


def resource_file_to_str(package: str, file_name: str) -> str:
    config_str = ''
    if hasattr(resources, 'files'):
        config_str = resources.files(package).joinpath(file_name).read_text(encoding='UTF-8')
    elif hasattr(resources, 'read_text'):
        config_str = resources.read_text(package, file_name)

    return config_str


def default_config(user_set: Optional[Path] = None) -> SeedMixConfig:
    """
    Reads the packaged defaults, then the first seedmix.cfg found among: ``user_set``, $SEEDMIX_CONFIG,
    ~/.seedmix.cfg and ./.seedmix.cfg.
    """
    config = ConfigUpdater(allow_no_value=True)
    config_str = resource_file_to_str('seedmix', 'seedmix.cfg.default')
    config.read_string(config_str)
    seedmix_config = from_config(config, SeedMixConfig())
    seedmix_config.config_updater = config

    user_config = ConfigUpdater(allow_no_value=True)
    cfg_paths = [
        user_set,
        os.environ.get('SEEDMIX_CONFIG'),
        Path.home() / '.seedmix.cfg',
        '.seedmix.cfg',
    ]

    for file in cfg_paths:
        if not file:
            continue

        if isinstance(file, str):
            file = Path(file)

        if file.is_file():
            logger.debug('Reading configuration from {}', file)
            user_config.read(file, encoding='UTF-8')
            break

    return from_config(user_config, seedmix_config)
