"""
Reading and writing the experiment and region CSV files.

experiment.csv      year,lat,lon,temp,precip,solar,cec,ph,om,clay,silt,sand,pi,variety,planting_date,yield
region_soil.csv     location_id,lat,lon,cec,ph,om,clay,silt,sand,pi[,area]
region_weather.csv  location_id,year,temp,precip,solar

An empty cell means missing, which is only accepted for planting_date.
"""

import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence

import pandas as pd
from loguru import logger

from seedmix.errors import DuplicateKeyError, ParseError, ReferentialError, SchemaError, ValidationError
from seedmix.records import ExperimentRecord, RegionLocation, SoilProfile, WeatherRecord

EXPERIMENT_COLUMNS = ['year', 'lat', 'lon', 'temp', 'precip', 'solar', 'cec', 'ph', 'om', 'clay', 'silt', 'sand', 'pi', 'variety', 'planting_date', 'yield']
SOIL_COLUMNS = ['location_id', 'lat', 'lon', 'cec', 'ph', 'om', 'clay', 'silt', 'sand', 'pi']
WEATHER_COLUMNS = ['location_id', 'year', 'temp', 'precip', 'solar']

_INTEGER_COLUMNS = {'year', 'pi', 'planting_date'}


def read_table(path: Path, columns: Sequence[str]) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='UTF-8')
    frame.columns = [str(column).strip() for column in frame.columns]
    for column in columns:
        if column not in frame.columns:
            raise SchemaError(path, column)

    return frame.reset_index(drop=True)


def _parse_float(text: str) -> float:
    # python float parsing is correctly rounded, so written values read back bit for bit
    try:
        return float(text)
    except ValueError:
        return math.nan


def parse_numbers(frame: pd.DataFrame, path: Path, column: str, optional: bool = False) -> pd.Series:
    raw = frame[column].str.strip()
    parsed = raw.map(_parse_float).astype(float)
    bad = parsed.isna()
    if optional:
        bad &= raw != ''
    if column in _INTEGER_COLUMNS:
        bad |= parsed.notna() & (parsed % 1 != 0)

    if bad.any():
        position = int(bad.to_numpy().argmax())
        raise ParseError(path, position + 1, column, raw.iloc[position])

    return parsed


def _soil(row: Dict[str, float]) -> SoilProfile:
    return SoilProfile(cec=float(row['cec']), ph=float(row['ph']), organic_matter=float(row['om']), clay=float(row['clay']), silt=float(row['silt']), sand=float(row['sand']), pi=int(row['pi']))


def _weather(row: Dict[str, float], year: int) -> WeatherRecord:
    return WeatherRecord(year=year, temperature_sum=float(row['temp']), precipitation_sum=float(row['precip']), solar_radiation_sum=float(row['solar']))


def load_experiment(path: Path) -> List[ExperimentRecord]:
    """
    One ExperimentRecord per data row, in file order.
    """
    path = Path(path)
    frame = read_table(path, EXPERIMENT_COLUMNS)
    numeric = {column: parse_numbers(frame, path, column, optional=column == 'planting_date') for column in EXPERIMENT_COLUMNS if column != 'variety'}
    varieties = frame['variety'].str.strip()

    records: List[ExperimentRecord] = []
    for position in range(len(frame)):
        row = {column: values.iloc[position] for column, values in numeric.items()}
        try:
            year = int(row['year'])
            planting_date = None if pd.isna(row['planting_date']) else int(row['planting_date'])
            record = ExperimentRecord(
                year=year,
                latitude=float(row['lat']),
                longitude=float(row['lon']),
                weather=_weather(row, year),
                soil=_soil(row),
                variety_id=varieties.iloc[position],
                yield_value=float(row['yield']),
                planting_date=planting_date,
            )
        except ValidationError as error:
            raise ValidationError(f'{path}: row {position + 1}: {error}') from error

        records.append(record)

    logger.info('Loaded {} experiment records from {}', len(records), path)
    return records


def load_region(soil_path: Path, weather_path: Path) -> List[RegionLocation]:
    """
    Joins the soil file (one row per location) with the weather file (one row per location and year).
    Locations without weather rows are kept, with an empty history, and reported.
    """
    soil_path, weather_path = Path(soil_path), Path(weather_path)
    soil_frame = read_table(soil_path, SOIL_COLUMNS)
    weather_frame = read_table(weather_path, WEATHER_COLUMNS)

    has_area = 'area' in soil_frame.columns
    soil_numeric = {column: parse_numbers(soil_frame, soil_path, column) for column in SOIL_COLUMNS[1:] + (['area'] if has_area else [])}
    weather_numeric = {column: parse_numbers(weather_frame, weather_path, column) for column in WEATHER_COLUMNS[1:]}
    soil_ids = soil_frame['location_id'].str.strip()
    weather_ids = weather_frame['location_id'].str.strip()

    duplicated_locations = soil_ids[soil_ids.duplicated()].unique().tolist()
    if duplicated_locations:
        raise DuplicateKeyError(f'{soil_path}: duplicate location_id {", ".join(sorted(duplicated_locations))}')

    unknown = set(weather_ids) - set(soil_ids)
    if unknown:
        raise ReferentialError(f'{weather_path}: locations absent from {soil_path.name}', unknown)

    histories: Dict[str, List[WeatherRecord]] = defaultdict(list)
    seen = set()
    for position in range(len(weather_frame)):
        location_id = weather_ids.iloc[position]
        row = {column: values.iloc[position] for column, values in weather_numeric.items()}
        year = int(row['year'])
        if (location_id, year) in seen:
            raise DuplicateKeyError(f'{weather_path}: duplicate (location_id, year) pair ({location_id}, {year})')
        seen.add((location_id, year))
        try:
            histories[location_id].append(_weather(row, year))
        except ValidationError as error:
            raise ValidationError(f'{weather_path}: row {position + 1}: {error}') from error

    locations: List[RegionLocation] = []
    for position in range(len(soil_frame)):
        location_id = soil_ids.iloc[position]
        row = {column: values.iloc[position] for column, values in soil_numeric.items()}
        history = sorted(histories.get(location_id, []), key=lambda weather: weather.year)
        if not history:
            logger.warning('Location {} has soil data but no weather history', location_id)
        try:
            location = RegionLocation(
                location_id=location_id,
                latitude=float(row['lat']),
                longitude=float(row['lon']),
                soil=_soil(row),
                weather_history=history,
                area=float(row['area']) if has_area else 1.0,
            )
        except ValidationError as error:
            raise ValidationError(f'{soil_path}: row {position + 1}: {error}') from error
        locations.append(location)

    for location_id, missing in region_gaps(locations).items():
        logger.warning('Location {} is missing weather for years {}', location_id, missing)

    logger.info('Loaded {} region locations from {} and {}', len(locations), soil_path, weather_path)
    return locations


def region_gaps(locations: Sequence[RegionLocation]) -> Dict[str, List[int]]:
    """
    Locations whose weather history lacks years that other locations of the region have.
    Gaps are reported, never imputed.
    """
    all_years = sorted({year for location in locations for year in location.years})
    gaps: Dict[str, List[int]] = {}
    for location in locations:
        missing = sorted(set(all_years) - set(location.years))
        if missing:
            gaps[location.location_id] = missing

    return gaps


def write_experiment(records: Sequence[ExperimentRecord], path: Path) -> Path:
    frame = pd.DataFrame(
        {
            'year': pd.array([record.year for record in records], dtype='int64'),
            'lat': [record.latitude for record in records],
            'lon': [record.longitude for record in records],
            'temp': [record.weather.temperature_sum for record in records],
            'precip': [record.weather.precipitation_sum for record in records],
            'solar': [record.weather.solar_radiation_sum for record in records],
            'cec': [record.soil.cec for record in records],
            'ph': [record.soil.ph for record in records],
            'om': [record.soil.organic_matter for record in records],
            'clay': [record.soil.clay for record in records],
            'silt': [record.soil.silt for record in records],
            'sand': [record.soil.sand for record in records],
            'pi': pd.array([record.soil.pi for record in records], dtype='int64'),
            'variety': [record.variety_id for record in records],
            'planting_date': pd.array([record.planting_date for record in records], dtype='Int64'),
            'yield': [record.yield_value for record in records],
        },
        columns=EXPERIMENT_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator='\n')
    return Path(path)


def write_region(locations: Sequence[RegionLocation], soil_path: Path, weather_path: Path):
    soil = pd.DataFrame(
        {
            'location_id': [location.location_id for location in locations],
            'lat': [location.latitude for location in locations],
            'lon': [location.longitude for location in locations],
            'cec': [location.soil.cec for location in locations],
            'ph': [location.soil.ph for location in locations],
            'om': [location.soil.organic_matter for location in locations],
            'clay': [location.soil.clay for location in locations],
            'silt': [location.soil.silt for location in locations],
            'sand': [location.soil.sand for location in locations],
            'pi': pd.array([location.soil.pi for location in locations], dtype='int64'),
            'area': [location.area for location in locations],
        }
    )
    soil.to_csv(soil_path, index=False, lineterminator='\n')

    rows = [(location.location_id, weather.year, weather.temperature_sum, weather.precipitation_sum, weather.solar_radiation_sum) for location in locations for weather in location.weather_history]
    weather = pd.DataFrame(rows, columns=WEATHER_COLUMNS).astype({'year': 'int64'})
    weather.to_csv(weather_path, index=False, lineterminator='\n')
