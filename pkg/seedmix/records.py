"""
Rows of the "experiment" and "region" datasets: growing conditions (weather, soil) and observed yields.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from seedmix.errors import ValidationError

WEATHER_FEATURES = ['temp', 'precip', 'solar']
"""
Weather sums over the growing season (April 1st to October 31st), they vary by location and year.
"""

SOIL_FEATURES = ['cec', 'ph', 'om', 'clay', 'silt', 'sand', 'pi']
"""
Soil attributes, fixed for a location.
"""

FEATURE_NAMES = WEATHER_FEATURES + SOIL_FEATURES
INTERCEPT = 'intercept'

PI_MAX = 18


def _require_finite(owner: str, **values: float):
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValidationError(f'{owner}.{name} must be finite, got {value}')


@dataclass(frozen=True)
class WeatherRecord:
    year: int
    temperature_sum: float
    precipitation_sum: float
    solar_radiation_sum: float

    def __post_init__(self):
        _require_finite('weather', temperature_sum=self.temperature_sum, precipitation_sum=self.precipitation_sum, solar_radiation_sum=self.solar_radiation_sum)
        if self.precipitation_sum < 0:
            raise ValidationError(f'precipitation_sum must be >= 0, got {self.precipitation_sum}')
        if self.solar_radiation_sum < 0:
            raise ValidationError(f'solar_radiation_sum must be >= 0, got {self.solar_radiation_sum}')

    def features(self) -> Dict[str, float]:
        return {'temp': self.temperature_sum, 'precip': self.precipitation_sum, 'solar': self.solar_radiation_sum}


@dataclass(frozen=True)
class SoilProfile:
    cec: float
    ph: float
    organic_matter: float
    clay: float
    silt: float
    sand: float
    pi: int

    def __post_init__(self):
        _require_finite('soil', cec=self.cec, ph=self.ph, organic_matter=self.organic_matter, clay=self.clay, silt=self.silt, sand=self.sand)
        for name in ('clay', 'silt', 'sand', 'organic_matter'):
            value = getattr(self, name)
            if not 0 <= value <= 100:
                raise ValidationError(f'soil.{name} must be a percentage in [0, 100], got {value}')
        if not 0 <= self.pi <= PI_MAX:
            raise ValidationError(f'soil.pi must be in [0, {PI_MAX}], got {self.pi}')

    def features(self) -> Dict[str, float]:
        return {'cec': self.cec, 'ph': self.ph, 'om': self.organic_matter, 'clay': self.clay, 'silt': self.silt, 'sand': self.sand, 'pi': float(self.pi)}


@dataclass(frozen=True)
class ExperimentRecord:
    """
    One field trial: a variety planted at a site in a given year, and the yield it produced.
    """

    year: int
    latitude: float
    longitude: float
    weather: WeatherRecord
    soil: SoilProfile
    variety_id: str
    yield_value: float
    planting_date: Optional[int] = None
    """
    day of year, often missing and never used by the yield model.
    """

    def __post_init__(self):
        if not self.variety_id:
            raise ValidationError('variety_id must not be empty')
        if not math.isfinite(self.yield_value) or self.yield_value < 0:
            raise ValidationError(f'yield must be a nonnegative number, got {self.yield_value}')
        if self.weather.year != self.year:
            raise ValidationError(f'weather year {self.weather.year} does not match record year {self.year}')

    def features(self) -> Dict[str, float]:
        return {**self.weather.features(), **self.soil.features()}


@dataclass(frozen=True)
class RegionLocation:
    """
    A location of the planning region with its fixed soil, its weather history and the area to be planted (a_l).
    """

    location_id: str
    latitude: float
    longitude: float
    soil: SoilProfile
    weather_history: List[WeatherRecord] = field(default_factory=list)
    area: float = 1.0

    def __post_init__(self):
        years = [weather.year for weather in self.weather_history]
        if any(later <= earlier for earlier, later in zip(years, years[1:])):
            raise ValidationError(f'location {self.location_id}: weather years must be strictly increasing, got {years}')
        if not math.isfinite(self.area) or self.area < 0:
            raise ValidationError(f'location {self.location_id}: area must be >= 0, got {self.area}')

    @property
    def years(self) -> List[int]:
        return [weather.year for weather in self.weather_history]

    def features(self, weather: WeatherRecord) -> Dict[str, float]:
        return {**weather.features(), **self.soil.features()}
