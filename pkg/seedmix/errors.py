"""
Exceptions raised by seedmix.  Solver non-convergence is not an error, results carry a flag instead.
"""

from typing import Iterable, Optional


class SeedMixError(Exception):
    pass


class DataError(SeedMixError, ValueError):
    """
    Input files or records that do not conform to the expected schema or value ranges.
    """


class SchemaError(DataError):
    def __init__(self, path, column: str):
        self.path = path
        self.column = column
        super().__init__(f'{path}: missing column "{column}"')


class ParseError(DataError):
    def __init__(self, path, row: int, column: str, value: str):
        self.path = path
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f'{path}: row {row}, column "{column}": cannot parse "{value}"')


class ValidationError(DataError):
    pass


class DuplicateKeyError(DataError):
    pass


class ReferentialError(DataError):
    def __init__(self, message: str, ids: Iterable[str]):
        self.ids = sorted(ids)
        super().__init__(f'{message}: {", ".join(self.ids)}')


class ParameterError(SeedMixError, ValueError):
    pass


class UnknownVarietyError(SeedMixError, KeyError):
    def __init__(self, variety_id: str):
        self.variety_id = variety_id
        super().__init__(f'unknown variety "{variety_id}"')

    def __str__(self):
        return self.args[0]


class UnknownFeatureError(SeedMixError, KeyError):
    def __init__(self, feature: str):
        self.feature = feature
        super().__init__(f'unknown feature "{feature}"')

    def __str__(self):
        return self.args[0]


class PipelineError(SeedMixError):
    """
    Failure of one pipeline stage, ``stage`` names it ('data', 'estimation', 'projection', 'planning', 'report').
    """

    def __init__(self, stage: str, cause: Optional[BaseException] = None):
        self.stage = stage
        self.cause = cause
        super().__init__(f'[{stage}] {cause}' if cause else f'[{stage}] failed')
