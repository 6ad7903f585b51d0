from typing import Optional


class HabitatError(Exception):
    """Base class for every error raised by habitat_rd."""


class ConfigError(HabitatError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: int, column: Optional[int] = None):
        self.message = message
        self.line = line
        self.column = column
        where = f'line {line}' if column is None else f'line {line}:{column}'
        super().__init__(f'{where}: {message}')


class ConfigSemanticError(ConfigError):
    def __init__(self, message: str, line: int = 0, directive: str = ''):
        self.message = message
        self.line = line
        self.directive = directive
        text = f'line {line}: {message}' if line else message
        if directive:
            text = f'{text}\n    > {directive}'
        super().__init__(text)


class GeometryError(HabitatError):
    pass


class ModelError(HabitatError):
    pass


class SolverError(HabitatError):
    pass


class SolverConfigError(SolverError):
    pass


class LinearSolveError(SolverError):
    def __init__(self, species: int, iterations: int, residual: float):
        self.species = species
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f'diffusion solve for species {species + 1} did not converge '
            f'after {iterations} iterations (relative residual {residual:.3e})'
        )


class NonFiniteStateError(SolverError):
    def __init__(self, species: int, cell: tuple, time: float):
        self.species = species
        self.cell = cell
        self.time = time
        super().__init__(
            f'non-finite value for species {species + 1} at cell {cell} '
            f'(t={time:.6g})'
        )


class EnergyOverflowError(HabitatError):
    pass


class CheckerError(HabitatError):
    pass


class OutputError(HabitatError):
    """A result file or the output directory could not be written."""


def is_usage_error(err: Exception) -> bool:
    return isinstance(err, ConfigError)


def is_verdict_failure(err: Exception) -> bool:
    return isinstance(err, HabitatError) and not is_usage_error(err)


def exit_code_for(err: Exception) -> int:
    if is_usage_error(err):
        return 2
    if is_verdict_failure(err):
        return 1

    raise err
