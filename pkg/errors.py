"""
Exception types for the QND Leggett-Garg simulator.
Library modules raise these; main.py maps them to exit codes.
"""


class QndLgError(Exception):
    """Base class for all simulator errors."""


class ParameterError(QndLgError, ValueError):
    """Invalid physical parameters or operation arguments."""


class SequencingError(QndLgError):
    """Pulses used out of order, or a readout of a pulse never fired."""


class DomainError(QndLgError, ValueError):
    """Numerical input outside the domain of an operation (e.g. not PSD)."""


class ConfigError(QndLgError):
    """Unknown configuration keys or unparsable values."""


class CsvParseError(QndLgError):
    """Malformed CSV input for the plot command."""

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
