"""
Formatters module for the QND Leggett-Garg simulator.
Provides the output formats: csv tables, text and json reports, svg plots.
"""

from .csv_formatter import format_as_csv, parse_csv
from .json_formatter import format_as_json
from .svg_formatter import render_svg
from .text_formatter import format_as_text


def format_output(payload, output_format="text"):
    """
    Format command output.

    Args:
        payload: sweep/triple rows for "csv", a report dict for "text"/"json"
        output_format (str): 'csv', 'text' or 'json'

    Returns:
        str: Formatted output
    """
    if output_format == "csv":
        return format_as_csv(payload)
    if output_format == "json":
        return format_as_json(payload)
    return format_as_text(payload)
