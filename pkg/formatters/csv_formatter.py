"""
CSV formatter for sweep and triple results, and the matching parser.

Floats are written with 17 significant digits and no locale.
"""

import csv
import io

from errors import CsvParseError
from protocol import SweepRow, TripleResult
from utils import format_float

SWEEP_COLUMNS = ("theta", "n", "k_value", "k_reduced", "back_action", "scattering")
TRIPLE_COLUMNS = (
    "theta", "n", "k3", "triple", "mask_ab", "mask_bc", "mask_ac", "back_action", "scattering",
)


def _flag(value):
    return "true" if value else "false"


def _slots(slots):
    return "-".join(str(slot) for slot in slots)


def format_as_csv(rows):
    """
    Format sweep rows or triple results as CSV.

    Args:
        rows (list): SweepRow or TripleResult items, all of one kind

    Returns:
        str: CSV text with a header row
    """
    rows = list(rows)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")

    if rows and isinstance(rows[0], TripleResult):
        writer.writerow(TRIPLE_COLUMNS)
        for row in rows:
            writer.writerow([
                format_float(row.theta), row.n_slots, format_float(row.k3),
                _slots(row.triple), *(_slots(mask) for mask in row.masks),
                _flag(row.back_action_on), _flag(row.scattering_on),
            ])
    else:
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            if not isinstance(row, SweepRow):
                raise TypeError(f"cannot format {type(row).__name__} as a CSV row")
            writer.writerow([
                format_float(row.theta), row.n, format_float(row.k_value),
                format_float(row.k_reduced), _flag(row.back_action_on), _flag(row.scattering_on),
            ])

    return buffer.getvalue()


def _parse_field(column, text, line_number):
    try:
        if column in ("theta", "k_value", "k_reduced", "k3"):
            return float(text)
        if column == "n":
            return int(text)
        if column in ("back_action", "scattering"):
            if text not in ("true", "false"):
                raise ValueError(text)
            return text == "true"
        return tuple(int(slot) for slot in text.split("-"))
    except ValueError:
        raise CsvParseError(f"bad value {text!r} in column {column!r}", line_number) from None


def parse_csv(path):
    """
    Read a CSV written by the sweep or triple command.

    Args:
        path (str): CSV file

    Returns:
        tuple: ("sweep" or "triple", list of row dicts)

    Raises:
        CsvParseError: with the 1-based line number of the first bad line
        OSError: if the file cannot be read
    """
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise CsvParseError("file is empty", 1)
        header = tuple(header)
        if header == SWEEP_COLUMNS:
            kind = "sweep"
        elif header == TRIPLE_COLUMNS:
            kind = "triple"
        else:
            raise CsvParseError(f"unrecognized header {','.join(header)!r}", 1)

        records = []
        for fields in reader:
            line_number = reader.line_num
            if not fields:
                continue
            if len(fields) != len(header):
                raise CsvParseError(f"expected {len(header)} fields, got {len(fields)}", line_number)
            records.append({
                column: _parse_field(column, text.strip(), line_number)
                for column, text in zip(header, fields)
            })

    if not records:
        raise CsvParseError("no data rows", 2)
    return kind, records
