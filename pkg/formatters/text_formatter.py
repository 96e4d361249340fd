"""
Text formatter for audit and oracle-check reports.
"""

from utils import format_float


def _format_value(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def format_as_text(report):
    """
    Format a report as text.

    Args:
        report (dict): {"title": str, "sections": [{"name": str, "values": dict}]}

    Returns:
        str: Text formatted output
    """
    result = report["title"] + "\n"
    result += "-" * 40 + "\n"

    for section in report["sections"]:
        result += f"\n{section['name']}:\n"
        width = max((len(key) for key in section["values"]), default=0)
        for key, value in section["values"].items():
            result += f"  {key.ljust(width)}  {_format_value(value)}\n"

    if "passed" in report:
        result += "\n" + "-" * 40 + "\n"
        result += "ALL CHECKS PASSED\n" if report["passed"] else "SOME CHECKS FAILED\n"

    return result
