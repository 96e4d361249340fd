"""
JSON formatter for audit and oracle-check reports.
"""

import datetime
import json


def format_as_json(report):
    """
    Format a report as JSON.

    Args:
        report (dict): report with title and sections

    Returns:
        str: JSON formatted output
    """
    output = dict(report)
    output["generated_at"] = datetime.datetime.now().isoformat()
    return json.dumps(output, indent=2)
