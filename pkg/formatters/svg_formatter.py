"""
SVG plot of sweep or triple CSV rows, one polyline per (n, toggles) series.
"""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

Y_COLUMN = {"sweep": "k_reduced", "triple": "k3"}
Y_LABEL = {"sweep": "K'_n", "triple": "optimized K_3"}


def _series_label(n, back_action, scattering, show_toggles):
    label = f"n={n}"
    if show_toggles:
        label += ", back action " + ("on" if back_action else "off")
        label += ", scattering " + ("on" if scattering else "off")
    return label


def render_svg(kind, records):
    """
    Render parsed CSV rows as a static SVG line plot.

    Args:
        kind (str): "sweep" or "triple"
        records (list): row dicts from parse_csv

    Returns:
        tuple: (svg text, list of legend labels in plot order)
    """
    y_column = Y_COLUMN[kind]
    series = {}
    for record in records:
        key = (record["n"], record["back_action"], record["scattering"])
        xs, ys = series.setdefault(key, ([], []))
        xs.append(record["theta"])
        ys.append(record[y_column])

    show_toggles = len({key[1:] for key in series}) > 1
    fig, ax = plt.subplots(figsize=(7, 4.5))
    labels = []
    for (n, back_action, scattering), (xs, ys) in sorted(series.items()):
        label = _series_label(n, back_action, scattering, show_toggles)
        ax.plot(xs, ys, marker="o" if len(xs) == 1 else None, linestyle="-" if back_action else "--",
                label=label)
        labels.append(label)

    ax.axhline(0.0, color="grey", linewidth=0.8, linestyle=":")
    ax.set_xlabel("theta (rad)")
    ax.set_ylabel(Y_LABEL[kind])
    ax.legend()
    fig.tight_layout()

    buffer = io.StringIO()
    fig.savefig(buffer, format="svg")
    plt.close(fig)
    return buffer.getvalue(), labels
