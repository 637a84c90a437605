"""Hand-emitted SVG bar chart for per-location attributions."""

from __future__ import annotations

from xml.sax.saxutils import escape

_BAR_H = 22
_GAP = 6
_WIDTH = 640
_LABEL_W = 170
_TOP = 54


def shap_bar_chart(record: dict) -> str:
    """Horizontal bar chart of one location's contributions.

    ``record`` is the mapping returned by ``results.shap_for_location``:
    bars are already sorted by |phi| descending; positive contributions
    point right (steel blue), negative left (firebrick).  The base value
    and explained output are annotated in the header.
    """
    contributions = record["contributions"]
    n = len(contributions)
    height = _TOP + n * (_BAR_H + _GAP) + 18
    max_abs = max((abs(v) for _, v in contributions), default=0.0) or 1.0
    plot_w = _WIDTH - _LABEL_W - 24
    zero_x = _LABEL_W + plot_w / 2.0
    scale = (plot_w / 2.0 - 4) / max_abs

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{height}" '
        f'viewBox="0 0 {_WIDTH} {height}" font-family="monospace" font-size="12">',
        f'<text x="12" y="20" font-size="14">location {record["location"]}: '
        f'feature contributions</text>',
        f'<text x="12" y="38">base value = {record["base_value"]:.6g}, '
        f'explained output = {record["target"]:.6g}</text>',
        f'<line x1="{zero_x:.1f}" y1="{_TOP - 8}" x2="{zero_x:.1f}" '
        f'y2="{height - 14}" stroke="#888" stroke-width="1"/>',
    ]
    for row, (name, value) in enumerate(contributions):
        y = _TOP + row * (_BAR_H + _GAP)
        w = abs(value) * scale
        x = zero_x if value >= 0 else zero_x - w
        color = "#4682b4" if value >= 0 else "#b22222"
        parts.append(
            f'<text x="{_LABEL_W - 6}" y="{y + 15}" text-anchor="end">{escape(str(name))}</text>'
        )
        parts.append(
            f'<rect x="{x:.2f}" y="{y}" width="{max(w, 0.5):.2f}" height="{_BAR_H}" '
            f'fill="{color}"/>'
        )
        tx = x + w + 4 if value >= 0 else x - 4
        anchor = "start" if value >= 0 else "end"
        parts.append(
            f'<text x="{tx:.2f}" y="{y + 15}" text-anchor="{anchor}">{value:+.4g}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
