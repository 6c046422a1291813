"""Minimal SVG line plots; enough for metric curves, no plotting deps."""

from __future__ import annotations

from dataclasses import dataclass, field

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


@dataclass
class Panel:
    title: str
    x_label: str
    y_label: str
    series: list[tuple[str, list[float], list[float]]] = field(default_factory=list)

    def add(self, label: str, xs, ys) -> None:
        self.series.append((label, [float(x) for x in xs], [float(y) for y in ys]))


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _render_panel(panel: Panel, ox: float, oy: float, w: float, h: float) -> str:
    margin_l, margin_b, margin_t = 46.0, 34.0, 24.0
    px, py = ox + margin_l, oy + margin_t
    pw, ph = w - margin_l - 12.0, h - margin_t - margin_b
    xs_all = [x for _, xs, _ in panel.series for x in xs]
    ys_all = [y for _, _, ys in panel.series for y in ys]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x: float) -> float:
        return px + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y: float) -> float:
        return py + ph - (y - y_lo) / (y_hi - y_lo) * ph

    parts = [
        f'<text x="{ox + w / 2:.1f}" y="{oy + 14:.1f}" text-anchor="middle" '
        f'font-size="13" font-weight="bold">{panel.title}</text>',
        f'<rect x="{px:.1f}" y="{py:.1f}" width="{pw:.1f}" height="{ph:.1f}" '
        'fill="none" stroke="#999"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{sx(tx):.1f}" y1="{py + ph:.1f}" x2="{sx(tx):.1f}" '
            f'y2="{py + ph + 4:.1f}" stroke="#555"/>'
            f'<text x="{sx(tx):.1f}" y="{py + ph + 16:.1f}" text-anchor="middle" '
            f'font-size="10">{tx:g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        parts.append(
            f'<line x1="{px - 4:.1f}" y1="{sy(ty):.1f}" x2="{px:.1f}" '
            f'y2="{sy(ty):.1f}" stroke="#555"/>'
            f'<text x="{px - 6:.1f}" y="{sy(ty) + 3:.1f}" text-anchor="end" '
            f'font-size="10">{ty:.3g}</text>'
        )
    parts.append(
        f'<text x="{px + pw / 2:.1f}" y="{oy + h - 6:.1f}" text-anchor="middle" '
        f'font-size="11">{panel.x_label}</text>'
    )
    parts.append(
        f'<text x="{ox + 12:.1f}" y="{py + ph / 2:.1f}" text-anchor="middle" '
        f'font-size="11" transform="rotate(-90 {ox + 12:.1f} {py + ph / 2:.1f})">'
        f"{panel.y_label}</text>"
    )
    for i, (label, xs, ys) in enumerate(panel.series):
        color = _PALETTE[i % len(_PALETTE)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
        ly = py + 14 + 14 * i
        parts.append(
            f'<line x1="{px + pw - 70:.1f}" y1="{ly:.1f}" x2="{px + pw - 54:.1f}" '
            f'y2="{ly:.1f}" stroke="{color}" stroke-width="2"/>'
            f'<text x="{px + pw - 50:.1f}" y="{ly + 3:.1f}" font-size="10">{label}</text>'
        )
    return "".join(parts)


def render_svg(panels: list[Panel], panel_width: int = 420, panel_height: int = 300) -> str:
    """Panels side by side in one standalone SVG document."""
    width = panel_width * len(panels)
    body = "".join(
        _render_panel(p, i * panel_width, 0, panel_width, panel_height)
        for i, p in enumerate(panels)
    )
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{panel_height}" font-family="sans-serif">'
        f'<rect width="{width}" height="{panel_height}" fill="white"/>'
        f"{body}</svg>\n"
    )
