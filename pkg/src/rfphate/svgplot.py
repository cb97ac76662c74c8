"""Dependency-free SVG scatter plots of the first two embedding dimensions."""

import numpy as np

WIDTH, HEIGHT = 800, 600
MARGIN = 60
LEGEND_WIDTH = 150

# colorblind-friendly categorical palette
PALETTE = [
    "#0173b2", "#de8f05", "#029e73", "#d55e00", "#cc78bc",
    "#ca9161", "#fbafe4", "#949494", "#ece133", "#56b4e9",
]

# dark-blue -> teal -> yellow continuous ramp stops
RAMP = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]


def _ramp_color(u: float) -> str:
    u = min(max(u, 0.0), 1.0)
    pos = u * (len(RAMP) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(RAMP) - 1)
    frac = pos - lo
    rgb = [
        round(RAMP[lo][c] + frac * (RAMP[hi][c] - RAMP[lo][c])) for c in range(3)
    ]
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def _scale(values: np.ndarray, out_lo: float, out_hi: float) -> np.ndarray:
    lo, hi = values.min(), values.max()
    span = hi - lo
    if span == 0:
        return np.full_like(values, (out_lo + out_hi) / 2.0)
    return out_lo + (values - lo) / span * (out_hi - out_lo)


def scatter_svg(
    path,
    Y: np.ndarray,
    color_values: np.ndarray,
    categorical: bool,
    category_names: list[str] | None = None,
    title: str = "",
) -> None:
    """Write a fixed-viewbox scatter of Y[:, :2].

    Categorical coloring cycles the palette with a swatch legend;
    continuous coloring uses the ramp with min/max legend entries.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise ValueError("need at least 2 embedding dimensions to plot")
    xs = _scale(Y[:, 0], MARGIN, WIDTH - LEGEND_WIDTH - MARGIN)
    ys = _scale(-Y[:, 1], MARGIN, HEIGHT - MARGIN)  # SVG y grows downward

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{(WIDTH - LEGEND_WIDTH) / 2:.0f}" y="30" '
            f'text-anchor="middle" font-family="sans-serif" font-size="16">'
            f"{title}</text>"
        )

    color_values = np.asarray(color_values, dtype=np.float64)
    if categorical:
        cats = np.unique(color_values)
        color_of = {
            c: PALETTE[i % len(PALETTE)] for i, c in enumerate(cats)
        }
        colors = [color_of[c] for c in color_values]
    else:
        u = _scale(color_values, 0.0, 1.0)
        colors = [_ramp_color(v) for v in u]

    for i in range(Y.shape[0]):
        parts.append(
            f'<circle cx="{xs[i]:.2f}" cy="{ys[i]:.2f}" r="4" '
            f'fill="{colors[i]}" fill-opacity="0.8"/>'
        )

    lx = WIDTH - LEGEND_WIDTH + 10
    parts.append(
        f'<text x="{lx}" y="{MARGIN - 10}" font-family="sans-serif" '
        f'font-size="13" font-weight="bold">legend</text>'
    )
    if categorical:
        for i, c in enumerate(cats[:18]):
            cy = MARGIN + 20 * i
            name = (
                category_names[int(c)]
                if category_names is not None and int(c) < len(category_names)
                else f"{c:.6g}"
            )
            parts.append(
                f'<circle cx="{lx + 6}" cy="{cy}" r="5" fill="{color_of[c]}"/>'
            )
            parts.append(
                f'<text x="{lx + 18}" y="{cy + 4}" font-family="sans-serif" '
                f'font-size="12">{name}</text>'
            )
    else:
        for i in range(5):
            u = i / 4.0
            cy = MARGIN + 20 * i
            lo, hi = color_values.min(), color_values.max()
            parts.append(
                f'<circle cx="{lx + 6}" cy="{cy}" r="5" fill="{_ramp_color(u)}"/>'
            )
            parts.append(
                f'<text x="{lx + 18}" y="{cy + 4}" font-family="sans-serif" '
                f'font-size="12">{lo + u * (hi - lo):.4g}</text>'
            )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
