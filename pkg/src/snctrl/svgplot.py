"""Tiny deterministic SVG plotting for report artifacts.

Hand-rolled on purpose: plots are build artifacts that must be byte-identical
across reruns, so no timestamps, no library version drift, fixed viewBox and
fixed point ordering.
"""

import math


def _fmt(v):
    if not math.isfinite(v):
        return "0"
    return f"{v:.3f}".rstrip("0").rstrip(".") or "0"


def _fmt_tick(v):
    return f"{v:.4g}"


class Panel:
    """One data-space panel rendered into a fixed pixel box."""

    def __init__(self, title="", xlabel="", ylabel="",
                 width=440, height=330, margin=52):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.width = width
        self.height = height
        self.margin = margin
        self.items = []
        self._xs = []
        self._ys = []
        self.limits = None

    def _track(self, xs, ys):
        self._xs.extend(float(v) for v in xs if math.isfinite(v))
        self._ys.extend(float(v) for v in ys if math.isfinite(v))

    def set_limits(self, xmin, xmax, ymin, ymax):
        self.limits = (xmin, xmax, ymin, ymax)

    def polyline(self, xs, ys, color="#1f6fb2", width=1.5, dash=None):
        self._track(xs, ys)
        self.items.append(("polyline", list(xs), list(ys), color, width, dash))

    def scatter(self, xs, ys, color="#1f6fb2", radius=2.0):
        self._track(xs, ys)
        self.items.append(("scatter", list(xs), list(ys), color, radius, None))

    def band(self, xs, ylo, yhi, color="#1f6fb2", opacity=0.25):
        self._track(xs, list(ylo) + list(yhi))
        self.items.append(("band", list(xs), (list(ylo), list(yhi)),
                           color, opacity, None))

    def _scales(self):
        if self.limits is not None:
            xmin, xmax, ymin, ymax = self.limits
        else:
            xmin = min(self._xs, default=0.0)
            xmax = max(self._xs, default=1.0)
            ymin = min(self._ys, default=0.0)
            ymax = max(self._ys, default=1.0)
        if xmax == xmin:
            xmax = xmin + 1.0
        if ymax == ymin:
            ymax = ymin + 1.0
        pad_x = 0.04 * (xmax - xmin)
        pad_y = 0.06 * (ymax - ymin)
        xmin, xmax = xmin - pad_x, xmax + pad_x
        ymin, ymax = ymin - pad_y, ymax + pad_y
        inner_w = self.width - 2 * self.margin
        inner_h = self.height - 2 * self.margin

        def to_px(x, y):
            px = self.margin + (x - xmin) / (xmax - xmin) * inner_w
            py = self.height - self.margin - (y - ymin) / (ymax - ymin) * inner_h
            return px, py

        return to_px, (xmin, xmax, ymin, ymax)

    def render(self, ox=0.0, oy=0.0):
        to_px, (xmin, xmax, ymin, ymax) = self._scales()
        out = [f'<g transform="translate({_fmt(ox)},{_fmt(oy)})">']
        out.append(
            f'<rect x="{_fmt(self.margin)}" y="{_fmt(self.margin)}" '
            f'width="{_fmt(self.width - 2 * self.margin)}" '
            f'height="{_fmt(self.height - 2 * self.margin)}" '
            'fill="none" stroke="#444444" stroke-width="1"/>')
        for k in range(5):
            fx = xmin + (xmax - xmin) * k / 4
            fy = ymin + (ymax - ymin) * k / 4
            px, _ = to_px(fx, ymin)
            _, py = to_px(xmin, fy)
            out.append(
                f'<text x="{_fmt(px)}" y="{_fmt(self.height - self.margin + 16)}" '
                'font-size="10" text-anchor="middle" fill="#333333">'
                f'{_fmt_tick(fx)}</text>')
            out.append(
                f'<text x="{_fmt(self.margin - 6)}" y="{_fmt(py + 3)}" '
                'font-size="10" text-anchor="end" fill="#333333">'
                f'{_fmt_tick(fy)}</text>')
        for kind, xs, ys, color, size, dash in self.items:
            if kind == "band":
                ylo, yhi = ys
                pts = [to_px(x, y) for x, y in zip(xs, ylo)]
                pts += [to_px(x, y) for x, y in zip(reversed(xs), reversed(yhi))]
                path = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
                out.append(f'<polygon points="{path}" fill="{color}" '
                           f'opacity="{_fmt(size)}" stroke="none"/>')
            elif kind == "polyline":
                pts = [to_px(x, y) for x, y in zip(xs, ys)
                       if math.isfinite(x) and math.isfinite(y)]
                path = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
                dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
                out.append(f'<polyline points="{path}" fill="none" '
                           f'stroke="{color}" stroke-width="{_fmt(size)}"'
                           f'{dash_attr}/>')
            elif kind == "scatter":
                for x, y in zip(xs, ys):
                    if not (math.isfinite(x) and math.isfinite(y)):
                        continue
                    px, py = to_px(x, y)
                    out.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" '
                               f'r="{_fmt(size)}" fill="{color}"/>')
        out.append(
            f'<text x="{_fmt(self.width / 2)}" y="18" font-size="12" '
            f'text-anchor="middle" fill="#111111">{self.title}</text>')
        out.append(
            f'<text x="{_fmt(self.width / 2)}" '
            f'y="{_fmt(self.height - 10)}" font-size="11" '
            f'text-anchor="middle" fill="#111111">{self.xlabel}</text>')
        out.append(
            f'<text x="14" y="{_fmt(self.height / 2)}" font-size="11" '
            f'text-anchor="middle" fill="#111111" '
            f'transform="rotate(-90 14 {_fmt(self.height / 2)})">'
            f'{self.ylabel}</text>')
        out.append("</g>")
        return "\n".join(out)


def compose(panels, cols=2):
    """Stack panels into one self-contained SVG document."""
    if not panels:
        raise ValueError("no panels to compose")
    pw = max(p.width for p in panels)
    ph = max(p.height for p in panels)
    rows = (len(panels) + cols - 1) // cols
    total_w = cols * pw
    total_h = rows * ph
    body = []
    for i, panel in enumerate(panels):
        ox = (i % cols) * pw
        oy = (i // cols) * ph
        body.append(panel.render(ox=ox, oy=oy))
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="0 0 {total_w} {total_h}" '
        f'width="{total_w}" height="{total_h}">\n'
        '<rect width="100%" height="100%" fill="#ffffff"/>\n'
        + "\n".join(body) + "\n</svg>\n")
