"""Deterministic SVG line plots (no plotting library)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .sinc import build_kernel, magnitude_response, mel_triangle

COLORS = ("#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad")


def _fmt(x):
    return f"{x:.3f}"


class LinePlot:
    """Collects polylines in data coordinates and renders one SVG document."""

    def __init__(self, title, xlabel="", ylabel="", width=480, height=300, margin=48):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.width, self.height, self.margin = width, height, margin
        self.series = []

    def add(self, x, y, label="", color=None, dashed=False):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("x and y must be 1-D arrays of equal length")
        color = color or COLORS[len(self.series) % len(COLORS)]
        self.series.append((x, y, label, color, dashed))
        return self

    def _bounds(self):
        xs = np.concatenate([s[0] for s in self.series])
        ys = np.concatenate([s[1] for s in self.series])
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y1 = y0 + 1.0
        return x0, x1, y0, y1

    def to_svg(self):
        if not self.series:
            raise ValueError("nothing to plot")
        w, h, m = self.width, self.height, self.margin
        x0, x1, y0, y1 = self._bounds()
        sx = (w - 2 * m) / (x1 - x0)
        sy = (h - 2 * m) / (y1 - y0)
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
            f'viewBox="0 0 {w} {h}">',
            f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
            f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
            'fill="none" stroke="#444" stroke-width="1"/>',
            f'<text x="{w / 2}" y="{m / 2}" text-anchor="middle" font-size="14">{escape(self.title)}</text>',
            f'<text x="{w / 2}" y="{h - 8}" text-anchor="middle" font-size="11">{escape(self.xlabel)}</text>',
            f'<text x="12" y="{h / 2}" text-anchor="middle" font-size="11" '
            f'transform="rotate(-90 12 {h / 2})">{escape(self.ylabel)}</text>',
            f'<text x="{m}" y="{h - m + 14}" font-size="9">{_fmt(x0)}</text>',
            f'<text x="{w - m}" y="{h - m + 14}" text-anchor="end" font-size="9">{_fmt(x1)}</text>',
            f'<text x="{m - 4}" y="{h - m}" text-anchor="end" font-size="9">{_fmt(y0)}</text>',
            f'<text x="{m - 4}" y="{m + 8}" text-anchor="end" font-size="9">{_fmt(y1)}</text>',
        ]
        for i, (x, y, label, color, dashed) in enumerate(self.series):
            px = m + (x - x0) * sx
            py = h - m - (y - y0) * sy
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
            dash = ' stroke-dasharray="5,3"' if dashed else ""
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>')
            if label:
                out.append(f'<text x="{w - m - 4}" y="{m + 14 + 13 * i}" text-anchor="end" '
                           f'font-size="10" fill="{color}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_svg())
        return path


def kernel_plot(f1, f2, kernel_len, sample_rate, index=0, n_fft=1024):
    """Kernel magnitude response (solid) against the mel triangle for the same band (dashed)."""
    kernel = build_kernel(f1, f2, kernel_len)
    freqs, mag = magnitude_response(kernel, n_fft)
    mag = mag / max(mag.max(), 1e-12)
    hz = freqs * sample_rate
    plot = LinePlot(f"filter {index}: {f1 * sample_rate:.0f}-{f2 * sample_rate:.0f} Hz",
                    "frequency [Hz]", "normalized magnitude")
    plot.add(hz, mag, "sinc kernel")
    plot.add(hz, mel_triangle(freqs, f1, f2), "mel triangle", dashed=True)
    return plot


def bounds_plot(rows, title="learned filter bounds"):
    """Lower and upper cutoffs of filters sorted by center frequency."""
    idx = np.arange(len(rows), dtype=float)
    plot = LinePlot(title, "filter (sorted by center)", "frequency [Hz]")
    plot.add(idx, [r["f1_hz"] for r in rows], "lower bound")
    plot.add(idx, [r["f2_hz"] for r in rows], "upper bound")
    return plot
