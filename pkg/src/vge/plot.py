"""Standalone SVG chart of a forecast, its uncertainty band and flagged segments."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from .exceptions import LengthMismatch

SVG_NS = "http://www.w3.org/2000/svg"

WIDTH, HEIGHT = 960, 320
MARGIN = {"left": 56, "right": 16, "top": 16, "bottom": 36}
COLORS = {"observed": "#222222", "mean": "#1f77b4", "band": "#1f77b4", "flagged": "#d62728"}


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


class _Frame:
    """Maps data coordinates to pixels inside the plot margins."""

    def __init__(self, n, lo, hi):
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
        self.n = max(n - 1, 1)
        if not hi > lo:
            lo, hi = lo - 1.0, hi + 1.0
        self.lo, self.hi = lo, hi

    def x(self, t):
        return self.x0 + (self.x1 - self.x0) * np.asarray(t, dtype=float) / self.n

    def y(self, v):
        return self.y0 + (self.y1 - self.y0) * (np.asarray(v, dtype=float) - self.lo) / (self.hi - self.lo)


def _points(xs, ys) -> str:
    return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))


def _axes(svg, frame: _Frame, n: int):
    g = ET.SubElement(svg, "g", {"class": "axes", "stroke": "#888888", "stroke-width": "1"})
    ET.SubElement(g, "line", {"x1": _fmt(frame.x0), "y1": _fmt(frame.y0),
                              "x2": _fmt(frame.x1), "y2": _fmt(frame.y0)})
    ET.SubElement(g, "line", {"x1": _fmt(frame.x0), "y1": _fmt(frame.y0),
                              "x2": _fmt(frame.x0), "y2": _fmt(frame.y1)})
    labels = ET.SubElement(svg, "g", {"class": "ticks", "font-size": "10",
                                      "font-family": "sans-serif", "fill": "#444444"})
    for v in np.linspace(frame.lo, frame.hi, 5):
        t = ET.SubElement(labels, "text", {"x": _fmt(frame.x0 - 6), "y": _fmt(frame.y(v) + 3),
                                           "text-anchor": "end"})
        t.text = f"{v:.3g}"
    for i in np.linspace(0, max(n - 1, 0), 6):
        t = ET.SubElement(labels, "text", {"x": _fmt(frame.x(i)), "y": _fmt(frame.y0 + 16),
                                           "text-anchor": "middle"})
        t.text = str(int(round(i)))


def _legend(svg, band_k):
    g = ET.SubElement(svg, "g", {"class": "legend", "font-size": "11",
                                 "font-family": "sans-serif"})
    items = [("observed", "observed"), ("mean", "ensemble mean"),
             ("band", f"mean ± {band_k:g}σ"), ("flagged", "flagged")]
    x = MARGIN["left"] + 10
    for key, label in items:
        ET.SubElement(g, "rect", {"x": _fmt(x), "y": "4", "width": "12", "height": "8",
                                  "fill": COLORS[key], "fill-opacity": "0.6"})
        t = ET.SubElement(g, "text", {"x": _fmt(x + 16), "y": "12"})
        t.text = label
        x += 24 + 7 * len(label)


def render_svg(y, mean, variance, segments=(), band_k: float = 3.0, title: str = "") -> str:
    """SVG document as a string; see :func:`emit_plot`."""
    y = np.asarray(y, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float).ravel(), 0.0))
    if not y.shape == mean.shape == sd.shape:
        raise LengthMismatch(f"lengths differ: {y.shape}, {mean.shape}, {sd.shape}")
    n = y.shape[0]
    upper, lower = mean + band_k * sd, mean - band_k * sd
    if n:
        lo = float(min(y.min(), lower.min()))
        hi = float(max(y.max(), upper.max()))
    else:
        lo, hi = 0.0, 1.0
    frame = _Frame(n, lo, hi)

    ET.register_namespace("", SVG_NS)
    svg = ET.Element("svg", {"xmlns": SVG_NS, "width": str(WIDTH), "height": str(HEIGHT),
                             "viewBox": f"0 0 {WIDTH} {HEIGHT}"})
    if title:
        ET.SubElement(svg, "title").text = title
    ET.SubElement(svg, "rect", {"width": str(WIDTH), "height": str(HEIGHT), "fill": "white"})
    _axes(svg, frame, n)
    if n:
        for start, end in segments:
            # one highlighted rect per flagged segment
            x_a = frame.x(start - 0.5 if n > 1 else 0)
            x_b = frame.x(end + 0.5 if n > 1 else 1)
            ET.SubElement(svg, "rect", {
                "class": "flagged", "x": _fmt(max(x_a, frame.x0)), "y": _fmt(frame.y1),
                "width": _fmt(max(min(x_b, frame.x1) - max(x_a, frame.x0), 1.0)),
                "height": _fmt(frame.y0 - frame.y1),
                "fill": COLORS["flagged"], "fill-opacity": "0.2"})
        t = np.arange(n)
        xs = frame.x(t)
        band = _points(np.concatenate([xs, xs[::-1]]),
                       np.concatenate([frame.y(upper), frame.y(lower)[::-1]]))
        ET.SubElement(svg, "polygon", {"class": "band", "points": band,
                                       "fill": COLORS["band"], "fill-opacity": "0.2",
                                       "stroke": "none"})
        ET.SubElement(svg, "polyline", {"class": "observed", "points": _points(xs, frame.y(y)),
                                        "fill": "none", "stroke": COLORS["observed"],
                                        "stroke-width": "1"})
        ET.SubElement(svg, "polyline", {"class": "mean", "points": _points(xs, frame.y(mean)),
                                        "fill": "none", "stroke": COLORS["mean"],
                                        "stroke-width": "1"})
    _legend(svg, band_k)
    return ET.tostring(svg, encoding="unicode")


def emit_plot(y, pred, result, path, band_k: float = 3.0, title: str = "") -> None:
    """Write the chart for observed ``y``, ensemble ``pred`` and detection ``result``.

    ``result`` may be a ``DetectionResult`` or a plain list of segments.
    """
    segments = getattr(result, "segments", result) or ()
    doc = render_svg(y, pred.mean, pred.variance, segments, band_k, title)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write('<?xml version="1.0" encoding="UTF-8"?>\n')
        fh.write(doc)
        fh.write("\n")
