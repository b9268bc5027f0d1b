"""SVG drawings of multi-period block layouts, one document per period."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Any

MARGIN = 20.0
PALETTE = ("#f2e6c9", "#d6e9f8", "#dcefd6", "#f8dede", "#e7def3", "#f6ecd8", "#def3f1", "#ececec")


@dataclass(frozen=True)
class RenderStyle:
    scale: float = 40.0
    show_io: bool = True
    show_zone_bounds: bool = True
    replacement_labels: bool = True

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def _f(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def render_period(doc: dict[str, Any], t: int, style: RenderStyle = RenderStyle()) -> str:
    """SVG 1.1 text for period ``t`` of a serialized layout solution."""
    per = next((p for p in doc["periods"] if p["t"] == t), None)
    if per is None:
        raise KeyError(f"solution has no period {t}")
    lx, ly = float(doc["facility"]["len_x"]), float(doc["facility"]["len_y"])
    s = style.scale
    width, height = lx * s + 2 * MARGIN, ly * s + 2 * MARGIN + 24

    def X(x: float) -> float:
        return MARGIN + x * s

    def Y(y: float) -> float:
        # layout y grows north, screen y grows down
        return MARGIN + 24 + (ly - y) * s

    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "version": "1.1",
        "width": _f(width),
        "height": _f(height),
        "viewBox": f"0 0 {_f(width)} {_f(height)}",
    })
    title = f"t = {t}"
    if doc.get("instance"):
        title = f"{doc['instance']}  {title}"
    ET.SubElement(svg, "text", {"x": _f(MARGIN), "y": _f(MARGIN + 8), "font-family": "sans-serif",
                                "font-size": "14"}).text = title

    ET.SubElement(svg, "rect", {"class": "facility", "x": _f(X(0)), "y": _f(Y(ly)), "width": _f(lx * s),
                                "height": _f(ly * s), "fill": "white", "stroke": "black", "stroke-width": "2"})

    if style.show_zone_bounds:
        for z in per["zones"]:
            ET.SubElement(svg, "rect", {
                "class": "zone", "data-zone": str(z["zone"]), "data-orientation": z["orientation"],
                "x": _f(X(z["w"])), "y": _f(Y(z["n"])),
                "width": _f((z["e"] - z["w"]) * s), "height": _f((z["n"] - z["s"]) * s),
                "fill": "none", "stroke": "#555555", "stroke-width": "1.5", "stroke-dasharray": "6,3",
            })

    font = max(8.0, min(14.0, s * 0.45))
    for n, d in enumerate(per["departments"]):
        (cx, cy), (hx, hy) = d["center"], d["half"]
        ET.SubElement(svg, "rect", {
            "class": "department", "data-id": d["id"],
            "x": _f(X(cx - hx)), "y": _f(Y(cy + hy)), "width": _f(2 * hx * s), "height": _f(2 * hy * s),
            "fill": PALETTE[n % len(PALETTE)], "stroke": "black", "stroke-width": "1",
        })
        label = d["id"]
        if style.replacement_labels and d.get("replaces"):
            label = f"{d['id']} → {d['replaces']}"
        ET.SubElement(svg, "text", {
            "class": "label", "x": _f(X(cx)), "y": _f(Y(cy) + font / 3), "text-anchor": "middle",
            "font-family": "sans-serif", "font-size": _f(font),
        }).text = label
        if style.show_io:
            gx, gy = d["io"]
            ET.SubElement(svg, "circle", {"class": "io", "cx": _f(X(gx)), "cy": _f(Y(gy)),
                                          "r": _f(max(2.0, s * 0.08)), "fill": "#c0392b"})

    ET.indent(svg)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(svg, encoding="unicode") + "\n"


def render_solution(doc: dict[str, Any], style: RenderStyle = RenderStyle()) -> dict[int, str]:
    return {p["t"]: render_period(doc, p["t"], style) for p in doc["periods"]}
