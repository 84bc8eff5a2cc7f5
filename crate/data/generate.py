#!/usr/bin/env python3
"""Regenerates the shipped environment and flux-forecast files.

density_v1.toml: 20 km piecewise-exponential layers from 200 to 700 km,
sampled from the exponential atmosphere table in Vallado, "Fundamentals of
Astrodynamics and Applications" (4th ed., Table 8-4). Scale heights are
re-derived per layer so the profile is continuous at every node.

flux_{low,medium,high}.csv: synthetic monthly F10.7 percentile forecasts for
May 2018 - Jan 2030. Each class is the tail of the previous cycle plus a
skewed bump for the next one; the classes differ in its amplitude. Percentile
spread grows with lead time.
"""

import math
from datetime import date
from pathlib import Path

HERE = Path(__file__).resolve().parent

VALLADO = [  # base km, density kg/m^3, scale height km
    (180, 5.464e-10, 29.740),
    (200, 2.789e-10, 37.105),
    (250, 7.248e-11, 45.546),
    (300, 2.418e-11, 53.628),
    (350, 9.518e-12, 53.298),
    (400, 3.725e-12, 58.515),
    (450, 1.585e-12, 60.828),
    (500, 6.967e-13, 63.822),
    (600, 1.454e-13, 71.835),
    (700, 3.614e-14, 88.667),
]

BODY = dict(mu=3.986004418e14, radius=6378136.3, rotation_rate=7.2921151467e-5, j2=1.08262668e-3)
REFERENCE_FLUX = 150.0
KAPPA = 2.0
FLUX_RANGE = (60.0, 300.0)


def vallado(km):
    base = max(b for b in VALLADO if b[0] <= km)
    return base[1] * math.exp(-(km - base[0]) / base[2])


def write_density():
    nodes = list(range(200, 701, 20))
    rho = [vallado(k) for k in nodes]
    lines = [
        "# Generated by generate.py; do not edit by hand.",
        "version = 1",
        "",
        "[body]",
    ]
    lines += [f"{k} = {v!r}" for k, v in BODY.items()]
    lines += [
        "",
        "[density]",
        f"reference_flux = {REFERENCE_FLUX}",
        f"kappa = {KAPPA}",
        f"flux_range = [{FLUX_RANGE[0]}, {FLUX_RANGE[1]}]",
        "layers = [",
    ]
    for i, k in enumerate(nodes):
        h = 20.0 / math.log(rho[i] / rho[i + 1]) if i + 1 < len(nodes) else VALLADO[-1][2]
        lines.append(f"  {{ altitude_km = {float(k)}, density = {rho[i]:.6e}, scale_height_km = {h:.6f} }},")
    lines.append("]")
    (HERE / "density_v1.toml").write_text("\n".join(lines) + "\n")


CLASSES = {"low": 65.0, "medium": 95.0, "high": 125.0}
MINIMUM = 2019.95
RISE = 4.8  # years from minimum to maximum


def year_fraction(d):
    start = date(d.year, 1, 1)
    return d.year + (d - start).days / (date(d.year + 1, 1, 1) - start).days


def mean_flux(t, amplitude):
    tail = 12.0 * math.exp(-(t - 2018.33) / 0.8)
    x = max(t - MINIMUM, 0.0) / RISE
    bump = x**3 * math.exp(3.0 * (1.0 - x)) if x > 0 else 0.0
    return 68.0 + tail + amplitude * bump


def months():
    y, m = 2018, 5
    while (y, m) <= (2030, 1):
        yield date(y, m, 1)
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)


def write_flux():
    z = (-1.6449, -0.6745, 0.0, 0.6745, 1.6449)
    for name, amplitude in CLASSES.items():
        rows = ["date,p05,p25,p50,p75,p95"]
        for d in months():
            t = year_fraction(d)
            mu = mean_flux(t, amplitude)
            sigma = 3.0 + (0.04 + 0.012 * (t - 2018.33)) * (mu - 60.0)
            vals = [min(max(mu + k * sigma, 62.0), 295.0) for k in z]
            rows.append(d.isoformat() + "," + ",".join(f"{v:.1f}" for v in vals))
        (HERE / f"flux_{name}.csv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    write_density()
    write_flux()
