"""Deterministic generator for the bundled synthetic region files.

Coordinates are planar degree-like units; wealth is the natural log of a
lognormal regional product in millions, so typical values sit near 10.6.

Run ``python -m afpo.fixtures <dir>`` to regenerate the files.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .cat_sim import RegionGeo

__all__ = [
    "STORM_PATH",
    "COASTAL_SEGMENT",
    "FIXTURE_CAPITAL",
    "coastal_event",
    "grid_regions",
    "small_regions",
    "data_dir",
    "fixture_path",
    "write_all",
]

STORM_PATH = [[-6.0, 45.0], [0.0, 49.0], [5.0, 52.0], [9.0, 55.0]]
# landfall stretch used by the fixed transfer-report event
COASTAL_SEGMENT = [[-6.0, 45.0], [-1.0, 48.5]]
# insurer capital giving roughly 80% solvency at the bundled seed
FIXTURE_CAPITAL = {"regions_2": 3.5, "regions_3": 8.5, "regions_50": 62.0, "regions_212": 160.0}
FIXTURE_SIMS = {"regions_2": 20_000, "regions_3": 20_000, "regions_50": 10_000, "regions_212": 10_000}


def data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


def fixture_path(name: str) -> Path:
    return data_dir() / name


def grid_regions(nx: int, ny: int, keep: int, xlim, ylim, seed: int, prefix: str) -> list[RegionGeo]:
    rng = np.random.default_rng(seed)
    xs = np.linspace(*xlim, nx)
    ys = np.linspace(*ylim, ny)
    hx = (xs[1] - xs[0]) * 0.3
    hy = (ys[1] - ys[0]) * 0.3
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = pts + rng.uniform(-1, 1, pts.shape) * [hx, hy]
    idx = np.sort(rng.choice(len(pts), size=keep, replace=False))
    wealth = np.log(rng.lognormal(np.log(40_000.0), 0.8, size=keep))
    return [RegionGeo(id=f"{prefix}{k:03d}", name=f"Region {prefix}{k:03d}",
                      wealth=round(float(w), 6), cx=round(float(pts[i, 0]), 6),
                      cy=round(float(pts[i, 1]), 6))
            for k, (i, w) in enumerate(zip(idx, wealth))]


def small_regions() -> dict[str, list[RegionGeo]]:
    return {
        "regions_2.csv": [
            RegionGeo("C1", "Coast", 4.5, 0.5, 49.0),
            RegionGeo("I1", "Inland", 10.0, 4.0, 47.0),
        ],
        "regions_3.csv": [
            RegionGeo("C1", "Coast", 9.8, 0.3, 49.0),
            RegionGeo("M1", "Midland", 10.6, 2.5, 48.0),
            RegionGeo("I1", "Inland", 11.2, 5.0, 47.5),
        ],
    }


def coastal_event(regions: list[RegionGeo], scale: float = 6.0) -> np.ndarray:
    """Destruction ``0.9 exp(-d / scale)`` within ``2 scale`` of the landfall stretch."""
    from .cat_sim import min_distance

    xy = np.array([[r.cx, r.cy] for r in regions])
    w = np.array([r.wealth for r in regions])
    d = min_distance(xy, COASTAL_SEGMENT)
    tau = np.where(d < 2 * scale, 0.9 * np.exp(-d / scale), 0.0)
    return np.round(tau * w, 9)


def write_all(out: Path) -> list[Path]:
    import json

    from .io import write_regions, write_table

    out = Path(out)
    files = []
    sets = dict(small_regions())
    sets["regions_50.csv"] = grid_regions(10, 5, 50, (-6.0, 12.0), (44.0, 56.0), seed=50, prefix="R")
    sets["regions_212.csv"] = grid_regions(16, 14, 212, (-8.0, 20.0), (42.0, 60.0), seed=212, prefix="N")
    for name, regs in sets.items():
        files.append(write_regions(out / name, regs, meta={"fixture": name.removesuffix(".csv"),
                                                           "units": "wealth=log-product-millions"}))
    for name in sets:
        stem = name.removesuffix(".csv")
        cfg = {"regions_path": name, "seed": 20240601, "n_sims": FIXTURE_SIMS[stem],
               "insurer": {"theta": 0.3, "eta": 0.0, "capital": FIXTURE_CAPITAL[stem]}}
        p = out / f"config_{stem.removeprefix('regions_')}.json"
        p.write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
        files.append(p)
    regs = sets["regions_212.csv"]
    files.append(write_table(out / "coastal_storm.csv", ["id", "loss"],
                             zip((r.id for r in regs), coastal_event(regs)),
                             meta={"event": "coastal_storm", "regions": "regions_212"}))
    return files


if __name__ == "__main__":
    for p in write_all(Path(sys.argv[1]) if len(sys.argv) > 1 else data_dir()):
        print(p)
