"""Writes a small synthetic ensemble (two families of star-shaped blobs) plus its manifest."""
import logging
import os
import sys
from pathlib import Path

import numpy as np
import orjson
import typer

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'Backend')))

from app.services.ensemble_io import JSON_OPTIONS, write_points

logger = logging.getLogger("make_synthetic")


def blob(rng: np.random.Generator, lobes: int, depth: float, points: int) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * np.pi, points, endpoint=False)
    radius = 1.0 + depth * np.cos(lobes * t + rng.uniform(0, 2 * np.pi))
    radius += 0.04 * rng.standard_normal(3) @ np.cos(np.outer(np.arange(2, 5), t) + rng.uniform(0, 2 * np.pi, (3, 1)))
    scale = rng.uniform(0.5, 2.0)
    angle = rng.uniform(0, 2 * np.pi)
    xy = np.column_stack([radius * np.cos(t), radius * np.sin(t)]) * scale
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    # Random starting point so registration has a seed to find.
    return np.roll(xy @ rot.T, rng.integers(points), axis=0) + rng.uniform(-5, 5, 2)


def main(
    out: Path = typer.Option(Path("synthetic"), "--out"),
    per_group: int = typer.Option(6, "--per-group", min=2),
    points: int = typer.Option(200, "--points", min=8),
    seed: int = typer.Option(0, "--seed"),
):
    rng = np.random.default_rng(seed)
    out.mkdir(parents=True, exist_ok=True)
    shapes = []
    for group, (lobes, depth) in enumerate([(2, 0.35), (3, 0.25)]):
        for i in range(per_group):
            shape_id = f"g{group}_{i:02d}"
            write_points(out / f"{shape_id}.csv", blob(rng, lobes, depth, points))
            shapes.append({
                "id": shape_id,
                "path": f"{shape_id}.csv",
                "covariates": {
                    "group": group,
                    "grade": ["low", "high"][int(rng.random() < 0.3 + 0.4 * group)],
                    "survival": float(np.round(rng.exponential(20.0 + 20.0 * group), 1)),
                },
            })
    (out / "manifest.json").write_bytes(orjson.dumps(shapes, option=JSON_OPTIONS))
    logger.info(f"Wrote {len(shapes)} contours to '{out}'")


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    typer.run(main)
