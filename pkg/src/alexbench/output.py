"""Figure-style artifacts: attribution heatmaps (binary PPM) and accuracy curves (CSV)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .explain import PatchGrid
from .harness import RunReport, RunRecord
from .strategies import STRATEGIES

UPSCALE = 8
OVERLAY_ALPHA = 0.6


def render_heatmap(
    x: np.ndarray,
    e: np.ndarray,
    grid: PatchGrid,
    path: str | Path,
    upscale: int = UPSCALE,
    alpha: float = OVERLAY_ALPHA,
) -> Path:
    """Write a diverging red/blue attribution overlay as a binary PPM (P6).

    Positive attributions shade toward red, negative toward blue, zero stays
    neutral gray; the overlay is alpha-blended over the grayscale image.
    Attribution scale is normalized per image by max |e|.
    """
    x = np.asarray(x, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if not np.all(np.isfinite(e)):
        raise ValueError("attributions must be finite")
    if e.shape != (grid.n_patches,):
        raise ValueError(f"expected {grid.n_patches} attributions, got {e.shape}")

    peak = np.max(np.abs(e))
    a = e / peak if peak > 0 else np.zeros_like(e)

    # patch-level signal -> pixel grid -> upscaled raster
    a_pixels = grid.expand_masks(a).reshape(grid.image_shape)
    a_big = np.repeat(np.repeat(a_pixels, upscale, axis=0), upscale, axis=1)
    base = np.clip(x, 0.0, 1.0).reshape(grid.image_shape) * 255.0
    base_big = np.repeat(np.repeat(base, upscale, axis=0), upscale, axis=1)

    overlay = np.empty(a_big.shape + (3,))
    overlay[..., 0] = 128.0 + 127.0 * a_big
    overlay[..., 1] = 128.0 - 64.0 * np.abs(a_big)
    overlay[..., 2] = 128.0 - 127.0 * a_big

    blended = alpha * overlay + (1.0 - alpha) * base_big[..., None]
    raster = np.clip(np.rint(blended), 0, 255).astype(np.uint8)

    height, width = raster.shape[:2]
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())
    return path


def read_ppm(path: str | Path) -> np.ndarray:
    """Read back a P6 file written by render_heatmap; (h, w, 3) uint8."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a P6 file")
    width, height = (int(v) for v in parts[1].split())
    if parts[2] != b"255":
        raise ValueError("unsupported max value")
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    return pixels.reshape(height, width, 3)


def export_curves(report: RunReport, path: str | Path) -> Path:
    """Accuracy-vs-iteration rows plus per-iteration mean rows, plain CSV."""
    if not report.records:
        raise ValueError("empty report")
    lines = ["strategy,repetition,iteration,labeled_count,test_accuracy"]
    records = report.sorted_records()
    for r in records:
        lines.append(
            f"{r.strategy},{r.repetition},{r.iteration},{r.labeled_count},{r.test_accuracy!r}"
        )
    order = {name: i for i, name in enumerate(STRATEGIES)}
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.strategy, r.iteration), []).append(r)
    for (strategy, iteration) in sorted(groups, key=lambda g: (order[g[0]], g[1])):
        members = groups[(strategy, iteration)]
        mean_acc = float(np.mean([m.test_accuracy for m in members]))
        lines.append(
            f"{strategy},mean,{iteration},{members[0].labeled_count},{mean_acc!r}"
        )
    path = Path(path)
    path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    return path
