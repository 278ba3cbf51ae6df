"""
Synthetic scenes and scanpaths with learnable spatial and temporal structure.

Scenes are dark frames with bright Gaussian blobs. Scanpaths fixate a blob for
a few samples, then saccade to the nearest blob not yet visited. The momentum
variant ignores the blobs and keeps the previous saccade direction instead.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data import Dataset, GazePoint, ScanpathRecord, SceneImage
from .errors import ConfigError
from .seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

BACKGROUND = 0.05
FIXATION_JITTER = 0.01
DECIMALS = 6


def _q(value: float) -> float:
    return round(float(value), DECIMALS)


def blob_centers(seed: int, n_blobs: int) -> np.ndarray:
    """[n_blobs x 2] normalized (x, y) centres; blob k is the same for any n_blobs > k."""
    rng = make_rng(seed, "scene.blobs")
    centers = np.empty((n_blobs, 2))
    for k in range(n_blobs):
        centers[k] = rng.uniform(0.1, 0.9), rng.uniform(0.2, 0.8)
    return centers


def render_blobs(w: int, h: int, centers: np.ndarray, colors: np.ndarray) -> SceneImage:
    """Sum of isotropic Gaussians (sigma = h/16 px) over a dark background, 8-bit quantised."""
    sigma = h / 16.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    image = np.full((h, w, 3), BACKGROUND)
    for (cx, cy), color in zip(centers, colors):
        dx = np.abs(xs - cx * w)
        dx = np.minimum(dx, w - dx)  # longitude wraps
        dy = ys - cy * h
        bump = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
        image += bump[..., None] * color[None, None, :]
    rgb = np.clip(np.rint(np.clip(image, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    return SceneImage.from_bytes8(rgb)


def generate_scene(
    seed: int, w: int = 512, h: int = 256, n_blobs: int = 4, centers: Optional[np.ndarray] = None
) -> Tuple[SceneImage, np.ndarray]:
    """Deterministic blob scene and its blob centres (normalized coordinates)."""
    if n_blobs < 1:
        raise ConfigError(f"n_blobs must be >= 1, got {n_blobs}")
    if w != 2 * h:
        raise ConfigError(f"scene must be 2:1, got {w}x{h}")
    if centers is None:
        centers = blob_centers(seed, n_blobs)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    color_rng = make_rng(seed, "scene.colors")
    colors = np.stack([color_rng.uniform(0.6, 1.0, size=3) for _ in range(len(centers))])
    return render_blobs(w, h, centers, colors), centers


def _nearest_unvisited(centers: np.ndarray, current: int, visited: set) -> int:
    candidates = [k for k in range(len(centers)) if k not in visited]
    if not candidates:
        visited.clear()
        visited.add(current)
        candidates = [k for k in range(len(centers)) if k != current]
    if not candidates:
        return current
    dist = [float(np.linalg.norm(centers[k] - centers[current])) for k in candidates]
    return candidates[int(np.argmin(dist))]


def _momentum_step(position: np.ndarray, velocity: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x, y = position + velocity
    vx, vy = velocity
    if y < 0.05 or y > 0.95:
        vy = -vy
        y = min(max(y, 0.05), 0.95)
    return np.array([x % 1.0, y]), np.array([vx, vy])


def generate_scanpath(
    centers: np.ndarray,
    seed: int,
    length: int,
    scene_id: str = "scene",
    momentum: bool = False,
) -> ScanpathRecord:
    """Fixation/saccade gaze record of exactly ``length`` points."""
    if length < 11:
        raise ConfigError(f"scanpath length must be >= 11, got {length}")
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    rng = make_rng(seed, "scanpath")
    current = int(rng.integers(len(centers)))
    visited = {current}
    anchor = centers[current].copy()
    angle = rng.uniform(0.0, 2.0 * np.pi)
    velocity = rng.uniform(0.08, 0.15) * np.array([np.cos(angle), np.sin(angle)])

    points: List[GazePoint] = []
    t = _q(rng.uniform(0.0, 100.0))
    while len(points) < length:
        for _ in range(int(rng.integers(3, 7))):
            x = float(np.clip(anchor[0] + rng.normal(0.0, FIXATION_JITTER), 0.0, 1.0))
            y = float(np.clip(anchor[1] + rng.normal(0.0, FIXATION_JITTER), 0.0, 1.0))
            conf = float(np.clip(0.9 + 0.05 * rng.normal(), 0.0, 1.0))
            points.append(GazePoint(t_ms=t, x=_q(x), y=_q(y), confidence=_q(conf)))
            t = _q(t + rng.uniform(200.0, 400.0))
            if len(points) == length:
                break
        if momentum:
            anchor, velocity = _momentum_step(anchor, velocity)
        else:
            current = _nearest_unvisited(centers, current, visited)
            visited.add(current)
            anchor = centers[current].copy()
    return ScanpathRecord(scene_id, points)


def generate_dataset(
    n_scenes: int,
    seed: int,
    w: int = 512,
    h: int = 256,
    n_blobs: int = 4,
    length: int = 40,
    momentum: bool = False,
) -> Dataset:
    """``n_scenes`` scenes with one scanpath each, ids ``scene_000``, ``scene_001``, ..."""
    if n_scenes < 0:
        raise ConfigError(f"n_scenes must be >= 0, got {n_scenes}")
    dataset = Dataset()
    width = max(3, len(str(max(n_scenes - 1, 0))))
    for k in range(n_scenes):
        sid = f"scene_{k:0{width}d}"
        image, centers = generate_scene(derive_seed(seed, "scene", k), w, h, n_blobs)
        dataset.scenes[sid] = image
        dataset.records.append(
            generate_scanpath(centers, derive_seed(seed, "scanpath", k), length, sid, momentum)
        )
    logger.info("Generated %d synthetic scenes (seed=%d, momentum=%s)", n_scenes, seed, momentum)
    return dataset


def gaze_density(points: Sequence[GazePoint], rows: int, cols: int) -> np.ndarray:
    """Histogram of gaze points over a rows x cols grid, normalized to sum 1."""
    grid = np.zeros((rows, cols))
    for p in points:
        r = min(int(p.y * rows), rows - 1)
        c = min(int(p.x * cols), cols - 1)
        grid[r, c] += 1.0
    total = grid.sum()
    return grid / total if total else grid


def luminance_map(image: SceneImage, rows: int, cols: int) -> np.ndarray:
    """Mean luminance per cell of a rows x cols grid."""
    lum = image.pixels.mean(axis=2)
    h, w = lum.shape
    return lum[: h - h % rows, : w - w % cols].reshape(rows, h // rows, cols, w // cols).mean(axis=(1, 3))
