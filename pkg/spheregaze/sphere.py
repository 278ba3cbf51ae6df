"""
Equirectangular / spherical geometry helpers.

Angles are radians unless a name ends in ``_deg``. Latitudes run from -pi/2
(top row of the image) to +pi/2.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class SphereCoord:
    theta: float  # azimuth, [0, 2pi)
    phi: float  # latitude, [-pi/2, pi/2]

    def __post_init__(self) -> None:
        if not -math.pi / 2 <= self.phi <= math.pi / 2:
            raise ValueError(f"latitude {self.phi} outside [-pi/2, pi/2]")
        if not 0.0 <= self.theta < 2 * math.pi:
            raise ValueError(f"azimuth {self.theta} outside [0, 2pi)")


@dataclass(frozen=True)
class PatchGrid:
    rows: int = 16
    cols: int = 32
    patch_px: int = 16

    @property
    def height(self) -> int:
        return self.rows * self.patch_px

    @property
    def width(self) -> int:
        return self.cols * self.patch_px

    @property
    def n_tokens(self) -> int:
        return self.rows * self.cols


def patch_center_to_sphere(i: int, j: int, grid: PatchGrid, azimuth_full: bool = False) -> SphereCoord:
    """Map patch (row i, column j) to (theta, phi).

    Default: theta = j*pi/cols, phi = (i - rows/2)*pi/rows, which is exactly
    theta = j*pi/32, phi = (i-8)*pi/16 on the 16x32 grid. With
    ``azimuth_full`` the columns span the whole circle: theta = 2*pi*j/cols.
    """
    if not (0 <= i < grid.rows and 0 <= j < grid.cols):
        raise IndexError(f"patch ({i}, {j}) outside {grid.rows}x{grid.cols} grid")
    theta = (2.0 * math.pi * j / grid.cols) if azimuth_full else (j * math.pi / grid.cols)
    phi = (i - grid.rows / 2.0) * math.pi / grid.rows
    return SphereCoord(theta=theta, phi=phi)


def grid_coords(grid: PatchGrid, azimuth_full: bool = False) -> np.ndarray:
    """[(theta, phi)] for every patch, row-major over the grid."""
    return np.array(
        [
            (c.theta, c.phi)
            for c in (
                patch_center_to_sphere(i, j, grid, azimuth_full)
                for i in range(grid.rows)
                for j in range(grid.cols)
            )
        ]
    )


def _normalized_legendre(l_max: int, x: np.ndarray) -> dict:
    """Orthonormal associated Legendre functions, no Condon-Shortley phase.

    Returns {(l, m): array} for 0 <= m <= l <= l_max such that
    P(l, m)(cos t) * sqrt(2) * cos(m*az) is unit-norm on the sphere for m > 0.
    """
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    p = {}
    pmm = np.full_like(x, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(l_max + 1):
        if m > 0:
            pmm = pmm * s * math.sqrt((2.0 * m + 1.0) / (2.0 * m))
        p[(m, m)] = pmm
        if m + 1 <= l_max:
            p[(m + 1, m)] = x * pmm * math.sqrt(2.0 * m + 3.0)
        for l in range(m + 2, l_max + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[(l, m)] = a * (x * p[(l - 1, m)] - b * p[(l - 2, m)])
    return p


def real_sh_matrix(theta: np.ndarray, phi: np.ndarray, l_max: int) -> np.ndarray:
    """Real orthonormal spherical harmonics at many points.

    Output shape is [n_points, (l_max+1)**2], columns ordered (l, m) with m
    running from -l to l. Evaluated at colatitude pi/2 - phi and azimuth theta.
    """
    if l_max < 0:
        raise ValueError(f"l_max must be >= 0, got {l_max}")
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    cos_colat = np.sin(phi)
    p = _normalized_legendre(l_max, cos_colat)
    columns = []
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            if m < 0:
                columns.append(math.sqrt(2.0) * p[(l, -m)] * np.sin(-m * theta))
            elif m == 0:
                columns.append(p[(l, 0)])
            else:
                columns.append(math.sqrt(2.0) * p[(l, m)] * np.cos(m * theta))
    return np.stack(columns, axis=-1)


def real_sh_basis(coord: SphereCoord, l_max: int) -> np.ndarray:
    """Real spherical harmonic vector of length (l_max+1)**2 at one point."""
    return real_sh_matrix(np.array([coord.theta]), np.array([coord.phi]), l_max)[0]


def area_weight(phi: float) -> float:
    """Equirectangular pixel-density factor cos(phi); 1 at the equator, 0 at the poles."""
    if not -math.pi / 2 - 1e-12 <= phi <= math.pi / 2 + 1e-12:
        raise ValueError(f"latitude {phi} outside [-pi/2, pi/2]")
    return max(0.0, math.cos(phi))


def grid_area_weights(grid: PatchGrid) -> np.ndarray:
    """Per-token cos(latitude) weights rescaled to mean 1 over the grid."""
    raw = np.array(
        [area_weight(patch_center_to_sphere(i, 0, grid).phi) for i in range(grid.rows)]
    )
    if raw.mean() <= 0:
        raise ShapeError("grid_area_weights", (grid.rows, grid.cols), detail="all rows at the poles")
    return np.repeat(raw / raw.mean(), grid.cols)


def normalized_to_sphere(x: float, y: float) -> Tuple[float, float]:
    """Normalized image coords to (longitude, latitude), image center at (0, 0)."""
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError(f"normalized point ({x}, {y}) outside [0, 1]^2")
    return 2.0 * math.pi * (x - 0.5), math.pi * (0.5 - y)


def haversine_rad(lon1, lat1, lon2, lat2):
    """Great-circle central angle; works on floats and numpy arrays."""
    a = np.sin((lat2 - lat1) / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    a = np.clip(a, 0.0, 1.0)
    return 2.0 * np.arctan2(np.sqrt(a), np.sqrt(1.0 - a))


def angular_error_deg(p: Tuple[float, float], q: Tuple[float, float]) -> float:
    """Great-circle distance in degrees between two normalized gaze points."""
    lon1, lat1 = normalized_to_sphere(*p)
    lon2, lat2 = normalized_to_sphere(*q)
    return float(np.degrees(haversine_rad(lon1, lat1, lon2, lat2)))


def angular_errors_deg(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Vectorised angular_error_deg over [N x 2] arrays."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ShapeError("angular_errors_deg", pred.shape, gt.shape)
    if (pred < 0).any() or (pred > 1).any() or (gt < 0).any() or (gt > 1).any():
        raise ValueError("normalized points must lie in [0, 1]^2")
    lon_p, lat_p = 2.0 * np.pi * (pred[:, 0] - 0.5), np.pi * (0.5 - pred[:, 1])
    lon_g, lat_g = 2.0 * np.pi * (gt[:, 0] - 0.5), np.pi * (0.5 - gt[:, 1])
    return np.degrees(haversine_rad(lon_p, lat_p, lon_g, lat_g))
