"""
Dataset types and on-disk format.

Layout::

    <root>/scenes/<id>.ppm   binary P6, maxval 255, width == 2 * height
    <root>/gaze/<id>.csv     header "t_ms,x,y,conf", one sample per row
"""

import csv
import io
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError
from .seeding import make_rng

logger = logging.getLogger(__name__)

CSV_HEADER = ["t_ms", "x", "y", "conf"]
WINDOW = 10


def atomic_write_bytes(path: Union[str, Path], payload: bytes) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class GazePoint:
    """One gaze sample in normalized image coordinates."""

    t_ms: float
    x: float
    y: float
    confidence: float = 1.0

    def __post_init__(self) -> None:
        for name, value in (("x", self.x), ("y", self.y), ("confidence", self.confidence)):
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name}={value} outside [0, 1]")
        if not self.t_ms >= 0.0:
            raise DataError(f"t_ms={self.t_ms} must be non-negative")


@dataclass
class SceneImage:
    """RGB equirectangular frame, pixels as [height, width, 3] floats in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise DataError(f"scene pixels must be [h, w, 3], got {self.pixels.shape}")
        if self.width != 2 * self.height:
            raise DataError(f"scene must be 2:1 equirectangular, got {self.width}x{self.height}")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @classmethod
    def from_bytes8(cls, rgb: np.ndarray) -> "SceneImage":
        return cls(np.asarray(rgb, dtype=np.float64) / 255.0)

    def to_bytes8(self) -> np.ndarray:
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)


@dataclass
class ScanpathRecord:
    scene_id: str
    points: List[GazePoint] = field(default_factory=list)

    def validate(self, min_points: int = WINDOW + 1) -> None:
        if len(self.points) < min_points:
            raise DataError(
                f"scanpath for scene '{self.scene_id}' has {len(self.points)} points, needs at least {min_points}"
            )
        check_increasing(self.points, f"scanpath '{self.scene_id}'")


@dataclass(frozen=True)
class Sample:
    """A gaze window and the point that follows it."""

    scene_id: str
    window: Tuple[GazePoint, ...]
    target: GazePoint


@dataclass
class Dataset:
    scenes: Dict[str, SceneImage] = field(default_factory=dict)
    records: List[ScanpathRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def samples(self, scene_ids: Optional[Sequence[str]] = None, window: int = WINDOW) -> List[Sample]:
        wanted = None if scene_ids is None else set(scene_ids)
        out: List[Sample] = []
        for record in self.records:
            if wanted is None or record.scene_id in wanted:
                out.extend(make_samples(record, window))
        return out


def check_increasing(points: Sequence[GazePoint], where: str) -> None:
    for k in range(1, len(points)):
        if not points[k].t_ms > points[k - 1].t_ms:
            raise DataError(
                f"{where}: timestamps must be strictly increasing "
                f"(point {k} has t_ms={points[k].t_ms} after {points[k - 1].t_ms})"
            )


def make_samples(record: ScanpathRecord, window: int = WINDOW) -> List[Sample]:
    """Sliding windows of ``window`` points (stride 1), each paired with the next point."""
    record.validate(window + 1)
    pts = record.points
    return [
        Sample(record.scene_id, tuple(pts[k : k + window]), pts[k + window])
        for k in range(len(pts) - window)
    ]


# PPM


def read_ppm(path: Union[str, Path]) -> SceneImage:
    path = Path(path)
    raw = path.read_bytes()
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PPM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P6":
        raise DataError(f"{path}: not a binary PPM (magic {tokens[0]!r}, expected b'P6')")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DataError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise DataError(f"{path}: maxval {maxval} unsupported, expected 255")
    expected = width * height * 3
    body = raw[pos : pos + expected]
    if len(body) != expected:
        raise DataError(f"{path}: pixel data truncated ({len(body)} of {expected} bytes)")
    rgb = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    try:
        return SceneImage.from_bytes8(rgb)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def encode_ppm(image: SceneImage) -> bytes:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.to_bytes8().tobytes()


def write_ppm(path: Union[str, Path], image: SceneImage) -> None:
    atomic_write_bytes(path, encode_ppm(image))


# gaze CSV


def read_gaze_csv(path: Union[str, Path]) -> List[GazePoint]:
    """Parse ``t_ms,x,y,conf`` rows; the header line is optional."""
    path = Path(path)
    points: List[GazePoint] = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not a UTF-8 text file ({exc.reason} at byte {exc.start})") from exc
    for line_no, row in enumerate(rows, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if line_no == 1 and [c.strip() for c in row] == CSV_HEADER:
            continue
        if len(row) != 4:
            raise DataError(f"{path}:{line_no}: expected 4 fields (t_ms,x,y,conf), got {len(row)}")
        try:
            t_ms, x, y, conf = (float(c) for c in row)
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: non-numeric field ({exc})") from exc
        try:
            points.append(GazePoint(t_ms=t_ms, x=x, y=y, confidence=conf))
        except DataError as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
    return points


def format_gaze_csv(points: Sequence[GazePoint]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for p in points:
        buf.write(f"{p.t_ms:.6f},{p.x:.6f},{p.y:.6f},{p.confidence:.6f}\n")
    return buf.getvalue()


def write_gaze_csv(path: Union[str, Path], points: Sequence[GazePoint]) -> None:
    atomic_write_text(path, format_gaze_csv(points))


# dataset directory


def load_dataset(root: Union[str, Path], patch_px: Optional[int] = None) -> Dataset:
    """Read every scene/gaze pair under ``root``; an empty root is an empty dataset."""
    root = Path(root)
    if not root.exists():
        raise DataError(f"dataset root {root} does not exist")
    scene_files = {p.stem: p for p in sorted((root / "scenes").glob("*.ppm"))}
    gaze_files = {p.stem: p for p in sorted((root / "gaze").glob("*.csv"))}
    unpaired = sorted(set(scene_files) ^ set(gaze_files))
    if unpaired:
        sid = unpaired[0]
        missing = "gaze CSV" if sid in scene_files else "scene PPM"
        raise DataError(f"scene '{sid}' has no matching {missing} under {root}")

    dataset = Dataset()
    for sid in sorted(scene_files):
        image = read_ppm(scene_files[sid])
        if patch_px and (image.height % patch_px or image.width % patch_px):
            raise DataError(
                f"{scene_files[sid]}: {image.width}x{image.height} not divisible by patch size {patch_px}"
            )
        record = ScanpathRecord(sid, read_gaze_csv(gaze_files[sid]))
        try:
            record.validate()
        except DataError as exc:
            raise DataError(f"{gaze_files[sid]}: {exc}") from exc
        dataset.scenes[sid] = image
        dataset.records.append(record)
    logger.info("Loaded %d scenes from %s", len(dataset.scenes), root)
    return dataset


def save_dataset(root: Union[str, Path], dataset: Dataset) -> None:
    root = Path(root)
    (root / "scenes").mkdir(parents=True, exist_ok=True)
    (root / "gaze").mkdir(parents=True, exist_ok=True)
    for sid in sorted(dataset.scenes):
        write_ppm(root / "scenes" / f"{sid}.ppm", dataset.scenes[sid])
    for record in dataset.records:
        write_gaze_csv(root / "gaze" / f"{record.scene_id}.csv", record.points)
    logger.info("Wrote %d scenes to %s", len(dataset.scenes), root)


def split_by_scene(
    scene_ids: Sequence[str], fractions: Sequence[float], seed: int
) -> Tuple[List[str], List[str], List[str]]:
    """Seeded train/val/test partition of scene ids."""
    ids = sorted(set(scene_ids))
    order = make_rng(seed, "split").permutation(len(ids))
    shuffled = [ids[k] for k in order]
    n = len(ids)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n_train + n_val > n:
        n_val = n - n_train
    if fractions[2] > 0 and n_train + n_val == n and n >= 2:
        if n_val > 0:
            n_val -= 1
        else:
            n_train -= 1
    train = shuffled[:n_train]
    val = shuffled[n_train : n_train + n_val]
    test = shuffled[n_train + n_val :]
    return train, val, test
