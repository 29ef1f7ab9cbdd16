"""Orthographic multiview depth rendering of facial point clouds.

A frame's points are rotated about the vertical (y) axis by the view's yaw,
orthographically projected onto the pixel grid, z-buffered (largest rotated z
per pixel wins, i.e. nearest to the viewer), and the kept depths are min-max
normalized into (0, 1]. Background pixels are exactly 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import InvalidInputError

VIEW_NAMES = ("frontal", "left", "right")
DEPTH_EPS = 1.0 / 255.0  # occupied-pixel floor; survives 8-bit PNG export


@dataclass(frozen=True)
class ViewAngle:
    name: str
    yaw_degrees: float

    def __post_init__(self):
        if self.name not in VIEW_NAMES:
            raise InvalidInputError(f"view name {self.name!r} not in {VIEW_NAMES}")
        if self.name == "frontal" and self.yaw_degrees != 0.0:
            raise InvalidInputError("frontal view must have yaw exactly 0")


def view_triple(off_axis_degrees: float = 30.0) -> tuple[ViewAngle, ViewAngle, ViewAngle]:
    """(frontal, left, right) with left/right yaws at +-off_axis_degrees."""
    return (
        ViewAngle("frontal", 0.0),
        ViewAngle("left", -abs(off_axis_degrees)),
        ViewAngle("right", abs(off_axis_degrees)),
    )


@dataclass
class ViewImage:
    view: ViewAngle
    pixels: np.ndarray  # (H, W) float64 in [0, 1]
    kind: str = "depth"

    def __post_init__(self):
        if self.kind not in ("depth", "dynamic"):
            raise InvalidInputError(f"kind {self.kind!r} not in ('depth', 'dynamic')")
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:
            raise InvalidInputError(f"pixels must be 2-D, got shape {self.pixels.shape}")

    @property
    def resolution(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass
class MultiviewSample:
    frontal: ViewImage
    left: ViewImage
    right: ViewImage

    @property
    def images(self) -> tuple[ViewImage, ViewImage, ViewImage]:
        return (self.frontal, self.left, self.right)


def project(points: np.ndarray, view: ViewAngle, resolution: tuple[int, int] = (64, 64)) -> ViewImage:
    """Depth image of one frame under one view.

    points: (P, 3) array, coordinates in [-1, 1]^3. resolution: (H, W), both >= 8.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise InvalidInputError(f"points must be a nonempty (P, 3) array, got shape {points.shape}")
    H, W = resolution
    if H < 8 or W < 8:
        raise InvalidInputError(f"resolution must be at least 8x8, got {resolution}")

    theta = np.deg2rad(view.yaw_degrees)
    c, s = np.cos(theta), np.sin(theta)
    x = points[:, 0] * c + points[:, 2] * s
    y = points[:, 1]
    z = -points[:, 0] * s + points[:, 2] * c

    cols = np.floor((x + 1.0) * 0.5 * W).astype(np.int64)
    rows = np.floor((1.0 - y) * 0.5 * H).astype(np.int64)
    # points that land exactly on the +1 edge belong to the last cell
    cols = np.where(x == 1.0, W - 1, cols)
    rows = np.where(y == -1.0, H - 1, rows)
    keep = (cols >= 0) & (cols < W) & (rows >= 0) & (rows < H)

    zbuf = np.full((H, W), -np.inf)
    np.maximum.at(zbuf, (rows[keep], cols[keep]), z[keep])

    occupied = np.isfinite(zbuf)
    pixels = np.zeros((H, W))
    if occupied.any():
        zo = zbuf[occupied]
        zmin, zmax = zo.min(), zo.max()
        if zmax > zmin:
            pixels[occupied] = DEPTH_EPS + (1.0 - DEPTH_EPS) * (zo - zmin) / (zmax - zmin)
        else:
            pixels[occupied] = 1.0
    return ViewImage(view=view, pixels=pixels, kind="depth")


def render_multiview(seq, frame_index: int, resolution: tuple[int, int] = (64, 64),
                     off_axis_degrees: float = 30.0) -> MultiviewSample:
    """Render one frame of a FaceSequence from all three views."""
    if not (0 <= frame_index < seq.n_frames):
        raise InvalidInputError(f"frame_index {frame_index} out of range [0, {seq.n_frames})")
    frame = seq.frames[frame_index]
    frontal, left, right = view_triple(off_axis_degrees)
    return MultiviewSample(
        frontal=project(frame, frontal, resolution),
        left=project(frame, left, resolution),
        right=project(frame, right, resolution),
    )


def to_png(img: ViewImage, path: str) -> None:
    """8-bit grayscale export, value = round(255 * pixel)."""
    arr = np.round(255.0 * img.pixels).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def from_png(path: str, view: ViewAngle | None = None, kind: str = "depth") -> ViewImage:
    arr = np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0
    return ViewImage(view=view or ViewAngle("frontal", 0.0), pixels=arr, kind=kind)
