"""Volume transforms used to synthesize near-duplicate queries.

Six families, each with a strength parameter:

============  =========================  ==========================
kind          strength meaning           default ladder
============  =========================  ==========================
crop          total border fraction      0.05, 0.10, 0.15, 0.20
rotate        degrees counterclockwise   5, 10, 15, 20
translate     shift fraction (+x, +y)    0.05, 0.10, 0.15, 0.20
blur          Gaussian sigma             1, 2, 4, 8
jpeg          codec quality              100, 75, 50, 25
noise         Gaussian std (on [0,1])    0.1, 0.2, 0.4, 0.8
============  =========================  ==========================

Ladders are ordered lowest distortion first (for JPEG that is the
highest quality). Geometry acts per axial slice except crop, which also
trims z. Zero-strength crop/rotate/translate/blur/noise are bit-exact
identities. All transforms are pure: noise draws from a generator
seeded by the spec, so a (volume, spec) pair always yields the same
output.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .core import Volume
from .errors import CodecError, DegenerateOutput

__all__ = [
    "TransformKind",
    "TransformSpec",
    "DEFAULT_GRID",
    "default_grid",
    "lowest_distortion",
    "crop_border",
    "rotate_xy",
    "translate_xy",
    "gaussian_blur",
    "jpeg_roundtrip",
    "add_gaussian_noise",
    "apply",
]


class TransformKind(enum.Enum):
    CROP = "crop"
    ROTATE = "rotate"
    TRANSLATE = "translate"
    BLUR = "blur"
    JPEG = "jpeg"
    NOISE = "noise"


@dataclass(frozen=True)
class TransformSpec:
    """One concrete transform: a kind, a strength, and (for noise) a seed."""

    kind: TransformKind
    strength: float
    seed: int = 0

    def __post_init__(self):
        s = self.strength
        if self.kind is TransformKind.CROP and not 0.0 <= s < 0.5:
            raise ValueError(f"crop fraction must be in [0, 0.5), got {s}")
        if self.kind is TransformKind.TRANSLATE and not 0.0 <= s < 1.0:
            raise ValueError(f"translate fraction must be in [0, 1), got {s}")
        if self.kind is TransformKind.BLUR and s < 0.0:
            raise ValueError(f"blur sigma must be >= 0, got {s}")
        if self.kind is TransformKind.JPEG and not 0.0 < s <= 100.0:
            raise ValueError(f"jpeg quality must be in (0, 100], got {s}")
        if self.kind is TransformKind.NOISE and s < 0.0:
            raise ValueError(f"noise std must be >= 0, got {s}")

    @property
    def tag(self) -> str:
        return f"{self.kind.value}:{self.strength:g}"

    @classmethod
    def from_tag(cls, tag: str, seed: int = 0) -> "TransformSpec":
        kind_s, _, strength_s = tag.partition(":")
        try:
            return cls(TransformKind(kind_s), float(strength_s), seed)
        except ValueError as exc:
            raise ValueError(f"bad transform tag {tag!r}: {exc}") from None


# Strength ladders, lowest distortion first.
_LADDERS: dict[TransformKind, tuple[float, ...]] = {
    TransformKind.CROP: (0.05, 0.10, 0.15, 0.20),
    TransformKind.ROTATE: (5.0, 10.0, 15.0, 20.0),
    TransformKind.TRANSLATE: (0.05, 0.10, 0.15, 0.20),
    TransformKind.BLUR: (1.0, 2.0, 4.0, 8.0),
    TransformKind.JPEG: (100.0, 75.0, 50.0, 25.0),
    TransformKind.NOISE: (0.1, 0.2, 0.4, 0.8),
}


def default_grid(seed: int = 0) -> tuple[TransformSpec, ...]:
    """The full 6-family x 4-strength grid, lowest distortion first per family."""
    return tuple(
        TransformSpec(kind, strength, seed)
        for kind in TransformKind
        for strength in _LADDERS[kind]
    )


DEFAULT_GRID = default_grid()


def lowest_distortion(specs: list[TransformSpec]) -> dict[TransformKind, TransformSpec]:
    """Pick the least distorting spec per family (max quality for JPEG, min otherwise)."""
    best: dict[TransformKind, TransformSpec] = {}
    for spec in specs:
        cur = best.get(spec.kind)
        if cur is None:
            best[spec.kind] = spec
            continue
        if spec.kind is TransformKind.JPEG:
            if spec.strength > cur.strength:
                best[spec.kind] = spec
        elif spec.strength < cur.strength:
            best[spec.kind] = spec
    return best


def crop_border(volume: Volume, fraction: float) -> Volume:
    """Trim floor(fraction/2 * extent) voxels from both ends of z, y, and x."""
    if not 0.0 <= fraction < 0.5:
        raise ValueError(f"crop fraction must be in [0, 0.5), got {fraction}")
    cuts = [int(math.floor(fraction / 2.0 * extent)) for extent in volume.shape]
    if any(extent - 2 * cut < 1 for extent, cut in zip(volume.shape, cuts)):
        raise DegenerateOutput(f"crop {fraction} empties a volume of shape {volume.shape}")
    cz, cy, cx = cuts
    nz, ny, nx = volume.shape
    voxels = volume.voxels[cz : nz - cz, cy : ny - cy, cx : nx - cx]
    return Volume(volume.case_id, voxels, volume.transform_tag)


def _bilinear_gather(a: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample a 2D array at fractional coordinates; outside the grid reads 0."""
    h, w = a.shape
    # tolerate rounding dust at the boundary so exact-angle rotations
    # keep their edge samples instead of reading the fill value
    eps = 1e-9
    inside = (ys >= -eps) & (ys <= h - 1 + eps) & (xs >= -eps) & (xs <= w - 1 + eps)
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = ys - y0
    wx = xs - x0
    out = (
        a[y0, x0] * (1 - wy) * (1 - wx)
        + a[y0, x1] * (1 - wy) * wx
        + a[y1, x0] * wy * (1 - wx)
        + a[y1, x1] * wy * wx
    )
    return np.where(inside, out, 0.0)


def rotate_xy(volume: Volume, degrees: float) -> Volume:
    """Rotate each axial slice counterclockwise about its center.

    Bilinear interpolation; samples falling outside the source grid
    become 0. Shape is unchanged.
    """
    if degrees == 0.0:
        return Volume(volume.case_id, volume.voxels.copy(), volume.transform_tag)
    _, ny, nx = volume.shape
    cy = (ny - 1) / 2.0
    cx = (nx - 1) / 2.0
    theta = math.radians(degrees)
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    yy, xx = np.meshgrid(np.arange(ny) - cy, np.arange(nx) - cx, indexing="ij")
    # inverse map: rotate output coordinates by -theta to find the source
    # (x right, y up in slice coordinates, so the row axis negates)
    src_x = cos_t * xx - sin_t * yy + cx
    src_y = sin_t * xx + cos_t * yy + cy
    out = np.stack([_bilinear_gather(s, src_y, src_x) for s in volume.voxels])
    return Volume(volume.case_id, out, volume.transform_tag)


def translate_xy(volume: Volume, fraction: float) -> Volume:
    """Shift each slice by round(fraction * extent) voxels in +x and +y, filling 0."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"translate fraction must be in [0, 1), got {fraction}")
    _, ny, nx = volume.shape
    # round half away from zero, so a half-voxel shift does move
    dy = int(math.floor(fraction * ny + 0.5))
    dx = int(math.floor(fraction * nx + 0.5))
    out = np.zeros_like(volume.voxels)
    if dy < ny and dx < nx:
        out[:, dy:, dx:] = volume.voxels[:, : ny - dy, : nx - dx]
    return Volume(volume.case_id, out, volume.transform_tag)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _convolve_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(a, pad, mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, len(kernel), axis=axis)
    return windows @ kernel


def gaussian_blur(volume: Volume, sigma: float) -> Volume:
    """Per-slice 2D Gaussian blur: radius ceil(3*sigma), reflect padding."""
    if sigma < 0.0:
        raise ValueError(f"blur sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return Volume(volume.case_id, volume.voxels.copy(), volume.transform_tag)
    kernel = _gaussian_kernel(sigma)
    out = np.stack(
        [_convolve_axis(_convolve_axis(s, kernel, 0), kernel, 1) for s in volume.voxels]
    )
    return Volume(volume.case_id, out, volume.transform_tag)


def jpeg_roundtrip(volume: Volume, quality: float) -> Volume:
    """Min-max scale the volume, push each slice through an 8-bit JPEG codec.

    Output intensities live in [0, 1] (the scaled domain): each slice is
    quantized with round(v * 255), encoded at the given quality, decoded,
    and divided by 255. Shape is unchanged.
    """
    if not 0.0 < quality <= 100.0:
        raise ValueError(f"jpeg quality must be in (0, 100], got {quality}")
    vox = volume.voxels
    lo = vox.min()
    hi = vox.max()
    scaled = np.zeros_like(vox) if hi == lo else (vox - lo) / (hi - lo)
    out = np.empty_like(scaled)
    for i, s in enumerate(scaled):
        u8 = np.floor(s * 255.0 + 0.5).astype(np.uint8)
        try:
            buf = io.BytesIO()
            Image.fromarray(u8, mode="L").save(buf, format="JPEG", quality=int(quality))
            buf.seek(0)
            decoded = np.asarray(Image.open(buf), dtype=np.float64)
        except Exception as exc:
            raise CodecError(f"jpeg round-trip failed on slice {i}: {exc}") from exc
        out[i] = decoded / 255.0
    return Volume(volume.case_id, out, volume.transform_tag)


def add_gaussian_noise(volume: Volume, std: float, seed: int = 0) -> Volume:
    """Add i.i.d. N(0, std^2) per voxel from a seeded generator; no clipping."""
    if std < 0.0:
        raise ValueError(f"noise std must be >= 0, got {std}")
    if std == 0.0:
        return Volume(volume.case_id, volume.voxels.copy(), volume.transform_tag)
    rng = np.random.default_rng(seed)
    noisy = volume.voxels + rng.normal(0.0, std, size=volume.shape)
    return Volume(volume.case_id, noisy, volume.transform_tag)


def apply(spec: TransformSpec, volume: Volume) -> Volume:
    """Dispatch to the transform for ``spec.kind``; tags the output volume."""
    if spec.kind is TransformKind.CROP:
        out = crop_border(volume, spec.strength)
    elif spec.kind is TransformKind.ROTATE:
        out = rotate_xy(volume, spec.strength)
    elif spec.kind is TransformKind.TRANSLATE:
        out = translate_xy(volume, spec.strength)
    elif spec.kind is TransformKind.BLUR:
        out = gaussian_blur(volume, spec.strength)
    elif spec.kind is TransformKind.JPEG:
        out = jpeg_roundtrip(volume, spec.strength)
    elif spec.kind is TransformKind.NOISE:
        out = add_gaussian_noise(volume, spec.strength, spec.seed)
    else:  # pragma: no cover - exhaustive over TransformKind
        raise ValueError(f"unknown transform kind {spec.kind!r}")
    return Volume(out.case_id, out.voxels, spec.tag)
