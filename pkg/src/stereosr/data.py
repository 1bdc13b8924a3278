"""Stereo training data: degradation, patching, augmentation, synthesis.

Frames and patches are numpy float arrays in [0, 1], shaped [C, H, W].
A :class:`StereoSample` bundles the low-resolution pair with its
high-resolution ground truth; the trainer stacks samples into autodiff
tensors at the batch boundary.

The synthetic generator stands in for real capture. It renders a textured
high-resolution left frame, derives the right frame by resampling along a
smooth horizontal disparity field, and keeps that field as ground truth so
tests can score recovered correspondences against it.

Disparity convention: a left pixel (y, x) corresponds to right pixel
(y, x - d) with d >= 0, i.e. right[y, x] = left[y, x + d].
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .imageio import load_image, save_disparity, save_image


# ----------------------------------------------------------------------
# sample container
# ----------------------------------------------------------------------
@dataclass
class StereoSample:
    """LR stereo pair plus HR ground truth, HR extents = scale * LR extents."""

    lr_left: np.ndarray
    lr_right: np.ndarray
    hr_left: np.ndarray
    hr_right: np.ndarray
    scale: int


def validate_sample(sample: StereoSample) -> None:
    """Raise ValueError on any violated StereoSample invariant."""
    if sample.scale not in (2, 4):
        raise ValueError(f"scale must be 2 or 4, got {sample.scale}")
    if sample.lr_left.shape != sample.lr_right.shape:
        raise ValueError(
            f"LR eyes differ in shape: {sample.lr_left.shape} vs {sample.lr_right.shape}"
        )
    if sample.hr_left.shape != sample.hr_right.shape:
        raise ValueError(
            f"HR eyes differ in shape: {sample.hr_left.shape} vs {sample.hr_right.shape}"
        )
    c, h, w = sample.lr_left.shape
    expected_hr = (c, h * sample.scale, w * sample.scale)
    if sample.hr_left.shape != expected_hr:
        raise ValueError(
            f"HR shape {sample.hr_left.shape} is not scale*{(h, w)} = {expected_hr}"
        )
    for name in ("lr_left", "lr_right", "hr_left", "hr_right"):
        arr = getattr(sample, name)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
        if arr.min() < -1e-6 or arr.max() > 1.0 + 1e-6:
            raise ValueError(f"{name} values fall outside [0, 1]")


# ----------------------------------------------------------------------
# bicubic resampling (Keys kernel, a = -0.5)
# ----------------------------------------------------------------------
def _keys_kernel(x: float) -> float:
    ax = abs(x)
    if ax <= 1.0:
        return (1.5 * ax - 2.5) * ax * ax + 1.0
    if ax < 2.0:
        return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0
    return 0.0


_weight_cache: dict = {}


def _bicubic_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic resampling matrix, edge-clamped taps."""
    key = (n_in, n_out)
    cached = _weight_cache.get(key)
    if cached is not None:
        return cached
    scale = n_in / n_out
    A = np.zeros((n_out, n_in), dtype=np.float64)
    for o in range(n_out):
        src = (o + 0.5) * scale - 0.5
        j0 = int(np.floor(src))
        t = src - j0
        for k in range(-1, 3):
            idx = min(max(j0 + k, 0), n_in - 1)
            A[o, idx] += _keys_kernel(k - t)
    _weight_cache[key] = A
    return A


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bicubic resampling of a [C,H,W] image to [C,out_h,out_w]."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target extents must be positive, got {out_h}x{out_w}")
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"bicubic_resize expects [C,H,W], got shape {img.shape}")
    _, h, w = img.shape
    A_h = _bicubic_weights(h, out_h).astype(img.dtype)
    A_w = _bicubic_weights(w, out_w).astype(img.dtype)
    rows = np.tensordot(A_h, img, axes=(1, 1)).transpose(1, 0, 2)  # [C,out_h,W]
    return np.ascontiguousarray(np.tensordot(rows, A_w, axes=(2, 1)))


# ----------------------------------------------------------------------
# patch extraction
# ----------------------------------------------------------------------
def patch_offsets(extent: int, patch: int, stride: int) -> List[int]:
    """Valid top/left positions: multiples of stride, no tail patch."""
    if extent < patch:
        return []
    return list(range(0, extent - patch + 1, stride))


def extract_patches(
    sample: StereoSample, patch_h: int = 30, patch_w: int = 90, stride: int = 20
) -> List[StereoSample]:
    """Crop a full-frame pair into LR patches on a regular stride grid.

    Patch geometry is given in LR pixels; HR crops are the co-located
    scale-multiplied windows. Left and right share one offset grid.
    """
    _, h, w = sample.lr_left.shape
    offs_h = patch_offsets(h, patch_h, stride)
    offs_w = patch_offsets(w, patch_w, stride)
    if not offs_h or not offs_w:
        warnings.warn(
            f"frame {h}x{w} smaller than patch {patch_h}x{patch_w}; no patches"
        )
        return []
    s = sample.scale
    patches = []
    for i in offs_h:
        for j in offs_w:
            patches.append(
                StereoSample(
                    lr_left=sample.lr_left[:, i : i + patch_h, j : j + patch_w].copy(),
                    lr_right=sample.lr_right[:, i : i + patch_h, j : j + patch_w].copy(),
                    hr_left=sample.hr_left[
                        :, s * i : s * (i + patch_h), s * j : s * (j + patch_w)
                    ].copy(),
                    hr_right=sample.hr_right[
                        :, s * i : s * (i + patch_h), s * j : s * (j + patch_w)
                    ].copy(),
                    scale=s,
                )
            )
    return patches


# ----------------------------------------------------------------------
# augmentation
# ----------------------------------------------------------------------
def flip_horizontal(sample: StereoSample) -> StereoSample:
    """Mirror both eyes along width and swap them, keeping disparity positive."""
    return StereoSample(
        lr_left=sample.lr_right[:, :, ::-1].copy(),
        lr_right=sample.lr_left[:, :, ::-1].copy(),
        hr_left=sample.hr_right[:, :, ::-1].copy(),
        hr_right=sample.hr_left[:, :, ::-1].copy(),
        scale=sample.scale,
    )


def flip_vertical(sample: StereoSample) -> StereoSample:
    """Mirror both eyes along height; the epipolar geometry is unaffected."""
    return StereoSample(
        lr_left=sample.lr_left[:, ::-1, :].copy(),
        lr_right=sample.lr_right[:, ::-1, :].copy(),
        hr_left=sample.hr_left[:, ::-1, :].copy(),
        hr_right=sample.hr_right[:, ::-1, :].copy(),
        scale=sample.scale,
    )


def crop_sample(
    sample: StereoSample, top: int, left: int, crop_h: int, crop_w: int
) -> StereoSample:
    """Co-located crop of both eyes at LR offsets (top, left)."""
    _, h, w = sample.lr_left.shape
    if top < 0 or left < 0 or top + crop_h > h or left + crop_w > w:
        raise ValueError(
            f"crop {crop_h}x{crop_w}@({top},{left}) exceeds LR frame {h}x{w}"
        )
    s = sample.scale
    return StereoSample(
        lr_left=sample.lr_left[:, top : top + crop_h, left : left + crop_w].copy(),
        lr_right=sample.lr_right[:, top : top + crop_h, left : left + crop_w].copy(),
        hr_left=sample.hr_left[
            :, s * top : s * (top + crop_h), s * left : s * (left + crop_w)
        ].copy(),
        hr_right=sample.hr_right[
            :, s * top : s * (top + crop_h), s * left : s * (left + crop_w)
        ].copy(),
        scale=s,
    )


def augment(
    sample: StereoSample,
    rng: np.random.Generator,
    crop_h: Optional[int] = None,
    crop_w: Optional[int] = None,
) -> StereoSample:
    """Random x/y flips plus an optional random co-located crop."""
    out = sample
    if rng.random() < 0.5:
        out = flip_horizontal(out)
    if rng.random() < 0.5:
        out = flip_vertical(out)
    if crop_h is not None and crop_w is not None:
        _, h, w = out.lr_left.shape
        if h >= crop_h and w >= crop_w:
            top = int(rng.integers(0, h - crop_h + 1))
            left = int(rng.integers(0, w - crop_w + 1))
            out = crop_sample(out, top, left, crop_h, crop_w)
    return out


# ----------------------------------------------------------------------
# synthetic stereo generation
# ----------------------------------------------------------------------
def _value_noise(rng: np.random.Generator, h: int, w: int, period: int) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [0,1]."""
    gh, gw = h // period + 2, w // period + 2
    lattice = rng.random((gh, gw))
    ys = np.arange(h) / period
    xs = np.arange(w) / period
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    ty = ys - y0
    tx = xs - x0
    ty = ty * ty * (3.0 - 2.0 * ty)
    tx = tx * tx * (3.0 - 2.0 * tx)
    tl = lattice[np.ix_(y0, x0)]
    tr = lattice[np.ix_(y0, x0 + 1)]
    bl = lattice[np.ix_(y0 + 1, x0)]
    br = lattice[np.ix_(y0 + 1, x0 + 1)]
    top = tl + (tr - tl) * tx[None, :]
    bot = bl + (br - bl) * tx[None, :]
    return top + (bot - top) * ty[:, None]


def _render_texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Multi-octave noise with vessel-like strokes, ellipses, and speckle.

    The per-pixel speckle matters: it keeps rows distinguishable column by
    column, so planted correspondences remain recoverable after bicubic
    degradation instead of dissolving into smooth ambiguity.
    """
    img = np.zeros((h, w))
    period = max(min(h, w) // 2, 2)
    amp = 1.0
    total = 0.0
    while period >= 2:
        img += amp * _value_noise(rng, h, w, period)
        total += amp
        amp *= 0.55
        period //= 2
    img /= total
    img = 0.75 * img + 0.25 * rng.random((h, w))

    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(3):
        cy, cx = rng.uniform(0.2 * h, 0.8 * h), rng.uniform(0.2 * w, 0.8 * w)
        ry, rx = rng.uniform(0.08, 0.25) * h, rng.uniform(0.08, 0.25) * w
        q = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        img += rng.uniform(-0.25, 0.25) * np.clip(1.0 - q, 0.0, 1.0)

    # quadratic strokes splatted as gaussian cross-sections
    for _ in range(4):
        pts = rng.uniform([0, 0], [h - 1, w - 1], size=(3, 2))
        ts = np.linspace(0.0, 1.0, 160)[:, None]
        path = ((1 - ts) ** 2) * pts[0] + 2 * ts * (1 - ts) * pts[1] + ts**2 * pts[2]
        sigma = rng.uniform(0.8, 1.8)
        gain = rng.uniform(-0.3, 0.3)
        r = int(np.ceil(3 * sigma))
        for py, px in path:
            iy, ix = int(round(py)), int(round(px))
            y0c, y1c = max(iy - r, 0), min(iy + r + 1, h)
            x0c, x1c = max(ix - r, 0), min(ix + r + 1, w)
            wy = yy[y0c:y1c, x0c:x1c] - py
            wx = xx[y0c:y1c, x0c:x1c] - px
            img[y0c:y1c, x0c:x1c] += gain * np.exp(
                -(wy * wy + wx * wx) / (2 * sigma * sigma)
            ) / 10.0

    lo, hi = img.min(), img.max()
    return 0.05 + 0.9 * (img - lo) / max(hi - lo, 1e-9)


def _shift_rows(img: np.ndarray, disparity: np.ndarray) -> np.ndarray:
    """Sample img at (y, x + d(y, x)) with linear interpolation, edge-clamped."""
    c, h, w = img.shape
    xs = np.arange(w)[None, :] + disparity
    x0 = np.floor(xs).astype(int)
    t = xs - x0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    rows = np.arange(h)[:, None]
    out = np.empty_like(img)
    for ch in range(c):
        plane = img[ch]
        out[ch] = plane[rows, x0c] * (1.0 - t) + plane[rows, x1c] * t
    return out


def synth_stereo(
    seed: int,
    frame_h: int,
    frame_w: int,
    disparity_range: Tuple[float, float],
    scale: int = 2,
    channels: int = 1,
) -> Tuple[StereoSample, np.ndarray]:
    """Generate one full-frame stereo sample plus its ground-truth disparity.

    frame_h/frame_w are the HR extents and must be divisible by scale.
    The returned field is the HR left-image disparity in pixels; right
    content is the left frame resampled by it.
    """
    d_min, d_max = disparity_range
    if d_min > d_max:
        raise ValueError(f"empty disparity range {disparity_range}")
    if d_max >= frame_w:
        raise ValueError(f"disparity range {disparity_range} exceeds width {frame_w}")
    if frame_h % scale or frame_w % scale:
        raise ValueError(
            f"frame extents {frame_h}x{frame_w} must be divisible by scale {scale}"
        )
    rng = np.random.default_rng(seed)
    if channels == 1:
        hr_left = _render_texture(rng, frame_h, frame_w)[None]
    else:
        base = _render_texture(rng, frame_h, frame_w)
        planes = [
            np.clip(base * rng.uniform(0.6, 1.0) + rng.uniform(-0.05, 0.05), 0, 1)
            for _ in range(channels)
        ]
        hr_left = np.stack(planes)

    if d_max == d_min:
        disparity = np.full((frame_h, frame_w), float(d_min))
    else:
        field = _value_noise(rng, frame_h, frame_w, max(frame_h // 2, 2))
        field = (field - field.min()) / max(field.max() - field.min(), 1e-9)
        disparity = d_min + (d_max - d_min) * field

    hr_right = _shift_rows(hr_left, disparity)
    lr_h, lr_w = frame_h // scale, frame_w // scale
    sample = StereoSample(
        lr_left=bicubic_resize(hr_left, lr_h, lr_w).astype(np.float32),
        lr_right=bicubic_resize(hr_right, lr_h, lr_w).astype(np.float32),
        hr_left=hr_left.astype(np.float32),
        hr_right=hr_right.astype(np.float32),
        scale=scale,
    )
    # degradation can nudge values a hair outside [0,1]
    sample.lr_left = np.clip(sample.lr_left, 0.0, 1.0)
    sample.lr_right = np.clip(sample.lr_right, 0.0, 1.0)
    return sample, disparity.astype(np.float32)


# ----------------------------------------------------------------------
# manifests
# ----------------------------------------------------------------------
@dataclass
class ManifestEntry:
    split: str
    left_path: str
    right_path: str


def write_manifest(path: str, entries: Sequence[ManifestEntry]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for e in entries:
            fh.write(f"{e.split}\t{e.left_path}\t{e.right_path}\n")


def read_manifest(path: str) -> List[ManifestEntry]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    entries = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            entries.append(ManifestEntry(*parts))
    return entries


def disparity_sidecar_path(left_path: str) -> str:
    stem, _ = os.path.splitext(left_path)
    return stem + ".disp"


def _family_seed(seed: int, family: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, family, index]).generate_state(1)[0])


def generate_dataset(
    out_dir: str,
    seed: int,
    counts: Tuple[int, int, int],
    frame_h: int,
    frame_w: int,
    disparity_range: Tuple[float, float],
    scale: int = 2,
    channels: int = 1,
) -> str:
    """Render synthetic frames to disk and write the split manifest.

    Train and val frames come from one generator seed family ("video"),
    test frames from a disjoint family, so the test split never shares
    content statistics drawn from the same seeds.
    """
    os.makedirs(out_dir, exist_ok=True)
    n_train, n_val, n_test = counts
    entries = []
    plan = [("train", n_train, 0), ("val", n_val, 0), ("test", n_test, 1)]
    index = 0
    for split, count, family in plan:
        for k in range(count):
            frame_seed = _family_seed(seed, family, index)
            index += 1
            sample, disparity = synth_stereo(
                frame_seed, frame_h, frame_w, disparity_range, scale, channels
            )
            ext = "pgm" if channels == 1 else "ppm"
            left = os.path.join(out_dir, f"{split}_{k:03d}_L.{ext}")
            right = os.path.join(out_dir, f"{split}_{k:03d}_R.{ext}")
            save_image(left, sample.hr_left)
            save_image(right, sample.hr_right)
            save_disparity(disparity_sidecar_path(left), disparity)
            entries.append(ManifestEntry(split, left, right))
    manifest = os.path.join(out_dir, "manifest.txt")
    write_manifest(manifest, entries)
    return manifest


def load_frame(entry: ManifestEntry, scale: int) -> StereoSample:
    """Load one manifest frame and derive its LR pair by bicubic degradation."""
    hr_left = load_image(entry.left_path)
    hr_right = load_image(entry.right_path)
    _, h, w = hr_left.shape
    if h % scale or w % scale:
        raise ValueError(
            f"frame {entry.left_path} extents {h}x{w} not divisible by scale {scale}"
        )
    lr_left = np.clip(bicubic_resize(hr_left, h // scale, w // scale), 0.0, 1.0)
    lr_right = np.clip(bicubic_resize(hr_right, h // scale, w // scale), 0.0, 1.0)
    return StereoSample(lr_left, lr_right, hr_left, hr_right, scale)


def manifest_frames(manifest_path: str, split: str, scale: int) -> List[StereoSample]:
    frames = [
        load_frame(e, scale) for e in read_manifest(manifest_path) if e.split == split
    ]
    return frames


def manifest_patches(
    manifest_path: str,
    split: str,
    scale: int,
    patch_h: int,
    patch_w: int,
    stride: int,
) -> List[StereoSample]:
    patches: List[StereoSample] = []
    for frame in manifest_frames(manifest_path, split, scale):
        patches.extend(extract_patches(frame, patch_h, patch_w, stride))
    return patches
