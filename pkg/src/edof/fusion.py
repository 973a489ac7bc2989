"""Wavelet fusion of a co-registered focal stack.

Approximation bands are averaged; every detail coefficient is taken from the
source with the largest magnitude at that position (sign kept).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .image_core import ShapeMismatchError, as_image
from .wavelet import CoeffPyramid, WaveletSpec, dwt2, get_wavelet, idwt2, max_levels

__all__ = [
    "FusionConfig",
    "FusedResult",
    "fuse_lowpass",
    "fuse_highpass",
    "fuse_stack",
    "render_depth_coded",
    "DEFAULT_PALETTE",
]

TIE_BREAKS = ("lowest-index",)

DEFAULT_PALETTE = [
    (255, 64, 64),
    (64, 128, 255),
    (64, 220, 96),
    (255, 200, 40),
    (200, 80, 255),
    (40, 220, 220),
]


@dataclass(frozen=True)
class FusionConfig:
    wavelet: str | WaveletSpec = "db4"
    levels: int = 4
    mode: str = "symmetric"
    tie_break: str = "lowest-index"

    def __post_init__(self):
        get_wavelet(self.wavelet)
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie-break policy {self.tie_break!r}")

    def clamped(self, shape: tuple[int, int]) -> "FusionConfig":
        """Copy with ``levels`` reduced to what an image of ``shape`` admits."""
        levels = max(1, min(self.levels, max_levels(shape)))
        return FusionConfig(self.wavelet, levels, self.mode, self.tie_break)


@dataclass
class FusedResult:
    """Fused image (not normalized) and per-pixel index of the dominant source."""

    image: np.ndarray
    source_map: np.ndarray
    n_sources: int


def _check_bands(bands) -> list[np.ndarray]:
    if len(bands) == 0:
        raise ValueError("need at least one band to fuse")
    bands = [np.asarray(b) for b in bands]
    shape = bands[0].shape
    for i, b in enumerate(bands[1:], start=1):
        if b.shape != shape:
            raise ShapeMismatchError(f"band {i} has shape {b.shape}, band 0 has {shape}")
    return bands


def fuse_lowpass(bands) -> np.ndarray:
    """Per-position arithmetic mean of the approximation bands."""
    bands = _check_bands(bands)
    return np.mean(np.stack(bands), axis=0)


def fuse_highpass(bands, tie_break: str = "lowest-index") -> tuple[np.ndarray, np.ndarray]:
    """Pick, at each position, the coefficient of largest magnitude.

    Returns ``(fused, index)`` where ``index`` names the winning source.  Ties
    go to the lowest source index.
    """
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"unknown tie-break policy {tie_break!r}")
    bands = _check_bands(bands)
    stack = np.stack(bands)
    # argmax returns the first maximum, which is the lowest-index tie-break.
    index = np.argmax(np.abs(stack), axis=0)
    fused = np.take_along_axis(stack, index[None], axis=0)[0]
    return fused, index


def _n_workers(n_tasks: int) -> int:
    try:
        cap = int(os.environ.get("EDOF_THREADS", "0"))
    except ValueError:
        cap = 0
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def _upsample_nearest(band: np.ndarray, factor: int, shape: tuple[int, int]) -> np.ndarray:
    big = np.repeat(np.repeat(band, factor, axis=0), factor, axis=1)
    return big[: shape[0], : shape[1]]


def fuse_stack(images, cfg: FusionConfig | None = None) -> FusedResult:
    """Decompose each image, fuse the pyramids and invert.

    ``cfg.levels`` must be admissible for the image size (see
    :meth:`FusionConfig.clamped`).
    """
    cfg = cfg or FusionConfig()
    if len(images) == 0:
        raise ValueError("cannot fuse an empty stack")
    images = [as_image(im, f"image {i}") for i, im in enumerate(images)]
    shape = images[0].shape
    for i, im in enumerate(images[1:], start=1):
        if im.shape != shape:
            raise ShapeMismatchError(
                f"image {i} is {im.shape[1]}x{im.shape[0]} but image 0 is {shape[1]}x{shape[0]}"
            )

    if len(images) == 1:
        # Mean and max-abs of one source are the source itself.
        return FusedResult(images[0].copy(), np.zeros(shape, dtype=np.intp), 1)

    wav = get_wavelet(cfg.wavelet)

    def decompose(im):
        return dwt2(im, wav, cfg.levels, cfg.mode)

    workers = _n_workers(len(images))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pyramids = list(pool.map(decompose, images))
    else:
        pyramids = [decompose(im) for im in images]

    approx = fuse_lowpass([p.approx for p in pyramids])
    details = []
    activity = np.zeros((len(images),) + shape)
    for lvl in range(cfg.levels):
        fused_level = []
        for k in range(3):
            bands = [p.details[lvl][k] for p in pyramids]
            fused, _ = fuse_highpass(bands, cfg.tie_break)
            fused_level.append(fused)
            for i, band in enumerate(bands):
                activity[i] += _upsample_nearest(np.abs(band).astype(np.float64), 2 ** (lvl + 1), shape)
        details.append(tuple(fused_level))

    pyr = CoeffPyramid(approx=approx, details=details, original_shape=shape, mode=cfg.mode)
    image = idwt2(pyr, wav)
    source_map = np.argmax(activity, axis=0)
    return FusedResult(image=image, source_map=source_map, n_sources=len(images))


def render_depth_coded(result: FusedResult, palette=None) -> np.ndarray:
    """False-colour rendering: hue from the dominant source, brightness from amplitude.

    Amplitude is the fused image clipped at zero and divided by its maximum,
    so zero-amplitude pixels come out black.  Returns an ``(h, w, 3)`` array
    in [0, 1].
    """
    if palette is None:
        if result.n_sources > len(DEFAULT_PALETTE):
            raise ValueError(f"default palette has only {len(DEFAULT_PALETTE)} colours")
        palette = DEFAULT_PALETTE[: result.n_sources]
    palette = np.asarray(palette, dtype=np.float64)
    if palette.ndim != 2 or palette.shape[1] != 3:
        raise ValueError("palette must be a list of (r, g, b) triples")
    if len(palette) != result.n_sources:
        raise ValueError(
            f"palette has {len(palette)} colours but the stack has {result.n_sources} sources"
        )
    amp = np.clip(result.image, 0.0, None)
    peak = amp.max()
    if peak > 0:
        amp = amp / peak
    colours = palette[result.source_map] / 255.0
    return np.clip(colours * amp[..., None], 0.0, 1.0)
