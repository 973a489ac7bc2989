"""Gaussian-beam defocus simulator and depth-of-field measurements.

A scene is a ground-truth image plus a per-pixel depth map (micrometres).
Focusing at ``focus_z`` blurs every pixel with a Gaussian whose width
follows the Gaussian-beam waist law.  A tilted bar target turns depth into
image columns, so depth of field can be read off as the span of columns
where the bars keep their contrast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.optimize import curve_fit
from scipy.special import erf, erfinv

from .fusion import FusionConfig, fuse_stack
from .image_core import ShapeMismatchError, as_image, normalize

__all__ = [
    "FocalStackSpec",
    "TargetScene",
    "DofMeasurement",
    "MeasurementError",
    "beam_sigma",
    "simulate_defocus",
    "generate_stack",
    "in_focus_mask",
    "tilted_bar_target",
    "default_scene",
    "column_contrast",
    "measure_dof",
    "measure_lateral_resolution",
    "measure_edge_rise",
    "measure_pair",
    "evaluate_dof",
    "IDENTITY_SIGMA_PX",
    "RISE_PER_SIGMA",
]

IDENTITY_SIGMA_PX = 0.3
# 10-90 % rise of a Gaussian edge spread function, in units of sigma.
RISE_PER_SIGMA = 2.0 * math.sqrt(2.0) * float(erfinv(0.8))


class MeasurementError(ArithmeticError):
    """A measurement could not be made on the given image."""


@dataclass
class FocalStackSpec:
    """Scene, focal planes and optics.  Lengths are micrometres."""

    ground_truth: np.ndarray
    depth_map: np.ndarray
    focal_planes: tuple[float, ...]
    beam_waist: float = 4.2
    rayleigh_range: float = 60.0
    max_sigma: float = 45.0
    pixel_size: float = 3.0

    def __post_init__(self):
        self.ground_truth = as_image(self.ground_truth, "ground_truth")
        self.depth_map = as_image(self.depth_map, "depth_map")
        self.focal_planes = tuple(float(z) for z in self.focal_planes)
        problems = []
        if self.depth_map.shape != self.ground_truth.shape:
            problems.append(
                f"depth_map: shape {self.depth_map.shape} differs from ground_truth {self.ground_truth.shape}"
            )
        if not self.focal_planes:
            problems.append("focal_planes: must not be empty")
        for name in ("beam_waist", "rayleigh_range", "max_sigma", "pixel_size"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                problems.append(f"{name}: must be positive, got {value}")
        if problems:
            raise ValueError("invalid focal stack spec: " + "; ".join(problems))


@dataclass
class TargetScene:
    """Resolution scene: bars, texture and slanted step edges on one tilted depth map.

    ``edge_rows``/``edge_windows`` locate the edge nearest the first focal
    plane, one fit window per measured row.
    """

    ground_truth: np.ndarray
    depth_map: np.ndarray
    bar_period: int
    bar_rows: slice
    edge_rows: list[int] = field(default_factory=list)
    edge_windows: list[slice] = field(default_factory=list)

    def spec(self, focal_planes=(0.0, 120.0), **optics) -> FocalStackSpec:
        return FocalStackSpec(self.ground_truth, self.depth_map, tuple(focal_planes), **optics)


@dataclass
class DofMeasurement:
    single_image_dof: float
    fused_dof: float
    lateral_res_single: float
    lateral_res_fused: float

    @property
    def extension_ratio(self) -> float:
        return self.fused_dof / self.single_image_dof

    def to_text(self) -> str:
        return (
            f"single-image DoF      {self.single_image_dof:10.4f} um\n"
            f"fused DoF             {self.fused_dof:10.4f} um\n"
            f"extension ratio       {self.extension_ratio:10.4f}\n"
            f"lateral res (single)  {self.lateral_res_single:10.4f} um\n"
            f"lateral res (fused)   {self.lateral_res_fused:10.4f} um\n"
        )

    def to_csv(self) -> str:
        return (
            "single_image_dof,fused_dof,extension_ratio,lateral_res_single,lateral_res_fused\n"
            f"{self.single_image_dof:.4f},{self.fused_dof:.4f},{self.extension_ratio:.4f},"
            f"{self.lateral_res_single:.4f},{self.lateral_res_fused:.4f}\n"
        )


def beam_sigma(z, focus_z: float, spec: FocalStackSpec):
    """Blur width (um) at depth ``z`` when focused at ``focus_z``, capped at ``spec.max_sigma``."""
    dz = (np.asarray(z, dtype=np.float64) - focus_z) / spec.rayleigh_range
    sigma = np.minimum(spec.beam_waist * np.sqrt(1.0 + dz * dz), spec.max_sigma)
    return float(sigma) if sigma.ndim == 0 else sigma


def in_focus_mask(spec: FocalStackSpec, focus_z: float) -> np.ndarray:
    """Pixels within one Rayleigh range of the focal plane."""
    return np.abs(spec.depth_map - focus_z) <= spec.rayleigh_range


def _gaussian_taps(sigma: float) -> np.ndarray:
    radius = int(math.floor(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-0.5 * (k / sigma) ** 2)


def _blur_1d(slab: np.ndarray, taps: np.ndarray, axis: int, lo: int, hi: int, offset: int) -> np.ndarray:
    """Normalized 1D Gaussian filter of ``slab`` along ``axis`` at positions ``lo..hi-1``.

    ``offset`` is the slab coordinate of global index 0 along ``axis``;
    taps falling outside the slab are dropped and the rest renormalized.
    """
    radius = len(taps) // 2
    n = slab.shape[axis]
    moved = np.moveaxis(slab, axis, 0)
    out = np.zeros((hi - lo,) + moved.shape[1:])
    norm = np.zeros(hi - lo)
    pos = np.arange(lo, hi) + offset
    for j, w in enumerate(taps):
        src = pos + j - radius
        ok = (src >= 0) & (src < n)
        out[ok] += w * moved[src[ok]]
        norm[ok] += w
    out /= norm.reshape((-1,) + (1,) * (out.ndim - 1))
    return np.moveaxis(out, 0, axis)


def _blur_region(img: np.ndarray, sigma: float, rows: tuple[int, int], cols: tuple[int, int]) -> np.ndarray:
    """Gaussian-blurred values of ``img`` on the box ``rows x cols`` (half-open), image edges renormalized."""
    taps = _gaussian_taps(sigma)
    r = len(taps) // 2
    h, w = img.shape
    c_lo, c_hi = max(0, cols[0] - r), min(w, cols[1] + r)
    # Vertical pass over the columns the horizontal pass will need.
    vert = _blur_1d(img[:, c_lo:c_hi], taps, axis=0, lo=rows[0], hi=rows[1], offset=0)
    return _blur_1d(vert, taps, axis=1, lo=cols[0], hi=cols[1], offset=-c_lo)


def simulate_defocus(spec: FocalStackSpec, focus_z: float) -> np.ndarray:
    """Image of the scene with the beam focused at depth ``focus_z``.

    Each output pixel is a Gaussian-weighted average of the ground truth using
    the blur width at that pixel's own depth (gather style).  Kernels have
    square support out to ``floor(3 sigma)`` pixels and are renormalized over
    the in-image part, so constants are preserved exactly.  Widths below
    ``IDENTITY_SIGMA_PX`` leave the pixel unchanged.
    """
    gt = spec.ground_truth
    sigma_px = beam_sigma(spec.depth_map, focus_z, spec) / spec.pixel_size
    out = gt.copy()
    blurred = sigma_px >= IDENTITY_SIGMA_PX
    for sigma in np.unique(sigma_px[blurred]):
        mask = sigma_px == sigma
        rr, cc = np.nonzero(mask)
        r0, r1, c0, c1 = rr.min(), rr.max() + 1, cc.min(), cc.max() + 1
        region = _blur_region(gt, float(sigma), (r0, r1), (c0, c1))
        sub = mask[r0:r1, c0:c1]
        out[r0:r1, c0:c1][sub] = region[sub]
    return out


def generate_stack(spec: FocalStackSpec) -> list[np.ndarray]:
    """One simulated image per focal plane, in ``spec.focal_planes`` order."""
    return [simulate_defocus(spec, z) for z in spec.focal_planes]


def tilted_bar_target(width: int, height: int, bar_period: int, depth_range: tuple[float, float]):
    """Vertical bars plus a depth map linear in x.

    Column ``x`` is bright when ``x % bar_period < bar_period / 2`` and sits at
    depth ``lo + (hi - lo) * x / width``.  Returns ``(ground_truth, depth_map)``.
    """
    if bar_period < 2:
        raise ValueError(f"bar period must be at least 2 pixels, got {bar_period}")
    if width < 1 or height < 1:
        raise ValueError(f"target must be at least 1x1, got {width}x{height}")
    x = np.arange(width)
    bars = ((x % bar_period) < bar_period / 2).astype(np.float64)
    lo, hi = depth_range
    depth = lo + (hi - lo) * x / width
    return np.tile(bars, (height, 1)), np.tile(depth, (height, 1))


def default_scene(
    width: int = 240,
    height: int = 192,
    bar_period: int = 8,
    depth_range: tuple[float, float] = (-120.0, 240.0),
    edge_depths: tuple[float, ...] = (0.0, 120.0),
    layout: tuple[int, int, int] = (64, 80, 48),
    rows_per_column: int = 2,
    texture_scale: float = 1.5,
    edge_levels: tuple[float, float] = (0.1, 0.9),
    seed: int = 0,
) -> TargetScene:
    """Bars, random texture and slanted step edges stacked top to bottom.

    ``layout`` gives the row count of each band and must sum to ``height``.

    All three share one tilted depth map.  Each step edge starts at the column
    whose depth is nearest one of ``edge_depths`` and moves one column right
    every ``rows_per_column`` rows, so the measurement rows sample every phase
    of the wavelet's dyadic grid.

    ``edge_levels`` are the dark and bright sides of the steps.  They sit
    inside (0, 1) so that ringing of a sharp step after fusion does not set
    the range used to normalize the fused image.
    """
    if sum(layout) != height:
        raise ValueError(f"layout {layout} does not add up to height {height}")
    gt, depth = tilted_bar_target(width, height, bar_period, depth_range)
    bar_rows = slice(0, layout[0])
    tex_rows = slice(bar_rows.stop, bar_rows.stop + layout[1])
    edge_band = slice(tex_rows.stop, height)

    # Texture: white noise smoothed to a grain the in-focus beam can resolve.
    rng = np.random.default_rng(seed)
    noise = rng.random((tex_rows.stop - tex_rows.start, width))
    if texture_scale > 0:
        noise = gaussian_filter(noise, texture_scale, mode="reflect")
    gt[tex_rows] = normalize(noise)

    cols = depth[0]
    starts = sorted(int(np.argmin(np.abs(cols - d))) for d in edge_depths)
    band_h = edge_band.stop - edge_band.start
    # Keep blur from the texture band out of the measured rows.
    margin = band_h // 6
    rows = list(range(edge_band.start + margin, edge_band.stop - margin))
    shift = (np.arange(band_h) - margin) // rows_per_column
    dark, bright = edge_levels
    for r in range(band_h):
        line = np.full(width, dark)
        for i, x in enumerate(starts):
            line[max(0, x + shift[r]) :] = bright if i % 2 == 0 else dark
        gt[edge_band.start + r] = line

    # Fit windows for the first edge reach halfway to the second edge.
    spacing = (starts[1] - starts[0]) if len(starts) > 1 else width
    windows = []
    for r in rows:
        x = starts[0] + shift[r - edge_band.start]
        windows.append(slice(max(0, x - spacing // 2), min(width, x + spacing // 2)))
    return TargetScene(gt, depth, bar_period, bar_rows, rows, windows)


def column_contrast(img, bar_period: int, rows: slice | None = None) -> np.ndarray:
    """Michelson contrast of the bar modulation around each column.

    The row-averaged profile is examined over a window of one bar period
    (``x - p/2 .. x + p/2``, clipped at the image border).
    """
    img = as_image(img)
    if bar_period < 2:
        raise ValueError(f"bar period must be at least 2 pixels, got {bar_period}")
    profile = img[rows if rows is not None else slice(None)].mean(axis=0)
    half = bar_period // 2
    n = len(profile)
    out = np.empty(n)
    for x in range(n):
        win = profile[max(0, x - half) : min(n, x + half + 1)]
        hi, lo = win.max(), win.min()
        out[x] = (hi - lo) / (hi + lo) if hi + lo > 0 else 0.0
    return out


def measure_dof(img, depth_map, bar_period: int, rows: slice | None = None) -> float:
    """Depth span (um) of the contiguous run of columns with contrast >= half the peak.

    Run ends are located by linear interpolation of contrast between
    neighbouring columns; a run that reaches the image border extends half a
    column past the last sample.
    """
    img = as_image(img)
    depth_map = as_image(depth_map, "depth_map")
    if depth_map.shape != img.shape:
        raise ShapeMismatchError(f"depth map {depth_map.shape} does not match image {img.shape}")
    contrast = column_contrast(img, bar_period, rows)
    peak_at = int(np.argmax(contrast))
    peak = contrast[peak_at]
    if not peak > 0:
        raise MeasurementError("no column shows any bar contrast")
    thr = 0.5 * peak
    n = len(contrast)
    a = peak_at
    while a > 0 and contrast[a - 1] >= thr:
        a -= 1
    b = peak_at
    while b < n - 1 and contrast[b + 1] >= thr:
        b += 1

    def crossing(inside: int, outside: int) -> float:
        ci, co = contrast[inside], contrast[outside]
        return inside + (outside - inside) * (ci - thr) / (ci - co)

    left = crossing(a, a - 1) if a > 0 else -0.5
    right = crossing(b, b + 1) if b < n - 1 else n - 0.5
    cols = depth_map.mean(axis=0) if rows is None else depth_map[rows].mean(axis=0)
    x = np.arange(n)
    # Linear extrapolation half a column past either end.
    slope_l = cols[1] - cols[0] if n > 1 else 0.0
    slope_r = cols[-1] - cols[-2] if n > 1 else 0.0

    def depth_at(p: float) -> float:
        if p < 0:
            return cols[0] + p * slope_l
        if p > n - 1:
            return cols[-1] + (p - (n - 1)) * slope_r
        return float(np.interp(p, x, cols))

    return abs(depth_at(right) - depth_at(left))


def _esf(x, base, step, centre, sigma):
    return base + step * 0.5 * (1.0 + erf((x - centre) / (math.sqrt(2.0) * sigma)))


def measure_lateral_resolution(img, row: int, window: slice | None = None, pixel_size: float = 3.0) -> float:
    """10-90 % rise distance (um) of the step edge along ``row``.

    An error-function edge model is least-squares fitted to the samples in
    ``window`` (default: the whole row); the rise is ``RISE_PER_SIGMA * sigma``.
    """
    img = as_image(img)
    window = window if window is not None else slice(None)
    y = img[row, window]
    x = np.arange(img.shape[1])[window].astype(np.float64)
    if len(y) < 4:
        raise MeasurementError("edge profile needs at least 4 samples")
    span = y.max() - y.min()
    if span <= 1e-9 * max(1.0, abs(y.max())):
        raise MeasurementError("flat profile: no edge to fit")
    grad = np.diff(y)
    k = int(np.argmax(np.abs(grad)))
    p0 = [y[0], np.sign(grad[k]) * span, x[k] + 0.5, 1.0]
    lower = [-np.inf, -np.inf, x[0], 1e-3]
    upper = [np.inf, np.inf, x[-1], float(len(y))]
    try:
        params, _ = curve_fit(_esf, x, y, p0=p0, bounds=(lower, upper), maxfev=10000)
    except (RuntimeError, ValueError) as exc:
        raise MeasurementError(f"edge fit did not converge: {exc}") from None
    sigma = abs(params[3])
    return RISE_PER_SIGMA * sigma * pixel_size


def measure_edge_rise(img, rows, windows, pixel_size: float = 3.0) -> float:
    """Mean 10-90 % rise (um) over several rows of a slanted edge."""
    rises = [measure_lateral_resolution(img, r, w, pixel_size) for r, w in zip(rows, windows)]
    if not rises:
        raise MeasurementError("no edge rows to measure")
    return float(np.mean(rises))


def measure_pair(scene: TargetScene, spec: FocalStackSpec, single, fused) -> DofMeasurement:
    """DoF and edge rise of a single-plane image and a fused image of ``scene``.

    Both images are normalized to [0, 1] first, as they would be when written out.
    """
    single, fused = normalize(single), normalize(fused)
    rows, windows = scene.edge_rows, scene.edge_windows
    return DofMeasurement(
        single_image_dof=measure_dof(single, spec.depth_map, scene.bar_period, scene.bar_rows),
        fused_dof=measure_dof(fused, spec.depth_map, scene.bar_period, scene.bar_rows),
        lateral_res_single=measure_edge_rise(single, rows, windows, spec.pixel_size),
        lateral_res_fused=measure_edge_rise(fused, rows, windows, spec.pixel_size),
    )


def evaluate_dof(scene: TargetScene, spec: FocalStackSpec, cfg: FusionConfig | None = None):
    """Simulate the stack, fuse it and measure DoF and edge sharpness before and after.

    The single-image figures come from the first focal plane.
    Returns ``(DofMeasurement, stack, fused_result)``.
    """
    cfg = (cfg or FusionConfig()).clamped(spec.ground_truth.shape)
    stack = generate_stack(spec)
    result = fuse_stack(stack, cfg)
    return measure_pair(scene, spec, stack[0], result.image), stack, result
