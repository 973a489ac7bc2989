"""Command-line interface: ``edof fuse|metrics|simulate|evaluate``.

Settings come from an optional flat ``key = value`` config file; command-line
flags override it.  Exit codes: 0 success, 1 I/O failure, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .defocus_sim import FocalStackSpec, default_scene, generate_stack, measure_pair
from .fusion import DEFAULT_PALETTE, FusionConfig, fuse_stack, render_depth_coded
from .image_core import PNMError, ShapeMismatchError, load_pgm, normalize, save_pgm, save_ppm
from .metrics import MetricsReport, MetricsRow, report
from .wavelet import WAVELETS

__all__ = ["CliConfig", "load_config", "main"]

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class StageError(Exception):
    """Wraps a failure with the name of the pipeline stage it came from."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _palette(text: str) -> tuple[tuple[int, int, int], ...]:
    out = []
    for item in text.split(";"):
        rgb = tuple(int(t) for t in item.split(","))
        if len(rgb) != 3 or not all(0 <= c <= 255 for c in rgb):
            raise ValueError(f"bad colour {item.strip()!r}")
        out.append(rgb)
    return tuple(out)


@dataclass
class CliConfig:
    wavelet: str = FusionConfig.wavelet
    levels: int = FusionConfig.levels
    mode: str = FusionConfig.mode
    bit_depth: int = 8
    output: str | None = None
    csv: str | None = None
    depth_coded: str | None = None
    palette: tuple[tuple[int, int, int], ...] | None = None
    # Simulation
    ground_truth: str | None = None
    depth_map: str | None = None
    depth_range: tuple[float, ...] = (-120.0, 240.0)
    focal_planes: tuple[float, ...] = (0.0, 120.0)
    beam_waist: float = 4.2
    rayleigh_range: float = 60.0
    max_sigma: float = 45.0
    pixel_size: float = 3.0
    seed: int = 0
    inputs: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.wavelet not in WAVELETS:
            raise ConfigError(f"wavelet: unknown family {self.wavelet!r}")
        if self.levels < 1:
            raise ConfigError(f"levels: must be >= 1, got {self.levels}")
        if self.bit_depth not in (8, 16):
            raise ConfigError(f"bit_depth: must be 8 or 16, got {self.bit_depth}")
        if len(self.depth_range) != 2:
            raise ConfigError("depth_range: expected two values lo,hi")
        if not self.focal_planes:
            raise ConfigError("focal_planes: need at least one plane")

    def fusion(self) -> FusionConfig:
        return FusionConfig(self.wavelet, self.levels, self.mode)

    def optics(self) -> dict:
        return {
            "beam_waist": self.beam_waist,
            "rayleigh_range": self.rayleigh_range,
            "max_sigma": self.max_sigma,
            "pixel_size": self.pixel_size,
        }


_PARSERS = {
    "wavelet": str,
    "levels": int,
    "mode": str,
    "bit_depth": int,
    "output": str,
    "csv": str,
    "depth_coded": str,
    "palette": _palette,
    "ground_truth": str,
    "depth_map": str,
    "depth_range": _floats,
    "focal_planes": _floats,
    "beam_waist": float,
    "rayleigh_range": float,
    "max_sigma": float,
    "pixel_size": float,
    "seed": int,
}


def load_config(path: str | Path) -> dict:
    """Parse a ``key = value`` file.  Blank lines and ``#`` comments are skipped."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {key}: {exc}") from None
    return values


def _build_config(args: argparse.Namespace) -> CliConfig:
    values = load_config(args.config) if args.config else {}
    names = {f.name for f in fields(CliConfig)}
    for name, value in vars(args).items():
        if name in names and value is not None:
            values[name] = value
    cfg = CliConfig(**values)
    cfg.validate()
    return cfg


def _load_stack(paths) -> list[np.ndarray]:
    images = []
    for p in paths:
        img = load_pgm(p)
        if images and img.shape != images[0].shape:
            h0, w0 = images[0].shape
            h, w = img.shape
            raise ShapeMismatchError(
                f"{p}: dimensions {w}x{h} do not match {paths[0]}: {w0}x{h0}"
            )
        images.append(img)
    return images


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_fuse(cfg: CliConfig) -> int:
    if not cfg.inputs:
        raise ConfigError("fuse: at least one input image is required")
    if not cfg.output:
        raise ConfigError("fuse: an output path (-o) is required")
    images = _load_stack(cfg.inputs)
    result = fuse_stack(images, cfg.fusion().clamped(images[0].shape))
    fused = normalize(result.image)
    save_pgm(fused, cfg.output, cfg.bit_depth)
    if cfg.depth_coded:
        palette = cfg.palette or DEFAULT_PALETTE[: result.n_sources]
        save_ppm(render_depth_coded(result, palette), cfg.depth_coded)
    table = report(images, fused)
    sys.stdout.write(table.to_table())
    if cfg.csv:
        _write_text(cfg.csv, table.to_csv())
    return EXIT_OK


def cmd_metrics(cfg: CliConfig, ref: str | None) -> int:
    if not cfg.inputs:
        raise ConfigError("metrics: at least one input image is required")
    images = _load_stack(cfg.inputs)
    ref_img = None
    if ref is not None:
        ref_img = load_pgm(ref)
        if ref_img.shape != images[0].shape:
            h0, w0 = images[0].shape
            h, w = ref_img.shape
            raise ShapeMismatchError(f"{ref}: dimensions {w}x{h} do not match {cfg.inputs[0]}: {w0}x{h0}")
    labels = [Path(p).name for p in cfg.inputs]
    table = MetricsReport([MetricsRow.measure(lab, im, ref_img) for lab, im in zip(labels, images)])
    sys.stdout.write(table.to_table())
    if cfg.csv:
        _write_text(cfg.csv, table.to_csv())
    return EXIT_OK


def _stack_spec(cfg: CliConfig, builtin: bool):
    """Return ``(spec, scene)``; ``scene`` is None for user-supplied scenes."""
    if builtin:
        scene = default_scene(depth_range=cfg.depth_range, seed=cfg.seed)
        return scene.spec(cfg.focal_planes, **cfg.optics()), scene
    if not cfg.ground_truth or not cfg.depth_map:
        raise ConfigError("simulate: give ground_truth and depth_map, or use --target")
    gt = load_pgm(cfg.ground_truth)
    dm = load_pgm(cfg.depth_map)
    if dm.shape != gt.shape:
        raise ShapeMismatchError(
            f"{cfg.depth_map}: dimensions {dm.shape[1]}x{dm.shape[0]} do not match "
            f"{cfg.ground_truth}: {gt.shape[1]}x{gt.shape[0]}"
        )
    lo, hi = cfg.depth_range
    # Depth-map PGMs store depth linearly over depth_range.
    return FocalStackSpec(gt, lo + (hi - lo) * dm, cfg.focal_planes, **cfg.optics()), None


def cmd_simulate(cfg: CliConfig, builtin: bool) -> int:
    spec, scene = _stack_spec(cfg, builtin)
    out = Path(cfg.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(generate_stack(spec)):
        path = out / f"stack_{i:03d}.pgm"
        save_pgm(img, path, cfg.bit_depth)
        print(path)
    if scene is not None:
        lo, hi = cfg.depth_range
        save_pgm(scene.ground_truth, out / "ground_truth.pgm", cfg.bit_depth)
        save_pgm((scene.depth_map - lo) / (hi - lo), out / "depth_map.pgm", cfg.bit_depth)
        print(out / "ground_truth.pgm")
        print(out / "depth_map.pgm")
    return EXIT_OK


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (OSError, ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


def cmd_evaluate(cfg: CliConfig) -> int:
    scene = _stage("simulate", default_scene, depth_range=cfg.depth_range, seed=cfg.seed)
    spec = _stage("simulate", scene.spec, cfg.focal_planes, **cfg.optics())
    stack = _stage("simulate", generate_stack, spec)
    fusion = cfg.fusion().clamped(spec.ground_truth.shape)
    result = _stage("fuse", fuse_stack, stack, fusion)
    meas = _stage("measure", measure_pair, scene, spec, stack[0], result.image)
    sys.stdout.write(meas.to_text())
    if cfg.csv:
        _write_text(cfg.csv, meas.to_csv())
    if cfg.output:
        save_pgm(normalize(result.image), cfg.output, cfg.bit_depth)
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file (flags override it)")
    p.add_argument("--wavelet", choices=sorted(WAVELETS))
    p.add_argument("--levels", type=int)
    p.add_argument("-o", "--output", help="output path (a directory for simulate)")
    p.add_argument("--csv", help="also write results as CSV to this path")
    p.add_argument("--depth-coded", dest="depth_coded", help="depth-coded RGB output (PPM)")
    p.add_argument("--bit-depth", dest="bit_depth", type=int, choices=(8, 16))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edof", description="Wavelet multi-focus fusion for extended depth of field.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse a focal stack of PGM images")
    p.add_argument("inputs", nargs="+")
    _common(p)

    p = sub.add_parser("metrics", help="print quality metrics of PGM images")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--ref", help="reference image; adds an MSE column")
    _common(p)

    p = sub.add_parser("simulate", help="simulate a defocus stack")
    p.add_argument("--target", action="store_true", help="use the built-in tilted-bar target")
    _common(p)

    p = sub.add_parser("evaluate", help="simulate, fuse and measure DoF and edge rise")
    _common(p)
    return parser


def _fail(code: int, message: str) -> int:
    print(f"edof: error: {message}", file=sys.stderr)
    return code


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (OSError, PNMError)):
        return EXIT_IO
    if isinstance(exc, ArithmeticError):
        return EXIT_NUMERIC
    return EXIT_INVALID


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _build_config(args)
        if args.command == "fuse":
            return cmd_fuse(cfg)
        if args.command == "metrics":
            return cmd_metrics(cfg, args.ref)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.target)
        return cmd_evaluate(cfg)
    except StageError as exc:
        return _fail(_exit_code(exc.cause), str(exc))
    except (OSError, ValueError, ArithmeticError) as exc:
        return _fail(_exit_code(exc), str(exc))


if __name__ == "__main__":
    sys.exit(main())
