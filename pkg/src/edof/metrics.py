"""No-reference fusion quality metrics on the 8-bit gray-level grid.

All metrics quantize their input with :func:`~edof.image_core.quantize_u8`
first and work in gray-level units, so inputs must lie in [0, 1].
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .image_core import ShapeMismatchError, quantize_u8

__all__ = [
    "entropy",
    "average_gradient",
    "std_dev",
    "edge_strength",
    "mse",
    "MetricsRow",
    "MetricsReport",
    "report",
]

COLUMNS = ("label", "entropy", "avg_gradient", "std_dev", "edge_strength")


def _gray(img) -> np.ndarray:
    return quantize_u8(img).astype(np.float64)


def entropy(img) -> float:
    """Shannon entropy in bits of the 256-bin gray-level histogram."""
    q = quantize_u8(img)
    counts = np.bincount(q.ravel(), minlength=256)
    p = counts[counts > 0] / q.size
    return float(-np.sum(p * np.log2(p))) + 0.0


def average_gradient(img) -> float:
    """Mean of ``sqrt((dx**2 + dy**2) / 2)`` over forward differences.

    Only the ``(h - 1) * (w - 1)`` positions that have both differences count.
    """
    g = _gray(img)
    if g.shape[0] < 2 or g.shape[1] < 2:
        raise ShapeMismatchError(f"average gradient needs at least 2x2 pixels, got {g.shape}")
    dx = g[:-1, 1:] - g[:-1, :-1]
    dy = g[1:, :-1] - g[:-1, :-1]
    return float(np.mean(np.sqrt((dx**2 + dy**2) / 2.0)))


def std_dev(img) -> float:
    """Population standard deviation in gray levels."""
    return float(np.std(_gray(img)))


def edge_strength(img) -> float:
    """Mean 3x3 Sobel gradient magnitude over interior pixels."""
    g = _gray(img)
    if g.shape[0] < 3 or g.shape[1] < 3:
        raise ShapeMismatchError(f"edge strength needs at least 3x3 pixels, got {g.shape}")
    # Separable Sobel: [1, 2, 1] smoothing times [-1, 0, 1] difference.
    dx = g[:, 2:] - g[:, :-2]
    gx = dx[:-2] + 2.0 * dx[1:-1] + dx[2:]
    dy = g[2:, :] - g[:-2, :]
    gy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return float(np.mean(np.hypot(gx, gy)))


def mse(a, b) -> float:
    """Mean squared difference in squared gray levels."""
    ga, gb = _gray(a), _gray(b)
    if ga.shape != gb.shape:
        raise ShapeMismatchError(f"cannot compare images of shape {ga.shape} and {gb.shape}")
    return float(np.mean((ga - gb) ** 2))


@dataclass
class MetricsRow:
    label: str
    entropy: float
    avg_gradient: float
    std_dev: float
    edge_strength: float
    mse: float | None = None

    @classmethod
    def measure(cls, label: str, img, ref=None) -> "MetricsRow":
        return cls(
            label,
            entropy(img),
            average_gradient(img),
            std_dev(img),
            edge_strength(img),
            None if ref is None else mse(img, ref),
        )

    def values(self) -> list[float]:
        vals = [self.entropy, self.avg_gradient, self.std_dev, self.edge_strength]
        if self.mse is not None:
            vals.append(self.mse)
        return vals


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)

    @property
    def has_mse(self) -> bool:
        return any(r.mse is not None for r in self.rows)

    def columns(self) -> tuple[str, ...]:
        return COLUMNS + (("mse",) if self.has_mse else ())

    def to_table(self) -> str:
        """Aligned plain-text table, four decimals per value."""
        header = list(self.columns())
        body = [[r.label] + [f"{v:.4f}" for v in r.values()] for r in self.rows]
        widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
        lines = []
        for line in [header] + body:
            cells = [line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns())
        for r in self.rows:
            writer.writerow([r.label] + [f"{v:.4f}" for v in r.values()])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsReport":
        reader = csv.DictReader(io.StringIO(text))
        rows = []
        for rec in reader:
            rows.append(
                MetricsRow(
                    rec["label"],
                    float(rec["entropy"]),
                    float(rec["avg_gradient"]),
                    float(rec["std_dev"]),
                    float(rec["edge_strength"]),
                    float(rec["mse"]) if rec.get("mse") not in (None, "") else None,
                )
            )
        return cls(rows)


def report(sources, fused, labels=None, ref=None) -> MetricsReport:
    """One row per source (in order) followed by the fused image.

    ``labels`` defaults to ``Image 1 .. Image n`` and ``Fused image``.  With
    ``ref`` every row also carries its MSE against that reference.
    """
    images = list(sources) + [fused]
    if labels is None:
        labels = [f"Image {i + 1}" for i in range(len(sources))] + ["Fused image"]
    if len(labels) != len(images):
        raise ValueError(f"expected {len(images)} labels, got {len(labels)}")
    shape = np.shape(images[0])
    for lab, im in zip(labels, images):
        if np.shape(im) != shape:
            raise ShapeMismatchError(f"{lab} has shape {np.shape(im)}, expected {shape}")
    return MetricsReport([MetricsRow.measure(lab, im, ref) for lab, im in zip(labels, images)])
