"""Finite signal constellations and their energy vectors."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from capshape.errors import InvalidInputError


@dataclass(frozen=True)
class Constellation:
    """Finite set of complex signal points.

    ``energies[i] == abs(points[i]) ** 2`` is cached at construction since it
    enters every inner loop. Instances are read-only.
    """

    points: np.ndarray
    label: str = ""
    energies: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.complex128).reshape(-1)
        if pts.size == 0:
            raise InvalidInputError("constellation must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("constellation points must be finite")
        if np.unique(pts).size != pts.size:
            raise InvalidInputError("constellation points must be distinct")
        pts.setflags(write=False)
        w = pts.real**2 + pts.imag**2
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "energies", w)

    @property
    def size(self) -> int:
        return int(self.points.size)

    def __len__(self):
        return self.size

    def scaled(self, s: float) -> "Constellation":
        return Constellation(self.points * s, label=self.label)

    def to_json(self) -> dict:
        out = {"points": [[float(z.real), float(z.imag)] for z in self.points]}
        if self.label:
            out["label"] = self.label
        return out


def make_square_qam(order: int, max_energy: float) -> Constellation:
    """Square QAM grid scaled so that the corner points have energy ``max_energy``.

    Points are indexed row-major: index ``r * k + c`` has in-phase coordinate
    from column ``c`` and quadrature coordinate from row ``r``, where
    ``k = sqrt(order)``.
    """
    if isinstance(order, bool) or int(order) != order:
        raise InvalidInputError(f"invalid QAM order {order!r}")
    order = int(order)
    k = math.isqrt(order) if order > 0 else 0
    if order < 4 or k * k != order:
        raise InvalidInputError(f"invalid QAM order {order}: must be a perfect square >= 4")
    if not max_energy > 0:
        raise InvalidInputError(f"invalid QAM scale: max_energy must be > 0, got {max_energy}")
    levels = np.arange(-(k - 1), k, 2, dtype=float)
    scale = math.sqrt(max_energy / (2.0 * (k - 1) ** 2))
    re = np.tile(levels, k)
    im = np.repeat(levels, k)
    return Constellation((re + 1j * im) * scale, label=f"{order}-QAM")


def feasible_energy_range(c: Constellation) -> tuple[float, float]:
    return float(c.energies.min()), float(c.energies.max())


def load_constellation(path) -> Constellation:
    """Read a constellation from JSON ``{"points": [[re, im], ...], "label": ...}``."""
    data = json.loads(Path(path).read_text())
    try:
        pts = np.asarray(data["points"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: expected a 'points' list of [re, im] pairs") from exc
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"{path}: expected a 'points' list of [re, im] pairs")
    return Constellation(pts[:, 0] + 1j * pts[:, 1], label=str(data.get("label", "")))
