"""Dörfler (bulk) marking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import IndicatorField

DEFAULT_OMEGA = 0.25


@dataclass(frozen=True)
class MarkParams:
    omega: float = DEFAULT_OMEGA

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ValueError(f"omega must lie in (0, 1), got {self.omega}")


@dataclass(frozen=True)
class Marked:
    """Marked triangle ids (ascending) and whether the estimator vanished."""

    ids: np.ndarray
    converged: bool = False

    def __len__(self):
        return len(self.ids)


def mark(field: IndicatorField, params: MarkParams = MarkParams()) -> Marked:
    """Smallest set of triangles carrying ``omega`` of ``η_Ω²``.

    Triangles are taken in descending order of ``η_T`` (ties by ascending id)
    until the squared sum reaches ``omega * η_Ω²``.
    """
    eta2 = np.asarray(field.eta, dtype=float) ** 2
    if eta2.size == 0:
        raise ValueError("empty indicator field")
    total = eta2.sum()
    if total == 0.0:
        return Marked(np.empty(0, dtype=np.int64), converged=True)
    order = np.lexsort((np.arange(eta2.size), -eta2))
    csum = np.cumsum(eta2[order])
    count = int(np.searchsorted(csum, params.omega * total, side="left")) + 1
    return Marked(np.sort(order[: min(count, eta2.size)]))
