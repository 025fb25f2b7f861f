"""Natural cubic spline bases without an intercept column.

The basis follows the usual B-spline construction: cubic B-splines on the
knot sequence with fourfold boundary knots, the first one dropped so that
every function vanishes at the lower boundary, then projected onto the null
space of the second derivatives at both boundaries. Outside the boundary
knots the functions continue linearly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline

MIN_DISTINCT = 5
KNOT_PERCENTILES = (25.0, 50.0, 75.0)


@dataclass(frozen=True)
class SplineBasis:
    interior_knots: tuple
    boundary_knots: tuple

    def __post_init__(self):
        interior = tuple(float(k) for k in self.interior_knots)
        lo, hi = (float(b) for b in self.boundary_knots)
        if not lo < hi:
            raise ValueError("boundary knots must satisfy low < high")
        if any(not lo < k < hi for k in interior):
            raise ValueError("interior knots must lie strictly inside the boundary knots")
        if any(b <= a for a, b in zip(interior, interior[1:])):
            raise ValueError("interior knots must be strictly increasing")
        object.__setattr__(self, "interior_knots", interior)
        object.__setattr__(self, "boundary_knots", (lo, hi))

    @property
    def dimension(self) -> int:
        return len(self.interior_knots) + 1

    @cached_property
    def _pieces(self):
        """Power-form coefficients of every polynomial piece, projected onto the basis.

        Piece ``j`` starts at ``breaks[j - 1]`` (piece 0 is the lower linear
        tail, anchored at the lower boundary) and holds ``c[j, m, :]`` with
        ``f(x) = sum_m c[j, m] * (x - base_j) ** m``.
        """
        lo, hi = self.boundary_knots
        breaks = np.array((lo, *self.interior_knots, hi))
        t = np.concatenate([[lo] * 3, breaks, [hi] * 3])
        nb = len(t) - 4
        spl = BSpline(t, np.eye(nb), 3)
        derivs = [spl] + [spl.derivative(m) for m in (1, 2, 3)]
        const = derivs[2](np.array([lo, hi]))[:, 1:]
        q, _ = np.linalg.qr(const.T, mode="complete")
        proj = q[:, 2:]
        fact = (1.0, 1.0, 2.0, 6.0)
        coef = np.zeros((len(breaks) + 1, 4, self.dimension))
        left = breaks[:-1]
        for m in range(4):
            coef[1:-1, m] = derivs[m](left)[:, 1:] @ proj / fact[m]
        for j, x in ((0, lo), (len(breaks), hi)):
            coef[j, 0] = spl(np.array([x]))[:, 1:] @ proj
            coef[j, 1] = derivs[1](np.array([x]))[:, 1:] @ proj
        base = np.concatenate([[lo], breaks])
        return breaks, base, coef

    def evaluate(self, x, deriv: int = 0) -> np.ndarray:
        """Basis values (or derivatives) at ``x``; shape ``x.shape + (K,)``."""
        if deriv not in (0, 1, 2):
            raise ValueError("deriv must be 0, 1 or 2")
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        breaks, base, coef = self._pieces
        j = np.searchsorted(breaks, flat, side="right")
        d = (flat - base[j])[:, None]
        c = coef[j]
        if deriv == 0:
            out = c[:, 0] + d * (c[:, 1] + d * (c[:, 2] + d * c[:, 3]))
        elif deriv == 1:
            out = c[:, 1] + d * (2.0 * c[:, 2] + d * (3.0 * c[:, 3]))
        else:
            out = 2.0 * c[:, 2] + d * (6.0 * c[:, 3])
        return out.reshape(x.shape + (self.dimension,))

    def to_dict(self) -> dict:
        return {"interior_knots": list(self.interior_knots), "boundary_knots": list(self.boundary_knots)}

    @classmethod
    def from_dict(cls, d) -> "SplineBasis":
        return cls(tuple(d["interior_knots"]), tuple(d["boundary_knots"]))


def evaluate_basis(basis: SplineBasis, x) -> np.ndarray:
    return basis.evaluate(x)


def select_knots(values, percentiles=KNOT_PERCENTILES):
    """Interior knots at percentiles of ``values``; boundary knots at the range.

    Percentiles use linear interpolation between order statistics
    (position ``(n - 1) p``). Knots that coincide with each other or with a
    boundary are dropped, so the basis dimension can shrink.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    values = values[np.isfinite(values)]
    if len(np.unique(values)) < MIN_DISTINCT:
        raise ValueError("insufficient support for spline knots")
    lo, hi = float(values.min()), float(values.max())
    q = np.quantile(values, np.asarray(percentiles) / 100.0)
    interior = tuple(float(k) for k in np.unique(q) if lo < k < hi)
    return interior, (lo, hi)


def basis_from_values(values, percentiles=KNOT_PERCENTILES) -> SplineBasis:
    interior, boundary = select_knots(values, percentiles)
    return SplineBasis(interior, boundary)
