"""Bundle models: piecewise-affine surrogates built from past linearizations.

A primal model is a max of affine minorants of f, optionally floored by a
known lower bound. A dual model is a min of affine majorants of q (or q_rho),
optionally capped by a known upper bound; it is stored internally as the
max-of-affine model of -q so the same subproblem machinery serves both.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np


class Policy(str, enum.Enum):
    SINGLE_CUT = "single_cut"
    POLYAK = "polyak"
    CUTTING_PLANE = "cutting_plane"
    POLYAK_CUTTING_PLANE = "polyak_cutting_plane"
    TWO_CUT = "two_cut"


class Orientation(str, enum.Enum):
    PRIMAL = "primal"   # max of affine minorants
    DUAL = "dual"       # min of affine majorants


_NEEDS_FLAT = {Policy.POLYAK, Policy.POLYAK_CUTTING_PLANE}
_DEDUP_TOL = 1e-14
_SIMPLEX_TOL = 1e-8


@dataclass(frozen=True)
class Cut:
    """Affine function x -> <slope, x> + offset."""

    slope: np.ndarray
    offset: float
    source_index: int = 0

    def __call__(self, x) -> float:
        return float(np.dot(self.slope, x)) + self.offset

    def negated(self) -> "Cut":
        return Cut(-self.slope, -self.offset, self.source_index)

    def same_as(self, other: "Cut") -> bool:
        scale = 1.0 + max(abs(self.offset), float(np.max(np.abs(self.slope), initial=0.0)))
        return (abs(self.offset - other.offset) <= _DEDUP_TOL * scale
                and np.all(np.abs(self.slope - other.slope) <= _DEDUP_TOL * scale))


def linearization(anchor, value, gradient, source_index=0) -> Cut:
    """Cut through (anchor, value) with the given slope."""
    g = np.array(gradient, dtype=float)
    return Cut(g, float(value) - float(np.dot(g, anchor)), source_index)


class BundleModel:
    """Cut collection managed by one of the five update policies.

    Parameters
    ----------
    policy : Policy
    window : int
        Number of cuts kept by the cutting-plane policies.
    flat_bound : float, optional
        Lower bound of f (primal) or upper bound of q (dual). Required by the
        Polyak policies, ignored by the others.
    orientation : Orientation
    """

    def __init__(self, policy=Policy.CUTTING_PLANE, window: int = 1,
                 flat_bound: Optional[float] = None, orientation=Orientation.PRIMAL):
        self.policy = Policy(policy)
        self.orientation = Orientation(orientation)
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = int(window)
        if self.policy in _NEEDS_FLAT:
            if flat_bound is None:
                raise ValueError(f"{self.policy.value} model requires a flat bound")
            self.flat_bound = float(flat_bound)
        else:
            self.flat_bound = None
        self._cuts: list[Cut] = []   # internal max-of-affine representation
        self._count = 0

    # -- sign handling -----------------------------------------------------
    @property
    def _sign(self) -> float:
        return -1.0 if self.orientation is Orientation.DUAL else 1.0

    @property
    def _flat_internal(self) -> Optional[float]:
        return None if self.flat_bound is None else self._sign * self.flat_bound

    @property
    def cuts(self) -> list[Cut]:
        """Cuts in the caller's orientation (majorants of q for dual models)."""
        if self.orientation is Orientation.DUAL:
            return [c.negated() for c in self._cuts]
        return list(self._cuts)

    @property
    def source_indices(self) -> list[int]:
        return [c.source_index for c in self._cuts]

    def __len__(self):
        return len(self._cuts)

    def is_empty(self) -> bool:
        return not self._cuts and self.flat_bound is None

    # -- updates -----------------------------------------------------------
    def observe(self, anchor, value, gradient, weights=None, source_index=None) -> "BundleModel":
        """Add the linearization of the modelled function at ``anchor``.

        ``value``/``gradient`` are those of f (primal) or of q (dual).
        ``weights`` are simplex weights over the exported rows of the current
        model; the two-cut policy uses them to aggregate.
        """
        anchor = np.asarray(anchor, dtype=float)
        gradient = np.asarray(gradient, dtype=float)
        if self._cuts and gradient.shape != self._cuts[0].slope.shape:
            raise ValueError("gradient dimension does not match the model")
        if anchor.shape != gradient.shape:
            raise ValueError("anchor and gradient dimensions differ")
        if not np.isfinite(value):
            raise ValueError("cannot add a cut with non-finite value")
        idx = self._count if source_index is None else int(source_index)
        self._count = max(self._count, idx) + 1
        s = self._sign
        fresh = linearization(anchor, s * value, s * gradient, idx)

        if self.policy in (Policy.SINGLE_CUT, Policy.POLYAK):
            self._cuts = [fresh]
        elif self.policy in (Policy.CUTTING_PLANE, Policy.POLYAK_CUTTING_PLANE):
            self._cuts = [c for c in self._cuts if not c.same_as(fresh)]
            self._cuts.append(fresh)
            while len(self._cuts) > self.window:
                oldest = min(range(len(self._cuts)), key=lambda i: self._cuts[i].source_index)
                del self._cuts[oldest]
        else:  # two-cut
            if self._cuts:
                agg = self._aggregate(anchor, weights)
                self._cuts = [fresh] if agg.same_as(fresh) else [agg, fresh]
            else:
                self._cuts = [fresh]
        return self

    def _aggregate(self, anchor, weights) -> Cut:
        A, b, has_flat, flat = self._internal_rows()
        if weights is not None:
            lam = self._check_weights(weights, A.shape[0])
            slope = lam @ A
            offset = float(lam @ b)   # convex combination of cuts: still a minorant
        else:
            slope = self._active_slope_internal(anchor)
            offset = self._value_internal(anchor) - float(slope @ anchor)
        return Cut(slope, offset, self._cuts[-1].source_index)

    # -- queries -----------------------------------------------------------
    def _internal_rows(self):
        if not self._cuts:
            raise ValueError("model has no cuts")
        A = np.array([c.slope for c in self._cuts])
        b = np.array([c.offset for c in self._cuts])
        flat = self._flat_internal
        if flat is not None:
            A = np.vstack([A, np.zeros(A.shape[1])])
            b = np.append(b, flat)
        return A, b, flat is not None, flat

    def _value_internal(self, x) -> float:
        vals = [c(x) for c in self._cuts]
        if self._flat_internal is not None:
            vals.append(self._flat_internal)
        if not vals:
            raise ValueError("empty model")
        return max(vals)

    def evaluate(self, x) -> float:
        """Model value at x (max of cuts for primal, min for dual)."""
        return self._sign * self._value_internal(np.asarray(x, dtype=float))

    __call__ = evaluate

    def _check_weights(self, weights, M):
        lam = np.asarray(weights, dtype=float)
        if lam.shape != (M,):
            raise ValueError(f"expected {M} weights, got shape {lam.shape}")
        if lam.min() < -_SIMPLEX_TOL or abs(lam.sum() - 1.0) > _SIMPLEX_TOL:
            raise ValueError("weights are not on the simplex")
        return lam

    def _active_slope_internal(self, x):
        vals = np.array([c(x) for c in self._cuts])
        top = vals.max()
        flat = self._flat_internal
        if flat is not None and flat > top:
            return np.zeros_like(self._cuts[0].slope)
        tol = 1e-12 * (1.0 + abs(top))
        active = [i for i in range(len(self._cuts)) if vals[i] >= top - tol]
        i = min(active, key=lambda j: self._cuts[j].source_index)
        return self._cuts[i].slope.copy()

    def subgradient(self, x, weights=None) -> np.ndarray:
        """Element of the (super)differential of the model at x.

        With ``weights`` the weighted combination of exported rows is
        returned; otherwise the slope of the active cut with the smallest
        source index.
        """
        x = np.asarray(x, dtype=float)
        if weights is not None:
            A, _, _, _ = self._internal_rows()
            lam = self._check_weights(weights, A.shape[0])
            return self._sign * (lam @ A)
        if not self._cuts:
            raise ValueError("model has no cuts")
        return self._sign * self._active_slope_internal(x)

    def export_cuts(self):
        """Rows of the max-of-affine form used by the subproblem.

        Returns (A_tilde, b_tilde, has_flat, flat). For a dual model these
        describe -q_hat. When a flat bound is present it is appended as a
        zero-slope last row.
        """
        A, b, has_flat, flat = self._internal_rows()
        return A, b, has_flat, (0.0 if flat is None else flat)

    def warm_weights(self, prev_sources, prev_weights) -> Optional[np.ndarray]:
        """Carry simplex weights from an earlier export over to the current rows."""
        if prev_weights is None:
            return None
        prev_weights = np.asarray(prev_weights, dtype=float)
        srcs = self.source_indices
        lookup = {s: w for s, w in zip(prev_sources, prev_weights)}
        lam = [lookup.get(s, 0.0) for s in srcs]
        if self._flat_internal is not None:
            lam.append(prev_weights[-1] if len(prev_weights) == len(prev_sources) + 1 else 0.0)
        lam = np.maximum(np.array(lam), 0.0)
        if lam.sum() <= 0:
            return None
        return lam / lam.sum()


def eval_model(model: BundleModel, x) -> float:
    return model.evaluate(x)


def model_subgradient(model: BundleModel, x, weights=None) -> np.ndarray:
    return model.subgradient(x, weights)


def export_cuts(model: BundleModel):
    return model.export_cuts()
