"""Concrete problems: L2-regularized hinge-loss SVM and a 1-D median test instance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import Ball, Box, Problem, Vector, as_vector

# Margin classification codes returned by HingeLossSvm.margin_classes.
ACTIVE, KINK, INACTIVE = 1, 0, -1


class HingeLossSvm(Problem):
    """``reg_coeff * ||x||^2 + mean_i max(0, 1 - z_i * x.w_i)`` over selected rows.

    ``features`` may be a dense ``(N, n)`` array or a ``scipy.sparse`` matrix;
    ``labels`` must be +/-1.  A hinge term is *active* when its margin
    ``1 - z_i x.w_i`` exceeds ``kink_tol``, *inactive* below ``-kink_tol`` and
    a *kink* in between; at kinks the subdifferential is a box parameterized
    by per-term coefficients ``beta in [0, 1]``.
    """

    def __init__(self, features, labels, reg_coeff: float = 10.0, kink_tol: float = 1e-12):
        if sp.issparse(features):
            feat = sp.csr_matrix(features).astype(np.float64)
        else:
            feat = np.asarray(features, dtype=np.float64)
            if feat.ndim != 2:
                raise ValueError(f"features must be 2-D, got shape {feat.shape}")
        labels = np.asarray(labels, dtype=np.float64)
        if labels.shape != (feat.shape[0],):
            raise ValueError("labels must have one entry per feature row")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if reg_coeff < 0:
            raise ValueError(f"reg_coeff must be >= 0, got {reg_coeff}")
        if kink_tol <= 0:
            raise ValueError(f"kink_tol must be > 0, got {kink_tol}")
        self._feat = feat
        self._labels = labels
        self._labels.setflags(write=False)
        self.reg_coeff = float(reg_coeff)
        self.kink_tol = float(kink_tol)

    @classmethod
    def from_dataset(cls, dataset, reg_coeff: float = 10.0, kink_tol: float = 1e-12) -> "HingeLossSvm":
        return cls(dataset.features, dataset.labels, reg_coeff=reg_coeff, kink_tol=kink_tol)

    @property
    def dimension(self) -> int:
        return self._feat.shape[1]

    @property
    def ground_size(self) -> int:
        return self._feat.shape[0]

    def _margins(self, x: Vector, idx) -> np.ndarray:
        rows = self._feat[idx]
        prods = rows @ x
        prods = np.asarray(prods).ravel()
        return 1.0 - self._labels[idx] * prods

    def margin_classes(self, x: Vector, idx) -> np.ndarray:
        """Per-term classification: ACTIVE (1), KINK (0) or INACTIVE (-1)."""
        m = self._margins(x, idx)
        out = np.where(m > self.kink_tol, ACTIVE, INACTIVE)
        out[np.abs(m) <= self.kink_tol] = KINK
        return out

    def value(self, x: Vector, idx) -> float:
        if len(idx) == 0:
            raise ValueError("index set must be nonempty")
        m = self._margins(x, idx)
        return self.reg_coeff * float(x @ x) + float(np.mean(np.maximum(0.0, m)))

    def full_value(self, x: Vector) -> float:
        m = 1.0 - self._labels * np.asarray(self._feat @ x).ravel()
        return self.reg_coeff * float(x @ x) + float(np.mean(np.maximum(0.0, m)))

    def subgradient(self, x: Vector, idx, beta=None) -> Vector:
        """Subgradient with kink coefficients ``beta`` (defaults to all zeros).

        For every ``beta in [0, 1]^kinks`` the result is a valid subgradient
        of the sample-average objective at ``x``.
        """
        if len(idx) == 0:
            raise ValueError("index set must be nonempty")
        classes = self.margin_classes(x, idx)
        coeff = (classes == ACTIVE).astype(np.float64)
        kinks = np.flatnonzero(classes == KINK)
        if beta is not None:
            beta = np.asarray(beta, dtype=np.float64)
            if beta.shape != (len(kinks),):
                raise ValueError(f"expected {len(kinks)} kink coefficients, got shape {beta.shape}")
            if np.any(beta < 0.0) or np.any(beta > 1.0):
                raise ValueError("kink coefficients must lie in [0, 1]")
            coeff[kinks] = beta
        rows = self._feat[idx]
        weights = coeff * self._labels[idx]
        data_part = -np.asarray(rows.T @ weights).ravel() / len(idx)
        return 2.0 * self.reg_coeff * x + data_part

    def directional_sup(self, x: Vector, idx, p: Vector) -> float:
        """Exact ``sup { g.p : g in subdifferential at x }`` over the sample ``idx``.

        The hinge subdifferential is separable over terms, so the supremum is
        the active-part inner product plus ``max(0, -z_i w_i . p)`` per kink.
        """
        p = as_vector(p, dim=self.dimension)
        classes = self.margin_classes(x, idx)
        rows = self._feat[idx]
        t = -self._labels[idx] * np.asarray(rows @ p).ravel()  # (-z_i w_i) . p
        total = float(np.sum(t[classes == ACTIVE]))
        total += float(np.sum(np.maximum(0.0, t[classes == KINK])))
        return 2.0 * self.reg_coeff * float(x @ p) + total / len(idx)

    def descent_subgradient(self, x: Vector, idx, zeta: float, margin: float):
        """Greedy corner search over kink coefficients, favouring descent.

        Starting from ``beta = 0``, each kink coefficient is flipped to 1 in a
        single sweep whenever the flip strictly decreases the directional
        supremum along the updated direction ``-zeta * g``.  The result is
        always a valid subgradient; ``certified`` reports whether
        ``sup g'.p <= -(margin/2) ||p||^2`` holds for the final direction.
        """
        if margin <= 0:
            raise ValueError(f"descent margin must be > 0, got {margin}")
        classes = self.margin_classes(x, idx)
        kinks = np.flatnonzero(classes == KINK)
        g = self.subgradient(x, idx, beta=np.zeros(len(kinks)))
        if len(kinks) > 0:
            rows = self._feat[idx]
            labels = self._labels[idx]
            sup = self.directional_sup(x, idx, -zeta * g)
            for j in kinks:
                row = rows[j].toarray().ravel() if sp.issparse(rows) else rows[j]
                candidate = g + (-labels[j] * row) / len(idx)
                cand_sup = self.directional_sup(x, idx, -zeta * candidate)
                if cand_sup < sup:
                    g, sup = candidate, cand_sup
        else:
            sup = self.directional_sup(x, idx, -zeta * g)
        p_norm_sq = zeta * zeta * float(g @ g)
        certified = sup <= -(margin / 2.0) * p_norm_sq
        return g, bool(certified)


@dataclass(frozen=True)
class MedianL1(Problem):
    """``f(x) = mean_i |x - a_i|`` on the interval ``[-radius, radius]``.

    The optimum is any median of the anchors clipped to the interval, which
    makes this a convenient convergence oracle: the optimal value is known
    without running any solver.
    """

    anchors: np.ndarray
    radius: float = 10.0

    def __post_init__(self):
        a = np.asarray(self.anchors, dtype=np.float64)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("anchors must be a nonempty 1-D array")
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "anchors", a)

    @property
    def dimension(self) -> int:
        return 1

    @property
    def ground_size(self) -> int:
        return self.anchors.size

    @property
    def region(self) -> Box:
        return Box(lower=np.array([-self.radius]), upper=np.array([self.radius]))

    def value(self, x: Vector, idx) -> float:
        if len(idx) == 0:
            raise ValueError("index set must be nonempty")
        d = np.abs(x[0] - self.anchors[idx])
        return float(d.sum()) / d.size

    def full_value(self, x: Vector) -> float:
        d = np.abs(x[0] - self.anchors)
        return float(d.sum()) / d.size

    def subgradient(self, x: Vector, idx) -> Vector:
        # sign(0) = 0 picks the midpoint of the subdifferential at anchors
        s = np.sign(x[0] - self.anchors[idx])
        return np.array([float(s.sum()) / s.size])


def median_optimum(problem: MedianL1) -> float:
    """Minimizer of the full-sample objective: the anchor median clipped to the region."""
    return float(np.clip(np.median(problem.anchors), -problem.radius, problem.radius))


def median_value(problem: MedianL1) -> float:
    """Optimal full-sample value, computed independently of any solver."""
    x_star = median_optimum(problem)
    return float(np.mean(np.abs(x_star - problem.anchors)))
