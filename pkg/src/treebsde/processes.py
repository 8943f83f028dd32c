"""Adapted, predictable and ladlag process containers on a scenario tree.

Storage conventions:
  * AdaptedProcess: one value per (step, node); measurability is structural.
  * PredictableProcess: the value acting on the interval (t_k, t_{k+1}] is
    stored on the step-k node, which makes sibling-constancy structural.
  * LadlagProcess: triples (left_limit, value, right_limit) per (step, node);
    paths are constant on open intervals, so left_limit at t_{k+1} equals the
    right_limit at t_k for genuine paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotAMartingaleError
from .tree import ScenarioTree


def _as_step_arrays(tree: ScenarioTree, values, n_entries: int) -> list:
    out = []
    for k, v in enumerate(values):
        a = np.asarray(v, dtype=float)
        if a.shape[0] != tree.n_nodes(k):
            raise ValueError(f"step {k}: got {a.shape[0]} values for {tree.n_nodes(k)} nodes")
        out.append(a)
    if len(out) != n_entries:
        raise ValueError(f"expected {n_entries} step arrays, got {len(out)}")
    return out


@dataclass
class AdaptedProcess:
    """Node-indexed process: values[k] holds one entry per step-k node."""

    tree: ScenarioTree
    values: list

    def __post_init__(self):
        self.values = _as_step_arrays(self.tree, self.values, self.tree.n_steps + 1)

    @classmethod
    def constant(cls, tree: ScenarioTree, c: float) -> "AdaptedProcess":
        return cls(tree, [np.full(tree.n_nodes(k), float(c)) for k in range(tree.n_steps + 1)])

    @classmethod
    def from_terminal(cls, tree: ScenarioTree, xi: np.ndarray) -> "AdaptedProcess":
        """Closed martingale E_t[xi] built by backward conditional expectation."""
        vals = [None] * (tree.n_steps + 1)
        vals[tree.n_steps] = np.asarray(xi, dtype=float)
        for k in range(tree.n_steps, 0, -1):
            vals[k - 1] = tree.cond_exp(vals[k], k)
        return cls(tree, vals)

    @classmethod
    def from_function(cls, tree: ScenarioTree, fn) -> "AdaptedProcess":
        """fn(tree, step) -> array over step-k nodes."""
        return cls(tree, [np.asarray(fn(tree, k), dtype=float) for k in range(tree.n_steps + 1)])

    def __add__(self, other):
        return AdaptedProcess(self.tree, [a + b for a, b in zip(self.values, other.values)])

    def __sub__(self, other):
        return AdaptedProcess(self.tree, [a - b for a, b in zip(self.values, other.values)])

    def scale(self, c: float) -> "AdaptedProcess":
        return AdaptedProcess(self.tree, [c * a for a in self.values])

    def increments(self) -> list:
        """List of n_steps arrays: X_{k+1} - X_k lifted onto step-(k+1) nodes."""
        return [self.values[k + 1] - self.tree.lift(self.values[k], k)
                for k in range(self.tree.n_steps)]

    def martingale_defect(self) -> tuple:
        """(max |E_k[dX_{k+1}]|, step, node) over all nodes."""
        worst, ws, wn = 0.0, -1, -1
        for k in range(self.tree.n_steps):
            e = self.tree.cond_exp(self.values[k + 1], k + 1) - self.values[k]
            i = int(np.abs(e).argmax())
            if abs(e[i]) > worst:
                worst, ws, wn = abs(float(e[i])), k, i
        return worst, ws, wn

    def require_martingale(self, tol: float = 1e-12):
        defect, step, node = self.martingale_defect()
        if defect > tol:
            raise NotAMartingaleError(
                f"martingale defect {defect:.3e} > {tol} at step {step}, node {node}",
                step=step, node=node, defect=defect,
            )


@dataclass
class PredictableProcess:
    """Process acting on (t_k, t_{k+1}], stored on the step-k node (k = 0..n-1).

    Entries may be scalar (shape (n_k,)) or vector valued (shape (n_k, d)).
    """

    tree: ScenarioTree
    values: list

    def __post_init__(self):
        self.values = _as_step_arrays(self.tree, self.values, self.tree.n_steps)

    @classmethod
    def zeros(cls, tree: ScenarioTree, d: int = 0) -> "PredictableProcess":
        shape = (lambda n: (n,)) if d == 0 else (lambda n: (n, d))
        return cls(tree, [np.zeros(shape(tree.n_nodes(k))) for k in range(tree.n_steps)])

    def __sub__(self, other):
        return PredictableProcess(self.tree, [a - b for a, b in zip(self.values, other.values)])

    def cumulative(self) -> AdaptedProcess:
        """Running sum booked at the right endpoint: A_0 = 0, A_{k+1} = A_k + dA_{k+1}."""
        tree = self.tree
        vals = [np.zeros(1)]
        for k in range(tree.n_steps):
            vals.append(tree.lift(vals[k], k) + tree.lift(self.values[k], k))
        return AdaptedProcess(tree, vals)


def stochastic_integral(tree: ScenarioTree, z: PredictableProcess) -> AdaptedProcess:
    """(Z * W)_k = sum_{j<k} Z_j . dW_{j+1}, an exact martingale on the tree."""
    vals = [np.zeros(1)]
    for k in range(tree.n_steps):
        zc = tree.lift(z.values[k], k)
        inc = np.einsum("ni,ni->n", zc, tree.dw[k + 1]) if zc.ndim == 2 else zc * tree.dw[k + 1][:, 0]
        vals.append(tree.lift(vals[k], k) + inc)
    return AdaptedProcess(tree, vals)


@dataclass
class LadlagProcess:
    """Triple-slot process: (left_limit, value, right_limit) per (step, node)."""

    tree: ScenarioTree
    left: list
    value: list
    right: list

    def __post_init__(self):
        n = self.tree.n_steps + 1
        self.left = _as_step_arrays(self.tree, self.left, n)
        self.value = _as_step_arrays(self.tree, self.value, n)
        self.right = _as_step_arrays(self.tree, self.right, n)

    @classmethod
    def from_cadlag(cls, x: AdaptedProcess) -> "LadlagProcess":
        """Cadlag embedding: left_limit(k) = value(k-1), right_limit = value."""
        tree = x.tree
        left = [x.values[0].copy()]
        for k in range(1, tree.n_steps + 1):
            left.append(tree.lift(x.values[k - 1], k - 1))
        return cls(tree, left, [v.copy() for v in x.values], [v.copy() for v in x.values])

    def right_jumps(self) -> list:
        """Announced drops value - right_limit at each step."""
        return [self.value[k] - self.right[k] for k in range(self.tree.n_steps + 1)]

    def path_consistency_defect(self) -> float:
        """max |left_limit(k+1) - right_limit(k)| over the tree."""
        worst = 0.0
        for k in range(self.tree.n_steps):
            gap = self.left[k + 1] - self.tree.lift(self.right[k], k)
            worst = max(worst, float(np.abs(gap).max()))
        return worst
