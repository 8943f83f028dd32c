"""Weighted path norms on tree processes and the explicit inequality constants.

Discrete transcriptions, with T the horizon and dt the step:
  * S^p:        E[ sup_k |Y_k|^p ]                          (all slots for ladlag)
  * H^{p,a}:    E[ ( sum_k e^{a t_{k+1}} |Z_k|^2 dt )^{p/2} ]
  * M^{p,a}:    E[ ( sum_k e^{a t_{k+1}} (dM_{k+1})^2 )^{p/2} ]
  * I^{p,a}:    E[ ( sum_k e^{(a/2) t_{k+1}} |dK_{k+1}| )^p ]
Integral weights sit at the right endpoint of each interval: jumps of M and K
are booked at t_{k+1}, and the same convention is kept for the ds-integrals so
that the assembled inequality constants stay valid in discrete time.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .processes import AdaptedProcess, LadlagProcess, PredictableProcess
from .tree import ScenarioTree


@dataclass(frozen=True)
class NormConfig:
    p: float
    alpha: float = 0.0

    def __post_init__(self):
        if self.p <= 1.0:
            raise ValueError(f"integrability exponent must satisfy p > 1, got {self.p}")
        if self.alpha < 0.0:
            raise ValueError(f"exponential weight must satisfy alpha >= 0, got {self.alpha}")


def _accumulate(tree: ScenarioTree, per_step) -> np.ndarray:
    """Sum per-interval contributions (indexed by the left-endpoint node) to the leaves."""
    acc = np.zeros(1)
    for k in range(tree.n_steps):
        acc = tree.lift(acc, k) + tree.lift(np.asarray(per_step(k), dtype=float), k)
    return acc


def _running_sup(tree: ScenarioTree, slots_at) -> np.ndarray:
    """Leafwise sup over steps of slot magnitudes; slots_at(k) -> array(s) at step k."""
    sup = None
    for k in range(tree.n_steps + 1):
        here = np.abs(np.asarray(slots_at(k), dtype=float))
        sup = here if sup is None else np.maximum(tree.lift(sup, k - 1), here)
    return sup


def _wr(tree: ScenarioTree, alpha: float, k: int) -> float:
    """Right-endpoint weight e^{alpha t_{k+1}} for interval k."""
    return math.exp(alpha * tree.grid.times[k + 1])


def norm_sp(y, p: float, weights=None) -> float:
    """S^p norm. `y` is adapted or ladlag; `weights` optionally scales step k slots."""
    tree = y.tree
    w = weights if weights is not None else (lambda k: 1.0)
    if isinstance(y, LadlagProcess):
        sup = _running_sup(tree, lambda k: w(k) * np.maximum(
            np.abs(y.left[k]), np.maximum(np.abs(y.value[k]), np.abs(y.right[k]))))
    else:
        sup = _running_sup(tree, lambda k: w(k) * y.values[k])
    return float(np.dot(tree.path_prob[tree.n_steps], sup**p)) ** (1.0 / p)


def norm_sp_weighted(y, p: float, alpha: float) -> float:
    """S^p norm of e^{(alpha/2) t} Y."""
    times = y.tree.grid.times
    return norm_sp(y, p, weights=lambda k: math.exp(0.5 * alpha * times[k]))


def norm_h(z: PredictableProcess, p: float, alpha: float) -> float:
    """H^{p,alpha} norm of a predictable (possibly vector) integrand."""
    tree = z.tree
    dt = tree.dt

    def sq(k):
        v = z.values[k]
        s = np.einsum("ni,ni->n", v, v) if v.ndim == 2 else v * v
        return _wr(tree, alpha, k) * s * dt

    acc = _accumulate(tree, sq)
    return float(np.dot(tree.path_prob[tree.n_steps], acc ** (p / 2.0))) ** (1.0 / p)


def norm_h1(x: AdaptedProcess, p: float, alpha: float) -> float:
    """H^{p,alpha}_1 norm of a scalar adapted integrand (value held on [t_k, t_{k+1}))."""
    tree = x.tree
    dt = tree.dt
    acc = _accumulate(tree, lambda k: _wr(tree, alpha, k) * x.values[k] ** 2 * dt)
    return float(np.dot(tree.path_prob[tree.n_steps], acc ** (p / 2.0))) ** (1.0 / p)


def bracket(tree: ScenarioTree, increments) -> np.ndarray:
    """Leafwise sum of squared jump increments; `increments(k)` at step-(k+1) nodes."""
    acc = np.zeros(1)
    for k in range(tree.n_steps):
        acc = tree.lift(acc, k) + np.asarray(increments(k), dtype=float) ** 2
    return acc


def norm_m(m: AdaptedProcess, p: float, alpha: float) -> float:
    """M^{p,alpha} norm of a martingale via its pure-jump bracket sum (dM)^2."""
    tree = m.tree
    inc = m.increments()
    acc = np.zeros(1)
    for k in range(tree.n_steps):
        acc = tree.lift(acc, k) + _wr(tree, alpha, k) * inc[k] ** 2
    return float(np.dot(tree.path_prob[tree.n_steps], acc ** (p / 2.0))) ** (1.0 / p)


def norm_m_composite(z: PredictableProcess, fv: AdaptedProcess, p: float, alpha: float) -> float:
    """M^{p,alpha} norm of N = Z*W + (orthogonal part), with bracket
    d[N] = |Z|^2 dt + (d fv)^2.  Orthogonality of the walk and the residual
    makes this the correct bracket decomposition on the tree."""
    tree = z.tree
    dt = tree.dt
    inc = fv.increments()
    acc = np.zeros(1)
    for k in range(tree.n_steps):
        v = z.values[k]
        s = np.einsum("ni,ni->n", v, v) if v.ndim == 2 else v * v
        acc = tree.lift(acc, k) + _wr(tree, alpha, k) * (tree.lift(s, k) * dt + inc[k] ** 2)
    return float(np.dot(tree.path_prob[tree.n_steps], acc ** (p / 2.0))) ** (1.0 / p)


def norm_i(k_inc: PredictableProcess, p: float, alpha: float) -> float:
    """I^{p,alpha} norm: total-variation sum weighted by e^{(alpha/2) s}."""
    tree = k_inc.tree
    acc = _accumulate(tree, lambda k: _wr(tree, 0.5 * alpha, k) * np.abs(k_inc.values[k]))
    return float(np.dot(tree.path_prob[tree.n_steps], acc**p)) ** (1.0 / p)


def norm_i_adapted_increments(tree: ScenarioTree, increments, p: float, alpha: float) -> float:
    """I^{p,alpha} norm from raw per-interval increment arrays (left-endpoint indexed)."""
    acc = _accumulate(tree, lambda k: _wr(tree, 0.5 * alpha, k) * np.abs(np.asarray(increments[k])))
    return float(np.dot(tree.path_prob[tree.n_steps], acc**p)) ** (1.0 / p)


# -- pointwise functions and explicit constants -------------------------------

def phi_p(y, p: float):
    """|y|^{p-1} sgn(y) 1_{y != 0}."""
    if p <= 1.0:
        raise ValueError(f"phi_p needs p > 1, got {p}")
    y = np.asarray(y, dtype=float)
    out = np.where(y == 0.0, 0.0, np.abs(y) ** (p - 1.0) * np.sign(y))
    return float(out) if out.ndim == 0 else out


def power_sum_bounds(values, ell: float) -> tuple:
    """((1 ^ n^{l-1}) sum a_i^l, (sum a_i)^l, (1 v n^{l-1}) sum a_i^l)."""
    a = np.asarray(values, dtype=float)
    if np.any(a <= 0.0):
        raise ValueError("power_sum_bounds needs strictly positive entries")
    if ell <= 0.0:
        raise ValueError(f"exponent must be positive, got {ell}")
    n = a.size
    s = float(np.sum(a**ell))
    lower = min(1.0, n ** (ell - 1.0)) * s
    middle = float(np.sum(a)) ** ell
    upper = max(1.0, n ** (ell - 1.0)) * s
    assert lower <= middle * (1 + 1e-12) and middle <= upper * (1 + 1e-12)
    return lower, middle, upper


def young_bound(a: float, b: float, beta: float, p: float) -> tuple:
    """(ab, beta a^p + b^q / (q (beta p)^{q/p})) with 1/p + 1/q = 1; lhs <= rhs."""
    if a < 0.0 or b < 0.0 or beta <= 0.0 or p <= 1.0:
        raise ValueError("young_bound needs a, b >= 0, beta > 0, p > 1")
    q = p / (p - 1.0)
    lhs = a * b
    rhs = beta * a**p + b**q / (q * (beta * p) ** (q / p))
    assert lhs <= rhs * (1 + 1e-12) + 1e-300
    return lhs, rhs


def burkholder_constant(p: float) -> float:
    """(p/2 v p/(p-2) - 1)^p for p > 2, and 2 for p = 2.

    The ambiguous precedence is resolved as (max(p/2, p/(p-2) - 1))^p; see
    burkholder_constant_alt for the other parse.
    """
    if p < 2.0:
        raise ValueError(f"constant defined for p >= 2, got {p}")
    if p == 2.0:
        return 2.0
    return max(p / 2.0, p / (p - 2.0) - 1.0) ** p


def burkholder_constant_alt(p: float) -> float:
    """Alternative parse max(p/2, p/(p-2)) - 1, then ^p; reported when it differs."""
    if p <= 2.0:
        raise ValueError(f"alternative parse only differs for p > 2, got {p}")
    return (max(p / 2.0, p / (p - 2.0)) - 1.0) ** p


def meyer_c_prime(p: float) -> float:
    """Explicit constant in Meyer's supermartingale estimate.

    (p^2/(p-1))^{1/(p-1)} for p in (1, 2]; for p > 2 the minimum over integer
    k in [2, p) of (p prod_{j=2}^k pj/(p-j))^{k/(p-1)}.
    """
    if p <= 1.0:
        raise ValueError(f"need p > 1, got {p}")
    if p <= 2.0:
        return (p * p / (p - 1.0)) ** (1.0 / (p - 1.0))
    best = math.inf
    k = 2
    while k < p:
        prod = p
        for j in range(2, k + 1):
            prod *= p * j / (p - j)
        best = min(best, prod ** (k / (p - 1.0)))
        k += 1
    return best


def meyer_constant(p: float) -> float:
    """Bound constant for right-continuous strong supermartingales: C'_p (1 + p/(p-1))."""
    return meyer_c_prime(p) * (1.0 + p / (p - 1.0))


def meyer_constant_ladlag(p: float) -> float:
    """Composed bound constant for ladlag strong supermartingales.

    With C''_p = C'_p (1 + p/(p-1)): the compensator part is bounded by
    C''_p (1 + C''_p) and the left-continuous part by C''_p (1 + p/(p-1));
    the sum bounds |A|_{I^p} + |I|_{I^p}.
    """
    cpp = meyer_constant(p)
    return cpp * (1.0 + cpp) + cpp * (1.0 + p / (p - 1.0))


@dataclass(frozen=True)
class ConstantsTable:
    """Every explicit constant used by the inequality harness, for one p."""

    p: float

    @property
    def c_star(self) -> float:
        return burkholder_constant(self.p)

    @property
    def c_prime(self) -> float:
        return meyer_c_prime(self.p)

    @property
    def meyer(self) -> float:
        return meyer_constant(self.p)

    @property
    def meyer_ladlag(self) -> float:
        return meyer_constant_ladlag(self.p)

    def power_lower(self, n: int, ell: float = None) -> float:
        ell = self.p if ell is None else ell
        return min(1.0, n ** (ell - 1.0))

    def power_upper(self, n: int, ell: float = None) -> float:
        ell = self.p if ell is None else ell
        return max(1.0, n ** (ell - 1.0))
