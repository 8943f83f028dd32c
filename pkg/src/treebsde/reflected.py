"""Reflected BSDEs on scenario trees: solver, optimal-stopping checks, Picard.

The reflected dynamics keep Y above an obstacle S by adding a minimal
non-decreasing predictable push K:
    Y_k = max(S_k, E_k[Y_{k+1}] - g_k dt),   dK_{k+1} = Y_k - (E_k[Y_{k+1}] - g_k dt),
with the terminal obstacle clipped to min(S_T, xi) so the constraint and the
terminal condition are compatible.  The solution is also the value process of
an optimal stopping problem with running cost g, which is verified two ways:
by dynamic programming with frozen costs and by a discounted dynamic program
under a change of measure extracted from the driver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bsde import (
    BsdeInstance,
    Generator,
    SolutionQuadruple,
    _check_scheme,
    _implicit_step,
    _project,
    check_lipschitz,
)
from .errors import DepthCapError, MeasureChangeError, PicardDivergenceError, TreeSizeError
from .martingales import MeasureChange, girsanov_change
from .norms import norm_h, norm_sp
from .processes import AdaptedProcess, PredictableProcess
from .reports import EstimateReport
from .tree import ScenarioTree

DP_DEPTH_CAP = 12
EXHAUSTIVE_DEPTH_CAP = 4
SNELL_TOL = 1e-10


@dataclass
class ReflectedInstance:
    """Terminal condition, driver and lower obstacle on one tree."""

    tree: ScenarioTree
    xi: np.ndarray
    gen: Generator
    obstacle: AdaptedProcess

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if self.xi.shape[0] != self.tree.n_nodes(self.tree.n_steps):
            raise ValueError("terminal condition is not measurable at the terminal partition")
        n = self.tree.n_steps
        # terminal compatibility: the obstacle cannot exceed the terminal value
        clipped = np.minimum(self.obstacle.values[n], self.xi)
        if np.any(clipped != self.obstacle.values[n]):
            vals = [v.copy() for v in self.obstacle.values]
            vals[n] = clipped
            self.obstacle = AdaptedProcess(self.tree, vals)

    def plain(self) -> BsdeInstance:
        return BsdeInstance(tree=self.tree, xi=self.xi, gen=self.gen)


def solve_reflected(instance: ReflectedInstance, scheme: str = "implicit",
                    probe_seed: int = 0) -> SolutionQuadruple:
    """Backward induction with pointwise reflection and minimal push K."""
    tree, gen, s = instance.tree, instance.gen, instance.obstacle
    _check_scheme(tree, gen, scheme)
    check_lipschitz(gen, tree, seed=probe_seed)
    dt = tree.dt
    y_vals = [None] * (tree.n_steps + 1)
    y_vals[tree.n_steps] = np.maximum(instance.xi, s.values[tree.n_steps])
    z_vals, dm_vals, dk_vals = [None] * tree.n_steps, [None] * tree.n_steps, [None] * tree.n_steps
    for k in range(tree.n_steps - 1, -1, -1):
        ey, z_k, dm = _project(tree, y_vals[k + 1], k)
        if scheme == "explicit":
            y_tilde = ey - gen(k, ey, z_k) * dt
            y_k = np.maximum(s.values[k], y_tilde)
        else:
            y_k = _implicit_step(gen, k, ey, z_k, dt, obstacle=s.values[k])
            y_tilde = ey - gen(k, y_k, z_k) * dt
        y_vals[k] = y_k
        z_vals[k], dm_vals[k] = z_k, dm
        dk_vals[k] = y_k - y_tilde
    m_vals = [np.zeros(1)]
    for k in range(tree.n_steps):
        m_vals.append(tree.lift(m_vals[k], k) + dm_vals[k])
    return SolutionQuadruple(
        tree=tree,
        y=AdaptedProcess(tree, y_vals),
        z=PredictableProcess(tree, z_vals),
        m=AdaptedProcess(tree, m_vals),
        dk=PredictableProcess(tree, dk_vals),
        scheme=scheme,
    )


def check_skorokhod(instance: ReflectedInstance, sol: SolutionQuadruple) -> dict:
    """Minimality diagnostics: dK >= 0 and (Y - S) dK = 0 node by node."""
    tree = instance.tree
    neg = 0.0
    flat = 0.0
    for k in range(tree.n_steps):
        dk = sol.dk.values[k]
        neg = min(neg, float(dk.min()))
        gap = sol.y.values[k] - instance.obstacle.values[k]
        flat = max(flat, float(np.abs(gap * dk).max()))
    total = sum(tree.expectation(tree.lift(np.abs(sol.dk.values[k]), k), k + 1)
                for k in range(tree.n_steps))
    return {"min_increment": neg, "complementarity": flat, "expected_variation": total}


# -- optimal stopping ---------------------------------------------------------

@dataclass
class StoppingRule:
    """Earliest-maximizing rule: stop[k][i] is True where stopping is optimal."""

    tree: ScenarioTree
    stop: list
    value: float

    def stopping_step(self) -> np.ndarray:
        """Per-leaf step at which the rule stops (n_steps if never)."""
        tree = self.tree
        n = tree.n_steps
        tau = np.full(tree.n_nodes(n), n)
        done = np.zeros(tree.n_nodes(n), dtype=bool)
        for k in range(n):
            here = self._to_leaves(self.stop[k].astype(float), k) > 0.5
            hit = here & ~done
            tau[hit] = k
            done |= hit
        return tau

    def _to_leaves(self, x: np.ndarray, k: int) -> np.ndarray:
        tree = self.tree
        for j in range(k, tree.n_steps):
            x = tree.lift(x, j)
        return x


def _frozen_costs(instance: ReflectedInstance, sol: SolutionQuadruple) -> list:
    """Running costs c_k = g_k(Y_k, Z_k) evaluated at the solution."""
    return [instance.gen(k, sol.y.values[k], sol.z.values[k])
            for k in range(instance.tree.n_steps)]


def snell_dynamic_program(tree: ScenarioTree, xi: np.ndarray, obstacle: AdaptedProcess,
                          costs: list) -> tuple:
    """Value process v_k = max(S_k, -c_k dt + E_k[v_{k+1}]), v_n = xi.

    Returns (v as AdaptedProcess, StoppingRule).  Ties break toward stopping,
    which makes the rule the earliest maximizer.
    """
    if tree.n_steps > DP_DEPTH_CAP:
        raise DepthCapError(
            f"dynamic program capped at depth {DP_DEPTH_CAP}, tree has {tree.n_steps} steps"
        )
    dt = tree.dt
    v = [None] * (tree.n_steps + 1)
    v[tree.n_steps] = np.asarray(xi, dtype=float)
    stop = [None] * (tree.n_steps + 1)
    stop[tree.n_steps] = np.ones(tree.n_nodes(tree.n_steps), dtype=bool)
    for k in range(tree.n_steps - 1, -1, -1):
        cont = tree.cond_exp(v[k + 1], k + 1) - costs[k] * dt
        v[k] = np.maximum(obstacle.values[k], cont)
        stop[k] = obstacle.values[k] >= cont
    vp = AdaptedProcess(tree, v)
    return vp, StoppingRule(tree=tree, stop=stop, value=float(v[0][0]))


RULE_CAP = 2_000_000


def snell_bruteforce(tree: ScenarioTree, xi: np.ndarray, obstacle: AdaptedProcess,
                     costs: list, rule_cap: int = RULE_CAP) -> tuple:
    """Exhaustive search over every adapted stopping rule.

    At each internal node the candidate payoffs are "stop now" (the obstacle)
    plus every combination of the children's candidates weighted by the
    one-step transition probabilities, with the running cost accrued over the
    interval.  The candidate count per node is 1 + prod(children counts), so
    this is exponential in depth; it is capped and meant purely as an oracle,
    never as a solver.
    """
    if tree.n_steps > EXHAUSTIVE_DEPTH_CAP:
        raise DepthCapError(
            f"exhaustive stopping search capped at depth {EXHAUSTIVE_DEPTH_CAP}, "
            f"tree has {tree.n_steps} steps"
        )
    n = tree.n_steps
    dt = tree.dt
    xi = np.asarray(xi, dtype=float)
    cache = {}

    def candidates(k: int, i: int) -> np.ndarray:
        """Expected payoffs, viewed from node (k, i), of every stopping rule
        on the subtree.  Index 0 is 'stop now'; index c > 0 encodes one choice
        per child in mixed radix."""
        if k == n:
            return np.array([xi[i]])
        key = (k, i)
        if key in cache:
            return cache[key]
        b = tree.branching[k]
        child_vals = [candidates(k + 1, i * b + j) for j in range(b)]
        q = tree.cond_prob[k + 1][i * b: (i + 1) * b]
        combo = np.zeros(1)
        count = 1
        for j in range(b):
            count *= child_vals[j].shape[0]
            if count > rule_cap:
                raise TreeSizeError(
                    f"stopping rule count exceeds cap {rule_cap} at node ({k},{i})")
            combo = (combo[:, None] + q[j] * child_vals[j][None, :]).ravel()
        cont = combo - float(np.asarray(costs[k], dtype=float)[i]) * dt
        out = np.concatenate(([float(obstacle.values[k][i])], cont))
        cache[key] = out
        return out

    def decode(k: int, i: int, idx: int, marks: list) -> None:
        if k == n:
            return
        if idx == 0:
            marks[k][i] = True
            return
        b = tree.branching[k]
        idx -= 1
        # mixed radix, last child varies fastest (matches the ravel order)
        radices = [cache[(k + 1, i * b + j)].shape[0] if k + 1 < n else 1
                   for j in range(b)]
        picks = [0] * b
        for j in range(b - 1, -1, -1):
            picks[j] = idx % radices[j]
            idx //= radices[j]
        for j in range(b):
            decode(k + 1, i * b + j, picks[j], marks)

    vals = candidates(0, 0)
    best_idx = int(np.argmax(vals))
    best_value = float(vals[best_idx])
    marks = [np.zeros(tree.n_nodes(k), dtype=bool) for k in range(n)]
    decode(0, 0, best_idx, marks)
    stop = marks + [np.ones(tree.n_nodes(n), dtype=bool)]
    return best_value, StoppingRule(tree=tree, stop=stop, value=best_value)


def _extract_linearization(instance: ReflectedInstance, sol: SolutionQuadruple) -> tuple:
    """Per-node (lam, eta, g0) with g(Y,Z) = g0 + lam Y + eta . Z exactly.

    lam is the difference quotient in y at (Y, Z); eta telescopes coordinate
    difference quotients of z at y = 0; g0 = g(0, 0).  Both are bounded by the
    declared Lipschitz constants, clipped against roundoff.
    """
    tree, gen = instance.tree, instance.gen
    lam_vals, eta_vals, g0_vals = [], [], []
    for k in range(tree.n_steps):
        y, z = sol.y.values[k], sol.z.values[k]
        n = y.shape[0]
        zeros_y = np.zeros(n)
        g_yz = gen(k, y, z)
        g_0z = gen(k, zeros_y, z)
        lam = np.where(np.abs(y) > 1e-12, (g_yz - g_0z) / np.where(y == 0.0, 1.0, y), 0.0)
        lam = np.clip(lam, -gen.l_y, gen.l_y)
        eta = np.zeros((n, tree.d))
        prev = gen(k, zeros_y, np.zeros((n, tree.d)))
        g0_vals.append(prev)
        partial = np.zeros((n, tree.d))
        for i in range(tree.d):
            partial[:, i] = z[:, i]
            cur = gen(k, zeros_y, partial.copy())
            zi = z[:, i]
            eta[:, i] = np.where(np.abs(zi) > 1e-12,
                                 (cur - prev) / np.where(zi == 0.0, 1.0, zi), 0.0)
            prev = cur
        eta = np.clip(eta, -gen.l_z, gen.l_z)
        lam_vals.append(lam)
        eta_vals.append(eta)
    return lam_vals, eta_vals, g0_vals


def verify_snell_representation(instance: ReflectedInstance, sol: SolutionQuadruple,
                                tol: float = SNELL_TOL, fingerprint: str = "") -> list:
    """Two optimal-stopping representations of the reflected solution.

    (a) With costs frozen at the solution, the plain dynamic program reproduces
        Y exactly at every node.
    (b) Linearizing the driver at the solution gives an adapted discount and a
        change of measure under which the discounted value solves a dynamic
        program with only the zero-input cost; its value equals the discounted
        Y at every node.  Needs sol to come from the implicit scheme.
    """
    tree = instance.tree
    costs = _frozen_costs(instance, sol)
    v, _ = snell_dynamic_program(tree, instance.xi, instance.obstacle, costs)
    defect_a = max(float(np.abs(v.values[k] - sol.y.values[k]).max())
                   for k in range(tree.n_steps + 1))
    reports = [EstimateReport(
        inequality_id="stopping_value_frozen_costs",
        lhs=defect_a, rhs=tol, constant_used="exact",
        passed=defect_a <= tol, fingerprint=fingerprint,
        details={"root_value": float(v.values[0][0])},
    )]

    lam_vals, eta_vals, g0_vals = _extract_linearization(instance, sol)
    dt = tree.dt
    factors = [1.0 + lam * dt for lam in lam_vals]
    if min(float(f.min()) for f in factors) <= 0.0:
        raise MeasureChangeError("discount factor 1 + lam dt is not positive; refine the grid")
    mc = girsanov_change(tree, PredictableProcess(tree, eta_vals))
    disc = [np.ones(1)]
    for k in range(tree.n_steps):
        disc.append(tree.lift(disc[k] / factors[k], k))
    u = disc[tree.n_steps] * instance.xi
    defect_b = float(np.abs(u - disc[tree.n_steps] * sol.y.values[tree.n_steps]).max())
    for k in range(tree.n_steps - 1, -1, -1):
        cont = mc.cond_exp_q(u, k + 1) - (disc[k] / factors[k]) * g0_vals[k] * dt
        u = np.maximum(disc[k] * instance.obstacle.values[k], cont)
        defect_b = max(defect_b, float(np.abs(u - disc[k] * sol.y.values[k]).max()))
    reports.append(EstimateReport(
        inequality_id="stopping_value_discounted_measure_change",
        lhs=defect_b, rhs=tol, constant_used="exact",
        passed=defect_b <= tol, fingerprint=fingerprint,
        details={"scheme": sol.scheme},
    ))
    return reports


# -- Picard iteration ---------------------------------------------------------

@dataclass
class PicardTrace:
    """Per-iteration distances and contraction diagnostics."""

    alpha_star: float
    dy_s2: list = field(default_factory=list)
    dz_h2: list = field(default_factory=list)
    driver_change: list = field(default_factory=list)

    @property
    def combined(self) -> list:
        return [a + b for a, b in zip(self.dy_s2, self.dz_h2)]

    @property
    def contraction_ratios(self) -> list:
        c = self.combined
        return [c[i + 1] / c[i] for i in range(len(c) - 1) if c[i] > 0.0]


def picard_alpha(gen: Generator) -> float:
    """Weight making the fixed-point map a contraction: 1 + 2 L_y + 2 L_z^2."""
    return 1.0 + 2.0 * gen.l_y + 2.0 * gen.l_z**2


def picard_solve(instance: ReflectedInstance, tol: float = 1e-12,
                 max_iter: int = 100, probe_seed: int = 0) -> tuple:
    """Solve the reflected BSDE by iterating with the driver frozen at the
    previous iterate.  Each inner problem has a constant-in-(y, z) driver and
    is solved exactly; the loop stops when the frozen driver itself stops
    moving (sup-change <= tol), so drivers that ignore (y, z) converge in one
    sweep.  Returns (solution, PicardTrace).
    """
    tree, gen = instance.tree, instance.gen
    _check_scheme(tree, gen, "implicit")
    check_lipschitz(gen, tree, seed=probe_seed)
    trace = PicardTrace(alpha_star=picard_alpha(gen))
    y_prev = [np.zeros(tree.n_nodes(k)) for k in range(tree.n_steps + 1)]
    z_prev = [np.zeros((tree.n_nodes(k), tree.d)) for k in range(tree.n_steps)]
    frozen_prev = None
    sol = None
    for _ in range(max_iter):
        frozen = [gen(k, y_prev[k], z_prev[k]) for k in range(tree.n_steps)]

        def fn(k, y, z, _frozen=frozen):
            return np.broadcast_to(_frozen[k], y.shape).copy()

        inner = ReflectedInstance(
            tree=tree, xi=instance.xi,
            gen=Generator(fn=fn, l_y=0.0, l_z=0.0, name="picard-frozen"),
            obstacle=instance.obstacle,
        )
        new = solve_reflected(inner, scheme="implicit", probe_seed=probe_seed)
        dy = AdaptedProcess(tree, [new.y.values[k] - y_prev[k] for k in range(tree.n_steps + 1)])
        dz = PredictableProcess(tree, [new.z.values[k] - z_prev[k] for k in range(tree.n_steps)])
        trace.dy_s2.append(norm_sp(dy, 2.0))
        trace.dz_h2.append(norm_h(dz, 2.0, trace.alpha_star))
        if frozen_prev is not None:
            change = max(float(np.abs(a - b).max()) for a, b in zip(frozen, frozen_prev))
            trace.driver_change.append(change)
            if change <= tol:
                return new, trace
        frozen_prev = frozen
        y_prev = [v.copy() for v in new.y.values]
        z_prev = [v.copy() for v in new.z.values]
        sol = new
        # driver independent of (y, z): the first sweep is already exact
        if gen.l_y == 0.0 and gen.l_z == 0.0:
            return sol, trace
    raise PicardDivergenceError(
        f"frozen-driver iteration did not settle in {max_iter} sweeps "
        f"(last driver change {trace.driver_change[-1] if trace.driver_change else float('nan'):.3e})"
    )


def truncate_instance(instance: ReflectedInstance, level: float) -> ReflectedInstance:
    """Clip terminal value, obstacle and driver output to [-level, level]."""
    if level <= 0.0:
        raise ValueError(f"truncation level must be positive, got {level}")
    tree, gen = instance.tree, instance.gen

    def fn(k, y, z, _g=gen, _n=level):
        return np.clip(_g(k, y, z), -_n, _n)

    return ReflectedInstance(
        tree=tree,
        xi=np.clip(instance.xi, -level, level),
        gen=Generator(fn=fn, l_y=gen.l_y, l_z=gen.l_z, name=f"{gen.name}|{level:g}"),
        obstacle=AdaptedProcess(tree, [np.clip(v, -level, level)
                                       for v in instance.obstacle.values]),
    )
