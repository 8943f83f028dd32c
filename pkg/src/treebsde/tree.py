"""Finite filtered probability spaces built as scenario trees.

The trees carry a d-dimensional Rademacher walk whose increments have exact
martingale structure (zero conditional mean, conditional covariance dt * I),
plus optional extra random variables revealed at deterministic grid instants.
Revealing information at deterministic (hence predictable) times is what breaks
quasi left-continuity of the generated filtration.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvariantViolationError,
    OffGridError,
    SchemaError,
    TreeSizeError,
)

DEFAULT_NODE_CAP = 2**20
TREE_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_n = T."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def index_of(self, time: float) -> int:
        """Grid index of `time`; raises OffGridError if it is not a grid instant."""
        times = self.times
        hits = np.flatnonzero(np.isclose(times, time, rtol=0.0, atol=1e-12 * max(1.0, self.horizon)))
        if hits.size != 1:
            raise OffGridError(
                f"time {time} is not on the grid (T={self.horizon}, n={self.n_steps}, dt={self.dt})"
            )
        return int(hits[0])


@dataclass(frozen=True)
class Reveal:
    """Extra discrete random variable revealed at a deterministic grid instant.

    The label is drawn from `labels` with law `probs`, independently of the
    walk increments.
    """

    time: float
    labels: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.labels) != len(self.probs) or len(self.labels) < 2:
            raise ValueError("reveal needs >= 2 labels and matching probabilities")
        p = np.asarray(self.probs, dtype=float)
        if np.any(p <= 0.0) or abs(p.sum() - 1.0) > TREE_TOL:
            raise ValueError(f"reveal law must be a positive probability vector, got {self.probs}")


@dataclass
class ScenarioTree:
    """Scenario tree with uniform branching per step.

    Nodes at step k+1 are grouped contiguously under their parent, so the node
    at index j of step k+1 has parent j // branching[k].  All per-node data is
    stored as one numpy array per step.
    """

    grid: TimeGrid
    d: int
    reveals: tuple            # tuple[Reveal, ...], resolved to grid instants
    branching: np.ndarray     # branching factor out of each step, len n_steps
    cond_prob: list           # cond_prob[k][i] = P(node i at step k | parent); [1.0] at root
    dw: list                  # dw[k] shape (n_k, d): walk increment from parent; zeros at root
    reveal_label: list        # reveal_label[k][i]: alphabet index or -1
    path_prob: list = field(default=None, repr=False)
    _w: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.path_prob is None:
            pp = [np.array([1.0])]
            for k in range(1, self.n_steps + 1):
                pp.append(pp[k - 1][self.parent_index(k)] * self.cond_prob[k])
            self.path_prob = pp

    # -- structure -----------------------------------------------------------

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def dt(self) -> float:
        return self.grid.dt

    def n_nodes(self, step: int) -> int:
        return len(self.cond_prob[step])

    def parent_index(self, step: int) -> np.ndarray:
        if step < 1 or step > self.n_steps:
            raise IndexError(f"step {step} has no parents (valid: 1..{self.n_steps})")
        return np.arange(self.n_nodes(step)) // int(self.branching[step - 1])

    def reveal_step_indices(self) -> list:
        return [self.grid.index_of(r.time) for r in self.reveals]

    @property
    def w(self) -> list:
        """Cumulative walk value per node, shape (n_k, d) at each step."""
        if self._w is None:
            w = [np.zeros((1, self.d))]
            for k in range(1, self.n_steps + 1):
                w.append(w[k - 1][self.parent_index(k)] + self.dw[k])
            self._w = w
        return self._w

    # -- expectation operators ------------------------------------------------

    def _check_step(self, step: int, lo: int = 0):
        if step < lo or step > self.n_steps:
            raise IndexError(f"step {step} out of range 0..{self.n_steps}")

    def cond_exp(self, x: np.ndarray, step: int, weights: np.ndarray = None) -> np.ndarray:
        """Conditional expectation of `x` (defined at `step`) onto step-1 nodes.

        `weights` optionally multiplies the child values before averaging, e.g.
        one-step Girsanov density factors.
        """
        self._check_step(step, lo=1)
        x = np.asarray(x, dtype=float)
        n_prev = self.n_nodes(step - 1)
        b = int(self.branching[step - 1])
        if x.shape[0] != self.n_nodes(step):
            raise ValueError(f"value array has {x.shape[0]} entries, step {step} has {self.n_nodes(step)} nodes")
        cp = self.cond_prob[step]
        if weights is not None:
            cp = cp * weights
        if x.ndim == 1:
            return (cp * x).reshape(n_prev, b).sum(axis=1)
        return (cp[:, None] * x).reshape(n_prev, b, x.shape[1]).sum(axis=1)

    def expectation(self, x: np.ndarray, step: int) -> float:
        """Expectation of a step-`step` value: sum of path probability * value."""
        self._check_step(step)
        x = np.asarray(x, dtype=float)
        return float(np.dot(self.path_prob[step], x))

    def lift(self, x: np.ndarray, step: int) -> np.ndarray:
        """Broadcast step-`step` node values onto their step+1 children."""
        self._check_step(step)
        if step == self.n_steps:
            raise IndexError("terminal step has no children")
        return np.repeat(np.asarray(x, dtype=float), int(self.branching[step]), axis=0)


def build_tree(grid: TimeGrid, d: int = 1, scheme: str = "rademacher",
               reveals=(), node_cap: int = DEFAULT_NODE_CAP) -> ScenarioTree:
    """Build a scenario tree for the given grid.

    The Rademacher scheme assigns each walk coordinate the increment +-sqrt(dt)
    with probability 1/2, independently across coordinates; at a reveal time the
    branching is (2^d) * alphabet size with product probabilities.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if scheme != "rademacher":
        raise ValueError(f"unknown scheme {scheme!r}; supported: 'rademacher'")
    reveals = tuple(reveals)
    reveal_at = {}
    for r in reveals:
        idx = grid.index_of(r.time)
        if idx == 0:
            raise OffGridError("reveal at t_0 carries no information; use a later grid instant")
        if idx in reveal_at:
            raise ValueError(f"two reveals at the same grid instant t_{idx}")
        reveal_at[idx] = r

    sdt = np.sqrt(grid.dt)
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))  # (2^d, d), canonical order
    base_prob = np.full(2**d, 0.5**d)

    branching = np.zeros(grid.n_steps, dtype=int)
    cond_prob = [np.array([1.0])]
    dw = [np.zeros((1, d))]
    reveal_label = [np.array([-1])]
    n_prev = 1
    for k in range(grid.n_steps):
        r = reveal_at.get(k + 1)
        if r is None:
            bdw, bprob, blab = signs * sdt, base_prob, np.full(2**d, -1)
        else:
            a = len(r.labels)
            bdw = np.repeat(signs * sdt, a, axis=0)
            bprob = np.repeat(base_prob, a) * np.tile(np.asarray(r.probs, dtype=float), 2**d)
            blab = np.tile(np.arange(a), 2**d)
        b = len(bprob)
        n_next = n_prev * b
        if n_next > node_cap:
            raise TreeSizeError(
                f"step {k + 1} would hold {n_next} nodes, beyond the configured cap {node_cap}"
            )
        branching[k] = b
        cond_prob.append(np.tile(bprob, n_prev))
        dw.append(np.tile(bdw, (n_prev, 1)))
        reveal_label.append(np.tile(blab, n_prev))
        n_prev = n_next
    return ScenarioTree(grid=grid, d=d, reveals=reveals, branching=branching,
                        cond_prob=cond_prob, dw=dw, reveal_label=reveal_label)


# -- validation ---------------------------------------------------------------

def validate_tree(tree: ScenarioTree, tol: float = TREE_TOL) -> dict:
    """Check all tree invariants; returns the defect magnitudes.

    Raises InvariantViolationError naming the first offending node.
    """
    dt = tree.dt
    defects = {"prob_sum": 0.0, "dw_mean": 0.0, "dw_cov": 0.0, "reveal_indep": 0.0}
    reveal_steps = set(tree.reveal_step_indices())
    for k in range(1, tree.n_steps + 1):
        b = int(tree.branching[k - 1])
        n_prev = tree.n_nodes(k - 1)
        cp = tree.cond_prob[k].reshape(n_prev, b)
        sums = cp.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if bad.size:
            i = int(bad[0])
            raise InvariantViolationError(
                f"child probabilities at step {k - 1}, node {i} sum to {sums[i]!r} (tol {tol})"
            )
        defects["prob_sum"] = max(defects["prob_sum"], float(np.abs(sums - 1.0).max()))
        dwk = tree.dw[k].reshape(n_prev, b, tree.d)
        mean = np.einsum("nb,nbi->ni", cp, dwk)
        m = float(np.abs(mean).max())
        if m > tol:
            raise InvariantViolationError(f"conditional mean of dW at step {k} is {m} > {tol}")
        defects["dw_mean"] = max(defects["dw_mean"], m)
        cov = np.einsum("nb,nbi,nbj->nij", cp, dwk, dwk)
        c = float(np.abs(cov - dt * np.eye(tree.d)).max())
        if c > tol:
            raise InvariantViolationError(f"conditional covariance of dW at step {k} deviates from dt*I by {c}")
        defects["dw_cov"] = max(defects["dw_cov"], c)
        if k in reveal_steps:
            lab = tree.reveal_label[k].reshape(n_prev, b)
            a = int(lab.max()) + 1
            # joint law over (dw pattern, label) must factorize exactly
            joint = cp.reshape(n_prev, b // a, a)
            p_dw = joint.sum(axis=2)
            p_lab = joint.sum(axis=1)
            outer = p_dw[:, :, None] * p_lab[:, None, :]
            r = float(np.abs(joint - outer).max())
            if r > tol:
                raise InvariantViolationError(f"reveal label at step {k} is not independent of dW (defect {r})")
            defects["reveal_indep"] = max(defects["reveal_indep"], r)
    return defects


# -- serialization ------------------------------------------------------------

SCHEMA_VERSION = 1


def serialize_tree(tree: ScenarioTree) -> bytes:
    """Canonical UTF-8 JSON encoding of the tree; round-trip is the identity."""
    offsets = np.cumsum([0] + [tree.n_nodes(k) for k in range(tree.n_steps + 1)])
    nodes = []
    for k in range(tree.n_steps + 1):
        parents = tree.parent_index(k) + offsets[k - 1] if k > 0 else np.array([-1])
        for i in range(tree.n_nodes(k)):
            lab = int(tree.reveal_label[k][i])
            nodes.append({
                "id": int(offsets[k] + i),
                "step": k,
                "parent": int(parents[i]),
                "prob": float(tree.cond_prob[k][i]),
                "dw": [float(v) for v in tree.dw[k][i]],
                "reveal": None if lab < 0 else _label_name(tree, k, lab),
            })
    doc = {
        "version": SCHEMA_VERSION,
        "grid": {"horizon": tree.grid.horizon, "n_steps": tree.grid.n_steps},
        "d": tree.d,
        "reveals": [
            {"time": r.time, "labels": list(r.labels), "probs": [float(p) for p in r.probs]}
            for r in tree.reveals
        ],
        "nodes": nodes,
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def _label_name(tree: ScenarioTree, step: int, lab: int):
    for r in tree.reveals:
        if tree.grid.index_of(r.time) == step:
            return r.labels[lab]
    raise InvariantViolationError(f"label stored at step {step} but no reveal is declared there")


def deserialize_tree(data: bytes) -> ScenarioTree:
    """Inverse of serialize_tree; validates the schema and all tree invariants."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {doc.get('version')!r} (expected {SCHEMA_VERSION})")
    for key in ("grid", "d", "reveals", "nodes"):
        if key not in doc:
            raise SchemaError(f"missing top-level field {key!r}")
    grid = TimeGrid(horizon=float(doc["grid"]["horizon"]), n_steps=int(doc["grid"]["n_steps"]))
    d = int(doc["d"])
    reveals = tuple(
        Reveal(time=float(r["time"]), labels=tuple(r["labels"]), probs=tuple(r["probs"]))
        for r in doc["reveals"]
    )
    by_step = [[] for _ in range(grid.n_steps + 1)]
    for nd in doc["nodes"]:
        step = int(nd["step"])
        if step < 0 or step > grid.n_steps:
            raise SchemaError(f"node {nd.get('id')} has step {step} outside 0..{grid.n_steps}")
        by_step[step].append(nd)
    if len(by_step[0]) != 1:
        raise SchemaError(f"expected a single root, found {len(by_step[0])}")
    label_index = {}
    for r in reveals:
        label_index[grid.index_of(r.time)] = {name: i for i, name in enumerate(r.labels)}

    branching = np.zeros(grid.n_steps, dtype=int)
    cond_prob = [np.array([1.0])]
    dw = [np.zeros((1, d))]
    reveal_label = [np.array([-1])]
    prev_ids = [int(by_step[0][0]["id"])]
    for k in range(1, grid.n_steps + 1):
        nds = sorted(by_step[k], key=lambda nd: int(nd["id"]))
        if not nds or len(nds) % len(prev_ids):
            raise SchemaError(f"step {k}: {len(nds)} nodes cannot branch uniformly from {len(prev_ids)} parents")
        b = len(nds) // len(prev_ids)
        expect_parent = np.repeat(prev_ids, b)
        for nd, par in zip(nds, expect_parent):
            if int(nd["parent"]) != int(par):
                raise SchemaError(f"node {nd['id']}: parent {nd['parent']} breaks contiguous uniform branching")
        branching[k - 1] = b
        cond_prob.append(np.array([float(nd["prob"]) for nd in nds]))
        dwk = np.array([[float(v) for v in nd["dw"]] for nd in nds])
        if dwk.shape != (len(nds), d):
            raise SchemaError(f"step {k}: dw vectors are not {d}-dimensional")
        dw.append(dwk)
        if k in label_index:
            try:
                labs = np.array([label_index[k][nd["reveal"]] for nd in nds])
            except KeyError as exc:
                raise SchemaError(f"step {k}: unknown reveal label {exc}") from exc
        else:
            labs = np.full(len(nds), -1)
            for nd in nds:
                if nd["reveal"] is not None:
                    raise SchemaError(f"node {nd['id']} carries a reveal label but none is declared at step {k}")
        reveal_label.append(labs)
        prev_ids = [int(nd["id"]) for nd in nds]
    tree = ScenarioTree(grid=grid, d=d, reveals=reveals, branching=branching,
                        cond_prob=cond_prob, dw=dw, reveal_label=reveal_label)
    validate_tree(tree)
    return tree
