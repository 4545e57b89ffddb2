"""Structural causal models over a :class:`~confound.graph.Dag`.

Two families are supported: binary variables with conditional probability
tables, and linear-Gaussian models. Interventions return new model objects;
models are never mutated.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from .contexts import ContextMeta, ContextSuite, InterventionRecord
from .errors import InvalidInterventionValue
from .graph import Dag

BINARY = "binary"
LINEAR_GAUSSIAN = "linear_gaussian"

CPT_RANGE = (0.1, 0.9)
WEIGHT_RANGE = (0.5, 1.5)
STD_RANGE = (0.5, 1.5)
SHIFT_MEAN_RANGE = (-3.0, 3.0)
SHIFT_STD_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class Intervention:
    """A hard (``value``) or soft (``params``) intervention on one node.

    Soft params: ``{"cpt": array}`` for binary models, ``{"mean": m, "std": s}``
    for linear-Gaussian ones (optionally ``"weights": {parent: w}``).
    """

    target: int
    kind: str
    value: float | None = None
    params: Mapping | None = None

    def __post_init__(self):
        if self.kind not in ("hard", "soft"):
            raise ValueError(f"unknown intervention kind {self.kind!r}")
        if self.kind == "hard" and self.value is None:
            raise InvalidInterventionValue("hard intervention needs a value")
        if self.kind == "soft" and self.params is None:
            raise InvalidInterventionValue("soft intervention needs mechanism params")


def hard(target: int, value: float) -> Intervention:
    return Intervention(int(target), "hard", value=value)


def soft(target: int, **params) -> Intervention:
    return Intervention(int(target), "soft", params=params)


@dataclass(frozen=True)
class BinaryScm:
    """Binary SCM. ``cpt[v]`` has one axis per parent (in ``dag.parents(v)``
    order) and holds P(v = 1 | parents)."""

    dag: Dag
    cpt: Mapping[int, np.ndarray]
    hard: Mapping[int, int] = field(default_factory=dict)

    family = BINARY

    def __post_init__(self):
        cpt = {}
        for v in self.dag.nodes:
            if v not in self.cpt:
                raise ValueError(f"missing CPT for node {v}")
            cpt[v] = _check_cpt(self.dag, v, self.cpt[v])
        object.__setattr__(self, "cpt", cpt)
        object.__setattr__(self, "hard", dict(self.hard))


@dataclass(frozen=True)
class LinearGaussianScm:
    """v := sum_u weight[(u, v)] * u + N(noise_mean[v], noise_std[v]**2).

    For parentless nodes (including latents) the noise terms are the root
    mean and standard deviation.
    """

    dag: Dag
    weights: Mapping[tuple[int, int], float]
    noise_mean: Mapping[int, float]
    noise_std: Mapping[int, float]
    hard: Mapping[int, float] = field(default_factory=dict)

    family = LINEAR_GAUSSIAN

    def __post_init__(self):
        weights = {(int(a), int(b)): float(self.weights.get((a, b), 0.0)) for a, b in self.dag.edges}
        object.__setattr__(self, "weights", weights)
        for v in self.dag.nodes:
            if self.noise_std.get(v, 0.0) <= 0:
                raise ValueError(f"noise_std of node {v} must be positive")
        object.__setattr__(self, "noise_mean", {v: float(self.noise_mean.get(v, 0.0)) for v in self.dag.nodes})
        object.__setattr__(self, "noise_std", {v: float(self.noise_std[v]) for v in self.dag.nodes})
        object.__setattr__(self, "hard", dict(self.hard))


Scm = Union[BinaryScm, LinearGaussianScm]


def _check_cpt(dag: Dag, v: int, table) -> np.ndarray:
    arr = np.asarray(table, dtype=float)
    shape = (2,) * len(dag.parents(v))
    if arr.shape != shape:
        raise InvalidInterventionValue(
            f"CPT for {dag.name(v)} has shape {arr.shape}, expected {shape}"
        )
    if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
        raise InvalidInterventionValue(f"CPT entries for {dag.name(v)} must lie in [0, 1]")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def build_random_scm(dag: Dag, family: str, seed: int, *, cpt_range=CPT_RANGE) -> Scm:
    """Random mechanisms: binary CPT entries ~ U(cpt_range); linear weights
    ~ +-U[0.5, 1.5] with random sign, noise std ~ U[0.5, 1.5], zero noise mean."""
    rng = np.random.default_rng(seed)
    if family == BINARY:
        lo, hi = cpt_range
        cpt = {v: rng.uniform(lo, hi, size=(2,) * len(dag.parents(v))) for v in sorted(dag.nodes)}
        return BinaryScm(dag, cpt)
    if family == LINEAR_GAUSSIAN:
        weights = {}
        for e in sorted(dag.edges):
            weights[e] = rng.choice([-1.0, 1.0]) * rng.uniform(*WEIGHT_RANGE)
        std = {v: rng.uniform(*STD_RANGE) for v in sorted(dag.nodes)}
        return LinearGaussianScm(dag, weights, {v: 0.0 for v in dag.nodes}, std)
    raise ValueError(f"unknown SCM family {family!r}")


def apply_intervention(scm: Scm, iv: Intervention) -> Scm:
    """Return a copy of ``scm`` with one node's mechanism replaced."""
    dag = scm.dag
    target = dag.node(iv.target)
    if iv.kind == "hard":
        if dag.kind(target) != "observed":
            raise InvalidInterventionValue(
                f"hard interventions are only allowed on observed nodes, not {dag.name(target)}"
            )
        if isinstance(scm, BinaryScm):
            if iv.value not in (0, 1):
                raise InvalidInterventionValue(f"binary hard value must be 0 or 1, got {iv.value!r}")
            value = int(iv.value)
        else:
            value = float(iv.value)
            if not np.isfinite(value):
                raise InvalidInterventionValue("hard value must be finite")
        return replace(scm, hard={**scm.hard, target: value})

    remaining_hard = {k: v for k, v in scm.hard.items() if k != target}
    params = dict(iv.params)
    if isinstance(scm, BinaryScm):
        if "cpt" not in params:
            raise InvalidInterventionValue("binary soft intervention needs a 'cpt' param")
        cpt = dict(scm.cpt)
        cpt[target] = _check_cpt(dag, target, params["cpt"])
        return replace(scm, cpt=cpt, hard=remaining_hard)

    mean = dict(scm.noise_mean)
    std = dict(scm.noise_std)
    weights = dict(scm.weights)
    if "mean" in params:
        mean[target] = float(params["mean"])
    if "std" in params:
        if not params["std"] > 0:
            raise InvalidInterventionValue("soft intervention std must be positive")
        std[target] = float(params["std"])
    for parent, w in dict(params.get("weights", {})).items():
        if (parent, target) not in weights:
            raise InvalidInterventionValue(f"{parent} is not a parent of {target}")
        weights[(parent, target)] = float(w)
    return replace(scm, weights=weights, noise_mean=mean, noise_std=std, hard=remaining_hard)


def random_soft_params(scm: Scm, target: int, rng: np.random.Generator) -> dict:
    """Draw a replacement mechanism: binary CPT rows ~ U[0.1, 0.9];
    linear noise mean ~ U[-3, 3] and std ~ U[0.5, 2]."""
    if isinstance(scm, BinaryScm):
        shape = (2,) * len(scm.dag.parents(target))
        return {"cpt": rng.uniform(*CPT_RANGE, size=shape)}
    return {"mean": rng.uniform(*SHIFT_MEAN_RANGE), "std": rng.uniform(*SHIFT_STD_RANGE)}


def _sample_all(scm: Scm, n: int, rng: np.random.Generator) -> dict[int, np.ndarray]:
    dag = scm.dag
    cols: dict[int, np.ndarray] = {}
    for v in dag.topological_order():
        if v in scm.hard:
            dtype = np.int8 if isinstance(scm, BinaryScm) else float
            cols[v] = np.full(n, scm.hard[v], dtype=dtype)
            continue
        parents = dag.parents(v)
        if isinstance(scm, BinaryScm):
            table = scm.cpt[v]
            p = table[tuple(cols[u] for u in parents)] if parents else np.full(n, float(table))
            cols[v] = (rng.random(n) < p).astype(np.int8)
        else:
            x = rng.normal(scm.noise_mean[v], scm.noise_std[v], size=n)
            for u in parents:
                x = x + scm.weights[(u, v)] * cols[u]
            cols[v] = x
    return cols


def sample(
    scm: Scm,
    n: int,
    seed: int | np.random.SeedSequence | np.random.Generator,
    *,
    include_latent: bool = False,
    reveal: Iterable[int] = (),
) -> pd.DataFrame:
    """Ancestral sampling of ``n`` rows.

    Only observed columns are returned, unless ``include_latent`` is set
    (all latents appended) or specific latents are listed in ``reveal``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cols = _sample_all(scm, n, rng)
    dag = scm.dag
    keep = list(dag.observed) + [z for z in dag.latent if include_latent or z in set(reveal)]
    return pd.DataFrame({dag.name(v): cols[v] for v in keep})


def enumerate_joint(scm: BinaryScm) -> tuple[tuple[int, ...], np.ndarray]:
    """Exact joint distribution of a binary SCM by enumerating every atom.

    Returns the node order and an array with one binary axis per node.
    """
    if not isinstance(scm, BinaryScm):
        raise TypeError("exact enumeration needs a binary SCM")
    dag = scm.dag
    nodes = tuple(sorted(dag.nodes))
    pos = {v: k for k, v in enumerate(nodes)}
    probs = np.zeros((2,) * len(nodes))
    for atom in itertools.product((0, 1), repeat=len(nodes)):
        p = 1.0
        for v in nodes:
            x = atom[pos[v]]
            if v in scm.hard:
                p *= float(x == scm.hard[v])
            else:
                theta = scm.cpt[v][tuple(atom[pos[u]] for u in dag.parents(v))]
                p *= theta if x == 1 else 1.0 - theta
            if p == 0.0:
                break
        probs[atom] = p
    return nodes, probs


# -- context plans -------------------------------------------------------------


@dataclass(frozen=True)
class PlannedContext:
    id: int
    interventions: tuple[Intervention, ...] = ()


@dataclass(frozen=True)
class MechanismShiftPlan:
    contexts: tuple[PlannedContext, ...]
    shift_prob: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "contexts", tuple(self.contexts))
        ids = [c.id for c in self.contexts]
        if len(set(ids)) != len(ids):
            raise ValueError("context ids must be unique")


def random_shift_plan(
    scm: Scm,
    n_contexts: int,
    shift_prob: float,
    seed: int,
    *,
    targets: Sequence[int] | None = None,
    include_observational: bool = True,
    start_id: int = 0,
) -> MechanismShiftPlan:
    """Soft shifts: in every context each target's mechanism is replaced with
    probability ``shift_prob`` (fresh random params per shift).

    Defaults to all nodes, latents included. Context ``start_id`` is the
    unshifted observational one when ``include_observational`` is set.
    """
    if not 0.0 < shift_prob < 0.5:
        raise ValueError("sparse mechanism shifts need 0 < shift_prob < 0.5")
    rng = np.random.default_rng(seed)
    targets = sorted(scm.dag.nodes) if targets is None else [scm.dag.node(t) for t in targets]
    contexts = []
    cid = start_id
    if include_observational:
        contexts.append(PlannedContext(cid))
        cid += 1
    for _ in range(n_contexts):
        chosen = [t for t in targets if rng.random() < shift_prob]
        ivs = tuple(soft(t, **random_soft_params(scm, t, rng)) for t in chosen)
        contexts.append(PlannedContext(cid, ivs))
        cid += 1
    return MechanismShiftPlan(tuple(contexts), shift_prob)


def single_target_plan(
    scm: Scm,
    *,
    kind: str = "hard",
    targets: Sequence[int] | None = None,
    values: Sequence[float] = (0, 1),
    repeats: int = 1,
    seed: int = 0,
    include_observational: bool = True,
    start_id: int = 0,
) -> MechanismShiftPlan:
    """One intervened node per context.

    ``kind="hard"``: one context per (observed target, value). ``kind="soft"``:
    ``repeats`` contexts per target, each with fresh random params.
    """
    rng = np.random.default_rng(seed)
    dag = scm.dag
    if targets is None:
        targets = sorted(dag.observed) if kind == "hard" else sorted(dag.nodes)
    contexts = []
    cid = start_id
    if include_observational:
        contexts.append(PlannedContext(cid))
        cid += 1
    for _ in range(repeats):
        for t in targets:
            t = dag.node(t)
            if kind == "hard":
                for v in values:
                    contexts.append(PlannedContext(cid, (hard(t, v),)))
                    cid += 1
            else:
                contexts.append(PlannedContext(cid, (soft(t, **random_soft_params(scm, t, rng)),)))
                cid += 1
        if kind == "hard":
            break
    return MechanismShiftPlan(tuple(contexts))


def merge_plans(*plans: MechanismShiftPlan) -> MechanismShiftPlan:
    """Concatenate plans, renumbering contexts 0..n-1 in order."""
    out = []
    for plan in plans:
        for c in plan.contexts:
            out.append(PlannedContext(len(out), c.interventions))
    return MechanismShiftPlan(tuple(out))


def shifted_names(dag: Dag, ivs: Iterable[Intervention], reveal: Iterable[int] = ()) -> frozenset[str]:
    """Observed (or revealed) variables whose mechanism changes under ``ivs``.

    A shifted latent counts as a shift of each of its children.
    """
    reveal = set(reveal)
    out = set()
    for iv in ivs:
        t = dag.node(iv.target)
        if dag.kind(t) == "latent":
            out.update(dag.name(c) for c in dag.children(t))
            if t in reveal:
                out.add(dag.name(t))
        else:
            out.add(dag.name(t))
    return frozenset(out)


def generate_context_suite(
    scm: Scm,
    plan: MechanismShiftPlan,
    n_per_context: int,
    seed: int,
    *,
    reveal: Iterable[int] = (),
) -> ContextSuite:
    """Sample every planned context and record which variables shifted."""
    if not plan.contexts:
        raise ValueError("plan has no contexts")
    reveal = [scm.dag.node(z) for z in reveal]
    dag = scm.dag
    seeds = np.random.SeedSequence(seed).spawn(len(plan.contexts))
    metas, tables = [], {}
    for ctx, ss in zip(plan.contexts, seeds):
        model = scm
        for iv in ctx.interventions:
            model = apply_intervention(model, iv)
        tables[ctx.id] = sample(model, n_per_context, ss, reveal=reveal)
        records = tuple(
            InterventionRecord(dag.name(iv.target), iv.kind, None if iv.kind == "soft" else iv.value)
            for iv in ctx.interventions
        )
        metas.append(
            ContextMeta(
                id=ctx.id,
                shifted=shifted_names(dag, ctx.interventions, reveal),
                interventions=records,
                is_observational=not ctx.interventions,
            )
        )
    return ContextSuite(tuple(metas), tables, dag)
