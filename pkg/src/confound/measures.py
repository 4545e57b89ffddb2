"""Confounding measures for pairs and sets of observed variables.

Three families, by what is known about the contexts:

* ``cnf1``: hard interventions are available. Confounding shows up as
  directed information in *both* directions, measured as a KL divergence
  between observational and interventional conditionals.
* ``cnf2``: only which mechanisms shifted is known. Confounding shows up as
  dependence between per-context means of the two variables, over contexts
  that shift both.
* ``cnf3``: as ``cnf2`` plus the causal direction between the pair, so the
  child's per-context conditional means can be used instead.

Every value is ``1 - exp(-I)`` for a non-negative information quantity ``I``
in nats, which maps ``[0, inf)`` monotonically onto ``[0, 1)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .contexts import (
    AND,
    ContextSuite,
    conditional_context_expectations,
    context_expectations,
    select_contexts,
)
from .errors import (
    DirectionRequired,
    EmptyContextSet,
    InsufficientContexts,
    InvalidSetSize,
)
from .estimation.info import (
    DEFAULT_K,
    MIN_LENGTH,
    InfoEstimate,
    conditional_entropy,
    conditional_mutual_information,
    entropy,
    mi_null_quantile,
    mutual_information,
    total_correlation,
)
from .estimation.tables import DEFAULT_SMOOTHING, set_directed_information
from .graph import Dag, path_node_set

I_TO_J = "i_to_j"
J_TO_I = "j_to_i"
NONE_KNOWN = "none_known"
DIRECTIONS = (I_TO_J, J_TO_I, NONE_KNOWN)

DEFAULT_THRESHOLD = 0.05
DEFAULT_THM1_TOL = 0.01
REPORT_SCHEMA_VERSION = 1

# Largest double below 1; keeps values inside [0, 1) for very large I.
_BELOW_ONE = float(np.nextafter(1.0, 0.0))


def to_unit(info: float) -> float:
    """Map information ``I >= 0`` to ``1 - exp(-I)``."""
    if info < 0:
        raise ValueError("information must be non-negative")
    return min(float(-np.expm1(-info)), _BELOW_ONE)


def flip(direction: str) -> str:
    return {I_TO_J: J_TO_I, J_TO_I: I_TO_J, NONE_KNOWN: NONE_KNOWN}[direction]


@dataclass(frozen=True)
class CnfValue:
    """One confounding measurement.

    ``information`` is the non-negative quantity behind ``value``;
    ``components`` holds the underlying estimates by name.
    """

    measure: str
    setting: int
    variables: tuple[str, ...]
    information: float
    components: Mapping[str, InfoEstimate] = field(default_factory=dict)
    conditioning: tuple[str, ...] = ()
    direction: str | None = None
    mode: str | None = None
    context_counts: Mapping[str, int] = field(default_factory=dict)
    extra: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.information >= 0:
            raise ValueError(f"information must be >= 0, got {self.information}")
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "conditioning", tuple(self.conditioning))

    @property
    def value(self) -> float:
        return to_unit(self.information)

    def to_dict(self) -> dict:
        out = {
            "measure": self.measure,
            "setting": self.setting,
            "variables": list(self.variables),
            "conditioning": list(self.conditioning),
            "value": self.value,
            "information": self.information,
            "components": {
                k: {"value": c.value, "raw": c.raw, "estimator": c.estimator, "sample_count": c.sample_count}
                for k, c in self.components.items()
            },
            "context_counts": dict(self.context_counts),
        }
        if self.direction is not None:
            out["direction"] = self.direction
        if self.mode is not None:
            out["mode"] = self.mode
        if self.extra:
            out["extra"] = dict(self.extra)
        return out


@dataclass(frozen=True)
class DetectionConfig:
    """Detection rule ``value > threshold``.

    With ``calibration="null_quantile"`` the threshold is replaced by the
    ``q``-quantile of the measure over ``trials`` shuffled copies of the data.
    """

    threshold: float = DEFAULT_THRESHOLD
    calibration: str = "fixed"
    q: float = 0.95
    trials: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.threshold < 1.0:
            raise ValueError("threshold must lie in [0, 1)")
        if self.calibration not in ("fixed", "null_quantile"):
            raise ValueError(f"unknown calibration {self.calibration!r}")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


# -- setting 1: directed information -------------------------------------------


def _paths(suite: ContextSuite, dag: Dag | None, src: str, dst: str) -> set[str]:
    """Names of nodes on directed paths src -> dst (dst included, src excluded).

    Without a graph only ``dst`` itself is excluded from the context set.
    """
    dag = dag if dag is not None else suite.dag
    if dag is None:
        return {dst}
    path = path_node_set(dag, dag.node(src), dag.node(dst))
    return {dag.name(v) for v in path} | {dst}


def _do_contexts(suite: ContextSuite, do: Sequence[str], avoid: Iterable[str]) -> list[int]:
    """Contexts hard-setting every column in ``do`` and shifting nothing in ``avoid``."""
    avoid = set(avoid) - set(do)
    ids = select_contexts(suite.metas, do, avoid, "and_not") if avoid else select_contexts(suite.metas, do)
    return [c for c in ids if all(suite.meta(c).hard_value(v) is not None for v in do)]


def _directed(
    suite: ContextSuite,
    sources: Sequence[str],
    targets: Sequence[str],
    given: Sequence[str],
    dag: Dag | None,
    smoothing: float,
) -> tuple[InfoEstimate, int]:
    avoid: set[str] = set()
    for t in targets:
        for s in sources:
            avoid |= _paths(suite, dag, t, s)
    ids = _do_contexts(suite, targets, avoid)
    if not ids:
        tgt = ", ".join(targets)
        raise EmptyContextSet(
            f"no context hard-intervenes on {{{tgt}}} without shifting variables on directed paths "
            f"from {{{tgt}}} to {{{', '.join(sources)}}}; CNF-1 needs such contexts for each "
            f"direction, plus an observational context"
        )
    est = set_directed_information(suite, sources, targets, given, do_ids=ids, smoothing=smoothing)
    return est, len(ids)


def _require_observational(suite: ContextSuite) -> int:
    n = len(suite.observational_ids())
    if n == 0:
        raise EmptyContextSet(
            "CNF-1 needs an observational context (no shifted mechanisms) in addition to "
            "hard-intervention contexts on each variable"
        )
    return n


def cnf1_pair(
    suite: ContextSuite,
    i: str,
    j: str,
    dag: Dag | None = None,
    *,
    smoothing: float = DEFAULT_SMOOTHING,
) -> CnfValue:
    """``1 - exp(-min(I(i -> j), I(j -> i)))``.

    ``I(i -> j)`` compares P(i | j) with P(i | do(j)); the latter uses contexts
    hard-setting ``j`` that shift nothing on a directed path from ``j`` to
    ``i``. Paths come from ``dag`` (default: the suite's graph, if any).
    """
    return cnf1_conditional(suite, i, j, None, dag, smoothing=smoothing)


def cnf1_conditional(
    suite: ContextSuite,
    i: str,
    j: str,
    o: str | Sequence[str] | None,
    dag: Dag | None = None,
    *,
    smoothing: float = DEFAULT_SMOOTHING,
) -> CnfValue:
    """CNF-1 with ``o`` added to every conditioning set; ``o=None`` is the
    unconditional measure."""
    given = () if o is None else ((o,) if isinstance(o, str) else tuple(o))
    for v in (i, j, *given):
        suite.check_column(v)
    if i == j:
        return CnfValue("cnf1", 1, (i, j), 0.0, conditioning=given)
    if set(given) & {i, j}:
        raise ValueError("the conditioning set must not contain the pair itself")
    n_obs = _require_observational(suite)
    fwd, n_j = _directed(suite, (i,), (j,), given, dag, smoothing)
    bwd, n_i = _directed(suite, (j,), (i,), given, dag, smoothing)
    return CnfValue(
        "cnf1",
        1,
        (i, j),
        min(fwd.value, bwd.value),
        {f"I({i}->{j})": fwd, f"I({j}->{i})": bwd},
        conditioning=given,
        context_counts={"observational": n_obs, f"do({j})": n_j, f"do({i})": n_i},
    )


def cnf1_joint(
    suite: ContextSuite,
    S: Sequence[str],
    dag: Dag | None = None,
    *,
    smoothing: float = DEFAULT_SMOOTHING,
) -> CnfValue:
    """Joint CNF-1 over a set: for every member ``i``, the pairwise measure
    between ``i`` and the rest of ``S`` taken as one vector variable.

    ``information`` is the sum of the per-member minima; ``extra["term_sum"]``
    is the plain sum of per-member CNF-1 values, which can exceed 1.
    """
    S = tuple(S)
    if len(set(S)) != len(S) or len(S) < 2:
        raise InvalidSetSize("joint CNF-1 needs at least two distinct variables")
    if len(S) == 2:
        return cnf1_pair(suite, S[0], S[1], dag, smoothing=smoothing)
    for v in S:
        suite.check_column(v)
    counts = {"observational": _require_observational(suite)}
    components, total, term_sum = {}, 0.0, 0.0
    for i in S:
        rest = tuple(v for v in S if v != i)
        into, n_i = _directed(suite, rest, (i,), (), dag, smoothing)
        out, n_rest = _directed(suite, (i,), rest, (), dag, smoothing)
        rest_label = "{" + ",".join(rest) + "}"
        components[f"I({rest_label}->{i})"] = into
        components[f"I({i}->{rest_label})"] = out
        counts[f"do({i})"] = n_i
        counts[f"do({rest_label})"] = n_rest
        m = min(into.value, out.value)
        total += m
        term_sum += to_unit(m)
    return CnfValue("cnf1_joint", 1, S, total, components, context_counts=counts, extra={"term_sum": term_sum})


@dataclass(frozen=True)
class TheoremCheck:
    """Outcome of a theorem-based set test.

    ``triple`` is the witness (when ``holds``) or the first failing triple.
    """

    holds: bool
    triple: tuple[str, str, str] | None
    details: tuple[dict, ...] = ()


def _check_set(S: Sequence[str]) -> tuple[str, ...]:
    S = tuple(S)
    if len(set(S)) != len(S):
        raise InvalidSetSize("set members must be distinct")
    if len(S) < 3:
        raise InvalidSetSize(f"theorem tests need |S| >= 3, got {len(S)}")
    return S


def thm1_joint_unconfounded_test(
    suite: ContextSuite,
    S: Sequence[str],
    tol: float = DEFAULT_THM1_TOL,
    dag: Dag | None = None,
    *,
    smoothing: float = DEFAULT_SMOOTHING,
) -> TheoremCheck:
    """True when some ordered triple satisfies
    ``|I(i -> j | k) - I({i, k} -> j)| <= tol``; that triple is the witness."""
    S = _check_set(S)
    details = []
    for i, j, k in itertools.permutations(S, 3):
        try:
            cond, _ = _directed(suite, (i,), (j,), (k,), dag, smoothing)
            joint, _ = _directed(suite, (i, k), (j,), (), dag, smoothing)
        except EmptyContextSet:
            continue
        gap = abs(cond.value - joint.value)
        details.append({"triple": (i, j, k), "conditional": cond.value, "joint_source": joint.value, "gap": gap})
        if gap <= tol:
            return TheoremCheck(True, (i, j, k), tuple(details))
    if not details:
        raise EmptyContextSet(f"no triple of {list(S)} has the hard-intervention contexts needed")
    return TheoremCheck(False, None, tuple(details))


# -- settings 2 and 3: context-level streams ------------------------------------


def _shared_contexts(suite: ContextSuite, members: Sequence[str]) -> list[int]:
    for v in members:
        suite.check_column(v)
    return select_contexts(suite.metas, members[:1], members[1:], AND)


def _need(ids: Sequence[int], members: Sequence[str]) -> None:
    if len(ids) < MIN_LENGTH:
        raise InsufficientContexts(
            MIN_LENGTH, len(ids), f"contexts shifting all of {{{', '.join(members)}}}"
        )


def _stream(suite, ids, v) -> np.ndarray:
    return context_expectations(suite, ids, v).values


def _cond_stream(suite, ids, child, parent) -> np.ndarray:
    return conditional_context_expectations(suite, ids, child, parent).values


def _stream_dependence(x, y, z=None, *, k: int, seed: int) -> InfoEstimate:
    if z is None:
        return mutual_information(x, y, k=k, seed=seed)
    return conditional_mutual_information(x, y, z, k=k, seed=seed)


def _streams_cnf2(suite, i, j, o):
    ids = _shared_contexts(suite, (i, j))
    _need(ids, (i, j))
    x, y = _stream(suite, ids, i), _stream(suite, ids, j)
    z = _stream(suite, ids, o) if o is not None else None
    return ids, x, y, z


STREAM = "stream"
STRATIFIED = "stratified"


def cnf2_pair(suite: ContextSuite, i: str, j: str, *, k: int = DEFAULT_K, seed: int = 0) -> CnfValue:
    """``1 - exp(-MI(E_i; E_j))`` over contexts shifting both ``i`` and ``j``.

    For ``i == j`` the self-information is the (clamped) entropy of E_i.
    """
    return _cnf2_stream(suite, i, j, None, k=k, seed=seed)


def _cnf2_stream(suite, i, j, o, *, k, seed) -> CnfValue:
    ids, x, y, z = _streams_cnf2(suite, i, j, o)
    given = () if o is None else (o,)
    if i == j:
        est = entropy(x, k=k, seed=seed) if z is None else conditional_entropy(x, z, k=k, seed=seed)
        name = f"H(E_{i})" if z is None else f"H(E_{i}|E_{o})"
    else:
        est = _stream_dependence(x, y, z, k=k, seed=seed)
        name = f"I(E_{i};E_{j})" if z is None else f"I(E_{i};E_{j}|E_{o})"
    return CnfValue(
        "cnf2", 2, (i, j), max(est.raw, 0.0), {name: est}, conditioning=given,
        mode=None if o is None else STREAM, context_counts={"shared": len(ids)},
    )


def _half(suite: ContextSuite, ids: Sequence[int], parity: int) -> ContextSuite:
    """Sub-suite of ``ids`` keeping every other row, starting at ``parity``."""
    tables = {c: suite.tables[c].iloc[parity::2].reset_index(drop=True) for c in ids}
    return ContextSuite(tuple(suite.meta(c) for c in ids), tables, suite.dag)


def _stratified_streams(suite, i, j, o):
    """Per-context E[i | o = v] and E[j | o = v] from disjoint row halves,
    plus the pooled frequency of each level v."""
    ids = _shared_contexts(suite, (i, j))
    _need(ids, (i, j))
    suite.check_column(o)
    levels = suite.levels(o)
    a = conditional_context_expectations(_half(suite, ids, 0), ids, i, o, levels=levels)
    b = conditional_context_expectations(_half(suite, ids, 1), ids, j, o, levels=levels)
    pooled = suite.pooled(ids)[o].to_numpy()
    weights = np.array([np.mean(pooled == v) for v in levels])
    return ids, levels, a.values, b.values, weights


def _stratified_info(a, b, weights, levels, i, j, o, *, k, seed):
    comps, total, raw = {}, 0.0, 0.0
    for col, (v, w) in enumerate(zip(levels, weights)):
        est = mutual_information(a[:, col], b[:, col], k=k, seed=seed)
        comps[f"I(E_{i}|{o}={v};E_{j}|{o}={v})"] = est
        total += w * est.value
        raw += w * est.raw
    return total, raw, comps


def cnf2_conditional(
    suite: ContextSuite,
    i: str,
    j: str,
    o: str | None,
    *,
    mode: str = STRATIFIED,
    k: int = DEFAULT_K,
    seed: int = 0,
) -> CnfValue:
    """CNF-2 with the observed variable ``o`` held fixed.

    ``mode="stratified"`` (default) conditions at sample level: within each
    shared context, E[i | o = v] and E[j | o = v] are estimated from disjoint
    halves of the rows, and the stream MIs are averaged over levels v with
    weights P(o = v). ``mode="stream"`` instead computes
    ``CMI(E_i; E_j | E_o)`` on per-context means. Because E_o is itself a
    noisy sample mean, the stream form keeps a residual dependence of order
    a few hundredths of a nat even when ``o`` blocks all confounding.

    ``i == j`` always uses the stream form, giving the entropy H(E_i | E_o).
    """
    if o is None:
        return cnf2_pair(suite, i, j, k=k, seed=seed)
    if mode not in (STRATIFIED, STREAM):
        raise ValueError(f"unknown conditioning mode {mode!r}")
    if mode == STREAM or i == j:
        return _cnf2_stream(suite, i, j, o, k=k, seed=seed)
    ids, levels, a, b, weights = _stratified_streams(suite, i, j, o)
    total, raw, comps = _stratified_info(a, b, weights, levels, i, j, o, k=k, seed=seed)
    return CnfValue(
        "cnf2", 2, (i, j), total, comps, conditioning=(o,), mode=STRATIFIED,
        context_counts={"shared": len(ids)}, extra={"raw": raw},
    )


def cnf2_joint(suite: ContextSuite, S: Sequence[str], *, k: int = DEFAULT_K, seed: int = 0) -> CnfValue:
    """``1 - exp(-TC(E_s for s in S))`` over contexts shifting all of ``S``."""
    S = tuple(S)
    if len(set(S)) != len(S) or len(S) < 2:
        raise InvalidSetSize("joint CNF-2 needs at least two distinct variables")
    ids = _shared_contexts(suite, S)
    _need(ids, S)
    est = total_correlation([_stream(suite, ids, v) for v in S], k=k, seed=seed)
    return CnfValue(
        "cnf2_joint", 2, S, est.value, {"T(" + ",".join(f"E_{v}" for v in S) + ")": est},
        context_counts={"shared": len(ids)},
    )


def _floor(n: int, noise_floor: float | None, k: int) -> float:
    return mi_null_quantile(n, k=k) if noise_floor is None else float(noise_floor)


def _explains_away(x, y, z, floor, k, seed) -> tuple[bool, float, float]:
    mi = mutual_information(x, y, k=k, seed=seed).value
    cmi = conditional_mutual_information(x, y, z, k=k, seed=seed).value
    return mi - cmi > floor, mi, cmi


def thm3_joint_confounded_test(
    suite: ContextSuite,
    S: Sequence[str],
    *,
    noise_floor: float | None = None,
    k: int = DEFAULT_K,
    seed: int = 0,
) -> TheoremCheck:
    """True when, for every pair and every third member, conditioning on the
    third stream lowers the pair's stream MI by more than the noise floor.

    Streams are taken over contexts shifting all of ``S``. The default noise
    floor is the 95th percentile of the null MI estimate at that length.
    """
    S = _check_set(S)
    ids = _shared_contexts(suite, S)
    _need(ids, S)
    streams = {v: _stream(suite, ids, v) for v in S}
    floor = _floor(len(ids), noise_floor, k)
    details = []
    for a, b in itertools.combinations(S, 2):
        for c in S:
            if c in (a, b):
                continue
            ok, mi, cmi = _explains_away(streams[a], streams[b], streams[c], floor, k, seed)
            details.append({"triple": (a, b, c), "mi": mi, "cmi": cmi, "floor": floor})
            if not ok:
                return TheoremCheck(False, (a, b, c), tuple(details))
    return TheoremCheck(True, None, tuple(details))


def cnf3_pair(
    suite: ContextSuite,
    i: str,
    j: str,
    direction: str = NONE_KNOWN,
    *,
    k: int = DEFAULT_K,
    seed: int = 0,
) -> CnfValue:
    """CNF with a known causal direction.

    ``i_to_j``: MI between the stream of conditional means E[j | i = v]
    (one component per level v) and the stream E_j. ``j_to_i`` swaps the
    roles. ``none_known`` returns the :func:`cnf2_pair` result, relabelled
    as setting 3 but with identical information and components.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if direction == NONE_KNOWN:
        return replace(cnf2_pair(suite, i, j, k=k, seed=seed), measure="cnf3", setting=3, direction=NONE_KNOWN)
    parent, child = (i, j) if direction == I_TO_J else (j, i)
    ids = _shared_contexts(suite, (i, j))
    _need(ids, (i, j))
    cond = _cond_stream(suite, ids, child, parent)
    est = mutual_information(cond, _stream(suite, ids, child), k=k, seed=seed)
    return CnfValue(
        "cnf3", 3, (i, j), est.value, {f"I(E_{child}|{parent};E_{child})": est},
        direction=direction, context_counts={"shared": len(ids)},
    )


def _edge_lookup(directions) -> set[tuple[str, str]]:
    """Accept ``{(a, b): "i_to_j" | "j_to_i"}`` or an iterable of (parent, child)."""
    edges = set()
    if isinstance(directions, Mapping):
        for (a, b), d in directions.items():
            if d == I_TO_J:
                edges.add((a, b))
            elif d == J_TO_I:
                edges.add((b, a))
    else:
        edges.update(tuple(e) for e in directions)
    return edges


def thm5_joint_confounded_test(
    suite: ContextSuite,
    S: Sequence[str],
    directions,
    *,
    noise_floor: float | None = None,
    k: int = DEFAULT_K,
    seed: int = 0,
) -> TheoremCheck:
    """Direction-aware analogue of :func:`thm3_joint_confounded_test`.

    For every member ``m`` and pair of other members ``a, b``: the pair
    streams for {a, m} and {m, b} (child means given parent levels) must
    lose more than the noise floor of MI when conditioned on E_m.
    """
    S = _check_set(S)
    edges = _edge_lookup(directions)

    def oriented(a, b):
        if (a, b) in edges:
            return a, b
        if (b, a) in edges:
            return b, a
        raise DirectionRequired(f"no causal direction given for the pair ({a}, {b})")

    for a, b in itertools.combinations(S, 2):
        oriented(a, b)
    ids = _shared_contexts(suite, S)
    _need(ids, S)
    cache: dict[tuple[str, str], np.ndarray] = {}

    def pair_stream(a, b):
        p, c = oriented(a, b)
        if (p, c) not in cache:
            cache[(p, c)] = _cond_stream(suite, ids, c, p)
        return cache[(p, c)]

    floor = _floor(len(ids), noise_floor, k)
    details = []
    for m in S:
        others = [v for v in S if v != m]
        for a, b in itertools.combinations(others, 2):
            ok, mi, cmi = _explains_away(
                pair_stream(a, m), pair_stream(m, b), _stream(suite, ids, m), floor, k, seed
            )
            details.append({"triple": (a, m, b), "mi": mi, "cmi": cmi, "floor": floor})
            if not ok:
                return TheoremCheck(False, (a, m, b), tuple(details))
    return TheoremCheck(True, None, tuple(details))


def cnf3_joint(suite: ContextSuite, S: Sequence[str], *, k: int = DEFAULT_K, seed: int = 0) -> CnfValue:
    """The joint setting-3 measure coincides with the joint setting-2 one."""
    return cnf2_joint(suite, S, k=k, seed=seed)


# -- detection -------------------------------------------------------------------


def _shuffled_suite(suite: ContextSuite, columns: Sequence[str], rng: np.random.Generator) -> ContextSuite:
    tables = {}
    for cid, df in suite.tables.items():
        df = df.copy()
        for c in columns:
            df[c] = rng.permutation(df[c].to_numpy())
        tables[cid] = df
    return ContextSuite(suite.metas, tables, suite.dag)


def null_distribution(suite: ContextSuite, value: CnfValue, trials: int = 100, seed: int = 0) -> np.ndarray:
    """Values of the same measure under shuffled data.

    CNF-1: every variable but the first is shuffled within each sample table.
    CNF-2/3: the first variable's context stream is permuted across contexts.
    """
    rng = np.random.default_rng(seed)
    vs, given = value.variables, value.conditioning
    out = np.empty(trials)
    if value.measure in ("cnf1", "cnf1_joint"):
        for t in range(trials):
            shuffled = _shuffled_suite(suite, vs[1:], rng)
            if value.measure == "cnf1":
                res = cnf1_conditional(shuffled, vs[0], vs[1], given or None)
            else:
                res = cnf1_joint(shuffled, vs)
            out[t] = res.value
        return out

    if value.measure == "cnf2_joint":
        ids = _shared_contexts(suite, vs)
        streams = [_stream(suite, ids, v) for v in vs]
        for t in range(trials):
            perm = [streams[0]] + [rng.permutation(s) for s in streams[1:]]
            out[t] = to_unit(total_correlation(perm).value)
        return out

    i, j = vs
    ids = _shared_contexts(suite, (i, j))
    _need(ids, (i, j))
    if value.measure == "cnf3" and value.direction != NONE_KNOWN:
        parent, child = (i, j) if value.direction == I_TO_J else (j, i)
        x, y, z = _cond_stream(suite, ids, child, parent), _stream(suite, ids, child), None
    elif value.measure == "cnf2" and value.mode == STRATIFIED:
        o = given[0]
        _, levels, a, b, weights = _stratified_streams(suite, i, j, o)
        for t in range(trials):
            total, _, _ = _stratified_info(a[rng.permutation(len(a))], b, weights, levels, i, j, o, k=DEFAULT_K, seed=0)
            out[t] = to_unit(total)
        return out
    elif value.measure in ("cnf2", "cnf3"):
        _, x, y, z = _streams_cnf2(suite, i, j, given[0] if given else None)
    else:
        raise ValueError(f"no null model for measure {value.measure!r}")
    for t in range(trials):
        out[t] = to_unit(_stream_dependence(rng.permutation(x), y, z, k=DEFAULT_K, seed=0).value)
    return out


def calibrated_threshold(suite: ContextSuite, value: CnfValue, cfg: DetectionConfig) -> float:
    if cfg.calibration == "fixed":
        return cfg.threshold
    return float(np.quantile(null_distribution(suite, value, cfg.trials, cfg.seed), cfg.q))


def detect(value: CnfValue, cfg: DetectionConfig = DetectionConfig(), suite: ContextSuite | None = None) -> bool:
    """``value > threshold``. Null-quantile calibration needs the ``suite``."""
    if cfg.calibration == "null_quantile":
        if suite is None:
            raise ValueError("null-quantile calibration needs the suite the value came from")
        return value.value > calibrated_threshold(suite, value, cfg)
    return value.value > cfg.threshold


# -- reports ---------------------------------------------------------------------


@dataclass
class ConfoundingReport:
    """Per-pair and per-set measure values with detection flags."""

    entries: list[dict] = field(default_factory=list)
    sets: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, value: CnfValue, detected: bool, threshold: float) -> dict:
        entry = value.to_dict()
        entry.update({"detected": bool(detected), "threshold": float(threshold)})
        if len(value.variables) == 2:
            entry["i"], entry["j"] = value.variables
            self.entries.append(entry)
        else:
            self.sets.append(entry)
        return entry

    def add_check(self, name: str, S: Sequence[str], check: TheoremCheck) -> dict:
        entry = {
            "test": name,
            "variables": list(S),
            "holds": check.holds,
            "triple": list(check.triple) if check.triple else None,
            "details": [dict(d, triple=list(d["triple"])) for d in check.details],
        }
        self.sets.append(entry)
        return entry

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": "confounding",
            "meta": self.meta,
            "pairs": self.entries,
            "sets": self.sets,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ConfoundingReport":
        return cls(list(doc.get("pairs", [])), list(doc.get("sets", [])), dict(doc.get("meta", {})))


# -- the pairwise procedure ------------------------------------------------------


def measure_pair(
    suite: ContextSuite,
    i: str,
    j: str,
    *,
    settings: Iterable[int] = (1, 2, 3),
    condition: str | None = None,
    direction: str = NONE_KNOWN,
    cfg: DetectionConfig = DetectionConfig(),
    dag: Dag | None = None,
    on_error: Callable[[int, Exception], None] | None = None,
) -> ConfoundingReport:
    """Evaluate the requested settings for one pair, in order 1, 2, 3.

    Conditional setting-2 values use the default stratified conditioning.
    Data errors propagate unless ``on_error`` is given, in which case it is
    called with the setting and the exception and evaluation continues.
    """
    report = ConfoundingReport(meta={"pair": [i, j], "condition": condition, "direction": direction})
    for setting in sorted(set(settings)):
        try:
            if setting == 1:
                value = cnf1_conditional(suite, i, j, condition, dag)
            elif setting == 2:
                value = cnf2_conditional(suite, i, j, condition)
            elif setting == 3:
                if condition is not None:
                    raise ValueError("setting 3 has no conditional variant")
                value = cnf3_pair(suite, i, j, direction)
            else:
                raise ValueError(f"unknown setting {setting}")
        except Exception as exc:
            if on_error is None:
                raise
            on_error(setting, exc)
            continue
        tau = calibrated_threshold(suite, value, cfg)
        report.add(value, value.value > tau, tau)
    return report
