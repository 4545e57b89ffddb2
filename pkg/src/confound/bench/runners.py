"""Experiment runners: three-node suites, downstream effect estimation and
the Erdos-Renyi detection benchmark.

Every runner returns a plain dict (``schema_version`` 1) that serialises to
JSON and renders through :mod:`confound.bench.report`.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Mapping

import numpy as np

from ..contexts import MIN_CONTEXTS, ContextSuite
from ..errors import InsufficientContexts, StratumEmpty
from ..graph import Dag, generate_er_dag, inject_latent_confounders, true_confounded_pairs
from ..measures import (
    I_TO_J,
    J_TO_I,
    NONE_KNOWN,
    STREAM,
    DetectionConfig,
    calibrated_threshold,
    cnf1_conditional,
    cnf1_pair,
    cnf2_conditional,
    cnf2_pair,
    cnf3_pair,
)
from ..scm import (
    BinaryScm,
    apply_intervention,
    enumerate_joint,
    generate_context_suite,
    hard,
    merge_plans,
    random_shift_plan,
    single_target_plan,
)
from .fixtures import GRAPHS, XI, XJ, logistic_binary_scm, three_node_scm

SCHEMA_VERSION = 1
LATENT_DRIVEN = ("G5", "G6")


@dataclass(frozen=True)
class ExperimentSpec:
    """Parameters shared by the runners; each runner reads its own subset.

    Three-node suites hold an observational context, hard do(0)/do(1)
    contexts on Xi and Xj, and ``n_soft_contexts`` soft-shift contexts. In
    G1-G4 every node (latent included) shifts independently with
    ``shift_prob``; in G5/G6 only the latents shift, and they are revealed as
    columns so they can be conditioned on.

    ER instances add ``n_latents`` (default ``max(2, n // 4)``) latent roots
    with ``latent_children`` children each to a DAG with edge probability
    ``edge_prob``; with ``exclusive_latents`` no node gets two latent parents.
    Mechanisms are logistic (see :func:`logistic_binary_scm`) with weights
    ``er_latent_weight`` and ``er_edge_weight``. Setting 1 uses one
    observational plus two hard contexts per node; settings 2 and 3 use
    ``er_soft_contexts`` soft contexts where every node shifts with
    ``er_shift_prob``. ``workers`` sizes the process pool for ER cells.
    """

    graphs: tuple[str, ...] = GRAPHS
    family: str = "binary"
    n_soft_contexts: int = 2000
    shift_prob: float = 0.45
    samples: int = 5000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    settings: tuple[int, ...] = (1, 2, 3)
    threshold: float = 0.05
    calibration: str = "fixed"
    ate_samples: tuple[int, ...] = (1000, 2000, 3000, 4000, 5000)
    er_nodes: tuple[int, ...] = (10, 15, 20, 25)
    er_samples: tuple[int, ...] = (100, 200, 300, 400, 500)
    edge_prob: float = 0.2
    n_latents: int | None = None
    latent_children: int = 2
    exclusive_latents: bool = True
    er_soft_contexts: int = 600
    er_shift_prob: float = 0.045
    er_latent_weight: float = 3.0
    er_edge_weight: float = 1.0
    workers: int = 1

    def __post_init__(self):
        for name in ("graphs", "seeds", "settings", "ate_samples", "er_nodes", "er_samples"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.family != "binary":
            raise ValueError("the benchmark fixtures are binary SCMs")
        if min((self.samples, *self.ate_samples, *self.er_samples)) < 100:
            raise ValueError("samples per context must be >= 100")
        if 2 in self.settings or 3 in self.settings:
            if min(self.n_soft_contexts, self.er_soft_contexts) < MIN_CONTEXTS:
                raise ValueError(f"settings 2 and 3 need at least {MIN_CONTEXTS} soft contexts")
        bad = [g for g in self.graphs if g not in GRAPHS]
        if bad:
            raise ValueError(f"unknown graphs {bad}")
        if not set(self.settings) <= {1, 2, 3}:
            raise ValueError("settings must be drawn from {1, 2, 3}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.detection  # validates threshold / calibration

    @property
    def detection(self) -> DetectionConfig:
        return DetectionConfig(self.threshold, self.calibration)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown experiment fields {unknown}")
        return cls(**dict(data))


@dataclass(frozen=True)
class MetricsRow:
    precision: float
    recall: float
    f1: float
    n: int | None = None
    contexts: int | None = None
    samples: int | None = None
    setting: int | None = None
    seed: int | None = None

    def __post_init__(self):
        for v in (self.precision, self.recall, self.f1):
            if not 0.0 <= v <= 1.0:
                raise ValueError("metrics must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def precision_recall_f1(predicted: Iterable, truth: Iterable, **labels) -> MetricsRow:
    """Pair-set scores. Precision is 0 when nothing is predicted, recall is 0
    when nothing is true, and both are 1 when both sets are empty."""
    predicted, truth = {frozenset(p) for p in predicted}, {frozenset(p) for p in truth}
    if not predicted and not truth:
        return MetricsRow(1.0, 1.0, 1.0, **labels)
    tp = len(predicted & truth)
    precision = tp / len(predicted) if predicted else 0.0
    recall = tp / len(truth) if truth else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsRow(precision, recall, f1, **labels)


def direction_from_dag(dag: Dag, i: str, j: str) -> str:
    """Causal order of two observed nodes, or ``none_known`` if neither is an ancestor."""
    a, b = dag.node(i), dag.node(j)
    if b in dag.descendants(a):
        return I_TO_J
    if a in dag.descendants(b):
        return J_TO_I
    return NONE_KNOWN


def _summary(rows: list[dict], keys: tuple[str, ...], value: str = "value") -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r.get(value) is None:
            continue
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, grp in groups.items():
        vals = np.array([r[value] for r in grp], dtype=float)
        entry = dict(zip(keys, key))
        entry.update({"mean": float(vals.mean()), "std": float(vals.std()), "runs": len(vals)})
        if "detected" in grp[0]:
            entry["detected"] = int(sum(bool(r["detected"]) for r in grp))
        out.append(entry)
    return out


# -- three-node suites -----------------------------------------------------------


def build_three_node_suite(graph: str, spec: ExperimentSpec, seed: int) -> ContextSuite:
    scm = three_node_scm(graph)
    dag = scm.dag
    latent_driven = graph in LATENT_DRIVEN
    plans = [single_target_plan(scm, kind="hard", targets=dag.observed)]
    if 2 in spec.settings or 3 in spec.settings:
        targets = list(dag.latent) if latent_driven else None
        plans.append(
            random_shift_plan(
                scm, spec.n_soft_contexts, spec.shift_prob, seed, targets=targets, include_observational=False
            )
        )
    reveal = dag.latent if latent_driven else ()
    return generate_context_suite(scm, merge_plans(*plans), spec.samples, seed, reveal=reveal)


def _three_node_measures(graph: str, suite: ContextSuite, settings) -> list[tuple[str, str | None, object]]:
    dag = suite.dag
    out = []
    if graph in LATENT_DRIVEN:
        latents = [dag.name(z) for z in dag.latent]
        if 1 in settings:
            out.append(("cnf1", None, lambda: cnf1_pair(suite, "Xi", "Xj")))
            out += [("cnf1", z, lambda z=z: cnf1_conditional(suite, "Xi", "Xj", z)) for z in latents]
        if 2 in settings:
            out.append(("cnf2", None, lambda: cnf2_pair(suite, "Xi", "Xj")))
            out += [("cnf2", z, lambda z=z: cnf2_conditional(suite, "Xi", "Xj", z)) for z in latents]
            out += [
                ("cnf2_stream", z, lambda z=z: cnf2_conditional(suite, "Xi", "Xj", z, mode=STREAM))
                for z in latents
            ]
        return out
    direction = direction_from_dag(dag, "Xi", "Xj")
    if 1 in settings:
        out.append(("cnf1", None, lambda: cnf1_pair(suite, "Xi", "Xj")))
    if 2 in settings:
        out.append(("cnf2", None, lambda: cnf2_pair(suite, "Xi", "Xj")))
    if 3 in settings:
        out.append(("cnf3", None, lambda: cnf3_pair(suite, "Xi", "Xj", direction)))
    return out


def run_three_node_suite(spec: ExperimentSpec = ExperimentSpec()) -> dict:
    """Measures on G1-G6 for every seed, plus mean and std over seeds.

    G1-G4: unconditional CNF-1/2/3 for (Xi, Xj); CNF-3 uses the true
    direction when one exists. G5/G6: CNF-1 and CNF-2 unconditionally and
    given each latent (stratified, with the stream variant for comparison).
    """
    cfg = spec.detection
    rows = []
    start = time.perf_counter()
    for graph in spec.graphs:
        for seed in spec.seeds:
            suite = build_three_node_suite(graph, spec, seed)
            for measure, cond, fn in _three_node_measures(graph, suite, spec.settings):
                value = fn()
                tau = calibrated_threshold(suite, value, cfg)
                rows.append(
                    {
                        "graph": graph,
                        "seed": seed,
                        "measure": measure,
                        "condition": cond or "",
                        "value": value.value,
                        "information": value.information,
                        "detected": value.value > tau,
                        "threshold": tau,
                        "contexts": dict(value.context_counts),
                    }
                )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "three_node",
        "spec": spec.to_dict(),
        "rows": rows,
        "summary": _summary(rows, ("graph", "measure", "condition")),
        "seconds": time.perf_counter() - start,
    }


# -- downstream effect estimation ------------------------------------------------


def true_ate(scm: BinaryScm, treatment: int, outcome: int) -> float:
    """E[outcome | do(treatment = 1)] - E[outcome | do(treatment = 0)] by enumeration."""
    means = []
    for v in (0, 1):
        nodes, probs = enumerate_joint(apply_intervention(scm, hard(treatment, v)))
        axis = nodes.index(outcome)
        other = tuple(k for k in range(probs.ndim) if k != axis)
        means.append(float(probs.sum(axis=other)[1]))
    return means[1] - means[0]


def ate_estimates(table, treatment: str, outcome: str, adjust: Iterable[str] = ()) -> tuple[float, float]:
    """(unadjusted, backdoor-adjusted) effect estimates from one sample table."""
    x = table[treatment].to_numpy()
    y = table[outcome].to_numpy(dtype=float)

    def contrast(mask):
        m1, m0 = mask & (x == 1), mask & (x == 0)
        if not m1.any() or not m0.any():
            raise StratumEmpty(f"a stratum has no rows with {treatment} = 0 or 1")
        return y[m1].mean() - y[m0].mean()

    unadjusted = contrast(np.ones(len(x), dtype=bool))
    adjust = list(adjust)
    if not adjust:
        return unadjusted, unadjusted
    keys = table[adjust].to_numpy()
    strata, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    adjusted = sum(np.mean(inverse == s) * contrast(inverse == s) for s in range(len(strata)))
    return float(unadjusted), float(adjusted)


def run_downstream_ate(spec: ExperimentSpec = ExperimentSpec(graphs=("G2", "G3", "G4"))) -> dict:
    """Effect of Xi on Xj with and without adjusting for a detected confounder.

    For each sample size, a setting-1 suite (Z revealed) is simulated, CNF-1
    decides whether (Xi, Xj) is confounded, and if so the observational
    estimate is adjusted over Z. Errors are absolute differences from the
    enumerated true effect.
    """
    cfg = spec.detection
    graphs = [g for g in spec.graphs if g in ("G2", "G3", "G4")]
    rows = []
    start = time.perf_counter()
    for graph in graphs:
        scm = three_node_scm(graph)
        truth = true_ate(scm, XI, XJ)
        for n in spec.ate_samples:
            for seed in spec.seeds:
                plan = single_target_plan(scm, kind="hard", targets=scm.dag.observed)
                suite = generate_context_suite(scm, plan, n, seed, reveal=scm.dag.latent)
                value = cnf1_pair(suite, "Xi", "Xj")
                detected = value.value > calibrated_threshold(suite, value, cfg)
                obs = suite.table(suite.observational_ids()[0])
                adjust = ["Z"] if detected else []
                unadj, adj = ate_estimates(obs, "Xi", "Xj", adjust)
                rows.append(
                    {
                        "graph": graph,
                        "samples": n,
                        "seed": seed,
                        "true_ate": truth,
                        "unadjusted": unadj,
                        "adjusted": adj,
                        "error_unadjusted": abs(unadj - truth),
                        "error_adjusted": abs(adj - truth),
                        "detected": detected,
                        "cnf1": value.value,
                    }
                )
    summary = []
    for key in ("error_unadjusted", "error_adjusted"):
        for entry in _summary(rows, ("graph", "samples"), key):
            entry["quantity"] = key
            summary.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "downstream",
        "spec": spec.to_dict(),
        "rows": rows,
        "summary": summary,
        "seconds": time.perf_counter() - start,
    }


# -- Erdos-Renyi benchmark -------------------------------------------------------


def _seeds(seed: int, n: int, count: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence([seed, n]).generate_state(count)]


def build_er_instance(n: int, spec: ExperimentSpec, seed: int) -> BinaryScm:
    dag_seed, latent_seed, scm_seed = _seeds(seed, n, 3)
    dag = generate_er_dag(n, spec.edge_prob, dag_seed)
    k = spec.n_latents if spec.n_latents is not None else max(2, n // 4)
    dag = inject_latent_confounders(
        dag, k, spec.latent_children, latent_seed, minimal=True, exclusive=spec.exclusive_latents
    )
    return logistic_binary_scm(
        dag, scm_seed, latent_weight=spec.er_latent_weight, edge_weight=spec.er_edge_weight
    )


def _pair_predictions(suite: ContextSuite, setting: int, dag: Dag, cfg: DetectionConfig) -> set[frozenset[str]]:
    names = [dag.name(v) for v in dag.observed]
    predicted = set()
    for a, b in itertools.combinations(names, 2):
        try:
            if setting == 1:
                value = cnf1_pair(suite, a, b)
            elif setting == 2:
                value = cnf2_pair(suite, a, b)
            else:
                value = cnf3_pair(suite, a, b, direction_from_dag(dag, a, b))
        except InsufficientContexts:
            # Too few shared contexts to measure: treated as not confounded.
            continue
        if value.value > calibrated_threshold(suite, value, cfg):
            predicted.add(frozenset((a, b)))
    return predicted


def _er_cell(n: int, seed: int, spec: ExperimentSpec) -> list[MetricsRow]:
    """All sample sizes and settings for one (n, seed) graph."""
    scm = build_er_instance(n, spec, seed)
    dag = scm.dag
    truth = {frozenset((dag.name(a), dag.name(b))) for a, b in map(tuple, true_confounded_pairs(dag))}
    plan_seed, s1_seed, s2_seed = _seeds(seed, n + 1000, 3)
    cfg = spec.detection
    rows = []
    for samples in spec.er_samples:
        suites = {}
        if 1 in spec.settings:
            suites[1] = generate_context_suite(scm, single_target_plan(scm, kind="hard"), samples, s1_seed)
        if 2 in spec.settings or 3 in spec.settings:
            plan = random_shift_plan(scm, spec.er_soft_contexts, spec.er_shift_prob, plan_seed)
            suites[2] = suites[3] = generate_context_suite(scm, plan, samples, s2_seed)
        for setting in sorted(spec.settings):
            suite = suites[setting]
            predicted = _pair_predictions(suite, setting, dag, cfg)
            rows.append(
                precision_recall_f1(
                    predicted, truth, n=n, contexts=len(suite.metas), samples=samples, setting=setting, seed=seed
                )
            )
    return rows


def run_er_benchmark(spec: ExperimentSpec = ExperimentSpec()) -> dict:
    """Precision / recall / F1 of pairwise detection on random graphs.

    One row per (n, samples, setting, seed). Each (n, seed) cell owns its
    graph and suites; with ``spec.workers > 1`` cells run in a process pool.
    Deterministic given the spec, whatever the worker count.
    """
    start = time.perf_counter()
    cells = [(n, seed) for n in spec.er_nodes for seed in spec.seeds]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            results = list(pool.map(_er_cell, *zip(*cells), itertools.repeat(spec)))
    else:
        results = [_er_cell(n, seed, spec) for n, seed in cells]
    rows = [r for cell in results for r in cell]
    dict_rows = [r.to_dict() for r in rows]
    summary = []
    for metric in ("precision", "recall", "f1"):
        for entry in _summary(dict_rows, ("n", "setting", "samples"), metric):
            entry["metric"] = metric
            summary.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "er",
        "spec": spec.to_dict(),
        "notes": [
            "setting 1 uses 2n + 1 contexts (observational plus do(X=0) and do(X=1) per node) "
            "so that every binary node's support is covered",
            "settings 2 and 3 use soft-shift contexts; pairs with fewer than "
            f"{MIN_CONTEXTS} shared contexts count as not confounded",
        ],
        "rows": dict_rows,
        "summary": summary,
        "seconds": time.perf_counter() - start,
    }
