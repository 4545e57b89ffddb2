"""Smoothed probability tables over discrete columns and directed information.

Directed information from A to B is the conditional KL divergence

    I(A -> B | O) = E_{P(A, B, O)} log[ P(A | B, O) / P(A | do(B), O) ]

where the expectation uses the unsmoothed observational joint, both
conditionals are smoothed, and the interventional conditional averages the
per-context conditionals of contexts that hard-set B.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ..contexts import ContextSuite
from ..errors import (
    DivergenceInfinite,
    EmptyContextSet,
    NonHardContext,
    StratumEmpty,
    SupportMismatch,
    SupportNotCovered,
    UnknownColumn,
)
from .info import InfoEstimate

DEFAULT_SMOOTHING = 0.5
ROW_TOL = 1e-9


def _names(x) -> tuple[str, ...]:
    return (x,) if isinstance(x, str) else tuple(x)


@dataclass(frozen=True)
class ProbTable:
    """Probabilities over the grid ``levels[0] x levels[1] x ...``.

    The trailing ``len(given)`` variables are conditioning variables: for
    every assignment of them the target cells sum to one. With no ``given``
    the table is a joint distribution.
    """

    variables: tuple[str, ...]
    levels: tuple[tuple, ...]
    probs: np.ndarray
    given: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "levels", tuple(tuple(lv) for lv in self.levels))
        object.__setattr__(self, "given", tuple(self.given))
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if len(self.levels) != len(self.variables):
            raise ValueError("one level tuple per variable is required")
        if probs.shape != tuple(len(lv) for lv in self.levels):
            raise ValueError(f"probs shape {probs.shape} does not match the support sizes")
        if self.given and self.variables[len(self.variables) - len(self.given):] != self.given:
            raise ValueError("conditioning variables must be the trailing variables")
        if (probs < 0).any():
            raise ValueError("negative probability")
        sums = probs.reshape(-1, self.given_size).sum(axis=0) if self.n_targets else None
        if sums is not None and not np.allclose(sums, 1.0, atol=ROW_TOL, rtol=0):
            raise ValueError("table rows do not sum to one")

    @property
    def n_targets(self) -> int:
        return len(self.variables) - len(self.given)

    @property
    def targets(self) -> tuple[str, ...]:
        return self.variables[: self.n_targets]

    @property
    def given_size(self) -> int:
        return int(np.prod([len(lv) for lv in self.levels[self.n_targets:]], dtype=int))

    @property
    def kind(self) -> str:
        return "conditional" if self.given else "joint"

    @property
    def support_sizes(self) -> tuple[int, ...]:
        return self.probs.shape

    def prob(self, **assignment) -> float:
        idx = tuple(self.levels[k].index(assignment[v]) for k, v in enumerate(self.variables))
        return float(self.probs[idx])

    def reorder(self, variables: Sequence[str]) -> "ProbTable":
        """Same table with axes permuted; the conditioning suffix must stay a suffix."""
        variables = tuple(variables)
        perm = [self.variables.index(v) for v in variables]
        return ProbTable(
            variables,
            tuple(self.levels[p] for p in perm),
            np.transpose(self.probs, perm),
            variables[len(variables) - len(self.given):] if self.given else (),
        )


def _codes(table: pd.DataFrame, var: str, levels: tuple) -> np.ndarray:
    if var not in table.columns:
        raise UnknownColumn(f"unknown column {var!r}; table has {list(table.columns)}")
    values = table[var].to_numpy()
    lv = np.asarray(levels)
    idx = np.searchsorted(lv, values)
    idx = np.clip(idx, 0, len(lv) - 1)
    bad = lv[idx] != values
    if bad.any():
        raise SupportMismatch(f"column {var!r} has values {sorted(set(values[bad].tolist()))} outside {levels}")
    return idx


def _resolve_levels(table: pd.DataFrame, variables, levels: Mapping | None) -> tuple[tuple, ...]:
    out = []
    for v in variables:
        if levels is not None and v in levels:
            out.append(tuple(sorted(levels[v])))
        else:
            if v not in table.columns:
                raise UnknownColumn(f"unknown column {v!r}; table has {list(table.columns)}")
            out.append(tuple(x.item() for x in np.unique(table[v].to_numpy())))
    return tuple(out)


def count_table(table: pd.DataFrame, variables: Sequence[str], levels: Sequence[tuple]) -> np.ndarray:
    """Joint counts of ``variables`` over the grid given by ``levels``."""
    shape = tuple(len(lv) for lv in levels)
    if not variables:
        return np.array(float(len(table)))
    codes = [_codes(table, v, lv) for v, lv in zip(variables, levels)]
    flat = np.ravel_multi_index(codes, shape) if len(table) else np.array([], dtype=int)
    return np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape).astype(float)


def _normalize(counts: np.ndarray, n_targets: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalise over the leading target axes; also return per-row totals."""
    target_axes = tuple(range(n_targets))
    totals = counts.sum(axis=target_axes, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = counts / totals
    return probs, totals


def estimate_joint_table(
    table: pd.DataFrame,
    variables,
    *,
    smoothing: float = 0.0,
    levels: Mapping | None = None,
) -> ProbTable:
    """Empirical joint distribution, unsmoothed by default."""
    return estimate_conditional_table(table, variables, (), smoothing=smoothing, levels=levels)


def estimate_conditional_table(
    table: pd.DataFrame,
    target,
    givens=(),
    *,
    smoothing: float = DEFAULT_SMOOTHING,
    levels: Mapping | None = None,
) -> ProbTable:
    """Laplace-smoothed P(target | givens) from one sample table.

    ``levels`` maps column names to their supports; columns without an entry
    use the values present in ``table``. A conditioning row with no data and
    ``smoothing == 0`` raises :class:`StratumEmpty`.
    """
    target, givens = _names(target), _names(givens)
    variables = target + givens
    lv = _resolve_levels(table, variables, levels)
    counts = count_table(table, variables, lv) + smoothing
    probs, totals = _normalize(counts, len(target))
    if (totals == 0).any():
        raise StratumEmpty(f"some assignment of {list(givens) or 'the table'} has no rows")
    return ProbTable(variables, lv, probs, givens)


def interventional_conditional(
    suite: ContextSuite,
    ids: Sequence[int],
    target,
    do,
    given=(),
    *,
    smoothing: float = DEFAULT_SMOOTHING,
    levels: Mapping | None = None,
) -> ProbTable:
    """P(target | do(do), given) from contexts that hard-set every ``do`` column.

    For each assignment of ``do`` the smoothed per-context conditionals
    P^c(target | given) are averaged over the contexts whose hard values equal
    that assignment. Within a ``given`` stratum only contexts with rows in the
    stratum contribute.
    """
    target, do, given = _names(target), _names(do), _names(given)
    if not ids:
        raise EmptyContextSet(f"no contexts hard-intervene on {list(do)}")
    for v in target + do + given:
        suite.check_column(v)
    lv = {v: tuple(levels[v]) if levels and v in levels else suite.levels(v) for v in target + do + given}
    t_levels = tuple(lv[v] for v in target)
    g_levels = tuple(lv[v] for v in given)
    d_levels = tuple(lv[v] for v in do)
    t_shape = tuple(len(x) for x in t_levels)
    g_shape = tuple(len(x) for x in g_levels)
    d_shape = tuple(len(x) for x in d_levels)

    acc = np.zeros(d_shape + t_shape + g_shape)
    used = np.zeros(d_shape + g_shape)
    for cid in ids:
        meta = suite.meta(cid)
        values = [meta.hard_value(v) for v in do]
        if any(x is None for x in values):
            raise NonHardContext(f"context {cid} does not hard-intervene on all of {list(do)}")
        try:
            d_idx = tuple(d_levels[k].index(values[k]) for k in range(len(do)))
        except ValueError:
            raise SupportMismatch(f"context {cid} sets {dict(zip(do, values))} outside the observed support") from None
        counts = count_table(suite.table(cid), target + given, t_levels + g_levels)
        n_row = counts.sum(axis=tuple(range(len(target))))
        has = n_row > 0
        probs, _ = _normalize(counts + smoothing, len(target))
        acc[d_idx] += np.where(has, np.nan_to_num(probs), 0.0)
        used[d_idx] += has

    missing = [
        dict(zip(do, (d_levels[k][i] for k, i in enumerate(cell))))
        for cell in itertools.product(*(range(s) for s in d_shape))
        if not used[cell].any()
    ]
    if missing:
        raise SupportNotCovered(list(do), missing)
    if (used == 0).any():
        raise StratumEmpty(f"some {list(given)} stratum has no interventional rows for do({', '.join(do)})")

    avg = acc / used.reshape(d_shape + (1,) * len(target) + g_shape)
    # Axis order: target, do, given.
    nd = len(do)
    perm = list(range(nd, nd + len(target))) + list(range(nd)) + list(range(nd + len(target), avg.ndim))
    probs = np.transpose(avg, perm)
    return ProbTable(target + do + given, t_levels + d_levels + g_levels, probs, do + given)


def directed_information(obs_joint: ProbTable, cond: ProbTable, do_table: ProbTable) -> InfoEstimate:
    """E_{obs_joint} log[cond / do_table], clamped at zero.

    ``cond`` and ``do_table`` must be conditionals over the same variables and
    supports; ``obs_joint`` is a joint table over the same variables (in any
    order). A zero in ``do_table`` where ``cond`` and the joint have mass
    raises :class:`DivergenceInfinite`.
    """
    if cond.variables != do_table.variables or cond.given != do_table.given:
        raise SupportMismatch(f"tables over {cond.variables}|{cond.given} and {do_table.variables}|{do_table.given}")
    if cond.levels != do_table.levels:
        raise SupportMismatch("conditional and interventional tables have different supports")
    if obs_joint.given or set(obs_joint.variables) != set(cond.variables):
        raise SupportMismatch(f"weights must be a joint table over {cond.variables}")
    weights = obs_joint.reorder(cond.variables)
    if weights.levels != cond.levels:
        raise SupportMismatch("weight table support differs from the conditionals")
    w, p, q = weights.probs, cond.probs, do_table.probs
    active = (w > 0) & (p > 0)
    if (active & (q == 0)).any():
        raise DivergenceInfinite(
            f"P({', '.join(cond.targets)} | do({', '.join(cond.given)})) is zero where the observational conditional has mass"
        )
    raw = float(np.sum(w[active] * np.log(p[active] / q[active])))
    return InfoEstimate.clamped(raw, "plugin-kl", 0)


def conditional_directed_information(obs_joint: ProbTable, cond: ProbTable, do_table: ProbTable) -> InfoEstimate:
    """Directed information with extra conditioning variables in every table.

    Identical computation to :func:`directed_information`; kept separate to
    check that a conditioning set is actually present.
    """
    if len(cond.given) < 2:
        raise SupportMismatch("conditional directed information needs the intervened variable plus a conditioning variable")
    return directed_information(obs_joint, cond, do_table)


def suite_levels(suite: ContextSuite, variables) -> dict[str, tuple]:
    return {v: suite.levels(v) for v in variables}


def set_directed_information(
    suite: ContextSuite,
    sources,
    targets,
    given=(),
    *,
    do_ids: Sequence[int] | None = None,
    obs_ids: Sequence[int] | None = None,
    smoothing: float = DEFAULT_SMOOTHING,
) -> InfoEstimate:
    """I(sources -> targets | given) from a suite, each side a vector variable.

    The interventional conditional P(sources | do(targets), given) uses
    ``do_ids`` (default: every context hard-setting all of ``targets`` and
    shifting nothing in ``sources`` or ``given``). Observational tables use
    ``obs_ids`` (default: the observational contexts).
    """
    sources, targets, given = _names(sources), _names(targets), _names(given)
    if set(sources) & set(targets):
        raise ValueError("sources and targets overlap")
    variables = sources + targets + given
    for v in variables:
        suite.check_column(v)
    if obs_ids is None:
        obs_ids = suite.observational_ids()
    if not obs_ids:
        raise EmptyContextSet("an observational context is required for P(X_i | X_j)")
    if do_ids is None:
        avoid = set(sources) | set(given)
        do_ids = [
            m.id
            for m in suite.metas
            if all(m.hard_value(t) is not None for t in targets) and not (m.shifted & avoid)
        ]
    lv = suite_levels(suite, variables)
    obs = suite.pooled(obs_ids)
    joint = estimate_joint_table(obs, variables, levels=lv)
    cond = estimate_conditional_table(obs, sources, targets + given, smoothing=smoothing, levels=lv)
    do_table = interventional_conditional(suite, do_ids, sources, targets, given, smoothing=smoothing, levels=lv)
    est = directed_information(joint, cond, do_table)
    return InfoEstimate(est.value, est.raw, est.estimator, len(obs))
