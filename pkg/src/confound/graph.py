"""Causal DAGs over observed and latent variables.

Nodes are plain integers. A :class:`Dag` splits them into observed and latent
ids (disjoint), and latent nodes are exogenous roots: they have no parents and
only point into observed nodes.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import RetryExhausted, UnknownNode

OBSERVED = "observed"
LATENT = "latent"


@dataclass(frozen=True)
class Dag:
    observed: tuple[int, ...]
    latent: tuple[int, ...] = ()
    edges: frozenset[tuple[int, int]] = frozenset()
    names: Mapping[int, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "observed", tuple(int(v) for v in self.observed))
        object.__setattr__(self, "latent", tuple(int(v) for v in self.latent))
        object.__setattr__(self, "edges", frozenset((int(a), int(b)) for a, b in self.edges))
        obs, lat = set(self.observed), set(self.latent)
        if len(obs) != len(self.observed) or len(lat) != len(self.latent):
            raise ValueError("duplicate node ids")
        if obs & lat:
            raise ValueError(f"ids used as both observed and latent: {sorted(obs & lat)}")
        nodes = obs | lat
        for a, b in self.edges:
            if a not in nodes or b not in nodes:
                raise UnknownNode(f"edge {a}->{b} references a missing node")
            if b in lat:
                raise ValueError(f"latent node {b} cannot have parent {a}")
            if a == b:
                raise ValueError(f"self-loop on {a}")
        names = {v: self._default_name(v, v in lat) for v in nodes}
        names.update({int(k): str(v) for k, v in dict(self.names).items() if int(k) in nodes})
        if len(set(names.values())) != len(names):
            raise ValueError("node names must be unique")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_by_name", {v: k for k, v in names.items()})
        parents: dict[int, set[int]] = {v: set() for v in nodes}
        children: dict[int, set[int]] = {v: set() for v in nodes}
        for a, b in self.edges:
            parents[b].add(a)
            children[a].add(b)
        object.__setattr__(self, "_parents", {v: tuple(sorted(p)) for v, p in parents.items()})
        object.__setattr__(self, "_children", {v: tuple(sorted(c)) for v, c in children.items()})
        object.__setattr__(self, "_order", self._toposort())

    @staticmethod
    def _default_name(v: int, latent: bool) -> str:
        return f"Z{v}" if latent else f"X{v}"

    def _toposort(self) -> tuple[int, ...]:
        indeg = {v: len(p) for v, p in self._parents.items()}
        queue = deque(sorted(v for v, d in indeg.items() if d == 0))
        order = []
        while queue:
            v = queue.popleft()
            order.append(v)
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(order) != len(indeg):
            raise ValueError("graph has a directed cycle")
        return tuple(order)

    # -- queries -------------------------------------------------------------

    @property
    def nodes(self) -> tuple[int, ...]:
        return self.observed + self.latent

    def _check(self, v: int) -> int:
        if v not in self._parents:
            raise UnknownNode(f"unknown node {v!r}")
        return v

    def kind(self, v: int) -> str:
        self._check(v)
        return LATENT if v in self.latent else OBSERVED

    def name(self, v: int) -> str:
        return self.names[self._check(v)]

    def node(self, name_or_id: str | int) -> int:
        """Resolve a node name (or pass an id through after checking it)."""
        if isinstance(name_or_id, str):
            try:
                return self._by_name[name_or_id]
            except KeyError:
                raise UnknownNode(f"unknown node name {name_or_id!r}") from None
        return self._check(int(name_or_id))

    def parents(self, v: int) -> tuple[int, ...]:
        return self._parents[self._check(v)]

    def children(self, v: int) -> tuple[int, ...]:
        return self._children[self._check(v)]

    def topological_order(self) -> tuple[int, ...]:
        return self._order

    def descendants(self, v: int) -> set[int]:
        out: set[int] = set()
        stack = list(self.children(v))
        while stack:
            u = stack.pop()
            if u not in out:
                out.add(u)
                stack.extend(self._children[u])
        return out

    def ancestors(self, v: int) -> set[int]:
        out: set[int] = set()
        stack = list(self.parents(v))
        while stack:
            u = stack.pop()
            if u not in out:
                out.add(u)
                stack.extend(self._parents[u])
        return out

    def with_latents(self, latent_children: Iterable[Iterable[int]]) -> "Dag":
        """Return a copy with one new latent root per entry of ``latent_children``."""
        next_id = max(self.nodes, default=-1) + 1
        latent = list(self.latent)
        edges = set(self.edges)
        for offset, kids in enumerate(latent_children):
            z = next_id + offset
            latent.append(z)
            edges.update((z, int(c)) for c in kids)
        return Dag(self.observed, tuple(latent), frozenset(edges), dict(self.names))

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "observed": list(self.observed),
            "latent": list(self.latent),
            "edges": sorted([a, b] for a, b in self.edges),
            "names": {str(k): v for k, v in sorted(self.names.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Dag":
        names = {int(k): v for k, v in data.get("names", {}).items()}
        return cls(
            tuple(data["observed"]),
            tuple(data.get("latent", ())),
            frozenset(tuple(e) for e in data.get("edges", ())),
            names,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Dag":
        return cls.from_dict(json.loads(text))


def generate_er_dag(n_observed: int, edge_prob: float, seed: int) -> Dag:
    """Erdos-Renyi DAG: draw a random topological order, then keep each
    forward pair with probability ``edge_prob``.

    Draw sequence (relied on by tests): one permutation of ``range(n)``, then
    one uniform per pair in row-major order over positions ``a < b``.
    """
    if n_observed < 2:
        raise ValueError("n_observed must be >= 2")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_observed)
    pairs = list(itertools.combinations(range(n_observed), 2))
    keep = rng.random(len(pairs)) < edge_prob
    edges = {(int(order[a]), int(order[b])) for (a, b), k in zip(pairs, keep) if k}
    return Dag(tuple(range(n_observed)), (), frozenset(edges))


def violates_confounder_minimality(dag: Dag, max_candidates: int = 20) -> bool:
    """True if some observed subset S with |S| >= 4 receives more than 2|S|
    edges from latents that have at least three children inside S."""
    big = [set(dag.children(z)) for z in dag.latent if len(dag.children(z)) >= 3]
    if not big:
        return False
    # Nodes outside every large latent's child set only enlarge |S|.
    universe = sorted(set().union(*big))
    if len(universe) > max_candidates:
        raise ValueError(
            f"minimality check over {len(universe)} candidate nodes is too large to enumerate"
        )
    for size in range(4, len(universe) + 1):
        for subset in itertools.combinations(universe, size):
            s = set(subset)
            incoming = 0
            for kids in big:
                inside = len(kids & s)
                if inside >= 3:
                    incoming += inside
            if incoming > 2 * size:
                return True
    return False


def inject_latent_confounders(
    dag: Dag,
    k: int,
    children_per: int,
    seed: int,
    *,
    minimal: bool = False,
    exclusive: bool = False,
    max_retries: int = 1000,
) -> Dag:
    """Add ``k`` latent roots, each pointing at ``children_per`` distinct
    observed nodes chosen uniformly without replacement.

    With ``minimal=True`` placements violating confounder minimality are
    resampled; :class:`RetryExhausted` after ``max_retries`` attempts.
    ``exclusive=True`` gives every observed node at most one latent parent.
    """
    if k == 0:
        return dag
    if children_per < 2:
        raise ValueError("a confounder needs at least two children")
    if children_per > len(dag.observed):
        raise ValueError("children_per exceeds the number of observed nodes")
    if exclusive and k * children_per > len(dag.observed):
        raise ValueError("exclusive placement needs k * children_per <= number of observed nodes")
    rng = np.random.default_rng(seed)
    observed = np.array(dag.observed)
    for _ in range(max_retries):
        if exclusive:
            chosen = rng.choice(observed, size=k * children_per, replace=False).reshape(k, children_per)
            placement = [sorted(int(c) for c in row) for row in chosen]
        else:
            placement = [
                sorted(int(c) for c in rng.choice(observed, size=children_per, replace=False))
                for _ in range(k)
            ]
        out = dag.with_latents(placement)
        if not minimal or not violates_confounder_minimality(out):
            return out
    raise RetryExhausted(
        f"no latent placement satisfied confounder minimality in {max_retries} attempts"
    )


def path_node_set(dag: Dag, i: int, j: int) -> set[int]:
    """Nodes on some directed path ``i -> ... -> j``, excluding ``i`` and
    including ``j``; empty when ``j`` is not reachable from ``i``."""
    dag.node(i), dag.node(j)
    if i == j:
        raise ValueError("path_node_set needs two distinct nodes")
    desc = dag.descendants(i)
    if j not in desc:
        return set()
    return (desc & dag.ancestors(j)) | {j}


def true_confounded_pairs(dag: Dag) -> set[frozenset[int]]:
    """Unordered observed pairs that share at least one latent parent."""
    pairs: set[frozenset[int]] = set()
    for z in dag.latent:
        kids = [c for c in dag.children(z) if c in dag.observed]
        pairs.update(frozenset(p) for p in itertools.combinations(kids, 2))
    return pairs


def is_jointly_confounded(dag: Dag, members: Iterable[int]) -> bool:
    """True iff a single latent node is a parent of every member."""
    members = [dag.node(v) for v in members]
    if len(set(members)) < 2:
        raise ValueError("joint confounding needs at least two variables")
    for v in members:
        if dag.kind(v) != OBSERVED:
            raise ValueError(f"node {v} is not observed")
    common = set(dag.latent)
    for v in members:
        common &= set(dag.parents(v))
    return bool(common)
