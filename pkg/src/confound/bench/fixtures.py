"""Three-node benchmark graphs G1-G6 with fixed binary mechanisms.

Node ids: Xi = 0, Xj = 1, then the latent(s): Z = 2 (or Z1 = 2, Z2 = 3).
Latent roots are fair coins; children respond strongly to them so that
confounding is visible at a few thousand samples per context.
"""

from __future__ import annotations

import numpy as np

from ..graph import Dag
from ..scm import BinaryScm

XI, XJ, Z, Z1, Z2 = 0, 1, 2, 2, 3

GRAPHS = ("G1", "G2", "G3", "G4", "G5", "G6")
CONFOUNDED = {"G1": False, "G2": False, "G3": True, "G4": True, "G5": True, "G6": True}

# P(child = 1 | parent = 0), P(child = 1 | parent = 1) for a single latent parent.
LATENT_EFFECT = (0.125, 0.875)
# Used for the unconfounded chain Xi -> Xj.
CHAIN_EFFECT = (0.2, 0.8)
# P(Xj = 1 | Xi, Z), axis 0 = Xi, axis 1 = Z.
CHILD_OF_BOTH = ((0.05, 0.65), (0.35, 0.95))


def three_node_dag(name: str) -> Dag:
    """Graph by name; ``G5`` has two latents, every other graph one."""
    names = {XI: "Xi", XJ: "Xj", Z: "Z"}
    edges: set[tuple[int, int]] = set()
    latent: tuple[int, ...] = (Z,)
    if name == "G1":
        pass
    elif name == "G2":
        edges = {(XI, XJ)}
    elif name == "G3":
        edges = {(Z, XI), (Z, XJ)}
    elif name in ("G4", "G6"):
        edges = {(Z, XI), (Z, XJ), (XI, XJ)}
    elif name == "G5":
        latent = (Z1, Z2)
        names = {XI: "Xi", XJ: "Xj", Z1: "Z1", Z2: "Z2"}
        edges = {(Z1, XI), (Z1, XJ), (Z2, XI), (Z2, XJ), (XI, XJ)}
    else:
        raise ValueError(f"unknown graph {name!r}; expected one of {GRAPHS}")
    return Dag((XI, XJ), latent, frozenset(edges), names)


def three_node_scm(name: str) -> BinaryScm:
    dag = three_node_dag(name)
    lo, hi = LATENT_EFFECT
    cpt = {z: np.array(0.5) for z in dag.latent}
    if name == "G1":
        cpt[XI] = np.array(0.5)
        cpt[XJ] = np.array(0.5)
    elif name == "G2":
        cpt[XI] = np.array(0.5)
        cpt[XJ] = np.array(CHAIN_EFFECT)
    elif name == "G3":
        cpt[XI] = np.array([lo, hi])
        cpt[XJ] = np.array([lo, hi])
    elif name in ("G4", "G6"):
        cpt[XI] = np.array([lo, hi])
        cpt[XJ] = np.array(CHILD_OF_BOTH)
    else:
        # Parent order is sorted id: Xi's table is (Z1, Z2), Xj's is (Xi, Z1, Z2).
        cpt[XI] = np.array([[0.1, 0.5], [0.5, 0.9]])
        cpt[XJ] = np.array([[[0.05, 0.35], [0.35, 0.65]], [[0.35, 0.65], [0.65, 0.95]]])
    return BinaryScm(dag, cpt)


def logistic_binary_scm(
    dag: Dag,
    seed: int,
    *,
    latent_weight: float = 2.5,
    edge_weight: float = 1.0,
    root_range: tuple[float, float] = (0.3, 0.7),
) -> BinaryScm:
    """Binary SCM with P(v = 1 | pa) = sigmoid(sum_u w_u * (2 u - 1)).

    Each weight has a random sign and magnitude ``base * U(0.75, 1.25)``,
    where ``base`` is ``latent_weight`` for latent parents and ``edge_weight``
    for observed ones. Latent roots are fair coins; observed roots draw
    P(v = 1) from ``root_range``.
    """
    rng = np.random.default_rng(seed)
    cpt = {}
    for v in sorted(dag.nodes):
        parents = dag.parents(v)
        if not parents:
            cpt[v] = np.array(0.5 if v in dag.latent else rng.uniform(*root_range))
            continue
        base = np.array([latent_weight if u in dag.latent else edge_weight for u in parents])
        w = base * rng.uniform(0.75, 1.25, size=len(parents)) * rng.choice([-1.0, 1.0], size=len(parents))
        grid = np.array(np.meshgrid(*([[-1.0, 1.0]] * len(parents)), indexing="ij"))
        logits = np.tensordot(w, grid, axes=1)
        cpt[v] = 1.0 / (1.0 + np.exp(-logits))
    return BinaryScm(dag, cpt)
