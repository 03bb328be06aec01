"""Planar truss model and stiffness/mass assembly.

The stiffness matrix is linear in the per-element stiffness multipliers
``theta``::

    K(theta) = sum_i theta_i * K_i

where ``K_i`` is the contribution of element ``i`` at ``theta_i = 1``.
Mass is lumped and does not depend on ``theta`` (damage is stiffness-only).

Free DOFs are numbered node-major, x before y, skipping constrained ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ModelError, NumericalError

ALUMINUM_E = 70e9  # Pa
ALUMINUM_RHO = 2700.0  # kg/m^3
CANONICAL_AREA = 0.01  # m^2


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class BarElement:
    id: int
    node_i: int
    node_j: int
    elastic_modulus: float
    area: float
    density: float


@dataclass(frozen=True)
class Support:
    node: int
    fixed_x: bool
    fixed_y: bool


@dataclass(frozen=True)
class TrussModel:
    """Nodes, bars and supports of a planar pin-jointed truss.

    Construction validates the topology; derived geometry is cached.
    """

    nodes: tuple[Node, ...]
    elements: tuple[BarElement, ...]
    supports: tuple[Support, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "supports", tuple(self.supports))
        _validate(self)

    @cached_property
    def dof_map(self) -> dict[tuple[int, str], int | None]:
        """(node id, 'x' | 'y') -> free-DOF index, or None when constrained."""
        fixed: set[tuple[int, str]] = set()
        for s in self.supports:
            if s.fixed_x:
                fixed.add((s.node, "x"))
            if s.fixed_y:
                fixed.add((s.node, "y"))
        out: dict[tuple[int, str], int | None] = {}
        k = 0
        for node in self.nodes:
            for d in ("x", "y"):
                if (node.id, d) in fixed:
                    out[(node.id, d)] = None
                else:
                    out[(node.id, d)] = k
                    k += 1
        return out

    @property
    def n_dof(self) -> int:
        return sum(1 for v in self.dof_map.values() if v is not None)

    @property
    def n_constrained(self) -> int:
        return 2 * len(self.nodes) - self.n_dof

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def lengths(self) -> NDArray[np.float64]:
        xy = self._coords
        ij = self._connectivity
        d = xy[ij[:, 1]] - xy[ij[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def axial_stiffness(self) -> NDArray[np.float64]:
        """E*A/L per element at theta = 1 (N/m)."""
        E = np.array([e.elastic_modulus for e in self.elements])
        A = np.array([e.area for e in self.elements])
        return E * A / self.lengths

    @cached_property
    def element_masses(self) -> NDArray[np.float64]:
        rho = np.array([e.density for e in self.elements])
        A = np.array([e.area for e in self.elements])
        return rho * A * self.lengths

    @cached_property
    def element_dofs(self) -> NDArray[np.int64]:
        """(n_el, 4) global free-DOF indices [ix, iy, jx, jy]; -1 where constrained."""
        out = np.empty((self.n_elements, 4), dtype=np.int64)
        for r, e in enumerate(self.elements):
            for c, key in enumerate(((e.node_i, "x"), (e.node_i, "y"), (e.node_j, "x"), (e.node_j, "y"))):
                idx = self.dof_map[key]
                out[r, c] = -1 if idx is None else idx
        return out

    @cached_property
    def elongation_operator(self) -> NDArray[np.float64]:
        """B with (B @ u)_i = axial elongation of element i for free-DOF vector u.

        Element contributions are ``K_i = k_i * outer(B_i, B_i)``.
        """
        xy = self._coords
        ij = self._connectivity
        d = xy[ij[:, 1]] - xy[ij[:, 0]]
        cs = d / self.lengths[:, None]
        pattern = np.column_stack([-cs[:, 0], -cs[:, 1], cs[:, 0], cs[:, 1]])
        B = np.zeros((self.n_elements, self.n_dof))
        for r in range(self.n_elements):
            for c in range(4):
                idx = self.element_dofs[r, c]
                if idx >= 0:
                    B[r, idx] += pattern[r, c]
        return B

    @cached_property
    def _coords(self) -> NDArray[np.float64]:
        return np.array([[n.x, n.y] for n in self.nodes])

    @cached_property
    def _connectivity(self) -> NDArray[np.int64]:
        return np.array([[e.node_i, e.node_j] for e in self.elements], dtype=np.int64)


def _validate(model: TrussModel) -> None:
    node_ids = [n.id for n in model.nodes]
    if not node_ids:
        raise ModelError("model has no nodes")
    if len(set(node_ids)) != len(node_ids):
        raise ModelError("duplicate node id")
    if sorted(node_ids) != list(range(len(node_ids))) or node_ids != sorted(node_ids):
        raise ModelError("node ids must be contiguous from 0 and in order")
    el_ids = [e.id for e in model.elements]
    if not el_ids:
        raise ModelError("model has no elements")
    if len(set(el_ids)) != len(el_ids):
        raise ModelError("duplicate element id")
    if el_ids != list(range(len(el_ids))):
        raise ModelError("element ids must be contiguous from 0 and in order")

    coords = {n.id: (n.x, n.y) for n in model.nodes}
    for e in model.elements:
        for nid in (e.node_i, e.node_j):
            if nid not in coords:
                raise ModelError(f"unknown node id {nid} in element {e.id}")
        if e.node_i == e.node_j:
            raise ModelError(f"element {e.id} connects node {e.node_i} to itself")
        (xi, yi), (xj, yj) = coords[e.node_i], coords[e.node_j]
        if math.hypot(xj - xi, yj - yi) <= 1e-12:
            raise ModelError(f"element {e.id} has zero length")
        if not (e.elastic_modulus > 0 and e.area > 0 and e.density > 0):
            raise ModelError(f"element {e.id}: E, A and rho must be positive")

    seen: set[int] = set()
    n_fixed = 0
    for s in model.supports:
        if s.node not in coords:
            raise ModelError(f"unknown node id {s.node} in supports")
        if s.node in seen:
            raise ModelError(f"duplicate support on node {s.node}")
        seen.add(s.node)
        n_fixed += int(bool(s.fixed_x)) + int(bool(s.fixed_y))
    if n_fixed < 3:
        raise ModelError("insufficient supports: at least 3 constrained DOFs required")
    if 2 * len(model.nodes) - n_fixed == 0:
        raise ModelError("no free DOFs")


def canonical_truss() -> TrussModel:
    """Built-in 4-bay benchmark truss: 10 nodes, 20 bars, 16 free DOFs.

    Bottom nodes 0-4 at (0..4, 0) m, top nodes 5-9 at (0..4, 1) m; both
    bottom corners pinned. Element order (1-based labels in parentheses):
    bottom chords (1-4), top chords (5-8), verticals at x = 0, 1, 2, 3
    (9-12), then per bay a rising and a falling diagonal (13-20).
    """
    nodes = [Node(i, float(i), 0.0) for i in range(5)]
    nodes += [Node(5 + i, float(i), 1.0) for i in range(5)]
    pairs: list[tuple[int, int]] = []
    pairs += [(i, i + 1) for i in range(4)]
    pairs += [(5 + i, 6 + i) for i in range(4)]
    pairs += [(i, 5 + i) for i in range(4)]
    for bay in range(4):
        pairs.append((bay, 6 + bay))
        pairs.append((5 + bay, bay + 1))
    elements = [
        BarElement(k, i, j, ALUMINUM_E, CANONICAL_AREA, ALUMINUM_RHO)
        for k, (i, j) in enumerate(pairs)
    ]
    supports = [Support(0, True, True), Support(4, True, True)]
    return TrussModel(tuple(nodes), tuple(elements), tuple(supports))


def check_theta(model: TrussModel, theta: Sequence[float] | NDArray | None) -> NDArray[np.float64]:
    """Return theta as a float array, validated against ``model``.

    ``None`` means the nominal state (all ones).
    """
    if theta is None:
        return np.ones(model.n_elements)
    t = np.asarray(theta, dtype=float)
    if t.shape != (model.n_elements,):
        raise ModelError(f"theta must have length {model.n_elements}, got shape {t.shape}")
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise ModelError("theta entries must be finite and positive")
    return t


def element_stiffness(model: TrussModel, element_id: int, theta_i: float = 1.0) -> NDArray[np.float64]:
    """4x4 global-coordinate stiffness of one bar, DOF order [ix, iy, jx, jy]."""
    if not 0 <= element_id < model.n_elements:
        raise ModelError(f"unknown element id {element_id}")
    if not theta_i > 0:
        raise ModelError("theta_i must be positive")
    e = model.elements[element_id]
    xi, yi = model.nodes[e.node_i].x, model.nodes[e.node_i].y
    xj, yj = model.nodes[e.node_j].x, model.nodes[e.node_j].y
    L = math.hypot(xj - xi, yj - yi)
    c, s = (xj - xi) / L, (yj - yi) / L
    v = np.array([-c, -s, c, s])
    return theta_i * model.axial_stiffness[element_id] * np.outer(v, v)


def element_contribution(model: TrussModel, element_id: int) -> NDArray[np.float64]:
    """K_i: element ``element_id`` assembled into free DOFs at theta_i = 1."""
    b = model.elongation_operator[element_id]
    return model.axial_stiffness[element_id] * np.outer(b, b)


def assemble_stiffness(model: TrussModel, theta: Sequence[float] | NDArray | None = None) -> NDArray[np.float64]:
    """K(theta) on the free DOFs.

    Raises NumericalError if the result is not positive definite.
    """
    t = check_theta(model, theta)
    B = model.elongation_operator
    K = B.T @ ((t * model.axial_stiffness)[:, None] * B)
    K = 0.5 * (K + K.T)
    try:
        np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise NumericalError("model is a mechanism") from None
    return K


def assemble_mass(model: TrussModel) -> NDArray[np.float64]:
    """Lumped diagonal mass: rho*A*L/2 to each end node, both directions."""
    diag = np.zeros(model.n_dof)
    half = 0.5 * model.element_masses
    for r in range(model.n_elements):
        for c in range(4):
            idx = model.element_dofs[r, c]
            if idx >= 0:
                diag[idx] += half[r]
    return np.diag(diag)


# ---------------------------------------------------------------- documents


def model_from_dict(doc: Mapping[str, Any]) -> TrussModel:
    try:
        nodes = [Node(int(n["id"]), float(n["x"]), float(n["y"])) for n in doc["nodes"]]
        elements = [
            BarElement(
                int(e["id"]), int(e["i"]), int(e["j"]),
                float(e["E"]), float(e["A"]), float(e["rho"]),
            )
            for e in doc["elements"]
        ]
        supports = [
            Support(int(s["node"]), bool(s.get("fix_x", False)), bool(s.get("fix_y", False)))
            for s in doc["supports"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model document: {exc!r}") from None
    return TrussModel(tuple(nodes), tuple(elements), tuple(supports))


def model_to_dict(model: TrussModel) -> dict[str, Any]:
    return {
        "nodes": [{"id": n.id, "x": n.x, "y": n.y} for n in model.nodes],
        "elements": [
            {"id": e.id, "i": e.node_i, "j": e.node_j,
             "E": e.elastic_modulus, "A": e.area, "rho": e.density}
            for e in model.elements
        ],
        "supports": [{"node": s.node, "fix_x": s.fixed_x, "fix_y": s.fixed_y} for s in model.supports],
    }


def load_model(source: str | Path | Mapping[str, Any]) -> TrussModel:
    """Load a model from a JSON file path, a JSON string, or a parsed mapping.

    The name ``"canonical"`` resolves to :func:`canonical_truss`.
    """
    if isinstance(source, Mapping):
        return model_from_dict(source)
    if str(source) == "canonical":
        return canonical_truss()
    text = str(source)
    if isinstance(source, Path) or not text.lstrip().startswith("{"):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ModelError(f"cannot read model file: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed model document: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ModelError("malformed model document: top level must be an object")
    return model_from_dict(doc)
