"""Detect nesting relations among papermeshes and build the containment tree.

Nodes may carry several papermeshes when the run configuration groups
structures into one level (e.g. two half shells forming a single enclosure).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

from .approximate import Papermesh
from .errors import NestingConflictError
from .mesh import TriMesh, boxes_intersect_edges, points_inside

NodeInput = Union[Papermesh, Sequence[Papermesh]]


def mesh_inside(outer: Union[Papermesh, TriMesh], inner: Union[Papermesh, TriMesh]) -> bool:
    """Two-step encapsulation test.

    True iff every vertex of ``inner`` lies inside ``outer`` and no edge of
    the two meshes comes within contact distance (points exactly on the
    surface count as inside, which keeps the test conservative).
    """
    outer_mesh = outer.mesh if isinstance(outer, Papermesh) else outer
    inner_mesh = inner.mesh if isinstance(inner, Papermesh) else inner
    if not points_inside(outer_mesh, inner_mesh.vertices).all():
        return False
    return not boxes_intersect_edges(outer_mesh, inner_mesh)


def _group_inside(outer: Sequence[Papermesh], inner: Sequence[Papermesh]) -> bool:
    """Group encapsulation: every inner mesh inside some outer mesh, no contact."""
    for im in inner:
        if not any(
            points_inside(om.mesh, im.mesh.vertices).all() for om in outer
        ):
            return False
    for om in outer:
        for im in inner:
            if boxes_intersect_edges(om.mesh, im.mesh):
                return False
    return True


@dataclass
class HierarchyNode:
    node_id: str
    papermeshes: list[Papermesh]
    parent: str | None = None
    children: list[str] = field(default_factory=list)


@dataclass
class HierarchyTree:
    """Rooted containment tree; level 0 is the outermost node."""

    nodes: dict[str, HierarchyNode]
    root: str

    def level(self, node_id: str) -> int:
        depth = 0
        cur = self.nodes[node_id]
        while cur.parent is not None:
            cur = self.nodes[cur.parent]
            depth += 1
        return depth

    def levels(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for node_id in self.nodes:
            out.setdefault(self.level(node_id), []).append(node_id)
        for ids in out.values():
            ids.sort()
        return out

    def parent_map(self) -> dict[str, str | None]:
        return {nid: n.parent for nid, n in self.nodes.items()}

    def max_level(self) -> int:
        return max(self.levels())

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "nodes": [
                {
                    "id": nid,
                    "parent": n.parent,
                    "level": self.level(nid),
                    "children": list(n.children),
                    "papermeshes": [
                        {
                            "source_id": p.source_id,
                            "vertices": p.mesh.n_vertices,
                            "faces": p.mesh.n_faces,
                        }
                        for p in n.papermeshes
                    ],
                }
                for nid, n in sorted(self.nodes.items())
            ],
        }


def build_hierarchy(
    items: Sequence[NodeInput],
    node_ids: Sequence[str] | None = None,
    inside_fn: Callable[[str, str], bool] | None = None,
) -> HierarchyTree:
    """Insert papermeshes (or groups of them) one by one into the tree.

    The first item seeds the root. Each subsequent item descends to the
    deepest node that encapsulates it; if it encapsulates the current root it
    becomes the new root, and any siblings it encapsulates are re-parented
    beneath it. The result is insertion-order independent up to sibling order.

    ``inside_fn(outer_id, inner_id)`` can replace the geometric containment
    test (used to memoize repeated builds over the same mesh set).
    """
    if not items:
        raise NestingConflictError("cannot build a hierarchy from zero meshes")
    groups: list[list[Papermesh]] = [
        [it] if isinstance(it, Papermesh) else list(it) for it in items
    ]
    if node_ids is None:
        node_ids = []
        for i, g in enumerate(groups):
            base = g[0].source_id or f"node{i}"
            node_ids.append(base)
    node_ids = list(node_ids)
    if len(set(node_ids)) != len(node_ids):
        raise NestingConflictError(f"duplicate node ids in {node_ids}")
    by_id = dict(zip(node_ids, groups))

    if inside_fn is None:
        def inside_fn(outer_id: str, inner_id: str) -> bool:  # noqa: F811
            return _group_inside(by_id[outer_id], by_id[inner_id])

    nodes: dict[str, HierarchyNode] = {}
    root: str | None = None
    for nid, group in zip(node_ids, groups):
        node = HierarchyNode(nid, list(group))
        nodes[nid] = node
        if root is None:
            root = nid
            continue
        if inside_fn(nid, root):
            node.children.append(root)
            nodes[root].parent = nid
            root = nid
            continue
        if not inside_fn(root, nid):
            raise NestingConflictError(
                f"'{nid}' is neither inside nor around the current root '{root}'"
            )
        cur = root
        while True:
            containing = [c for c in nodes[cur].children if inside_fn(c, nid)]
            if len(containing) > 1:
                raise NestingConflictError(
                    f"'{nid}' is inside multiple siblings {containing} under '{cur}'"
                )
            if not containing:
                break
            cur = containing[0]
        # re-parent any children of the host that the new node encapsulates
        absorbed = [c for c in nodes[cur].children if inside_fn(nid, c)]
        for c in absorbed:
            nodes[cur].children.remove(c)
            nodes[c].parent = nid
            node.children.append(c)
        node.parent = cur
        nodes[cur].children.append(nid)
    assert root is not None
    return HierarchyTree(nodes=nodes, root=root)
