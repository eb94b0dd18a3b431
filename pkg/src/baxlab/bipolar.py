"""Plane bipolar orientations, the construction Theta, bow, duality and op.

Maps are stored edge-centrically.  Every edge has a bottom and a top vertex
and a left and a right face.  Every vertex has its incoming and its outgoing
edges listed left to right.  Every inner face has its left and its right
boundary listed bottom to top.  The two outer faces are named by
``left_outer`` and ``right_outer`` and their boundaries are listed bottom to
top as well.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np

from .coal import PlantedForest, wc
from .errors import BadIncrement, BadInterval, InvalidMap
from .perm import Permutation
from .walk import LatticeWalk, TandemWalk

LEFT_OUTER = "outer-left"
RIGHT_OUTER = "outer-right"


@dataclass(frozen=True, eq=False)
class BipolarOrientation:
    bottom: dict
    top: dict
    left: dict
    right: dict
    ins: dict
    outs: dict
    face_left: dict
    face_right: dict
    source: Hashable
    sink: Hashable
    left_outer: Hashable
    right_outer: Hashable
    left_boundary: tuple
    right_boundary: tuple

    @property
    def edges(self) -> list:
        return list(self.bottom)

    @property
    def vertices(self) -> list:
        return list(self.ins)

    @property
    def inner_faces(self) -> list:
        return list(self.face_left)

    def __len__(self) -> int:
        return len(self.bottom)

    def face_boundaries(self, f) -> tuple[tuple, tuple]:
        """Left and right boundary of any face, outer faces included."""
        if f == self.left_outer:
            return (), self.left_boundary
        if f == self.right_outer:
            return self.right_boundary, ()
        return self.face_left[f], self.face_right[f]

    def validate(self) -> "BipolarOrientation":
        _validate(self)
        return self

    def to_dict(self) -> dict:
        order = exploration(self)
        return {
            "type": "bipolar_orientation",
            "edges": [{"id": _jsonable(e), "bottom": _jsonable(self.bottom[e]), "top": _jsonable(self.top[e]),
                       "left": _jsonable(self.left[e]), "right": _jsonable(self.right[e])} for e in order],
            "vertices": [{"id": _jsonable(v), "in": [_jsonable(e) for e in self.ins[v]],
                          "out": [_jsonable(e) for e in self.outs[v]]} for v in self.ins],
            "faces": [{"id": _jsonable(f), "left": [_jsonable(e) for e in self.face_left[f]],
                       "right": [_jsonable(e) for e in self.face_right[f]]} for f in self.face_left],
            "source": _jsonable(self.source), "sink": _jsonable(self.sink),
            "left_outer": _jsonable(self.left_outer), "right_outer": _jsonable(self.right_outer),
            "left_boundary": [_jsonable(e) for e in self.left_boundary],
            "right_boundary": [_jsonable(e) for e in self.right_boundary],
        }


def _jsonable(x):
    if isinstance(x, (int, np.integer)):
        return int(x)
    return str(x)


@dataclass(frozen=True, eq=False)
class MarkedBipolarOrientation:
    """A bipolar orientation with explored edges labeled by an interval and an active edge."""

    skeleton: BipolarOrientation
    labels: dict
    active: Hashable

    @property
    def interval(self) -> tuple[int, int]:
        vals = self.labels.values()
        return min(vals), max(vals)

    def edge_of(self, label: int):
        for e, l in self.labels.items():
            if l == label:
                return e
        raise KeyError(label)

    @property
    def unexplored(self) -> list:
        return [e for e in self.skeleton.edges if e not in self.labels]

    def is_plain(self) -> bool:
        return len(self.labels) == len(self.skeleton)

    def to_plain(self) -> BipolarOrientation:
        """The underlying map with every edge renamed by its label."""
        if not self.is_plain():
            raise InvalidMap("the map still has unexplored edges")
        return rename_edges(self.skeleton, self.labels)

    def validate(self) -> "MarkedBipolarOrientation":
        m = self.skeleton
        _validate(m)
        lo, hi = self.interval
        if sorted(self.labels.values()) != list(range(lo, hi + 1)):
            raise InvalidMap("labels do not form an interval")
        if self.labels.get(self.active) != hi:
            raise InvalidMap("the active edge must carry the largest label")
        first = self.edge_of(lo)
        lb = list(m.left_boundary)
        rb = list(m.right_boundary)
        for e in self.unexplored:
            on_left = e in lb and first in lb and lb.index(e) < lb.index(first)
            on_right = e in rb and rb.index(e) > rb.index(self.active)
            if not (on_left or on_right):
                raise InvalidMap(f"unexplored edge {e} is not on the boundary outside the explored path")
        by_label = sorted(self.labels, key=self.labels.get)
        for a, b in zip(by_label, by_label[1:]):
            if m.top[a] == m.bottom[b]:
                continue
            f = m.right[a]
            if f in m.face_left and m.face_left[f][-1] == a and m.face_right[f][0] == b:
                continue
            raise InvalidMap(f"labels {self.labels[a]} and {self.labels[b]} are not consecutive on the interface path")
        return self


def rename_edges(m: BipolarOrientation, names: dict) -> BipolarOrientation:
    r = names.__getitem__
    return BipolarOrientation(
        {r(e): v for e, v in m.bottom.items()}, {r(e): v for e, v in m.top.items()},
        {r(e): f for e, f in m.left.items()}, {r(e): f for e, f in m.right.items()},
        {v: tuple(map(r, es)) for v, es in m.ins.items()},
        {v: tuple(map(r, es)) for v, es in m.outs.items()},
        {f: tuple(map(r, es)) for f, es in m.face_left.items()},
        {f: tuple(map(r, es)) for f, es in m.face_right.items()},
        m.source, m.sink, m.left_outer, m.right_outer,
        tuple(map(r, m.left_boundary)), tuple(map(r, m.right_boundary)))


def _validate(m: BipolarOrientation) -> None:
    def fail(msg):
        raise InvalidMap(msg)

    edges = set(m.bottom)
    if not edges:
        fail("a bipolar orientation has at least one edge")
    for d in (m.top, m.left, m.right):
        if set(d) != edges:
            fail("per-edge tables disagree on the edge set")
    if set(m.ins) != set(m.outs):
        fail("per-vertex tables disagree on the vertex set")
    seen_in = [e for v in m.ins for e in m.ins[v]]
    seen_out = [e for v in m.outs for e in m.outs[v]]
    if sorted(map(str, seen_in)) != sorted(map(str, edges)) or sorted(map(str, seen_out)) != sorted(map(str, edges)):
        fail("every edge must appear once as incoming and once as outgoing")
    for v in m.ins:
        for e in m.ins[v]:
            if m.top[e] != v:
                fail(f"edge {e} listed as incoming at {v} but its top is {m.top[e]}")
        for e in m.outs[v]:
            if m.bottom[e] != v:
                fail(f"edge {e} listed as outgoing at {v} but its bottom is {m.bottom[e]}")
    if m.ins[m.source] or not m.outs[m.source]:
        fail("the source must have only outgoing edges")
    if m.outs[m.sink] or not m.ins[m.sink]:
        fail("the sink must have only incoming edges")

    def consecutive(lst):
        for a, b in zip(lst, lst[1:]):
            if m.right[a] != m.left[b]:
                fail(f"edges {a} and {b} are adjacent around a vertex but do not share a face")

    for v in m.ins:
        ins, outs = m.ins[v], m.outs[v]
        consecutive(ins)
        consecutive(outs)
        if v in (m.source, m.sink):
            continue
        if not ins or not outs:
            fail(f"inner vertex {v} needs incoming and outgoing edges")
        if m.left[ins[0]] != m.left[outs[0]]:
            fail(f"vertex {v}: left face of the incoming block differs from the outgoing block")
        if m.right[ins[-1]] != m.right[outs[-1]]:
            fail(f"vertex {v}: right face of the incoming block differs from the outgoing block")
    so, si = m.outs[m.source], m.ins[m.sink]
    if m.left[so[0]] != m.left_outer or m.right[so[-1]] != m.right_outer:
        fail("source is not on both outer faces")
    if m.left[si[0]] != m.left_outer or m.right[si[-1]] != m.right_outer:
        fail("sink is not on both outer faces")

    def chain(lst, side_face, side, start, end, what):
        if not lst:
            fail(f"{what} is empty")
        if m.bottom[lst[0]] != start or m.top[lst[-1]] != end:
            fail(f"{what} does not run between the expected vertices")
        for a, b in zip(lst, lst[1:]):
            if m.top[a] != m.bottom[b]:
                fail(f"{what} is not a path")
        for e in lst:
            if side[e] != side_face:
                fail(f"edge {e} on {what} has the wrong face")

    for f in m.face_left:
        L, R = m.face_left[f], m.face_right[f]
        chain(L, f, m.right, m.bottom[L[0]] if L else None, m.top[L[-1]] if L else None, f"left side of face {f}")
        chain(R, f, m.left, m.bottom[L[0]], m.top[L[-1]], f"right side of face {f}")
    chain(m.left_boundary, m.left_outer, m.left, m.source, m.sink, "left outer boundary")
    chain(m.right_boundary, m.right_outer, m.right, m.source, m.sink, "right outer boundary")
    faces = set(m.face_left) | {m.left_outer, m.right_outer}
    for e in edges:
        if m.left[e] not in faces or m.right[e] not in faces:
            fail(f"edge {e} touches an unknown face")
    listed = sum(len(m.face_left[f]) + len(m.face_right[f]) for f in m.face_left)
    listed += len(m.left_boundary) + len(m.right_boundary)
    if listed != 2 * len(edges):
        fail("face boundaries do not cover each edge side exactly once")
    V, E, F = len(m.ins), len(edges), len(m.face_left) + 1
    if V - E + F != 2:
        fail(f"Euler relation fails: V - E + F = {V - E + F}")
    # acyclicity
    indeg = {v: len(m.ins[v]) for v in m.ins}
    queue = deque(v for v, d in indeg.items() if d == 0)
    count = 0
    while queue:
        v = queue.popleft()
        count += 1
        for e in m.outs[v]:
            w = m.top[e]
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if count != V:
        fail("the orientation has a directed cycle")


# -- Theta ---------------------------------------------------------------------

def _as_lattice(w) -> LatticeWalk:
    if isinstance(w, TandemWalk):
        return w.as_lattice()
    if isinstance(w, LatticeWalk):
        return w
    return LatticeWalk(np.asarray(w), 1)


class _Builder:
    def __init__(self):
        self.bottom, self.top, self.left, self.right = {}, {}, {}, {}
        self.ins, self.outs = {}, {}
        self.face_left, self.face_right = {}, {}
        self.nv = self.ne = self.nf = 0

    def vertex(self):
        v = self.nv
        self.nv += 1
        self.ins[v] = []
        self.outs[v] = []
        return v

    def edge(self, b, t):
        e = self.ne
        self.ne += 1
        self.bottom[e], self.top[e] = b, t
        self.left[e], self.right[e] = LEFT_OUTER, RIGHT_OUTER
        return e

    def face(self):
        f = self.nf
        self.nf += 1
        return f


def theta(w) -> MarkedBipolarOrientation:
    """Build the marked bipolar orientation of a walk with increments in A."""
    lw = _as_lattice(w)
    b = _Builder()
    source, sink = b.vertex(), b.vertex()
    e = b.edge(source, sink)
    b.outs[source].append(e)
    b.ins[sink].append(e)
    left_boundary = deque([e])
    below: list = []
    above: list = []  # above[-1] sits right on top of the active edge
    active = e
    labels = {e: lw.t0}
    for k, (dx, dy) in enumerate(lw.steps.tolist(), start=1):
        if dx == 1 and dy == -1:
            below.append(active)
            if above:
                active = above.pop()
            else:
                v = b.vertex()
                e = b.edge(sink, v)
                b.outs[sink].append(e)
                b.ins[v].append(e)
                sink = v
                left_boundary.append(e)
                active = e
        elif dx <= 0 and dy >= 0:
            i, j = -dx, dy
            side = [active]
            for _ in range(i):
                if below:
                    side.append(below.pop())
                else:
                    v = b.vertex()
                    e = b.edge(v, source)
                    b.outs[v].append(e)
                    b.ins[source].insert(0, e)
                    source = v
                    left_boundary.appendleft(e)
                    side.append(e)
            side.reverse()
            f = b.face()
            vb, vt = b.bottom[side[0]], b.top[side[-1]]
            right_side = []
            cur = vb
            for r in range(j + 1):
                nxt = vt if r == j else b.vertex()
                e = b.edge(cur, nxt)
                b.left[e] = f
                b.outs[cur].append(e)
                b.ins[nxt].append(e)
                right_side.append(e)
                cur = nxt
            for e in side:
                b.right[e] = f
            b.face_left[f] = tuple(side)
            b.face_right[f] = tuple(right_side)
            above.extend(reversed(right_side[1:]))
            active = right_side[0]
        else:
            raise BadIncrement(f"({dx},{dy}) is not in A")
        labels[active] = lw.t0 + k
    right_boundary = tuple(below) + (active,) + tuple(reversed(above))
    m = BipolarOrientation(
        b.bottom, b.top, b.left, b.right,
        {v: tuple(es) for v, es in b.ins.items()}, {v: tuple(es) for v, es in b.outs.items()},
        b.face_left, b.face_right, source, sink, LEFT_OUTER, RIGHT_OUTER,
        tuple(left_boundary), right_boundary)
    return MarkedBipolarOrientation(m, labels, active)


def theta_plain(w: TandemWalk) -> BipolarOrientation:
    """Theta of a tandem walk, with edges named 1..n by label."""
    return theta(w).to_plain()


def restrict(mk: MarkedBipolarOrientation, j: int, k: int) -> MarkedBipolarOrientation:
    """Submap spanned by the labels ``j..k``: those edges, the faces with explored
    edges on both sides, and every other edge of those faces."""
    lo, hi = mk.interval
    if not lo <= j <= k <= hi:
        raise BadInterval(f"[{j},{k}] is not inside [{lo},{hi}]")
    m = mk.skeleton
    explored = {e for e, l in mk.labels.items() if j <= l <= k}
    faces = {f for f in m.face_left
             if any(e in explored for e in m.face_left[f]) and any(e in explored for e in m.face_right[f])}
    keep = set(explored)
    for f in faces:
        keep.update(m.face_left[f])
        keep.update(m.face_right[f])
    verts = {m.bottom[e] for e in keep} | {m.top[e] for e in keep}
    ins = {v: tuple(e for e in m.ins[v] if e in keep) for v in m.ins if v in verts}
    outs = {v: tuple(e for e in m.outs[v] if e in keep) for v in m.outs if v in verts}
    left = {e: (m.left[e] if m.left[e] in faces else m.left_outer) for e in keep}
    right = {e: (m.right[e] if m.right[e] in faces else m.right_outer) for e in keep}
    source = next(v for v in verts if not ins[v])
    sink = next(v for v in verts if not outs[v])

    def walk_boundary(pick):
        out, v = [], source
        while v != sink:
            e = pick(outs[v])
            out.append(e)
            v = m.top[e]
        return tuple(out)

    sub = BipolarOrientation(
        {e: m.bottom[e] for e in keep}, {e: m.top[e] for e in keep}, left, right, ins, outs,
        {f: m.face_left[f] for f in faces}, {f: m.face_right[f] for f in faces},
        source, sink, m.left_outer, m.right_outer,
        walk_boundary(lambda es: es[0]), walk_boundary(lambda es: es[-1]))
    labels = {e: mk.labels[e] for e in explored}
    return MarkedBipolarOrientation(sub, labels, mk.edge_of(k))


# -- trees, bow, duality -------------------------------------------------------

@dataclass(frozen=True)
class DownRightTree:
    """T(m): the parent of an edge is the rightmost incoming edge at its bottom vertex."""

    parent: dict
    children: dict
    roots: tuple
    order: tuple

    def heights(self) -> list[int]:
        """Height process: 0 for the root vertex, then each edge's depth in visit order."""
        depth: dict = {}
        for e in self.order:
            p = self.parent[e]
            depth[e] = 1 if p is None else depth[p] + 1
        return [0] + [depth[e] for e in self.order]


def down_right_tree(m: BipolarOrientation) -> DownRightTree:
    parent = {}
    children = {}
    for e in m.bottom:
        v = m.bottom[e]
        parent[e] = m.ins[v][-1] if m.ins[v] else None
        t = m.top[e]
        children[e] = m.outs[t] if m.ins[t][-1] == e else ()
    roots = m.outs[m.source]
    order = []
    stack = list(reversed(roots))
    while stack:
        e = stack.pop()
        order.append(e)
        stack.extend(reversed(children[e]))
    return DownRightTree(parent, children, tuple(roots), tuple(order))


def exploration(m: BipolarOrientation) -> list:
    return list(down_right_tree(m).order)


def bow(m: BipolarOrientation) -> TandemWalk:
    """``X_t`` = height in T(m) of the bottom of ``e_t``; ``Y_t`` = height of its top in T(m**)."""
    order = exploration(m)
    up = {m.source: 0}
    for e in order:
        t = m.top[e]
        if m.ins[t][-1] == e:
            up[t] = up[m.bottom[e]] + 1
    down = {m.sink: 0}
    for e in reversed(order):
        v = m.bottom[e]
        if m.outs[v][0] == e:
            down[v] = down[m.top[e]] + 1
    vals = [(up[m.bottom[e]], down[m.top[e]]) for e in order]
    return TandemWalk(vals)


def dual(m: BipolarOrientation) -> BipolarOrientation:
    """Faces become vertices; each edge is crossed from its right face to its left face."""
    outs = {f: tuple(m.face_left[f]) for f in m.face_left}
    ins = {f: tuple(m.face_right[f]) for f in m.face_left}
    outs[m.right_outer] = tuple(m.right_boundary)
    ins[m.right_outer] = ()
    outs[m.left_outer] = ()
    ins[m.left_outer] = tuple(m.left_boundary)
    inner = [v for v in m.ins if v not in (m.source, m.sink)]
    return BipolarOrientation(
        dict(m.right), dict(m.left), dict(m.bottom), dict(m.top), ins, outs,
        {v: tuple(reversed(m.ins[v])) for v in inner},
        {v: tuple(reversed(m.outs[v])) for v in inner},
        m.right_outer, m.left_outer, m.source, m.sink,
        tuple(reversed(m.outs[m.source])), tuple(reversed(m.ins[m.sink])))


def reverse_orientation(m: BipolarOrientation) -> BipolarOrientation:
    """Every edge flipped; drawn bottom to top this is a half-turn of the picture."""
    rev = lambda es: tuple(reversed(es))
    return BipolarOrientation(
        dict(m.top), dict(m.bottom), dict(m.right), dict(m.left),
        {v: rev(m.outs[v]) for v in m.outs}, {v: rev(m.ins[v]) for v in m.ins},
        {f: rev(m.face_right[f]) for f in m.face_left}, {f: rev(m.face_left[f]) for f in m.face_left},
        m.sink, m.source, m.right_outer, m.left_outer,
        rev(m.right_boundary), rev(m.left_boundary))


def op(m: BipolarOrientation) -> Permutation:
    """``op(m)(i)`` is the rank in the exploration of T(m*) of the i-th edge of T(m)."""
    primal = exploration(m)
    rank = {e: r for r, e in enumerate(exploration(dual(m)), start=1)}
    return Permutation._trusted(rank[e] for e in primal)


def canonical_form(m: BipolarOrientation, start=None, labels: dict | None = None, active=None) -> tuple:
    """Isomorphism invariant: a breadth-first relabeling from a distinguished edge.

    Two maps have equal forms iff an isomorphism maps one start edge to the other
    and preserves the given labels and the active edge.
    """
    if start is None:
        start = m.outs[m.source][0]
    eid, vid, fid = {}, {}, {}
    queue = deque([start])
    eid[start] = 0

    def see_e(e):
        if e not in eid:
            eid[e] = len(eid)
            queue.append(e)

    def see(table, x):
        if x not in table:
            table[x] = len(table)

    while queue:
        e = queue.popleft()
        for v in (m.bottom[e], m.top[e]):
            see(vid, v)
            for x in m.ins[v] + m.outs[v]:
                see_e(x)
        for f in (m.left[e], m.right[e]):
            see(fid, f)
            a, b = m.face_boundaries(f)
            for x in a + b:
                see_e(x)
    if len(eid) != len(m.bottom):
        raise InvalidMap("map is not connected")
    E = lambda es: tuple(eid[x] for x in es)
    edges = sorted(
        (eid[e], vid[m.bottom[e]], vid[m.top[e]], fid[m.left[e]], fid[m.right[e]],
         None if labels is None else labels.get(e), e == active)
        for e in m.bottom)
    verts = sorted((vid[v], E(m.ins[v]), E(m.outs[v])) for v in m.ins)
    faces = sorted((fid[f], E(m.face_left[f]), E(m.face_right[f])) for f in m.face_left)
    return (tuple(edges), tuple(verts), tuple(faces), vid[m.source], vid[m.sink],
            fid[m.left_outer], fid[m.right_outer], E(m.left_boundary), E(m.right_boundary))


def isomorphic(a: BipolarOrientation, b: BipolarOrientation) -> bool:
    return len(a) == len(b) and canonical_form(a) == canonical_form(b)


def marked_canonical_form(mk: MarkedBipolarOrientation) -> tuple:
    lo, _ = mk.interval
    rel = {e: l - lo for e, l in mk.labels.items()}
    return canonical_form(mk.skeleton, start=mk.active, labels=rel, active=mk.active)


def same_marked(a: MarkedBipolarOrientation, b: MarkedBipolarOrientation) -> bool:
    return (a.interval == b.interval and len(a.skeleton) == len(b.skeleton)
            and marked_canonical_form(a) == marked_canonical_form(b))


# -- dual forest -----------------------------------------------------------------

def dual_forest(mk: MarkedBipolarOrientation) -> PlantedForest:
    """T(m*) restricted to the duals of explored edges, planted by heights on the right boundary."""
    m = mk.skeleton
    d_order = {e: r for r, e in enumerate(exploration(dual(m)))}
    rb = {e: r for r, e in enumerate(m.right_boundary)}
    base = rb[mk.active]
    parent, index = {}, {}
    for e, lab in mk.labels.items():
        f = m.right[e]
        if f == m.right_outer:
            index[lab] = rb[e] - base
            continue
        p = m.face_right[f][-1]
        if p in mk.labels:
            parent[lab] = mk.labels[p]
        else:
            index[lab] = rb[p] - base
    label_rank = {mk.labels[e]: d_order[e] for e in mk.labels}
    labels = sorted(mk.labels.values())
    children: dict = {l: [] for l in labels}
    for c, p in parent.items():
        children[p].append(c)
    for l in labels:
        children[l].sort(key=label_rank.__getitem__)
    roots = sorted(index, key=lambda r: (index[r], label_rank[r]))
    return PlantedForest(tuple(labels), parent, {l: tuple(c) for l, c in children.items()},
                         tuple(roots), {r: index[r] for r in roots})


def outdegree_bound_holds(w, mk: MarkedBipolarOrientation | None = None) -> bool:
    """For each edge ``i``: outdeg(top(e_i)) <= s - j - 1 whenever the stopping times exist."""
    from .coal import degree_bound_indices

    lw = _as_lattice(w)
    mk = theta(lw) if mk is None else mk
    z = wc(lw)
    m = mk.skeleton
    for e, lab in mk.labels.items():
        js = degree_bound_indices(z, lab)
        if js is None:
            continue
        j, s = js
        if len(m.outs[m.top[e]]) > s - j - 1:
            return False
    return True
