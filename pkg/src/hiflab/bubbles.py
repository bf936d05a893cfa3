"""D-colored bipartite graphs encoding tensor trace invariants.

A bubble is a connected bipartite multigraph whose edges carry colors
1..D such that every vertex sees each color exactly once.  White
vertices stand for tensor factors T, black vertices for conjugates.
This module validates bubbles, parses the external graph format,
computes faces / jackets / the degree invariant, and evaluates the
associated trace invariant on explicit tensors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class BubbleError(ValueError):
    """Invalid bubble data (parse or validation failure)."""


class CapExceededError(RuntimeError):
    """A combinatorial search would exceed the configured size cap."""


@dataclass(frozen=True)
class Bubble:
    """Validated D-colored bipartite connected graph.

    edges are (white id, black id, color) triples; ids live in one
    shared namespace and the white/black lists are disjoint.
    """

    rank: int
    white: tuple
    black: tuple
    edges: tuple

    @property
    def k(self):
        """Number of white vertices (= number of blacks)."""
        return len(self.white)

    @property
    def vertices(self):
        return self.white + self.black

    def is_white(self, v):
        return v in set(self.white)

    def edges_at(self, v):
        return [i for i, (w, b, _) in enumerate(self.edges) if v in (w, b)]

    def edge_other_end(self, eid, v):
        w, b, _ = self.edges[eid]
        return b if v == w else w

    def neighbor_by_color(self, v, color):
        for w, b, c in self.edges:
            if c == color and v in (w, b):
                return b if v == w else w
        raise KeyError((v, color))

    def to_json_obj(self):
        return {"rank": self.rank, "white": list(self.white),
                "black": list(self.black),
                "edges": [list(e) for e in self.edges]}

    def to_text(self):
        lines = [f"rank {self.rank}",
                 "white " + " ".join(map(str, self.white)),
                 "black " + " ".join(map(str, self.black))]
        lines += [f"edge {w} {b} {c}" for w, b, c in self.edges]
        return "\n".join(lines) + "\n"


def make_bubble(rank, white, black, edges):
    """Validate and freeze a bubble; raises BubbleError with a reason."""
    white, black = tuple(white), tuple(black)
    edges = tuple((int(w), int(b), int(c)) for w, b, c in edges)
    if rank < 1:
        raise BubbleError("rank must be >= 1")
    if not white or len(white) != len(black):
        raise BubbleError("need equally many white and black vertices, at least one each")
    wset, bset = set(white), set(black)
    if len(wset) != len(white) or len(bset) != len(black) or wset & bset:
        raise BubbleError("vertex ids must be distinct across the white and black lists")
    seen = {v: set() for v in wset | bset}
    for w, b, c in edges:
        if w not in wset or b not in bset:
            raise BubbleError(f"edge ({w},{b},{c}) must join a white to a black vertex")
        if not 1 <= c <= rank:
            raise BubbleError(f"edge color {c} outside 1..{rank}")
        if c in seen[w]:
            raise BubbleError(f"duplicate color {c} at vertex {w}")
        if c in seen[b]:
            raise BubbleError(f"duplicate color {c} at vertex {b}")
        seen[w].add(c)
        seen[b].add(c)
    for v, cols in seen.items():
        if len(cols) != rank:
            raise BubbleError(f"vertex {v} has colors {sorted(cols)}, expected all of 1..{rank}")
    b = Bubble(rank, white, black, edges)
    if not _connected(b):
        raise BubbleError("graph is not connected")
    return b


def _connected(b):
    verts = set(b.vertices)
    adj = {v: set() for v in verts}
    for w, bk, _ in b.edges:
        adj[w].add(bk)
        adj[bk].add(w)
    stack, seen = [b.white[0]], {b.white[0]}
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return seen == verts


# ---------------------------------------------------------------------------
# Parsing.  Text format, one construct per line ('#' starts a comment):
#     rank D
#     white v1 v2 ...
#     black w1 w2 ...
#     edge v w c
# or the equivalent JSON object {rank, white, black, edges}.
# ---------------------------------------------------------------------------


def parse_bubble(text):
    text = text.strip()
    if text.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BubbleError(f"invalid JSON graph: {exc}") from exc
        for key in ("rank", "white", "black", "edges"):
            if key not in obj:
                raise BubbleError(f"JSON graph missing field {key!r}")
        return make_bubble(obj["rank"], obj["white"], obj["black"], obj["edges"])

    rank, white, black, edges = None, None, None, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kw = parts[0]
        try:
            if kw == "rank":
                rank = int(parts[1])
            elif kw == "white":
                white = [int(p) for p in parts[1:]]
            elif kw == "black":
                black = [int(p) for p in parts[1:]]
            elif kw == "edge":
                if len(parts) != 4:
                    raise BubbleError(f"line {lineno}: edge needs 3 fields, got {len(parts) - 1}")
                edges.append((int(parts[1]), int(parts[2]), int(parts[3])))
            else:
                raise BubbleError(f"line {lineno}: unknown construct {kw!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, BubbleError):
                raise
            raise BubbleError(f"line {lineno}: malformed {kw!r} line: {raw.strip()!r}") from exc
    if rank is None or white is None or black is None:
        raise BubbleError("graph needs rank, white and black lines")
    return make_bubble(rank, white, black, edges)


# ---------------------------------------------------------------------------
# Faces and jackets.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Face:
    """Cycle of the bicolored subgraph with colors color_pair (i < j)."""

    color_pair: tuple
    vertices: tuple   # cyclic, starting at the smallest white vertex
    edge_ids: tuple


def faces(b):
    """All faces, one list entry per bicolored cycle, deterministic order.

    Tracing starts from the smallest unvisited (vertex, color) pair, walks
    color i then color j alternately, and records the vertex cycle.
    """
    out = []
    eid = {}
    for idx, (w, bk, c) in enumerate(b.edges):
        eid[(w, c)] = idx
        eid[(bk, c)] = idx
    for i in range(1, b.rank + 1):
        for j in range(i + 1, b.rank + 1):
            visited = set()
            for start in sorted(b.vertices):
                if start in visited:
                    continue
                verts, eids = [], []
                v, color = start, i
                while True:
                    verts.append(v)
                    visited.add(v)
                    e = eid[(v, color)]
                    eids.append(e)
                    v = b.edge_other_end(e, v)
                    color = j if color == i else i
                    if v == start and color == i:
                        break
                out.append(Face((i, j), tuple(verts), tuple(eids)))
    return out


def face_count(b):
    return len(faces(b))


@dataclass(frozen=True)
class Jacket:
    """Ribbon subgraph induced by a color cycle, with its genus."""

    color_cycle: tuple      # canonical representative, starts at color 1
    face_pairs: frozenset   # color pairs retained by this jacket
    n_faces: int
    genus: int


def _canonical_color_cycles(rank):
    """The (D-1)!/2 cycles on 1..D up to rotation and orientation."""
    import itertools
    rest = list(range(2, rank + 1))
    cycles = []
    for perm in itertools.permutations(rest):
        if perm[0] < perm[-1]:  # orientation representative
            cycles.append((1,) + perm)
    return cycles


def jackets(b):
    """All jackets with genera; requires D >= 3.

    A jacket keeps every vertex and edge but only the faces whose two
    colors are adjacent in the defining cycle; its genus comes from the
    Euler relation 2 - 2g = V - E + F.
    """
    if b.rank < 3:
        raise BubbleError(
            "jackets need rank >= 3; the rank-2 (matrix) case is handled by the"
            " matrix-model module")
    all_faces = faces(b)
    V, E = 2 * b.k, len(b.edges)
    out = []
    for cyc in _canonical_color_cycles(b.rank):
        pairs = frozenset(
            frozenset((cyc[q], cyc[(q + 1) % b.rank])) for q in range(b.rank))
        nf = sum(1 for f in all_faces if frozenset(f.color_pair) in pairs)
        chi = V - E + nf
        if chi % 2:
            raise BubbleError("odd Euler characteristic; jacket surface not orientable?")
        g = (2 - chi) // 2
        if g < 0:
            raise BubbleError(f"negative jacket genus {g}")
        out.append(Jacket(cyc, pairs, nf, g))
    return out


def gurau_degree(b):
    """Degree invariant: sum of jacket genera, cross-checked per face count.

    The face-count relation
        F = (D-1)(D-2)/2 * k + (D-1) - 2 * omega / (D-2)!
    (with k the number of white vertices) must reproduce the jacket sum
    exactly, otherwise an internal-consistency error is raised.
    """
    omega_jackets = sum(j.genus for j in jackets(b))
    omega_faces = degree_from_faces(b)
    if Fraction(omega_jackets) != omega_faces:
        raise AssertionError(
            f"degree mismatch: jackets give {omega_jackets}, face count gives {omega_faces}")
    return omega_jackets


def degree_from_faces(b):
    """Degree solved from the face-count relation, as an exact Fraction."""
    D = b.rank
    F = face_count(b)
    fact = 1
    for j in range(2, D - 1):
        fact *= j
    expected_planar = Fraction((D - 1) * (D - 2), 2) * b.k + (D - 1)
    return Fraction(fact) * (expected_planar - F) / 2


def is_melonic(b):
    return gurau_degree(b) == 0


# ---------------------------------------------------------------------------
# Numerical evaluation of the trace invariant.
# ---------------------------------------------------------------------------


def evaluate_invariant(b, tensor):
    """Contract k copies of ``tensor`` and k conjugates along the edges.

    ``tensor`` has shape (N,)*D; slot i of a white vertex carries color
    i+1 and is glued to the same slot of the black endpoint of its
    color-(i+1) edge.
    """
    tensor = np.asarray(tensor)
    if tensor.ndim != b.rank:
        raise BubbleError(f"tensor must have rank {b.rank}, got {tensor.ndim}")
    n = tensor.shape[0]
    if any(s != n for s in tensor.shape):
        raise BubbleError("tensor must be N^D (all dimensions equal)")
    label = {}
    for idx, (w, bk, c) in enumerate(b.edges):
        label[(w, c)] = idx
        label[(bk, c)] = idx
    operands = []
    for v in b.white:
        operands.append(tensor)
        operands.append([label[(v, c)] for c in range(1, b.rank + 1)])
    for v in b.black:
        operands.append(np.conj(tensor))
        operands.append([label[(v, c)] for c in range(1, b.rank + 1)])
    operands.append([])  # full contraction
    return complex(np.einsum(*operands, optimize=True))


def apply_color_unitaries(tensor, unitaries):
    """Transform T by one unitary per color slot (slot i gets unitaries[i])."""
    out = np.asarray(tensor)
    for axis, u in enumerate(unitaries):
        out = np.tensordot(u, out, axes=([1], [axis]))
        out = np.moveaxis(out, 0, axis)
    return out
