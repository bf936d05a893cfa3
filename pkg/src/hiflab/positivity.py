"""Symmetric edge-cuts certifying positivity of a trace invariant.

A bubble is positive when some edge-cut splits it into two connected
halves that are identical up to exchanging white and black vertices,
and every cut edge joins a vertex directly to its mirror image.  The
invariant is then a squared norm, hence non-negative.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .bubbles import CapExceededError

DEFAULT_VERTEX_CAP = 16


@dataclass(frozen=True)
class SymmetricCut:
    """Witness of positivity.

    ``mirror`` maps every vertex of side_f to its companion in
    side_fbar; ``cut_edges`` are edge ids into bubble.edges.  Refined
    color labels for the cut are (color, F-side endpoint) pairs.
    """

    cut_edges: frozenset
    side_f: tuple
    side_fbar: tuple
    mirror: tuple  # sorted ((v, mirror(v)), ...) pairs

    def mirror_map(self):
        return dict(self.mirror)

    def refined_labels(self, bubble):
        """Cut labels (color, F-endpoint vertex), sorted."""
        fset = set(self.side_f)
        labels = []
        for eid in sorted(self.cut_edges):
            w, b, c = bubble.edges[eid]
            v = w if w in fset else b
            labels.append((c, v))
        return sorted(labels)

    def format_labels(self, bubble):
        """Human-readable labels; the subscript is kept only for repeated colors."""
        labels = self.refined_labels(bubble)
        counts = {}
        for c, _ in labels:
            counts[c] = counts.get(c, 0) + 1
        return [f"{c}_{v}" if counts[c] > 1 else str(c) for c, v in labels]


def _adjacency(bubble):
    adj = {v: [] for v in bubble.vertices}
    for idx, (w, b, _) in enumerate(bubble.edges):
        adj[w].append((b, idx))
        adj[b].append((w, idx))
    return adj


def _is_connected(verts, adj):
    verts = set(verts)
    if not verts:
        return False
    start = next(iter(verts))
    stack, seen = [start], {start}
    while stack:
        v = stack.pop()
        for u, _ in adj[v]:
            if u in verts and u not in seen:
                seen.add(u)
                stack.append(u)
    return seen == verts


def _color_signature(bubble, v, side):
    """Multiset of (color, internal?) per incident edge; mirror-invariant."""
    sig = []
    for eid in bubble.edges_at(v):
        w, b, c = bubble.edges[eid]
        other = b if v == w else w
        sig.append((c, other in side))
    return tuple(sorted(sig))


def find_symmetric_cuts(bubble, cap=DEFAULT_VERTEX_CAP):
    """All symmetric non-crossing cuts, deduplicated up to swapping sides.

    Enumerates balanced bipartitions with both sides connected, forces
    the mirror on the boundary from the cut edges themselves (the
    non-crossing condition), and completes it to a color-preserving
    anti-isomorphism by backtracking.  Results are sorted by
    (cut size, cut edge ids, mirror) so downstream choices are
    deterministic.
    """
    nv = 2 * bubble.k
    if nv > cap:
        raise CapExceededError(
            f"bubble has {nv} vertices, above the cut-search cap {cap}")
    adj = _adjacency(bubble)
    verts = sorted(bubble.vertices)
    anchor = verts[0]
    others = [v for v in verts if v != anchor]
    k = bubble.k
    cuts = []
    for rest in itertools.combinations(others, k - 1):
        side_f = (anchor,) + rest
        fset = set(side_f)
        side_fbar = tuple(v for v in verts if v not in fset)
        if not (_is_connected(fset, adj) and _is_connected(set(side_fbar), adj)):
            continue
        cut_edges = [i for i, (w, b, _) in enumerate(bubble.edges)
                     if (w in fset) != (b in fset)]
        # Non-crossing forces mirror(v) on every boundary vertex.
        forced = {}
        ok = True
        for eid in cut_edges:
            w, b, _ = bubble.edges[eid]
            v, u = (w, b) if w in fset else (b, w)
            if forced.setdefault(v, u) != u:
                ok = False
                break
        if not ok:
            continue
        if len(set(forced.values())) != len(forced):
            continue
        for mirror in _anti_isomorphisms(bubble, side_f, side_fbar, forced, adj):
            cuts.append(SymmetricCut(
                cut_edges=frozenset(cut_edges),
                side_f=side_f,
                side_fbar=side_fbar,
                mirror=tuple(sorted(mirror.items()))))
    cuts.sort(key=lambda c: (len(c.cut_edges), tuple(sorted(c.cut_edges)), c.mirror))
    return cuts


def _anti_isomorphisms(bubble, side_f, side_fbar, forced, adj):
    """Color-preserving, color-flipping bijections side_f -> side_fbar.

    Extends ``forced`` (the boundary assignment) over interior vertices;
    yields every completion mapping internal edges onto internal edges.
    """
    whites = set(bubble.white)
    fset, barset = set(side_f), set(side_fbar)

    n_int_f = sum(1 for w, b, _ in bubble.edges if w in fset and b in fset)
    n_int_bar = sum(1 for w, b, _ in bubble.edges if w in barset and b in barset)
    if n_int_f != n_int_bar:
        return

    sig_f = {v: _color_signature(bubble, v, fset) for v in side_f}
    sig_bar = {v: _color_signature(bubble, v, barset) for v in side_fbar}
    for v, u in forced.items():
        if (v in whites) == (u in whites) or sig_f[v] != sig_bar[u]:
            return

    order = sorted(side_f, key=lambda v: (v not in forced, v))

    def compatible(v, u, partial):
        if (v in whites) == (u in whites):
            return False
        if sig_f[v] != sig_bar[u]:
            return False
        # Internal edges incident to already-mapped vertices must match.
        for nb, eid in adj[v]:
            if nb not in fset or nb not in partial:
                continue
            color = bubble.edges[eid][2]
            if not _has_edge(adj, u, partial[nb], color, bubble):
                return False
        return True

    def extend(i, partial, used):
        if i == len(order):
            yield dict(partial)
            return
        v = order[i]
        if v in forced:
            if compatible(v, forced[v], partial):
                partial[v] = forced[v]
                yield from extend(i + 1, partial, used | {forced[v]})
                del partial[v]
            return
        for u in side_fbar:
            if u in used or not compatible(v, u, partial):
                continue
            partial[v] = u
            yield from extend(i + 1, partial, used | {u})
            del partial[v]

    yield from extend(0, {}, set())


def _has_edge(adj, a, b, color, bubble):
    for nb, eid in adj[a]:
        if nb == b and bubble.edges[eid][2] == color:
            return True
    return False


def validate_cut(bubble, cut):
    """Re-check the three defining conditions; raises AssertionError."""
    adj = _adjacency(bubble)
    fset, barset = set(cut.side_f), set(cut.side_fbar)
    assert fset | barset == set(bubble.vertices) and not fset & barset
    assert _is_connected(fset, adj) and _is_connected(barset, adj), \
        "removing the cut must leave two connected components"
    mirror = cut.mirror_map()
    whites = set(bubble.white)
    assert set(mirror) == fset and set(mirror.values()) == barset
    for v, u in mirror.items():
        assert (v in whites) != (u in whites), "mirror must flip vertex color"
    for w, b, c in bubble.edges:
        if w in fset and b in fset:
            assert _has_edge(adj, mirror[w], mirror[b], c, bubble), \
                "mirror must map internal edges onto internal edges"
    for eid in cut.cut_edges:
        w, b, _ = bubble.edges[eid]
        v, u = (w, b) if w in fset else (b, w)
        assert mirror[v] == u, "every cut edge must join a vertex to its mirror"
    cut_set = {i for i, (w, b, _) in enumerate(bubble.edges) if (w in fset) != (b in fset)}
    assert cut_set == set(cut.cut_edges)


def is_positive(bubble, cap=DEFAULT_VERTEX_CAP):
    """(bool, witness-or-None)."""
    cuts = find_symmetric_cuts(bubble, cap=cap)
    return (True, cuts[0]) if cuts else (False, None)


def find_noncrossing_violations(bubble, cap=DEFAULT_VERTEX_CAP):
    """Bipartitions admitting an anti-isomorphism but no mirror-aligned cut.

    These are reported (not classified as positive): the halves match as
    graphs yet at least one cut edge connects companions only after a
    relabeling of boundary slots.
    """
    nv = 2 * bubble.k
    if nv > cap:
        raise CapExceededError(
            f"bubble has {nv} vertices, above the cut-search cap {cap}")
    adj = _adjacency(bubble)
    verts = sorted(bubble.vertices)
    anchor, others = verts[0], verts[1:]
    flagged = []
    for rest in itertools.combinations(others, bubble.k - 1):
        side_f = (anchor,) + rest
        fset = set(side_f)
        side_fbar = tuple(v for v in verts if v not in fset)
        if not (_is_connected(fset, adj) and _is_connected(set(side_fbar), adj)):
            continue
        forced = _forced_boundary(bubble, fset)
        if forced is not None and any(
                True for _ in _anti_isomorphisms(bubble, side_f, side_fbar, forced, adj)):
            continue
        if any(True for _ in _anti_isomorphisms(bubble, side_f, side_fbar, {}, adj)):
            flagged.append(side_f)
    return flagged


def _forced_boundary(bubble, fset):
    forced = {}
    for w, b, _ in bubble.edges:
        if (w in fset) != (b in fset):
            v, u = (w, b) if w in fset else (b, w)
            if forced.setdefault(v, u) != u:
                return None
    if len(set(forced.values())) != len(forced):
        return None
    return forced
