"""Iterated intermediate-field decomposition of a positive bubble.

Starting from a symmetric cut, one half F is peeled vertex by vertex;
each step introduces a conjugate pair of tensor fields and produces
three refined color sets (I_i, J_i, Jt_i).  The end product is a
symbolic arrowhead block-matrix specification: the partition function
becomes a mixed Gaussian integral of det(1 - g*M(xi))^(-N^theta) where
M is linear in the fields and i*C-Hermitian on undeformed contours.

Refined color labels are (color, vertex) pairs: a cut edge is
subscripted by its F-side endpoint, an internal edge by whichever
endpoint is peeled later.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bubbles import CapExceededError
from .positivity import DEFAULT_VERTEX_CAP, find_symmetric_cuts


class PlanError(ValueError):
    """Invalid peel order or inconsistent decomposition data."""


def label_str(label):
    c, v = label
    return f"{c}_{v}"


def labels_json(labels):
    return [label_str(l) for l in sorted(labels)]


# ---------------------------------------------------------------------------
# Peeling and color-set bookkeeping.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecompositionPlan:
    """Peel sequence plus the refined color sets it generates.

    ``peel`` lists all k vertices of side F; the first k-1 are peeled in
    order and the last remains.  ``i_sets[0]`` is the initial cut I, and
    ``i_sets[i]``, ``j_sets[i-1]``, ``jt_sets[i-1]`` hold I_i, J_i, Jt_i
    for step i = 1..k-1 (frozensets of (color, vertex) labels).
    """

    bubble: object
    cut: object
    peel: tuple
    i_sets: tuple
    j_sets: tuple
    jt_sets: tuple

    @property
    def k(self):
        return self.bubble.k

    @property
    def rank(self):
        return self.bubble.rank

    @property
    def eta(self):
        return self.k % 2

    def I(self, i):
        return self.i_sets[i]

    def J(self, i):
        return self.j_sets[i - 1]

    def Jt(self, i):
        return self.jt_sets[i - 1]

    def to_json_obj(self):
        obj = {
            "k": self.k, "rank": self.rank, "eta": self.eta,
            "peel": list(self.peel),
            "cut_edges": sorted(self.cut.cut_edges),
            "I": [labels_json(s) for s in self.i_sets],
            "J": [labels_json(s) for s in self.j_sets],
            "Jt": [labels_json(s) for s in self.jt_sets],
            "theta": theta(self) if self.k >= 2 else None,
        }
        return obj


def _internal_edges(bubble, fset):
    return [(i, e) for i, e in enumerate(bubble.edges)
            if e[0] in fset and e[1] in fset]


def _cut_labels_at(bubble, cut, v):
    fset = set(cut.side_f)
    out = []
    for eid in cut.cut_edges:
        w, b, c = bubble.edges[eid]
        u = w if w in fset else b
        if u == v:
            out.append((c, v))
    return out


def decompose(bubble, cut, peel_order=None):
    """Build the plan for ``cut``; default peel is the smallest valid order.

    A valid order starts at a vertex meeting both the cut and the inside
    of F, continues through internal neighbors of the previous vertex,
    and keeps every J_i non-empty.
    """
    k = bubble.k
    if peel_order is None:
        peel_order = default_peel(bubble, cut)
    peel = tuple(peel_order)
    fset = set(cut.side_f)
    if len(peel) != k or set(peel) != fset:
        raise PlanError("peel order must enumerate the vertices of side F exactly once")
    if k == 1:
        return DecompositionPlan(bubble, cut, peel, (frozenset(
            (c, v) for c, v in cut.refined_labels(bubble)),), (), ())

    pos = {v: i + 1 for i, v in enumerate(peel)}
    internal = _internal_edges(bubble, fset)

    def ilabel(edge):
        w, b, c = edge
        return (c, w if pos[w] > pos[b] else b)

    cut_lab = {v: _cut_labels_at(bubble, cut, v) for v in peel}
    if not cut_lab[peel[0]]:
        raise PlanError(f"first peeled vertex {peel[0]} has no cut edge")

    i_sets = [frozenset(l for labs in cut_lab.values() for l in labs)]
    j_sets, jt_sets = [], []
    for step in range(1, k):
        p = peel[step - 1]
        j_here, jt_here = [], list(cut_lab[p])
        for _, e in internal:
            w, b, c = e
            if p not in (w, b):
                continue
            other = b if p == w else w
            if pos[other] > step:
                j_here.append(ilabel(e))
            else:
                jt_here.append(ilabel(e))
        if not j_here:
            raise PlanError(f"step {step}: J is empty at vertex {p}")
        if step >= 2 and not (set(jt_here) & set(j_sets[-1])):
            raise PlanError(
                f"step {step}: vertex {p} is not attached through the previous J set")
        crossing = [l for labs in (cut_lab[v] for v in peel[step:]) for l in labs]
        for _, e in internal:
            w, b, c = e
            pw, pb = pos[w], pos[b]
            if min(pw, pb) <= step < max(pw, pb):
                crossing.append(ilabel(e))
        i_sets.append(frozenset(crossing))
        j_sets.append(frozenset(j_here))
        jt_sets.append(frozenset(jt_here))

    plan = DecompositionPlan(bubble, cut, peel, tuple(i_sets),
                             tuple(j_sets), tuple(jt_sets))
    _validate_plan(plan)
    return plan


def _validate_plan(plan):
    k, D = plan.k, plan.rank
    if len(plan.I(k - 1)) != D:
        raise PlanError(f"I_(k-1) has {len(plan.I(k - 1))} colors, expected D={D}")
    for i in range(1, k):
        left = (plan.I(i) - plan.J(i)) | plan.Jt(i)
        if left != plan.I(i - 1) or (plan.I(i) - plan.J(i)) & plan.Jt(i):
            raise PlanError(f"step {i}: I_(i-1) != (I_i \\ J_i) disjoint-union Jt_i")
        if not plan.J(i):
            raise PlanError(f"step {i}: empty J")
    if k >= 2 and theta(plan) < 1:
        raise PlanError("theta must be >= 1 for a plan from a symmetric cut")


def _peel_candidates(bubble, cut):
    fset = set(cut.side_f)
    adj = {v: set() for v in fset}
    for _, (w, b, _) in _internal_edges(bubble, fset):
        adj[w].add(b)
        adj[b].add(w)
    has_cut = {v: bool(_cut_labels_at(bubble, cut, v)) for v in fset}
    return adj, has_cut


def iter_peels(bubble, cut):
    """All valid peel orders, lexicographically."""
    k = bubble.k
    fset = set(cut.side_f)
    if k == 1:
        yield (next(iter(fset)),)
        return
    adj, has_cut = _peel_candidates(bubble, cut)

    def rec(prefix, remaining):
        step = len(prefix) + 1
        if step == k:
            # last peeled vertex must still see the final one
            last = next(iter(remaining))
            if last in adj[prefix[-1]]:
                yield prefix + (last,)
            return
        for v in sorted(remaining):
            if step == 1:
                if not (has_cut[v] and adj[v]):
                    continue
            elif v not in adj[prefix[-1]]:
                continue
            rest = remaining - {v}
            if not (adj[v] & rest):   # J would be empty
                continue
            yield from rec(prefix + (v,), rest)

    yield from rec((), fset)


def default_peel(bubble, cut):
    for peel in iter_peels(bubble, cut):
        return peel
    raise PlanError("no valid peel order exists for this cut")


# ---------------------------------------------------------------------------
# Theta: how many original colors factor out of every interaction term.
# ---------------------------------------------------------------------------


def theta_sets(plan):
    """Label sets whose common base colors are factorizable identities.

    One set per term of the integrated interaction: the initial-field
    term (k odd only), one per surviving coupled pair, and the final
    two-tensor term.
    """
    k = plan.k
    if k < 2:
        raise PlanError("theta needs k >= 2")
    sets = []
    if k % 2 == 1:
        sets.append(plan.Jt(1))
    i = 3 if k % 2 else 2
    while i <= k - 2:
        sets.append(plan.Jt(i) & plan.J(i - 1))
        i += 2
    sets.append(plan.J(k - 1))
    return sets


def theta(plan):
    """Count of colors whose identity factor appears in every term."""
    common = None
    for s in theta_sets(plan):
        bases = {c for c, _ in s}
        common = bases if common is None else (common & bases)
    return len(common)


def theta_colors(plan):
    common = None
    for s in theta_sets(plan):
        bases = {c for c, _ in s}
        common = bases if common is None else (common & bases)
    return tuple(sorted(common))


# ---------------------------------------------------------------------------
# Scaling exponents.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingExponents:
    m: int
    t: Fraction | None
    u: Fraction | None
    g_lambda_exp: Fraction
    g_n_exp: Fraction


def slot_layout(k):
    """First-row slot names in order, and the partner pairing.

    Partners share a slot dimension and form the conjugate-pair blocks
    of the covariance; the first column of the arrowhead under a slot
    carries the dagger of its partner's block.
    """
    if k < 2:
        raise PlanError("block layout needs k >= 2")
    row = []
    if k % 2 == 1:
        row.append("beta_1")
        i = 1
        while i <= k - 4:
            row += [f"alpha_{i}", f"beta_{i + 2}"]
            i += 2
        if k >= 3:
            row += [f"alpha_{k - 2}", "one"]
    else:
        if k == 2:
            row = ["sigma", "one"]
        else:
            row = ["sigma", "beta_2"]
            i = 2
            while i <= k - 4:
                row += [f"alpha_{i}", f"beta_{i + 2}"]
                i += 2
            row += [f"alpha_{k - 2}", "one"]
    partner = {}
    if k % 2 == 1:
        partner["beta_1"] = "beta_1"
        rest = row[1:]
    else:
        rest = row
    for a, b in zip(rest[0::2], rest[1::2]):
        partner[a] = b
        partner[b] = a
    return tuple(row), partner


def _slot_exponent_sets(plan, name):
    """Column label set of a slot (the I-set indexing its space)."""
    k = plan.k
    if name == "one":
        return plan.I(k - 1)
    if name == "sigma":
        return plan.I(1)
    kind, idx = name.split("_")
    idx = int(idx)
    return plan.I(idx - 1) if kind == "beta" else plan.I(idx + 1)


def scaling_exponents(plan, s):
    """(m, t, u, g-exponents) for scaling input s.

    t is half the largest block dimension count of the deformation
    matrix after factoring the theta identities: the first-row blocks
    are N^(D-theta) x N^(|I_j|-theta), so
    2t = (D - theta) + max_j |I_j| - theta,
    the max running over the slot spaces (including the identity slot).
    u = (2tk - s)/(k-1) sets the shrinking radius N^(-u).
    """
    s = Fraction(s)
    k, D = plan.k, plan.rank
    m = k - 1
    g_l = Fraction(1, 2 * k)
    g_n = -s / (2 * k)
    if k == 1:
        return ScalingExponents(0, None, None, g_l, g_n)
    th = theta(plan)
    row, _ = slot_layout(k)
    max_slot = max(len(_slot_exponent_sets(plan, name)) for name in row)
    t = Fraction((D - th) + (max_slot - th), 2)
    u = (2 * t * k - s) / (k - 1)
    return ScalingExponents(m, t, u, g_l, g_n)


# ---------------------------------------------------------------------------
# Block matrix specification.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldBlock:
    """One first-row block: field (or pure identity) padded by identities.

    Rows live on the hub space (base colors 1..D); columns on the slot
    labels.  ``identity_labels`` glue a column label to the row slot of
    its base color; the field occupies what remains on both sides.
    """

    slot: str
    field: str | None
    col_labels: tuple
    identity_labels: tuple
    field_row_labels: tuple
    field_col_labels: tuple
    factor_labels: tuple   # identity labels dropped when the theta colors factor


@dataclass(frozen=True)
class BlockMatrixSpec:
    """Arrowhead layout: only the first block row and column are non-zero."""

    k: int
    rank: int
    eta: int
    theta: int
    theta_cols: tuple
    gamma: int
    slot_names: tuple
    blocks: dict
    partner: dict
    field_shapes: dict   # field -> (row_labels, col_labels)
    xpairs: tuple        # ((alpha_i, beta_i), ...) conjugate-pair fields
    ordinary_fields: tuple

    @property
    def fields(self):
        return tuple(sorted(self.field_shapes))

    def slot_exponent(self, name, factored=True):
        e = len(self.blocks[name].col_labels)
        return e - self.theta if factored else e

    def hub_exponent(self, factored=True):
        return self.rank - self.theta if factored else self.rank

    def total_factor_count(self, factored=True):
        total = self.hub_exponent(factored) + sum(
            self.slot_exponent(s, factored) for s in self.slot_names)
        return total

    def total_dim(self, n, factored=True):
        return n ** self.hub_exponent(factored) + sum(
            n ** self.slot_exponent(s, factored) for s in self.slot_names)

    def covariance_blocks(self):
        """C as a list of ('ordinary', slot, e) / ('xpair', (s1, s2), e)."""
        out = [("ordinary", "hub", self.rank)]
        seen = set()
        for s in self.slot_names:
            if s in seen:
                continue
            p = self.partner[s]
            if p == s:
                out.append(("ordinary", s, len(self.blocks[s].col_labels)))
                seen.add(s)
            else:
                out.append(("xpair", (s, p), len(self.blocks[s].col_labels)))
                seen.update((s, p))
        return out

    def to_json_obj(self):
        return {
            "k": self.k, "rank": self.rank, "eta": self.eta,
            "theta": self.theta, "gamma": self.gamma,
            "factored_factor_count": self.total_factor_count(),
            "hub_exponent": self.hub_exponent(),
            "slots": [
                {"slot": s,
                 "field": self.blocks[s].field,
                 "exponent": self.slot_exponent(s, factored=False),
                 "factored_exponent": self.slot_exponent(s),
                 "labels": labels_json(self.blocks[s].col_labels),
                 "identity": labels_json(self.blocks[s].identity_labels),
                 "column_partner": self.partner[s]}
                for s in self.slot_names],
            "fields": {
                f: {"rows": labels_json(r), "cols": labels_json(c)}
                for f, (r, c) in sorted(self.field_shapes.items())},
        }


def _field_labels(plan, name):
    """(row labels, col labels) of a field as a rectangular matrix."""
    if name == "sigma":
        return tuple(sorted(plan.Jt(1))), tuple(sorted(plan.I(1) - plan.J(1)))
    kind, idx = name.split("_")
    i = int(idx)
    if kind == "beta":
        return tuple(sorted(plan.J(i))), tuple(sorted(plan.I(i - 1) - plan.Jt(i)))
    return tuple(sorted(plan.Jt(i + 1))), tuple(sorted(plan.I(i + 1) - plan.J(i + 1)))


def _block_identity_labels(plan, name):
    if name == "one":
        return tuple(sorted(plan.I(plan.k - 1)))
    if name == "sigma":
        return tuple(sorted(plan.J(1)))
    kind, idx = name.split("_")
    i = int(idx)
    return tuple(sorted(plan.Jt(i))) if kind == "beta" else tuple(sorted(plan.J(i + 1)))


def build_block_spec(plan):
    """Arrowhead specification for a plan (k >= 2), with checks.

    Verifies the closed form for the total factor count Gamma
    (3D + |I| + 2(|I_2|+|I_4|+...) for odd k,
     3D + 2(|I_1|+|I_3|+...) for even k) and that every slot can shed
    one identity factor per theta color.
    """
    k, D = plan.k, plan.rank
    row, partner = slot_layout(k)
    th_cols = theta_colors(plan)
    th = len(th_cols)
    blocks = {}
    field_shapes = {}
    for name in row:
        col_labels = tuple(sorted(_slot_exponent_sets(plan, name)))
        ident = _block_identity_labels(plan, name)
        if name == "one":
            fr = fc = ()
            field = None
        else:
            field = name
            fr, fc = _field_labels(plan, name)
            field_shapes[name] = (fr, fc)
        # the factored labels must sit in the identity part on both the
        # row block and its partner column block
        partner_ident = (tuple(sorted(plan.I(k - 1))) if partner[name] == "one"
                         else _block_identity_labels(plan, partner[name]))
        factor = []
        for c in th_cols:
            shared = [l for l in ident if l[0] == c and l in set(partner_ident)]
            if not shared:
                raise PlanError(
                    f"slot {name}: theta color {c} has no common identity label")
            factor.append(shared[0])
        blocks[name] = FieldBlock(name, field, col_labels, ident, fr, fc,
                                  tuple(factor))
        if set(blocks[name].field_col_labels) | set(ident) != set(col_labels):
            raise PlanError(f"slot {name}: labels do not tile the slot space")

    gamma = D + sum(len(blocks[s].col_labels) for s in row)
    even_idx = range(2, k - 2, 2) if k % 2 else range(1, k - 2, 2)
    closed = 3 * D + (len(plan.I(0)) if k % 2 else 0) + 2 * sum(
        len(plan.I(j)) for j in even_idx)
    if k == 2:
        closed = 3 * D
    if gamma != closed:
        raise PlanError(f"gamma mismatch: blocks give {gamma}, closed form {closed}")

    xp = tuple((f"alpha_{i}", f"beta_{i}") for i in range(1, k - 1)
               if f"alpha_{i}" in field_shapes or f"beta_{i}" in field_shapes)
    ordinary = tuple(f for f in ("sigma",) if f in field_shapes)
    return BlockMatrixSpec(
        k=k, rank=D, eta=plan.eta, theta=th, theta_cols=th_cols, gamma=gamma,
        slot_names=row, blocks=blocks, partner=partner,
        field_shapes=field_shapes, xpairs=xp, ordinary_fields=ordinary)


def optimize_plan(bubble, cap=DEFAULT_VERTEX_CAP):
    """Exhaustive (cut, peel) search maximizing theta.

    Ties break toward smaller Gamma, then lexicographically on cut edge
    ids and peel order.
    """
    cuts = find_symmetric_cuts(bubble, cap=cap)
    if not cuts:
        raise PlanError("bubble admits no symmetric cut")
    if bubble.k == 1:
        return decompose(bubble, cuts[0])
    best = None
    for cut in cuts:
        for peel in iter_peels(bubble, cut):
            try:
                plan = decompose(bubble, cut, peel)
            except PlanError:
                continue
            spec = build_block_spec(plan)
            key = (-spec.theta, spec.gamma, tuple(sorted(cut.cut_edges)), peel)
            if best is None or key < best[0]:
                best = (key, plan)
    if best is None:
        raise PlanError("no valid decomposition found")
    return best[1]


# ---------------------------------------------------------------------------
# Numeric instantiation 1 - g (M + eps*Ntau).
# ---------------------------------------------------------------------------


def _multi_indices(n, length):
    return list(itertools.product(range(n), repeat=length))


def _block_matrix(spec, block, n, fmat, factored, one=1.0, zero=0.0):
    """Dense N^(D-th) x N^(e-th) array for one first-row block.

    ``fmat`` is the array occupying the field part (already oriented as
    rows x cols over the field's label sets); pass None for the pure
    identity block, or a zero array to keep only the delta structure.
    Entries may be any scalar type; ``one``/``zero`` set the ring.
    """
    th_cols = set(spec.theta_cols) if factored else set()
    factor_set = set(block.factor_labels) if factored else set()
    row_cols = [c for c in range(1, spec.rank + 1) if c not in th_cols]
    col_labels = [l for l in block.col_labels if l not in factor_set]
    rows = _multi_indices(n, len(row_cols))
    cols = _multi_indices(n, len(col_labels))
    col_pos = {l: i for i, l in enumerate(col_labels)}
    row_pos = {c: i for i, c in enumerate(row_cols)}
    ident = [l for l in block.identity_labels if l not in factor_set]
    fr, fc = block.field_row_labels, block.field_col_labels
    if fmat is not None:
        fmat = np.asarray(fmat)
        expect = (n ** len(fr), n ** len(fc))
        if fmat.shape != expect:
            raise PlanError(
                f"field {block.field} must have shape {expect}, got {fmat.shape}")
        fmat = fmat.reshape((n,) * (len(fr) + len(fc)))
    dtype = object if isinstance(one, object) and not isinstance(one, (float, complex)) else complex
    out = np.full((len(rows), len(cols)), zero, dtype=dtype)
    for ri, rv in enumerate(rows):
        for ci, cv in enumerate(cols):
            if any(rv[row_pos[l[0]]] != cv[col_pos[l]] for l in ident):
                continue
            if fmat is None:
                out[ri, ci] = one
            else:
                idx = tuple(rv[row_pos[l[0]]] for l in fr) + \
                    tuple(cv[col_pos[l]] for l in fc)
                out[ri, ci] = fmat[idx]
    return out


def _assemble(spec, n, row_entries, col_entries, factored=True):
    """Square arrowhead from per-slot row/column dense blocks."""
    hub = n ** spec.hub_exponent(factored)
    dims = [hub] + [n ** spec.slot_exponent(s, factored) for s in spec.slot_names]
    offs = np.cumsum([0] + dims)
    total = offs[-1]
    out = np.zeros((total, total), dtype=complex)
    for j, name in enumerate(spec.slot_names, start=1):
        out[0:hub, offs[j]:offs[j + 1]] = row_entries[name]
        out[offs[j]:offs[j + 1], 0:hub] = col_entries[name]
    return out


def contour_shift_rates(alpha, beta):
    """Per-entry contour-shift rates for one conjugate pair.

    With a = (alpha+beta)/sqrt2 on the minus contour and
    b = (alpha-beta)/sqrt2 on the plus contour, every real component u is
    shifted to u -+ i*eps*tanh(u).  Returns d(alpha), d(beta),
    d(alphabar), d(betabar) per unit eps; the barred rates are not the
    conjugates of the unbarred ones.
    """
    a = (alpha + beta) / math.sqrt(2)
    b = (alpha - beta) / math.sqrt(2)

    def tau(z):
        return np.tanh(z.real) + 1j * np.tanh(z.imag)

    da, db = -1j * tau(a), 1j * tau(b)
    dac, dbc = -1j * np.conj(tau(a)), 1j * np.conj(tau(b))
    return ((da + db) / math.sqrt(2), (da - db) / math.sqrt(2),
            (dac + dbc) / math.sqrt(2), (dac - dbc) / math.sqrt(2))


def arrowhead_parts(spec, n, fields, factored=True):
    """(M, Ntau): the linear arrowhead matrix and its contour companion.

    M carries an i on every first-row block and, for odd k, on the
    column block under the beta_1 slot; the column block under slot s is
    the dagger of the partner slot's row block.  Ntau has the same
    support with the tanh shift rates in place of the field entries;
    ordinary fields and identity blocks do not deform.
    """
    fields = {f: np.asarray(v) for f, v in fields.items()}
    missing = set(spec.field_shapes) - set(fields)
    if missing:
        raise PlanError(f"missing field values for {sorted(missing)}")
    dfield, dbar = {}, {}
    for al, be in spec.xpairs:
        da, db, dac, dbc = contour_shift_rates(fields[al], fields[be])
        dfield[al], dfield[be] = da, db
        dbar[al], dbar[be] = dac, dbc
    for f in spec.ordinary_fields:
        dfield[f] = np.zeros_like(fields[f])
        dbar[f] = np.zeros_like(fields[f])

    rowsM, rowsN, colsM, colsN = {}, {}, {}, {}
    for s in spec.slot_names:
        blk = spec.blocks[s]
        fval = None if blk.field is None else fields[blk.field]
        rowsM[s] = 1j * _block_matrix(spec, blk, n, fval, factored)
        if blk.field is None:
            rowsN[s] = np.zeros_like(rowsM[s])
        else:
            rowsN[s] = 1j * _block_matrix(spec, blk, n, dfield[blk.field], factored)
        pre = 1j if (spec.k % 2 == 1 and s == "beta_1") else 1.0
        pblk = spec.blocks[spec.partner[s]]
        if pblk.field is None:
            base = _block_matrix(spec, pblk, n, None, factored)
            colsM[s] = pre * base.T
            colsN[s] = np.zeros_like(base.T)
        else:
            # column entries are the (independently deformed) conjugates
            colsM[s] = pre * _block_matrix(
                spec, pblk, n, np.conj(fields[pblk.field]), factored).T
            colsN[s] = pre * _block_matrix(
                spec, pblk, n, dbar[pblk.field], factored).T
    M = _assemble(spec, n, rowsM, colsM, factored)
    Ntau = _assemble(spec, n, rowsN, colsN, factored)
    return M, Ntau


def hermitian_matrix(spec, n, fields, factored=True):
    """The Hermitian companion: row blocks without i, columns daggered."""
    fields = {f: np.asarray(v) for f, v in fields.items()}
    rows, cols = {}, {}
    for s in spec.slot_names:
        blk = spec.blocks[s]
        fval = None if blk.field is None else fields[blk.field]
        rows[s] = _block_matrix(spec, blk, n, fval, factored)
        cols[s] = rows[s].conj().T
    return _assemble(spec, n, rows, cols, factored)


def covariance_matrix(spec, n, factored=True):
    """Block-diagonal mixed covariance matching the slot layout."""
    hub = n ** spec.hub_exponent(factored)
    dims = {s: n ** spec.slot_exponent(s, factored) for s in spec.slot_names}
    offs = {}
    total = hub
    for s in spec.slot_names:
        offs[s] = total
        total += dims[s]
    C = np.zeros((total, total), dtype=complex)
    C[:hub, :hub] = np.eye(hub)
    for kind, who, _ in spec.covariance_blocks():
        if who == "hub":
            continue
        if kind == "ordinary":
            o, d = offs[who], dims[who]
            C[o:o + d, o:o + d] = np.eye(d)
        else:
            s1, s2 = who
            o1, o2, d = offs[s1], offs[s2], dims[s1]
            C[o1:o1 + d, o2:o2 + d] = -1j * np.eye(d)
            C[o2:o2 + d, o1:o1 + d] = -1j * np.eye(d)
    return C


def instantiate(spec, n, fields, g, eps=0.0, factored=True):
    """Dense 1 - g*(M + eps*Ntau) at dimension parameter n."""
    M, Ntau = arrowhead_parts(spec, n, fields, factored=factored)
    total = M.shape[0]
    return np.eye(total) - g * (M + eps * Ntau)


def random_fields(spec, n, rng, scale=1.0):
    """Gaussian field sample with the natural shapes for dimension n."""
    out = {}
    for f, (fr, fc) in spec.field_shapes.items():
        shape = (n ** len(fr), n ** len(fc))
        out[f] = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    return out
