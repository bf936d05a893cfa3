"""Exact Gaussian-rational arithmetic, sparse polynomials and mixed Gaussian moments.

Everything downstream that claims *exact* equality of perturbative
coefficients runs on the types in this module: complex numbers with
Fraction components, multivariate polynomials over them, and moment
evaluation for the mixed measure (ordinary Gaussians together with
imaginary conjugate pairs of covariance -i).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction


class CFrac:
    """Complex number with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = _coerce(other)
        return CFrac(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        return CFrac(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        other = _coerce(other)
        return CFrac(self.re * other.re - self.im * other.im,
                     self.re * other.im + self.im * other.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        d = other.re * other.re + other.im * other.im
        if d == 0:
            raise ZeroDivisionError("division by zero CFrac")
        return CFrac((self.re * other.re + self.im * other.im) / d,
                     (self.im * other.re - self.re * other.im) / d)

    def __rtruediv__(self, other):
        return _coerce(other) / self

    def __neg__(self):
        return CFrac(-self.re, -self.im)

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ValueError("CFrac powers must be non-negative integers")
        out = ONE
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def conj(self):
        return CFrac(self.re, -self.im)

    # -- predicates / conversions -----------------------------------------

    def is_zero(self):
        return self.re == 0 and self.im == 0

    def __bool__(self):
        return not self.is_zero()

    def __eq__(self, other):
        try:
            other = _coerce(other)
        except TypeError:
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self):
        return float(self.re) + 1j * float(self.im)

    def __repr__(self):
        if self.im == 0:
            return f"CFrac({self.re})"
        return f"CFrac({self.re}, {self.im})"

    def as_strings(self):
        """(re, im) as exact fraction strings, for JSON output."""
        return str(self.re), str(self.im)


def _coerce(x):
    if isinstance(x, CFrac):
        return x
    if isinstance(x, (int, Fraction)):
        return CFrac(x)
    if isinstance(x, complex):
        if x.imag == int(x.imag) and x.real == int(x.real):
            return CFrac(int(x.real), int(x.imag))
        raise TypeError("refusing to coerce inexact complex to CFrac")
    raise TypeError(f"cannot coerce {type(x)} to CFrac")


ZERO = CFrac(0)
ONE = CFrac(1)
I = CFrac(0, 1)
MINUS_I = CFrac(0, -1)


def double_factorial(n):
    """(2n-1)!! with the convention (-1)!! = 1."""
    out = 1
    for j in range(2 * n - 1, 0, -2):
        out *= j
    return out


# ---------------------------------------------------------------------------
# Sparse multivariate polynomials.
#
# A monomial is a sorted tuple of (variable id, exponent); variables are
# opaque hashable ids.  Coefficients are CFrac.
# ---------------------------------------------------------------------------

EMPTY_MONO = ()


def mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for v, e in m2:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


class Poly:
    """Sparse polynomial: dict monomial -> CFrac, zero coefficients dropped."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = terms if terms is not None else {}

    @staticmethod
    def const(c):
        c = _coerce(c)
        return Poly({EMPTY_MONO: c} if c else {})

    @staticmethod
    def var(v, coeff=ONE):
        coeff = _coerce(coeff)
        return Poly({((v, 1),): coeff} if coeff else {})

    def __add__(self, other):
        if isinstance(other, (int, Fraction, CFrac)):
            other = Poly.const(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out.get(m, ZERO) + c
            if s:
                out[m] = s
            elif m in out:
                del out[m]
        return Poly(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, Fraction, CFrac)):
            other = Poly.const(other)
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, CFrac)):
            c = _coerce(other)
            if not c:
                return Poly()
            return Poly({m: v * c for m, v in self.terms.items()})
        out = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mono_mul(m1, m2)
                s = out.get(m, ZERO) + c1 * c2
                if s:
                    out[m] = s
                elif m in out:
                    del out[m]
        return Poly(out)

    __rmul__ = __mul__

    def is_zero(self):
        return not self.terms

    def constant_part(self):
        return self.terms.get(EMPTY_MONO, ZERO)

    def __eq__(self, other):
        return isinstance(other, Poly) and self.terms == other.terms

    def __repr__(self):
        if not self.terms:
            return "Poly(0)"
        return "Poly(" + " + ".join(f"{c!r}*{m}" for m, c in sorted(self.terms.items())) + ")"


# ---------------------------------------------------------------------------
# Mixed covariance tables and Wick moments.
# ---------------------------------------------------------------------------


class MixedCovariance:
    """Registry of integration variables and their pair covariances.

    Three kinds of variables are supported:

    * real scalars with covariance <x x> in {1, +i, -i} (or any CFrac),
    * ordinary complex scalars z with <z zbar> = C and <z z> = 0,
    * imaginary conjugate pairs (alpha, beta) whose only non-vanishing
      moments are <alpha betabar> = <alphabar beta> = -i.

    Conjugate variables are separate symbols; ``conj(name)`` gives the
    symbol of the conjugate.  The pairwise table is symmetric.
    """

    def __init__(self):
        self._cov = {}
        self.variables = []

    @staticmethod
    def conj(name):
        return name[:-1] if name.endswith("~") else name + "~"

    def _set(self, u, v, value):
        self._cov[frozenset((u, v)) if u != v else (u,)] = _coerce(value)

    def cov(self, u, v):
        key = frozenset((u, v)) if u != v else (u,)
        return self._cov.get(key, ZERO)

    def add_real(self, name, covariance):
        self.variables.append(name)
        self._set(name, name, covariance)

    def add_complex(self, name, covariance=1):
        self.variables.extend([name, self.conj(name)])
        self._set(name, self.conj(name), covariance)

    def add_xpair(self, alpha, beta):
        ab, bb = self.conj(alpha), self.conj(beta)
        self.variables.extend([alpha, ab, beta, bb])
        self._set(alpha, bb, MINUS_I)
        self._set(ab, beta, MINUS_I)


def mixed_wick_moment(monomial, cov):
    """Moment of a monomial under a mixed Gaussian, by pairing enumeration.

    ``monomial`` is a sequence of variable symbols (with repetition).  The
    value is the sum over perfect pairings of products of pair
    covariances; odd degrees and unpairable monomials give zero.
    """
    syms = list(monomial)
    if len(syms) % 2 == 1:
        return ZERO
    return _pairing_sum(syms, cov)


def _pairing_sum(syms, cov):
    if not syms:
        return ONE
    first, rest = syms[0], syms[1:]
    total = ZERO
    for j in range(len(rest)):
        c = cov.cov(first, rest[j])
        if not c:
            continue
        total = total + c * _pairing_sum(rest[:j] + rest[j + 1:], cov)
    return total


# ---------------------------------------------------------------------------
# Fast factorized moments for the structured variables used by the series
# engines.  Entries of distinct matrix elements are independent, so the
# moment of a monomial factorizes over "groups"; each group is one matrix
# entry (ordinary complex or an X-pair of entries) or one real scalar.
# ---------------------------------------------------------------------------

ORDINARY = "ordinary"
XPAIR = "xpair"
REAL = "real"


@dataclass
class VarTable:
    """Integer-id variables with enough metadata for closed-form moments.

    Every variable id maps to (group id, role).  Roles within a group:
    ``z``/``zc`` for an ordinary complex entry and its conjugate,
    ``a``/``ac``/``b``/``bc`` for an X-pair entry, ``x`` for a real scalar.
    """

    kinds: dict = field(default_factory=dict)      # group id -> ORDINARY|XPAIR|REAL
    covs: dict = field(default_factory=dict)       # group id -> CFrac scale
    roles: dict = field(default_factory=dict)      # var id -> (group, role)
    _next: int = 0

    def _new_id(self, group, role):
        vid = self._next
        self._next += 1
        self.roles[vid] = (group, role)
        return vid

    def new_real(self, group, covariance):
        self.kinds[group] = REAL
        self.covs[group] = _coerce(covariance)
        return self._new_id(group, "x")

    def new_complex(self, group, covariance=1):
        self.kinds[group] = ORDINARY
        self.covs[group] = _coerce(covariance)
        return self._new_id(group, "z"), self._new_id(group, "zc")

    def new_xpair(self, group):
        self.kinds[group] = XPAIR
        self.covs[group] = ONE
        a = self._new_id(group, "a")
        ac = self._new_id(group, "ac")
        b = self._new_id(group, "b")
        bc = self._new_id(group, "bc")
        return a, ac, b, bc

    # -- moments ----------------------------------------------------------

    def moment(self, mono):
        """Exact expectation of one monomial ((var, exp), ...)."""
        groups = {}
        for vid, e in mono:
            g, role = self.roles[vid]
            groups.setdefault(g, {})[role] = groups.setdefault(g, {}).get(role, 0) + e
        out = ONE
        for g, deg in groups.items():
            kind = self.kinds[g]
            c = self.covs[g]
            if kind == REAL:
                n = deg.get("x", 0)
                if n % 2:
                    return ZERO
                out = out * (c ** (n // 2)) * double_factorial(n // 2)
            elif kind == ORDINARY:
                p, q = deg.get("z", 0), deg.get("zc", 0)
                if p != q:
                    return ZERO
                out = out * (c ** p) * math.factorial(p)
            else:  # XPAIR: <a bc> = <ac b> = -i, all else zero
                m, mc = deg.get("a", 0), deg.get("ac", 0)
                n, nc = deg.get("b", 0), deg.get("bc", 0)
                if m != nc or mc != n:
                    return ZERO
                out = out * (MINUS_I ** (m + mc)) * math.factorial(m) * math.factorial(mc)
            if not out:
                return ZERO
        return out

    def expectation(self, poly):
        """Expectation of a Poly, term by term."""
        total = ZERO
        for mono, coeff in poly.terms.items():
            mval = self.moment(mono)
            if mval:
                total = total + coeff * mval
        return total

    def as_mixed_covariance(self, names=None):
        """Equivalent MixedCovariance over string symbols (for cross-checks)."""
        mc = MixedCovariance()
        for g, kind in self.kinds.items():
            tag = names[g] if names else str(g)
            if kind == REAL:
                mc.add_real(tag, self.covs[g])
            elif kind == ORDINARY:
                mc.add_complex(tag, self.covs[g])
            else:
                mc.add_xpair(tag + ".a", tag + ".b")
        return mc


# ---------------------------------------------------------------------------
# Exact linear algebra helpers on CFrac matrices (lists of lists).
# ---------------------------------------------------------------------------


def cfrac_det(matrix):
    """Determinant by fraction-free-ish Gaussian elimination (exact)."""
    n = len(matrix)
    a = [row[:] for row in matrix]
    det = ONE
    for col in range(n):
        pivot = None
        for r in range(col, n):
            if a[r][col]:
                pivot = r
                break
        if pivot is None:
            return ZERO
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            det = -det
        p = a[col][col]
        det = det * p
        for r in range(col + 1, n):
            if a[r][col]:
                f = a[r][col] / p
                for c in range(col, n):
                    a[r][c] = a[r][c] - f * a[col][c]
    return det


def cfrac_det_permutation(matrix):
    """Determinant by Leibniz expansion; independent oracle for small sizes."""
    n = len(matrix)
    total = ZERO
    for perm in itertools.permutations(range(n)):
        sign = ONE if _perm_parity(perm) == 0 else -ONE
        prod = sign
        for r in range(n):
            prod = prod * matrix[r][perm[r]]
            if not prod:
                break
        total = total + prod
    return total


def _perm_parity(perm):
    seen = [False] * len(perm)
    parity = 0
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, clen = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            clen += 1
        parity ^= (clen - 1) & 1
    return parity
