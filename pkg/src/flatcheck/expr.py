"""Exact scalar arithmetic: multivariate rational functions over Q with trig atoms.

Values are canonical fractions of expanded multivariate polynomials with
Fraction coefficients.  sin/cos enter as atoms over a plain base variable,
reduced by the single rewrite sin^2 -> 1 - cos^2, so the sin-degree of every
canonical polynomial is at most 1 per base.  Denominators are kept sin-free
(multiply through by the sin-conjugate), which makes the representation of a
value unique: equality is bit-for-bit comparison of canonical forms and
is_zero is decidable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cmp_to_key
from typing import Dict, Iterable, Mapping, Optional, Tuple


class ExprError(Exception):
    pass


class DivisionByZero(ExprError):
    pass


class DenominatorVanishes(ExprError):
    def __init__(self, point=None):
        super().__init__("denominator vanishes at sample point")
        self.point = point


class UnsupportedTrigComposition(ExprError):
    pass


# ---------------------------------------------------------------------------
# Variables

STATE, UDERIV, PARAM = 0, 1, 2
PLAIN, SIN, COS = 0, 1, 2


@dataclass(frozen=True)
class VarRef:
    """A variable: state x_i, input derivative u_i^(k), parameter, or trig atom."""

    kind: int
    i: int = 0
    k: int = 0
    name: str = ""
    trig: int = PLAIN
    label: str = field(default="", compare=False, repr=False)
    skey: tuple = field(default=None, init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "skey",
                           (self.kind, self.i, self.k, self.name, self.trig))

    def sort_key(self):
        return self.skey

    @property
    def base(self) -> "VarRef":
        if self.trig == PLAIN:
            raise ValueError("not a trig atom")
        return VarRef(self.kind, self.i, self.k, self.name, PLAIN,
                      label=self.label.partition("(")[2].rstrip(")"))

    def is_trig(self) -> bool:
        return self.trig != PLAIN

    def __str__(self):
        return self.label or repr(self)


def state_var(i: int, label: str) -> VarRef:
    return VarRef(STATE, i=i, label=label)


def input_var(i: int, k: int, label: str) -> VarRef:
    return VarRef(UDERIV, i=i, k=k, label=label)


def param_var(name: str) -> VarRef:
    return VarRef(PARAM, name=name, label=name)


def sin_var(base: VarRef) -> VarRef:
    if base.trig != PLAIN:
        raise UnsupportedTrigComposition("trig atom over a trig atom")
    return VarRef(base.kind, base.i, base.k, base.name, SIN,
                  label="sin(%s)" % (base.label or base))


def cos_var(base: VarRef) -> VarRef:
    if base.trig != PLAIN:
        raise UnsupportedTrigComposition("trig atom over a trig atom")
    return VarRef(base.kind, base.i, base.k, base.name, COS,
                  label="cos(%s)" % (base.label or base))


# ---------------------------------------------------------------------------
# Monomials: sorted tuples of (VarRef, positive exponent)

Mono = Tuple[Tuple[VarRef, int], ...]
MONO_ONE: Mono = ()


def mono_from(pairs: Iterable[Tuple[VarRef, int]]) -> Mono:
    acc: Dict[VarRef, int] = {}
    for v, e in pairs:
        if e:
            acc[v] = acc.get(v, 0) + e
    return tuple(sorted(((v, e) for v, e in acc.items() if e),
                        key=lambda p: p[0].sort_key()))


def mono_mul(a: Mono, b: Mono) -> Mono:
    if not a:
        return b
    if not b:
        return a
    out = []
    ia = ib = 0
    la, lb = len(a), len(b)
    while ia < la and ib < lb:
        va, ea = a[ia]
        vb, eb = b[ib]
        ka, kb = va.skey, vb.skey
        if ka == kb:
            out.append((va, ea + eb))
            ia += 1
            ib += 1
        elif ka < kb:
            out.append(a[ia])
            ia += 1
        else:
            out.append(b[ib])
            ib += 1
    out.extend(a[ia:])
    out.extend(b[ib:])
    return tuple(out)


def mono_degree(m: Mono) -> int:
    return sum(e for _, e in m)


def mono_div(a: Mono, b: Mono) -> Optional[Mono]:
    """a / b, or None if b does not divide a."""
    db = dict(b)
    out = []
    for v, e in a:
        r = e - db.pop(v, 0)
        if r < 0:
            return None
        if r:
            out.append((v, r))
    if db:
        return None
    return tuple(out)


def mono_cmp(a: Mono, b: Mono) -> int:
    """Graded lexicographic order; larger exponent on an earlier variable wins."""
    da, db = mono_degree(a), mono_degree(b)
    if da != db:
        return -1 if da < db else 1
    ia = ib = 0
    while ia < len(a) and ib < len(b):
        va, ea = a[ia]
        vb, eb = b[ib]
        ka, kb = va.sort_key(), vb.sort_key()
        if ka < kb:
            return 1
        if kb < ka:
            return -1
        if ea != eb:
            return 1 if ea > eb else -1
        ia += 1
        ib += 1
    if ia < len(a):
        return 1
    if ib < len(b):
        return -1
    return 0


_MONO_KEY = cmp_to_key(mono_cmp)


# ---------------------------------------------------------------------------
# Polynomials: dict mono -> Fraction (no zero coefficients, trig-reduced)

Poly = Dict[Mono, Fraction]


def pzero() -> Poly:
    return {}


def pconst(q) -> Poly:
    q = Fraction(q)
    return {MONO_ONE: q} if q else {}


def pvar(v: VarRef) -> Poly:
    return {((v, 1),): Fraction(1)}


def _needs_trig_reduce(m: Mono) -> bool:
    return any(v.trig == SIN and e >= 2 for v, e in m)


def reduce_trig(d: Poly) -> Poly:
    """Rewrite sin(b)^2 -> 1 - cos(b)^2 until every sin-degree is <= 1."""
    while True:
        bad = [m for m in d if _needs_trig_reduce(m)]
        if not bad:
            return d
        for m in bad:
            coeff = d.pop(m)
            rest = []
            expand: Poly = {MONO_ONE: Fraction(1)}
            for v, e in m:
                if v.trig == SIN and e >= 2:
                    q, r = divmod(e, 2)
                    c = cos_var(v.base)
                    one_minus_c2 = {MONO_ONE: Fraction(1), ((c, 2),): Fraction(-1)}
                    for _ in range(q):
                        expand = pmul_raw(expand, one_minus_c2)
                    if r:
                        rest.append((v, 1))
                else:
                    rest.append((v, e))
            base = mono_from(rest)
            for mm, cc in expand.items():
                key = mono_mul(base, mm)
                val = d.get(key, Fraction(0)) + coeff * cc
                if val:
                    d[key] = val
                else:
                    d.pop(key, None)


def padd(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for m, c in b.items():
        v = out.get(m, Fraction(0)) + c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def pneg(a: Poly) -> Poly:
    return {m: -c for m, c in a.items()}


def psub(a: Poly, b: Poly) -> Poly:
    return padd(a, pneg(b))


def pscale(a: Poly, q: Fraction) -> Poly:
    if not q:
        return {}
    return {m: c * q for m, c in a.items()}


def pmul_raw(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    if len(a) > len(b):
        a, b = b, a
    for ma, ca in a.items():
        for mb, cb in b.items():
            key = mono_mul(ma, mb)
            v = out.get(key, Fraction(0)) + ca * cb
            if v:
                out[key] = v
            else:
                out.pop(key, None)
    return out


def pmul(a: Poly, b: Poly) -> Poly:
    return reduce_trig(pmul_raw(a, b))


def ppow(a: Poly, n: int) -> Poly:
    if n < 0:
        raise ValueError("negative power on a polynomial")
    out = pconst(1)
    for _ in range(n):
        out = pmul(out, a)
    return out


def pleading(a: Poly) -> Tuple[Mono, Fraction]:
    best = None
    for m in a:
        if best is None or mono_cmp(m, best) > 0:
            best = m
    return best, a[best]


def pdiff(a: Poly, v: VarRef) -> Poly:
    """Partial derivative; chain rule through sin/cos atoms over base v."""
    if v.is_trig():
        raise ValueError("differentiation variable must not be a trig atom")
    sv, cv = sin_var(v), cos_var(v)
    out: Poly = {}
    for m, c in a.items():
        for idx, (w, e) in enumerate(m):
            if e > 1:
                rest = m[:idx] + ((w, e - 1),) + m[idx + 1:]
            else:
                rest = m[:idx] + m[idx + 1:]
            if w == v:
                term = {rest: c * e}
            elif w == sv:
                term = {mono_mul(rest, ((cv, 1),)): c * e}
            elif w == cv:
                term = {mono_mul(rest, ((sv, 1),)): -c * e}
            else:
                continue
            out = padd(out, term)
    return reduce_trig(out)


def peval(a: Poly, assign: Mapping[VarRef, Fraction]) -> Fraction:
    total = Fraction(0)
    for m, c in a.items():
        v = c
        for var, e in m:
            v *= assign[var] ** e
        total += v
    return total


def pvars(a: Poly) -> set:
    out = set()
    for m in a:
        for v, _ in m:
            out.add(v)
    return out


def _has_sin(a: Poly) -> bool:
    return any(v.trig == SIN for m in a for v, _ in m)


# ---------------------------------------------------------------------------
# GCD over the UFD part (no sin atoms): primitive PRS

def _mono_gcd(a: Mono, b: Mono) -> Mono:
    db = dict(b)
    out = []
    for v, e in a:
        f = min(e, db.get(v, 0))
        if f:
            out.append((v, f))
    return tuple(out)


def pmonomial_content(a: Poly) -> Mono:
    it = iter(a)
    try:
        g = next(it)
    except StopIteration:
        return MONO_ONE
    for m in it:
        g = _mono_gcd(g, m)
        if not g:
            break
    return g


def pdivexact(a: Poly, b: Poly) -> Poly:
    """Exact polynomial division; raises ArithmeticError if b does not divide a."""
    if not b:
        raise ZeroDivisionError("division by zero polynomial")
    if b == pconst(next(iter(b.values()))) and MONO_ONE in b:
        return pscale(a, 1 / b[MONO_ONE])
    rem = dict(a)
    out: Poly = {}
    lm, lc = pleading(b) if b else (None, None)
    while rem:
        rm, rc = pleading(rem)
        q = mono_div(rm, lm)
        if q is None:
            raise ArithmeticError("inexact polynomial division")
        qc = rc / lc
        out[q] = out.get(q, Fraction(0)) + qc
        for m, c in b.items():
            key = mono_mul(q, m)
            v = rem.get(key, Fraction(0)) - qc * c
            if v:
                rem[key] = v
            else:
                rem.pop(key, None)
    return {m: c for m, c in out.items() if c}


def pmonic(a: Poly) -> Poly:
    if not a:
        return a
    _, lc = pleading(a)
    return pscale(a, 1 / lc)


def _main_var(a: Poly, b: Poly) -> Optional[VarRef]:
    vs = pvars(a) | pvars(b)
    if not vs:
        return None
    return max(vs, key=lambda v: v.sort_key())


def _to_univar(a: Poly, v: VarRef) -> Dict[int, Poly]:
    out: Dict[int, Poly] = {}
    for m, c in a.items():
        deg = 0
        rest = []
        for w, e in m:
            if w == v:
                deg = e
            else:
                rest.append((w, e))
        out.setdefault(deg, {})[tuple(rest)] = c
    return out


def _from_univar(u: Dict[int, Poly], v: VarRef) -> Poly:
    out: Poly = {}
    for deg, coeff in u.items():
        vm = ((v, deg),) if deg else MONO_ONE
        for m, c in coeff.items():
            out[mono_mul(m, vm)] = out.get(mono_mul(m, vm), Fraction(0)) + c
    return {m: c for m, c in out.items() if c}


def _uni_deg(u: Dict[int, Poly]) -> int:
    return max(u) if u else -1


def _uni_content(u: Dict[int, Poly]) -> Poly:
    g: Poly = {}
    for coeff in u.values():
        g = poly_gcd(g, coeff)
        if g == pconst(1):
            break
    return g


def _uni_prem(a: Dict[int, Poly], b: Dict[int, Poly]) -> Dict[int, Poly]:
    """Remainder sequence step (pseudo-remainder up to content, which the
    primitive PRS strips anyway): lc(b)*r - lc(r)*x^(dr-db)*b until deg < deg b."""
    db = _uni_deg(b)
    lb = b[db]
    r = {d: dict(c) for d, c in a.items()}
    while r and _uni_deg(r) >= db:
        dr = _uni_deg(r)
        lr = r[dr]
        nr: Dict[int, Poly] = {}
        for d, c in r.items():
            if d != dr:
                nr[d] = pmul(lb, c)
        for d, c in b.items():
            if d != db:
                shift = d + dr - db
                nr[shift] = psub(nr.get(shift, {}), pmul(lr, c))
        r = {d: c for d, c in nr.items() if c}
    return r


def _euclid_univar(ua: Dict[int, Fraction], ub: Dict[int, Fraction],
                   v: VarRef) -> Poly:
    """Monic Euclid over Q[v]; keeps coefficient sizes polynomial, unlike a
    pseudo-remainder chain."""
    def deg(u):
        return max(u) if u else -1
    def monic(u):
        lc = u[deg(u)]
        return {d: c / lc for d, c in u.items()}
    def rem(x, y):
        x = dict(x)
        dy = deg(y)
        while x and deg(x) >= dy:
            dx = deg(x)
            f = x[dx]
            for d, c in y.items():
                k = d + dx - dy
                val = x.get(k, Fraction(0)) - f * c
                if val:
                    x[k] = val
                else:
                    x.pop(k, None)
        return x
    ua, ub = monic(ua), monic(ub)
    if deg(ua) < deg(ub):
        ua, ub = ub, ua
    while ub:
        ua, ub = ub, rem(ua, ub)
        if ua and deg(ua) == 0:
            return pconst(1)
        if ub:
            ub = monic(ub)
    out: Poly = {}
    for d, c in monic(ua).items():
        out[((v, d),) if d else MONO_ONE] = c
    return pmonic(out)


def poly_gcd(a: Poly, b: Poly) -> Poly:
    """GCD in Q[vars] (monic, graded-lex leading coefficient 1); sin atoms rejected."""
    if _has_sin(a) or _has_sin(b):
        raise ValueError("gcd undefined over sin atoms; split components first")
    if not a:
        return pmonic(b)
    if not b:
        return pmonic(a)
    ga, gb = pmonomial_content(a), pmonomial_content(b)
    gm = _mono_gcd(ga, gb)
    if len(a) == 1 or len(b) == 1:
        return {gm: Fraction(1)}
    v = _main_var(a, b)
    ua, ub = _to_univar(a, v), _to_univar(b, v)
    if all(not c or set(c) == {MONO_ONE} for u in (ua, ub) for c in u.values()):
        flat_a = {d: c.get(MONO_ONE, Fraction(0)) for d, c in ua.items()}
        flat_b = {d: c.get(MONO_ONE, Fraction(0)) for d, c in ub.items()}
        return _euclid_univar({d: c for d, c in flat_a.items() if c},
                              {d: c for d, c in flat_b.items() if c}, v)
    if _uni_deg(ua) == 0 or _uni_deg(ub) == 0:
        # v-free factor: gcd of all coefficients
        g = _uni_content(ua)
        g = poly_gcd(g, _uni_content(ub))
        return pmonic(g)
    ca, cb = _uni_content(ua), _uni_content(ub)
    cont = poly_gcd(ca, cb)
    pa = {d: pdivexact(c, ca) for d, c in ua.items()}
    pb = {d: pdivexact(c, cb) for d, c in ub.items()}
    if _uni_deg(pa) < _uni_deg(pb):
        pa, pb = pb, pa
    while True:
        r = _uni_prem(pa, pb)
        if not r:
            break
        rc = _uni_content(r)
        pa, pb = pb, {d: pdivexact(c, rc) for d, c in r.items()}
        if _uni_deg(pb) == 0:
            pb = {0: pconst(1)}
            break
    g = _from_univar(pb, v)
    return pmonic(pmul(cont, g))


# ---------------------------------------------------------------------------
# Canonical fractions

def _split_sin_components(a: Poly):
    """Group by the sin-part of each monomial; values are sin-free polys."""
    comps: Dict[Mono, Poly] = {}
    for m, c in a.items():
        sins = tuple((v, e) for v, e in m if v.trig == SIN)
        rest = tuple((v, e) for v, e in m if v.trig != SIN)
        comps.setdefault(sins, {})[rest] = c
    return comps


def _join_sin_components(comps) -> Poly:
    out: Poly = {}
    for sins, poly in comps.items():
        for m, c in poly.items():
            out[mono_mul(m, sins)] = c
    return out


class Expr:
    """Immutable canonical rational function over Q in VarRefs."""

    __slots__ = ("num", "den", "_key", "_hash")

    def __init__(self, num: Poly, den: Poly, _raw=False):
        if not _raw:
            raise TypeError("use Expr.make / constructors")
        self.num = num
        self.den = den
        self._key = (tuple(sorted(num.items(), key=lambda p: _MONO_KEY(p[0]))),
                     tuple(sorted(den.items(), key=lambda p: _MONO_KEY(p[0]))))
        self._hash = hash(self._key)

    # -- construction

    @staticmethod
    def make(num: Poly, den: Poly) -> "Expr":
        num = reduce_trig(dict(num))
        den = reduce_trig(dict(den))
        if not den:
            raise DivisionByZero("zero denominator")
        if not num:
            return Expr({}, pconst(1), _raw=True)
        # clear sin atoms out of the denominator via conjugates
        while True:
            sin_in_den = sorted({v for m in den for v, _ in m if v.trig == SIN},
                                key=lambda v: v.sort_key())
            if not sin_in_den:
                break
            s = sin_in_den[0]
            u = _to_univar(den, s)
            d0, d1 = u.get(0, {}), u.get(1, {})
            conj = psub(d0, {mono_mul(m, ((s, 1),)): c for m, c in d1.items()})
            num = pmul(num, conj)
            den = pmul(den, conj)
        # cancel common factors (gcd over the sin-free components)
        if den != pconst(1):
            comps = list(_split_sin_components(num).values())
            g: Poly = {}
            for p in comps + [den]:
                g = poly_gcd(g, p)
                if g == pconst(1):
                    break
            if g and g != pconst(1):
                num_c = _split_sin_components(num)
                num = _join_sin_components(
                    {s: pdivexact(p, g) for s, p in num_c.items()})
                den = pdivexact(den, g)
        if not den:
            raise DivisionByZero("zero denominator")
        _, lc = pleading(den)
        if lc != 1:
            num = pscale(num, 1 / lc)
            den = pscale(den, 1 / lc)
        return Expr(num, den, _raw=True)

    @staticmethod
    def zero() -> "Expr":
        return _ZERO

    @staticmethod
    def one() -> "Expr":
        return _ONE

    @staticmethod
    def rational(q) -> "Expr":
        return Expr.make(pconst(Fraction(q)), pconst(1))

    @staticmethod
    def var(v: VarRef) -> "Expr":
        return Expr.make(pvar(v), pconst(1))

    # -- predicates

    def is_zero(self) -> bool:
        return not self.num

    def is_one(self) -> bool:
        return self.num == pconst(1) and self.den == pconst(1)

    def is_constant(self) -> bool:
        return (not self.num or set(self.num) == {MONO_ONE}) and self.den == pconst(1)

    def as_fraction(self) -> Fraction:
        if not self.is_constant():
            raise ValueError("not a constant")
        return self.num.get(MONO_ONE, Fraction(0))

    def free_vars(self) -> set:
        return pvars(self.num) | pvars(self.den)

    def free_base_vars(self) -> set:
        """Free variables with trig atoms replaced by their bases."""
        return {v.base if v.is_trig() else v for v in self.free_vars()}

    # -- arithmetic

    def __add__(self, other: "Expr") -> "Expr":
        if self.den == other.den:
            if self.den == pconst(1):
                return Expr(padd(self.num, other.num), pconst(1), _raw=True)
            return Expr.make(padd(self.num, other.num), self.den)
        return Expr.make(
            padd(pmul(self.num, other.den), pmul(other.num, self.den)),
            pmul(self.den, other.den))

    def __sub__(self, other: "Expr") -> "Expr":
        return self + (-other)

    def __neg__(self) -> "Expr":
        return Expr(pneg(self.num), self.den, _raw=True)

    def __mul__(self, other: "Expr") -> "Expr":
        if self.den == pconst(1) and other.den == pconst(1):
            return Expr(pmul(self.num, other.num), pconst(1), _raw=True)
        return Expr.make(pmul(self.num, other.num), pmul(self.den, other.den))

    def __truediv__(self, other: "Expr") -> "Expr":
        if other.is_zero():
            raise DivisionByZero("division by symbolically zero expression")
        return Expr.make(pmul(self.num, other.den), pmul(self.den, other.num))

    def __pow__(self, n: int) -> "Expr":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers")
        out = _ONE
        for _ in range(n):
            out = out * self
        return out

    def diff(self, v: VarRef) -> "Expr":
        if v.is_trig():
            raise ValueError("cannot differentiate with respect to a trig atom")
        dn = pdiff(self.num, v)
        if self.den == pconst(1):
            return Expr(dn, pconst(1), _raw=True)
        dd = pdiff(self.den, v)
        return Expr.make(psub(pmul(dn, self.den), pmul(self.num, dd)),
                         pmul(self.den, self.den))

    def eval_at(self, assign: Mapping[VarRef, Fraction]) -> Fraction:
        d = peval(self.den, assign)
        if d == 0:
            raise DenominatorVanishes(assign)
        return peval(self.num, assign) / d

    def substitute(self, bindings: Mapping[VarRef, "Expr"]) -> "Expr":
        # trig bases may only be renamed to plain variables
        renames = {}
        general = {}
        for v, e in bindings.items():
            if v.is_trig():
                raise UnsupportedTrigComposition("bind the base variable instead")
            general[v] = e
        present = self.free_vars()
        for v in present:
            if v.is_trig() and v.base in general:
                target = general[v.base]
                tv = _plain_var_of(target)
                if tv is None:
                    raise UnsupportedTrigComposition(
                        "trig base may only be substituted by a plain variable")
                renames[v] = Expr.var(sin_var(tv) if v.trig == SIN else cos_var(tv))
        def convert(p: Poly) -> "Expr":
            total = Expr.zero()
            for m, c in p.items():
                term = Expr.rational(c)
                for var, e in m:
                    if var in renames:
                        rep = renames[var]
                    elif var in general:
                        rep = general[var]
                    else:
                        rep = Expr.var(var)
                    term = term * rep ** e
                total = total + term
            return total
        nn = convert(self.num)
        dd = convert(self.den)
        return nn / dd

    # -- identity

    def __eq__(self, other):
        return isinstance(other, Expr) and self._key == other._key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "Expr(%s)" % render_expr(self)


def _plain_var_of(e: Expr) -> Optional[VarRef]:
    if e.den != pconst(1) or len(e.num) != 1:
        return None
    (m, c), = e.num.items()
    if c != 1 or len(m) != 1 or m[0][1] != 1 or m[0][0].is_trig():
        return None
    return m[0][0]


_ZERO = Expr({}, {MONO_ONE: Fraction(1)}, _raw=True)
_ONE = Expr({MONO_ONE: Fraction(1)}, {MONO_ONE: Fraction(1)}, _raw=True)


# ---------------------------------------------------------------------------
# Rendering (canonical infix, parseable by the system DSL)

def _render_coeff(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return "%d/%d" % (c.numerator, c.denominator)


def render_poly(p: Poly) -> str:
    if not p:
        return "0"
    monos = sorted(p, key=_MONO_KEY, reverse=True)
    parts = []
    for m in monos:
        c = p[m]
        factors = []
        for v, e in m:
            factors.append(str(v) if e == 1 else "%s^%d" % (v, e))
        body = "*".join(factors)
        if not factors:
            term = _render_coeff(abs(c))
        elif abs(c) == 1:
            term = body
        else:
            term = "%s*%s" % (_render_coeff(abs(c)), body)
        if not parts:
            parts.append(term if c > 0 else "-" + term)
        else:
            parts.append(("+ " if c > 0 else "- ") + term)
    return " ".join(parts)


def render_expr(e: Expr) -> str:
    num = render_poly(e.num)
    if e.den == pconst(1):
        return num
    den = render_poly(e.den)
    ns = num if len(e.num) <= 1 else "(%s)" % num
    bare = False
    if len(e.den) == 1:
        (m, c), = e.den.items()
        bare = c == 1 and len(m) == 1
    ds = den if bare else "(%s)" % den
    return "%s/%s" % (ns, ds)
