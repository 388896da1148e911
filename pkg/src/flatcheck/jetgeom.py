"""Vector fields on prolonged jet spaces: Lie brackets, distributions,
generic rank with exact certificates, involutivity and closures."""

from __future__ import annotations

import random
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .expr import (Expr, Poly, VarRef, cos_var, pconst, pdivexact,
                   pleading, pmonomial_content, pmul, pscale, psub, pvar,
                   param_var, render_expr, render_poly, sin_var,
                   DenominatorVanishes, MONO_ONE, UDERIV)


class GeometryError(Exception):
    pass


class SpaceMismatch(GeometryError):
    pass


class SamplingExhausted(GeometryError):
    pass


class IterationBudgetExceeded(GeometryError):
    pass


# ---------------------------------------------------------------------------
# Multi-indices

class MultiIndex(tuple):
    """Componentwise-ordered prolongation multi-index j = (j_1, ..., j_m)."""

    def __new__(cls, items: Iterable[int]):
        vals = tuple(int(v) for v in items)
        if any(v < 0 for v in vals):
            raise ValueError("multi-index components must be nonnegative")
        return super().__new__(cls, vals)

    def cmin(self, other) -> "MultiIndex":
        other = _broadcast(other, len(self))
        return MultiIndex(min(a, b) for a, b in zip(self, other))

    def cmax(self, other) -> "MultiIndex":
        other = _broadcast(other, len(self))
        return MultiIndex(max(a, b) for a, b in zip(self, other))

    @property
    def total(self) -> int:
        return sum(self)

    def dominates(self, other) -> bool:
        other = _broadcast(other, len(self))
        return all(a >= b for a, b in zip(self, other))

    def sorted_permutation(self) -> Tuple["MultiIndex", Tuple[int, ...]]:
        """(sorted copy, perm) with perm[p] = original 0-based channel at sorted
        position p; stable on ties."""
        order = sorted(range(len(self)), key=lambda i: (self[i], i))
        return MultiIndex(self[i] for i in order), tuple(order)


def _broadcast(other, m: int):
    if isinstance(other, int):
        return (other,) * m
    return tuple(other)


# ---------------------------------------------------------------------------
# Jet spaces

@dataclass(frozen=True)
class JetSpace:
    """X^(j): states x_1..x_n then u_i^(0..j_i) per input channel."""

    n: int
    m: int
    j: MultiIndex
    coords: Tuple[VarRef, ...]
    params: Tuple[VarRef, ...] = ()
    trig_bases: Tuple[VarRef, ...] = ()

    @property
    def dim(self) -> int:
        return len(self.coords)

    def col(self, v: VarRef) -> int:
        return self.coords.index(v)

    def state_coords(self) -> Tuple[VarRef, ...]:
        return self.coords[: self.n]

    def u_coord(self, i: int, k: int) -> VarRef:
        for v in self.coords[self.n:]:
            if v.kind == UDERIV and v.i == i and v.k == k:
                return v
        raise KeyError("u_%d^(%d) is not a coordinate of this space" % (i, k))

    def sample_point(self, rng: random.Random) -> Dict[VarRef, Fraction]:
        """Random rational point; params nonzero; trig pairs via tan-half."""
        pt: Dict[VarRef, Fraction] = {}
        for v in self.coords:
            pt[v] = Fraction(rng.randint(-20, 20), rng.randint(1, 7))
        for v in self.params:
            num = 0
            while num == 0:
                num = rng.randint(-20, 20)
            pt[v] = Fraction(num, rng.randint(1, 7))
        for b in self.trig_bases:
            t = Fraction(rng.randint(-20, 20), rng.randint(1, 7))
            pt[b] = t
            pt[sin_var(b)] = 2 * t / (1 + t * t)
            pt[cos_var(b)] = (1 - t * t) / (1 + t * t)
        return pt


# ---------------------------------------------------------------------------
# Vector fields

class VectorField:
    """Sparse coordinate-indexed field sum_c coeff_c * d/dc on a jet space."""

    __slots__ = ("space", "coeffs", "_key")

    def __init__(self, space: JetSpace, coeffs: Dict[VarRef, Expr]):
        self.space = space
        self.coeffs = {v: e for v, e in coeffs.items() if not e.is_zero()}
        self._key = None

    def key(self):
        if self._key is None:
            items = sorted(self.coeffs.items(), key=lambda p: p[0].sort_key())
            self._key = tuple((v, e._key) for v, e in items)
        return self._key

    def is_zero(self) -> bool:
        return not self.coeffs

    def coeff(self, v: VarRef) -> Expr:
        return self.coeffs.get(v, Expr.zero())

    def __eq__(self, other):
        return isinstance(other, VectorField) and self.space == other.space \
            and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_space(self, other)
        out = dict(self.coeffs)
        for v, e in other.coeffs.items():
            out[v] = out.get(v, Expr.zero()) + e
        return VectorField(self.space, out)

    def __neg__(self) -> "VectorField":
        return VectorField(self.space, {v: -e for v, e in self.coeffs.items()})

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + (-other)

    def scale(self, s: Expr) -> "VectorField":
        return VectorField(self.space, {v: s * e for v, e in self.coeffs.items()})

    def apply(self, phi: Expr) -> Expr:
        """Lie derivative of a scalar along this field."""
        out = Expr.zero()
        touched = phi.free_base_vars()
        for v, e in self.coeffs.items():
            if v in touched:
                out = out + e * phi.diff(v)
        return out

    def eval_row(self, point: Dict[VarRef, Fraction]) -> List[Fraction]:
        row = [Fraction(0)] * self.space.dim
        for v, e in self.coeffs.items():
            row[self.space.col(v)] = e.eval_at(point)
        return row

    def render(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for v in sorted(self.coeffs, key=lambda w: self.space.col(w)):
            e = self.coeffs[v]
            if e.is_one():
                parts.append("d/d%s" % v)
            elif (-e).is_one():
                parts.append("-d/d%s" % v)
            else:
                s = render_expr(e)
                if " " in s:
                    s = "(%s)" % s
                parts.append("%s*d/d%s" % (s, v))
        out = parts[0]
        for p in parts[1:]:
            out += " - " + p[1:] if p.startswith("-") else " + " + p
        return out

    def __repr__(self):
        return "VectorField(%s)" % self.render()


def _same_space(a: VectorField, b: VectorField):
    if a.space != b.space:
        raise SpaceMismatch("vector fields live on different jet spaces")


def unit_field(space: JetSpace, v: VarRef) -> VectorField:
    return VectorField(space, {v: Expr.one()})


def lie_bracket(v: VectorField, w: VectorField) -> VectorField:
    """[v, w]_i = sum_j (v_j dw_i/dxi_j - w_j dv_i/dxi_j)."""
    _same_space(v, w)
    out: Dict[VarRef, Expr] = {}
    for j, vj in v.coeffs.items():
        for i, wi in w.coeffs.items():
            if j in wi.free_base_vars():
                out[i] = out.get(i, Expr.zero()) + vj * wi.diff(j)
    for j, wj in w.coeffs.items():
        for i, vi in v.coeffs.items():
            if j in vi.free_base_vars():
                out[i] = out.get(i, Expr.zero()) - wj * vi.diff(j)
    return VectorField(v.space, out)


def ad_pow(v: VectorField, w: VectorField, k: int) -> VectorField:
    """Iterated adjoint ad_v^k w, ad^0 = w."""
    if k < 0:
        raise ValueError("adjoint power must be nonnegative")
    out = w
    for _ in range(k):
        out = lie_bracket(v, out)
    return out


def is_vertical(v: VectorField, depends_at_most: MultiIndex) -> bool:
    """Only d/dx components, coefficients depending at most on x^(bound)."""
    space = v.space
    states = set(space.state_coords())
    for c in v.coeffs:
        if c not in states:
            return False
    allowed = set(states) | set(space.params)
    for i, cap in enumerate(depends_at_most, start=1):
        for k in range(0, cap + 1):
            try:
                allowed.add(space.u_coord(i, k))
            except KeyError:
                break
    for e in v.coeffs.values():
        for b in e.free_base_vars():
            if b not in allowed:
                return False
    return True


# ---------------------------------------------------------------------------
# Rank machinery

def fraction_rank(rows: List[List[Fraction]]) -> int:
    rows = [list(r) for r in rows if any(r)]
    rank = 0
    ncols = len(rows[0]) if rows else 0
    for col in range(ncols):
        piv = None
        for r in range(rank, len(rows)):
            if rows[r][col]:
                piv = r
                break
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        pv = rows[rank][col]
        for r in range(rank + 1, len(rows)):
            f = rows[r][col]
            if f:
                fr = f / pv
                rows[r] = [a - fr * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
        if rank == len(rows):
            break
    return rank


class PointEchelon:
    """Incremental reduced rows at one sample point, for membership probes."""

    def __init__(self, point: Dict[VarRef, Fraction]):
        self.point = point
        self.rows: List[Tuple[int, List[Fraction]]] = []   # (pivot col, row)

    def residual(self, row: List[Fraction]) -> Optional[List[Fraction]]:
        row = list(row)
        for pc, prow in self.rows:
            if row[pc]:
                f = row[pc] / prow[pc]
                row = [a - f * b for a, b in zip(row, prow)]
        return row if any(row) else None

    def insert(self, row: List[Fraction]) -> bool:
        res = self.residual(row)
        if res is None:
            return False
        pc = next(i for i, v in enumerate(res) if v)
        self.rows.append((pc, res))
        self.rows.sort(key=lambda p: p[0])
        return True

    @property
    def rank(self) -> int:
        return len(self.rows)


def _factor_polys(p: Poly) -> List[Poly]:
    """Monomial factors plus the sign/content-normalized residual factor."""
    out: List[Poly] = []
    if not p or set(p) == {MONO_ONE}:
        return out
    mono = pmonomial_content(p)
    for v, _ in mono:
        out.append(pvar(v))
    if mono:
        p = {_mono_quot(m, mono): c for m, c in p.items()}
    if not p or set(p) == {MONO_ONE}:
        return out
    out.append(_int_primitive(p))
    return out


def _mono_quot(m, mono):
    from .expr import mono_div
    q = mono_div(m, mono)
    return q if q is not None else m


def _int_primitive(p: Poly) -> Poly:
    """Scale to coprime integer coefficients with positive leading coefficient."""
    from math import gcd
    nums = [c.numerator for c in p.values()]
    dens = [c.denominator for c in p.values()]
    g = 0
    for v in nums:
        g = gcd(g, abs(v))
    l = 1
    for d in dens:
        l = l * d // gcd(l, d)
    scale = Fraction(l, g if g else 1)
    q = pscale(p, scale)
    _, lc = pleading(q)
    if lc < 0:
        q = pscale(q, Fraction(-1))
    return q


def accumulate_factors(acc: List[Poly], candidates: List[Poly]):
    """Collect factors, collapsing powers/products of ones already present."""
    for cand in candidates:
        if len(cand) == 1:      # monomial factor: single variable, keep as is
            if cand not in acc:
                acc.append(cand)
            continue
        rest = cand
        changed = True
        while changed and len(rest) > 1:
            changed = False
            for known in acc:
                if len(known) <= 1:
                    continue
                try:
                    q = pdivexact(rest, known)
                except ArithmeticError:
                    continue
                rest = _int_primitive(q) if len(q) > 1 or set(q) != {MONO_ONE} \
                    else q
                changed = True
                if not rest or set(rest) == {MONO_ONE}:
                    break
        if rest and set(rest) != {MONO_ONE} and rest not in acc:
            acc.append(_int_primitive(rest))


@dataclass
class RankCertificate:
    rank: int
    sampled_rank: int
    symbolic_rank: Optional[int]
    points: List[Dict[VarRef, Fraction]]
    point_ranks: List[int]
    factors: List[Poly] = field(default_factory=list)
    base_point_rank: Optional[int] = None
    base_point_drop: bool = False
    seed: int = 0

    def factor_strings(self) -> List[str]:
        seen = []
        for f in self.factors:
            s = render_poly(f)
            if s not in seen:
                seen.append(s)
        return seen


def _stable_seed(seed: int, fields: Sequence[VectorField]) -> int:
    blob = "|".join(
        ";".join("%s=%s" % (v, render_expr(e))
                 for v, e in sorted(f.coeffs.items(), key=lambda p: p[0].sort_key()))
        for f in fields)
    return (seed & 0xFFFFFFFF) * 0x10001 + zlib.crc32(blob.encode())


_TANHALF: Dict[VarRef, VarRef] = {}


def _tanhalf_var(base: VarRef) -> VarRef:
    if base not in _TANHALF:
        _TANHALF[base] = param_var("tanhalf_%s" % (base.label or "v"))
    return _TANHALF[base]


def _detrig_poly(p: Poly, bases: Sequence[VarRef]) -> Poly:
    """Substitute the tan-half parametrization and clear the (1+t^2) powers.

    Rank computations are invariant under scaling rows by the everywhere
    positive (1+t^2), so the cleared denominator is dropped."""
    present = [b for b in bases
               if any(v.is_trig() and v.base == b for m in p for v, _ in m)]
    if not present:
        return dict(p)
    out = dict(p)
    for b in present:
        t = _tanhalf_var(b)
        sv, cv = sin_var(b), cos_var(b)
        t2p1 = {MONO_ONE: Fraction(1), ((t, 2),): Fraction(1)}
        two_t = {((t, 1),): Fraction(2)}
        one_m_t2 = {MONO_ONE: Fraction(1), ((t, 2),): Fraction(-1)}
        deg = 0
        for m in out:
            d = sum(e for v, e in m if v in (sv, cv))
            deg = max(deg, d)
        new: Poly = {}
        for m, c in out.items():
            a = b_ = 0
            rest = []
            for v, e in m:
                if v == sv:
                    a = e
                elif v == cv:
                    b_ = e
                else:
                    rest.append((v, e))
            term = {tuple(rest): c}
            for _ in range(a):
                term = pmul(term, two_t)
            for _ in range(b_):
                term = pmul(term, one_m_t2)
            for _ in range(deg - a - b_):
                term = pmul(term, t2p1)
            for mm, cc in term.items():
                val = new.get(mm, Fraction(0)) + cc
                if val:
                    new[mm] = val
                else:
                    new.pop(mm, None)
        out = new
    return out


def symbolic_rank(fields: Sequence[VectorField], space: JetSpace):
    """Fraction-free (Bareiss) elimination over the polynomial ring.

    Returns (rank, factor polys): pivots and cleared row denominators,
    normalized; tan-half clearing factors are not reported."""
    one = pconst(1)
    factors: List[Poly] = []
    rows: List[List[Poly]] = []
    for f in fields:
        entries = [f.coeff(c) for c in space.coords]
        dens = [e.den for e in entries]
        scaled = []
        for i, e in enumerate(entries):
            p = dict(e.num)
            for jj, d in enumerate(dens):
                if jj != i and d != one:
                    p = pmul(p, d)
            scaled.append(p)
        for d in dens:
            if d != one:
                accumulate_factors(factors, _factor_polys(d))
        rows.append([_detrig_poly(p, space.trig_bases) for p in scaled])
    rank = 0
    prev: Poly = pconst(1)
    nrows = len(rows)
    for col in range(space.dim):
        piv = None
        for r in range(rank, nrows):
            if rows[r][col]:
                piv = r
                break
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        pivot = rows[rank][col]
        accumulate_factors(factors, _factor_polys(pivot))
        for r in range(rank + 1, nrows):
            rc = rows[r][col]
            for c in range(col + 1, space.dim):
                num = psub(pmul(pivot, rows[r][c]), pmul(rc, rows[rank][c]))
                rows[r][c] = pdivexact(num, prev) if num else {}
            rows[r][col] = {}
        prev = pivot
        rank += 1
        if rank == nrows:
            break
    return rank, factors


def generic_rank(fields: Sequence[VectorField], space: JetSpace, seed: int = 0,
                 samples: int = 5, base_point: Optional[Dict[VarRef, Fraction]] = None,
                 symbolic: Optional[bool] = None) -> RankCertificate:
    """Generic rank by exact evaluation at random rational points (max over
    points), cross-checked by fraction-free elimination when dim <= 12."""
    fields = [f for f in fields if not f.is_zero()]
    if not fields:
        return RankCertificate(0, 0, 0, [], [], seed=seed)
    rng = random.Random(_stable_seed(seed, fields))
    points: List[Dict[VarRef, Fraction]] = []
    ranks: List[int] = []
    for _ in range(samples):
        for attempt in range(60):
            pt = space.sample_point(rng)
            try:
                rows = [f.eval_row(pt) for f in fields]
            except DenominatorVanishes:
                continue
            points.append(pt)
            ranks.append(fraction_rank(rows))
            break
        else:
            raise SamplingExhausted("could not sample a denominator-avoiding point")
    sampled = max(ranks)
    sym_rank = None
    factors: List[Poly] = []
    if symbolic is None:
        symbolic = space.dim <= 12
    if symbolic:
        sym_rank, factors = symbolic_rank(fields, space)
    rank = sym_rank if sym_rank is not None else sampled
    cert = RankCertificate(rank, sampled, sym_rank, points, ranks,
                           factors=factors, seed=seed)
    if base_point is not None:
        bp = dict(base_point)
        for v in space.coords:
            bp.setdefault(v, Fraction(0))   # jet origin: derivatives vanish
        try:
            rows = [f.eval_row(bp) for f in fields]
            cert.base_point_rank = fraction_rank(rows)
        except DenominatorVanishes:
            cert.base_point_rank = None
        if cert.base_point_rank is None or cert.base_point_rank < rank:
            cert.base_point_drop = True
    return cert


# ---------------------------------------------------------------------------
# Distributions

class Distribution:
    """Finite-generator distribution with a cached generic-rank certificate."""

    def __init__(self, space: JetSpace, generators: Sequence[VectorField],
                 seed: int = 0, samples: int = 5,
                 base_point: Optional[Dict[VarRef, Fraction]] = None,
                 symbolic: Optional[bool] = None):
        gens = []
        for g in generators:
            if g.space != space:
                raise SpaceMismatch("generator on the wrong jet space")
            if not g.is_zero():
                gens.append(g)
        self.space = space
        self.generators: List[VectorField] = gens
        self.seed = seed
        self.samples = samples
        self.certificate = generic_rank(gens, space, seed=seed, samples=samples,
                                        base_point=base_point, symbolic=symbolic)
        self._echelons: Optional[List[PointEchelon]] = None

    @property
    def rank(self) -> int:
        return self.certificate.rank

    def generic_rank(self) -> int:
        return self.certificate.rank

    def _top_echelons(self) -> List[PointEchelon]:
        if self._echelons is None:
            best = self.certificate.sampled_rank
            self._echelons = []
            for pt, rk in zip(self.certificate.points, self.certificate.point_ranks):
                if rk == best:
                    ech = PointEchelon(pt)
                    for g in self.generators:
                        ech.insert(g.eval_row(pt))
                    self._echelons.append(ech)
        return self._echelons

    def contains(self, v: VectorField) -> bool:
        """True iff adjoining v does not raise the generic rank."""
        if v.is_zero():
            return True
        if v.space != self.space:
            raise SpaceMismatch("field on the wrong jet space")
        if not self.generators:
            return False
        probed = False
        for ech in self._top_echelons():
            try:
                row = v.eval_row(ech.point)
            except DenominatorVanishes:
                continue
            probed = True
            if ech.residual(row) is not None:
                return False
        if not probed:
            # every cached point hit a pole of v: certify from fresh points
            aug = generic_rank(self.generators + [v], self.space,
                               seed=self.seed + 1, samples=self.samples,
                               symbolic=False)
            return aug.rank <= self.rank
        return True

    def contains_certified(self, v: VectorField) -> bool:
        """Membership with the symbolic elimination as the authority when it
        ran for this distribution; falls back to the sampled test."""
        if v.is_zero():
            return True
        if self.certificate.symbolic_rank is None:
            return self.contains(v)
        aug, _ = symbolic_rank(self.generators + [v], self.space)
        return aug <= self.certificate.symbolic_rank

    def is_involutive(self, certified: bool = False):
        """(True, None) or (False, (g_a, g_b, [g_a, g_b])) with the first
        failing pair in deterministic generator order."""
        member = self.contains_certified if certified else self.contains
        gens = self.generators
        for a in range(len(gens)):
            for b in range(a + 1, len(gens)):
                br = lie_bracket(gens[a], gens[b])
                if not member(br):
                    return False, (gens[a], gens[b], br)
        return True, None

    def involutive_closure(self, max_iter: Optional[int] = None) -> "Distribution":
        budget = max_iter if max_iter is not None \
            else (self.space.dim - self.rank) + 2
        current = self
        for _ in range(budget + 1):
            new_fields: List[VectorField] = []
            gens = current.generators
            probe = current
            for a in range(len(gens)):
                for b in range(a + 1, len(gens)):
                    br = lie_bracket(gens[a], gens[b])
                    if not probe.contains(br):
                        probe = Distribution(self.space, probe.generators + [br],
                                             seed=self.seed, samples=self.samples)
                        new_fields.append(br)
            if not new_fields:
                return current
            current = probe
            if current.rank >= self.space.dim:
                return current
        raise IterationBudgetExceeded("involutive closure did not stabilize")
