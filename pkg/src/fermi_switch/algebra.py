"""Exact symbolic algebra of Pauli matrices on two atoms and boson modes.

An :class:`OperatorExpr` maps words (tuples of :class:`OperatorSymbol`) to
:class:`Coeff` values.  Coefficients are polynomials in opaque commuting
parameters (``Omega``, ``dA``, ``g3``, ...) with Gaussian-rational
coefficients, so that cancellations are exact.

Canonical words hold at most one Pauli matrix per atom (A before B, each
reduced to x, y or z), followed by boson operators grouped by ascending mode
and normal ordered inside each mode (creation before annihilation).

Text grammar used by :func:`format_expr` / :func:`parse_expr`::

    expr    := term (('+' | '-') term)*  |  '0'
    term    := ['-'] factor ('*' factor)*
    factor  := INT ['/' INT] | 'i' | PARAM ['^' INT] | OPERATOR
    OPERATOR:= ('sx'|'sy'|'sz'|'sp'|'sm') '[' ('A'|'B') ']'
             | ('a'|'ad') '[' INT ']'  |  'id'
    PARAM   := identifier, e.g. Omega, dA, g0, w1, eA2, eA2_c

Parameters whose name ends in ``_c`` are complex conjugates of the parameter
without the suffix, and ``p * p_c`` reduces to 1 (used for the phases
``exp(i k_j x_A)``).  All other parameters are real.
"""

from __future__ import annotations

import cmath
import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Iterable, Mapping, NamedTuple, Sequence

from gmpy2 import mpq

from .errors import ArgumentError, ResourceLimitError

DEFAULT_MAX_TERMS = 10**6
DEFAULT_MAX_DEPTH = 8

ATOMS = ("A", "B")
PAULI_KINDS = ("pauli_x", "pauli_y", "pauli_z", "pauli_plus", "pauli_minus")
BOSON_KINDS = ("boson_annihilate", "boson_create")
KINDS = PAULI_KINDS + BOSON_KINDS + ("identity",)


class OperatorSymbol(NamedTuple):
    kind: str
    site: str | int | None = None

    def validate(self) -> "OperatorSymbol":
        if self.kind in PAULI_KINDS:
            if self.site not in ATOMS:
                raise ArgumentError(f"{self.kind} needs an atom label A or B, got {self.site!r}")
        elif self.kind in BOSON_KINDS:
            if isinstance(self.site, bool) or not isinstance(self.site, int) or self.site < 0:
                raise ArgumentError(f"{self.kind} needs a mode index >= 0, got {self.site!r}")
        elif self.kind == "identity":
            if self.site is not None:
                raise ArgumentError("identity carries no site")
        else:
            raise ArgumentError(f"unknown symbol kind {self.kind!r}")
        return self


def sx(atom): return OperatorSymbol("pauli_x", atom).validate()
def sy(atom): return OperatorSymbol("pauli_y", atom).validate()
def sz(atom): return OperatorSymbol("pauli_z", atom).validate()
def sp(atom): return OperatorSymbol("pauli_plus", atom).validate()
def sm(atom): return OperatorSymbol("pauli_minus", atom).validate()
def a(mode): return OperatorSymbol("boson_annihilate", mode).validate()
def ad(mode): return OperatorSymbol("boson_create", mode).validate()


IDENTITY = OperatorSymbol("identity")

# ---------------------------------------------------------------- scalars

# Gaussian rationals are (re, im) pairs of exact rationals (gmpy2 mpq).
_ZERO = (mpq(0), mpq(0))
_ONE = (mpq(1), mpq(0))
_MINUS_ONE = (mpq(-1), mpq(0))
_I = (mpq(0), mpq(1))


def _gmul(x, y):
    if y == _ONE:
        return x
    if x == _ONE:
        return y
    if not x[1] and not y[1]:
        return (x[0] * y[0], x[1])
    return (x[0] * y[0] - x[1] * y[1], x[0] * y[1] + x[1] * y[0])


def _gadd(x, y):
    return (x[0] + y[0], x[1] + y[1])


def _q(value):
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    return mpq(value)


def _as_gaussian(value) -> tuple:
    if isinstance(value, tuple):
        return (_q(value[0]), _q(value[1]))
    if isinstance(value, complex):
        return (_q(value.real), _q(value.imag))
    return (_q(value), mpq(0))


def _conj_name(name: str) -> str:
    return name[:-2] if name.endswith("_c") else name + "_c"


# Unimodular phases: a name times its ``_c`` partner reduces to 1.
_PHASE_PATTERN = re.compile(r"^e[AB]\d+(_c)?$")


@lru_cache(maxsize=None)
def _is_unimodular(name: str) -> bool:
    return bool(_PHASE_PATTERN.match(name))


@lru_cache(maxsize=1 << 20)
def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    if not m1:
        return m2
    if not m2:
        return m1
    powers = dict(m1)
    for name, p in m2:
        powers[name] = powers.get(name, 0) + p
    for name in list(powers):
        if name.endswith("_c") and _is_unimodular(name):
            base = name[:-2]
            common = min(powers[name], powers.get(base, 0))
            if common:
                powers[name] -= common
                powers[base] -= common
    return tuple(sorted((n, p) for n, p in powers.items() if p))


def _mono_conj(m: tuple) -> tuple:
    return tuple(sorted(((_conj_name(n) if _is_unimodular(n) else n), p) for n, p in m))


class Coeff:
    """Polynomial in commuting parameters with Gaussian-rational coefficients."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[tuple, tuple] | None = None):
        self.terms = {m: c for m, c in (terms or {}).items() if c != _ZERO}
        self._hash = None

    @classmethod
    def const(cls, value) -> "Coeff":
        return cls({(): _as_gaussian(value)})

    @classmethod
    def param(cls, name: str, power: int = 1, value=1) -> "Coeff":
        return cls({_mono_mul((), ((name, power),)): _as_gaussian(value)})

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "Coeff") -> "Coeff":
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = _gadd(out.get(m, _ZERO), c)
        return Coeff(out)

    def __neg__(self) -> "Coeff":
        return Coeff({m: (-c[0], -c[1]) for m, c in self.terms.items()})

    def __sub__(self, other: "Coeff") -> "Coeff":
        return self + (-other)

    def __mul__(self, other: "Coeff") -> "Coeff":
        out: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                out[m] = _gadd(out.get(m, _ZERO), _gmul(c1, c2))
        return Coeff(out)

    def scale(self, g) -> "Coeff":
        g = _as_gaussian(g)
        if g == _ONE:
            return self
        return Coeff({m: _gmul(c, g) for m, c in self.terms.items()})

    def conj(self) -> "Coeff":
        return Coeff({_mono_conj(m): (c[0], -c[1]) for m, c in self.terms.items()})

    def parameters(self) -> set[str]:
        return {n for m in self.terms for n, _ in m}

    def evaluate(self, values: Mapping[str, complex]) -> complex:
        total = 0j
        for m, (re_, im) in self.terms.items():
            term = complex(float(re_), float(im))
            for name, p in m:
                if name in values:
                    v = values[name]
                elif name.endswith("_c") and name[:-2] in values:
                    v = complex(values[name[:-2]]).conjugate()
                else:
                    raise ArgumentError(f"no value for parameter {name!r}")
                term *= v ** p
            total += term
        return total

    def __eq__(self, other):
        if isinstance(other, Coeff):
            return self.terms == other.terms
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __repr__(self):
        return f"Coeff({_format_coeff_terms(self) or '0'})"


# ------------------------------------------------------------ words

_PAULI_LETTER = {"pauli_x": "X", "pauli_y": "Y", "pauli_z": "Z"}
_LETTER_KIND = {v: k for k, v in _PAULI_LETTER.items()}

# (left, right) -> (phase, product) for single-site Pauli matrices
_PAULI_MUL = {
    ("I", "I"): (_ONE, "I"), ("I", "X"): (_ONE, "X"), ("I", "Y"): (_ONE, "Y"),
    ("I", "Z"): (_ONE, "Z"), ("X", "I"): (_ONE, "X"), ("Y", "I"): (_ONE, "Y"),
    ("Z", "I"): (_ONE, "Z"),
    ("X", "X"): (_ONE, "I"), ("Y", "Y"): (_ONE, "I"), ("Z", "Z"): (_ONE, "I"),
    ("X", "Y"): (_I, "Z"), ("Y", "Z"): (_I, "X"), ("Z", "X"): (_I, "Y"),
    ("Y", "X"): ((0, -1), "Z"), ("Z", "Y"): ((0, -1), "X"), ("X", "Z"): ((0, -1), "Y"),
}
_PAULI_MUL = {k: (_as_gaussian(v[0]), v[1]) for k, v in _PAULI_MUL.items()}


class _Compact(NamedTuple):
    pa: str
    pb: str
    bosons: tuple  # ((mode, n_create, n_annihilate), ...) ascending mode


@lru_cache(maxsize=1 << 20)
def _to_compact(word: tuple) -> _Compact:
    """Compact form of a canonical word."""
    pa = pb = "I"
    bos: dict[int, list[int]] = {}
    for s in word:
        if s.kind in _PAULI_LETTER:
            if s.site == "A":
                pa = _PAULI_LETTER[s.kind]
            else:
                pb = _PAULI_LETTER[s.kind]
        elif s.kind == "boson_create":
            bos.setdefault(s.site, [0, 0])[0] += 1
        elif s.kind == "boson_annihilate":
            bos.setdefault(s.site, [0, 0])[1] += 1
    return _Compact(pa, pb, tuple((j, c, n) for j, (c, n) in sorted(bos.items())))


def _from_compact(c: _Compact) -> tuple:
    out = []
    if c.pa != "I":
        out.append(OperatorSymbol(_LETTER_KIND[c.pa], "A"))
    if c.pb != "I":
        out.append(OperatorSymbol(_LETTER_KIND[c.pb], "B"))
    for j, nc, na in c.bosons:
        out.extend([OperatorSymbol("boson_create", j)] * nc)
        out.extend([OperatorSymbol("boson_annihilate", j)] * na)
    return tuple(out)


@lru_cache(maxsize=None)
def _boson_mode_product(p, q, r, s):
    """(ad^p a^q)(ad^r a^s) in normal order: list of (integer factor, create, annihilate)."""
    return [(math.comb(q, k) * math.comb(r, k) * math.factorial(k), p + r - k, q + s - k)
            for k in range(min(q, r) + 1)]


@lru_cache(maxsize=1 << 18)
def _word_product(w1: tuple, w2: tuple) -> tuple:
    """Product of two canonical words as ((gaussian, canonical word), ...)."""
    c1, c2 = _to_compact(w1), _to_compact(w2)
    ph_a, pa = _PAULI_MUL[(c1.pa, c2.pa)]
    ph_b, pb = _PAULI_MUL[(c1.pb, c2.pb)]
    phase = _gmul(ph_a, ph_b)

    left = {j: (nc, na) for j, nc, na in c1.bosons}
    right = {j: (nc, na) for j, nc, na in c2.bosons}
    per_mode = []
    for j in sorted(set(left) | set(right)):
        p, q = left.get(j, (0, 0))
        r, s = right.get(j, (0, 0))
        per_mode.append([(f, j, nc, na) for f, nc, na in _boson_mode_product(p, q, r, s)])

    out = []
    for combo in itertools.product(*per_mode):
        factor = 1
        bosons = []
        for f, j, nc, na in combo:
            factor *= f
            if nc or na:
                bosons.append((j, nc, na))
        g = _gmul(phase, (mpq(factor), mpq(0)))
        out.append((g, _from_compact(_Compact(pa, pb, tuple(bosons)))))
    return tuple(out)


def _words_commute(c1: _Compact, c2: _Compact) -> bool:
    """Cheap sufficient test that two canonical words commute."""
    flips = (c1.pa != "I" and c2.pa != "I" and c1.pa != c2.pa) + \
        (c1.pb != "I" and c2.pb != "I" and c1.pb != c2.pb)
    if flips % 2:
        return False
    right = {j: (nc, na) for j, nc, na in c2.bosons}
    for j, nc, na in c1.bosons:
        if j in right:
            rc, ra = right[j]
            if (nc and ra) or (na and rc):
                return False
    return True


@lru_cache(maxsize=1 << 20)
def _word_commutator(w1: tuple, w2: tuple) -> tuple:
    """``w1 w2 - w2 w1`` as ((gaussian, canonical word), ...), empty if they commute."""
    if _words_commute(_to_compact(w1), _to_compact(w2)):
        return ()
    acc: dict[tuple, tuple] = {}
    for g, w in _word_product(w1, w2):
        acc[w] = _gadd(acc.get(w, _ZERO), g)
    for g, w in _word_product(w2, w1):
        acc[w] = _gadd(acc.get(w, _ZERO), (-g[0], -g[1]))
    return tuple((g, w) for w, g in acc.items() if g != _ZERO)


def _symbol_expansion(sym: OperatorSymbol) -> list[tuple]:
    """A single symbol as ((gaussian, canonical word), ...)."""
    half = mpq(1, 2)
    if sym.kind == "identity":
        return [(_ONE, ())]
    if sym.kind in _PAULI_LETTER or sym.kind in BOSON_KINDS:
        return [(_ONE, (sym,))]
    x = (OperatorSymbol("pauli_x", sym.site),)
    y = (OperatorSymbol("pauli_y", sym.site),)
    sign = 1 if sym.kind == "pauli_plus" else -1
    return [((half, mpq(0)), x), ((mpq(0), sign * half), y)]


def is_canonical(word: Sequence[OperatorSymbol]) -> bool:
    word = tuple(word)
    if not all(s.kind in _PAULI_LETTER or s.kind in BOSON_KINDS for s in word):
        return False
    paulis = [s.site for s in word if s.kind in _PAULI_LETTER]
    return len(paulis) == len(set(paulis)) and _from_compact(_to_compact(word)) == word


# ------------------------------------------------------------ expressions


class OperatorExpr:
    """Immutable linear combination of symbol words."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple, Coeff] | None = None):
        self.terms = {tuple(w): c for w, c in (terms or {}).items() if not c.is_zero()}

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls) -> "OperatorExpr":
        return cls()

    @classmethod
    def scalar(cls, coeff: Coeff | int | complex | Fraction) -> "OperatorExpr":
        if not isinstance(coeff, Coeff):
            coeff = Coeff.const(coeff)
        return cls({(): coeff})

    @classmethod
    def product(cls, *symbols: OperatorSymbol, coeff: Coeff | int | complex = 1) -> "OperatorExpr":
        """Canonical form of ``coeff * symbols[0] * symbols[1] * ...``."""
        if not isinstance(coeff, Coeff):
            coeff = Coeff.const(coeff)
        return canonicalize(cls({tuple(symbols): coeff}))

    @classmethod
    def raw(cls, terms: Iterable[tuple[Coeff | int | complex, Sequence[OperatorSymbol]]]
            ) -> "OperatorExpr":
        """Uncanonicalized sum of ``coeff * word`` terms (words kept as given)."""
        out: dict[tuple, Coeff] = {}
        for c, word in terms:
            c = c if isinstance(c, Coeff) else Coeff.const(c)
            word = tuple(s.validate() for s in word)
            out[word] = out.get(word, Coeff()) + c
        return cls(out)

    # arithmetic ----------------------------------------------------------
    def __add__(self, other: "OperatorExpr") -> "OperatorExpr":
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out[w] + c if w in out else c
        return OperatorExpr(out)

    def __neg__(self) -> "OperatorExpr":
        return OperatorExpr({w: -c for w, c in self.terms.items()})

    def __sub__(self, other: "OperatorExpr") -> "OperatorExpr":
        return self + (-other)

    def scale(self, coeff: Coeff | int | complex) -> "OperatorExpr":
        if not isinstance(coeff, Coeff):
            coeff = Coeff.const(coeff)
        return OperatorExpr({w: c * coeff for w, c in self.terms.items()})

    def __mul__(self, other):
        if not isinstance(other, OperatorExpr):
            return self.scale(other)
        return multiply(self, other)

    __rmul__ = scale

    def __eq__(self, other):
        if isinstance(other, OperatorExpr):
            return self.terms == other.terms
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return f"OperatorExpr({format_expr(self)})"

    def __str__(self):
        return format_expr(self)

    # inspection ------------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def atoms(self) -> set[str]:
        return {s.site for w in self.terms for s in w if s.kind in PAULI_KINDS}

    def modes(self) -> set[int]:
        return {s.site for w in self.terms for s in w if s.kind in BOSON_KINDS}

    def parameters(self) -> set[str]:
        return set().union(*(c.parameters() for c in self.terms.values())) if self.terms else set()

    def adjoint(self) -> "OperatorExpr":
        return adjoint(self)


def _accumulate(out: dict, word: tuple, coeff: Coeff) -> None:
    if word in out:
        out[word] = out[word] + coeff
    else:
        out[word] = coeff


def canonicalize(expr: OperatorExpr, max_terms: int = DEFAULT_MAX_TERMS) -> OperatorExpr:
    """Rewrite every word into canonical order, merging equal words."""
    out: dict[tuple, Coeff] = {}
    for word, coeff in expr.terms.items():
        partial: list[tuple] = [(_ONE, ())]
        for sym in word:
            nxt = []
            for g, w in partial:
                for g2, w2 in _symbol_expansion(sym):
                    for g3, w3 in _word_product(w, w2):
                        nxt.append((_gmul(_gmul(g, g2), g3), w3))
            partial = nxt
        for g, w in partial:
            _accumulate(out, w, coeff.scale(g))
        if len(out) > max_terms:
            raise ResourceLimitError(f"expression exceeds {max_terms} terms")
    return OperatorExpr(out)


def multiply(lhs: OperatorExpr, rhs: OperatorExpr,
             max_terms: int = DEFAULT_MAX_TERMS) -> OperatorExpr:
    """Canonical product of two canonical expressions."""
    out: dict[tuple, Coeff] = {}
    for w1, c1 in lhs.terms.items():
        for w2, c2 in rhs.terms.items():
            c = c1 * c2
            for g, w in _word_product(w1, w2):
                _accumulate(out, w, c.scale(g))
        if len(out) > max_terms:
            raise ResourceLimitError(f"product exceeds {max_terms} terms")
    return OperatorExpr(out)


def commutator(lhs: OperatorExpr, rhs: OperatorExpr,
               max_terms: int = DEFAULT_MAX_TERMS) -> OperatorExpr:
    """Canonical ``lhs rhs - rhs lhs``."""
    out: dict[tuple, Coeff] = {}
    for w1, c1 in lhs.terms.items():
        for w2, c2 in rhs.terms.items():
            parts = _word_commutator(w1, w2)
            if not parts:
                continue
            c = c1 * c2
            for g, w in parts:
                _accumulate(out, w, c.scale(g))
        if len(out) > max_terms:
            raise ResourceLimitError(f"commutator exceeds {max_terms} terms")
    return OperatorExpr(out)


_ADJOINT_KIND = {
    "pauli_x": "pauli_x", "pauli_y": "pauli_y", "pauli_z": "pauli_z",
    "pauli_plus": "pauli_minus", "pauli_minus": "pauli_plus",
    "boson_create": "boson_annihilate", "boson_annihilate": "boson_create",
    "identity": "identity",
}


def adjoint(expr: OperatorExpr) -> OperatorExpr:
    raw = OperatorExpr({
        tuple(OperatorSymbol(_ADJOINT_KIND[s.kind], s.site) for s in reversed(w)): c.conj()
        for w, c in expr.terms.items()
    })
    return canonicalize(raw)


def is_self_adjoint(expr: OperatorExpr) -> bool:
    return adjoint(expr) == expr


def is_anti_self_adjoint(expr: OperatorExpr) -> bool:
    return adjoint(expr) == -expr


# ------------------------------------------------------------ Hamiltonian


def omega_param() -> Coeff:
    return Coeff.param("Omega")


def field_at(atom: str, mode_count: int) -> OperatorExpr:
    """``E(x_atom) = sum_j (i g_j e_j a_j - i g_j e_j^* ad_j)`` with ``e_j = exp(i k_j x)``."""
    out = OperatorExpr()
    for j in range(mode_count):
        g = Coeff.param(f"g{j}")
        phase = Coeff.param(f"e{atom}{j}")
        out = out + OperatorExpr.product(a(j), coeff=(g * phase).scale(_I))
        out = out + OperatorExpr.product(ad(j), coeff=(g * phase.conj()).scale((0, -1)))
    return out


@dataclass(frozen=True)
class HamiltonianSymbolic:
    """Symbolic ``H = Omega/2 (sz_A + sz_B) + sum_j w_j ad_j a_j + sum_i d_i sx_i E(x_i)``.

    Parameters are the symbols ``Omega``, ``dA``, ``dB``, ``g<j>``, ``w<j>`` and
    the phases ``eA<j>``, ``eB<j>`` (with conjugates ``eA<j>_c``, ``eB<j>_c``).
    """

    mode_count: int

    def __post_init__(self):
        if self.mode_count < 1:
            raise ArgumentError("mode_count must be positive")

    def free(self) -> OperatorExpr:
        half_omega = omega_param().scale((Fraction(1, 2), 0))
        out = OperatorExpr.product(sz("A"), coeff=half_omega) + \
            OperatorExpr.product(sz("B"), coeff=half_omega)
        for j in range(self.mode_count):
            out = out + OperatorExpr.product(ad(j), a(j), coeff=Coeff.param(f"w{j}"))
        return out

    def interaction(self) -> OperatorExpr:
        out = OperatorExpr()
        for atom in ATOMS:
            out = out + multiply(
                OperatorExpr.product(sx(atom), coeff=Coeff.param(f"d{atom}")),
                field_at(atom, self.mode_count))
        return out

    def expr(self) -> OperatorExpr:
        return self.free() + self.interaction()

    def parameter_values(self, omega: float, dipoles: tuple[float, float],
                         couplings, frequencies, momenta, positions) -> dict[str, complex]:
        """Numeric values for every parameter, e.g. to compare against a matrix model."""
        values: dict[str, complex] = {"Omega": omega, "dA": dipoles[0], "dB": dipoles[1]}
        for j in range(self.mode_count):
            values[f"g{j}"] = couplings[j]
            values[f"w{j}"] = frequencies[j]
            for atom, x in zip(ATOMS, positions):
                values[f"e{atom}{j}"] = cmath.exp(1j * momenta[j] * x)
        return values


def nested_commutators(seed: OperatorExpr, hamiltonian: HamiltonianSymbolic | OperatorExpr,
                       depth: int, max_depth: int = DEFAULT_MAX_DEPTH,
                       max_terms: int = DEFAULT_MAX_TERMS) -> list[OperatorExpr]:
    """``[seed, [H, seed], [H, [H, seed]], ...]`` up to ``depth`` nestings."""
    if depth < 0:
        raise ArgumentError(f"depth must be >= 0, got {depth}")
    if depth > max_depth:
        raise ResourceLimitError(f"depth {depth} exceeds configured maximum {max_depth}")
    H = hamiltonian.expr() if isinstance(hamiltonian, HamiltonianSymbolic) else hamiltonian
    out = [seed]
    for _ in range(depth):
        out.append(commutator(H, out[-1], max_terms=max_terms))
    return out


def nested_commutator_support(seed: OperatorExpr, hamiltonian: HamiltonianSymbolic | OperatorExpr,
                              depth: int, max_depth: int = DEFAULT_MAX_DEPTH,
                              max_terms: int = DEFAULT_MAX_TERMS,
                              limit: str = "continuum") -> set[str]:
    """Atoms that ``[H, [H, ... [H, seed]]]`` (``depth`` nestings) depends on.

    ``limit="modes"`` reports the atom labels of the literal finite-mode
    expression.  ``limit="continuum"`` (default) first applies
    :func:`continuum_dependence`: with finitely many labelled modes the
    B-labelled terms carry mode sums such as ``sum_j g_j^2 w_j cos(k_j r)``,
    which are nonzero on any finite grid but become derivatives of a delta
    function at the atom separation once the sum turns into an integral.
    """
    expr = nested_commutators(seed, hamiltonian, depth, max_depth, max_terms)[-1]
    if limit == "modes":
        return expr.atoms()
    if limit == "continuum":
        return continuum_dependence(expr)[0]
    raise ArgumentError(f"limit must be 'modes' or 'continuum', got {limit!r}")


def parameter_atoms(params: Iterable[str]) -> set[str]:
    """Atoms that coefficient parameters refer to (``dB``, ``eB3``, ... -> ``B``)."""
    out = set()
    for name in params:
        m = re.match(r"^(?:d|e)([AB])\d*(?:_c)?$", name)
        if m:
            out.add(m.group(1))
    return out


# ------------------------------------------------------------ continuum limit

_MODE_PARAM = re.compile(r"^(g|w)(\d+)$")
_PHASE_PARAM = re.compile(r"^e([AB])(\d+)(_c)?$")


class ContinuumTerm(NamedTuple):
    """A term of the continuum-reduced expression.

    ``kernels`` lists one ``(power, alpha, beta)`` triple per summed mode, the
    factor ``int dk |k|^power exp(i k (alpha x_A + beta x_B))``.  Modes that
    still carry operators are in ``free_modes`` as ``(j, w_power, alpha, beta)``.
    """

    word: tuple
    free_modes: tuple
    scalars: tuple
    kernels: tuple
    coeff: tuple


def _split_monomial(word: tuple, mono: tuple):
    """Separate mode-labelled factors of a monomial; None if not of field form."""
    ops: dict[int, int] = {}
    for s in word:
        if s.kind in BOSON_KINDS:
            ops[s.site] = ops.get(s.site, 0) + 1
    per_mode: dict[int, list[int]] = {}  # g power, w power, alpha, beta
    scalars = []
    for name, p in mono:
        m = _MODE_PARAM.match(name)
        if m:
            slot = per_mode.setdefault(int(m.group(2)), [0, 0, 0, 0])
            slot[0 if m.group(1) == "g" else 1] += p
            continue
        m = _PHASE_PARAM.match(name)
        if m:
            slot = per_mode.setdefault(int(m.group(2)), [0, 0, 0, 0])
            slot[2 if m.group(1) == "A" else 3] += -p if m.group(3) else p
            continue
        scalars.append((name, p))
    return ops, per_mode, tuple(scalars)


def continuum_terms(expr: OperatorExpr, coupling_power: int = 1) -> list[ContinuumTerm]:
    """Replace sums over contracted (dummy) modes by continuum integrals.

    With ``g_j^2 = N w_j^p dk`` (``p = coupling_power``, 1 for the field used
    throughout) a mode label that appears in a coefficient but in no operator
    of the word is summed over; ``sum_j g_j^2 F(k_j) -> N int dk w(k)^p F(k)``.  Label coincidences (a contracted label equal to a free one,
    or two contractions on one label) carry extra powers of ``dk`` and vanish
    in the limit.  Remaining free labels stay explicit.  Kernels with phase
    ``(alpha, beta)`` and ``(-alpha, -beta)`` are merged, which is exact
    because ``int |k|^m e^{ikr} dk`` is even in ``r``.
    """
    groups: dict[tuple, tuple] = {}
    for word, coeff in expr.terms.items():
        for mono, c in coeff.terms.items():
            ops, per_mode, scalars = _split_monomial(word, mono)
            fixed = []
            kernels = []
            for j in sorted(per_mode):
                g, w, alpha, beta = per_mode[j]
                n_ops = ops.get(j, 0)
                if n_ops:
                    if g != n_ops:
                        break  # coincident label: O(dk)
                    fixed.append((j, w, alpha, beta))
                elif g == 2:
                    if (alpha, beta) < (0, 0) or (alpha == 0 and beta < 0):
                        alpha, beta = -alpha, -beta
                    kernels.append((w + coupling_power, alpha, beta))
                elif g > 2:
                    break  # repeated contraction: O(dk)
                else:
                    fixed.append((j, w, alpha, beta))
            else:
                key = (word, tuple(fixed), tuple(sorted(kernels)), scalars)
                prev = groups.get(key, _ZERO)
                groups[key] = _gadd(prev, c)
    return [ContinuumTerm(word, fixed, scalars, kernels, c)
            for (word, fixed, kernels, scalars), c in groups.items() if c != _ZERO]


def _kernel_is_local(power: int, alpha: int, beta: int) -> bool:
    """True if ``int dk |k|^power e^{ik(alpha x_A + beta x_B)}`` vanishes for x_A != x_B."""
    separated = (alpha, beta) not in ((0, 0),) and alpha + beta == 0
    return separated and power % 2 == 0


def continuum_dependence(expr: OperatorExpr, coupling_power: int = 1
                         ) -> tuple[set[str], list[ContinuumTerm]]:
    """Atoms an expression depends on after the continuum reduction.

    A term survives unless one of its kernels couples the two atoms through
    a polynomial in ``k`` (a derivative of the delta function at the atom
    separation).  Dependence counts Pauli symbols as well as coefficient
    parameters ``dB``, ``eB<j>`` and kernels that involve ``x_B``.
    Returns ``(atoms, surviving_terms)``.
    """
    survivors = [t for t in continuum_terms(expr, coupling_power)
                 if not any(_kernel_is_local(*k) for k in t.kernels)]
    atoms: set[str] = set()
    for t in survivors:
        atoms |= {s.site for s in t.word if s.kind in PAULI_KINDS}
        atoms |= parameter_atoms(name for name, _ in t.scalars)
        for *_, alpha, beta in t.free_modes + t.kernels:
            if alpha:
                atoms.add("A")
            if beta:
                atoms.add("B")
    return atoms, survivors


# ------------------------------------------------------------ text format

_SYMBOL_TEXT = {
    "pauli_x": "sx", "pauli_y": "sy", "pauli_z": "sz", "pauli_plus": "sp", "pauli_minus": "sm",
    "boson_annihilate": "a", "boson_create": "ad",
}
_TEXT_SYMBOL = {v: k for k, v in _SYMBOL_TEXT.items()}


def format_symbol(s: OperatorSymbol) -> str:
    if s.kind == "identity":
        return "id"
    return f"{_SYMBOL_TEXT[s.kind]}[{s.site}]"


def _format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _format_monomial(m: tuple) -> list[str]:
    return [n if p == 1 else f"{n}^{p}" for n, p in m]


def _scalar_pieces(c: tuple) -> list[tuple[int, Fraction, bool]]:
    """Split a Gaussian rational into (sign, |value|, imaginary) pieces."""
    out = []
    for value, imag in ((c[0], False), (c[1], True)):
        if value:
            out.append((1 if value > 0 else -1, abs(value), imag))
    return out


def _word_key(word: tuple):
    return tuple((KINDS.index(s.kind), str(s.site)) for s in word)


def _format_terms(items: Iterable[tuple[tuple, tuple, tuple]]) -> str:
    parts = []
    for word, mono, c in items:
        for sign, mag, imag in _scalar_pieces(c):
            factors = []
            if mag != 1:
                factors.append(_format_rational(mag))
            if imag:
                factors.append("i")
            factors.extend(_format_monomial(mono))
            factors.extend(format_symbol(s) for s in word)
            body = "*".join(factors) or "1"
            if not parts:
                parts.append(("-" if sign < 0 else "") + body)
            else:
                parts.append(("- " if sign < 0 else "+ ") + body)
    return " ".join(parts)


def _format_coeff_terms(coeff: Coeff) -> str:
    return _format_terms(((), m, coeff.terms[m]) for m in sorted(coeff.terms))


def format_expr(expr: OperatorExpr) -> str:
    items = []
    for word in sorted(expr.terms, key=_word_key):
        coeff = expr.terms[word]
        for mono in sorted(coeff.terms):
            items.append((word, mono, coeff.terms[mono]))
    return _format_terms(items) or "0"


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<op>sx|sy|sz|sp|sm|ad|a)\[(?P<site>[A-Za-z0-9]+)\]"
                    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[-+*/^]))")


class ParseError(ArgumentError):
    pass


def _tokenize(text: str) -> list[tuple[str, str, str | None]]:
    pos = 0
    tokens = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        pos = m.end()
        if m.group("num"):
            tokens.append(("num", m.group("num"), None))
        elif m.group("op"):
            tokens.append(("op", m.group("op"), m.group("site")))
        elif m.group("name"):
            tokens.append(("name", m.group("name"), None))
        else:
            tokens.append(("punct", m.group("punct"), None))
    return tokens


def parse_expr(text: str) -> OperatorExpr:
    """Parse the text grammar documented in the module docstring; result is canonical."""
    tokens = _tokenize(text)
    if [t[1] for t in tokens] == ["0"]:
        return OperatorExpr()
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    raw_terms: list[tuple[Coeff, tuple]] = []
    sign = 1
    expecting_term = True
    while pos < len(tokens) or expecting_term:
        tok = peek()
        if tok is None:
            raise ParseError("unexpected end of expression")
        if tok == ("punct", "-", None) or tok == ("punct", "+", None):
            if tok[1] == "-":
                sign = -sign
            pos += 1
            tok = peek()
            if tok is None:
                raise ParseError("dangling sign")
        coeff = Coeff.const(sign)
        word: list[OperatorSymbol] = []
        while True:
            tok = peek()
            if tok is None:
                raise ParseError("expected factor")
            kind, val, site = tok
            pos += 1
            if kind == "num":
                num = Fraction(int(val))
                if peek() == ("punct", "/", None):
                    pos += 1
                    den = peek()
                    if den is None or den[0] != "num":
                        raise ParseError("expected denominator")
                    pos += 1
                    num = num / int(den[1])
                coeff = coeff.scale((num, Fraction(0)))
            elif kind == "op":
                sym_kind = _TEXT_SYMBOL[val]
                if sym_kind in BOSON_KINDS and not site.isdigit():
                    raise ParseError(f"mode index must be an integer: {val}[{site}]")
                site_val: str | int = int(site) if sym_kind in BOSON_KINDS else site
                try:
                    word.append(OperatorSymbol(sym_kind, site_val).validate())
                except ArgumentError as exc:
                    raise ParseError(str(exc)) from None
            elif kind == "name":
                if val == "i":
                    coeff = coeff.scale(_I)
                elif val == "id":
                    pass
                else:
                    power = 1
                    if peek() == ("punct", "^", None):
                        pos += 1
                        exp_tok = peek()
                        if exp_tok is None or exp_tok[0] != "num":
                            raise ParseError("expected integer exponent")
                        pos += 1
                        power = int(exp_tok[1])
                    coeff = coeff * Coeff.param(val, power)
            else:
                raise ParseError(f"unexpected {val!r}")
            nxt = peek()
            if nxt == ("punct", "*", None):
                pos += 1
                continue
            break
        raw_terms.append((coeff, tuple(word)))
        sign = 1
        expecting_term = False
        nxt = peek()
        if nxt is None:
            break
        if nxt[0] != "punct" or nxt[1] not in "+-":
            raise ParseError(f"expected '+' or '-', got {nxt[1]!r}")
        expecting_term = True
    return reduce(lambda acc, t: acc + canonicalize(OperatorExpr({t[1]: t[0]})),
                  raw_terms, OperatorExpr())
