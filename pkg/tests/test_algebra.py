from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fermi_switch import algebra as alg
from fermi_switch.algebra import (Coeff, HamiltonianSymbolic, OperatorExpr, OperatorSymbol,
                                  ParseError, a, ad, adjoint, canonicalize, commutator,
                                  continuum_dependence, field_at, format_expr, is_canonical,
                                  is_anti_self_adjoint, is_self_adjoint, multiply,
                                  nested_commutator_support, nested_commutators, parse_expr,
                                  sm, sp, sx, sy, sz)
from fermi_switch.errors import ArgumentError, ResourceLimitError
from fermi_switch.model import QubitParams, assemble_hamiltonian, build_basis, build_grid

GOLDEN = Path(__file__).parent / "golden"
P = OperatorExpr.product
I = Coeff.const(1j)


def param(name, power=1):
    return Coeff.param(name, power)


# ------------------------------------------------------------ canonicalize

def test_ccr():
    expr = OperatorExpr.raw([(1, [ad(0), a(0)]), (-1, [a(0), ad(0)])])
    assert canonicalize(expr) == OperatorExpr.scalar(-1)


def test_pauli_product():
    assert canonicalize(OperatorExpr.raw([(1, [sx("A"), sy("A")])])) == P(sz("A"), coeff=1j)


def test_distinct_atoms_untouched():
    expr = OperatorExpr.raw([(1, [sx("A"), sx("B")])])
    assert canonicalize(expr) == expr


def test_b_before_a_is_reordered():
    assert P(sx("B"), sy("A")) == OperatorExpr.raw([(1, [sy("A"), sx("B")])])


@pytest.mark.parametrize("lhs,rhs,expected", [
    ([sy("A"), sz("A")], None, P(sx("A"), coeff=1j)),
    ([sz("A"), sx("A")], None, P(sy("A"), coeff=1j)),
    ([sy("B"), sx("B")], None, P(sz("B"), coeff=-1j)),
    ([sx("A"), sx("A")], None, OperatorExpr.scalar(1)),
    ([sp("A"), sm("A")], None, OperatorExpr.scalar(Fraction(1, 2)) + P(sz("A"), coeff=Fraction(1, 2))),
    ([sp("A"), sp("A")], None, OperatorExpr()),
    ([a(1), ad(0)], None, OperatorExpr.raw([(1, [ad(0), a(1)])])),
    ([a(2), a(1)], None, OperatorExpr.raw([(1, [a(1), a(2)])])),
])
def test_canonical_rules(lhs, rhs, expected):
    assert P(*lhs) == expected


def test_zero_terms_dropped():
    expr = OperatorExpr.raw([(1, [sx("A")]), (-1, [sx("A")])])
    assert expr.is_zero() and len(canonicalize(expr)) == 0


def test_term_cap():
    many = sum((P(ad(j), a(k)) for j in range(4) for k in range(4)), OperatorExpr())
    with pytest.raises(ResourceLimitError):
        canonicalize(multiply(many, many), max_terms=10)


def test_symbol_validation():
    with pytest.raises(ArgumentError):
        sx("C")
    with pytest.raises(ArgumentError):
        a(-1)
    with pytest.raises(ArgumentError):
        OperatorSymbol("pauli_x", 3).validate()
    with pytest.raises(ArgumentError):
        OperatorSymbol("boson_create", "A").validate()


# ------------------------------------------------------------ commutators

def test_commutator_h_sx():
    H = HamiltonianSymbolic(3).expr()
    assert commutator(H, P(sx("A"))) == P(sy("A"), coeff=param("Omega").scale(1j))


def test_commutator_h_sy():
    M = 3
    H = HamiltonianSymbolic(M).expr()
    expected = P(sx("A"), coeff=param("Omega").scale(-1j))
    # 2 i dA sz_A E(x_A), written out mode by mode
    for j in range(M):
        g, e, ec = param(f"g{j}"), param(f"eA{j}"), param(f"eA{j}_c")
        expected = expected + P(sz("A"), a(j), coeff=(param("dA") * g * e).scale(-2))
        expected = expected + P(sz("A"), ad(j), coeff=(param("dA") * g * ec).scale(2))
    assert commutator(H, P(sy("A"))) == expected
    via_field = P(sx("A"), coeff=param("Omega").scale(-1j)) + multiply(
        P(sz("A"), coeff=param("dA").scale(2j)), field_at("A", M))
    assert expected == via_field


def test_commutator_distinct_atoms():
    assert commutator(P(sx("A")), P(sy("B"))).is_zero()


def test_hamiltonian_self_adjoint():
    for M in (1, 2, 4):
        assert is_self_adjoint(HamiltonianSymbolic(M).expr())


# ---------------------------------------------------------------- support

def test_support_examples():
    H = HamiltonianSymbolic(4)
    assert nested_commutator_support(P(sx("A")), H, 1) == {"A"}
    assert nested_commutator_support(P(sx("A")), H, 4) == {"A"}
    assert nested_commutator_support(P(sx("A")) + P(sx("B")), H, 1) == {"A", "B"}


def test_support_literal_finite_modes_sees_b():
    # on a finite labelled mode set, B enters through mode sums such as
    # sum_j g_j^2 (eA_j eB_j^* - c.c.), which vanish only as dk -> 0
    H = HamiltonianSymbolic(2)
    assert nested_commutator_support(P(sy("A")), H, 2, limit="modes") == {"A", "B"}
    assert nested_commutator_support(P(sy("A")), H, 2) == {"A"}


def test_support_depth_cap():
    with pytest.raises(ResourceLimitError):
        nested_commutator_support(P(sx("A")), HamiltonianSymbolic(1), 9)
    with pytest.raises(ArgumentError):
        nested_commutator_support(P(sx("A")), HamiltonianSymbolic(1), -1)
    with pytest.raises(ArgumentError):
        nested_commutator_support(P(sx("A")), HamiltonianSymbolic(1), 1, limit="bogus")


def test_support_zero_depth_is_seed():
    assert nested_commutator_support(P(sz("B")), HamiltonianSymbolic(1), 0) == {"B"}


@pytest.mark.parametrize("seed", [sx("A"), sy("A")])
def test_support_through_depth_four(seed):
    chain = nested_commutators(P(seed), HamiltonianSymbolic(4), 4)
    for expr in chain[1:]:
        assert continuum_dependence(expr)[0] == {"A"}


def test_acausal_coupling_is_detected():
    # with frequency-independent couplings the A-B kernels are odd powers of |k|
    # or mixed, so B survives the continuum reduction: the check is not vacuous
    chain = nested_commutators(P(sx("A")), HamiltonianSymbolic(4), 4)
    atoms, _ = continuum_dependence(chain[4], coupling_power=0)
    assert "B" in atoms


def test_continuum_drops_local_kernels():
    # sum_j g_j^2 w_j cos(k_j r) -> N int k^2 cos(k r) dk, a distribution at r = 0
    j = 0
    kernel = (param(f"g{j}", 2) * param(f"eA{j}") * param(f"eB{j}_c")
              + param(f"g{j}", 2) * param(f"eA{j}_c") * param(f"eB{j}"))
    expr = P(sz("A"), sx("B"), coeff=(kernel * param(f"w{j}")).scale(Fraction(1, 2)))
    atoms, survivors = continuum_dependence(expr)
    assert atoms == set() and survivors == []
    # without the extra w the integrand is |k|, whose transform ~ 1/r^2 is not local
    atoms, survivors = continuum_dependence(P(sz("A"), sx("B"), coeff=kernel))
    assert atoms == {"A", "B"} and len(survivors) == 1


def test_continuum_keeps_nonlocal_kernels():
    expr = P(sz("A"), coeff=param("g0", 2) * param("eA0") * param("eB0_c") * param("w0"))
    atoms, survivors = continuum_dependence(expr, coupling_power=0)
    assert "B" in atoms and len(survivors) == 1


# ------------------------------------------------------- model consistency

def _boson_matrix(basis, sym):
    low = basis.lowering_operator(sym.site).toarray()
    return low if sym.kind == "boson_annihilate" else low.conj().T


PAULI = {"pauli_x": np.array([[0, 1], [1, 0]]), "pauli_y": np.array([[0, -1j], [1j, 0]]),
         "pauli_z": np.diag([1.0, -1.0])}


def to_matrix(expr, values, basis):
    dim = basis.dimension
    out = np.zeros((dim, dim), dtype=complex)
    for word, coeff in expr.terms.items():
        qa, qb = np.eye(2), np.eye(2)
        for s in word:
            if s.kind in PAULI:
                if s.site == "A":
                    qa = qa @ PAULI[s.kind]
                else:
                    qb = qb @ PAULI[s.kind]
        # creations left of annihilations is exact under photon-number truncation
        photon = np.eye(basis.photon_count)
        for s in [s for s in word if s.kind == "boson_create"]:
            photon = photon @ _boson_matrix(basis, s)
        for s in [s for s in word if s.kind == "boson_annihilate"]:
            photon = photon @ _boson_matrix(basis, s)
        out += coeff.evaluate(values) * np.kron(photon, np.kron(qa, qb))
    return out


def test_symbolic_hamiltonian_matches_assembled_matrix():
    M = 4
    grid, basis = build_grid(M, 2.0, 1.2, 0.8), build_basis(M, 2)
    qa, qb = QubitParams(1.1, 0.3, 0.2), QubitParams(1.1, -0.2, 0.9)
    H = assemble_hamiltonian((qa, qb), grid, basis).to_dense()
    sym = HamiltonianSymbolic(M)
    values = sym.parameter_values(1.1, (0.3, -0.2), grid.couplings, grid.frequencies,
                                  grid.momenta, (0.2, 0.9))
    assert np.max(np.abs(to_matrix(sym.expr(), values, basis) - H)) < 1e-13


def test_numeric_commutator_on_low_photon_states():
    M = 2
    grid, basis = build_grid(M, 1.0), build_basis(M, 3)
    sym = HamiltonianSymbolic(M)
    values = sym.parameter_values(1.0, (0.3, 0.4), grid.couplings, grid.frequencies,
                                  grid.momenta, (0.0, 0.7))
    Hm = to_matrix(sym.expr(), values, basis)
    seed = P(sy("A"))
    S = to_matrix(seed, values, basis)
    C = to_matrix(commutator(sym.expr(), seed), values, basis)
    # compare on states with at most one photon, where truncation cannot bite
    low = [i for i, lab in enumerate(basis.labels()) if sum(lab.occupation) <= 1]
    assert np.max(np.abs((Hm @ S - S @ Hm - C)[:, low])) < 1e-13


# ------------------------------------------------------------ text format

def test_format_examples():
    assert format_expr(OperatorExpr()) == "0"
    expr = P(sy("A"), coeff=param("Omega").scale(1j)) + P(sz("A"), ad(3), coeff=param("dA").scale(2j))
    assert format_expr(expr) == "i*Omega*sy[A] + 2*i*dA*sz[A]*ad[3]"
    assert parse_expr("i*Omega*sy[A] + 2*i*dA*sz[A]*ad[3]") == expr


@pytest.mark.parametrize("text,expected", [
    ("0", OperatorExpr()),
    ("id", OperatorExpr.scalar(1)),
    ("-3/4*sx[B]", P(sx("B"), coeff=Fraction(-3, 4))),
    ("a[0]*ad[0]", OperatorExpr.scalar(1) + P(ad(0), a(0))),
    ("Omega^2 - Omega*Omega", OperatorExpr()),
    ("eA1*eA1_c", OperatorExpr.scalar(1)),
    ("sp[A]", P(sx("A"), coeff=Fraction(1, 2)) + P(sy("A"), coeff=Fraction(1, 2) * 1j)),
])
def test_parse_cases(text, expected):
    assert parse_expr(text) == expected


@pytest.mark.parametrize("text", ["", "sx[A] +", "sx[C]", "a[x]", "2 sx[A]", "Omega^",
                                  "3/", "sx[A] $"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_expr(text)


@pytest.mark.parametrize("name,build", [
    ("hamiltonian_M2", lambda: HamiltonianSymbolic(2).expr()),
    ("nested_sxA_depth1_M2", lambda: nested_commutators(P(sx("A")), HamiltonianSymbolic(2), 1)[1]),
    ("nested_sxA_depth2_M2", lambda: nested_commutators(P(sx("A")), HamiltonianSymbolic(2), 2)[2]),
    ("nested_syA_depth1_M2", lambda: nested_commutators(P(sy("A")), HamiltonianSymbolic(2), 1)[1]),
    ("nested_syA_depth2_M2", lambda: nested_commutators(P(sy("A")), HamiltonianSymbolic(2), 2)[2]),
])
def test_golden_files(name, build):
    text = (GOLDEN / f"{name}.txt").read_text().strip()
    expr = build()
    assert format_expr(expr) == text
    assert parse_expr(text) == expr


# -------------------------------------------------------------- properties

SYMBOLS = st.sampled_from([sx("A"), sy("A"), sz("A"), sp("A"), sm("A"), sx("B"), sy("B"),
                           sz("B"), a(0), ad(0), a(1), ad(1)])
COEFFS = st.sampled_from([Coeff.const(1), Coeff.const(-2), Coeff.const(1j),
                          Coeff.const(Fraction(1, 3)), param("Omega"), param("dA").scale(1j),
                          param("eA0"), param("g1") * param("eB1_c")])
WORDS = st.lists(SYMBOLS, min_size=0, max_size=3)
EXPRS = st.lists(st.tuples(COEFFS, WORDS), min_size=1, max_size=3).map(OperatorExpr.raw)


@given(EXPRS)
def test_canonicalize_idempotent(raw):
    once = canonicalize(raw)
    assert canonicalize(once) == once
    assert all(is_canonical(w) for w in once.terms)
    assert all(not c.is_zero() for c in once.terms.values())


@given(EXPRS)
def test_parse_format_round_trip(raw):
    expr = canonicalize(raw)
    assert parse_expr(format_expr(expr)) == expr


@settings(max_examples=30)
@given(SYMBOLS, SYMBOLS, SYMBOLS, COEFFS)
def test_jacobi_on_symbols(x, y, z, c):
    X, Y, Z = P(x, coeff=c), P(y), P(z)
    total = (commutator(X, commutator(Y, Z)) + commutator(Y, commutator(Z, X))
             + commutator(Z, commutator(X, Y)))
    assert total.is_zero()


@settings(max_examples=30)
@given(EXPRS, EXPRS, EXPRS)
def test_jacobi_on_expressions(x, y, z):
    X, Y, Z = canonicalize(x), canonicalize(y), canonicalize(z)
    total = (commutator(X, commutator(Y, Z)) + commutator(Y, commutator(Z, X))
             + commutator(Z, commutator(X, Y)))
    assert total.is_zero()


@settings(max_examples=30)
@given(EXPRS, EXPRS)
def test_commutator_of_self_adjoint_is_anti_self_adjoint(x, y):
    X = canonicalize(x)
    Y = canonicalize(y)
    X, Y = X + adjoint(X), Y + adjoint(Y)
    assert is_self_adjoint(X) and is_self_adjoint(Y)
    C = commutator(X, Y)
    assert is_anti_self_adjoint(C)
    for word, coeff in C.terms.items():
        # term by term: adjoint(term) appears in C with the negated coefficient
        term = OperatorExpr({word: coeff})
        back = adjoint(term)
        for w2, c2 in back.terms.items():
            assert (C.terms.get(w2, Coeff()) + c2).is_zero() or len(back) > 1


@settings(max_examples=30)
@given(EXPRS, EXPRS, EXPRS)
def test_multiplication_associative(x, y, z):
    X, Y, Z = canonicalize(x), canonicalize(y), canonicalize(z)
    assert multiply(multiply(X, Y), Z) == multiply(X, multiply(Y, Z))


@given(EXPRS, EXPRS)
def test_adjoint_reverses_products(x, y):
    X, Y = canonicalize(x), canonicalize(y)
    assert adjoint(multiply(X, Y)) == multiply(adjoint(Y), adjoint(X))
    assert adjoint(adjoint(X)) == X
