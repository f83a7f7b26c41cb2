import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellcat import qstate
from bellcat.errors import (
    InvalidPermutation,
    LabelCollision,
    NumericalInconsistency,
    TooLargeToMaterialize,
    UnknownLabel,
)
from bellcat.qstate import (
    DensityMatrix,
    HermitianOperator,
    Label,
    expectation,
    partial_trace,
    register,
    swap_subsystems,
    tensor,
    validate,
)
from bellcat.states import max_entangled, random_state

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def _state(names_dims, seed):
    labels = [Label(n, d) for n, d in names_dims]
    return random_state(labels, np.random.default_rng(seed))


def _trace_out_loop(data, dims, keep):
    """Reference partial trace by explicit summation over traced indices."""
    k = len(dims)
    kept = [i for i in range(k) if i in keep]
    gone = [i for i in range(k) if i not in keep]
    dk = int(np.prod([dims[i] for i in kept]))
    out = np.zeros((dk, dk), dtype=complex)
    t = data.reshape(tuple(dims) * 2)
    for r in itertools.product(*(range(dims[i]) for i in kept)):
        for c in itertools.product(*(range(dims[i]) for i in kept)):
            acc = 0.0
            for g in itertools.product(*(range(dims[i]) for i in gone)):
                ri, ci = [0] * k, [0] * k
                for pos, i in enumerate(kept):
                    ri[i], ci[i] = r[pos], c[pos]
                for pos, i in enumerate(gone):
                    ri[i] = ci[i] = g[pos]
                acc += t[tuple(ri) + tuple(ci)]
            out[np.ravel_multi_index(r, [dims[i] for i in kept]), np.ravel_multi_index(c, [dims[i] for i in kept])] = acc
    return out


# --- tensor ----------------------------------------------------------------


def test_tensor_of_maximally_mixed_qubits():
    a = DensityMatrix((Label("X", 2),), np.eye(2) / 2)
    b = DensityMatrix((Label("Y", 2),), np.eye(2) / 2)
    t = tensor(a, b)
    assert t.names == ("X", "Y")
    np.testing.assert_allclose(t.data, np.eye(4) / 4)


def test_tensor_basis_ordering_leftmost_most_significant():
    a = qstate.basis_projector(Label("X", 2), 0)
    b = qstate.basis_projector(Label("Y", 2), 1)
    np.testing.assert_array_equal(tensor(a, b).data, np.diag([0, 1, 0, 0]).astype(complex))


def test_tensor_two_phi_plus_entry():
    p1 = max_entangled(2, ("A1", "B1"))
    p2 = max_entangled(2, ("A2", "B2"))
    t = tensor(p1, p2)
    dims = t.dims
    row = qstate.flatten_index((0, 0, 0, 0), dims)
    col = qstate.flatten_index((1, 1, 1, 1), dims)
    assert t.data[row, col] == pytest.approx(0.25, abs=1e-15)
    # off-pattern entry: (0,1,..) is not in the support of phi+ (x) phi+
    assert t.data[qstate.flatten_index((0, 1, 0, 0), dims), col] == 0


def test_tensor_label_collision():
    a = DensityMatrix((Label("A", 2),), np.eye(2) / 2)
    with pytest.raises(LabelCollision):
        tensor(a, a)


def test_tensor_trace_is_product():
    a = _state([("A", 2)], 1)
    b = DensityMatrix((Label("B", 3),), 0.5 * np.eye(3) / 3)
    assert np.trace(tensor(a, b).data).real == pytest.approx(0.5, abs=1e-14)


# --- partial trace ---------------------------------------------------------


def test_partial_trace_of_phi_plus():
    np.testing.assert_allclose(partial_trace(max_entangled(2), ["A"]).data, np.eye(2) / 2, atol=1e-15)


def test_partial_trace_product_returns_factor():
    rho = _state([("A", 3)], 2)
    sig = _state([("B", 2)], 3)
    red = partial_trace(tensor(rho, sig), ["B"])
    np.testing.assert_allclose(red.data, sig.data, atol=1e-14)


def test_partial_trace_keep_all_is_noop():
    s = _state([("A", 2), ("B", 2)], 4)
    assert np.array_equal(partial_trace(s, ["A", "B"]).data, s.data)


def test_partial_trace_unknown_label():
    with pytest.raises(UnknownLabel):
        partial_trace(max_entangled(2), ["Q"])


def test_partial_trace_keeps_original_order():
    s = _state([("A", 2), ("B", 3), ("C", 2)], 5)
    assert partial_trace(s, ["C", "A"]).names == ("A", "C")


@pytest.mark.parametrize("keep", [{0}, {1}, {2}, {0, 2}, {1, 2}])
def test_partial_trace_matches_loop_oracle(keep):
    dims = (2, 3, 2)
    s = _state(list(zip("ABC", dims)), 6)
    got = partial_trace(s, ["ABC"[i] for i in keep])
    np.testing.assert_allclose(got.data, _trace_out_loop(s.data, dims, keep), atol=1e-14)


# --- swap ------------------------------------------------------------------


def test_swap_product_exchanges_factors():
    rho = _state([("A", 2)], 7)
    sig = _state([("B", 3)], 8)
    sw = swap_subsystems(tensor(rho, sig), ["B", "A"])
    np.testing.assert_allclose(sw.data, tensor(sig, rho).data, atol=1e-15)
    assert sw.names == ("B", "A")


def test_swap_twice_is_exact_identity():
    s = _state([("A", 2), ("B", 3)], 9)
    back = swap_subsystems(swap_subsystems(s, ["B", "A"]), ["A", "B"])
    assert np.array_equal(back.data, s.data)


def test_swap_spectrum_invariant():
    s = _state([("A", 2), ("B", 3), ("C", 2)], 10)
    sw = swap_subsystems(s, ["C", "A", "B"])
    np.testing.assert_allclose(np.linalg.eigvalsh(sw.data), np.linalg.eigvalsh(s.data), atol=1e-12)


@pytest.mark.parametrize("perm", [["A"], ["A", "A"], ["A", "Q"]])
def test_swap_rejects_non_permutation(perm):
    with pytest.raises(InvalidPermutation):
        swap_subsystems(max_entangled(2), perm)


# --- expectation -----------------------------------------------------------


def test_expectation_identity_is_one():
    s = _state([("A", 2), ("B", 3)], 11)
    ident = HermitianOperator((Label("A", 2),), np.eye(2))
    assert expectation(s, ident) == pytest.approx(1.0, abs=1e-14)


def test_expectation_xx_on_phi_plus():
    o = HermitianOperator((Label("A", 2), Label("B", 2)), np.kron(X, X))
    assert expectation(max_entangled(2), o) == pytest.approx(1.0, abs=1e-15)


def test_expectation_zz_on_maximally_mixed():
    s = qstate.maximally_mixed((Label("A", 2), Label("B", 2)))
    o = HermitianOperator((Label("A", 2), Label("B", 2)), np.kron(Z, Z))
    assert expectation(s, o) == 0.0


def test_expectation_respects_operator_label_order():
    s = tensor(qstate.basis_projector(Label("A", 2), 0), qstate.basis_projector(Label("B", 2), 1))
    o = HermitianOperator((Label("B", 2), Label("A", 2)), np.kron(Z, np.eye(2)))
    assert expectation(s, o) == pytest.approx(-1.0)


def test_expectation_imaginary_part_raises():
    # a non-Hermitian "state" yields a complex trace with a Hermitian observable
    bad = DensityMatrix((Label("A", 2),), np.array([[0.5, 1.0], [0.0, 0.5]], dtype=complex))
    Y = HermitianOperator((Label("A", 2),), np.array([[0, -1j], [1j, 0]]))
    with pytest.raises(NumericalInconsistency):
        expectation(bad, Y)


def test_expectation_linearity():
    rng = np.random.default_rng(12)
    s1, s2 = _state([("A", 2), ("B", 2)], 13), _state([("A", 2), ("B", 2)], 14)
    labs = s1.labels
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    o1 = HermitianOperator(labs, g + g.conj().T)
    o2 = HermitianOperator(labs, h + h.conj().T)
    a, b = 0.3, -1.7
    mix = DensityMatrix(labs, a * s1.data + b * s2.data)
    assert expectation(mix, o1) == pytest.approx(a * expectation(s1, o1) + b * expectation(s2, o1), abs=1e-12)
    osum = HermitianOperator(labs, a * o1.data + b * o2.data)
    assert expectation(s1, osum) == pytest.approx(a * expectation(s1, o1) + b * expectation(s1, o2), abs=1e-12)


# --- validate --------------------------------------------------------------


def test_validate_phi_plus_passes():
    assert validate(max_entangled(2)).passed


def test_validate_trace_residue():
    rep = validate(DensityMatrix((Label("A", 2),), np.diag([0.45, 0.45])))
    assert not rep.passed
    assert rep.trace_residue == pytest.approx(0.1)


def test_validate_negative_eigenvalue():
    rep = validate(DensityMatrix((Label("A", 2),), np.diag([1.5, -0.5])))
    assert not rep.psd
    assert rep.min_eigenvalue == pytest.approx(-0.5)


def test_validate_register_coherence_fails():
    plus = np.full((2, 2), 0.5)
    rep = validate(DensityMatrix((register("R", 2),), plus))
    assert rep.hermitian and rep.psd and rep.unit_trace
    assert not rep.registers_diagonal
    assert rep.register_residues["R"] == pytest.approx(0.5)


def test_hermitian_operator_rejects_non_hermitian():
    with pytest.raises(NumericalInconsistency):
        HermitianOperator((Label("A", 2),), np.array([[0, 1], [0, 0]]))


# --- dense cap -------------------------------------------------------------


def test_dense_cap_enforced_and_restored():
    a = DensityMatrix((Label("A", 8),), np.eye(8) / 8)
    b = DensityMatrix((Label("B", 8),), np.eye(8) / 8)
    with qstate.dense_cap(32):
        with pytest.raises(TooLargeToMaterialize):
            tensor(a, b)
    assert qstate.get_dense_cap() == 4096
    assert tensor(a, b).dim == 64


# --- JSON ------------------------------------------------------------------


def test_json_round_trip():
    s = tensor(_state([("A", 2), ("B", 3)], 15), qstate.basis_projector(register("R", 3), 2))
    back = qstate.loads_state(qstate.dumps_state(s))
    assert back.labels == s.labels
    assert np.abs(back.data - s.data).max() <= 1e-15


def test_json_layout():
    d = json.loads(qstate.dumps_state(max_entangled(2)))
    assert [lab["name"] for lab in d["labels"]] == ["A", "B"]
    assert d["labels"][0]["kind"] == "quantum"
    assert len(d["data"]) == 16
    assert d["data"][3] == pytest.approx([0.5, 0.0], abs=1e-15)


# --- properties ------------------------------------------------------------

dims_st = st.lists(st.integers(1, 3), min_size=1, max_size=3)


@settings(max_examples=40, deadline=None)
@given(dims_a=dims_st, dims_b=dims_st, seed=st.integers(0, 2**32 - 1))
def test_tensor_then_trace_recovers_first_factor(dims_a, dims_b, seed):
    a = _state([(f"a{i}", d) for i, d in enumerate(dims_a)], seed)
    b = _state([(f"b{i}", d) for i, d in enumerate(dims_b)], seed + 1)
    red = partial_trace(tensor(a, b), a.names)
    assert np.abs(red.data - a.data).max() <= 1e-12


@settings(max_examples=40, deadline=None)
@given(dims=st.lists(st.integers(1, 3), min_size=2, max_size=4), data=st.data())
def test_partial_trace_preserves_trace_and_positivity(dims, data):
    names = [f"s{i}" for i in range(len(dims))]
    s = _state(list(zip(names, dims)), data.draw(st.integers(0, 10_000)))
    keep = data.draw(st.sets(st.sampled_from(names), min_size=1))
    red = partial_trace(s, keep)
    assert abs(np.trace(red.data) - 1) <= 1e-12
    assert np.linalg.eigvalsh(red.data)[0] >= -1e-10


@settings(max_examples=60, deadline=None)
@given(dims=st.lists(st.integers(1, 8), min_size=1, max_size=5).filter(lambda d: np.prod(d) <= 4096), data=st.data())
def test_flatten_unflatten_bijective(dims, data):
    D = int(np.prod(dims))
    i = data.draw(st.integers(0, D - 1))
    multi = qstate.unflatten_index(i, dims)
    assert all(0 <= m < d for m, d in zip(multi, dims))
    assert qstate.flatten_index(multi, dims) == i


def test_flatten_matches_kron_convention():
    dims = (2, 3, 2)
    for multi in itertools.product(*(range(d) for d in dims)):
        vecs = [np.eye(d)[m] for d, m in zip(dims, multi)]
        v = np.kron(np.kron(vecs[0], vecs[1]), vecs[2])
        assert int(np.flatnonzero(v)[0]) == qstate.flatten_index(multi, dims)
