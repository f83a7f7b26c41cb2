import json

import numpy as np
import pytest

from bellcat import instruments
from bellcat.bell import (
    bell_score,
    chsh,
    chsh_optimal_measurements,
    correlations,
    local_bound,
    register_conditioned_strategy,
)
from bellcat.catalysis import CatalystSpec, catalytic_transform, local_kraus_map, system_labels, system_marginal, to_dense
from bellcat.errors import ParseError, PartitionError
from bellcat.instruments import (
    InputDistribution,
    apply_instruments,
    check_c1,
    check_c2,
    check_c3,
    embed_b_into_c2,
    hierarchy,
    identity_instrument,
    povm_instrument,
)
from bellcat.qstate import Label, tensor, validate
from bellcat.states import max_entangled, random_state

import scenario_zoo

SQRT2 = np.sqrt(2)


def test_identity_scenario_passes_everything():
    sc = instruments.identity_scenario()
    out = sc.run()
    np.testing.assert_allclose(out.p, 1.0, atol=1e-14)
    for x in range(2):
        for y in range(2):
            assert np.abs(out.post[x][y][0][0].data - sc.omega.data).max() <= 1e-14
    assert check_c1(out, sc.omega).passed
    assert check_c2(out, sc.omega).passed
    assert check_c3(out, sc.omega, sc.distribution()).passed


def test_povm_instruments_reproduce_correlations():
    rng = np.random.default_rng(0)
    A, B, CA, CB = Label("A", 2), Label("B", 2), Label("CA", 3), Label("CB", 2)
    rho = random_state([A, B], rng)
    omega = tensor(random_state([CA], rng), random_state([CB], rng))
    mA, mB = chsh_optimal_measurements(A, B)
    out = apply_instruments(rho, omega, povm_instrument(A, (CA,), mA), povm_instrument(B, (CB,), mB))
    np.testing.assert_allclose(out.p, correlations(rho, mA, mB).p, atol=1e-13)
    assert check_c1(out, omega).worst_residue <= 1e-12


def test_outcome_flip_fails_c1_and_names_cell():
    sc = instruments.outcome_flip_scenario()
    out = sc.run()
    r = check_c1(out, sc.omega)
    assert not r.passed
    x, y, a, b = r.worst_index
    assert a == 1  # the flip only happens on Alice's outcome 1
    assert r.worst_residue == pytest.approx(1.0)
    assert not check_c2(out, sc.omega).passed


def test_cancellation_passes_c3_only():
    sc = instruments.cancellation_scenario(0.5)
    out = sc.run()
    assert not check_c1(out, sc.omega).passed
    c2 = check_c2(out, sc.omega)
    # Alice's catalyst drifts by q/2 = 0.25, seen through omega_B = 1/2 on the joint catalyst
    assert not c2.passed and c2.worst_residue == pytest.approx(0.125)
    assert check_c3(out, sc.omega, InputDistribution.uniform(2, 2)).passed
    # a biased input distribution breaks the cancellation
    assert not check_c3(out, sc.omega, InputDistribution((0.7, 0.3), (0.5, 0.5))).passed


def test_pipeline_c2_not_c1_and_violates_chsh():
    sc = instruments.phi_plus_pipeline_scenario(2)
    out = sc.run()
    c2 = check_c2(out, sc.omega)
    assert c2.passed and c2.worst_residue <= 1e-9
    assert not check_c1(out, sc.omega).passed
    score = bell_score(chsh(), out.table())
    assert score == pytest.approx(1 + SQRT2, abs=1e-9)
    assert score > 2


def test_pipeline_probabilities_match_register_strategy_on_output():
    rng = np.random.default_rng(1)
    A, B = Label("A", 2), Label("B", 2)
    spec = CatalystSpec(random_state([A, B], rng), random_state([A], rng), random_state([B], rng), 2)
    mXiA, mXiB = instruments.chsh_witness_on_first_copy(spec)
    argmax = local_bound(chsh())[1]
    out = instruments.catalytic_pipeline_scenario(spec, mXiA, mXiB, argmax).run()
    tau = to_dense(system_marginal(catalytic_transform(spec), spec))
    regs = {lab.name: lab for lab in system_labels(spec)}
    mA, mB = register_conditioned_strategy(mXiA, mXiB, argmax, (regs["RA"], regs["RB"]))
    np.testing.assert_allclose(out.p, correlations(tau, mA, mB).p, atol=1e-12)


def test_embedding_completeness():
    for n in (2, 3):
        spec = CatalystSpec(max_entangled(2), n=n)
        mXiA, mXiB = instruments.chsh_witness_on_first_copy(spec)
        regs = {lab.name: lab for lab in system_labels(spec)}
        mA, mB = register_conditioned_strategy(mXiA, mXiB, local_bound(chsh())[1], (regs["RA"], regs["RB"]))
        instA, instB = embed_b_into_c2(local_kraus_map(spec, "A"), local_kraus_map(spec, "B"), mA, mB)
        assert instA.completeness_residue() <= 1e-10
        assert instB.completeness_residue() <= 1e-10


def test_trivial_transform_embedding_is_plain_measurement():
    A, B, CA, CB = Label("A", 2), Label("B", 2), Label("CA", 2), Label("CB", 2)
    rng = np.random.default_rng(2)
    rho, omega = random_state([A, B], rng), tensor(random_state([CA], rng), random_state([CB], rng))
    mA, mB = chsh_optimal_measurements(A, B)
    idA = instruments.KrausMap((A, CA), (A, CA), (np.eye(4),))
    idB = instruments.KrausMap((B, CB), (B, CB), (np.eye(4),))
    instA, instB = embed_b_into_c2(idA, idB, mA, mB)
    out = apply_instruments(rho, omega, instA, instB)
    np.testing.assert_allclose(out.p, correlations(rho, mA, mB).p, atol=1e-13)
    assert check_c1(out, omega).passed


def test_apply_instruments_rejects_bad_partition():
    sc = instruments.identity_scenario()
    A, CA = sc.rho.labels[0], sc.omega.labels[0]
    with pytest.raises(PartitionError):
        apply_instruments(sc.rho, sc.omega, identity_instrument((A, CA)), identity_instrument((A, CA)))


def test_instrument_must_be_trace_preserving():
    A = Label("A", 2)
    with pytest.raises(ValueError):
        instruments.QuantumInstrument((A,), (A,), [[[0.5 * np.eye(2)]]])


def test_input_distribution_validation():
    with pytest.raises(ValueError):
        InputDistribution((0.5, 0.6), (1.0,))


# --- generated scenarios ----------------------------------------------------------


SCENARIOS = scenario_zoo.generated_scenarios(0)
DISTS = scenario_zoo.distributions(0)


def test_zoo_has_thirty_scenarios_with_all_patterns():
    assert len(SCENARIOS) == 30
    patterns = set()
    for _, sc in SCENARIOS:
        h = hierarchy(sc.run(), sc.omega, DISTS[:1])
        patterns.add((h["c1"].passed, h["c2"].passed, h["c3"][0].passed))
    # c1-pass, c2-only, c3-only and fail-all all occur
    assert {(True, True, True), (False, True, True), (False, False, True), (False, False, False)} <= patterns


@pytest.mark.parametrize("idx", range(30))
def test_hierarchy_on_generated_scenarios(idx):
    kind, sc = SCENARIOS[idx]
    out = sc.run()
    h = hierarchy(out, sc.omega, DISTS)
    assert h["consistent"], kind
    if h["c1"].passed:
        assert h["c2"].passed
    if h["c2"].passed:
        assert all(r.passed for r in h["c3"])
    r = out.table().residues()
    assert max(r["signalling_a"], r["signalling_b"], r["normalisation"]) <= 1e-9


def test_post_catalysts_are_valid_states():
    for _, sc in SCENARIOS[::3]:
        out = sc.run()
        for x in range(out.p.shape[0]):
            for y in range(out.p.shape[1]):
                for a in range(out.p.shape[2]):
                    for b in range(out.p.shape[3]):
                        st = out.post[x][y][a][b]
                        assert (st is None) == (out.p[x, y, a, b] <= 1e-12)
                        if st is not None:
                            assert validate(st, 1e-9).passed


# --- JSON ----------------------------------------------------------------------


def test_scenario_json_round_trip(tmp_path):
    sc = instruments.cancellation_scenario(0.3)
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(instruments.scenario_to_json(sc)))
    back = instruments.load_scenario(str(path))
    o1, o2 = sc.run(), back.run()
    assert np.abs(o1.raw - o2.raw).max() <= 1e-14
    assert back.inputs == sc.inputs


def test_instrument_json_layout():
    d = instruments.instrument_to_json(identity_instrument((Label("A", 2),)))
    assert set(d) == {"inLabels", "outLabels", "arms"}
    assert d["arms"][0][0][0] == [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]


def test_malformed_json_reports_location(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"rho": {"labels": []},\n "omega": ]')
    with pytest.raises(ParseError, match=r"bad.json:2:"):
        instruments.load_scenario(str(path))


def test_bad_kraus_entry_reports_path():
    d = instruments.scenario_to_json(instruments.identity_scenario())
    d["instA"]["arms"][1][0][0] = "oops"
    with pytest.raises(ParseError, match=r"scenario.instA.arms\[1\]\[0\]\[0\]"):
        instruments.scenario_from_json(d)


def test_missing_key_is_parse_error():
    with pytest.raises(ParseError, match="omega"):
        instruments.scenario_from_json({"rho": instruments.state_to_json(max_entangled(2))})
