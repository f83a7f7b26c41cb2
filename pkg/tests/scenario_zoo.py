"""Seeded instrument scenarios covering every pass/fail pattern of the catalyst conditions."""

import numpy as np

from bellcat import instruments
from bellcat.bell import MeasurementAssemblage, _random_projective, chsh, local_bound
from bellcat.catalysis import CatalystSpec
from bellcat.instruments import (
    InputDistribution,
    Scenario,
    catalyst_kick_instrument,
    identity_instrument,
    povm_instrument,
    random_instrument,
)
from bellcat.qstate import Label, tensor
from bellcat.states import random_state, random_unitary

A, B, CA, CB = Label("A", 2), Label("B", 2), Label("CA", 2), Label("CB", 2)


def _omega(rng):
    return tensor(random_state([CA], rng), random_state([CB], rng))


def _povms(rng, label, n_inputs=2):
    return MeasurementAssemblage((label,), _random_projective(rng, n_inputs, 2, label.dim, balanced=True))


def identity_case(rng):
    rho = random_state([A, B], rng)
    return Scenario(rho, _omega(rng), identity_instrument((A, CA), 2), identity_instrument((B, CB), 2))


def povm_case(rng):
    rho = random_state([A, B], rng)
    return Scenario(rho, _omega(rng), povm_instrument(A, (CA,), _povms(rng, A)), povm_instrument(B, (CB,), _povms(rng, B)))


def random_case(rng):
    rho = random_state([A, B], rng)
    instA = random_instrument((A, CA), (CA,), 2, 2, rng)
    instB = random_instrument((B, CB), (CB,), 2, 2, rng)
    return Scenario(rho, _omega(rng), instA, instB)


def kick_case(rng):
    """Outcome-dependent unitary kick on Alice's catalyst."""
    rho = random_state([A, B], rng)
    U = random_unitary(2, rng)
    kicks = [[[np.eye(2)], [U]] for _ in range(2)]
    instA = catalyst_kick_instrument(A, CA, _povms(rng, A), kicks)
    return Scenario(rho, _omega(rng), instA, povm_instrument(B, (CB,), _povms(rng, B)))


def input_kick_case(rng):
    """Input-dependent, outcome-independent kick: every outcome sees the same catalyst."""
    rho = random_state([A, B], rng)
    U = random_unitary(2, rng)
    kicks = [[[np.eye(2)], [np.eye(2)]], [[U], [U]]]
    instA = catalyst_kick_instrument(A, CA, _povms(rng, A), kicks)
    return Scenario(rho, _omega(rng), instA, povm_instrument(B, (CB,), _povms(rng, B)))


def cancellation_case(rng):
    return instruments.cancellation_scenario(float(rng.uniform(0.1, 1.0)))


def pipeline_case(rng):
    spec = CatalystSpec(random_state([A, B], rng), random_state([A], rng), random_state([B], rng), 2)
    mXiA, mXiB = instruments.chsh_witness_on_first_copy(spec)
    return instruments.catalytic_pipeline_scenario(spec, mXiA, mXiB, local_bound(chsh())[1])


KINDS = [
    (identity_case, 3),
    (povm_case, 6),
    (random_case, 5),
    (kick_case, 4),
    (input_kick_case, 3),
    (cancellation_case, 5),
    (pipeline_case, 4),
]


def generated_scenarios(seed=0):
    """30 scenarios as (kind name, Scenario)."""
    rng = np.random.default_rng(seed)
    out = []
    for make, count in KINDS:
        for _ in range(count):
            out.append((make.__name__, make(rng)))
    return out


def distributions(seed=0):
    rng = np.random.default_rng(seed + 1)
    ds = [InputDistribution.uniform(2, 2)]
    for _ in range(3):
        px, py = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2))
        ds.append(InputDistribution((float(px[0]), 1 - float(px[0])), (float(py[0]), 1 - float(py[0]))))
    return ds
