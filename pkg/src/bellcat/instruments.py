"""Instruments acting on system plus catalyst, and catalyst-return conditions.

Three conditions are checked on the classical-quantum output of a pair of
local instruments, from strongest to weakest:

* ``c1``: the post-measurement catalyst equals the initial one for every
  inputs/outputs combination with non-zero probability;
* ``c2``: for every input pair, the outcome-averaged catalyst is returned;
* ``c3``: averaged also over an input distribution, the catalyst is returned.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bell import (
    PAULI,
    CorrelationTable,
    MeasurementAssemblage,
    chsh,
    chsh_optimal_measurements,
    extend_assemblage,
    local_bound,
    projective_povms,
    register_conditioned_strategy,
)
from .catalysis import CatalystSpec, build_catalyst, local_kraus_map, system_labels, to_dense
from .channels import KrausMap, apply_local_maps
from .errors import DimensionError, ParseError, PartitionError
from .qstate import (
    DensityMatrix,
    Label,
    label_from_json,
    label_to_json,
    partial_trace,
    state_from_json,
    state_to_json,
    swap_subsystems,
    tensor,
    total_dim,
)
from .states import max_entangled

CONDITION_TOL = 1e-9
ZERO_PROB = 1e-12
COMPLETENESS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class QuantumInstrument:
    """``arms[x][a]`` is the Kraus list of the CP map for outcome ``a`` on input ``x``."""

    in_labels: tuple[Label, ...]
    out_labels: tuple[Label, ...]
    arms: tuple

    def __post_init__(self):
        din, dout = total_dim(self.in_labels), total_dim(self.out_labels)
        arms = tuple(tuple(tuple(np.asarray(k, dtype=complex) for k in arm) for arm in row) for row in self.arms)
        if not arms or len({len(row) for row in arms}) != 1:
            raise DimensionError("every input needs the same, non-zero number of outcomes")
        for row in arms:
            for arm in row:
                for k in arm:
                    if k.shape != (dout, din):
                        raise DimensionError(f"Kraus operator shape {k.shape}, expected {(dout, din)}")
        object.__setattr__(self, "in_labels", tuple(self.in_labels))
        object.__setattr__(self, "out_labels", tuple(self.out_labels))
        object.__setattr__(self, "arms", arms)
        res = self.completeness_residue()
        if res > COMPLETENESS_TOL:
            raise ValueError(f"instrument is not trace preserving (residue {res:.3g})")

    @property
    def n_inputs(self) -> int:
        return len(self.arms)

    @property
    def n_outcomes(self) -> int:
        return len(self.arms[0])

    @property
    def in_names(self):
        return tuple(lab.name for lab in self.in_labels)

    def arm(self, x: int, a: int) -> KrausMap:
        return KrausMap(self.in_labels, self.out_labels, self.arms[x][a])

    def completeness_residue(self) -> float:
        din = total_dim(self.in_labels)
        worst = 0.0
        for row in self.arms:
            acc = np.zeros((din, din), dtype=complex)
            for arm in row:
                for k in arm:
                    acc += k.conj().T @ k
            worst = max(worst, float(np.abs(acc - np.eye(din)).max()))
        return worst


@dataclass(frozen=True)
class InputDistribution:
    pX: tuple[float, ...]
    pY: tuple[float, ...]

    def __post_init__(self):
        for p in (self.pX, self.pY):
            arr = np.asarray(p, dtype=float)
            if np.any(arr < 0) or abs(arr.sum() - 1) > 1e-12:
                raise ValueError(f"{list(p)} is not a probability vector")

    @classmethod
    def uniform(cls, nX: int, nY: int) -> "InputDistribution":
        return cls(tuple([1.0 / nX] * nX), tuple([1.0 / nY] * nY))


@dataclass(eq=False)
class CqOutcome:
    """Outcome probabilities and post-measurement catalysts for every input pair.

    ``raw[x, y, a, b]`` holds the subnormalised catalyst p(ab|xy) * omega_abxy;
    ``post`` has the normalised states (``None`` when p <= 1e-12).
    """

    catalyst_labels: tuple[Label, ...]
    p: np.ndarray
    raw: np.ndarray
    post: list = field(repr=False)

    def table(self) -> CorrelationTable:
        return CorrelationTable(self.p)


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    passed: bool
    worst_residue: float
    worst_index: tuple | None = None
    tol: float = CONDITION_TOL


def apply_instruments(rho: DensityMatrix, omega: DensityMatrix, instA: QuantumInstrument, instB: QuantumInstrument) -> CqOutcome:
    """Run both instruments on rho (x) omega and keep the catalyst part of every branch."""
    joint = tensor(rho, omega)
    inA, inB = set(instA.in_names), set(instB.in_names)
    sysA, sysB = rho.names
    if inA & inB or inA | inB != set(joint.names):
        raise PartitionError(f"instrument inputs {sorted(inA)} | {sorted(inB)} do not partition {list(joint.names)}")
    if not (sysA in inA and sysB in inB):
        raise PartitionError(f"instrument A must act on {sysA!r} and instrument B on {sysB!r}")
    out_names = [lab.name for lab in instA.out_labels + instB.out_labels]
    if not set(omega.names) <= set(out_names):
        raise PartitionError(f"instrument outputs {out_names} do not return catalyst labels {list(omega.names)}")
    nX, nY, nA, nB = instA.n_inputs, instB.n_inputs, instA.n_outcomes, instB.n_outcomes
    d = omega.dim
    p = np.zeros((nX, nY, nA, nB))
    raw = np.zeros((nX, nY, nA, nB, d, d), dtype=complex)
    post = [[[[None] * nB for _ in range(nA)] for _ in range(nY)] for _ in range(nX)]
    for x, y, a, b in itertools.product(range(nX), range(nY), range(nA), range(nB)):
        labels, out = apply_local_maps(joint, instA.arm(x, a), instB.arm(y, b))
        # out is subnormalised; DensityMatrix does not enforce unit trace
        cat = partial_trace(DensityMatrix(labels, out), omega.names)
        cat = swap_subsystems(cat, omega.names)
        raw[x, y, a, b] = cat.data
        prob = float(np.trace(cat.data).real)
        p[x, y, a, b] = prob
        if prob > ZERO_PROB:
            post[x][y][a][b] = DensityMatrix(omega.labels, cat.data / prob)
    return CqOutcome(omega.labels, p, raw, post)


def check_c1(out: CqOutcome, omega: DensityMatrix, tol: float = CONDITION_TOL) -> ConditionReport:
    worst, where = 0.0, None
    for idx in itertools.product(*(range(s) for s in out.p.shape)):
        x, y, a, b = idx
        st = out.post[x][y][a][b]
        if st is None:
            continue
        res = float(np.abs(st.data - omega.data).max())
        if res > worst:
            worst, where = res, idx
    return ConditionReport("c1", worst <= tol, worst, where, tol)


def check_c2(out: CqOutcome, omega: DensityMatrix, tol: float = CONDITION_TOL) -> ConditionReport:
    avg = out.raw.sum(axis=(2, 3))  # (x, y, d, d)
    res = np.abs(avg - omega.data).max(axis=(2, 3))
    idx = np.unravel_index(np.argmax(res), res.shape)
    worst = float(res[idx])
    return ConditionReport("c2", worst <= tol, worst, tuple(int(i) for i in idx), tol)


def check_c3(out: CqOutcome, omega: DensityMatrix, dist: InputDistribution, tol: float = CONDITION_TOL) -> ConditionReport:
    pX, pY = np.asarray(dist.pX), np.asarray(dist.pY)
    if len(pX) != out.p.shape[0] or len(pY) != out.p.shape[1]:
        raise DimensionError("input distribution does not match the number of inputs")
    avg = np.einsum("x,y,xyabij->ij", pX, pY, out.raw)
    worst = float(np.abs(avg - omega.data).max())
    return ConditionReport("c3", worst <= tol, worst, None, tol)


def hierarchy(out: CqOutcome, omega: DensityMatrix, dists: Sequence[InputDistribution], tol: float = CONDITION_TOL) -> dict:
    """All three checks plus whether c1 => c2 => c3 holds on this outcome."""
    c1, c2 = check_c1(out, omega, tol), check_c2(out, omega, tol)
    c3s = [check_c3(out, omega, d, tol) for d in dists]
    consistent = (not c1.passed or c2.passed) and (not c2.passed or all(r.passed for r in c3s))
    return {"c1": c1, "c2": c2, "c3": c3s, "consistent": consistent}


# --- building instruments ----------------------------------------------------------


def _permutation(labels: Sequence[Label], order: Sequence[str]) -> np.ndarray:
    """Unitary that reorders a tensor-product basis from ``labels`` to ``order``."""
    D = total_dim(labels)
    dims = [lab.dim for lab in labels]
    pos = [[lab.name for lab in labels].index(n) for n in order]
    idx = np.arange(D).reshape(dims).transpose(pos).ravel()
    P = np.zeros((D, D))
    P[np.arange(D), idx] = 1.0
    return P


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((m + m.conj().T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.conj().T


def measure_and_discard(transform: KrausMap, m: MeasurementAssemblage) -> QuantumInstrument:
    """Instrument: apply ``transform``, then measure ``m`` on its system outputs and discard them.

    Everything else the transform outputs (the catalyst) is kept.
    """
    out_names = [lab.name for lab in transform.out_labels]
    if not set(m.names) <= set(out_names):
        raise PartitionError(f"measurement labels {list(m.names)} are not transform outputs {out_names}")
    rest = tuple(lab for lab in transform.out_labels if lab.name not in m.names)
    P = _permutation(transform.out_labels, list(m.names) + [lab.name for lab in rest])
    ds, dc = total_dim(m.labels), total_dim(rest)
    arms = []
    for x in range(m.n_inputs):
        row = []
        for a in range(m.n_outcomes):
            root = _sqrt_psd(m.povms[x, a])
            kraus = []
            for k in range(ds):
                bra = np.kron(root[k : k + 1, :], np.eye(dc))  # (<k| sqrt(M)) (x) 1_C
                kraus.extend(bra @ P @ K for K in transform.kraus)
            row.append(kraus)
        arms.append(row)
    return QuantumInstrument(transform.in_labels, rest, arms)


def embed_b_into_c2(
    transformA: KrausMap, transformB: KrausMap, mA: MeasurementAssemblage, mB: MeasurementAssemblage
) -> tuple[QuantumInstrument, QuantumInstrument]:
    """Turn a catalytic transformation followed by measurements into a pair of instruments.

    Since the inputs do not influence the transformation, the outcome-averaged
    catalyst of the resulting instruments is returned for every input pair.
    """
    return measure_and_discard(transformA, mA), measure_and_discard(transformB, mB)


def identity_instrument(labels: Sequence[Label], n_inputs: int = 1) -> QuantumInstrument:
    D = total_dim(labels)
    return QuantumInstrument(tuple(labels), tuple(labels), [[[np.eye(D)]] for _ in range(n_inputs)])


def povm_instrument(system: Label, catalyst: Sequence[Label], m: MeasurementAssemblage) -> QuantumInstrument:
    """Measure ``m`` on the system, leave the catalyst untouched."""
    ident = KrausMap((system, *catalyst), (system, *catalyst), (np.eye(total_dim((system, *catalyst))),))
    return measure_and_discard(ident, m)


def catalyst_kick_instrument(system: Label, catalyst: Label, m: MeasurementAssemblage, kicks) -> QuantumInstrument:
    """Measure ``m`` on the system and apply channel ``kicks[x][a]`` (a Kraus list) to a qubit-like catalyst.

    With outcome- or input-dependent kicks this violates the stronger
    catalyst conditions; used for negative controls and cancellation examples.
    """
    ds = system.dim
    arms = []
    for x in range(m.n_inputs):
        row = []
        for a in range(m.n_outcomes):
            root = _sqrt_psd(m.povms[x, a])
            kraus = []
            for k in range(ds):
                for C in kicks[x][a]:
                    kraus.append(np.kron(root[k : k + 1, :], C))
            row.append(kraus)
        arms.append(row)
    return QuantumInstrument((system, catalyst), (catalyst,), arms)


def random_instrument(in_labels, out_labels, n_inputs: int, n_outcomes: int, rng: np.random.Generator, kraus_per_arm: int = 2) -> QuantumInstrument:
    """Random instrument from a Haar-ish isometry split into arms."""
    din, dout = total_dim(in_labels), total_dim(out_labels)
    m = n_outcomes * kraus_per_arm
    arms = []
    for _ in range(n_inputs):
        g = rng.normal(size=(dout * m, din)) + 1j * rng.normal(size=(dout * m, din))
        q, _ = np.linalg.qr(g)
        blocks = [q[j * dout : (j + 1) * dout, :] for j in range(m)]
        arms.append([blocks[a * kraus_per_arm : (a + 1) * kraus_per_arm] for a in range(n_outcomes)])
    return QuantumInstrument(tuple(in_labels), tuple(out_labels), arms)


# --- JSON -----------------------------------------------------------------------


def _kraus_to_json(k: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in k]


def instrument_to_json(inst: QuantumInstrument) -> dict:
    return {
        "inLabels": [label_to_json(lab) for lab in inst.in_labels],
        "outLabels": [label_to_json(lab) for lab in inst.out_labels],
        "arms": [[[_kraus_to_json(k) for k in arm] for arm in row] for row in inst.arms],
    }


def instrument_from_json(d: dict, where: str = "instrument") -> QuantumInstrument:
    try:
        in_labels = tuple(label_from_json(x) for x in d["inLabels"])
        out_labels = tuple(label_from_json(x) for x in d["outLabels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: bad label list ({exc})") from exc
    arms = []
    for x, row in enumerate(d.get("arms", [])):
        r = []
        for a, arm in enumerate(row):
            ks = []
            for j, k in enumerate(arm):
                try:
                    arr = np.asarray(k, dtype=float)
                    ks.append(arr[..., 0] + 1j * arr[..., 1])
                except (ValueError, IndexError, TypeError) as exc:
                    raise ParseError(f"{where}.arms[{x}][{a}][{j}]: {exc}") from exc
            r.append(ks)
        arms.append(r)
    try:
        return QuantumInstrument(in_labels, out_labels, arms)
    except (ValueError, DimensionError) as exc:
        raise ParseError(f"{where}: {exc}") from exc


@dataclass(eq=False)
class Scenario:
    rho: DensityMatrix
    omega: DensityMatrix
    instA: QuantumInstrument
    instB: QuantumInstrument
    inputs: InputDistribution | None = None

    def run(self) -> CqOutcome:
        return apply_instruments(self.rho, self.omega, self.instA, self.instB)

    def distribution(self) -> InputDistribution:
        return self.inputs or InputDistribution.uniform(self.instA.n_inputs, self.instB.n_inputs)


def scenario_to_json(sc: Scenario) -> dict:
    d = {
        "rho": state_to_json(sc.rho),
        "omega": state_to_json(sc.omega),
        "instA": instrument_to_json(sc.instA),
        "instB": instrument_to_json(sc.instB),
    }
    if sc.inputs is not None:
        d["inputs"] = {"pX": list(sc.inputs.pX), "pY": list(sc.inputs.pY)}
    return d


def scenario_from_json(d: dict) -> Scenario:
    parts = {}
    for key in ("rho", "omega"):
        if key not in d:
            raise ParseError(f"scenario: missing key {key!r}")
        try:
            parts[key] = state_from_json(d[key])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"scenario.{key}: {exc}") from exc
    for key in ("instA", "instB"):
        if key not in d:
            raise ParseError(f"scenario: missing key {key!r}")
        parts[key] = instrument_from_json(d[key], f"scenario.{key}")
    inputs = None
    if "inputs" in d:
        try:
            inputs = InputDistribution(tuple(d["inputs"]["pX"]), tuple(d["inputs"]["pY"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"scenario.inputs: {exc}") from exc
    return Scenario(parts["rho"], parts["omega"], parts["instA"], parts["instB"], inputs)


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return scenario_from_json(d)


# --- built-in scenarios --------------------------------------------------------------


def _z_x_measurement(label: Label) -> MeasurementAssemblage:
    return MeasurementAssemblage((label,), projective_povms([PAULI["z"], PAULI["x"]]))


def identity_scenario() -> Scenario:
    """Instruments that do nothing: every condition holds."""
    rho = max_entangled(2)
    cA, cB = Label("CA", 2), Label("CB", 2)
    omega = tensor(DensityMatrix((cA,), np.diag([0.75, 0.25])), DensityMatrix((cB,), np.diag([0.5, 0.5])))
    instA = identity_instrument((rho.labels[0], cA), n_inputs=2)
    instB = identity_instrument((rho.labels[1], cB), n_inputs=2)
    return Scenario(rho, omega, instA, instB)


def outcome_flip_scenario() -> Scenario:
    """Alice flips her catalyst qubit on outcome 1: violates c1, c2 and c3."""
    rho = max_entangled(2)
    cA, cB = Label("CA", 2), Label("CB", 2)
    omega = tensor(DensityMatrix((cA,), np.diag([1.0, 0.0])), DensityMatrix((cB,), np.diag([1.0, 0.0])))
    m = _z_x_measurement(rho.labels[0])
    flip = np.array([[0, 1], [1, 0]], dtype=complex)
    kicks = [[[np.eye(2)], [flip]] for _ in range(2)]
    instA = catalyst_kick_instrument(rho.labels[0], cA, m, kicks)
    instB = povm_instrument(rho.labels[1], (cB,), _z_x_measurement(rho.labels[1]))
    return Scenario(rho, omega, instA, instB)


def cancellation_scenario(q: float = 0.5) -> Scenario:
    """Input-dependent catalyst drifts that cancel on average: c3 holds, c1 and c2 fail.

    Input 0 partially resets Alice's catalyst towards |0>, input 1 towards
    |1>, each with probability ``q``; under uniform inputs the maximally
    mixed catalyst is recovered.
    """
    rho = max_entangled(2)
    cA, cB = Label("CA", 2), Label("CB", 2)
    omega = tensor(DensityMatrix((cA,), np.eye(2) / 2), DensityMatrix((cB,), np.eye(2) / 2))

    def reset(t):
        k0 = np.zeros((2, 2), dtype=complex)
        k1 = np.zeros((2, 2), dtype=complex)
        k0[t, 0] = k1[t, 1] = np.sqrt(q)
        return [np.sqrt(1 - q) * np.eye(2), k0, k1]

    kicks = [[reset(0), reset(0)], [reset(1), reset(1)]]
    instA = catalyst_kick_instrument(rho.labels[0], cA, _z_x_measurement(rho.labels[0]), kicks)
    instB = povm_instrument(rho.labels[1], (cB,), _z_x_measurement(rho.labels[1]))
    return Scenario(rho, omega, instA, instB, InputDistribution.uniform(2, 2))


def catalytic_pipeline_scenario(spec, mXiA: MeasurementAssemblage, mXiB: MeasurementAssemblage, local_argmax) -> Scenario:
    """Local catalytic transformation followed by register-conditioned measurements, as instruments."""
    sys = {lab.name: lab for lab in system_labels(spec)}
    mA, mB = register_conditioned_strategy(mXiA, mXiB, local_argmax, (sys["RA"], sys["RB"]))
    instA, instB = embed_b_into_c2(local_kraus_map(spec, "A"), local_kraus_map(spec, "B"), mA, mB)
    return Scenario(spec.rho, to_dense(build_catalyst(spec)), instA, instB)


def phi_plus_pipeline_scenario(n: int = 2) -> Scenario:
    """Pipeline scenario for rho = phi+ with CHSH-optimal witness on the first copy."""
    spec = CatalystSpec(max_entangled(2), n=n)
    mXiA, mXiB = chsh_witness_on_first_copy(spec)
    _, argmax = local_bound(chsh())
    return catalytic_pipeline_scenario(spec, mXiA, mXiB, argmax)


def chsh_witness_on_first_copy(spec):
    """Tsirelson-optimal CHSH measurements on (A1, B1), identity on the other copies."""
    sys = {lab.name: lab for lab in system_labels(spec)}
    restA = tuple(sys[f"A{k}"] for k in range(2, spec.n + 1))
    restB = tuple(sys[f"B{k}"] for k in range(2, spec.n + 1))
    mA, mB = chsh_optimal_measurements(sys["A1"], sys["B1"])
    return extend_assemblage(mA, restA), extend_assemblage(mB, restB)


BUILTIN_SCENARIOS = {
    "identity": identity_scenario,
    "outcome-flip": outcome_flip_scenario,
    "cancellation": cancellation_scenario,
    "pipeline": phi_plus_pipeline_scenario,
}
