"""Bell functionals, correlations, local bounds and score optimisation."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import (
    DimensionError,
    InvalidPOVM,
    NumericalInconsistency,
    PartitionError,
    RegisterError,
    ShapeError,
    TooLargeToEnumerate,
)
from .qstate import (
    VALID_TOL,
    DensityMatrix,
    Label,
    label_from_json,
    label_to_json,
    matrix_from_json,
    matrix_to_json,
    swap_subsystems,
    total_dim,
)

ENUMERATION_LIMIT = 10**7
CORRELATION_TOL = 1e-9

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class BellFunctional:
    """Coefficients ``coeffs[x, y, a, b]`` of a linear Bell expression."""

    coeffs: np.ndarray
    name: str = ""

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 4 or min(c.shape) < 1:
            raise ShapeError(f"coefficients must be a non-empty 4-d tensor, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.coeffs.shape

    @property
    def nX(self):
        return self.shape[0]

    @property
    def nY(self):
        return self.shape[1]

    @property
    def nA(self):
        return self.shape[2]

    @property
    def nB(self):
        return self.shape[3]

    def to_json(self) -> dict:
        return {"nX": self.nX, "nY": self.nY, "nA": self.nA, "nB": self.nB, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "BellFunctional":
        coeffs = np.asarray(d["coeffs"], dtype=float)
        expected = (int(d["nX"]), int(d["nY"]), int(d["nA"]), int(d["nB"]))
        if coeffs.shape != expected:
            raise ShapeError(f"coeffs shape {coeffs.shape} does not match declared {expected}")
        return cls(coeffs, d.get("name", ""))


def chsh() -> BellFunctional:
    """CHSH in correlator form: E00 + E01 + E10 - E11, local bound 2."""
    c = np.empty((2, 2, 2, 2))
    for x, y, a, b in itertools.product(range(2), repeat=4):
        c[x, y, a, b] = (-1) ** (a + b) * (-1) ** (x * y)
    return BellFunctional(c, "chsh")


NAMED_FUNCTIONALS = {"chsh": chsh}


def load_functional(spec: str) -> BellFunctional:
    """Resolve a built-in name or a path to a functional JSON file."""
    if spec in NAMED_FUNCTIONALS:
        return NAMED_FUNCTIONALS[spec]()
    with open(spec) as fh:
        return BellFunctional.from_json(json.load(fh))


@dataclass(frozen=True)
class DeterministicStrategy:
    alice: tuple[int, ...]
    bob: tuple[int, ...]

    def table(self, nA: int, nB: int) -> "CorrelationTable":
        nX, nY = len(self.alice), len(self.bob)
        p = np.zeros((nX, nY, nA, nB))
        for x, y in itertools.product(range(nX), range(nY)):
            p[x, y, self.alice[x], self.bob[y]] = 1.0
        return CorrelationTable(p)


@dataclass(frozen=True)
class LhvModel:
    weights: tuple[float, ...]
    strategies: tuple[DeterministicStrategy, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.strategies):
            raise ValueError("weights and strategies differ in length")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("LHV weights must be a probability vector")

    def table(self, nA: int, nB: int) -> "CorrelationTable":
        p = sum(w * s.table(nA, nB).p for w, s in zip(self.weights, self.strategies))
        return CorrelationTable(p)


@dataclass(frozen=True, eq=False)
class MeasurementAssemblage:
    """POVMs for one party: ``povms[x, a]`` is the effect for outcome ``a`` of input ``x``."""

    labels: tuple[Label, ...]
    povms: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        povms = np.array(self.povms, dtype=complex)
        d = total_dim(labels)
        if povms.ndim != 4 or povms.shape[2:] != (d, d):
            raise DimensionError(f"povm array shape {povms.shape} incompatible with dimension {d}")
        herm = np.abs(povms - povms.conj().swapaxes(-1, -2)).max(initial=0.0)
        if herm > VALID_TOL:
            raise InvalidPOVM(f"effects not Hermitian (residue {herm:.3g})")
        hp = (povms + povms.conj().swapaxes(-1, -2)) / 2
        min_eig = np.linalg.eigvalsh(hp.reshape(-1, d, d)).min(initial=0.0)
        if min_eig < -VALID_TOL:
            raise InvalidPOVM(f"effect has negative eigenvalue {min_eig:.3g}")
        comp = np.abs(povms.sum(axis=1) - np.eye(d)).max(initial=0.0)
        if comp > VALID_TOL:
            raise InvalidPOVM(f"effects do not sum to identity (residue {comp:.3g})")
        povms.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "povms", povms)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)

    @property
    def n_inputs(self) -> int:
        return self.povms.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.povms.shape[1]


@dataclass(frozen=True, eq=False)
class CorrelationTable:
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 4:
            raise ShapeError(f"correlation table must be 4-d, got shape {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def residues(self) -> dict:
        p = self.p
        norm = float(np.abs(p.sum(axis=(2, 3)) - 1).max())
        pa = p.sum(axis=3)  # (x, y, a)
        pb = p.sum(axis=2)  # (x, y, b)
        sig_a = float(np.abs(pa - pa[:, :1, :]).max())
        sig_b = float(np.abs(pb - pb[:1, :, :]).max())
        rng = float(max(0.0, -p.min(), p.max() - 1))
        return {"normalisation": norm, "signalling_a": sig_a, "signalling_b": sig_b, "range": rng}

    def is_valid(self, tol: float = CORRELATION_TOL) -> bool:
        r = self.residues()
        return r["range"] <= VALID_TOL and max(r["normalisation"], r["signalling_a"], r["signalling_b"]) <= tol


def _split_state(state: DensityMatrix, namesA: Sequence[str], namesB: Sequence[str]) -> np.ndarray:
    """Reorder ``state`` to (A..., B...) and return it as a (dA, dB, dA, dB) tensor."""
    namesA, namesB = list(namesA), list(namesB)
    if set(namesA) & set(namesB):
        raise PartitionError("party label sets overlap")
    if sorted(namesA + namesB) != sorted(state.names):
        raise PartitionError(f"parties {namesA} | {namesB} do not cover state labels {list(state.names)}")
    ordered = swap_subsystems(state, namesA + namesB)
    dA = total_dim([state.label(n) for n in namesA])
    dB = ordered.dim // dA
    return ordered.data.reshape(dA, dB, dA, dB)


def correlations(state: DensityMatrix, mA: MeasurementAssemblage, mB: MeasurementAssemblage) -> CorrelationTable:
    """p(ab|xy) = tr[(M_a|x (x) M_b|y) state]."""
    rho = _split_state(state, mA.names, mB.names)
    # rho[i, j, k, l]: row (i, j), column (k, l)
    p = np.einsum("xaki,yblj,ijkl->xyab", mA.povms, mB.povms, rho)
    if np.abs(p.imag).max(initial=0.0) > 1e-8:
        raise NumericalInconsistency("correlations have a non-negligible imaginary part")
    table = CorrelationTable(p.real)
    if not table.is_valid():
        raise NumericalInconsistency(f"correlation invariants violated: {table.residues()}")
    return table


def bell_score(f: BellFunctional, p: CorrelationTable) -> float:
    if f.shape != p.p.shape:
        raise ShapeError(f"functional shape {f.shape} != table shape {p.p.shape}")
    return float(np.sum(f.coeffs * p.p))


def local_bound(f: BellFunctional) -> tuple[float, DeterministicStrategy]:
    """Exact local bound by enumerating deterministic strategies.

    Deterministic strategies are the extreme points of the set of LHV
    models, so the maximum over them is the maximum over all local
    correlations. Ties are resolved toward the lexicographically smallest
    (alice, bob) pair.
    """
    nX, nY, nA, nB = f.shape
    if nA**nX * nB**nY > ENUMERATION_LIMIT:
        raise TooLargeToEnumerate(f"{nA}^{nX} * {nB}^{nY} strategies exceed {ENUMERATION_LIMIT}")
    best, a, b = _kernels.local_bound_kernel(f.coeffs)
    return best, DeterministicStrategy(tuple(int(v) for v in a), tuple(int(v) for v in b))


# --- two-qubit CHSH -------------------------------------------------------


def correlation_matrix(state: DensityMatrix) -> np.ndarray:
    """T_ij = tr[state (sigma_i (x) sigma_j)] for a two-qubit state."""
    if state.dims != (2, 2):
        raise DimensionError(f"need a 2x2 state, got dims {state.dims}")
    paulis = [PAULI[k] for k in "xyz"]
    return np.array([[np.trace(state.data @ np.kron(si, sj)).real for sj in paulis] for si in paulis])


def chsh_two_qubit_max(state: DensityMatrix) -> float:
    """Maximal CHSH value of a two-qubit state over projective measurements."""
    T = correlation_matrix(state)
    t = np.sort(np.linalg.eigvalsh(T.T @ T))[::-1]
    return float(2 * np.sqrt(max(t[0] + t[1], 0.0)))


# --- see-saw --------------------------------------------------------------


@dataclass
class SeesawResult:
    score: float
    mA: MeasurementAssemblage
    mB: MeasurementAssemblage
    converged: bool
    iterations: int
    history: list = field(default_factory=list, repr=False)


def _random_projective(rng: np.random.Generator, n_inputs: int, n_outcomes: int, d: int, balanced: bool = False) -> np.ndarray:
    povms = np.zeros((n_inputs, n_outcomes, d, d), dtype=complex)
    for x in range(n_inputs):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        _, vecs = np.linalg.eigh(g + g.conj().T)
        owner = np.arange(d) % n_outcomes if balanced else rng.integers(n_outcomes, size=d)
        for k in range(d):
            v = vecs[:, k]
            povms[x, owner[k]] += np.outer(v, v.conj())
    return povms


def _best_binary_response(eff: np.ndarray, traceless: bool = False) -> np.ndarray:
    """Optimal two-outcome effects for effective operators ``eff[x, a]``.

    Outcome 0 gets the projector onto the non-negative eigenspace of
    eff[x, 0] - eff[x, 1]; zero eigenvalues go to outcome 0. With
    ``traceless`` the projector is forced to rank d/2 (top eigenvectors),
    i.e. the optimum over +-1 observables with zero trace.
    """
    n_inputs, _, d, _ = eff.shape
    out = np.empty_like(eff)
    eye = np.eye(d)
    for x in range(n_inputs):
        diff = eff[x, 0] - eff[x, 1]
        vals, vecs = np.linalg.eigh((diff + diff.conj().T) / 2)
        keep = vecs[:, d - d // 2 :] if traceless else vecs[:, vals >= 0]
        proj = keep @ keep.conj().T
        out[x, 0] = proj
        out[x, 1] = eye - proj
    return out


def _seesaw_run(coeffs, rho, povB, max_iter, tol, traceless):
    # rho[i, j, k, l]; effective operators act on A (i, k) or B (j, l)
    history = []
    prev = -np.inf
    converged = False
    povA = None
    for it in range(max_iter):
        margA = np.einsum("yblj,ijkl->ybik", povB, rho)  # tr_B[(1 (x) M_b|y) rho]
        effA = np.einsum("xyab,ybik->xaik", coeffs, margA)
        povA = _best_binary_response(effA, traceless)
        margB = np.einsum("xaki,ijkl->xajl", povA, rho)
        effB = np.einsum("xyab,xajl->ybjl", coeffs, margB)
        povB = _best_binary_response(effB, traceless)
        score = float(np.einsum("yblj,ybjl->", povB, effB).real)
        history.append(score)
        if score - prev < tol:
            converged = True
            break
        prev = score
    return score, povA, povB, converged, it + 1, history


def seesaw_optimize(
    f: BellFunctional,
    state: DensityMatrix,
    partition: tuple[Sequence[str], Sequence[str]],
    restarts: int = 16,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-9,
    traceless: bool = False,
) -> SeesawResult:
    """Lower-bound the best score of ``f`` on ``state`` by alternating optimisation.

    Each restart draws Bob's starting projective measurements from the
    eigenbases of Gaussian Hermitian matrices, then alternates exact best
    responses for Alice and Bob. The returned score is achieved by the
    returned measurements, so it is a certified lower bound. Restart ``k``
    uses the ``k``-th child of ``SeedSequence(seed)``, so results do not
    depend on evaluation order.

    By default trivial effects (identity / zero) are allowed, so the result
    is never below the value of the best deterministic response. Pass
    ``traceless=True`` to restrict both parties to rank-d/2 projectors.
    """
    if f.nA != 2 or f.nB != 2:
        raise NotImplementedError("see-saw best response is implemented for two-outcome functionals")
    namesA, namesB = list(partition[0]), list(partition[1])
    rho = _split_state(state, namesA, namesB)
    dB = rho.shape[1]
    labelsA = tuple(state.label(n) for n in namesA)
    labelsB = tuple(state.label(n) for n in namesB)
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        povB0 = _random_projective(rng, f.nY, f.nB, dB, balanced=traceless)
        score, povA, povB, conv, its, hist = _seesaw_run(f.coeffs, rho, povB0, max_iter, tol, traceless)
        if np.any(np.diff(hist) < -1e-10):
            raise NumericalInconsistency("see-saw score decreased between iterations")
        if best is None or score > best[0]:
            best = (score, povA, povB, conv, its, hist)
    score, povA, povB, conv, its, hist = best
    mA = MeasurementAssemblage(labelsA, povA)
    mB = MeasurementAssemblage(labelsB, povB)
    # report the score actually achieved by the returned measurements
    achieved = bell_score(f, correlations(state, mA, mB))
    return SeesawResult(achieved, mA, mB, conv, its, hist)


def projective_povms(observables: Sequence[np.ndarray]) -> np.ndarray:
    """Two-outcome projectors (1 + O)/2, (1 - O)/2 for each +-1-valued observable."""
    out = []
    for O in observables:
        eye = np.eye(O.shape[0])
        out.append([(eye + O) / 2, (eye - O) / 2])
    return np.array(out, dtype=complex)


def chsh_optimal_measurements(labelA: Label, labelB: Label) -> tuple[MeasurementAssemblage, MeasurementAssemblage]:
    """Z, X for Alice and (Z +- X)/sqrt2 for Bob: reaches 2*sqrt2 on phi+."""
    Z, X = PAULI["z"], PAULI["x"]
    mA = MeasurementAssemblage((labelA,), projective_povms([Z, X]))
    mB = MeasurementAssemblage((labelB,), projective_povms([(Z + X) / np.sqrt(2), (Z - X) / np.sqrt(2)]))
    return mA, mB


def extend_assemblage(m: MeasurementAssemblage, extra: Sequence[Label]) -> MeasurementAssemblage:
    """Same measurement, acting trivially on additional labels appended on the right."""
    if not extra:
        return m
    eye = np.eye(total_dim(extra))
    povms = np.array([[np.kron(op, eye) for op in row] for row in m.povms])
    return MeasurementAssemblage(m.labels + tuple(extra), povms)


# --- register-conditioned strategy ----------------------------------------


def _conditioned_povms(m: MeasurementAssemblage, reg: Label, response: Sequence[int]) -> np.ndarray:
    d = total_dim(m.labels)
    nI, nO = m.n_inputs, m.n_outcomes
    out = np.zeros((nI, nO, d * reg.dim, d * reg.dim), dtype=complex)
    eye = np.eye(d)
    for r in range(reg.dim):
        proj = np.zeros((reg.dim, reg.dim))
        proj[r, r] = 1.0
        for x in range(nI):
            for a in range(nO):
                if r == 0:
                    op = m.povms[x, a]
                else:
                    op = eye if a == response[x] else 0 * eye
                out[x, a] += np.kron(op, proj)
    return out


def register_conditioned_strategy(
    mXiA: MeasurementAssemblage,
    mXiB: MeasurementAssemblage,
    local_argmax: DeterministicStrategy,
    register_labels: tuple[Label, Label],
) -> tuple[MeasurementAssemblage, MeasurementAssemblage]:
    """Measurements that read a shared classical flag before acting.

    On flag value 0 each party applies its witnessing measurement; on any
    other value it outputs the deterministic response that attains the
    local bound. The resulting assemblages act on (witness labels, register)
    in that order.
    """
    regA, regB = register_labels
    for reg in (regA, regB):
        if not reg.is_register or reg.dim < 2:
            raise RegisterError(f"{reg.name!r} must be a classical register of dimension >= 2")
    if len(local_argmax.alice) != mXiA.n_inputs or len(local_argmax.bob) != mXiB.n_inputs:
        raise ShapeError("deterministic strategy does not match the number of inputs")
    mA = MeasurementAssemblage(mXiA.labels + (regA,), _conditioned_povms(mXiA, regA, local_argmax.alice))
    mB = MeasurementAssemblage(mXiB.labels + (regB,), _conditioned_povms(mXiB, regB, local_argmax.bob))
    return mA, mB


def assemblage_to_json(m: MeasurementAssemblage) -> dict:
    return {
        "labels": [label_to_json(lab) for lab in m.labels],
        "povms": [[matrix_to_json(op) for op in row] for row in m.povms],
    }


def assemblage_from_json(d: dict) -> MeasurementAssemblage:
    labels = tuple(label_from_json(x) for x in d["labels"])
    D = total_dim(labels)
    povms = np.array([[matrix_from_json(op, D) for op in row] for row in d["povms"]])
    return MeasurementAssemblage(labels, povms)
