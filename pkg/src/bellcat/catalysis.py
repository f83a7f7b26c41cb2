"""Catalyst construction and the local n-copy catalytic transformation.

States here are classical mixtures of product states, so they are stored
as branches: a probability, the values of the classical registers, and a
list of dense factors on disjoint label groups. Dense matrices are only
built on request (``to_dense`` / ``dense_submatrix``) and serve as an
independent check on the branch bookkeeping.

Label naming (Alice / Bob):

* input system: ``A`` / ``B``
* output copies ``A1..An`` / ``B1..Bn`` and output flag ``RA`` / ``RB``
* catalyst slots ``CA1..CA{n-1}`` / ``CB1..CB{n-1}``, catalyst register
  ``CRA`` / ``CRB`` (dimension n)
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .channels import KrausMap
from .errors import DimensionError, NumericalInconsistency, RegisterError, TooLargeToMaterialize, UnknownLabel
from .qstate import (
    DensityMatrix,
    Label,
    basis_projector,
    get_dense_cap,
    label_from_json,
    label_to_json,
    matrix_from_json,
    matrix_to_json,
    partial_trace,
    register,
    swap_subsystems,
    tensor,
    total_dim,
)
from .states import ground_state

PROB_TOL = 1e-12
EXACT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Branch:
    prob: float
    registers: dict
    factors: tuple[DensityMatrix, ...]

    def factor_with(self, name: str) -> DensityMatrix:
        for f in self.factors:
            if name in f.names:
                return f
        raise UnknownLabel(name)


@dataclass(frozen=True, eq=False)
class BranchedCqState:
    labels: tuple[Label, ...]
    branches: tuple[Branch, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "branches", tuple(self.branches))
        names = [lab.name for lab in labels]
        if len(set(names)) != len(names):
            raise ValueError("duplicate label names in universe")
        quantum = {lab.name for lab in labels if not lab.is_register}
        classical = {lab.name: lab for lab in labels if lab.is_register}
        total = 0.0
        for br in self.branches:
            if br.prob < -PROB_TOL:
                raise ValueError(f"negative branch probability {br.prob}")
            total += br.prob
            covered = [n for f in br.factors for n in f.names]
            if len(covered) != len(set(covered)) or set(covered) != quantum:
                raise ValueError(f"branch factors {covered} do not partition quantum labels {sorted(quantum)}")
            if set(br.registers) != set(classical):
                raise RegisterError(f"branch registers {sorted(br.registers)} != {sorted(classical)}")
            for n, v in br.registers.items():
                if not 0 <= v < classical[n].dim:
                    raise RegisterError(f"register {n} value {v} out of range")
        if self.branches and abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"branch probabilities sum to {total}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)

    @property
    def dim(self) -> int:
        return total_dim(self.labels)

    def label(self, name: str) -> Label:
        for lab in self.labels:
            if lab.name == name:
                return lab
        raise UnknownLabel(name)

    def total_probability(self) -> float:
        return float(sum(br.prob for br in self.branches))


# --- canonical form ---------------------------------------------------------


def _sorted_factor(f: DensityMatrix, order: dict) -> DensityMatrix:
    return swap_subsystems(f, sorted(f.names, key=order.__getitem__))


def _blocks(branches: Sequence[Branch], order: dict) -> list[list[str]]:
    """Connected label groups over all branches (finest common coarsening)."""
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            x = parent[x]
        return x

    for br in branches:
        for f in br.factors:
            root = find(f.names[0])
            for n in f.names[1:]:
                parent[find(n)] = root
    groups = {}
    for n in parent:
        groups.setdefault(find(n), []).append(n)
    blocks = [sorted(g, key=order.__getitem__) for g in groups.values()]
    return sorted(blocks, key=lambda g: order[g[0]])


def _block_factor(br: Branch, block: list[str], order: dict) -> DensityMatrix:
    parts = []
    for n in block:
        f = br.factor_with(n)
        if not any(f is g for g in parts):
            parts.append(f)
    return swap_subsystems(tensor(*parts), block)


def _merge(branches: list[Branch], order: dict) -> Branch:
    if len(branches) == 1:
        br = branches[0]
        factors = sorted((_sorted_factor(f, order) for f in br.factors), key=lambda f: order[f.names[0]])
        return Branch(br.prob, dict(br.registers), tuple(factors))
    blocks = _blocks(branches, order)
    per_branch = [[_block_factor(br, blk, order) for blk in blocks] for br in branches]
    differing = [
        j for j in range(len(blocks)) if any(not np.array_equal(pb[j].data, per_branch[0][j].data) for pb in per_branch[1:])
    ]
    if len(differing) > 1:
        # mixture of products over several groups: fuse them into one factor
        fused = [n for j in differing for n in blocks[j]]
        fused.sort(key=order.__getitem__)
        keep = [j for j in range(len(blocks)) if j not in differing]
        new_blocks = [blocks[j] for j in keep] + [fused]
        per_branch = [
            [pb[j] for j in keep] + [swap_subsystems(tensor(*[pb[j] for j in differing]), fused)] for pb in per_branch
        ]
        blocks = new_blocks
        differing = [len(blocks) - 1]
    probs = np.array([br.prob for br in branches])
    p = float(probs.sum())
    factors = list(per_branch[0])
    for j in differing:
        if p > 0:
            mix = sum(w * pb[j].data for w, pb in zip(probs, per_branch)) / p
            factors[j] = DensityMatrix(per_branch[0][j].labels, mix)
    factors.sort(key=lambda f: order[f.names[0]])
    return Branch(p, dict(branches[0].registers), tuple(factors))


def canonicalize(b: BranchedCqState) -> BranchedCqState:
    """Merge branches with equal register values and sort everything by label order."""
    order = {n: i for i, n in enumerate(b.names)}
    reg_names = [lab.name for lab in b.labels if lab.is_register]
    groups: dict = {}
    for br in b.branches:
        groups.setdefault(tuple(br.registers[n] for n in reg_names), []).append(br)
    return BranchedCqState(b.labels, tuple(_merge(groups[k], order) for k in sorted(groups)))


@dataclass(frozen=True)
class Comparison:
    equal: bool
    prob_residue: float
    factor_residue: float
    reason: str = ""


def compare(a: BranchedCqState, b: BranchedCqState, atol: float = EXACT_TOL) -> Comparison:
    """Compare two branched states in canonical form."""
    if a.labels != b.labels:
        return Comparison(False, np.inf, np.inf, "label universes differ")
    ca, cb = canonicalize(a), canonicalize(b)
    if len(ca.branches) != len(cb.branches):
        return Comparison(False, np.inf, np.inf, "different number of register assignments")
    prob_res = 0.0
    fac_res = 0.0
    for x, y in zip(ca.branches, cb.branches):
        if x.registers != y.registers:
            return Comparison(False, np.inf, np.inf, f"register values {x.registers} vs {y.registers}")
        prob_res = max(prob_res, abs(x.prob - y.prob))
        if [f.names for f in x.factors] != [f.names for f in y.factors]:
            # different groupings can still describe the same state
            order = {n: i for i, n in enumerate(a.names)}
            blocks = _blocks([x, y], order)
            fx = [_block_factor(x, blk, order) for blk in blocks]
            fy = [_block_factor(y, blk, order) for blk in blocks]
        else:
            fx, fy = x.factors, y.factors
        for f, g in zip(fx, fy):
            fac_res = max(fac_res, float(np.abs(f.data - g.data).max()))
    ok = prob_res <= atol and fac_res <= atol
    return Comparison(ok, prob_res, fac_res, "" if ok else "residue above tolerance")


# --- marginals and dense views ---------------------------------------------


def marginal(b: BranchedCqState, keep: Iterable[str]) -> BranchedCqState:
    keep = set(keep)
    for n in keep:
        b.label(n)
    labels = tuple(lab for lab in b.labels if lab.name in keep)
    branches = []
    for br in b.branches:
        factors = []
        for f in br.factors:
            inside = [n for n in f.names if n in keep]
            if len(inside) == len(f.names):
                factors.append(f)
            elif inside:
                factors.append(partial_trace(f, inside))
        regs = {n: v for n, v in br.registers.items() if n in keep}
        branches.append(Branch(br.prob, regs, tuple(factors)))
    return canonicalize(BranchedCqState(labels, tuple(branches)))


def _check_cap(D: int):
    if D > get_dense_cap():
        raise TooLargeToMaterialize(f"dense dimension {D} exceeds cap {get_dense_cap()}")


def to_dense(b: BranchedCqState) -> DensityMatrix:
    """sum_k p_k (factors (x) register projectors), in universe label order."""
    _check_cap(b.dim)
    out = np.zeros((b.dim, b.dim), dtype=complex)
    for br in b.branches:
        ops = list(br.factors) + [basis_projector(b.label(n), v) for n, v in br.registers.items()]
        out += br.prob * swap_subsystems(tensor(*ops), b.names).data
    return DensityMatrix(b.labels, out)


def dense_submatrix(b: BranchedCqState, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Entries ``M[rows][:, cols]`` of the dense state without building ``M``.

    Entries are evaluated element-wise from the mixed-radix digits of the
    global indices, so arbitrarily large states can be probed block by block.
    """
    dims = tuple(lab.dim for lab in b.labels)
    rows, cols = np.asarray(rows), np.asarray(cols)
    rd = dict(zip(b.names, np.unravel_index(rows, dims)))
    cd = dict(zip(b.names, np.unravel_index(cols, dims)))
    out = np.zeros((len(rows), len(cols)), dtype=complex)
    for br in b.branches:
        val = np.full((len(rows), len(cols)), br.prob, dtype=complex)
        for f in br.factors:
            ri = np.ravel_multi_index(tuple(rd[n] for n in f.names), f.dims)
            ci = np.ravel_multi_index(tuple(cd[n] for n in f.names), f.dims)
            val *= f.data[np.ix_(ri, ci)]
        for n, v in br.registers.items():
            val *= np.outer(rd[n] == v, cd[n] == v)
        out += val
    return out


def blockwise_partial_trace(b: BranchedCqState, keep: Sequence[str]) -> DensityMatrix:
    """Dense partial trace evaluated block by block from ``dense_submatrix``.

    Only the kept block (and one traced basis index at a time) is ever
    materialised. ``keep`` must be a prefix of the label universe.
    """
    keep = list(keep)
    if keep != list(b.names[: len(keep)]):
        raise ValueError("blockwise partial trace needs the kept labels to be a prefix of the universe")
    dk = total_dim(b.labels[: len(keep)])
    dt = total_dim(b.labels[len(keep):])
    _check_cap(dk)
    base = np.arange(dk) * dt
    out = np.zeros((dk, dk), dtype=complex)
    for c in range(dt):
        idx = base + c
        out += dense_submatrix(b, idx, idx)
    return DensityMatrix(b.labels[: len(keep)], out)


# --- protocol ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CatalystSpec:
    """System state ``rho`` on two labels, local factors of the product state, copy number."""

    rho: DensityMatrix
    sigmaA: DensityMatrix | None = None
    sigmaB: DensityMatrix | None = None
    n: int = 2

    def __post_init__(self):
        if len(self.rho.labels) != 2:
            raise DimensionError("rho must be bipartite")
        if self.n < 2:
            raise ValueError(f"copy number must be >= 2, got {self.n}")
        dA, dB = self.rho.dims
        rho = self.rho.relabel(dict(zip(self.rho.names, ("A", "B"))))
        sA = self.sigmaA if self.sigmaA is not None else ground_state(Label("A", dA))
        sB = self.sigmaB if self.sigmaB is not None else ground_state(Label("B", dB))
        if sA.dims != (dA,) or sB.dims != (dB,):
            raise DimensionError(f"sigma factors {sA.dims}, {sB.dims} do not match local dims {(dA, dB)}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "sigmaA", sA.relabel({sA.names[0]: "A"}))
        object.__setattr__(self, "sigmaB", sB.relabel({sB.names[0]: "B"}))

    @property
    def dA(self) -> int:
        return self.rho.dims[0]

    @property
    def dB(self) -> int:
        return self.rho.dims[1]


def party_of(name: str) -> str:
    """'A' or 'B' from the naming scheme in the module docstring."""
    core = name.rstrip("0123456789")
    if core in ("A", "RA", "CA", "CRA"):
        return "A"
    if core in ("B", "RB", "CB", "CRB"):
        return "B"
    raise ValueError(f"label {name!r} belongs to no party")


def system_labels(spec: CatalystSpec) -> tuple[Label, ...]:
    n = spec.n
    return (
        *(Label(f"A{k}", spec.dA) for k in range(1, n + 1)),
        register("RA", 2),
        *(Label(f"B{k}", spec.dB) for k in range(1, n + 1)),
        register("RB", 2),
    )


def catalyst_labels(spec: CatalystSpec) -> tuple[Label, ...]:
    n = spec.n
    return (
        *(Label(f"CA{k}", spec.dA) for k in range(1, n)),
        register("CRA", n),
        *(Label(f"CB{k}", spec.dB) for k in range(1, n)),
        register("CRB", n),
    )


def _rho_on(spec, a: str, b: str) -> DensityMatrix:
    return spec.rho.relabel({"A": a, "B": b})


def build_catalyst(spec: CatalystSpec) -> BranchedCqState:
    """Uniform mixture over i of (rho on the first i slot pairs, sigma on the rest) with flags [ii]."""
    n = spec.n
    branches = []
    for i in range(n):
        factors = []
        for k in range(1, n):
            if k <= i:
                factors.append(_rho_on(spec, f"CA{k}", f"CB{k}"))
            else:
                factors.append(spec.sigmaA.relabel({"A": f"CA{k}"}))
                factors.append(spec.sigmaB.relabel({"B": f"CB{k}"}))
        branches.append(Branch(1.0 / n, {"CRA": i, "CRB": i}, tuple(factors)))
    return BranchedCqState(catalyst_labels(spec), tuple(branches))


def initial_state(spec: CatalystSpec) -> BranchedCqState:
    """rho on (A, B) alongside the catalyst."""
    cat = build_catalyst(spec)
    labels = spec.rho.labels + cat.labels
    branches = [Branch(br.prob, dict(br.registers), (spec.rho,) + br.factors) for br in cat.branches]
    return BranchedCqState(labels, tuple(branches))


def closed_form_output(spec: CatalystSpec) -> BranchedCqState:
    """(1/n) rho^n (x) [00] + ((n-1)/n) sigma^n (x) [11] on the output systems."""
    n = spec.n
    good = tuple(_rho_on(spec, f"A{k}", f"B{k}") for k in range(1, n + 1))
    bad = tuple(
        f
        for k in range(1, n + 1)
        for f in (spec.sigmaA.relabel({"A": f"A{k}"}), spec.sigmaB.relabel({"B": f"B{k}"}))
    )
    branches = (Branch(1.0 / n, {"RA": 0, "RB": 0}, good), Branch((n - 1) / n, {"RA": 1, "RB": 1}, bad))
    return canonicalize(BranchedCqState(system_labels(spec), branches))


class _LocalOps:
    """Mutable view of one branch on which parties act on their own labels only.

    Every call records (party, operation, labels) and refuses labels of the
    other party. Factors created by ``prepare`` are single-party; at the end
    :meth:`audit` checks that every factor spanning both parties descends
    from a factor that was present initially.
    """

    def __init__(self, branch: Branch, labels: dict):
        self.factors = list(branch.factors)
        self.registers = dict(branch.registers)
        self.labels = dict(labels)
        self.inherited = {id(f) for f in self.factors}
        self.log: list[tuple[str, str, tuple[str, ...]]] = []

    def _own(self, party, op, names):
        for n in names:
            if party_of(n) != party:
                raise NumericalInconsistency(f"party {party} touched label {n!r} of the other party")
        self.log.append((party, op, tuple(names)))

    def read(self, party, reg):
        self._own(party, "read", [reg])
        return self.registers[reg]

    def move(self, party, mapping: dict):
        self._own(party, "move", list(mapping) + list(mapping.values()))
        occupied = {n for f in self.factors for n in f.names} - set(mapping)
        if occupied & set(mapping.values()):
            raise NumericalInconsistency(f"move target already occupied: {occupied & set(mapping.values())}")
        new = []
        for f in self.factors:
            if any(n in mapping for n in f.names):
                g = f.relabel(mapping)
                if id(f) in self.inherited:
                    self.inherited.add(id(g))
                new.append(g)
            else:
                new.append(f)
        self.factors = new
        for old, nu in mapping.items():
            self.labels[nu] = Label(nu, self.labels[old].dim, self.labels[old].kind)

    def discard(self, party, names):
        self._own(party, "discard", names)
        drop = set(names)
        new = []
        for f in self.factors:
            rest = [n for n in f.names if n not in drop]
            if len(rest) == len(f.names):
                new.append(f)
            elif rest:
                g = partial_trace(f, rest)
                if id(f) in self.inherited:
                    self.inherited.add(id(g))
                new.append(g)
        self.factors = new

    def prepare(self, party, name, state: DensityMatrix):
        self._own(party, "prepare", [name])
        self.factors.append(state.relabel({state.names[0]: name}))

    def set_register(self, party, name, value):
        self._own(party, "set", [name])
        self.registers[name] = value

    def audit(self):
        for f in self.factors:
            parties = {party_of(n) for n in f.names}
            if len(parties) > 1 and id(f) not in self.inherited:
                raise NumericalInconsistency(f"factor on {f.names} spans both parties but was created locally")


def _party_step(ops: _LocalOps, spec: CatalystSpec, party: str):
    n = spec.n
    sigma = spec.sigmaA if party == "A" else spec.sigmaB
    P = party
    i = ops.read(P, f"CR{P}")
    if i == n - 1:
        # n copies available: move them to the outputs, reset the catalyst
        ops.move(P, {P: f"{P}1", **{f"C{P}{k}": f"{P}{k + 1}" for k in range(1, n)}})
        for k in range(1, n):
            ops.prepare(P, f"C{P}{k}", sigma)
        ops.set_register(P, f"R{P}", 0)
        ops.set_register(P, f"CR{P}", 0)
    else:
        # store the input copy in slot i+1, emit the product state
        slot = f"C{P}{i + 1}"
        ops.discard(P, [slot])
        ops.move(P, {P: slot})
        for k in range(1, n + 1):
            ops.prepare(P, f"{P}{k}", sigma)
        ops.set_register(P, f"R{P}", 1)
        ops.set_register(P, f"CR{P}", i + 1)


def catalytic_transform(spec: CatalystSpec, log: list | None = None) -> BranchedCqState:
    """Apply the local protocol branch by branch to rho (x) catalyst.

    Alice and Bob each read their copy of the catalyst register and act on
    their own labels only. If ``log`` is given, it receives one list of
    (party, operation, labels) records per branch.
    """
    start = initial_state(spec)
    out_labels = system_labels(spec) + catalyst_labels(spec)
    branches = []
    for br in start.branches:
        ops = _LocalOps(br, {lab.name: lab for lab in start.labels})
        _party_step(ops, spec, "A")
        _party_step(ops, spec, "B")
        ops.audit()
        if log is not None:
            log.append(ops.log)
        branches.append(Branch(br.prob, ops.registers, tuple(ops.factors)))
    return canonicalize(BranchedCqState(out_labels, tuple(branches)))


def system_marginal(state: BranchedCqState, spec: CatalystSpec) -> BranchedCqState:
    return marginal(state, [lab.name for lab in system_labels(spec)])


def catalyst_marginal(state: BranchedCqState, spec: CatalystSpec) -> BranchedCqState:
    return marginal(state, [lab.name for lab in catalyst_labels(spec)])


@dataclass
class CatalysisCheck:
    catalytic: Comparison
    output_law: Comparison
    probability_sum: float

    @property
    def passed(self) -> bool:
        return self.catalytic.equal and self.output_law.equal and abs(self.probability_sum - 1) <= PROB_TOL


def verify(spec: CatalystSpec, atol: float = EXACT_TOL) -> CatalysisCheck:
    out = catalytic_transform(spec)
    return CatalysisCheck(
        compare(catalyst_marginal(out, spec), build_catalyst(spec), atol),
        compare(system_marginal(out, spec), closed_form_output(spec), atol),
        out.total_probability(),
    )


# --- physical Kraus form of each party's operation ------------------------------


def _basis(d: int, k: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[k] = 1.0
    return v


def _kron_all(vecs) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for v in vecs:
        out = np.kron(out, v)
    return out


def local_kraus_map(spec: CatalystSpec, party: str) -> KrausMap:
    """One party's protocol step written as an explicit Kraus map.

    Input labels: (P, CP1..CP{n-1}, CRP); output labels:
    (P1..Pn, RP, CP1..CP{n-1}, CRP). Used as a physical cross-check of the
    label-rebinding implementation and to build instruments.
    """
    n, P = spec.n, party
    d = spec.dA if P == "A" else spec.dB
    sigma = (spec.sigmaA if P == "A" else spec.sigmaB).data
    vals, vecs = np.linalg.eigh(sigma)
    prep = [np.sqrt(max(v, 0.0)) * vecs[:, j] for j, v in enumerate(vals) if v > 1e-15]

    in_labels = (Label(P, d), *(Label(f"C{P}{k}", d) for k in range(1, n)), register(f"CR{P}", n))
    out_labels = (
        *(Label(f"{P}{k}", d) for k in range(1, n + 1)),
        register(f"R{P}", 2),
        *(Label(f"C{P}{k}", d) for k in range(1, n)),
        register(f"CR{P}", n),
    )
    din, dout = total_dim(in_labels), total_dim(out_labels)
    in_dims = tuple(lab.dim for lab in in_labels)
    kraus = []
    # register value n-1: outputs get (input, slots), catalyst slots re-prepared
    for js in itertools.product(range(len(prep)), repeat=n - 1):
        K = np.zeros((dout, din), dtype=complex)
        for a, *cs in itertools.product(*(range(x) for x in in_dims[:-1])):
            col = np.ravel_multi_index((a, *cs, n - 1), in_dims)
            K[:, col] = _kron_all(
                [_basis(d, a), *(_basis(d, c) for c in cs), _basis(2, 0), *(prep[j] for j in js), _basis(n, 0)]
            )
        kraus.append(K)
    # register value i < n-1: discard slot i+1 (index t), store input there, emit sigma^n
    for i in range(n - 1):
        for t in range(d):
            for js in itertools.product(range(len(prep)), repeat=n):
                K = np.zeros((dout, din), dtype=complex)
                for a, *cs in itertools.product(*(range(x) for x in in_dims[:-1])):
                    if cs[i] != t:
                        continue
                    col = np.ravel_multi_index((a, *cs, i), in_dims)
                    slots = list(cs)
                    slots[i] = a
                    K[:, col] = _kron_all(
                        [*(prep[j] for j in js), _basis(2, 1), *(_basis(d, c) for c in slots), _basis(n, i + 1)]
                    )
                kraus.append(K)
    return KrausMap(in_labels, out_labels, tuple(kraus))


# --- JSON -----------------------------------------------------------------------


def branched_to_json(b: BranchedCqState) -> dict:
    return {
        "labels": [label_to_json(lab) for lab in b.labels],
        "branches": [
            {
                "prob": br.prob,
                "registers": dict(br.registers),
                "factors": [{"labels": list(f.names), "data": matrix_to_json(f.data)} for f in br.factors],
            }
            for br in b.branches
        ],
    }


def branched_from_json(d: dict) -> BranchedCqState:
    labels = tuple(label_from_json(x) for x in d["labels"])
    by_name = {lab.name: lab for lab in labels}
    branches = []
    for br in d["branches"]:
        factors = []
        for f in br["factors"]:
            flabels = tuple(by_name[n] for n in f["labels"])
            factors.append(DensityMatrix(flabels, matrix_from_json(f["data"], total_dim(flabels))))
        branches.append(Branch(float(br["prob"]), {k: int(v) for k, v in br["registers"].items()}, tuple(factors)))
    return BranchedCqState(labels, tuple(branches))


def dumps_branched(b: BranchedCqState) -> str:
    return json.dumps(branched_to_json(b))


def loads_branched(text: str) -> BranchedCqState:
    return branched_from_json(json.loads(text))
