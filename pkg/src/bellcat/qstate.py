"""Labeled multipartite density matrices and operators.

Every composite system is an ordered list of :class:`Label` objects. Dense
matrices are indexed in mixed radix with the leftmost label most
significant, which is what ``np.kron`` and row-major ``reshape`` produce.
All helpers here are pure functions on immutable values.
"""

from __future__ import annotations

import contextlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DimensionError,
    InvalidPermutation,
    LabelCollision,
    NumericalInconsistency,
    TooLargeToMaterialize,
    UnknownLabel,
)

QUANTUM = "quantum"
CLASSICAL = "classical-register"

VALID_TOL = 1e-10
EXACT_TOL = 1e-12

_dense_cap = 4096


def get_dense_cap() -> int:
    return _dense_cap


def set_dense_cap(cap: int) -> None:
    global _dense_cap
    if cap < 1:
        raise ValueError("dense cap must be positive")
    _dense_cap = int(cap)


@contextlib.contextmanager
def dense_cap(cap: int) -> Iterator[None]:
    """Temporarily change the dense-dimension cap."""
    old = _dense_cap
    set_dense_cap(cap)
    try:
        yield
    finally:
        set_dense_cap(old)


@dataclass(frozen=True)
class Label:
    name: str
    dim: int
    kind: str = QUANTUM

    def __post_init__(self):
        if int(self.dim) < 1:
            raise DimensionError(f"label {self.name!r} has dim {self.dim} < 1")
        if self.kind not in (QUANTUM, CLASSICAL):
            raise ValueError(f"unknown label kind {self.kind!r}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def is_register(self) -> bool:
        return self.kind == CLASSICAL


def register(name: str, dim: int) -> Label:
    return Label(name, dim, CLASSICAL)


def _check_unique(labels: Sequence[Label]) -> None:
    seen = set()
    for lab in labels:
        if lab.name in seen:
            raise LabelCollision(f"duplicate label name {lab.name!r}")
        seen.add(lab.name)


def total_dim(labels: Sequence[Label]) -> int:
    return math.prod(lab.dim for lab in labels)


@dataclass(frozen=True, eq=False)
class _LabeledMatrix:
    labels: tuple[Label, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        _check_unique(labels)
        D = total_dim(labels)
        if D > _dense_cap:
            raise TooLargeToMaterialize(f"dense dimension {D} exceeds cap {_dense_cap}")
        data = np.array(self.data, dtype=np.complex128)
        if data.shape != (D, D):
            raise DimensionError(f"data shape {data.shape} does not match labels (D={D})")
        data.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "data", data)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(lab.dim for lab in self.labels)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def label(self, name: str) -> Label:
        for lab in self.labels:
            if lab.name == name:
                return lab
        raise UnknownLabel(name)

    def _replace(self, labels, data):
        return type(self)(tuple(labels), data)

    def relabel(self, mapping: dict[str, str]):
        """Rename subsystems without touching the matrix."""
        labels = [Label(mapping.get(lab.name, lab.name), lab.dim, lab.kind) for lab in self.labels]
        return self._replace(labels, self.data)


class DensityMatrix(_LabeledMatrix):
    """Hermitian, PSD, unit-trace matrix over labeled subsystems.

    Construction only checks shapes; call :func:`validate` for the physical
    invariants.
    """

    def __repr__(self):
        desc = ",".join(f"{lab.name}:{lab.dim}" for lab in self.labels)
        return f"DensityMatrix([{desc}])"


class HermitianOperator(_LabeledMatrix):
    def __post_init__(self):
        super().__post_init__()
        res = np.abs(self.data - self.data.conj().T).max(initial=0.0)
        if res > VALID_TOL:
            raise NumericalInconsistency(f"operator not Hermitian (residue {res:.3g})")

    def __repr__(self):
        desc = ",".join(f"{lab.name}:{lab.dim}" for lab in self.labels)
        return f"HermitianOperator([{desc}])"


def basis_projector(label: Label, value: int) -> DensityMatrix:
    m = np.zeros((label.dim, label.dim), dtype=complex)
    m[value, value] = 1.0
    return DensityMatrix((label,), m)


def maximally_mixed(labels: Sequence[Label]) -> DensityMatrix:
    D = total_dim(labels)
    return DensityMatrix(tuple(labels), np.eye(D) / D)


def tensor(*ops):
    """Kronecker product of labeled matrices, labels concatenated in order."""
    if not ops:
        raise ValueError("tensor needs at least one operand")
    labels = []
    for op in ops:
        labels.extend(op.labels)
    _check_unique(labels)
    D = total_dim(labels)
    if D > _dense_cap:
        raise TooLargeToMaterialize(f"dense dimension {D} exceeds cap {_dense_cap}")
    data = ops[0].data
    for op in ops[1:]:
        data = np.kron(data, op.data)
    return type(ops[0])(tuple(labels), data)


def _positions(s: _LabeledMatrix, names: Iterable[str]) -> list[int]:
    index = {n: i for i, n in enumerate(s.names)}
    out = []
    for n in names:
        if n not in index:
            raise UnknownLabel(n)
        out.append(index[n])
    return out


def partial_trace(s, keep: Iterable[str]):
    """Trace out every subsystem not named in ``keep``.

    The surviving labels keep their original relative order.
    """
    keep = set(keep)
    _positions(s, keep)
    kept = [i for i, n in enumerate(s.names) if n in keep]
    if len(kept) == len(s.labels):
        return s
    dims = s.dims
    k = len(dims)
    t = s.data.reshape(dims + dims)
    row = list(range(k))
    col = [i + k if i in kept else i for i in range(k)]
    out_idx = [i for i in kept] + [i + k for i in kept]
    red = np.einsum(t, row + col, out_idx)
    d = math.prod(dims[i] for i in kept)
    return type(s)(tuple(s.labels[i] for i in kept), red.reshape(d, d))


def swap_subsystems(s, perm: Sequence[str]):
    """Reorder subsystems so that they appear in the order given by ``perm``."""
    perm = list(perm)
    if sorted(perm) != sorted(s.names) or len(set(perm)) != len(perm):
        raise InvalidPermutation(f"{perm} is not a permutation of {list(s.names)}")
    order = _positions(s, perm)
    if order == list(range(len(order))):
        return s
    dims = s.dims
    k = len(dims)
    t = s.data.reshape(dims + dims).transpose(order + [i + k for i in order])
    return type(s)(tuple(s.labels[i] for i in order), t.reshape(s.dim, s.dim))


def embed(o, labels: Sequence[Label]):
    """Extend ``o`` by identities so it acts on ``labels`` in that order."""
    have = set(o.names)
    missing = [lab for lab in labels if lab.name not in have]
    if missing:
        ident = HermitianOperator(tuple(missing), np.eye(total_dim(missing)))
        o = tensor(HermitianOperator(o.labels, o.data), ident)
    return swap_subsystems(o, [lab.name for lab in labels])


def expectation(s: DensityMatrix, o) -> float:
    """tr[s o] with ``o`` padded by identities on labels it does not mention."""
    red = swap_subsystems(partial_trace(s, o.names), o.names)
    val = np.einsum("ij,ji->", red.data, o.data)
    if abs(val.imag) > 1e-8:
        raise NumericalInconsistency(f"expectation has imaginary part {val.imag:.3g}")
    return float(val.real)


@dataclass(frozen=True)
class ValidationReport:
    hermiticity_residue: float
    min_eigenvalue: float
    trace_residue: float
    register_residues: dict = field(default_factory=dict)
    tol: float = VALID_TOL

    @property
    def hermitian(self) -> bool:
        return self.hermiticity_residue <= self.tol

    @property
    def psd(self) -> bool:
        return self.min_eigenvalue >= -self.tol

    @property
    def unit_trace(self) -> bool:
        return self.trace_residue <= self.tol

    @property
    def registers_diagonal(self) -> bool:
        return all(r <= self.tol for r in self.register_residues.values())

    @property
    def passed(self) -> bool:
        return self.hermitian and self.psd and self.unit_trace and self.registers_diagonal

    def __bool__(self):
        return self.passed


def validate(s: DensityMatrix, tol: float = VALID_TOL) -> ValidationReport:
    data = s.data
    herm = float(np.abs(data - data.conj().T).max(initial=0.0))
    hpart = (data + data.conj().T) / 2
    min_eig = float(np.linalg.eigvalsh(hpart)[0]) if data.size else 0.0
    tr_res = float(abs(np.trace(data) - 1.0))
    regs = {}
    for lab in s.labels:
        if lab.is_register:
            red = partial_trace(s, [lab.name]).data
            regs[lab.name] = float(np.abs(red - np.diag(np.diag(red))).max(initial=0.0))
    return ValidationReport(herm, min_eig, tr_res, regs, tol)


def flatten_index(multi: Sequence[int], dims: Sequence[int]) -> int:
    return int(np.ravel_multi_index(tuple(multi), tuple(dims)))


def unflatten_index(i: int, dims: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(v) for v in np.unravel_index(i, tuple(dims)))


# --- JSON -----------------------------------------------------------------


def label_to_json(lab: Label) -> dict:
    return {"name": lab.name, "dim": lab.dim, "kind": lab.kind}


def label_from_json(d: dict) -> Label:
    return Label(str(d["name"]), int(d["dim"]), d.get("kind", QUANTUM))


def matrix_to_json(m: np.ndarray) -> list:
    flat = np.asarray(m, dtype=complex).ravel()
    return [[float(z.real), float(z.imag)] for z in flat]


def matrix_from_json(entries, D: int) -> np.ndarray:
    arr = np.asarray(entries, dtype=float)
    if arr.shape != (D * D, 2):
        raise DimensionError(f"expected {D * D} [re, im] pairs, got array of shape {arr.shape}")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(D, D)


def state_to_json(s: _LabeledMatrix) -> dict:
    return {
        "labels": [label_to_json(lab) for lab in s.labels],
        "data": matrix_to_json(s.data),
    }


def state_from_json(d: dict, cls=DensityMatrix):
    labels = tuple(label_from_json(x) for x in d["labels"])
    return cls(labels, matrix_from_json(d["data"], total_dim(labels)))


def dumps_state(s) -> str:
    return json.dumps(state_to_json(s))


def loads_state(text: str) -> DensityMatrix:
    return state_from_json(json.loads(text))
