"""Completely positive maps in Kraus form acting on one party's labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, PartitionError
from .qstate import DensityMatrix, Label, swap_subsystems, total_dim


@dataclass(frozen=True, eq=False)
class KrausMap:
    in_labels: tuple[Label, ...]
    out_labels: tuple[Label, ...]
    kraus: tuple[np.ndarray, ...]

    def __post_init__(self):
        din, dout = total_dim(self.in_labels), total_dim(self.out_labels)
        ks = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        for k in ks:
            if k.shape != (dout, din):
                raise DimensionError(f"Kraus operator shape {k.shape}, expected {(dout, din)}")
        object.__setattr__(self, "in_labels", tuple(self.in_labels))
        object.__setattr__(self, "out_labels", tuple(self.out_labels))
        object.__setattr__(self, "kraus", ks)

    @property
    def in_names(self):
        return tuple(lab.name for lab in self.in_labels)

    @property
    def out_names(self):
        return tuple(lab.name for lab in self.out_labels)

    def completeness(self) -> np.ndarray:
        din = total_dim(self.in_labels)
        return sum((k.conj().T @ k for k in self.kraus), np.zeros((din, din), dtype=complex))

    def completeness_residue(self) -> float:
        return float(np.abs(self.completeness() - np.eye(total_dim(self.in_labels))).max())

    def compose(self, after: "KrausMap") -> "KrausMap":
        """Return ``after`` applied following ``self``."""
        if after.in_names != self.out_names:
            raise PartitionError(f"cannot compose: {after.in_names} != {self.out_names}")
        ks = tuple(b @ a for b in after.kraus for a in self.kraus)
        return KrausMap(self.in_labels, after.out_labels, ks)


def apply_local_maps(state: DensityMatrix, mapA: KrausMap, mapB: KrausMap, *, normalise: bool = False):
    """(E_A (x) E_B)[state] for maps acting on disjoint label sets covering ``state``.

    Returns the raw output matrix and its labels (A outputs then B outputs);
    the output is subnormalised when the maps are only trace non-increasing.
    """
    inA, inB = list(mapA.in_names), list(mapB.in_names)
    if set(inA) & set(inB) or sorted(inA + inB) != sorted(state.names):
        raise PartitionError(f"maps on {inA} | {inB} do not partition state labels {list(state.names)}")
    ordered = swap_subsystems(state, inA + inB)
    dA, dB = total_dim(mapA.in_labels), total_dim(mapB.in_labels)
    eA, eB = total_dim(mapA.out_labels), total_dim(mapB.out_labels)
    rho = ordered.data.reshape(dA, dB, dA, dB)
    KA = np.stack(mapA.kraus) if mapA.kraus else np.zeros((0, eA, dA))
    KB = np.stack(mapB.kraus) if mapB.kraus else np.zeros((0, eB, dB))
    # sum_{m,n} (KA_m (x) KB_n) rho (KA_m (x) KB_n)^dagger
    t = np.einsum("mai,ijkl->majkl", KA, rho)
    t = np.einsum("majkl,mck->ajcl", t, KA.conj())
    t = np.einsum("nbj,ajcl->nabcl", KB, t)
    t = np.einsum("nabcl,ndl->abcd", t, KB.conj())
    out = t.reshape(eA * eB, eA * eB)
    if normalise:
        out = out / np.trace(out).real
    return mapA.out_labels + mapB.out_labels, out
