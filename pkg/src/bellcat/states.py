"""Named states and the singlet fraction."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParseError
from .qstate import DensityMatrix, Label, partial_trace, state_from_json, tensor, total_dim

DEFAULT_NAMES = ("A", "B")


def _pair(d: int, names=DEFAULT_NAMES) -> tuple[Label, Label]:
    return Label(names[0], d), Label(names[1], d)


def max_entangled_vector(d: int) -> np.ndarray:
    if d < 2:
        raise DimensionError(f"local dimension must be >= 2, got {d}")
    return np.eye(d).ravel() / np.sqrt(d)


def max_entangled(d: int = 2, names=DEFAULT_NAMES) -> DensityMatrix:
    """|phi+><phi+| with |phi+> = sum_i |ii> / sqrt(d)."""
    v = max_entangled_vector(d)
    return DensityMatrix(_pair(d, names), np.outer(v, v.conj()))


@dataclass(frozen=True)
class IsotropicSpec:
    d: int
    V: float

    def __post_init__(self):
        if self.d < 2:
            raise DimensionError(f"local dimension must be >= 2, got {self.d}")
        if not 0.0 <= self.V <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.V}")


def isotropic(spec: IsotropicSpec | None = None, *, d: int = 2, V: float = 1.0, names=DEFAULT_NAMES) -> DensityMatrix:
    """V |phi+><phi+| + (1 - V) 1/d^2."""
    if spec is None:
        spec = IsotropicSpec(d, V)
    d = spec.d
    phi = max_entangled(d, names).data
    return DensityMatrix(_pair(d, names), spec.V * phi + (1 - spec.V) * np.eye(d * d) / d**2)


def isotropic_singlet_fraction(d: int, V: float) -> float:
    return V + (1 - V) / d**2


def product_state(rhoA: DensityMatrix, rhoB: DensityMatrix) -> DensityMatrix:
    return tensor(rhoA, rhoB)


def ground_state(label: Label) -> DensityMatrix:
    m = np.zeros((label.dim, label.dim), dtype=complex)
    m[0, 0] = 1.0
    return DensityMatrix((label,), m)


def random_state(labels, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random mixed state: partial trace of a Gaussian pure state on a doubled space."""
    labels = tuple(labels)
    D = total_dim(labels)
    k = D if rank is None else rank
    g = rng.normal(size=(D, k)) + 1j * rng.normal(size=(D, k))
    rho = g @ g.conj().T
    return DensityMatrix(labels, rho / np.trace(rho).real)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase correction."""
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


# --- singlet fraction ------------------------------------------------------


def _polar_unitary(g: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(g)
    return u @ vh


def _overlap(rho: np.ndarray, U: np.ndarray, d: int) -> float:
    # (U (x) 1)|phi+> has amplitude U[j, i] / sqrt(d) on |j i>
    v = U.ravel() / np.sqrt(d)
    return float(np.real(v.conj() @ rho @ v))


def _ascend(rho: np.ndarray, U: np.ndarray, d: int, tol: float, max_iter: int) -> float:
    f = _overlap(rho, U, d)
    for _ in range(max_iter):
        G = (rho @ U.ravel()).reshape(d, d) / d
        U = _polar_unitary(G)
        f_new = _overlap(rho, U, d)
        if f_new - f < tol:
            return max(f, f_new)
        f = f_new
    return f


def singlet_fraction(rho: DensityMatrix, restarts: int = 16, seed: int = 0, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest overlap of ``rho`` with a maximally entangled state.

    Every maximally entangled state of two d-level systems is
    (U (x) 1)|phi+> for some unitary U. The overlap is a convex quadratic
    form in U, so replacing U by the unitary polar factor of the gradient
    never decreases it. The identity is always one of the starting points,
    followed by ``restarts`` Haar-random unitaries.
    """
    if len(rho.labels) != 2 or rho.dims[0] != rho.dims[1]:
        raise DimensionError(f"singlet fraction needs a d x d bipartite state, got dims {rho.dims}")
    d = rho.dims[0]
    data = np.asarray(rho.data)
    rng = np.random.default_rng(seed)
    starts = [np.eye(d, dtype=complex)] + [random_unitary(d, rng) for _ in range(restarts)]
    best = max(_ascend(data, U, d, tol, max_iter) for U in starts)
    return float(min(max(best, 0.0), 1.0))


def singlet_fraction_threshold(rho: DensityMatrix, restarts: int = 16, seed: int = 0) -> bool:
    """True when the singlet fraction exceeds 1/d, flagging a catalytic-activation candidate."""
    d = rho.dims[0]
    return singlet_fraction(rho, restarts, seed) > 1.0 / d + 1e-9


# --- CLI state syntax --------------------------------------------------------


def parse_state(spec: str, names=DEFAULT_NAMES) -> DensityMatrix:
    """Parse ``phi+:d``, ``isotropic:d:V``, ``zero:d``, ``mixed:d`` or ``file:path.json``."""
    parts = spec.split(":")
    kind = parts[0]
    try:
        if kind == "file":
            path = spec[len("file:"):]
            with open(path) as fh:
                s = state_from_json(json.load(fh))
            if len(s.labels) == 2 and names is not None:
                s = s.relabel(dict(zip(s.names, names)))
            return s
        if kind == "phi+":
            (d,) = parts[1:] or ("2",)
            return max_entangled(int(d), names)
        if kind == "isotropic":
            d, V = parts[1:]
            return isotropic(IsotropicSpec(int(d), float(V)), names=names)
        if kind in ("zero", "mixed"):
            (d,) = parts[1:] or ("2",)
            la, lb = _pair(int(d), names)
            if kind == "zero":
                return tensor(ground_state(la), ground_state(lb))
            return DensityMatrix((la, lb), np.eye(int(d) ** 2) / int(d) ** 2)
    except ParseError:
        raise
    except (ValueError, OSError, KeyError) as exc:
        raise ParseError(f"cannot parse state spec {spec!r}: {exc}") from exc
    raise ParseError(f"unknown state kind {kind!r} in {spec!r} (position 0)")


def product_factors(s: DensityMatrix, tol: float = 1e-10) -> tuple[DensityMatrix, DensityMatrix]:
    """Split a bipartite product state into its two marginals, or raise."""
    if len(s.labels) != 2:
        raise DimensionError("expected a bipartite state")
    a = partial_trace(s, [s.names[0]])
    b = partial_trace(s, [s.names[1]])
    res = np.abs(np.kron(a.data, b.data) - s.data).max()
    if res > tol:
        raise ValueError(f"state is not a product state (residue {res:.3g})")
    return a, b
