"""Quantum channel representations and conversions.

Conventions used throughout the toolkit:

* vectorization is row-major: ``vec(rho) = rho.reshape(-1)``;
* a superoperator S acts as ``vec(E(rho)) = S @ vec(rho)``; for a unitary
  U the superoperator is ``kron(U, U.conj())``;
* the Choi matrix is ``chi = (1/d) * sum_ij |i><j| (x) E(|i><j|)`` with the
  input factor first, normalized to trace one for a trace-preserving map,
  so that ``Tr(chi_id @ chi_exp)`` is the process fidelity and equals 1
  for a perfect match.
"""

from __future__ import annotations

import math

import numpy as np

from .linalg import kron

CHOI_TRACE_ATOL = 1e-9
CHOI_EIG_FLOOR = -1e-9


def kraus_to_superop(kraus_ops: list[np.ndarray]) -> np.ndarray:
    return sum(kron(k, k.conj()) for k in kraus_ops)


def unitary_superop(u: np.ndarray) -> np.ndarray:
    return kron(u, np.asarray(u).conj())


def superop_to_choi(s: np.ndarray) -> np.ndarray:
    """Normalized Choi matrix of a superoperator."""
    dim2 = s.shape[0]
    d = math.isqrt(dim2)
    if d * d != dim2 or s.shape != (dim2, dim2):
        raise ValueError(f"superoperator shape {s.shape} is not a square of a square")
    # S[(a,b),(i,j)] = E(|i><j|)_{ab}; Choi[(i,a),(j,b)] regroups the axes
    c = s.reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d)
    return c / d


def choi_to_superop(chi: np.ndarray) -> np.ndarray:
    dim2 = chi.shape[0]
    d = math.isqrt(dim2)
    c = np.asarray(chi, dtype=complex) * d
    return c.reshape(d, d, d, d).transpose(1, 3, 0, 2).reshape(d * d, d * d)


def choi_of_unitary(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    v = u.T.reshape(-1)  # v[(i,a)] = U[a,i]
    return np.outer(v, v.conj()) / d


def apply_choi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Channel action E(rho) = d * Tr_in[(rho^T (x) I) chi]."""
    dim2 = chi.shape[0]
    d = math.isqrt(dim2)
    c4 = np.asarray(chi, dtype=complex).reshape(d, d, d, d)
    return d * np.einsum("ij,iajb->ab", np.asarray(rho, dtype=complex), c4)


def compose_superops(*ops: np.ndarray) -> np.ndarray:
    """Compose left to right in application order: first listed acts first."""
    out = ops[0]
    for s in ops[1:]:
        out = s @ out
    return out


def validate_choi(chi: np.ndarray, *, atol: float = CHOI_TRACE_ATOL) -> np.ndarray:
    chi = np.asarray(chi, dtype=complex)
    if abs(np.trace(chi).real - 1.0) > atol or abs(np.trace(chi).imag) > atol:
        raise ValueError(f"Choi matrix trace {np.trace(chi)} != 1")
    if np.max(np.abs(chi - chi.conj().T)) > 1e-8:
        raise ValueError("Choi matrix is not Hermitian")
    min_eig = float(np.linalg.eigvalsh(0.5 * (chi + chi.conj().T)).min())
    if min_eig < CHOI_EIG_FLOOR:
        raise ValueError(f"Choi matrix has negative eigenvalue {min_eig:.3e}")
    return chi


def tp_residual(chi: np.ndarray) -> float:
    """Deviation of the partial trace over the output from I/d.

    Zero for a trace-preserving map; reported, never enforced.
    """
    dim2 = chi.shape[0]
    d = math.isqrt(dim2)
    c4 = np.asarray(chi).reshape(d, d, d, d)
    reduced = np.einsum("iaja->ij", c4)
    return float(np.max(np.abs(reduced - np.eye(d) / d)))


def depolarizing_kraus(p: float, dim: int = 2) -> list[np.ndarray]:
    """Replace the state by I/dim with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability {p} outside [0, 1]")
    if dim == 2:
        paulis = [np.eye(2, dtype=complex)]
        paulis += [
            np.array([[0, 1], [1, 0]], dtype=complex),
            np.array([[0, -1j], [1j, 0]], dtype=complex),
            np.array([[1, 0], [0, -1]], dtype=complex),
        ]
        weights = [1.0 - 0.75 * p, 0.25 * p, 0.25 * p, 0.25 * p]
        return [math.sqrt(w) * k for w, k in zip(weights, paulis)]
    raise ValueError("depolarizing_kraus only supports qubits")


def dephasing_kraus(coherence: float) -> list[np.ndarray]:
    """Single-qubit dephasing shrinking off-diagonals by ``coherence``."""
    if not 0.0 <= coherence <= 1.0 + 1e-12:
        raise ValueError(f"coherence factor {coherence} outside [0, 1]")
    w = min(coherence, 1.0)
    z = np.array([[1, 0], [0, -1]], dtype=complex)
    return [
        math.sqrt((1.0 + w) / 2.0) * np.eye(2, dtype=complex),
        math.sqrt((1.0 - w) / 2.0) * z,
    ]


def apply_superop_to_subsystem(
    s: np.ndarray, rho: np.ndarray, dims: list[int], target: int
) -> np.ndarray:
    """Apply a subsystem channel without building the lifted superoperator."""
    d_t = math.isqrt(s.shape[0])
    dims = list(dims)
    if dims[target] != d_t:
        raise ValueError(f"superoperator dim {d_t} does not match subsystem {dims[target]}")
    n = len(dims)
    total = int(np.prod(dims, dtype=int))
    r = np.asarray(rho, dtype=complex).reshape(dims + dims)
    s4 = s.reshape(d_t, d_t, d_t, d_t)  # (t_out, t'_out, t_in, t'_in)
    r = np.tensordot(s4, r, axes=([2, 3], [target, n + target]))
    # tensordot put (t_out, t'_out) in front; move them back in place
    order = list(range(2, 2 + 2 * n))
    order.insert(target, 0)
    order.insert(n + target, 1)
    # after the two inserts the remaining axes shifted; rebuild explicitly
    rest = list(range(2, 2 + 2 * n - 2))
    axes = []
    k = 0
    for pos in range(2 * n):
        if pos == target:
            axes.append(0)
        elif pos == n + target:
            axes.append(1)
        else:
            axes.append(rest[k])
            k += 1
    r = r.transpose(axes)
    return r.reshape(total, total)


def permute_systems(rho: np.ndarray, dims: list[int], perm: list[int]) -> np.ndarray:
    """Reorder tensor factors of a density matrix; ``perm[new] = old``."""
    dims = list(dims)
    n = len(dims)
    total = int(np.prod(dims, dtype=int))
    r = np.asarray(rho, dtype=complex).reshape(dims + dims)
    axes = list(perm) + [p + n for p in perm]
    return r.transpose(axes).reshape(total, total)
