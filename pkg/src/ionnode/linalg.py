"""Dense complex linear algebra shared by every module.

All states and operators are plain ``numpy`` complex arrays.  Helpers here
validate physicality (Hermiticity, unit trace, positivity) and provide the
handful of kernels the rest of the toolkit is built on: tensor products,
partial traces, Hermitian eigendecomposition, matrix exponentials and the
real 3x3 SVD used by the entangled-fraction formula.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

HERMITICITY_ATOL = 1e-10
TRACE_ATOL = 1e-10
EIGENVALUE_FLOOR = -1e-9

# Pauli matrices, indexed 1..3 in pauli-decomposition code.
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two matrices.

    Built from one broadcast multiply so entry (i*rb + k, j*cb + l) is the
    exact floating product a[i, j] * b[k, l].
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    ra, ca = a.shape
    rb, cb = b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ra * rb, ca * cb)


def kron_all(*mats: np.ndarray) -> np.ndarray:
    """Left-associated Kronecker product of any number of matrices."""
    out = np.asarray(mats[0], dtype=complex)
    for m in mats[1:]:
        out = kron(out, m)
    return out


def validate_density_matrix(rho: np.ndarray, *, atol: float = TRACE_ATOL) -> np.ndarray:
    """Check Hermiticity, unit trace and positivity; return the array.

    Eigenvalues below the -1e-9 floor are rejected, not clipped: clipping
    only ever happens inside tomography's explicit projection step.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITICITY_ATOL:
        raise ValueError("density matrix is not Hermitian to 1e-10")
    if abs(np.trace(rho).real - 1.0) > atol or abs(np.trace(rho).imag) > atol:
        raise ValueError(f"density matrix trace {np.trace(rho)} != 1")
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if evals.min() < EIGENVALUE_FLOOR:
        raise ValueError(f"density matrix has negative eigenvalue {evals.min():.3e}")
    return rho


def partial_trace(rho: np.ndarray, dims: list[int], keep: int) -> np.ndarray:
    """Trace out every subsystem except ``keep``.

    ``dims`` lists the subsystem dimensions in tensor order; their product
    must equal the matrix dimension.
    """
    rho = np.asarray(rho, dtype=complex)
    dims = list(dims)
    total = int(np.prod(dims))
    if rho.shape != (total, total):
        raise ValueError(f"dims {dims} do not match matrix shape {rho.shape}")
    if not 0 <= keep < len(dims):
        raise ValueError(f"keep index {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    reshaped = rho.reshape(dims + dims)
    # contract row/col indices of every traced subsystem pairwise
    for sub in range(n - 1, -1, -1):
        if sub == keep:
            continue
        reshaped = np.trace(reshaped, axis1=sub, axis2=sub + reshaped.ndim // 2)
    d = dims[keep]
    return reshaped.reshape(d, d)


def herm_eig(m: np.ndarray, *, atol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ascending eigenvalues and a matrix whose columns are the
    eigenvectors.  Non-Hermitian input (beyond ``atol`` relative to the
    matrix norm) is rejected.
    """
    m = np.asarray(m, dtype=complex)
    scale = max(1.0, np.linalg.norm(m, 2))
    if np.max(np.abs(m - m.conj().T)) > atol * scale:
        raise ValueError("matrix is not Hermitian")
    evals, evecs = np.linalg.eigh(m)
    return evals, evecs


def expm(m: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling and squaring via scipy)."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expm needs a square matrix, got {m.shape}")
    return scipy.linalg.expm(m)


def svd3(t: np.ndarray) -> tuple[float, float, float, np.ndarray, np.ndarray]:
    """SVD of a real 3x3 matrix: ``t = V @ diag(s) @ W.T``.

    Singular values come out in conventional descending order
    s1 >= s2 >= s3 >= 0; V and W are orthogonal.
    """
    t = np.asarray(t, dtype=float)
    if t.shape != (3, 3):
        raise ValueError(f"svd3 needs a 3x3 matrix, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("svd3 input has non-finite entries")
    v, s, wh = np.linalg.svd(t)
    return float(s[0]), float(s[1]), float(s[2]), v, wh.T


def dagger(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).conj().T


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Trace distance (1/2)*||a - b||_1 between Hermitian matrices."""
    evals = np.linalg.eigvalsh(np.asarray(a) - np.asarray(b))
    return 0.5 * float(np.sum(np.abs(evals)))


def state_fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """Overlap <psi|rho|psi> of a state with a pure reference ket."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    return float(np.real(psi.conj() @ np.asarray(rho) @ psi))


def thermal_state(n_bar: float, n_max: int) -> np.ndarray:
    """Truncated thermal oscillator state with mean occupation ``n_bar``."""
    if n_bar < 0:
        raise ValueError("n_bar must be non-negative")
    n = np.arange(n_max + 1)
    if n_bar == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
    else:
        p = (n_bar / (1.0 + n_bar)) ** n / (1.0 + n_bar)
    return np.diag(p / p.sum()).astype(complex)
