"""Maximum-likelihood state and process reconstruction.

State tomography minimizes the negative log likelihood of the joint
ion-photon click record for one analyzed detector.  The density matrix is
kept physical by construction through a lower-triangular factorization
``rho = G G^dag / Tr(G G^dag)``; a deterministic quasi-Newton descent with
analytic gradients runs from the maximally mixed state.  Process
tomography fits a positive, trace-one Choi matrix to the observed
input/output pairs with the same machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .channels import apply_choi, choi_of_unitary, tp_residual, validate_choi
from .dataset import ClickDataset
from .linalg import kron, validate_density_matrix
from .optics import OpticsConfig, PhotonPOVM, build_povm, ion_projector

PROB_FLOOR = 1e-300


def build_measurement_model(
    cfg: OpticsConfig, settings
) -> tuple[list[PhotonPOVM], list[tuple[np.ndarray, np.ndarray]]]:
    """Per-setting photon POVMs and (bright, dark) ion projectors."""
    povms = [build_povm(cfg, pset) for pset, _ in settings]
    ion_projs = [
        (ion_projector(iset, "bright"), ion_projector(iset, "dark")) for _, iset in settings
    ]
    return povms, ion_projs


def _stack_operators(
    data: ClickDataset, detector: int, povms, ion_projs
) -> tuple[np.ndarray, np.ndarray]:
    """Flatten the likelihood into (operators, counts) arrays.

    Operators act on the joint (ion x photon) space; photon-only terms are
    lifted with an identity on the ion.
    """
    eye = np.eye(2, dtype=complex)
    ops, counts = [], []
    for i in range(data.n_settings):
        povm = povms[i]
        xi_bright, xi_dark = ion_projs[i]
        ops.append(kron(eye, povm.empty))
        counts.append(data.n_empty[i])
        for k in range(4):
            if k == detector:
                continue
            ops.append(kron(eye, povm.detectors[k]))
            counts.append(data.n_click[k, i])
        ops.append(kron(xi_bright, povm.detectors[detector]))
        counts.append(data.n_bright[detector, i])
        ops.append(kron(xi_dark, povm.detectors[detector]))
        counts.append(data.n_dark[detector, i])
    return np.array(ops), np.array(counts, dtype=float)


def neg_log_likelihood(
    rho: np.ndarray, data: ClickDataset, detector: int, povms, ion_projs
) -> float:
    """-sum(n * log p) over all recorded outcomes for one detector.

    Probabilities are floored at 1e-300 before the log; an outcome with
    probability exactly zero but a nonzero count yields +inf rather than
    an exception, signalling model/data mismatch.
    """
    if not 0 <= detector < 4:
        raise ValueError(f"detector index {detector} out of range")
    data.validate()
    ops, counts = _stack_operators(data, detector, povms, ion_projs)
    probs = np.real(np.einsum("eij,ji->e", ops, np.asarray(rho, dtype=complex)))
    if np.any((counts > 0) & (probs <= 0.0)):
        return float("inf")
    mask = counts > 0
    return float(-np.sum(counts[mask] * np.log(np.maximum(probs[mask], PROB_FLOOR))))


def _pack_indices(dim: int):
    rows, cols = np.tril_indices(dim, -1)
    return rows, cols


def _params_to_g(params: np.ndarray, dim: int) -> np.ndarray:
    g = np.zeros((dim, dim), dtype=complex)
    g[np.diag_indices(dim)] = params[:dim]
    rows, cols = _pack_indices(dim)
    g[rows, cols] = params[dim::2] + 1j * params[dim + 1 :: 2]
    return g


def _grad_to_params(w: np.ndarray, dim: int) -> np.ndarray:
    grad = np.empty(dim * dim)
    grad[:dim] = w[np.diag_indices(dim)].real
    rows, cols = _pack_indices(dim)
    grad[dim::2] = w[rows, cols].real
    grad[dim + 1 :: 2] = w[rows, cols].imag
    return grad


@dataclass
class MleResult:
    """Outcome of a positivity-constrained maximum-likelihood fit."""

    rho: np.ndarray
    nll: float
    converged: bool
    n_iter: int
    grad_norm: float
    message: str = ""


def _minimize_psd(dim: int, value_and_gradient, *, ftol: float = 1e-10, gtol: float = 1e-6,
                  maxiter: int = 2000) -> MleResult:
    """Quasi-Newton descent on the G-factorization of a PSD trace-one matrix.

    ``value_and_gradient(rho)`` returns (f, D) with df = Tr(D drho) and D
    Hermitian; the chain rule onto the factor G is shared by state and
    process fits.  Starts from the maximally mixed point G = I.
    """

    def objective(params: np.ndarray):
        g = _params_to_g(params, dim)
        t = float(np.sum(np.abs(g) ** 2))
        if t <= 0.0:
            return 1e30, np.zeros_like(params)
        rho = g @ g.conj().T / t
        f, d_mat = value_and_gradient(rho)
        b = (d_mat - np.trace(d_mat @ rho) * np.eye(dim)) / t
        w = 2.0 * (b @ g)
        return f, _grad_to_params(w, dim)

    x0 = np.zeros(dim * dim)
    x0[:dim] = 1.0
    res = scipy.optimize.minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        options={"ftol": ftol, "gtol": gtol, "maxiter": maxiter, "maxcor": 20},
    )
    g = _params_to_g(res.x, dim)
    rho = g @ g.conj().T / np.sum(np.abs(g) ** 2)
    rho = 0.5 * (rho + rho.conj().T)
    return MleResult(
        rho=rho,
        nll=float(res.fun),
        converged=bool(res.success),
        n_iter=int(res.nit),
        grad_norm=float(np.max(np.abs(res.jac))),
        message=str(res.message),
    )


def mle_state(data: ClickDataset, detector: int, cfg: OpticsConfig) -> MleResult:
    """Reconstruct the joint ion-photon density matrix for one detector.

    The optimizer works on the per-count-normalized likelihood, so the
    convergence thresholds (improvement < 1e-9, gradient norm < 1e-6) are
    in per-count units; ``nll`` in the result is the raw value.
    Non-convergence returns the best iterate with ``converged=False``.
    """
    data.validate()
    if data.total_clicks(detector) < 1:
        raise ValueError(f"detector {detector} has no clicks to analyze")
    povms, ion_projs = build_measurement_model(cfg, data.settings)
    ops, counts = _stack_operators(data, detector, povms, ion_projs)
    keep = counts > 0
    ops, counts = ops[keep], counts[keep]
    total = counts.sum()

    def value_and_gradient(rho: np.ndarray):
        probs = np.real(np.einsum("eij,ji->e", ops, rho))
        f = -np.sum(counts * np.log(np.maximum(probs, PROB_FLOOR))) / total
        # barrier slope capped so outcomes the model forbids outright
        # (zero operator) cannot poison the gradient with inf * 0
        weights = counts / np.maximum(probs, 1e-12) / total
        d_mat = -np.einsum("e,eij->ij", weights, ops)
        return f, d_mat

    result = _minimize_psd(4, value_and_gradient, ftol=1e-10, gtol=1e-6)
    result.nll = result.nll * total
    return result


@dataclass
class ProcessTomographyResult:
    """Choi matrix fit plus its diagnostics."""

    chi: np.ndarray
    converged: bool
    objective: float
    tp_residual: float
    grad_norm: float


def standard_process_inputs() -> list[np.ndarray]:
    """The 16 pairwise products of {|0>, |1>, |+>, |+i>} preparations."""
    kets = [
        np.array([1.0, 0.0], dtype=complex),
        np.array([0.0, 1.0], dtype=complex),
        np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0),
        np.array([1.0, 1.0j], dtype=complex) / np.sqrt(2.0),
    ]
    inputs = []
    for ka in kets:
        for kb in kets:
            ket = np.kron(ka, kb)
            inputs.append(np.outer(ket, ket.conj()))
    return inputs


def simulate_process_outputs(chi: np.ndarray, inputs: list[np.ndarray]) -> list[np.ndarray]:
    return [apply_choi(chi, rho) for rho in inputs]


def process_tomography(
    input_states: list[np.ndarray], reconstructions: list[np.ndarray]
) -> ProcessTomographyResult:
    """Fit a positive trace-one Choi matrix to input/output pairs.

    The objective is the summed Frobenius mismatch between the channel
    applied to each preparation and the corresponding reconstructed
    output.  Trace preservation is reported via ``tp_residual`` but not
    enforced.
    """
    if len(input_states) != len(reconstructions):
        raise ValueError("input and output lists differ in length")
    d = input_states[0].shape[0]
    vecs = np.array([np.asarray(r).reshape(-1) for r in input_states])
    if np.linalg.matrix_rank(vecs, tol=1e-9) < d * d:
        raise ValueError("preparation set is rank-deficient (not informationally complete)")
    rhos = np.array([np.asarray(r, dtype=complex) for r in input_states])
    outs = np.array([np.asarray(r, dtype=complex) for r in reconstructions])

    def value_and_gradient(chi: np.ndarray):
        c4 = chi.reshape(d, d, d, d)
        a = d * np.einsum("nij,iajb->nab", rhos, c4)
        diff = a - outs
        f = float(np.sum(np.abs(diff) ** 2))
        d_mat = 2.0 * d * np.einsum("nij,nab->iajb", rhos.transpose(0, 2, 1), diff)
        return f, d_mat.reshape(d * d, d * d)

    result = _minimize_psd(d * d, value_and_gradient, ftol=1e-12, gtol=1e-9)
    return ProcessTomographyResult(
        chi=result.rho,
        converged=result.converged,
        objective=result.nll,
        tp_residual=tp_residual(result.rho),
        grad_norm=result.grad_norm,
    )


def process_fidelity(chi_exp: np.ndarray, chi_id: np.ndarray) -> float:
    """Overlap Tr(chi_id chi_exp) of two trace-one Choi matrices."""
    for chi in (chi_exp, chi_id):
        tr = np.trace(chi)
        if abs(tr.real - 1.0) > 1e-9 or abs(tr.imag) > 1e-9:
            raise ValueError(f"Choi matrix trace {tr} != 1")
    return float(np.real(np.trace(np.asarray(chi_exp) @ np.asarray(chi_id))))


def conditional_subspace_fidelity(chi_exp: np.ndarray) -> float:
    """Process fidelity of the postselected network-to-logic mapping.

    Inputs are restricted to the logic qubit prepared in |0> (down) and
    outputs postselected on the network qubit measured in |0>; the
    renormalized conditional map is compared against the identity, i.e.
    the ideal transfer of the network state onto the logic qubit.
    Subsystem order is (network, logic).
    """
    validate_choi(chi_exp)
    down = np.zeros((2, 2), dtype=complex)
    down[0, 0] = 1.0
    k = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            basis_in = np.zeros((2, 2), dtype=complex)
            basis_in[i, j] = 1.0
            out = apply_choi(chi_exp, kron(basis_in, down))
            # network-measured-down block of the (network x logic) output
            cond = out[0:2, 0:2]
            k[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = cond
    norm = float(np.trace(k).real)
    if norm < 1e-12:
        raise ValueError("zero postselection probability in conditional process")
    chi_cond = k / norm
    chi_id = choi_of_unitary(np.eye(2, dtype=complex))
    return float(np.real(np.trace(chi_cond @ chi_id)))


def project_to_physical(m: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues and renormalize the trace to one.

    The only place in the toolkit where eigenvalues are clipped rather
    than rejected.
    """
    m = 0.5 * (np.asarray(m, dtype=complex) + np.asarray(m).conj().T)
    evals, evecs = np.linalg.eigh(m)
    evals = np.clip(evals, 0.0, None)
    if evals.sum() <= 0.0:
        raise ValueError("matrix has no positive weight to project onto")
    rho = (evecs * evals) @ evecs.conj().T
    return rho / np.trace(rho).real


def reconstruction_fidelity(rho: np.ndarray) -> float:
    """Entangled-fraction fidelity of a reconstructed state (validated)."""
    from .fidelity import entangled_fraction_fidelity

    return entangled_fraction_fidelity(validate_density_matrix(rho))
