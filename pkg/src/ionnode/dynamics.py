"""Physics engine: crystal modes, the light-shift gate, storage noise.

The geometric-phase gate drives a spin-dependent displacement near the
out-of-phase axial mode of the two-ion crystal.  Because the drive is
diagonal in the spin basis and heating acts only on the motion, the
master equation decouples into independent motional blocks, one per spin
pair and mode; each block is integrated in the interaction picture with
an adaptive Runge-Kutta scheme and the motion is traced out at the end.
The in-phase mode enters off-resonantly at first order and through the
second-order term of the Lamb-Dicke expansion, whose a^2/a^dag^2 parts
rotate near the mode's second harmonic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .channels import (
    choi_to_superop,
    compose_superops,
    dephasing_kraus,
    depolarizing_kraus,
    kraus_to_superop,
    superop_to_choi,
    unitary_superop,
    validate_choi,
)
from .linalg import kron, thermal_state

TWO_PI = 2.0 * math.pi

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)
S_GATE = np.diag([1.0, 1.0j]).astype(complex)
# conjugation by G maps Z to Y, turning the ZZ interaction into YY
G_ROT = (np.eye(2, dtype=complex) + 1j * np.array([[0, 1], [1, 0]], dtype=complex)) / math.sqrt(2.0)


class TruncationError(RuntimeError):
    """Fock-space truncation is too tight for the requested dynamics."""


@dataclass(frozen=True)
class CrystalConfig:
    """Two-ion crystal: masses, single-ion frequency, thermal state."""

    mass_1: float
    mass_2: float
    omega_1: float
    n_bar_oop: float = 0.0
    n_bar_ip: float = 0.0
    heat_rate_oop: float = 0.0
    heat_rate_ip: float = 0.0
    n_max: int = 10

    def validate(self) -> "CrystalConfig":
        if self.mass_1 <= 0 or self.mass_2 <= 0:
            raise ValueError("ion masses must be positive")
        if self.omega_1 <= 0:
            raise ValueError("omega_1 must be positive")
        if self.n_bar_oop < 0 or self.n_bar_ip < 0:
            raise ValueError("thermal occupations must be non-negative")
        if self.heat_rate_oop < 0 or self.heat_rate_ip < 0:
            raise ValueError("heating rates must be non-negative")
        min_n_max = 3.0 * max(self.n_bar_oop, self.n_bar_ip) + 5.0
        if self.n_max < min_n_max:
            raise ValueError(
                f"n_max = {self.n_max} too small; need >= 3*max(n_bar) + 5 = {min_n_max:.1f}"
            )
        return self

    @property
    def mass_ratio(self) -> float:
        return self.mass_2 / self.mass_1

    def mode_frequencies(self) -> tuple[float, float]:
        return axial_mode_frequencies(self.mass_ratio, self.omega_1)


@dataclass(frozen=True)
class GateConfig:
    """Light-shift gate drive parameters.

    ``eta_oop``/``eta_ip`` are signed per-ion Lamb-Dicke parameters for
    the two modes.  ``delta`` is the gate detuning from the out-of-phase
    mode; the drive sits below the mode so it stays clear of the in-phase
    second harmonic.  ``omega`` is the drive amplitude; leave it at None
    and call :func:`calibrate_gate` to solve for the pi/4 phase.
    """

    delta: float
    eta_oop: tuple[float, float]
    eta_ip: tuple[float, float]
    omega: float | None = None
    walsh_order: int = 1
    duration: float | None = None

    def validate(self) -> "GateConfig":
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.walsh_order not in (0, 1):
            raise ValueError("walsh_order must be 0 or 1")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("duration must be positive")
        if len(self.eta_oop) != 2 or len(self.eta_ip) != 2:
            raise ValueError("eta_oop and eta_ip each need one value per ion")
        return self


@dataclass(frozen=True)
class StorageNoiseConfig:
    """Noise acting on stored qubits between operations.

    Sensitivities are in Hz/T; ``b_noise_rms`` is the shot-to-shot
    quasi-static field noise.  ``dephasing_floor`` is the white-noise
    dephasing rate that survives dynamical decoupling; ``leak_rate`` is
    the depolarizing-equivalent rate from laser leakage, zeroed when the
    ions are transported away.
    """

    b_noise_rms: float = 10e-9
    sens_network: float = 2.8e10
    sens_memory: float = 1.22e8
    leak_rate: float = 0.0
    transported: bool = False
    dd_pulses: int = 0
    dephasing_floor: float = 0.0

    def validate(self) -> "StorageNoiseConfig":
        for name in ("b_noise_rms", "sens_network", "sens_memory", "leak_rate", "dephasing_floor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.dd_pulses < 0 or self.dd_pulses % 5:
            raise ValueError("dd_pulses must be a non-negative multiple of 5")
        return self


def axial_mode_frequencies(mu: float, omega_1: float) -> tuple[float, float]:
    """Axial normal-mode frequencies of a mixed-species two-ion crystal.

    ``mu`` is the mass ratio m2/m1 and ``omega_1`` the axial frequency of
    a single mass-1 ion in the same trap.  Returns (out-of-phase,
    in-phase), with oop >= ip.
    """
    if mu <= 0 or omega_1 <= 0:
        raise ValueError("mass ratio and omega_1 must be positive")
    root = math.sqrt(1.0 + (mu - 1.0) * mu)
    oop = omega_1 * math.sqrt((1.0 + mu + root) / mu)
    ip = omega_1 * math.sqrt((1.0 + mu - root) / mu)
    return oop, ip


def walsh_duration(delta: float, walsh_order: int) -> float:
    """Gate time closing the displacement loop(s): (W+1) * 2*pi/delta."""
    return (walsh_order + 1) * TWO_PI / delta


def _destroy(n_levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_levels)), 1).astype(complex)


# spin-z eigenvalues per two-qubit basis state |q1 q2>, q=0 meaning +1
_Z1 = np.array([+1.0, +1.0, -1.0, -1.0])
_Z2 = np.array([+1.0, -1.0, +1.0, -1.0])


@dataclass
class GateIntegration:
    """Raw output of the block integration, before channel assembly."""

    coherences: np.ndarray  # (4, 4) complex, c[s, s']
    top_population: tuple[float, float]
    initial_top: tuple[float, float]
    final_blocks: np.ndarray  # (32, n, n)


def evolved_purity(result: "GateIntegration", rho_spin: np.ndarray) -> float:
    """Purity of the joint spin-motion state for a given spin input."""
    weights = np.abs(np.asarray(rho_spin, dtype=complex).reshape(-1)) ** 2
    blocks = result.final_blocks
    overlaps = np.array(
        [
            np.real(np.vdot(blocks[p], blocks[p]) * np.vdot(blocks[16 + p], blocks[16 + p]))
            for p in range(16)
        ]
    )
    return float(np.sum(weights * overlaps))


def integrate_gate(crystal: CrystalConfig, gate: GateConfig, *, rtol: float = 1e-8) -> GateIntegration:
    """Integrate the gate master equation block by block.

    Blocks are indexed p = 4*s + s' over spin pairs, stacked for the two
    modes (out-of-phase first).  For each block the interaction-picture
    Hamiltonian is H_s(t) = w(t) * [lam_s (a e^{-i d t} + h.c.)  +
    kap_s (a^2 e^{-i d2 t} + h.c.)], with the second-order term only on
    the in-phase mode, and the heating dissipator has collapse operators
    sqrt(ndot) a and sqrt(ndot) a^dag.
    """
    crystal.validate()
    gate.validate()
    if gate.omega is None or gate.duration is None:
        raise ValueError("gate omega/duration unset; run calibrate_gate first")

    n = crystal.n_max + 1
    omega_oop, omega_ip = crystal.mode_frequencies()
    omega_l = omega_oop - gate.delta  # drive below the oop mode
    det_oop = gate.delta
    det_ip = omega_ip - omega_l
    det_2ip = 2.0 * omega_ip - omega_l

    lam_oop = 0.5 * gate.omega * (_Z1 * gate.eta_oop[0] + _Z2 * gate.eta_oop[1])
    lam_ip = 0.5 * gate.omega * (_Z1 * gate.eta_ip[0] + _Z2 * gate.eta_ip[1])
    kap_ip = -0.25 * gate.omega * (_Z1 * gate.eta_ip[0] ** 2 + _Z2 * gate.eta_ip[1] ** 2)

    a_op = _destroy(n)
    ad_op = a_op.conj().T
    a2_op = a_op @ a_op
    ad2_op = ad_op @ ad_op
    num_op = ad_op @ a_op

    # per-block drive coefficients: rows index the pair p = 4*s + s'
    pair_s = np.repeat(np.arange(4), 4)
    pair_sp = np.tile(np.arange(4), 4)
    cl_oop = lam_oop[pair_s][:, None, None]
    cr_oop = lam_oop[pair_sp][:, None, None]
    cl_ip = lam_ip[pair_s][:, None, None]
    cr_ip = lam_ip[pair_sp][:, None, None]
    kl_ip = kap_ip[pair_s][:, None, None]
    kr_ip = kap_ip[pair_sp][:, None, None]

    anti = {
        "oop": crystal.heat_rate_oop * (num_op + 0.5 * np.eye(n)),
        "ip": crystal.heat_rate_ip * (num_op + 0.5 * np.eye(n)),
    }

    def rhs(t: float, y: np.ndarray, sign: float) -> np.ndarray:
        blocks = y.reshape(32, n, n)
        b_oop = blocks[:16]
        b_ip = blocks[16:]
        out = np.empty_like(blocks)

        ph1 = np.exp(1j * det_oop * t)
        h_oop = sign * (ad_op * ph1 + a_op * ph1.conjugate())
        hb = np.matmul(h_oop, b_oop)
        bh = np.matmul(b_oop, h_oop)
        d_oop = -1j * (cl_oop * hb - cr_oop * bh)
        if crystal.heat_rate_oop:
            d_oop += crystal.heat_rate_oop * (
                np.matmul(a_op, np.matmul(b_oop, ad_op))
                + np.matmul(ad_op, np.matmul(b_oop, a_op))
            )
            d_oop -= np.matmul(anti["oop"], b_oop) + np.matmul(b_oop, anti["oop"])
        out[:16] = d_oop

        ph1 = np.exp(1j * det_ip * t)
        ph2 = np.exp(1j * det_2ip * t)
        h1_ip = sign * (ad_op * ph1 + a_op * ph1.conjugate())
        h2_ip = sign * (ad2_op * ph2 + a2_op * ph2.conjugate())
        hb1 = np.matmul(h1_ip, b_ip)
        bh1 = np.matmul(b_ip, h1_ip)
        hb2 = np.matmul(h2_ip, b_ip)
        bh2 = np.matmul(b_ip, h2_ip)
        d_ip = -1j * (cl_ip * hb1 - cr_ip * bh1 + kl_ip * hb2 - kr_ip * bh2)
        if crystal.heat_rate_ip:
            d_ip += crystal.heat_rate_ip * (
                np.matmul(a_op, np.matmul(b_ip, ad_op))
                + np.matmul(ad_op, np.matmul(b_ip, a_op))
            )
            d_ip -= np.matmul(anti["ip"], b_ip) + np.matmul(b_ip, anti["ip"])
        out[16:] = d_ip
        return out.reshape(-1)

    th_oop = thermal_state(crystal.n_bar_oop, crystal.n_max)
    th_ip = thermal_state(crystal.n_bar_ip, crystal.n_max)
    init_top = (float(th_oop[n - 1, n - 1].real), float(th_ip[n - 1, n - 1].real))
    if max(init_top) > 1e-2:
        raise TruncationError(
            f"initial thermal tail {max(init_top):.2e} at n_max; raise n_max"
        )

    y = np.concatenate(
        [np.broadcast_to(th_oop, (16, n, n)).ravel(), np.broadcast_to(th_ip, (16, n, n)).ravel()]
    ).astype(complex)

    if gate.walsh_order == 1:
        segments = [(0.0, gate.duration / 2.0, +1.0), (gate.duration / 2.0, gate.duration, -1.0)]
    else:
        segments = [(0.0, gate.duration, +1.0)]
    for t0, t1, sign in segments:
        sol = solve_ivp(
            rhs,
            (t0, t1),
            y,
            method="DOP853",
            rtol=rtol,
            atol=1e-12,
            args=(sign,),
            dense_output=False,
        )
        if not sol.success:
            raise RuntimeError(f"gate integration failed: {sol.message}")
        y = sol.y[:, -1]

    blocks = y.reshape(32, n, n)
    tr_oop = np.einsum("pii->p", blocks[:16])
    tr_ip = np.einsum("pii->p", blocks[16:])
    c = (tr_oop * tr_ip).reshape(4, 4)
    c = 0.5 * (c + c.conj().T)

    diag = [0, 5, 10, 15]
    top_oop = float(max(blocks[p][n - 1, n - 1].real for p in diag))
    top_ip = float(max(blocks[16 + p][n - 1, n - 1].real for p in diag))
    if max(top_oop - init_top[0], top_ip - init_top[1]) > 1e-4:
        raise TruncationError(
            f"population leaked to the n_max = {crystal.n_max} level "
            f"(oop {top_oop:.2e}, ip {top_ip:.2e}); raise n_max"
        )

    return GateIntegration(
        coherences=c,
        top_population=(top_oop, top_ip),
        initial_top=init_top,
        final_blocks=blocks,
    )


def gate_propagate(crystal: CrystalConfig, gate: GateConfig) -> np.ndarray:
    """Two-qubit channel induced by the gate drive, as a Choi matrix.

    Truncation makes the heating dissipator leak a little trace at the
    top Fock level (bounded by the truncation guard); the coherence
    matrix is renormalized by its diagonal, which keeps it positive and
    restores exact trace preservation.
    """
    result = integrate_gate(crystal, gate)
    c = result.coherences
    scale = np.sqrt(np.real(np.diag(c)))
    c = c / np.outer(scale, scale)
    superop = np.diag(c.reshape(-1))
    chi = superop_to_choi(superop)
    return validate_choi(0.5 * (chi + chi.conj().T), atol=1e-9)


def zz_phase(crystal: CrystalConfig, gate: GateConfig) -> float:
    """Entangling phase (phi00 - phi01) + (phi11 - phi10) of the channel."""
    cold = replace(crystal, heat_rate_oop=0.0, heat_rate_ip=0.0)
    c = integrate_gate(cold, gate).coherences
    return float(np.angle(c[0, 1]) + np.angle(c[3, 2]))


def calibrate_gate(crystal: CrystalConfig, gate: GateConfig, *, tol: float = 1e-10,
                   max_iter: int = 30) -> GateConfig:
    """Solve the drive amplitude for a pi/4 geometric phase.

    The duration is fixed by the Walsh closure condition; omega is then
    iterated on the zero-heating channel phase, which scales as omega^2
    to leading order, so the fixed-point update converges in a few steps
    even with the second-order in-phase term shifting the phase.
    """
    gate.validate()
    duration = walsh_duration(gate.delta, gate.walsh_order)
    eta_prod = abs(gate.eta_oop[0] * gate.eta_oop[1])
    if eta_prod == 0:
        raise ValueError("gate needs nonzero out-of-phase Lamb-Dicke parameters on both ions")
    omega = gate.omega or gate.delta / math.sqrt(4.0 * (gate.walsh_order + 1) * eta_prod)
    cal = replace(gate, omega=omega, duration=duration)
    for _ in range(max_iter):
        gamma = zz_phase(crystal, cal)
        err = abs(gamma) - math.pi
        if abs(err) < tol:
            return cal
        cal = replace(cal, omega=cal.omega * math.sqrt(math.pi / abs(gamma)))
    raise RuntimeError(f"gate calibration did not converge (residual {err:.2e} rad)")


def ideal_zz_unitary(sign: float) -> np.ndarray:
    """exp(sign * i*pi/4 * Z x Z)."""
    phases = np.exp(1j * sign * math.pi / 4.0 * _Z1 * _Z2)
    return np.diag(phases)


def _iswap_layers(sign: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Single-qubit layers (first, middle, last) around the two ZZ gates.

    Conjugation by G turns each ZZ interaction into YY, then XX via the
    Hadamards; the residual local phase on the logic qubit depends on the
    gate sign and is undone by the final S-type correction.
    """
    first = kron(G_ROT.conj().T, G_ROT.conj().T)
    middle = kron(HADAMARD @ G_ROT, HADAMARD @ G_ROT)
    phase_fix = S_GATE.conj().T if sign > 0 else S_GATE
    last = kron(np.eye(2, dtype=complex), phase_fix) @ kron(HADAMARD, HADAMARD)
    return first, middle, last


def _detect_zz_sign(gate_superop: np.ndarray) -> float:
    plus = np.full((4, 4), 0.25, dtype=complex)
    out = (gate_superop @ plus.reshape(-1)).reshape(4, 4)
    phase = np.angle(out[0, 1])
    return 1.0 if phase >= 0 else -1.0


def iswap_circuit(gate_chi: np.ndarray, sq_error: float = 0.0) -> np.ndarray:
    """Compose two gate applications into the network-to-logic swap.

    Fixed single-qubit layers turn the two ZZ interactions into an iSWAP
    (up to local phases), with a final phase correction so the ideal
    composite maps |phi>|down> to |down>|phi> exactly.  ``sq_error`` adds
    a per-qubit depolarizing error after each single-qubit layer.  The
    decomposition is self-checked against the ideal gate on every call.
    """
    gate_superop = choi_to_superop(gate_chi)
    sign = _detect_zz_sign(gate_superop)
    first, middle, last = _iswap_layers(sign)

    def layer_superop(u: np.ndarray) -> np.ndarray:
        s = unitary_superop(u)
        if sq_error > 0.0:
            eye = np.eye(2, dtype=complex)
            dep1 = kraus_to_superop([kron(k, eye) for k in depolarizing_kraus(sq_error)])
            dep2 = kraus_to_superop([kron(eye, k) for k in depolarizing_kraus(sq_error)])
            s = dep2 @ dep1 @ s
        return s

    ideal_gate = unitary_superop(ideal_zz_unitary(sign))
    ideal_total = compose_superops(
        unitary_superop(first), ideal_gate, unitary_superop(middle), ideal_gate,
        unitary_superop(last),
    )
    down = np.zeros((2, 2), dtype=complex)
    down[0, 0] = 1.0
    for phi in (np.array([1, 0]), np.array([0, 1]), np.array([1, 1]) / math.sqrt(2),
                np.array([1, 1j]) / math.sqrt(2)):
        rho_in = kron(np.outer(phi, np.conj(phi)), down)
        rho_out = (ideal_total @ rho_in.reshape(-1)).reshape(4, 4)
        target = kron(down, np.outer(phi, np.conj(phi)))
        fid = float(np.real(np.trace(rho_out @ target)))
        if fid < 1.0 - 1e-9:
            raise AssertionError(f"iSWAP decomposition self-check failed (fidelity {fid})")

    total = compose_superops(
        layer_superop(first), gate_superop, layer_superop(middle), gate_superop,
        layer_superop(last),
    )
    chi = superop_to_choi(total)
    return 0.5 * (chi + chi.conj().T)


@dataclass
class MidCircuitResult:
    """Projective network-qubit check: keep/reject branches and weights."""

    keep_prob: float
    kept: np.ndarray | None
    rejected: np.ndarray | None


def midcircuit_detect(rho: np.ndarray) -> MidCircuitResult:
    """Project the network qubit (first factor) onto down/up.

    Returns both normalized branches; a branch with probability below
    1e-12 comes back as None.
    """
    rho = np.asarray(rho, dtype=complex)
    eye = np.eye(2, dtype=complex)
    down = np.zeros((2, 2), dtype=complex)
    down[0, 0] = 1.0
    up = np.zeros((2, 2), dtype=complex)
    up[1, 1] = 1.0
    p_keep_op = kron(down, eye)
    p_rej_op = kron(up, eye)
    keep_prob = float(np.real(np.trace(p_keep_op @ rho)))
    kept = None
    rejected = None
    if keep_prob >= 1e-12:
        kept = p_keep_op @ rho @ p_keep_op / keep_prob
    if 1.0 - keep_prob >= 1e-12:
        rejected = p_rej_op @ rho @ p_rej_op / (1.0 - keep_prob)
    return MidCircuitResult(keep_prob=keep_prob, kept=kept, rejected=rejected)


def dephasing_time(noise: StorageNoiseConfig, qubit: str) -> float:
    """Gaussian 1/e coherence time from quasi-static field noise."""
    sens = noise.sens_network if qubit == "network" else noise.sens_memory
    rate = math.sqrt(2.0) * math.pi * sens * noise.b_noise_rms
    return math.inf if rate == 0.0 else 1.0 / rate


def storage_channel(noise: StorageNoiseConfig, qubit: str, t: float) -> np.ndarray:
    """Single-qubit storage channel over time ``t`` as a 4x4 Choi matrix.

    Quasi-static field noise gives Gaussian coherence decay
    exp(-(t/T2*)^2) with 1/T2* = sqrt(2)*pi*sensitivity*b_rms; any
    nonzero decoupling schedule echoes it away completely, leaving the
    white-noise floor.  Laser leakage adds exponential depolarization
    unless the ions are transported.
    """
    noise.validate()
    if qubit not in ("network", "memory"):
        raise ValueError(f"qubit must be 'network' or 'memory', got {qubit!r}")
    if t < 0:
        raise ValueError("storage time must be non-negative")
    coherence = math.exp(-noise.dephasing_floor * t)
    if noise.dd_pulses == 0:
        t2 = dephasing_time(noise, qubit)
        if math.isfinite(t2):
            coherence *= math.exp(-((t / t2) ** 2))
    leak = 0.0 if noise.transported else noise.leak_rate
    p_dep = 1.0 - math.exp(-leak * t)
    s = kraus_to_superop(depolarizing_kraus(p_dep)) @ kraus_to_superop(
        dephasing_kraus(coherence)
    )
    return superop_to_choi(s)


KNILL_PHASES = (math.pi / 6.0, 0.0, math.pi / 2.0, 0.0, math.pi / 6.0)


def dd_sequence(dd_pulses: int, t: float) -> list[tuple[float, float]]:
    """Evenly spaced Knill composites spanning ``t``.

    Each composite is five zero-duration pi-pulses with the phase pattern
    (30, 0, 90, 0, 30) degrees; composite centers sit at (k + 1/2) * t /
    n_composites, symmetric about t/2.  Returns (time, phase) pairs.
    """
    if dd_pulses < 0 or dd_pulses % 5:
        raise ValueError("dd_pulses must be a non-negative multiple of 5")
    if dd_pulses == 0:
        return []
    n_comp = dd_pulses // 5
    spacing = t / n_comp
    schedule = []
    for k in range(n_comp):
        center = (k + 0.5) * spacing
        for phase in KNILL_PHASES:
            schedule.append((center, phase))
    return schedule


def _transfer_unitary(delta_f: float, rabi: float, delay: float, *,
                      spectator: bool) -> np.ndarray:
    """Total 6-level unitary of the logic-to-memory pulse sequence.

    Levels: 0=|3,3>, 1=|3,0>, 2=|4,4>, 3=|3,1>, 4=|4,1>, 5=|4,0>.  The
    first two pi pulses are ideal; the two pi/2 pulses on 5<->3 carry the
    off-resonant coupling to 4<->1, detuned by delta_f, and the delay
    between them advances only the spectator phase.
    """

    def pi_pulse(i: int, j: int) -> np.ndarray:
        u = np.eye(6, dtype=complex)
        u[i, i] = u[j, j] = 0.0
        u[i, j] = u[j, i] = -1j
        return u

    detuning = TWO_PI * delta_f if spectator else 0.0
    h = np.zeros((6, 6), dtype=complex)
    h[5, 3] = h[3, 5] = rabi / 2.0
    if spectator:
        h[4, 1] = h[1, 4] = rabi / 2.0
        h[4, 4] = detuning
    tau = (math.pi / 2.0) / rabi
    u_half = scipy.linalg.expm(-1j * h * tau)
    u_delay = np.eye(6, dtype=complex)
    if spectator:
        u_delay[4, 4] = np.exp(-1j * detuning * delay)
    return u_half @ u_delay @ u_half @ pi_pulse(2, 3) @ pi_pulse(0, 1)


_MEMORY_LEVELS = (5, 1)  # |4,0>, |3,0>
_LOGIC_LEVELS = (2, 0)  # |4,4>, |3,3>


def _qubit_channel_from_map(a: np.ndarray) -> np.ndarray:
    """CPTP qubit channel with effective operator ``a``; leakage out of
    the qubit subspace is replaced by the maximally mixed state."""
    leak = np.eye(2, dtype=complex) - a.conj().T @ a
    evals, evecs = np.linalg.eigh(0.5 * (leak + leak.conj().T))
    kraus = [a]
    for s, vec in zip(evals, evecs.T):
        if s <= 1e-15:
            continue
        for target in range(2):
            ket = np.zeros(2, dtype=complex)
            ket[target] = 1.0
            kraus.append(math.sqrt(s / 2.0) * np.outer(ket, vec.conj()))
    return superop_to_choi(kraus_to_superop(kraus))


def transfer_sequence(delta_f: float, rabi: float, delay: float) -> np.ndarray:
    """Effective channel on the stored qubit through the transfer ladder.

    Maps the logic qubit (|4,4>, |3,3>) onto the memory qubit (|4,0>,
    |3,0>).  Pass ``delta_f = inf`` for the spectator-free ideal.
    Returns a 4x4 Choi matrix.
    """
    if rabi <= 0 or delay < 0:
        raise ValueError("rabi must be positive and delay non-negative")
    if not delta_f > 0:
        raise ValueError("delta_f must be positive")
    spectator = math.isfinite(delta_f)
    u = _transfer_unitary(delta_f, rabi, delay, spectator=spectator)
    a = u[np.ix_(_MEMORY_LEVELS, _LOGIC_LEVELS)]
    return _qubit_channel_from_map(a)


def ideal_transfer_choi(rabi: float) -> np.ndarray:
    return transfer_sequence(math.inf, rabi, 0.0)


def transfer_fidelity(delta_f: float, rabi: float, delay: float) -> float:
    """Process fidelity of the transfer against its spectator-free ideal."""
    from .tomography import process_fidelity

    return process_fidelity(transfer_sequence(delta_f, rabi, delay), ideal_transfer_choi(rabi))
