"""Monte Carlo orchestration of the experimental sequences.

Each sequence follows the hardware flow: herald a photon on the network
ion, swap the entanglement to the logic qubit, transfer it to the memory
qubit, gate on the mid-circuit check, optionally herald a second photon
while the first one's entanglement is stored, and finally sample both
ion-photon pairs through the analyzer POVMs into click records.

Shots are independent, with one Philox stream per (setting, shot), so any
execution order produces identical datasets.  Quasi-static dephasing is
applied once per qubit over the total hold time rather than composed
segment by segment, which is what shot-to-shot field noise does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .channels import (
    apply_superop_to_subsystem,
    choi_to_superop,
    dephasing_kraus,
    depolarizing_kraus,
    kraus_to_superop,
    permute_systems,
    unitary_superop,
)
from .dataset import ClickDataset
from .dynamics import (
    calibrate_gate,
    dephasing_time,
    gate_propagate,
    iswap_circuit,
    storage_channel,
    transfer_sequence,
)
from .linalg import kron, partial_trace
from .optics import IonBasisSetting, OpticsConfig, ion_projector, tomography_settings
from .tomography import build_measurement_model

if TYPE_CHECKING:
    from .config import NodeConfig


@dataclass(frozen=True)
class AttemptLoopConfig:
    """Per-attempt crosstalk rates of the photon-generation loop."""

    success_prob: float = 0.013
    attempt_period: float = 1e-6
    light_shift_per_attempt: float = 0.0
    heating_per_attempt: float = 0.0

    def validate(self) -> "AttemptLoopConfig":
        if not 0.0 < self.success_prob <= 1.0:
            raise ValueError("success_prob must be in (0, 1]")
        if self.attempt_period <= 0:
            raise ValueError("attempt_period must be positive")
        if self.heating_per_attempt < 0:
            raise ValueError("heating_per_attempt must be non-negative")
        return self


@dataclass
class SequenceResult:
    """Datasets plus per-shot records and summary statistics."""

    datasets: dict[str, ClickDataset]
    records: dict[str, np.ndarray]
    summary: dict = field(default_factory=dict)


def rate_ratio(decoherence_rate: float, entanglement_rate: float) -> float:
    """Decoherence rate over node-to-node entanglement rate."""
    if decoherence_rate <= 0 or entanglement_rate <= 0:
        raise ValueError("rates must be positive")
    return decoherence_rate / entanglement_rate


def bell_pair(prep_error: float = 0.0) -> np.ndarray:
    """Heralded ion-photon state (|down,H> + |up,V>)/sqrt2 with optional
    depolarizing preparation error."""
    ket = np.zeros(4, dtype=complex)
    ket[0] = ket[3] = 1.0 / math.sqrt(2.0)
    rho = np.outer(ket, ket.conj())
    return (1.0 - prep_error) * rho + prep_error * np.eye(4) / 4.0


def _shot_rng(seed: int, setting: int, shot: int) -> Generator:
    return Generator(Philox(SeedSequence(entropy=seed, spawn_key=(setting, shot))))


def _rz(theta: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * theta)]).astype(complex)


def _memory_shot_superop(theta: float, coherence: float, p_dep: float) -> np.ndarray:
    """Phase kick + dephasing + depolarizing acting on one stored qubit."""
    s = kraus_to_superop(dephasing_kraus(coherence)) @ unitary_superop(_rz(theta))
    if p_dep > 0.0:
        s = kraus_to_superop(depolarizing_kraus(p_dep)) @ s
    return s


def _gaussian_coherence(t: float, t2: float) -> float:
    if not math.isfinite(t2):
        return 1.0
    return math.exp(-((t / t2) ** 2))


class _PairSampler:
    """Per-setting measurement operators for one ion-photon pair."""

    def __init__(self, cfg: OpticsConfig, settings, readout_error: float):
        self.settings = settings
        self.readout_error = readout_error
        self.povms, self.ion_projs = build_measurement_model(cfg, settings)
        eye = np.eye(2, dtype=complex)
        self.click_ops = []  # (4, 4, 4) per setting: detector ops on ion x photon
        self.bright_ops = []
        for povm, (xi_b, _) in zip(self.povms, self.ion_projs):
            self.click_ops.append(np.array([kron(eye, povm.detectors[k]) for k in range(4)]))
            self.bright_ops.append(np.array([kron(xi_b, povm.detectors[k]) for k in range(4)]))
        self.click_ops = np.array(self.click_ops)
        self.bright_ops = np.array(self.bright_ops)

    def click_probability(self, setting: int, rho_pair: np.ndarray) -> float:
        p = float(np.sum(np.real(np.einsum("kij,ji->k", self.click_ops[setting], rho_pair))))
        if p <= 0.0:
            raise ValueError("state produces no clicks under this analyzer configuration")
        return min(p, 1.0)

    def sample(self, setting: int, rho_pair: np.ndarray, rng: Generator,
               vartheta_scale: float = 1.0) -> tuple[int, bool]:
        """Detector index and (possibly flipped) bright outcome for one click."""
        p_k = np.real(np.einsum("kij,ji->k", self.click_ops[setting], rho_pair))
        p_k = np.clip(p_k, 0.0, None)
        detector = int(rng.choice(4, p=p_k / p_k.sum()))
        if vartheta_scale == 1.0:
            num = np.real(np.einsum("ij,ji->", self.bright_ops[setting][detector], rho_pair))
        else:
            _, iset = self.settings[setting]
            xi_b = ion_projector(
                IonBasisSetting(min(iset.vartheta * vartheta_scale, math.pi), iset.varphi),
                "bright",
            )
            povm = self.povms[setting]
            num = np.real(
                np.einsum("ij,ji->", kron(xi_b, povm.detectors[detector]), rho_pair)
            )
        p_bright = min(max(num / p_k[detector], 0.0), 1.0)
        e = self.readout_error
        p_bright = (1.0 - e) * p_bright + e * (1.0 - p_bright)
        bright = bool(rng.random() < p_bright)
        return detector, bright


def _empty_dataset(settings, metadata: dict) -> ClickDataset:
    s = len(settings)
    return ClickDataset(
        settings=tuple(settings),
        attempts=np.zeros(s, dtype=np.int64),
        n_empty=np.zeros(s, dtype=np.int64),
        n_click=np.zeros((4, s), dtype=np.int64),
        n_bright=np.zeros((4, s), dtype=np.int64),
        n_dark=np.zeros((4, s), dtype=np.int64),
        metadata=metadata,
    )


def _record_click(ds: ClickDataset, setting: int, attempts: int, detector: int,
                  bright: bool) -> None:
    ds.attempts[setting] += attempts
    ds.n_empty[setting] += attempts - 1
    ds.n_click[detector, setting] += 1
    if bright:
        ds.n_bright[detector, setting] += 1
    else:
        ds.n_dark[detector, setting] += 1


def prepare_front_end(config: "NodeConfig") -> dict:
    """State and channels shared by every shot.

    Builds the Bell pair, the (calibrated) gate, the iSWAP composite and
    the transfer channel, and returns the post-transfer three-system
    state (network, memory, photon1) along with the mid-circuit keep
    probability and its conditional states.
    """
    gate = config.gate
    if gate.omega is None or gate.duration is None:
        gate = calibrate_gate(config.crystal, gate)
    gate_chi = gate_propagate(config.crystal, gate)
    iswap_chi = iswap_circuit(gate_chi, config.sq_error)
    transfer_chi = transfer_sequence(
        config.transfer_delta_f, config.transfer_rabi, config.transfer_delay
    )

    rho_np = bell_pair(config.prep_error)  # (network, photon1)
    logic0 = np.zeros((2, 2), dtype=complex)
    logic0[0, 0] = 1.0
    rho3 = permute_systems(kron(rho_np, logic0), [2, 2, 2], [0, 2, 1])  # (net, logic, ph)
    rho3 = apply_superop_to_subsystem(choi_to_superop(iswap_chi), rho3, [4, 2], 0)
    rho3 = apply_superop_to_subsystem(choi_to_superop(transfer_chi), rho3, [2, 2, 2], 1)

    proj_keep = kron(np.diag([1.0, 0.0]).astype(complex), np.eye(4, dtype=complex))
    keep_prob = float(np.real(np.trace(proj_keep @ rho3)))
    kept = proj_keep @ rho3 @ proj_keep / keep_prob if keep_prob > 1e-12 else None
    pair1_base = partial_trace(kept, [2, 4], 1) if kept is not None else None
    return {
        "gate": gate,
        "gate_chi": gate_chi,
        "iswap_chi": iswap_chi,
        "transfer_chi": transfer_chi,
        "keep_prob": keep_prob,
        "pair1_base": pair1_base,  # (memory, photon1)
        "pair2_base": bell_pair(config.prep_error),  # (network, photon2)
    }


def run_two_photon_sequence(
    shots: int, config: "NodeConfig", delta_t: float, seed: int
) -> SequenceResult:
    """Fig-3(a)-style sequence: store, re-entangle, measure both pairs.

    ``shots`` sequence executions run per basis setting; mid-circuit
    rejects are recorded and restart the sequence (they contribute no
    tomography events).  Returns ClickDatasets for the memory-photon1 and
    network-photon2 pairs.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    config.loop.validate()
    front = prepare_front_end(config)
    settings = tomography_settings()
    sampler = _PairSampler(config.optics, settings, config.readout_error)
    # no decoupling or transport anywhere in this sequence
    noise = replace(config.noise, dd_pulses=0, transported=False)
    t2_mem = dephasing_time(noise, "memory")
    t2_net = dephasing_time(noise, "network")
    leak = noise.leak_rate
    loop = config.loop

    ds1 = _empty_dataset(settings, {"pair": "memory-photon1", "seed": seed, "delta_t": delta_t})
    ds2 = _empty_dataset(settings, {"pair": "network-photon2", "seed": seed, "delta_t": delta_t})
    n_settings = len(settings)
    rec_keep = np.zeros((n_settings, shots), dtype=bool)
    rec_n1 = np.zeros((n_settings, shots), dtype=np.int64)
    rec_n2 = np.zeros((n_settings, shots), dtype=np.int64)

    # network-side storage over delta_t is shot-independent
    net_coh = _gaussian_coherence(delta_t, t2_net) * math.exp(-noise.dephasing_floor * delta_t)
    p_dep_net = 1.0 - math.exp(-leak * delta_t)
    s_net = _memory_shot_superop(0.0, net_coh, p_dep_net)
    pair2_state = apply_superop_to_subsystem(s_net, front["pair2_base"], [2, 2], 0)

    for s_idx in range(n_settings):
        p_click1 = sampler.click_probability(s_idx, front["pair1_base"])
        p_click2 = sampler.click_probability(s_idx, pair2_state)
        for shot in range(shots):
            rng = _shot_rng(seed, s_idx, shot)
            n1 = int(rng.geometric(p_click1))
            rec_n1[s_idx, shot] = n1
            keep = bool(rng.random() < front["keep_prob"])
            rec_keep[s_idx, shot] = keep
            if not keep:
                continue
            n2 = int(rng.geometric(p_click2))
            rec_n2[s_idx, shot] = n2

            t_mem = config.midcircuit_deadtime + n2 * loop.attempt_period + delta_t
            theta = n2 * loop.light_shift_per_attempt
            coh = _gaussian_coherence(t_mem, t2_mem) * math.exp(-noise.dephasing_floor * t_mem)
            p_dep = 1.0 - math.exp(-leak * t_mem)
            s_mem = _memory_shot_superop(theta, coh, p_dep)
            rho1 = apply_superop_to_subsystem(s_mem, front["pair1_base"], [2, 2], 0)

            det1, bright1 = sampler.sample(s_idx, rho1, rng)
            _record_click(ds1, s_idx, n1, det1, bright1)

            dw = 1.0
            if config.network_dw_eta > 0.0:
                extra = n2 * loop.heating_per_attempt + config.crystal.heat_rate_oop * t_mem
                dw = math.exp(-config.network_dw_eta**2 * extra)
            det2, bright2 = sampler.sample(s_idx, pair2_state, rng, vartheta_scale=dw)
            _record_click(ds2, s_idx, n2, det2, bright2)

    ds1.validate()
    ds2.validate()
    summary = {
        "keep_prob_model": front["keep_prob"],
        "keep_rate_observed": float(rec_keep.mean()),
        "mean_attempts_1": float(rec_n1.mean()),
        "mean_attempts_2": float(rec_n2[rec_keep].mean()) if rec_keep.any() else 0.0,
        "delta_t": delta_t,
        "shots_per_setting": shots,
    }
    return SequenceResult(
        datasets={"pair1": ds1, "pair2": ds2},
        records={"keep": rec_keep, "attempts1": rec_n1, "attempts2": rec_n2},
        summary=summary,
    )


def run_storage_sequence(
    shots: int, config: "NodeConfig", storage: float, dd: bool, seed: int
) -> SequenceResult:
    """Fig-3(b)-style sequence: store the first pair through a long hold.

    With ``dd`` the Knill schedule echoes the quasi-static noise and the
    ions are transported away from the interaction zone (no leakage), as
    the two mitigations are bundled in the experiment; without it the
    memory sees the full quasi-static Gaussian decay plus leakage.
    Sympathetic cooling resets the motional occupations between storage
    segments; the reset values are recorded in the summary.
    """
    if storage < 0:
        raise ValueError("storage must be non-negative")
    front = prepare_front_end(config)
    settings = tomography_settings()
    sampler = _PairSampler(config.optics, settings, config.readout_error)
    noise = replace(
        config.noise,
        dd_pulses=config.noise.dd_pulses if dd else 0,
        transported=dd,
    )
    hold = config.midcircuit_deadtime + storage
    chi_store = storage_channel(noise, "memory", hold)
    rho1 = apply_superop_to_subsystem(
        choi_to_superop(chi_store), front["pair1_base"], [2, 2], 0
    )

    ds1 = _empty_dataset(
        settings,
        {"pair": "memory-photon1", "seed": seed, "storage": storage, "dd": bool(dd)},
    )
    n_settings = len(settings)
    rec_keep = np.zeros((n_settings, shots), dtype=bool)
    rec_n1 = np.zeros((n_settings, shots), dtype=np.int64)
    for s_idx in range(n_settings):
        p_click1 = sampler.click_probability(s_idx, rho1)
        for shot in range(shots):
            rng = _shot_rng(seed, s_idx, shot)
            n1 = int(rng.geometric(p_click1))
            rec_n1[s_idx, shot] = n1
            keep = bool(rng.random() < front["keep_prob"])
            rec_keep[s_idx, shot] = keep
            if not keep:
                continue
            det1, bright1 = sampler.sample(s_idx, rho1, rng)
            _record_click(ds1, s_idx, n1, det1, bright1)
    ds1.validate()
    summary = {
        "keep_prob_model": front["keep_prob"],
        "keep_rate_observed": float(rec_keep.mean()),
        "storage": storage,
        "dd": bool(dd),
        "cooling_reset_n_bar": [config.crystal.n_bar_oop, config.crystal.n_bar_ip],
        "shots_per_setting": shots,
    }
    return SequenceResult(
        datasets={"pair1": ds1},
        records={"keep": rec_keep, "attempts1": rec_n1},
        summary=summary,
    )


def run_ramsey_probe(
    attempt_fraction: float,
    total_time: float,
    loop_cfg: AttemptLoopConfig,
    shots: int,
    seed: int,
    dephasing_floor: float = 0.0,
) -> tuple[float, float]:
    """Memory-qubit Ramsey fringe while the attempt loop runs in background.

    The loop occupies ``attempt_fraction`` of the fixed total duration;
    each attempt kicks the memory phase by the configured light shift.
    The fringe contrast comes from the white-noise floor alone and is
    independent of the attempt number by construction.  Returns the
    fitted (phase, contrast).
    """
    if total_time <= 0:
        raise ValueError("total_time must be positive")
    if not 0.0 <= attempt_fraction <= 1.0:
        raise ValueError("attempt_fraction must be in [0, 1]")
    loop_cfg.validate()
    n_attempts = int(round(attempt_fraction * total_time / loop_cfg.attempt_period))
    true_phase = n_attempts * loop_cfg.light_shift_per_attempt
    true_contrast = math.exp(-dephasing_floor * total_time)

    rng = Generator(Philox(SeedSequence(entropy=seed, spawn_key=(0,))))
    n_points = 12
    analysis = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    per_point = max(shots // n_points, 1)
    probs = 0.5 * (1.0 + true_contrast * np.cos(analysis - true_phase))
    counts = rng.binomial(per_point, probs)
    y = counts / per_point
    # linear least squares on 1/2 + (C/2) cos(theta - phi)
    design = np.column_stack([np.ones(n_points), np.cos(analysis), np.sin(analysis)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    contrast = 2.0 * math.hypot(coef[1], coef[2])
    phase = math.atan2(coef[2], coef[1])
    return phase, contrast


def run_thermometry_probe(
    attempt_fraction: float,
    loop_cfg: AttemptLoopConfig,
    shots: int,
    seed: int,
    n_bar_baseline: float,
    heat_rate: float = 0.0,
    total_time: float = 1e-3,
) -> float:
    """Sideband-ratio estimate of the mode occupation after the loop.

    Recoil heating adds ``heating_per_attempt`` quanta per attempt on top
    of the baseline and the background heating over the total duration.
    Red and blue sideband excitations are sampled binomially (excitation
    scale 0.5) and inverted via n = r / (1 - r).
    """
    loop_cfg.validate()
    if not 0.0 <= attempt_fraction <= 1.0:
        raise ValueError("attempt_fraction must be in [0, 1]")
    n_attempts = int(round(attempt_fraction * total_time / loop_cfg.attempt_period))
    n_bar = n_bar_baseline + heat_rate * total_time + loop_cfg.heating_per_attempt * n_attempts
    ratio_true = n_bar / (1.0 + n_bar)
    p_exc = 0.5
    rng = Generator(Philox(SeedSequence(entropy=seed, spawn_key=(1,))))
    k_red = rng.binomial(shots, p_exc * ratio_true)
    k_blue = rng.binomial(shots, p_exc)
    if k_blue == 0:
        return math.inf
    r_hat = min(k_red / k_blue, 1.0 - 1e-9)
    return r_hat / (1.0 - r_hat)


def synthetic_dataset(
    rho: np.ndarray,
    cfg: OpticsConfig,
    clicks_per_setting: int,
    seed: int,
    readout_error: float = 0.0,
    metadata: dict | None = None,
) -> ClickDataset:
    """Multinomial click record for a fixed ion-photon state.

    The per-setting empties are drawn negative-binomially so that click
    and attempt statistics stay mutually consistent; with a lossless
    analyzer there are none.
    """
    settings = tomography_settings()
    povms, ion_projs = build_measurement_model(cfg, settings)
    ds = _empty_dataset(settings, dict(metadata or {}, seed=seed, synthetic=True))
    eye = np.eye(2, dtype=complex)
    for i, povm in enumerate(povms):
        xi_b, xi_d = ion_projs[i]
        outcome_ops = []
        for k in range(4):
            outcome_ops.append(kron(xi_b, povm.detectors[k]))
            outcome_ops.append(kron(xi_d, povm.detectors[k]))
        p = np.real(np.einsum("eij,ji->e", np.array(outcome_ops), rho))
        p = np.clip(p, 0.0, None)
        if readout_error > 0.0:
            pb, pd = p[0::2].copy(), p[1::2].copy()
            p[0::2] = (1 - readout_error) * pb + readout_error * pd
            p[1::2] = (1 - readout_error) * pd + readout_error * pb
        p_click = p.sum()
        p_empty = max(
            float(np.real(np.trace(kron(eye, povm.empty) @ rho))), 0.0
        )
        rng = Generator(Philox(SeedSequence(entropy=seed, spawn_key=(i,))))
        counts = rng.multinomial(clicks_per_setting, p / p_click)
        if p_empty > 1e-12:
            empties = int(rng.negative_binomial(clicks_per_setting, p_click))
        else:
            empties = 0
        ds.n_empty[i] = empties
        ds.attempts[i] = clicks_per_setting + empties
        for k in range(4):
            ds.n_bright[k, i] = counts[2 * k]
            ds.n_dark[k, i] = counts[2 * k + 1]
            ds.n_click[k, i] = counts[2 * k] + counts[2 * k + 1]
    return ds.validate()


def expected_pair_states(
    config: "NodeConfig", delta_t: float, *, tail: float = 1e-9, front: dict | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble-averaged pair states, exact up to the geometric tail cut.

    Averages the per-shot memory channel over the geometric distribution
    of second-photon attempts; useful for deterministic decay-curve
    checks without sampling noise.  Pass a precomputed ``front`` (from
    :func:`prepare_front_end`) when sweeping storage times.
    """
    if front is None:
        front = prepare_front_end(config)
    noise = replace(config.noise, dd_pulses=0, transported=False)
    loop = config.loop
    t2_mem = dephasing_time(noise, "memory")
    t2_net = dephasing_time(noise, "network")
    leak = noise.leak_rate
    p = loop.success_prob
    n_cut = max(int(math.ceil(math.log(tail) / math.log(1.0 - p))), 2) if p < 1.0 else 1

    s_avg = np.zeros((4, 4), dtype=complex)
    weight_sum = 0.0
    for n2 in range(1, n_cut + 1):
        w = (1.0 - p) ** (n2 - 1) * p
        t_mem = config.midcircuit_deadtime + n2 * loop.attempt_period + delta_t
        coh = _gaussian_coherence(t_mem, t2_mem) * math.exp(-noise.dephasing_floor * t_mem)
        p_dep = 1.0 - math.exp(-leak * t_mem)
        s_avg += w * _memory_shot_superop(n2 * loop.light_shift_per_attempt, coh, p_dep)
        weight_sum += w
    s_avg /= weight_sum
    rho1 = apply_superop_to_subsystem(s_avg, front["pair1_base"], [2, 2], 0)

    net_coh = _gaussian_coherence(delta_t, t2_net) * math.exp(-noise.dephasing_floor * delta_t)
    s_net = _memory_shot_superop(0.0, net_coh, 1.0 - math.exp(-leak * delta_t))
    rho2 = apply_superop_to_subsystem(s_net, front["pair2_base"], [2, 2], 0)
    return rho1, rho2
