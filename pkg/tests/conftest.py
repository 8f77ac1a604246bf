import math
from dataclasses import replace

import numpy as np
import pytest

from ionnode.config import NodeConfig, default_config, paper_crystal
from ionnode.dynamics import CrystalConfig, GateConfig, StorageNoiseConfig, calibrate_gate
from ionnode.optics import OpticsConfig


def random_density_matrix(rng: np.random.Generator, dim: int, rank: int | None = None) -> np.ndarray:
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture(scope="session")
def cold_crystal() -> CrystalConfig:
    """Small, zero-temperature crystal for fast gate integrations."""
    return paper_crystal(n_max=6, n_bar_oop=0.0, n_bar_ip=0.0,
                         heat_rate_oop=0.0, heat_rate_ip=0.0)


@pytest.fixture(scope="session")
def gate_template() -> GateConfig:
    return GateConfig(delta=2 * math.pi * 34e3, eta_oop=(0.10, -0.11), eta_ip=(0.075, 0.065))


@pytest.fixture(scope="session")
def calibrated_gate(cold_crystal, gate_template) -> GateConfig:
    return calibrate_gate(cold_crystal, gate_template)


@pytest.fixture(scope="session")
def noiseless_config(cold_crystal, calibrated_gate) -> NodeConfig:
    """End-to-end config with every noise source switched off."""
    return replace(
        default_config(),
        optics=OpticsConfig(),
        crystal=cold_crystal,
        gate=calibrated_gate,
        noise=StorageNoiseConfig(b_noise_rms=0.0, leak_rate=0.0, dephasing_floor=0.0),
        transfer_delta_f=float("inf"),
    )
