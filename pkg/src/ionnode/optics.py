"""Photonic measurement model of the Bell state analyzer.

A single photon enters in the 2-dim polarization space, passes a half
waveplate then a quarter waveplate (the quarter waveplate sits nearest the
polarizing splitters), hits a non-polarizing splitter with
polarization-dependent transmission, and each output arm ends in a
polarizing splitter feeding two detectors.  ``build_U_P`` assembles the
8x2 isometry from the input polarization to the eight ``|detector, q>``
output modes; ``build_povm`` turns it into the five detection POVM
elements (four detectors plus the no-click element).

Detector indexing convention: 0=(A,H), 1=(A,V), 2=(B,H), 3=(B,V), where A
is the transmitted arm of the splitter.  Extinction parameters are stored
as leakage power fractions; a quoted ratio "1:N" corresponds to 1/(1+N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

HWP_ANGLES = (0.0, math.pi / 8)
QWP_ANGLES = (0.0, math.pi / 4)


@dataclass(frozen=True)
class OpticsConfig:
    """Waveplate, splitter and detector parameters of the analyzer."""

    r_qwp: float = math.pi / 2
    r_hwp: float = math.pi
    beta_qwp: float = 0.0
    beta_hwp: float = 0.0
    t_bs_H: float = 0.5
    t_bs_V: float = 0.5
    eps_A_H: float = 0.0
    eps_A_V: float = 0.0
    eps_B_H: float = 0.0
    eps_B_V: float = 0.0
    eta: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def validate(self) -> "OpticsConfig":
        for name in ("r_qwp", "r_hwp"):
            r = getattr(self, name)
            if not 0.0 <= r < TWO_PI:
                raise ValueError(f"{name} = {r} outside [0, 2*pi)")
        for name in ("t_bs_H", "t_bs_V", "eps_A_H", "eps_A_V", "eps_B_H", "eps_B_V"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if len(self.eta) != 4 or any(not 0.0 <= e <= 1.0 for e in self.eta):
            raise ValueError(f"eta = {self.eta} must be four efficiencies in [0, 1]")
        return self


def extinction_leakage(n: float) -> float:
    """Leakage power fraction for an extinction ratio quoted as 1:n."""
    return 1.0 / (1.0 + n)


def characterized_config(eta: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)) -> OpticsConfig:
    """Independently characterized analyzer parameters (shipping preset).

    Detector efficiencies are not part of the characterization and default
    to 1.0 per detector.
    """
    return OpticsConfig(
        r_qwp=0.217 * TWO_PI,
        r_hwp=0.449 * TWO_PI,
        t_bs_H=0.5283,
        t_bs_V=0.5307,
        eps_A_H=extinction_leakage(12500),
        eps_A_V=extinction_leakage(700),
        eps_B_H=extinction_leakage(3000),
        eps_B_V=extinction_leakage(1900),
        eta=tuple(eta),
    ).validate()


@dataclass(frozen=True)
class PhotonBasisSetting:
    """Waveplate angles selecting the photon measurement basis."""

    hwp_angle: float = 0.0
    qwp_angle: float = 0.0

    def validate(self) -> "PhotonBasisSetting":
        if not any(abs(self.hwp_angle - a) < 1e-12 for a in HWP_ANGLES):
            raise ValueError(f"hwp_angle must be one of {HWP_ANGLES}")
        if not any(abs(self.qwp_angle - a) < 1e-12 for a in QWP_ANGLES):
            raise ValueError(f"qwp_angle must be one of {QWP_ANGLES}")
        return self


@dataclass(frozen=True)
class IonBasisSetting:
    """Rotation angles selecting the ion measurement basis."""

    vartheta: float
    varphi: float

    def validate(self) -> "IonBasisSetting":
        if not 0.0 <= self.vartheta <= math.pi:
            raise ValueError(f"vartheta = {self.vartheta} outside [0, pi]")
        if not 0.0 <= self.varphi < TWO_PI:
            raise ValueError(f"varphi = {self.varphi} outside [0, 2*pi)")
        return self


@dataclass(frozen=True)
class PhotonPOVM:
    """Four detector elements plus the no-click element, all 2x2."""

    elements: tuple[np.ndarray, ...]

    @property
    def detectors(self) -> tuple[np.ndarray, ...]:
        return self.elements[:4]

    @property
    def empty(self) -> np.ndarray:
        return self.elements[4]


def waveplate_unitary(retardance: float, angle: float) -> np.ndarray:
    """Jones matrix of a retarder with its fast axis rotated by ``angle``.

    Convention: U = R(-angle) @ diag(1, exp(-i*retardance)) @ R(angle)
    with R a real rotation.  Any global-phase convention yields identical
    POVMs; this one is fixed so tests are deterministic.
    """
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, s], [-s, c]], dtype=complex)
    ret = np.diag([1.0, np.exp(-1j * retardance)])
    return rot.T @ ret @ rot


def build_U_P(cfg: OpticsConfig, setting: PhotonBasisSetting) -> np.ndarray:
    """8x2 isometry from input polarization to the |h, q> output modes.

    Row ordering is h*2 + q with q=0 for H, q=1 for V.  The static
    ``beta`` offsets in the config add to the per-setting waveplate
    angles.
    """
    cfg.validate()
    setting.validate()
    jones = waveplate_unitary(cfg.r_qwp, cfg.beta_qwp + setting.qwp_angle) @ waveplate_unitary(
        cfg.r_hwp, cfg.beta_hwp + setting.hwp_angle
    )
    u = np.zeros((8, 2), dtype=complex)
    # arm A: transmitted with amplitude sqrt(t); arm B gets the remainder
    for arm, (amp_h, amp_v), (eps_h, eps_v) in (
        ("A", (math.sqrt(cfg.t_bs_H), math.sqrt(cfg.t_bs_V)), (cfg.eps_A_H, cfg.eps_A_V)),
        (
            "B",
            (math.sqrt(1.0 - cfg.t_bs_H), math.sqrt(1.0 - cfg.t_bs_V)),
            (cfg.eps_B_H, cfg.eps_B_V),
        ),
    ):
        h_port = 0 if arm == "A" else 2
        v_port = h_port + 1
        arm_h = amp_h * jones[0, :]  # H component entering this arm
        arm_v = amp_v * jones[1, :]
        u[2 * h_port + 0, :] = math.sqrt(1.0 - eps_v) * arm_h  # H to H-port
        u[2 * v_port + 0, :] = math.sqrt(eps_v) * arm_h  # H leaked to V-port
        u[2 * h_port + 1, :] = math.sqrt(eps_h) * arm_v  # V leaked to H-port
        u[2 * v_port + 1, :] = math.sqrt(1.0 - eps_h) * arm_v  # V to V-port
    return u


def build_povm(cfg: OpticsConfig, setting: PhotonBasisSetting) -> PhotonPOVM:
    """Detection POVM for one basis setting.

    Each detector element is eta_h * U_P^dag |h,q><h,q| U_P summed over
    the two output polarizations; the no-click element is the completeness
    remainder and must stay positive semidefinite.
    """
    u = build_U_P(cfg, setting)
    elements = []
    for h in range(4):
        rows = u[2 * h : 2 * h + 2, :]
        elements.append(cfg.eta[h] * rows.conj().T @ rows)
    empty = np.eye(2, dtype=complex) - sum(elements)
    min_eig = float(np.linalg.eigvalsh(0.5 * (empty + empty.conj().T)).min())
    if min_eig < -1e-9:
        raise ValueError(
            f"POVM completeness violated (no-click element eigenvalue {min_eig:.3e}); "
            "check transmissions and efficiencies"
        )
    return PhotonPOVM(elements=tuple(elements) + (empty,))


def ion_rotation(setting: IonBasisSetting) -> np.ndarray:
    """Analysis rotation applied before ion fluorescence readout."""
    half = setting.vartheta / 2.0
    return np.array(
        [
            [math.cos(half), -1j * np.exp(1j * setting.varphi) * math.sin(half)],
            [-1j * np.exp(-1j * setting.varphi) * math.sin(half), math.cos(half)],
        ],
        dtype=complex,
    )


def ion_projector(setting: IonBasisSetting, outcome: str) -> np.ndarray:
    """Rank-1 projector for a thresholded ion readout outcome.

    ``outcome`` is "bright" (computational |0>) or "dark" (|1>); the
    bright and dark projectors for one setting sum to the identity.
    """
    if outcome not in ("bright", "dark"):
        raise ValueError(f"outcome must be 'bright' or 'dark', got {outcome!r}")
    u = ion_rotation(setting)
    s = 0 if outcome == "bright" else 1
    ket = u.conj().T[:, s]
    return np.outer(ket, ket.conj())


ION_TOMOGRAPHY_SETTINGS: tuple[IonBasisSetting, ...] = (
    IonBasisSetting(math.pi / 2, 0.0),
    IonBasisSetting(math.pi / 2, math.pi / 4),
    IonBasisSetting(math.pi / 2, math.pi / 2),
    IonBasisSetting(math.pi / 2, 3 * math.pi / 4),
    IonBasisSetting(0.0, 0.0),
    IonBasisSetting(0.0, 0.0),
)

PHOTON_TOMOGRAPHY_SETTINGS: tuple[PhotonBasisSetting, ...] = tuple(
    PhotonBasisSetting(h, q) for h in HWP_ANGLES for q in QWP_ANGLES
)


def tomography_settings() -> list[tuple[PhotonBasisSetting, IonBasisSetting]]:
    """All 24 basis settings: 4 photon bases x 6 ion bases.

    The ion list is over-complete on purpose (the vartheta=0 setting
    appears twice, as collected).  Setting index = photon_index*6 +
    ion_index.
    """
    return [(p, i) for p in PHOTON_TOMOGRAPHY_SETTINGS for i in ION_TOMOGRAPHY_SETTINGS]
