"""Click records and their serialized forms.

A :class:`ClickDataset` holds, for every basis setting, the attempt count,
the no-click count, and per-detector click counts split by the thresholded
ion readout outcome.  The JSON schema (``ionnode.clickdataset.v1``) keys
counts by setting and detector so files are self-describing; round trips
are bit-exact.

Reconstructed matrices export to JSON as row-major re/im pairs
(``ionnode.matrix.v1``) and to CSV with interleaved re/im columns.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optics import IonBasisSetting, PhotonBasisSetting

DATASET_SCHEMA = "ionnode.clickdataset.v1"
MATRIX_SCHEMA = "ionnode.matrix.v1"

SettingPair = tuple[PhotonBasisSetting, IonBasisSetting]


@dataclass
class ClickDataset:
    """Per-setting, per-detector counts of photon and ion outcomes."""

    settings: tuple[SettingPair, ...]
    attempts: np.ndarray  # (S,)
    n_empty: np.ndarray  # (S,)
    n_click: np.ndarray  # (4, S) all clicks per detector
    n_bright: np.ndarray  # (4, S) clicks with a bright ion readout
    n_dark: np.ndarray  # (4, S)
    metadata: dict = field(default_factory=dict)

    @property
    def n_settings(self) -> int:
        return len(self.settings)

    def validate(self) -> "ClickDataset":
        s = self.n_settings
        shapes = {
            "attempts": (self.attempts, (s,)),
            "n_empty": (self.n_empty, (s,)),
            "n_click": (self.n_click, (4, s)),
            "n_bright": (self.n_bright, (4, s)),
            "n_dark": (self.n_dark, (4, s)),
        }
        for name, (arr, shape) in shapes.items():
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if np.any(arr < 0):
                raise ValueError(f"{name} contains negative counts")
        if np.any(self.n_bright + self.n_dark != self.n_click):
            raise ValueError("bright + dark counts do not match click totals")
        if np.any(self.n_empty + self.n_click.sum(axis=0) != self.attempts):
            raise ValueError("clicks + empties do not match attempt totals")
        return self

    def total_clicks(self, detector: int | None = None) -> int:
        if detector is None:
            return int(self.n_click.sum())
        return int(self.n_click[detector].sum())

    def to_json_dict(self) -> dict:
        entries = []
        for i, (pset, iset) in enumerate(self.settings):
            detectors = [
                {
                    "clicks": int(self.n_click[k, i]),
                    "bright": int(self.n_bright[k, i]),
                    "dark": int(self.n_dark[k, i]),
                }
                for k in range(4)
            ]
            entries.append(
                {
                    "index": i,
                    "photon": {"hwp_angle": pset.hwp_angle, "qwp_angle": pset.qwp_angle},
                    "ion": {"vartheta": iset.vartheta, "varphi": iset.varphi},
                    "attempts": int(self.attempts[i]),
                    "n_empty": int(self.n_empty[i]),
                    "detectors": detectors,
                }
            )
        return {"schema": DATASET_SCHEMA, "metadata": self.metadata, "settings": entries}

    @classmethod
    def from_json_dict(cls, payload: dict) -> "ClickDataset":
        if payload.get("schema") != DATASET_SCHEMA:
            raise ValueError(f"unexpected dataset schema {payload.get('schema')!r}")
        entries = payload["settings"]
        s = len(entries)
        settings = []
        attempts = np.zeros(s, dtype=np.int64)
        n_empty = np.zeros(s, dtype=np.int64)
        n_click = np.zeros((4, s), dtype=np.int64)
        n_bright = np.zeros((4, s), dtype=np.int64)
        n_dark = np.zeros((4, s), dtype=np.int64)
        for entry in entries:
            i = entry["index"]
            settings.append(
                (
                    PhotonBasisSetting(
                        entry["photon"]["hwp_angle"], entry["photon"]["qwp_angle"]
                    ),
                    IonBasisSetting(entry["ion"]["vartheta"], entry["ion"]["varphi"]),
                )
            )
            attempts[i] = entry["attempts"]
            n_empty[i] = entry["n_empty"]
            for k, det in enumerate(entry["detectors"]):
                n_click[k, i] = det["clicks"]
                n_bright[k, i] = det["bright"]
                n_dark[k, i] = det["dark"]
        return cls(
            settings=tuple(settings),
            attempts=attempts,
            n_empty=n_empty,
            n_click=n_click,
            n_bright=n_bright,
            n_dark=n_dark,
            metadata=payload.get("metadata", {}),
        ).validate()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "ClickDataset":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def copy_counts(self) -> "ClickDataset":
        return ClickDataset(
            settings=self.settings,
            attempts=self.attempts.copy(),
            n_empty=self.n_empty.copy(),
            n_click=self.n_click.copy(),
            n_bright=self.n_bright.copy(),
            n_dark=self.n_dark.copy(),
            metadata=dict(self.metadata),
        )


def matrix_to_json_dict(m: np.ndarray, label: str = "") -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "schema": MATRIX_SCHEMA,
        "label": label,
        "dim": m.shape[0],
        "re": m.real.tolist(),
        "im": m.imag.tolist(),
    }


def matrix_from_json_dict(payload: dict) -> np.ndarray:
    if payload.get("schema") != MATRIX_SCHEMA:
        raise ValueError(f"unexpected matrix schema {payload.get('schema')!r}")
    return np.array(payload["re"], dtype=float) + 1j * np.array(payload["im"], dtype=float)


def save_matrix_json(m: np.ndarray, path: str | Path, label: str = "") -> None:
    Path(path).write_text(json.dumps(matrix_to_json_dict(m, label), indent=1, sort_keys=True))


def load_matrix_json(path: str | Path) -> np.ndarray:
    return matrix_from_json_dict(json.loads(Path(path).read_text()))


def save_matrix_csv(m: np.ndarray, path: str | Path) -> None:
    """Row-major CSV with re/im column pairs: re_0, im_0, re_1, im_1, ..."""
    m = np.asarray(m, dtype=complex)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = []
        for j in range(m.shape[1]):
            header += [f"re_{j}", f"im_{j}"]
        writer.writerow(header)
        for row in m:
            flat = []
            for v in row:
                flat += [repr(float(v.real)), repr(float(v.imag))]
            writer.writerow(flat)
