"""Delimited summary tables and the figures rendered next to them.

Every CSV a command emits gets a PNG sibling drawn from the same rows, so
a run directory is browsable without further tooling.  Figures carry no
volatile metadata; the CSV stays the machine-readable artifact.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_META = {"Software": None}  # keep PNG bytes reproducible across reruns


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _save(fig, png_path: str | Path) -> None:
    fig.savefig(png_path, dpi=150, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)


def fidelity_vs_time_figure(rows: list[dict], png_path: str | Path) -> None:
    """Decay curves per pair: fidelity against storage time with CI bars."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    pairs = sorted({r["pair"] for r in rows})
    for pair in pairs:
        sub = [r for r in rows if r["pair"] == pair]
        t = np.array([r["time"] for r in sub])
        f = np.array([r["fidelity"] for r in sub])
        order = np.argsort(t)
        if all("lo" in r and r["lo"] is not None for r in sub):
            lo = np.array([r["lo"] for r in sub])[order]
            hi = np.array([r["hi"] for r in sub])[order]
            ax.errorbar(
                t[order], f[order], yerr=[f[order] - lo, hi - f[order]],
                marker="o", capsize=3, label=pair,
            )
        else:
            ax.plot(t[order], f[order], marker="o", label=pair)
    ax.axhline(0.5, color="gray", lw=0.8, ls=":")
    ax.set_xlabel("storage time (s)")
    ax.set_ylabel("entangled-fraction fidelity")
    ax.legend(frameon=False)
    _save(fig, png_path)


def detector_fidelity_figure(rows: list[dict], png_path: str | Path) -> None:
    """Per-detector fidelities with CI bars where available."""
    fig, ax = plt.subplots(figsize=(4.4, 3.2))
    xs = np.arange(len(rows))
    f = [r["fidelity"] for r in rows]
    labels = [str(r["detector"]) for r in rows]
    if all(r.get("lo") is not None for r in rows):
        lo = np.array([r["lo"] for r in rows])
        hi = np.array([r["hi"] for r in rows])
        down = np.clip(np.array(f) - lo, 0.0, None)
        up = np.clip(hi - np.array(f), 0.0, None)
        ax.errorbar(xs, f, yerr=[down, up], fmt="o", capsize=3)
    else:
        ax.plot(xs, f, "o")
    ax.set_xticks(xs, labels)
    ax.set_xlabel("detector")
    ax.set_ylabel("entangled-fraction fidelity")
    ax.axhline(0.5, color="gray", lw=0.8, ls=":")
    _save(fig, png_path)


def ramsey_figure(rows: list[dict], png_path: str | Path) -> None:
    """Phase and contrast of the memory Ramsey fringe vs attempt number."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(4.8, 4.6), sharex=True)
    n = [r["attempts"] for r in rows]
    ax1.plot(n, [r["phase"] for r in rows], "o")
    ax1.set_ylabel("phase (rad)")
    ax2.plot(n, [r["contrast"] for r in rows], "s")
    ax2.set_ylabel("contrast")
    ax2.set_ylim(0, 1.05)
    ax2.set_xlabel("background excitation attempts")
    _save(fig, png_path)


def thermometry_figure(rows: list[dict], png_path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    ax.plot([r["attempts"] for r in rows], [r["n_bar"] for r in rows], "o")
    ax.set_xlabel("background excitation attempts")
    ax.set_ylabel("mode occupation")
    _save(fig, png_path)


def attempt_histogram_figure(attempts: np.ndarray, png_path: str | Path) -> None:
    """Histogram of attempts until photon detection."""
    attempts = np.asarray(attempts)
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    top = int(np.percentile(attempts, 99.5)) + 1
    ax.hist(attempts, bins=np.arange(1, top), color="#4878a8")
    ax.set_xlabel("attempts until detection")
    ax.set_ylabel("occurrences")
    mean = float(attempts.mean())
    ax.axvline(mean, color="k", lw=0.8, ls="--")
    ax.set_title(f"mean = {mean:.1f} attempts")
    _save(fig, png_path)


def matrix_figure(m: np.ndarray, png_path: str | Path, title: str = "") -> None:
    """Real and imaginary parts of a reconstructed matrix, side by side."""
    m = np.asarray(m)
    scale = float(np.max(np.abs(m))) or 1.0
    fig, axes = plt.subplots(1, 2, figsize=(7.0, 3.2))
    for ax, part, label in ((axes[0], m.real, "Re"), (axes[1], m.imag, "Im")):
        im = ax.imshow(part, cmap="RdBu_r", vmin=-scale, vmax=scale)
        ax.set_title(f"{label} {title}".strip())
        fig.colorbar(im, ax=ax, shrink=0.8)
    _save(fig, png_path)
