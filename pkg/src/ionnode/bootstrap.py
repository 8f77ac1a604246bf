"""Nonparametric bootstrap of the analysis pipeline.

Each replicate redraws the click record according to its inherent
statistics: attempt numbers are Poisson, clicks are multinomial over the
four detectors plus no-click, and the thresholded ion readout is binomial
per detector, all with frequentist probabilities estimated from the
observed data.  Streams come from the counter-based Philox generator
keyed by ``SeedSequence(seed, spawn_key=(setting, lane))`` where lane 0
draws attempts and clicks and lanes 1-4 draw the per-detector ion
outcomes, so results do not depend on execution order.
"""

from __future__ import annotations

import traceback
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .dataset import ClickDataset


class BootstrapError(RuntimeError):
    """Raised when too many replicates fail to analyze."""


@dataclass(frozen=True)
class ResamplingSpec:
    """How many replicates to draw and from which seed."""

    replicates: int
    seed: int
    statistic: str = "state fidelity"

    def validate(self) -> "ResamplingSpec":
        if self.replicates < 2:
            raise ValueError("replicates must be >= 2")
        if self.statistic not in ("state fidelity", "process fidelity"):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        return self


def _stream(seed: int, spawn_key: tuple[int, ...]) -> Generator:
    return Generator(Philox(SeedSequence(entropy=seed, spawn_key=spawn_key)))


def resample_dataset(data: ClickDataset, seed: int) -> ClickDataset:
    """One bootstrap replicate of a click record.

    Per setting: attempts are redrawn Poisson around the observed total,
    redistributed multinomially over the four detectors and the no-click
    bin, and each detector's clicks are split bright/dark binomially with
    the observed bright fraction.
    """
    data.validate()
    out = data.copy_counts()
    for i in range(data.n_settings):
        attempts = int(data.attempts[i])
        rng = _stream(seed, (i, 0))
        new_attempts = int(rng.poisson(attempts))
        if attempts > 0:
            probs = np.concatenate(
                [data.n_click[:, i], [data.n_empty[i]]]
            ).astype(float) / attempts
        else:
            probs = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
        draws = rng.multinomial(new_attempts, probs)
        out.attempts[i] = new_attempts
        out.n_click[:, i] = draws[:4]
        out.n_empty[i] = draws[4]
        for k in range(4):
            clicks = int(data.n_click[k, i])
            frac = data.n_bright[k, i] / clicks if clicks > 0 else 0.0
            rng_k = _stream(seed, (i, k + 1))
            bright = int(rng_k.binomial(int(out.n_click[k, i]), frac))
            out.n_bright[k, i] = bright
            out.n_dark[k, i] = out.n_click[k, i] - bright
    out.metadata = dict(data.metadata)
    out.metadata["resampled_with_seed"] = int(seed)
    return out.validate()


def resample_two_ion(counts: np.ndarray, seed: int) -> np.ndarray:
    """Multinomial redraw of a 4-outcome two-ion readout record."""
    counts = np.asarray(counts)
    if counts.shape != (4,) or np.any(counts < 0):
        raise ValueError("expected a 4-outcome count vector with non-negative entries")
    total = int(counts.sum())
    if total == 0:
        return np.zeros(4, dtype=np.int64)
    rng = _stream(seed, (0,))
    return rng.multinomial(total, counts.astype(float) / total).astype(np.int64)


@dataclass
class BootstrapResult:
    """Point estimate with a percentile confidence interval."""

    point: float
    lo: float
    hi: float
    replicates: int
    failures: int
    seed: int
    values: np.ndarray


def bootstrap_ci(
    data: ClickDataset, spec: ResamplingSpec, pipeline, workers: int = 1
) -> BootstrapResult:
    """95% percentile interval of ``pipeline`` over bootstrap replicates.

    ``pipeline(dataset) -> float`` must be deterministic given its input.
    The interval uses the linear-interpolation percentile definition at
    2.5/97.5.  More than 5% failing replicates aborts with diagnostics.
    Replicates own independent streams derived from (seed, index), so the
    result is identical for any ``workers`` count.
    """
    spec.validate()
    point = float(pipeline(data))
    child_seeds = SeedSequence(spec.seed).generate_state(spec.replicates, dtype=np.uint64)

    def one(r: int) -> float:
        return float(pipeline(resample_dataset(data, int(child_seeds[r]))))

    values = []
    failures: list[str] = []
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(one, r) for r in range(spec.replicates)]
        outcomes = []
        for r, fut in enumerate(futures):
            try:
                outcomes.append(fut.result())
            except Exception:
                outcomes.append(None)
                failures.append(f"replicate {r}:\n{traceback.format_exc()}")
        values = [v for v in outcomes if v is not None]
    else:
        for r in range(spec.replicates):
            try:
                values.append(one(r))
            except Exception:
                failures.append(f"replicate {r}:\n{traceback.format_exc()}")
    if len(failures) > 0.05 * spec.replicates:
        detail = "\n".join(failures[:3])
        raise BootstrapError(
            f"{len(failures)}/{spec.replicates} replicates failed; first failures:\n{detail}"
        )
    arr = np.array(values)
    lo, hi = np.percentile(arr, [2.5, 97.5])
    return BootstrapResult(
        point=point,
        lo=float(lo),
        hi=float(hi),
        replicates=spec.replicates,
        failures=len(failures),
        seed=spec.seed,
        values=arr,
    )
