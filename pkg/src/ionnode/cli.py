"""Command-line surface.

Commands: ``simulate`` (two-photon / storage / ramsey / thermometry),
``analyze``, ``bootstrap``, ``process-tomo``, ``report`` and
``example-config``.  Every run writes a ``manifest.json`` with the config
digest, seed and toolkit version; given the same config bytes and seed,
primary outputs (JSON/CSV) are byte-identical across reruns, with
timestamps isolated to the manifest.

Exit codes: 0 ok, 2 config or input error, 3 runtime/physics error,
4 analysis completed with degraded results (e.g. MLE non-convergence).
Options can also be set through IONNODE_* environment variables.
"""

from __future__ import annotations

import datetime
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bootstrap import BootstrapError, ResamplingSpec, bootstrap_ci
from .channels import choi_of_unitary
from .config import ConfigError, NodeConfig, default_config, load_config, write_example_config
from .dataset import ClickDataset, save_matrix_csv, save_matrix_json
from .dynamics import TruncationError, calibrate_gate, gate_propagate, ideal_zz_unitary, iswap_circuit
from .fidelity import entangled_fraction_fidelity
from .optics import characterized_config
from .protocol import (
    run_ramsey_probe,
    run_storage_sequence,
    run_thermometry_probe,
    run_two_photon_sequence,
)
from .tomography import (
    conditional_subspace_fidelity,
    mle_state,
    process_fidelity,
    process_tomography,
    simulate_process_outputs,
    standard_process_inputs,
)
from . import report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_DEGRADED = 4


def _json_dump(payload, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))


class _Manifest:
    def __init__(self, command: str, digest: str, seed: int | None):
        self.data = {
            "command": command,
            "config_digest": digest,
            "seed": seed,
            "version": __version__,
            "started": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }

    def finish(self, out_dir: Path) -> None:
        self.data["finished"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        _json_dump(self.data, out_dir / "manifest.json")


def _load_config_or_exit(config_path: str | None) -> tuple[NodeConfig, str]:
    if config_path is None:
        return default_config(), "builtin-default"
    try:
        return load_config(config_path)
    except FileNotFoundError:
        click.echo(f"error: config file {config_path} not found", err=True)
        sys.exit(EXIT_CONFIG)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _prepare_out(out: str) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


@click.group()
@click.version_option(version=__version__, prog_name="ionnode")
def main() -> None:
    """Simulate and analyze a mixed-species trapped-ion network node."""


@main.command("example-config")
@click.argument("path", type=click.Path(dir_okay=False))
def example_config(path: str) -> None:
    """Write a fully populated config file to PATH."""
    write_example_config(path)
    click.echo(f"wrote {path}")


@main.command()
@click.argument(
    "sequence", type=click.Choice(["two-photon", "storage", "ramsey", "thermometry", "decay"])
)
@click.option("--config", "config_path", type=click.Path(), default=None, help="config JSON")
@click.option("--out", default="out", show_default=True, help="output directory")
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--shots", default=100, show_default=True, type=int, help="shots per setting")
@click.option("--delta-t", default=0.0, show_default=True, type=float,
              help="two-photon: storage delay before measurement (s)")
@click.option("--storage", default=1.0, show_default=True, type=float,
              help="storage: hold duration (s)")
@click.option("--dd/--no-dd", default=True, show_default=True,
              help="storage: decouple + transport during the hold")
@click.option("--total-time", default=None, type=float,
              help="ramsey/thermometry: probe duration (s)")
@click.option("--points", default=8, show_default=True, type=int,
              help="ramsey/thermometry/decay: sweep points")
@click.option("--times", default=None,
              help="decay: comma-separated storage delays in seconds")
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--figures/--no-figures", default=True, show_default=True)
def simulate(sequence, config_path, out, seed, shots, delta_t, storage, dd, total_time,
             points, times, workers, figures) -> None:
    """Generate synthetic experiment data for one protocol sequence."""
    del workers  # sequences are single-threaded; kept for interface parity
    cfg, digest = _load_config_or_exit(config_path)
    out_dir = _prepare_out(out)
    manifest = _Manifest(f"simulate {sequence}", digest, seed)
    try:
        if sequence == "two-photon":
            result = run_two_photon_sequence(shots, cfg, delta_t, seed)
            _emit_sequence(result, out_dir, figures)
        elif sequence == "storage":
            result = run_storage_sequence(shots, cfg, storage, dd, seed)
            _emit_sequence(result, out_dir, figures)
        elif sequence == "ramsey":
            _emit_ramsey(cfg, total_time or 0.1, points, shots, seed, out_dir, figures)
        elif sequence == "decay":
            _emit_decay(cfg, times, points, out_dir, figures)
        else:
            _emit_thermometry(cfg, total_time or 1e-3, points, shots, seed, out_dir, figures)
    except TruncationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    except (ValueError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    manifest.finish(out_dir)
    click.echo(f"wrote {out_dir}")


def _emit_sequence(result, out_dir: Path, figures: bool) -> None:
    for name, ds in result.datasets.items():
        ds.save(out_dir / f"{name}.json")
    _json_dump(result.summary, out_dir / "summary.json")
    keep = result.records["keep"]
    n_settings, shots = keep.shape
    rows = []
    for s in range(n_settings):
        for i in range(shots):
            row = [s, i, int(result.records["attempts1"][s, i]), int(keep[s, i])]
            if "attempts2" in result.records:
                row.append(int(result.records["attempts2"][s, i]))
            rows.append(row)
    header = ["setting", "shot", "attempts1", "keep"]
    if "attempts2" in result.records:
        header.append("attempts2")
    report.write_csv(out_dir / "shots.csv", header, rows)
    if figures:
        attempts = result.records["attempts1"].reshape(-1)
        report.attempt_histogram_figure(attempts, out_dir / "attempts.png")


def _emit_ramsey(cfg, total_time, points, shots, seed, out_dir: Path, figures: bool) -> None:
    fractions = np.linspace(0.0, 1.0, points)
    rows = []
    for j, frac in enumerate(fractions):
        phase, contrast = run_ramsey_probe(
            float(frac), total_time, cfg.loop, shots, seed + j,
            dephasing_floor=cfg.noise.dephasing_floor,
        )
        attempts = int(round(frac * total_time / cfg.loop.attempt_period))
        rows.append(
            {"fraction": float(frac), "attempts": attempts, "phase": phase,
             "contrast": contrast}
        )
    report.write_csv(
        out_dir / "ramsey.csv",
        ["fraction", "attempts", "phase", "contrast"],
        [[r["fraction"], r["attempts"], r["phase"], r["contrast"]] for r in rows],
    )
    _json_dump({"rows": rows, "total_time": total_time}, out_dir / "summary.json")
    if figures:
        report.ramsey_figure(rows, out_dir / "ramsey.png")


def _emit_decay(cfg, times, points, out_dir: Path, figures: bool) -> None:
    """Ensemble-exact ion-photon fidelity against storage delay, per pair."""
    from .fidelity import entangled_fraction_fidelity
    from .protocol import expected_pair_states, prepare_front_end

    if times:
        ts = [float(v) for v in times.split(",")]
    else:
        ts = list(np.linspace(0.0, 0.2, points))
    front = prepare_front_end(cfg)
    rows = []
    for t in ts:
        rho1, rho2 = expected_pair_states(cfg, t, front=front)
        rows.append({"time": t, "pair": "memory-photon1",
                     "fidelity": entangled_fraction_fidelity(rho1)})
        rows.append({"time": t, "pair": "network-photon2",
                     "fidelity": entangled_fraction_fidelity(rho2)})
    report.write_csv(
        out_dir / "decay.csv",
        ["time", "pair", "fidelity"],
        [[r["time"], r["pair"], r["fidelity"]] for r in rows],
    )
    _json_dump({"rows": rows}, out_dir / "summary.json")
    if figures:
        report.fidelity_vs_time_figure(rows, out_dir / "decay.png")


def _emit_thermometry(cfg, total_time, points, shots, seed, out_dir: Path, figures: bool) -> None:
    fractions = np.linspace(0.0, 1.0, points)
    rows = []
    for j, frac in enumerate(fractions):
        n_bar = run_thermometry_probe(
            float(frac), cfg.loop, shots, seed + j,
            n_bar_baseline=cfg.crystal.n_bar_oop,
            heat_rate=cfg.crystal.heat_rate_oop,
            total_time=total_time,
        )
        attempts = int(round(frac * total_time / cfg.loop.attempt_period))
        rows.append({"fraction": float(frac), "attempts": attempts, "n_bar": n_bar})
    report.write_csv(
        out_dir / "thermometry.csv",
        ["fraction", "attempts", "n_bar"],
        [[r["fraction"], r["attempts"], r["n_bar"]] for r in rows],
    )
    _json_dump({"rows": rows, "total_time": total_time}, out_dir / "summary.json")
    if figures:
        report.thermometry_figure(rows, out_dir / "thermometry.png")


def _resolve_optics(optics: str):
    if optics == "characterized":
        return characterized_config()
    if optics == "ideal":
        from .optics import OpticsConfig

        return OpticsConfig()
    cfg, _ = _load_config_or_exit(optics)
    return cfg.optics


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--detector", default="all", show_default=True,
              help="detector index 0..3 or 'all'")
@click.option("--optics", default="characterized", show_default=True,
              help="optics preset name or config path")
@click.option("--out", default="out", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def analyze(dataset_path, detector, optics, out, figures) -> None:
    """Reconstruct per-detector states and entangled-fraction fidelities."""
    try:
        data = ClickDataset.load(dataset_path)
    except FileNotFoundError:
        click.echo(f"error: dataset {dataset_path} not found", err=True)
        sys.exit(EXIT_CONFIG)
    except (ValueError, KeyError) as exc:
        click.echo(f"error: invalid dataset: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    optics_cfg = _resolve_optics(optics)
    out_dir = _prepare_out(out)
    manifest = _Manifest("analyze", "n/a", None)
    detectors = range(4) if detector == "all" else [int(detector)]
    rows = []
    degraded = False
    for det in detectors:
        if data.total_clicks(det) == 0:
            click.echo(f"warning: detector {det} has no clicks, skipped", err=True)
            continue
        res = mle_state(data, det, optics_cfg)
        if not res.converged:
            degraded = True
            click.echo(f"warning: MLE did not converge for detector {det}", err=True)
        fid = entangled_fraction_fidelity(res.rho)
        save_matrix_json(res.rho, out_dir / f"state_det{det}.json", label=f"detector {det}")
        save_matrix_csv(res.rho, out_dir / f"state_det{det}.csv")
        if figures:
            report.matrix_figure(res.rho, out_dir / f"state_det{det}.png", f"det {det}")
        rows.append(
            {"detector": det, "fidelity": fid, "nll": res.nll, "converged": res.converged,
             "clicks": data.total_clicks(det), "lo": None, "hi": None}
        )
    if not rows:
        click.echo("error: no detector had clicks to analyze", err=True)
        sys.exit(EXIT_RUNTIME)
    average = float(np.mean([r["fidelity"] for r in rows]))
    _json_dump(
        {"detectors": rows, "average_fidelity": average}, out_dir / "summary.json"
    )
    report.write_csv(
        out_dir / "fidelities.csv",
        ["detector", "fidelity", "clicks", "converged"],
        [[r["detector"], r["fidelity"], r["clicks"], int(r["converged"])] for r in rows],
    )
    if figures:
        report.detector_fidelity_figure(rows, out_dir / "fidelities.png")
    manifest.finish(out_dir)
    click.echo(f"average fidelity over {len(rows)} detector(s): {average:.4f}")
    if degraded:
        sys.exit(EXIT_DEGRADED)


@main.command("bootstrap")
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--replicates", default=1000, show_default=True, type=int)
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--detector", default="all", show_default=True)
@click.option("--optics", default="characterized", show_default=True)
@click.option("--out", default="out", show_default=True)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--figures/--no-figures", default=True, show_default=True)
def bootstrap_cmd(dataset_path, replicates, seed, detector, optics, out, workers, figures) -> None:
    """Bootstrap 95% confidence intervals for the per-detector fidelity."""
    try:
        data = ClickDataset.load(dataset_path)
    except FileNotFoundError:
        click.echo(f"error: dataset {dataset_path} not found", err=True)
        sys.exit(EXIT_CONFIG)
    except (ValueError, KeyError) as exc:
        click.echo(f"error: invalid dataset: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    optics_cfg = _resolve_optics(optics)
    out_dir = _prepare_out(out)
    manifest = _Manifest("bootstrap", "n/a", seed)
    detectors = range(4) if detector == "all" else [int(detector)]
    rows = []
    for det in detectors:
        if data.total_clicks(det) == 0:
            click.echo(f"warning: detector {det} has no clicks, skipped", err=True)
            continue

        def pipeline(ds, det=det):
            return entangled_fraction_fidelity(mle_state(ds, det, optics_cfg).rho)

        spec = ResamplingSpec(replicates=replicates, seed=seed + det, statistic="state fidelity")
        try:
            res = bootstrap_ci(data, spec, pipeline, workers=workers)
        except BootstrapError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)
        rows.append(
            {"detector": det, "fidelity": res.point, "lo": res.lo, "hi": res.hi,
             "replicates": res.replicates, "failures": res.failures, "seed": spec.seed}
        )
    if not rows:
        click.echo("error: no detector had clicks to analyze", err=True)
        sys.exit(EXIT_RUNTIME)
    _json_dump({"detectors": rows}, out_dir / "bootstrap.json")
    report.write_csv(
        out_dir / "bootstrap.csv",
        ["detector", "fidelity", "lo", "hi", "replicates"],
        [[r["detector"], r["fidelity"], r["lo"], r["hi"], r["replicates"]] for r in rows],
    )
    if figures:
        report.detector_fidelity_figure(rows, out_dir / "bootstrap.png")
    manifest.finish(out_dir)
    for r in rows:
        click.echo(
            f"detector {r['detector']}: {r['fidelity']:.4f} "
            f"[{r['lo']:.4f}, {r['hi']:.4f}] (95% CI, {r['replicates']} replicates)"
        )


@main.command("process-tomo")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", default="out", show_default=True)
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--figures/--no-figures", default=True, show_default=True)
def process_tomo(config_path, out, seed, figures) -> None:
    """Simulate and reconstruct process tomography of the iSWAP."""
    cfg, digest = _load_config_or_exit(config_path)
    out_dir = _prepare_out(out)
    manifest = _Manifest("process-tomo", digest, seed)
    try:
        gate = cfg.gate
        if gate.omega is None or gate.duration is None:
            gate = calibrate_gate(cfg.crystal, gate)
        gate_chi = gate_propagate(cfg.crystal, gate)
        circuit_chi = iswap_circuit(gate_chi, cfg.sq_error)
        inputs = standard_process_inputs()
        outputs = simulate_process_outputs(circuit_chi, inputs)
        result = process_tomography(inputs, outputs)
    except TruncationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    ideal = iswap_circuit(choi_of_unitary(ideal_zz_unitary(-1.0)))
    fp = process_fidelity(result.chi, ideal)
    fc = conditional_subspace_fidelity(result.chi)
    save_matrix_json(result.chi, out_dir / "choi.json", label="iSWAP process")
    save_matrix_csv(result.chi, out_dir / "choi.csv")
    if figures:
        report.matrix_figure(result.chi, out_dir / "choi.png", "Choi")
    _json_dump(
        {
            "process_fidelity": fp,
            "conditional_subspace_fidelity": fc,
            "tp_residual": result.tp_residual,
            "converged": result.converged,
            "gate_omega": gate.omega,
            "gate_duration": gate.duration,
        },
        out_dir / "summary.json",
    )
    manifest.finish(out_dir)
    click.echo(f"process fidelity {fp:.4f}, conditional subspace fidelity {fc:.4f}")
    if not result.converged:
        sys.exit(EXIT_DEGRADED)


@main.command("report")
@click.option("--run-dir", type=click.Path(exists=True, file_okay=False), required=True)
def report_cmd(run_dir) -> None:
    """Re-render figures for the delimited outputs in a run directory."""
    run = Path(run_dir)
    rendered = []
    ramsey_csv = run / "ramsey.csv"
    if ramsey_csv.exists():
        rows = _read_csv_dicts(ramsey_csv)
        report.ramsey_figure(rows, run / "ramsey.png")
        rendered.append("ramsey.png")
    thermo_csv = run / "thermometry.csv"
    if thermo_csv.exists():
        report.thermometry_figure(_read_csv_dicts(thermo_csv), run / "thermometry.png")
        rendered.append("thermometry.png")
    decay_csv = run / "decay.csv"
    if decay_csv.exists():
        report.fidelity_vs_time_figure(_read_csv_dicts(decay_csv), run / "decay.png")
        rendered.append("decay.png")
    shots_csv = run / "shots.csv"
    if shots_csv.exists():
        rows = _read_csv_dicts(shots_csv)
        attempts = np.array([r["attempts1"] for r in rows])
        report.attempt_histogram_figure(attempts, run / "attempts.png")
        rendered.append("attempts.png")
    boot = run / "bootstrap.json"
    if boot.exists():
        rows = json.loads(boot.read_text())["detectors"]
        report.detector_fidelity_figure(rows, run / "bootstrap.png")
        rendered.append("bootstrap.png")
    summary = run / "summary.json"
    if summary.exists() and not rendered:
        payload = json.loads(summary.read_text())
        if "detectors" in payload:
            report.detector_fidelity_figure(payload["detectors"], run / "fidelities.png")
            rendered.append("fidelities.png")
    if not rendered:
        click.echo("nothing to render in this directory", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"rendered: {', '.join(rendered)}")


def _read_csv_dicts(path: Path) -> list[dict]:
    import csv as _csv

    with open(path) as fh:
        reader = _csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, value in raw.items():
                try:
                    row[key] = float(value)
                except (TypeError, ValueError):
                    row[key] = value
            rows.append(row)
    return rows


def cli_entry() -> None:
    main(auto_envvar_prefix="IONNODE")


if __name__ == "__main__":
    cli_entry()
