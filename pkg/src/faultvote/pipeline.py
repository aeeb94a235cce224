"""The four pipeline stages: simulate, calibrate, identify, report.

Each stage reads only the config plus files written by earlier stages under
the output directory, and writes its own files there. Output layout::

    model.json  sweep.json  training.csv  measurements.csv
    surfaces/surface_000.json ...          diagnostics.csv
    archives/run_00.csv ...                ensemble.json
    tallies/{voting,range,partial,partial_range,majority}.{csv,json}
    validation.json                        (truth mode only)
    report/report.md  report/panels.csv  report/grid.csv
"""

from __future__ import annotations

import csv
import json
import logging
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import emosar, ensemble, files, gp, structure, voting
from .config import ConfigError, PipelineConfig

logger = logging.getLogger(__name__)

HEURISTICS = ("voting", "range", "partial", "partial_range")
PANELS = {
    "voting": ("I", "Voting score"),
    "range": ("II", "Range voting score"),
    "partial": ("III", "Partial voting score"),
    "partial_range": ("IV", "Partial range voting score"),
}


class StageError(RuntimeError):
    """A stage failed; ``stage`` names it for diagnostics."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _read_json(path: Path, stage: str):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise StageError(stage, f"missing input file {path}; run the earlier stage first") from None
    except json.JSONDecodeError as exc:
        raise StageError(stage, f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None


def build_model(cfg: PipelineConfig) -> structure.StructuralModel:
    spec = cfg.model
    try:
        if spec.path is not None:
            return structure.StructuralModel.load(spec.path)
        if spec.definition is not None:
            return structure.StructuralModel.from_dict(spec.definition)
        return structure.default_model(spec.n_segments, spec.transducer_segment)
    except (structure.ModelError, KeyError, TypeError) as exc:
        raise ConfigError(f"config.model: {exc}") from None


def build_sweep(cfg: PipelineConfig, model) -> structure.FrequencySweep:
    s = cfg.sweep
    try:
        return structure.FrequencySweep.around_resonances(model, s.modes, s.points_per_band,
                                                          s.rel_below, s.rel_above)
    except structure.ModelError as exc:
        raise ConfigError(f"config.sweep: {exc}") from None


def _clear(directory: Path, pattern: str) -> None:
    for p in directory.glob(pattern):
        p.unlink()


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def cmd_simulate(cfg: PipelineConfig, out, truth_mode: bool = True) -> dict:
    """Write the model, sweep and training data; in truth mode also a measurement file."""
    out = Path(out)
    if truth_mode and cfg.truth is None:
        raise ConfigError("config.truth is required in truth mode "
                          "(pass --training-only to skip the measurement file)")
    model = build_model(cfg)
    if cfg.truth is not None and cfg.truth.segment > model.n_segments:
        raise ConfigError(f"config.truth.segment {cfg.truth.segment} exceeds the "
                          f"model's {model.n_segments} segments")
    sweep = build_sweep(cfg, model)
    if cfg.ensemble.n_objectives > len(sweep):
        raise ConfigError("config.ensemble.n_objectives exceeds the sweep length")
    out.mkdir(parents=True, exist_ok=True)
    t = cfg.training
    data = structure.sample_training_data(
        model, sweep, t.m_scenarios, t.noise_level,
        ensemble.substream(cfg.seed, ensemble.STREAM_SAMPLING), t.severity_max, t.channel)
    model.save(out / "model.json")
    _write_json(out / "sweep.json", {"frequencies": sweep.frequencies.tolist(),
                                     "bands": sweep.bands.tolist(),
                                     "modes": list(cfg.sweep.modes)})
    files.write_training_csv(data, out / "training.csv")
    written = {"training": out / "training.csv"}
    logger.info("training data: %d frequencies x %d scenarios", len(sweep), t.m_scenarios)
    if truth_mode:
        tr = cfg.truth
        truth = structure.FaultScenario.single(model.n_segments, tr.segment, tr.severity)
        noise = t.noise_level if tr.noise_level is None else tr.noise_level
        dy = structure.measure(model, sweep, truth, noise,
                               ensemble.substream(cfg.seed, ensemble.STREAM_MEASUREMENT), t.channel)
        files.write_measurement_csv(sweep.frequencies, dy, out / "measurements.csv")
        written["measurements"] = out / "measurements.csv"
    return written


# --------------------------------------------------------------------------
# calibrate
# --------------------------------------------------------------------------

def surface_path(directory: Path, index: int) -> Path:
    return directory / f"surface_{index:03d}.json"


def load_surfaces(directory, stage: str = "identify"):
    """Return ``(omegas, surfaces)`` sorted by frequency index."""
    directory = Path(directory)
    paths = sorted(directory.glob("surface_*.json"))
    if not paths:
        raise StageError(stage, f"no surface files in {directory}; run calibrate first")
    omegas, surfaces = [], []
    for p in paths:
        d = _read_json(p, stage)
        try:
            surfaces.append(gp.GpSurface.from_dict(d))
            omegas.append(float(d["omega"]))
        except (KeyError, TypeError, ValueError, ArithmeticError) as exc:
            raise StageError(stage, f"{p}: cannot load surface: {exc}") from None
    order = np.argsort([s.frequency_index for s in surfaces], kind="stable")
    return np.array(omegas)[order], [surfaces[i] for i in order]


def cmd_calibrate(cfg: PipelineConfig, out, training_path=None, workers: int = 1) -> dict:
    out = Path(out)
    training_path = Path(training_path) if training_path else out / "training.csv"
    if not training_path.is_file():
        raise StageError("calibrate", f"training file {training_path} not found")
    model = build_model(cfg)
    t = cfg.training
    try:
        omegas, sets = files.read_training_csv(training_path, model.n_segments, t.severity_max)
    except files.CSVParseError as exc:
        raise StageError("calibrate", str(exc)) from None
    c = cfg.calibration
    mcmc = gp.MCMCConfig(c.mcmc_samples, c.step_size,
                         ensemble.substream_seed(cfg.seed, ensemble.STREAM_CALIBRATION), c.prior_sd)
    failures = {}
    try:
        surfaces = gp.calibrate_all(sets, c.kernel, mcmc, workers)
    except gp.CalibrationError as exc:
        surfaces, failures = exc.surfaces, exc.failures
    sdir = out / "surfaces"
    sdir.mkdir(parents=True, exist_ok=True)
    _clear(sdir, "surface_*.json")
    with open(out / "diagnostics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_index", "omega", "log_likelihood", "acceptance_rate", "n_samples",
                    "training_rmse", "status"])
        for ts, omega, surf in zip(sets, omegas, surfaces):
            j = ts.frequency_index
            if surf is None:
                w.writerow([j, repr(float(omega)), "", "", "", "", f"failed: {failures[j]}"])
                continue
            d = surf.to_dict()
            d["omega"] = float(omega)
            surface_path(sdir, j).write_text(json.dumps(d), encoding="utf-8")
            diag = surf.diagnostics
            w.writerow([j, repr(float(omega)), repr(diag.log_likelihood),
                        repr(diag.acceptance_rate), diag.n_samples,
                        repr(surf.training_rmse()), "ok"])
    if failures:
        detail = "; ".join(f"frequency {j}: {msg}" for j, msg in sorted(failures.items()))
        raise StageError("calibrate", f"{len(failures)} of {len(sets)} fits failed "
                                      f"(others persisted): {detail}")
    return {"surfaces": len(surfaces), "directory": sdir}


# --------------------------------------------------------------------------
# identify
# --------------------------------------------------------------------------

def _schedule(cfg: PipelineConfig) -> emosar.AnnealSchedule:
    e = cfg.ensemble
    return emosar.AnnealSchedule(e.t_max, e.t_min, e.cooling_rate, e.budget)


def truth_ranks(tallies: dict, majority, segment: int, severity: float,
                severity_digits: int = voting.SEVERITY_DIGITS) -> dict:
    """Rank of the true key and of the true segment in each tally (None if absent)."""
    key = voting.SolutionKey.of(segment, severity, severity_digits)
    out = {}
    for name, tally in list(tallies.items()) + [("majority", majority)]:
        if name in ("range", "partial_range"):
            key_match = (lambda k: k.segment == segment and k.contains(key.severity))
        else:
            key_match = (lambda k: k == key)
        out[name] = {
            "key_rank": voting.rank_of(tally, key_match),
            "segment_rank": voting.rank_of(tally, lambda k: k.segment == segment),
        }
    return out


def cmd_identify(cfg: PipelineConfig, out, surfaces_dir=None, measurements_path=None,
                 workers: int = 1) -> dict:
    out = Path(out)
    surfaces_dir = Path(surfaces_dir) if surfaces_dir else out / "surfaces"
    measurements_path = Path(measurements_path) if measurements_path else out / "measurements.csv"
    model = build_model(cfg)
    sweep = build_sweep(cfg, model)
    surf_omegas, surfaces = load_surfaces(surfaces_dir)
    if not measurements_path.is_file():
        raise StageError("identify", f"measurement file {measurements_path} not found")
    try:
        meas_omegas, measured = files.read_measurement_csv(measurements_path)
        files.check_alignment(sweep.frequencies, surf_omegas, meas_omegas)
    except (files.CSVParseError, files.AlignmentError) as exc:
        raise StageError("identify", str(exc)) from None
    idx = [s.frequency_index for s in surfaces]
    if idx != list(range(len(surfaces))):
        raise StageError("identify", f"surface frequency indices are not 0..{len(surfaces) - 1}: {idx}")

    e = cfg.ensemble
    ens_cfg = ensemble.EnsembleConfig(e.m_runs, e.n_objectives, cfg.seed,
                                      e.severity_digits, e.range_digits)
    move = emosar.MoveParams(e.p_location, e.sigma_step)
    stack = gp.SurfaceStack(surfaces)
    result = ensemble.run_ensemble(stack, measured, model.n_segments, cfg.training.severity_max,
                                   ens_cfg, _schedule(cfg), e.epsilon, move, workers)

    adir = out / "archives"
    adir.mkdir(parents=True, exist_ok=True)
    _clear(adir, "run_*.csv")
    width = max(2, len(str(e.m_runs - 1)))
    for i, (arch, subset) in enumerate(zip(result.archives, result.subsets)):
        emosar.export_archive_csv(arch, adir / f"run_{i:0{width}d}.csv",
                                  labels=[str(int(j)) for j in subset])

    tallies = voting.all_tallies(result.archives, e.severity_digits, e.range_digits)
    majority = voting.majority_vote_baseline(result.archives, e.severity_digits)
    tdir = out / "tallies"
    tdir.mkdir(parents=True, exist_ok=True)
    sizes = [len(a) for a in result.archives]
    for name, tally in tallies.items():
        voting.write_tally_csv(tally, tdir / f"{name}.csv")
        voting.write_tally_json(tally, tdir / f"{name}.json", m_runs=e.m_runs,
                                n_objectives=e.n_objectives)
    voting.write_tally_csv(majority, tdir / "majority.csv")
    voting.write_tally_json(majority, tdir / "majority.json", m_runs=e.m_runs,
                            n_objectives=e.n_objectives)
    _write_json(out / "ensemble.json", {
        "m_runs": e.m_runs,
        "n_objectives": e.n_objectives,
        "epsilon": e.epsilon,
        "budget": e.budget,
        "temperature_levels": _schedule(cfg).n_levels,
        "master_seed": cfg.seed,
        "run_seeds": [int(s) for s in result.seeds],
        "subsets": [[int(j) for j in s] for s in result.subsets],
        "archive_sizes": sizes,
        "mean_archive_size": float(Fraction(sum(sizes), len(sizes))),
        "partial_qualifying_runs": list(tallies["partial"].qualifying_runs),
    })
    summary = {"archives": len(result.archives), "archive_sizes": sizes}
    if cfg.truth is not None:
        ranks = truth_ranks(tallies, majority, cfg.truth.segment, cfg.truth.severity,
                            e.severity_digits)
        _write_json(out / "validation.json", {
            "truth": {"segment": cfg.truth.segment, "severity": cfg.truth.severity},
            "ranks": ranks,
        })
        summary["validation"] = ranks
    return summary


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def _panel_rows(meta: dict, k: int) -> list[dict]:
    return meta["entries"][:k]


def _table(rows: list[dict], key_header: str) -> list[str]:
    lines = [f"| Rank | Segment | {key_header} | Score | Percentage |",
             "|---:|---:|---:|---:|---:|"]
    for r, row in enumerate(rows, start=1):
        lines.append(f"| {r} | {row['segment']} | {row['key']} | {row['score']:.4f} | "
                     f"{voting.format_percentage(row['percentage'])} |")
    return lines


def cmd_report(cfg: PipelineConfig, out, tallies_dir=None, k: int | None = None) -> dict:
    out = Path(out)
    tallies_dir = Path(tallies_dir) if tallies_dir else out / "tallies"
    k = cfg.report.top_k if k is None else k
    if k < 1:
        raise StageError("report", "top-k must be at least 1")
    metas = {name: _read_json(tallies_dir / f"{name}.json", "report") for name in HEURISTICS}
    majority_path = tallies_dir / "majority.json"
    majority = _read_json(majority_path, "report") if majority_path.is_file() else None
    if majority is not None and not majority.get("entries"):
        majority = None
    validation_path = out / "validation.json"
    validation = _read_json(validation_path, "report") if validation_path.is_file() else None

    rdir = out / "report"
    rdir.mkdir(parents=True, exist_ok=True)
    md = ["# Fault identification report", ""]
    first = metas["voting"]
    md.append(f"Runs: {first.get('m_runs', '?')}, objectives per run: "
              f"{first.get('n_objectives', '?')}, top {k} per panel.")
    md.append("")
    panel_rows = []
    for name in HEURISTICS:
        roman, title = PANELS[name]
        rows = _panel_rows(metas[name], k)
        key_header = "Severity range" if name in ("range", "partial_range") else "Severity"
        md += [f"## {roman}. {title}", ""]
        if name.startswith("partial"):
            q = metas[name].get("qualifying_runs", [])
            md += [f"Qualifying runs: {len(q)}", ""]
        md += _table(rows, key_header) + [""]
        for r, row in enumerate(rows, start=1):
            panel_rows.append([roman, name, r, row["segment"], row["key"],
                               repr(row["score"]), repr(row["percentage"])])
    md += ["## Majority voting baseline", ""]
    if majority is None:
        md += ["Majority-vote baseline not available; panel omitted.", ""]
    else:
        rows = _panel_rows(majority, k)
        md += _table(rows, "Severity") + [""]
        for r, row in enumerate(rows, start=1):
            panel_rows.append(["baseline", "majority", r, row["segment"], row["key"],
                               repr(row["score"]), repr(row["percentage"])])
    if validation is not None:
        tr = validation["truth"]
        md += ["## Validation", "",
               f"True scenario: segment {tr['segment']}, severity {tr['severity']:.4f}", "",
               "| Heuristic | Rank of true key | Rank of true segment |",
               "|---|---:|---:|"]
        for name, r in validation["ranks"].items():
            kr = "-" if r["key_rank"] is None else r["key_rank"]
            sr = "-" if r["segment_rank"] is None else r["segment_rank"]
            md.append(f"| {name} | {kr} | {sr} |")
        md.append("")
    (rdir / "report.md").write_text("\n".join(md), encoding="utf-8")

    with open(rdir / "panels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["panel", "heuristic", "rank", "segment", "key", "score", "percentage"])
        w.writerows(panel_rows)
    with open(rdir / "grid.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["heuristic", "segment", "severity", "score"])
        for name in HEURISTICS:
            for row in metas[name]["entries"]:
                w.writerow([name, row["segment"], repr(row["severity"]), repr(row["score"])])
    return {"report": rdir / "report.md", "panels": len(HEURISTICS) + (majority is not None)}
