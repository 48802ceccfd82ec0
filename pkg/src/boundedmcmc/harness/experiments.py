"""Multi-seed runs, box-size sweeps and nESS comparisons with CSV/JSON outputs.

Every output file starts with ``# config: <canonical JSON>`` so it can be
traced to its inputs, and nothing time- or host-dependent is written, so
identical inputs give identical bytes.
"""

from __future__ import annotations

import importlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..core import TargetModel
from ..diagnostics import ness_per_coordinate, ness_ratio_report, percentile_summary
from ..reservoir import read_model, read_observations
from ..samplers import run_chain
from ..targets import (
    RESERVOIR_CASES,
    gaussian_target,
    lightweight_covariance,
    lightweight_map,
    map_estimate,
    reservoir_posterior,
    reservoir_transform,
    tilted_rosenbrock_target,
    truncated_gaussian_2d,
    unit_prior_rescaling,
)
from .config import ConfigError, ExperimentConfig, Variant, parse_config

__all__ = [
    "SeedResult",
    "build_target",
    "run_experiment",
    "run_sweep",
    "compare_runs",
    "FLOAT_FMT",
]

FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    return FLOAT_FMT % float(x)


@dataclass
class SeedResult:
    seed: int
    label: str
    box_size: float | None
    ness: np.ndarray
    acceptance: float
    final_delta: float
    oob_rejections: int
    mean_bounces: float
    chain_file: str | None


def build_target(cfg: ExperimentConfig, box_size: float | None = None):
    """Return ``(target, scale)``; samples of the target times ``scale`` are positions."""
    opts = dict(cfg.target_options)
    if box_size is not None:
        if cfg.target not in ("rosenbrock", "truncgauss", "gaussian"):
            raise ConfigError(f"box_sizes are not supported for target {cfg.target!r}")
        opts["a"] = box_size
    t = cfg.target
    if t == "rosenbrock":
        tm = tilted_rosenbrock_target(a=opts.get("a", 1.0), cov_scale=opts.get("cov_scale", 0.3),
                                      dim=opts.get("dim", 5))
    elif t == "truncgauss":
        tm = truncated_gaussian_2d(opts.get("a", 1.0))
    elif t == "gaussian":
        tm = gaussian_target(opts.get("dim", 2), a=opts.get("a", 1e6), cov=opts.get("cov", 1.0))
    elif t == "custom":
        mod, _, fn = opts["factory"].partition(":")
        try:
            factory = getattr(importlib.import_module(mod), fn)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot import custom target factory {opts['factory']!r}") from exc
        tm = factory(**opts.get("kwargs", {}))
        if not isinstance(tm, TargetModel):
            raise ConfigError("custom target factory must return a TargetModel")
    else:
        case = t[len("reservoir-"):]
        try:
            model = read_model(opts["model_file"])
            obs = read_observations(opts["obs_file"])
            base = np.loadtxt(opts["base_file"], ndmin=1) if "base_file" in opts else None
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read reservoir inputs: {exc}") from exc
        if case == "lightweight":
            tform = reservoir_transform(case, model)
            lmap = lightweight_map(model, base)
            tm = reservoir_posterior(model, obs, tform, lightweight_covariance(model.n_layers),
                                     "lightweight", lmap)
        else:
            tform = reservoir_transform(case, model, base)
            tm = reservoir_posterior(model, obs, tform, RESERVOIR_CASES[case][3], "full")
        if opts.get("rescale_prior", False):
            return unit_prior_rescaling(tm)
    return tm, np.ones(tm.dim)


def _initial_point(cfg: ExperimentConfig, tm: TargetModel, scale: np.ndarray) -> np.ndarray:
    if cfg.x0 == "zero":
        return np.zeros(tm.dim)
    if cfg.x0 == "map":
        return np.clip(map_estimate(tm, np.zeros(tm.dim)), -tm.domain.half_widths,
                       tm.domain.half_widths)
    x0 = np.asarray(cfg.x0, dtype=float)
    if x0.shape != (tm.dim,):
        raise ConfigError(f"x0 has length {x0.size}, target has dimension {tm.dim}")
    return x0 / scale


def _chain_header(cfg_json: str, seed: int, label: str, box_size, dim: int, momenta: bool) -> str:
    cols = [f"x{j}" for j in range(dim)]
    if momenta:
        cols += [f"p{j}" for j in range(dim)]
    cols += ["accepted", "alpha", "energy", "bounces"]
    lines = [f"# config: {cfg_json}", f"# seed: {seed}", f"# variant: {label}"]
    if box_size is not None:
        lines.append(f"# box_size: {_fmt(box_size)}")
    return "\n".join(lines) + "\n" + ",".join(cols) + "\n"


def _run_one(cfg_dict: dict, seed: int, variant: dict, box_size, chain_path):
    """Worker: one chain.  Takes plain data so it can run in a subprocess."""
    cfg = parse_config(cfg_dict)
    var = Variant(**variant)
    tm, scale = build_target(cfg, box_size)
    override = {"algorithm": var.algorithm, "boundary_mode": var.boundary_mode}
    if var.i_param is not None:
        override["i_param"] = var.i_param
    scfg = cfg.sampler_config(seed, **override)
    x0 = _initial_point(cfg, tm, scale)
    writer = None
    if chain_path is not None:
        writer = open(chain_path, "w")
        writer.write(_chain_header(cfg.to_json(), seed, var.label, box_size, tm.dim,
                                   cfg.save_momenta))

    def sink(chunk):
        cols = [chunk["samples"] * scale]
        if cfg.save_momenta:
            cols.append(chunk["momenta"])
        cols += [chunk["accepted"][:, None].astype(float), chunk["alpha"][:, None],
                 chunk["energy"][:, None], chunk["bounces"][:, None].astype(float)]
        np.savetxt(writer, np.hstack(cols), fmt=FLOAT_FMT, delimiter=",")

    try:
        out = run_chain(x0, scfg, tm, chunk_size=cfg.chunk_size,
                        sink=sink if writer is not None else None)
    finally:
        if writer is not None:
            writer.close()
    series = out.samples * scale
    if cfg.diagnose_momenta:
        series = np.hstack([series, out.momenta])
    tau_kw = {"window_factor": cfg.window_factor, "onesided": cfg.tau_onesided}
    nes = ness_per_coordinate(series, **tau_kw) if out.samples.shape[0] > 1 else \
        np.full(series.shape[1], np.nan)
    return SeedResult(seed, var.label, box_size, nes, out.acceptance_rate, out.final_delta,
                      out.oob_rejections, float(out.bounce_counts.mean()) if out.bounce_counts.size
                      else 0.0, None if chain_path is None else str(chain_path))


def _map_tasks(cfg: ExperimentConfig, tasks: list[tuple]) -> list[SeedResult]:
    workers = cfg.workers or min(len(tasks), os.cpu_count() or 1)
    if workers <= 1 or len(tasks) == 1:
        return [_run_one(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, *t) for t in tasks]
        return [f.result() for f in futures]


def _base_variant(cfg: ExperimentConfig) -> dict:
    return {"label": f"{cfg.algorithm}-{cfg.boundary_mode}", "algorithm": cfg.algorithm,
            "boundary_mode": cfg.boundary_mode, "i_param": None}


def _coord_names(dim: int, momenta: bool) -> list[str]:
    names = [f"x{j}" for j in range(dim)]
    return names + [f"p{j}" for j in range(dim)] if momenta else names


def _write_csv(path: Path, header: list[str], columns: list[str], rows: list[list]) -> None:
    with open(path, "w") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) if isinstance(v, float)
                              else str(v) for v in row) + "\n")


def _write_manifest(path: Path, cfg: ExperimentConfig, outputs: list[str], per_seed, extra=None):
    manifest = {
        "config": cfg.to_dict(),
        "version": __version__,
        "outputs": outputs,
        "runs": [{"seed": r.seed, "variant": r.label, "box_size": r.box_size,
                  "acceptance": r.acceptance, "final_delta": r.final_delta,
                  "oob_rejections": r.oob_rejections, "mean_bounces": r.mean_bounces,
                  "chain_file": None if r.chain_file is None else Path(r.chain_file).name}
                 for r in per_seed],
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir) -> list[SeedResult]:
    """Run every seed; write chain files, ``ness_per_seed.csv``, ``summary.csv`` and ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_dict = cfg.to_dict()
    var = _base_variant(cfg)
    tasks = [(cfg_dict, s, var, None, out_dir / f"chain_seed{s}.csv" if cfg.save_chains else None)
             for s in cfg.seeds]
    results = _map_tasks(cfg, tasks)
    dim = results[0].ness.size
    names = [f"x{j}" for j in range(dim)] if not cfg.diagnose_momenta else \
        _coord_names(dim // 2, True)
    header = [f"config: {cfg.to_json()}"]
    _write_csv(out_dir / "ness_per_seed.csv", header,
               ["seed", "acceptance", "final_delta", "oob_rejections"] + [f"ness_{n}" for n in names],
               [[r.seed, r.acceptance, r.final_delta, r.oob_rejections, *map(float, r.ness)]
                for r in results])
    table = np.array([r.ness for r in results])
    summ = percentile_summary(table)
    acc = float(np.mean([r.acceptance for r in results]))
    _write_csv(out_dir / "summary.csv", header,
               ["coordinate", "P10", "P50", "P90", "mean_acceptance"],
               [[names[j], float(summ["P10"][j]), float(summ["P50"][j]), float(summ["P90"][j]), acc]
                for j in range(dim)])
    outputs = sorted(p.name for p in out_dir.iterdir() if p.name != "manifest.json")
    _write_manifest(out_dir / "manifest.json", cfg, outputs, results)
    return results


def bands_overlap(lo_a, hi_a, lo_b, hi_b) -> np.ndarray:
    return (np.asarray(lo_a) <= np.asarray(hi_b)) & (np.asarray(lo_b) <= np.asarray(hi_a))


def run_sweep(cfg: ExperimentConfig, out_dir) -> dict:
    """Repeat the multi-seed run over ``box_sizes`` for each variant; write ``sweep.csv``.

    With ``overlap_from`` set, also checks that for every box size at or above
    it the P10-P90 bands of the first two variants overlap on every coordinate.
    """
    if not cfg.box_sizes:
        raise ConfigError("sweep needs a non-empty box_sizes list")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    variants = [v.__dict__ for v in cfg.variants] if cfg.variants else [_base_variant(cfg)]
    cfg_dict = cfg.to_dict()
    tasks = []
    for a in cfg.box_sizes:
        for v in variants:
            for s in cfg.seeds:
                path = (out_dir / f"chain_a{a!r}_{v['label']}_seed{s}.csv"
                        if cfg.save_chains else None)
                tasks.append((cfg_dict, s, v, a, path))
    results = _map_tasks(cfg, tasks)

    rows, bands = [], {}
    for a in cfg.box_sizes:
        for v in variants:
            rs = [r for r in results if r.box_size == a and r.label == v["label"]]
            summ = percentile_summary(np.array([r.ness for r in rs]))
            acc = float(np.median([r.acceptance for r in rs]))
            bands[(a, v["label"])] = summ
            for j in range(rs[0].ness.size):
                rows.append([a, f"x{j}", float(summ["P10"][j]), float(summ["P50"][j]),
                             float(summ["P90"][j]), v["label"], acc])
    header = [f"config: {cfg.to_json()}"]
    _write_csv(out_dir / "sweep.csv", header,
               ["box_size", "coordinate", "P10", "P50", "P90", "algorithm", "median_acceptance"], rows)
    for v in variants:
        with open(out_dir / f"sweep_{v['label']}.dat", "w") as fh:
            fh.write(f"# config: {cfg.to_json()}\n# box_size then P10 P50 P90 per coordinate\n")
            for a in cfg.box_sizes:
                s = bands[(a, v["label"])]
                vals = np.column_stack([s["P10"], s["P50"], s["P90"]]).ravel()
                fh.write(" ".join([_fmt(a)] + [_fmt(x) for x in vals]) + "\n")

    check = None
    if cfg.overlap_from is not None:
        if len(variants) < 2:
            raise ConfigError("overlap_from needs at least two variants")
        la, lb = variants[0]["label"], variants[1]["label"]
        per_box = {}
        for a in cfg.box_sizes:
            if a >= cfg.overlap_from:
                sa, sb = bands[(a, la)], bands[(a, lb)]
                per_box[repr(a)] = bands_overlap(sa["P10"], sa["P90"], sb["P10"], sb["P90"]).tolist()
        check = {"variants": [la, lb], "from": cfg.overlap_from,
                 "passed": all(all(v) for v in per_box.values()), "overlap": per_box}
    outputs = sorted(p.name for p in out_dir.iterdir() if p.name != "manifest.json")
    _write_manifest(out_dir / "manifest.json", cfg, outputs, results,
                    {"overlap_check": check} if check else None)
    return {"results": results, "bands": bands, "overlap_check": check}


def read_summary(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.csv"
    if not path.exists():
        raise ConfigError(f"no summary found at {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    cols = lines[0].split(",")
    if "coordinate" not in cols or "P50" not in cols:
        raise ConfigError(f"{path} is not a run summary")
    ic, ip = cols.index("coordinate"), cols.index("P50")
    rows = [ln.split(",") for ln in lines[1:]]
    return [r[ic] for r in rows], np.array([float(r[ip]) for r in rows])


def compare_runs(path_a, path_b, out_file, bins: int = 30) -> dict:
    """Histogram of per-coordinate median-nESS ratios A/B; writes ``out_file`` and ``<out>.ratios.csv``."""
    names_a, a = read_summary(path_a)
    names_b, b = read_summary(path_b)
    if names_a != names_b:
        raise ConfigError(f"coordinate mismatch: {len(names_a)} vs {len(names_b)} coordinates")
    rep = ness_ratio_report(a, b, bins=bins)
    out_file = Path(out_file)
    header = [f"A: {Path(path_a).as_posix()}", f"B: {Path(path_b).as_posix()}",
              f"n_coordinates: {a.size}", f"fraction_greater: {_fmt(rep.fraction_greater)}"]
    _write_csv(out_file, header, ["bin_left", "bin_right", "count"],
               [[float(rep.edges[k]), float(rep.edges[k + 1]), int(rep.counts[k])]
                for k in range(rep.counts.size)])
    _write_csv(out_file.with_suffix(".ratios.csv"), header, ["coordinate", "ness_A", "ness_B", "ratio"],
               [[n, float(x), float(y), float(r)] for n, x, y, r in zip(names_a, a, b, rep.ratios)])
    return {"report": rep, "names": names_a}


def replace_config(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
