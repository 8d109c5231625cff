"""Command-line experiment runner.

    kinpara <command> --config PATH [--out DIR] [--threads N] [--seed U64]

Every command writes ``manifest.json`` and CSV files into the output
directory; ``full-suite`` runs all of them into subdirectories. Exit status
is 0 on success, 2 for an invalid configuration and 3 for a numerical
failure; in both error cases an ``error.json`` record is written.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pydantic
import scipy

from . import __version__, kernels
from .besov import BesovIndex, besov_norm, synthetic_field
from .config import COMMANDS, ExperimentConfig, config_hash
from .enhancement import CHAOS_CSV_HEADER, cauchy_convergence, chaos_diagnostics
from .grid import RealField, dump_field
from .noise import Mollifier, mollify, sample_noise, validate_measure
from .noise import SpectralMeasureSpec
from .particles import (
    ExcursionError,
    SdeConfig,
    compare_mean_field,
    init_ensemble,
    moment_check,
    simulate,
)
from .semigroup import schauder_gain
from .solvers import (
    CFLError,
    LinearProblem,
    NonlinearProblem,
    NumericalFailure,
    extract_sharp,
    kernel_samples,
    sharp_gain,
    solve_linear,
    solve_mean_field,
    stability_experiment,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    def __init__(self, details):
        super().__init__(json.dumps(details))
        self.details = details


def substream(root: int, label: str, index: int = 0) -> int:
    """Child seed for a labelled purpose, stable across runs and platforms."""
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode()), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


class _Run:
    """Collects outputs and seeds for one command."""

    def __init__(self, out: Path, seed: int, threads: int):
        self.out, self.seed, self.threads = out, seed, threads
        self.files: dict[str, str] = {}
        self.seeds: dict[str, int] = {}
        out.mkdir(parents=True, exist_ok=True)

    def sub(self, label: str, index: int = 0) -> int:
        s = substream(self.seed, label, index)
        self.seeds[f"{label}[{index}]"] = s
        return s

    def write(self, name: str, text: str):
        (self.out / name).write_text(text)
        self.files[name] = text

    def dump(self, name: str, f: RealField):
        (self.out / "fields").mkdir(exist_ok=True)
        dump_field(f, self.out / "fields" / name)


# runners ----------------------------------------------------------------------

def run_besov(cfg: ExperimentConfig, r: _Run):
    g = cfg.grid.build()
    levels, summary = [], []
    for sigma in cfg.besov.sigmas:
        for i in range(cfg.besov.n_fields):
            f = synthetic_field(g, sigma, seed=r.sub("besov", i))
            rep = besov_norm(f, BesovIndex(cfg.besov.s))
            levels += [(sigma, i, j, a) for j, a in rep.per_level]
            summary.append((sigma, i, rep.norm, rep.fitted_slope))
    r.write("besov_levels.csv", _csv(["sigma", "field", "j", "level_norm"], levels))
    r.write("besov_summary.csv", _csv(["sigma", "field", "norm", "fitted_slope"], summary))


def run_noise(cfg: ExperimentConfig, r: _Run):
    g = cfg.grid.build()
    spec = cfg.measure.build()
    rep = validate_measure(spec, g)
    r.write("measure.csv", _csv(["key", "value"], [
        ("ok", int(rep.ok)), ("symmetric", int(rep.symmetric)), ("worst_shift_integral", rep.worst_shift_integral),
        ("refined_shift_integral", rep.refined_shift_integral), ("refinement_ratio", rep.refinement_ratio)]))
    rows = []
    m = Mollifier(cfg.noise.epsilon)
    for i in range(cfg.noise.n_samples):
        s = r.sub("noise", i)
        X = mollify(sample_noise(spec, g, s), m)
        rows.append((i, str(s), X.sup(), X.lp(2), besov_norm(X, BesovIndex(0)).fitted_slope))
        r.dump(f"noise_{i}", X)
    r.write("samples.csv", _csv(["sample", "seed", "sup", "l2", "fitted_slope"], rows))


def run_enhance(cfg: ExperimentConfig, r: _Run):
    e = cfg.enhance
    spec = cfg.measure.build()
    g = e.grid.build()
    seeds = [r.sub("enhance", i) for i in range(e.samples)]
    lines = [CHAOS_CSV_HEADER]
    for t in e.times:
        for d in chaos_diagnostics(spec, g, e.levels, t, e.epsilon, seeds, batch=e.batch, workers=r.threads):
            lines.append(d.csv_row())
    r.write("chaos.csv", "\n".join(lines) + "\n")
    lseeds = [r.sub("ladder", i) for i in range(e.ladder_seeds)]
    tab = cauchy_convergence(spec, g, lseeds, e.ladder, e.ladder_t, tuple(e.ladder_window), e.alpha)
    r.write("ladder.csv", tab.to_csv())


def _linear_problem(cfg: ExperimentConfig, r: _Run):
    c = cfg.linear
    g = c.grid.build()
    b = synthetic_field(g, c.drift_sigma, seed=r.sub("linear-drift")) * c.drift_amplitude
    f = synthetic_field(g, c.source_sigma, seed=r.sub("linear-source"), envelope=lambda V: np.exp(-V ** 2))
    return LinearProblem(RealField.zeros(g), c.T, c.dt, b=b, f=f, lam=c.lam, save_every=c.save_every)


def run_linear(cfg: ExperimentConfig, r: _Run):
    p = _linear_problem(cfg, r)
    rep = solve_linear(p)
    sharp = extract_sharp(rep, p)
    win = cfg.linear.gain_window
    gain = sharp_gain(rep, sharp, window=tuple(win) if win else None)
    r.write("diagnostics.csv", rep.diagnostics_csv())
    r.write("sharp.csv", _csv(["t", "gain"], zip(rep.times, gain)))
    r.dump("u_final", rep.final)


def _density(g, a: float, s: float) -> RealField:
    u = (1 + a * np.cos(2 * np.pi * g.X / g.L_x)) * np.exp(-g.V ** 2 / (2 * s * s))
    return RealField(g, u / (u.sum() * g.cell))


def run_mfl(cfg: ExperimentConfig, r: _Run):
    c = cfg.mfl
    g = c.grid.build()
    W = mollify(sample_noise(SpectralMeasureSpec("x_colored", (c.W_gamma,)), g, r.sub("mfl-W")),
                Mollifier(c.W_epsilon)) * c.W_amplitude
    if c.kernel == "zero":
        K = None
    elif c.kernel == "cos":
        K = kernel_samples(g, np.cos)
    else:
        K = kernel_samples(g, lambda x: np.abs(x) ** (-c.kernel_power))
    p = NonlinearProblem(_density(g, 0.5, 1.0), c.T, c.dt, W=W, K=K, save_every=c.save_every)
    rep = solve_mean_field(p)
    slack = rep.entropy_slack()
    r.write("diagnostics.csv", rep.diagnostics_csv())
    r.write("entropy.csv", _csv(["t", "slack", "negative_mass"], zip(rep.times, slack, rep.negative_mass)))
    st = stability_experiment(p, _density(g, 0.5, 1.0), _density(g, 0.2, 1.2))
    r.write("stability.csv", _csv(["t", "distance", "ratio"], zip(st["times"], st["distance"], st["ratio"])))


def run_particles(cfg: ExperimentConfig, r: _Run):
    c = cfg.particles
    g = c.grid.build()
    sd = c.v_std

    def sampler(n, rng):
        return rng.uniform(-g.L_x / 2, g.L_x / 2, n), sd * rng.standard_normal(n)

    sc = SdeConfig(g, c.h, c.T, r.sub("particles-moments"))
    _, snaps = simulate(init_ensemble(c.moment_N, sc.seed, sampler), sc, save_every=max(1, sc.n_steps // 4))
    rows = []
    for p in (2, 4):
        mr = moment_check(snaps, p)
        rows += [(p, s, t, a, b) for (s, t), a, b in zip(mr.pairs, mr.ratios, mr.standard_errors)]
    r.write("moments.csv", _csv(["p", "s", "t", "ratio", "se"], rows))
    phi = RealField(g, np.exp(-g.V ** 2 / (2 * sd * sd)) / (g.L_x * np.sqrt(2 * np.pi) * sd))
    n = int(round(c.T / c.h))
    rep = solve_mean_field(NonlinearProblem(phi, c.T, c.h, save_every=n))
    seeds = [r.sub("particles-compare", i) for i in range(c.seeds)]
    res = compare_mean_field(SdeConfig(g, c.h, c.T, 0), c.N_list, rep, sampler, seeds)
    rows = [(N, t, res["median"][a, k]) for a, N in enumerate(res["N"]) for k, t in enumerate(res["times"])]
    r.write("mean_field.csv", _csv(["N", "t", "median_l1"], rows))


def run_schauder(cfg: ExperimentConfig, r: _Run):
    g = cfg.grid.build()
    c = cfg.schauder
    env = (lambda V: np.exp(-V ** 2 / 4)) if c.envelope else None
    f = synthetic_field(g, c.beta_probe, seed=r.sub("schauder"), envelope=env)
    rep = schauder_gain(f, c.t_max, c.beta_probe)
    r.write("schauder.csv", rep.to_csv(c.t_max, c.beta_probe))


RUNNERS = {
    "besov-analyze": run_besov,
    "noise-sample": run_noise,
    "enhance": run_enhance,
    "solve-linear": run_linear,
    "solve-mfl": run_mfl,
    "particles": run_particles,
    "schauder-bench": run_schauder,
}


# driver -------------------------------------------------------------------

def load_config(path: str | Path, seed: int | None = None) -> tuple[ExperimentConfig, dict]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError([{"loc": "", "msg": f"unreadable config: {exc}"}]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([{"loc": "", "msg": "top level must be an object"}])
    if seed is not None:
        raw = dict(raw, seed=int(seed))
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except pydantic.ValidationError as exc:
        details = [{"loc": ".".join(str(p) for p in e["loc"]), "msg": e["msg"]} for e in exc.errors()]
        raise ConfigError(details) from exc
    return cfg, raw


def _versions() -> dict:
    return {"kinpara": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "kernels": kernels.BACKEND}


def _run_one(command: str, cfg: ExperimentConfig, raw: dict, out: Path, threads: int) -> dict:
    r = _Run(out, cfg.seed, threads)
    t0 = time.perf_counter()
    RUNNERS[command](cfg, r)
    manifest = {"command": command, "config_hash": config_hash(raw), "config": raw, "seed": str(cfg.seed),
                "substreams": {k: str(v) for k, v in r.seeds.items()}, "threads": threads,
                "versions": _versions(), "wall_time_s": time.perf_counter() - t0,
                "outputs": sorted(r.files)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def run(config_path: str | Path, out: str | Path | None = None, threads: int = 1, seed: int | None = None,
        command: str | None = None) -> int:
    """Execute a configuration; returns the exit status."""
    out_dir = Path(out) if out else None
    try:
        cfg, raw = load_config(config_path, seed)
        if command is not None and command != cfg.command:
            cfg = ExperimentConfig.model_validate(dict(raw, command=command))
            raw = dict(raw, command=command)
        out_dir = out_dir or Path(cfg.output_dir or "kinpara-out")
        out_dir.mkdir(parents=True, exist_ok=True)
        if cfg.command == "full-suite":
            cmds = list(RUNNERS)
            with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
                futs = [pool.submit(_run_one, c, cfg, raw, out_dir / c, threads) for c in cmds]
                subs = [f.result() for f in futs]
            top = {"command": "full-suite", "config_hash": config_hash(raw), "seed": str(cfg.seed),
                   "threads": threads, "versions": _versions(),
                   "wall_time_s": sum(m["wall_time_s"] for m in subs), "parts": cmds}
            (out_dir / "manifest.json").write_text(json.dumps(top, indent=2, sort_keys=True))
        else:
            _run_one(cfg.command, cfg, raw, out_dir, threads)
        return EXIT_OK
    except pydantic.ValidationError as exc:
        details = [{"loc": ".".join(str(p) for p in e["loc"]), "msg": e["msg"]} for e in exc.errors()]
        return _fail(out_dir, EXIT_CONFIG, "invalid_config", details)
    except ConfigError as exc:
        return _fail(out_dir, EXIT_CONFIG, "invalid_config", exc.details)
    except (NumericalFailure, CFLError, ExcursionError, FloatingPointError) as exc:
        return _fail(out_dir, EXIT_NUMERIC, "numeric_failure", [{"type": type(exc).__name__, "msg": str(exc)}])
    except ValueError as exc:
        return _fail(out_dir, EXIT_CONFIG, "invalid_config", [{"loc": "", "msg": str(exc)}])


def _fail(out_dir: Path | None, code: int, kind: str, details) -> int:
    rec = {"error": kind, "exit_status": code, "details": details}
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text)
        except OSError:
            pass
    return code


def _u64(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinpara", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="overrides the command field of the config")
    ap.add_argument("--config", required=True, help="JSON experiment configuration")
    ap.add_argument("--out", help="output directory (default: config output_dir)")
    ap.add_argument("--threads", type=int, default=1, help="worker pool size")
    ap.add_argument("--seed", type=_u64, help="root seed, overrides the config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _fail(Path(args.out) if args.out else None, EXIT_CONFIG, "invalid_config",
                     [{"loc": "--threads", "msg": "must be >= 1"}])
    return run(args.config, args.out, args.threads, args.seed, args.command)


if __name__ == "__main__":
    sys.exit(main())
