"""Batch front-end: ``mvcool run CONFIG`` and ``mvcool figures KIND``.

Exit status: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
Failures print a single ``key=value`` line on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import doppler as dp
from . import measurement as ms
from . import oscillator as osc
from . import protocol as pr
from . import semiclassical as sc
from .config import ExperimentConfig, load_config, parse_config
from .errors import ConfigError, NumericalError
from .noise import SequenceSettings, run_noisy_experiment
from .params import RadialModes, RoundParams, ThermalSpec
from .tables import Table, write_json, write_table

THREADS_ENV = "MVCOOL_THREADS"
EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4
FIGURES = ("fig2", "fig3", "figS1", "figS2", "figS3")


# --- experiment runners -------------------------------------------------------------
# each returns {filename: Table | dict}; dicts are written as JSON


def _optimize(cfg: ExperimentConfig, threads: int):
    spec = ThermalSpec(cfg.initial.nbar)
    out = {"nbar": spec.nbar, "s": spec.s, "initial_energy": spec.energy}
    opt = pr.optimize_epsilon(spec)
    out.update(epsilon=opt.epsilon, alpha=opt.alpha, energy=opt.energy, energy_ratio=opt.ratio)
    if spec.nbar > 0:
        c = sc.optimal_classical_params(spec)
        e = sc.classical_energy(c.epsilon, c.alpha, spec)
        out["classical"] = {"epsilon": c.epsilon, "alpha": c.alpha, "energy": e, "energy_ratio": e / spec.energy}
    return {"result.json": out}


def _cool_classical(cfg, threads):
    rows = sc.cool_classical(ThermalSpec(cfg.initial.nbar), cfg.rounds, cfg.epsilon_scale)
    t = Table(["round", "q2", "p2", "energy", "nbar"], ["count", "dimensionless", "dimensionless", "hbar*omega",
                                                        "dimensionless"])
    for r in rows:
        t.add(r["round"], r["q2"], r["p2"], r["energy"], r["nbar"])
    return {"series.csv": t}


def _schedule_table(res: pr.ScheduleResult) -> Table:
    t = Table(["round", "nbar_analytic", "nbar_fock", "energy", "mean_n", "epsilon", "alpha"],
              ["count", "dimensionless", "dimensionless", "hbar*omega", "dimensionless", "dimensionless",
               "dimensionless"])
    for r in res.rows:
        energy = r.energy if r.energy is not None else r.nbar_analytic + 0.5
        t.add(r.round, r.nbar_analytic, r.nbar_fock, energy, r.mean_n, r.epsilon, r.alpha)
    return t


def _cool_quantum(cfg, threads):
    res = pr.run_schedule(ThermalSpec(cfg.initial.nbar), cfg.rounds, cfg.mode, cfg.protocol_schedule(),
                          cfg.epsilon_scale, cfg.dim, cfg.sequence.estimator)
    return {"series.csv": _schedule_table(res)}


def _settings(cfg) -> SequenceSettings:
    s = cfg.sequence
    return SequenceSettings(s.rabi, cfg.trap.eta, s.order, s.dt)


def _cool_noisy(cfg, threads):
    res = run_noisy_experiment(ThermalSpec(cfg.initial.nbar), cfg.rounds, cfg.noise.build(), _settings(cfg),
                               cfg.radial.build(), cfg.sequence.trajectories, cfg.seed, cfg.protocol_schedule(),
                               cfg.epsilon_scale, cfg.dim, cfg.sequence.estimator, threads)
    t = Table(["round", "nbar_mean", "ci_low", "ci_high"], ["count", "dimensionless", "dimensionless",
                                                            "dimensionless"])
    for r in res.rows:
        t.add(r.round, r.nbar_mean, r.ci_low, r.ci_high)
    traj = Table(["trajectory", "round", "nbar", "nbar0", "rabi_scale", "axial_offset"],
                 ["index", "count", "dimensionless", "dimensionless", "dimensionless", "Hz"])
    for i, (vals, d) in enumerate(zip(res.per_trajectory, res.draws)):
        for k, v in enumerate(vals):
            traj.add(i, k, float(v), d.nbar0, d.rabi_scale, d.axial_offset)
    return {"series.csv": t, "trajectories.csv": traj}


def _readout_fit(cfg, threads):
    r = cfg.readout
    radial = cfg.radial.build()
    if r.data:
        curve = ms.ReadoutCurve.from_csv(r.data)
    else:
        state = osc.make_thermal(ThermalSpec(r.nbar_true))
        rad = RadialModes.equal_temperature(r.nbar_true, cfg.trap.omega, frequencies=radial.frequencies,
                                            etas=radial.etas) if radial else None
        curve = ms.simulate_readout(state, ms.readout_alphas(r.nbar_true, r.points), rad, r.synthetic_order,
                                    r.shots, np.random.default_rng(cfg.seed), cfg.trap.eta)
    if radial is not None and r.model == "full":
        fit = ms.fit_nbar(curve, "full", "equal-temperature", cfg.trap.eta, radial_base=radial,
                          axial_frequency=cfg.trap.omega)
    else:
        fit = ms.fit_nbar(curve, r.model, None, cfg.trap.eta)
    t = Table(["alpha", "prob", "shots", "ci_low", "ci_high"],
              ["dimensionless", "dimensionless", "count", "dimensionless", "dimensionless"])
    for a, p, n, ci in zip(curve.alphas, curve.probs, curve.shots, curve.ci):
        t.add(float(a), float(p), int(n), float(ci[0]), float(ci[1]))
    return {"curve.csv": t, "fit.json": fit.to_dict()}


def _bsb_times(b) -> np.ndarray:
    # dense early sampling resolves the fast dephasing of the high-energy tail
    return np.unique(np.r_[np.linspace(0, b.t_max / 16, b.points // 4), np.linspace(0, b.t_max, b.points - b.points // 4)])


def _bsb_fit(cfg, threads):
    b = cfg.bsb
    rng = np.random.default_rng(cfg.seed)
    if b.data:
        t, p, n = ms.read_curve(b.data)
        curve = ms.BsbCurve(t, p, n, b.rabi_0, cfg.trap.eta)
    else:
        pops = ms.synthetic_tail_populations(b.low_population, b.max_level, b.low_nbar, b.tail_center, b.tail_width)
        state = osc.FockState(np.diag(pops).astype(complex))
        curve = ms.simulate_bsb(state, _bsb_times(b), b.rabi_0, None, ms.DecayModel(b.gamma_exp), rng, b.shots,
                                cfg.trap.eta)
    rep = ms.fit_tails(curve, b.max_level, b.bootstrap, rng)
    t = Table(["time", "prob", "shots"], ["s", "dimensionless", "count"])
    for x, p, n in zip(curve.times, curve.probs, curve.shots):
        t.add(float(x), float(p), int(n))
    return {"curve.csv": t, "fit.json": rep.to_dict()}


def _doppler_compare(cfg, threads):
    d = cfg.doppler
    w = cfg.trap.omega
    base = dp.DopplerConfig(d.gamma_over_omega * w, -d.gamma_over_omega * w / 2, w, d.eta, d.pe)
    t = Table(["method", "detuning", "nbar_steady", "epsilon", "delta_energy"],
              ["label", "rad/s", "dimensionless", "dimensionless", "hbar*omega"])
    for r in dp.comparison_rows(base):
        t.add(r["method"], r["detuning"], r["nbar_steady"], r["epsilon"], r["delta_energy"])
    lim = dp.doppler_limit(base)
    return {"comparison.csv": t,
            "limit.json": {"detuning": lim.detuning, "detuning_numeric": lim.detuning_numeric,
                           "nbar_min": lim.nbar_min, "gamma_over_omega": d.gamma_over_omega}}


RUNNERS = {
    "optimize": _optimize,
    "cool-classical": _cool_classical,
    "cool-quantum": _cool_quantum,
    "cool-noisy": _cool_noisy,
    "readout-fit": _readout_fit,
    "bsb-fit": _bsb_fit,
    "doppler-compare": _doppler_compare,
}


# --- figure data ----------------------------------------------------------------------


def _fig2(cfg, threads):
    s = 1.0
    p = sc.optimal_classical_params(ThermalSpec.from_s(s))
    xs = sc.uniform_grid(sc.DEFAULT_SPAN * s)
    d = sc.bayes_round_detail(sc.gaussian_density(s, xs), p)
    t = Table(["q", "f0", "m1_minus", "m1_plus", "f1"], ["dimensionless"] * 5)
    for row in zip(xs, d.prior.fs, d.m_minus.fs, d.m_plus.fs, d.posterior.fs):
        t.add(*map(float, row))
    # narrower pitch for the tail comparison
    d2 = sc.bayes_round_detail(sc.gaussian_density(s, xs), RoundParams(p.epsilon / math.sqrt(2),
                               sc.classical_alpha_given_epsilon(p.epsilon / math.sqrt(2), s)))
    t2 = Table(["q", "f1_eps_o", "f1_eps_o_sqrt2"], ["dimensionless"] * 3)
    for row in zip(xs, d.posterior.fs, d2.posterior.fs):
        t2.add(*map(float, row))
    return {"fig2a.csv": t, "fig2b.csv": t2}


def _fig3_runs(cfg):
    runs = {}
    for nb in (15.0, 34.0, 51.0):
        runs[nb] = pr.run_schedule(ThermalSpec(nb), cfg.rounds, cfg.mode, "auto", cfg.epsilon_scale)
    return runs


def _fig3(cfg, threads):
    out = {}
    for nb, res in _fig3_runs(cfg).items():
        t = Table(["round", "nbar_analytic", "nbar_fock", "reference"],
                  ["count", "dimensionless", "dimensionless", "dimensionless"])
        for r in res.rows:
            t.add(r.round, r.nbar_analytic, r.nbar_fock, nb * sc.CONTRACTION**r.round)
        out[f"fig3_nbar{int(nb)}.csv"] = t
    return out


def _figS1(cfg, threads):
    nb = cfg.readout.nbar_true
    state = osc.make_thermal(ThermalSpec(nb))
    a = np.linspace(-2.5, 2.5, 201) / math.sqrt(nb + 0.5)
    rad = RadialModes.equal_temperature(nb, cfg.trap.omega)
    lead = ms.readout_probabilities(state, a, "leading")
    full = ms.readout_probabilities(state, a, "full", rad, cfg.trap.eta)
    t = Table(["alpha", "leading", "full"], ["dimensionless"] * 3)
    for row in zip(a, lead, full):
        t.add(*map(float, row))
    return {"figS1.csv": t}


def _figS2(cfg, threads):
    nb = cfg.initial.nbar
    res = pr.run_schedule(ThermalSpec(nb), 0, "fock")
    state = res.state
    a = np.linspace(-2.5, 2.5, 121) / math.sqrt(nb + 0.5)
    cols = {"round0": ms.readout_probabilities(state, a)}
    nb_assumed = nb
    for k in range(1, cfg.rounds + 1):
        p = sc.schedule_params(ThermalSpec(nb_assumed).s, cfg.epsilon_scale)
        state = pr.apply_round(state, pr.ProtocolParams.symmetric(p.epsilon, p.alpha))
        nb_assumed *= sc.classical_contraction(cfg.epsilon_scale)
        cols[f"round{k}"] = ms.readout_probabilities(state, a)
    t = Table(["alpha", *cols], ["dimensionless"] * (1 + len(cols)))
    for i, x in enumerate(a):
        t.add(float(x), *(float(v[i]) for v in cols.values()))
    return {"figS2.csv": t}


def _figS3(cfg, threads):
    b = cfg.bsb
    times = np.linspace(0, b.t_max, b.points)
    out = {}
    for nb in (15.0, 34.0, 51.0):
        res = pr.run_schedule(ThermalSpec(nb), cfg.rounds, "fock", "auto", cfg.epsilon_scale)
        c = ms.simulate_bsb(res.state, times, b.rabi_0, RadialModes.equal_temperature(nb, cfg.trap.omega),
                            ms.DecayModel(b.gamma_exp), eta=cfg.trap.eta)
        t = Table(["time", "prob"], ["s", "dimensionless"])
        for row in zip(c.times, c.probs):
            t.add(*map(float, row))
        out[f"figS3_nbar{int(nb)}.csv"] = t
    return out


FIGURE_RUNNERS = {"fig2": _fig2, "fig3": _fig3, "figS1": _figS1, "figS2": _figS2, "figS3": _figS3}


# --- orchestration --------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(out_dir: Path, outputs: dict) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, obj in outputs.items():
        p = out_dir / name
        if isinstance(obj, Table):
            write_table(p, obj)
        else:
            write_json(p, obj)
        paths.append(p)
    return paths


def execute(cfg: ExperimentConfig, runner, out_dir: Path, threads: int, label: str) -> list[Path]:
    t0 = time.perf_counter()
    outputs = runner(cfg, threads)
    wall = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.yaml").write_text(cfg.resolved_yaml(), encoding="utf-8")
    paths = write_outputs(out_dir, outputs)
    manifest = {
        "run": label,
        "seed": cfg.seed,
        "threads": threads,
        "wall_time_s": wall,
        "versions": {"mvcool": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "outputs": {p.name: _sha256(p) for p in paths},
    }
    write_json(out_dir / "manifest.json", manifest)
    return paths


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(arg, 1)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    data = cfg.model_dump(mode="json")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output"]["dir"] = args.out
    return parse_config(data)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mvcool", description="Modular-variable cooling simulations.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default: ${THREADS_ENV} or 1)")
        p.add_argument("--echo-config", action="store_true",
                       help="print the resolved config with all defaults and exit")

    run = sub.add_parser("run", help="run an experiment described by a YAML config")
    run.add_argument("config")
    common(run)
    fig = sub.add_parser("figures", help="emit figure-ready CSV tables")
    fig.add_argument("kind", choices=FIGURES)
    fig.add_argument("--config", default=None, help="optional YAML config supplying parameters")
    common(fig)
    return ap


def _fail(kind: str, code: int, msg: str) -> int:
    msg = " ".join(str(msg).split())
    print(f"mvcool: error={kind} code={code} message={msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = _threads(args.threads)
        if args.command == "run":
            cfg = load_config(args.config)
            runner = RUNNERS[cfg.kind]
            label = cfg.kind
        else:
            cfg = load_config(args.config) if args.config else parse_config({"kind": "cool-quantum", "rounds": 5})
            runner = FIGURE_RUNNERS[args.kind]
            label = args.kind
        cfg = _apply_overrides(cfg, args)
        if args.echo_config:
            sys.stdout.write(cfg.resolved_yaml())
            return 0
        paths = execute(cfg, runner, Path(cfg.output.dir), threads, label)
        for p in paths:
            print(p)
        return 0
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except NumericalError as exc:
        return _fail("numerical", EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}")
    except OSError as exc:
        return _fail("io", EXIT_IO, exc)
    except ValueError as exc:
        return _fail("config", EXIT_CONFIG, exc)


if __name__ == "__main__":
    sys.exit(main())
