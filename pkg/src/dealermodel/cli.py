"""Command-line front end.

    dealermodel SUBCOMMAND [--config PATH] [--out DIR] [--set key=value]...

Subcommands: ``simulate``, ``lattice``, ``ml-solve``, ``analytic``, ``compare``
and ``sweep-n``.  The config file is flat ``key=value`` text with ``#``
comments; ``--set`` overrides are applied after it.  A ``manifest.json``
written by an earlier run is also accepted as a config, which replays that
run.  The number of worker processes for ensembles is read from
``DEALERMODEL_THREADS``.

Exit status: 0 success, 1 usage or configuration error, 2 numerical
failure, 3 a ``compare`` tolerance was not met.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analytic, lattice, mlsolver, simulator, stats
from .core import GridSpec, ModelError, ModelParams, NumericalError, SimSchedule, default_dt
from .io import append_jsonl, dumps, write_csv

log = logging.getLogger("dealermodel")

SUBCOMMANDS = ("simulate", "lattice", "ml-solve", "analytic", "compare", "sweep-n")
COMPARE_L1_TOL = 0.03

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_TOLERANCE = 0, 1, 2, 3


class ConfigError(ModelError):
    pass


class ToleranceFailure(Exception):
    """A comparison missed its tolerance; ``files`` lists what was written anyway."""

    def __init__(self, message: str, files=()):
        super().__init__(message)
        self.files = list(files)


def _auto_float(text):
    return "auto" if str(text).strip() == "auto" else float(text)


def _int_list(text):
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).replace(" ", "").split(",") if t]
    if not items:
        raise ValueError("empty list")
    out = []
    for t in items:
        f = float(t)
        if f != int(f):
            raise ValueError(f"{t} is not an integer")
        out.append(int(f))
    return out


def _int(text):
    f = float(text)
    if not math.isfinite(f) or f != int(f):
        raise ValueError(f"{text} is not an integer")
    return int(f)


def _method(text):
    text = str(text).strip()
    if text not in ("explicit", "direct"):
        raise ValueError("expected 'explicit' or 'direct'")
    return text


# key -> (parser, default); the first block mirrors the reference parameter table
KEYS = {
    "N": (_int, 2),
    "L": (float, 2.0),
    "sigma2": (float, 1.0),
    "u2": (float, 0.0),
    "dt": (_auto_float, "auto"),
    "t_init": (float, 20.0),
    "t_end": (float, 1e4),
    "dr": (float, 1e-2),
    "r_min": (float, -3.0),
    "r_max": (float, 3.0),
    "seed": (_int, 12345),
    "runs": (_int, 1),
    "n_list": (_int_list, [2, 7, 100]),
    "tol": (float, 1e-10),
    "ml_method": (_method, "explicit"),
    "n_bar": (_auto_float, "auto"),
    "lattice_events": (_int, 0),
}


def defaults() -> dict:
    return {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in KEYS.items()}


def _set(cfg: dict, key: str, value, where: str):
    if key not in KEYS:
        raise ConfigError(f"unknown key {key} at {where}")
    parser = KEYS[key][0]
    try:
        cfg[key] = parser(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} for {key} at {where}") from None


def parse_config(text: str, base: dict | None = None) -> dict:
    """Resolve a flat ``key=value`` config (or a manifest JSON) on top of the defaults."""
    cfg = defaults() if base is None else dict(base)
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed manifest at line {exc.lineno}: {exc.msg}") from None
        for key, value in data.get("config", data).items():
            _set(cfg, key, value, f"manifest key {key}")
        return cfg
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"malformed line {lineno}: {raw.strip()!r}")
        _set(cfg, key, value, f"line {lineno}")
    return cfg


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = dict(cfg)
    for i, item in enumerate(overrides or (), start=1):
        if "=" not in item:
            raise ConfigError(f"malformed --set #{i}: expected key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        _set(cfg, key, value, f"--set #{i}")
    return cfg


def resolved_dt(cfg: dict, n_traders: int | None = None) -> float:
    if cfg["dt"] != "auto":
        return float(cfg["dt"])
    return default_dt(cfg["N"] if n_traders is None else n_traders)


def model_params(cfg: dict, n_traders: int | None = None) -> ModelParams:
    return ModelParams(n_traders=cfg["N"] if n_traders is None else n_traders,
                       spread=cfg["L"], sigma2=cfg["sigma2"], u2=cfg["u2"])


def schedule(cfg: dict, n_traders: int | None = None) -> SimSchedule:
    return SimSchedule(dt=resolved_dt(cfg, n_traders), t_init=cfg["t_init"], t_end=cfg["t_end"],
                       seed=cfg["seed"], n_runs=cfg["runs"])


def grid(cfg: dict) -> GridSpec:
    return GridSpec(cfg["r_min"], cfg["r_max"], cfg["dr"])


def write_manifest(out: Path, subcommand: str, cfg: dict, outputs: list[str]) -> Path:
    resolved = {
        "dt": resolved_dt(cfg),
        "sigma_cm2": cfg["sigma2"] / 2,
        "mean_transaction_interval": analytic.mean_transaction_interval(cfg["L"], cfg["sigma2"]),
        "com_diffusion_constant_n2": analytic.com_diffusion_constant_n2(cfg["sigma2"]),
    }
    manifest = {"subcommand": subcommand, "config": cfg, "resolved": resolved,
                "outputs": sorted(outputs)}
    path = out / "manifest.json"
    path.write_text(json.dumps(json.loads(dumps(manifest)), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _summary(out: Path, record: dict):
    append_jsonl(out / "summary.jsonl", record)


def _reference_profile(params: ModelParams) -> analytic.AnalyticProfile:
    if params.n_traders == 2:
        return analytic.AnalyticProfile.steady(params)
    if params.u2 != 0:
        raise ModelError("no closed-form reference for N > 2 with a potential")
    return analytic.AnalyticProfile.nlo(params)


def _run_record(result: simulator.RunResult, params: ModelParams, label) -> dict:
    L = params.spread
    pdf = result.pdf_r
    rec = {"run": label, "N": params.n_traders, "L": L, "sigma2": params.sigma2, "u2": params.u2,
           "n_events": len(result.events),
           "tail_mass": stats.symmetric_tail_mass(pdf, L / 2),
           "l1_tent": stats.l1_distance(pdf, analytic.AnalyticProfile.tent(params))}
    iv = result.events.intervals()
    rec["mean_interval"] = float(iv.mean()) if iv.size else None
    if params.u2 == 0 or params.n_traders == 2:
        rec["l1_reference"] = stats.l1_distance(pdf, _reference_profile(params))
    if params.n_traders == 2 and len(result.events) >= 100:
        rec["taker_fraction_0"] = float(simulator.taker_fractions(result.events, 2)[0])
    return rec


def cmd_simulate(cfg: dict, out: Path) -> list[str]:
    params, sched, g = model_params(cfg), schedule(cfg), grid(cfg)
    rc = simulator.RunConfig(params, sched, g)
    results = simulator.run_many(rc, sched.n_runs)
    merged = simulator.merge_results(results)
    files = []
    merged.pdf_r.to_csv(out / "pdf_r.csv")
    files.append("pdf_r.csv")
    if len(results) == 1:
        results[0].events.to_csv(out / "events.csv")
        files.append("events.csv")
    else:
        for i, r in enumerate(results):
            r.events.to_csv(out / f"events_run{i}.csv")
            files.append(f"events_run{i}.csv")
    results[0].com_to_csv(out / "com.csv")
    files.append("com.csv")
    iv = merged.events.intervals()
    if iv.size:
        stats.IntervalStats(float(iv.mean()), int(iv.size), iv).cdf_to_csv(out / "interval_cdf.csv")
        files.append("interval_cdf.csv")
    for i, r in enumerate(results):
        _summary(out, _run_record(r, params, i))
    if len(results) > 1:
        _summary(out, _run_record(merged, params, "ensemble"))
    return files + ["summary.jsonl"]


def _lattice_params(cfg: dict) -> lattice.LatticeParams:
    L, dr = cfg["L"], cfg["dr"]
    n_bar = round(L / (2 * dr)) if cfg["n_bar"] == "auto" else cfg["n_bar"]
    if n_bar != int(n_bar):
        raise ConfigError("n_bar must be an integer")
    return lattice.LatticeParams.diffusive(cfg["sigma2"] / 2, L, int(n_bar))


def cmd_lattice(cfg: dict, out: Path) -> list[str]:
    lp = _lattice_params(cfg)
    steady = lattice.lattice_steady_state(lp)
    steady.to_csv(out / "lattice_steady.csv")
    table = lattice.diffusive_limit_check(cfg["sigma2"] / 2, cfg["L"], (4, 8, 16, 32))
    table.to_csv(out / "diffusive_limit.csv")
    files = ["lattice_steady.csv", "diffusive_limit.csv", "summary.jsonl"]
    rec = {"n_bar": lp.n_bar, "l": lp.l, "lambda": lp.lambda_,
           "p_origin": steady[0], "diffusive_monotone": table.monotone,
           "diffusive_max_scaled_error": table.max_scaled_error}
    if cfg["lattice_events"] > 0:
        stride = lattice.embedded_mixing_stride(lp)
        mc = lattice.lattice_ensemble(lp, cfg["lattice_events"], cfg["runs"], cfg["seed"],
                                      stride=stride)
        mc.to_csv(out / "lattice_mc.csv")
        files.append("lattice_mc.csv")
        rec["mc_samples"] = mc.n_samples
        rec["mc_max_abs_deviation"] = float(np.max(np.abs(mc.frequencies - steady.probs)))
    _summary(out, rec)
    return files


def _require_two(cfg: dict, what: str):
    if cfg["N"] != 2:
        raise ConfigError(f"{what} describes the two-trader relative price; set N=2 (got N={cfg['N']})")


def cmd_ml_solve(cfg: dict, out: Path) -> list[str]:
    _require_two(cfg, "ml-solve")
    params, g = model_params(cfg), grid(cfg)
    res = mlsolver.ml_steady_result(params, g, tol=cfg["tol"], method=cfg["ml_method"])
    mlsolver.field_to_csv(res.field, res.diagnostics, out / "ml_field.csv")
    profile = analytic.AnalyticProfile.steady(params)
    cell_sup, nodal_sup = mlsolver.sup_distance(res.field, profile)
    bc0, bcw = mlsolver.boundary_condition_check(res.field, params.spread)
    rate = res.diagnostics.implied_rate
    _summary(out, {
        "method": cfg["ml_method"], "steps": res.steps, "residual": res.residual,
        "implied_rate": rate,
        "implied_rate_times_tau": rate * analytic.mean_transaction_interval(params.spread, params.sigma2),
        "boundary_flux_plus": res.diagnostics.boundary_flux_plus,
        "boundary_flux_minus": res.diagnostics.boundary_flux_minus,
        "sup_distance_cell": cell_sup, "sup_distance_nodal": nodal_sup,
        "l1_reference": float(np.sum(np.abs(res.field.bin_values() - profile(g.centers))) * g.dr),
        "bc_kink_residual": bc0, "bc_wall_residual": bcw,
    })
    return ["ml_field.csv", "summary.jsonl"]


def cmd_analytic(cfg: dict, out: Path) -> list[str]:
    params, g = model_params(cfg), grid(cfg)
    profile = _reference_profile(params)
    profile.to_csv(g, out / "analytic_pdf.csv")
    r = g.centers
    write_csv(out / "orderbook.csv", ["r", "profile(r)"], [r, analytic.orderbook_profile(r, params.spread)])
    rec = {"kind": profile.kind.value,
           "mean_transaction_interval": analytic.mean_transaction_interval(params.spread, params.sigma2),
           "com_diffusion_constant_n2": analytic.com_diffusion_constant_n2(params.sigma2)}
    if profile.kind is analytic.ProfileKind.HARMONIC_POTENTIAL:
        rec["Z_closed"] = profile.aux["Z"]
        rec["Z_quadrature"] = analytic.harmonic_normalization(
            params.spread, math.sqrt(params.sigma_cm2), params.u, method="quadrature")
    if profile.kind is analytic.ProfileKind.MEAN_FIELD_NLO:
        rec["epsilon"] = profile.aux["epsilon"]
    _summary(out, rec)
    return ["analytic_pdf.csv", "orderbook.csv", "summary.jsonl"]


def _nodes_to_bins(node_density: np.ndarray) -> np.ndarray:
    return 0.5 * (node_density[:-1] + node_density[1:])


def cmd_compare(cfg: dict, out: Path) -> list[str]:
    _require_two(cfg, "compare")
    params, sched, g = model_params(cfg), schedule(cfg), grid(cfg)
    sim = simulator.run_ensemble(simulator.RunConfig(params, sched, g, record_events=False))
    field, diag = mlsolver.ml_steady(params, g, tol=cfg["tol"], method=cfg["ml_method"])
    columns = {"simulator": sim.pdf_r.density, "ml": field.bin_values()}
    if params.u2 == 0:
        lp = lattice.LatticeParams.diffusive(params.sigma_cm2, params.spread,
                                             round(params.spread / (2 * g.dr)))
        nodes = np.zeros(g.n_bins + 1)
        i = g.node_index(-params.spread / 2) + 1
        nodes[i:i + lp.n_states] = lattice.lattice_steady_state(lp).density
        columns["lattice"] = _nodes_to_bins(nodes)
    else:
        log.info("lattice model has no potential term; skipped for u2 > 0")
    columns["analytic"] = np.asarray(_reference_profile(params)(g.centers), dtype=float)
    names = list(columns)
    footer, failures = [], []
    for a_i, a in enumerate(names):
        for b in names[a_i + 1:]:
            d = float(np.sum(np.abs(columns[a] - columns[b])) * g.dr)
            ok = d < COMPARE_L1_TOL
            footer.append(f"# l1({a},{b})={d!r},tol={COMPARE_L1_TOL},{'pass' if ok else 'FAIL'}")
            _summary(out, {"pair": [a, b], "l1": d, "tol": COMPARE_L1_TOL, "pass": ok})
            if not ok:
                failures.append(f"l1({a},{b}) = {d:.4g}")
    write_csv(out / "compare.csv", ["r"] + names, [g.centers] + [columns[n] for n in names], footer)
    if failures:
        raise ToleranceFailure("; ".join(failures), ["compare.csv", "summary.jsonl"])
    return ["compare.csv", "summary.jsonl"]


def sweep_row(pdf: stats.DensityEstimate, params: ModelParams) -> dict:
    """Tail and boundary-layer metrics of one ``N`` in a sweep."""
    L, N, g = params.spread, params.n_traders, pdf.grid
    eps = L / (2 * math.sqrt(N))
    tent = analytic.AnalyticProfile.tent(params)
    nlo = analytic.AnalyticProfile.nlo(params)
    window = np.abs(np.abs(g.centers) - L / 2) < 3 * eps
    hi = min(1.1 * L, g.r_max)
    lo = max(-1.1 * L, g.r_min)
    return {
        "N": N,
        "tail_beyond_half_spread": stats.symmetric_tail_mass(pdf, L / 2),
        "tail_window": stats.tail_mass(pdf, 0.9 * L, hi) + stats.tail_mass(pdf, lo, -0.9 * L),
        "l1_tent": stats.l1_distance(pdf, tent),
        "l1_nlo": stats.l1_distance(pdf, nlo),
        "wl1_tent": stats.windowed_l1(pdf, tent, window),
        "wl1_nlo": stats.windowed_l1(pdf, nlo, window),
    }


def cmd_sweep_n(cfg: dict, out: Path) -> list[str]:
    n_list = cfg["n_list"]
    if not n_list:
        raise ConfigError("n_list is empty")
    g = grid(cfg)
    rows, files = [], []
    for N in n_list:
        params, sched = model_params(cfg, N), schedule(cfg, N)
        log.info("sweep: N=%d dt=%g runs=%d", N, sched.dt, sched.n_runs)
        res = simulator.run_ensemble(simulator.RunConfig(params, sched, g, record_events=False))
        res.pdf_r.to_csv(out / f"pdf_N{N}.csv")
        files.append(f"pdf_N{N}.csv")
        row = sweep_row(res.pdf_r, params)
        rows.append(row)
        _summary(out, dict(row, dt=sched.dt, runs=sched.n_runs, t_end=sched.t_end))
    tails = [r["tail_beyond_half_spread"] for r in rows]
    arg = int(np.argmax(tails))
    keys = ["N", "tail_beyond_half_spread", "tail_window", "l1_tent", "l1_nlo", "wl1_tent", "wl1_nlo"]
    write_csv(out / "tail_mass.csv", keys + ["argmax"],
              [[r[k] for r in rows] for k in keys] + [[int(i == arg) for i in range(len(rows))]])
    _summary(out, {"argmax_N": rows[arg]["N"]})
    return files + ["tail_mass.csv", "summary.jsonl"]


COMMANDS = {"simulate": cmd_simulate, "lattice": cmd_lattice, "ml-solve": cmd_ml_solve,
            "analytic": cmd_analytic, "compare": cmd_compare, "sweep-n": cmd_sweep_n}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dealermodel", description="Dealer-model simulator and solvers.")
    sub = ap.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="flat key=value file or a previous manifest.json")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        cfg = apply_overrides(parse_config(text), args.set)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        summary = out / "summary.jsonl"
        if summary.exists():
            summary.unlink()
        files = COMMANDS[args.subcommand](cfg, out)
        write_manifest(out, args.subcommand, cfg, files)
    except ToleranceFailure as exc:
        write_manifest(out, args.subcommand, cfg, exc.files)
        print(f"dealermodel: tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (NumericalError, OverflowError) as exc:
        print(f"dealermodel: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ModelError, OSError, UnicodeDecodeError) as exc:
        print(f"dealermodel: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
