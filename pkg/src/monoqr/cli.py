"""Command-line front end.

Subcommands: simulate, transform, fit, bands, coverage, predict, rmise.
Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bands import TAU_GRID, CoverageSettings, coverage_experiment, fit_band, fit_neg_slope_prob, rmise
from .model import Dataset, DomainError
from .model_select import (
    EstimationError,
    FitResult,
    MarginalEstimate,
    default_domain,
    fit_models,
    hb_weights,
    select_eb,
)
from .sampler import ChainConfig, ChainResult, ProposalConfig, write_trace
from .simgen import RNG_NAME, Study1, Study2, generate, true_quantile, true_slope_intercept
from .transforms import (
    Linear,
    apply,
    fit_lognormal,
    parse_transform,
    read_columns,
    read_sidecar,
    write_sidecar,
)

FMT = ".17g"


def _f(v) -> str:
    return format(float(v), FMT)


def _write_csv(path, header, rows) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _f(v) for v in row])


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class RunConfig:
    """Resolved settings for one fit, recorded verbatim in the manifest."""

    m: int = 2
    domain: list = field(default_factory=lambda: default_domain(2))
    iterations: int = 20000
    burn_in: int = 5000
    seed: int = 0
    r: float = 1.1
    adapt: bool = True
    thin: int = 1
    L: int = 5000
    M: int | None = None
    ordinate: str = "max"
    ordinate_r: float | str | None = None
    workers: int = 1
    taus: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    xs: list = field(default_factory=lambda: [0.3, 0.5, 0.7])

    def __post_init__(self):
        if self.m not in (2, 3):
            raise ValueError("degree must be 2 or 3")
        if not self.domain or list(self.domain) != sorted(set(self.domain)):
            raise ValueError("knot-count domain must be nonempty and strictly ascending")


def _domain(args) -> list:
    if args.k:
        return sorted(set(args.k))
    lo = args.k_min if args.k_min is not None else default_domain(args.m)[0]
    hi = args.k_max if args.k_max is not None else default_domain(args.m)[-1]
    return list(range(lo, hi + 1))


def _width(text: str):
    if text == "auto":
        return "auto"
    if text == "chain":
        return None
    v = float(text)
    if not v > 1:
        raise argparse.ArgumentTypeError("width must exceed 1")
    return v


def _truth(args):
    if args.study == 1:
        return Study1(args.A, args.B)
    return Study2()


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    data = generate(_truth(args), args.n, args.seed)
    if args.output:
        data.to_csv(args.output)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["x", "y"])
        for xi, yi in zip(data.x, data.y):
            w.writerow([_f(xi), _f(yi)])
    return 0


# --------------------------------------------------------------- transform


def _build_transforms(raw_x, raw_y, x_spec, y_spec, per_x: bool):
    if x_spec is None:
        xt = Linear(float(raw_x.min()), float(raw_x.max()))
    else:
        xt = parse_transform(x_spec)
        if xt == "lognormal":
            xt = fit_lognormal(raw_x)
    if y_spec is None:
        y_spec = "lognormal"
    yt = parse_transform(y_spec)
    if yt == "lognormal":
        if per_x:
            yt = {float(v): fit_lognormal(raw_y[raw_x == v]) for v in np.unique(raw_x)}
        else:
            yt = fit_lognormal(raw_y)
    return xt, yt


def _forward_y(yt, raw_x, raw_y):
    if isinstance(yt, dict):
        out = np.empty_like(raw_y)
        for v, t in yt.items():
            sel = raw_x == v
            out[sel] = t.forward(raw_y[sel])
        return out
    return apply(yt, raw_y, "forward")


def _parse_where(items) -> dict:
    out = {}
    for it in items or []:
        key, sep, val = it.partition("=")
        if not sep:
            raise ValueError(f"--where expects COL=VALUE, got {it!r}")
        out[key] = val
    return out


def _transform_raw(args):
    cols = read_columns(args.input, [args.x_col, args.y_col], _parse_where(args.where))
    raw_x, raw_y = cols[args.x_col], cols[args.y_col]
    if len(raw_x) == 0:
        raise ValueError("no rows selected")
    xt, yt = _build_transforms(raw_x, raw_y, args.x_transform, args.y_transform, args.fit_per_x)
    data = Dataset(apply(xt, raw_x, "forward"), _forward_y(yt, raw_x, raw_y))
    return data, xt, yt


def cmd_transform(args) -> int:
    data, xt, yt = _transform_raw(args)
    data.to_csv(args.output)
    sidecar = args.sidecar or str(args.output) + ".json"
    write_sidecar(sidecar, xt, yt, {"source": str(args.input), "x_col": args.x_col, "y_col": args.y_col})
    return 0


# --------------------------------------------------------------------- fit


def _config_from_args(args) -> RunConfig:
    domain = _domain(args)
    workers = args.workers or min(len(domain), os.cpu_count() or 1)
    return RunConfig(
        m=args.m,
        domain=domain,
        iterations=args.iterations,
        burn_in=args.burn_in,
        seed=args.seed,
        r=args.r,
        adapt=not args.fixed_r,
        thin=args.thin,
        L=args.L,
        M=args.M,
        ordinate=args.ordinate_point,
        ordinate_r=args.ordinate_r,
        workers=workers,
        taus=args.tau or [0.25, 0.5, 0.75],
        xs=args.x or [0.3, 0.5, 0.7],
    )


def run_fit(data: Dataset, cfg: RunConfig) -> FitResult:
    return fit_models(
        data,
        m=cfg.m,
        domain=cfg.domain,
        iterations=cfg.iterations,
        burn_in=cfg.burn_in,
        seed=cfg.seed,
        proposal=ProposalConfig(r=cfg.r, adapt=cfg.adapt),
        thin=cfg.thin,
        L=cfg.L,
        M=cfg.M,
        ordinate=cfg.ordinate,
        workers=cfg.workers,
        ordinate_r=cfg.ordinate_r,
    )


def save_fit(fit: FitResult, cfg: RunConfig, out: Path, trace: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    fit.data.to_csv(out / "data.csv")
    w = fit.weights
    rows = []
    for k in fit.domain:
        e, c = fit.estimates[k], fit.chains[k]
        rows.append(
            {
                "k": k,
                "log_marginal": e.log_marginal,
                "weight": w[k],
                "log_likelihood": e.log_likelihood,
                "log_prior": e.log_prior,
                "log_ordinate": e.log_ordinate,
                "acceptance": c.acceptance,
                "r": c.r,
                "M": e.M,
                "L": e.L,
                "ordinate_r": e.r,
            }
        )
    _write_csv(out / "selection.csv", list(rows[0]), [[r[c] if c != "k" else str(r[c]) for c in r] for r in rows])
    _write_json(out / "selection.json", {"k_eb": fit.k_eb, "models": rows})

    coefs = {
        str(k): {"theta": fit.chains[k].theta_mean.tolist(), "phi": fit.chains[k].phi_mean.tolist()}
        for k in fit.domain
    }
    _write_json(out / "coefficients.json", {"m": fit.m, "k_eb": fit.k_eb, "weights": dict(zip(map(str, fit.domain), w.weights.tolist())), "mean_coefficients": coefs})

    tau = TAU_GRID
    header, cols = ["tau"], [tau]
    for method in ("hb", "eb"):
        xi1, xi2 = fit.xi_curves(tau, method)
        header += [f"xi1_{method}", f"xi2_{method}", f"intercept_{method}", f"slope_{method}"]
        cols += [xi1, xi2, xi2, xi1 - xi2]
    header.append("neg_slope_prob_hb")
    cols.append(fit_neg_slope_prob(fit, tau, "hb"))
    _write_csv(out / "curves.csv", header, np.column_stack(cols))

    header, cols = ["tau"], [tau]
    for x in cfg.xs:
        for method in ("hb", "eb"):
            header.append(f"q_{method}_x{x!r}")
            cols.append(fit.quantile(tau, x, method))
    _write_csv(out / "qrf_by_x.csv", header, np.column_stack(cols))

    xg = TAU_GRID
    header, cols = ["x"], [xg]
    for t in cfg.taus:
        for method in ("hb", "eb"):
            xi1, xi2 = fit.xi_curves(np.array([t]), method)
            header.append(f"q_{method}_tau{t!r}")
            cols.append(xg * xi1[0] + (1 - xg) * xi2[0])
    _write_csv(out / "qrf_by_tau.csv", header, np.column_stack(cols))

    arrays = {}
    for k in fit.domain:
        c = fit.chains[k]
        arrays[f"gammas_{k}"] = c.gammas
        arrays[f"deltas_{k}"] = c.deltas
        arrays[f"loglik_{k}"] = c.loglik
        arrays[f"iteration_{k}"] = c.iteration
        if trace:
            write_trace(c, out / f"trace_k{k}.csv")
    np.savez(out / "samples.npz", **arrays)

    manifest = {
        "package": "monoqr",
        "version": __version__,
        "rng": RNG_NAME,
        "n": fit.data.n,
        "config": asdict(cfg),
        "chain_seeds": {str(k): [cfg.seed, k] for k in fit.domain},
        "chib_seeds": {str(k): [cfg.seed, k, 1] for k in fit.domain},
        "acceptance": {str(k): fit.chains[k].acceptance for k in fit.domain},
        "final_r": {str(k): fit.chains[k].r for k in fit.domain},
        "log_marginal": {str(k): fit.estimates[k].log_marginal for k in fit.domain},
        "weights": {str(k): w[k] for k in fit.domain},
        "k_eb": fit.k_eb,
        "outputs": ["data.csv", "selection.csv", "selection.json", "coefficients.json", "curves.csv",
                    "qrf_by_x.csv", "qrf_by_tau.csv", "samples.npz"],
    }
    _write_json(out / "manifest.json", manifest)


def load_fit(fit_dir) -> tuple[FitResult, RunConfig]:
    d = Path(fit_dir)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"missing manifest: {mpath}")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    cfg = RunConfig(**manifest["config"])
    data = Dataset.from_csv(d / "data.csv")
    sel = json.loads((d / "selection.json").read_text(encoding="utf-8"))
    arrays = np.load(d / "samples.npz")
    chains, estimates = {}, {}
    for row in sel["models"]:
        k = int(row["k"])
        cc = ChainConfig(k=k, m=cfg.m, iterations=cfg.iterations, burn_in=cfg.burn_in, seed=cfg.seed, thin=cfg.thin)
        chains[k] = ChainResult(
            cc,
            arrays[f"gammas_{k}"],
            arrays[f"deltas_{k}"],
            arrays[f"loglik_{k}"],
            arrays[f"iteration_{k}"],
            row["acceptance"],
            row["r"],
        )
        estimates[k] = MarginalEstimate(
            k, row["log_marginal"], row["log_likelihood"], row["log_prior"], row["log_ordinate"], (), row["M"], row["L"],
            row["ordinate_r"],
        )
    weights = hb_weights(estimates.values())
    return FitResult(data, chains, estimates, weights, select_eb(estimates.values())), cfg


def cmd_fit(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.output_dir)
    if args.input is not None:
        data, xt, yt = _transform_raw(args)
    else:
        data = Dataset.from_csv(args.data, args.x_col, args.y_col)
        xt = yt = None
    fit = run_fit(data, cfg)
    save_fit(fit, cfg, out, trace=args.trace)
    if xt is not None:
        write_sidecar(out / "transform.json", xt, yt, {"source": str(args.input)})
    return 0


# ------------------------------------------------------------------- bands


def cmd_bands(args) -> int:
    fit, cfg = load_fit(args.fit_dir)
    out = Path(args.output_dir or args.fit_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"method": args.method, "level": args.level, "n": fit.data.n, "bands": []}
    for x in args.x:
        b = fit_band(fit, x, args.method, TAU_GRID, args.level)
        name = f"band_{args.method}_x{x!r}.csv"
        b.to_csv(out / name)
        summary["bands"].append(
            {"x": x, "radius": b.radius, "inflated_radius": b.inflated_radius, "file": name}
        )
    _write_json(out / f"bands_{args.method}.json", summary)
    return 0


# ---------------------------------------------------------------- coverage


def cmd_coverage(args) -> int:
    domain = _domain(args)
    settings = CoverageSettings(
        m=args.m,
        domain=tuple(domain),
        iterations=args.iterations,
        burn_in=args.burn_in,
        L=args.L,
        level=args.level,
        r=args.r,
        adapt=not args.fixed_r,
    )
    report = coverage_experiment(
        _truth(args),
        args.n,
        args.replications,
        args.method,
        xs=args.x or [0.2, 0.5, 0.7],
        settings=settings,
        seed=args.seed,
        workers=args.workers,
    )
    if args.output:
        _write_json(args.output, report)
    else:
        print(json.dumps(report, indent=2, sort_keys=True))
    return 0


# ----------------------------------------------------------------- predict


def _inverse_y(yt, raw_x, u):
    if isinstance(yt, dict):
        if raw_x not in yt:
            raise ValueError(f"no fitted response transform for x={raw_x!r}")
        return yt[raw_x].inverse(u)
    return apply(yt, u, "inverse")


def cmd_predict(args) -> int:
    fit, cfg = load_fit(args.fit_dir)
    if args.identity:
        xt = yt = Linear(0.0, 1.0)
    else:
        side = Path(args.sidecar) if args.sidecar else Path(args.fit_dir) / "transform.json"
        if not side.exists():
            raise FileNotFoundError(f"missing transform sidecar {side}; pass --identity for unit-scale data")
        xt, yt = read_sidecar(side)
    rows = []
    taus = np.asarray(args.tau, dtype=float)
    for raw_x in args.x:
        x_unit = float(apply(xt, np.array([raw_x]), "forward")[0])
        q_unit = np.clip(fit.quantile(taus, x_unit, args.method), 0.0, 1.0)
        for t, qu in zip(taus, q_unit):
            q = _inverse_y(yt, float(raw_x), np.array([qu]))[0] if 0 < qu < 1 else _edge(yt, raw_x, qu)
            rows.append([raw_x, t, x_unit, qu, q])
    header = ["x", "tau", "x_unit", "q_unit", "q"]
    if args.output:
        _write_csv(args.output, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_f(v) for v in r])
    return 0


def _edge(yt, raw_x, qu):
    t = yt[float(raw_x)] if isinstance(yt, dict) else yt
    if isinstance(t, Linear):
        return float(t.inverse(qu))
    return 0.0 if qu <= 0 else float("inf")


# ------------------------------------------------------------------- rmise


def cmd_rmise(args) -> int:
    fit, cfg = load_fit(args.fit_dir)
    truth = _truth(args)
    tau = TAU_GRID
    b0, b1 = fit.slope_intercept(tau, args.method)
    t0, t1 = true_slope_intercept(truth, tau)
    report = {
        "method": args.method,
        "intercept": rmise(b0, t0),
        "slope": rmise(b1, t1),
        "qrf_x": {},
        "qrf_tau": {},
    }
    for x in args.x or [0.3, 0.5, 0.7]:
        report["qrf_x"][repr(float(x))] = rmise(fit.quantile(tau, x, args.method), true_quantile(truth, tau, x))
    xg = TAU_GRID
    for t in args.tau or [0.25, 0.5, 0.75]:
        xi1, xi2 = fit.xi_curves(np.array([t]), args.method)
        est = xg * xi1[0] + (1 - xg) * xi2[0]
        report["qrf_tau"][repr(float(t))] = rmise(est, true_quantile(truth, t, xg))
    if args.output:
        _write_json(args.output, report)
    else:
        print(json.dumps(report, indent=2, sort_keys=True))
    return 0


# ------------------------------------------------------------------ parser


def _add_truth(p):
    p.add_argument("--study", type=int, choices=(1, 2), required=True)
    p.add_argument("--A", type=float, default=0.3)
    p.add_argument("--B", type=float, default=0.6)


def _add_chain(p):
    p.add_argument("--m", type=int, choices=(2, 3), default=2, help="spline degree")
    p.add_argument("--k", type=int, nargs="+", help="explicit knot counts")
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r", type=float, default=1.1, help="initial (or fixed) proposal width")
    p.add_argument("--fixed-r", action="store_true", help="disable burn-in adaptation of r")
    p.add_argument("--L", type=int, default=5000, help="proposal draws in the ordinate denominator")
    p.add_argument("--workers", type=int)


def _add_raw_input(p):
    p.add_argument("--x-col", default="x")
    p.add_argument("--y-col", default="y")
    p.add_argument("--x-transform", help="linear:LO,HI | identity (default: linear over the data range)")
    p.add_argument("--y-transform", help="pareto:A,SIGMA,K | lognormal[:MU,S] | linear:LO,HI | identity")
    p.add_argument("--where", action="append", help="keep only rows with COL=VALUE (repeatable)")
    p.add_argument("--fit-per-x", action="store_true", help="fit a log-normal per distinct x value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monoqr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulation-study dataset")
    _add_truth(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("transform", help="map raw CSV columns to the unit square")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--sidecar", help="transform record (default: OUTPUT.json)")
    _add_raw_input(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("fit", help="run the per-k chains and model selection")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV already on the unit square")
    src.add_argument("--input", help="raw CSV, transformed with --x-transform/--y-transform")
    _add_raw_input(p)
    _add_chain(p)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--M", type=int, help="stored samples used in the ordinate numerator (default all)")
    p.add_argument("--ordinate-point", choices=("max", "last", "mean"), default="max",
                   help="highest-likelihood stored state, final stored state, or posterior-mean spacings")
    p.add_argument("--ordinate-r", type=_width, default=None,
                   help="ordinate-estimator width: chain (default), auto, or a number > 1")
    p.add_argument("--tau", type=float, nargs="+", help="tau values for Q(tau|x) over x")
    p.add_argument("--x", type=float, nargs="+", help="x values for Q(tau|x) over tau")
    p.add_argument("--trace", action="store_true", help="also write per-k chain traces")
    p.add_argument("--output-dir", "-o", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bands", help="uniform credible bands from a fit directory")
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--x", type=float, nargs="+", default=[0.2, 0.5, 0.7])
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--method", choices=("hb", "eb"), default="hb")
    p.add_argument("--output-dir", "-o")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("coverage", help="repeated simulate/fit/band coverage study")
    _add_truth(p)
    _add_chain(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replications", type=int, default=1000)
    p.add_argument("--method", choices=("hb", "eb"), default="hb")
    p.add_argument("--x", type=float, nargs="+")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("predict", help="quantile estimates on the original scale")
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--x", type=float, nargs="+", required=True, help="predictor values (raw scale)")
    p.add_argument("--tau", type=float, nargs="+", required=True)
    p.add_argument("--method", choices=("hb", "eb"), default="hb")
    p.add_argument("--sidecar", help="transform record (default: FIT_DIR/transform.json)")
    p.add_argument("--identity", action="store_true", help="data were already on the unit square")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rmise", help="RMISE of a fit against a simulation truth")
    p.add_argument("--fit-dir", required=True)
    _add_truth(p)
    p.add_argument("--method", choices=("hb", "eb"), default="hb")
    p.add_argument("--x", type=float, nargs="+")
    p.add_argument("--tau", type=float, nargs="+")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_rmise)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, EstimationError, DomainError) as exc:
        print(f"monoqr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
