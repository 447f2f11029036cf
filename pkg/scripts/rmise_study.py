"""RMISE of EB and HB fits over repeated simulated datasets.

    python3 scripts/rmise_study.py --study 1 --n 100 --replications 20 --m 2
"""

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from monoqr.bands import TAU_GRID, rmise
from monoqr.model_select import fit_models
from monoqr.simgen import Study1, Study2, generate, true_quantile, true_slope_intercept


@dataclass
class StudyConfig:
    study: int = 1
    n: int = 100
    replications: int = 20
    m: int = 2
    seed: int = 0
    iterations: int = 20000
    burn_in: int = 5000
    xs: tuple = (0.3, 0.5, 0.7)


def run(cfg: StudyConfig) -> dict:
    truth = Study1() if cfg.study == 1 else Study2()
    t0, t1 = true_slope_intercept(truth, TAU_GRID)
    rows = {method: [] for method in ("eb", "hb")}
    for i in range(cfg.replications):
        data = generate(truth, cfg.n, cfg.seed + i)
        fit = fit_models(data, m=cfg.m, iterations=cfg.iterations, burn_in=cfg.burn_in, seed=cfg.seed + i)
        for method in rows:
            b0, b1 = fit.slope_intercept(TAU_GRID, method)
            row = {"intercept": rmise(b0, t0), "slope": rmise(b1, t1)}
            for x in cfg.xs:
                row[f"qrf_x{x}"] = rmise(fit.quantile(TAU_GRID, x, method), true_quantile(truth, TAU_GRID, x))
            rows[method].append(row)
        print(f"replication {i + 1}/{cfg.replications}: HB QRF(0.5) {rows['hb'][-1].get('qrf_x0.5', np.nan):.4f}", flush=True)
    summary = {
        method: {key: float(np.mean([r[key] for r in rs])) for key in rs[0]} for method, rs in rows.items()
    }
    return {"config": asdict(cfg), "mean_rmise": summary}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f in StudyConfig.__dataclass_fields__.values():
        if f.name != "xs":
            p.add_argument(f"--{f.name.replace('_', '-')}", type=type(f.default), default=f.default)
    p.add_argument("--output")
    args = p.parse_args()
    cfg = StudyConfig(**{k: v for k, v in vars(args).items() if k != "output"})
    report = run(cfg)
    text = json.dumps(report, indent=2)
    print(text)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")


if __name__ == "__main__":
    main()
