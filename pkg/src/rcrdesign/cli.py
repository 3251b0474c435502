"""Command-line interface.

Exit codes: 0 success, 1 check failure, 2 invalid input, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import criteria, oracle
from .criteria import CriterionKind, SweepConfig
from .exceptions import RCRError
from .model import (
    ExactDesign,
    ModelParams,
    blue_alpha0,
    blup_alpha,
    mse_matrix_alpha,
    read_observations_csv,
    var_blue_alpha0,
    write_observations_csv,
)
from .simulation import SimulationSpec, simulate_dataset, validate

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3
ORACLE_THRESHOLD = 1e-8
FIGURE_QS = (3.0, 1.0, 0.3)
FIGURE_FILES = {
    ("pred-a", "w_star"): "figure1_A_w_star.csv",
    ("pred-d", "w_star"): "figure2_D_w_star.csv",
    ("pred-a", "eff"): "figure3_A_efficiency.csv",
    ("pred-d", "eff"): "figure4_D_efficiency.csv",
}
PARAM_KEYS = ("sigma1_sq", "sigma2_sq", "u", "v", "q", "rho", "K", "N")
DEFAULTS = {"sigma1_sq": 1.0, "sigma2_sq": 1.0, "K": 5, "N": 60}


class IOFailure(Exception):
    pass


@dataclass
class RunConfig:
    """Model parameters plus command options, merged from a JSON file and flags."""

    sigma1_sq: float = 1.0
    sigma2_sq: float = 1.0
    u: float | None = None
    v: float | None = None
    q: float | None = None
    rho: float | None = None
    K: int = 5
    N: int = 60
    options: dict = field(default_factory=dict)
    explicit: frozenset = frozenset()

    @classmethod
    def from_args(cls, args):
        merged = dict(DEFAULTS)
        if getattr(args, "config", None):
            try:
                with open(args.config) as fh:
                    loaded = json.load(fh)
            except OSError as exc:
                raise IOFailure(f"cannot read config {args.config}: {exc}") from None
            except json.JSONDecodeError as exc:
                raise RCRError(f"config {args.config} is not valid JSON: {exc}") from None
            if not isinstance(loaded, dict):
                raise RCRError("config file must hold a JSON object")
            merged.update(loaded)
            explicit = set(loaded)
        else:
            explicit = set()
        for key, value in vars(args).items():
            if value is not None and key not in ("config", "func", "command"):
                merged[key] = value
                explicit.add(key)
        params = {k: merged.pop(k) for k in PARAM_KEYS if k in merged}
        return cls(**params, options=merged, explicit=frozenset(explicit & set(PARAM_KEYS)))

    def has_dispersions(self):
        return any(x is not None for x in (self.u, self.v, self.q, self.rho))

    def params(self):
        """Resolve to ModelParams; exactly one of (u, v) or (q, rho) is allowed."""
        direct = self.u is not None or self.v is not None
        ratio = self.q is not None or self.rho is not None
        if direct and ratio:
            raise RCRError("give either u and v or q and rho, not both")
        if direct:
            if self.u is None or self.v is None:
                raise RCRError(f"{'v' if self.v is None else 'u'} is required together with "
                               f"{'u' if self.v is None else 'v'}")
            return ModelParams(self.sigma1_sq, self.sigma2_sq, self.u, self.v, self.K, self.N)
        if ratio:
            if self.q is None or self.rho is None:
                raise RCRError(f"{'rho' if self.rho is None else 'q'} is required together with "
                               f"{'q' if self.rho is None else 'rho'}")
            return ModelParams.from_ratio(
                self.q, self.rho, sigma1_sq=self.sigma1_sq, sigma2_sq=self.sigma2_sq, K=self.K, N=self.N
            )
        raise RCRError("u and v (or q and rho) are required")

    def opt(self, name, default=None):
        value = self.options.get(name)
        return default if value is None else value


def _threads(cfg):
    value = cfg.opt("threads") or os.environ.get("RCR_THREADS")
    if value is None:
        return os.cpu_count() or 1
    try:
        value = int(value)
    except ValueError:
        raise RCRError(f"threads must be an integer, got {value!r}") from None
    if value < 1:
        raise RCRError(f"threads must be >= 1, got {value}")
    return value


def _emit(payload):
    print(json.dumps(payload, indent=2))


def _write_json(path, payload):
    try:
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from None


def cmd_criterion(cfg):
    params = cfg.params()
    kind = CriterionKind.parse(cfg.opt("kind"))
    w = cfg.opt("w")
    if w is None:
        raise RCRError("w is required")
    w = float(w)
    value = criteria.criterion(kind, w, params)
    out = {"criterion": kind.value, "w": w, "value": value}
    status = EXIT_OK
    if cfg.opt("check_oracle"):
        n1 = round(w * params.N)
        if abs(n1 - w * params.N) > 1e-9 or not 1 <= n1 < params.N:
            raise RCRError(f"w * N = {w * params.N:g} must be an integer group size for the oracle check")
        design = ExactDesign(n1, params.N - n1)
        model = oracle.assemble(params, design)
        joint = oracle.joint_mse(model)
        if kind is CriterionKind.EstimationA:
            closed = params.K * params.N * var_blue_alpha0(params, design)
            ref = params.K * params.N * (joint.C11[0, 0] + joint.C11[1, 1])
        else:
            dense = oracle.alpha_mse_from_theta(oracle.theta_mse(joint, design))
            if kind is CriterionKind.PredictionA:
                closed = params.K * mse_matrix_alpha(params, design).trace()
                ref = params.K * np.trace(dense)
            else:
                closed = mse_matrix_alpha(params, design).logdet()
                ref = np.linalg.slogdet(dense)[1]
        rel = abs(value - ref) / max(abs(ref), 1e-300)
        passed = rel <= ORACLE_THRESHOLD and abs(closed - ref) <= ORACLE_THRESHOLD * max(abs(ref), 1.0)
        out["oracle"] = {
            "n1": design.n1, "n2": design.n2, "closed_form": float(closed), "oracle": float(ref),
            "rel_deviation": float(rel), "passed": bool(passed),
        }
        status = EXIT_OK if passed else EXIT_CHECK
    _emit(out)
    return status


def cmd_optimize(cfg):
    params = cfg.params()
    kind = CriterionKind.parse(cfg.opt("kind"))
    res = criteria.minimize_criterion(kind, params, tol=float(cfg.opt("tol", 1e-10)), method=cfg.opt("method", "auto"))
    design = criteria.round_to_exact(res.w_star, params.N, kind=kind, params=params)
    _emit({
        "criterion": kind.value,
        "w_star": res.w_star,
        "n1": design.n1,
        "n2": design.n2,
        "method": res.method,
        "criterion_value": res.criterion_value,
        "eff_balanced": criteria.efficiency(kind, 0.5, params, w_star=res.w_star),
        "iterations": res.iterations,
        "achieved_tol": res.achieved_tol,
    })
    return EXIT_OK


def _rho_grid(cfg, figures):
    start, stop, step = (cfg.opt("rho_start"), cfg.opt("rho_stop"), cfg.opt("rho_step"))
    if start is None and stop is None and step is None:
        grid = list(criteria.default_rho_grid())
        return grid + [0.999] if figures else grid
    start = 0.005 if start is None else float(start)
    stop = 0.995 if stop is None else float(stop)
    step = 0.005 if step is None else float(step)
    if step <= 0:
        raise RCRError("rho_step must be > 0")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return list(np.round(start + step * np.arange(count), 12))


def _base_params(cfg):
    return ModelParams(cfg.sigma1_sq, cfg.sigma2_sq, 1.0, 1.0, cfg.K, cfg.N)


def _write_rows(rows, path):
    try:
        criteria.write_sweep_csv(rows, path)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from None


def cmd_sweep(cfg):
    threads = _threads(cfg)
    base = _base_params(cfg)
    if cfg.opt("figures"):
        if base.sigma1_sq != base.sigma2_sq:
            raise RCRError("figure mode requires sigma1_sq == sigma2_sq")
        out_dir = Path(cfg.opt("output_dir", "."))
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IOFailure(f"cannot create {out_dir}: {exc}") from None
        grid = _rho_grid(cfg, figures=True)
        written = []
        for kind in ("pred-a", "pred-d"):
            rows = []
            for q in FIGURE_QS:
                rows.extend(criteria.sweep(SweepConfig(q, grid, base), kind, threads=threads))
            for what in ("w_star", "eff"):
                path = out_dir / FIGURE_FILES[(kind, what)]
                _write_rows(rows, path)
                written.append(str(path))
        _emit({"files": written, "rows_per_q": len(grid)})
        return EXIT_OK

    q = cfg.q if cfg.q is not None else cfg.opt("q")
    if q is None:
        raise RCRError("q is required for a sweep")
    output = cfg.opt("output")
    if output is None:
        raise RCRError("output is required (or use --figures)")
    kind = CriterionKind.parse(cfg.opt("kind"))
    rows = criteria.sweep(SweepConfig(float(q), _rho_grid(cfg, figures=False), base), kind, threads=threads)
    _write_rows(rows, output)
    errors = [r for r in rows if r.error]
    _emit({"file": str(output), "rows": len(rows), "row_errors": len(errors)})
    return EXIT_OK


def cmd_oracle_check(cfg):
    overrides = {}
    for key in ("sigma1_sq", "sigma2_sq", "u", "v"):
        if key in cfg.explicit:
            overrides[key] = getattr(cfg, key)
    for key in ("u", "v"):
        if key in overrides and not overrides[key] > 0:
            raise RCRError("oracle requires positive dispersions")
    for key in ("sigma1_sq", "sigma2_sq"):
        if key in overrides and not overrides[key] > 0:
            raise RCRError(f"{key} must be > 0, got {overrides[key]!r}")
    report = oracle.equivalence_sweep(
        max_size=int(cfg.opt("max_size", 4)),
        draws=int(cfg.opt("draws", 20)),
        seed=int(cfg.opt("seed", 20240601)),
        overrides=overrides,
        include_det=bool(cfg.opt("include_det")),
    )
    worst = max(report["max_rel_deviation"].values())
    passed = worst <= ORACLE_THRESHOLD
    if "det_offset" in report:
        passed = passed and report["det_offset"]["max_abs"] <= ORACLE_THRESHOLD
    report["threshold"] = ORACLE_THRESHOLD
    report["passed"] = bool(passed)
    _emit(report)
    return EXIT_OK if passed else EXIT_CHECK


def _sim_spec(cfg, replications):
    params = cfg.params()
    n1 = int(cfg.opt("n1", params.N // 2))
    if not 1 <= n1 < params.N:
        raise RCRError(f"n1 must lie in [1, {params.N - 1}], got {n1}")
    return SimulationSpec(
        params=params,
        design=ExactDesign(n1, params.N - n1),
        theta0=(float(cfg.opt("mu1", 0.0)), float(cfg.opt("mu2", 0.0))),
        replications=replications,
        seed=int(cfg.opt("seed", 0)),
    )


def cmd_simulate(cfg):
    spec = _sim_spec(cfg, replications=1)
    replicate = int(cfg.opt("replicate", 0))
    if replicate < 0:
        raise RCRError("replicate must be >= 0")
    output = cfg.opt("output")
    if output is None:
        raise RCRError("output is required")
    sidecar = cfg.opt("sidecar") or str(Path(output).with_suffix(".json"))
    data, alpha = simulate_dataset(spec, replicate)
    try:
        write_observations_csv(data, output)
    except OSError as exc:
        raise IOFailure(f"cannot write {output}: {exc}") from None
    _write_json(sidecar, {
        "seed": spec.seed,
        "replicate_index": replicate,
        "params": asdict(spec.params),
        "n1": spec.design.n1,
        "n2": spec.design.n2,
        "theta0": list(spec.theta0),
        "alpha0_true": spec.alpha0,
        "alpha_true": alpha.tolist(),
    })
    _emit({"data": str(output), "sidecar": str(sidecar)})
    return EXIT_OK


def cmd_estimate(cfg, path=None):
    path = path or cfg.opt("path")
    try:
        data = read_observations_csv(path)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from None
    if not cfg.has_dispersions():
        raise RCRError("u and v (or q and rho) are required")
    cfg.K, cfg.N = data.K, max(data.N, 2)
    params = cfg.params()
    _emit({
        "n1": data.n1,
        "n2": data.n2,
        "K": data.K,
        "alpha0_hat": blue_alpha0(data),
        "alpha_hat": blup_alpha(data, params).tolist(),
    })
    return EXIT_OK


def cmd_validate(cfg):
    if cfg.opt("estimate"):
        return cmd_estimate(cfg, cfg.opt("estimate"))
    spec = _sim_spec(cfg, replications=int(cfg.opt("replications", 100_000)))
    report = validate(spec, z=float(cfg.opt("z", 4.0)), threads=_threads(cfg))
    _emit(report.to_dict())
    return EXIT_OK if report.passed else EXIT_CHECK


def _add_param_flags(p):
    p.add_argument("--config", help="JSON file with parameters and options; flags override it")
    p.add_argument("--sigma1-sq", dest="sigma1_sq", type=float)
    p.add_argument("--sigma2-sq", dest="sigma2_sq", type=float)
    p.add_argument("--u", type=float, help="group-1 dispersion")
    p.add_argument("--v", type=float, help="group-2 dispersion")
    p.add_argument("--q", type=float, help="dispersion ratio u/v")
    p.add_argument("--rho", type=float, help="rescaled dispersion u/(1+u)")
    p.add_argument("--K", dest="K", type=int, help="observations per individual")
    p.add_argument("--N", dest="N", type=int, help="total individuals")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rcr-design",
        description="Optimal group allocation in two-group random coefficient regression models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in CriterionKind]

    p = sub.add_parser("criterion", help="evaluate a design criterion at an allocation rate")
    _add_param_flags(p)
    p.add_argument("--kind", choices=kinds)
    p.add_argument("--w", type=float)
    p.add_argument("--check-oracle", dest="check_oracle", action="store_true", default=None)
    p.set_defaults(func=cmd_criterion)

    p = sub.add_parser("optimize", help="optimal allocation rate and group sizes")
    _add_param_flags(p)
    p.add_argument("--kind", choices=kinds)
    p.add_argument("--tol", type=float)
    p.add_argument("--method", choices=["auto", "golden_section", "closed_form"])
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="optimal rates and balanced-design efficiency over a rho grid")
    _add_param_flags(p)
    p.add_argument("--kind", choices=kinds)
    p.add_argument("--output", help="CSV output path")
    p.add_argument("--figures", action="store_true", default=None,
                   help="write the four figure data files for q in {3, 1, 0.3}")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--rho-start", dest="rho_start", type=float)
    p.add_argument("--rho-stop", dest="rho_stop", type=float)
    p.add_argument("--rho-step", dest="rho_step", type=float)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="compare closed forms with the mixed-model oracle")
    _add_param_flags(p)
    p.add_argument("--include-det", dest="include_det", action="store_true", default=None)
    p.add_argument("--max-size", dest="max_size", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_oracle_check)

    for name, func, help_ in (
        ("simulate", cmd_simulate, "draw one synthetic dataset"),
        ("validate", cmd_validate, "Monte Carlo check of the variance and MSE formulas"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_param_flags(p)
        p.add_argument("--n1", type=int, help="group-1 size (default N // 2)")
        p.add_argument("--mu1", type=float)
        p.add_argument("--mu2", type=float)
        p.add_argument("--seed", type=int)
        p.set_defaults(func=func)
        if name == "simulate":
            p.add_argument("--replicate", type=int)
            p.add_argument("--output", help="CSV output path")
            p.add_argument("--sidecar", help="JSON sidecar path (default: output with .json suffix)")
        else:
            p.add_argument("--replications", type=int)
            p.add_argument("--z", type=float)
            p.add_argument("--threads", type=int)
            p.add_argument("--estimate", metavar="PATH", help="predict from a dataset CSV instead")

    p = sub.add_parser("estimate", help="BLUE and BLUPs for a dataset CSV")
    _add_param_flags(p)
    p.add_argument("path")
    p.set_defaults(func=cmd_estimate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        return args.func(cfg)
    except IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RCRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
