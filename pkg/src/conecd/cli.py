"""Command-line driver: ``conecd <task> --config path.json [--out dir]``.

Exit status: 0 when the run completes (CD violations are results, not
errors), 2 for configuration errors, 3 for numerical failures.  Reports are
written only after the task has finished, so a failed run leaves no files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import TASKS, ExperimentConfig, MeasureModel, json_schema
from .errors import ConfigError, DomainError, NumericalFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


# -- helpers ------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def _descriptor(model, scale: int = 1):
    from .metric_space import ManifoldDescriptor

    d = model.model_dump()
    return ManifoldDescriptor.from_dict(_scale_desc(d, scale))


def _scale_desc(d: dict, scale: int) -> dict:
    d = dict(d)
    if d["kind"] == "product":
        d["factors"] = [_scale_desc(f, scale) for f in d["factors"]]
    else:
        d["resolution"] = d["resolution"] * scale
    return d


def _space(cfg: ExperimentConfig, scale: int = 1):
    """Base space and, when configured, the cone over it."""
    from .cones import cone_from_config
    from .metric_space import build_space

    if cfg.base is None:
        raise ConfigError("this task needs a 'base' descriptor")
    base = build_space(_descriptor(cfg.base, scale))
    if cfg.cone is None:
        return base, None
    cone_cfg = cfg.cone.model_dump(exclude_none=True)
    if isinstance(cone_cfg.get("kind"), dict):
        cone_cfg["kind"] = {"kappa": cone_cfg["kind"]["kappa"]}
    cone_cfg["radial_cells"] = cone_cfg.get("radial_cells", 16) * scale
    cone = cone_from_config(base, cone_cfg)
    return cone.as_mms, cone


def _center(m: MeasureModel, space, cone, scale: int) -> int:
    c = m.center
    if isinstance(c, int):
        idx = c * scale
    else:
        if cone is None:
            raise ConfigError("cell references by (base_index, r) need a cone")
        b = c.base_index * scale
        live = np.nonzero(cone.base_of == b)[0]
        if live.size == 0:
            raise ConfigError(f"base index {c.base_index} out of range")
        idx = int(live[np.argmin(np.abs(cone.radius_of[live] - c.r))]) if c.r > 0 else 0
    if not 0 <= idx < space.n_points:
        raise ConfigError(f"center index {idx} out of range")
    return idx


def _measure(m: MeasureModel | None, space, cone, scale: int = 1):
    from .metric_space import DiscreteMeasure

    if m is None:
        raise ConfigError("this task needs measures mu0 and mu1")
    if m.type == "uniform":
        if m.cells is None:
            return DiscreteMeasure.uniform(space, space.weight > 0)
        mask = np.zeros(space.n_points, dtype=bool)
        mask[np.asarray(m.cells) * scale] = True
        return DiscreteMeasure.uniform(space, mask)
    i = _center(m, space, cone, scale)
    if m.type == "dirac":
        return DiscreteMeasure.dirac(space, i)
    f = np.exp(-space.dist[i] ** 2 / (2 * m.sigma**2))
    f = np.where(space.weight > 0, f, 0.0)
    return DiscreteMeasure.from_density(space, f)


# -- tasks --------------------------------------------------------------------


def task_validate(cfg, files):
    from .metric_space import export_csv, validate_metric

    space, cone = _space(cfg)
    rep = validate_metric(space)
    files["csv"] = lambda out: export_csv(space, out)
    return {
        "n_points": space.n_points,
        "diameter": space.diameter,
        "total_weight": space.total_weight,
        "ok": rep.ok,
        "violations": {
            "symmetry": rep.symmetry, "triangle": rep.triangle, "diagonal": rep.diagonal,
            "negative": rep.negative, "weights": rep.weights, "diameter": rep.diameter,
        },
    }


def task_ot(cfg, files):
    from .transport import apex_mass, check_cyclic_monotonicity, interpolate, solve_ot

    space, cone = _space(cfg)
    mu0, mu1 = _measure(cfg.mu0, space, cone), _measure(cfg.mu1, space, cone)
    plan = solve_ot(space, mu0, mu1)
    ens = interpolate(plan, cfg.L)
    support = plan.support()[0].size
    k = 3 if support <= 300 else 2
    cycles = check_cyclic_monotonicity(plan, k)
    files["plan.csv"] = lambda out: plan.to_csv(out / "plan.csv")
    files["ensemble.csv"] = lambda out: ens.to_csv(out / "ensemble.csv")
    return {
        "cost": plan.cost,
        "support_size": support,
        "marginal_error": plan.marginal_error(),
        "cyclic_monotonicity": {"k_max": k, "violations": len(cycles)},
        "merges": ens.merges,
        "apex_mass": apex_mass(plan, cone) if cone is not None else None,
    }


def _cd_reports(cfg, scale=1):
    from .cd_checker import nprime_sweep, run_cd_check

    space, cone = _space(cfg, scale)
    mu0 = _measure(cfg.mu0, space, cone, scale)
    mu1 = _measure(cfg.mu1, space, cone, scale)
    N = cfg.N if cfg.N is not None else (cone.N + 1 if cone is not None else 2.0)
    nps = cfg.Nprime if cfg.Nprime is not None else nprime_sweep(N)
    plan, ens, reports = run_cd_check(space, mu0, mu1, cfg.K, nps, cfg.times, cfg.L)
    return reports


def task_cd_check(cfg, files):
    reports = _cd_reports(cfg)
    if cfg.calibrate:
        fine = _cd_reports(cfg, 2)
        for rep, f in zip(reports, fine):
            rep.tol_cd = 5.0 * max(max(f.deficit), 0.0)
    rows = []
    for rep in reports:
        for t, l, r, d in zip(rep.times, rep.lhs, rep.rhs, rep.deficit):
            tol = rep.tol_cd or 0.0
            rows.append(f"{rep.Nprime:6g} {t:6g} {l:14.8g} {r:14.8g} {d:14.6g}  {'ok' if d <= tol else 'VIOLATED'}")
    files["_table"] = "    N'      t            lhs            rhs        deficit  verdict\n" + "\n".join(rows)
    return {"K": cfg.K, "reports": [r.to_dict() for r in reports]}


def task_counterexample(cfg, files):
    from .cd_checker import counterexample_run, loglog_slope

    eps_list = cfg.eps if isinstance(cfg.eps, list) else [cfg.eps if cfg.eps is not None else 0.01]
    N = cfg.N if cfg.N is not None else 1.0
    res = cfg.resolution or 35
    base = _descriptor(cfg.base) if cfg.base is not None else None
    recs = [counterexample_run(cfg.R, e, N, res, base=base) for e in eps_list]
    out = {"runs": [r.to_dict() for r in recs], "violated": all(r.violated for r in recs)}
    if len(recs) >= 2:
        out["slope_endpoint"] = loglog_slope(eps_list, [r.endpoint_entropy for r in recs])
        out["slope_midpoint_bound"] = loglog_slope(eps_list, [r.midpoint_entropy_bound for r in recs])
    return out


def task_ricci_table(cfg, files):
    from .ricci import product_sphere_curvature_table

    if isinstance(cfg.r, list):
        return {"tables": [product_sphere_curvature_table(r) for r in cfg.r]}
    return product_sphere_curvature_table(cfg.r)


def task_hess_check(cfg, files):
    from .ricci import identity_suite

    return identity_suite(cfg.draws, cfg.seed)


def task_spectral(cfg, files):
    from .spectral import build_laplacian, poincare_check, spectrum

    space, cone = _space(cfg)
    L = build_laplacian(space, cfg.eps if isinstance(cfg.eps, float) else None)
    vals, vecs = spectrum(L, 10)
    lam1 = float(vals[1])
    if cfg.N is not None:
        N = cfg.N
    elif cone is not None:
        N = cone.N
    else:
        N = float(cfg.base.dim if cfg.base.kind == "sphere" else 1)
    rng = np.random.default_rng(cfg.seed)
    # random combinations of the nonconstant low modes probe the bound where it is tight
    fs = rng.standard_normal((cfg.test_functions, vals.size - 1)) @ vecs[:, 1:].T
    pc = poincare_check(L, fs, N, cfg.slack)
    files["eigenvalues.csv"] = lambda out: np.savetxt(
        out / "eigenvalues.csv", vals, delimiter=",", header="eigenvalue", comments="", fmt="%.17g")
    return {"lambda1": lam1, "N": N, "bound": N + 1, "pass": lam1 >= N + 1 - 1e-12,
            "eps": L.eps, "eigenvalues": vals[:10], "poincare": pc.to_dict()}


TASK_FUNCS = {
    "validate": task_validate,
    "ot": task_ot,
    "cd-check": task_cd_check,
    "counterexample": task_counterexample,
    "ricci-table": task_ricci_table,
    "hess-check": task_hess_check,
    "spectral": task_spectral,
}


# -- entry point --------------------------------------------------------------


def load_config(path: str | Path, task: str) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.task is not None and cfg.task != task:
        raise ConfigError(f"config task {cfg.task!r} does not match command {task!r}")
    return cfg.model_copy(update={"task": task})


def run(cfg: ExperimentConfig, out: Path | None = None) -> tuple[dict, dict]:
    """Execute ``cfg.task``; returns the report and deferred file writers."""
    files: dict = {}
    result = TASK_FUNCS[cfg.task](cfg, files)
    report = {"task": cfg.task, "version": __version__, "config_hash": cfg.config_hash(),
              "seed": cfg.seed, "result": result}
    return report, files


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="conecd", description=__doc__.splitlines()[0])
    ap.add_argument("task", choices=TASKS + ("schema",))
    ap.add_argument("--config", help="path to the JSON experiment config")
    ap.add_argument("--out", help="directory for report.json and CSV files")
    ap.add_argument("--version", action="version", version=f"conecd {__version__}")
    args = ap.parse_args(argv)
    if args.task == "schema":
        sys.stdout.write(json.dumps(json_schema(), indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    if args.config is None:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.task)
        out = args.out or cfg.output
        report, files = run(cfg)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    table = files.pop("_table", None)
    if table:
        print(table, file=sys.stderr)
    text = dumps(report)
    if out is None:
        sys.stdout.write(text)
        return EXIT_OK
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(text)
    for name, writer in files.items():
        writer(out)
    print(f"wrote {out / 'report.json'}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
