"""Command-line experiment harness.

Usage::

    fbmharnack run --config exp.cfg [--set key=value]...
    fbmharnack sweep --config exp.cfg --axis H --values 0.1,0.25,0.4

Config files are flat ``key = value`` lines (``#`` starts a comment);
``--set`` overrides win.  Each run writes ``<experiment>_detail.csv`` and
``<experiment>_summary.csv`` into ``output`` (default: the directory named
by ``FBMHARNACK_OUTPUT_DIR``, else the working directory).  Exit codes:
0 all verdicts hold, 2 a verdict is violated or the estimators disagree,
1 usage or numerical error.
"""

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import bismut, fbm, girsanov, harnack, sde
from . import montecarlo as mc
from .errors import ConsistencyError, FbmHarnackError

__all__ = ["main", "parse_config", "run_experiment", "ConfigError", "EXPERIMENTS"]

OUTPUT_ENV = "FBMHARNACK_OUTPUT_DIR"
EXIT_OK, EXIT_ERROR, EXIT_VIOLATED = 0, 1, 2

EXPERIMENTS = (
    "covariance",
    "isometry",
    "girsanov",
    "coupling",
    "harnack",
    "log_harnack",
    "strong_feller",
    "derivative",
    "constants",
)

# key: (parser, default)
_KEYS = {
    "experiment": (str, None),
    "H": (float, 0.3),
    "T": (float, 1.0),
    "K": (float, None),
    "Kbar": (float, None),
    "x": (float, 0.0),
    "y": (float, 1.0),
    "p": (float, 2.0),
    "drift": (str, "linear"),
    "drift_a": (float, -1.0),
    "drift_c": (float, 0.0),
    "f": (str, "one_plus_half_sin"),
    "n_steps": (int, 64),
    "n_paths": (int, 10_000),
    "seed": (int, 0),
    "constant_variant": (str, "thm31"),
    "epsilon": (float, 0.05),
    "sampler": (str, "volterra"),
    "workers": (int, 1),
    "output": (str, None),
    "coupling_tol": (float, None),
}
_NUMERIC = {k for k, (p, _) in _KEYS.items() if p in (int, float)}


class ConfigError(FbmHarnackError, ValueError):
    """Invalid configuration; the message names the offending key."""


# --- configuration ---------------------------------------------------------


def _convert(key, raw):
    if key not in _KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    parser = _KEYS[key][0]
    raw = raw.strip()
    try:
        if parser is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        return parser(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {parser.__name__}") from None


def _split(line, where):
    if "=" not in line:
        raise ConfigError(f"{where}: expected key = value, got {line!r}")
    key, raw = line.split("=", 1)
    return key.strip(), raw


def parse_config(text, overrides=()):
    """Parse config text plus ``key=value`` overrides into a dict."""
    cfg = {k: d for k, (_, d) in _KEYS.items()}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, raw = _split(line, f"line {no}")
        cfg[key] = _convert(key, raw)
    for item in overrides:
        key, raw = _split(item, "--set")
        cfg[key] = _convert(key, raw)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"config key 'experiment' must be one of {EXPERIMENTS}, got {cfg['experiment']!r}")
    if cfg["sampler"] not in ("volterra", "cholesky"):
        raise ConfigError("config key 'sampler' must be 'volterra' or 'cholesky'")
    if cfg["constant_variant"] not in harnack.CONSTANT_VARIANTS:
        raise ConfigError(f"config key 'constant_variant' must be one of {harnack.CONSTANT_VARIANTS}")
    if cfg["n_paths"] < 1:
        raise ConfigError("config key 'n_paths' must be positive")
    if cfg["workers"] < 1:
        raise ConfigError("config key 'workers' must be positive")
    try:
        drift = sde.DriftSpec(cfg["drift"], cfg["drift_a"], cfg["drift_c"])
    except FbmHarnackError as exc:
        raise ConfigError(f"config key 'drift': {exc}") from None
    if cfg["experiment"] != "constants":
        for key, val in (("K", drift.K), ("Kbar", drift.Kbar)):
            if cfg[key] is not None and not math.isclose(cfg[key], val):
                raise ConfigError(f"config key {key!r} = {cfg[key]} disagrees with |drift_a| = {val}")
    try:
        harnack.TestFunction(cfg["f"])
    except FbmHarnackError as exc:
        raise ConfigError(f"config key 'f': {exc}") from None


def _drift(cfg):
    return sde.DriftSpec(cfg["drift"], cfg["drift_a"], cfg["drift_c"])


def _query(cfg, x=None, y=None):
    kwargs = dict(
        x=cfg["x"] if x is None else x,
        y=cfg["y"] if y is None else y,
        p=cfg["p"],
        T=cfg["T"],
        drift=_drift(cfg),
        H=cfg["H"],
        n_paths=cfg["n_paths"],
        n_steps=cfg["n_steps"],
        seed=cfg["seed"],
        workers=cfg["workers"],
        coupling_tol=cfg["coupling_tol"],
    )
    return harnack.HarnackQuery(**kwargs)


# --- experiments -----------------------------------------------------------


@dataclass
class Result:
    detail_header: list
    detail_rows: list
    summary: dict  # ordered column -> value
    verdicts: list


def _summary(cfg, estimate, se, constant, verdict, **extra):
    row = {
        "experiment": cfg["experiment"],
        "estimate": estimate,
        "se": se,
        "n_paths": cfg["n_paths"],
        "seed": cfg["seed"],
        "constant": constant,
        "verdict": verdict,
    }
    row.update(extra)
    return row


def _bool_verdict(ok):
    return harnack.HOLDS if ok else harnack.VIOLATED


def _exp_covariance(cfg):
    H, grid = cfg["H"], fbm.TimeGrid(cfg["T"], cfg["n_steps"])
    cholesky = cfg["sampler"] == "cholesky"

    def fn(idx):
        if cholesky:
            B = fbm.cholesky_paths(H, grid, cfg["seed"], idx).values[:, 1:]
        else:
            W = fbm.WienerIncrements.generate(grid, cfg["seed"], idx)
            B = fbm.synthesize(H, grid, W).values[:, 1:]
        B2 = B * B
        return {"s1": (B.T @ B)[None], "s2": (B2.T @ B2)[None]}

    out = mc.run_blocks(fn, cfg["n_paths"], cfg["workers"])
    m = cfg["n_paths"]
    s1 = np.sum(out["s1"], axis=0)
    s2 = np.sum(out["s2"], axis=0)
    emp = s1 / m
    se = np.sqrt(np.maximum(s2 / m - emp**2, 0.0) / (m - 1))
    t = grid.nodes[1:]
    exact = fbm.covariance(H, t[:, None], t[None, :])
    err = np.abs(emp - exact)
    allowance = 0.0 if cholesky else 0.02
    slack = 5 * se + allowance - err
    rows = []
    for i in range(grid.n):
        for j in range(i, grid.n):
            rows.append([i + 1, j + 1, t[i], t[j], emp[i, j], exact[i, j], se[i, j], err[i, j]])
    k = np.unravel_index(np.argmin(slack), slack.shape)
    ok = bool(np.all(slack >= 0))
    summary = _summary(
        cfg, float(err[k]), float(se[k]), allowance, _bool_verdict(ok),
        sampler=cfg["sampler"], max_abs_err=float(err.max()), min_slack=float(slack.min()),
    )
    header = ["i", "j", "t_i", "t_j", "empirical", "exact", "se", "abs_err"]
    return Result(header, rows, summary, [summary["verdict"]])


def _isometry_pairs(n):
    pairs = [(n, n), (n // 2, n), (n // 4, 3 * n // 4), (max(1, n // 16), n), (n // 8, n // 2)]
    return [(max(1, a), max(1, b)) for a, b in pairs]


def _exp_isometry(cfg):
    H, grid = cfg["H"], fbm.TimeGrid(cfg["T"], cfg["n_steps"])
    rows, worst = [], 0.0
    for a, b in _isometry_pairs(grid.n):
        phi = (np.arange(grid.n) < a).astype(float)
        psi = (np.arange(grid.n) < b).astype(float)
        val = fbm.kstar_inner(H, grid, phi, psi)
        exact = fbm.covariance(H, grid.nodes[a], grid.nodes[b])
        rel = abs(val - exact) / abs(exact)
        worst = max(worst, rel)
        rows.append([grid.nodes[a], grid.nodes[b], val, exact, rel])
    summary = _summary(cfg, worst, 0.0, 1e-3, _bool_verdict(worst <= 1e-3), max_rel_err=worst)
    return Result(["t", "s", "inner_product", "covariance", "rel_err"], rows, summary, [summary["verdict"]])


def _coupled_block(query, variant):
    grid = query.grid

    def fn(idx):
        W = fbm.WienerIncrements.generate(grid, query.seed, idx)
        B = fbm.synthesize(query.H, grid, W)
        cp = sde.coupled_solve(query.x, query.y, query.drift, B, variant, query.coupling_tol)
        g = girsanov.girsanov_integrand(cp.u, query.H)
        w = girsanov.weight(g, W)
        return {
            "tau": cp.tau_index,
            "gap": cp.gap_at_detection,
            "final_gap": np.abs(cp.X.X[:, -1] - cp.Y.X[:, -1]),
            "defect": sde.contraction_defect(cp, query.drift.K),
            "max_eta": np.max(cp.eta.values, axis=-1),
            "M": w.M_T,
            "qv": w.qv,
            "R": w.R_T,
        }

    return fn


def _coupling_variant(cfg):
    return "thm31" if cfg["constant_variant"] == "cor41" else cfg["constant_variant"]


def _exp_girsanov(cfg):
    q = _query(cfg)
    variant = _coupling_variant(cfg)
    out = mc.run_blocks(_coupled_block(q, variant), q.n_paths, q.workers)
    C = harnack.constant_for(variant, q.T, q.drift, q.H)
    d = q.dist
    margin = C * d**2 - 0.5 * out["qv"]
    mean_r, se_r = mc.mean_se(out["R"])
    mean_r2, se_r2 = mc.mean_se(out["R"] ** 2)
    bound2 = girsanov.moment_bound(2.0, C, d)
    v_mean = _bool_verdict(abs(mean_r - 1.0) <= 4 * se_r)
    v_nov = _bool_verdict(bool(np.all(margin >= 0)))
    v_mom = harnack.verdict(mean_r2, bound2, se_r2, 0.0)
    rows = [[k, out["M"][k], out["qv"][k], out["R"][k], margin[k]] for k in range(q.n_paths)]
    summary = _summary(
        cfg, mean_r, se_r, C, _worst([v_mean, v_nov, v_mom]),
        mean_verdict=v_mean, novikov_fraction=float(np.mean(margin >= 0)), novikov_min_margin=float(margin.min()),
        novikov_verdict=v_nov, E_R2=mean_r2, E_R2_se=se_r2, E_R2_bound=bound2, moment_verdict=v_mom,
    )
    return Result(["path", "M_T", "qv", "R_T", "novikov_margin"], rows, summary, [v_mean, v_nov, v_mom])


def _exp_coupling(cfg):
    q = _query(cfg)
    variant = _coupling_variant(cfg)
    out = mc.run_blocks(_coupled_block(q, variant), q.n_paths, q.workers)
    n, dt = q.n_steps, q.grid.dt
    gap_ratio = out["gap"] / (dt * out["max_eta"]) if q.dist > 0 else np.zeros(q.n_paths)
    ok = bool(np.all(out["tau"] < n) or q.dist == 0) and bool(np.all(out["final_gap"] == 0))
    ok_gap = bool(np.all(gap_ratio <= 5.0))
    rows = [
        [k, out["tau"][k], out["gap"][k], gap_ratio[k], out["final_gap"][k], out["defect"][k]]
        for k in range(q.n_paths)
    ]
    verdicts = [_bool_verdict(ok), _bool_verdict(ok_gap)]
    tau_mean, tau_se = mc.mean_se(out["tau"] * dt)
    summary = _summary(
        cfg, tau_mean, tau_se, harnack.constant_for(variant, q.T, q.drift, q.H), _worst(verdicts),
        max_tau_index=int(out["tau"].max()), max_final_gap=float(out["final_gap"].max()),
        max_gap_ratio=float(gap_ratio.max()), max_defect=float(out["defect"].max()),
        max_defect_over_dt=float(out["defect"].max() / dt),
    )
    return Result(
        ["path", "tau_index", "gap_at_detection", "gap_over_dt_eta", "final_gap", "defect"],
        rows, summary, verdicts,
    )


def _sample_rows(sample):
    return [[k, sample.xT[k], sample.yT[k], sample.R[k]] for k in range(sample.xT.size)]


def _report_summary(cfg, rep):
    extra = {"lhs": rep.lhs, "lhs_se": rep.lhs_se, "rhs": rep.rhs, "rhs_se": rep.rhs_se, "margin": rep.margin}
    extra.update(rep.details)
    return _summary(cfg, rep.lhs, rep.lhs_se, rep.constant_used, rep.verdict, **extra)


def _exp_harnack_family(cfg):
    q = _query(cfg)
    f = harnack.TestFunction(cfg["f"])
    variant = cfg["constant_variant"]
    sample = harnack.sample_pair(q, variant)
    exp = cfg["experiment"]
    if exp == "harnack":
        rep = harnack.check_harnack(f, q, variant, sample=sample)
    elif exp == "log_harnack":
        rep = harnack.check_log_harnack(f, q, variant, sample=sample)
    else:
        rep = harnack.strong_feller_gap(f, q, variant, sample=sample)
    summary = _report_summary(cfg, rep)
    verdicts = [rep.verdict] + ([rep.details["R_verdict"]] if "R_verdict" in rep.details else [])
    summary["verdict"] = _worst(verdicts)
    return Result(["path", "X_T_from_x", "X_T_from_y", "R_T"], _sample_rows(sample), summary, verdicts)


def _exp_derivative(cfg):
    q = _query(cfg)
    f = harnack.TestFunction(cfg["f"])
    eps = cfg["epsilon"]
    out = bismut.derivative_samples(f, q.x, q.y, q, epsilon=eps)
    est, se = mc.mean_se(out["fN"])
    fd, fd_se = mc.mean_se(out["fd"])
    mean_n, se_n = mc.mean_se(out["N"])
    half = abs(q.H - 0.5) < 1e-12
    C4 = math.nan if half else harnack.constant_C4(q.T, q.drift.Kbar, q.H)
    comb = math.hypot(se, fd_se)
    tol = max(0.05 * abs(fd), 4 * comb)
    v_fd = _bool_verdict(abs(est - fd) <= tol)
    v_mean = _bool_verdict(abs(mean_n) <= 4 * se_n)
    verdicts = [v_fd, v_mean]
    qv_ok = math.nan
    if not half:
        qv_ok = float(np.mean(out["qv"] <= C4 * q.y**2))
        verdicts.append(_bool_verdict(qv_ok == 1.0))
    rows = [[k, out["N"][k], out["qv"][k], out["fN"][k], out["fd"][k]] for k in range(q.n_paths)]
    summary = _summary(
        cfg, est, se, C4, _worst(verdicts),
        fd_estimate=fd, fd_se=fd_se, epsilon=eps, abs_diff=abs(est - fd), tolerance=tol,
        E_N=mean_n, E_N_se=se_n, qv_bound_fraction=qv_ok, max_qv=float(out["qv"].max()),
    )
    return Result(["path", "N_T", "qv", "f_N", "fd"], rows, summary, verdicts)


def _exp_constants(cfg):
    T, H = cfg["T"], cfg["H"]
    K = cfg["K"] if cfg["K"] is not None else abs(cfg["drift_a"])
    Kbar = cfg["Kbar"] if cfg["Kbar"] is not None else abs(cfg["drift_a"])
    C = harnack.constant_C(T, K, H)
    Ct = harnack.constant_Ctilde(T, K, H)
    C4 = harnack.constant_C4(T, Kbar, H)
    rows = [["C", T, K, H, C], ["C_tilde", T, K, H, Ct], ["C4", T, Kbar, H, C4]]
    summary = _summary(
        cfg, C, 0.0, C, harnack.HOLDS, C=C, C_tilde=Ct, C4=C4, C_tilde_over_C=Ct / C, C4_over_C=C4 / C,
    )
    return Result(["name", "T", "K", "H", "value"], rows, summary, [harnack.HOLDS])


_DISPATCH = {
    "covariance": _exp_covariance,
    "isometry": _exp_isometry,
    "girsanov": _exp_girsanov,
    "coupling": _exp_coupling,
    "harnack": _exp_harnack_family,
    "log_harnack": _exp_harnack_family,
    "strong_feller": _exp_harnack_family,
    "derivative": _exp_derivative,
    "constants": _exp_constants,
}


def _worst(verdicts):
    if harnack.VIOLATED in verdicts:
        return harnack.VIOLATED
    if harnack.WITHIN_NOISE in verdicts:
        return harnack.WITHIN_NOISE
    return harnack.HOLDS


def run_experiment(cfg):
    """Run one configured experiment; returns a :class:`Result`.

    A disagreement between the direct and weighted estimators is reported
    as a violated summary row rather than raised.
    """
    try:
        return _DISPATCH[cfg["experiment"]](cfg)
    except ConsistencyError as exc:
        summary = _summary(cfg, math.nan, math.nan, math.nan, harnack.VIOLATED, error=str(exc))
        return Result(["message"], [[str(exc)]], summary, [harnack.VIOLATED])


# --- output ----------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _output_dir(cfg):
    out = cfg["output"] or os.environ.get(OUTPUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _exit_code(verdicts):
    return EXIT_VIOLATED if harnack.VIOLATED in verdicts else EXIT_OK


def _cmd_run(args):
    cfg = _load(args)
    res = run_experiment(cfg)
    out = _output_dir(cfg)
    name = cfg["experiment"]
    _write_csv(os.path.join(out, f"{name}_detail.csv"), res.detail_header, res.detail_rows)
    _write_csv(os.path.join(out, f"{name}_summary.csv"), list(res.summary), [list(res.summary.values())])
    for k, v in res.summary.items():
        print(f"{k} = {_fmt(v)}")
    return _exit_code(res.verdicts)


def _cmd_sweep(args):
    cfg = _load(args)
    axis = args.axis
    if axis not in _KEYS:
        raise ConfigError(f"unknown config key {axis!r}")
    if axis not in _NUMERIC:
        raise ConfigError(f"sweep axis {axis!r} is not numeric")
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs at least one value")
    base_seed = cfg["seed"]
    summaries, verdicts = [], []
    for row, raw in enumerate(values):
        c = dict(cfg)
        c[axis] = _convert(axis, raw)
        if axis != "seed":
            c["seed"] = base_seed + row
        _validate(c)
        res = run_experiment(c)
        summaries.append({axis: c[axis], **res.summary})
        verdicts.extend(res.verdicts)
    header = []
    for s in summaries:
        header.extend(k for k in s if k not in header)
    rows = [[s.get(k) for k in header] for s in summaries]
    out = _output_dir(cfg)
    path = os.path.join(out, f"{cfg['experiment']}_sweep_{axis}.csv")
    _write_csv(path, header, rows)
    print(f"wrote {len(rows)} rows to {path}")
    return _exit_code(verdicts)


def _load(args):
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return parse_config(text, args.set or ())


def _parser():
    p = argparse.ArgumentParser(prog="fbmharnack", description="fBm Harnack-inequality experiments")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--set", action="append", metavar="KEY=VALUE")
    s = sub.add_parser("sweep", help="run an experiment over values of one key")
    s.add_argument("--config", required=True)
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True)
    return p


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except (FbmHarnackError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
