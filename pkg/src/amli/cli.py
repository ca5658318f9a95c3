"""``amli`` command line: poly, solve, analyze and verify subcommands.

Every subcommand takes ``--config file.json`` (keys mirror ``RunConfig``),
``--seed``, ``--out DIR`` and ``--format csv|json``. Results go to stdout in
the selected format and, with ``--out``, to files in DIR. JSON floats carry
17 significant digits so that outputs round-trip exactly.
"""
import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import AmliError, ConfigError
from .polyapprox import FAMILIES, SpectralInterval

COMMANDS = ("poly", "solve", "analyze", "verify")
PROBLEMS = ("poisson1d", "poisson2d", "mtx")
FORMATS = ("json", "csv")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class RunConfig:
    command: str = "verify"
    # problem
    problem: str = "poisson2d"
    levels: int = 3
    n0: int = 2
    matrix: Optional[str] = None
    coarse_sets: Optional[list] = None
    # cycle and smoothing
    cycle: Optional[List[int]] = None
    family: str = "bestapprox"
    smoother: str = "sgs"
    omega: float = 1.0
    rho_mode: str = "theory"
    rho: Optional[list] = None
    thetas: Optional[list] = None
    max_coarse: int = 64
    # poly
    interval: List[float] = field(default_factory=lambda: [1.0, 4.0])
    degrees: List[int] = field(default_factory=lambda: [0, 1, 2, 3])
    mu: Optional[float] = None
    # solve
    tol: float = 1e-8
    maxit: int = 500
    rhs: str = "ones"
    # analyze
    kappas: List[float] = field(default_factory=lambda: [2.0, 3.0, 4.0, 6.0, 10.0])
    # verify
    verify_n: int = 30
    verify_nu: List[int] = field(default_factory=lambda: [1, 2, 3])
    verify_seeds: int = 5
    perturb_horner: float = 0.0
    # output
    seed: int = 42
    out: Optional[str] = None
    format: str = "json"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data, text=None):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for k in data:
            if k not in known:
                raise ConfigError(_where(k, text), "unknown key")
        cfg = cls(**data)
        cfg.validate(text)
        return cfg

    def validate(self, text=None):
        def bad(name, msg):
            raise ConfigError(_where(name, text), msg)

        def is_int(v):
            return isinstance(v, int) and not isinstance(v, bool)

        def is_num(v):
            return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)

        if self.command not in COMMANDS:
            bad("command", f"expected one of {COMMANDS}")
        if self.problem not in PROBLEMS:
            bad("problem", f"expected one of {PROBLEMS}")
        for name, lo in (("levels", 1), ("n0", 1), ("maxit", 0), ("max_coarse", 1), ("verify_n", 0),
                         ("verify_seeds", 1), ("seed", 0)):
            v = getattr(self, name)
            if not is_int(v) or v < lo:
                bad(name, f"expected an integer >= {lo}")
        if self.problem == "mtx":
            if not self.matrix:
                bad("matrix", "required for problem 'mtx'")
            if not isinstance(self.coarse_sets, list) or not self.coarse_sets:
                bad("coarse_sets", "required for problem 'mtx': one index list (or file) per level")
        if self.cycle is not None and (not isinstance(self.cycle, list)
                                       or not all(is_int(v) and v >= 1 for v in self.cycle)):
            bad("cycle", "expected a list of positive integers")
        if self.family not in FAMILIES:
            bad("family", f"expected one of {FAMILIES}")
        from .hierarchy import RHO_MODES, SMOOTHERS
        if self.smoother not in SMOOTHERS:
            bad("smoother", f"expected one of {SMOOTHERS}")
        if self.rho_mode not in RHO_MODES:
            bad("rho_mode", f"expected one of {RHO_MODES}")
        if self.rho_mode == "given" and self.rho is None:
            bad("rho", "required when rho_mode is 'given'")
        if not is_num(self.omega) or self.omega <= 0:
            bad("omega", "expected a positive number")
        if (not isinstance(self.interval, list) or len(self.interval) != 2
                or not all(is_num(v) for v in self.interval) or not 0 < self.interval[0] < self.interval[1]):
            bad("interval", "expected [lambda_min, lambda_max] with 0 < lambda_min < lambda_max")
        if not isinstance(self.degrees, list) or not all(is_int(m) and m >= 0 for m in self.degrees):
            bad("degrees", "expected a list of nonnegative integers")
        if self.mu is not None and (not is_num(self.mu) or self.mu <= 1):
            bad("mu", "expected a number > 1")
        if not is_num(self.tol) or self.tol <= 0:
            bad("tol", "expected a positive number")
        if not isinstance(self.rhs, str):
            bad("rhs", "expected 'ones', 'random' or a vector file path")
        if not isinstance(self.kappas, list) or not all(is_num(k) and k > 1 for k in self.kappas):
            bad("kappas", "expected a list of numbers > 1")
        if not isinstance(self.verify_nu, list) or not all(is_int(v) and v >= 1 for v in self.verify_nu):
            bad("verify_nu", "expected a list of positive integers")
        if not is_num(self.perturb_horner):
            bad("perturb_horner", "expected a number")
        if self.format not in FORMATS:
            bad("format", f"expected one of {FORMATS}")
        if self.thetas is not None:
            try:
                _theta_pairs(self.thetas, 1)
            except ValueError as exc:
                bad("thetas", str(exc))


def _where(key, text):
    if text:
        m = re.search(r'"%s"\s*:' % re.escape(key), text)
        if m:
            return f"{key} (line {text.count(chr(10), 0, m.start()) + 1})"
    return key


def load_config(path, command=None) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    if command is not None:
        data = dict(data)
        data.setdefault("command", command)
        if data["command"] != command:
            raise ConfigError(_where("command", text), f"config is for '{data['command']}', not '{command}'")
    return RunConfig.from_dict(data, text)


# --- output -----------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return '"nan"'
        if math.isinf(obj):
            return '"inf"' if obj > 0 else '"-inf"'
        s = format(obj, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if not obj:
        return "[]"
    if all(not isinstance(v, (dict, list)) for v in obj):
        return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
    return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"


def dumps(obj, indent=2):
    """JSON text with floats at 17 significant digits; inf and nan become strings."""
    return _encode(_plain(obj), indent, 0) + "\n"


def _csv(header, rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([format(v, ".17g") if isinstance(v, float) else ("" if v is None else v) for v in r])
    return buf.getvalue()


# --- problem setup ------------------------------------------------------------------

def _theta_pairs(thetas, levels):
    t = thetas
    if isinstance(t, list) and len(t) == 2 and all(isinstance(v, (int, float)) for v in t):
        t = [t] * levels
    if not isinstance(t, list) or not all(isinstance(p, list) and len(p) == 2 for p in t):
        raise ValueError("expected [theta0, theta1] or one such pair per level")
    out = [(float(a), float(b)) for a, b in t]
    if any(not 0 < a <= b for a, b in out):
        raise ValueError("each pair needs 0 < theta0 <= theta1")
    return out


def _read(reader, name, path, base):
    p = Path(path)
    p = p if p.is_absolute() else base / p
    if not p.is_file():
        raise ConfigError(name, f"no such file: {p}")
    try:
        return reader(p)
    except ValueError as exc:
        raise ConfigError(name, f"cannot parse {p}: {exc}") from None


def _index_list(entry, base):
    from .sparse import read_vector
    if isinstance(entry, str):
        vals = _read(read_vector, "coarse_sets", entry, base)
    else:
        vals = entry
    arr = np.asarray(vals, dtype=float)
    if arr.size and not np.all(arr == np.round(arr)):
        raise ConfigError("coarse_sets", "indices must be integers")
    return arr.astype(np.int64)


def make_problem(cfg: RunConfig, base=Path(".")):
    from .hierarchy import MatrixProblem, gen_poisson
    if cfg.problem == "mtx":
        from .sparse import read_matrix_market
        A = _read(read_matrix_market, "matrix", cfg.matrix, base)
        sets = [_index_list(e, base) for e in cfg.coarse_sets]
        return MatrixProblem(A, sets)
    return gen_poisson(1 if cfg.problem == "poisson1d" else 2, cfg.levels + 1, cfg.n0)


def make_cycle(cfg: RunConfig, levels):
    from .hierarchy import CycleSpec
    if cfg.cycle is not None:
        if len(cfg.cycle) != levels:
            raise ConfigError("cycle", f"{len(cfg.cycle)} entries for {levels} levels")
        return CycleSpec(tuple(cfg.cycle), cfg.family)
    if cfg.family in ("bestapprox", "chebyshev"):
        return CycleSpec.w_cycle(levels, cfg.family)
    return CycleSpec.v_cycle(levels, cfg.family)


def make_hierarchy(cfg: RunConfig, base=Path(".")):
    from .hierarchy import build_hierarchy
    prob = make_problem(cfg, base)
    levels = len(cfg.coarse_sets) if cfg.problem == "mtx" else cfg.levels
    thetas = _theta_pairs(cfg.thetas, levels) if cfg.thetas is not None else None
    return build_hierarchy(prob, make_cycle(cfg, levels), smoother=cfg.smoother, rho_mode=cfg.rho_mode,
                           rho=cfg.rho, thetas=thetas, omega=cfg.omega, max_coarse=cfg.max_coarse,
                           seed=cfg.seed)


# --- subcommands ----------------------------------------------------------------------

def cmd_poly(cfg: RunConfig):
    from .polyapprox import (alternates, best_error, best_q, damping_bound, equioscillation_points,
                             positivity_holds)
    iv = SpectralInterval(*cfg.interval)
    rows = []
    for m in cfg.degrees:
        q = best_q(m, iv)
        pts = equioscillation_points(q, iv, level=best_error(m, iv))
        grid = np.linspace(0.0, iv.lambda_max, 10_001)
        row = {
            "degree": m,
            "coeffs": q.coeffs.tolist(),
            "error": best_error(m, iv),
            "equioscillation": [[x, e] for x, e in pts],
            "alternates": alternates(pts) and len(pts) >= m + 2,
            "positive_on_0_lmax": bool(q(grid).min() > 0),
        }
        if cfg.mu is not None and m >= 1:
            row["positivity_holds"] = positivity_holds(m, cfg.mu)
            row["damping_bound"] = damping_bound(m, cfg.mu)
        rows.append(row)
    return {"lambda_min": iv.lambda_min, "lambda_max": iv.lambda_max, "mu": cfg.mu, "rows": rows}


def _poly_csv(res):
    rows = [(r["degree"], r["error"], r.get("positivity_holds"), r.get("damping_bound"), r["alternates"],
             ";".join(format(c, ".17g") for c in r["coeffs"])) for r in res["rows"]]
    return _csv(["degree", "error", "positivity_holds", "damping_bound", "alternates", "coeffs"], rows)


def _rhs(cfg, n, base):
    if cfg.rhs == "ones":
        return np.ones(n)
    if cfg.rhs == "random":
        return np.random.default_rng(cfg.seed).standard_normal(n)
    from .sparse import read_vector
    b = _read(read_vector, "rhs", cfg.rhs, base)
    if b.shape != (n,):
        raise ConfigError("rhs", f"vector of length {b.size} for a matrix of size {n}")
    return b


def cmd_solve(cfg: RunConfig, base=Path(".")):
    from .precond import AmliPreconditioner, pcg_solve
    H = make_hierarchy(cfg, base)
    b = _rhs(cfg, H.A.n, base)
    P = AmliPreconditioner(H)
    rep = pcg_solve(H.A, b, P, tol=cfg.tol, maxit=cfg.maxit)
    summary = {
        "problem": cfg.problem,
        "n": H.A.n,
        "levels": H.depth,
        "sizes": H.sizes(),
        "family": H.cycle.family,
        "nus": list(H.cycle.nus),
        "rho_mode": H.rho_mode,
        "rho": [list(p) for p in H.rho],
        "visits": P.cycle_stats().visits,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "kappa_estimate": rep.kappa_estimate,
        "final_residual": rep.residual_history[-1],
        "residual_history": rep.residual_history,
    }
    return rep, summary


def cmd_analyze(cfg: RunConfig, base=Path(".")):
    from .analysis import degree_table, measure_level_theta, multilevel_bound, threshold_table
    levels = len(cfg.coarse_sets) if cfg.problem == "mtx" else cfg.levels
    cycle = make_cycle(cfg, levels)
    if cfg.thetas is not None:
        thetas = _theta_pairs(cfg.thetas, levels)
        source = "given"
    else:
        H = make_hierarchy(cfg, base)
        thetas = [measure_level_theta(lev, seed=cfg.seed) for lev in H.levels]
        source = "measured"
    rep = multilevel_bound(thetas, cycle)
    t0, t1 = min(t[0] for t in thetas), max(t[1] for t in thetas)
    return {
        "theta_source": source,
        "bound": rep.to_dict(),
        "levels": [dict(zip(("k", "theta0", "theta1", "rho0", "rho1", "r0", "r1"), r)) for r in rep.rows()],
        "thresholds": threshold_table(cfg.kappas),
        "degrees": degree_table(t0, t1, cfg.kappas),
    }


def _analyze_csv(res):
    rows = [tuple(None if v == "" else v for v in r.values()) for r in res["levels"]]
    return _csv(["k", "theta0", "theta1", "rho0", "rho1", "r0", "r1"], rows)


def _check(name, deviation, tolerance):
    return {"name": name, "deviation": float(deviation), "tolerance": float(tolerance),
            "passed": bool(deviation <= tolerance)}


def _poly_checks():
    from .polyapprox import (best_error, best_q_closed_eval, best_q_eval, error_via_corollary,
                             product_identity_eval)
    out = []
    dev_closed = dev_prod = dev_cor = 0.0
    for lo, hi in ((1.0, 4.0), (0.3, 2.0), (1.0, 50.0)):
        iv = SpectralInterval(lo, hi)
        x = np.linspace(lo, hi, 257)
        for m in range(0, 13):
            q = best_q_eval(m, iv, x)
            dev_closed = max(dev_closed, float(np.abs(q - best_q_closed_eval(m, iv, x)).max() * lo))
            if m >= 1:
                dev_prod = max(dev_prod, float(np.abs(x * q - product_identity_eval(m, iv, x)).max()))
                e = best_error(m, iv)
                dev_cor = max(dev_cor, abs(error_via_corollary(m, iv) - e) / e)
    out.append(_check("poly_closed_form", dev_closed, 1e-10))
    out.append(_check("poly_product_identity", dev_prod, 1e-10))
    out.append(_check("poly_error_corollary", dev_cor, 1e-14))
    return out


def cmd_verify(cfg: RunConfig):
    from .analysis import measure_condition, multilevel_bound, verify_identities
    from .hierarchy import CycleSpec, build_hierarchy, gen_poisson
    from .precond import AmliPreconditioner
    from .sparse import dense_operator
    import scipy.linalg

    checks = _poly_checks()
    worst = {}
    for nu in cfg.verify_nu:
        for s in range(cfg.verify_seeds):
            rep = verify_identities(n=cfg.verify_n, seed=cfg.seed + s, nu=nu, perturb=cfg.perturb_horner)
            for k, v in rep.deviations.items():
                worst[k] = max(worst.get(k, 0.0), v)
            tol = rep.tolerances
    for k in worst:
        checks.append(_check(k, worst[k], tol[k]))

    H = build_hierarchy(gen_poisson(2, 3, 2), CycleSpec.w_cycle(2), seed=cfg.seed)
    spd = 0.0
    for k in range(H.depth + 1):
        try:
            scipy.linalg.cholesky(H.matrix(k).to_dense())
        except np.linalg.LinAlgError:
            spd = math.inf
    checks.append(_check("levels_spd", spd, 0.0))
    B = dense_operator(AmliPreconditioner(H), H.A.n)
    asym = float(np.abs(B - B.T).max() / np.abs(B).max())
    checks.append(_check("amli_symmetric", asym, 1e-12))
    lam = float(np.linalg.eigvalsh(0.5 * (B + B.T)).min())
    checks.append(_check("amli_positive", 0.0 if lam > 0 else -lam, 0.0))
    kappa = measure_condition(AmliPreconditioner(H), H.A, seed=cfg.seed)
    bound = multilevel_bound(H.thetas, H.cycle).final_kappa_bound
    checks.append(_check("bound_soundness", max(0.0, kappa / bound - 1.0), 1e-8))
    return {"seed": cfg.seed, "verify_n": cfg.verify_n, "perturb_horner": cfg.perturb_horner,
            "passed": all(c["passed"] for c in checks), "checks": checks}


def _verify_csv(res):
    return _csv(["check", "deviation", "tolerance", "passed"],
                [(c["name"], c["deviation"], c["tolerance"], c["passed"]) for c in res["checks"]])


# --- entry point ------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="amli", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "poly": "best-approximation coefficients, errors and equioscillation",
        "solve": "PCG with the AMLI preconditioner",
        "analyze": "rho recursion, condition bound and degree tables",
        "verify": "run the invariant battery; nonzero exit on any violation",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="random seed (default 42)")
        p.add_argument("--out", type=Path, help="directory for output files")
        p.add_argument("--format", choices=FORMATS, help="stdout and table format")
    return parser


def _write(out_dir, name, text):
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text)


def run(cfg: RunConfig, out_dir: Optional[Path] = None, base=Path("."), stdout=None):
    """Execute one configured command; returns the exit status."""
    stdout = stdout or sys.stdout
    fmt = cfg.format
    if cfg.command == "poly":
        res = cmd_poly(cfg)
        js, cs = dumps(res), _poly_csv(res)
        _write(out_dir, "coefficients.json", js)
        _write(out_dir, "coefficients.csv", cs)
        stdout.write(js if fmt == "json" else cs)
        return EXIT_OK
    if cfg.command == "solve":
        rep, summary = cmd_solve(cfg, base)
        js = dumps(summary)
        _write(out_dir, "residuals.csv", rep.to_csv())
        _write(out_dir, "summary.json", js)
        stdout.write(js if fmt == "json" else rep.to_csv())
        return EXIT_OK if rep.converged else EXIT_FAILED
    if cfg.command == "analyze":
        res = cmd_analyze(cfg, base)
        js, cs = dumps(res), _analyze_csv(res)
        _write(out_dir, "bounds.json", js)
        _write(out_dir, "bounds.csv", cs)
        stdout.write(js if fmt == "json" else cs)
        return EXIT_OK
    res = cmd_verify(cfg)
    js, cs = dumps(res), _verify_csv(res)
    _write(out_dir, "verify.json", js)
    _write(out_dir, "verify.csv", cs)
    stdout.write(js if fmt == "json" else cs)
    if not res["passed"]:
        for c in res["checks"]:
            if not c["passed"]:
                print(f"FAILED {c['name']}: deviation {c['deviation']:.3e} > {c['tolerance']:.1e}",
                      file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config, args.command)
            base = args.config.resolve().parent
        else:
            cfg = RunConfig(command=args.command)
            base = Path(".")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.format is not None:
            cfg.format = args.format
        if args.out is not None:
            cfg.out = str(args.out)
        cfg.validate()
        out_dir = Path(cfg.out) if cfg.out else None
        return run(cfg, out_dir, base)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AmliError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
