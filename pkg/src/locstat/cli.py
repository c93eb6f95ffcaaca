"""``locstat`` command line: configuration-driven experiments.

Exit status is 0 on success, 1 when a task misses its acceptance
threshold and 2 for invalid configurations.
"""

import argparse
import ast
import csv
import hashlib
import io
import json
import operator
import os
import platform
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import __version__
from ._accel import backend_name, set_threads
from .measure import ContractViolation
from .zoo.config import ModelSpecError, build_model, suggested_truncation

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
TASKS = ("invariant", "derivatives", "taylor", "ergodicity", "local_stationarity", "simulate",
         "estimate", "bias_sweep", "variance_sweep", "covariance")
DEFAULT_THRESHOLDS = {
    "derivative_rel_err": 1e-5,
    "derivative_rel_err_discretized": 1e-4,
    "local_stationarity_ratio_lo": 0.5,
    "local_stationarity_ratio_hi": 2.0,
    "simulate_tv_factor": 3.0,
    "bias_slope_halfwidth": 0.35,
    "variance_slope_lo": -1.25,
    "variance_slope_hi": -0.75,
    "covariance_se_factor": 4.0,
    "covariance_abs_slack": 0.01,
}


# -- functional expressions ------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow, ast.Mod: operator.mod}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_CMP = {ast.Lt: operator.lt, ast.LtE: operator.le, ast.Gt: operator.gt, ast.GtE: operator.ge,
        ast.Eq: operator.eq, ast.NotEq: operator.ne}
_FUNCS = {"abs": np.abs, "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin, "cos": np.cos,
          "tanh": np.tanh, "min": np.minimum, "max": np.maximum}


class ExpressionError(ContractViolation):
    pass


def compile_functional(expr, j):
    """Compile ``expr`` into ``f(Z)`` for ``(N, j)`` block arrays.

    Names: ``x`` (first coordinate, or ``x[i]`` indexing), ``x1 .. xj`` and
    ``pi``. Comparisons evaluate to 0/1. Only arithmetic, comparisons and
    the functions ``abs exp log sqrt sin cos tanh min max`` are accepted.
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as e:
        raise ExpressionError("cannot parse %r: %s" % (expr, e.msg)) from None

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            raise ExpressionError("unknown name %r in %r" % (node.id, expr))
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand, env))
        if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMP:
            return _CMP[type(node.ops[0])](ev(node.left, env), ev(node.comparators[0], env)).astype(float)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and not node.keywords:
            return _FUNCS[node.func.id](*[ev(a, env) for a in node.args])
        if isinstance(node, ast.Subscript) and isinstance(node.value, ast.Name) and node.value.id == "x":
            idx = node.slice
            if isinstance(idx, ast.Constant) and isinstance(idx.value, int) and 0 <= idx.value < j:
                return env["_Z"][:, idx.value]
            raise ExpressionError("x[...] needs an integer index in 0..%d" % (j - 1))
        raise ExpressionError("unsupported syntax %r in %r" % (type(node).__name__, expr))

    def f(Z):
        Z = np.asarray(Z, dtype=float).reshape(-1, j)
        env = {"x": Z[:, 0], "pi": np.pi, "_Z": Z}
        env.update({"x%d" % (i + 1): Z[:, i] for i in range(j)})
        out = ev(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (Z.shape[0],)).copy()

    f(np.zeros((1, j)))  # surface name and syntax errors early
    return f


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    field: str
    message: str
    line: int = 0

    def __str__(self):
        where = " (line %d)" % self.line if self.line else ""
        return "%s: %s%s: %s" % (self.level, self.field or "<root>", where, self.message)


def load_schema():
    return json.loads(resources.files("locstat").joinpath("schema/config.schema.json").read_text())


def _line_of(text, path):
    """Best-effort line number of the last key in ``path`` within the raw JSON text."""
    keys = [p for p in path if isinstance(p, str)]
    if not text or not keys:
        return 0
    pos = 0
    for key in keys:
        nxt = text.find('"%s"' % key, pos)
        if nxt < 0:
            break
        pos = nxt
    return text.count("\n", 0, pos) + 1


def parse_config(text):
    """Return ``(config, diagnostics)``; ``config`` is ``None`` on syntax errors."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        return None, [Diagnostic("error", "<json>", e.msg, e.lineno)]
    return cfg, validate(cfg, text)


def validate(cfg, text=""):
    """Schema and cross-field checks without running anything."""
    import jsonschema

    diags = []
    v = jsonschema.Draft7Validator(load_schema())
    for err in sorted(v.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path))):
        path = list(err.absolute_path)
        field = ".".join(str(p) for p in path)
        diags.append(Diagnostic("error", field, err.message, _line_of(text, path)))
    if diags or not isinstance(cfg, dict):
        return diags
    tasks = [task_name(t) for t in cfg.get("tasks", [])]
    for i, t in enumerate(tasks):
        if t == "covariance" and "simulate" not in tasks[:i]:
            diags.append(Diagnostic("error", "tasks.%d" % i, "covariance needs an earlier simulate task"))
        if t == "estimate" and cfg.get("estimate", {}).get("source", "simulate") == "simulate" \
                and "simulate" not in tasks[:i]:
            diags.append(Diagnostic("error", "tasks.%d" % i,
                                    "estimate needs an earlier simulate task or estimate.source = 'exact'"))
    est = cfg.get("estimate", {})
    n = est.get("n", cfg.get("simulate", {}).get("n", 400))
    k, b = est.get("k", 2), est.get("bandwidth", 0.1)
    if b * n < 2 * k:
        diags.append(Diagnostic("warning", "estimate.bandwidth",
                                "LocPolyConfig invariant bandwidth*n >= 2k fails (%g < %d)" % (b * n, 2 * k)))
    model = cfg["model"]
    if model.get("family") in ("inar", "inarch") and "truncation_N" in model:
        try:
            given, floor = suggested_truncation(model)
            if given < floor:
                diags.append(Diagnostic("warning", "model.truncation_N",
                                        "N=%d is below the drift-derived floor; suggested N=%d" % (given, floor),
                                        _line_of(text, ["model", "truncation_N"])))
        except ModelSpecError as e:
            diags.append(Diagnostic("error", e.field, str(e)))
    try:
        if "f" in est:
            compile_functional(est["f"], est.get("j", 1))
    except ExpressionError as e:
        diags.append(Diagnostic("error", "estimate.f", str(e)))
    return diags


def task_name(t):
    return t if isinstance(t, str) else t["task"]


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# -- task runner -----------------------------------------------------------

def _r(x):
    return repr(float(x))


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class TaskFailure(Exception):
    pass


class Runner:
    """Executes tasks against one built model, writing files into ``out``."""

    def __init__(self, cfg, out, seed=None):
        self.cfg = cfg
        self.out = out
        self.seed = int(cfg.get("seed", 0) if seed is None else seed)
        self.thresholds = dict(DEFAULT_THRESHOLDS, **cfg.get("thresholds", {}))
        self.built = build_model(cfg["model"])
        self.fam = self.built.family
        grids = cfg.get("grids", {})
        self.u_grid = [float(u) for u in grids.get("u", np.round(np.linspace(0, 1, 11), 12))]
        self.b_list = grids.get("b", [0.4, 0.2, 0.1, 0.05])
        self.n_list = grids.get("n", [100, 200, 400, 800])
        self.h_list = grids.get("h", [0.1, 0.05, 0.025])
        self.k = min(int(cfg.get("k", 3)), self.fam.order_k)
        self.manifest_path = os.path.join(out, "manifest.json")
        self.entries = {}
        if os.path.exists(self.manifest_path):
            with open(self.manifest_path) as fh:
                old = json.load(fh)
            if old.get("config_sha256") == config_hash(cfg) and old.get("seed") == self.seed:
                self.entries = {e["name"]: e for e in old.get("tasks", [])}

    # helpers
    def write(self, name, text):
        path = os.path.join(self.out, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return name

    def file_hash(self, name):
        with open(os.path.join(self.out, name), "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()

    def run_task(self, spec):
        name = task_name(spec)
        params = {} if isinstance(spec, str) else {k: v for k, v in spec.items() if k != "task"}
        fn = getattr(self, "task_" + name)
        try:
            passed, files, summary, reason = fn(**params)
        except ContractViolation as e:
            passed, files, summary, reason = False, [], {}, "%s: %s" % (type(e).__name__, e)
        entry = {"name": name, "passed": bool(passed), "files": {f: self.file_hash(f) for f in files},
                 "summary": summary}
        if reason:
            entry["reason"] = reason
        self.entries[name] = entry
        return entry

    def manifest(self, order):
        import numba
        import scipy

        return {
            "config_sha256": config_hash(self.cfg),
            "seed": self.seed,
            "versions": {"locstat": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "numba": numba.__version__, "python": platform.python_version()},
            "backend": backend_name(),
            "thresholds": self.thresholds,
            "tasks": [self.entries[n] for n in order if n in self.entries],
            "passed": all(self.entries[n]["passed"] for n in order if n in self.entries),
        }

    def save_manifest(self, order):
        m = self.manifest(order)
        with open(self.manifest_path, "w") as fh:
            json.dump(m, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return m

    # tasks
    def task_invariant(self):
        from .oracle import NonUniqueInvariant, stationary_vector

        rows = []
        for u in self.u_grid:
            try:
                pi = stationary_vector(self.fam.matrix(u))
            except NonUniqueInvariant as e:
                return False, [], {}, "invariant law not unique at u=%g: %s" % (u, e)
            rows += [[_r(u), i, _r(p)] for i, p in enumerate(pi)]
        return True, [self.write("invariant.csv", _csv(["u", "state", "pi"], rows))], {}, ""

    def task_derivatives(self):
        from .oracle import derivative_recursion, fd_derivative_oracle, stencil_reach, FD_STEP

        tol = self.thresholds["derivative_rel_err_discretized" if self.built.discretized else "derivative_rel_err"]
        rows, worst = [], 0.0
        summary = {}
        for u in self.u_grid:
            bundle = derivative_recursion(self.fam, u, self.k)
            arr = bundle.array()
            if u == 0.0:
                summary["dpi_du_u0"] = [float(x) for x in arr[1]]
            for ell in range(1, self.k + 1):
                h = FD_STEP[ell]
                if u - stencil_reach(ell) * h >= 0 and u + stencil_reach(ell) * h <= 1:
                    fd = fd_derivative_oracle(self.fam, u, ell).weights
                    rel = float(np.max(np.abs(arr[ell] - fd)) / max(np.max(np.abs(fd)), 1e-12))
                    worst = max(worst, rel)
                else:
                    fd, rel = np.full(arr.shape[1], np.nan), float("nan")
                for i in range(arr.shape[1]):
                    rows.append([_r(u), ell, i, _r(arr[ell, i]), _r(fd[i]), _r(rel)])
        summary["max_rel_err"] = worst
        passed = worst <= tol
        f = self.write("derivatives.csv", _csv(["u", "ell", "state", "value", "fd_value", "rel_err"], rows))
        return passed, [f], summary, "" if passed else "derivative vs FD relative error %.3g > %g" % (worst, tol)

    def task_taylor(self):
        from .oracle import taylor_sweep

        sweep, _ = taylor_sweep(self.fam, self.u_grid, self.h_list, self.k)
        rows, ok = [], True
        for k, u, h, rem, bound in sweep:
            good = rem <= bound * (1 + 1e-9) + 1e-14
            ok &= good
            rows.append([k, _r(u), _r(h), _r(rem), _r(bound), int(good)])
        f = self.write("taylor.csv", _csv(["k", "u", "h", "remainder", "bound", "ok"], rows))
        return ok, [f], {}, "" if ok else "Taylor remainder exceeds M|h|^k/k!"

    def task_ergodicity(self):
        from .ergodicity import certify_family, report_csv, simultaneous_sweep

        ok, certs = certify_family(self.fam, u_grid=self.u_grid)
        kmax, cmax, fits = simultaneous_sweep(self.fam, u_grid=self.u_grid)
        by_u = {us[0]: c for us, c in certs if len(set(us)) == 1}
        f = self.write("ergodicity.csv", report_csv(fits, by_u))
        k0 = next((fit.kappa_hat for fit in fits if fit.u == 0.0), None)
        summary = {"kappa_hat_u0": k0, "sup_kappa_hat": kmax, "sup_C_hat": cmax, "certificates_ok": ok}
        passed = kmax < 1
        reason = "" if passed else "sup kappa_hat = %g is not below 1" % kmax
        return passed, [f], summary, reason

    def task_local_stationarity(self):
        from .oracle import local_stationarity_sweep

        rows, ratios = local_stationarity_sweep(self.fam, self.n_list)
        lo, hi = self.thresholds["local_stationarity_ratio_lo"], self.thresholds["local_stationarity_ratio_hi"]
        passed = all(lo <= r <= hi for r in ratios)
        f = self.write("local_stationarity.csv",
                       _csv(["n", "sup_gap", "n_sup_gap"], [[n, _r(g), _r(s)] for n, g, s in rows]))
        return passed, [f], {"ratios": ratios}, "" if passed else "n*gap ratio outside [%g, %g]" % (lo, hi)

    def _sim_settings(self):
        s = self.cfg.get("simulate", {})
        return int(s.get("n", 200)), int(s.get("replicates", 1000)), s.get("burn_in")

    def task_simulate(self):
        from .oracle import forward_marginals
        from .simulate import SimulationPlan, empirical_marginals, sample_triangular_array, write_binary

        n, R, burn = self._sim_settings()
        model = self.built.sampler_model
        paths = sample_triangular_array(SimulationPlan(n, R, self.seed, model, burn))
        write_binary(os.path.join(self.out, "simulate.lsmc"), paths)
        files = ["simulate.lsmc"]
        summary = {"n": n, "replicates": R, "dtype": "f8" if paths.dtype.kind == "f" else "i8"}
        passed, reason = True, ""
        if self.built.native is None:
            m = self.fam.size
            emp = empirical_marginals(paths, m)
            exact = forward_marginals(self.fam, n)
            tv = np.array([np.abs(emp[t] - exact[t].weights).sum() for t in range(n + 1)])
            bound = self.thresholds["simulate_tv_factor"] * np.sqrt(m / R)
            files.append(self.write("simulate_tv.csv", _csv(["t", "tv"], [[t, _r(v)] for t, v in enumerate(tv)])))
            summary.update({"max_tv": float(tv.max()), "tv_bound": float(bound)})
            passed = bool(tv.max() <= bound)
            reason = "" if passed else "empirical marginal TV %.3g > %.3g" % (tv.max(), bound)
        return passed, files, summary, reason

    def _paths(self):
        from .simulate import read_binary

        entry = self.entries.get("simulate")
        if entry is None or "simulate.lsmc" not in entry["files"]:
            raise ContractViolation("no simulate output recorded in the manifest")
        if self.file_hash("simulate.lsmc") != entry["files"]["simulate.lsmc"]:
            raise ContractViolation("simulate.lsmc does not match the manifest hash")
        return read_binary(os.path.join(self.out, "simulate.lsmc"), entry["summary"]["dtype"])

    def _embed(self):
        vals = self.fam.space.values()
        if self.built.native is not None:
            return None  # native paths already hold real values
        return vals

    def task_estimate(self):
        from .locpoly import LocPolyConfig, fit_local_poly, functional_data, psi_exact

        e = self.cfg.get("estimate", {})
        j, k = int(e.get("j", 1)), int(e.get("k", 2))
        f = compile_functional(e.get("f", "x"), j)
        cfg = LocPolyConfig(k, float(e.get("bandwidth", 0.1)), e.get("kernel", "epanechnikov"), j, f)
        grid = np.linspace(0, 1, int(e.get("grid", 101)))
        if e.get("source", "simulate") == "exact":
            n = int(e.get("n", self._sim_settings()[0]))
            y = psi_exact(self.fam, f, j, np.arange(1, n - j + 2) / n)
        else:
            paths = self._paths()
            n = paths.shape[1] - 1
            y = functional_data(paths[int(e.get("replicate", 0))][None, :], f, j, self._embed())[0]
        cfg.check_n(n)
        rows = []
        for u in grid:
            fit = fit_local_poly(y, float(u), cfg, n)
            rows.append([_r(u), _r(fit.psi)] + [_r(fit.derivative(ell)) for ell in range(1, k)] + [fit.flag])
        header = ["u", "psi_hat"] + ["d%d_hat" % ell for ell in range(1, k)] + ["flag"]
        return True, [self.write("estimate.csv", _csv(header, rows))], {"n": n}, ""

    def task_bias_sweep(self):
        from .locpoly import bias_sweep

        s = self.cfg.get("bias_sweep", {})
        k, u, j = int(s.get("k", 2)), float(s.get("u", 0.5)), int(s.get("j", 1))
        f = compile_functional(s.get("f", "x"), j)
        res = bias_sweep(self.fam, f, j, u, k, self.b_list, int(s.get("n", 2000)))
        hw = self.thresholds["bias_slope_halfwidth"]
        passed = res.exact or (res.slope is not None and abs(res.slope - k) <= hw)
        f1 = self.write("bias_sweep.csv", _csv(["b", "bias"], [[_r(b), _r(v)] for b, v in res.rows]))
        f2 = self.write("bias_sweep.json", json.dumps(res.to_json(), indent=2, sort_keys=True) + "\n")
        reason = "" if passed else "bias slope %.3f outside %d +/- %g" % (res.slope, k, hw)
        return passed, [f1, f2], {"slope": res.slope, "exact": res.exact}, reason

    def task_variance_sweep(self):
        from .locpoly import LocPolyConfig, variance_sweep

        s = self.cfg.get("variance_sweep", {})
        j, k = int(s.get("j", 1)), int(s.get("k", 2))
        f = compile_functional(s.get("f", "x"), j)
        n_list = self.cfg.get("grids", {}).get("n", [200, 400, 800, 1600])
        cfg = LocPolyConfig(k, float(s.get("bandwidth", 0.2)), "epanechnikov", j, f)
        model = self.built.sampler_model
        res = variance_sweep(model, f, j, float(s.get("u", 0.5)), cfg, n_list, int(s.get("replicates", 500)),
                             self.seed)
        lo, hi = self.thresholds["variance_slope_lo"], self.thresholds["variance_slope_hi"]
        passed = lo <= res.slope <= hi
        f1 = self.write("variance_sweep.csv", _csv(["n", "b", "variance", "jackknife_se"],
                                                   [[n, _r(b), _r(v), _r(se)] for n, b, v, se in res.rows]))
        f2 = self.write("variance_sweep.json", json.dumps(res.to_json(), indent=2, sort_keys=True) + "\n")
        reason = "" if passed else "variance slope %.3f outside [%g, %g]" % (res.slope, lo, hi)
        return passed, [f1, f2], {"slope": res.slope}, reason

    def task_covariance(self):
        from .locpoly import LocPolyConfig, covariance_curve

        e = self.cfg.get("estimate", {})
        paths = self._paths()
        cfg = LocPolyConfig(int(e.get("k", 2)), float(e.get("bandwidth", 0.1)), e.get("kernel", "epanechnikov"))
        b = cfg.bandwidth
        grid = [u for u in self.u_grid if b <= u <= 1 - b]
        fam = self.fam if self.built.native is None else None
        curve = covariance_curve(fam, grid, cfg, paths, embed=self._embed() if fam is None else None)
        passed, reason = True, ""
        if curve.exact is not None:
            slack = self.thresholds["covariance_se_factor"] * curve.mc_se + self.thresholds["covariance_abs_slack"]
            err = np.abs(curve.estimate - curve.exact)
            passed = bool(np.all(err <= slack))
            reason = "" if passed else "covariance estimate off by %.3g" % err.max()
        return passed, [self.write("covariance.csv", curve.to_csv())], {}, reason


# -- entry points ----------------------------------------------------------

def _read_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        return None, [Diagnostic("error", "--config", str(e))]
    return parse_config(text)


def _prepare(args):
    cfg, diags = _read_config(args.config)
    for d in diags:
        print(d, file=sys.stderr)
    if cfg is None or any(d.level == "error" for d in diags):
        return None, None
    out = args.out or cfg.get("output_dir", "locstat_out")
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write_test")
        open(probe, "w").close()
        os.remove(probe)
    except OSError as e:
        print("error: output_dir: not writable: %s" % e, file=sys.stderr)
        return None, None
    return cfg, out


def _configure_threads(args):
    n = args.threads if getattr(args, "threads", None) is not None else int(os.environ.get("LOCSTAT_THREADS", "0"))
    set_threads(n)


def _execute(cfg, out, seed, names):
    try:
        runner = Runner(cfg, out, seed)
    except ModelSpecError as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolation as e:
        print("error: model: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    specs = {task_name(t): t for t in cfg.get("tasks", [])}
    order = [task_name(t) for t in cfg.get("tasks", [])]
    status = EXIT_OK
    for name in names:
        entry = runner.run_task(specs.get(name, name))
        mark = "pass" if entry["passed"] else "FAIL"
        print("%-20s %s%s" % (name, mark, "" if entry["passed"] else "  (%s)" % entry.get("reason", "")))
        if not entry["passed"]:
            status = EXIT_FAIL
    full_order = order + [n for n in names if n not in order]
    runner.save_manifest(full_order)
    return status


def cmd_run(args):
    cfg, out = _prepare(args)
    if cfg is None:
        return EXIT_CONFIG
    return _execute(cfg, out, args.seed, [task_name(t) for t in cfg.get("tasks", [])])


def cmd_validate(args):
    cfg, diags = _read_config(args.config)
    for d in diags:
        print(d, file=sys.stderr)
    return EXIT_CONFIG if cfg is None or any(d.level == "error" for d in diags) else EXIT_OK


def _single(task):
    def cmd(args):
        cfg, out = _prepare(args)
        if cfg is None:
            return EXIT_CONFIG
        return _execute(cfg, out, args.seed, [task])
    return cmd


def _model_from_file(path):
    with open(path) as fh:
        cfg = json.load(fh)
    return cfg.get("model", cfg), cfg


def cmd_estimate(args):
    from .locpoly import LocPolyConfig, fit_local_poly, functional_data
    from .simulate import SimulationPlan, sample_triangular_array

    try:
        model_spec, cfg = _model_from_file(args.model)
        built = build_model(model_spec)
        f = compile_functional(args.f, args.j)
        lp = LocPolyConfig(args.k, args.bandwidth, args.kernel, args.j, f)
        lp.check_n(args.n)
    except (OSError, json.JSONDecodeError, ContractViolation) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    paths = sample_triangular_array(SimulationPlan(args.n, 1, seed, built.sampler_model))
    embed = built.family.space.values() if built.native is None else None
    y = functional_data(paths, f, args.j, embed)[0]
    rows = []
    for u in np.linspace(0, 1, args.grid):
        fit = fit_local_poly(y, float(u), lp, args.n)
        rows.append([_r(u), _r(fit.psi)] + [_r(fit.derivative(ell)) for ell in range(1, args.k)] + [fit.flag])
    text = _csv(["u", "psi_hat"] + ["d%d_hat" % ell for ell in range(1, args.k)] + ["flag"], rows)
    _emit(args.out, "estimate.csv", text)
    return EXIT_OK


def _emit(out, name, text):
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, name), "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_sweep(args):
    from .locpoly import LocPolyConfig, bias_sweep, variance_sweep

    try:
        model_spec, cfg = _model_from_file(args.model)
        built = build_model(model_spec)
        f = compile_functional(args.f, args.j)
    except (OSError, json.JSONDecodeError, ContractViolation) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.kind == "bias":
        res = bias_sweep(built.family, f, args.j, args.u, args.k, args.b_list, args.n_list[-1])
        text = _csv(["b", "bias"], [[_r(b), _r(v)] for b, v in res.rows])
        passed = res.exact or (res.slope is not None and abs(res.slope - args.k) <= 0.35)
    else:
        lp = LocPolyConfig(args.k, args.bandwidth, "epanechnikov", args.j, f)
        res = variance_sweep(built.sampler_model, f, args.j, args.u, lp, args.n_list, args.replicates, seed)
        text = _csv(["n", "b", "variance", "jackknife_se"], [[n, _r(b), _r(v), _r(s)] for n, b, v, s in res.rows])
        passed = -1.25 <= res.slope <= -0.75
    _emit(args.out, "%s_sweep.csv" % args.kind, text)
    summary = dict(res.to_json(), passed=bool(passed))
    if args.out:
        _emit(args.out, "%s_sweep.json" % args.kind, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        print(json.dumps({"slope": res.slope, "passed": bool(passed)}), file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAIL


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="locstat", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version="locstat " + __version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="experiment JSON")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed (u64)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="worker threads, 0 = auto (LOCSTAT_THREADS)")

    common(sub.add_parser("run", help="run every task in the config"))
    sp = sub.add_parser("validate", help="check a config without running it")
    sp.add_argument("--config", required=True)
    for task in ("invariant", "derivatives", "ergodicity", "simulate"):
        common(sub.add_parser(task, help="run only the %s task" % task))

    sp = sub.add_parser("estimate", help="simulate one path and fit psi_f on a u grid")
    common(sp, config=False)
    sp.add_argument("--model", required=True, help="JSON file with a model block")
    sp.add_argument("--f", default="x", help="functional of the block, e.g. 'x1*x2'")
    sp.add_argument("--j", type=int, default=1)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--bandwidth", type=float, default=0.1)
    sp.add_argument("--kernel", default="epanechnikov", choices=["epanechnikov", "triangular", "uniform"])
    sp.add_argument("--grid", type=int, default=101)
    sp.add_argument("--n", type=int, default=1000)

    sp = sub.add_parser("sweep", help="bias or variance order sweep")
    common(sp, config=False)
    sp.add_argument("kind", choices=["bias", "variance"])
    sp.add_argument("--model", required=True)
    sp.add_argument("--f", default="x")
    sp.add_argument("--j", type=int, default=1)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--u", type=float, default=0.5)
    sp.add_argument("--bandwidth", type=float, default=0.2)
    sp.add_argument("--b-list", type=_floats, default=[0.4, 0.2, 0.1, 0.05])
    sp.add_argument("--n-list", type=_ints, default=[200, 400, 800, 1600])
    sp.add_argument("--replicates", type=int, default=500)
    return p


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "estimate": cmd_estimate, "sweep": cmd_sweep,
            "invariant": _single("invariant"), "derivatives": _single("derivatives"),
            "ergodicity": _single("ergodicity"), "simulate": _single("simulate")}


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_threads(args)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
