"""Command-line front end: ``hopfcycle <subcommand> --config scenario.json``."""

from __future__ import annotations

import argparse
import cmath
import csv
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .center_hopf import (
    ComplexTaylorMap,
    kill_quadratic,
    lyapunov_coefficient,
    ns_report,
    printed_formula_alpha,
)
from .contraction import ImplicitScalarProblem, ImplicitSystemProblem, solve_scalar, solve_system
from .errors import ConfigError, HopfCycleError, MeshExplosion, NotContractive, ResonanceGuard
from .fixed_points import (
    NSLocusSolver,
    near_resonance,
    rho_value,
    system_coefficients,
    t_for_trace,
    trace_interval,
)
from .invariance import grow_unstable_set, stable_manifold_distance, write_cloud_csv
from .maps import NormalFormTestMap, ParamTriple, ToyModelConfig, ToyUnfolding, saddle_multipliers
from .scenarios import PS_CENTER, PSI_MID, toy_ns_point
from .tangency import (
    OmegaWindow,
    WindowKind,
    e_k_quantity,
    eta_star,
    expanding_quantity,
    extract_global_coefficients,
    omega_for_phase,
    omega_window_contains,
    quadratic_tangency_find,
)

log = logging.getLogger("hopfcycle")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RESONANCE, EXIT_BUDGET = 0, 1, 2, 3, 4

TOP_KEYS = {"model", "params", "sweep", "solver", "output", "seed"}
MODELS = {"Toy", "NormalFormTest", "UserCoefficients"}
PARAM_KEYS = {
    "toy-verify": {"eps", "lambda", "gamma", "omega", "mu", "rho"},
    "ns-scan": {"eps", "gamma", "delta_dom"},
    "lc": {"psi", "coefficients", "limit"},
    "manifold": {
        "eps", "gamma", "delta_dom", "delta_prime_dom", "k", "phase_offset", "psi", "lc", "kappa",
        "seed_radius", "max_generations", "budget", "n_seed", "stable_level",
    },
    "solve-implicit": {"kind", "x", "G", "a", "shift", "coupling", "x_box", "y_box"},
}
SWEEP_KEYS = {"k", "t", "omega", "phase_offsets", "window"}
SOLVER_KEYS = {"tol", "unit_tol"}
OUTPUT_KEYS = {"csv", "json", "cloud"}
CSV_COLUMNS = ["k", "t", "omega", "mu", "rho", "psi", "nu1_re", "nu1_im", "nu3", "lc", "verdict", "e_k", "E_quantity", "flags"]
COEFF_NAMES = {"z20": (2, 0), "z11": (1, 1), "z02": (0, 2), "z30": (3, 0), "z21": (2, 1), "z12": (1, 2), "z03": (0, 3)}


def fmt(v) -> str:
    """17 significant digits; integers and strings pass through."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


# --------------------------------------------------------------------------
# configuration


def load_scenario(path: str | None, command: str, seed: int | None) -> dict:
    cfg: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(cfg, TOP_KEYS, "top level")
    default_model = "NormalFormTest" if command == "solve-implicit" else "Toy"
    cfg.setdefault("model", default_model)
    if cfg["model"] not in MODELS:
        raise ConfigError(f"unknown model {cfg['model']!r}")
    for key, allowed in (("params", PARAM_KEYS[command]), ("sweep", SWEEP_KEYS), ("solver", SOLVER_KEYS), ("output", OUTPUT_KEYS)):
        section = cfg.setdefault(key, {})
        if not isinstance(section, dict):
            raise ConfigError(f"{key} must be an object")
        _reject_unknown(section, allowed, key)
    if seed is not None:
        cfg["seed"] = seed
    cfg.setdefault("seed", 0)
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    return cfg


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _num(section: dict, key: str, default):
    v = section.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number")
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite")
    return float(v)


def _family(params: dict) -> ToyUnfolding:
    return ToyUnfolding(
        eps=_num(params, "eps", 0.2), gamma=_num(params, "gamma", 3.0), delta_dom=_num(params, "delta_dom", 0.05)
    )


def _np_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def _dumps(obj, **kw) -> str:
    return json.dumps(obj, sort_keys=True, default=_np_default, **kw)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(obj, indent=2) + "\n")


# --------------------------------------------------------------------------
# toy-verify


def cmd_toy_verify(cfg: dict, out: Path) -> int:
    p = cfg["params"]
    if cfg["model"] != "Toy":
        raise ConfigError("toy-verify needs model Toy")
    toy = ToyModelConfig(
        eps=_num(p, "eps", 0.2),
        lam=_num(p, "lambda", 1.0 / 3.0),
        omega=_num(p, "omega", math.pi / 6),
        gamma=_num(p, "gamma", 3.0),
        mu=_num(p, "mu", 0.0),
    )
    rho_expected = _num(p, "rho", math.log(toy.lam * toy.gamma))
    fam = ToyUnfolding(eps=toy.eps, gamma=toy.gamma)
    system = fam(ParamTriple(toy.mu, toy.omega, math.log(toy.lam * toy.gamma)))
    checks = {}

    ev = np.linalg.eigvals(system.local.jacobian(np.zeros(3)))
    expected = np.array([toy.lam * cmath.exp(1j * toy.omega), toy.lam * cmath.exp(-1j * toy.omega), toy.gamma])
    got = sorted(ev, key=lambda z: (round(abs(z), 9), -z.imag))
    want = sorted(expected, key=lambda z: (round(abs(z), 9), -z.imag))
    err = max(max(abs(a.real - b.real), abs(a.imag - b.imag)) for a, b in zip(got, want))
    checks["multipliers"] = {"pass": err < 1e-12, "error": err}

    lam_m, _, gam_m = saddle_multipliers(system.local)
    rho = rho_value(lam_m, gam_m)
    checks["rho"] = {"pass": abs(rho - rho_expected) < 1e-14, "value": rho, "expected": rho_expected}

    target = np.array(system.m_plus, float)
    target[2] = system.global_(np.asarray(system.m_minus, float))[2]
    coeffs = extract_global_coefficients(system.global_, system.m_minus, target)
    E = expanding_quantity(coeffs)
    checks["expanding_quantity"] = {"pass": abs(E - 2.0) < 1e-10, "value": E}

    m_minus = np.asarray(system.m_minus, float)
    curve = lambda s: system.global_(m_minus + np.array([0.0, 0.0, s]))
    try:
        cert = quadratic_tangency_find(curve, 2, (-0.1, 0.1))
        pt = cert.point.array
        d_expected = 4.0 / toy.eps**2
        ok = (
            abs(cert.t_star) < 1e-8
            and np.max(np.abs(pt - np.array([0.0, 2.0, toy.mu]))) < 1e-8
            and abs(cert.d_coeff - d_expected) < 1e-6
        )
        checks["tangency"] = {"pass": bool(ok), "t_star": cert.t_star, "point": pt.tolist(), "d_coeff": cert.d_coeff}
    except HopfCycleError as exc:
        checks["tangency"] = {"pass": False, "error": str(exc)}

    report = {"model": "Toy", "params": {"eps": toy.eps}, "seed": cfg["seed"], "checks": checks}
    report["pass"] = all(c["pass"] for c in checks.values())
    _write_json(out / cfg["output"].get("json", "toy_verify.json"), report)
    print(_dumps(report))
    return EXIT_OK if report["pass"] else EXIT_CHECK


# --------------------------------------------------------------------------
# ns-scan


def _scan_grid(cfg: dict, family: ToyUnfolding) -> list[tuple[int, int, float]]:
    """(k, omega index, omega) in grid order."""
    sw = cfg["sweep"]
    ks = sw.get("k", [6, 8, 10])
    if not isinstance(ks, list) or not all(isinstance(k, int) and k > 0 for k in ks):
        raise ConfigError("sweep.k must be a list of positive integers")
    if any(k % 2 for k in ks):
        raise ConfigError("sweep.k must contain even integers only")
    coeffs = system_coefficients(family(ParamTriple(0.0, math.pi / 6, 0.0)))
    grid = []
    for k in ks:
        if "omega" in sw:
            omegas = sw["omega"]
            if not isinstance(omegas, list):
                raise ConfigError("sweep.omega must be a list")
            omegas = [float(w) for w in omegas]
        else:
            offsets = sw.get("phase_offsets", [0.0])
            centre = PS_CENTER if sw.get("window", "Ps") in ("Ps", "Ex") else None
            if centre is None:
                raise ConfigError("sweep.window must be Ps or Ex")
            omegas = [omega_for_phase(k, eta_star(coeffs), centre + float(o), math.pi / 6) for o in offsets]
        grid.extend((k, j, w) for j, w in enumerate(omegas))
    return grid


def _t_values(spec, t_lo: float, t_hi: float) -> list[float]:
    if spec is None:
        return [None]
    if isinstance(spec, list):
        return [float(t) for t in spec]
    if isinstance(spec, dict) and set(spec) <= {"n"}:
        n = int(spec.get("n", 1))
        return [float(t) for t in np.linspace(t_lo, t_hi, n + 2)[1:-1]]
    raise ConfigError("sweep.t must be a list of numbers or {\"n\": N}")


def _scan_cell(args) -> list[list[str]]:
    """All rows for one (k, omega): independent of every other cell."""
    family, k, omega, t_spec, window = args
    warnings.simplefilter("ignore", RuntimeWarning)
    coeffs = system_coefficients(family(ParamTriple(0.0, omega, 0.0)))
    E = expanding_quantity(coeffs)
    e_k = e_k_quantity(coeffs, k, omega)
    base = {"k": k, "omega": omega, "e_k": e_k, "E_quantity": E}
    flags = []
    if window == "Ex" and not omega_window_contains(OmegaWindow.from_coefficients(WindowKind.EX, k, coeffs), omega):
        flags.append("outside_ex_window")
    try:
        solver = NSLocusSolver(family, k, omega)
        t_lo, t_hi = trace_interval(family, k, omega, solver=solver)
    except HopfCycleError as exc:
        ts = t_spec if isinstance(t_spec, list) else [math.nan]
        return [_row({**base, "t": t}, flags + [_flag(exc)]) for t in ts]
    ts = _t_values(t_spec, t_lo, t_hi)
    rows = []
    for t in ts:
        row_flags = list(flags)
        if t is None:
            t = t_for_trace(solver, 2 * math.cos(PSI_MID), t_lo, t_hi)
        vals = {**base, "t": t}
        try:
            pt = solver.solve(t, guard=False)
            vals.update(mu=pt.mu, rho=pt.rho, nu1_re=pt.mults.nu1.real, nu1_im=pt.mults.nu1.imag,
                        nu3=float(np.real(pt.mults.nu3)))
            if pt.mults.psi is None:
                row_flags.append("no_complex_pair")
            else:
                vals["psi"] = pt.mults.psi
                if near_resonance(pt.mults.psi):
                    row_flags.append("resonance")
                else:
                    rep = ns_report(solver.map_at(pt), pt.fixed_point.point)
                    vals.update(lc=rep.lc, verdict=rep.verdict.value)
        except HopfCycleError as exc:
            row_flags.append(_flag(exc))
        rows.append(_row(vals, row_flags))
    return rows


def _flag(exc: Exception) -> str:
    return type(exc).__name__


def _row(vals: dict, flags: list[str]) -> list[str]:
    out = []
    for col in CSV_COLUMNS[:-1]:
        v = vals.get(col)
        out.append("" if v is None else fmt(v))
    out.append(";".join(flags))
    return out


def cmd_ns_scan(cfg: dict, out: Path, jobs: int = 1) -> int:
    if cfg["model"] != "Toy":
        raise ConfigError("ns-scan supports model Toy")
    family = _family(cfg["params"])
    grid = _scan_grid(cfg, family)
    t_spec = cfg["sweep"].get("t")
    window = cfg["sweep"].get("window", "Ps")
    tasks = [(family, k, w, t_spec, window) for k, _, w in grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_scan_cell, tasks))
    else:
        cells = [_scan_cell(t) for t in tasks]
    path = out / cfg["output"].get("csv", "ns_scan.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rows in cells:
            w.writerows(rows)
    log.info("wrote %d rows to %s", sum(len(r) for r in cells), path)
    return EXIT_OK


# --------------------------------------------------------------------------
# lc


def _complex(v, name: str) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    raise ConfigError(f"coefficient {name} must be a number or [re, im]")


def cmd_lc(cfg: dict, out: Path) -> int:
    p = cfg["params"]
    if "psi" not in p:
        raise ConfigError("lc needs params.psi")
    psi = _num(p, "psi", None)
    if not 0 < psi < math.pi:
        raise ConfigError("psi must lie in (0, pi)")
    nu = cmath.exp(1j * psi)
    coeffs = {}
    if p.get("limit"):
        coeffs = {(2, 0): nu, (1, 1): -2 * nu, (0, 2): nu}
    raw = p.get("coefficients", {})
    if not isinstance(raw, dict):
        raise ConfigError("coefficients must be an object")
    _reject_unknown(raw, set(COEFF_NAMES), "coefficients")
    for name, v in raw.items():
        coeffs[COEFF_NAMES[name]] = _complex(v, name)
    cmap = ComplexTaylorMap(nu, coeffs)
    if near_resonance(psi):
        raise ResonanceGuard(psi)
    alpha = kill_quadratic(cmap)
    lc = lyapunov_coefficient(cmap)
    alpha_p = printed_formula_alpha(cmap)
    dens = {f"{p_}{q_}": abs(nu**p_ * nu.conjugate() ** q_ - nu) for p_, q_ in ((2, 0), (1, 1), (0, 2), (3, 0), (1, 2), (0, 3))}
    report = {
        "psi": psi,
        "alpha": [alpha.real, alpha.imag],
        "lc": lc,
        "alpha_printed": [alpha_p.real, alpha_p.imag],
        "lc_printed": float(-(nu.conjugate() * alpha_p).real),
        "min_denominator": min(dens.values()),
        "denominators": dens,
        "seed": cfg["seed"],
    }
    _write_json(out / cfg["output"].get("json", "lc.json"), report)
    print(_dumps(report))
    return EXIT_OK


# --------------------------------------------------------------------------
# manifold


def cmd_manifold(cfg: dict, out: Path) -> int:
    p = cfg["params"]
    dprime = _num(p, "delta_prime_dom", 0.05 if cfg["model"] == "Toy" else 0.5)
    target = dprime**2
    if cfg["model"] == "Toy":
        family = _family(p)
        k = int(_num(p, "k", 6))
        P = toy_ns_point(k, _num(p, "phase_offset", 0.0), _num(p, "psi", PSI_MID), family)
        map_, Q = P.framed()
        lc = ns_report(P.map, P.point.fixed_point.point).lc
        seed_radius = _num(p, "seed_radius", 1e-6)
    elif cfg["model"] == "NormalFormTest":
        lc = _num(p, "lc", -1.0)
        map_ = NormalFormTestMap(_num(p, "psi", 1.0), lc, _num(p, "kappa", 0.3))
        Q = np.zeros(3)
        seed_radius = _num(p, "seed_radius", 0.1 * dprime)
    else:
        raise ConfigError("manifold supports models Toy and NormalFormTest")
    box = (np.array([-dprime, -2 * target, -dprime]), np.array([dprime, 2 * target, dprime]))
    cloud_path = out / cfg["output"].get("cloud", "cloud.csv")
    cloud_path.parent.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    try:
        cloud = grow_unstable_set(
            map_, Q, seed_radius, int(_num(p, "max_generations", 1000)), box, y_target=target,
            budget=int(_num(p, "budget", 1_000_000)), n_seed=int(_num(p, "n_seed", 64)),
        )
    except MeshExplosion as exc:
        cloud = exc.cloud
        code = EXIT_BUDGET
    write_cloud_csv(cloud, cloud_path)
    summary = {
        "model": cfg["model"],
        "lc": lc,
        "y_extent_reached": bool(cloud.reached),
        "y_extent": list(cloud.y_extent),
        "y_target": target,
        "delta_prime_dom": dprime,
        "generations": cloud.generation,
        "n_points": len(cloud),
        "budget_exceeded": code == EXIT_BUDGET,
        "min_stable_distance": None,
        "seed": cfg["seed"],
    }
    if "stable_level" in p and len(cloud):
        level = _num(p, "stable_level", 0.0)
        dist = stable_manifold_distance(cloud, lambda Z, W: np.full(np.shape(Z), level))
        summary.update(min_stable_distance=dist.min_distance, crossing=dist.crossing, evidence=dist.evidence)
    _write_json(out / cfg["output"].get("json", "manifold.json"), summary)
    print(_dumps(summary))
    return code


# --------------------------------------------------------------------------
# solve-implicit

FUNCS = {"sin": math.sin, "cos": math.cos, "tanh": math.tanh, "linear": lambda u: u}


def cmd_solve_implicit(cfg: dict, out: Path) -> int:
    """Built-in families: scalar ``y = G + a f(y + shift x)`` and systems
    ``y_j = G_j + a_j f((C y)_j + shift_j x)``."""
    p = cfg["params"]
    f = FUNCS.get(p.get("kind", "sin"))
    if f is None:
        raise ConfigError(f"kind must be one of {sorted(FUNCS)}")
    x = _num(p, "x", 0.0)
    tol = _num(cfg["solver"], "tol", 1e-12)
    x_box = tuple(p.get("x_box", (x - 1.0, x + 1.0)))
    y_box = tuple(p.get("y_box", (-1.0, 1.0)))
    G = p.get("G", 0.0)
    try:
        if isinstance(G, list):
            G = np.asarray(G, float)
            m = len(G)
            a = np.broadcast_to(np.asarray(p.get("a", 0.1), float), (m,))
            shift = np.broadcast_to(np.asarray(p.get("shift", 0.0), float), (m,))
            C = np.asarray(p.get("coupling", np.eye(m).tolist()), float)
            if C.shape != (m, m):
                raise ConfigError("coupling must be an m x m matrix")
            fv = np.vectorize(f)
            prob = ImplicitSystemProblem(
                lambda xs: G.copy(), lambda xs, y: a * fv(C @ y + shift * xs), m, x_box=x_box, y_box=y_box, seed=cfg["seed"]
            )
            sol = solve_system(prob, x, tol)
            report = {"y": sol.y.tolist(), "corrections": sol.corrections.tolist(), "residual": sol.residual}
        else:
            g, a, shift = float(G), _num(p, "a", 0.1), _num(p, "shift", 0.0)
            prob = ImplicitScalarProblem(
                lambda xs: g, lambda xs, y: a * f(y + shift * xs), x_box=x_box, y_box=y_box, seed=cfg["seed"]
            )
            sol = solve_scalar(prob, x, tol)
            report = {"y": sol.y, "correction": sol.correction, "iterations": sol.iterations, "residual": sol.residual}
    except NotContractive as exc:
        report = {"error": "NotContractive", "bound": exc.bound}
        print(_dumps(report))
        return EXIT_CHECK
    report["seed"] = cfg["seed"]
    _write_json(out / cfg["output"].get("json", "implicit.json"), report)
    print(_dumps(report))
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hopfcycle", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in PARAM_KEYS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="scenario JSON file")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        sp.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = load_scenario(args.config, args.command, args.seed)
        if args.command == "toy-verify":
            return cmd_toy_verify(cfg, out)
        if args.command == "ns-scan":
            return cmd_ns_scan(cfg, out, args.jobs)
        if args.command == "lc":
            return cmd_lc(cfg, out)
        if args.command == "manifold":
            return cmd_manifold(cfg, out)
        return cmd_solve_implicit(cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResonanceGuard as exc:
        print(f"resonance: {exc}", file=sys.stderr)
        return EXIT_RESONANCE
    except MeshExplosion as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except HopfCycleError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
