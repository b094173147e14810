"""Batch front door: `platecont <command> --config file.json [--out dir]`.

Commands read a JSON config, run one analysis and write JSON (and CSV
where tabular) reports into the output directory.  Exit codes: 0 for
success, 2 for an analysis-level rejection (dichotomy violated,
inadmissible radii), 1 for errors.  Reports embed the config hash and
package version; re-running with the same config and seed reproduces
byte-identical output except for the timestamp field.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._util import config_hash, jsonable
from .carleman_frame import ConstantMetric, QuadraticWeight, normalize_pair
from .continuation import plan_chain, propagate
from .elasticity import ElasticityTensorSpec, classify_dichotomy, evaluate_tensor, quartic_coefficients
from .fields import Grid, Rect, ScalarField, load_field_binary, save_field_binary, save_field_csv, test_function
from .inequalities import (
    AdmissibilityError,
    CertificateConstants,
    carleman_fourth_order,
    carleman_second_order,
    three_sphere_v1,
    three_sphere_v2,
    three_sphere_v3,
)
from .plate_solver import PlateProblem, solve
from .symbol_factor import explicit_constants, factor_field, metrics_from_roots, solve_quartic

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2


def _load_config(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _report_skeleton(cmd: str, cfg: dict, seed) -> dict:
    return {
        "command": cmd,
        "version": __version__,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "threads": os.environ.get("PLATECONT_THREADS", ""),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _write_report(out_dir: Path, name: str, report: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w") as fh:
        json.dump(jsonable(report), fh, indent=2, sort_keys=True)
    return path


def _tensor_from_cfg(cfg: dict) -> ElasticityTensorSpec:
    t = cfg["tensor"]
    if isinstance(t, str):
        return ElasticityTensorSpec.load(t)
    return ElasticityTensorSpec.from_json(t)


def cmd_classify(cfg: dict, out: Path, seed, grid_n) -> int:
    spec = _tensor_from_cfg(cfg)
    region = tuple(cfg["region"])
    step = float(cfg.get("sample_step", 0.05))
    tol = cfg.get("tol")
    report = classify_dichotomy(spec, region, step, tol)
    doc = _report_skeleton("classify", cfg, seed)
    doc["report"] = report.to_json()
    _write_report(out, "classify.json", doc)
    print(f"dichotomy verdict: {report.verdict}")
    return EXIT_OK if report.verdict in ("Positive", "Zero") else EXIT_REJECTED


def cmd_factor(cfg: dict, out: Path, seed, grid_n) -> int:
    spec = _tensor_from_cfg(cfg)
    n = grid_n or int(cfg.get("grid", 33))
    hw = float(cfg.get("halfwidth", 1.0))
    xs = np.linspace(-hw, hw, n)
    ff = factor_field(spec, xs, xs)
    ff.save(str(out / "factor_field"))
    doc = _report_skeleton("factor", cfg, seed)
    doc["dichotomy"] = ff.dichotomy
    doc["lipschitz"] = ff.lipschitz
    doc["hessian"] = ff.hessian
    doc["swap_flags"] = [list(t) for t in ff.swap_flags]
    _write_report(out, "factor.json", doc)
    print(f"factor field on {n}x{n} grid: dichotomy {ff.dichotomy}")
    return EXIT_OK


def cmd_constants(cfg: dict, out: Path, seed, grid_n) -> int:
    if "tensor" in cfg:
        spec = _tensor_from_cfg(cfg)
        gamma, M = spec.gamma, spec.M
        q = quartic_coefficients(evaluate_tensor(spec, np.zeros(2)))
        pair = metrics_from_roots(solve_quartic(q), q.a0)
        g1, g2 = pair.g1, pair.g2
    else:
        gamma, M = float(cfg["gamma"]), float(cfg["M"])
        g1 = np.asarray(cfg.get("g1_origin", np.eye(2).tolist()))
        g2 = np.asarray(cfg.get("g2_origin", np.eye(2).tolist()))
    consts = explicit_constants(gamma, M, g1, g2, margin=float(cfg.get("margin", 0.10)))
    doc = _report_skeleton("constants", cfg, seed)
    doc["constants"] = consts.to_json()
    doc["frame"] = normalize_pair(g1, g2).to_json()
    _write_report(out, "constants.json", doc)
    print(
        f"gamma1={consts.gamma1:.6g} gamma2={consts.gamma2:.6g} "
        f"beta_practical={consts.beta_practical:.6g}"
    )
    return EXIT_OK


def cmd_carleman(cfg: dict, out: Path, seed, grid_n) -> int:
    order = int(cfg.get("order", 2))
    n = grid_n or int(cfg.get("grid", 257))
    hw = float(cfg.get("halfwidth", 0.6))
    grid = Grid.square(n, hw)
    taus = [float(t) for t in cfg.get("taus", [5, 10, 20])]
    beta = float(cfg["beta"])
    tf = cfg.get(
        "test_function", {"r_in": 0.2, "r_out": 0.5, "m": 0, "smoothness": 5}
    )
    doc = _report_skeleton("carleman", cfg, seed)
    if order == 2:
        Gamma = np.asarray(cfg.get("Gamma", np.eye(2).tolist()))
        weight = QuadraticWeight(Gamma, beta)
        metric = ConstantMetric(np.asarray(cfg.get("metric", np.eye(2).tolist())))
        u = test_function(
            grid, tf["r_in"], tf["r_out"], tf.get("m", 0), tf.get("smoothness", 5),
            weight=weight,
        )
        rep = carleman_second_order(metric, weight, u, taus, test_id="cli")
    elif order == 4:
        spec = _tensor_from_cfg(cfg)
        q = quartic_coefficients(evaluate_tensor(spec, np.zeros(2)))
        pair = metrics_from_roots(solve_quartic(q), q.a0)
        frame = normalize_pair(pair.g1, pair.g2)
        weight = QuadraticWeight.from_mu(frame.mu, beta)
        m1 = ConstantMetric(frame.Psi @ pair.g1 @ frame.Psi.T)
        m2 = ConstantMetric(frame.Psi @ pair.g2 @ frame.Psi.T)
        u = test_function(
            grid, tf["r_in"], tf["r_out"], tf.get("m", 0), tf.get("smoothness", 5),
            weight=weight,
        )
        rep = carleman_fourth_order(m1, m2, weight, u, taus, test_id="cli")
    else:
        raise ValueError("order must be 2 or 4")
    doc["report"] = rep.to_json()
    _write_report(out, "carleman.json", doc)
    rep.save_csv(out / "carleman.csv")
    print("tau ratios:", " ".join(f"{r:.4g}" for r in rep.ratios))
    return EXIT_OK


def _bc_from_cfg(cfg_bc) -> tuple:
    kind = cfg_bc.get("kind", "clamped")
    if kind == "clamped":
        return ("clamped",)
    if kind == "polynomial":
        table = np.asarray(cfg_bc["coeffs"], dtype=float)

        def u_exact(p):
            return np.polynomial.polynomial.polyval2d(p[..., 0], p[..., 1], table)

        return ("manufactured", u_exact)
    if kind == "bump_pair":
        amp = float(cfg_bc.get("amplitude", 1.0))
        ang = float(cfg_bc.get("center_angle", 0.0))
        width = float(cfg_bc.get("width", 0.5))

        def g1(p):
            th = np.arctan2(p[..., 1], p[..., 0])
            d = np.arctan2(np.sin(th - ang), np.cos(th - ang))
            return amp * np.exp(-((d / width) ** 2))

        def g2(p):
            return np.zeros(p.shape[:-1])

        return ("dirichlet_pair", g1, g2)
    raise ValueError(f"unknown bc kind {kind!r}")


def _rhs_from_cfg(cfg_rhs):
    if not cfg_rhs:
        return None
    f_cfg = cfg_rhs.get("f")
    if f_cfg is None:
        return None
    if f_cfg["kind"] == "constant":
        v = float(f_cfg["value"])

        def f(p):
            return np.full(p.shape[:-1], v)

    elif f_cfg["kind"] == "gaussian":
        amp = float(f_cfg.get("amplitude", 1.0))
        cx, cy = f_cfg.get("center", [0.0, 0.0])
        width = float(f_cfg.get("width", 0.2))

        def f(p):
            return amp * np.exp(-(((p[..., 0] - cx) ** 2 + (p[..., 1] - cy) ** 2) / width**2))

    else:
        raise ValueError(f"unknown rhs kind {f_cfg['kind']!r}")
    return (f, None, None)


def cmd_solve(cfg: dict, out: Path, seed, grid_n) -> int:
    spec = _tensor_from_cfg(cfg)
    dom = cfg.get("domain", {"kind": "disk", "R": 1.0})
    if dom["kind"] == "disk":
        domain = ("disk", float(dom["R"]))
    else:
        domain = ("rect", float(dom["a"]), float(dom["b"]))
    problem = PlateProblem(
        spec=spec,
        domain=domain,
        bc=_bc_from_cfg(cfg.get("bc", {"kind": "clamped"})),
        rhs=_rhs_from_cfg(cfg.get("rhs")),
    )
    n = grid_n or int(cfg.get("grid", 129))
    grid = problem.make_grid(n)
    report = solve(problem, grid)
    save_field_binary(report.field, out / "solution", mask_id=dom["kind"])
    save_field_csv(report.field, out / "solution.csv")
    doc = _report_skeleton("solve", cfg, seed)
    doc["residual"] = report.residual
    doc["energy"] = report.energy
    doc["h2_norm"] = report.h2_norm
    doc["h"] = report.h
    _write_report(out, "solve.json", doc)
    print(f"solved on {n}x{n}: residual {report.residual:.3e}, energy {report.energy:.6g}")
    return EXIT_OK


def cmd_threesphere(cfg: dict, out: Path, seed, grid_n) -> int:
    sol_prefix = cfg["solution"]
    if not Path(str(sol_prefix) + ".json").exists():
        raise FileNotFoundError(f"solution sidecar {sol_prefix}.json not found")
    u = load_field_binary(sol_prefix)
    radii = cfg["radii"]
    ccfg = cfg.get("constants", {})
    consts = CertificateConstants(
        beta=float(ccfg.get("beta", 0.5)),
        gamma2=float(ccfg.get("gamma2", 1.0)),
        s_pract=float(ccfg.get("s_pract", 0.5)),
        label=ccfg.get("label", "practical"),
    )
    version = cfg.get("version", "v3")
    fn = {"v1": three_sphere_v1, "v2": three_sphere_v2, "v3": three_sphere_v3}[version]
    cert = fn(
        u, float(radii["r"]), float(radii["rho"]), float(radii["rho1"]),
        float(radii["R"]), consts,
    )
    doc = _report_skeleton("threesphere", cfg, seed)
    doc["certificate"] = cert.to_json()
    _write_report(out, "threesphere.json", doc)
    print(
        f"{version}: theta={cert.theta:.6g} C_emp={cert.C_emp:.6g} "
        f"admissible={cert.admissible}"
    )
    return EXIT_OK if cert.admissible else EXIT_REJECTED


def cmd_propagate(cfg: dict, out: Path, seed, grid_n) -> int:
    u = load_field_binary(cfg["solution"])
    ob = cfg["omega"]
    gb = cfg["G"]
    omega = Rect(*[float(v) for v in ob])
    G = Rect(*[float(v) for v in gb])
    sx, sy, r0 = cfg["start"]
    r = float(cfg["r"])
    consts_cfg = cfg.get("constants", {})
    consts = CertificateConstants(
        beta=float(consts_cfg.get("beta", 0.5)),
        gamma2=float(consts_cfg.get("gamma2", 1.0)),
        s_pract=float(consts_cfg.get("s_pract", 0.5)),
    )
    plan = plan_chain(omega, G, (sx, sy), float(r0), r)
    report = propagate(u, plan, omega, consts, cfg.get("eta"), cfg.get("E0"))
    doc = _report_skeleton("propagate", cfg, seed)
    doc["plan"] = plan.to_json()
    doc["report"] = report.to_json()
    _write_report(out, "propagate.json", doc)
    plan.save_polyline_csv(out / "chain.csv")
    ok = report.failure_index is None
    print(
        f"chain N={report.N} delta_emp={report.delta_emp:.4g} "
        f"bound_holds={report.bound_holds()}"
    )
    return EXIT_OK if ok else EXIT_REJECTED


COMMANDS = {
    "classify": cmd_classify,
    "factor": cmd_factor,
    "constants": cmd_constants,
    "carleman": cmd_carleman,
    "solve": cmd_solve,
    "threesphere": cmd_threesphere,
    "propagate": cmd_propagate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="platecont",
        description="plate symbol factorization, weighted estimates and certificates",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", default="platecont_out", help="output directory")
    parser.add_argument("--grid", type=int, default=None, help="grid resolution override")
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
        np.random.seed(args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](cfg, out_dir, args.seed, args.grid)
    except (AdmissibilityError,) as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return code


if __name__ == "__main__":
    sys.exit(main())
