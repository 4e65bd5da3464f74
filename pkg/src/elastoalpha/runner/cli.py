"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime divergence/abort.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ..alphacore import make_params, spectral_sweep, stability_limit
from ..diagnostics import TimeSeriesRecorder, convergence_study, l2_error, l2_norm, write_convergence_csv
from ..errors import ConfigError, DivergenceError, ElastoAlphaError
from ..marcher import run
from .config import load_config, write_echo
from .output import VTKSnapshots
from .scenarios import Setup, adaptivity_from, get_scenario

log = logging.getLogger("elastoalpha")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_setup(config_path, echo_dir=None) -> Setup:
    cfg = load_config(config_path, echo_dir)
    return get_scenario(cfg.name).build(cfg)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.output or cfg.output.directory)
    write_echo(cfg, out)
    setup = get_scenario(cfg.name).build(cfg)
    rec = TimeSeriesRecorder(setup.disc, setup.model.material)
    observers = [rec]
    if cfg.output.stride > 0:
        vtk_dir = out / (cfg.output.vtk_dir or "vtk")
        observers.append(VTKSnapshots(vtk_dir, setup.mesh, cfg.output.stride))
    code = EXIT_OK
    try:
        result = run(setup.model, setup.params, setup.adaptivity, setup.t_f, u0=setup.u0, v0=setup.v0,
                     observers=observers)
        log.info("reached t=%.6g in %d accepted steps (%d rejected)", result.state.t, len(result.accepted),
                 result.n_rejected)
        if setup.exact is not None:
            eu, ev = l2_error(setup.disc, result.state.u, result.state.v, setup.exact, result.state.t)
            log.info("L2 error at t_f: u %.6e, v %.6e", eu, ev)
    except DivergenceError as exc:
        log.error("aborted: %s", exc)
        code = EXIT_RUNTIME
    rec.write_csv(out / cfg.output.csv)
    return code


def _march_final(setup: Setup, dt: float):
    ad = adaptivity_from(setup.cfg, setup.mesh.dim, dt0=dt)
    ad.adaptive = False
    return run(setup.model, setup.params, ad, setup.t_f, u0=setup.u0, v0=setup.v0).state


def cmd_converge(args) -> int:
    cfg = load_config(args.config)
    scen = get_scenario(cfg.name)
    setup = scen.build(cfg)
    dts = sorted(args.dts, reverse=True)
    if args.reference == "exact" and setup.exact is None:
        raise ConfigError(f"scenario '{cfg.name}' has no exact solution; use --reference fine")
    ref = None
    if args.reference == "fine":
        ref = _march_final(setup, dts[-1] / args.refine)

    def solve(dt):
        st = _march_final(setup, dt)
        if ref is None:
            return l2_error(setup.disc, st.u, st.v, setup.exact, st.t)
        return l2_norm(setup.disc, st.u - ref.u), l2_norm(setup.disc, st.v - ref.v)

    rows = convergence_study(solve, dts)
    out = Path(args.output) if args.output else None
    if out is not None:
        write_convergence_csv(rows, out)
    w = csv.writer(sys.stdout)
    w.writerow(["dt", "error_u", "error_v", "order_u", "order_v", "status"])
    for r in rows:
        w.writerow([f"{r.dt:.6g}", f"{r.error_u:.6e}", f"{r.error_v:.6e}", f"{r.order_u:.4f}", f"{r.order_v:.4f}", r.status])
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_RUNTIME


def cmd_spectra(args) -> int:
    params = make_params(args.family, args.rho_b)
    curve = spectral_sweep(params, args.theta_max, args.samples, form=args.form)
    w = csv.writer(sys.stdout if args.output is None else open(args.output, "w", newline=""))
    w.writerow(["theta", "spectral_radius"])
    for t, r in curve.to_rows():
        w.writerow([repr(t), repr(r)])
    log.info("numeric stability limit %s (closed form %.6g)", curve.omega_s, stability_limit(params))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    setup = get_scenario(cfg.name).build(cfg)
    setup.mesh.check()
    issues = setup.params.violations()
    print(f"scenario {cfg.name}: {setup.mesh.n_elements} elements, {setup.disc.ndof} dofs, "
          f"family {cfg.integrator.family} (alpha_f={setup.params.alpha_f:.4g}, alpha_m={setup.params.alpha_m:.4g}, "
          f"beta={setup.params.beta:.4g}, gamma={setup.params.gamma:.4g})")
    if issues:
        print("parameter warnings: " + "; ".join(issues))
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastoalpha", description="Explicit generalized-alpha elastodynamics")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--seed", type=int, default=None, help="reserved; no stochastic components")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides [output] directory)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("converge", help="temporal convergence table")
    c.add_argument("config")
    c.add_argument("--dts", type=_floats, required=True, help="comma separated time steps")
    c.add_argument("--reference", choices=["fine", "exact"], default="fine",
                   help="error against a fine-step run (default) or the exact solution")
    c.add_argument("--refine", type=float, default=8.0, help="fine-step factor below the smallest dt")
    c.add_argument("-o", "--output", help="CSV path for the table")
    c.set_defaults(func=cmd_converge)

    s = sub.add_parser("spectra", help="spectral radius sweep as CSV")
    s.add_argument("--rho-b", type=float, required=True)
    s.add_argument("--family", choices=["n1", "n2"], default="n1")
    s.add_argument("--theta-max", type=float, required=True)
    s.add_argument("--samples", type=int, default=1001)
    s.add_argument("--form", choices=["displacement", "acceleration"], default="displacement")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_spectra)

    v = sub.add_parser("validate", help="check a configuration without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def run_cli(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except ValueError as exc:  # invalid arguments surfaced by the modules
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG
    except DivergenceError as exc:
        log.error("aborted: %s", exc)
        return EXIT_RUNTIME
    except ElastoAlphaError as exc:
        log.error("runtime failure: %s", exc)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
