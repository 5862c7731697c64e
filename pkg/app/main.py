import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from app.src import traces
from app.src.bounds import bounds_report, check_dual_norm, check_cost_bound, constants
from app.src.config import (
    DEFAULT_ETA,
    DEFAULT_MPC_WINDOW,
    DEFAULT_MU_CARBON,
    DEFAULT_MU_WATER,
    DEFAULT_SEED,
    LOG_FORMAT,
    LOG_LEVEL,
    OFFLINE_MAX_ITERS,
    OFFLINE_TOL,
    OUTPUT_DIR,
)
from app.src.eglb import RunConfig, calibrate, default_zbar, run as run_eglb
from app.src.errors import TraceFormatError
from app.src.hetero import HeteroModel, HeteroSolver
from app.src.locations import default_profile, skewed_profile
from app.src.metrics import format_table
from app.src.model import EquitySpec
from app.src.offline import solve_offline, warm_start
from app.src.schemas import HeteroModelFile, RunManifest, SynthProfile
from app.src.storage import RunStore, write_comparison, write_sweep
from app.src.suite import ALGORITHMS, compare, run_algorithm, sweep_eta, sweep_weights

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


# ==================== ARGUMENT PARSING ====================

def _eta(value: str):
    if value == "auto":
        return value
    try:
        eta = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'auto', got {value!r}")
    if not eta > 0:
        raise argparse.ArgumentTypeError(f"learning rate must be positive, got {value}")
    return eta


def _float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def _weight_pairs(value: str) -> List[Tuple[float, float]]:
    pairs = []
    for item in value.split(","):
        try:
            mu_c, mu_w = item.split(":")
            pairs.append((float(mu_c), float(mu_w)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected mu_c:mu_w pairs, got {item!r}")
    return pairs


def _add_equity_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trace", required=True, help="Trace directory")
    parser.add_argument("--eta", type=_eta, default=DEFAULT_ETA,
                        help="eGLB learning rate, or 'auto' for the default rate with calibrated units")
    parser.add_argument("--mu-c", type=float, default=DEFAULT_MU_CARBON, help="Carbon equity weight")
    parser.add_argument("--mu-w", type=float, default=DEFAULT_MU_WATER, help="Water equity weight")
    parser.add_argument("--normalize", action="store_true", help="Divide footprints by DC capacity")
    parser.add_argument("--window", type=int, default=DEFAULT_MPC_WINDOW, help="eGLB-MPC window (slots)")
    parser.add_argument("--hetero", help="JSON file with heterogeneous model sizes")
    parser.add_argument("--calibrate", action="store_true",
                        help="Fit the carbon and water multiplier units to the trace at the given eta")
    parser.add_argument("--warm-start", default=None,
                        help="History trace directory whose offline multipliers start eGLB")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eglb", description="Equity-aware geographical load balancing")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one algorithm on a trace")
    _add_equity_args(run)
    run.add_argument("--algo", required=True, choices=ALGORITHMS)
    run.add_argument("--tol", type=float, default=OFFLINE_TOL, help="Offline relative gap tolerance")
    run.add_argument("--max-iters", type=int, default=None, help="Offline / MPC iteration cap")
    run.add_argument("--check-bound", action="store_true",
                     help="Also solve offline and check the eGLB cost bound")
    run.add_argument("--out", default=None, help="Run directory")

    comp = commands.add_parser("compare", help="Run every algorithm and tabulate the metrics")
    _add_equity_args(comp)
    comp.add_argument("--algos", default=",".join(ALGORITHMS), help="Comma-separated algorithm names")
    comp.add_argument("--out", default=str(Path(OUTPUT_DIR) / "compare"))

    gen = commands.add_parser("gen", help="Synthesize a trace")
    gen.add_argument("--days", type=int, required=True)
    gen.add_argument("--seed", type=int, default=DEFAULT_SEED)
    gen.add_argument("--profile", help="Synthesis profile JSON; defaults to the reference locations")
    gen.add_argument("--skewed", action="store_true", help="Use the water/carbon-skewed reference profile")
    gen.add_argument("--flexibility", choices=("full", "partial"), default=None)
    gen.add_argument("--augment-days", type=int, default=None,
                     help="Extend the trace with perturbed copies of its workloads")
    gen.add_argument("--out", required=True)

    verify = commands.add_parser("verify-bound", help="Re-check the bounds of a stored eGLB run")
    verify.add_argument("--run", required=True, help="Run directory written by `run --algo eglb`")
    verify.add_argument("--skip-offline", action="store_true", help="Only check the dual-norm bound")

    sweep = commands.add_parser("sweep", help="Learning-rate or weight sensitivity")
    _add_equity_args(sweep)
    sweep.add_argument("--etas", type=_float_list, default=None, help="Comma-separated learning rates")
    sweep.add_argument("--weights", type=_weight_pairs, default=None, help="mu_c:mu_w pairs, comma-separated")
    sweep.add_argument("--out", default=str(Path(OUTPUT_DIR) / "sweep"))
    return parser


# ==================== SHARED STEPS ====================

def _load_hetero(path: Optional[str], spec):
    if not path:
        return None
    document = HeteroModelFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    model = HeteroModel.from_document(document, spec)
    logger.info(f"🧩 Heterogeneous models: {', '.join(model.names)}")
    return HeteroSolver(spec=spec, model=model)


def _prepare(args):
    """Load the trace and build equity weights, learning rate, solver and initial multipliers."""
    logger.info(f"📂 Loading trace from {args.trace}...")
    trace = traces.load(args.trace)
    spec = trace.fleet
    solver = _load_hetero(args.hetero, spec)
    equity = EquitySpec.uniform(spec.n_datacenters, args.mu_c, args.mu_w, normalize_by_capacity=args.normalize)
    eta = DEFAULT_ETA if args.eta == "auto" else args.eta
    if args.calibrate or args.eta == "auto":
        equity, eta = calibrate(trace.slots, spec, equity, eta=eta, solver=solver)
        logger.info(f"🎛️  Calibrated units: carbon {equity.carbon_unit:.4g}, water {equity.water_unit:.4g}")
    kappa_init = None
    if args.warm_start:
        logger.info(f"🔥 Warm start from {args.warm_start}...")
        history = traces.load(args.warm_start)
        if history.fleet.n_datacenters != spec.n_datacenters:
            raise ValueError(f"history trace has {history.fleet.n_datacenters} DCs, trace has {spec.n_datacenters}")
        kappa_init = warm_start(history.slots, spec, equity, tol=getattr(args, "tol", OFFLINE_TOL),
                                max_iters=getattr(args, "max_iters", None) or OFFLINE_MAX_ITERS, solver=solver)
    return trace, spec, equity, eta, solver, kappa_init


def _manifest(args, algorithm: str, trace, equity: EquitySpec, eta, config: Optional[RunConfig]) -> RunManifest:
    return RunManifest(
        algorithm=algorithm,
        trace=str(Path(args.trace).resolve()),
        n_slots=trace.n_slots,
        eta=eta if algorithm == "eglb" else None,
        mu_carbon=equity.mu_carbon,
        mu_water=equity.mu_water,
        theta_carbon=equity.theta_carbon.tolist(),
        theta_water=equity.theta_water.tolist(),
        normalize_by_capacity=equity.normalize_by_capacity,
        carbon_unit=equity.carbon_unit,
        water_unit=equity.water_unit,
        window=args.window if algorithm == "eglb-mpc" else None,
        zbar_carbon=config.zbar_carbon.tolist() if config else None,
        zbar_water=config.zbar_water.tolist() if config else None,
        hetero=str(Path(args.hetero).resolve()) if args.hetero else None,
        warm_start=str(Path(args.warm_start).resolve()) if args.warm_start and algorithm == "eglb" else None,
    )


# ==================== COMMANDS ====================

def cmd_run(args) -> int:
    trace, spec, equity, eta, solver, kappa_init = _prepare(args)
    logger.info(f"🚀 Running {args.algo} on {trace.n_slots} slots...")
    config = None
    passed = True
    if args.algo == "eglb":
        config = RunConfig.for_trace(trace.slots, spec, equity, eta=eta, kappa_init=kappa_init, solver=solver)
        schedule, report = run_eglb(trace.slots, spec, config, solver=solver)
        if kappa_init is not None and np.any(kappa_init > 0):
            # The bounds assume the multipliers start at zero.
            logger.warning("⚠️  Warm-started run: skipping the bound checks")
        else:
            bound_constants = constants(trace.slots, spec, equity, config.zbar_carbon, config.zbar_water, solver)
            offline_cost = None
            if args.check_bound:
                logger.info("📐 Solving offline for the cost bound...")
                solution = solve_offline(trace.slots, spec, equity, tol=args.tol,
                                         max_iters=args.max_iters or OFFLINE_MAX_ITERS, solver=solver)
                offline_cost = solution.dual_bound
            bounds = bounds_report(schedule, report.objective, offline_cost, bound_constants, eta)
            report = report.model_copy(update={"bounds": bounds})
            passed = bounds.dual_norm.passed and (bounds.cost_bound is None or bounds.cost_bound.passed)
    else:
        options = {}
        if args.algo in ("eglb-off", "eglb-mpc"):
            options["tol"] = args.tol
            if args.max_iters:
                options["max_iters"] = args.max_iters
        if args.algo == "eglb-mpc":
            options["window"] = args.window
        schedule, report = run_algorithm(args.algo, trace.slots, spec, equity, solver=solver, **options)

    out = Path(args.out or Path(OUTPUT_DIR) / args.algo)
    RunStore(out).save_run(schedule, report, _manifest(args, args.algo, trace, equity, eta, config))
    print(format_table({args.algo: report}))
    logger.info(f"✅ Artifacts written to {out}")
    if not passed:
        logger.error("❌ Bound check failed")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_compare(args) -> int:
    trace, spec, equity, eta, solver, kappa_init = _prepare(args)
    algorithms = [a.strip() for a in args.algos.split(",") if a.strip()]
    reports, frame, table = compare(trace.slots, spec, equity, eta=eta, window=args.window,
                                    algorithms=algorithms, solver=solver, kappa_init=kappa_init)
    write_comparison(args.out, frame, table, reports)
    print(table)
    logger.info(f"✅ Comparison written to {args.out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.days < 1:
        raise ValueError("--days must be at least 1")
    if args.profile:
        profile = traces.load_profile(args.profile)
    elif args.skewed:
        profile = skewed_profile()
    else:
        profile = default_profile()
    if args.flexibility:
        profile = SynthProfile.model_validate({**profile.model_dump(), "flexibility": args.flexibility})
    slots_per_day = int(round(24 / profile.slot_hours))
    logger.info(f"🧪 Synthesizing {args.days} days ({args.days * slots_per_day} slots), seed {args.seed}...")
    trace = traces.synth(profile, args.days * slots_per_day, seed=args.seed)
    if args.augment_days:
        trace = traces.augment(trace, args.augment_days * slots_per_day, seed=args.seed)
    traces.save(trace, args.out)
    logger.info(f"✅ Trace written to {args.out}")
    return EXIT_OK


def cmd_verify_bound(args) -> int:
    store = RunStore(args.run)
    manifest = store.read_manifest()
    report = store.read_report()
    if manifest.algorithm != "eglb" or manifest.eta is None:
        raise ValueError(f"verify-bound needs an eglb run, {args.run} holds {manifest.algorithm}")
    if manifest.warm_start:
        raise ValueError(f"{args.run} was warm-started; the bounds assume zero initial multipliers")
    logger.info(f"📂 Re-loading trace {manifest.trace}...")
    trace = traces.load(manifest.trace)
    spec = trace.fleet
    solver = _load_hetero(manifest.hetero, spec)
    equity = EquitySpec(
        theta_carbon=manifest.theta_carbon,
        theta_water=manifest.theta_water,
        mu_carbon=manifest.mu_carbon,
        mu_water=manifest.mu_water,
        normalize_by_capacity=manifest.normalize_by_capacity,
        carbon_unit=manifest.carbon_unit,
        water_unit=manifest.water_unit,
    )
    if manifest.zbar_carbon is not None and manifest.zbar_water is not None:
        zbar_c, zbar_w = np.asarray(manifest.zbar_carbon), np.asarray(manifest.zbar_water)
    else:
        zbar_c, zbar_w = default_zbar(trace.slots, spec, equity, solver)
    bound_constants = constants(trace.slots, spec, equity, zbar_c, zbar_w, solver)

    try:
        duals = store.read_duals()
    except TraceFormatError as e:
        if e.line is None:
            raise
        logger.error(f"❌ Stored multipliers are invalid: {e}")
        return EXIT_CHECK_FAILED
    n_slots = manifest.n_slots
    checks = []
    if duals.shape != (n_slots + 1, 2 * spec.n_datacenters):
        logger.error(f"❌ duals.csv holds {duals.shape[0]} rows, expected {n_slots + 1}")
        return EXIT_CHECK_FAILED
    if np.any(duals[0] != 0):
        logger.error("❌ duals.csv does not start from zero multipliers")
        return EXIT_CHECK_FAILED
    checks.append(check_dual_norm(duals[-1], bound_constants, manifest.eta, n_slots))
    if not args.skip_offline:
        logger.info("📐 Solving offline for the cost bound...")
        solution = solve_offline(trace.slots, spec, equity, solver=solver)
        checks.append(check_cost_bound(report.objective, solution.dual_bound, bound_constants,
                                       manifest.eta, n_slots))
    for check in checks:
        mark = "✅" if check.passed else "❌"
        print(f"{check.name}: {'pass' if check.passed else 'FAIL'} lhs={check.lhs:.6g} "
              f"rhs={check.rhs:.6g} slack={check.slack:.6g}")
        logger.info(f"{mark} {check.name}: slack {check.slack:.6g}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK_FAILED


def cmd_sweep(args) -> int:
    trace, spec, equity, eta, solver, kappa_init = _prepare(args)
    if not args.etas and not args.weights:
        raise ValueError("sweep needs --etas or --weights")
    if args.etas:
        frame = sweep_eta(trace.slots, spec, equity, args.etas, solver=solver, kappa_init=kappa_init)
        write_sweep(args.out, frame)
        print(frame.to_string(index=False))
    if args.weights:
        frame = sweep_weights(trace.slots, spec, args.weights, eta=eta, solver=solver,
                              calibrate_units=args.calibrate or args.eta == "auto")
        write_sweep(args.out, frame, name="sweep_weights.csv")
        print(frame.to_string(index=False))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "gen": cmd_gen,
    "verify-bound": cmd_verify_bound,
    "sweep": cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    args = build_parser().parse_args(argv)

    logger.info("=" * 80)
    logger.info(f"🌍 EQUITY-AWARE GLB - {args.command.upper()}")
    logger.info("=" * 80)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as e:
        logger.error(f"❌ {args.command} failed: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
