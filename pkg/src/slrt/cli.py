"""Command-line surface.

Subcommands: `test` runs the shrinkage test on a CSV file; `simulate-size`
and `simulate-power` run the Monte Carlo tables; `calibrate` selects
penalties against the benchmark and fits the penalty rule; `gen` writes a
synthetic dataset as CSV.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ._version import __version__
from .datagen import DgpSpec, Setting, gen_dataset
from .dataio import (
    CsvSchema,
    cell_records,
    format_record,
    ingest_csv,
    parse_config,
    write_dataset_csv,
    write_result_csv,
)
from .em import EmConfig
from .errors import DataError, DegenerateDesignError, FitFailureError, UsageError
from .experiments import (
    ExperimentSpec,
    PenRule,
    calibrate_formula,
    run_power,
    run_size,
)
from .inference import compute_slrt, half_chisq_critical


def _parse_settings(text: str) -> tuple[Setting, ...]:
    out = []
    for token in text.split(","):
        token = token.strip().upper()
        try:
            out.append(Setting(token))
        except ValueError:
            raise UsageError(
                f"unknown setting {token!r}; choose from I, II, III, IV"
            ) from None
    if not out:
        raise UsageError("no settings given")
    return tuple(out)


def _parse_ints(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None


def _parse_floats(text: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(","))
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None


def _parse_bool(text: str, what: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{what} must be a boolean, got {text!r}")


def _parse_pen_rule(text: str) -> PenRule:
    lowered = text.strip().lower()
    if lowered == "formula":
        return PenRule.formula()
    if lowered in ("zero", "benchmark_zero"):
        return PenRule.benchmark_zero()
    if lowered.startswith("fixed:"):
        lowered = lowered[len("fixed:"):]
    try:
        return PenRule.fixed(float(lowered))
    except ValueError:
        raise UsageError(
            f"pen rule must be 'formula', 'zero', or a number, got {text!r}"
        ) from None


_SPEC_CONFIG_KEYS = {
    "kind", "settings", "ns", "ds", "reps", "level", "seed", "pen_rule",
    "size_adjust", "lambda_true", "gamma_true", "collect_stats",
}


def _spec_from_config_and_flags(args, kind: str, default_reps: int) -> ExperimentSpec:
    """Build an ExperimentSpec: config file first, explicit flags override."""
    cfg: dict[str, str] = {}
    if args.config:
        cfg = parse_config(args.config)
        unknown = set(cfg) - _SPEC_CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "kind" in cfg and cfg["kind"] != kind:
            raise UsageError(
                f"config kind={cfg['kind']!r} does not match subcommand {kind!r}"
            )

    def pick(flag_value, key, parse, fallback):
        if flag_value is not None:
            return flag_value
        if key in cfg:
            return parse(cfg[key])
        return fallback

    settings = pick(
        _parse_settings(args.setting) if args.setting else None,
        "settings", _parse_settings, None,
    )
    ns = pick(_parse_ints(args.n, "--n") if args.n else None,
              "ns", lambda s: _parse_ints(s, "ns"), None)
    ds = pick(_parse_ints(args.d, "--d") if args.d else None,
              "ds", lambda s: _parse_ints(s, "ds"), None)
    if settings is None or ns is None or ds is None:
        raise UsageError("setting, n, and d are required (flags or config)")
    reps = pick(args.reps, "reps", int, default_reps)
    level = pick(args.level, "level", float, 0.05)
    seed = pick(args.seed, "seed", int, 20)
    pen_rule = pick(
        _parse_pen_rule(args.pen) if args.pen else None,
        "pen_rule", _parse_pen_rule, PenRule.formula(),
    )
    lambda_true = pick(getattr(args, "lambda_true", None), "lambda_true", float, 1.0)
    gamma_cfg = (lambda s: _parse_floats(s, "gamma_true"))
    gamma_true = pick(
        _parse_floats(args.gamma_true, "--gamma-true")
        if getattr(args, "gamma_true", None) else None,
        "gamma_true", gamma_cfg, None,
    )
    size_adjust = pick(
        getattr(args, "size_adjust", None),
        "size_adjust", lambda s: _parse_bool(s, "size_adjust"), True,
    )
    em = _em_config(args)
    try:
        return ExperimentSpec(
            kind=kind, settings=settings, ns=ns, ds=ds, reps=reps, level=level,
            seed=seed, pen_rule=pen_rule, size_adjust=size_adjust,
            lambda_true=lambda_true, gamma_true=gamma_true, em=em,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _em_config(args) -> EmConfig:
    kwargs = {}
    if getattr(args, "em_max_iter", None) is not None:
        kwargs["max_iter"] = args.em_max_iter
    if getattr(args, "em_tol", None) is not None:
        kwargs["tol"] = args.em_tol
    if getattr(args, "em_starts", None) is not None:
        kwargs["n_starts"] = args.em_starts
    if getattr(args, "em_seed", None) is not None:
        kwargs["seed"] = args.em_seed
    try:
        return EmConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _add_em_flags(p) -> None:
    p.add_argument("--em-max-iter", type=int, default=None,
                   help="EM iteration cap (default 500)")
    p.add_argument("--em-tol", type=float, default=None,
                   help="EM stopping tolerance per observation (default 1e-7)")
    p.add_argument("--em-starts", type=int, default=None,
                   help="number of EM initializations (default 5)")
    p.add_argument("--em-seed", type=int, default=None,
                   help="seed for the EM start perturbations (default 0)")


def _print_table(result) -> None:
    head = f"{'setting':>7} {'n':>6} {'d':>4} {'method':>10} {'level':>6} " \
           f"{'frequency':>10} {'stderr':>8} {'failures':>9}"
    print(head)
    for c in result.cells:
        print(
            f"{c.setting:>7} {c.n:>6} {c.d:>4} {c.method:>10} {c.level:>6.3g} "
            f"{c.rejection_frequency:>10.4f} {c.mc_stderr:>8.4f} {c.failures:>9d}"
        )


def _write_outputs(result, args) -> None:
    if args.out:
        write_result_csv(args.out, result)
        print(f"wrote {args.out}")
    if args.record:
        with open(args.record, "w", encoding="utf-8") as fh:
            for line in cell_records(result):
                fh.write(line + "\n")
        print(f"wrote {args.record}")


def _cmd_test(args) -> int:
    if not args.y or not args.d_col:
        raise UsageError("--y and --d are required")
    schema = CsvSchema(
        y_col=args.y,
        d_col=args.d_col,
        x_cols=tuple(args.x.split(",")) if args.x else (),
        z_cols=tuple(args.z.split(",")) if args.z else (),
        standardize_z=args.standardize_z,
    )
    ingest = ingest_csv(args.input, schema)
    ds = ingest.dataset
    if not 0.0 < args.level < 0.5:
        raise UsageError(f"--level must be in (0, 0.5), got {args.level}")
    pen = args.pen if args.pen is None else _parse_pen_rule(args.pen).resolve(ds.n, ds.dz)
    outcome = compute_slrt(ds, pen=pen, cfg=_em_config(args))
    reject = outcome.reject_at(args.level)

    alt = outcome.alt_fit
    nonzero = int(np.count_nonzero(alt.params.gamma))
    print(f"rows: {ingest.rows_read} read, {ingest.rows_dropped} dropped, "
          f"{ds.n} used (q={ds.q}, dz={ds.dz})")
    print(f"pen: {outcome.pen_used:.6g}")
    print(f"slrt: {outcome.slrt:.6g}")
    print(f"p-value: {outcome.p_value:.6g}")
    print(f"decision at level {args.level:g}: "
          f"{'reject' if reject else 'fail to reject'} "
          f"(critical {half_chisq_critical(args.level):.6g})")
    print(f"null fit: sigma2={outcome.null_fit.params.sigma2:.6g} "
          f"loglik={outcome.null_fit.loglik:.8g}")
    print(f"alt fit: beta={alt.params.beta:.6g} lambda={alt.params.lam:.6g} "
          f"sigma2={alt.params.sigma2:.6g} nonzero gamma={nonzero}/{ds.dz} "
          f"iterations={alt.iterations} converged={alt.converged}")
    if args.record:
        pairs = [
            ("slrt", outcome.slrt), ("p_value", outcome.p_value),
            ("pen", outcome.pen_used), ("level", float(args.level)),
            ("reject", reject), ("n", ds.n),
            ("rows_dropped", ingest.rows_dropped),
            ("beta", alt.params.beta), ("lambda", alt.params.lam),
            ("sigma2", alt.params.sigma2),
            ("alpha", ",".join(repr(float(a)) for a in alt.params.alpha)),
            ("gamma", ",".join(repr(float(g)) for g in alt.params.gamma)),
            ("null_loglik", outcome.null_fit.loglik),
            ("alt_loglik", alt.loglik),
        ]
        with open(args.record, "w", encoding="utf-8") as fh:
            fh.write(format_record(pairs) + "\n")
        print(f"wrote {args.record}")
    return 0


def _cmd_simulate_size(args) -> int:
    spec = _spec_from_config_and_flags(args, "size", default_reps=2000)
    result = run_size(spec)
    _print_table(result)
    _write_outputs(result, args)
    return 0


def _cmd_simulate_power(args) -> int:
    spec = _spec_from_config_and_flags(args, "power", default_reps=1000)
    result = run_power(spec)
    _print_table(result)
    _write_outputs(result, args)
    return 0


def _cmd_calibrate(args) -> int:
    cfg: dict[str, str] = {}
    if args.config:
        cfg = parse_config(args.config)
        allowed = {"kind", "settings", "ns", "ds", "pens", "reps", "window",
                   "seed", "level"}
        unknown = set(cfg) - allowed
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "kind" in cfg and cfg["kind"] != "calibrate":
            raise UsageError(f"config kind={cfg['kind']!r} is not 'calibrate'")

    def pick(flag_value, key, parse, fallback):
        if flag_value is not None:
            return flag_value
        if key in cfg:
            return parse(cfg[key])
        return fallback

    ns = pick(_parse_ints(args.n, "--n") if args.n else None,
              "ns", lambda s: _parse_ints(s, "ns"), None)
    ds = pick(_parse_ints(args.d, "--d") if args.d else None,
              "ds", lambda s: _parse_ints(s, "ds"), None)
    pens = pick(_parse_floats(args.pens, "--pens") if args.pens else None,
                "pens", lambda s: _parse_floats(s, "pens"), None)
    if ns is None or ds is None or pens is None:
        raise UsageError("n, d, and pens are required (flags or config)")
    reps = pick(args.reps, "reps", int, 500)
    window = pick(args.window, "window", float, 0.003)
    seed = pick(args.seed, "seed", int, 10)
    level = pick(args.level, "level", float, 0.05)
    setting = pick(
        _parse_settings(args.setting) if args.setting else None,
        "settings", _parse_settings, (Setting.I,),
    )
    if len(setting) != 1:
        raise UsageError("calibrate runs one setting at a time")
    try:
        result = calibrate_formula(
            ns, ds, sorted(pens), reps=reps, window=window, seed=seed,
            setting=setting[0], level=level, em_cfg=_em_config(args),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    print(f"{'n':>6} {'d':>4} {'pen':>10} {'slrt_freq':>10} {'bench_freq':>10}")
    for c in result.cells:
        pen = "-" if c.pen is None else f"{c.pen:.4f}"
        freq = "-" if c.slrt_frequency is None else f"{c.slrt_frequency:.4f}"
        print(f"{c.n:>6} {c.d:>4} {pen:>10} {freq:>10} "
              f"{c.benchmark_frequency:>10.4f}")
    print(f"fitted rule: pen = {result.intercept:.4f} "
          f"+ {result.slope:.4f} * n^(7/8) * sqrt(log d)")
    if result.unresolved:
        print(f"unresolved cells: {result.unresolved}")
    if args.record:
        lines = []
        for c in result.cells:
            lines.append(format_record([
                ("n", c.n), ("d", c.d),
                ("pen", "-" if c.pen is None else c.pen),
                ("slrt_freq", "-" if c.slrt_frequency is None else c.slrt_frequency),
                ("bench_freq", c.benchmark_frequency),
            ]))
        lines.append(format_record([
            ("intercept", result.intercept), ("slope", result.slope),
        ]))
        with open(args.record, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {args.record}")
    return 0


def _cmd_gen(args) -> int:
    try:
        setting = Setting(args.setting.strip().upper())
    except ValueError:
        raise UsageError(
            f"unknown setting {args.setting!r}; choose from I, II, III, IV"
        ) from None
    gamma_true = (
        _parse_floats(args.gamma_true, "--gamma-true") if args.gamma_true else None
    )
    try:
        spec = DgpSpec(
            setting=setting, n=args.n, d=args.d, seed=args.seed,
            alternative=args.alternative, lambda_true=args.lambda_true,
            gamma_true=gamma_true,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds = gen_dataset(spec)
    write_dataset_csv(args.out, ds)
    print(f"wrote {args.out}: n={ds.n}, d={ds.dz}, "
          f"{'alternative' if args.alternative else 'null'} DGP, seed={args.seed}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slrt",
        description="Shrinkage likelihood ratio test for a treatment-effect "
                    "subgroup, with simulation and calibration harnesses.",
    )
    parser.add_argument("--version", action="version", version=f"slrt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run the test on a CSV file")
    p.add_argument("--input", required=True, help="CSV path (RFC-4180, header row)")
    p.add_argument("--y", required=True, help="outcome column")
    p.add_argument("--d", dest="d_col", required=True, help="treatment column")
    p.add_argument("--x", default="", help="comma-separated confounder columns")
    p.add_argument("--z", default="", help="comma-separated classification columns")
    p.add_argument("--standardize-z", action="store_true",
                   help="center/scale z columns (sample sd, divisor n-1)")
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--pen", default=None,
                   help="'formula' (default), 'zero', or a number")
    p.add_argument("--record", default=None, help="write a flat key=value record")
    _add_em_flags(p)
    p.set_defaults(func=_cmd_test)

    for name, fn, help_text in (
        ("simulate-size", _cmd_simulate_size, "null rejection frequencies"),
        ("simulate-power", _cmd_simulate_power, "size-adjusted power"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="key = value spec file")
        p.add_argument("--setting", default=None, help="comma list from I,II,III,IV")
        p.add_argument("--n", default=None, help="comma-separated sample sizes")
        p.add_argument("--d", default=None, help="comma-separated z dimensions")
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--level", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--pen", default=None,
                       help="'formula' (default), 'zero', or a number")
        if name == "simulate-power":
            p.add_argument("--lambda-true", dest="lambda_true", type=float,
                           default=None)
            p.add_argument("--gamma-true", dest="gamma_true", default=None,
                           help="comma-separated true gamma (default all ones)")
            p.add_argument("--no-size-adjust", dest="size_adjust",
                           action="store_const", const=False, default=None)
        p.add_argument("--out", default=None, help="write the result table CSV")
        p.add_argument("--record", default=None, help="write flat per-cell records")
        _add_em_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("calibrate", help="select penalties and fit the rule")
    p.add_argument("--config", default=None, help="key = value spec file")
    p.add_argument("--setting", default=None, help="one of I,II,III,IV")
    p.add_argument("--n", default=None, help="comma-separated sample sizes")
    p.add_argument("--d", default=None, help="comma-separated z dimensions")
    p.add_argument("--pens", default=None, help="comma-separated candidate penalties")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--window", type=float, default=None,
                   help="max |slrt freq - benchmark freq| (default 0.003)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--record", default=None, help="write flat records")
    _add_em_flags(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("gen", help="write a synthetic dataset CSV")
    p.add_argument("--setting", required=True, help="one of I,II,III,IV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--alternative", action="store_true")
    p.add_argument("--lambda-true", dest="lambda_true", type=float, default=1.0)
    p.add_argument("--gamma-true", dest="gamma_true", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (FitFailureError, DegenerateDesignError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
