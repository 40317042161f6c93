"""Command line front end wiring the pipeline end to end.

Subcommands
-----------
simulate            draw synthetic datasets from the reference generators
returns             turn price series into negative log returns
select-threshold    data-driven threshold selection from dependence curves
fit                 train a model on exceedance data
sample              draw from a saved model
density             evaluate per-row log densities under a saved model
chi                 dependence summaries, empirical or model-based
covar               conditional value-at-risk table from a saved model

Every subcommand is deterministic given --seed; all randomness flows from
it.  Outputs are headed CSV files and JSON summaries written into the
--output directory, ready for external plotting.  A JSON config file
(--config) may supply any long option of the chosen subcommand, with
explicit flags winning on conflict.

Exit codes: 0 success (possibly with diagnostic flags in the output),
2 usage or argument errors, 3 data or format errors, 4 numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .dependence import chi_from_draws, default_q_grid, empirical_report, \
    omega_from_draws, pairwise_chi
from .errors import (
    DataError,
    DomainError,
    FormatError,
    InputError,
    NumericError,
    SupportError,
    TrainingError,
)
from .model import (
    ExceedanceDataset,
    FlowArchitecture,
    GPDFlowModel,
    TrainConfig,
    fit,
)
from .risk import CoVaRQuery, covar_model
from .simulate import (
    GumbelCopulaModel,
    ReverseExponentialGen,
    negative_log_returns,
    reverse_exponential_example,
    sample_gumbel_copula,
    sample_parametric_mgpd,
)
from .threshold import (
    PlateauConfig,
    ThresholdResult,
    make_exceedance_dataset,
    marginal_quantiles,
    select_threshold,
)

FORMAT_VERSION = 1

USAGE_EXIT = 2
DATA_EXIT = 3
NUMERIC_EXIT = 4

COMMON_DEFAULTS = {"seed": 0, "output": ".", "jobs": 1}

DEFAULTS = {
    "simulate": {"n": 100, "d": 2, "theta": 1.3},
    "returns": {"lag": 1},
    "select-threshold": {
        "n_boot": 0,
        "window": 8,
        "rel_tol": 0.05,
        "min_tail": 5,
    },
    "fit": {
        "epochs": 200,
        "lr": 1e-3,
        "penalty": 1e4,
        "layers": 16,
    },
    "sample": {"n": 100},
    "density": {},
    "chi": {"n_boot": 0, "m": 1_000_000},
    "covar": {
        "beta": 0.95,
        "alphas": "0.5,0.7,0.9,0.95",
        "conditioning": 0,
        "replicates": 100,
    },
}


# ---------------------------------------------------------------------------
# small I/O helpers


def _cell(v) -> str:
    """One CSV cell; floats through repr so reruns are byte-identical."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def write_json(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: file is empty")
    return rows


def _parses_as_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def read_matrix(path) -> np.ndarray:
    """Read a headed numeric CSV; a leading date-like column is ignored."""
    rows = _read_rows(path)
    header, body = rows[0], rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    start = 0
    if header and (
        header[0].strip().lower() == "date" or not _parses_as_float(body[0][0])
    ):
        start = 1
    width = len(header)
    out = np.empty((len(body), width - start))
    if out.shape[1] < 1:
        raise DataError(f"{path}: no numeric columns")
    for i, row in enumerate(body):
        if len(row) != width:
            raise FormatError(
                f"{path}: row {i + 2} has {len(row)} cells, expected {width}"
            )
        for j in range(start, width):
            try:
                out[i, j - start] = float(row[j])
            except ValueError:
                raise FormatError(
                    f"{path}: row {i + 2}, column '{header[j]}': "
                    f"cannot parse {row[j]!r} as a number"
                ) from None
    return out


def read_prices(path) -> tuple[list[str], list[str], np.ndarray]:
    """Read a (date, asset...) price CSV; returns (dates, names, matrix)."""
    rows = _read_rows(path)
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise FormatError(f"{path}: need a date column plus at least one asset")
    if not body:
        raise DataError(f"{path}: no data rows")
    names = [h.strip() for h in header[1:]]
    dates, bad = [], []
    prices = np.empty((len(body), len(names)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise FormatError(
                f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}"
            )
        date = row[0].strip()
        if not date:
            bad.append(f"row {i + 2}: missing date")
            continue
        dates.append(date)
        for j, cell in enumerate(row[1:]):
            try:
                prices[i, j] = float(cell)
            except ValueError:
                bad.append(f"row {i + 2}, {names[j]}: bad price {cell!r}")
                continue
            if not np.isfinite(prices[i, j]):
                bad.append(f"row {i + 2}, {names[j]}: non-finite price")
    if bad:
        shown = "; ".join(bad[:5])
        more = f" (+{len(bad) - 5} more)" if len(bad) > 5 else ""
        raise DataError(f"{path}: {shown}{more}")
    if len(set(dates)) != len(dates):
        raise DataError(f"{path}: duplicate dates")
    return dates, names, prices


def _float_list(value, name) -> np.ndarray:
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        raise InputError(f"{name} must be a comma-separated list")
    try:
        arr = np.array([float(p) for p in parts], dtype=np.float64)
    except (TypeError, ValueError):
        raise InputError(f"cannot parse {name} {value!r} as numbers") from None
    if arr.size == 0:
        raise InputError(f"{name} must not be empty")
    return arr


def _parse_grid(spec) -> np.ndarray:
    """Either 'start:stop:count' or an explicit comma list of levels."""
    if spec is None:
        return default_q_grid()
    if isinstance(spec, str) and ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise InputError("grid spec must be start:stop:count")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise InputError(f"cannot parse grid spec {spec!r}") from None
        if count < 2:
            raise InputError("grid needs at least 2 points")
        return np.linspace(lo, hi, count)
    return _float_list(spec, "q grid")


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise InputError(f"--{name.replace('_', '-')} is required")


def _load_model(args) -> GPDFlowModel:
    _require(args, "model")
    return GPDFlowModel.load(args.model)


def _say(path) -> None:
    print(f"wrote {path}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    _require(args, "generator")
    out = _outdir(args)
    if args.generator == "revexp":
        gen_full, margins_full = reverse_exponential_example()
        if args.a is not None or args.beta is not None:
            _require(args, "a", "beta")
            gen = ReverseExponentialGen(
                _float_list(args.a, "a"), _float_list(args.beta, "beta")
            )
            d = gen.dim
            if d > margins_full.dim:
                raise InputError("custom generators support up to 5 components")
            margins = _truncate_margins(margins_full, d)
        else:
            d = args.d
            if not (1 <= d <= gen_full.dim):
                raise InputError(f"revexp dimension must lie in 1..{gen_full.dim}")
            gen = ReverseExponentialGen(gen_full.a[:d], gen_full.beta[:d])
            margins = _truncate_margins(margins_full, d)
        data = sample_parametric_mgpd(gen.sampler, margins, args.n, seed=args.seed)
        label = "revexp"
    elif args.generator == "gumbel-copula":
        means = (
            _float_list(args.means, "means")
            if args.means is not None
            else np.array([1.0, 2.0])
        )
        scales = (
            _float_list(args.scales, "scales")
            if args.scales is not None
            else np.array([3.0, 5.0])
        )
        model = GumbelCopulaModel(args.theta, means, scales)
        data = sample_gumbel_copula(model, args.n, seed=args.seed)
        label = f"gumbel-copula(theta={args.theta})"
    else:
        raise InputError(f"unknown generator {args.generator!r}")
    path = out / "samples.csv"
    write_csv(path, [f"x{j}" for j in range(data.shape[1])], data)
    print(
        f"simulated n={data.shape[0]} d={data.shape[1]} "
        f"generator={label} seed={args.seed}"
    )
    _say(path)
    return 0


def _truncate_margins(margins, d):
    from .mgpd import MarginalParams

    return MarginalParams(margins.sigma[:d], margins.gamma[:d])


def cmd_returns(args) -> int:
    _require(args, "input")
    out = _outdir(args)
    paths = args.input if isinstance(args.input, list) else [args.input]
    frames = [read_prices(p) for p in paths]
    common = set(frames[0][0])
    for dates, _, _ in frames[1:]:
        common &= set(dates)
    if not common:
        raise DataError("input files share no dates")
    keep = [d for d in frames[0][0] if d in common]
    names, columns = [], []
    for path, (dates, assets, prices) in zip(paths, frames):
        index = {d: i for i, d in enumerate(dates)}
        rows = [index[d] for d in keep]
        for j, asset in enumerate(assets):
            series = prices[rows, j]
            try:
                rets = negative_log_returns(series, lag=args.lag)
            except DataError as e:
                raise DataError(f"{path}, {asset}: {e}") from None
            name = asset if asset not in names else f"{asset}_{len(names)}"
            names.append(name)
            columns.append(rets)
    lengths = {len(c) for c in columns}
    if len(lengths) != 1:
        raise DataError("return series lengths disagree across assets")
    ret_dates = keep[:: args.lag][1:]
    path = out / "returns.csv"
    write_csv(
        path,
        ["date"] + names,
        [[d] + [c[i] for c in columns] for i, d in enumerate(ret_dates)],
    )
    print(f"computed {len(ret_dates)} return rows for {len(names)} assets")
    _say(path)
    return 0


def cmd_select_threshold(args) -> int:
    _require(args, "input")
    out = _outdir(args)
    raw = read_matrix(args.input)
    grid = _parse_grid(args.q_grid)
    cfg = PlateauConfig(
        window=args.window, rel_tol=args.rel_tol, min_tail=args.min_tail
    )
    if args.q_override is not None:
        q0 = float(args.q_override)
        if not (0.0 < q0 < 1.0):
            raise InputError("q override must lie in (0, 1)")
        report = empirical_report(raw, grid, n_boot=args.n_boot, seed=args.seed)
        result = ThresholdResult(
            q_chi=q0,
            q_omega=q0,
            q_star=q0,
            threshold=marginal_quantiles(raw, q0),
            diagnostics=report,
            flags=("manual override",),
        )
    else:
        result = select_threshold(
            raw, q=grid, cfg=cfg, n_boot=args.n_boot, seed=args.seed
        )
    json_path = out / "threshold.json"
    write_json(json_path, {"format_version": FORMAT_VERSION, **result.summary()})
    csv_path = out / "dependence.csv"
    result.diagnostics.to_csv(csv_path)
    print(
        f"q_star={result.q_star} q_chi={result.q_chi} q_omega={result.q_omega}"
        + (f" flags={list(result.flags)}" if result.flags else "")
    )
    _say(json_path)
    _say(csv_path)
    return 0


def cmd_fit(args) -> int:
    _require(args, "data")
    out = _outdir(args)
    raw = read_matrix(args.data)
    if args.threshold is not None:
        dataset = make_exceedance_dataset(raw, _float_list(args.threshold, "threshold"))
    else:
        dataset = ExceedanceDataset(raw)
    arch = FlowArchitecture(n_layers=args.layers, hidden=args.hidden)
    config = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        penalty=args.penalty,
        seed=args.seed,
    )
    model = fit(dataset, arch, config)
    model_path = out / "model.json"
    model.save(model_path)
    log_path = out / "training_log.csv"
    history = model.fit_info["loss_history"]
    write_csv(log_path, ["epoch", "loss"], list(enumerate(history)))
    sigma = ", ".join(repr(float(s)) for s in model.margins.sigma)
    gamma = ", ".join(repr(float(g)) for g in model.margins.gamma)
    print(f"fitted on {dataset.n} exceedance rows (d={dataset.dim})")
    print(f"sigma_hat = [{sigma}]")
    print(f"gamma_hat = [{gamma}]")
    _say(model_path)
    _say(log_path)
    return 0


def cmd_sample(args) -> int:
    out = _outdir(args)
    model = _load_model(args)
    data = model.sample(args.n, seed=args.seed)
    path = out / "samples.csv"
    write_csv(path, [f"x{j}" for j in range(model.dim)], data)
    print(f"sampled n={args.n} d={model.dim} seed={args.seed}")
    _say(path)
    return 0


def cmd_density(args) -> int:
    _require(args, "data")
    out = _outdir(args)
    model = _load_model(args)
    x = read_matrix(args.data)
    vals, ok = model.log_density_rows(x)
    path = out / "density.csv"
    write_csv(path, ["log_density", "on_support"], zip(vals, ok.astype(int)))
    print(f"evaluated {x.shape[0]} rows, {int(ok.sum())} on support")
    _say(path)
    return 0


def cmd_chi(args) -> int:
    if (args.data is None) == (args.model is None):
        raise InputError("chi needs exactly one of --data or --model")
    out = _outdir(args)
    if args.data is not None:
        raw = read_matrix(args.data)
        grid = _parse_grid(args.q_grid)
        report = empirical_report(raw, grid, n_boot=args.n_boot, seed=args.seed)
        path = out / "chi.csv"
        report.to_csv(path)
        print(f"empirical curves over {grid.size} levels from {raw.shape[0]} rows")
        _say(path)
        return 0
    model = _load_model(args)
    if args.m < 2:
        raise InputError("need at least 2 generator draws")
    rng = np.random.default_rng(args.seed)
    t = model.generator.draw(args.m, rng)
    chi, omega = chi_from_draws(t), omega_from_draws(t)
    pair = pairwise_chi(t)
    csv_path = out / "chi_pairwise.csv"
    write_csv(
        csv_path,
        ["i", "j", "chi"],
        [
            (i, j, pair[i, j])
            for i in range(model.dim)
            for j in range(i + 1, model.dim)
        ],
    )
    json_path = out / "chi_overall.json"
    write_json(
        json_path,
        {
            "format_version": FORMAT_VERSION,
            "chi": chi,
            "omega": omega,
            "draws": args.m,
            "seed": args.seed,
        },
    )
    print(f"chi={chi} omega={omega} (m={args.m})")
    _say(csv_path)
    _say(json_path)
    return 0


def cmd_covar(args) -> int:
    out = _outdir(args)
    model = _load_model(args)
    if (args.data is None) == (args.var_beta is None):
        raise InputError("covar needs exactly one of --data or --var-beta")
    if args.var_beta is not None:
        var_beta = _float_list(args.var_beta, "var-beta")
    else:
        raw = read_matrix(args.data)
        if raw.shape[1] != model.dim:
            raise InputError(
                f"data has {raw.shape[1]} columns, model dimension is {model.dim}"
            )
        var_beta = marginal_quantiles(raw, args.beta)
    alphas = _float_list(args.alphas, "alphas")
    cond = args.conditioning
    if args.targets is not None:
        targets = [int(t) for t in _float_list(args.targets, "targets")]
    else:
        targets = [j for j in range(model.dim) if j != cond]
    rows = []
    for target in targets:
        for alpha in alphas:
            query = CoVaRQuery(
                target=target, conditioning=cond, alpha=float(alpha), beta=args.beta
            )
            est = covar_model(
                model,
                var_beta,
                query,
                n_mc=args.n_mc,
                replicates=args.replicates,
                seed=args.seed,
            )
            rows.append(
                (
                    target,
                    float(alpha),
                    args.beta,
                    est.point,
                    est.lo if est.lo is not None else np.nan,
                    est.hi if est.hi is not None else np.nan,
                    est.replicates,
                )
            )
    path = out / "covar.csv"
    write_csv(
        path, ["target", "alpha", "beta", "point", "lo", "hi", "replicates"], rows
    )
    print(
        f"CoVaR table: conditioning={cond} beta={args.beta} "
        f"targets={targets} alphas={[float(a) for a in alphas]}"
    )
    _say(path)
    return 0


# ---------------------------------------------------------------------------
# parser and config plumbing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="root random seed (default 0)")
    common.add_argument(
        "--output", help="output directory, created if absent (default '.')"
    )
    common.add_argument(
        "--config", help="JSON file supplying long options; flags win"
    )
    common.add_argument(
        "--jobs",
        type=int,
        help="worker hint; results never depend on it (default 1)",
    )

    parser = argparse.ArgumentParser(
        prog="gpdflow",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="draw synthetic data")
    p.add_argument("--generator", choices=["revexp", "gumbel-copula"])
    p.add_argument("--n", type=int, help="rows to draw (default 100)")
    p.add_argument("--d", type=int, help="revexp dimension 1..5 (default 2)")
    p.add_argument("--theta", type=float, help="copula parameter (default 1.3)")
    p.add_argument("--a", help="revexp rate vector, comma separated")
    p.add_argument("--beta", help="revexp shift vector, comma separated")
    p.add_argument("--means", help="copula margin means (default 1,2)")
    p.add_argument("--scales", help="copula margin scales (default 3,5)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("returns", parents=[common], help="negative log returns")
    p.add_argument("--input", nargs="+", help="price CSVs: date column + assets")
    p.add_argument("--lag", type=int, help="subsample spacing (default 1)")
    p.set_defaults(func=cmd_returns)

    p = sub.add_parser(
        "select-threshold", parents=[common], help="dependence-curve threshold"
    )
    p.add_argument("--input", help="raw data CSV")
    p.add_argument("--q-grid", help="start:stop:count or comma list")
    p.add_argument("--n-boot", type=int, help="bootstrap replicates (default 0)")
    p.add_argument("--window", type=int, help="plateau window (default 8)")
    p.add_argument(
        "--rel-tol", type=float, help="plateau relative tolerance (default 0.05)"
    )
    p.add_argument(
        "--min-tail", type=int, help="grid points never scored (default 5)"
    )
    p.add_argument(
        "--q-override", type=float, help="skip detection, use this level"
    )
    p.set_defaults(func=cmd_select_threshold)

    p = sub.add_parser("fit", parents=[common], help="train a model")
    p.add_argument("--data", help="exceedance CSV, or raw CSV with --threshold")
    p.add_argument("--threshold", help="threshold vector, comma separated")
    p.add_argument("--epochs", type=int, help="training epochs (default 200)")
    p.add_argument("--lr", type=float, help="Adam step size (default 1e-3)")
    p.add_argument(
        "--penalty", type=float, help="support-violation penalty (default 1e4)"
    )
    p.add_argument("--layers", type=int, help="coupling layers (default 16)")
    p.add_argument("--hidden", type=int, help="conditioner width (default 4d)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", parents=[common], help="draw from a model")
    p.add_argument("--model", help="model JSON from fit")
    p.add_argument("--n", type=int, help="rows to draw (default 100)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("density", parents=[common], help="row log densities")
    p.add_argument("--model", help="model JSON from fit")
    p.add_argument("--data", help="points CSV")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("chi", parents=[common], help="dependence summaries")
    p.add_argument("--data", help="raw data CSV (empirical curves)")
    p.add_argument("--model", help="model JSON (generator estimates)")
    p.add_argument("--q-grid", help="start:stop:count or comma list")
    p.add_argument("--n-boot", type=int, help="bootstrap replicates (default 0)")
    p.add_argument("--m", type=int, help="generator draws (default 1000000)")
    p.set_defaults(func=cmd_chi)

    p = sub.add_parser("covar", parents=[common], help="CoVaR table")
    p.add_argument("--model", help="model JSON from fit")
    p.add_argument("--data", help="raw data CSV for the stress VaR vector")
    p.add_argument("--var-beta", help="explicit stress VaR vector, comma list")
    p.add_argument("--beta", type=float, help="stress level (default 0.95)")
    p.add_argument(
        "--alphas", help="quantile levels, comma list (default 0.5,0.7,0.9,0.95)"
    )
    p.add_argument(
        "--conditioning", type=int, help="conditioning component (default 0)"
    )
    p.add_argument("--targets", help="target components (default: all others)")
    p.add_argument(
        "--replicates", type=int, help="uncertainty replicates (default 100)"
    )
    p.add_argument("--n-mc", type=int, help="samples per replicate")
    p.set_defaults(func=cmd_covar)

    return parser


def apply_config(args: argparse.Namespace) -> None:
    """Fill unset options from the JSON config, then builtin defaults."""
    known = {
        k for k in vars(args) if k not in ("func", "command", "config")
    }
    if args.config is not None:
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise FormatError(f"{args.config}: invalid JSON ({e})") from None
        if not isinstance(doc, dict):
            raise FormatError(f"{args.config}: config must be a JSON object")
        for key, value in doc.items():
            dest = key.replace("-", "_")
            if dest not in known:
                raise InputError(
                    f"config key {key!r} is not an option of '{args.command}'"
                )
            if getattr(args, dest) is None:
                setattr(args, dest, value)
    defaults = {**COMMON_DEFAULTS, **DEFAULTS.get(args.command, {})}
    for dest, value in defaults.items():
        if getattr(args, dest, None) is None:
            setattr(args, dest, value)
    ints, floats = _COERCIONS.get(args.command, ((), ()))
    _coerce(args, int, "seed", "jobs", *ints)
    _coerce(args, float, *floats)
    if args.jobs < 1:
        raise InputError("--jobs must be at least 1")


# numeric option types per subcommand, applied to config-supplied values
# (the --beta flag is a float level for covar but a vector for simulate)
_COERCIONS = {
    "simulate": (("n", "d"), ("theta",)),
    "returns": (("lag",), ()),
    "select-threshold": (("n_boot", "window", "min_tail"), ("rel_tol", "q_override")),
    "fit": (("epochs", "layers", "hidden"), ("lr", "penalty")),
    "sample": (("n",), ()),
    "chi": (("n_boot", "m"), ()),
    "covar": (("conditioning", "replicates", "n_mc"), ("beta",)),
}


def _coerce(args, kind, *dests) -> None:
    for dest in dests:
        value = getattr(args, dest, None)
        if value is None:
            continue
        try:
            setattr(args, dest, kind(value))
        except (TypeError, ValueError):
            raise InputError(
                f"option {dest.replace('_', '-')!r} expects {kind.__name__}, "
                f"got {value!r}"
            ) from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config(args)
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_EXIT
    except (DataError, FormatError, DomainError, SupportError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_EXIT
    except (NumericError, TrainingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
