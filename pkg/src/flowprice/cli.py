"""``flowprice`` command line.

Option precedence is built-in defaults, then a bundled ``--scenario``
(simulate only), then the JSON ``--config`` file, then explicit flags. ``FLOWPRICE_DATA_DIR`` is consulted only when no data
directory was given by flag or config file.

Exit codes: 0 success, 1 missing input, 2 bad parameters, 3 data validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import re
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .analysis import MODELS, analyze_day, plot_frame
from .errors import (
    ConfigurationError, DataValidationError, FlowPriceError, MissingSeedError,
)
from .finite_pop import (
    CONSTANT_OVER_U, SCALED_ALPHA_OVER_N, FinitePopParams, MicroKernel, convergence_errors,
    expected_formed_price, mean_inventory_bvp, permanent_impact_sanity,
)
from .grid import SampledPath, TimeGrid
from .mfg import (
    ModelParams, constant_price_flow, formed_price, induced_order_flow, solve_thetas,
)
from .orderflow import build_windows, parse_timestamp, read_book, read_trades, window_series_frame
from .persist import write_csv, write_ensemble, write_json
from .regress import FitRecord, aggregate_report, report_table
from .sim import (
    LinearImpactPrice, SimConfig, clearing_residual, estimate_payoff, gateaux_residual,
    simulate_population, smooth_directions, symmetric_equilibrium,
)

EXIT_OK, EXIT_MISSING, EXIT_PARAMS, EXIT_DATA = 0, 1, 2, 3
DATA_ENV = "FLOWPRICE_DATA_DIR"


class MissingInputError(FlowPriceError, FileNotFoundError):
    pass


@dataclass
class RunConfig:
    """Every tunable option of every command, with its built-in default."""

    kappa: float = 1.0
    phi: float = 1.0
    A: float = 0.0
    sigma: float = 0.0
    T: float = 1.0
    e0: float = 0.0
    p0: float = 100.0
    steps: int = 1000
    price: str = "const:100"
    flow: str = "const:1"
    lambda0: float | None = None
    N: int = 10
    alpha: float = 0.0
    xi: str = SCALED_ALPHA_OVER_N
    ns: str = "5,10,20,40,80"
    sanity: bool = False
    seed: int = 0
    paths: int = 1000
    policy: str = "feedback_optimal"
    q0: str | None = None
    gateaux: bool = False
    equilibrium: bool = False
    directions: int = 10
    eps: str = "1e-2,5e-3"
    save_ensemble: bool = False
    data_dir: str | None = None
    trades: str | None = None
    book: str | None = None
    stock: str | None = None
    day_start: str | None = None
    day_len: str = "6h"
    window_len: str = "30min"
    subinterval: str = "10s"
    skip_bad: bool = False
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)
    adf_lags: int = 0
    adf_regression: str = "ct"
    emit_plotdata: bool = False
    fits_dir: str | None = None
    output_dir: str | None = None
    format: str = "csv"

    @classmethod
    def from_sources(cls, file_values: dict, flag_values: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(file_values) - names)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        merged = {**file_values, **{k: v for k, v in flag_values.items() if k in names}}
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def validate(self):
        if self.format not in ("csv", "json"):
            raise ConfigurationError(f"format must be csv or json, got {self.format!r}")
        if self.steps < 1 or self.paths < 1 or self.jobs < 1 or self.directions < 1:
            raise ConfigurationError("steps, paths, jobs and directions must be positive")
        if self.adf_lags < 0:
            raise ConfigurationError("adf_lags must be >= 0")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        return cls.from_sources(data, {})

    def model_params(self) -> ModelParams:
        return ModelParams(self.kappa, self.phi, self.A, self.sigma, self.T, self.e0)

    def finite_params(self, grid: TimeGrid | None = None) -> FinitePopParams:
        if self.xi == SCALED_ALPHA_OVER_N:
            kernel = MicroKernel.scaled_alpha_over_n()
        elif self.xi.startswith(CONSTANT_OVER_U):
            # "constant_over_u:<path spec>" samples xi_t on the model grid
            spec = self.xi.partition(":")[2] or "const:0"
            kernel = MicroKernel.constant_over_u(path_from_spec(spec, grid or self.model_params().grid(self.steps)))
        else:
            kernel = MicroKernel(self.xi)
        return FinitePopParams(self.model_params(), self.N, self.alpha, kernel)


# -- helpers ---------------------------------------------------------------


def _floats(text: str, count: int | None = None) -> list[float]:
    try:
        values = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(values) != count:
        raise ConfigurationError(f"expected {count} numbers, got {text!r}")
    if not all(math.isfinite(v) for v in values):
        raise ConfigurationError(f"non-finite number in {text!r}")
    return values


_PATH_FORMS = {
    "const": (1, lambda t, a: np.full_like(t, a)),
    "linear": (2, lambda t, a, b: a + b * t),
    "sin": (2, lambda t, a, w: a * np.sin(w * t)),
    "cos": (2, lambda t, a, w: a * np.cos(w * t)),
    "exp": (2, lambda t, a, r: a * np.exp(r * t)),
}


def path_from_spec(spec: str, grid: TimeGrid) -> SampledPath:
    """Deterministic path from ``const:a``, ``linear:a,b``, ``sin:a,w``, ``cos:a,w`` or ``exp:a,r``."""
    kind, _, args = str(spec).partition(":")
    if kind not in _PATH_FORMS:
        raise ConfigurationError(f"unknown path spec {spec!r}; use one of {', '.join(_PATH_FORMS)}")
    count, fn = _PATH_FORMS[kind]
    return SampledPath.from_function(grid, lambda t: fn(t, *_floats(args, count)))


def _emit(frame: pd.DataFrame, cfg: RunConfig, name: str) -> None:
    """Write to ``output_dir/name`` when an output directory is set, else to stdout."""
    if cfg.format == "json":
        if cfg.output_dir:
            write_json(Path(cfg.output_dir) / f"{name}.json", json.loads(frame.to_json(orient="records", double_precision=15)))
        else:
            sys.stdout.write(frame.to_json(orient="records", double_precision=15) + "\n")
    elif cfg.output_dir:
        write_csv(Path(cfg.output_dir) / f"{name}.csv", frame)
    else:
        frame.to_csv(sys.stdout, index=False, float_format="%.17g", lineterminator="\n")


# -- model -----------------------------------------------------------------


def cmd_model(cfg: RunConfig, what: str) -> int:
    params = cfg.model_params()
    grid = params.grid(cfg.steps)
    t = grid.times
    if what == "theta":
        th = solve_thetas(params, path_from_spec(cfg.price, grid))
        frame = pd.DataFrame({"t": t, "theta0": th.theta0.values, "theta1": th.theta1.values, "theta2": th.theta2.values})
    elif what == "price":
        flow = path_from_spec(cfg.flow, grid)
        frame = pd.DataFrame({"t": t, "lambda": flow.values, "price": formed_price(params, flow, cfg.p0).values})
    elif what == "flow":
        if cfg.lambda0 is not None:
            lam = constant_price_flow(params, cfg.lambda0, cfg.steps)
            frame = pd.DataFrame({"t": lam.times, "lambda": lam.values})
        else:
            state = induced_order_flow(params, path_from_spec(cfg.price, grid))
            frame = pd.DataFrame({"t": t, "E": state.E.values, "Pi": state.Pi.values, "lambda": state.Lambda.values})
    elif what == "finprice":
        fp = cfg.finite_params(grid)
        if cfg.sanity:
            p = permanent_impact_sanity(fp, cfg.p0, n_steps=cfg.steps)
            E = mean_inventory_bvp(fp, n_steps=cfg.steps)
            frame = pd.DataFrame({"t": p.times, "E_N": E.values, "price": p.values})
        else:
            dec = expected_formed_price(fp, path_from_spec(cfg.flow, grid), cfg.p0)
            frame = pd.DataFrame(dec.columns())
    elif what == "converge":
        Ns = [int(n) for n in _floats(cfg.ns)]
        fp = cfg.finite_params(grid)
        res = convergence_errors(fp, Ns, path_from_spec(cfg.flow, grid), cfg.p0)
        ratios = np.concatenate([[np.nan], res.errors[1:] / np.where(res.errors[:-1] == 0, np.nan, res.errors[:-1])])
        frame = pd.DataFrame({"N": res.Ns, "error": res.errors, "N_times_error": res.scaled, "ratio": ratios})
    else:  # argparse restricts the choices
        raise ConfigurationError(f"unknown model command {what!r}")
    _emit(frame, cfg, what)
    return EXIT_OK


# -- simulate --------------------------------------------------------------


def _q0_spec(cfg: RunConfig):
    if cfg.q0 is None:
        return cfg.e0
    try:
        return float(cfg.q0)
    except ValueError:
        return cfg.q0


def _policy(cfg: RunConfig, grid: TimeGrid):
    if cfg.policy in ("zero", "feedback_optimal"):
        return cfg.policy
    path = Path(cfg.policy)
    if not path.is_file():
        raise ConfigurationError(f"policy must be zero, feedback_optimal or a rate-table CSV, got {cfg.policy!r}")
    table = np.loadtxt(path, delimiter=",", ndmin=2)
    return table[0] if table.shape[0] == 1 else table


def cmd_simulate(cfg: RunConfig) -> int:
    params = cfg.model_params()
    grid = params.grid(cfg.steps)
    price = path_from_spec(cfg.price, grid)
    sim_cfg = SimConfig(cfg.seed, cfg.paths, grid)
    ens = simulate_population(params, price, _policy(cfg, grid), sim_cfg, _q0_spec(cfg))
    est = estimate_payoff(params, price, ens)
    rows = [("payoff_mean", est.mean), ("payoff_stderr", est.stderr)]
    if params.phi >= 0:
        mf = induced_order_flow(replace_e0(params, float(ens.inventories[:, 0].mean())), price)
        gap = clearing_residual(ens, mf.Lambda).values
        rows += [("clearing_max_abs", float(np.max(np.abs(gap)))),
                 ("clearing_rms", float(np.sqrt(np.mean(gap**2))))]
    rows += [("n_paths", cfg.paths), ("n_steps", cfg.steps), ("seed", cfg.seed)]
    summary = pd.DataFrame(rows, columns=["quantity", "value"])
    out = Path(cfg.output_dir or "flowprice-out")
    write_csv(out / "summary.csv", summary)
    if cfg.save_ensemble:
        write_ensemble(out / "ensemble.bin", ens)
    print(f"J = {est.mean:.12g} +/- {est.stderr:.3g} ({cfg.paths} paths)")

    if cfg.gateaux:
        fp = cfg.finite_params(grid)
        eps = _floats(cfg.eps)
        price_map = LinearImpactPrice(price, fp.alpha)
        if cfg.equilibrium:
            candidate, q0 = symmetric_equilibrium(fp, cfg.steps)
        else:
            candidate, q0 = np.zeros((fp.N, grid.size)), np.full(fp.N, fp.E_N0)
        dirs = smooth_directions(grid, cfg.directions, cfg.seed)
        res = [gateaux_residual(fp, price_map, candidate, w, 0, eps, q0) for w in dirs]
        table = pd.DataFrame({"direction": np.arange(len(res)), "residual": res})
        write_csv(out / "gateaux.csv", table)
        print(f"max |Gateaux residual| = {np.max(np.abs(res)):.3e} "
              f"({'equilibrium' if cfg.equilibrium else 'zero-trading'} candidate)")
    return EXIT_OK


def replace_e0(params: ModelParams, e0: float) -> ModelParams:
    return dataclasses.replace(params, E0=e0)


# -- analyze / report ------------------------------------------------------

_PAIR_RE = re.compile(r"^(?P<stock>.+)_(?P<day>\d{4}-\d{2}-\d{2})_trades\.csv$")


def _input_pairs(cfg: RunConfig) -> list[tuple[str, str, Path, Path]]:
    if cfg.trades or cfg.book:
        if not (cfg.trades and cfg.book):
            raise ConfigurationError("--trades and --book must be given together")
        pairs = [(cfg.stock or "STOCK", "", Path(cfg.trades), Path(cfg.book))]
    else:
        data_dir = cfg.data_dir or os.environ.get(DATA_ENV)
        if not data_dir:
            raise MissingInputError(f"no input: pass --trades/--book or --data-dir (or set {DATA_ENV})")
        root = Path(data_dir)
        if not root.is_dir():
            raise MissingInputError(f"data directory not found: {root}")
        pairs = []
        for trades in sorted(root.glob("*_trades.csv")):
            m = _PAIR_RE.match(trades.name)
            if m and (cfg.stock is None or m["stock"] == cfg.stock):
                pairs.append((m["stock"], m["day"], trades, trades.with_name(trades.name[:-10] + "book.csv")))
        if not pairs:
            raise MissingInputError(f"no <stock>_<YYYY-MM-DD>_trades.csv files in {root}")
    for *_, trades, book in pairs:
        for path in (trades, book):
            if not path.is_file():
                raise MissingInputError(f"input file not found: {path}")
    return pairs


def _day_start(cfg: RunConfig, day: str, book) -> int:
    if cfg.day_start is None:
        return int(book.ts[0])
    if re.fullmatch(r"\d{1,2}:\d{2}(:\d{2}(\.\d+)?)?", cfg.day_start):
        date = day or pd.Timestamp(int(book.ts[0])).strftime("%Y-%m-%d")
        return parse_timestamp(f"{date}T{cfg.day_start}")
    return parse_timestamp(cfg.day_start)


def cmd_analyze(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir or "flowprice-out")
    records, sq_rows, skipped = [], [], 0
    for stock, day, trades_path, book_path in _input_pairs(cfg):
        trades = read_trades(trades_path, skip_bad=cfg.skip_bad)
        book = read_book(book_path, skip_bad=cfg.skip_bad)
        skipped += trades.skipped + book.skipped
        if not len(book):
            raise DataValidationError("book file has no rows", path=str(book_path))
        grid = build_windows(_day_start(cfg, day, book), cfg.day_len, cfg.window_len, cfg.subinterval)
        day = day or pd.Timestamp(grid.day_start).strftime("%Y-%m-%d")
        results = analyze_day(trades, book, grid, stock, day, cfg.adf_lags, cfg.adf_regression, cfg.jobs)
        for res in results:
            w = res.data.window
            tag = f"{stock}_{day}_w{w:02d}"
            write_json(out / "fits" / f"{tag}.json", [r.to_json() for r in res.records])
            write_csv(out / "series" / f"{tag}.csv", window_series_frame(trades, book, grid, w))
            if cfg.emit_plotdata:
                write_csv(out / "plotdata" / f"{tag}.csv", plot_frame(res))
            records.extend(res.records)
            sq_rows += [(stock, day, w, r.model, r.sq_rel_diff) for r in res.records if r.sq_rel_diff is not None]
    _write_report(records, out)
    write_csv(out / "sq_rel_diff.csv", pd.DataFrame(sq_rows, columns=["stock", "day", "window", "model", "mean"]))
    n_windows = len(records) // len(MODELS)
    print(f"analyzed {n_windows} windows ({len(records)} fits) into {out}"
          + (f"; skipped {skipped} bad rows" if skipped else ""))
    return EXIT_OK


def _write_report(records, out: Path) -> None:
    summary = aggregate_report(records)
    write_csv(out / "summary.csv", summary)
    write_csv(out / "report.csv", report_table(summary))


def cmd_report(cfg: RunConfig) -> int:
    fits_dir = Path(cfg.fits_dir or Path(cfg.output_dir or "flowprice-out") / "fits")
    if not fits_dir.is_dir():
        raise MissingInputError(f"fits directory not found: {fits_dir}")
    records = []
    for path in sorted(fits_dir.glob("*.json")):
        try:
            payload = json.loads(path.read_text())
            records += [FitRecord.from_json(d) for d in payload]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataValidationError(f"malformed fit record: {exc}", path=str(path)) from None
    if not records:
        raise MissingInputError(f"no fit records in {fits_dir}")
    out = Path(cfg.output_dir or fits_dir.parent)
    _write_report(records, out)
    print(f"aggregated {len(records)} fits into {out / 'report.csv'}")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _add_common(p):
    p.add_argument("--config", help="JSON file of option values (flags override it)")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--format", choices=["csv", "json"])


def _add_params(p):
    p.add_argument("--kappa", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--A", type=float, help="terminal inventory penalty")
    p.add_argument("--sigma", type=float)
    p.add_argument("--T", "--t", dest="T", type=float, help="horizon (end time)")
    p.add_argument("--e0", type=float, help="initial mean inventory")
    p.add_argument("--p0", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--price", help="price path spec, e.g. const:100 or linear:100,1")
    p.add_argument("--lambda", dest="flow", help="order-flow path spec, e.g. const:2 or sin:1,3")
    p.add_argument("--N", type=int, help="population size")
    p.add_argument("--alpha", type=float, help="permanent impact")
    p.add_argument("--xi", help=f"kernel: {SCALED_ALPHA_OVER_N} or {CONSTANT_OVER_U}:<path spec>")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowprice", description="Formed-price models and order-flow analytics.",
                     argument_default=argparse.SUPPRESS)
    parser.add_argument("--version", action="version", version=f"flowprice {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    model = sub.add_parser("model", help="evaluate model formulas", argument_default=argparse.SUPPRESS)
    msub = model.add_subparsers(dest="what", required=True, parser_class=_Parser)
    for what, help_ in [
        ("theta", "value-function coefficients for a price path"),
        ("price", "formed price of an order-flow path"),
        ("flow", "order flow induced by a price path (or the constant-price flow)"),
        ("finprice", "expected finite-population price decomposition"),
        ("converge", "finite-population to mean-field convergence errors"),
    ]:
        p = msub.add_parser(what, help=help_, argument_default=argparse.SUPPRESS)
        _add_common(p)
        _add_params(p)
        if what == "flow":
            p.add_argument("--lambda0", type=float, help="initial flow for the constant-price solution")
        if what == "finprice":
            p.add_argument("--sanity", action="store_true", help="permanent-impact price p0 + alpha (E_N - E_N0)")
        if what == "converge":
            p.add_argument("--ns", help="comma-separated population sizes")

    sim = sub.add_parser("simulate", help="Monte Carlo payoff and equilibrium checks",
                         argument_default=argparse.SUPPRESS)
    _add_common(sim)
    _add_params(sim)
    sim.add_argument("--scenario", help="bundled scenario name (e.g. equilibrium_scenario) used as the base config")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--paths", type=int)
    sim.add_argument("--policy", help="zero, feedback_optimal or a rate-table CSV")
    sim.add_argument("--q0", help="initial inventory: number, const:x, normal:m,s or uniform:a,b")
    sim.add_argument("--gateaux", action="store_true", help="compute Gateaux residuals of the N-player game")
    sim.add_argument("--equilibrium", action="store_true", help="use the symmetric equilibrium as candidate")
    sim.add_argument("--directions", type=int)
    sim.add_argument("--eps", help="Richardson step ladder, e.g. 1e-2,5e-3")
    sim.add_argument("--save-ensemble", dest="save_ensemble", action="store_true")

    ana = sub.add_parser("analyze", help="regressions on trade and book data", argument_default=argparse.SUPPRESS)
    _add_common(ana)
    ana.add_argument("--data-dir", dest="data_dir")
    ana.add_argument("--trades")
    ana.add_argument("--book")
    ana.add_argument("--stock")
    ana.add_argument("--day-start", dest="day_start", help="ISO timestamp or HH:MM[:SS] (default: first snapshot)")
    ana.add_argument("--day-len", dest="day_len")
    ana.add_argument("--window-len", dest="window_len")
    ana.add_argument("--subinterval")
    ana.add_argument("--skip-bad", dest="skip_bad", action="store_true")
    ana.add_argument("--jobs", type=int)
    ana.add_argument("--adf-lags", dest="adf_lags", type=int)
    ana.add_argument("--adf-regression", dest="adf_regression", choices=["c", "ct"])
    ana.add_argument("--emit-plotdata", dest="emit_plotdata", action="store_true")

    rep = sub.add_parser("report", help="aggregate fit JSON files", argument_default=argparse.SUPPRESS)
    _add_common(rep)
    rep.add_argument("--fits", dest="fits_dir")
    return parser


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise MissingInputError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {p} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {p} must hold a JSON object")
    if "lambda" in data:
        data["flow"] = data.pop("lambda")
    return data


def _load_scenario(name) -> dict:
    if name is None:
        return {}
    resource = resources.files("flowprice") / "data" / f"{Path(name).stem}.json"
    if not resource.is_file():
        raise MissingInputError(f"no bundled scenario named {name!r}")
    return json.loads(resource.read_text())


def run(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    what = args.pop("what", None)
    # bundled scenario < config file < flags
    base = {**_load_scenario(args.pop("scenario", None)), **_load_config(args.pop("config", None))}
    cfg = RunConfig.from_sources(base, args)
    if command == "model":
        return cmd_model(cfg, what)
    if command == "simulate":
        return cmd_simulate(cfg)
    if command == "analyze":
        return cmd_analyze(cfg)
    return cmd_report(cfg)


def main(argv=None) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = run(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        except (MissingInputError, FileNotFoundError) as exc:
            return _fail(exc, EXIT_MISSING)
        except (DataValidationError, MissingSeedError) as exc:
            return _fail(exc, EXIT_DATA)
        except (FlowPriceError, ValueError, ArithmeticError) as exc:
            return _fail(exc, EXIT_PARAMS)
    for message in dict.fromkeys(str(w.message) for w in caught):
        print(f"flowprice: warning: {message}", file=sys.stderr)
    return code


def _fail(exc, code) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"flowprice: error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
