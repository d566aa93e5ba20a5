"""Command line entry point: ingest prices, fit the model, compute reports, validate.

Subcommands ``ingest``, ``fit``, ``measure`` and ``pipeline`` share the
pipeline flags (or ``--config`` with a JSON object keyed by the
``PipelineConfig`` field names); ``validate`` runs one of the built-in check
suites. Exit codes: 0 success, 2 input error, 3 numeric failure, 4
validation failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import json
import logging
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .errors import CoriskError, InputError, InsufficientDataError, ValidationFailure

log = logging.getLogger("corisk")

MIN_LOSS_ROWS = 200
COPULA_CHOICES = ("gaussian", "gumbel", "clayton", "mixed", "auto")
FAMILIES = ("gaussian", "gumbel", "clayton", "mixed")
DEFAULT_LEVELS = ((0.95, 0.95, 0.95), (0.975, 0.975, 0.975), (0.99, 0.99, 0.99))
OUTPUT_ENV = "CORISK_OUTPUT_DIR"
# weights (0.75, 0.25) on the other two assets for the first asset
EXAMPLE_CONFIG = Path(__file__).resolve().parent / "data" / "example_config.json"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    """Pipeline settings.

    ``levels`` holds one tuple per report: the target level followed by the
    tail levels of the remaining assets in column order. ``mmme_weights``
    maps a target column name to its weights over the other columns; targets
    not listed use equal weights.
    """

    input_path: str = ""
    asset_columns: list[str] | None = None
    threshold_level: float = 0.90
    levels: list[tuple[float, ...]] = field(default_factory=lambda: [tuple(l) for l in DEFAULT_LEVELS])
    mmme_weights: dict[str, list[float]] = field(default_factory=dict)
    copula_choice: str = "auto"
    seed: int = 0
    output_dir: str = "corisk_output"
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < float(self.threshold_level) < 1.0:
            raise InputError("threshold_level must lie in (0, 1)")
        self.threshold_level = float(self.threshold_level)
        levels = []
        for lv in self.levels:
            tup = tuple(float(p) for p in (lv if isinstance(lv, (list, tuple)) else [lv]))
            if any(not 0.0 < p < 1.0 for p in tup):
                raise InputError(f"levels must lie strictly inside (0, 1): {lv!r}")
            levels.append(tup)
        if not levels:
            raise InputError("at least one level is required")
        self.levels = levels
        if self.copula_choice not in COPULA_CHOICES:
            raise InputError(f"copula_choice must be one of {', '.join(COPULA_CHOICES)}")
        if int(self.workers) < 1:
            raise InputError("workers must be at least 1")
        self.workers = int(self.workers)
        self.seed = int(self.seed)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise InputError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw)

    def expand_levels(self, dim: int) -> list[tuple[float, ...]]:
        """Each level as a full ``dim``-tuple; a single value is used on the diagonal."""
        out = []
        for lv in self.levels:
            if len(lv) == 1:
                lv = lv * dim
            if len(lv) != dim:
                raise InputError(f"level {lv!r} needs {dim} entries")
            out.append(lv)
        return out

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["levels"] = [list(l) for l in self.levels]
        return d


# ---------------------------------------------------------------------------
# Ingest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossData:
    dates: list[str]
    losses: np.ndarray
    names: list[str]
    dropped_rows: int


def _parse_price(text: str) -> float:
    try:
        val = float(text)
    except (TypeError, ValueError):
        return math.nan
    return val if math.isfinite(val) and val > 0 else math.nan


def ingest_prices(csv_path, columns: Sequence[str] | None = None, min_rows: int = MIN_LOSS_ROWS) -> LossData:
    """Read a date + prices CSV and return ``-100 * log(p_t / p_{t-1})`` losses.

    Rows with a missing or nonpositive price in a selected column are dropped
    (and counted); the remaining rows are sorted by date.
    """
    path = Path(csv_path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[0].lower() != "date":
        raise InputError("CSV needs a header with a leading 'date' column and at least two price columns")
    names = list(columns) if columns else header[1:]
    missing = [c for c in names if c not in header[1:]]
    if missing:
        raise InputError(f"columns not in CSV: {', '.join(missing)}")
    if len(names) < 2:
        raise InputError("need at least two asset columns")
    idx = [header.index(c) for c in names]
    records, dropped = [], 0
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            day = dt.date.fromisoformat(row[0].strip())
        except ValueError:
            raise InputError(f"line {line}: unparseable ISO-8601 date {row[0]!r}") from None
        prices = [_parse_price(row[i]) if i < len(row) else math.nan for i in idx]
        if any(math.isnan(p) for p in prices):
            dropped += 1
            continue
        records.append((day, prices))
    records.sort(key=lambda r: r[0])
    days = [r[0] for r in records]
    if len(set(days)) != len(days):
        raise InputError("duplicate dates in price file")
    prices = np.array([r[1] for r in records], dtype=float).reshape(-1, len(names))
    logs = np.log(prices)
    losses = 100.0 * (logs[:-1] - logs[1:])
    if losses.shape[0] < min_rows:
        raise InsufficientDataError(f"need at least {min_rows} usable loss rows, got {losses.shape[0]}")
    return LossData([d.isoformat() for d in days[1:]], losses, names, dropped)


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------


def _fmt(val) -> str:
    if val is None:
        return ""
    if isinstance(val, (bool, np.bool_)):
        return "true" if val else "false"
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    if isinstance(val, (float, np.floating)):
        return format(float(val), ".12g")
    return str(val)


def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def fit_marginals(data: LossData, cfg: PipelineConfig):
    from .marginals import fit_gpd_excesses

    return _map(lambda j: fit_gpd_excesses(data.losses[:, j], cfg.threshold_level),
                range(len(data.names)), cfg.workers)


def marginal_rows(data: LossData, models) -> list[list]:
    rows = []
    for name, m in zip(data.names, models):
        fit = m.gpd_fit
        lo, hi = fit.xi_ci
        rows.append([name, m.threshold_level, m.threshold_value, fit.n_excesses, fit.xi, fit.se_xi, lo, hi,
                     fit.beta, fit.se_beta, fit.xi_is_zero, fit.loglik])
    return rows


MARGINAL_HEADER = ["asset", "threshold_level", "threshold", "n_excesses", "xi", "xi_se", "xi_ci_low",
                   "xi_ci_high", "beta", "beta_se", "xi_is_zero", "loglik"]


@dataclass
class CopulaStage:
    fits: dict
    errors: dict
    chosen: str


def fit_copulas(data: LossData, models, cfg: PipelineConfig) -> CopulaStage:
    from .estimation import TABLE_REGIONS, EmpiricalCopula, cube_region, fit_copula, fit_mixed_copula, \
        fitting_error, region_points
    from .marginals import pseudo_samples

    pseudo = pseudo_samples(models, data.losses, clip=True)
    dim = pseudo.shape[1]

    def fit_one(family):
        if family == "mixed":
            return fit_mixed_copula(pseudo, seed=cfg.seed)
        return fit_copula(pseudo, family)

    fits = dict(zip(FAMILIES, _map(fit_one, FAMILIES, cfg.workers)))
    emp = EmpiricalCopula(pseudo)
    errors: dict[str, dict[str, float]] = {}
    for label, (lo, hi) in TABLE_REGIONS.items():
        region = cube_region(lo, hi, dim)
        emp_vals = emp.cdf(region_points(region, seed=cfg.seed))
        errors[label] = {f: fitting_error(fits[f].copula, emp, region, seed=cfg.seed, empirical_values=emp_vals)
                         for f in FAMILIES}
    chosen = cfg.copula_choice
    if chosen == "auto":
        whole = errors["[0,1]"]
        chosen = min(FAMILIES, key=lambda f: (whole[f], FAMILIES.index(f)))
    return CopulaStage(fits, errors, chosen)


def fit_error_rows(stage: CopulaStage) -> list[list]:
    return [[region, *(errs[f] for f in FAMILIES)] for region, errs in stage.errors.items()]


def _level_label(level: Sequence[float]) -> str:
    if len(set(level)) == 1:
        return format(level[0], "g")
    return "_".join(format(p, "g") for p in level)


def compute_measures(data: LossData, models, copula, cfg: PipelineConfig):
    """One ``RiskReport`` per (level, target), keyed by level label then asset name."""
    from .measures import JointModel, MeasureRequest, check_finite, contributions

    joint = JointModel(copula, tuple(models), tuple(data.names))
    dim = len(data.names)
    for name, w in cfg.mmme_weights.items():
        if name not in data.names:
            raise InputError(f"mmme_weights given for unknown asset {name!r}")
        if len(w) != dim - 1:
            raise InputError(f"mmme_weights for {name!r} need {dim - 1} entries")
    out = {}
    for level in cfg.expand_levels(dim):
        def one(target, level=level):
            req = MeasureRequest(joint, target, level[target],
                                 tuple(p for j, p in enumerate(level) if j != target),
                                 cfg.mmme_weights.get(data.names[target]))
            rep = contributions(req)
            check_finite(rep)
            return rep

        out[_level_label(level)] = dict(zip(data.names, _map(one, range(dim), cfg.workers)))
    return out


def measure_rows(reports: dict) -> list[list]:
    from .measures import report_fields

    names = list(reports)
    return [[f, *(getattr(reports[n], f) for n in names)] for f in report_fields()]


def _output_dir(cfg: PipelineConfig) -> Path:
    out = Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit_record(fit) -> dict:
    return {"family": fit.family, "params": fit.params, "std_errors": fit.std_errors, "loglik": fit.loglik,
            "converged": fit.converged, "iterations": fit.iterations, "gradient_norm": fit.gradient_norm,
            "information_pd": fit.information_pd, "notes": list(fit.notes)}


def _provenance(cfg: PipelineConfig) -> dict:
    from .estimation import GRADIENT_TOL, WEIGHT_FLOOR
    from .marginals import MIN_EXCESSES
    from .measures import QUAD_EPSABS, QUAD_EPSREL, TAIL_CUTOFF

    return {
        "created_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.as_dict(),
        "seeds": {"copula_fit": cfg.seed, "fitting_error": cfg.seed},
        "tolerances": {"quad_epsabs": QUAD_EPSABS, "quad_epsrel": QUAD_EPSREL, "tail_cutoff": TAIL_CUTOFF,
                       "fit_gradient_tol": GRADIENT_TOL, "mixture_weight_floor": WEIGHT_FLOOR,
                       "min_excesses": MIN_EXCESSES},
        "versions": {"corisk": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }


def _dump_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def run_pipeline(cfg: PipelineConfig, stages: str = "all") -> dict[str, Path]:
    """Run the pipeline up to ``stages`` (``ingest``, ``fit`` or ``all``) and write the reports."""
    if not cfg.input_path:
        raise InputError("input_path is required")
    out = _output_dir(cfg)
    data = ingest_prices(cfg.input_path, cfg.asset_columns)
    written: dict[str, Path] = {}
    record = _provenance(cfg)
    record["ingest"] = {"rows": int(data.losses.shape[0]), "dropped_rows": data.dropped_rows,
                        "first_date": data.dates[0], "last_date": data.dates[-1], "assets": data.names}
    if stages == "ingest":
        written["losses"] = _write_csv(out / "losses.csv", ["date", *data.names],
                                       ([d, *row] for d, row in zip(data.dates, data.losses)))
    else:
        models = fit_marginals(data, cfg)
        written["marginals"] = _write_csv(out / "marginals.csv", MARGINAL_HEADER, marginal_rows(data, models))
        stage = fit_copulas(data, models, cfg)
        written["fit_errors"] = _write_csv(out / "fit_errors.csv", ["region", *FAMILIES], fit_error_rows(stage))
        record["copula_fits"] = {f: _fit_record(r) for f, r in stage.fits.items()}
        record["copula_choice"] = stage.chosen
        record["fitting_errors"] = stage.errors
        if stages == "all":
            reports = compute_measures(data, models, stage.fits[stage.chosen].copula, cfg)
            warnings = []
            for label, by_asset in reports.items():
                written[f"measures_{label}"] = _write_csv(out / f"measures_{label}.csv", ["measure", *by_asset],
                                                          measure_rows(by_asset))
                warnings += [{"level": label, "asset": a, "warning": w}
                             for a, rep in by_asset.items() for w in rep.warnings]
            record["warnings"] = warnings
    record["outputs"] = sorted(p.name for p in written.values())
    written["run"] = _dump_json(out / "run.json", record)
    return written


# ---------------------------------------------------------------------------
# Validation suites
# ---------------------------------------------------------------------------


def validate_suite(suite: str, negative_control: bool = False, n_mc: int | None = None, seed: int | None = None,
                   workers: int = 1) -> dict:
    checks: list[dict] = []
    if suite == "tables":
        from .crypto_tables import table_identities, tampered_tables

        tables = tampered_tables() if negative_control else None
        checks = [c.as_dict() for c in table_identities(tables)]
    elif suite == "theorems":
        from .orders import NEGATIVE_CONTROL_MARGIN, THEOREM_FIXTURES, check_theorem

        for fid in THEOREM_FIXTURES:
            fwd = check_theorem(fid, reverse=negative_control)
            rev = check_theorem(fid, reverse=not negative_control)
            checks.append({"fixture": fid, "direction": "forward" if not negative_control else "reversed",
                           "margin": fwd.worst_violation, "passed": fwd.passed})
            checks.append({"fixture": fid, "direction": "negative_control", "margin": rev.worst_violation,
                           "passed": rev.worst_violation < -NEGATIVE_CONTROL_MARGIN})
    elif suite == "oracles":
        from .mc import ORACLE_N, ORACLE_SEED, run_oracle_suite

        res = run_oracle_suite(n=n_mc or ORACLE_N, seed=ORACLE_SEED if seed is None else seed, workers=workers,
                               tamper=negative_control)
        checks = [c.as_dict() for c in res]
    else:
        raise InputError(f"unknown validation suite {suite!r}")
    return {"suite": suite, "negative_control": negative_control, "passed": all(c["passed"] for c in checks),
            "n_checks": len(checks), "n_failed": sum(not c["passed"] for c in checks), "checks": checks}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("input_path", nargs="?", help="CSV with a date column and one price column per asset")
    p.add_argument("--config", help="JSON file keyed by pipeline config field names")
    p.add_argument("--asset-columns", nargs="+", help="price columns to use, in order")
    p.add_argument("--threshold-level", type=float, help="quantile level of the GPD threshold (default 0.9)")
    p.add_argument("--levels", nargs="+", action="append", type=float, metavar="P",
                   help="one report level: target level then tail levels (repeatable; a single value is diagonal)")
    p.add_argument("--mmme-weights", nargs="+", action="append", metavar="ASSET W",
                   help="asset name followed by its weights over the other assets (repeatable)")
    p.add_argument("--copula-choice", choices=COPULA_CHOICES)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int, help="threads for per-asset and per-target work")


def _config_from_args(args) -> PipelineConfig:
    base = PipelineConfig.from_file(args.config).as_dict() if args.config else {}
    overrides = {
        "input_path": args.input_path, "asset_columns": args.asset_columns,
        "threshold_level": args.threshold_level, "levels": args.levels, "copula_choice": args.copula_choice,
        "seed": args.seed, "output_dir": args.output_dir, "workers": args.workers,
    }
    if args.mmme_weights:
        try:
            overrides["mmme_weights"] = {w[0]: [float(x) for x in w[1:]] for w in args.mmme_weights}
        except ValueError:
            raise InputError("--mmme-weights expects an asset name followed by numbers") from None
    base.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**base)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corisk", description="Multivariate systemic risk measures")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("ingest", "convert prices to log-losses"),
                            ("fit", "fit marginals and copulas, write fit reports"),
                            ("measure", "fit and write the risk-measure tables"),
                            ("pipeline", "run every stage and write all reports")):
        _add_pipeline_flags(sub.add_parser(name, help=help_text))
    val = sub.add_parser("validate", help="run a built-in check suite")
    val.add_argument("suite", choices=("oracles", "theorems", "tables"))
    val.add_argument("--negative-control", action="store_true",
                     help="tamper with the inputs; the suite is then expected to fail")
    val.add_argument("--n-mc", type=int, help="Monte Carlo sample size for the oracle suite")
    val.add_argument("--seed", type=int)
    val.add_argument("--workers", type=int, default=1)
    val.add_argument("--output-dir", default="corisk_output")
    return parser


def _error_record(out_dir: str | None, exc: BaseException, code: int) -> None:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    target = os.environ.get(OUTPUT_ENV) or out_dir
    if target:
        try:
            path = Path(target)
            path.mkdir(parents=True, exist_ok=True)
            _dump_json(path / "error.json", record)
        except OSError:
            pass


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out_dir = getattr(args, "output_dir", None)
    try:
        if args.command == "validate":
            report = validate_suite(args.suite, args.negative_control, args.n_mc, args.seed, args.workers)
            out = Path(os.environ.get(OUTPUT_ENV) or args.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            _dump_json(out / "validate.json", report)
            print(f"{args.suite}: {report['n_checks'] - report['n_failed']}/{report['n_checks']} checks passed")
            if not report["passed"]:
                raise ValidationFailure(f"{report['n_failed']} {args.suite} checks failed")
            return 0
        cfg = _config_from_args(args)
        out_dir = cfg.output_dir
        stages = {"ingest": "ingest", "fit": "fit", "measure": "all", "pipeline": "all"}[args.command]
        written = run_pipeline(cfg, stages)
        for key in sorted(written):
            print(written[key])
        return 0
    except CoriskError as exc:
        _error_record(out_dir, exc, exc.exit_code)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        _error_record(out_dir, exc, InputError.exit_code)
        return InputError.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
