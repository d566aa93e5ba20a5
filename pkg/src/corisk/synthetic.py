"""Synthetic three-asset price data with mixed-copula dependence and GPD tails.

Used for the bundled dataset behind the pipeline golden files. Losses follow
a normal body spliced at the 0.9 quantile to a GPD tail; prices are the
cumulative product of ``exp(-loss / 100)`` from a base of 100.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
from pathlib import Path

import numpy as np
from scipy import special

from .copulas import ClaytonCopula, GaussianCopula, GumbelCopula, MixtureCopula
from .marginals import GPD

SPLICE_LEVEL = 0.9
DEFAULT_ROWS = 1200
DEFAULT_SEED = 20150901
ASSET_NAMES = ("asset_a", "asset_b", "asset_c")
# (body mean, body sd, tail xi, tail beta) per asset
MARGIN_PARAMS = ((-0.2, 3.0, 0.08, 2.8), (-0.3, 4.5, 0.17, 3.8), (-0.2, 4.3, 0.14, 3.6))
START_DATE = dt.date(2015, 9, 1)


def synthetic_copula() -> MixtureCopula:
    return MixtureCopula((0.3, 0.5), GaussianCopula.equicorrelated(0.3, 3), GumbelCopula(2.0, 3),
                         ClaytonCopula(3.0, 3))


def spliced_loss_quantile(u: np.ndarray, mean: float, sd: float, xi: float, beta: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    splice = mean + sd * special.ndtri(SPLICE_LEVEL)
    body = mean + sd * special.ndtri(np.minimum(u, SPLICE_LEVEL))
    excess_p = np.clip((u - SPLICE_LEVEL) / (1.0 - SPLICE_LEVEL), 0.0, 1.0 - 1e-16)
    tail = splice + GPD(xi, beta).quantile(np.maximum(excess_p, 1e-300))
    return np.where(u <= SPLICE_LEVEL, body, tail)


def synthetic_losses(n_rows: int = DEFAULT_ROWS, seed: int = DEFAULT_SEED) -> np.ndarray:
    u = synthetic_copula().sample(n_rows, seed=seed)
    cols = [spliced_loss_quantile(u[:, i], *MARGIN_PARAMS[i]) for i in range(u.shape[1])]
    return np.column_stack(cols)


def synthetic_prices(n_rows: int = DEFAULT_ROWS, seed: int = DEFAULT_SEED) -> np.ndarray:
    """``n_rows + 1`` price rows whose log-losses are ``synthetic_losses``."""
    losses = synthetic_losses(n_rows, seed)
    log_prices = np.log(100.0) - np.cumsum(losses, axis=0) / 100.0
    return np.vstack([np.full((1, losses.shape[1]), 100.0), np.exp(log_prices)])


def write_price_csv(path, prices: np.ndarray, names=ASSET_NAMES, start: dt.date = START_DATE) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *names])
        for k, row in enumerate(prices):
            day = start + dt.timedelta(days=k)
            writer.writerow([day.isoformat(), *(f"{p:.10g}" for p in row)])
    return path


def bundled_dataset_path() -> Path:
    return Path(__file__).resolve().parent / "data" / "synthetic_prices.csv"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Write the synthetic three-asset price CSV")
    parser.add_argument("output", nargs="?", default=str(bundled_dataset_path()))
    parser.add_argument("--rows", type=int, default=DEFAULT_ROWS, help="number of loss rows")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = parser.parse_args(argv)
    out = write_price_csv(args.output, synthetic_prices(args.rows, args.seed))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
