"""Printed crypto risk tables and the arithmetic identities among their entries.

The values are the three-decimal BTC/ETH/XMR tables at the diagonal levels
0.95, 0.975 and 0.99. Unconditional MMME is not printed, so its ratio is
checked against the interval of ratios consistent with three-decimal
rounding of the printed conditional and difference values.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

ASSETS = ("BTC", "ETH", "XMR")
IDENTITY_TOL = 0.005
PRINT_HALF_UNIT = 0.0005

_ROWS = ("var", "mcovar", "delta_mcovar", "delta_r_mcovar", "delta_med_mcovar", "delta_r_med_mcovar",
         "es", "mcoes", "delta_mcoes", "delta_r_mcoes", "delta_med_mcoes", "delta_r_med_mcoes",
         "mmme", "delta_mmme", "delta_r_mmme")

_RAW = {
    0.95: [
        (5.727, 7.892, 8.084), (17.151, 26.614, 24.552), (11.424, 18.722, 16.468),
        (1.995, 2.372, 2.037), (8.951, 15.140, 13.202), (1.092, 1.320, 1.163),
        (8.973, 12.915, 12.617), (21.427, 35.450, 31.652), (12.454, 22.535, 19.035),
        (1.388, 1.745, 1.509), (9.740, 18.194, 15.242), (0.833, 1.054, 0.929),
        (2.166, 7.539, 6.798), (2.082, 7.166, 6.457), (24.678, 19.240, 18.940),
    ],
    0.975: [
        (7.874, 11.003, 10.968), (23.078, 38.473, 34.230), (15.205, 27.470, 23.262),
        (1.931, 2.497, 2.121), (12.571, 23.417, 19.659), (1.196, 1.555, 1.349),
        (11.313, 16.657, 15.948), (27.880, 49.701, 42.822), (16.567, 33.044, 26.873),
        (1.464, 1.984, 1.685), (13.680, 28.139, 22.694), (0.963, 1.305, 1.127),
        (1.943, 8.100, 7.195), (1.907, 7.913, 7.025), (52.467, 42.147, 41.358),
    ],
    0.99: [
        (10.908, 15.723, 15.222), (31.983, 59.056, 50.088), (21.075, 43.333, 34.865),
        (1.932, 2.756, 2.290), (18.217, 38.570, 30.770), (1.323, 1.883, 1.593),
        (14.618, 22.333, 20.862), (37.578, 74.451, 61.134), (22.960, 52.117, 40.272),
        (1.571, 2.334, 1.930), (19.829, 46.355, 35.523), (1.117, 1.650, 1.387),
        (1.619, 10.394, 8.464), (1.607, 10.294, 8.385), (137.496, 103.021, 105.524),
    ],
}

PRINTED_TABLES: dict[float, dict[str, dict[str, float]]] = {
    level: {asset: {row: vals[i] for row, vals in zip(_ROWS, rows)} for i, asset in enumerate(ASSETS)}
    for level, rows in _RAW.items()
}

# BTC target weights on (ETH, XMR) from the 9:3:1 capitalisation ratio
PRINTED_BTC_MMME_WEIGHTS = (0.75, 0.25)


@dataclass(frozen=True)
class IdentityCheck:
    level: float
    asset: str
    identity: str
    printed: float
    implied_low: float
    implied_high: float
    tolerance: float

    @property
    def margin(self) -> float:
        """Distance from the printed value to the implied interval minus the tolerance (<= 0 passes)."""
        gap = max(self.implied_low - self.printed, self.printed - self.implied_high, 0.0)
        return gap - self.tolerance

    @property
    def passed(self) -> bool:
        return self.margin <= 1e-12

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(margin=self.margin, passed=self.passed)
        return out


def _point(level, asset, name, printed, implied, tol=IDENTITY_TOL) -> IdentityCheck:
    return IdentityCheck(level, asset, name, printed, implied, implied, tol)


def _ratio_interval(cond: float, delta: float, h: float = PRINT_HALF_UNIT) -> tuple[float, float]:
    """Range of ``delta / (cond - delta)`` over values that round to the printed ones."""
    corners = [(d / (c - d)) for c in (cond - h, cond + h) for d in (delta - h, delta + h) if c - d > 0]
    if len(corners) < 4:
        return float("-inf"), float("inf")
    return min(corners), max(corners)


def table_identities(tables=None, tol: float = IDENTITY_TOL) -> list[IdentityCheck]:
    """Every difference, ratio and median-benchmark identity in the printed tables."""
    tables = PRINTED_TABLES if tables is None else tables
    checks = []
    for level, by_asset in tables.items():
        for asset, t in by_asset.items():
            for measure, base in (("mcovar", "var"), ("mcoes", "es")):
                cond, uncond = t[measure], t[base]
                d, dmed = t[f"delta_{measure}"], t[f"delta_med_{measure}"]
                checks.append(_point(level, asset, f"delta_{measure}", d, cond - uncond, tol))
                checks.append(_point(level, asset, f"delta_r_{measure}", t[f"delta_r_{measure}"], d / uncond, tol))
                bench = cond - dmed
                checks.append(_point(level, asset, f"delta_r_med_{measure}", t[f"delta_r_med_{measure}"],
                                     dmed / bench, tol))
            lo, hi = _ratio_interval(t["mmme"], t["delta_mmme"])
            checks.append(IdentityCheck(level, asset, "delta_r_mmme", t["delta_r_mmme"], lo, hi, tol))
    return checks


def tampered_tables(level: float = 0.95, asset: str = "BTC", row: str = "delta_mcovar",
                    shift: float = 0.05) -> dict:
    """Copy of the printed tables with one entry shifted (negative control)."""
    out = {lv: {a: dict(r) for a, r in by_asset.items()} for lv, by_asset in PRINTED_TABLES.items()}
    out[level][asset][row] += shift
    return out
