import pytest
from numpy.testing import assert_allclose

from corisk.crypto_tables import (ASSETS, IDENTITY_TOL, PRINTED_BTC_MMME_WEIGHTS, PRINTED_TABLES, IdentityCheck,
                                  table_identities, tampered_tables)
from corisk.measures import report_fields


def test_shape():
    assert sorted(PRINTED_TABLES) == [0.95, 0.975, 0.99]
    for by_asset in PRINTED_TABLES.values():
        assert tuple(by_asset) == ASSETS
        for rows in by_asset.values():
            assert list(rows) == report_fields()
    assert sum(PRINTED_BTC_MMME_WEIGHTS) == 1.0


def test_worked_example():
    t = PRINTED_TABLES[0.95]["BTC"]
    assert_allclose(t["mcovar"] - t["var"], 11.424, atol=1e-9)
    assert abs(t["mcovar"] / t["var"] - 1 - 1.995) <= 0.001
    assert abs(t["delta_med_mcovar"] / (t["mcovar"] - t["delta_med_mcovar"]) - 1.092) <= 0.001


def test_all_identities_hold():
    checks = table_identities()
    assert len(checks) == 3 * 3 * 7
    failed = [c for c in checks if not c.passed]
    assert not failed, failed


# the MMME ratio is only pinned to the rounding interval of a small difference, about +-0.3 wide
@pytest.mark.parametrize("row,shift", [("delta_mcovar", 0.05), ("delta_r_mcoes", 0.05), ("mcovar", 0.05),
                                       ("delta_med_mcoes", 0.05), ("delta_r_mmme", 1.0)])
def test_tampering_is_detected(row, shift):
    failed = [c for c in table_identities(tampered_tables(0.975, "ETH", row, shift)) if not c.passed]
    assert failed and all(c.level == 0.975 and c.asset == "ETH" for c in failed)


def test_interval_margin():
    inside = IdentityCheck(0.95, "BTC", "x", 1.0, 0.99, 1.01, IDENTITY_TOL)
    outside = IdentityCheck(0.95, "BTC", "x", 1.1, 0.99, 1.01, IDENTITY_TOL)
    assert inside.passed and inside.margin == -IDENTITY_TOL
    assert not outside.passed and outside.margin == pytest.approx(0.09 - IDENTITY_TOL)
    assert outside.as_dict()["passed"] is False
