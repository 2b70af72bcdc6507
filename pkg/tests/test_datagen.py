import numpy as np
import pytest

from jdpricer import datagen, pide
from jdpricer.core import (AMERICAN, CALL, PUT, QuoteDataset, ValidationError,
                           intrinsic)
from jdpricer.datagen import (SamplerRanges, generate_synthetic,
                              load_market_csv, subsample, write_quotes_csv)


@pytest.fixture(scope="module")
def small_synthetic(spy_params):
    ranges = SamplerRanges(n_samples=120, seed=404)
    return generate_synthetic(spy_params, ranges, n_x=240, n_t=80)


class TestGenerateSynthetic:
    def test_deterministic(self, spy_params):
        ranges = SamplerRanges(n_samples=10, seed=7)
        a = generate_synthetic(spy_params, ranges, n_x=120, n_t=40)
        b = generate_synthetic(spy_params, ranges, n_x=120, n_t=40)
        assert len(a) == 10
        assert np.array_equal(a.price, b.price)
        assert np.array_equal(a.split, b.split)

    def test_labels_dominate_payoff(self, small_synthetic):
        pay = intrinsic(CALL, 1.0, small_synthetic.spot / small_synthetic.strike) \
            * small_synthetic.strike
        assert np.all(small_synthetic.price >= pay - 1e-9)
        assert np.all(small_synthetic.price >= 0.0)

    def test_labels_arbitrage_sane(self, small_synthetic):
        assert np.all(small_synthetic.price <= small_synthetic.spot + 1e-9)

    def test_put_labels_below_strike(self, spy_params):
        ranges = SamplerRanges(n_samples=20, kind=PUT, seed=3)
        data = generate_synthetic(spy_params, ranges, n_x=160, n_t=50)
        assert np.all(data.price <= data.strike + 1e-9)
        pay = np.maximum(data.strike - data.spot, 0.0)
        assert np.all(data.price >= pay - 1e-9)

    def test_split_proportions(self, small_synthetic):
        n = len(small_synthetic)
        n_train = int((small_synthetic.split == "train").sum())
        n_val = int((small_synthetic.split == "val").sum())
        n_test = int((small_synthetic.split == "test").sum())
        assert n_train + n_val + n_test == n
        assert n_train == round(0.70 * n)
        assert n_val == round(0.15 * n)

    def test_repricing_generated_row_is_idempotent(self, spy_params,
                                                   small_synthetic):
        for i in (0, 17, 63):
            again = datagen._price_rows(
                spy_params, CALL, AMERICAN,
                float(small_synthetic.strike[i]), float(small_synthetic.tau[i]),
                float(small_synthetic.rate[i]),
                np.array([small_synthetic.spot[i]]), n_x=240, n_t=80)[0]
            assert abs(again - small_synthetic.price[i]) < 1e-6

    def test_call_price_nonincreasing_in_strike(self, spy_params):
        spot, tau, rate = 300.0, 0.6, 0.02
        strikes = np.linspace(200.0, 400.0, 9)
        prices = [datagen._price_rows(spy_params, CALL, AMERICAN, float(k),
                                      tau, rate, np.array([spot]),
                                      n_x=240, n_t=80)[0]
                  for k in strikes]
        assert np.all(np.diff(prices) <= 1e-9)

    def test_ranges_validation(self):
        with pytest.raises(ValidationError):
            SamplerRanges(tau=(0.0, 1.0))
        with pytest.raises(ValidationError):
            SamplerRanges(spot=(500.0, 200.0))
        with pytest.raises(ValidationError):
            SamplerRanges(kind="X")


class TestCsvRoundTrip:
    def test_write_then_load_is_identical(self, small_synthetic, tmp_path):
        path = tmp_path / "quotes.csv"
        write_quotes_csv(small_synthetic, path)
        again = load_market_csv(path)
        assert np.array_equal(again.spot, small_synthetic.spot)
        assert np.array_equal(again.strike, small_synthetic.strike)
        assert np.array_equal(again.tau, small_synthetic.tau)
        assert np.array_equal(again.rate, small_synthetic.rate)
        assert np.array_equal(again.price, small_synthetic.price)
        assert np.array_equal(again.split, small_synthetic.split)
        assert np.array_equal(again.kind, small_synthetic.kind)

    def test_raw_schema_midpoint(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("underlying,strike,tau,rate,kind,bid,ask\n"
                        "100,90,0.5,0.02,C,2,4\n")
        data = load_market_csv(path)
        assert len(data) == 1
        assert data.price[0] == pytest.approx(3.0)

    def test_negative_bid_rejected(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("underlying,strike,tau,rate,kind,bid,ask\n"
                        "100,90,0.5,0.02,C,-2,4\n"
                        "100,95,0.5,0.02,C,1,3\n")
        with pytest.warns(UserWarning, match="rejected malformed rows at lines 2"):
            data = load_market_csv(path)
        assert len(data) == 1
        assert data.price[0] == pytest.approx(2.0)

    def test_empty_file_warns(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.warns(UserWarning, match="empty file"):
            data = load_market_csv(path)
        assert len(data) == 0

    def test_header_only_warns(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("underlying,strike,tau,rate,kind,price\n")
        with pytest.warns(UserWarning, match="no valid rows"):
            assert len(load_market_csv(path)) == 0

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("underlying,strike,tau\n1,2,3\n")
        with pytest.raises(ValidationError, match="missing columns"):
            load_market_csv(path)

    def test_malformed_row_line_numbers(self, tmp_path):
        path = tmp_path / "mal.csv"
        path.write_text("underlying,strike,tau,rate,kind,price\n"
                        "100,90,0.5,0.02,C,11.0\n"
                        "100,90,0.5,0.02,C,not-a-number\n"
                        "100,90,0.5,0.02,Q,3.0\n")
        with pytest.warns(UserWarning, match="lines 3, 4"):
            data = load_market_csv(path)
        assert len(data) == 1


class TestSubsample:
    def test_identity_at_ratio_one(self, small_synthetic):
        out = subsample(small_synthetic, 1.0, seed=1)
        assert np.array_equal(out.price, small_synthetic.price)

    def test_same_seed_same_subset(self, small_synthetic):
        a = subsample(small_synthetic, 0.3, seed=5)
        b = subsample(small_synthetic, 0.3, seed=5)
        assert np.array_equal(a.price, b.price)

    def test_ratio_and_proportions(self, small_synthetic):
        out = subsample(small_synthetic, 0.5, seed=9)
        assert len(out) == pytest.approx(0.5 * len(small_synthetic), abs=2)
        frac_train = (out.split == "train").sum() / len(out)
        assert frac_train == pytest.approx(0.70, abs=0.05)

    def test_ratio_validation(self, small_synthetic):
        with pytest.raises(ValidationError):
            subsample(small_synthetic, 0.0)
        with pytest.raises(ValidationError):
            subsample(small_synthetic, 1.5)
