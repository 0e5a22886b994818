import json
import math

import numpy as np
import pytest
from scipy import stats

from mfising import Dataset, DomainError, RngSpec, empirical_moments, model_summary, read_dataset, sample_dataset


def test_fair_coin():
    d = sample_dataset((0, 0, 0), 1, 100_000, RngSpec(1))
    assert set(np.unique(d.values)) == {-1.0, 1.0}
    assert abs(d.values.mean()) < 4 / math.sqrt(d.M)


def test_biased_mean_within_four_se():
    s = model_summary((0, 0, 0.5), 300)
    d = sample_dataset((0, 0, 0.5), 300, 100_000, RngSpec(2))
    se = math.sqrt((s.mu[1] - s.mu[0] ** 2) / d.M)
    assert abs(d.values.mean() - 0.4621172) < 4 * se


def test_bimodal_histogram():
    d = sample_dataset((0, 1.2, 0), 300, 1000, RngSpec(7))
    assert np.mean(d.values < 0) >= 0.3
    assert np.mean(d.values > 0) >= 0.3


def test_goodness_of_fit():
    theta, N, M = (0.5, 0.3, 0.1), 20, 1_000_000
    d = sample_dataset(theta, N, M, RngSpec(5))
    expected = model_summary(theta, N).pmf * M
    observed = np.bincount(d.index, minlength=N + 1)
    keep = expected >= 5
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    assert stats.chisquare(obs, exp).pvalue > 0.001


def test_on_spectrum_and_suffstats():
    d = sample_dataset((0.2, -0.5, 0.3), 37, 500, RngSpec(9))
    np.testing.assert_array_equal(d.values, (2 * d.index - 37) / 37)
    v = d.values
    np.testing.assert_allclose(d.suffstats, [v.sum(), (v**2).sum(), (v**3).sum()], atol=1e-10)
    assert d.theta_true == (0.2, -0.5, 0.3) and d.seed == 9 and d.stream == 0


def test_reproducible_and_streams_differ():
    a = sample_dataset((0.5, 0.3, 0.1), 300, 2000, RngSpec(11, 0))
    b = sample_dataset((0.5, 0.3, 0.1), 300, 2000, RngSpec(11, 0))
    c = sample_dataset((0.5, 0.3, 0.1), 300, 2000, RngSpec(11, 1))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert abs(np.corrcoef(a.values, c.values)[0, 1]) < 4 / math.sqrt(2000)


def test_rng_spec_validation():
    with pytest.raises(DomainError):
        RngSpec(-1)
    with pytest.raises(DomainError):
        RngSpec(2**64)
    with pytest.raises(DomainError):
        RngSpec(0, -1)
    assert RngSpec(3, 2).chain(1) == RngSpec(3, 2, (1, 1))


def test_empirical_moments():
    np.testing.assert_array_equal(empirical_moments(Dataset(1, [1, -1])), [0, 1, 0])
    np.testing.assert_array_equal(empirical_moments(Dataset(4, [0.5])), [0.5, 0.25, 0.125])


def test_empirical_moments_match_model():
    theta = (0.5, 0.3, 0.1)
    s = model_summary(theta, 300)
    d = sample_dataset(theta, 300, 100_000, RngSpec(4))
    m = d.values
    se = np.array([m.std(), (m**2).std(), (m**3).std()]) / math.sqrt(d.M)
    assert np.all(np.abs(empirical_moments(d) - s.mu[:3]) < 4 * se)


def test_rejects_bad_data():
    with pytest.raises(DomainError):
        Dataset(4, [])
    with pytest.raises(DomainError) as info:
        Dataset(4, [0.5, 1.0, 0.3])
    assert info.value.row == 2
    with pytest.raises(DomainError):
        Dataset(4, [0.5, np.nan])
    with pytest.raises(DomainError):
        sample_dataset((np.nan, 0, 0), 4, 3)


def test_snaps_within_one_ulp():
    d = Dataset(3, [1 / 3 + 1e-17, np.nextafter(-1 / 3, 0)])
    assert d.values[0] == (2 * 2 - 3) / 3 and d.values[1] == -1 / 3


def test_round_trips(tmp_path):
    d = sample_dataset((0.5, 0.3, 0.1), 300, 50, RngSpec(8, 3))
    d.to_csv(tmp_path / "d.csv")
    d.to_json(tmp_path / "d.json")
    back_json = read_dataset(tmp_path / "d.json")
    back_csv = read_dataset(tmp_path / "d.csv")
    for back in (back_json, back_csv):
        np.testing.assert_array_equal(back.values, d.values)
        assert back.N == 300 and back.stream == 3 and back.theta_true == d.theta_true
    doc = json.loads((tmp_path / "d.json").read_text())
    assert set(doc) == {"n", "m_count", "seed", "stream", "theta_true", "values"}
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "m"


def test_csv_needs_N(tmp_path):
    (tmp_path / "x.csv").write_text("m\n1.0\n")
    with pytest.raises(DomainError):
        read_dataset(tmp_path / "x.csv")
    assert read_dataset(tmp_path / "x.csv", N=2).M == 1
    (tmp_path / "y.csv").write_text("value\n1.0\n")
    with pytest.raises(DomainError):
        read_dataset(tmp_path / "y.csv", N=2)
