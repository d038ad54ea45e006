import numpy as np
import pytest

from ldisc.examples import dc_motor_plant, dc_motor_reference
from ldisc.exceptions import DatasetParseError, SingularityError
from ldisc.freq_data import (
    FrequencyDataset,
    FrequencySample,
    RationalTransferMatrix,
    load_dataset,
    load_rational,
    logspace_frequencies,
    sample_rational,
    save_dataset,
    save_rational,
)


def test_logspace_standard_grid():
    w = logspace_frequencies(1e-2, 1e2, 50)
    assert w.size == 50
    assert w[0] == 1e-2 and w[-1] == 1e2
    assert np.all(np.diff(w) > 0)


def test_logspace_midpoint():
    np.testing.assert_allclose(logspace_frequencies(1, 100, 3), [1, 10, 100], rtol=1e-15)


def test_logspace_matches_geometric_recursion():
    q = 10 ** (4 / 199)
    expected = 1e-2 * q ** np.arange(200)
    np.testing.assert_allclose(logspace_frequencies(1e-2, 1e2, 200), expected, rtol=1e-12)


@pytest.mark.parametrize("args", [(0, 1, 5), (2, 1, 5), (1, 2, 1), (1, 1, 3), (-1, 1, 3)])
def test_logspace_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        logspace_frequencies(*args)


def test_dc_motor_dc_gain():
    K, f, R = 0.021, 0.0182, 0.56
    ds = sample_rational(dc_motor_plant(), [1e-6, 1.0])
    assert ds.responses[0, 0, 0] == pytest.approx(K / (f * R + K**2), rel=1e-6)
    assert abs(ds.responses[0, 0, 0] - 1.9750) < 1e-4


def test_reference_at_natural_frequency():
    ds = sample_rational(dc_motor_reference(), [10.0, 20.0])
    assert ds.responses[0, 0, 0] == pytest.approx(-0.5j, abs=1e-15)


def test_constant_model():
    ds = sample_rational(RationalTransferMatrix.siso([1.0], [1.0]), [0.5, 1.0, 3.0])
    assert np.all(ds.responses == 1.0)


def test_sampling_at_a_pole_names_frequency():
    model = RationalTransferMatrix.siso([1.0], [1.0, 0.0, 4.0])  # poles at +-2j
    with pytest.raises(SingularityError, match="omega=2.0"):
        sample_rational(model, [1.0, 2.0, 3.0])


def test_sampling_agrees_with_direct_evaluation(rng):
    model = RationalTransferMatrix(
        [[[1.0, 2.0], [0.5]], [[3.0], [1.0, 0.0, 1.0]]],
        [[[1.0, 3.0, 2.0], [1.0, 1.0]], [[2.0, 1.0], [1.0, 2.0, 5.0]]],
    )
    w = np.sort(rng.uniform(0.01, 100, 30))
    ds = sample_rational(model, w)
    for k, wk in enumerate(w):
        s = 1j * wk
        direct = np.array([[(s + 2) / (s**2 + 3 * s + 2), 0.5 / (s + 1)],
                           [3 / (2 * s + 1), (s**2 + 1) / (s**2 + 2 * s + 5)]])
        np.testing.assert_allclose(ds.responses[k], direct, rtol=1e-14)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        FrequencyDataset([1.0], [1.0])
    with pytest.raises(ValueError):
        FrequencyDataset([2.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        FrequencyDataset([1.0, 2.0], [1.0, np.nan])
    with pytest.raises(ValueError):
        FrequencySample(0.0, 1.0)
    ds = FrequencyDataset([1.0, 2.0], [1.0, 2.0])
    assert (ds.n_o, ds.n_i, len(ds)) == (1, 1, 2)
    assert ds.samples[1].response.shape == (1, 1)
    assert FrequencyDataset.from_samples(ds.samples) == ds
    with pytest.raises(ValueError):
        ds.responses[0, 0, 0] = 3.0


def test_load_mimo_row(tmp_path):
    p = tmp_path / "d.csv"
    header = "omega,re_1_1,im_1_1,re_1_2,im_1_2,re_2_1,im_2_1,re_2_2,im_2_2"
    p.write_text(f"# comment\n{header}\n1.0,0.5,0.1,0,0,0,0,0.8,-0.2\n2.0,1,0,0,0,0,0,1,0\n")
    ds = load_dataset(p, 2, 2)
    np.testing.assert_array_equal(ds.responses[0], [[0.5 + 0.1j, 0], [0, 0.8 - 0.2j]])
    assert load_dataset(p) == ds


def test_load_siso_50_rows(tmp_path):
    w = logspace_frequencies(1e-2, 1e2, 50)
    ds = sample_rational(dc_motor_plant(), w)
    p = tmp_path / "dc.csv"
    save_dataset(ds, p)
    back = load_dataset(p, 1, 1)
    assert len(back) == 50 and back.n_o == back.n_i == 1
    assert back == ds


def test_load_sorts_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("omega,re_1_1,im_1_1\n2.0,2,0\n1.0,1,0\n")
    ds = load_dataset(p)
    np.testing.assert_array_equal(ds.omega, [1.0, 2.0])
    np.testing.assert_array_equal(ds.responses[:, 0, 0], [1.0, 2.0])


def test_duplicate_frequency_is_named(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("omega,re_1_1,im_1_1\n1.5,1,0\n2.0,1,0\n1.5,3,0\n")
    with pytest.raises(DatasetParseError, match="omega=1.5"):
        load_dataset(p)


@pytest.mark.parametrize(
    "body, line",
    [
        ("omega,re_1_1,im_1_1\n1.0,1\n", 2),
        ("omega,re_1_1,im_1_1\n1.0,1,0\n2.0,x,0\n", 3),
        ("omega,re_1_1,im_1_1\n-1.0,1,0\n2.0,1,0\n", 2),
    ],
)
def test_malformed_rows_report_line(tmp_path, body, line):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(DatasetParseError) as err:
        load_dataset(p)
    assert err.value.line == line


def test_shape_mismatch_is_parse_error(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("omega,re_1_1,im_1_1\n1.0,1,0\n2.0,1,0\n")
    with pytest.raises(DatasetParseError):
        load_dataset(p, 2, 2)


def test_missing_file(tmp_path):
    with pytest.raises(DatasetParseError):
        load_dataset(tmp_path / "nope.csv")


def test_save_load_save_is_bit_exact(tmp_path, rng):
    w = np.sort(rng.uniform(0.01, 100, 40))
    ds = FrequencyDataset(w, rng.standard_normal((40, 2, 3)) + 1j * rng.standard_normal((40, 2, 3)))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    save_dataset(ds, a)
    save_dataset(load_dataset(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_rational_file_round_trip(tmp_path):
    model = RationalTransferMatrix([[[1.0, 2.0], [0.0]]], [[[1.0, 3.0, 2.0], [1.0]]])
    p = tmp_path / "m.json"
    save_rational(model, p)
    back = load_rational(p)
    s = 0.3 + 2.0j
    np.testing.assert_array_equal(back.evaluate(s), model.evaluate(s))
    assert back.shape == (1, 2)


def test_rational_rejects_zero_denominator():
    with pytest.raises(ValueError):
        RationalTransferMatrix.siso([1.0], [0.0])
