import json

import numpy as np
import pytest

from conftest import random_stable_ss
from ldisc.cli import main
from ldisc.controller import save_controller
from ldisc.examples import (
    THETA_INIT,
    dc_motor_dataset,
    dc_motor_reference,
    dc_motor_structure,
    exact_ideal_dc_theta,
)
from ldisc.freq_data import FrequencyDataset, RationalTransferMatrix, load_dataset, logspace_frequencies, save_dataset, save_rational
from ldisc.loewner import DescriptorRealization, save_realization


@pytest.fixture
def dc_files(tmp_path):
    save_dataset(dc_motor_dataset(50), tmp_path / "data.csv")
    save_rational(dc_motor_reference(), tmp_path / "ref.json")
    st = dc_motor_structure()
    (tmp_path / "structure.json").write_text(json.dumps(st.to_dict()))
    save_controller(st, THETA_INIT, tmp_path / "init.json")
    return tmp_path


def read_csv_body(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# version=")
    return lines[1], [list(map(float, l.split(","))) for l in lines[2:]]


def test_missing_data_file_exits_10(tmp_path, capsys):
    code = main(["identify", "--data", str(tmp_path / "nope.csv")])
    assert code == 10
    assert "DatasetParseError" in capsys.readouterr().err


def test_bad_epsilon_exits_64(dc_files):
    code = main(["design", "--data", str(dc_files / "data.csv"), "--ref", str(dc_files / "ref.json"),
                 "--structure", str(dc_files / "structure.json"), "--auto-init", "--eps", "0"])
    assert code == 64


def test_argparse_errors_exit_64():
    with pytest.raises(SystemExit) as info:
        main(["design", "--max-iter", "many"])
    assert info.value.code == 64
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 64


def test_design_needs_init_choice(dc_files):
    code = main(["design", "--data", str(dc_files / "data.csv"), "--ref", str(dc_files / "ref.json"),
                 "--structure", str(dc_files / "structure.json")])
    assert code == 64


def test_constant_data_is_degenerate(tmp_path):
    w = logspace_frequencies(1e-2, 1e2, 20)
    save_dataset(FrequencyDataset(w, np.full(20, 2.0 + 0j)), tmp_path / "c.csv")
    assert main(["identify", "--data", str(tmp_path / "c.csv")]) == 14


def test_dimension_mismatch_exits_11(dc_files):
    save_rational(RationalTransferMatrix([[[1.0], [0.0]], [[0.0], [1.0]]], [[[1.0, 1.0], [1.0]], [[1.0], [1.0, 1.0]]]),
                  dc_files / "ref2.json")
    code = main(["design", "--data", str(dc_files / "data.csv"), "--ref", str(dc_files / "ref2.json"),
                 "--structure", str(dc_files / "structure.json"), "--init", str(dc_files / "init.json")])
    assert code == 11


def test_identify_orders(dc_files, tmp_path, capsys):
    assert main(["identify", "--data", str(dc_files / "data.csv"), "--out", str(tmp_path / "r.json")]) == 0
    assert "order r = 2" in capsys.readouterr().out
    assert json.loads((tmp_path / "r.json").read_text())["interpolation_residual"] < 1e-8

    rng = np.random.default_rng(7)
    A, B, C = random_stable_ss(rng, 6, 1, 1)
    w = logspace_frequencies(1e-2, 1e2, 60)
    H = np.array([C @ np.linalg.solve(1j * x * np.eye(6) - A, B) for x in w])
    save_dataset(FrequencyDataset(w, H), tmp_path / "six.csv")
    assert main(["identify", "--data", str(tmp_path / "six.csv")]) == 0
    assert "order r = 6" in capsys.readouterr().out


def test_hinf_and_abscissa(tmp_path, capsys):
    real = DescriptorRealization.from_state_space([[-1.0]], [[1.0]], [[1.0]])
    save_realization(real, tmp_path / "r.json")
    assert main(["hinf-norm", "--realization", str(tmp_path / "r.json")]) == 0
    assert capsys.readouterr().out.strip() == "1.000000"
    assert main(["hinf", "--realization", str(tmp_path / "r.json")]) == 0
    assert capsys.readouterr().out.strip() == "1.000000"
    assert main(["abscissa", "--realization", str(tmp_path / "r.json")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(-1.0)


def test_evaluate_zero_controller(dc_files, tmp_path):
    save_controller(dc_motor_structure(), [1.0, 1.0, 1.0, 1.0, 0.0], tmp_path / "k0.json")
    assert main(["evaluate", "--data", str(dc_files / "data.csv"), "--controller", str(tmp_path / "k0.json"),
                 "--out", str(tmp_path / "e.csv")]) == 0
    header, rows = read_csv_body(tmp_path / "e.csv")
    assert header == "omega,M_re_1_1,M_im_1_1"
    assert np.all(np.array(rows)[:, 1:] == 0.0)


def test_evaluate_ideal_controller_matches_reference(dc_files, tmp_path):
    theta = exact_ideal_dc_theta()
    theta[1] = 1e-8
    save_controller(dc_motor_structure(), theta, tmp_path / "kf.json")
    assert main(["evaluate", "--data", str(dc_files / "data.csv"), "--controller", str(tmp_path / "kf.json"),
                 "--ref", str(dc_files / "ref.json"), "--out", str(tmp_path / "e.csv")]) == 0
    header, rows = read_csv_body(tmp_path / "e.csv")
    assert header == "omega,Md_re_1_1,Md_im_1_1,M_re_1_1,M_im_1_1"
    rows = np.array(rows)
    Md = rows[:, 1] + 1j * rows[:, 2]
    M = rows[:, 3] + 1j * rows[:, 4]
    assert np.abs(M - Md).max() < 1e-2


def test_evaluate_to_stdout(dc_files, capsys):
    assert main(["evaluate", "--data", str(dc_files / "data.csv"), "--controller",
                 str(dc_files / "init.json")]) == 0
    out = capsys.readouterr()
    assert out.out.splitlines()[1] == "omega,M_re_1_1,M_im_1_1"
    assert len(out.out.splitlines()) == 52
    assert "stable" in out.err


def _run_design(dc_files, out):
    return main(["design", "--data", str(dc_files / "data.csv"), "--ref", str(dc_files / "ref.json"),
                 "--structure", str(dc_files / "structure.json"), "--init", str(dc_files / "init.json"),
                 "--max-iter", "3", "--no-timing", "--out", str(out)])


def test_design_outputs_and_byte_identical_rerun(dc_files, tmp_path, capsys):
    assert _run_design(dc_files, tmp_path / "a") == 2
    assert "final objective d=" in capsys.readouterr().out
    assert _run_design(dc_files, tmp_path / "b") == 2
    for name in ("iterations.csv", "controller.json", "evaluation.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    lines = (tmp_path / "a" / "iterations.csv").read_text().splitlines()
    assert lines[0].startswith("# version=")
    assert lines[1] == "iter,objective,gamma,norm_margin,accepted,wall_ms"
    lines = lines[2:]
    assert [int(l.split(",")[0]) for l in lines] == [0, 1, 2, 3]
    assert all(l.endswith(",") for l in lines)
    objectives = [float(l.split(",")[1]) for l in lines]
    assert objectives == sorted(objectives, reverse=True)

    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["provenance"]["seed"] == 0
    assert len(report["provenance"]["config_hash"]) == 16
    assert report["stop_reason"] == "max_iter"


def test_demo_writes_inputs(tmp_path, capsys):
    code = main(["demo", "dc-motor", "--max-iter", "2", "--no-timing", "--out", str(tmp_path)])
    assert code == 2
    for name in ("data.csv", "reference.json", "structure.json", "config.json", "report.json",
                 "iterations.csv", "controller.json", "evaluation.csv"):
        assert (tmp_path / name).exists()
    assert load_dataset(tmp_path / "data.csv") == dc_motor_dataset(50)
    assert json.loads((tmp_path / "config.json").read_text())["max_iter"] == 2
