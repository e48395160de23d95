import json
import math

import numpy as np
import pandas as pd
import pytest

from src.semilab.cli import dispatch
from src.semilab.emit import (
    CONFIG_FILE,
    MANIFEST_FILE,
    canonical_json,
    load_config,
    load_manifest,
    verify_manifest,
)


def _digests(run_dir):
    return {entry.path: entry.sha256 for entry in load_manifest(run_dir / MANIFEST_FILE).files}


def test_jc_distance_prints_summary(capsys):
    assert dispatch(["chains", "jc-distance", "--p", "0.3"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["distance"] == pytest.approx(0.383119, abs=1e-6)


def test_saturated_distance_reports_model_error(capsys):
    assert dispatch(["chains", "jc-distance", "--p", "0.9"]) == 3
    captured = capsys.readouterr()
    assert captured.out == ""
    error = json.loads(captured.err.strip().splitlines()[-1])
    assert error["error"] == "SaturationError"
    assert error["p"] == pytest.approx(0.9)


def test_usage_errors_exit_with_two():
    assert dispatch(["chains", "no-such-command"]) == 2
    assert dispatch(["chains", "jc-distance"]) == 2


def test_out_directory_gets_verified_manifest(tmp_path, capsys):
    out = tmp_path / "run"
    assert dispatch(["chains", "jc-distance", "--p", "0.3", "--out", str(out)]) == 0
    assert (out / CONFIG_FILE).exists()
    assert verify_manifest(out) == []
    config = load_config(out / CONFIG_FILE)
    assert config.command == ["chains", "jc-distance"]
    assert config.parameters["p"] == pytest.approx(0.3)


def test_manifest_detects_tampering(tmp_path, capsys):
    out = tmp_path / "run"
    assert dispatch(["chains", "jc-distance", "--p", "0.3", "--out", str(out)]) == 0
    (out / "distance.json").write_text("{}", encoding="utf-8")
    assert verify_manifest(out) == ["distance.json"]


def test_config_replay_is_thread_independent(tmp_path, capsys):
    first, second = tmp_path / "one", tmp_path / "eight"
    argv = ["pdmp", "telegraph", "--paths", "10000", "--T", "1", "--seed", "11"]
    assert dispatch(argv + ["--threads", "1", "--out", str(first)]) == 0
    replay = ["--config", str(first / CONFIG_FILE), "--threads", "8", "--out", str(second)]
    assert dispatch(replay) == 0
    assert _digests(first) == _digests(second)
    assert load_config(second / CONFIG_FILE).threads == 8


def _last_error(captured):
    return json.loads(captured.err.strip().splitlines()[-1])


def _write_matrix(path, Q, header=False):
    columns = [f"s{j}" for j in range(len(Q))] if header else False
    pd.DataFrame(np.asarray(Q, dtype=float)).to_csv(path, index=False, header=columns)
    return str(path)


@pytest.mark.parametrize("header", [False, True])
def test_evolve_reads_q_matrix_from_csv(tmp_path, capsys, header):
    Q = np.full((4, 4), 1.0 / 3.0)
    np.fill_diagonal(Q, -1.0)
    path = _write_matrix(tmp_path / "q.csv", Q, header=header)
    assert dispatch(["chains", "evolve", "--q", path, "--x0", "0", "--t", "1"]) == 0
    distribution = json.loads(capsys.readouterr().out)["report"]["distribution"]
    stay = 0.25 + 0.75 * math.exp(-4.0 / 3.0)
    assert distribution[0] == pytest.approx(stay, abs=1e-9)
    assert distribution[1:] == pytest.approx([(1.0 - stay) / 3.0] * 3, abs=1e-9)


def test_evolve_rejects_ragged_and_non_square_csv(tmp_path, capsys):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("-1,1,0\n1,-1\n0,0,0\n", encoding="utf-8")
    assert dispatch(["chains", "evolve", "--q", str(ragged), "--t", "1"]) == 3
    assert _last_error(capsys.readouterr())["error"] == "ShapeError"
    wide = _write_matrix(tmp_path / "wide.csv", [[-1, 1, 0], [1, -1, 0]])
    assert dispatch(["chains", "evolve", "--q", wide, "--t", "1"]) == 3
    assert _last_error(capsys.readouterr())["error"] == "ShapeError"
    assert dispatch(["chains", "evolve", "--t", "1"]) == 2


def test_explosive_command_and_its_old_name(tmp_path, capsys):
    assert dispatch(["chains", "explosive", "--model", "pure-birth", "--growth", "geometric"]) == 0
    assert json.loads(capsys.readouterr().out)["explosivity"]["verdict"] == "explosive"
    out = tmp_path / "run"
    assert dispatch(["chains", "explosivity", "--preset", "erythrocyte", "--b", "5", "--out", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["explosivity"]["verdict"] == "non_explosive"
    assert load_config(out / CONFIG_FILE).command == ["chains", "explosive"]


def test_exactness_profile_is_written(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["transfer", "exactness", "--map", "tent", "--f0", "quadratic", "--steps", "10", "--n", "256"]
    assert dispatch(argv + ["--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)["report"]
    profile = pd.read_csv(out / "profile.csv")
    assert list(profile.columns) == ["t", "distance"]
    assert len(profile) == 11
    assert profile["distance"].iloc[-1] == pytest.approx(report["final_distance"])
    assert profile["distance"].iloc[-1] < profile["distance"].iloc[0]


def test_em_path_is_sampled_from_time_zero(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["sde", "em", "--model", "logistic", "--sigma2", "1", "--T", "2", "--dt", "1e-3", "--seed", "3"]
    assert dispatch(argv + ["--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)["report"]
    path = pd.read_csv(out / "path.csv")
    assert list(path.columns) == ["t", "x"]
    assert path["t"].iloc[0] == 0.0
    assert path["x"].iloc[0] == pytest.approx(1.0)
    assert np.all(np.diff(path["t"]) > 0)
    assert path["t"].iloc[-1] == pytest.approx(2.0)
    assert report["samples"] == len(path)
    assert dispatch(["sde", "em", "--paths", "0"]) == 3


def test_kac_command_conserves_mass(capsys):
    assert dispatch(["pdmp", "kac", "--lambda", "1", "--dx", "0.01", "--T", "0.5"]) == 0
    report = json.loads(capsys.readouterr().out)["report"]
    assert report["mass"] == pytest.approx(1.0, abs=1e-9)
    assert report["lambda"] == 1.0


def test_telegraph_accepts_lambda_spelling(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["pdmp", "telegraph", "--lambda", "2", "--paths", "2000", "--T", "0.5", "--out", str(out)]
    assert dispatch(argv) == 0
    config = load_config(out / CONFIG_FILE)
    assert config.parameters["lam"] == pytest.approx(2.0)
    assert "--lambda" in config.argv


def test_spectral_commands_read_csv_generator(tmp_path, capsys, random_intensity):
    generator = _write_matrix(tmp_path / "q.csv", random_intensity(5))
    assert dispatch(["spectral", "perron", "--q", generator]) == 0
    assert json.loads(capsys.readouterr().out)["limit"]["r"] == pytest.approx(0.0, abs=1e-9)

    jordan = _write_matrix(tmp_path / "jordan.csv", [[1.0, 1.0], [0.0, 1.0]], header=True)
    assert dispatch(["spectral", "jordan", "--q", jordan]) == 0
    growth = json.loads(capsys.readouterr().out)["growth"]
    assert growth["k"] == 2
    assert growth["r"] == pytest.approx(1.0)

    out = tmp_path / "split"
    assert dispatch(["spectral", "split", "--q", generator, "--cutoff", "-1", "--out", str(out)]) == 0
    assert pd.read_csv(out / "reconstruction.csv")["max_error"].max() < 1e-6


def test_out_path_that_is_a_file_exits_with_four(tmp_path, capsys):
    taken = tmp_path / "taken"
    taken.write_text("not a directory", encoding="utf-8")
    assert dispatch(["chains", "jc-distance", "--p", "0.3", "--out", str(taken)]) == 4
    assert _last_error(capsys.readouterr())["error"] == "OutputError"


def test_ragged_json_matrix_exits_with_three(capsys):
    assert dispatch(["spectral", "perron", "--matrix", "[[1, 2], [3]]"]) == 3
    assert _last_error(capsys.readouterr())["error"] == "ShapeError"


def test_non_finite_values_are_written_as_null():
    text = canonical_json({"slope": math.nan, "bounds": [-math.inf, 1.0, math.inf]})
    assert "NaN" not in text and "Infinity" not in text
    assert json.loads(text) == {"bounds": [None, 1.0, None], "slope": None}
