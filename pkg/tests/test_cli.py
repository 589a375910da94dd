import csv
import io
import json
import shutil
import subprocess
import sys

import pytest

from mirrorspec.cli import config_hash, main, parse_grid, ConfigError


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def raw(path):
    return path.read_bytes().decode()


def table(text):
    """Data rows of a CSV emitted by the tool, header comments removed."""
    body = [ln for ln in text.split("\r\n") if ln and not ln.startswith("#")]
    return list(csv.reader(body))


def comments(text):
    return [ln[2:] for ln in text.split("\r\n") if ln.startswith("# ")]


@pytest.fixture(scope="module")
def spectrum_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("spec") / "zeta.csv"
    code, _, _ = run("spectrum", "--family", "zeta", "--b", "1", "--zeta", "1", "--want", "10", "--tol", "1e-8",
                     "--out", str(path))
    assert code == 0
    return path


def test_spectrum_rows_and_header(spectrum_csv):
    text = raw(spectrum_csv)
    rows = table(text)
    assert rows[0] == ["index", "eigenvalue", "certificate"]
    assert len(rows) == 11
    assert float(rows[1][1]) == pytest.approx(17.846643118044796, rel=1e-8)
    head = comments(text)
    assert head[0].startswith("mirrorspec ") and head[0].endswith(" spectrum")
    assert head[1].startswith("params: ")
    assert head[2].startswith("config-hash: ")


def test_spectrum_both_backends():
    code, out, _ = run("spectrum", "--backend", "both", "--want", "5")
    assert code == 0
    rows = table(out)
    assert rows[0][-1] == "grid_eigenvalue"
    for r in rows[1:]:
        assert float(r[3]) == pytest.approx(float(r[1]), rel=1e-6)


def test_spectrum_zeta_zero_warns():
    code, out, err = run("spectrum", "--zeta", "0", "--want", "3")
    assert code == 3
    assert "continuous" in err


@pytest.mark.parametrize("argv,flag", [
    (("spectrum", "--b", "abc"), "--b"),
    (("spectrum", "--backend", "fem"), "--backend"),
    (("spectrum", "--want", "-4"), "--want"),
    (("sandwich", "--lambda-grid", "10,x"), "--lambda-grid"),
])
def test_malformed_flags_exit_2(argv, flag, capsys):
    code, _, err = run(*argv)
    assert code == 2
    assert flag in err + capsys.readouterr().err


def test_sandwich_default_campaign(spectrum_csv):
    code, out, _ = run("sandwich", "--spectrum-file", str(spectrum_csv))
    assert code == 0
    rows = table(out)
    assert rows[0] == ["lambda", "lower", "riesz", "upper", "verdict"]
    assert [r[0] for r in rows[1:]] == ["10.0", "30.0", "100.0"]
    assert all(r[-1] == "pass" for r in rows[1:])


def test_sandwich_mn():
    code, out, _ = run("sandwich", "--family", "mn", "--m", "1", "--n", "1")
    assert code == 0
    assert len(table(out)) == 3


def test_sandwich_corrupted_spectrum_file(spectrum_csv, tmp_path):
    lines = raw(spectrum_csv).split("\r\n")
    bad = []
    for ln in lines:
        # move the first two levels above lambda = 100
        if ln.startswith("1,"):
            ln = "1,150.0,0.0"
        elif ln.startswith("2,"):
            ln = "2,160.0,0.0"
        bad.append(ln)
    path = tmp_path / "bad.csv"
    path.write_bytes("\r\n".join(bad).encode())
    code, out, _ = run("sandwich", "--spectrum-file", str(path))
    assert code == 5
    assert table(out)[-1][-1] == "fail"


def test_sandwich_errors(spectrum_csv, tmp_path):
    assert run("sandwich", "--lambda-grid", "1:10:0")[0] == 2
    assert run("sandwich", "--spectrum-file", str(tmp_path / "missing.csv"))[0] == 2
    # parameters in the file header disagree with the flags
    assert run("sandwich", "--b", "0.5", "--spectrum-file", str(spectrum_csv))[0] == 2
    # beyond the ten certified levels
    assert run("sandwich", "--lambda-grid", "1e6", "--spectrum-file", str(spectrum_csv))[0] == 3


def test_weyl_synthetic_exact():
    code, out, _ = run("weyl", "--synthetic", "0.1,-0.3,2", "--lambda-grid", "50:1e6:60")
    assert code == 0
    row = dict(zip(*table(out)))
    assert abs(float(row["deviation"])) < 1e-10
    assert float(row["B"]) == pytest.approx(-0.3, abs=1e-10)


def test_weyl_window_below_e():
    assert run("weyl", "--synthetic", "0.1,-0.3,2", "--lambda-grid", "1:100")[0] == 2
    assert run("weyl", "--synthetic", "0.1,0.3", "--lambda-grid", "50:100")[0] == 2


def test_weyl_curve(spectrum_csv, tmp_path):
    curve = tmp_path / "curve.csv"
    code, out, _ = run("weyl", "--spectrum-file", str(spectrum_csv), "--lambda-grid", "50:18000:30",
                       "--band", "10", "--curve", str(curve))
    assert code == 0
    rows = table(raw(curve))
    assert rows[0] == ["lambda", "N_over_log2"]
    assert len(rows) == 201
    assert comments(raw(curve))[0].endswith(" weyl")


def test_heat_synthetic_converges():
    code, out, _ = run("heat", "--synthetic", "--b", "0.25")
    assert code == 0
    ratios = [float(r[3]) for r in table(out)[1:]]
    assert all(r2 >= r1 for r1, r2 in zip(ratios, ratios[1:]))
    assert abs(ratios[-1] - 1) < 0.1


def test_heat_bad_grid():
    assert run("heat", "--synthetic", "--t-grid", "0.1,-0.01")[0] == 2
    assert run("heat", "--synthetic", "--t-grid", "0.1,0")[0] == 2


def test_heat_tail_dominated(spectrum_csv):
    code, out, _ = run("heat", "--spectrum-file", str(spectrum_csv), "--t-grid", "1e-2,1e-8")
    assert code == 3
    flags = [r[-1] for r in table(out)[1:]]
    assert flags[-1] == "tail-dominated"
    assert '# status: "precision"' in out


def test_bs_default_and_empty_rows(spectrum_csv):
    code, out, _ = run("bs", "--spectrum-file", str(spectrum_csv))
    assert code == 0
    rows = table(out)
    assert rows[0] == ["lambda", "N_spec", "bs_count", "verdict"]
    code, out, _ = run("bs", "--spectrum-file", str(spectrum_csv), "--lambda-grid", "1,1.5", "--nodes", "50")
    assert code == 0
    assert [r[1:3] for r in table(out)[1:]] == [["0", "0"], ["0", "0"]]


def test_bs_errors(spectrum_csv):
    assert run("bs", "--spectrum-file", str(spectrum_csv), "--nodes", "4")[0] == 2
    assert run("bs", "--family", "mn")[0] == 2


def test_coherent_check_default_and_seed():
    code, out, _ = run("coherent-check", "--count", "4", "--size", "6")
    assert code == 0
    code2, out2, _ = run("coherent-check", "--count", "4", "--size", "6", "--seed", "7")
    assert code2 == 0
    a, b = table(out), table(out2)
    assert [r[-1] for r in a] == [r[-1] for r in b]
    assert [r[2] for r in a[1:]] != [r[2] for r in b[1:]]


def test_coherent_check_zero_function():
    code, out, _ = run("coherent-check", "--zero-function", "--family", "mn")
    assert code == 0
    assert all(r[-1] == "pass" for r in table(out)[1:])


def test_volume_json():
    code, out, _ = run("volume", "--lambda-grid", "100,1000", "--format", "json", "--variant", "classical")
    assert code == 0
    doc = json.loads(out)
    assert doc["header"][0].endswith(" volume")
    assert doc["columns"][:2] == ["lambda", "value"]
    assert len(doc["rows"]) == 2 and doc["variant"] == "classical"


def test_deterministic_output(spectrum_csv):
    argv = ("sandwich", "--spectrum-file", str(spectrum_csv))
    assert run(*argv)[1] == run(*argv)[1]
    argv = ("coherent-check", "--count", "3", "--size", "5", "--seed", "11")
    assert run(*argv)[1] == run(*argv)[1]


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"family": "mn", "b": 0.5, "lambda-grid": "100,200", "variant": "upper"}))
    code, out, _ = run("volume", "--config", str(cfg))
    assert code == 0
    assert '"family": "mn"' in comments(out)[1]
    code, out2, _ = run("volume", "--config", str(cfg), "--b", "1")
    assert code == 0
    assert '"b": 1.0' in comments(out2)[1]
    assert comments(out)[2] != comments(out2)[2]


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"family": "zeta",\n "colour": 3}')
    code, _, err = run("volume", "--config", str(bad))
    assert code == 2 and "colour" in err
    broken = tmp_path / "broken.json"
    broken.write_text('{"family": ')
    code, _, err = run("volume", "--config", str(broken))
    assert code == 2 and "line" in err


def test_out_is_atomic(tmp_path):
    target = tmp_path / "sub" / "vol.csv"
    code, out, _ = run("volume", "--out", str(target))
    assert code == 0 and out == ""
    assert table(raw(target))[0][0] == "lambda"
    assert [p.name for p in target.parent.iterdir()] == ["vol.csv"]


def test_parse_grid():
    assert parse_grid("1:100:3", "g") == pytest.approx([1.0, 10.0, 100.0])
    assert parse_grid("5, 10,20", "g") == [5.0, 10.0, 20.0]
    with pytest.raises(ConfigError):
        parse_grid("0:10:3", "g")
    assert config_hash({"command": "x", "out": "a"}) == config_hash({"command": "x", "out": "b"})


def test_console_script(tmp_path):
    exe = shutil.which("mirrorspec")
    cmd = [exe] if exe else [sys.executable, "-m", "mirrorspec.cli"]
    res = subprocess.run(cmd + ["volume", "--lambda-grid", "100"], capture_output=True, text=True, timeout=120)
    assert res.returncode == 0
    assert res.stdout.startswith("# mirrorspec ")
    res = subprocess.run(cmd + ["nonsense"], capture_output=True, text=True, timeout=120)
    assert res.returncode == 2
