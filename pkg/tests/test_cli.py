import csv
import io
import json

import pytest

from noisyfractal.cli import dispatch


def run(args):
    out, err = io.StringIO(), io.StringIO()
    code = dispatch(args, out, err)
    return code, out.getvalue(), err.getvalue()


def table(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture
def config(tmp_path):
    def write(name, **cfg):
        path = tmp_path / name
        path.write_text(json.dumps(cfg))
        return str(path)

    return write


def test_dim(config):
    code, out, _ = run(["dim", "--config", config("c.json", ratios=["1/3", "1/3"])])
    assert code == 0 and out == "0.630929753571\n"


def test_chaos_single_start(config):
    path = config("t.json", ratios=["1/3", "1/3"], noise={"type": "tent", "epsilon": 0.1})
    code, out, _ = run(["chaos", "--config", path, "--x0", "1/7"])
    assert code == 0
    assert table(out) == [{"x0": "1/7", "k": "", "collapse_stage": "4", "n0": "3", "bound_satisfied": "true"}]


def test_chaos_sweep(config):
    path = config("t.json", ratios=["1/3", "1/3"], noise={"type": "tent", "epsilon": 0.1, "variant": "merge"})
    code, out, _ = run(["chaos", "--config", path, "--x0", "q<=16"])
    rows = table(out)
    assert code == 0 and len(rows) > 50
    assert all(r["bound_satisfied"] == "true" for r in rows if r["k"])


def test_condition_violation_exit_code(config):
    path = config("bad.json", ratios=[0.5, 0.5], noise={"type": "trivalued", "deltas": [0.1, 0.1]})
    code, out, err = run(["analytic1", "--config", path, "--max-stage", "8"])
    assert code == 2
    assert "xi_max <= delta_min / (2*delta_max + delta_min)" in err
    assert out == ""


@pytest.mark.parametrize(
    "cfg,field",
    [
        ({"ratios": [0.5, 0.5], "colour": 1}, "colour"),
        ({"noise": {"type": "trivalued", "deltas": [0.1]}}, "ratios"),
        ({"ratios": [0.5, 0.5], "noise": {"type": "trivalued", "deltas": [0.1, 0.1], "sigma": 1}}, "noise.sigma"),
        ({"ratios": [0.5, 0.5], "noise": {"type": "trivalued"}}, "noise.deltas"),
        ({"ratios": [0.5, 1.5]}, "ratios"),
        ({"ratios": [0.5, 0.5], "noise": {"type": "trivalued", "deltas": [0.1, 1.2]}}, "noise"),
        ({"ratios": [0.5, 0.5], "trials": -3}, "trials"),
    ],
)
def test_config_errors_name_the_field(config, cfg, field):
    code, _, err = run(["simulate", "--config", config("x.json", **cfg)])
    assert code == 1
    assert err.startswith(f"error: {field}")


def test_missing_and_malformed_config(tmp_path):
    assert run(["dim", "--config", str(tmp_path / "nope.json")])[0] == 1
    (tmp_path / "broken.json").write_text("{ratios: ")
    assert run(["dim", "--config", str(tmp_path / "broken.json")])[0] == 1
    assert run(["frobnicate"])[0] == 1


def test_budget_exit_code(config):
    path = config("c.json", ratios=[0.25, 0.25], noise={"type": "trivalued", "deltas": [0.1, 0.1]})
    assert run(["analytic1", "--config", path, "--max-stage", "20", "--oracle"])[0] == 3
    assert run(["tree", "--config", path, "--depth", "40"])[0] == 3


def test_simulate_output(config, tmp_path):
    path = config("c.json", ratios=[0.25, 0.25], noise={"type": "trivalued", "deltas": [0.1, 0.1]})
    target = tmp_path / "out" / "sim.csv"
    code, out, _ = run(["simulate", "--config", path, "--trials", "5000", "--horizon", "6", "--out", str(target)])
    assert code == 0 and out == ""
    text = target.read_text()
    head = [l for l in text.splitlines() if l.startswith("#")]
    assert head[0].startswith("# noisyfractal ")
    assert any(l.startswith("# config-sha256: ") for l in head)
    assert "# seed: 0" in head
    rows = table(text)
    assert [r["stage"] for r in rows] == [str(n) for n in range(1, 7)]
    assert set(rows[0]) == {"stage", "estimate", "stderr", "trials"}
    # a rerun reproduces the file byte for byte
    again = run(["simulate", "--config", path, "--trials", "5000", "--horizon", "6"])[1]
    assert again == text


def test_seed_changes_header_and_rows(config):
    path = config("c.json", ratios=[0.25, 0.25], noise={"type": "trivalued", "deltas": [0.1, 0.1]})
    a = run(["simulate", "--config", path, "--trials", "3000", "--horizon", "5", "--seed", "1"])[1]
    b = run(["simulate", "--config", path, "--trials", "3000", "--horizon", "5", "--seed", "2"])[1]
    assert "# seed: 1" in a and a != b


def test_probabilities_positional_and_clamped(config):
    path = config("c.json", ratios=[0.25, 0.25], noise={"type": "trivalued", "deltas": [0.1, 0.1]})
    code, out, _ = run(["analytic1", "--config", path, "--max-stage", "80"])
    assert code == 0
    rows = table(out)
    for r in rows:
        for key in ("LE", "NT", "C", "GE"):
            assert "e" not in r[key].lower()
    assert rows[-1]["C"] == "0"
    assert "below 1e-12 written as 0" in out.splitlines()[-1]


def test_json_envelope(config):
    path = config("c.json", ratios=[0.25, 0.25], noise={"type": "trivalued", "deltas": [0.1, 0.1]})
    code, out, _ = run(["analytic1", "--config", path, "--max-stage", "4", "--json"])
    doc = json.loads(out)
    assert code == 0
    assert doc["meta"]["command"] == "analytic1"
    assert doc["rows"][2]["C"] == pytest.approx(0.265625)
    assert doc["rows"][3]["regime"] == "deep"


def test_analytic2_dumps(config, tmp_path):
    path = config(
        "u.json", ratios=[0.5, 0.5], noise={"type": "density", "family": "uniform", "beta": 1.5}, resolution=256
    )
    dumps = tmp_path / "dumps"
    code, out, _ = run(["analytic2", "--config", path, "--max-stage", "3", "--dump-densities", str(dumps)])
    assert code == 0
    assert float(table(out)[0]["C"]) == pytest.approx(1 / 6, abs=1e-3)
    files = sorted(p.name for p in dumps.iterdir())
    assert files == ["density_stage_1.csv", "density_stage_2.csv", "density_stage_3.csv"]
    assert set(table((dumps / files[0]).read_text())[0]) == {"x", "value"}


def test_emit_intervals_noiseless(config):
    code, out, _ = run(["emit-intervals", "--config", config("c.json", ratios=["1/3", "1/3"]), "--depth", "3"])
    rows = table(out)
    assert code == 0 and len(rows) == 8
    assert all(float(r["length"]) == pytest.approx(1 / 27) for r in rows)


def test_tree_rows(config):
    path = config("c.json", ratios=[0.25, 0.25], noise={"type": "trivalued", "deltas": [0.1, 0.1]}, depth=3)
    code, out, _ = run(["tree", "--config", path])
    rows = table(out)
    assert code == 0
    assert rows[0]["address"] == "" and rows[0]["stage"] == "0"
    assert {r["collapsed"] for r in rows} <= {"true", "false"}


def test_wrong_noise_for_command(config):
    path = config("t.json", ratios=["1/3", "1/3"], noise={"type": "tent", "epsilon": 0.1})
    assert run(["simulate", "--config", path])[0] == 1
    assert run(["analytic2", "--config", path])[0] == 1
