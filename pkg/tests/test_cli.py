import json
import math

import pytest

from heavylocal.cli import build_dist, main, spec_to_dict


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_spec_strings():
    d = spec_to_dict("ex21:m=1,alpha=1.5,x1=100|power:m=2|integrated_tail")
    assert d["kind"] == "ex21" and d["m"] == 1 and d["alpha"] == 1.5
    assert [t["op"] for t in d["transforms"]] == ["power", "integrated_tail"]
    F = build_dist(d)
    assert F.tail(150.0) < F.tail(0.0) == 1.0


def test_dist_eval(capsys):
    rc, out, _ = run(capsys, "dist", "eval", "--dist", "ex21:m=1,alpha=1.5,x1=100", "--at", "100", "150",
                     "--T", "1", "--mean")
    assert rc in (0, None)
    doc = json.loads(out)
    assert doc["schema"] == "heavylocal.cli/1"
    assert doc["rows"][1]["tail"] == pytest.approx(5.5e-4, rel=1e-12)
    assert doc["mean"] == pytest.approx(50.18349344003504, rel=1e-12)


def test_dist_eval_flags_equal_spec(capsys):
    _, a, _ = run(capsys, "dist", "eval", "--kind", "ex21", "--m", "1", "--alpha", "1.5", "--x1", "100", "--at", "300")
    _, b, _ = run(capsys, "dist", "eval", "--dist", "ex21:m=1,alpha=1.5,x1=100", "--at", "300")
    assert json.loads(a)["rows"] == json.loads(b)["rows"]


def test_invalid_parameters_exit_2(capsys):
    rc, _, err = run(capsys, "dist", "eval", "--kind", "ex21", "--m", "1", "--alpha", "3", "--x1", "100", "--at", "1")
    assert rc == 2 and "heavylocal: error" in err
    rc, _, _ = run(capsys, "mg1", "--eta", "0.5", "--service", "ex21:m=1,alpha=1.5,x1=100", "--at", "100")
    assert rc == 2


def test_sample_deterministic(capsys, tmp_path):
    args = ["dist", "sample", "--dist", "ex21:m=1,alpha=1.5,x1=100", "--n", "40000", "--seed", "3"]
    _, a, _ = run(capsys, *args, "--workers", "1")
    _, b, _ = run(capsys, *args, "--workers", "2")
    assert a == b
    assert a.startswith("# schema: heavylocal.cli/1")
    out = tmp_path / "s.csv"
    run(capsys, *args, "--out", str(out))
    assert out.read_text() == a


def test_config_defaults(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dist": "exp:rate=2", "at": [1.0]}))
    rc, out, _ = run(capsys, "dist", "eval", "--config", str(cfg))
    assert json.loads(out)["rows"][0]["tail"] == pytest.approx(math.exp(-2.0))
    cfg.write_text(json.dumps({"bogus": 1}))
    rc, _, _ = run(capsys, "dist", "eval", "--config", str(cfg), "--at", "1")
    assert rc == 2


def test_walk_supremum_cg_and_mc(capsys):
    rc, out, _ = run(capsys, "walk", "supremum", "--dist", "exp:rate=1", "--c", "2", "--down", "exp:rate=1",
                     "--at", "0", "2", "--T", "1", "--paths", "20000", "--seed", "1")
    doc = json.loads(out)
    for cg, mc in zip(doc["cg"], doc["mc"]["estimates"]):
        exact = 0.5 * (math.exp(-0.5 * cg["x"]) - math.exp(-0.5 * (cg["x"] + 1)))
        assert cg["value"] == pytest.approx(exact, rel=1e-6)
        assert abs(mc["estimate"] - exact) < 5 * mc["stderr"]


def test_walk_ladder_lattice(capsys):
    rc, out, _ = run(capsys, "walk", "ladder", "--dist", "exp:rate=1", "--c", "2", "--method", "lattice",
                     "--x-max", "30")
    lad = json.loads(out)["ladder"]
    lo, hi = lad["p_bracket"]
    assert lo <= lad["p_extrapolated"] <= hi


def test_kesten_command(capsys):
    rc, out, _ = run(capsys, "walk", "kesten", "--dist", "exp:rate=1", "--n-fold", "4", "--probes", "1", "2", "5")
    doc = json.loads(out)
    assert doc["check"] == "kesten" and doc["holds"]


def test_risk_and_mg1_csv(capsys):
    rc, out, _ = run(capsys, "risk", "--claims", "exp:rate=1", "--c", "3", "--at", "0", "1")
    lines = out.strip().splitlines()
    assert lines[0] == "# schema: heavylocal.apps/1" and len(lines) == 4
    rc, out, _ = run(capsys, "mg1", "--eta", "1", "--service", "exp:rate=2", "--at", "0", "--format", "csv")
    assert out.splitlines()[2].startswith("mg1,0.0,1.0,")


def test_mg1_json_bounds(capsys):
    rc, out, _ = run(capsys, "mg1", "--eta", "0.009", "--service", "ex21:m=1,alpha=1.5,x1=100", "--at", "150",
                     "--T", "1")
    doc = json.loads(out)
    assert doc["rows"][0]["lower"] > 0
    assert json.dumps(doc, sort_keys=True)


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert "heavylocal" in capsys.readouterr().out
