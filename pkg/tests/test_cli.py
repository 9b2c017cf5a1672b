import json

import pytest

from rank1lab import cli


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


RICCATI = """[experiment]
kind = riccati-properties
model = synthetic-driver
seed = 3
output = out

[parameters]
trials = {trials}
"""


def test_models_listed(capsys):
    assert cli.main(["models", "--json"]) == 0
    cat = json.loads(capsys.readouterr().out)
    assert len(cat) == 4
    assert {d["kind"] for d in cat} == {"constant-octagon", "perturbed-octagon", "flat-cylinder-funnels",
                                        "synthetic-driver"}
    assert all("sing" in d and "params" in d for d in cat)


def test_negative_eps_names_field(tmp_path, capsys):
    p = _write(tmp_path, "c.ini", "[experiment]\nkind = entropy\nmodel = constant-octagon\n\n"
                                  "[parameters]\neps = -0.1\n")
    assert cli.main(["validate", str(p)]) == 2
    out = capsys.readouterr().out.splitlines()
    assert out and all(line.startswith("parameters.eps") for line in out)


def test_missing_model_reference(tmp_path):
    p = _write(tmp_path, "c.ini", "[experiment]\nkind = entropy\nmodel = models/none.json\n")
    problems, _ = cli.validate(cli.read_config(p), base=tmp_path)
    assert len(problems) == 1 and "unresolved" in problems[0]


def test_validate_reports_every_problem(tmp_path):
    p = _write(tmp_path, "c.ini", "[experiment]\nkind = entropy\nmodel = constant-octagon\nseed = -1\n\n"
                                  "[parameters]\neps = 0.2\nseeds = 0\nbogus = 1\n")
    problems, _ = cli.validate(cli.read_config(p))
    fields = sorted(q.split(":")[0] for q in problems)
    assert fields == ["experiment.seed", "parameters.bogus", "parameters.seeds"]


def test_shipped_configs_validate():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.ini"))
    assert len(files) == 9
    for f in files:
        problems, _ = cli.validate(cli.read_config(f), base=f.parent)
        assert problems == [], f.name


def test_config_hash_ignores_output(tmp_path):
    a = _write(tmp_path, "a.ini", RICCATI.format(trials=10))
    b = _write(tmp_path, "b.ini", RICCATI.format(trials=10).replace("output = out", "output = elsewhere"))
    c = _write(tmp_path, "c.ini", RICCATI.format(trials=11))
    ha, hb, hc = (cli.config_hash(cli.read_config(p)) for p in (a, b, c))
    assert ha == hb != hc


def test_exit_codes(tmp_path, monkeypatch):
    bad = _write(tmp_path, "bad.ini", "[experiment]\nkind = nope\nmodel = constant-octagon\n")
    assert cli.main(["run", str(bad)]) == 2
    model = _write(tmp_path, "model.ini", RICCATI.format(trials=10).replace("synthetic-driver", "constant-octagon")
                   + "\n[model]\namplitude = 0.2\n")
    assert cli.main(["run", str(model)]) == 3

    def boom(run, model, p, seed):
        run.add("partial", 1.0, 0.0)
        raise RuntimeError("boom")

    monkeypatch.setitem(cli.RUNNERS, "riccati-properties", boom)
    p = _write(tmp_path, "ok.ini", RICCATI.format(trials=10))
    assert cli.main(["run", str(p), "--workers", "1"]) == 4
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["status"] == "failed" and "boom" in rep["error"]
    assert rep["results"]["estimates"][0]["name"] == "partial"
    assert (tmp_path / "out" / "manifest.json").exists()


def test_check_report(tmp_path):
    p = _write(tmp_path, "r.ini", RICCATI.format(trials=20))
    code, rep = cli.run_config(p, workers=1)
    assert code == 0 and cli.check_report(rep) == []
    assert rep["execution"]["workers"] == 1
    broken = dict(rep)
    del broken["config_hash"]
    broken["results"] = {"estimates": [{"name": "x", "value": 1.0}]}
    problems = cli.check_report(broken)
    assert any("config_hash" in q for q in problems) and any("uncertainty" in q for q in problems)


def test_deterministic_reports(tmp_path):
    p = _write(tmp_path, "r.ini", RICCATI.format(trials=200))
    cli.run_config(p, out=tmp_path / "one", workers=1)
    cli.run_config(p, out=tmp_path / "two", workers=1)
    for name in ("report.json", "riccati_properties.csv", "riccati_properties.png"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    m1 = json.loads((tmp_path / "one" / "manifest.json").read_text())
    assert m1["config_hash"] == cli.config_hash(cli.read_config(p))


def test_riccati_experiment(tmp_path):
    p = _write(tmp_path, "r.ini", RICCATI.format(trials=10000))
    code, rep = cli.run_config(p, workers=1)
    assert code == 0 and rep["results"]["all_passed"]
    est = {e["name"]: e for e in rep["results"]["estimates"]}
    assert est["domain"]["value"] == 0 and est["domain"]["trials"] == 10000


def test_entropy_experiment(tmp_path):
    p = _write(tmp_path, "e.ini", "[experiment]\nkind = entropy\nmodel = constant-octagon\nseed = 0\n"
                                  "output = out\n\n[parameters]\neps = 0.2\nseeds = 25000\nrestarts = 1\n")
    code, rep = cli.run_config(p, workers=1)
    assert code == 0
    est = rep["results"]["estimates"][0]
    assert est["name"] == "entropy" and 0.8 <= est["value"] <= 1.2
    assert (tmp_path / "out" / "entropy.csv").exists()


def test_worker_count_does_not_change_results(tmp_path):
    text = ("[experiment]\nkind = entropy\nmodel = constant-octagon\nseed = 0\noutput = out\n\n"
            "[parameters]\neps = 0.2\nseeds = 2000\nrestarts = 1\nt_grid = 1, 2, 3, 4\n")
    p = _write(tmp_path, "e.ini", text)
    _, r1 = cli.run_config(p, out=tmp_path / "w1", workers=1)
    _, r2 = cli.run_config(p, out=tmp_path / "w2", workers=2)
    assert r1["results"] == r2["results"]
