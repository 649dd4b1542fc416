import csv
import json
import os

import pytest

from maxfollow.harness import cli
from maxfollow.harness.config import ConfigError, ScenarioConfig, from_dict, loads
from maxfollow.harness.report import ReturnRow, RunReport, atomic_write, plot_scale, render_svg
from maxfollow.harness.runner import run_scenario

CHAIN = '''
name = "chain3-test"
example = "chain3"
horizon = 10
seeds = [0, 1]

[oracle]
flavor = "exact"
'''

INLINE = '''
name = "inline"
horizon = 3
seeds = [0]

[mdp]
transition = [[[0.0, 1.0], [1.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]]]
reward = [[0.0, 1.0], [1.0, 0.0]]
start_dist = [1.0, 0.0]
policies = [[0, 0], [1, 1]]
'''


def test_load_example_config():
    cfg = loads(CHAIN)
    assert cfg.example == "chain3" and cfg.oracle.flavor == "exact"
    mdp, pis = cfg.build()
    assert mdp.horizon == 10 and len(pis) == 2


def test_inline_mdp_config():
    mdp, pis = loads(INLINE).build()
    assert mdp.num_states == 2 and pis.names == ["pi_0", "pi_1"]


@pytest.mark.parametrize("text,msg", [
    ('example = "chain3"\nseeds = []', "seeds"),
    ('example = "chain3"\nbogus = 1', "unknown config keys"),
    ('example = "nowhere"', "unknown example"),
    ('seeds = [0]', "either"),
    ('example = "chain3"\n[oracle]\nflavor = "psychic"', "flavor"),
    ('example = "chain3"\n[oracle]\nfoo = 1', "unknown \\[oracle\\] keys"),
    ('example = "chain3"\nepsilon = 2.0', "epsilon"),
    ('example = "chain3', "malformed"),
    ('horizon = 2\n[mdp]\nreward = [[0.0]]', "lacks"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        loads(text)


def test_config_round_trip():
    cfg = loads(CHAIN)
    back = loads(cfg.dumps())
    assert back == cfg
    assert from_dict(cfg.to_dict()) == cfg


def test_scenario_writes_all_outputs(tmp_path):
    report = run_scenario(loads(CHAIN), out_dir=tmp_path)
    assert sorted(os.listdir(tmp_path)) == ["plot.svg", "report.json", "returns.csv"]
    with open(tmp_path / "returns.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["scenario", "algorithm", "seed_count", "mean_return", "ci_half_width", "exact"]
    got = {r["algorithm"]: float(r["mean_return"]) for r in rows}
    assert got == {"pi_right": 2.0, "pi_left": 0.0, "max_iteration": 10.0, "class_worst": 10.0,
                   "class_best": 10.0, "optimal": 10.0}
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["checks"]["sandwich_beta0"] and data["checks"]["oracle_queries_per_run"] == [20]
    assert report.row("max_iteration").seed_count == 2


def test_svg_is_deterministic_and_scaled():
    rows = [ReturnRow("a", 2.0, 0.5, 3, False), ReturnRow("b", 1.0)]
    rep = RunReport("demo", rows)
    svg = render_svg(rep)
    assert svg == render_svg(RunReport("demo", list(rows)))
    assert svg.count('class="bar"') == 2 and svg.count('class="whisker"') == 1
    assert f'data-ymax="{plot_scale(rows):.4f}"' in svg
    assert plot_scale(rows) == pytest.approx(2.75)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write(tmp_path / "x.txt", "hello")
    atomic_write(tmp_path / "x.txt", "again")
    assert os.listdir(tmp_path) == ["x.txt"]
    assert (tmp_path / "x.txt").read_text() == "again"


def test_cli_run_and_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(CHAIN)
    assert cli.main(["--out", str(tmp_path / "out"), "run", str(cfg)]) == 0
    assert "max_iteration" in capsys.readouterr().out
    bad = tmp_path / "bad.toml"
    bad.write_text('example = "chain3"\nseeds = []\n')
    assert cli.main(["run", str(bad)]) == 2


def test_cli_enumerate_and_lemma(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('example = "detour"\nhorizon = 3\nstart = 0\nbeta = 0.0\nrandom_instances = 5\n')
    out = str(tmp_path / "out")
    assert cli.main(["--out", out, "enumerate", str(cfg)]) == 0
    assert os.path.exists(os.path.join(out, "enumeration.csv"))
    assert cli.main(["--out", out, "--c-beta", "0.5", "lemma", str(cfg)]) == 0
    lemma = json.loads(open(os.path.join(out, "lemma.json")).read())
    assert len(lemma["records"]) == 6


def test_cli_theorem(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('example = "trap"\nseeds = [0, 1, 2]\nepsilons = [0.5]\nrandom_instances = 2\n'
                   '[oracle]\nflavor = "noisy"\n')
    assert cli.main(["--out", str(tmp_path), "theorem", str(cfg)]) == 0
    data = json.loads((tmp_path / "theorem.json").read_text())
    assert all(r["max_bad_fraction"] == 0.0 for r in data["records"])


def test_theorem_needs_noisy_oracle(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(CHAIN)
    assert cli.main(["theorem", str(cfg)]) == 2


def test_adversarial_membership_is_diagnostic(tmp_path):
    text = ('example = "trap"\nepsilon = 1.0\n[oracle]\nflavor = "adversarial"\neps = 0.25\n'
            'flips = [[0, 0, 0, 0.25], [1, 0, 0, -0.25]]\n')
    rep = run_scenario(loads(text), out_dir=tmp_path)
    assert rep.row("max_iteration").mean_return == 0.0
    assert rep.diagnostics["max_iteration_member_beta"] is False
    assert "max_iteration_member_beta" not in rep.checks


def test_default_config_is_valid():
    cfg = ScenarioConfig(example="trap")
    cfg.validate()
