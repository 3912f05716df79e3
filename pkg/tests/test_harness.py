import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from episample.cli import main
from episample.config import ConfigError, config_from_dict, parse_config
from episample.experiment import run_experiment
from episample.plotting import PlotError, plot
from episample.training import CSV_VERSION, run_training
from episample.verify import SUITES, verify

MINIMAL = {"generator": {"kind": "sinusoid"}, "sampler": {"kind": "Uniform"}, "algo": "fomaml",
           "episodes": 6, "seed": 1}


def small(**kw):
    obj = {**MINIMAL, "eval_tasks": 5, "eval_every": 2, "seeds": 2, **kw}
    return config_from_dict(obj)


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj, indent=1))
    return p


# config -----------------------------------------------------------------------

def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, MINIMAL))
    assert (cfg.n_pool, cfg.lambda_inner, cfg.inner_steps, cfg.seeds, cfg.eval_tasks) == (4, 0.01, 5, 5, 200)
    assert cfg.run_seeds == [1, 2, 3, 4, 5]
    assert cfg.to_dict()["measure"]["sigma"] == 0.5


def test_episodes_must_be_positive(tmp_path):
    with pytest.raises(ConfigError, match="episodes"):
        parse_config(write(tmp_path, {**MINIMAL, "episodes": 0}))


def test_unknown_key_suggests(tmp_path):
    with pytest.raises(ConfigError, match="lambda_outer"):
        parse_config(write(tmp_path, {**MINIMAL, "learning_rate": 0.1}))
    with pytest.raises(ConfigError, match="'lambda_inner'"):
        parse_config(write(tmp_path, {**MINIMAL, "lambda_iner": 0.1}))


def test_parse_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "algo": "fomaml",\n "episodes": 3,,\n}')
    with pytest.raises(ConfigError, match=r"bad.json:3:"):
        parse_config(p)


def test_sampler_xor_asr():
    with pytest.raises(ConfigError, match="exactly one"):
        config_from_dict({**MINIMAL, "asr": {}})
    with pytest.raises(ConfigError, match="protonet"):
        config_from_dict({**MINIMAL, "algo": "protonet"})


def test_nested_unknown_key():
    with pytest.raises(ConfigError, match="in asr"):
        config_from_dict({k: v for k, v in MINIMAL.items() if k != "sampler"} | {"asr": {"hiden": 4}})


# training ----------------------------------------------------------------------

def test_run_training_records():
    log = run_training(small(episodes=10))
    assert len(log.records) == 10
    assert [r.eval_metric is not None for r in log.records] == [False, True] * 5
    assert log.final_metric == log.records[-1].eval_metric


def test_run_training_deterministic_csv():
    assert run_training(small()).to_csv() == run_training(small()).to_csv()


def test_csv_header_and_columns():
    text = run_training(small()).to_csv()
    lines = text.splitlines()
    assert lines[0] == CSV_VERSION
    assert "episode,mean_query_loss,eval_metric,w_min,w_max,t_dg_mean,t_et_mean,t_df_mean" in lines
    assert any(l.startswith("# config: ") and '"lambda_outer"' in l for l in lines)


@pytest.mark.parametrize("extra", [
    {"asr": {}},
    {"asr": {"mode": "resample"}},
])
def test_asr_run_simplex(extra):
    obj = {k: v for k, v in MINIMAL.items() if k != "sampler"}
    log = run_training(config_from_dict({**obj, **extra, "eval_tasks": 3}))
    for r in log.records:
        assert np.all(r.weights > 0) and abs(r.weights.sum() - 1) < 1e-9


def test_classification_protonet_run():
    cfg = config_from_dict({
        "generator": {"kind": "subspace_gauss", "dim": 16, "way": 3, "total_classes": 8, "n_support": 2, "n_query": 2},
        "sampler": {"kind": "dDPP"}, "algo": "protonet", "episodes": 4, "eval_tasks": 4, "lambda_outer": 0.05,
    })
    log = run_training(cfg)
    assert 0.0 <= log.final_metric <= 1.0


def test_training_loss_decreases_on_frozen_tasks():
    drops = []
    for seed in range(5):
        cfg = config_from_dict({**MINIMAL, "sampler": {"kind": "NDE"}, "episodes": 100, "eval_every": 100,
                                "eval_tasks": 2, "seed": seed})
        losses = [r.mean_query_loss for r in run_training(cfg).records]
        drops.append(np.mean(losses[:10]) - np.mean(losses[-10:]))
    assert np.median(drops) > 0


# experiment / plot ----------------------------------------------------------------

def test_run_experiment_outputs(tmp_path):
    cfg = small(seeds=3)
    out = run_experiment(cfg, tmp_path / "a")
    assert len(out["csvs"]) == 3 and out["summary"].exists() and out["svg"].exists()
    lines = out["summary"].read_text().splitlines()
    finals = [float(l.split(",")[2]) for l in lines[2:5]]
    mean = float(lines[5].split(",")[2])
    assert mean == pytest.approx(np.mean(finals), rel=1e-9)
    assert float(lines[6].split(",")[2]) == pytest.approx(np.std(finals, ddof=1), rel=1e-8)
    again = run_experiment(cfg, tmp_path / "b")
    assert out["summary"].read_bytes() == again["summary"].read_bytes()
    assert out["svg"].read_bytes() == again["svg"].read_bytes()


def test_parallel_matches_serial(tmp_path, monkeypatch):
    cfg = small(seeds=2)
    monkeypatch.setenv("EPISAMPLE_THREADS", "1")
    a = run_experiment(cfg, tmp_path / "s")["summary"].read_bytes()
    monkeypatch.setenv("EPISAMPLE_THREADS", "2")
    b = run_experiment(cfg, tmp_path / "p")["summary"].read_bytes()
    assert a == b


def test_plot_three_curves(tmp_path):
    paths = []
    for i, kind in enumerate(["Uniform", "SEU", "NDE"]):
        p = tmp_path / f"{kind}.csv"
        p.write_text(run_training(small(sampler={"kind": kind})).to_csv())
        paths.append(p)
    svg = plot(paths, tmp_path / "c.svg")
    root = ET.parse(svg).getroot()
    ids = {el.get("id") for el in root.iter()}
    assert {"curve0", "curve1", "curve2"} <= ids and "curve3" not in ids
    text = svg.read_text()
    assert all(k in text for k in ("Uniform", "SEU", "NDE"))


def test_plot_errors(tmp_path):
    with pytest.raises(PlotError):
        plot([], tmp_path / "x.svg")
    bad = tmp_path / "bad.csv"
    bad.write_text(CSV_VERSION + "\nepisode,loss\n0,1\n")
    with pytest.raises(PlotError, match="schema"):
        plot([bad], tmp_path / "x.svg")


# verify / cli ---------------------------------------------------------------------

def test_verify_registry_count():
    report = verify(quick=True)
    assert report.names() == list(SUITES) and len(report.results) == 10


def test_verify_named_suites():
    r = verify("theorem3_nonneg").results[0]
    assert r.passed and r.measured["min_t_df"] >= 0
    r = verify("sylvester").results[0]
    assert r.passed and r.measured < 1e-8


def test_cli_verify_exit_status(capsys, monkeypatch):
    from episample import verify as vmod

    assert main(["verify", "--suite", "sylvester"]) == 0
    monkeypatch.setitem(vmod.SUITES, "sylvester",
                        lambda quick=False: vmod.SuiteResult("sylvester", False, 1.0, "< 1e-8"))
    assert main(["verify", "--suite", "sylvester"]) == 1
    assert main(["verify", "--suite", "nope"]) == 2


def test_cli_gen_measure_sample(tmp_path, capsys):
    g = write(tmp_path, {"kind": "subspace_gauss", "dim": 16, "way": 3, "total_classes": 8,
                         "n_support": 2, "n_query": 2}, "g.json")
    assert main(["gen", "--gen", str(g), "--count", "2", "--out", str(tmp_path / "t")]) == 0
    capsys.readouterr()
    tasks = sorted(str(p) for p in (tmp_path / "t").glob("*.json"))
    assert main(["measure", *sum((["--task", t] for t in tasks), [])]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "task_id,t_dg,t_et,t_df,s_td" and len(out) == 3
    s = write(tmp_path, {"kind": "NDT"}, "s.json")
    assert main(["sample", "--sampler", str(s), "--gen", str(g), "--episodes", "3", "--n-pool", "2"]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert len(rows) == 6 and rows[0].split(",")[4] == rows[2].split(",")[4]


def test_cli_run_and_plot(tmp_path, capsys):
    cfg = write(tmp_path, {**MINIMAL, "seeds": 2, "eval_tasks": 3, "episodes": 4})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "summary.csv").exists() and (tmp_path / "r" / "meta.json").exists()
    csvs = sorted(str(p) for p in (tmp_path / "r").glob("run_seed*.csv"))
    assert main(["plot", "--out", str(tmp_path / "p.svg"), *csvs]) == 0
    ET.parse(tmp_path / "p.svg")


def test_cli_reports_config_errors(tmp_path, capsys):
    cfg = write(tmp_path, {**MINIMAL, "learning_rate": 1})
    assert main(["run", "--config", str(cfg)]) == 2
    assert "lambda_outer" in capsys.readouterr().err
