import io

import numpy as np
import pytest

from gaclab.gac import METRIC_COLUMNS, ConfigError, GacConfig, Trainer
from gaclab.harness import checkpoint as ck
from gaclab.harness.cli import format_value, main, run_eval, run_gradcheck, run_train
from gaclab.harness.config import OUTPUT_ROOT_ENV, RunConfig, parse_config, to_text
from gaclab.harness.plotting import MissingColumnError, PlotError, action_scatter, plot_dirs, read_metrics
from gaclab.seeding import STREAMS, seed_streams, stream

SMOKE = """\
env = bimodal_bandit
iterations = 4
updates_per_iter = 3
steps_per_iter = 10
batch_size = 8
action_samples = 4
hidden = 8,8
eval_episodes = 2
seeds = {seeds}
output_dir = {out}
checkpoint_every = {every}
"""


def write_cfg(tmp_path, seeds="0", every=0, name="run.cfg", out="out"):
    p = tmp_path / name
    p.write_text(SMOKE.format(seeds=seeds, out=tmp_path / out, every=every))
    return p


# -- config -------------------------------------------------------------------------

def test_config_round_trip():
    cfg = parse_config("env = pendulum\nalpha = 0.3  # comment\nbeta_init = auto\nseeds = 1,2\nhidden = 32,16\n")
    assert cfg.gac.env == "pendulum" and cfg.gac.hidden == (32, 16) and cfg.seeds == (1, 2)
    again = parse_config(to_text(cfg))
    assert again == cfg


@pytest.mark.parametrize("text", ["bogus = 1", "alpha = x", "alpha = 1\nalpha = 2", "seeds = 1,1",
                                  "gamma = 1.5", "justtext", "reward_scale = 0"])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_output_root_override(monkeypatch):
    cfg = RunConfig(output_dir="here")
    monkeypatch.setenv(OUTPUT_ROOT_ENV, "/elsewhere")
    assert str(cfg.resolved_output_dir()) == "/elsewhere"


# -- seeding ---------------------------------------------------------------------------

def test_streams_reproducible_and_distinct():
    a, b = seed_streams(3), seed_streams(3)
    firsts = {name: a[name].random() for name in STREAMS}
    assert firsts == {name: b[name].random() for name in STREAMS}
    assert len(set(firsts.values())) == len(STREAMS)


def test_adding_a_stream_leaves_others_unchanged():
    base = seed_streams(5, STREAMS[:6])
    more = seed_streams(5, STREAMS[:6] + ("extra",))
    assert all(base[n].random() == more[n].random() for n in STREAMS[:6])
    assert stream(5, "env").random() == seed_streams(5)["env"].random()


# -- checkpoint ------------------------------------------------------------------------

def _trained(iters=2, **kw):
    cfg = GacConfig(batch_size=8, action_samples=4, hidden=(8,), iterations=4, updates_per_iter=3,
                    steps_per_iter=10, eval_episodes=2, **kw)
    tr = Trainer(cfg, 0)
    tr.train(iters)
    return tr


@pytest.mark.parametrize("algo", ["gac_adaptive", "ddpg_baseline"])
def test_checkpoint_bytes_round_trip(tmp_path, algo):
    tr = _trained(algorithm=algo)
    a = ck.save_checkpoint(tr, tmp_path / "a.ckpt")
    b = ck.save_checkpoint(ck.load_checkpoint(a), tmp_path / "b.ckpt")
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_fixed_zero_alpha_round_trip(tmp_path):
    tr = _trained(algorithm="gac_fixed", alpha=0.0, env="multigoal")
    a = ck.save_checkpoint(tr, tmp_path / "a.ckpt")
    assert ck.load_checkpoint(a).agent.alpha == 0.0


def test_split_resume_is_bit_identical(tmp_path):
    straight = _trained(4)
    tr = _trained(2)
    ck.save_checkpoint(tr, tmp_path / "half.ckpt")
    resumed = ck.load_checkpoint(tmp_path / "half.ckpt")
    last_resumed = resumed.train()[-1]
    ref = Trainer(straight.config, 0).train()[-1]
    assert [format_value(last_resumed[c]) for c in METRIC_COLUMNS] == [format_value(ref[c]) for c in METRIC_COLUMNS]


def test_checkpoint_version_mismatch(tmp_path):
    p = ck.save_checkpoint(_trained(1), tmp_path / "a.ckpt")
    data = p.read_bytes().replace(b"GACLAB-CHECKPOINT 1\n", b"GACLAB-CHECKPOINT 9\n", 1)
    p.write_bytes(data)
    with pytest.raises(ck.CheckpointError, match="version 9"):
        ck.load_checkpoint(p)
    p.write_bytes(b"garbage")
    with pytest.raises(ck.CheckpointError):
        ck.load_checkpoint(p)


# -- train / eval through the CLI ------------------------------------------------------------

def test_train_smoke_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path, every=2)
    assert main(["train", str(cfg)]) == 0
    run = tmp_path / "out" / "seed_0"
    first = (run / "metrics.csv").read_bytes()
    lines = first.decode().splitlines()
    assert lines[0] == ",".join(METRIC_COLUMNS) and len(lines) == 5
    assert {"config.txt", "final.ckpt", "checkpoint_000002.ckpt", "checkpoint_000004.ckpt"} <= \
        {p.name for p in run.iterdir()}
    assert main(["train", str(cfg)]) == 0
    assert (run / "metrics.csv").read_bytes() == first
    assert main(["train", "--resume", str(run / "checkpoint_000002.ckpt")]) == 0
    assert (run / "metrics.csv").read_bytes() == first


def test_one_directory_per_seed(tmp_path):
    dirs = run_train(write_cfg(tmp_path, seeds="0,1,2,3,4"))
    assert sorted(d.name for d in dirs) == [f"seed_{i}" for i in range(5)]


def test_invalid_config_leaves_nothing(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    cfg.write_text(cfg.read_text() + "gamma = 2\n")
    assert main(["train", str(cfg)]) == 2
    assert not (tmp_path / "out").exists()
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: gamma") and "\n" not in err


def test_missing_config_is_one_line_error(tmp_path, capsys):
    assert main(["train", str(tmp_path / "nope.cfg")]) != 0
    assert capsys.readouterr().err.count("\n") == 1


def test_env_var_redirects_output(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "redirected"))
    run_train(write_cfg(tmp_path))
    assert (tmp_path / "redirected" / "seed_0" / "metrics.csv").is_file()
    assert not (tmp_path / "out").exists()


@pytest.fixture(scope="module")
def final_ckpt(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ev")
    run_train(write_cfg(tmp))
    return tmp / "out" / "seed_0" / "final.ckpt"


def test_eval_report_rows_per_sigma(final_ckpt):
    out = io.StringIO()
    rows = run_eval(final_ckpt, sigmas=[0.5, 1.0], out=out)
    assert [r["sigma"] for r in rows] == [0.5, 1.0] and all(r["episodes"] == 10 for r in rows)
    report = final_ckpt.with_name("final_eval.csv").read_text().splitlines()
    assert report[0] == "sigma,episodes,return_mean,return_std,terminals" and len(report) == 3


def test_eval_zero_sigma_is_deterministic(final_ckpt):
    rows = run_eval(final_ckpt, sigmas=[0.0], out=io.StringIO())
    assert rows[0]["return_std"] == 0.0


def test_eval_refuses_bad_version(tmp_path, final_ckpt, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(final_ckpt.read_bytes().replace(b"CHECKPOINT 1\n", b"CHECKPOINT 2\n", 1))
    assert main(["eval", str(bad)]) == 2
    assert "version" in capsys.readouterr().err


def test_action_dump_scatter_has_one_point_per_sample(tmp_path, final_ckpt):
    run_eval(final_ckpt, sigmas=[0.5], dump_actions=1000, report=tmp_path / "r.csv", out=io.StringIO())
    dump = tmp_path / "actions_sigma0.5.csv"
    acts = np.loadtxt(dump, delimiter=",", skiprows=1)
    svg = action_scatter(acts, tmp_path / "s.svg").read_text()
    assert svg.count("<circle") == 1000


# -- plotting ----------------------------------------------------------------------------

def _metrics(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(METRIC_COLUMNS)] + [",".join(map(str, r)) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _row(step, ret):
    return [step, step * 10, ret, 0.0, 0.1, 0.2, 0.3, 1.0, 0.5]


def test_plot_single_run_has_no_band(tmp_path):
    _metrics(tmp_path / "r" / "metrics.csv", [_row(1, 0.1), _row(2, 0.4)])
    files = plot_dirs([tmp_path / "r"])
    svg = (tmp_path / "r" / "returns.svg").read_text()
    assert svg.count('class="curve"') == 1 and 'class="band"' not in svg
    assert {f.name for f in files} == {"returns.svg", "diagnostics.svg"}


def test_plot_seeds_get_band(tmp_path):
    for s, off in ((0, 0.0), (1, 0.5)):
        _metrics(tmp_path / "r" / f"seed_{s}" / "metrics.csv", [_row(1, 0.1 + off), _row(2, "nan"), _row(3, 0.4)])
    plot_dirs([tmp_path / "r"])
    assert 'class="band"' in (tmp_path / "r" / "returns.svg").read_text()


def test_plot_empty_metrics_writes_nothing(tmp_path):
    _metrics(tmp_path / "r" / "metrics.csv", [])
    with pytest.raises(PlotError):
        plot_dirs([tmp_path / "r"])
    assert not list((tmp_path / "r").glob("*.svg"))


def test_plot_missing_column_is_named(tmp_path):
    p = tmp_path / "metrics.csv"
    p.write_text("step,env_steps,eval_return_mean\n1,2,3\n")
    with pytest.raises(MissingColumnError) as e:
        read_metrics(p)
    assert e.value.column == "eval_return_std"


def test_plot_cli_error_exit(tmp_path, capsys):
    assert main(["plot", str(tmp_path)]) == 2
    assert capsys.readouterr().err.startswith("error:")


# -- gradcheck -----------------------------------------------------------------------------

def test_gradcheck_report_is_deterministic():
    a, b = io.StringIO(), io.StringIO()
    assert run_gradcheck(range(2), out=a) and run_gradcheck(range(2), out=b)
    assert a.getvalue() == b.getvalue()
    assert "critic_loss" in a.getvalue() and "alpha_objective" in a.getvalue()


def test_gradcheck_corrupted_gradient_fails(capsys):
    assert main(["gradcheck", "--seeds", "1", "--corrupt", "actor_loss/energy_squared"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_format_value_round_trips():
    for v in (0.1, 1 / 3, -2.5e-300, float("nan"), 7):
        s = format_value(v)
        assert s == format_value(float(s) if "." in s or "e" in s or "n" in s else int(s))
