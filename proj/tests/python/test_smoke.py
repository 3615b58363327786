import os
import subprocess

import numpy as np
import pytest

import cefmr

TINY = """
synthetic.users = 40
synthetic.contents = 30
partition.n_sbs = 2
partition.ues_per_sbs = 2
partition.users_per_ue = 6
aae.hidden = 16
aae.latent = 4
aae.discriminator_hidden = 8
fl.rounds = 2
fl.local_iterations = 3
fl.minibatch = 4
prediction.neighbors = 3
env.capacity = 2
workload.requests_per_ue = 3
maddpg.episodes = 2
maddpg.slots = 8
maddpg.minibatch = 4
maddpg.hidden = 8
test.episodes = 2
run.seeds = 1
"""


def tiny(tmp_path, name="run"):
    return cefmr.Config.parse(TINY + f"run.output_dir = {tmp_path / name}\n")


def test_defaults_and_keys():
    c = cefmr.Config()
    assert c.get("env.beta") == "30"
    assert c.get("maddpg.minibatch") == "256"
    keys = [k for k, _, _ in cefmr.describe_keys()]
    assert "env.capacity" in keys and len(keys) == len(set(keys))


def test_config_errors():
    with pytest.raises(cefmr.ConfigError, match="cfg|line|1"):
        cefmr.Config.parse("no.such.key = 1\n")
    with pytest.raises(cefmr.Error):
        cefmr.Config.parse("env.capacity = 6\nprediction.popular_count = 6\n")


def test_cost_identity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b, c, e = (int(x) for x in rng.integers(0, 50, size=4))
        assert 100 * (a + b + c) - cefmr.slot_cost(a, b, c, e) == cefmr.saved_cost_reward(a, b, c, e)


def test_optimal_placement_spreads_contents():
    caches, reward = cefmr.optimal_placement([[1, 2], [1, 2]], [{1: 0.5, 2: 0.5}] * 2, 1, 10.0)
    assert sorted(c[0] for c in caches) == [1, 2]
    assert reward > 0


def test_aae_roundtrip_and_training():
    rng = np.random.default_rng(1)
    rows = np.outer(rng.random(30), rng.random(12))
    m = cefmr.AaeModel.create(12, hidden=16, latent=4, discriminator_hidden=8, seed=3)
    out = m.reconstruct(rows)
    assert out.shape == rows.shape and (out >= 0).all() and (out <= 1).all()
    before = m.mean_squared_error(rows)
    m.train(rows, iterations=200, seed=2)
    assert m.mean_squared_error(rows) < before
    back = cefmr.AaeModel.from_bytes(m.to_bytes())
    np.testing.assert_array_equal(back.reconstruct(rows), m.reconstruct(rows))


def test_git_blob_sha1():
    assert cefmr.git_blob_sha1(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_run_and_rerun_are_identical(tmp_path):
    records = cefmr.run_experiment(tiny(tmp_path))
    assert len(records) == 2
    assert all(0.0 <= r["mean_ch"] <= 1.0 for r in records)
    again = cefmr.rerun_manifest(tmp_path / "run" / "manifest.json", tmp_path / "again")
    assert again == records
    a = (tmp_path / "run" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "again" / "metrics.csv").read_bytes()
    assert cefmr.read_metrics_csv(tmp_path / "run" / "metrics.csv") == records


@pytest.mark.skipif("CEFMR_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_pipeline(tmp_path):
    cli = os.environ["CEFMR_CLI"]
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY + f"run.output_dir = {tmp_path / 'cli'}\n")
    for args in (["ingest"], ["train-fl"], ["predict"], ["train-maddpg"], ["evaluate", "--tag", "final"],
                 ["baseline", "--scheme", "bsg"]):
        subprocess.run([cli, *args, "-c", str(cfg)], check=True, capture_output=True)
    seed_dir = tmp_path / "cli" / "seed_1"
    assert (seed_dir / "popular.json").exists()
    assert (seed_dir / "metrics.csv").exists()
    sweep = subprocess.run([cli, "sweep", "-c", str(cfg), "--axis", "C", "--values", "1,2",
                            "--schemes", "random,efnrl"], check=True, capture_output=True)
    assert (tmp_path / "cli" / "sweep.csv").exists(), sweep.stdout
    subprocess.run([cli, "plot", "--metrics", str(seed_dir / "metrics.csv"), "--sweep",
                    str(tmp_path / "cli" / "sweep.csv"), "-o", str(tmp_path / "plots")], check=True)
    assert (tmp_path / "plots" / "ch_vs_cache_capacity.svg").exists()
