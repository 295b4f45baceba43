# SPDX-License-Identifier: Apache-2.0
"""Smoke tests for the python bindings: surface, algebra, end-to-end run."""

import json

import pytest

import fairgen


def test_version_and_surface():
    assert fairgen.__version__
    for name in ("corpus", "pretrain", "finetune", "evaluate", "sweep"):
        assert callable(getattr(fairgen, name))


def test_metric_primitives():
    assert fairgen.bleu([["a", "b"]], [["a", "b"]], n=1) == 1.0
    assert fairgen.bleu([["a", "a"]], [["a", "b"]], n=1) == 0.5
    assert fairgen.rouge(list("abcd"), list("acd"), variant="L") == pytest.approx(6 / 7)
    assert fairgen.rouge(list("abcd"), list("acd"), variant="2") == pytest.approx(0.4)
    assert fairgen.rmse([1.0, 3.0], [2.0, 4.0]) == 1.0


def test_reward_algebra_worked_example():
    out = fairgen.reinforce_rewards([10.0, 6.0], [2.0, 4.0], eta=0.6)
    assert out["delta"] == 5.0
    assert out["sgn"] == 1
    assert out["w"] == pytest.approx(0.4)
    assert out["r_fact"] == [-5.0, -3.0]
    assert out["r_cf"] == [1.0, 2.0]
    assert out["rw_fact"] == pytest.approx([-2.0, -1.2])
    assert out["rw_cf"] == pytest.approx([0.6, 1.2])
    assert out["adv_fact"] == pytest.approx([-0.4, 0.4])
    assert out["adv_cf"] == pytest.approx([-0.3, 0.3])

    assert fairgen.sign_of(0.0) == 0
    assert fairgen.promotion_weight(-1, 0.6) == pytest.approx(0.6)


def test_error_taxonomy(tmp_path):
    with pytest.raises(fairgen.Error):
        fairgen.promotion_weight(0, 1.5)
    with pytest.raises(fairgen.Error):
        fairgen.rouge(["a"], ["a"], variant="9")
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 1\n")
    with pytest.raises(fairgen.ConfigError):
        fairgen.corpus(str(bad))
    assert issubclass(fairgen.ConfigError, ValueError)
    assert issubclass(fairgen.ArtifactError, FileNotFoundError)
    assert issubclass(fairgen.NumericError, ArithmeticError)


@pytest.fixture
def workspace(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "\n".join(
            [
                f"data_dir = {tmp_path / 'data'}",
                f"out_dir = {tmp_path / 'out'}",
                "arch = recurrent",
                "baseline = attr",
                "groups = m:0.5:8:1.5,f:0.5:5:1",
                "n_users = 8",
                "n_items = 6",
                "n_records = 48",
                "vocab_size = 200",
                "max_len = 16",
                "rnn_emb_dim = 8",
                "rnn_hidden_dim = 8",
                "attr_emb_dim = 4",
                "rating_hidden_dim = 4",
                "max_epochs = 1",
                "patience = 1",
                "batch_size = 8",
                "ft_epochs = 1",
                "n_samples = 1",
                "top_k = 3",
                "seed = 7",
            ]
        )
        + "\n"
    )
    return tmp_path, str(cfg)


def test_pipeline_end_to_end(workspace):
    root, cfg = workspace

    log = fairgen.corpus(cfg)
    assert "records" in log
    assert (root / "data" / "dataset.jsonl").exists()

    fairgen.pretrain(cfg)
    assert (root / "out" / "pretrain.ckpt").exists()

    fairgen.evaluate(cfg)
    report = json.loads((root / "out" / "report.json").read_text())
    assert report[0]["model"] == "attr"
    assert report[0]["bertscore"] == "not computed"
    row = report[0]["measures"][0]
    assert row["measure"] == "length"
    assert isinstance(row["ind_cf"], float)

    # overrides: a fresh seed into a fresh workspace
    fairgen.pretrain(cfg, seed=99, out=str(root / "alt"))
    assert (root / "alt" / "pretrain.ckpt").exists()


def test_missing_artifacts_raise(workspace):
    root, cfg = workspace
    with pytest.raises(fairgen.ArtifactError):
        fairgen.evaluate(cfg)
    with pytest.raises(fairgen.ArtifactError):
        fairgen.corpus(str(root / "absent.cfg"))
