import json

import pytest

from flightpref.artifacts import load_bundle, save_bundle
from flightpref.cli import main
from flightpref.game import ingest_corpus
from flightpref.models import TrainConfig


@pytest.fixture(scope="module")
def artifacts_dir(small_bundle, tmp_path_factory):
    d = tmp_path_factory.mktemp("cli-artifacts")
    save_bundle(small_bundle, d)
    return d


def test_datagen_roundtrips(tmp_path):
    out = tmp_path / "corpus.jsonl"
    assert main(["--seed", "3", "datagen", "--games", "8", "--out", str(out)]) == 0
    corpus, errors = ingest_corpus(out)
    assert len(corpus) == 48 and not errors


def test_train_with_ini_config(tmp_path):
    corpus = tmp_path / "c.jsonl"
    main(["--seed", "4", "datagen", "--games", "12", "--out", str(corpus)])
    ini = tmp_path / "train.ini"
    ini.write_text(
        "[listener]\n"
        "lr = 0.8\n"
        "max_steps = 60\n"
        "patience = 60\n"
        "[speaker]\n"
        "lr = 0.5\n"
        "max_steps = 40\n"
        "patience = 40\n"
        "tau = 3.0\n"
    )
    out_dir = tmp_path / "models"
    code = main(["--seed", "4", "train", "--corpus", str(corpus),
                 "--config", str(ini), "--support-clauses", "1",
                 "--out-dir", str(out_dir)])
    assert code == 0
    bundle = load_bundle(out_dir)
    assert bundle.speaker.tau == 3.0
    assert bundle.support_max_clauses == 1


def test_train_config_ini_parsing(tmp_path):
    ini = tmp_path / "t.ini"
    ini.write_text("[listener]\nlr = 0.25\nmax_steps = 77\nval_fraction = 0.2\n")
    cfg = TrainConfig.from_ini(ini, "listener")
    assert cfg.lr == 0.25 and cfg.max_steps == 77 and cfg.val_fraction == 0.2
    assert TrainConfig.from_ini(ini, "speaker") == TrainConfig()
    ini.write_text("[listener]\nbogus = 1\n")
    with pytest.raises(ValueError):
        TrainConfig.from_ini(ini, "listener")


def test_evaluate_emits_reports(artifacts_dir, tmp_path):
    report = tmp_path / "report.json"
    table = tmp_path / "table.txt"
    curves = tmp_path / "curves.csv"
    code = main(["--seed", "5", "evaluate", "--artifacts", str(artifacts_dir),
                 "--games", "3", "--n-heldout", "150",
                 "--report", str(report), "--table", str(table),
                 "--curves", str(curves)])
    assert code == 0
    doc = json.loads(report.read_text())
    assert set(doc["models"]) == {"full", "action_only", "reward_only",
                                  "oracle_switch"}
    assert "Method" in table.read_text()
    lines = curves.read_text().splitlines()
    assert lines[0] == "round_index,model,accuracy,l2,stderr"
    assert len(lines) > 4


def test_simulate_writes_states_and_logs(artifacts_dir, tmp_path):
    out = tmp_path / "games.jsonl"
    log_dir = tmp_path / "logs"
    code = main(["--seed", "6", "simulate", "--artifacts", str(artifacts_dir),
                 "--games", "3", "--threshold", "0.7",
                 "--log-dir", str(log_dir), "--out", str(out)])
    assert code == 0
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert len(rows) == 3
    assert all(len(r["rounds"]) == 6 for r in rows)
    assert len(list(log_dir.glob("*.jsonl"))) == 3
