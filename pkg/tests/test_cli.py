import numpy as np
import pytest

from semap.backbone import load_prompt
from semap.cli import main
from semap.embedding_io import load_mapping


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy") / "bench"
    rc = main([
        "gen-toy", "--seed", "0", "--m", "3", "--n", "12", "--d", "12",
        "--per-class", "8", "--out-dir", str(out),
    ])
    assert rc == 0
    return out


def run(args):
    return main([str(a) for a in args])


def test_gen_toy_writes_complete_directory(toy_dir):
    expected = {
        "pre_labels.txt", "down_labels.txt", "pre_embeddings.bin",
        "down_embeddings.bin", "train_data.bin", "test_data.bin",
        "train_logits.bin", "test_logits.bin", "backbone.txt", "manifest.txt",
    }
    assert {p.name for p in toy_dir.iterdir()} == expected


def test_gen_toy_regeneration_reproducible(toy_dir, tmp_path):
    again = tmp_path / "again"
    rc = run(["gen-toy", "--seed", 0, "--m", 3, "--n", 12, "--d", 12,
              "--per-class", 8, "--out-dir", again])
    assert rc == 0
    for name in ("pre_embeddings.bin", "train_data.bin", "test_logits.bin", "backbone.txt"):
        assert (again / name).read_bytes() == (toy_dir / name).read_bytes()


def test_build_map_semap_a_writes_loadable_table(toy_dir, tmp_path, capsys):
    out = tmp_path / "map.txt"
    rc = run([
        "build-map", "--strategy", "semap-a",
        "--pre-labels", toy_dir / "pre_labels.txt",
        "--down-labels", toy_dir / "down_labels.txt",
        "--pre-emb", toy_dir / "pre_embeddings.bin",
        "--down-emb", toy_dir / "down_embeddings.bin",
        "--out", out,
    ])
    assert rc == 0
    table = load_mapping(out)
    assert table.strategy == "semap_a"
    assert table.hyperparams == {"epsilon": 0.05, "gamma": 0.9, "cap": 50}
    assert "k_i histogram" in capsys.readouterr().err


def test_build_map_rm_without_embeddings(toy_dir, tmp_path):
    out = tmp_path / "rm.txt"
    rc = run([
        "build-map", "--strategy", "rm",
        "--pre-labels", toy_dir / "pre_labels.txt",
        "--down-labels", toy_dir / "down_labels.txt",
        "--out", out,
    ])
    assert rc == 0
    assert load_mapping(out).assignments == [[0], [1], [2]]


def test_build_map_fm_requires_logits(toy_dir, tmp_path, capsys):
    rc = run([
        "build-map", "--strategy", "fm",
        "--pre-labels", toy_dir / "pre_labels.txt",
        "--down-labels", toy_dir / "down_labels.txt",
        "--out", tmp_path / "fm.txt",
    ])
    assert rc == 1
    assert "--logits" in capsys.readouterr().err


def test_build_map_fm_with_logits(toy_dir, tmp_path):
    out = tmp_path / "fm.txt"
    rc = run([
        "build-map", "--strategy", "fm",
        "--pre-labels", toy_dir / "pre_labels.txt",
        "--down-labels", toy_dir / "down_labels.txt",
        "--logits", toy_dir / "train_logits.bin",
        "--out", out,
    ])
    assert rc == 0
    assert load_mapping(out).strategy == "fm"


def test_eval_zeroshot_end_to_end(toy_dir, tmp_path, capsys):
    table_path = tmp_path / "map.txt"
    run([
        "build-map", "--strategy", "semap1",
        "--pre-labels", toy_dir / "pre_labels.txt",
        "--down-labels", toy_dir / "down_labels.txt",
        "--pre-emb", toy_dir / "pre_embeddings.bin",
        "--down-emb", toy_dir / "down_embeddings.bin",
        "--out", table_path,
    ])
    capsys.readouterr()
    rc = run(["eval-zeroshot", "--map", table_path, "--logits", toy_dir / "test_logits.bin"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("eval_report\n")
    acc = float(next(l for l in out.splitlines() if l.startswith("accuracy:")).split()[1])
    assert acc > 0.9  # planted benchmark is recoverable by construction


def test_train_prompt_lr_zero_identity(toy_dir, tmp_path, capsys):
    table_path = tmp_path / "map.txt"
    run([
        "build-map", "--strategy", "semap1",
        "--pre-labels", toy_dir / "pre_labels.txt",
        "--down-labels", toy_dir / "down_labels.txt",
        "--pre-emb", toy_dir / "pre_embeddings.bin",
        "--down-emb", toy_dir / "down_embeddings.bin",
        "--out", table_path,
    ])
    prompt_path = tmp_path / "prompt.bin"
    rc = run([
        "train-prompt", "--map", table_path, "--backbone", toy_dir / "backbone.txt",
        "--data", toy_dir / "train_data.bin", "--epochs", 2, "--lr", 0,
        "--seed", 5, "--out", prompt_path,
    ])
    assert rc == 0
    values, variant, d = load_prompt(prompt_path)
    assert variant == "padding" and d == 12
    assert np.all(values == 0.0)


def test_train_prompt_deterministic_and_loss_decreases(toy_dir, tmp_path, capsys):
    table_path = tmp_path / "map.txt"
    run([
        "build-map", "--strategy", "semap-a",
        "--pre-labels", toy_dir / "pre_labels.txt",
        "--down-labels", toy_dir / "down_labels.txt",
        "--pre-emb", toy_dir / "pre_embeddings.bin",
        "--down-emb", toy_dir / "down_embeddings.bin",
        "--out", table_path,
    ])
    capsys.readouterr()

    def run_once(path):
        rc = run([
            "train-prompt", "--map", table_path,
            "--backbone", toy_dir / "backbone.txt",
            "--data", toy_dir / "train_data.bin",
            "--epochs", 4, "--lr", 0.1, "--seed", 3, "--batch-size", 8,
            "--out", path,
        ])
        assert rc == 0
        return capsys.readouterr().out

    out1 = run_once(tmp_path / "p1.bin")
    out2 = run_once(tmp_path / "p2.bin")
    assert (tmp_path / "p1.bin").read_bytes() == (tmp_path / "p2.bin").read_bytes()

    rows = [l.split() for l in out1.splitlines() if l and l[0].isdigit()]
    losses = [float(r[1]) for r in rows]
    assert losses[-1] < losses[0]
    # reports identical apart from wall time
    strip = lambda s: [l for l in s.splitlines() if not l.startswith("wall_time")]
    assert strip(out1) == strip(out2)


def test_inspect_map(toy_dir, tmp_path, capsys):
    table_path = tmp_path / "map.txt"
    run([
        "build-map", "--strategy", "rm",
        "--pre-labels", toy_dir / "pre_labels.txt",
        "--down-labels", toy_dir / "down_labels.txt",
        "--out", table_path,
    ])
    capsys.readouterr()
    rc = run(["inspect-map", "--map", table_path])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.startswith("mapping_table\n")
    assert "strategy: rm" in out


def test_compare_from_toy_dir(toy_dir, capsys):
    rc = run(["compare", "--toy-dir", toy_dir, "--strategies", "rm,semap1"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("strategy_comparison\n")
    assert "semap1" in out


def test_compare_writes_csv(toy_dir, tmp_path, capsys):
    csv_path = tmp_path / "cmp.csv"
    rc = run(["compare", "--toy-dir", toy_dir, "--strategies", "semap_a", "--csv", csv_path])
    assert rc == 0
    assert csv_path.read_text().startswith("strategy,mode,dataset,examples,accuracy")


def test_unknown_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["inspect-map", "--map", "x", "--bogus"])
    assert exc.value.code == 1


def test_usage_error_missing_required_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval-zeroshot", "--map", "only"])
    assert exc.value.code == 1


def test_data_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    rc = main(["eval-zeroshot", "--map", str(bad), "--logits", str(bad)])
    assert rc == 2
    assert "magic" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path, capsys):
    rc = main(["eval-zeroshot", "--map", str(tmp_path / "a"), "--logits", str(tmp_path / "b")])
    assert rc == 2


def test_help_documents_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["build-map", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    assert "epsilon=0.05" in text and "gamma=0.9" in text and "cap=50" in text


def test_threads_validation(capsys, monkeypatch):
    rc = main(["--threads", "0", "inspect-map", "--map", "x"])
    assert rc == 1
    monkeypatch.setenv("SEMAP_THREADS", "junk")
    rc = main(["inspect-map", "--map", "x"])
    assert rc == 1


def test_data_file_with_non_square_rows_exits_2(toy_dir, tmp_path, capsys):
    table_path = tmp_path / "map.txt"
    run([
        "build-map", "--strategy", "rm",
        "--pre-labels", toy_dir / "pre_labels.txt",
        "--down-labels", toy_dir / "down_labels.txt",
        "--out", table_path,
    ])
    rc = run([
        "train-prompt", "--map", table_path, "--backbone", toy_dir / "backbone.txt",
        "--data", toy_dir / "test_logits.bin",  # width 12 is not a square
        "--epochs", 1, "--out", tmp_path / "p.bin",
    ])
    assert rc == 2
    assert "square" in capsys.readouterr().err
