"""Dataset loaders and record validation."""

import pytest

from kbert.data import ExampleRecord, load_classification_tsv, load_conll


def test_load_classification_tsv(tmp_path):
    path = tmp_path / "train.tsv"
    path.write_text(
        "the movie was great\tpos\n"
        "\n"
        "terrible acting\tneg\n"
        "fine I guess\tpos\n",
        encoding="utf-8",
    )
    examples, labels = load_classification_tsv(path)
    assert labels == ["neg", "pos"]
    assert len(examples) == 3
    assert examples[0] == ExampleRecord(text="the movie was great", label="pos")
    assert examples[1].label == "neg"


def test_load_classification_tsv_reports_bad_line(tmp_path):
    path = tmp_path / "train.tsv"
    path.write_text("good\tpos\nno label here\n", encoding="utf-8")
    with pytest.raises(ValueError, match=r"train\.tsv:2"):
        load_classification_tsv(path)


def test_load_conll(tmp_path):
    path = tmp_path / "train.conll"
    path.write_text(
        "Tim\tB-PER\nCook\tI-PER\nvisits\tO\n\nBeijing\tB-LOC\n\n\n",
        encoding="utf-8",
    )
    examples, tags = load_conll(path)
    assert tags == ["B-LOC", "B-PER", "I-PER", "O"]
    assert len(examples) == 2
    assert examples[0].tokens == ["Tim", "Cook", "visits"]
    assert examples[0].tags == ["B-PER", "I-PER", "O"]
    assert examples[1].tokens == ["Beijing"]


def test_load_conll_reports_bad_line(tmp_path):
    path = tmp_path / "x.conll"
    path.write_text("Tim\tB-PER\textra\n", encoding="utf-8")
    with pytest.raises(ValueError, match=r"x\.conll:1"):
        load_conll(path)


def test_record_validation():
    ExampleRecord(text="hello", label="pos").validate()
    ExampleRecord(text="hello", label="pos").validate(labels=["neg", "pos"])
    ExampleRecord(tokens=["a"], tags=["O"]).validate()
    with pytest.raises(ValueError, match="non-empty text"):
        ExampleRecord(text="", label="pos").validate()
    with pytest.raises(ValueError, match="needs a label"):
        ExampleRecord(text="hello").validate()
    with pytest.raises(ValueError, match="not in"):
        ExampleRecord(text="hello", label="meh").validate(labels=["neg", "pos"])
    with pytest.raises(ValueError, match="aligned"):
        ExampleRecord(tokens=["a", "b"], tags=["O"]).validate()
    with pytest.raises(ValueError, match="aligned"):
        ExampleRecord(tokens=[], tags=[]).validate()
