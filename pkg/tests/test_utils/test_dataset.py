import json

import numpy as np
import pytest

from models.responses import AggregateState, Branch, Decision
from models.schemas import Vote
from models.state import PairResult
from tests.conftest import write_jsonl
from utils.dataset import load_dataset, load_results, write_results, write_traces
from utils.embeddings import write_matrix
from utils.exceptions import ValidationError


def _record(pair_id, **overrides):
    record = {
        "pair_id": pair_id,
        "category": "lung",
        "question": "Is there a pleural effusion?",
        "option_a": "yes",
        "option_b": "no",
        "image_1": {"id": f"{pair_id}_1", "path": "img/a.png", "embedding": [1.0, 0.0, 0.0]},
        "image_2": {"id": f"{pair_id}_2", "path": "img/b.png", "embedding": [0.0, 1.0, 0.0]},
        "answer_1": "A",
        "answer_2": "B",
    }
    record.update(overrides)
    return record


def test_loads_two_records_in_order(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [_record("p2"), _record("p1")])
    pairs = load_dataset(path)
    assert [p.pair_id for p in pairs] == ["p2", "p1"]
    assert pairs[0].truth(1) is Vote.A and pairs[0].truth(2) is Vote.B
    ctx = pairs[0].query_context(2)
    assert ctx.query_id == "p2_2"
    assert ctx.image_path == "img/b.png"
    np.testing.assert_array_equal(ctx.query_embedding, np.array([0, 1, 0], dtype=np.float32))


def test_rejects_label_outside_a_b(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [_record("p1"), _record("p2", answer_1="C")])
    with pytest.raises(ValidationError, match="answer_1") as exc:
        load_dataset(path)
    assert exc.value.line == 2


def test_rejects_shared_image_id(tmp_path):
    record = _record("p1")
    record["image_2"]["id"] = record["image_1"]["id"]
    with pytest.raises(ValidationError, match="share id"):
        load_dataset(write_jsonl(tmp_path / "d.jsonl", [record]))


def test_rejects_duplicate_pair_id(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [_record("p1"), _record("p1")])
    with pytest.raises(ValidationError, match="lines 1 and 2"):
        load_dataset(path)


def test_rejects_zero_embedding(tmp_path):
    record = _record("p1")
    record["image_1"]["embedding"] = [0.0, 0.0, 0.0]
    with pytest.raises(ValidationError, match="zero-norm"):
        load_dataset(write_jsonl(tmp_path / "d.jsonl", [record]))


def test_resolves_row_references(tmp_path):
    write_matrix(tmp_path / "q.dtbank", np.array([[1, 2, 3], [4, 5, 6]], dtype=np.float32))
    record = _record("p1")
    record["image_1"] = {"id": "p1_1", "row": 1}
    record["image_2"] = {"id": "p1_2", "row": 0}
    pairs = load_dataset(write_jsonl(tmp_path / "d.jsonl", [record]), tmp_path / "q.dtbank")
    assert pairs[0].image_1.embedding == [4.0, 5.0, 6.0]
    assert pairs[0].image_1.row is None
    with pytest.raises(ValidationError, match="no embeddings file"):
        load_dataset(tmp_path / "d.jsonl")


def test_results_and_traces_round_trip(tmp_path):
    decision = Decision(label=Vote.A, branch=Branch.MARGIN_WIN, aggregate=AggregateState(w_a=80))
    result = PairResult(
        pair_id="p1",
        decision_1=decision,
        decision_2=decision,
        final_1=Vote.A,
        final_2=Vote.A,
        trace=[{"stage": "final", "image": None, "data": {"finals": ["A", "A"]}}],
        trace_digest="f" * 64,
    )
    results_path = write_results(tmp_path / "out" / "results.jsonl", [result])
    loaded = load_results(results_path)
    assert loaded[0].trace == []
    assert loaded[0].decision_1.aggregate.total_w == 80

    trace_path = write_traces(tmp_path / "out" / "trace.jsonl", [result])
    record = json.loads(trace_path.read_text(encoding="utf-8"))
    assert record["trace_digest"] == "f" * 64
    assert record["events"][0]["stage"] == "final"
