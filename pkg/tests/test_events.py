import json

import numpy as np
import pytest

from nextpp.errors import ContractError, ParseError, ValidationError
from nextpp.events import Dataset, EventSequence, inter_event_intervals, load_jsonl, save_jsonl, stats
from nextpp.rng import Rng


def _write(tmp_path, lines, name="data.jsonl"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_single_event_sequence(tmp_path):
    path = _write(tmp_path, ['{"mark_count": 1}', '{"times": [1.5], "marks": [0]}'])
    data = load_jsonl(path)
    assert data.mark_count == 1
    assert len(data.sequences) == 1
    assert len(data.sequences[0]) == 1
    assert data.sequences[0].times[0] == 1.5


def test_load_rejects_equal_times_with_line_number(tmp_path):
    path = _write(tmp_path, ['{"mark_count": 1}', '{"times": [1.0, 1.0], "marks": [0, 0]}'])
    with pytest.raises(ValidationError, match=r":2"):
        load_jsonl(path)


def test_load_rejects_decreasing_times(tmp_path):
    path = _write(tmp_path, ['{"mark_count": 1}', '{"times": [2.0, 1.0], "marks": [0, 0]}'])
    with pytest.raises(ValidationError, match="strictly increase"):
        load_jsonl(path)


def test_load_rejects_mark_out_of_range(tmp_path):
    path = _write(tmp_path, ['{"mark_count": 2}', '{"times": [1.0, 2.0], "marks": [0, 2]}'])
    with pytest.raises(ValidationError, match="mark out of range"):
        load_jsonl(path)


def test_load_rejects_nonpositive_first_time(tmp_path):
    path = _write(tmp_path, ['{"mark_count": 1}', '{"times": [0.0, 1.0], "marks": [0, 0]}'])
    with pytest.raises(ValidationError, match="first event time"):
        load_jsonl(path)


def test_load_rejects_malformed_json_with_line(tmp_path):
    path = _write(tmp_path, ['{"mark_count": 1}', "{not json"])
    with pytest.raises(ParseError, match=r":2"):
        load_jsonl(path)


def test_load_requires_header(tmp_path):
    path = _write(tmp_path, ['{"times": [1.0], "marks": [0]}'])
    with pytest.raises(ParseError, match="header"):
        load_jsonl(path)


def test_roundtrip_random_dataset(tmp_path):
    rng = Rng(4)
    sequences = []
    for _ in range(100):
        n = int(rng.integers(1, 20))
        times = np.cumsum([rng.exponential(1.0) + 1e-3 for _ in range(n)])
        marks = rng.integers(0, 4, shape=n)
        sequences.append(EventSequence.make(times, marks, 4))
    data = Dataset(mark_count=4, sequences=sequences, split="train")
    path = tmp_path / "roundtrip.jsonl"
    save_jsonl(data, path)
    back = load_jsonl(path, split="train")
    assert back.mark_count == 4
    assert len(back.sequences) == 100
    for a, b in zip(data.sequences, back.sequences):
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.marks, b.marks)


def test_stats_taxi_like_shape():
    # 2000 sequences with lengths in 36..38 balanced to a mean of exactly 37
    lengths = [36] * 500 + [37] * 1000 + [38] * 500
    sequences = []
    for n in lengths:
        times = np.arange(1, n + 1, dtype=float)
        sequences.append(EventSequence.make(times, np.zeros(n, dtype=int), 10))
    st = stats(Dataset(mark_count=10, sequences=sequences))
    assert (st.length_min, st.length_max) == (36, 38)
    assert st.length_mean == 37.0
    assert st.event_tokens == sum(lengths)
    assert st.sequence_count == 2000


def test_stats_single_sequence():
    seq = EventSequence.make([1.0, 2.0, 3.0, 4.0, 5.0], [0] * 5, 1)
    st = stats(Dataset(mark_count=1, sequences=[seq]))
    assert st.length_min == st.length_max == 5
    assert st.length_mean == 5.0


def test_stats_mean_of_two_sequences():
    seqs = [
        EventSequence.make(np.arange(1.0, 11.0), np.zeros(10, dtype=int), 1),
        EventSequence.make(np.arange(1.0, 21.0), np.zeros(20, dtype=int), 1),
    ]
    st = stats(Dataset(mark_count=1, sequences=seqs))
    assert st.length_mean == 15.0


def test_stats_empty_dataset_rejected():
    with pytest.raises(ContractError):
        stats(Dataset(mark_count=1, sequences=[]))


def test_stats_invariant_under_shuffle():
    rng = Rng(1)
    seqs = [
        EventSequence.make(np.cumsum(rng.uniform((n,)) + 0.01), rng.integers(0, 3, shape=n), 3)
        for n in (4, 9, 2, 7)
    ]
    a = stats(Dataset(3, seqs))
    b = stats(Dataset(3, list(reversed(seqs))))
    assert a == b


def test_intervals_basic():
    seq = EventSequence.make([2.0, 5.0, 6.0], [0, 0, 0], 1)
    assert np.array_equal(inter_event_intervals(seq), [2.0, 3.0, 1.0])


def test_intervals_single_event_uses_first_time():
    seq = EventSequence.make([7.0], [0], 1)
    assert np.array_equal(inter_event_intervals(seq), [7.0])


def test_intervals_cumsum_recovers_times():
    rng = Rng(2)
    times = np.cumsum(rng.uniform((30,)) + 1e-3)
    seq = EventSequence.make(times, np.zeros(30, dtype=int), 1)
    assert np.allclose(np.cumsum(inter_event_intervals(seq)), times, rtol=0, atol=1e-12)


def test_single_event_sequences_warn_on_load(tmp_path, caplog):
    path = _write(tmp_path, ['{"mark_count": 1}', '{"times": [1.0], "marks": [0]}'])
    with caplog.at_level("WARNING"):
        load_jsonl(path)
    assert any("length-1" in rec.message for rec in caplog.records)


def test_header_stats_roundtrip_values_exact(tmp_path):
    # values with awkward binary representations survive the round trip
    times = [0.1, 0.2 + 0.1, 1.0 / 3.0 + 0.4]
    seq = EventSequence.make(times, [0, 1, 0], 2)
    path = tmp_path / "exact.jsonl"
    save_jsonl(Dataset(2, [seq]), path)
    back = load_jsonl(path)
    assert np.array_equal(back.sequences[0].times, np.asarray(times))
    header = json.loads(path.read_text().splitlines()[0])
    assert header == {"mark_count": 2}
