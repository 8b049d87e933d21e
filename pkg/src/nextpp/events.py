"""Event sequences, dataset I/O and summary statistics.

A dataset is a list of sequences of (time, mark) pairs with strictly
increasing positive times and integer marks in [0, mark_count).  The
first inter-event interval is the first event time itself.

File format (JSONL, UTF-8, one object per line):

    {"mark_count": M}                                  <- header line
    {"times": [t1, t2, ...], "marks": [m1, m2, ...]}   <- one per sequence

Datasets are immutable after load and safe to share across threads.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParseError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Event:
    time: float
    mark: int


@dataclass(frozen=True)
class EventSequence:
    times: np.ndarray  # float64, strictly increasing, > 0
    marks: np.ndarray  # intp, in [0, mark_count)

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        for t, m in zip(self.times, self.marks):
            yield Event(float(t), int(m))

    @staticmethod
    def make(times, marks, mark_count=None, where=""):
        times = np.asarray(times, dtype=np.float64)
        marks = np.asarray(marks, dtype=np.intp)
        ctx = f" ({where})" if where else ""
        if times.ndim != 1 or marks.ndim != 1 or len(times) != len(marks):
            raise ValidationError(f"times and marks must be equal-length 1-D arrays{ctx}")
        if len(times) < 1:
            raise ValidationError(f"a sequence needs at least one event{ctx}")
        if not np.all(np.isfinite(times)):
            raise ValidationError(f"non-finite event time{ctx}")
        if times[0] <= 0.0:
            raise ValidationError(f"first event time must be > 0, got {times[0]}{ctx}")
        if np.any(np.diff(times) <= 0.0):
            i = int(np.argmax(np.diff(times) <= 0.0)) + 1
            raise ValidationError(f"event times must strictly increase (violated at event {i + 1}){ctx}")
        if np.any(marks < 0) or (mark_count is not None and np.any(marks >= mark_count)):
            raise ValidationError(f"mark out of range [0, {mark_count}){ctx}")
        return EventSequence(times, marks)


def inter_event_intervals(seq):
    """Positive gaps between consecutive events; the first gap is t_1 itself."""
    out = np.empty(len(seq.times))
    out[0] = seq.times[0]
    out[1:] = np.diff(seq.times)
    return out


@dataclass(frozen=True)
class Dataset:
    mark_count: int
    sequences: list
    split: str = ""

    def __len__(self):
        return len(self.sequences)

    def total_events(self):
        return sum(len(s) for s in self.sequences)


@dataclass(frozen=True)
class DatasetStats:
    mark_count: int
    sequence_count: int
    event_tokens: int
    length_min: int
    length_mean: float
    length_max: int
    split: str = ""

    def as_dict(self):
        return {
            "split": self.split,
            "mark_count": self.mark_count,
            "sequences": self.sequence_count,
            "event_tokens": self.event_tokens,
            "length_min": self.length_min,
            "length_mean": self.length_mean,
            "length_max": self.length_max,
        }


def stats(dataset):
    """Mark count, token count and sequence-length min/mean/max."""
    if not dataset.sequences:
        raise ContractError("stats() needs a nonempty dataset")
    lengths = np.array([len(s) for s in dataset.sequences])
    return DatasetStats(
        mark_count=dataset.mark_count,
        sequence_count=len(lengths),
        event_tokens=int(lengths.sum()),
        length_min=int(lengths.min()),
        length_mean=float(lengths.mean()),
        length_max=int(lengths.max()),
        split=dataset.split,
    )


def load_jsonl(path, split=""):
    """Load a dataset, validating every sequence; errors carry line numbers."""
    sequences = []
    mark_count = None
    n_single = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(f"{path}:{lineno}: malformed JSON: {err}") from err
            if lineno == 1:
                if not isinstance(record, dict) or "mark_count" not in record:
                    raise ParseError(f"{path}:1: expected header line {{\"mark_count\": M}}")
                mark_count = int(record["mark_count"])
                if mark_count < 1:
                    raise ValidationError(f"{path}:1: mark_count must be >= 1")
                continue
            if not isinstance(record, dict) or "times" not in record or "marks" not in record:
                raise ParseError(f"{path}:{lineno}: expected {{\"times\": [...], \"marks\": [...]}}")
            try:
                seq = EventSequence.make(
                    record["times"], record["marks"], mark_count, where=f"{path}:{lineno}"
                )
            except (TypeError, ValueError) as err:
                if isinstance(err, ValidationError):
                    raise
                raise ParseError(f"{path}:{lineno}: {err}") from err
            if len(seq) == 1:
                n_single += 1
            sequences.append(seq)
    if mark_count is None:
        raise ParseError(f"{path}: empty file (missing header line)")
    if n_single:
        log.warning("%s: %d length-1 sequence(s); usable for simulation but not training", path, n_single)
    return Dataset(mark_count=mark_count, sequences=sequences, split=split)


def save_jsonl(dataset, path):
    """Inverse of load_jsonl; round-trips values exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"mark_count": dataset.mark_count}) + "\n")
        for seq in dataset.sequences:
            rec = {"times": [float(t) for t in seq.times], "marks": [int(m) for m in seq.marks]}
            fh.write(json.dumps(rec) + "\n")
