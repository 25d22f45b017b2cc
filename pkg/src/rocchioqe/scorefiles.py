"""Trial lists and score files.

Trial list: whitespace-separated ``label enroll test`` lines (label 1/0), or
``enroll test`` lines with no label. Score file: CSV with header
``enroll_id,test_id,score[,label]``.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .scoring import Label, ScoreSet, TrialPair

SCORE_HEADER = ["enroll_id", "test_id", "score", "label"]


class FormatError(ValueError):
    pass


def format_score(x: float) -> str:
    return f"{x:.6g}"


def parse_trials(lines: Iterable[str]) -> list:
    trials = []
    for lineno, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        if len(fields) == 3:
            try:
                label = Label.parse(fields[0])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
            trials.append(TrialPair(fields[1], fields[2], label))
        elif len(fields) == 2:
            trials.append(TrialPair(fields[0], fields[1], Label.UNKNOWN))
        else:
            raise FormatError(
                f"line {lineno}: expected 'label enroll test' or 'enroll test', got {len(fields)} fields")
    return trials


def load_trials(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_trials(fh)


def write_trials(trials: Sequence[TrialPair], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in trials:
            bit = t.label.as_bit()
            fh.write(f"{bit} {t.enroll_id} {t.test_id}\n" if bit else f"{t.enroll_id} {t.test_id}\n")


def load_scores(path, system: str | None = None) -> ScoreSet:
    trials, scores = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty score file (missing header)")
        header = [h.strip() for h in header]
        if header[:3] != SCORE_HEADER[:3] or header[3:] not in ([], ["label"]):
            raise FormatError(f"{path}: header must be enroll_id,test_id,score[,label]")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}: row {rowno}: expected {len(header)} fields, got {len(row)}")
            try:
                score = float(row[2])
                label = Label.parse(row[3]) if len(row) == 4 else Label.UNKNOWN
            except ValueError as exc:
                raise FormatError(f"{path}: row {rowno}: {exc}") from None
            if not np.isfinite(score):
                raise FormatError(f"{path}: row {rowno}: non-finite score")
            trials.append(TrialPair(row[0].strip(), row[1].strip(), label))
            scores.append(score)
    return ScoreSet(system or Path(path).stem, tuple(trials), np.asarray(scores, dtype=np.float64))


def write_scores(scores: ScoreSet, path) -> None:
    """Write with 6 significant digits; the label column appears iff any trial is labeled."""
    labeled = any(t.label is not Label.UNKNOWN for t in scores.trials)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCORE_HEADER if labeled else SCORE_HEADER[:3])
        for t, s in zip(scores.trials, scores.scores):
            row = [t.enroll_id, t.test_id, format_score(float(s))]
            if labeled:
                row.append(t.label.as_bit())
            writer.writerow(row)
