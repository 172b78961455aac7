"""Benchmark datasets, string-match scorers and score aggregation.

Three task families are supported: trivia creative writing, logic grid
puzzles and collaborative codenames.  Every scorer returns a fraction in
``[0, 1]``: correct answers over questions asked.
"""

from __future__ import annotations

import json
import logging
import re
from math import fsum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

from .core import Task
from .errors import DatasetError
from .text import normalize_text

log = logging.getLogger(__name__)

KINDS = ("trivia", "logic", "codenames")
TRIVIA_SIZES = (5, 10)


@dataclass(frozen=True)
class TriviaQuestion:
    question: str
    answers: tuple[str, ...]


@dataclass(frozen=True)
class TriviaInstance:
    id: str
    topic: str
    questions: tuple[TriviaQuestion, ...]

    @property
    def question_keys(self) -> list[str]:
        return [f"q{i}" for i in range(1, len(self.questions) + 1)]

    def to_task(self) -> Task:
        lines = [f"{i}. {q.question}" for i, q in enumerate(self.questions, 1)]
        text = (
            f"Write a short and coherent story about {self.topic} that incorporates "
            f"the answers to the following {len(self.questions)} questions:\n" + "\n".join(lines)
        )
        return Task(self.id, text, {"kind": "trivia", "question_keys": ",".join(self.question_keys)})


@dataclass(frozen=True)
class LogicPuzzleInstance:
    id: str
    puzzle: str
    question: str
    gold_house: int

    def to_task(self) -> Task:
        text = self.puzzle if not self.question or self.question in self.puzzle else f"{self.puzzle}\n{self.question}"
        text += "\nGive the house number on a final line starting with 'Answer:'."
        return Task(self.id, text, {"kind": "logic", "question_keys": "house"})


@dataclass(frozen=True)
class CodenamesInstance:
    id: str
    target_words: tuple[str, ...]
    distractor_words: tuple[str, ...]

    def __post_init__(self) -> None:
        overlap = {w.lower() for w in self.target_words} & {w.lower() for w in self.distractor_words}
        if overlap:
            raise ValueError(f"words are both targets and distractors: {sorted(overlap)}")

    @property
    def board(self) -> list[str]:
        return sorted(self.target_words + self.distractor_words, key=str.lower)

    def to_task(self) -> Task:
        text = (
            f"Play collaborative codenames. As spymaster, give one hint word that links the "
            f"{len(self.target_words)} target words {', '.join(self.target_words)} while avoiding "
            f"the distractors. Then, as guesser, pick {len(self.target_words)} words from the "
            f"board: {', '.join(self.board)}. End with a line 'Guesses: <word>, <word>, ...'."
        )
        return Task(self.id, text, {"kind": "codenames", "question_keys": "hint,guesses"})


Instance = Union[TriviaInstance, LogicPuzzleInstance, CodenamesInstance]


# --------------------------------------------------------------------------
# Scoring
# --------------------------------------------------------------------------


def score_trivia(output_text: str, instance: TriviaInstance) -> float:
    """Fraction of questions with at least one accepted alias mentioned in the output."""
    haystack = normalize_text(output_text or "")
    if not instance.questions:
        return 0.0
    correct = 0
    for q in instance.questions:
        aliases = [normalize_text(a) for a in q.answers]
        if any(a and a in haystack for a in aliases):
            correct += 1
    return correct / len(instance.questions)


_INT = re.compile(r"\d+")


def parse_house(text: str) -> int | None:
    """First integer on the final-answer line (last line mentioning 'answer', else last line)."""
    lines = [ln for ln in (text or "").splitlines() if ln.strip()]
    if not lines:
        return None
    answer_lines = [ln for ln in lines if "answer" in ln.lower()]
    line = answer_lines[-1] if answer_lines else lines[-1]
    m = _INT.search(line)
    return int(m.group()) if m else None


def score_logic(predicted_house: int | str | None, instance: LogicPuzzleInstance) -> int:
    if isinstance(predicted_house, str):
        predicted_house = parse_house(predicted_house)
    if predicted_house is None:
        return 0
    return int(predicted_house == instance.gold_house)


def parse_guesses(text: str, instance: CodenamesInstance) -> list[str]:
    """Board words named on the last 'guess' line (or anywhere, if there is none)."""
    lines = [ln for ln in (text or "").splitlines() if "guess" in ln.lower()]
    source = lines[-1] if lines else (text or "")
    found = []
    for word in instance.board:
        if re.search(rf"(?<![\w-]){re.escape(word)}(?![\w-])", source, re.IGNORECASE):
            found.append(word)
    return found


def score_codenames(guesses: Iterable[str], instance: CodenamesInstance) -> float:
    targets = {w.lower() for w in instance.target_words}
    if not targets:
        return 0.0
    return len({g.lower() for g in guesses} & targets) / len(targets)


def score_output(text: str, instance: Instance) -> tuple[float, list[str]]:
    """Score a final answer for any instance kind; returns ``(score, flags)``."""
    if isinstance(instance, TriviaInstance):
        return score_trivia(text, instance), []
    if isinstance(instance, LogicPuzzleInstance):
        house = parse_house(text)
        if house is None:
            return 0.0, ["unparsed"]
        return float(score_logic(house, instance)), []
    return score_codenames(parse_guesses(text, instance), instance), []


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------


@dataclass
class ScoreReport:
    per_instance: list[float]
    mean_score_pct: float
    baseline_pct: float | None = None
    delta_pct: float | None = None
    rows: list[dict[str, Any]] = field(default_factory=list)

    def summary(self) -> str:
        line = f"score {self.mean_score_pct:.1f}%"
        if self.delta_pct is not None:
            line += f" (baseline {self.baseline_pct:.1f}%, {format_delta(self.delta_pct)})"
        return line

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows": self.rows,
            "aggregate": {
                "n": len(self.per_instance),
                "mean_score_pct": self.mean_score_pct,
                "baseline_pct": self.baseline_pct,
                "delta_pct": self.delta_pct,
            },
        }


def delta_pct(score_pct: float, baseline_pct: float) -> float:
    """Relative change against a baseline, in percent, to one decimal."""
    return round((score_pct - baseline_pct) / baseline_pct * 100, 1)


def format_delta(delta: float) -> str:
    return f"Δ {delta:+.1f}%"


def aggregate(scores: Sequence[float], baseline_pct: float | None = None) -> ScoreReport:
    if not scores:
        raise ValueError("aggregate needs at least one score")
    # fsum keeps the mean independent of score order
    mean_pct = round(fsum(scores) / len(scores) * 100, 1)
    delta = None
    if baseline_pct is not None:
        if baseline_pct == 0:
            log.warning("baseline is 0; delta is undefined and omitted")
        else:
            delta = delta_pct(mean_pct, baseline_pct)
    return ScoreReport(list(scores), mean_pct, baseline_pct, delta)


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------


def _records(path: Path) -> list[Any]:
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: not JSON ({exc.msg})") from exc
        return records
    if isinstance(doc, dict):
        for key in ("examples", "instances", "data"):
            if isinstance(doc.get(key), list):
                return doc[key]
        raise DatasetError(f"{path}: no list of records found")
    if not isinstance(doc, list):
        raise DatasetError(f"{path}: expected a list of records")
    return doc


def _trivia(rec: dict, ident: str, n: int | None) -> TriviaInstance:
    raw_q = rec["questions"]
    if raw_q and isinstance(raw_q[0], str):
        pairs = zip(raw_q, rec["answers"], strict=True)
        questions = [TriviaQuestion(q, tuple(a)) for q, a in pairs]
    else:
        questions = [TriviaQuestion(q["question"], tuple(q["answers"])) for q in raw_q]
    if any(not q.answers or not all(isinstance(a, str) and a.strip() for a in q.answers) for q in questions):
        raise ValueError("every question needs at least one non-empty alias")
    if len(questions) not in TRIVIA_SIZES:
        raise ValueError(f"trivia instances need {TRIVIA_SIZES} questions, got {len(questions)}")
    if n is not None and len(questions) != n:
        raise ValueError(f"expected {n} questions, got {len(questions)}")
    return TriviaInstance(ident, str(rec["topic"]), tuple(questions))


_HOUSES = re.compile(r"there are (\d+) houses", re.IGNORECASE)


def _logic(rec: dict, ident: str) -> LogicPuzzleInstance:
    text = str(rec["input"])
    target = rec["target"]
    if isinstance(target, list):
        target = target[0]
    gold = int(str(target).strip())
    qs = [ln for ln in text.splitlines() if ln.strip().startswith("Q:")]
    m = _HOUSES.search(text)
    if m and not 1 <= gold <= int(m.group(1)):
        raise ValueError(f"gold house {gold} outside 1..{m.group(1)}")
    return LogicPuzzleInstance(ident, text, qs[-1].strip() if qs else "", gold)


def _codenames(rec: dict, ident: str) -> CodenamesInstance:
    targets = rec.get("targets", rec.get("target_words"))
    distractors = rec.get("distractors", rec.get("distractor_words"))
    if targets is None or distractors is None:
        raise KeyError("targets/distractors")
    return CodenamesInstance(ident, tuple(map(str, targets)), tuple(map(str, distractors)))


def load_dataset(path: str | Path, kind: str, n: int | None = None) -> list[Instance]:
    """Load every record of ``path`` as ``kind`` instances; the first bad record aborts."""
    if kind not in KINDS:
        raise DatasetError(f"unknown dataset kind {kind!r}")
    if kind == "trivia" and n is not None and n not in TRIVIA_SIZES:
        raise DatasetError(f"trivia N must be one of {TRIVIA_SIZES}, got {n}")
    out: list[Instance] = []
    for i, rec in enumerate(_records(Path(path))):
        ident = str(rec.get("id", f"{kind}-{i:04d}")) if isinstance(rec, dict) else ""
        try:
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            if kind == "trivia":
                out.append(_trivia(rec, ident, n))
            elif kind == "logic":
                out.append(_logic(rec, ident))
            else:
                out.append(_codenames(rec, ident))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad {kind} record ({type(exc).__name__}: {exc})", index=i) from exc
    log.info("loaded %d %s instances from %s", len(out), kind, path)
    return out


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    if isinstance(inst, TriviaInstance):
        return {
            "id": inst.id,
            "topic": inst.topic,
            "questions": [{"question": q.question, "answers": list(q.answers)} for q in inst.questions],
        }
    if isinstance(inst, LogicPuzzleInstance):
        return {"id": inst.id, "input": inst.puzzle, "target": inst.gold_house}
    return {"id": inst.id, "targets": list(inst.target_words), "distractors": list(inst.distractor_words)}


def instance_from_dict(doc: dict[str, Any], kind: str) -> Instance:
    ident = str(doc.get("id", f"{kind}-0000"))
    if kind == "trivia":
        return _trivia(doc, ident, None)
    if kind == "logic":
        return _logic(doc, ident)
    if kind == "codenames":
        return _codenames(doc, ident)
    raise DatasetError(f"unknown dataset kind {kind!r}")
