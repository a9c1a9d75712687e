"""Prompt-ensembling utility over an offline prediction matrix.

The matrix holds one row per prompt and one column per validation instance,
with either hard label indices or per-label probability vectors. A coalition's
utility is its mean validation accuracy when prompts ensemble by plurality
vote or by probability averaging followed by argmax. Both rules yield values
that are exact multiples of 1/|validation|.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .coalition import Coalition
from .errors import ConsistencyError, PreconditionError
from .game import UtilityFn


class Mode(str, Enum):
    HARD_LABEL = "hard_label"
    PROBABILISTIC = "probabilistic"


class Rule(str, Enum):
    VOTE = "vote"
    AVERAGE_ARGMAX = "average"


class TieRule(str, Enum):
    ABSTAIN = "abstain"
    LOWEST = "lowest"


@dataclass(frozen=True)
class ValidationSet:
    instances: tuple[tuple[str, int], ...]
    num_labels: int

    def __post_init__(self):
        if not self.instances:
            raise PreconditionError("validation set is empty")
        if self.num_labels < 1:
            raise PreconditionError(f"num_labels must be >= 1, got {self.num_labels}")
        ids = [iid for iid, _ in self.instances]
        if len(set(ids)) != len(ids):
            raise ConsistencyError("validation instance ids are not unique")
        for iid, gold in self.instances:
            if not 0 <= gold < self.num_labels:
                raise ConsistencyError(
                    f"instance {iid!r} has gold label {gold} outside 0..{self.num_labels - 1}"
                )

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(iid for iid, _ in self.instances)

    @property
    def golds(self) -> tuple[int, ...]:
        return tuple(gold for _, gold in self.instances)


@dataclass(frozen=True)
class PredictionMatrix:
    prompt_ids: tuple[str, ...]
    instance_ids: tuple[str, ...]
    mode: Mode
    num_labels: int
    hard: Optional[np.ndarray] = None    # (prompts, instances) int
    prob: Optional[np.ndarray] = None    # (prompts, instances, labels) float

    def __post_init__(self):
        if len(set(self.prompt_ids)) != len(self.prompt_ids):
            raise ConsistencyError("prompt ids are not unique")
        if len(set(self.instance_ids)) != len(self.instance_ids):
            raise ConsistencyError("instance ids are not unique")
        shape = (len(self.prompt_ids), len(self.instance_ids))
        if self.mode is Mode.HARD_LABEL:
            if self.hard is None or self.prob is not None:
                raise ConsistencyError("hard-label matrix must set exactly the hard field")
            if self.hard.shape != shape:
                raise ConsistencyError(f"matrix shape {self.hard.shape} != {shape}")
            if self.hard.size and (self.hard.min() < 0 or self.hard.max() >= self.num_labels):
                raise ConsistencyError("hard labels fall outside 0..num_labels-1")
            self.hard.setflags(write=False)
        else:
            if self.prob is None or self.hard is not None:
                raise ConsistencyError("probabilistic matrix must set exactly the prob field")
            if self.prob.shape != shape + (self.num_labels,):
                raise ConsistencyError(
                    f"matrix shape {self.prob.shape} != {shape + (self.num_labels,)}"
                )
            if self.prob.size:
                if self.prob.min() < 0:
                    raise ConsistencyError("probability entries must be nonnegative")
                sums = self.prob.sum(axis=2)
                if np.max(np.abs(sums - 1.0)) > 1e-6:
                    raise ConsistencyError("probability rows must sum to 1 within 1e-6")

    def hard_view(self) -> np.ndarray:
        """Hard labels; probabilistic entries argmax with lowest-index tie-break."""
        if self.mode is Mode.HARD_LABEL:
            return self.hard
        return np.argmax(self.prob, axis=2)

    def column_index(self, instance_id: str) -> int:
        try:
            return self.instance_ids.index(instance_id)
        except ValueError:
            raise ConsistencyError(f"instance {instance_id!r} not in the matrix") from None


def discriminant(predicted: Optional[int], gold: int) -> int:
    """1 iff a prediction is present and equals the gold label."""
    return 1 if predicted is not None and predicted == gold else 0


def _check_coalition(matrix: PredictionMatrix, coalition: Coalition) -> None:
    if coalition.n != len(matrix.prompt_ids):
        raise ConsistencyError(
            f"coalition is over {coalition.n} players but the matrix has "
            f"{len(matrix.prompt_ids)} prompts"
        )


def _vote_columns(labels: np.ndarray, num_labels: int, tie: TieRule) -> np.ndarray:
    """Plurality label per column; -1 encodes abstention on first-place ties."""
    counts = np.zeros((num_labels, labels.shape[1]), dtype=np.int64)
    cols = np.arange(labels.shape[1])
    for row in labels:
        counts[row, cols] += 1
    winner = counts.argmax(axis=0)          # lowest label index on equal counts
    if tie is TieRule.LOWEST:
        return winner
    top = counts.max(axis=0)
    tied = (counts == top).sum(axis=0) > 1
    return np.where(tied, -1, winner)


def ensemble_vote(matrix: PredictionMatrix, coalition: Coalition, instance_id: str,
                  tie: TieRule = TieRule.ABSTAIN) -> Optional[int]:
    _check_coalition(matrix, coalition)
    if coalition.size == 0:
        raise PreconditionError("ensemble_vote needs a non-empty coalition")
    col = matrix.column_index(instance_id)
    labels = matrix.hard_view()[list(coalition.indices()), col:col + 1]
    out = _vote_columns(labels, matrix.num_labels, tie)[0]
    return None if out < 0 else int(out)


def ensemble_average(matrix: PredictionMatrix, coalition: Coalition,
                     instance_id: str) -> np.ndarray:
    _check_coalition(matrix, coalition)
    if coalition.size == 0:
        raise PreconditionError("ensemble_average needs a non-empty coalition")
    if matrix.mode is not Mode.PROBABILISTIC:
        raise PreconditionError("ensemble_average requires a probabilistic matrix")
    col = matrix.column_index(instance_id)
    return matrix.prob[list(coalition.indices()), col, :].mean(axis=0)


def utility_accuracy(matrix: PredictionMatrix, validation: ValidationSet,
                     coalition: Coalition, rule: Rule,
                     tie: TieRule = TieRule.ABSTAIN, u_empty: float = 0.0) -> float:
    _check_coalition(matrix, coalition)
    if coalition.size == 0:
        return u_empty
    cols = [matrix.column_index(iid) for iid in validation.ids]
    rows = list(coalition.indices())
    golds = np.array(validation.golds)
    if rule is Rule.VOTE:
        labels = matrix.hard_view()[np.ix_(rows, cols)]
        predicted = _vote_columns(labels, matrix.num_labels, tie)
    else:
        if matrix.mode is not Mode.PROBABILISTIC:
            raise PreconditionError("average rule requires a probabilistic matrix")
        means = matrix.prob[np.ix_(rows, cols)].mean(axis=0)
        predicted = np.argmax(means, axis=1)
    correct = int(np.count_nonzero(predicted == golds))
    return correct / len(validation.instances)


def matrix_utility(matrix: PredictionMatrix, validation: ValidationSet, rule: Rule,
                   tie: TieRule = TieRule.ABSTAIN, u_empty: float = 0.0) -> UtilityFn:
    """Close over the inputs as a deterministic Coalition -> accuracy oracle."""

    def oracle(coalition: Coalition) -> float:
        return utility_accuracy(matrix, validation, coalition, rule, tie, u_empty)

    return oracle


# ---------------------------------------------------------------------------
# file formats


def load_validation(path) -> ValidationSet:
    """CSV with a '#num_labels=K' first line, then an instance_id,gold_label table."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("#num_labels="):
            raise ConsistencyError(f"{path}: first line must be '#num_labels=K', got {first!r}")
        try:
            num_labels = int(first.split("=", 1)[1])
        except ValueError:
            raise ConsistencyError(f"{path}: cannot parse num_labels from {first!r}") from None
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["instance_id", "gold_label"]:
            raise ConsistencyError(f"{path}: expected header instance_id,gold_label, got {header}")
        instances = []
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ConsistencyError(f"{path}: malformed row {row}")
            try:
                instances.append((row[0], int(row[1])))
            except ValueError:
                raise ConsistencyError(f"{path}: gold label {row[1]!r} is not an integer") from None
    return ValidationSet(instances=tuple(instances), num_labels=num_labels)


def write_validation(validation: ValidationSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"#num_labels={validation.num_labels}\n")
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "gold_label"])
        for iid, gold in validation.instances:
            writer.writerow([iid, gold])


def load_matrix(path, num_labels: Optional[int] = None) -> PredictionMatrix:
    """CSV with header 'prompt_id,<instance ids...>'; cells are either bare integers
    (hard labels) or JSON arrays (probability vectors). Mixed files are rejected."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "prompt_id" or len(header) < 2:
            raise ConsistencyError(f"{path}: expected header 'prompt_id,<instance ids>'")
        instance_ids = tuple(h.strip() for h in header[1:])
        prompt_ids: list[str] = []
        cells: list[list[str]] = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ConsistencyError(
                    f"{path}: prompt {row[0]!r} has {len(row) - 1} cells, "
                    f"expected {len(instance_ids)}"
                )
            prompt_ids.append(row[0])
            cells.append([c.strip() for c in row[1:]])
    if not cells:
        raise ConsistencyError(f"{path}: matrix has no prompt rows")
    probabilistic = cells[0][0].startswith("[")
    flat = [c for row in cells for c in row]
    if any(c.startswith("[") != probabilistic for c in flat):
        raise ConsistencyError(f"{path}: mixed hard-label and probability cells")
    if probabilistic:
        vectors = [[_parse_prob_cell(path, c) for c in row] for row in cells]
        lengths = {len(v) for row in vectors for v in row}
        if len(lengths) != 1:
            raise ConsistencyError(f"{path}: probability vectors differ in length: {lengths}")
        k = lengths.pop()
        if num_labels is not None and num_labels != k:
            raise ConsistencyError(f"{path}: vectors have {k} labels, expected {num_labels}")
        return PredictionMatrix(
            prompt_ids=tuple(prompt_ids),
            instance_ids=instance_ids,
            mode=Mode.PROBABILISTIC,
            num_labels=k,
            prob=np.array(vectors, dtype=np.float64),
        )
    try:
        hard = np.array([[int(c) for c in row] for row in cells], dtype=np.int64)
    except ValueError:
        raise ConsistencyError(f"{path}: hard-label cells must be integers") from None
    k = num_labels if num_labels is not None else int(hard.max()) + 1
    return PredictionMatrix(
        prompt_ids=tuple(prompt_ids),
        instance_ids=instance_ids,
        mode=Mode.HARD_LABEL,
        num_labels=k,
        hard=hard,
    )


def _parse_prob_cell(path, cell: str) -> list[float]:
    try:
        vec = json.loads(cell)
    except json.JSONDecodeError:
        raise ConsistencyError(f"{path}: cannot parse probability cell {cell!r}") from None
    if not isinstance(vec, list) or not all(isinstance(x, (int, float)) for x in vec):
        raise ConsistencyError(f"{path}: probability cell {cell!r} is not a number array")
    return [float(x) for x in vec]


def write_matrix(matrix: PredictionMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prompt_id", *matrix.instance_ids])
        for r, pid in enumerate(matrix.prompt_ids):
            if matrix.mode is Mode.HARD_LABEL:
                writer.writerow([pid, *(int(x) for x in matrix.hard[r])])
            else:
                writer.writerow(
                    [pid, *(json.dumps([float(x) for x in vec]) for vec in matrix.prob[r])]
                )
