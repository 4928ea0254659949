"""Data model and file I/O for embeddings, trials, scores, F0 tracks and matrices.

File formats (all plain text, UTF-8):
  embeddings  one JSON object per line: {"utt": ..., "spk": ..., "gender": "m"|"f", "vec": [...]}
  trials      "<enroll_id> <test_id> target|nontarget"
  scores      "<enroll_id> <test_id> <score>"
  f0          "<utt_id>\\tv1,v2,..." with 0.0 marking unvoiced frames
  matrices    "rows cols" header line, then one whitespace-separated row per line

Floats are serialized with repr (shortest round-tripping form), so a
save/load cycle is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class ParseError(ValueError):
    """Raised when a corpus file line cannot be parsed."""


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


_GENDER_ALIASES = {
    "m": Gender.MALE,
    "male": Gender.MALE,
    "f": Gender.FEMALE,
    "female": Gender.FEMALE,
    "unknown": Gender.UNKNOWN,
}

_GENDER_TAGS = {Gender.MALE: "m", Gender.FEMALE: "f"}


class TrialLabel(str, Enum):
    GENUINE = "genuine"
    IMPOSTOR = "impostor"


@dataclass(frozen=True)
class EmbeddingRecord:
    utt_id: str
    spk_id: str
    gender: Gender
    vec: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vec, dtype=float)
        if vec.ndim != 1 or vec.size == 0:
            raise ParseError(f"empty or non-1D vector for utt {self.utt_id!r}")
        if not np.all(np.isfinite(vec)):
            raise ParseError(f"non-finite vector component for utt {self.utt_id!r}")
        vec.setflags(write=False)
        object.__setattr__(self, "vec", vec)


@dataclass
class EmbeddingSet:
    """Ordered collection of embedding records with a common dimension."""

    records: list[EmbeddingRecord] = field(default_factory=list)

    def __post_init__(self):
        dims = {r.vec.shape[0] for r in self.records}
        if len(dims) > 1:
            raise ParseError(f"inconsistent embedding dimensions: {sorted(dims)}")
        ids = [r.utt_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ParseError("duplicate utt_id in embedding set")

    @property
    def dim(self) -> int:
        if not self.records:
            raise ValueError("empty embedding set has no dimension")
        return self.records[0].vec.shape[0]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def matrix(self) -> np.ndarray:
        """All vectors stacked in record order, shape (N, D)."""
        return np.stack([r.vec for r in self.records])

    def utt_ids(self) -> list[str]:
        return [r.utt_id for r in self.records]

    def speakers(self) -> list[str]:
        """Unique speaker ids in first-appearance order."""
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.spk_id, None)
        return list(seen)

    def by_speaker(self) -> dict[str, list[EmbeddingRecord]]:
        out: dict[str, list[EmbeddingRecord]] = {}
        for r in self.records:
            out.setdefault(r.spk_id, []).append(r)
        return out

    def get(self, utt_id: str) -> EmbeddingRecord:
        for r in self.records:
            if r.utt_id == utt_id:
                return r
        raise KeyError(utt_id)

    def subset(self, utt_ids: Iterable[str]) -> "EmbeddingSet":
        wanted = set(utt_ids)
        return EmbeddingSet([r for r in self.records if r.utt_id in wanted])


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    label: TrialLabel


@dataclass
class ScoreSet:
    entries: list[tuple[str, str, float]] = field(default_factory=list)

    def __post_init__(self):
        for e, t, s in self.entries:
            if not np.isfinite(s):
                raise ValueError(f"non-finite score for trial ({e}, {t})")

    def as_dict(self) -> dict[tuple[str, str], float]:
        return {(e, t): s for e, t, s in self.entries}


@dataclass
class F0Track:
    utt_id: str
    f0: np.ndarray
    frame_period: float = 0.01

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=float)
        if f0.ndim != 1 or f0.size == 0:
            raise ValueError(f"F0 track {self.utt_id!r} must have at least one frame")
        if not np.all(np.isfinite(f0)) or np.any(f0 < 0):
            raise ValueError(f"F0 track {self.utt_id!r} has negative or non-finite frames")
        self.f0 = f0

    @property
    def voiced_mask(self) -> np.ndarray:
        return self.f0 > 0


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# line parsers


def parse_embedding_line(line: str) -> EmbeddingRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in embedding line {line!r}: {exc}") from exc
    if not isinstance(obj, dict) or "utt" not in obj or "vec" not in obj:
        raise ParseError(f"embedding line missing utt/vec keys: {line!r}")
    vec = obj["vec"]
    if not isinstance(vec, list) or not vec:
        raise ParseError(f"empty vector in embedding line {line!r}")
    if not all(isinstance(x, (int, float)) for x in vec):
        raise ParseError(f"non-numeric vector element in embedding line {line!r}")
    gender_raw = obj.get("gender")
    if gender_raw is None:
        gender = Gender.UNKNOWN
    else:
        try:
            gender = _GENDER_ALIASES[str(gender_raw).lower()]
        except KeyError:
            raise ParseError(f"unknown gender {gender_raw!r} in line {line!r}") from None
    return EmbeddingRecord(
        utt_id=str(obj["utt"]),
        spk_id=str(obj.get("spk", obj["utt"])),
        gender=gender,
        vec=np.asarray(vec, dtype=float),
    )


def format_embedding_record(rec: EmbeddingRecord) -> str:
    obj: dict = {"utt": rec.utt_id, "spk": rec.spk_id}
    if rec.gender is not Gender.UNKNOWN:
        obj["gender"] = _GENDER_TAGS[rec.gender]
    vec = "[" + ",".join(_fmt(x) for x in rec.vec) + "]"
    head = json.dumps(obj, separators=(",", ":"))
    return head[:-1] + ',"vec":' + vec + "}"


def parse_trial_line(line: str) -> Trial:
    parts = line.split()
    if len(parts) != 3:
        raise ParseError(f"trial line needs 3 tokens, got {len(parts)}: {line!r}")
    enroll, test, tag = parts
    if tag == "target":
        label = TrialLabel.GENUINE
    elif tag == "nontarget":
        label = TrialLabel.IMPOSTOR
    else:
        raise ParseError(f"unknown trial label {tag!r} in line {line!r}")
    return Trial(enroll, test, label)


def format_trial(trial: Trial) -> str:
    tag = "target" if trial.label is TrialLabel.GENUINE else "nontarget"
    return f"{trial.enroll_id} {trial.test_id} {tag}"


# ---------------------------------------------------------------------------
# file I/O


def load_embeddings(path: str | Path) -> EmbeddingSet:
    records = []
    dim = None
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = parse_embedding_line(line)
        if dim is None:
            dim = rec.vec.shape[0]
        elif rec.vec.shape[0] != dim:
            raise ParseError(
                f"dimension mismatch in {path}: expected {dim}, "
                f"got {rec.vec.shape[0]} for utt {rec.utt_id!r}"
            )
        records.append(rec)
    return EmbeddingSet(records)


def save_embeddings(emb: EmbeddingSet, path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in emb.records:
            fh.write(format_embedding_record(rec) + "\n")


def load_trials(path: str | Path) -> list[Trial]:
    return [
        parse_trial_line(line)
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]


def save_trials(trials: Iterable[Trial], path: str | Path) -> None:
    with open(path, "w") as fh:
        for t in trials:
            fh.write(format_trial(t) + "\n")


def load_scores(path: str | Path) -> ScoreSet:
    entries = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"score line needs 3 tokens: {line!r}")
        try:
            entries.append((parts[0], parts[1], float(parts[2])))
        except ValueError:
            raise ParseError(f"non-numeric score in line {line!r}") from None
    return ScoreSet(entries)


def save_scores(scores: ScoreSet, path: str | Path) -> None:
    with open(path, "w") as fh:
        for e, t, s in scores.entries:
            fh.write(f"{e} {t} {_fmt(s)}\n")


def load_f0(path: str | Path) -> list[F0Track]:
    tracks = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if "\t" not in line:
            raise ParseError(f"F0 line missing tab separator: {line!r}")
        utt_id, values = line.split("\t", 1)
        try:
            f0 = np.array([float(v) for v in values.split(",")], dtype=float)
        except ValueError:
            raise ParseError(f"non-numeric F0 value in line {line!r}") from None
        tracks.append(F0Track(utt_id, f0))
    return tracks


def save_f0(tracks: Iterable[F0Track], path: str | Path) -> None:
    with open(path, "w") as fh:
        for tr in tracks:
            fh.write(tr.utt_id + "\t" + ",".join(_fmt(v) for v in tr.f0) + "\n")


def load_matrix(path: str | Path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"empty matrix file {path}")
    header = lines[0].split()
    if len(header) != 2:
        raise ParseError(f"matrix header must be 'rows cols', got {lines[0]!r}")
    rows, cols = int(header[0]), int(header[1])
    if len(lines) - 1 != rows:
        raise ParseError(f"matrix file {path}: expected {rows} rows, got {len(lines) - 1}")
    data = np.array([[float(v) for v in ln.split()] for ln in lines[1:]], dtype=float)
    if data.shape != (rows, cols):
        raise ParseError(f"matrix file {path}: shape {data.shape} != ({rows}, {cols})")
    return data


def save_matrix(mat: np.ndarray, path: str | Path) -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"{mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def load_transcripts(path: str | Path) -> dict[str, list[str]]:
    """Transcript files: "<utt_id> w1 w2 ..."; empty transcript allowed."""
    out: dict[str, list[str]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split()
        out[parts[0]] = parts[1:]
    return out


def build_embedding_set(
    utt_ids: Sequence[str],
    spk_ids: Sequence[str],
    vectors: np.ndarray,
    genders: Sequence[Gender] | None = None,
) -> EmbeddingSet:
    if genders is None:
        genders = [Gender.UNKNOWN] * len(utt_ids)
    return EmbeddingSet(
        [
            EmbeddingRecord(u, s, g, v)
            for u, s, g, v in zip(utt_ids, spk_ids, genders, vectors, strict=True)
        ]
    )
