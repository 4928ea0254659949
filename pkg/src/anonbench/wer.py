"""Word-level transcript alignment, WER, and mispronunciation-only WER.

Alignment is minimum edit distance with unit costs. Because optimal
alignments are not unique, ties are broken deterministically: diagonal
moves (correct/substitution) win over deletions, which win over
insertions, giving a reproducible op string.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence


class Op(str, Enum):
    CORRECT = "C"
    SUBSTITUTION = "S"
    DELETION = "D"
    INSERTION = "I"


@dataclass(frozen=True)
class AlignedOp:
    op: Op
    ref_word: str | None
    hyp_word: str | None


@dataclass
class Alignment:
    ops: list[AlignedOp]

    def counts(self) -> dict[Op, int]:
        out = {op: 0 for op in Op}
        for step in self.ops:
            out[step.op] += 1
        return out

    def ref_words(self) -> list[str]:
        return [s.ref_word for s in self.ops if s.ref_word is not None]

    def hyp_words(self) -> list[str]:
        return [s.hyp_word for s in self.ops if s.hyp_word is not None]

    def op_string(self) -> str:
        return " ".join(s.op.value for s in self.ops)


def tokenize(text: str) -> list[str]:
    """Whitespace split with uppercase normalization."""
    return text.upper().split()


def align(ref: Sequence[str], hyp: Sequence[str]) -> Alignment:
    n, m = len(ref), len(hyp)
    # dp[i][j] = edit distance between ref[:i] and hyp[:j]
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = i
    for j in range(1, m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        row, prev = dp[i], dp[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ref[i - 1] != hyp[j - 1])
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)
    # backtrace, preferring diagonal, then deletion, then insertion
    ops: list[AlignedOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            diag_cost = dp[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            if dp[i][j] == diag_cost:
                op = Op.CORRECT if ref[i - 1] == hyp[j - 1] else Op.SUBSTITUTION
                ops.append(AlignedOp(op, ref[i - 1], hyp[j - 1]))
                i, j = i - 1, j - 1
                continue
        if i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            ops.append(AlignedOp(Op.DELETION, ref[i - 1], None))
            i -= 1
            continue
        ops.append(AlignedOp(Op.INSERTION, None, hyp[j - 1]))
        j -= 1
    ops.reverse()
    return Alignment(ops)


def edit_distance(alignment: Alignment) -> int:
    c = alignment.counts()
    return c[Op.SUBSTITUTION] + c[Op.DELETION] + c[Op.INSERTION]


def wer(alignment: Alignment) -> float:
    """(S + D + I) / reference length; may exceed 1."""
    n_ref = len(alignment.ref_words())
    if n_ref == 0:
        raise ValueError("WER undefined for an empty reference")
    return edit_distance(alignment) / n_ref


def mispronunciation_wer(alignment: Alignment, decoding_error_mask: Sequence[bool]) -> float:
    """WER after invalidating errors attributed to the recognizer.

    Masked error ops (S/D/I) are relabeled as correct before recounting.
    Masking a correct op is rejected: only errors can be invalidated.
    """
    if len(decoding_error_mask) != len(alignment.ops):
        raise ValueError("mask length must equal the number of alignment ops")
    relabeled = []
    for step, masked in zip(alignment.ops, decoding_error_mask):
        if masked:
            if step.op is Op.CORRECT:
                raise ValueError("mask marks a correct op; only errors can be invalidated")
            relabeled.append(AlignedOp(Op.CORRECT, step.ref_word, step.hyp_word))
        else:
            relabeled.append(step)
    return wer(Alignment(relabeled))


def corpus_wer(
    refs: dict[str, list[str]],
    hyps: dict[str, list[str]],
    masks: dict[str, list[int]] | None = None,
    per_utterance: bool = False,
) -> dict:
    """Score a whole corpus; pooled by default, averaged with per_utterance.

    masks maps utt_id to op indices annotated as ASR decoding errors.
    """
    missing = set(refs) - set(hyps)
    if missing:
        raise ValueError(f"hypotheses missing for utterances: {sorted(missing)[:5]}")
    total_err = 0
    total_ref = 0
    rates = []
    per_utt = {}
    for utt_id, ref in refs.items():
        alignment = align(ref, hyps[utt_id])
        if masks is not None:
            mask = [False] * len(alignment.ops)
            for op_idx in masks.get(utt_id, []):
                mask[op_idx] = True
            r = mispronunciation_wer(alignment, mask)
            errs = round(r * len(ref))
        else:
            errs = edit_distance(alignment)
            r = errs / len(ref) if ref else 0.0
        total_err += errs
        total_ref += len(ref)
        rates.append(r)
        per_utt[utt_id] = r
    if total_ref == 0:
        raise ValueError("corpus has no reference words")
    overall = sum(rates) / len(rates) if per_utterance else total_err / total_ref
    return {"wer": overall, "per_utt": per_utt}


def load_mask_file(path) -> dict[str, list[int]]:
    """Sidecar format: one "<utt_id> <op_index>" pair per line."""
    out: dict[str, list[int]] = {}
    from pathlib import Path

    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"bad mask line {line!r}")
        out.setdefault(parts[0], []).append(int(parts[1]))
    return out
