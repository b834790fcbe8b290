"""Split long assembly functions into token-budgeted, block-aligned windows.

Basic blocks are approximated by label-delimited regions of the flat text.
Whole blocks are packed greedily into segments that respect the token budget;
only a single block that alone exceeds the budget is split at instruction
granularity, and every segment produced that way carries a violation flag.
Segment sequences from the source and target sides align positionally by
(function, index).
"""
from __future__ import annotations

from dataclasses import dataclass

from .asmtext import AssemblyUnit, Line, LineKind
from .tokenizer import TokenizerSpec, token_count

END_MARKER = "<end>"
ENTRY_MARKER = "<entry>"


@dataclass(frozen=True)
class Segment:
    function_name: str
    index: int
    lines: tuple[Line, ...]
    token_count: int
    boundary_labels: tuple[str, str]
    budget_violation: bool = False


@dataclass(frozen=True)
class AlignedSegmentPair:
    source_segment: Segment
    target_segment: Segment

    @property
    def alignment_key(self) -> tuple[str, int]:
        return (self.source_segment.function_name, self.source_segment.index)


def segment_text(lines: tuple[Line, ...]) -> str:
    if not lines:
        return ""
    return "\n".join(line.text_normalized for line in lines) + "\n"


def _leading_label(lines: tuple[Line, ...]) -> str:
    if lines and lines[0].kind is LineKind.LABEL:
        return lines[0].text_normalized.rstrip(":")
    return ENTRY_MARKER


def segment_unit(
    unit: AssemblyUnit, spec: TokenizerSpec, budget: int
) -> list[Segment]:
    """Per function, pack label-delimited blocks greedily under the budget."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    segments: list[Segment] = []
    for span in unit.functions:
        fn_lines = unit.lines[span.start_line : span.end_line]

        blocks: list[list[Line]] = []
        for line in fn_lines:
            if line.kind is LineKind.LABEL or not blocks:
                blocks.append([])
            blocks[-1].append(line)

        packed: list[tuple[tuple[Line, ...], bool]] = []
        current: list[Line] = []
        for block in blocks:
            block_tuple = tuple(block)
            merged = tuple(current) + block_tuple
            if current and token_count(segment_text(merged), spec) > budget:
                packed.append((tuple(current), False))
                current = []
            if not current and token_count(segment_text(block_tuple), spec) > budget:
                # oversized block: fall back to instruction granularity
                chunk: list[Line] = []
                for line in block:
                    trial = tuple(chunk) + (line,)
                    if chunk and token_count(segment_text(trial), spec) > budget:
                        packed.append((tuple(chunk), True))
                        chunk = []
                    chunk.append(line)
                if chunk:
                    packed.append((tuple(chunk), True))
                continue
            current.extend(block)
        if current:
            packed.append((tuple(current), False))

        for index, (seg_lines, violation) in enumerate(packed):
            trailing = END_MARKER
            if index + 1 < len(packed):
                trailing = _leading_label(packed[index + 1][0])
            segments.append(
                Segment(
                    function_name=span.name,
                    index=index,
                    lines=seg_lines,
                    token_count=token_count(segment_text(seg_lines), spec),
                    boundary_labels=(_leading_label(seg_lines), trailing),
                    budget_violation=violation,
                )
            )
    return segments


def align_pairs(
    source_segments: list[Segment], target_segments: list[Segment]
) -> tuple[list[AlignedSegmentPair], list[tuple[str, int, str]]]:
    """Pair segments by (function_name, index).

    Count mismatches are not fatal: the common prefix pairs up and the
    unmatched tail is reported as (function, index, side) entries.
    """
    by_fn_source: dict[str, list[Segment]] = {}
    for seg in source_segments:
        by_fn_source.setdefault(seg.function_name, []).append(seg)
    by_fn_target: dict[str, list[Segment]] = {}
    for seg in target_segments:
        by_fn_target.setdefault(seg.function_name, []).append(seg)

    pairs: list[AlignedSegmentPair] = []
    tail: list[tuple[str, int, str]] = []
    for fn_name, src_list in by_fn_source.items():
        tgt_list = by_fn_target.get(fn_name, [])
        src_list = sorted(src_list, key=lambda s: s.index)
        tgt_list = sorted(tgt_list, key=lambda s: s.index)
        common = min(len(src_list), len(tgt_list))
        for i in range(common):
            pairs.append(AlignedSegmentPair(src_list[i], tgt_list[i]))
        for seg in src_list[common:]:
            tail.append((fn_name, seg.index, "source"))
        for seg in tgt_list[common:]:
            tail.append((fn_name, seg.index, "target"))
    for fn_name, tgt_list in by_fn_target.items():
        if fn_name not in by_fn_source:
            for seg in sorted(tgt_list, key=lambda s: s.index):
                tail.append((fn_name, seg.index, "target"))
    return pairs, tail
