"""Assembly-aware tokenizer: extended vocabulary over a byte/char fallback.

The extended vocabulary holds frequent mnemonics and register names so that
instruction atoms like ``ldr`` or ``r1`` stay single tokens.  Matching is
greedy longest-match, constrained to token boundaries: an identifier-edged
entry never matches inside a longer identifier run (``ldr`` does not split
``ldrb``).  Tokenization is lossless: the concatenation of the emitted tokens
always equals the input text.

This models tokenization effects only; it does not integrate with any neural
model's vocabulary.
"""
from __future__ import annotations

import hashlib
from collections import Counter
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .asmtext import AssemblyUnit, OperandKind

_IDENT_CHARS = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_."
)


class Fallback(str, Enum):
    BYTE_LEVEL = "byte"
    CHAR_CLASS = "charclass"


def _sorted_entries(entries: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(set(entries), key=lambda e: (-len(e), e)))


@dataclass(frozen=True)
class TokenizerSpec:
    """Extended vocabulary in greedy longest-match order."""

    isa_scope: frozenset[str] = frozenset()
    extended_entries: tuple[str, ...] = ()
    base_fallback: Fallback = Fallback.BYTE_LEVEL
    version: str = "empty"

    def __post_init__(self) -> None:
        for e in self.extended_entries:
            if not e:
                raise ValueError("empty vocabulary entry")
            if any(c.isspace() for c in e):
                raise ValueError(f"vocabulary entry contains whitespace: {e!r}")
        if len(set(self.extended_entries)) != len(self.extended_entries):
            raise ValueError("duplicate vocabulary entries")
        if self.extended_entries != _sorted_entries(self.extended_entries):
            raise ValueError("entries not in greedy longest-match order")


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    source_len_chars: int


def make_spec(
    entries: Iterable[str],
    isa_scope: Iterable[str] = (),
    fallback: Fallback = Fallback.BYTE_LEVEL,
    version: str | None = None,
) -> TokenizerSpec:
    """Build a spec from entries, sorting them into match order."""
    ordered = _sorted_entries(entries)
    if version is None:
        digest = hashlib.sha256("\n".join(ordered).encode()).hexdigest()[:8]
        version = f"v1-{digest}"
    return TokenizerSpec(
        isa_scope=frozenset(isa_scope),
        extended_entries=ordered,
        base_fallback=fallback,
        version=version,
    )


def build_vocab(corpus: Iterable[AssemblyUnit], top_k: int) -> TokenizerSpec:
    """Vocabulary of the top_k most frequent mnemonics plus all observed registers.

    Counts are aggregated over the whole corpus before selection, so the
    result does not depend on corpus order.  Frequency ties break
    lexicographically.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    mnemonic_counts: Counter[str] = Counter()
    registers: set[str] = set()
    isa_scope: set[str] = set()
    seen_any = False
    for unit in corpus:
        seen_any = True
        isa_scope.add(unit.isa.value)
        for line in unit.lines:
            if line.instruction is None:
                continue
            mnemonic_counts[line.instruction.mnemonic] += 1
            for op in line.instruction.operands:
                if op.kind is OperandKind.REGISTER and op.register:
                    registers.add(op.register)
    if not seen_any:
        raise ValueError("empty corpus")
    ranked = sorted(mnemonic_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    picked = {name for name, _ in ranked[:top_k]}
    return make_spec(picked | registers, isa_scope=isa_scope)


class _Matcher:
    """Greedy longest-match helper; entries bucketed by first character."""

    def __init__(self, spec: TokenizerSpec):
        self.by_first: dict[str, list[str]] = {}
        for entry in spec.extended_entries:  # already longest-first
            self.by_first.setdefault(entry[0], []).append(entry)

    def match(self, text: str, pos: int) -> str | None:
        bucket = self.by_first.get(text[pos])
        if not bucket:
            return None
        for entry in bucket:
            end = pos + len(entry)
            if not text.startswith(entry, pos):
                continue
            if entry[0] in _IDENT_CHARS and pos > 0 and text[pos - 1] in _IDENT_CHARS:
                continue
            if entry[-1] in _IDENT_CHARS and end < len(text) and text[end] in _IDENT_CHARS:
                continue
            return entry
        return None


def _iter_tokens(text: str, spec: TokenizerSpec, matcher: _Matcher) -> Iterator[str]:
    pos = 0
    n = len(text)
    while pos < n:
        hit = matcher.match(text, pos)
        if hit is not None:
            yield hit
            pos += len(hit)
            continue
        if spec.base_fallback is Fallback.BYTE_LEVEL:
            yield text[pos]
            pos += 1
            continue
        # CHAR_CLASS: one token per identifier run / whitespace run / other char
        ch = text[pos]
        if ch in _IDENT_CHARS:
            end = pos
            while end < n and text[end] in _IDENT_CHARS:
                end += 1
        elif ch.isspace():
            end = pos
            while end < n and text[end].isspace():
                end += 1
        else:
            end = pos + 1
        yield text[pos:end]
        pos = end


def tokenize(text: str, spec: TokenizerSpec) -> TokenStream:
    """Tokenize text under the spec; pure and lossless."""
    matcher = _Matcher(spec)
    return TokenStream(
        tokens=tuple(_iter_tokens(text, spec, matcher)),
        source_len_chars=len(text),
    )


def token_count(text: str, spec: TokenizerSpec) -> int:
    return len(tokenize(text, spec).tokens)


def token_reduction_ratio(
    corpus: Iterable[str], base: TokenizerSpec, extended: TokenizerSpec
) -> float:
    """1 - (mean tokens under extended / mean tokens under base)."""
    base_counts: list[int] = []
    ext_counts: list[int] = []
    for text in corpus:
        base_counts.append(token_count(text, base))
        ext_counts.append(token_count(text, extended))
    if not base_counts:
        raise ValueError("empty corpus")
    mean_base = sum(base_counts) / len(base_counts)
    mean_ext = sum(ext_counts) / len(ext_counts)
    if mean_base == 0:
        return 0.0
    return 1.0 - mean_ext / mean_base


_HEADER_PREFIX = "# xisa vocab"


def save_vocab(spec: TokenizerSpec, path: str | Path) -> None:
    """Write the newline-delimited vocabulary file."""
    lines = [
        f"{_HEADER_PREFIX} v1",
        f"version = {spec.version}",
        f"isa_scope = {','.join(sorted(spec.isa_scope))}",
        f"fallback = {spec.base_fallback.value}",
        "---",
    ]
    lines.extend(spec.extended_entries)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocab(path: str | Path) -> TokenizerSpec:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        raise ValueError(f"{path}: not a vocabulary file")
    meta: dict[str, str] = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line.strip() == "---":
            body_start = i + 1
            break
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    if body_start is None:
        raise ValueError(f"{path}: missing --- separator")
    entries = [ln for ln in lines[body_start:] if ln]
    scope = frozenset(s for s in meta.get("isa_scope", "").split(",") if s)
    return TokenizerSpec(
        isa_scope=scope,
        extended_entries=_sorted_entries(entries),
        base_fallback=Fallback(meta.get("fallback", "byte")),
        version=meta.get("version", "unknown"),
    )


#: Base spec used as the no-vocabulary reference point.
BYTE_BASELINE = TokenizerSpec(version="byte-baseline")
