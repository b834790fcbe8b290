"""Parse compiler-emitted assembly into structured units and normalize it.

Parsing is total: no input text fails.  Operands that match none of the
recognized shapes become catch-all Other operands and bump the unit's
``parse_fallbacks`` counter so grammar gaps are visible to callers.
Recognized-but-unstructured shapes (register lists, shift specifiers,
relocation functions like ``%hi(sym)``) are Other operands too, but do not
count as fallbacks.

Only x86 AT&T syntax is parsed on the x86 side; Intel syntax is out of scope.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .core import Isa, IsaName, SyntaxFamily, get_isa

log = logging.getLogger(__name__)


class LineKind(Enum):
    INSTRUCTION = "instruction"
    LABEL = "label"
    DIRECTIVE = "directive"
    COMMENT = "comment"
    BLANK = "blank"


class OperandKind(Enum):
    REGISTER = "register"
    IMMEDIATE = "immediate"
    MEMORY = "memory"
    LABEL_REF = "label_ref"
    OTHER = "other"


@dataclass(frozen=True)
class Operand:
    kind: OperandKind
    text: str
    register: str | None = None
    value: int | None = None
    base: str | None = None
    offset: int | None = None
    index: str | None = None
    scale_or_shift: str | None = None
    recognized: bool = True


@dataclass(frozen=True)
class Instruction:
    mnemonic: str
    operands: tuple[Operand, ...]
    label_refs: frozenset[str]


@dataclass(frozen=True)
class Line:
    kind: LineKind
    text_normalized: str
    instruction: Instruction | None = None

    def __post_init__(self) -> None:
        if (self.kind is LineKind.INSTRUCTION) != (self.instruction is not None):
            raise ValueError("instruction present iff kind is INSTRUCTION")


@dataclass(frozen=True)
class FunctionSpan:
    name: str
    start_line: int  # 0-based index into AssemblyUnit.lines, inclusive
    end_line: int  # exclusive


@dataclass(frozen=True)
class AssemblyUnit:
    isa: IsaName
    source_id: str
    raw_text: str
    lines: tuple[Line, ...]
    functions: tuple[FunctionSpan, ...]
    parse_fallbacks: int = 0


_LABEL_RE = re.compile(r"^([A-Za-z_.$][\w.$]*|\d+):(.*)$")
_INT_RE = re.compile(r"^[+-]?(0[xX][0-9a-fA-F]+|\d+)$")
_SYMBOL_RE = re.compile(r"^[A-Za-z_.$][\w.$+\-]*$")
_ATT_MEM_RE = re.compile(
    r"^(?P<disp>[^(),]*)\((?P<body>%?[\w.$]*(?:,[^)]*)?)\)(?P<tail>.*)$"
)
_REGLIST_RE = re.compile(r"^\{[^}]*\}\^?$")
_SHIFT_RE = re.compile(
    r"^(lsl|lsr|asr|ror|rrx|uxtb|uxth|uxtw|sxtb|sxth|sxtw|lsl\s+#?\d+)\b.*$",
    re.IGNORECASE,
)
_RELOC_RE = re.compile(r"^%\w+\(.*\)$")


def _parse_int(text: str) -> int | None:
    if _INT_RE.match(text):
        return int(text, 0)
    return None


def _squeeze(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def _strip_comment(text: str, leaders: frozenset[str]) -> tuple[str, bool]:
    """Remove a trailing line comment, honoring double-quoted strings.

    Returns (code part, had_comment).
    """
    in_quote = False
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == '"':
            in_quote = not in_quote
        elif not in_quote:
            for leader in leaders:
                if text.startswith(leader, i):
                    return text[:i], True
        i += 1
    return text, False


def _split_operands(text: str) -> list[str]:
    """Split on top-level commas, respecting (), [], {} and quotes."""
    parts: list[str] = []
    depth = 0
    in_quote = False
    current: list[str] = []
    for ch in text:
        if ch == '"':
            in_quote = not in_quote
            current.append(ch)
        elif in_quote:
            current.append(ch)
        elif ch in "([{":
            depth += 1
            current.append(ch)
        elif ch in ")]}":
            depth -= 1
            current.append(ch)
        elif ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return [p.strip() for p in parts]


def _att_operand(text: str, isa: Isa) -> Operand:
    if text.startswith("%"):
        name = text[1:].lower()
        if name in isa.register_set:
            return Operand(OperandKind.REGISTER, text, register=name)
        return Operand(OperandKind.OTHER, text)  # register-shaped, unknown name
    if text.startswith("$"):
        value = _parse_int(text[1:])
        if value is not None:
            return Operand(OperandKind.IMMEDIATE, text, value=value)
        return Operand(OperandKind.OTHER, text)  # $symbol address immediate
    if text.startswith("*"):
        return Operand(OperandKind.OTHER, text)  # indirect call/jump target
    m = _ATT_MEM_RE.match(text)
    if m and not m.group("tail"):
        disp = m.group("disp").strip()
        body = [b.strip() for b in m.group("body").split(",")]
        base = index = None
        scale = None
        ok = True
        if body and body[0]:
            if body[0].startswith("%") and body[0][1:].lower() in isa.register_set:
                base = body[0][1:].lower()
            else:
                ok = False
        if len(body) >= 2 and body[1]:
            if body[1].startswith("%") and body[1][1:].lower() in isa.register_set:
                index = body[1][1:].lower()
            else:
                ok = False
        if len(body) >= 3 and body[2]:
            scale = body[2]
        offset = _parse_int(disp) if disp else None
        if ok and (offset is not None or not disp or _SYMBOL_RE.match(disp)):
            return Operand(
                OperandKind.MEMORY,
                text,
                base=base,
                offset=offset,
                index=index,
                scale_or_shift=scale,
            )
        return Operand(OperandKind.OTHER, text)
    value = _parse_int(text)
    if value is not None:
        return Operand(OperandKind.OTHER, text)  # bare literal (directive context)
    if _SYMBOL_RE.match(text) or re.match(r"^\d+[bf]$", text):
        return Operand(OperandKind.LABEL_REF, text)
    return Operand(OperandKind.OTHER, text, recognized=False)


def _arm_memory(text: str, isa: Isa) -> Operand:
    inner = text[1:].rsplit("]", 1)[0]
    parts = [p.strip() for p in inner.split(",")]
    base = index = None
    offset = None
    scale = None
    ok = bool(parts) and parts[0].lower() in isa.register_set
    if ok:
        base = parts[0].lower()
        rest = parts[1:]
        if rest:
            first = rest[0]
            if first.startswith("#"):
                offset = _parse_int(first[1:])
                ok = offset is not None and len(rest) == 1
            elif first.lower().lstrip("+-") in isa.register_set:
                index = first.lower().lstrip("+-")
                if len(rest) == 2:
                    scale = _squeeze(rest[1])
                    ok = bool(_SHIFT_RE.match(scale))
                else:
                    ok = len(rest) == 1
            else:
                ok = False
    if ok:
        return Operand(
            OperandKind.MEMORY,
            text,
            base=base,
            offset=offset,
            index=index,
            scale_or_shift=scale,
        )
    return Operand(OperandKind.OTHER, text)


def _arm_operand(text: str, isa: Isa) -> Operand:
    low = text.lower()
    if low in isa.register_set:
        return Operand(OperandKind.REGISTER, text, register=low)
    if low.endswith("!") and low[:-1] in isa.register_set:
        return Operand(OperandKind.REGISTER, text, register=low[:-1])  # writeback
    if text.startswith("#"):
        value = _parse_int(text[1:])
        if value is not None:
            return Operand(OperandKind.IMMEDIATE, text, value=value)
        return Operand(OperandKind.OTHER, text)  # #:lower16: relocations etc.
    if text.startswith("["):
        return _arm_memory(text, isa)
    if _REGLIST_RE.match(text):
        return Operand(OperandKind.OTHER, text)  # register list
    if _SHIFT_RE.match(text):
        return Operand(OperandKind.OTHER, text, scale_or_shift=_squeeze(text))
    if text.startswith("="):
        return Operand(OperandKind.OTHER, text)  # ldr =constant pseudo operand
    if low in ("cpsr", "spsr", "apsr", "fpscr") or low.startswith(("cpsr_", "spsr_")):
        return Operand(OperandKind.OTHER, text)
    value = _parse_int(text)
    if value is not None:
        return Operand(OperandKind.IMMEDIATE, text, value=value)
    if _SYMBOL_RE.match(text) or re.match(r"^\d+[bf]$", text):
        return Operand(OperandKind.LABEL_REF, text)
    return Operand(OperandKind.OTHER, text, recognized=False)


def _riscv_operand(text: str, isa: Isa) -> Operand:
    low = text.lower()
    if low in isa.register_set:
        return Operand(OperandKind.REGISTER, text, register=low)
    value = _parse_int(text)
    if value is not None:
        return Operand(OperandKind.IMMEDIATE, text, value=value)
    m = re.match(r"^(?P<disp>.*)\((?P<base>[\w$.]+)\)$", text)
    if m and m.group("base").lower() in isa.register_set:
        disp = m.group("disp").strip()
        offset = _parse_int(disp) if disp else None
        if offset is not None or not disp or _RELOC_RE.match(disp):
            return Operand(
                OperandKind.MEMORY, text, base=m.group("base").lower(), offset=offset
            )
        return Operand(OperandKind.OTHER, text)
    if _RELOC_RE.match(text):
        return Operand(OperandKind.OTHER, text)  # %hi(sym) style relocation
    if _SYMBOL_RE.match(text) or re.match(r"^\d+[bf]$", text):
        return Operand(OperandKind.LABEL_REF, text)
    return Operand(OperandKind.OTHER, text, recognized=False)


_OPERAND_PARSERS = {
    SyntaxFamily.ATT: _att_operand,
    SyntaxFamily.ARM_UAL: _arm_operand,
    SyntaxFamily.RISCV_STD: _riscv_operand,
}


def _parse_instruction(code: str, isa: Isa) -> tuple[Instruction, bool]:
    """Parse one instruction line.  Returns (instruction, had_fallback)."""
    parts = code.split(None, 1)
    mnemonic = parts[0].lower()
    operand_parser = _OPERAND_PARSERS[isa.syntax_family]
    operands: list[Operand] = []
    fallback = False
    if len(parts) > 1 and parts[1].strip():
        for raw in _split_operands(parts[1]):
            op = operand_parser(_squeeze(raw), isa)
            operands.append(op)
            if not op.recognized:
                fallback = True
    label_refs = frozenset(
        op.text for op in operands if op.kind is OperandKind.LABEL_REF
    )
    return Instruction(mnemonic, tuple(operands), label_refs), fallback


_FUNC_TYPE_RE = re.compile(
    r"^\.type\s+([\w.$]+)\s*,\s*[@%]function", re.IGNORECASE
)


def parse_assembly(
    text: str, isa: Isa | IsaName | str, source_id: str = ""
) -> AssemblyUnit:
    """Parse assembly text into a structured unit.  Never raises on content."""
    isa_obj = isa if isinstance(isa, Isa) else get_isa(isa)
    lines: list[Line] = []
    fallbacks = 0
    pending_functions: list[tuple[str, int]] = []  # (name, start index)
    spans: list[FunctionSpan] = []
    declared: dict[str, int] = {}  # .type name,@function seen, awaiting label

    raw_lines = text.splitlines()
    for raw in raw_lines:
        code, had_comment = _strip_comment(raw, isa_obj.comment_leaders)
        stripped = code.strip()
        idx = len(lines)
        if not stripped:
            kind = LineKind.COMMENT if had_comment else LineKind.BLANK
            normalized = _squeeze(raw) if had_comment else ""
            lines.append(Line(kind, normalized))
            continue
        label_match = _LABEL_RE.match(stripped)
        if label_match and not label_match.group(2).strip():
            name = label_match.group(1)
            lines.append(Line(LineKind.LABEL, f"{name}:"))
            if name in declared:
                if pending_functions:
                    prev_name, prev_start = pending_functions.pop()
                    spans.append(FunctionSpan(prev_name, prev_start, idx))
                pending_functions.append((name, idx))
                del declared[name]
            continue
        if label_match:
            # label with trailing code on the same line: keep text, flag gap
            lines.append(Line(LineKind.LABEL, _squeeze(stripped)))
            fallbacks += 1
            continue
        if stripped.startswith("."):
            lines.append(Line(LineKind.DIRECTIVE, _squeeze(stripped)))
            type_match = _FUNC_TYPE_RE.match(_squeeze(stripped))
            if type_match:
                declared[type_match.group(1)] = idx
            continue
        insn, had_fallback = _parse_instruction(_squeeze(stripped), isa_obj)
        if had_fallback:
            fallbacks += 1
        rendered = insn.mnemonic
        if insn.operands:
            rendered += " " + ", ".join(op.text for op in insn.operands)
        lines.append(Line(LineKind.INSTRUCTION, rendered, insn))

    if pending_functions:
        name, start = pending_functions.pop()
        spans.append(FunctionSpan(name, start, len(lines)))

    return AssemblyUnit(
        isa=isa_obj.name,
        source_id=source_id,
        raw_text=text,
        lines=tuple(lines),
        functions=tuple(spans),
        parse_fallbacks=fallbacks,
    )


@dataclass(frozen=True)
class NormalizationPolicy:
    """Controls what normalize() drops before metric computation."""

    strip_comments: bool = True
    drop_blank: bool = True
    volatile_directives: frozenset[str] = frozenset({".file", ".ident"})

    @classmethod
    def raw(cls) -> "NormalizationPolicy":
        """Keep everything; only whitespace is canonicalized."""
        return cls(
            strip_comments=False, drop_blank=False, volatile_directives=frozenset()
        )


DEFAULT_POLICY = NormalizationPolicy()


def normalize(unit: AssemblyUnit, policy: NormalizationPolicy = DEFAULT_POLICY) -> str:
    """Deterministic text for edit distance / exact match.

    Comments stripped, blank lines dropped, whitespace canonicalized, volatile
    directives (.file/.ident) removed.  Labels, other directives and
    instruction text survive byte-for-byte after whitespace canonicalization.
    """
    out: list[str] = []
    for line in unit.lines:
        if line.kind is LineKind.COMMENT:
            if not policy.strip_comments:
                out.append(line.text_normalized)
        elif line.kind is LineKind.BLANK:
            if not policy.drop_blank:
                out.append("")
        elif line.kind is LineKind.DIRECTIVE:
            name = line.text_normalized.split(None, 1)[0]
            if name not in policy.volatile_directives:
                out.append(line.text_normalized)
        else:
            out.append(line.text_normalized)
    if not out:
        return ""
    return "\n".join(out) + "\n"


# --- static register read/write profile ------------------------------------

@dataclass
class RegisterProfile:
    writes: int = 0
    reads: int = 0
    first_write_line: int | None = None
    overwrite_without_read_lines: list[int] = field(default_factory=list)


# Mnemonics whose written operand is not also read (straight moves and loads).
_PURE_WRITE_PREFIXES = ("mov", "ldr", "lw", "ld", "lb", "lh", "li", "lui", "la",
                        "mv", "mvn", "lea", "pop", "set")

# Registers implicitly read / written by calls, per ISA.
_CALL_EFFECTS: dict[IsaName, tuple[tuple[str, ...], tuple[str, ...]]] = {
    IsaName.X86_64: (("rdi", "rsi", "rdx", "rcx", "r8", "r9"), ("rax", "rdx")),
    IsaName.ARMV5: (("r0", "r1", "r2", "r3"), ("r0", "r1", "r14")),
    IsaName.ARMV8: (tuple(f"x{i}" for i in range(8)), ("x0", "x1", "x30")),
    IsaName.RISCV64: (tuple(f"a{i}" for i in range(8)), ("a0", "a1", "ra")),
}

_CALL_MNEMONICS = {"call", "bl", "blx", "blr", "jal", "jalr"}

_X86_SUBREG_CANON: dict[str, str] = {}
for _i, (_r64, _r32, _r16, _r8) in enumerate(
    zip(
        ["rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi"],
        ["eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi"],
        ["ax", "cx", "dx", "bx", "sp", "bp", "si", "di"],
        ["al", "cl", "dl", "bl", "spl", "bpl", "sil", "dil"],
    )
):
    for _alias in (_r64, _r32, _r16, _r8):
        _X86_SUBREG_CANON[_alias] = _r64
for _r8h, _r64 in zip(["ah", "ch", "dh", "bh"], ["rax", "rcx", "rdx", "rbx"]):
    _X86_SUBREG_CANON[_r8h] = _r64
for _i in range(8, 16):
    for _suffix in ("", "d", "w", "b"):
        _X86_SUBREG_CANON[f"r{_i}{_suffix}"] = f"r{_i}"

_ARM_ALIAS_CANON = {"fp": "r11", "ip": "r12", "sp": "r13", "lr": "r14", "pc": "r15"}
_ARMV8_ALIAS_CANON = {"fp": "x29", "lr": "x30"}
_RISCV_ABI_CANON = {
    "zero": "x0", "ra": "x1", "sp": "x2", "gp": "x3", "tp": "x4",
    "t0": "x5", "t1": "x6", "t2": "x7", "s0": "x8", "fp": "x8", "s1": "x9",
    "a0": "x10", "a1": "x11", "a2": "x12", "a3": "x13", "a4": "x14",
    "a5": "x15", "a6": "x16", "a7": "x17", "s2": "x18", "s3": "x19",
    "s4": "x20", "s5": "x21", "s6": "x22", "s7": "x23", "s8": "x24",
    "s9": "x25", "s10": "x26", "s11": "x27", "t3": "x28", "t4": "x29",
    "t5": "x30", "t6": "x31",
}


def canonical_register(name: str, isa: IsaName) -> str:
    name = name.lower()
    if isa is IsaName.X86_64:
        return _X86_SUBREG_CANON.get(name, name)
    if isa is IsaName.ARMV5:
        return _ARM_ALIAS_CANON.get(name, name)
    if isa is IsaName.ARMV8:
        if name in _ARMV8_ALIAS_CANON:
            return _ARMV8_ALIAS_CANON[name]
        if name.startswith("w") and name[1:].isdigit():
            return "x" + name[1:]
        return name
    return _RISCV_ABI_CANON.get(name, name)


def _role_table_path(isa: IsaName) -> str:
    return f"roles_{isa.value}.txt"


def load_role_table(isa: IsaName | str) -> dict[str, tuple[int, ...]]:
    """Load the per-ISA operand role table (which operand positions are written).

    File format, one entry per line: ``mnemonic writes=<comma separated
    indices>`` where -1 means the last operand.  Blank lines and ``#`` comments
    are ignored.
    """
    name = _role_table_path(IsaName(isa))
    table: dict[str, tuple[int, ...]] = {}
    text = resources.files("xisa.data").joinpath(name).read_text(encoding="utf-8")
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        mnemonic, _, spec_part = line.partition(" ")
        spec_part = spec_part.strip()
        if not spec_part.startswith("writes="):
            raise ValueError(f"{name}: bad role line {raw!r}")
        idx_text = spec_part[len("writes="):]
        indices = tuple(int(i) for i in idx_text.split(",") if i != "")
        table[mnemonic.lower()] = indices
    return table


_ROLE_CACHE: dict[IsaName, dict[str, tuple[int, ...]]] = {}


def _roles_for(isa: IsaName) -> dict[str, tuple[int, ...]]:
    if isa not in _ROLE_CACHE:
        _ROLE_CACHE[isa] = load_role_table(isa)
    return _ROLE_CACHE[isa]


def _operand_registers(op: Operand, isa: IsaName) -> list[str]:
    regs: list[str] = []
    if op.kind is OperandKind.REGISTER and op.register:
        regs.append(canonical_register(op.register, isa))
    elif op.kind is OperandKind.MEMORY:
        if op.base:
            regs.append(canonical_register(op.base, isa))
        if op.index:
            regs.append(canonical_register(op.index, isa))
    elif op.kind is OperandKind.OTHER and op.text.startswith("{"):
        for piece in op.text.strip("{}^ ").split(","):
            name = piece.strip().lower()
            if "-" in name:  # range like r4-r6
                lo, _, hi = name.partition("-")
                lo_c = canonical_register(lo.strip(), isa)
                hi_c = canonical_register(hi.strip(), isa)
                if lo_c[1:].isdigit() and hi_c[1:].isdigit():
                    prefix = lo_c[0]
                    for i in range(int(lo_c[1:]), int(hi_c[1:]) + 1):
                        regs.append(f"{prefix}{i}")
                continue
            if name:
                regs.append(canonical_register(name, isa))
    return regs


def static_register_profile(unit: AssemblyUnit) -> dict[str, RegisterProfile]:
    """Per-register read/write counts plus overwrite-without-read flags.

    Straight-line approximation: control flow is ignored; a register written
    twice with no intervening read is recorded at the second write's 1-based
    line number.  Calls implicitly read argument registers and write return
    registers for the unit's ISA.
    """
    roles = _roles_for(unit.isa)
    profiles: dict[str, RegisterProfile] = {}
    pending_write: dict[str, bool] = {}

    def prof(reg: str) -> RegisterProfile:
        if reg not in profiles:
            profiles[reg] = RegisterProfile()
        return profiles[reg]

    def do_read(reg: str) -> None:
        p = prof(reg)
        p.reads += 1
        pending_write[reg] = False

    def do_write(reg: str, lineno: int) -> None:
        p = prof(reg)
        if pending_write.get(reg):
            p.overwrite_without_read_lines.append(lineno)
        p.writes += 1
        if p.first_write_line is None:
            p.first_write_line = lineno
        pending_write[reg] = True

    for lineno, line in enumerate(unit.lines, start=1):
        insn = line.instruction
        if insn is None:
            continue
        mnemonic = insn.mnemonic
        n_ops = len(insn.operands)

        if mnemonic in _CALL_MNEMONICS:
            arg_regs, ret_regs = _CALL_EFFECTS[unit.isa]
            for r in arg_regs:
                if r in profiles or pending_write.get(r):
                    do_read(r)
            for r in ret_regs:
                # calls define return registers, but an unused return value is
                # normal; never arm the overwrite detector from a call site
                p = prof(r)
                p.writes += 1
                if p.first_write_line is None:
                    p.first_write_line = lineno
                pending_write[r] = False
            continue

        if mnemonic in roles:
            write_indices = {i % n_ops for i in roles[mnemonic] if n_ops}
        elif n_ops == 0:
            write_indices = set()
        else:
            write_indices = {0}
            log.debug(
                "no role entry for %s/%s; assuming first operand written",
                unit.isa.value,
                mnemonic,
            )
        pure_write = mnemonic.startswith(_PURE_WRITE_PREFIXES)

        writes: list[str] = []
        for i, op in enumerate(insn.operands):
            op_regs = _operand_registers(op, unit.isa)
            if i in write_indices and op.kind is OperandKind.REGISTER:
                writes.extend(op_regs)
                if not pure_write:
                    for r in op_regs:
                        do_read(r)
            elif i in write_indices and op.kind is OperandKind.OTHER and op.text.startswith("{"):
                writes.extend(op_regs)  # pop-style register list
            else:
                for r in op_regs:
                    do_read(r)
        for r in writes:
            do_write(r, lineno)

    return profiles


def function_lines(unit: AssemblyUnit, span: FunctionSpan) -> tuple[Line, ...]:
    return unit.lines[span.start_line : span.end_line]
