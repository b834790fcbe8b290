"""Shared domain types: ISA registry, toolchain configuration, generation parameters.

The toolchain config is a plain INI file, one section per ISA, holding command
templates with ``{input}``/``{output}`` style placeholders.  Nothing here runs
a tool; existence of the referenced executables is checked lazily at first use.
"""
from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import ConfigError


class IsaName(str, Enum):
    X86_64 = "x86_64"
    ARMV5 = "armv5"
    ARMV8 = "armv8"
    RISCV64 = "riscv64"

    def __str__(self) -> str:  # argparse/logging friendliness
        return self.value


class SyntaxFamily(str, Enum):
    ATT = "att"
    ARM_UAL = "arm_ual"
    RISCV_STD = "riscv_std"


@dataclass(frozen=True)
class Isa:
    name: IsaName
    syntax_family: SyntaxFamily
    comment_leaders: frozenset[str]
    register_names: tuple[str, ...]
    branch_mnemonics: frozenset[str]

    def __post_init__(self) -> None:
        if not self.register_names:
            raise ValueError(f"{self.name}: register table is empty")
        if len(set(self.register_names)) != len(self.register_names):
            raise ValueError(f"{self.name}: duplicate register names")
        if not self.comment_leaders:
            raise ValueError(f"{self.name}: no comment leaders")

    @property
    def register_set(self) -> frozenset[str]:
        return frozenset(self.register_names)


def _x86_registers() -> tuple[str, ...]:
    names: list[str] = []
    base64 = ["rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi"]
    base32 = ["eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi"]
    base16 = ["ax", "cx", "dx", "bx", "sp", "bp", "si", "di"]
    base8 = ["al", "cl", "dl", "bl", "spl", "bpl", "sil", "dil"]
    base8h = ["ah", "ch", "dh", "bh"]
    names += base64 + base32 + base16 + base8 + base8h
    for i in range(8, 16):
        names += [f"r{i}", f"r{i}d", f"r{i}w", f"r{i}b"]
    names.append("rip")
    return tuple(names)


def _armv5_registers() -> tuple[str, ...]:
    return tuple(f"r{i}" for i in range(16)) + ("fp", "ip", "sp", "lr", "pc")


def _armv8_registers() -> tuple[str, ...]:
    names = [f"x{i}" for i in range(31)] + [f"w{i}" for i in range(31)]
    names += ["sp", "wsp", "xzr", "wzr", "fp", "lr"]
    return tuple(names)


def _riscv_registers() -> tuple[str, ...]:
    names = [f"x{i}" for i in range(32)]
    names += ["zero", "ra", "sp", "gp", "tp", "fp"]
    names += [f"t{i}" for i in range(7)]
    names += [f"s{i}" for i in range(12)]
    names += [f"a{i}" for i in range(8)]
    return tuple(names)


_ARM_CONDITIONS = (
    "eq", "ne", "cs", "cc", "mi", "pl", "vs", "vc",
    "hi", "ls", "ge", "lt", "gt", "le", "al",
)

_REGISTRY: dict[IsaName, Isa] = {
    IsaName.X86_64: Isa(
        name=IsaName.X86_64,
        syntax_family=SyntaxFamily.ATT,
        comment_leaders=frozenset({"#", ";"}),
        register_names=_x86_registers(),
        branch_mnemonics=frozenset(
            {"jmp", "call", "ret"}
            | {
                "j" + cc
                for cc in (
                    "e", "ne", "z", "nz", "l", "g", "le", "ge", "a", "b",
                    "ae", "be", "s", "ns", "o", "no", "c", "nc", "p", "np",
                )
            }
        ),
    ),
    IsaName.ARMV5: Isa(
        name=IsaName.ARMV5,
        syntax_family=SyntaxFamily.ARM_UAL,
        comment_leaders=frozenset({"@", "//", ";"}),
        register_names=_armv5_registers(),
        branch_mnemonics=frozenset(
            {"b", "bl", "bx", "blx"} | {"b" + cc for cc in _ARM_CONDITIONS}
        ),
    ),
    IsaName.ARMV8: Isa(
        name=IsaName.ARMV8,
        syntax_family=SyntaxFamily.ARM_UAL,
        comment_leaders=frozenset({"//", "@", ";"}),
        register_names=_armv8_registers(),
        branch_mnemonics=frozenset(
            {"b", "bl", "br", "blr", "ret", "cbz", "cbnz", "tbz", "tbnz"}
            | {"b." + cc for cc in _ARM_CONDITIONS}
        ),
    ),
    IsaName.RISCV64: Isa(
        name=IsaName.RISCV64,
        syntax_family=SyntaxFamily.RISCV_STD,
        comment_leaders=frozenset({"#", ";"}),
        register_names=_riscv_registers(),
        branch_mnemonics=frozenset(
            {
                "beq", "bne", "blt", "bge", "bltu", "bgeu",
                "beqz", "bnez", "blez", "bgez", "bltz", "bgtz",
                "j", "jal", "jalr", "jr", "call", "tail", "ret",
            }
        ),
    ),
}


def isa_registry() -> list[Isa]:
    """The four built-in ISAs, in a fixed order."""
    return [_REGISTRY[n] for n in IsaName]


def get_isa(name: IsaName | str) -> Isa:
    return _REGISTRY[IsaName(name)]


@dataclass(frozen=True)
class GenerationParams:
    """Decoding knobs forwarded to transpiler backends.

    With sampling disabled (the default), a conforming backend must return
    identical candidate text for identical requests.
    """

    num_beams: int = 1
    max_new_tokens: int = 8192
    sampling_enabled: bool = False
    context_window: int = 16384

    def __post_init__(self) -> None:
        if self.num_beams < 1:
            raise ValueError("num_beams must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.context_window < 1:
            raise ValueError("context_window must be >= 1")


@dataclass(frozen=True)
class IsaCommands:
    """Command templates for one ISA.

    ``compile`` turns a C file into assembly ({input}, {output}, {opt}).
    ``assemble_link`` is a sequence of commands that turns a candidate .s plus
    the test driver source into a runnable binary ({candidate}, {test_src},
    {output}, {tmpdir}, {data}, {python}, {opt}).
    ``emulate`` runs the binary ({input}); a bare ``{input}`` means native
    execution.
    """

    compile: str = ""
    assemble_link: tuple[str, ...] = ()
    emulate: str = ""


_GLOBAL_SECTION = "global"
_KNOWN_GLOBAL_KEYS = {
    "opt_level",
    "timeout_compile",
    "timeout_run",
    "prompt_preamble",
    "prompt_version",
}
_KNOWN_ISA_KEYS = {"compile", "assemble_link", "emulate"}

DEFAULT_PROMPT_PREAMBLE = (
    "Translate the following x86-64 assembly into equivalent assembly for the "
    "target architecture. Reply with assembly only."
)


@dataclass(frozen=True)
class ToolchainConfig:
    """Validated per-ISA toolchain command set plus run parameters."""

    entries: dict[IsaName, IsaCommands] = field(default_factory=dict)
    optimization_level: str = "-O0"
    timeout_compile: float = 30.0
    timeout_run: float = 10.0
    prompt_preamble: str = DEFAULT_PROMPT_PREAMBLE
    prompt_version: str = "v1"
    source_path: str = ""

    def __post_init__(self) -> None:
        if self.timeout_compile <= 0:
            raise ConfigError("timeout_compile must be > 0")
        if self.timeout_run <= 0:
            raise ConfigError("timeout_run must be > 0")

    def commands(self, isa: IsaName | str) -> IsaCommands:
        name = IsaName(isa)
        try:
            return self.entries[name]
        except KeyError:
            raise ConfigError(f"no toolchain entry for ISA {name.value!r}") from None

    def require(self, isa: IsaName | str, *fields_needed: str) -> IsaCommands:
        """Fetch commands for ``isa`` insisting the named fields are non-empty."""
        cmds = self.commands(isa)
        for f in fields_needed:
            value = getattr(cmds, f)
            if not value:
                raise ConfigError(
                    f"toolchain entry for {IsaName(isa).value!r} lacks {f!r}"
                )
        return cmds

    def to_text(self) -> str:
        """Serialize back to the INI form accepted by load_config."""
        cp = configparser.RawConfigParser()
        cp.add_section(_GLOBAL_SECTION)
        cp.set(_GLOBAL_SECTION, "opt_level", self.optimization_level)
        cp.set(_GLOBAL_SECTION, "timeout_compile", repr(self.timeout_compile))
        cp.set(_GLOBAL_SECTION, "timeout_run", repr(self.timeout_run))
        cp.set(_GLOBAL_SECTION, "prompt_preamble", self.prompt_preamble)
        cp.set(_GLOBAL_SECTION, "prompt_version", self.prompt_version)
        for name, cmds in self.entries.items():
            section = name.value
            cp.add_section(section)
            if cmds.compile:
                cp.set(section, "compile", cmds.compile)
            if cmds.assemble_link:
                cp.set(section, "assemble_link", "\n" + "\n".join(cmds.assemble_link))
            if cmds.emulate:
                cp.set(section, "emulate", cmds.emulate)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_config(text: str, source_path: str = "") -> ToolchainConfig:
    """Parse config text.  Environment variables in commands are expanded."""
    cp = configparser.RawConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    if not cp.sections():
        raise ConfigError("config parse failure: empty config")

    opt_level = "-O0"
    timeout_compile = 30.0
    timeout_run = 10.0
    preamble = DEFAULT_PROMPT_PREAMBLE
    preamble_version = "v1"
    if cp.has_section(_GLOBAL_SECTION):
        for key in cp.options(_GLOBAL_SECTION):
            if key not in _KNOWN_GLOBAL_KEYS:
                raise ConfigError(f"unknown key {key!r} in [global]")
        opt_level = cp.get(_GLOBAL_SECTION, "opt_level", fallback=opt_level)
        preamble = cp.get(_GLOBAL_SECTION, "prompt_preamble", fallback=preamble)
        preamble_version = cp.get(
            _GLOBAL_SECTION, "prompt_version", fallback=preamble_version
        )
        for key, current in (
            ("timeout_compile", timeout_compile),
            ("timeout_run", timeout_run),
        ):
            raw = cp.get(_GLOBAL_SECTION, key, fallback=None)
            if raw is not None:
                try:
                    value = float(raw)
                except ValueError:
                    raise ConfigError(f"{key} is not a number: {raw!r}") from None
                if value <= 0:
                    raise ConfigError(f"{key} must be > 0, got {raw}")
                if key == "timeout_compile":
                    timeout_compile = value
                else:
                    timeout_run = value

    entries: dict[IsaName, IsaCommands] = {}
    for section in cp.sections():
        if section == _GLOBAL_SECTION:
            continue
        try:
            isa = IsaName(section)
        except ValueError:
            raise ConfigError(f"unknown ISA section [{section}]") from None
        for key in cp.options(section):
            if key not in _KNOWN_ISA_KEYS:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
        compile_cmd = os.path.expandvars(cp.get(section, "compile", fallback="")).strip()
        al_raw = os.path.expandvars(cp.get(section, "assemble_link", fallback=""))
        assemble_link = tuple(
            line.strip() for line in al_raw.splitlines() if line.strip()
        )
        emulate = os.path.expandvars(cp.get(section, "emulate", fallback="")).strip()
        entries[isa] = IsaCommands(
            compile=compile_cmd, assemble_link=assemble_link, emulate=emulate
        )

    return ToolchainConfig(
        entries=entries,
        optimization_level=opt_level,
        timeout_compile=timeout_compile,
        timeout_run=timeout_run,
        prompt_preamble=preamble,
        prompt_version=preamble_version,
        source_path=source_path,
    )


def load_config(path: str | Path) -> ToolchainConfig:
    """Load and validate a toolchain config file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    if not text.strip():
        raise ConfigError(f"config parse failure: {p} is empty")
    return parse_config(text, source_path=str(p))
