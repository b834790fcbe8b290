from __future__ import annotations

import pytest

from xisa.core import (
    GenerationParams,
    IsaName,
    get_isa,
    isa_registry,
    load_config,
    parse_config,
)
from xisa.errors import ConfigError


def test_registry_has_four_isas():
    names = [isa.name for isa in isa_registry()]
    assert names == [IsaName.X86_64, IsaName.ARMV5, IsaName.ARMV8, IsaName.RISCV64]


def test_armv5_register_table():
    regs = set(get_isa(IsaName.ARMV5).register_names)
    for i in range(16):
        assert f"r{i}" in regs
    assert {"fp", "sp", "lr", "pc"} <= regs


def test_x86_includes_subregister_aliases():
    regs = set(get_isa(IsaName.X86_64).register_names)
    assert "rax" in regs and "eax" in regs
    assert "al" in regs and "r8d" in regs


def test_riscv_abi_aliasing():
    regs = set(get_isa(IsaName.RISCV64).register_names)
    assert "a0" in regs and "x10" in regs


def test_registry_is_pure():
    assert isa_registry() == isa_registry()
    a = get_isa("armv5")
    b = get_isa(IsaName.ARMV5)
    assert a is b


def test_register_tables_duplicate_free():
    for isa in isa_registry():
        assert len(set(isa.register_names)) == len(isa.register_names)
        assert isa.comment_leaders


MINIMAL = """
[x86_64]
compile = gcc -S {opt} {input} -o {output}

[armv5]
compile = clang --target=armv5te-linux-gnueabi -S {input} -o {output}
"""


def test_parse_config_defaults_opt_level():
    cfg = parse_config(MINIMAL)
    assert cfg.optimization_level == "-O0"
    assert set(cfg.entries) == {IsaName.X86_64, IsaName.ARMV5}


def test_zero_timeout_rejected_naming_field():
    bad = MINIMAL + "\n[global]\ntimeout_run = 0\n"
    with pytest.raises(ConfigError, match="timeout_run"):
        parse_config(bad)


def test_empty_config_is_parse_failure(tmp_path):
    empty = tmp_path / "empty.cfg"
    empty.write_text("")
    with pytest.raises(ConfigError, match="parse failure"):
        load_config(empty)


def test_unknown_isa_section_rejected():
    with pytest.raises(ConfigError, match="unknown ISA"):
        parse_config(MINIMAL + "\n[sparc]\ncompile = cc\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="frobnicate"):
        parse_config(MINIMAL + "\n[global]\nfrobnicate = 1\n")


def test_config_roundtrip(tmp_path):
    source = tmp_path / "t.cfg"
    source.write_text(
        MINIMAL + "\n[global]\ntimeout_compile = 12.5\ntimeout_run = 3.0\n"
    )
    cfg = load_config(source)
    again = parse_config(cfg.to_text())
    assert again.entries == cfg.entries
    assert again.optimization_level == cfg.optimization_level
    assert again.timeout_compile == cfg.timeout_compile
    assert again.timeout_run == cfg.timeout_run
    assert again.prompt_preamble == cfg.prompt_preamble


def test_assemble_link_is_multiline(tmp_path):
    text = MINIMAL + (
        "\n[riscv64]\ncompile = clang -S {input} -o {output}\n"
        "assemble_link =\n"
        "    clang -c {candidate} -o {tmpdir}/c.o\n"
        "    ld.lld -o {output} {tmpdir}/c.o\n"
    )
    cfg = parse_config(text)
    assert len(cfg.entries[IsaName.RISCV64].assemble_link) == 2


def test_missing_command_named_in_error():
    cfg = parse_config(MINIMAL)
    with pytest.raises(ConfigError, match="assemble_link"):
        cfg.require(IsaName.ARMV5, "assemble_link")
    with pytest.raises(ConfigError, match="riscv64"):
        cfg.commands(IsaName.RISCV64)


def test_generation_params_validation():
    params = GenerationParams()
    assert params.num_beams == 1
    assert params.sampling_enabled is False
    assert params.context_window == 16384
    with pytest.raises(ValueError):
        GenerationParams(num_beams=0)
    with pytest.raises(ValueError):
        GenerationParams(max_new_tokens=0)


def test_branch_mnemonics_populated():
    assert "jmp" in get_isa(IsaName.X86_64).branch_mnemonics
    assert {"b", "bl", "beq"} <= get_isa(IsaName.ARMV5).branch_mnemonics
    assert "b.eq" in get_isa(IsaName.ARMV8).branch_mnemonics
    assert {"beqz", "jal"} <= get_isa(IsaName.RISCV64).branch_mnemonics


def test_environment_variable_expansion(monkeypatch):
    monkeypatch.setenv("XISA_TEST_ROOT", "/opt/cross/bin")
    cfg = parse_config(
        "[x86_64]\ncompile = $XISA_TEST_ROOT/gcc -S {input} -o {output}\n"
    )
    assert cfg.entries[IsaName.X86_64].compile.startswith("/opt/cross/bin/gcc")
