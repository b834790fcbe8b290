#!/usr/bin/env python3
"""Regenerate the checked-in ARM assembly corpus from the C fixtures.

Maintainer tool: the .s files under tests/fixtures/arm_corpus are frozen in
the repo so tokenizer tests have a stable oracle; rerun this only when the
C fixtures change, and re-freeze the expected mnemonic counts in the tests.
"""
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
SRC = ROOT / "tests" / "fixtures" / "c_corpus"
OUT = ROOT / "tests" / "fixtures" / "arm_corpus"

CMD = (
    "clang --target=armv5te-linux-gnueabi -O0 -S -ffreestanding "
    "-fno-stack-protector -fno-unwind-tables"
)


def main() -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    for c_file in sorted(SRC.glob("*.c")):
        out = OUT / (c_file.stem + ".s")
        subprocess.run(
            [*CMD.split(), str(c_file), "-o", str(out)], check=True
        )
        print(f"{c_file.name} -> {out.relative_to(ROOT)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
