"""Minimal user-mode ARMv5 interpreter for statically linked ELF binaries.

Covers the instruction subset emitted by -O0 compilers for freestanding
integer C code: the full data-processing class with all condition codes and
shifter operands, multiplies, word/byte/halfword loads and stores, block
transfers, branches, BX, and the EABI exit/write syscalls.  Anything outside
the subset stops execution loudly with a real signal so a harness above can
classify the outcome, never silently misexecutes.

Intended as the ``emulate`` command of toolchain profiles on machines without
qemu-user; run as ``python -m xisa.armvm BINARY``.
"""
from __future__ import annotations

import argparse
import os
import signal
import struct
import sys

STACK_TOP = 0x7FF0_0000
STACK_SIZE = 1 << 20
MASK32 = 0xFFFF_FFFF


class MemoryFault(Exception):
    def __init__(self, addr: int):
        super().__init__(f"Invalid memory access at 0x{addr & MASK32:08x}")
        self.addr = addr


class UndefinedInstruction(Exception):
    def __init__(self, word: int, addr: int):
        super().__init__(
            f"undefined or unsupported instruction 0x{word:08x} at 0x{addr:08x}"
        )


class UnsupportedSyscall(Exception):
    def __init__(self, number: int):
        super().__init__(f"unsupported syscall {number}")


class GuestExit(Exception):
    def __init__(self, code: int):
        self.code = code


class Memory:
    """Two flat regions: the loaded image and the stack."""

    def __init__(self, image_base: int, image: bytearray):
        self.image_base = image_base
        self.image = image
        self.stack_base = STACK_TOP - STACK_SIZE
        self.stack = bytearray(STACK_SIZE)

    def _locate(self, addr: int, size: int) -> tuple[bytearray, int]:
        if self.image_base <= addr and addr + size <= self.image_base + len(self.image):
            return self.image, addr - self.image_base
        if self.stack_base <= addr and addr + size <= STACK_TOP:
            return self.stack, addr - self.stack_base
        raise MemoryFault(addr)

    def load(self, addr: int, size: int) -> int:
        buf, off = self._locate(addr, size)
        return int.from_bytes(buf[off : off + size], "little")

    def store(self, addr: int, size: int, value: int) -> None:
        buf, off = self._locate(addr, size)
        buf[off : off + size] = (value & ((1 << (8 * size)) - 1)).to_bytes(
            size, "little"
        )

    def bytes_at(self, addr: int, size: int) -> bytes:
        buf, off = self._locate(addr, size)
        return bytes(buf[off : off + size])


def load_elf(path: str) -> tuple[Memory, int]:
    """Map PT_LOAD segments of a 32-bit LE ARM ELF; returns (memory, entry)."""
    data = open(path, "rb").read()
    if data[:4] != b"\x7fELF":
        raise ValueError(f"{path}: not an ELF file")
    if data[4] != 1 or data[5] != 1:
        raise ValueError(f"{path}: need ELF32 little-endian")
    (e_type, e_machine, _ver, e_entry, e_phoff, _shoff, _flags, _ehsize,
     e_phentsize, e_phnum) = struct.unpack_from("<HHIIIIIHHH", data, 16)
    if e_machine != 40:  # EM_ARM
        raise ValueError(f"{path}: not an ARM binary (e_machine={e_machine})")
    segments = []
    for i in range(e_phnum):
        off = e_phoff + i * e_phentsize
        (p_type, p_offset, p_vaddr, _paddr, p_filesz, p_memsz, _pflags,
         _palign) = struct.unpack_from("<IIIIIIII", data, off)
        if p_type == 1 and p_memsz:  # PT_LOAD
            segments.append((p_vaddr, p_offset, p_filesz, p_memsz))
    if not segments:
        raise ValueError(f"{path}: no loadable segments")
    base = min(s[0] for s in segments)
    top = max(s[0] + s[3] for s in segments)
    image = bytearray(top - base)
    for vaddr, offset, filesz, _memsz in segments:
        image[vaddr - base : vaddr - base + filesz] = data[offset : offset + filesz]
    return Memory(base, image), e_entry


_COND_NAMES = "eq ne cs cc mi pl vs vc hi ls ge lt gt le al nv".split()


class Cpu:
    def __init__(self, mem: Memory, entry: int):
        self.mem = mem
        self.regs = [0] * 16
        self.n = self.z = self.c = self.v = False
        self.pc = entry & ~1
        self.regs[13] = STACK_TOP - 64
        # empty argc/argv block, matching a bare kernel process start
        mem.store(self.regs[13], 4, 0)
        self.steps = 0

    # --- register access (r15 reads as current pc + 8) ----------------------

    def rread(self, i: int) -> int:
        if i == 15:
            return (self.pc + 8) & MASK32
        return self.regs[i]

    def cond_passes(self, cond: int) -> bool:
        n, z, c, v = self.n, self.z, self.c, self.v
        if cond == 0:
            return z
        if cond == 1:
            return not z
        if cond == 2:
            return c
        if cond == 3:
            return not c
        if cond == 4:
            return n
        if cond == 5:
            return not n
        if cond == 6:
            return v
        if cond == 7:
            return not v
        if cond == 8:
            return c and not z
        if cond == 9:
            return (not c) or z
        if cond == 10:
            return n == v
        if cond == 11:
            return n != v
        if cond == 12:
            return (not z) and n == v
        if cond == 13:
            return z or n != v
        if cond == 14:
            return True
        return False  # 0b1111: unconditional space handled separately

    # --- shifter operand ----------------------------------------------------

    def _shift_imm(self, value: int, stype: int, amount: int) -> tuple[int, bool]:
        if stype == 0:  # LSL
            if amount == 0:
                return value, self.c
            return (value << amount) & MASK32, bool((value >> (32 - amount)) & 1)
        if stype == 1:  # LSR (amount 0 encodes 32)
            if amount == 0:
                return 0, bool(value >> 31)
            return value >> amount, bool((value >> (amount - 1)) & 1)
        if stype == 2:  # ASR (amount 0 encodes 32)
            if amount == 0:
                amount = 32
            if amount >= 32:
                return (MASK32 if value >> 31 else 0), bool(value >> 31)
            signed = value - (1 << 32) if value >> 31 else value
            return (signed >> amount) & MASK32, bool((value >> (amount - 1)) & 1)
        # ROR (amount 0 encodes RRX)
        if amount == 0:
            out = ((1 << 31) if self.c else 0) | (value >> 1)
            return out, bool(value & 1)
        out = ((value >> amount) | (value << (32 - amount))) & MASK32
        return out, bool(out >> 31)

    def _shift_reg(self, value: int, stype: int, amount: int) -> tuple[int, bool]:
        amount &= 0xFF
        if amount == 0:
            return value, self.c
        if stype == 0:  # LSL
            if amount < 32:
                return (value << amount) & MASK32, bool((value >> (32 - amount)) & 1)
            if amount == 32:
                return 0, bool(value & 1)
            return 0, False
        if stype == 1:  # LSR
            if amount < 32:
                return value >> amount, bool((value >> (amount - 1)) & 1)
            if amount == 32:
                return 0, bool(value >> 31)
            return 0, False
        if stype == 2:  # ASR
            signed = value - (1 << 32) if value >> 31 else value
            if amount < 32:
                return (signed >> amount) & MASK32, bool((value >> (amount - 1)) & 1)
            return (MASK32, True) if value >> 31 else (0, False)
        amount %= 32  # ROR
        if amount == 0:
            return value, bool(value >> 31)
        out = ((value >> amount) | (value << (32 - amount))) & MASK32
        return out, bool(out >> 31)

    def operand2(self, word: int) -> tuple[int, bool]:
        if word & (1 << 25):  # immediate
            imm8 = word & 0xFF
            rot = ((word >> 8) & 0xF) * 2
            if rot == 0:
                return imm8, self.c
            value = ((imm8 >> rot) | (imm8 << (32 - rot))) & MASK32
            return value, bool(value >> 31)
        rm = word & 0xF
        value = self.rread(rm)
        stype = (word >> 5) & 3
        if word & (1 << 4):  # shift by register
            rs = (word >> 8) & 0xF
            return self._shift_reg(value, stype, self.regs[rs])
        return self._shift_imm(value, stype, (word >> 7) & 0x1F)

    # --- instruction classes --------------------------------------------------

    def _data_processing(self, word: int) -> int | None:
        opcode = (word >> 21) & 0xF
        set_flags = bool(word & (1 << 20))
        rn = (word >> 16) & 0xF
        rd = (word >> 12) & 0xF
        op2, shifter_carry = self.operand2(word)
        a = self.rread(rn)

        def arith(result64: int, carry: bool, overflow: bool) -> int:
            if set_flags:
                self.c = carry
                self.v = overflow
            return result64 & MASK32

        result: int
        write = True
        logical = False
        if opcode == 0:  # AND
            result, logical = a & op2, True
        elif opcode == 1:  # EOR
            result, logical = a ^ op2, True
        elif opcode == 2:  # SUB
            r = a - op2
            result = arith(r, a >= op2, bool(((a ^ op2) & (a ^ (r & MASK32))) >> 31))
        elif opcode == 3:  # RSB
            r = op2 - a
            result = arith(r, op2 >= a, bool(((op2 ^ a) & (op2 ^ (r & MASK32))) >> 31))
        elif opcode == 4:  # ADD
            r = a + op2
            result = arith(r, r > MASK32, bool((~(a ^ op2) & (a ^ (r & MASK32))) >> 31))
        elif opcode == 5:  # ADC
            r = a + op2 + (1 if self.c else 0)
            result = arith(r, r > MASK32, bool((~(a ^ op2) & (a ^ (r & MASK32))) >> 31))
        elif opcode == 6:  # SBC
            r = a - op2 - (0 if self.c else 1)
            result = arith(r, r >= 0, bool(((a ^ op2) & (a ^ (r & MASK32))) >> 31))
        elif opcode == 7:  # RSC
            r = op2 - a - (0 if self.c else 1)
            result = arith(r, r >= 0, bool(((op2 ^ a) & (op2 ^ (r & MASK32))) >> 31))
        elif opcode == 8:  # TST
            result, logical, write = a & op2, True, False
        elif opcode == 9:  # TEQ
            result, logical, write = a ^ op2, True, False
        elif opcode == 10:  # CMP
            r = a - op2
            result = arith(r, a >= op2, bool(((a ^ op2) & (a ^ (r & MASK32))) >> 31))
            write = False
        elif opcode == 11:  # CMN
            r = a + op2
            result = arith(r, r > MASK32, bool((~(a ^ op2) & (a ^ (r & MASK32))) >> 31))
            write = False
        elif opcode == 12:  # ORR
            result, logical = a | op2, True
        elif opcode == 13:  # MOV
            result, logical = op2, True
        elif opcode == 14:  # BIC
            result, logical = a & (op2 ^ MASK32), True
        else:  # MVN
            result, logical = op2 ^ MASK32, True

        result &= MASK32
        if set_flags or not write:
            self.n = bool(result >> 31)
            self.z = result == 0
            if logical:
                self.c = shifter_carry
        if write:
            if rd == 15:
                if set_flags:
                    raise UndefinedInstruction(word, self.pc)
                return result & ~1
            self.regs[rd] = result
        return None

    def _multiply(self, word: int) -> None:
        accumulate = bool(word & (1 << 21))
        set_flags = bool(word & (1 << 20))
        rd = (word >> 16) & 0xF
        rn = (word >> 12) & 0xF
        rs = (word >> 8) & 0xF
        rm = word & 0xF
        result = self.regs[rm] * self.regs[rs]
        if accumulate:
            result += self.regs[rn]
        result &= MASK32
        self.regs[rd] = result
        if set_flags:
            self.n = bool(result >> 31)
            self.z = result == 0

    def _multiply_long(self, word: int) -> None:
        signed = bool(word & (1 << 22))
        accumulate = bool(word & (1 << 21))
        set_flags = bool(word & (1 << 20))
        rdhi = (word >> 16) & 0xF
        rdlo = (word >> 12) & 0xF
        rs = (word >> 8) & 0xF
        rm = word & 0xF

        def as_signed(x: int) -> int:
            return x - (1 << 32) if x >> 31 else x

        a, b = self.regs[rm], self.regs[rs]
        product = (as_signed(a) * as_signed(b)) if signed else (a * b)
        if accumulate:
            product += (self.regs[rdhi] << 32) | self.regs[rdlo]
        product &= (1 << 64) - 1
        self.regs[rdlo] = product & MASK32
        self.regs[rdhi] = (product >> 32) & MASK32
        if set_flags:
            self.n = bool(product >> 63)
            self.z = product == 0

    def _load_store(self, word: int) -> int | None:
        pre = bool(word & (1 << 24))
        up = bool(word & (1 << 23))
        byte = bool(word & (1 << 22))
        writeback = bool(word & (1 << 21))
        load = bool(word & (1 << 20))
        rn = (word >> 16) & 0xF
        rd = (word >> 12) & 0xF
        if word & (1 << 25):
            if word & (1 << 4):
                raise UndefinedInstruction(word, self.pc)
            offset, _ = self._shift_imm(
                self.rread(word & 0xF), (word >> 5) & 3, (word >> 7) & 0x1F
            )
        else:
            offset = word & 0xFFF
        base = self.rread(rn)
        addr = (base + offset if up else base - offset) & MASK32 if pre else base
        size = 1 if byte else 4
        if not byte and addr & 3:
            raise MemoryFault(addr)
        if load:
            value = self.mem.load(addr, size)
            if rd == 15:
                if value & 1:
                    raise UndefinedInstruction(word, self.pc)
                new_pc: int | None = value & ~1
            else:
                self.regs[rd] = value
                new_pc = None
        else:
            self.mem.store(addr, size, self.rread(rd))
            new_pc = None
        if not pre:
            self.regs[rn] = (base + offset if up else base - offset) & MASK32
        elif writeback:
            self.regs[rn] = addr
        return new_pc

    def _extra_load_store(self, word: int) -> None:
        pre = bool(word & (1 << 24))
        up = bool(word & (1 << 23))
        imm_form = bool(word & (1 << 22))
        writeback = bool(word & (1 << 21))
        load = bool(word & (1 << 20))
        rn = (word >> 16) & 0xF
        rd = (word >> 12) & 0xF
        sh = (word >> 5) & 3
        if imm_form:
            offset = ((word >> 4) & 0xF0) | (word & 0xF)
        else:
            offset = self.regs[word & 0xF]
        base = self.rread(rn)
        addr = (base + offset if up else base - offset) & MASK32 if pre else base
        if load:
            if sh == 1:  # LDRH
                self.regs[rd] = self.mem.load(addr, 2)
            elif sh == 2:  # LDRSB
                v = self.mem.load(addr, 1)
                self.regs[rd] = (v - 0x100 if v & 0x80 else v) & MASK32
            elif sh == 3:  # LDRSH
                v = self.mem.load(addr, 2)
                self.regs[rd] = (v - 0x10000 if v & 0x8000 else v) & MASK32
            else:
                raise UndefinedInstruction(word, self.pc)
        else:
            if sh != 1:  # only STRH exists here
                raise UndefinedInstruction(word, self.pc)
            self.mem.store(addr, 2, self.rread(rd))
        if not pre:
            self.regs[rn] = (base + offset if up else base - offset) & MASK32
        elif writeback:
            self.regs[rn] = addr

    def _block_transfer(self, word: int) -> int | None:
        pre = bool(word & (1 << 24))
        up = bool(word & (1 << 23))
        if word & (1 << 22):  # S bit: user-mode banked transfer
            raise UndefinedInstruction(word, self.pc)
        writeback = bool(word & (1 << 21))
        load = bool(word & (1 << 20))
        rn = (word >> 16) & 0xF
        reglist = word & 0xFFFF
        count = bin(reglist).count("1")
        base = self.regs[rn]
        if up:
            lowest = base + (4 if pre else 0)
            final = base + 4 * count
        else:
            lowest = base - 4 * count + (0 if pre else 4)
            final = base - 4 * count
        new_pc: int | None = None
        addr = lowest & MASK32
        for i in range(16):
            if not (reglist >> i) & 1:
                continue
            if load:
                value = self.mem.load(addr, 4)
                if i == 15:
                    if value & 1:
                        raise UndefinedInstruction(word, self.pc)
                    new_pc = value & ~1
                else:
                    self.regs[i] = value
            else:
                self.mem.store(addr, 4, self.rread(i))
            addr = (addr + 4) & MASK32
        if writeback:
            self.regs[rn] = final & MASK32
        return new_pc

    def _syscall(self) -> None:
        number = self.regs[7]
        if number in (1, 248):  # exit, exit_group
            raise GuestExit(self.regs[0] & 0xFF)
        if number == 4:  # write
            fd, buf, length = self.regs[0], self.regs[1], self.regs[2]
            if fd not in (1, 2):
                raise UnsupportedSyscall(number)
            data = self.mem.bytes_at(buf, length)
            os.write(fd, data)
            self.regs[0] = length
            return
        raise UnsupportedSyscall(number)

    # --- main loop ------------------------------------------------------------

    def step(self) -> None:
        pc = self.pc
        if pc & 3:
            raise MemoryFault(pc)
        word = self.mem.load(pc, 4)
        self.steps += 1
        cond = word >> 28
        if cond == 0xF:
            raise UndefinedInstruction(word, pc)
        if not self.cond_passes(cond):
            self.pc = (pc + 4) & MASK32
            return
        cls = (word >> 25) & 7
        new_pc: int | None = None
        if cls == 0:
            if (word & 0x0FC000F0) == 0x00000090:
                self._multiply(word)
            elif (word & 0x0F8000F0) == 0x00800090:
                self._multiply_long(word)
            elif (word & 0x0FFFFFF0) == 0x012FFF10:  # BX
                target = self.rread(word & 0xF)
                if target & 1:
                    raise UndefinedInstruction(word, pc)  # no Thumb support
                new_pc = target & ~1
            elif (word & 0x0FFFFFF0) == 0x012FFF30:  # BLX register
                target = self.rread(word & 0xF)
                if target & 1:
                    raise UndefinedInstruction(word, pc)
                self.regs[14] = (pc + 4) & MASK32
                new_pc = target & ~1
            elif (word & 0x0E000090) == 0x00000090:
                self._extra_load_store(word)
            elif (word & 0x0F900010) == 0x01000000:  # MRS/MSR and friends
                raise UndefinedInstruction(word, pc)
            else:
                new_pc = self._data_processing(word)
        elif cls == 1:
            if (word & 0x01900000) == 0x01000000:  # MSR immediate
                raise UndefinedInstruction(word, pc)
            new_pc = self._data_processing(word)
        elif cls in (2, 3):
            new_pc = self._load_store(word)
        elif cls == 4:
            new_pc = self._block_transfer(word)
        elif cls == 5:
            offset = word & 0x00FFFFFF
            if offset & 0x00800000:
                offset -= 0x01000000
            if word & (1 << 24):  # BL
                self.regs[14] = (pc + 4) & MASK32
            new_pc = (pc + 8 + (offset << 2)) & MASK32
        elif cls == 7 and (word & 0x0F000000) == 0x0F000000:
            self._syscall()
        else:
            raise UndefinedInstruction(word, pc)
        self.pc = (pc + 4) & MASK32 if new_pc is None else new_pc


def run(path: str, max_steps: int = 0) -> int:
    """Execute the binary; returns the guest exit code.  Faults kill the
    process with the corresponding real signal, mirroring user-mode emulators.
    """
    mem, entry = load_elf(path)
    cpu = Cpu(mem, entry)
    try:
        while True:
            cpu.step()
            if max_steps and cpu.steps >= max_steps:
                print(
                    f"armvm: instruction budget of {max_steps} exhausted",
                    file=sys.stderr,
                )
                sys.stderr.flush()
                os.kill(os.getpid(), signal.SIGKILL)
    except GuestExit as exit_info:
        return exit_info.code
    except MemoryFault as fault:
        print(f"armvm: {fault}", file=sys.stderr)
        sys.stderr.flush()
        os.kill(os.getpid(), signal.SIGSEGV)
    except UndefinedInstruction as undef:
        print(f"armvm: {undef}", file=sys.stderr)
        sys.stderr.flush()
        os.kill(os.getpid(), signal.SIGILL)
    except UnsupportedSyscall as sysc:
        print(f"armvm: {sysc}", file=sys.stderr)
        sys.stderr.flush()
        os.kill(os.getpid(), signal.SIGSYS)
    raise AssertionError("unreachable")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="xisa-armvm", description="run a static ARMv5 ELF binary"
    )
    parser.add_argument("binary")
    parser.add_argument("guest_args", nargs="*", help="ignored; guests take no argv")
    parser.add_argument("--max-steps", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        return run(args.binary, max_steps=args.max_steps)
    except (ValueError, OSError) as exc:
        print(f"armvm: {exc}", file=sys.stderr)
        return 125


if __name__ == "__main__":
    sys.exit(main())
