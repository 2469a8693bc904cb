"""Synthetic test-binary generator with exact ground truth.

Emits small freestanding assembly programs that interleave code with the
four embedded-data shapes seen in real binaries (constants, arrays,
NUL-terminated strings, jump tables), assembles them with gcc, derives
byte-exact data/code ground truth from marker symbols, then strips the
binary.  Requires gcc, nm, and strip on PATH.
"""

import random
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .image import executable_ranges, load_elf
from .intervals import IntervalSet

_SAFE_OPS = (
    "mov ${imm}, %eax",
    "add ${imm}, %eax",
    "xor %edx, %edx",
    "mov %eax, %r8d",
    "imul ${imm}, %eax, %ecx",
    "sub %ecx, %eax",
    "not %rdx",
    "shl $3, %rax",
)


@dataclass
class CorpusEntry:
    binary: Path
    ground_truth: Path
    source: Path


def _island(rng, idx, force_kind=None):
    kind = force_kind or rng.choice(("constant", "array", "string"))
    lines = ["gtd_%d_s:" % idx]
    if kind == "constant":
        for _ in range(rng.randint(1, 4)):
            lines.append("\t.quad %#x" % rng.getrandbits(64))
    elif kind == "array":
        n = rng.randint(8, 64)
        lines.append("\t.byte " + ", ".join(
            str(rng.randrange(256)) for _ in range(n)))
    else:
        for _ in range(rng.randint(1, 3)):
            text = "".join(rng.choice("abcdefghijklmnop_0123456789")
                           for _ in range(rng.randint(4, 20)))
            lines.append('\t.asciz "%s"' % text)
    lines.append("gtd_%d_e:" % idx)
    return lines


def _body(rng, data_labels, refs=2):
    lines = []
    for _ in range(rng.randint(2, 8)):
        op = rng.choice(_SAFE_OPS)
        lines.append("\t" + op.format(imm=rng.randint(1, 1 << 20)))
    for _ in range(refs):
        if data_labels and rng.random() < 0.8:
            label = rng.choice(data_labels)
            lines.append("\tleaq %s(%%rip), %%rsi" % label)
            if rng.random() < 0.5:
                lines.append("\tmovl %s(%%rip), %%eax" % label)
    return lines


def generate_program(rng):
    """One assembly program; returns (asm_text, function_marker_names)."""
    parts = [
        "\t.text",
        "\t.globl _start",
    ]
    n_direct = rng.randint(3, 6)
    n_heuristic = rng.randint(1, 2)
    n_addr_taken = rng.randint(0, 1)
    n_unwind = rng.randint(0, 2)

    data_labels = []
    island_idx = 0
    func_idx = 0
    funcs = []          # (marker_base, class)

    def new_island(force_kind=None):
        nonlocal island_idx
        label = "gtd_%d_s" % island_idx
        lines = _island(rng, island_idx, force_kind)
        island_idx += 1
        data_labels.append(label)
        return lines

    def func(cls, body_lines, cfi=False):
        nonlocal func_idx
        base = "gtf_%d" % func_idx
        func_idx += 1
        funcs.append((base, cls))
        out = ["\t.p2align 4"]
        out.append("%s_s:" % base)
        if cfi:
            out.append("\t.cfi_startproc")
        out.append("\tendbr64")
        out.append("\tpushq %rbp")
        out.append("\tmovq %rsp, %rbp")
        out.extend(body_lines)
        out.append("\tpopq %rbp")
        out.append("\tret")
        if cfi:
            out.append("\t.cfi_endproc")
        out.append("%s_e:" % base)
        return base, out

    # a few leading islands so data precedes code too
    for _ in range(rng.randint(1, 2)):
        parts.extend(new_island())

    direct_names = []
    for _ in range(n_direct):
        name, lines = func("direct", _body(rng, data_labels))
        direct_names.append(name)
        parts.extend(lines)
        if rng.random() < 0.6:
            parts.extend(new_island())

    # a heavily-referenced island: feeds the >10 static-ref policy
    if rng.random() < 0.5:
        hot = new_island("constant")
        parts.extend(hot)
        hot_label = data_labels[-1]
        body = ["\tmovl %s(%%rip), %%eax" % hot_label for _ in range(12)]
        name, lines = func("direct", body)
        direct_names.append(name)
        parts.extend(lines)

    switch_name, switch_lines, table_lines = _switch_function(
        rng, func_idx, island_idx)
    funcs.append(("gtf_%d" % func_idx, "jump_table"))
    func_idx += 1
    island_idx += 1
    parts.extend(switch_lines)
    parts.extend(table_lines)

    for _ in range(n_heuristic):
        _, lines = func("heuristic", _body(rng, data_labels))
        parts.extend(lines)

    taken_names = []
    for _ in range(n_addr_taken):
        name, lines = func("address_taken", _body(rng, data_labels))
        taken_names.append(name)
        parts.extend(lines)

    for _ in range(n_unwind):
        _, lines = func("frame_unwind", _body(rng, data_labels), cfi=True)
        parts.extend(lines)

    entry = ["\t.p2align 4", "gtf_%d_s:" % func_idx, "_start:"]
    funcs.append(("gtf_%d" % func_idx, "entry"))
    func_idx += 1
    for name in direct_names:
        entry.append("\tcall %s_s" % name)
    entry.append("\tmovl $%d, %%edi" % rng.randrange(4))
    entry.append("\tcall %s_s" % switch_name)
    entry.append("\tmovl $60, %eax")
    entry.append("\txorl %edi, %edi")
    entry.append("\tsyscall")
    entry.append("\tud2")
    entry.append("gtf_%d_e:" % (func_idx - 1))
    parts.extend(entry)

    if taken_names:
        parts.append('\t.section .rodata')
        parts.append("\t.balign 8")
        for name in taken_names:
            parts.append("\t.quad %s_s" % name)
        parts.append("\t.text")

    return "\n".join(parts) + "\n", funcs


def _switch_function(rng, func_idx, island_idx):
    n_cases = rng.randint(3, 8)
    base = "gtf_%d" % func_idx
    table = "gtd_%d_s" % island_idx
    lines = [
        "\t.p2align 4",
        "%s_s:" % base,
        "\tendbr64",
        "\tmovl %edi, %ecx",
        "\tcmpl $%d, %%ecx" % (n_cases - 1),
        "\tja %s_done" % base,
        "\tleaq %s(%%rip), %%rax" % table,
        "\tmovslq (%rax,%rcx,4), %rdx",
        "\taddq %rdx, %rax",
        "\tjmp *%rax",
    ]
    for i in range(n_cases):
        lines.append("%s_case%d:" % (base, i))
        lines.append("\tmovl $%d, %%eax" % rng.randint(0, 999))
        lines.append("\tjmp %s_done" % base)
    lines.append("%s_done:" % base)
    lines.append("\tret")
    lines.append("%s_e:" % base)
    table_lines = ["%s:" % table]
    for i in range(n_cases):
        table_lines.append("\t.long %s_case%d - %s" % (base, i, table))
    table_lines.append("gtd_%d_e:" % island_idx)
    return base, lines, table_lines


def _read_markers(binary):
    out = subprocess.run(["nm", str(binary)], check=True,
                         capture_output=True, text=True).stdout
    symbols = {}
    for line in out.splitlines():
        fields = line.split()
        if len(fields) == 3:
            symbols[fields[2]] = int(fields[0], 16)
    return symbols


def build_program(asm_text, workdir, name):
    """Assemble, derive ground truth, strip.  Returns a CorpusEntry."""
    workdir = Path(workdir)
    src = workdir / ("%s.s" % name)
    binary = workdir / name
    gt = workdir / ("%s.gt" % name)
    src.write_text(asm_text)
    subprocess.run(
        ["gcc", "-nostdlib", "-static", "-no-pie", "-Wl,--build-id=none",
         "-o", str(binary), str(src)],
        check=True, capture_output=True)

    symbols = _read_markers(binary)
    code = IntervalSet()
    i = 0
    while ("gtf_%d_s" % i) in symbols:
        start = symbols["gtf_%d_s" % i]
        end = symbols["gtf_%d_e" % i]
        if start < end:
            code.add(start, end)
        i += 1

    image = load_elf(binary.read_bytes())
    data = executable_ranges(image)
    for iv in code:
        data.remove(iv.start, iv.end)

    subprocess.run(["strip", str(binary)], check=True, capture_output=True)
    with gt.open("w") as fh:
        for iv in data:
            fh.write("%#x %#x\n" % (iv.start, iv.end))
    return CorpusEntry(binary=binary, ground_truth=gt, source=src)


def build_corpus(outdir, count=50, seed=1):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    entries = []
    for i in range(count):
        asm, _funcs = generate_program(rng)
        entries.append(build_program(asm, outdir, "prog_%03d" % i))
    return entries


def load_ground_truth(path):
    """Parse a `0xSTART 0xEND` per-line interval file."""
    ivs = IntervalSet()
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        start_s, end_s = line.split()
        ivs.add(int(start_s, 16), int(end_s, 16))
    return ivs
