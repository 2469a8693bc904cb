import random
import shutil
import struct
import subprocess

import pytest

from pxom.corpus import build_program, generate_program

EHDR = struct.Struct("<16sHHIQQQIHHHHHH")
PHDR = struct.Struct("<IIQQQQQQ")


def make_elf(segments, entry=0, elf_type=2):
    """Hand-built minimal ELF64: segments = [(vaddr, flags, payload)]."""
    phoff = EHDR.size
    body_off = phoff + PHDR.size * len(segments)
    ident = b"\x7fELF" + bytes([2, 1, 1]) + b"\x00" * 9
    phdrs = b""
    body = b""
    for vaddr, flags, payload in segments:
        phdrs += PHDR.pack(1, flags, body_off + len(body), vaddr, vaddr,
                           len(payload), len(payload), 0x1000)
        body += payload
    ehdr = EHDR.pack(ident, elf_type, 62, 1, entry, phoff, 0, 0,
                     EHDR.size, PHDR.size, len(segments), 0, 0, 0)
    return ehdr + phdrs + body


def exec_elf(code, vaddr=0x1000, entry=None):
    """One-exec-segment image around raw code bytes."""
    return make_elf([(vaddr, 5, bytes(code))],
                    entry=vaddr if entry is None else entry)


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print("\n[%s] %s (%.1fs)" % (status, name, report.duration))


def require_tool(name):
    if shutil.which(name) is None:
        pytest.skip("%s not available" % name)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Small corpus for module tests (the acceptance suite builds its own)."""
    require_tool("gcc")
    outdir = tmp_path_factory.mktemp("corpus")
    rng = random.Random(42)
    entries = []
    for i in range(6):
        asm, _funcs = generate_program(rng)
        entries.append(build_program(asm, outdir, "prog_%02d" % i))
    return entries


@pytest.fixture(scope="session")
def hello_binaries(tmp_path_factory):
    require_tool("gcc")
    workdir = tmp_path_factory.mktemp("hello")
    src = workdir / "hello.c"
    src.write_text('#include <stdio.h>\n'
                   'int main(void) { puts("hello, world"); return 0; }\n')
    binary = workdir / "hello"
    subprocess.run(["gcc", "-O2", "-o", str(binary), str(src)], check=True)
    return workdir, binary
