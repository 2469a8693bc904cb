"""User-space protection pipeline: disassemble, build lists, emit binary."""

from .blocks import EmbeddedDataBlock, XomLists
from .disasm import compute_superset
from .image import attach_xom_section, load_elf, set_xom_flag
from .intervals import ByteInterval

STATIC_REF_THRESHOLD = 10    # blocks referenced more than this go optimization

_MOFFS_OPCODES = frozenset([0xA0, 0xA1, 0xA2, 0xA3])


def _memory_target(ins):
    if ins.rip_relative_data_target is not None:
        return ins.rip_relative_data_target
    if ins.opcode and ins.opcode[0] in _MOFFS_OPCODES:
        return ins.immediate
    return None


def count_static_refs(image, report):
    """Per-block count of statically visible memory references.

    Only direct RIP-relative and absolute-address operands are counted;
    register-indexed accesses are invisible to static analysis and are
    handled by the monitor's dynamic promotion instead.
    """
    counts = {iv: 0 for iv in report.superset}
    for ins in report.instructions.values():
        target = _memory_target(ins)
        if target is None:
            continue
        env = report.superset.envelope(target)
        if env is not None:
            counts[env] += 1
    return counts


def build_lists(report, refs):
    regular = []
    optimization = []
    for iv in report.superset:
        block = EmbeddedDataBlock(ByteInterval(iv.start, iv.end), refs[iv])
        if block.static_ref_count > STATIC_REF_THRESHOLD:
            optimization.append(block)
        else:
            regular.append(block)
    regular.sort(key=lambda b: b.interval.start)
    optimization.sort(key=lambda b: b.interval.start)
    return XomLists(regular=regular, optimization=optimization)


def protect_image(image):
    """Protected image plus the report it was built from."""
    report = compute_superset(image)
    lists = build_lists(report, count_static_refs(image, report))
    protected = attach_xom_section(set_xom_flag(image), lists)
    return protected, report, lists


def protect_binary(data):
    protected, _report, _lists = protect_image(load_elf(data))
    return protected.raw
