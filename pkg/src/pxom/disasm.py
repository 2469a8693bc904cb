"""Unidirectional disassembly: compute the embedded-data superset.

The executable bytes start out all-readable ("superset") and only ever
move to the code set when a control-flow traversal proves them to be
instructions.  A data byte can therefore never be classified as code;
the price is that unreachable code stays readable.
"""

from dataclasses import dataclass, field

from . import x86
from .ehframe import fde_initial_locations
from .errors import EntryNotInSuperset, NoExecutableCode, OutOfRange
from .image import executable_ranges
from .intervals import IntervalSet

SOURCE_ORDER = ("program_entry", "jump_table", "frame_unwind",
                "address_taken", "heuristic")

_PROLOGUE_PATTERNS = (
    b"\xf3\x0f\x1e\xfa",      # endbr64
    b"\x55\x48\x89\xe5",      # push rbp; mov rbp, rsp
    b"\x48\x83\xec",          # sub rsp, imm8
    b"\x48\x81\xec",          # sub rsp, imm32
)

_PAD_BYTES = frozenset((0x90, 0xCC))

_JUMP_TABLE_WINDOW = 128      # max gap between table load and switch jump
_JUMP_TABLE_MAX_ENTRIES = 1024


@dataclass(frozen=True)
class EntryPoint:
    vaddr: int
    source: str


@dataclass
class DisassemblyReport:
    code: IntervalSet
    superset: IntervalSet
    entry_points: list
    executable_total: int
    instructions: dict = field(default_factory=dict, repr=False)


class _ExecView:
    """Materialized executable ranges for fast decoding."""

    def __init__(self, image):
        self.ranges = executable_ranges(image)
        self._buffers = {}
        for iv in self.ranges:
            data = image.read_vaddr(iv.start, len(iv))
            self._buffers[iv.start] = (data, iv.end)

    def decode(self, vaddr):
        env = self.ranges.envelope(vaddr)
        if env is None:
            raise OutOfRange("%#x is not executable" % vaddr)
        data, _end = self._buffers[env.start]
        return x86.decode(data, vaddr - env.start, vaddr)

    def read(self, vaddr, size):
        env = self.ranges.envelope(vaddr)
        if env is None or vaddr + size > env.end:
            return None
        data, _end = self._buffers[env.start]
        off = vaddr - env.start
        return data[off:off + size]


def decode_at(image, vaddr):
    return _ExecView(image).decode(vaddr)


def recursive_disassemble(image, entry, superset, view=None):
    """Code intervals reachable from entry without leaving the superset."""
    if not superset.contains_range(entry, 1):
        raise EntryNotInSuperset("%#x is not an unclassified byte" % entry)
    view = view or _ExecView(image)
    claimed, _insns, _ok = _traverse(view, entry, superset,
                                     committed_starts=frozenset(),
                                     committed_code=IntervalSet(),
                                     strict=False)
    return claimed


def _traverse(view, entry, superset, committed_starts, committed_code, strict):
    """Claim instruction bytes reachable from entry.

    In strict mode any invalid decode, mid-instruction collision with
    committed code, or fall-off past the executable range poisons the
    whole traversal (ok=False); in lenient mode it only ends that path.
    """
    insns = {}
    claimed = IntervalSet()
    stack = [entry]
    ok = True

    def classify(va):
        if superset.contains_range(va, 1):
            return "open"
        if va in committed_starts or va in insns:
            return "boundary"
        if committed_code.contains_range(va, 1) or claimed.contains_range(va, 1):
            return "mid"
        return "outside"

    while stack:
        va = stack.pop()
        while True:
            if va in insns:
                break
            state = classify(va)
            if state == "boundary":
                break
            if state != "open":
                if strict:
                    ok = False
                break
            ins = view.decode(va)
            if ins is None or not superset.contains_range(va, ins.length):
                if strict:
                    ok = False
                break
            insns[va] = ins
            claimed.add(va, ins.end)
            kind = ins.kind
            if kind in (x86.RETURN, x86.HALT, x86.INDIRECT_JUMP,
                        x86.INDIRECT_CALL):
                break
            if kind == x86.DIRECT_JUMP:
                va = ins.direct_targets[0]
                continue
            if kind in (x86.CONDITIONAL_JUMP, x86.DIRECT_CALL):
                stack.append(ins.direct_targets[0])
            va = ins.end
    return claimed, insns, ok


def detect_entry_points(image, superset, known_code, instructions=None):
    """Candidate code entry points, ordered by source then address."""
    view = _ExecView(image)
    if instructions is None:
        instructions = _linear_decode(view, known_code)
    insn_list = [instructions[k] for k in sorted(instructions)]

    found = {}

    def emit(va, source):
        if va not in found and (superset.contains_range(va, 1)
                                or known_code.contains_range(va, 1)):
            found[va] = source

    for source, finder in (
            ("jump_table", _jump_table_targets),
            ("frame_unwind", _frame_unwind_targets),
            ("address_taken", _address_taken_targets),
            ("heuristic", _heuristic_targets)):
        if finder is _jump_table_targets:
            targets = finder(image, view, superset, insn_list)
        elif finder is _heuristic_targets:
            targets = finder(view, superset, known_code)
        else:
            targets = finder(image, view)
        for va in sorted(set(targets)):
            emit(va, source)

    order = {s: i for i, s in enumerate(SOURCE_ORDER)}
    eps = [EntryPoint(va, src) for va, src in found.items()]
    eps.sort(key=lambda ep: (order[ep.source], ep.vaddr))
    return eps


def _linear_decode(view, known_code):
    insns = {}
    for iv in known_code:
        va = iv.start
        while va < iv.end:
            ins = view.decode(va)
            if ins is None or ins.end > iv.end:
                break
            insns[va] = ins
            va = ins.end
    return insns


def _jump_table_targets(image, view, superset, insn_list):
    targets = []
    indirect_jumps = [i for i in insn_list if i.kind == x86.INDIRECT_JUMP]
    for ins in insn_list:
        if ins.opcode != (0x8D,):  # lea
            continue
        table = ins.rip_relative_data_target
        if table is None or not superset.contains_range(table, 4):
            continue
        jmp = next((j for j in indirect_jumps
                    if ins.vaddr < j.vaddr <= ins.vaddr + _JUMP_TABLE_WINDOW),
                   None)
        if jmp is None:
            continue
        bound = _bound_before(insn_list, ins.vaddr, jmp.vaddr)
        targets.extend(_parse_table(image, view, superset, table, bound))
    return targets


def _bound_before(insn_list, lo, hi):
    """imm of the last cmp/and bounding check in [lo-32, hi), if any."""
    bound = None
    for ins in insn_list:
        if not lo - 32 <= ins.vaddr < hi or ins.immediate is None:
            continue
        reg_field = (ins.modrm >> 3) & 7 if ins.modrm is not None else None
        if ins.opcode in ((0x81,), (0x83,)) and reg_field in (4, 7):
            bound = ins.immediate
        elif ins.opcode in ((0x3D,), (0x25,)):
            bound = ins.immediate
    if bound is not None and 0 <= bound < _JUMP_TABLE_MAX_ENTRIES:
        return bound + 1
    return None


def _parse_table(image, view, superset, table, count):
    exec_ranges = view.ranges

    def entries(width, resolve):
        out = []
        limit = count if count is not None else _JUMP_TABLE_MAX_ENTRIES
        for i in range(limit):
            pos = table + i * width
            if not superset.contains_range(pos, width):
                break
            raw = view.read(pos, width)
            if raw is None:
                break
            value = int.from_bytes(raw, "little", signed=(width == 4))
            target = resolve(value)
            if not exec_ranges.contains_range(target, 1):
                break
            out.append(target)
        return out

    rel32 = entries(4, lambda v: (table + v) & 0xFFFFFFFFFFFFFFFF)
    abs64 = entries(8, lambda v: v)
    if count is not None:
        if len(rel32) == count and len(abs64) == count:
            return rel32 if image.elf_type == 3 else abs64
        if len(rel32) == count:
            return rel32
        if len(abs64) == count:
            return abs64
        return []
    best = max((rel32, abs64), key=len)
    return best if len(best) >= 2 else []


def _frame_unwind_targets(image, view):
    sec = image.section_by_name(".eh_frame")
    if sec is None or not sec.size:
        return []
    locs = fde_initial_locations(sec.data(image.raw), sec.vaddr)
    return [va for va in locs if view.ranges.contains_range(va, 1)]


def _address_taken_targets(image, view):
    exec_ranges = view.ranges
    targets = []
    for sec in image.sections:
        if sec.sh_type == 4 and sec.entsize >= 24:  # SHT_RELA
            data = sec.data(image.raw)
            for off in range(0, len(data) - 23, sec.entsize or 24):
                addend = int.from_bytes(data[off + 16:off + 24], "little",
                                        signed=True)
                if exec_ranges.contains_range(addend, 1):
                    targets.append(addend)
        elif sec.name in (".init_array", ".fini_array", ".preinit_array",
                          ".got", ".got.plt"):
            data = sec.data(image.raw)
            for off in range(0, len(data) - 7, 8):
                value = int.from_bytes(data[off:off + 8], "little")
                if exec_ranges.contains_range(value, 1):
                    targets.append(value)
        elif sec.name in (".rodata", ".data.rel.ro"):
            data = sec.data(image.raw)
            start = -sec.vaddr % 8
            for off in range(start, len(data) - 7, 8):
                value = int.from_bytes(data[off:off + 8], "little")
                if exec_ranges.contains_range(value, 1):
                    targets.append(value)
    return targets


def _heuristic_targets(view, superset, known_code):
    targets = []
    for iv in superset:
        va = (iv.start + 15) & ~15
        while va < iv.end:
            if _matches_prologue(view, va):
                targets.append(va)
            va += 16
        # entry right after int3/nop padding that follows committed code
        if known_code.contains_range(iv.start - 1, 1):
            va = iv.start
            while va < iv.end:
                raw = view.read(va, 1)
                if raw is None or raw[0] not in _PAD_BYTES:
                    break
                va += 1
            if va < iv.end and va > iv.start and _matches_prologue(view, va):
                targets.append(va)
    return targets


def _matches_prologue(view, va):
    raw = view.read(va, 4)
    if raw is None:
        return False
    return any(raw.startswith(p) for p in _PROLOGUE_PATTERNS)


def compute_superset(image):
    """Partition the executable bytes into identified code and superset."""
    view = _ExecView(image)
    exec_ranges = view.ranges
    if not exec_ranges:
        raise NoExecutableCode("image has no executable segment")

    superset = exec_ranges.copy()
    code = IntervalSet()
    committed_starts = set()
    instructions = {}
    accepted = []

    def commit(claimed, insns, ep):
        for iv in claimed:
            superset.remove(iv.start, iv.end)
            code.add(iv.start, iv.end)
        committed_starts.update(insns)
        instructions.update(insns)
        accepted.append(ep)

    entry = image.entry_point
    if entry and superset.contains_range(entry, 1):
        claimed, insns, _ok = _traverse(view, entry, superset,
                                        frozenset(), IntervalSet(),
                                        strict=False)
        if claimed:
            commit(claimed, insns, EntryPoint(entry, "program_entry"))

    while True:
        progress = False
        for ep in detect_entry_points(image, superset, code, instructions):
            if ep.vaddr in committed_starts:
                continue
            if not superset.contains_range(ep.vaddr, 1):
                continue
            claimed, insns, ok = _traverse(view, ep.vaddr, superset,
                                           committed_starts, code,
                                           strict=True)
            if ok and claimed:
                commit(claimed, insns, ep)
                progress = True
        if not progress:
            break

    return DisassemblyReport(code=code, superset=superset,
                             entry_points=accepted,
                             executable_total=exec_ranges.total_bytes,
                             instructions=instructions)
