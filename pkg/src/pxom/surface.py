"""Evaluation metrics and attack-surface analyses."""

from dataclasses import dataclass

from . import x86
from .disasm import _ExecView
from .errors import EmptyGroundTruth, ZeroInstructions

DEFAULT_GADGET_DEPTH = 10
WRPKRU_BYTES = b"\x0f\x01\xef"

_TERMINATORS = {
    x86.RETURN: "ret",
    x86.INDIRECT_JUMP: "jmp_reg",
    x86.INDIRECT_CALL: "call_reg",
}


@dataclass(frozen=True)
class Metrics:
    code_coverage: float
    overall_coverage: float
    edb_count: int
    avg_edb_size: float

    @property
    def readable_fraction(self):
        return 1.0 - self.overall_coverage


@dataclass(frozen=True)
class Gadget:
    start: int
    length: int
    instruction_count: int
    terminator: str
    block: object


def code_coverage(report, ground_truth_code):
    if not ground_truth_code or ground_truth_code.total_bytes == 0:
        raise EmptyGroundTruth("ground-truth code set is empty")
    hit = report.code.intersection_size(ground_truth_code)
    return hit / ground_truth_code.total_bytes


def overall_coverage(report):
    return report.code.total_bytes / report.executable_total


def edb_stats(report):
    count = len(report.superset)
    if count == 0:
        return 0, 0
    return count, report.superset.total_bytes / count


def metrics(report, ground_truth_code=None):
    count, avg = edb_stats(report)
    cc = (code_coverage(report, ground_truth_code)
          if ground_truth_code is not None else None)
    return Metrics(code_coverage=cc, overall_coverage=overall_coverage(report),
                   edb_count=count, avg_edb_size=avg)


def read_intensity(reads, executed):
    if executed <= 0:
        raise ZeroInstructions("executed-instruction count must be positive")
    return reads / executed


def gadget_scan(image, report, max_instructions=DEFAULT_GADGET_DEPTH):
    """Usable gadgets fully contained in readable blocks.

    Decodes forward from every byte offset; a gadget must end in a
    ret / indirect jump / indirect call without leaving its block.
    Direct branches leave the block deterministically and disqualify
    the walk.
    """
    view = _ExecView(image)
    gadgets = {}
    for block in report.superset:
        for start in range(block.start, block.end):
            va = start
            count = 0
            while count < max_instructions and va < block.end:
                ins = view.decode(va)
                if ins is None or ins.end > block.end:
                    break
                count += 1
                term = _TERMINATORS.get(ins.kind)
                if term is not None:
                    key = (start, term)
                    if key not in gadgets:
                        gadgets[key] = Gadget(start, ins.end - start, count,
                                              term, block)
                    break
                if ins.kind != x86.FALLTHROUGH:
                    break
                va = ins.end
    return sorted(gadgets.values(), key=lambda g: (g.start, g.terminator))


def wrpkru_scan(image, report):
    """All WRPKRU byte sequences in executable memory, with location label."""
    view = _ExecView(image)
    hits = []
    for iv in view.ranges:
        data = view.read(iv.start, len(iv))
        pos = data.find(WRPKRU_BYTES)
        while pos >= 0:
            va = iv.start + pos
            label = ("inside_superset"
                     if report.superset.contains_range(va, 1)
                     else "inside_code")
            hits.append((va, label))
            pos = data.find(WRPKRU_BYTES, pos + 1)
    return hits
