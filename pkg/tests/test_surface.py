import random

import pytest

from pxom.disasm import compute_superset
from pxom.errors import EmptyGroundTruth, ZeroInstructions
from pxom.image import load_elf
from pxom.intervals import IntervalSet
from pxom.surface import (code_coverage, edb_stats, gadget_scan, metrics,
                          overall_coverage, read_intensity, wrpkru_scan)

from conftest import exec_elf, require_tool
from oracle_gadgets import brute_force_gadgets


class FakeReport:
    def __init__(self, code, superset, total):
        self.code = code
        self.superset = superset
        self.executable_total = total


def report_of(code_pairs, superset_pairs, total):
    return FakeReport(IntervalSet.from_pairs(code_pairs),
                      IntervalSet.from_pairs(superset_pairs), total)


class TestCoverage:
    def test_code_coverage_arithmetic(self):
        report = report_of([(0, 9707)], [], 10000)
        gt = IntervalSet.from_pairs([(0, 10000)])
        assert code_coverage(report, gt) == pytest.approx(0.9707, rel=1e-12)

    def test_identity(self):
        report = report_of([(0, 100)], [], 100)
        gt = IntervalSet.from_pairs([(0, 100)])
        assert code_coverage(report, gt) == 1.0

    def test_empty_code(self):
        report = report_of([], [(0, 100)], 100)
        gt = IntervalSet.from_pairs([(0, 100)])
        assert code_coverage(report, gt) == 0.0

    def test_empty_ground_truth(self):
        with pytest.raises(EmptyGroundTruth):
            code_coverage(report_of([(0, 10)], [], 10), IntervalSet())

    def test_overall_coverage(self):
        report = report_of([(0, 95290)], [(95290, 100000)], 100000)
        assert overall_coverage(report) == pytest.approx(0.9529, rel=1e-12)

    def test_overall_coverage_no_superset(self):
        assert overall_coverage(report_of([(0, 50)], [], 50)) == 1.0

    def test_readable_fraction_complement(self):
        report = report_of([(0, 95290)], [(95290, 100000)], 100000)
        m = metrics(report)
        assert m.readable_fraction == pytest.approx(0.0471, rel=1e-12)
        assert m.readable_fraction + m.overall_coverage == 1.0


class TestEdbStats:
    def test_two_blocks(self):
        count, avg = edb_stats(report_of([], [(0, 10), (20, 52)], 100))
        assert (count, avg) == (2, 21)

    def test_empty(self):
        assert edb_stats(report_of([], [], 100)) == (0, 0)


class TestReadIntensity:
    def test_basic(self):
        assert read_intensity(1, 10_000_000) == pytest.approx(1e-7, rel=1e-12)

    def test_zero_reads(self):
        assert read_intensity(0, 100) == 0.0

    def test_openssl_scale(self):
        assert read_intensity(14, 10**8) == pytest.approx(1.4e-7, rel=1e-12)

    def test_zero_instructions(self):
        with pytest.raises(ZeroInstructions):
            read_intensity(1, 0)


def planted_image(block_bytes):
    """ret at entry, then an unreachable data block."""
    code = b"\xc3" + bytes(block_bytes)
    return load_elf(exec_elf(code))


class TestGadgetScan:
    def test_pop_ret_two_gadgets(self):
        image = planted_image(b"\x58\xc3")
        report = compute_superset(image)
        gadgets = gadget_scan(image, report)
        assert {(g.start, g.terminator, g.instruction_count)
                for g in gadgets} == {(0x1001, "ret", 2), (0x1002, "ret", 1)}

    def test_no_terminators(self):
        image = planted_image(b"\x90" * 8)
        report = compute_superset(image)
        assert gadget_scan(image, report) == []

    def test_gadget_never_leaves_block(self):
        # ret placed outside the superset block is unreachable for gadgets
        image = planted_image(b"\x58")  # pop rax, no terminator in block
        report = compute_superset(image)
        assert gadget_scan(image, report) == []

    @pytest.mark.parametrize("payload", [
        b"\x58\xc3",
        b"\x00" * 6,
        b"\x0f\x01\xef\xc3",
        b"\x90\x55\x5d\xc3\x90",
        b"\xff\xe0",
        b"\xff\xd3\x90",
    ])
    def test_matches_brute_force_oracle(self, payload):
        require_tool("objdump")
        image = planted_image(payload)
        report = compute_superset(image)
        got = {(g.start, g.terminator) for g in gadget_scan(image, report)}
        expected = set()
        for block in report.superset:
            data = image.read_vaddr(block.start, len(block))
            expected |= brute_force_gadgets(data, block.start)
        assert got == expected

    def test_random_fixture_matches_oracle(self):
        require_tool("objdump")
        rng = random.Random(9)
        units = [b"\x90", b"\x53", b"\x55", b"\x58", b"\x5b", b"\x5d",
                 b"\xc3", b"\xff\xe0", b"\xff\xd0", b"\x0f\x01\xef"]
        payload = b"".join(rng.choice(units) for _ in range(24))
        image = planted_image(payload)
        report = compute_superset(image)
        got = {(g.start, g.terminator) for g in gadget_scan(image, report)}
        expected = set()
        for block in report.superset:
            data = image.read_vaddr(block.start, len(block))
            expected |= brute_force_gadgets(data, block.start)
        assert got == expected


class TestWrpkruScan:
    def test_planted_in_data(self):
        image = planted_image(b"\x0f\x01\xef")
        report = compute_superset(image)
        assert wrpkru_scan(image, report) == [(0x1001, "inside_superset")]

    def test_absent(self):
        image = planted_image(b"\x90" * 4)
        report = compute_superset(image)
        assert wrpkru_scan(image, report) == []

    def test_overlapping_plant(self):
        image = planted_image(b"\x0f\x0f\x01\xef")
        report = compute_superset(image)
        assert wrpkru_scan(image, report) == [(0x1002, "inside_superset")]

    def test_inside_code_label(self):
        # reachable code: wrpkru; ret
        image = load_elf(exec_elf(b"\x0f\x01\xef\xc3"))
        report = compute_superset(image)
        assert wrpkru_scan(image, report) == [(0x1000, "inside_code")]
