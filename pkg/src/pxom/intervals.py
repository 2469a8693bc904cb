"""Half-open byte interval algebra over virtual addresses.

All bookkeeping of code vs. readable-data regions is done with these two
types.  An IntervalSet is always normalized: sorted by start, pairwise
disjoint, adjacent runs merged.
"""

from bisect import bisect_right
from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class ByteInterval:
    start: int
    end: int

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError("empty interval [%#x, %#x)" % (self.start, self.end))

    def __len__(self):
        return self.end - self.start

    def contains(self, addr, size=1):
        return self.start <= addr and addr + size <= self.end

    def overlaps(self, other):
        return self.start < other.end and other.start < self.end

    def __repr__(self):
        return "[%#x, %#x)" % (self.start, self.end)


class IntervalSet:
    """Normalized set of disjoint half-open intervals."""

    __slots__ = ("_starts", "_ends")

    def __init__(self, intervals=()):
        self._starts = []
        self._ends = []
        for iv in intervals:
            self.add(iv.start, iv.end)

    @classmethod
    def from_pairs(cls, pairs):
        s = cls()
        for start, end in pairs:
            s.add(start, end)
        return s

    def add(self, start, end):
        if start >= end:
            raise ValueError("empty interval [%#x, %#x)" % (start, end))
        # find the run of existing intervals that touch [start, end)
        i = bisect_right(self._starts, start)
        if i > 0 and self._ends[i - 1] >= start:
            i -= 1
        j = i
        while j < len(self._starts) and self._starts[j] <= end:
            j += 1
        if i < j:
            start = min(start, self._starts[i])
            end = max(end, self._ends[j - 1])
        self._starts[i:j] = [start]
        self._ends[i:j] = [end]

    def remove(self, start, end):
        if start >= end:
            return
        i = bisect_right(self._starts, start)
        if i > 0 and self._ends[i - 1] > start:
            i -= 1
        new_starts, new_ends = [], []
        j = i
        while j < len(self._starts) and self._starts[j] < end:
            s, e = self._starts[j], self._ends[j]
            if s < start:
                new_starts.append(s)
                new_ends.append(start)
            if e > end:
                new_starts.append(end)
                new_ends.append(e)
            j += 1
        self._starts[i:j] = new_starts
        self._ends[i:j] = new_ends

    def __contains__(self, addr):
        return self.contains_range(addr, 1)

    def contains_range(self, addr, size):
        i = bisect_right(self._starts, addr) - 1
        return i >= 0 and addr + size <= self._ends[i]

    def envelope(self, addr):
        """Interval containing addr, or None."""
        i = bisect_right(self._starts, addr) - 1
        if i >= 0 and addr < self._ends[i]:
            return ByteInterval(self._starts[i], self._ends[i])
        return None

    def intersection_size(self, other):
        total = 0
        for iv in other:
            i = bisect_right(self._starts, iv.start) - 1
            if i < 0:
                i = 0
            while i < len(self._starts) and self._starts[i] < iv.end:
                lo = max(self._starts[i], iv.start)
                hi = min(self._ends[i], iv.end)
                if lo < hi:
                    total += hi - lo
                i += 1
        return total

    @property
    def total_bytes(self):
        return sum(e - s for s, e in zip(self._starts, self._ends))

    def __iter__(self):
        for s, e in zip(self._starts, self._ends):
            yield ByteInterval(s, e)

    def __len__(self):
        return len(self._starts)

    def __bool__(self):
        return bool(self._starts)

    def __eq__(self, other):
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._starts == other._starts and self._ends == other._ends

    def copy(self):
        s = IntervalSet()
        s._starts = list(self._starts)
        s._ends = list(self._ends)
        return s

    def __repr__(self):
        return "IntervalSet(%s)" % ", ".join(repr(iv) for iv in self)
