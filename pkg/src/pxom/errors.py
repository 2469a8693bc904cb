"""Exception hierarchy shared across the toolchain."""


class PxomError(Exception):
    """Base class for all toolchain errors."""


class NotElf(PxomError):
    """Input bytes do not carry the ELF magic."""


class Unsupported(PxomError):
    """ELF file is not 64-bit little-endian ET_EXEC/ET_DYN."""


class Malformed(PxomError):
    """ELF tables point outside the file or are internally inconsistent."""


class SectionExists(PxomError):
    """The image already carries a .xom section."""


class NoXomSection(PxomError):
    """The image has no .xom section."""


class CorruptXom(PxomError):
    """.xom payload has bad magic/version or counts inconsistent with size."""


class InvariantViolation(PxomError):
    """Parsed block lists violate disjointness or range containment."""


class OutOfRange(PxomError):
    """Address not inside any executable range."""


class EntryNotInSuperset(PxomError):
    """Disassembly entry point is not an unclassified byte."""


class NoExecutableCode(PxomError):
    """Image has no executable segment."""


class EmptyGroundTruth(PxomError):
    """Ground-truth code set is empty."""


class ZeroInstructions(PxomError):
    """Read-intensity denominator is zero."""


class MonitorTerminated(PxomError):
    """Monitor received an event after a denied read."""


class TraceParse(PxomError):
    """Malformed trace line."""

    def __init__(self, message, lineno):
        super().__init__("line %d: %s" % (lineno, message))
        self.lineno = lineno
