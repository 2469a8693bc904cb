"""ELF64 loading, modeling, and rewriting.

Only 64-bit little-endian ET_EXEC/ET_DYN files are supported.  Rewriting
never touches program-header-mapped bytes: the protection metadata lives
in one reserved e_ident byte plus an appended, non-allocated `.xom`
section, so stock loaders keep working.
"""

import struct
from dataclasses import dataclass

from .blocks import EmbeddedDataBlock, XomLists
from .errors import (CorruptXom, Malformed, NoXomSection, NotElf,
                     SectionExists, Unsupported)
from .intervals import ByteInterval, IntervalSet

ELF_MAGIC = b"\x7fELF"
XOM_FLAG_INDEX = 10          # second byte of e_ident's padding area
XOM_FLAG_VALUE = 0x01
XOM_SECTION_NAME = ".xom"
XOM_MAGIC = b"XOM1"
XOM_VERSION = 1

_EHDR = struct.Struct("<16sHHIQQQIHHHHHH")
_PHDR = struct.Struct("<IIQQQQQQ")
_SHDR = struct.Struct("<IIQQQQIIQQ")
_XOM_HEADER = struct.Struct("<4sIQQ")
_XOM_ENTRY = struct.Struct("<QQQ")

PT_LOAD = 1
PF_X = 1
SHT_PROGBITS = 1
SHT_STRTAB = 3


@dataclass(frozen=True)
class Section:
    name: str
    sh_type: int
    flags: int
    vaddr: int
    offset: int
    size: int
    entsize: int
    link: int
    info: int
    addralign: int

    def data(self, raw):
        if self.sh_type == 8:  # SHT_NOBITS
            return b""
        return raw[self.offset:self.offset + self.size]


@dataclass(frozen=True)
class Segment:
    p_type: int
    flags: int
    offset: int
    vaddr: int
    filesz: int
    memsz: int

    @property
    def executable(self):
        return bool(self.flags & PF_X)


@dataclass(frozen=True)
class BinaryImage:
    raw: bytes
    elf_type: int
    entry_point: int
    sections: tuple
    segments: tuple
    shoff: int
    shnum: int
    shstrndx: int

    def section_by_name(self, name):
        for sec in self.sections:
            if sec.name == name:
                return sec
        return None

    def read_vaddr(self, addr, size):
        """Bytes at a virtual address, zero-filled past file content."""
        for seg in self.segments:
            if seg.p_type != PT_LOAD:
                continue
            if seg.vaddr <= addr and addr + size <= seg.vaddr + seg.memsz:
                off = addr - seg.vaddr
                avail = max(0, min(size, seg.filesz - off))
                data = self.raw[seg.offset + off:seg.offset + off + avail]
                return data + b"\x00" * (size - len(data))
        return None


def load_elf(data):
    data = bytes(data)
    if len(data) < 4 or data[:4] != ELF_MAGIC:
        raise NotElf("bad ELF magic")
    if len(data) < _EHDR.size:
        raise Malformed("truncated ELF header")
    if data[4] != 2 or data[5] != 1:
        raise Unsupported("only 64-bit little-endian ELF is supported")
    (_ident, e_type, e_machine, _ver, e_entry, e_phoff, e_shoff, _flags,
     _ehsize, e_phentsize, e_phnum, e_shentsize, e_shnum,
     e_shstrndx) = _EHDR.unpack_from(data, 0)
    if e_type not in (2, 3):  # ET_EXEC, ET_DYN
        raise Unsupported("unsupported ELF type %d" % e_type)

    segments = []
    if e_phnum:
        if e_phentsize < _PHDR.size or e_phoff + e_phnum * e_phentsize > len(data):
            raise Malformed("program header table out of bounds")
        for i in range(e_phnum):
            p_type, p_flags, p_offset, p_vaddr, _paddr, p_filesz, p_memsz, _al = \
                _PHDR.unpack_from(data, e_phoff + i * e_phentsize)
            if p_type == PT_LOAD and p_offset + p_filesz > len(data):
                raise Malformed("segment %d exceeds file size" % i)
            segments.append(Segment(p_type, p_flags, p_offset, p_vaddr,
                                    p_filesz, p_memsz))

    sections = []
    if e_shnum:
        if e_shentsize < _SHDR.size or e_shoff + e_shnum * e_shentsize > len(data):
            raise Malformed("section header table out of bounds")
        raw_shdrs = [_SHDR.unpack_from(data, e_shoff + i * e_shentsize)
                     for i in range(e_shnum)]
        names = {}
        if e_shstrndx < e_shnum:
            stroff, strsize = raw_shdrs[e_shstrndx][4], raw_shdrs[e_shstrndx][5]
            if stroff + strsize > len(data):
                raise Malformed("section string table out of bounds")
            strtab = data[stroff:stroff + strsize]
            for sh in raw_shdrs:
                name_off = sh[0]
                end = strtab.find(b"\x00", name_off)
                names[name_off] = strtab[name_off:end if end >= 0 else None].decode(
                    "latin-1")
        for sh in raw_shdrs:
            sh_name, sh_type, sh_flags, sh_addr, sh_offset, sh_size, \
                sh_link, sh_info, sh_align, sh_entsize = sh
            if sh_type not in (8, 0) and sh_offset + sh_size > len(data):
                raise Malformed("section exceeds file size")
            sections.append(Section(names.get(sh_name, ""), sh_type, sh_flags,
                                    sh_addr, sh_offset, sh_size, sh_entsize,
                                    sh_link, sh_info, sh_align))

    image = BinaryImage(raw=data, elf_type=e_type, entry_point=e_entry,
                        sections=tuple(sections), segments=tuple(segments),
                        shoff=e_shoff, shnum=e_shnum, shstrndx=e_shstrndx)
    exec_ranges = executable_ranges(image)
    for sec in sections:
        if sec.flags & 0x4 and sec.flags & 0x2 and sec.size:  # EXECINSTR|ALLOC
            if not exec_ranges.contains_range(sec.vaddr, sec.size):
                raise Malformed("executable section %s outside executable "
                                "segments" % sec.name)
    if e_entry and exec_ranges and e_entry not in exec_ranges:
        raise Malformed("entry point %#x outside executable ranges" % e_entry)
    return image


def executable_ranges(image):
    ranges = IntervalSet()
    for seg in image.segments:
        if seg.p_type == PT_LOAD and seg.executable and seg.memsz:
            ranges.add(seg.vaddr, seg.vaddr + seg.memsz)
    return ranges


def is_xom_enabled(image):
    return image.raw[XOM_FLAG_INDEX] == XOM_FLAG_VALUE


def set_xom_flag(image):
    raw = bytearray(image.raw)
    raw[XOM_FLAG_INDEX] = XOM_FLAG_VALUE
    return load_elf(bytes(raw))


def serialize_lists(lists):
    out = bytearray()
    out += _XOM_HEADER.pack(XOM_MAGIC, XOM_VERSION,
                            len(lists.optimization), len(lists.regular))
    for block in list(lists.optimization) + list(lists.regular):
        out += _XOM_ENTRY.pack(block.interval.start, block.interval.end,
                               block.static_ref_count)
    return bytes(out)


def deserialize_lists(payload):
    if len(payload) < _XOM_HEADER.size:
        raise CorruptXom("payload shorter than header")
    magic, version, opt_count, regr_count = _XOM_HEADER.unpack_from(payload, 0)
    if magic != XOM_MAGIC:
        raise CorruptXom("bad magic %r" % magic)
    if version != XOM_VERSION:
        raise CorruptXom("unsupported version %d" % version)
    expected = _XOM_HEADER.size + (opt_count + regr_count) * _XOM_ENTRY.size
    if len(payload) != expected:
        raise CorruptXom("entry table size mismatch: %d != %d"
                         % (len(payload), expected))
    blocks = []
    for i in range(opt_count + regr_count):
        start, end, refs = _XOM_ENTRY.unpack_from(
            payload, _XOM_HEADER.size + i * _XOM_ENTRY.size)
        if start >= end:
            raise CorruptXom("empty block [%#x, %#x)" % (start, end))
        blocks.append(EmbeddedDataBlock(ByteInterval(start, end), refs))
    return XomLists(regular=blocks[opt_count:], optimization=blocks[:opt_count])


def attach_xom_section(image, lists):
    if image.section_by_name(XOM_SECTION_NAME) is not None:
        raise SectionExists(".xom section already present")
    lists.validate(executable_ranges(image))
    payload = serialize_lists(lists)
    raw = image.raw

    old_shdrs = []
    for i in range(image.shnum):
        old_shdrs.append(list(_SHDR.unpack_from(raw, image.shoff + i * _SHDR.size)))

    if image.shnum and image.shstrndx < image.shnum:
        shstrndx = image.shstrndx
        old_strtab = image.sections[shstrndx].data(raw)
    else:
        # no usable section table; synthesize null section + .shstrtab
        old_shdrs = [[0] * 10,
                     [1, SHT_STRTAB, 0, 0, 0, 0, 0, 0, 1, 0]]
        shstrndx = 1
        old_strtab = b"\x00.shstrtab\x00"

    name_off = len(old_strtab)
    new_strtab = old_strtab + XOM_SECTION_NAME.encode() + b"\x00"

    out = bytearray(raw)
    # pad so appended metadata is 8-aligned; segments are untouched
    out += b"\x00" * (-len(out) % 8)
    strtab_off = len(out)
    out += new_strtab
    out += b"\x00" * (-len(out) % 8)
    payload_off = len(out)
    out += payload
    out += b"\x00" * (-len(out) % 8)
    shoff = len(out)

    shdrs = [list(sh) for sh in old_shdrs]
    shdrs[shstrndx][4] = strtab_off
    shdrs[shstrndx][5] = len(new_strtab)
    shdrs.append([name_off, SHT_PROGBITS, 0, 0, payload_off, len(payload),
                  0, 0, 8, _XOM_ENTRY.size])
    for sh in shdrs:
        out += _SHDR.pack(*sh)

    fields = list(_EHDR.unpack_from(out, 0))
    fields[6] = shoff            # e_shoff
    fields[11] = _SHDR.size      # e_shentsize
    fields[12] = len(shdrs)      # e_shnum
    fields[13] = shstrndx        # e_shstrndx
    _EHDR.pack_into(out, 0, *fields)
    return load_elf(bytes(out))


def parse_xom_section(image):
    sec = image.section_by_name(XOM_SECTION_NAME)
    if sec is None:
        raise NoXomSection("no .xom section in image")
    lists = deserialize_lists(sec.data(image.raw))
    lists.validate(executable_ranges(image))
    return lists
