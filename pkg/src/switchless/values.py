"""Typed argument slots shared between client and worker.

Scalars live in Slot cells and lists in Vector cells; both sides read and
write through small reference objects so one translation function can serve
single calls and batched iteration alike.
"""

from __future__ import annotations

import struct

TAG_INT = "d"
TAG_UINT = "u"
TAG_FLOAT = "f"
TAG_BOOL = "b"
TAG_HANDLE = "p"

TYPE_TAGS = frozenset((TAG_INT, TAG_UINT, TAG_FLOAT, TAG_BOOL, TAG_HANDLE))
INTEGER_TAGS = frozenset((TAG_INT, TAG_UINT))


def _check_tag(tag: str) -> str:
    if tag not in TYPE_TAGS:
        raise ValueError(f"unknown type tag {tag!r}")
    return tag


class Slot:
    """A mutable scalar cell with a type tag."""

    __slots__ = ("value", "tag")

    def __init__(self, value=0, tag: str = TAG_INT):
        self.value = value
        self.tag = _check_tag(tag)

    def __repr__(self):
        return f"Slot({self.value!r}, {self.tag!r})"


class Vector:
    """A mutable list cell; elements share one type tag."""

    __slots__ = ("values", "tag")

    def __init__(self, values, tag: str = TAG_INT):
        self.values = list(values)
        self.tag = _check_tag(tag)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __setitem__(self, i, v):
        self.values[i] = v

    def __repr__(self):
        return f"Vector({self.values!r}, {self.tag!r})"


class ScalarRef:
    """Reference to a Slot; every batched iteration sees the same cell."""

    __slots__ = ("_slot",)

    def __init__(self, slot: Slot):
        self._slot = slot

    @property
    def value(self):
        return self._slot.value

    @value.setter
    def value(self, v):
        self._slot.value = v


class ElementRef:
    """Reference to one Vector element."""

    __slots__ = ("_vec", "_idx")

    def __init__(self, vec: Vector, idx: int):
        self._vec = vec
        self._idx = idx

    @property
    def value(self):
        return self._vec.values[self._idx]

    @value.setter
    def value(self, v):
        self._vec.values[self._idx] = v


def encode_value(value, tag: str) -> bytes:
    """Canonical little-endian encoding used for memo keys and hashing."""
    if tag == TAG_INT:
        return struct.pack("<q", int(value))
    if tag == TAG_UINT:
        if int(value) < 0:
            raise ValueError("unsigned slot holds a negative value")
        return struct.pack("<Q", int(value))
    if tag == TAG_FLOAT:
        return struct.pack("<d", float(value))
    if tag == TAG_BOOL:
        return b"\x01" if value else b"\x00"
    raise ValueError(f"tag {tag!r} has no canonical encoding")


def decode_value(data: bytes, tag: str):
    if tag == TAG_INT:
        return struct.unpack("<q", data)[0]
    if tag == TAG_UINT:
        return struct.unpack("<Q", data)[0]
    if tag == TAG_FLOAT:
        return struct.unpack("<d", data)[0]
    if tag == TAG_BOOL:
        return data != b"\x00"
    raise ValueError(f"tag {tag!r} has no canonical encoding")
