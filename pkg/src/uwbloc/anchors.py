"""Anchor provisioning and persistence.

Anchor files are plain text, one anchor per line::

    # version 3
    0x02 0.81 3.63 3.01
    0x03 0.81 6.38 3.01

Ids are hex, coordinates decimal meters, ``#`` starts a comment. The table
version is kept in an optional ``# version N`` header line so that
:func:`load` and :func:`store` round-trip exactly.

Tables are edited with one-line text commands (:func:`apply_command`)::

    SET <id> <x> <y> <z>   upsert an anchor
    GET <id>               show one anchor
    LIST                   show all anchors, sorted by id
    DEL <id>               remove an anchor
"""

from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterator, Mapping

from .errors import AnchorConflictError, AnchorParseError, DomainError, NotProvisionedError
from .geometry import AnchorId, Point3, format_anchor_id, parse_anchor_id

_VERSION_RE = re.compile(r"^#\s*version\s+(\d+)\s*$")


@dataclass(frozen=True)
class AnchorTable:
    """Immutable mapping of anchor id to position, plus a mutation counter."""

    entries: Mapping[AnchorId, Point3] = field(default_factory=dict)
    version: int = 0

    def __post_init__(self) -> None:
        if self.version < 0:
            raise ValueError("version must be non-negative")
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AnchorTable):
            return NotImplemented
        return self.version == other.version and dict(self.entries) == dict(other.entries)

    def __hash__(self) -> int:
        return hash((self.version, tuple(sorted(self.entries.items()))))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, anchor_id: object) -> bool:
        return anchor_id in self.entries

    def __getitem__(self, anchor_id: int) -> Point3:
        return self.entries[anchor_id]

    def __iter__(self) -> Iterator[AnchorId]:
        return iter(self.ids())

    def ids(self) -> list[AnchorId]:
        return sorted(self.entries)

    def items(self) -> list[tuple[AnchorId, Point3]]:
        return [(i, self.entries[i]) for i in self.ids()]

    def same_content(self, other: AnchorTable) -> bool:
        return dict(self.entries) == dict(other.entries)

    def with_anchor(self, anchor_id: int, pos: Point3) -> AnchorTable:
        entries = dict(self.entries)
        entries[AnchorId(anchor_id)] = pos
        return AnchorTable(entries, self.version + 1)

    def without(self, anchor_id: int) -> AnchorTable:
        entries = dict(self.entries)
        del entries[anchor_id]
        return AnchorTable(entries, self.version + 1)

    @classmethod
    def from_rows(cls, rows, version: int = 0) -> AnchorTable:
        entries: dict[AnchorId, Point3] = {}
        for anchor_id, x, y, z in rows:
            if anchor_id in entries:
                raise AnchorConflictError(anchor_id)
            entries[AnchorId(anchor_id)] = Point3(x, y, z)
        return cls(entries, version)


def format_line(anchor_id: int, pos: Point3) -> str:
    # repr() is the shortest string that parses back to the same float
    return f"{format_anchor_id(anchor_id)} {pos.x!r} {pos.y!r} {pos.z!r}"


def dumps(table: AnchorTable) -> str:
    lines = [f"# version {table.version}"]
    lines.extend(format_line(i, p) for i, p in table.items())
    return "\n".join(lines) + "\n"


def loads(text: str) -> AnchorTable:
    entries: dict[AnchorId, Point3] = {}
    version = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        match = _VERSION_RE.match(stripped)
        if match:
            version = int(match.group(1))
            continue
        content = stripped.split("#", 1)[0].strip()
        if not content:
            continue
        tokens = content.split()
        if len(tokens) != 4:
            raise AnchorParseError(line_no, f"expected 'id x y z', got {content!r}")
        try:
            anchor_id = parse_anchor_id(tokens[0])
        except ValueError:
            raise AnchorParseError(line_no, f"bad anchor id {tokens[0]!r}") from None
        try:
            pos = Point3(*(float(t) for t in tokens[1:]))
        except (ValueError, DomainError):
            raise AnchorParseError(line_no, f"bad coordinates in {content!r}") from None
        if anchor_id in entries:
            raise AnchorConflictError(anchor_id)
        entries[anchor_id] = pos
    return AnchorTable(entries, version)


def load(path: str | os.PathLike) -> AnchorTable:
    """Read an anchor file.

    Raises
    ------
    NotProvisionedError
        If the file does not exist.
    AnchorParseError
        On a malformed line (carries the 1-based line number).
    AnchorConflictError
        If an id appears twice.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise NotProvisionedError(f"not-provisioned: no anchor file at {path}") from None
    return loads(text)


def store(table: AnchorTable, path: str | os.PathLike) -> None:
    """Write ``table`` to ``path`` atomically.

    The file is written next to its destination and renamed into place, so a
    failed write leaves any previous file untouched. Errors surface as
    :class:`OSError`.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dumps(table))
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def apply_command(table: AnchorTable, command_line: str) -> tuple[AnchorTable, str]:
    """Apply one text command and return ``(new_table, reply)``.

    The reply is always a single line starting with ``OK`` or ``ERR``.
    Failed commands return the table unchanged.
    """
    tokens = command_line.strip().split()
    if not tokens:
        return table, "ERR unknown-command"
    verb, args = tokens[0].upper(), tokens[1:]

    if verb == "LIST":
        if args:
            return table, "ERR parse: LIST takes no arguments"
        reply = f"OK {len(table)} anchors"
        if len(table):
            reply += ": " + "; ".join(format_line(i, p) for i, p in table.items())
        return table, reply

    if verb in ("GET", "DEL"):
        if len(args) != 1:
            return table, f"ERR parse: {verb} expects one id"
        try:
            anchor_id = parse_anchor_id(args[0])
        except ValueError:
            return table, f"ERR parse: bad anchor id {args[0]!r}"
        if anchor_id not in table:
            return table, f"ERR not-found {format_anchor_id(anchor_id)}"
        if verb == "GET":
            return table, "OK " + format_line(anchor_id, table[anchor_id])
        return table.without(anchor_id), f"OK deleted {format_anchor_id(anchor_id)}"

    if verb == "SET":
        if len(args) != 4:
            return table, "ERR parse: SET expects <id> <x> <y> <z>"
        try:
            anchor_id = parse_anchor_id(args[0])
        except ValueError:
            return table, f"ERR parse: bad anchor id {args[0]!r}"
        try:
            pos = Point3(*(float(a) for a in args[1:]))
        except (ValueError, DomainError):
            return table, "ERR parse: coordinates must be finite numbers"
        return table.with_anchor(anchor_id, pos), "OK " + format_line(anchor_id, pos)

    return table, f"ERR unknown-command {tokens[0]}"
