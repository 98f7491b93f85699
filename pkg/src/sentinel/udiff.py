"""Unified diff construction, parsing, and application over workspace snapshots.

Snapshots are mappings of workspace-relative path to text content. Diffs use
``a/<path>`` / ``b/<path>`` labels and ``/dev/null`` for created or deleted
files; files are treated as newline-terminated text.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass
from typing import Mapping

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


class MalformedDiff(Exception):
    pass


class PatchConflict(Exception):
    pass


@dataclass(frozen=True)
class Hunk:
    old_start: int
    old_count: int
    new_start: int
    new_count: int
    lines: tuple[tuple[str, str], ...]  # (tag, text) with tag in {' ', '+', '-'}

    def added(self) -> tuple[str, ...]:
        return tuple(t for tag, t in self.lines if tag == "+")

    def removed(self) -> tuple[str, ...]:
        return tuple(t for tag, t in self.lines if tag == "-")

    def text(self) -> str:
        head = f"@@ -{self.old_start},{self.old_count} +{self.new_start},{self.new_count} @@"
        return "\n".join([head] + [tag + t for tag, t in self.lines])


@dataclass(frozen=True)
class FileDiff:
    old_path: str | None  # None for a created file
    new_path: str | None  # None for a deleted file
    hunks: tuple[Hunk, ...]

    @property
    def path(self) -> str:
        p = self.new_path if self.new_path is not None else self.old_path
        assert p is not None
        return p


def _split_lines(content: str) -> list[str]:
    if content == "":
        return []
    return content.split("\n")[:-1] if content.endswith("\n") else content.split("\n")


def _join_lines(lines: list[str]) -> str:
    return "\n".join(lines) + "\n" if lines else ""


def build_diff(before: Mapping[str, str], after: Mapping[str, str]) -> str:
    """Render the delta between two snapshots as one deterministic diff text.

    Files are emitted in sorted path order; unchanged files are skipped.
    Returns "" when the snapshots are identical.
    """
    chunks: list[str] = []
    for path in sorted(set(before) | set(after)):
        old = before.get(path)
        new = after.get(path)
        if old == new:
            continue
        from_file = f"a/{path}" if old is not None else "/dev/null"
        to_file = f"b/{path}" if new is not None else "/dev/null"
        lines = difflib.unified_diff(
            _split_lines(old or ""),
            _split_lines(new or ""),
            fromfile=from_file,
            tofile=to_file,
            lineterm="",
        )
        chunks.extend(lines)
    return "\n".join(chunks) + "\n" if chunks else ""


def looks_like_diff(text: str) -> bool:
    return text.startswith("--- ")


def parse_diff(text: str) -> tuple[FileDiff, ...]:
    """Parse unified diff text into per-file hunk lists.

    Raises MalformedDiff when hunk line counts disagree with hunk headers or
    the file header structure is broken. Lines outside file sections that look
    like `diff`/`index` decorations are ignored.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    diffs: list[FileDiff] = []
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line.startswith("--- "):
            if line.startswith(("diff ", "index ")) or line == "":
                i += 1
                continue
            raise MalformedDiff(f"unexpected line outside a file section: {line!r}")
        old_label = line[4:].strip()
        i += 1
        if i >= len(lines) or not lines[i].startswith("+++ "):
            raise MalformedDiff("file header missing '+++' line")
        new_label = lines[i][4:].strip()
        i += 1

        old_path = None if old_label == "/dev/null" else _strip_prefix(old_label)
        new_path = None if new_label == "/dev/null" else _strip_prefix(new_label)
        if old_path is None and new_path is None:
            raise MalformedDiff("both sides of a file header are /dev/null")

        hunks: list[Hunk] = []
        while i < len(lines) and lines[i].startswith("@@"):
            m = _HUNK_RE.match(lines[i])
            if not m:
                raise MalformedDiff(f"bad hunk header: {lines[i]!r}")
            old_start = int(m.group(1))
            old_count = int(m.group(2)) if m.group(2) is not None else 1
            new_start = int(m.group(3))
            new_count = int(m.group(4)) if m.group(4) is not None else 1
            i += 1
            body: list[tuple[str, str]] = []
            seen_old = seen_new = 0
            while i < len(lines) and (seen_old < old_count or seen_new < new_count):
                raw = lines[i]
                if raw.startswith("\\"):  # "\ No newline at end of file"
                    i += 1
                    continue
                tag, rest = (raw[0], raw[1:]) if raw else (" ", "")
                if tag == " ":
                    seen_old += 1
                    seen_new += 1
                elif tag == "-":
                    seen_old += 1
                elif tag == "+":
                    seen_new += 1
                else:
                    raise MalformedDiff(f"bad hunk line: {raw!r}")
                body.append((tag, rest))
                i += 1
            if seen_old != old_count or seen_new != new_count:
                raise MalformedDiff(
                    f"hunk for {new_path or old_path} declares -{old_count}/+{new_count}, "
                    f"carries -{seen_old}/+{seen_new}"
                )
            hunks.append(Hunk(old_start, old_count, new_start, new_count, tuple(body)))
        if not hunks:
            raise MalformedDiff(f"file section for {new_path or old_path} has no hunks")
        diffs.append(FileDiff(old_path, new_path, tuple(hunks)))
    return tuple(diffs)


def _strip_prefix(label: str) -> str:
    if label.startswith(("a/", "b/")):
        return label[2:]
    return label


def apply_diff(files: Mapping[str, str], text: str) -> dict[str, str]:
    """Apply diff text to a snapshot, returning the patched snapshot.

    Raises PatchConflict when context or removed lines do not match.
    """
    result = dict(files)
    for fd in parse_diff(text):
        if fd.old_path is None:
            old_lines: list[str] = []
        else:
            if fd.old_path not in result:
                raise PatchConflict(f"missing file: {fd.old_path}")
            old_lines = _split_lines(result[fd.old_path])
        new_lines: list[str] = []
        cursor = 0  # index into old_lines
        for h in fd.hunks:
            start = h.old_start - 1 if h.old_count > 0 else h.old_start
            if start < cursor or start > len(old_lines):
                raise PatchConflict(f"hunk out of range in {fd.path}")
            new_lines.extend(old_lines[cursor:start])
            cursor = start
            for tag, content in h.lines:
                if tag == " ":
                    if cursor >= len(old_lines) or old_lines[cursor] != content:
                        raise PatchConflict(f"context mismatch in {fd.path} at line {cursor + 1}")
                    new_lines.append(content)
                    cursor += 1
                elif tag == "-":
                    if cursor >= len(old_lines) or old_lines[cursor] != content:
                        raise PatchConflict(f"removal mismatch in {fd.path} at line {cursor + 1}")
                    cursor += 1
                else:
                    new_lines.append(content)
        new_lines.extend(old_lines[cursor:])
        if fd.old_path is not None:
            del result[fd.old_path]
        if fd.new_path is not None:
            result[fd.new_path] = _join_lines(new_lines)
    return result
