"""Architectural seed documents: a small declarative rule language.

A `.seed` file declares the layer map of a codebase and the conformance rules
an agent session is checked against. Example::

    vocabulary: cache latency direct-db

    layers:
      controller: src/controllers/** src/api/**
      dal: src/dal/**

    rules:
      db-via-dal:
        category: architectural_drift
        severity: block
        forbid-layer-edge: controller -> dal-bypass
        via-import: \\bdb\\.raw\\b
        rationale: All database access is routed through the data-access layer.

Layer globs match workspace-relative paths; ``**`` crosses directory
separators (zero or more segments), ``*`` and ``?`` stay within one segment.
Classification precedence is declaration order, first match wins.

Clause kinds (exactly one per rule):

* ``forbid-layer-edge: FROM -> TO`` with ``via-import: REGEX`` (an added line
  in a FROM-layer file matches the regex) and/or ``via-path-write: true`` (one
  change set touches both a FROM-layer and a TO-layer file). FROM must be a
  declared layer; TO must be declared only when via-path-write is used —
  with via-import alone it may name a conceptual target such as
  ``dal-bypass``.
* ``forbid-command: REGEX`` over executed shell command text.
* ``protect-region: GLOB [GLOB ...]`` plus optional ``reason:`` — any
  write-class change touching a matching path violates.
* ``forbid-intent: TAG [TAG ...]`` plus optional ``when-tool: NAME`` — a
  reasoning step declaring one of the tags (optionally only when it goes on
  to invoke the named tool).
* ``require-action: LAYER -> TOOL`` — once the layer is touched, the tool
  must run again before the session ends.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

CATEGORIES = ("architectural_drift", "semantic_stability", "security", "process")
SEVERITIES = ("info", "warn", "block")

_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


class SeedError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        loc = f" (line {line})" if line else ""
        super().__init__(msg + loc)
        self.line = line
        self.col = col


class SeedSyntaxError(SeedError):
    pass


class UnknownLayer(SeedError):
    pass


class DuplicateRuleId(SeedError):
    pass


class BadRegex(SeedError):
    pass


class UnknownTag(SeedError):
    pass


@dataclass(frozen=True)
class ForbidLayerEdge:
    from_layer: str
    to_layer: str
    import_pattern: str | None
    path_write: bool


@dataclass(frozen=True)
class ForbidCommand:
    pattern: str


@dataclass(frozen=True)
class ProtectRegion:
    globs: tuple[str, ...]
    reason: str


@dataclass(frozen=True)
class ForbidIntent:
    tags: tuple[str, ...]
    when_tool: str | None


@dataclass(frozen=True)
class RequireAction:
    if_layer_touched: str
    then_tool: str


Clause = Union[ForbidLayerEdge, ForbidCommand, ProtectRegion, ForbidIntent, RequireAction]


@dataclass(frozen=True)
class LayerDecl:
    name: str
    globs: tuple[str, ...]
    line: int


@dataclass(frozen=True)
class RuleDecl:
    rule_id: str
    category: str
    severity: str
    clause: Clause
    rationale: str
    line: int


@dataclass(frozen=True)
class SeedDocument:
    layers: tuple[LayerDecl, ...]
    rules: tuple[RuleDecl, ...]
    vocabulary: tuple[str, ...]


def glob_to_regex(glob: str) -> str:
    """Translate a path glob into an anchored regex over '/'-separated paths."""
    out = []
    i = 0
    n = len(glob)
    while i < n:
        c = glob[i]
        if c == "*":
            if glob[i : i + 2] == "**":
                # '**' is special only as a whole segment.
                before_ok = i == 0 or glob[i - 1] == "/"
                after = glob[i + 2 : i + 3]
                if before_ok and after == "/":
                    out.append("(?:[^/]+/)*")
                    i += 3
                    continue
                if before_ok and after == "":
                    if i == 0:
                        out.append(".*")
                    else:
                        out.pop()  # drop the '/' already emitted
                        out.append("(?:/[^/]+)*")
                    i += 2
                    continue
                # Inside a segment a doubled star degrades to '*'.
                out.append("[^/]*")
                i += 2
                continue
            out.append("[^/]*")
            i += 1
        elif c == "?":
            out.append("[^/]")
            i += 1
        elif c == "[":
            j = i + 1
            if j < n and glob[j] in "!^":
                j += 1
            if j < n and glob[j] == "]":
                j += 1
            while j < n and glob[j] != "]":
                j += 1
            if j >= n:
                out.append(re.escape(c))
                i += 1
            else:
                cls = glob[i + 1 : j].replace("!", "^", 1) if glob[i + 1] == "!" else glob[i + 1 : j]
                out.append(f"[{cls}]")
                i = j + 1
        else:
            out.append(re.escape(c))
            i += 1
    return "^" + "".join(out) + "$"


def normalize_path(path: str) -> str:
    path = path.replace("\\", "/")
    while path.startswith("./"):
        path = path[2:]
    return path.lstrip("/")


@dataclass(frozen=True)
class CompiledRule:
    decl: RuleDecl
    import_re: re.Pattern | None = None
    command_re: re.Pattern | None = None
    region_res: tuple[re.Pattern, ...] = ()


@dataclass(frozen=True)
class CompiledSeeds:
    document: SeedDocument
    layer_matchers: tuple[tuple[str, tuple[re.Pattern, ...]], ...]
    rules: tuple[CompiledRule, ...]

    def classify_path(self, path: str) -> str | None:
        p = normalize_path(path)
        for name, patterns in self.layer_matchers:
            for pat in patterns:
                if pat.match(p):
                    return name
        return None


def compile_seeds(doc: SeedDocument) -> CompiledSeeds:
    """Build the immutable evaluable form of a validated document."""
    layer_matchers = tuple(
        (layer.name, tuple(re.compile(glob_to_regex(g)) for g in layer.globs))
        for layer in doc.layers
    )
    compiled: list[CompiledRule] = []
    for rule in doc.rules:
        c = rule.clause
        if isinstance(c, ForbidLayerEdge):
            imp = re.compile(c.import_pattern) if c.import_pattern else None
            compiled.append(CompiledRule(rule, import_re=imp))
        elif isinstance(c, ForbidCommand):
            compiled.append(CompiledRule(rule, command_re=re.compile(c.pattern)))
        elif isinstance(c, ProtectRegion):
            regs = tuple(re.compile(glob_to_regex(g)) for g in c.globs)
            compiled.append(CompiledRule(rule, region_res=regs))
        else:
            compiled.append(CompiledRule(rule))
    return CompiledSeeds(doc, layer_matchers, tuple(compiled))


def classify_path(seeds: CompiledSeeds, path: str) -> str | None:
    return seeds.classify_path(path)


_SECTION_RE = re.compile(r"^(layers|rules):\s*$")
_VOCAB_RE = re.compile(r"^vocabulary:\s*(.*)$")
_ENTRY_RE = re.compile(r"^  ([^\s:]+):\s*(.*)$")
_PROP_RE = re.compile(r"^    ([^\s:]+):\s*(.*)$")
_ARROW_RE = re.compile(r"^(\S+)\s*->\s*(\S+)$")

_CLAUSE_KEYS = ("forbid-layer-edge", "forbid-command", "protect-region", "forbid-intent", "require-action")
_MODIFIER_KEYS = ("via-import", "via-path-write", "reason", "when-tool")


def parse_seeds(text: str) -> SeedDocument:
    """Parse and validate a seed document, attaching line numbers to declarations."""
    vocabulary: list[str] = []
    layers: list[LayerDecl] = []
    layer_names: set[str] = set()
    raw_rules: list[dict] = []  # {"id", "line", "props": [(key, value, line)]}
    section: str | None = None

    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip()
        if not line or line.lstrip().startswith("#"):
            continue
        if "\t" in line[: len(line) - len(line.lstrip())]:
            raise SeedSyntaxError("tabs are not allowed in indentation", lineno)

        m = _VOCAB_RE.match(line)
        if m and not line.startswith(" "):
            for tok in m.group(1).split():
                if not _NAME_RE.match(tok) or tok != tok.lower():
                    raise SeedSyntaxError(f"bad vocabulary token {tok!r}", lineno)
                vocabulary.append(tok)
            section = None
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            continue

        if section == "layers":
            m = _ENTRY_RE.match(line)
            if not m:
                raise SeedSyntaxError(f"expected '  <layer>: <glob> ...', got {line!r}", lineno)
            name, rest = m.group(1), m.group(2)
            if not _NAME_RE.match(name):
                raise SeedSyntaxError(f"bad layer name {name!r}", lineno)
            if name in layer_names:
                raise SeedSyntaxError(f"layer {name!r} declared twice", lineno)
            globs = tuple(rest.split())
            if not globs:
                raise SeedSyntaxError(f"layer {name!r} has no globs", lineno)
            layer_names.add(name)
            layers.append(LayerDecl(name, globs, lineno))
        elif section == "rules":
            m = _PROP_RE.match(line)
            if m:
                if not raw_rules:
                    raise SeedSyntaxError("rule property before any rule id", lineno)
                raw_rules[-1]["props"].append((m.group(1), m.group(2), lineno))
                continue
            m = _ENTRY_RE.match(line)
            if not m:
                raise SeedSyntaxError(f"expected '  <rule-id>:' or rule property, got {line!r}", lineno)
            rule_id = m.group(1)
            if m.group(2):
                raise SeedSyntaxError(f"unexpected text after rule id {rule_id!r}", lineno)
            if not _NAME_RE.match(rule_id):
                raise SeedSyntaxError(f"bad rule id {rule_id!r}", lineno)
            if any(r["id"] == rule_id for r in raw_rules):
                raise DuplicateRuleId(f"rule id {rule_id!r} declared twice", lineno)
            raw_rules.append({"id": rule_id, "line": lineno, "props": []})
        else:
            raise SeedSyntaxError(f"unexpected line outside a section: {line!r}", lineno)

    rules = [_build_rule(r, layer_names, set(vocabulary)) for r in raw_rules]
    return SeedDocument(tuple(layers), tuple(rules), tuple(sorted(set(vocabulary))))


def _build_rule(raw: dict, layer_names: set[str], vocabulary: set[str]) -> RuleDecl:
    rule_id: str = raw["id"]
    line: int = raw["line"]
    props: dict[str, tuple[str, int]] = {}
    for key, value, lineno in raw["props"]:
        if key in props:
            raise SeedSyntaxError(f"rule {rule_id!r}: duplicate key {key!r}", lineno)
        props[key] = (value, lineno)

    def take(key: str) -> tuple[str, int] | None:
        return props.pop(key, None)

    category = take("category")
    if category is None or category[0] not in CATEGORIES:
        raise SeedSyntaxError(f"rule {rule_id!r}: category must be one of {CATEGORIES}", line)
    severity = take("severity")
    if severity is None or severity[0] not in SEVERITIES:
        raise SeedSyntaxError(f"rule {rule_id!r}: severity must be one of {SEVERITIES}", line)
    rationale = take("rationale")
    rationale_text = rationale[0] if rationale else ""

    clause_keys = [k for k in _CLAUSE_KEYS if k in props]
    if len(clause_keys) != 1:
        raise SeedSyntaxError(f"rule {rule_id!r}: exactly one clause required, found {clause_keys or 'none'}", line)
    clause_key = clause_keys[0]
    clause_value, clause_line = props.pop(clause_key)

    clause: Clause
    if clause_key == "forbid-layer-edge":
        m = _ARROW_RE.match(clause_value)
        if not m:
            raise SeedSyntaxError(f"rule {rule_id!r}: expected 'FROM -> TO'", clause_line)
        from_layer, to_layer = m.group(1), m.group(2)
        imp = take("via-import")
        pw = take("via-path-write")
        path_write = False
        if pw is not None:
            if pw[0] not in ("true", "false"):
                raise SeedSyntaxError(f"rule {rule_id!r}: via-path-write must be true or false", pw[1])
            path_write = pw[0] == "true"
        if imp is None and not path_write:
            raise SeedSyntaxError(f"rule {rule_id!r}: needs via-import and/or via-path-write: true", clause_line)
        if from_layer not in layer_names:
            raise UnknownLayer(f"rule {rule_id!r}: unknown layer {from_layer!r}", clause_line)
        if path_write and to_layer not in layer_names:
            raise UnknownLayer(f"rule {rule_id!r}: unknown layer {to_layer!r}", clause_line)
        pattern = None
        if imp is not None:
            pattern = imp[0]
            _check_regex(pattern, rule_id, imp[1])
        clause = ForbidLayerEdge(from_layer, to_layer, pattern, path_write)
    elif clause_key == "forbid-command":
        _check_regex(clause_value, rule_id, clause_line)
        clause = ForbidCommand(clause_value)
    elif clause_key == "protect-region":
        globs = tuple(clause_value.split())
        if not globs:
            raise SeedSyntaxError(f"rule {rule_id!r}: protect-region needs at least one glob", clause_line)
        reason = take("reason")
        clause = ProtectRegion(globs, reason[0] if reason else "")
    elif clause_key == "forbid-intent":
        tags = tuple(clause_value.split())
        if not tags:
            raise SeedSyntaxError(f"rule {rule_id!r}: forbid-intent needs at least one tag", clause_line)
        for t in tags:
            if t not in vocabulary:
                raise UnknownTag(f"rule {rule_id!r}: tag {t!r} not in vocabulary", clause_line)
        when = take("when-tool")
        clause = ForbidIntent(tuple(sorted(set(tags))), when[0] if when else None)
    else:  # require-action
        m = _ARROW_RE.match(clause_value)
        if not m:
            raise SeedSyntaxError(f"rule {rule_id!r}: expected 'LAYER -> TOOL'", clause_line)
        layer, tool = m.group(1), m.group(2)
        if layer not in layer_names:
            raise UnknownLayer(f"rule {rule_id!r}: unknown layer {layer!r}", clause_line)
        clause = RequireAction(layer, tool)

    if props:
        stray = sorted(props)
        raise SeedSyntaxError(f"rule {rule_id!r}: unknown or misplaced keys {stray}", props[stray[0]][1])
    return RuleDecl(rule_id, category[0], severity[0], clause, rationale_text, line)


def _check_regex(pattern: str, rule_id: str, line: int) -> None:
    try:
        re.compile(pattern)
    except re.error as exc:
        raise BadRegex(f"rule {rule_id!r}: bad regex {pattern!r}: {exc}", line) from exc


def load_seeds(text: str) -> CompiledSeeds:
    return compile_seeds(parse_seeds(text))
