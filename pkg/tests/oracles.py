"""Independent reference implementations used to cross-check the package.

Each oracle re-derives its answer from first principles (pair scans, path
enumeration, literal clause definitions) without touching the corresponding
production code path.
"""

from __future__ import annotations

import json
import re
from fnmatch import fnmatchcase

from sentinel.seeds import (
    ForbidCommand,
    ForbidIntent,
    ForbidLayerEdge,
    ProtectRegion,
    RequireAction,
    SeedDocument,
)
from sentinel.trace import (
    ObservationBody,
    PlanBody,
    ReasoningBody,
    ReviewBody,
    SessionHeader,
    ToolCallBody,
    TraceEvent,
)

# -- glob matching -----------------------------------------------------------


def naive_glob_match(glob: str, path: str) -> bool:
    """Segment-recursive glob match; '**' spans zero or more segments."""
    def match(ps: list[str], ss: list[str]) -> bool:
        if not ps:
            return not ss
        head, *rest = ps
        if head == "**":
            return match(rest, ss) or (bool(ss) and match(ps, ss[1:]))
        return bool(ss) and fnmatchcase(ss[0], head) and match(rest, ss[1:])

    return match(glob.split("/"), path.split("/"))


def naive_classify(doc: SeedDocument, path: str) -> str | None:
    p = path
    while p.startswith("./"):
        p = p[2:]
    p = p.lstrip("/")
    for layer in doc.layers:
        if any(naive_glob_match(g, p) for g in layer.globs):
            return layer.name
    return None


# -- graph edges by full pair scan --------------------------------------------


def brute_edges(events: list[TraceEvent]) -> set[tuple[str, str, str]]:
    parent_of = {}
    obs_of = {}
    for e in events:
        if isinstance(e.body, ReasoningBody) and e.body.parent is not None:
            parent_of[e.seq] = e.body.parent
        if isinstance(e.body, ObservationBody):
            obs_of[e.body.of] = e.seq

    def chain_has(start: int, target: int) -> bool:
        cur = start
        while cur in parent_of:
            cur = parent_of[cur]
            if cur == target:
                return True
        return False

    edges: set[tuple[str, str, str]] = set()
    for e1 in events:
        for e2 in events:
            if isinstance(e2.body, ReasoningBody) and e2.body.parent == e1.seq and isinstance(
                e1.body, (PlanBody, ReasoningBody)
            ):
                edges.add((f"n{e1.seq}", f"n{e2.seq}", "refines"))
            if isinstance(e2.body, ToolCallBody) and e2.body.caused_by == e1.seq:
                edges.add((f"n{e1.seq}", f"n{e2.seq}", "causes"))
    for call in events:
        if not isinstance(call.body, ToolCallBody):
            continue
        anchor = obs_of.get(call.seq, call.seq)
        candidates = [
            r
            for r in events
            if isinstance(r.body, ReasoningBody) and r.seq > anchor and chain_has(r.seq, call.body.caused_by)
        ]
        if candidates:
            first = min(candidates, key=lambda r: r.seq)
            edges.add((f"n{call.seq}", f"n{first.seq}", "informs"))
    return edges


# -- principal chain by exhaustive path enumeration ----------------------------


def brute_principal_chain(nodes: list[tuple[str, int]], edges: set[tuple[str, str, str]]) -> tuple[str, ...]:
    """nodes: (node_id, seq). Enumerate every root-to-leaf path."""
    seq_of = dict(nodes)
    succ: dict[str, list[str]] = {nid: [] for nid, _ in nodes}
    has_pred = set()
    for src, dst, _ in edges:
        succ[src].append(dst)
        has_pred.add(dst)
    roots = [nid for nid, _ in nodes if nid not in has_pred]

    paths: list[tuple[int, ...]] = []
    ids_by_seq = {seq: nid for nid, seq in nodes}

    def walk(nid: str, acc: list[str]) -> None:
        nxt = succ[nid]
        if not nxt:
            paths.append(tuple(seq_of[x] for x in acc))
            return
        for m in nxt:
            walk(m, acc + [m])

    for r in roots:
        walk(r, [r])
    best_len = max(len(p) for p in paths)
    best = min(p for p in paths if len(p) == best_len)
    return tuple(ids_by_seq[s] for s in best)


# -- literal clause-by-clause deviation evaluator ------------------------------


def _naive_diff_facts(payload: str) -> list[dict]:
    """Minimal line-scanner extraction of per-file added/removed lines."""
    files: list[dict] = []
    cur: dict | None = None
    for line in payload.split("\n"):
        if line.startswith("+++ "):
            label = line[4:].strip()
            path = None if label == "/dev/null" else (label[2:] if label.startswith("b/") else label)
            if cur is not None and path is None:
                pass  # deletion keeps the old path set below
            if cur is not None and path is not None:
                cur["path"] = path
        elif line.startswith("--- "):
            if cur is not None:
                files.append(cur)
            label = line[4:].strip()
            path = None if label == "/dev/null" else (label[2:] if label.startswith("a/") else label)
            cur = {"path": path, "added": [], "removed": []}
        elif cur is not None and line.startswith("+"):
            cur["added"].append(line[1:])
        elif cur is not None and line.startswith("-"):
            cur["removed"].append(line[1:])
    if cur is not None:
        files.append(cur)
    return [f for f in files if f["path"] is not None]


def brute_detect(
    events: list[TraceEvent],
    doc: SeedDocument,
    malformed_calls: set[int],
) -> set[tuple[str, str]]:
    """Re-evaluate every clause definition literally; returns {(node_id, rule_id)}.

    malformed_calls holds tool_call seqs whose payloads are known-corrupt
    (generator ground truth); fact-based clauses skip those nodes.
    """
    obs_by_call: dict[int, ObservationBody] = {}
    for e in events:
        if isinstance(e.body, ObservationBody):
            obs_by_call[e.body.of] = e.body

    hits: set[tuple[str, str]] = set()
    for rule in doc.rules:
        clause = rule.clause
        if isinstance(clause, ForbidLayerEdge):
            for e in events:
                if not isinstance(e.body, ToolCallBody) or e.seq in malformed_calls:
                    continue
                obs = obs_by_call.get(e.seq)
                if obs is None or not obs.payload.startswith("--- "):
                    continue
                facts = _naive_diff_facts(obs.payload)
                fired = False
                if clause.import_pattern is not None:
                    for f in facts:
                        if naive_classify(doc, f["path"]) != clause.from_layer:
                            continue
                        if any(re.search(clause.import_pattern, line) for line in f["added"]):
                            fired = True
                if not fired and clause.path_write:
                    layers = [naive_classify(doc, f["path"]) for f in facts]
                    if clause.from_layer in layers and clause.to_layer in layers:
                        fired = True
                if fired:
                    hits.add((f"n{e.seq}", rule.rule_id))
        elif isinstance(clause, ForbidCommand):
            for e in events:
                if isinstance(e.body, ToolCallBody):
                    cmd = e.body.args.get("command")
                    if isinstance(cmd, str) and cmd and re.search(clause.pattern, cmd):
                        hits.add((f"n{e.seq}", rule.rule_id))
        elif isinstance(clause, ProtectRegion):
            for e in events:
                if not isinstance(e.body, ToolCallBody) or e.seq in malformed_calls:
                    continue
                obs = obs_by_call.get(e.seq)
                if obs is None or not obs.payload.startswith("--- "):
                    continue
                for f in _naive_diff_facts(obs.payload):
                    if any(naive_glob_match(g, f["path"]) for g in clause.globs):
                        hits.add((f"n{e.seq}", rule.rule_id))
        elif isinstance(clause, ForbidIntent):
            for e in events:
                if not isinstance(e.body, ReasoningBody):
                    continue
                if not set(clause.tags) & set(e.body.intent_tags):
                    continue
                if clause.when_tool is None:
                    hits.add((f"n{e.seq}", rule.rule_id))
                    continue
                for t in events:
                    if (
                        isinstance(t.body, ToolCallBody)
                        and t.body.caused_by == e.seq
                        and t.body.tool == clause.when_tool
                    ):
                        hits.add((f"n{e.seq}", rule.rule_id))
                        break
        elif isinstance(clause, RequireAction):
            touches = []
            for e in events:
                if not isinstance(e.body, ToolCallBody) or e.seq in malformed_calls:
                    continue
                obs = obs_by_call.get(e.seq)
                if obs is None or not obs.payload.startswith("--- "):
                    continue
                for f in _naive_diff_facts(obs.payload):
                    if naive_classify(doc, f["path"]) == clause.if_layer_touched:
                        touches.append(e.seq)
                        break
            if touches:
                last = max(touches)
                ran_after = any(
                    isinstance(e.body, ToolCallBody) and e.body.tool == clause.then_tool and e.seq > last
                    for e in events
                )
                if not ran_after:
                    hits.add((f"n{last}", rule.rule_id))
    return hits


# -- independent diff application ----------------------------------------------


def reapply_diff(before: dict[str, str], payload: str) -> dict[str, str]:
    """Apply a unified diff by hunk bookkeeping, separate from udiff.apply_diff."""
    after = dict(before)
    sections: list[tuple[str | None, str | None, list[str]]] = []
    cur_lines: list[str] = []
    old_path = new_path = None
    started = False
    for raw in payload.split("\n"):
        if raw.startswith("--- "):
            if started:
                sections.append((old_path, new_path, cur_lines))
            label = raw[4:].strip()
            old_path = None if label == "/dev/null" else label[2:]
            cur_lines = []
            started = True
        elif raw.startswith("+++ "):
            label = raw[4:].strip()
            new_path = None if label == "/dev/null" else label[2:]
        elif started:
            cur_lines.append(raw)
    if started:
        sections.append((old_path, new_path, cur_lines))

    for old_path, new_path, body in sections:
        src = after.get(old_path, "") if old_path else ""
        src_lines = src.split("\n")[:-1] if src.endswith("\n") else (src.split("\n") if src else [])
        out: list[str] = []
        idx = 0
        for raw in body:
            if raw.startswith("@@"):
                m = re.match(r"^@@ -(\d+)", raw)
                assert m
                start = int(m.group(1)) - 1
                start = max(start, 0)
                out.extend(src_lines[idx:start])
                idx = start
            elif raw.startswith("+"):
                out.append(raw[1:])
            elif raw.startswith("-"):
                assert src_lines[idx] == raw[1:], "removal mismatch"
                idx += 1
            elif raw.startswith("\\") or raw == "":
                continue
            else:
                content = raw[1:] if raw.startswith(" ") else raw
                assert idx < len(src_lines) and src_lines[idx] == content, "context mismatch"
                out.append(content)
                idx += 1
        out.extend(src_lines[idx:])
        if old_path:
            after.pop(old_path, None)
        if new_path:
            after[new_path] = "\n".join(out) + "\n" if out else ""
    return after


# -- canonical line form, re-derived from the documented ordering rule ---------


def canonical_line(line: str) -> str:
    obj = json.loads(line)
    core = ["v", "session", "seq", "ts", "kind"] if "seq" in obj else ["v", "session", "kind"]
    parts = []
    for k in core:
        if k in obj:
            parts.append((k, obj[k]))
    rest = sorted(k for k in obj if k not in core)
    for k in rest:
        parts.append((k, obj[k]))
    return "{" + ",".join(
        json.dumps(k) + ":" + json.dumps(v, separators=(",", ":"), sort_keys=True, ensure_ascii=False)
        for k, v in parts
    ) + "}"


# -- CDI formula, spreadsheet style ---------------------------------------------


def cdi_formula(cov: float, rec: float, delib: float, w=(0.4, 0.4, 0.2)) -> float:
    return 1.0 - (w[0] * cov + w[1] * rec + w[2] * delib)
