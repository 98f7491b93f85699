"""Instrumented reasoning-action loop: tool proxy, workspace, and replay driver.

Every tool runs through ``invoke``, which emits exactly one tool_call event
followed by exactly one observation event. Write-class tools snapshot the
workspace before and after and record the delta as a unified diff in the
observation payload. A scripted replay driver stands in for a live agent:
given a `.replay` script and a deterministic clock it produces a byte-stable
SAT stream.
"""

from __future__ import annotations

import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import yaml

from . import udiff
from .trace import (
    ObservationBody,
    PlanBody,
    ReasoningBody,
    SessionHeader,
    ToolCallBody,
    TraceEvent,
    format_ts,
)

PAYLOAD_CAP_BYTES = 64 * 1024
SHELL_TIMEOUT_S = 30.0


class HarnessError(Exception):
    pass


class UnknownTool(HarnessError):
    pass


class ArgSchemaViolation(HarnessError):
    pass


class SandboxEscape(HarnessError):
    pass


class ReplayScriptError(HarnessError):
    pass


class ReplayStepError(HarnessError):
    def __init__(self, step: int, cause: Exception | str):
        super().__init__(f"step {step}: {cause}")
        self.step = step


class _EscapeAttempt(Exception):
    def __init__(self, path: str):
        super().__init__(path)
        self.path = path


class Clock:
    def now_ms(self) -> int:
        raise NotImplementedError


class SystemClock(Clock):
    def now_ms(self) -> int:
        return int(time.time() * 1000)


class FixedClock(Clock):
    """Deterministic clock: starts at an epoch and advances 1 ms per reading."""

    def __init__(self, start_ms: int, step_ms: int = 1):
        self._next = start_ms
        self._step = step_ms

    def now_ms(self) -> int:
        t = self._next
        self._next += self._step
        return t


def parse_clock_flag(value: str) -> Clock:
    """Parse the CLI clock flag: 'system' or 'fixed:<epoch-ms>'."""
    if value == "system":
        return SystemClock()
    if value.startswith("fixed:"):
        try:
            return FixedClock(int(value[len("fixed:"):]))
        except ValueError as exc:
            raise ReplayScriptError(f"bad clock flag {value!r}") from exc
    raise ReplayScriptError(f"bad clock flag {value!r}")


@dataclass(frozen=True)
class ToolSpec:
    name: str
    arg_schema: tuple[tuple[str, bool], ...]  # (key, required)
    effect_class: str  # read | write | execute


ToolImpl = Callable[["Workspace", Mapping[str, Any]], tuple[str, str]]  # -> (outcome, payload)


class ToolRegistry:
    def __init__(self) -> None:
        self._tools: dict[str, tuple[ToolSpec, ToolImpl]] = {}

    def register(self, spec: ToolSpec, impl: ToolImpl) -> None:
        if spec.name in self._tools:
            raise HarnessError(f"tool {spec.name!r} already registered")
        self._tools[spec.name] = (spec, impl)

    def get(self, name: str) -> tuple[ToolSpec, ToolImpl]:
        if name not in self._tools:
            raise UnknownTool(f"tool {name!r} is not registered")
        return self._tools[name]

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._tools))


class Workspace:
    """A confined directory tree; all write-class effects stay under root."""

    def __init__(self, root: Path):
        self.root = Path(root).resolve()

    def confine(self, rel: str) -> Path:
        p = (self.root / rel).resolve()
        if p != self.root and self.root not in p.parents:
            raise _EscapeAttempt(rel)
        return p

    def snapshot(self) -> dict[str, str]:
        files: dict[str, str] = {}
        for p in sorted(self.root.rglob("*")):
            if p.is_file():
                files[p.relative_to(self.root).as_posix()] = p.read_text(encoding="utf-8", errors="replace")
        return files

    def write_snapshot(self, files: Mapping[str, str]) -> None:
        current = self.snapshot()
        for rel in current:
            if rel not in files:
                (self.root / rel).unlink()
        for rel, content in files.items():
            target = self.confine(rel)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content, encoding="utf-8")


def _tool_read_file(ws: Workspace, args: Mapping[str, Any]) -> tuple[str, str]:
    p = ws.confine(str(args["path"]))
    if not p.is_file():
        return "error", f"no such file: {args['path']}"
    return "ok", p.read_text(encoding="utf-8", errors="replace")


def _tool_list_dir(ws: Workspace, args: Mapping[str, Any]) -> tuple[str, str]:
    p = ws.confine(str(args.get("path", ".")))
    if not p.is_dir():
        return "error", f"no such directory: {args.get('path', '.')}"
    entries = sorted(c.name + ("/" if c.is_dir() else "") for c in p.iterdir())
    return "ok", "\n".join(entries) + ("\n" if entries else "")


def _tool_write_file(ws: Workspace, args: Mapping[str, Any]) -> tuple[str, str]:
    p = ws.confine(str(args["path"]))
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(str(args["content"]), encoding="utf-8")
    return "ok", ""


def _tool_apply_patch(ws: Workspace, args: Mapping[str, Any]) -> tuple[str, str]:
    patch = str(args["patch"])
    before = ws.snapshot()
    try:
        after = udiff.apply_diff(before, patch)
    except (udiff.MalformedDiff, udiff.PatchConflict) as exc:
        return "error", f"patch failed: {exc}"
    for rel in set(after) - set(before):
        ws.confine(rel)  # raises on escape before anything is written
    ws.write_snapshot(after)
    return "ok", ""


def _tool_run_shell(ws: Workspace, args: Mapping[str, Any]) -> tuple[str, str]:
    cmd = str(args["command"])
    timeout = float(args.get("timeout_s") or SHELL_TIMEOUT_S)
    try:
        proc = subprocess.run(
            cmd,
            shell=True,
            cwd=ws.root,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired:
        return "error", f"timed out after {timeout:g}s"
    payload = f"exit {proc.returncode}\n{proc.stdout}{proc.stderr}"
    return ("ok" if proc.returncode == 0 else "error"), payload


def default_registry() -> ToolRegistry:
    reg = ToolRegistry()
    reg.register(ToolSpec("read_file", (("path", True),), "read"), _tool_read_file)
    reg.register(ToolSpec("list_dir", (("path", False),), "read"), _tool_list_dir)
    reg.register(ToolSpec("write_file", (("path", True), ("content", True)), "write"), _tool_write_file)
    reg.register(ToolSpec("apply_patch", (("patch", True),), "write"), _tool_apply_patch)
    reg.register(ToolSpec("run_shell", (("command", True), ("timeout_s", False)), "execute"), _tool_run_shell)
    return reg


def cap_payload(payload: str, cap_bytes: int = PAYLOAD_CAP_BYTES) -> str:
    raw = payload.encode("utf-8")
    if len(raw) <= cap_bytes:
        return payload
    kept = raw[:cap_bytes].decode("utf-8", errors="ignore")
    return kept + f"\n[truncated {len(raw) - cap_bytes} bytes]"


class SessionRecorder:
    """Single-writer event emitter for one session."""

    def __init__(self, header: SessionHeader, clock: Clock, payload_cap: int = PAYLOAD_CAP_BYTES):
        self.header = header
        self.clock = clock
        self.payload_cap = payload_cap
        self.events: list[TraceEvent] = []
        self._seq = 0

    def _emit(self, kind: str, body: Any) -> TraceEvent:
        self._seq += 1
        ev = TraceEvent(
            session_id=self.header.session_id,
            seq=self._seq,
            ts=format_ts(self.clock.now_ms()),
            kind=kind,
            body=body,
        )
        self.events.append(ev)
        return ev

    def emit_plan(self, goal: str, steps: list[str]) -> TraceEvent:
        return self._emit("plan", PlanBody(goal, tuple(steps)))

    def emit_reasoning(self, text: str, tags: list[str], parent: int | None) -> TraceEvent:
        return self._emit("reasoning", ReasoningBody(text, tuple(sorted(set(tags))), parent))

    def emit_tool_call(self, tool: str, args: Mapping[str, Any], caused_by: int) -> TraceEvent:
        return self._emit("tool_call", ToolCallBody(tool, dict(args), caused_by))

    def emit_observation(self, of: int, outcome: str, payload: str) -> TraceEvent:
        return self._emit("observation", ObservationBody(of, outcome, cap_payload(payload, self.payload_cap)))


def invoke(
    recorder: SessionRecorder,
    registry: ToolRegistry,
    workspace: Workspace,
    tool: str,
    args: Mapping[str, Any],
    caused_by: int,
) -> ObservationBody:
    """Run a registered tool, recording the tool_call/observation pair.

    Precondition failures (unknown tool, bad args) emit nothing — the tool
    never ran. A sandbox escape attempt is the opposite: the attempt itself is
    recorded as an error observation, then SandboxEscape propagates.
    """
    spec, impl = registry.get(tool)
    known = {k for k, _ in spec.arg_schema}
    required = {k for k, req in spec.arg_schema if req}
    missing = required - set(args)
    stray = set(args) - known
    if missing or stray:
        raise ArgSchemaViolation(
            f"tool {tool!r}: missing {sorted(missing) or '-'}, unexpected {sorted(stray) or '-'}"
        )

    call = recorder.emit_tool_call(tool, args, caused_by)

    if spec.effect_class == "write":
        before = workspace.snapshot()
        try:
            outcome, payload = impl(workspace, args)
        except _EscapeAttempt as exc:
            recorder.emit_observation(call.seq, "error", f"sandbox escape blocked: {exc.path}")
            raise SandboxEscape(f"tool {tool!r} attempted to write outside the workspace: {exc.path}") from exc
        if outcome == "ok":
            payload = udiff.build_diff(before, workspace.snapshot())
    else:
        try:
            outcome, payload = impl(workspace, args)
        except _EscapeAttempt as exc:
            recorder.emit_observation(call.seq, "error", f"sandbox escape blocked: {exc.path}")
            raise SandboxEscape(f"tool {tool!r} attempted to leave the workspace: {exc.path}") from exc

    obs = recorder.emit_observation(call.seq, outcome, payload)
    assert isinstance(obs.body, ObservationBody)
    return obs.body


@dataclass(frozen=True)
class ToolInvocation:
    tool: str
    args: Mapping[str, Any]
    expect: str = "ok"


@dataclass(frozen=True)
class ReplayStep:
    reason: str
    tags: tuple[str, ...] = ()
    parent: int | str | None = None  # 'plan', a 1-based step number, or None
    calls: tuple[ToolInvocation, ...] = ()


@dataclass(frozen=True)
class ReplayScript:
    session_id: str
    agent_label: str
    vocabulary: tuple[str, ...]
    steps: tuple[ReplayStep, ...]
    plan: tuple[str, tuple[str, ...]] | None = None  # (goal, step summaries)

    def __post_init__(self) -> None:
        if not self.steps:
            raise ReplayScriptError("a replay script needs at least one step")


def load_replay_script(text: str) -> ReplayScript:
    """Load a `.replay` document (YAML key-value with nested lists)."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ReplayScriptError(f"unreadable script: {exc}") from exc
    if not isinstance(doc, dict):
        raise ReplayScriptError("script must be a mapping")
    try:
        session_id = str(doc["session"])
        raw_steps = doc["steps"]
    except KeyError as exc:
        raise ReplayScriptError(f"script missing key: {exc}") from exc
    if not isinstance(raw_steps, list) or not raw_steps:
        raise ReplayScriptError("steps must be a non-empty list")

    plan = None
    if "plan" in doc and doc["plan"] is not None:
        p = doc["plan"]
        if not isinstance(p, dict) or "goal" not in p:
            raise ReplayScriptError("plan must carry a goal")
        summaries = tuple(str(s) for s in p.get("steps", []) or [])
        if not summaries:
            raise ReplayScriptError("plan.steps must be non-empty when a plan is given")
        plan = (str(p["goal"]), summaries)

    steps = []
    for i, raw in enumerate(raw_steps, start=1):
        if not isinstance(raw, dict) or "reason" not in raw:
            raise ReplayScriptError(f"step {i} must carry a reason")
        parent = raw.get("parent")
        if parent is not None and parent != "plan":
            if not isinstance(parent, int) or not 1 <= parent < i:
                raise ReplayScriptError(f"step {i}: parent must be 'plan' or an earlier step number")
        calls = []
        for c in raw.get("calls", []) or []:
            if not isinstance(c, dict) or "tool" not in c:
                raise ReplayScriptError(f"step {i}: each call needs a tool")
            expect = str(c.get("expect", "ok"))
            if expect not in ("ok", "error"):
                raise ReplayScriptError(f"step {i}: expect must be ok or error")
            calls.append(ToolInvocation(str(c["tool"]), dict(c.get("args", {}) or {}), expect))
        steps.append(
            ReplayStep(
                reason=str(raw["reason"]),
                tags=tuple(str(t) for t in raw.get("tags", []) or []),
                parent=parent,
                calls=tuple(calls),
            )
        )
    vocabulary = tuple(str(t) for t in doc.get("vocabulary", []) or [])
    return ReplayScript(
        session_id=session_id,
        agent_label=str(doc.get("agent_label", "replay-driver")),
        vocabulary=vocabulary,
        steps=tuple(steps),
        plan=plan,
    )


def replay(
    script: ReplayScript,
    registry: ToolRegistry,
    workspace: Workspace,
    clock: Clock | None = None,
) -> tuple[SessionHeader, tuple[TraceEvent, ...]]:
    """Drive the script through the instrumented loop, yielding a SAT stream."""
    clock = clock or SystemClock()
    header = SessionHeader(
        session_id=script.session_id,
        format_version=1,
        intent_vocabulary=tuple(sorted(set(script.vocabulary))),
        agent_label=script.agent_label,
        started_at=format_ts(clock.now_ms()),
    )
    rec = SessionRecorder(header, clock)

    plan_seq: int | None = None
    if script.plan is not None:
        goal, summaries = script.plan
        plan_seq = rec.emit_plan(goal, list(summaries)).seq

    step_seq: dict[int, int] = {}  # 1-based step number -> reasoning seq
    for i, step in enumerate(script.steps, start=1):
        if step.parent == "plan":
            if plan_seq is None:
                raise ReplayStepError(i, "parent is 'plan' but the script has no plan")
            parent = plan_seq
        elif isinstance(step.parent, int):
            parent = step_seq[step.parent]
        else:
            parent = None
        reasoning = rec.emit_reasoning(step.reason, list(step.tags), parent)
        step_seq[i] = reasoning.seq
        for call in step.calls:
            try:
                obs = invoke(rec, registry, workspace, call.tool, call.args, reasoning.seq)
            except HarnessError as exc:
                raise ReplayStepError(i, exc) from exc
            if obs.outcome != call.expect:
                raise ReplayStepError(i, f"{call.tool} returned {obs.outcome}, expected {call.expect}")
    return header, tuple(rec.events)
