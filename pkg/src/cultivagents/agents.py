"""Agent personas: specs, the built-in set, template resolution, prompt composition,
and plug-in persona files."""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date
from functools import lru_cache
from importlib import resources
from pathlib import Path

import yaml

from .profile import MONTH_NAMES, UserProfile, serialize_profile

# green/blue/orange belong to the built-in personas; plug-ins pick from the
# extended palette so the client's color mapping stays deterministic.
RESERVED_COLORS = ("green", "blue", "orange")
EXTENDED_COLORS = ("purple", "teal", "crimson", "magenta", "olive", "navy", "coral", "chocolate")
ALL_COLORS = RESERVED_COLORS + EXTENDED_COLORS

SUPPORTED_PLACEHOLDERS = ("current_date",)

# Joins a resolved base prompt to the serialized profile inside every
# effective prompt; fixed so prefix/suffix checks stay unambiguous.
PROFILE_SEPARATOR = "\n\n--- Gardener profile ---\n"

_PLACEHOLDER_RE = re.compile(r"\{\{\s*([^{}]*?)\s*\}\}")


class AgentConfigError(ValueError):
    """Invalid persona definition or persona file. Carries one message per problem."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class AgentSpec:
    """One persona: identity, color tag, base system prompt, selector blurb."""

    id: str
    display_name: str
    color_tag: str
    base_prompt: str
    description: str


@dataclass(frozen=True)
class AgentSet:
    """Ordered, immutable collection of personas. Needs at least two members so
    previous-speaker exclusion always leaves someone eligible."""

    agents: tuple[AgentSpec, ...]

    def __post_init__(self):
        problems = []
        if len(self.agents) < 2:
            problems.append("an agent set needs at least 2 agents")
        ids = [a.id for a in self.agents]
        for dup in sorted({i for i in ids if ids.count(i) > 1}):
            problems.append(f"duplicate agent id {dup!r}")
        if problems:
            raise AgentConfigError(problems)

    def ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.agents)

    def get(self, agent_id: str) -> AgentSpec:
        for spec in self.agents:
            if spec.id == agent_id:
                return spec
        raise KeyError(f"unknown agent id {agent_id!r}")

    def display_name(self, agent_id: str) -> str:
        for spec in self.agents:
            if spec.id == agent_id:
                return spec.display_name
        return agent_id


def find_placeholders(text: str) -> list[str]:
    return [m.group(1) for m in _PLACEHOLDER_RE.finditer(text)]


def format_calendar_date(day: date) -> str:
    """Locale-independent long date, e.g. "April 15, 2025"."""
    return f"{MONTH_NAMES[day.month - 1]} {day.day}, {day.year}"


def resolve_template(spec: AgentSpec, clock: date) -> str:
    """Substitute the persona's template placeholders against a concrete date.

    The result never contains a placeholder marker; an unsupported placeholder
    is a configuration error naming the offender.
    """
    unknown = [name for name in find_placeholders(spec.base_prompt) if name not in SUPPORTED_PLACEHOLDERS]
    if unknown:
        raise AgentConfigError(
            [f"unknown placeholder {name!r} in base prompt of agent {spec.id!r}" for name in unknown]
        )
    resolved = _PLACEHOLDER_RE.sub(lambda m: format_calendar_date(clock), spec.base_prompt)
    if "{{" in resolved or "}}" in resolved:
        raise AgentConfigError([f"unbalanced placeholder braces in base prompt of agent {spec.id!r}"])
    return resolved


def effective_prompt(spec: AgentSpec, profile: UserProfile, clock: date) -> str:
    """Compose the per-session system prompt: resolved persona text, a fixed
    separator, then the serialized gardener profile."""
    return resolve_template(spec, clock) + PROFILE_SEPARATOR + serialize_profile(profile)


def validate_agent_spec(spec: AgentSpec, *, plugin: bool, label: str = "") -> list[str]:
    """All AgentSpec invariants as a list of problems (empty when valid)."""
    where = f"{label}: " if label else ""
    problems = []
    if not spec.id or any(ch.isspace() for ch in spec.id):
        problems.append(f"{where}id {spec.id!r} must be non-empty and contain no whitespace")
    if not spec.display_name.strip():
        problems.append(f"{where}display_name must not be empty")
    if not spec.description.strip():
        problems.append(f"{where}description must not be empty")
    if not spec.base_prompt.strip():
        problems.append(f"{where}base_prompt must not be empty")
    if plugin and spec.color_tag in RESERVED_COLORS:
        problems.append(
            f"{where}color {spec.color_tag!r} is reserved for built-in personas; "
            f"pick from: {', '.join(EXTENDED_COLORS)}"
        )
    elif spec.color_tag not in ALL_COLORS:
        problems.append(f"{where}unknown color {spec.color_tag!r}; pick from: {', '.join(ALL_COLORS)}")
    for name in find_placeholders(spec.base_prompt):
        if name not in SUPPORTED_PLACEHOLDERS:
            problems.append(f"{where}unknown placeholder {name!r} (supported: {', '.join(SUPPORTED_PLACEHOLDERS)})")
    stripped = _PLACEHOLDER_RE.sub("", spec.base_prompt)
    if "{{" in stripped or "}}" in stripped:
        problems.append(f"{where}unbalanced placeholder braces in base_prompt")
    return problems


_REQUIRED_PERSONA_FIELDS = ("id", "display_name", "color", "description", "base_prompt")


def _parse_persona_file(path: Path, *, plugin: bool) -> list[AgentSpec]:
    """Parse and fully validate one persona file; raises with per-entry diagnostics.

    Validation is atomic: either every entry is good or nothing is returned.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise AgentConfigError([f"{path}: {exc}"]) from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise AgentConfigError([f"{where}: invalid YAML: {exc}"]) from exc

    if doc is None:
        return []
    if not isinstance(doc, dict) or not isinstance(doc.get("personas", []), list):
        raise AgentConfigError([f"{path}: expected a mapping with a 'personas' list"])

    problems: list[str] = []
    specs: list[AgentSpec] = []
    for i, entry in enumerate(doc.get("personas") or []):
        label = f"{path}: personas[{i}]"
        if not isinstance(entry, dict):
            problems.append(f"{label}: expected a mapping")
            continue
        bad = [
            f for f in _REQUIRED_PERSONA_FIELDS
            if not isinstance(entry.get(f), str) or not entry[f].strip()
        ]
        if bad:
            problems.append(f"{label}: missing or empty field(s): {', '.join(bad)}")
            continue
        spec = AgentSpec(
            id=entry["id"].strip(),
            display_name=entry["display_name"].strip(),
            color_tag=entry["color"].strip(),
            base_prompt=entry["base_prompt"],
            description=entry["description"].strip(),
        )
        problems.extend(validate_agent_spec(spec, plugin=plugin, label=label))
        specs.append(spec)
    if problems:
        raise AgentConfigError(problems)
    return specs


def builtin_personas_path() -> Path:
    return Path(str(resources.files("cultivagents").joinpath("data/builtin_personas.yaml")))


@lru_cache(maxsize=1)
def builtin_agent_set() -> AgentSet:
    """The three shipped personas, loaded from the versioned data file."""
    specs = _parse_persona_file(builtin_personas_path(), plugin=False)
    return AgentSet(tuple(specs))


def load_agent_plugins(path: str | Path, base: AgentSet | None = None) -> AgentSet:
    """Extend an agent set with personas from a plug-in file.

    Fails atomically: any parse error, invariant violation, or id collision
    (within the file or against the base set) leaves the base set untouched.
    """
    base = base or builtin_agent_set()
    specs = _parse_persona_file(Path(path), plugin=True)
    problems = []
    seen = set(base.ids())
    for spec in specs:
        if spec.id in seen:
            problems.append(f"{path}: duplicate agent id {spec.id!r} (already defined)")
        seen.add(spec.id)
    if problems:
        raise AgentConfigError(problems)
    return AgentSet(base.agents + tuple(specs))


def check_persona_file(path: str | Path) -> list[str]:
    """Validation backing the CLI: the shipped base file is checked standalone,
    anything else as a plug-in extension of the built-in set. Returns problems."""
    p = Path(path)
    try:
        if p.resolve() == builtin_personas_path().resolve():
            AgentSet(tuple(_parse_persona_file(p, plugin=False)))
        else:
            load_agent_plugins(p)
    except AgentConfigError as exc:
        return list(exc.problems)
    return []
