"""Prompt templates with named ``{{slot}}`` placeholders.

Templates are plain UTF-8 text. Rendering is pure string substitution, so
identical inputs always produce byte-identical prompts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError

_SLOT_RE = re.compile(r"\{\{(\w+)\}\}")

DEFAULT_SUMMARY_WORD_LIMIT = 100
GRADE_FORMAT_EXEMPLAR = "Grade: XX/100"


@dataclass(frozen=True)
class PromptTemplate:
    """A named template: optional role preamble plus a task body with slots."""

    template_id: str
    role_preamble: str = ""
    task_body: str = ""
    constraints: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, template_id: str, text: str, split_role: bool = False,
                  constraints: dict | None = None) -> "PromptTemplate":
        """Build a template from raw text.

        With ``split_role`` the first paragraph (up to the first blank line)
        becomes the role preamble and the remainder the task body.
        """
        if split_role and "\n\n" in text:
            role, body = text.split("\n\n", 1)
            return cls(template_id, role.strip(), body.strip(), constraints or {})
        return cls(template_id, "", text.strip(), constraints or {})

    @classmethod
    def from_file(cls, path: str | Path, template_id: str | None = None,
                  split_role: bool = False, constraints: dict | None = None) -> "PromptTemplate":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"prompt template not found: {p}")
        text = p.read_text(encoding="utf-8")
        return cls.from_text(template_id or p.stem, text, split_role, constraints)

    def slots(self) -> set[str]:
        return set(_SLOT_RE.findall(self.role_preamble)) | set(_SLOT_RE.findall(self.task_body))

    def require_slots(self, *names: str) -> None:
        missing = [n for n in names if n not in self.slots()]
        if missing:
            raise ConfigError(
                f"template {self.template_id!r} is missing required slot(s): {', '.join(missing)}")

    def render(self, **values: str) -> str:
        """Substitute every slot; leftover or unknown slots are config errors."""
        parts = [self.role_preamble, self.task_body] if self.role_preamble else [self.task_body]
        text = "\n\n".join(parts)
        for name, value in values.items():
            text = text.replace("{{" + name + "}}", str(value))
        leftover = _SLOT_RE.findall(text)
        if leftover:
            raise ConfigError(
                f"template {self.template_id!r} has unfilled slot(s): {', '.join(sorted(set(leftover)))}")
        return text

    def render_parts(self, **values: str) -> tuple[str, str]:
        """Render as a (system, user) message pair.

        The role preamble becomes the system text (slots substituted there
        too) and the task body the user text. ``render`` is always the two
        parts joined with a blank line.
        """
        system = self.role_preamble
        user = self.task_body
        for name, value in values.items():
            slot = "{{" + name + "}}"
            system = system.replace(slot, str(value))
            user = user.replace(slot, str(value))
        leftover = _SLOT_RE.findall(system) + _SLOT_RE.findall(user)
        if leftover:
            raise ConfigError(
                f"template {self.template_id!r} has unfilled slot(s): {', '.join(sorted(set(leftover)))}")
        return system, user


def builtin_template_text(name: str) -> str:
    """Read one of the bundled default templates (classify, assess, decide)."""
    ref = resources.files("resumepipe").joinpath(f"data/templates/{name}.txt")
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"no builtin template named {name!r}")


def load_stage_template(stage: str, path: str | Path | None = None) -> PromptTemplate:
    """Load the template for a stage, falling back to the bundled default."""
    split_role = stage in ("assess", "decide")
    if path is not None:
        return PromptTemplate.from_file(path, template_id=stage, split_role=split_role)
    return PromptTemplate.from_text(stage, builtin_template_text(stage), split_role=split_role)
