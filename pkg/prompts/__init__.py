"""Prompt templates for pairwise comparison and the two adjudicators."""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, Mapping, Optional, Tuple

from utils.exceptions import TemplateError

PAIRWISE_DISCRIMINATE = "pairwise_discriminate"
AGGREGATE_DECISION = "aggregate_decision"
PAIR_ADJUDICATOR = "pair_adjudicator"
TEMPLATE_NAMES = (PAIRWISE_DISCRIMINATE, AGGREGATE_DECISION, PAIR_ADJUDICATOR)

ALLOWED_PLACEHOLDERS: FrozenSet[str] = frozenset({"q", "a", "b", "n", "votes", "meta1", "meta2", "pred"})

_PROMPTS_DIR = Path(__file__).resolve().parent
_PLACEHOLDER_RE = re.compile(r"\{([^{}\s]*)\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    placeholders: Tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        if self.name not in TEMPLATE_NAMES:
            raise TemplateError(f"unknown template name {self.name!r}")
        found = []
        for match in _PLACEHOLDER_RE.finditer(self.body):
            key = match.group(1)
            if key not in ALLOWED_PLACEHOLDERS:
                raise TemplateError(f"template {self.name!r} uses unknown placeholder {{{key}}}")
            if key not in found:
                found.append(key)
        object.__setattr__(self, "placeholders", tuple(found))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.body.encode("utf-8")).hexdigest()

    def render(self, bindings: Mapping[str, str]) -> str:
        """Substitute every placeholder byte-for-byte; a missing binding is an error."""
        missing = [key for key in self.placeholders if key not in bindings]
        if missing:
            names = ", ".join(f"{{{key}}}" for key in missing)
            raise TemplateError(f"template {self.name!r} is missing bindings for {names}")
        return _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), self.body)


@lru_cache(maxsize=None)
def load_template(name: str, directory: Optional[str] = None) -> PromptTemplate:
    """Read template *name* from the prompts directory (or *directory*)."""
    base = Path(directory) if directory else _PROMPTS_DIR
    path = base / f"{name}.txt"
    if not path.exists():
        raise TemplateError(f"prompt template not found: {path}")
    return PromptTemplate(name=name, body=path.read_text(encoding="utf-8"))


def template_digests(directory: Optional[str] = None) -> Dict[str, str]:
    return {name: load_template(name, directory).digest for name in TEMPLATE_NAMES}
