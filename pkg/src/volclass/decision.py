"""Turning raw network outputs into a class decision.

Two rejection mechanisms can be combined: an explicitly trained rest class
and a confidence threshold on the maximum output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

#: Outcome reported when thresholding rejects and no rest class is registered.
REST = "<rest>"


@dataclass
class ClassRegistry:
    classes: list[str] = field(default_factory=list)
    rest_class_index: int | None = None

    def __post_init__(self):
        self.classes = list(self.classes)
        if any(not isinstance(c, str) or not c for c in self.classes):
            raise ValueError("class names must be nonempty strings")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError(f"class names must be unique: {self.classes}")
        if self.rest_class_index is not None and not 0 <= self.rest_class_index < len(self.classes):
            raise ValueError(f"rest_class_index {self.rest_class_index} out of range")

    def __len__(self):
        return len(self.classes)

    def index(self, name: str) -> int:
        return self.classes.index(name)

    @property
    def rest_name(self) -> str | None:
        if self.rest_class_index is None:
            return None
        return self.classes[self.rest_class_index]

    def is_rest(self, name: str) -> bool:
        return name == REST or name == self.rest_name


@dataclass(frozen=True)
class DecisionPolicy:
    """``use_rest_class=False`` ignores a registered rest-class output."""

    use_rest_class: bool = True
    threshold: float | None = None

    def __post_init__(self):
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")


@dataclass(frozen=True)
class Classification:
    scores: dict[str, float]
    chosen: str
    confidence: float
    rejected: bool = False

    def as_dict(self) -> dict:
        return {
            "scores": dict(self.scores),
            "chosen": self.chosen,
            "confidence": self.confidence,
            "rejected": self.rejected,
        }


def decide(scores, registry: ClassRegistry, policy: DecisionPolicy = DecisionPolicy()) -> Classification:
    """Argmax over the considered outputs, ties to the lowest index.

    If a threshold is set and the winning score is below it, the result is
    the rest class (registered one if usable, else :data:`REST`).
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size != len(registry):
        raise ShapeMismatch(f"{scores.size} scores for {len(registry)} registered classes")
    considered = [
        i for i in range(len(registry))
        if policy.use_rest_class or i != registry.rest_class_index
    ]
    if not considered:
        raise ShapeMismatch("no classes left to decide between")
    sub = scores[considered]
    # np.argmax returns the first maximum
    best = considered[int(np.argmax(sub))]
    confidence = float(scores[best])
    report = {registry.classes[i]: float(scores[i]) for i in considered}

    if policy.threshold is not None and confidence < policy.threshold:
        rest = registry.rest_name if policy.use_rest_class and registry.rest_name else REST
        return Classification(report, rest, confidence, rejected=True)
    return Classification(report, registry.classes[best], confidence, rejected=False)
