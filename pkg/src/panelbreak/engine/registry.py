from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .errors import InvalidSpec

# ============================================================================
# Stage Registry
# ============================================================================


@dataclass(frozen=True)
class StageInfo:
    name: str
    func: Callable
    requires: tuple[str, ...]
    description: str


# name -> StageInfo, in registration (= execution) order
STAGES: dict[str, StageInfo] = {}


def stage(name: str, *, requires: Iterable[str] = ()):
    """Register a pipeline stage.

    Stages run in the order they are registered; requires names the stages
    whose results this one reads, so a single stage can be run on its own.
    """

    def decorator(func: Callable) -> Callable:
        missing = [r for r in requires if r not in STAGES]
        if missing:
            raise InvalidSpec(f"stage {name!r} requires unregistered stages {missing}")
        doc = (func.__doc__ or "").strip().splitlines()
        STAGES[name] = StageInfo(
            name=name,
            func=func,
            requires=tuple(requires),
            description=doc[0] if doc else name,
        )
        return func

    return decorator


def stage_names() -> list[str]:
    return list(STAGES)


def resolve_stages(targets: Optional[Iterable[str]] = None) -> list[str]:
    """Targets plus everything they depend on, in execution order."""
    if targets is None:
        return stage_names()
    wanted: set[str] = set()
    pending = list(targets)
    while pending:
        name = pending.pop()
        if name not in STAGES:
            raise InvalidSpec(f"unknown stage {name!r}; expected one of {stage_names()}")
        if name in wanted:
            continue
        wanted.add(name)
        pending.extend(STAGES[name].requires)
    return [name for name in STAGES if name in wanted]


__all__ = ["STAGES", "StageInfo", "stage", "stage_names", "resolve_stages"]
