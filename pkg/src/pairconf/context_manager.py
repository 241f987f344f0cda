"""
contextvars-based scoping for experiment configuration.

A config context layers overrides on top of whatever configuration is current,
so command-line flags can sit over a config file and each experiment arm can
sit over the flags without anything being passed down explicitly:

    with config_context({"train.epochs": 5}):          # flags
        with config_context({"train.lam": 0.0}) as cfg: # baseline arm
            ...

Key components:
- current_config: ContextVar holding the merged config of the innermost scope
- config_context(): context manager opening a new scope
- merge_configs(): pure merge of a mapping of overrides into a dataclass
- set_global_config() / get_global_config(): thread-local base used when no
  scope is active

Override semantics: ``None`` means "inherit" and never replaces a value;
dotted keys (``train.lam``) reach fields of nested dataclasses; a dataclass
value of the same type as the field it replaces is merged field by field.
"""

import contextvars
import dataclasses
import logging
import threading
from contextlib import contextmanager
from dataclasses import fields, is_dataclass
from typing import Any, Iterator, Mapping, Optional

logger = logging.getLogger(__name__)

current_config: contextvars.ContextVar[Optional[Any]] = contextvars.ContextVar(
    "current_config", default=None
)

_global_config = threading.local()


def _merge_nested_dataclass(base: Any, override: Any) -> Any:
    """
    Recursively merge the non-None fields of ``override`` into ``base``.

    A nested dataclass is merged into the matching field of ``base`` when both
    have the same type; otherwise the override replaces it wholesale.
    """
    if not is_dataclass(base) or not is_dataclass(override) or type(base) is not type(override):
        return override

    merge_values = {}
    for field_info in fields(override):
        override_value = getattr(override, field_info.name)
        if override_value is None:
            # None means "don't override" - keep base value
            continue
        if is_dataclass(override_value):
            merge_values[field_info.name] = _merge_nested_dataclass(
                getattr(base, field_info.name, None), override_value
            )
        else:
            merge_values[field_info.name] = override_value

    return dataclasses.replace(base, **merge_values) if merge_values else base


def merge_configs(base: Any, overrides: Optional[Mapping[str, Any]]) -> Any:
    """
    Merge ``overrides`` into ``base``, returning a new instance.

    Args:
        base: Dataclass instance to start from; never mutated.
        overrides: Field name (or dotted path) to value. ``None`` values are
            skipped.

    Returns:
        ``base`` itself when nothing applies, otherwise a new instance built
        with :func:`dataclasses.replace`, so field validation runs again.

    Raises:
        ValueError: If a key names a field ``base`` does not have, or the
            merged values fail validation.
    """
    if not is_dataclass(base):
        raise ValueError(f"{type(base).__name__} must be a dataclass")
    if not overrides:
        return base

    known = {f.name for f in fields(base)}
    direct: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        head, _, rest = key.partition(".")
        if head not in known:
            raise ValueError(f"{type(base).__name__} has no field {head!r}")
        if rest:
            nested.setdefault(head, {})[rest] = value
        elif is_dataclass(value):
            direct[head] = _merge_nested_dataclass(getattr(base, head), value)
        else:
            direct[head] = value

    for head, sub_overrides in nested.items():
        direct[head] = merge_configs(direct.get(head, getattr(base, head)), sub_overrides)

    if not direct:
        return base
    merged = dataclasses.replace(base, **direct)
    logger.debug(f"Merged {len(direct)} overrides into {type(base).__name__}: {sorted(direct)}")
    return merged


def set_global_config(config: Any) -> None:
    """Set this thread's base configuration."""
    _global_config.value = config


def get_global_config() -> Optional[Any]:
    """This thread's base configuration, or None if none was set."""
    return getattr(_global_config, "value", None)


def clear_global_config() -> None:
    if hasattr(_global_config, "value"):
        del _global_config.value


def get_base_config() -> Any:
    """The thread's global config, or a default ExperimentConfig."""
    config = get_global_config()
    if config is not None:
        return config
    from pairconf.config import ExperimentConfig

    return ExperimentConfig()


def get_current_config() -> Any:
    """Config of the innermost active scope, falling back to :func:`get_base_config`."""
    config = current_config.get()
    return config if config is not None else get_base_config()


@contextmanager
def config_context(
    overrides: Optional[Mapping[str, Any]] = None, base: Optional[Any] = None
) -> Iterator[Any]:
    """
    Open a scope whose config is ``base`` (default: the current config) with
    ``overrides`` merged in.

    Yields the merged config; :func:`get_current_config` returns it until the
    block exits, after which the enclosing scope is restored.
    """
    start = base if base is not None else get_current_config()
    merged = merge_configs(start, overrides)
    logger.debug(f"Entering config context with {len(overrides or {})} overrides")
    token = current_config.set(merged)
    try:
        yield merged
    finally:
        current_config.reset(token)
