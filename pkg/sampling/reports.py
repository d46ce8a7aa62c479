"""Text renderings of run reports: stable key=value lines and a summary table."""

# Standard library imports
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

# Constants
RULE_WIDTH = 60

Items = Sequence[Tuple[str, object]]


def format_value(value: object) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if value is None:
        return "none"
    return str(value)


def format_kv(items: Items) -> str:
    """One ``key=value`` line per item, in the given order."""
    return "\n".join(f"{key}={format_value(value)}" for key, value in items)


def format_table(items: Items, title: str) -> str:
    width = max((len(key) for key, _ in items), default=0)
    lines: List[str] = ["=" * RULE_WIDTH, title.upper(), "=" * RULE_WIDTH]
    lines.extend(f"   {key.ljust(width)}  {format_value(value)}" for key, value in items)
    lines.append("=" * RULE_WIDTH)
    return "\n".join(lines)


def render(items: Items, title: str, style: str = "kv") -> str:
    """Render as ``kv``, ``table`` or ``both`` (table first, then key=value lines)."""
    parts: Iterable[str]
    if style == "table":
        parts = [format_table(items, title)]
    elif style == "both":
        parts = [format_table(items, title), format_kv(items)]
    else:
        parts = [format_kv(items)]
    return "\n".join(parts)


def write_report(text: str, path: Optional[str]) -> None:
    """Write a rendered report to ``path``, ending with a newline.

    Args:
        text (str): The rendered report.
        path (str | None): Destination file; nothing is written when None.

    Raises:
        OSError: If the file cannot be written.
    """
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
