"""Device models shipped with the tool, used by the examples and the test suite."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import List, Tuple

# (old, new) version pairs with deliberate behavioural changes between them
PAIRS: Tuple[Tuple[str, str], ...] = (
    ("minidev_v1", "minidev_v2"),
    ("uart_v1", "uart_v2"),
    ("gpio_v1", "gpio_v2"),
    ("e1000_v1", "e1000_v2"),
    ("e1000_v2", "e1000_v3"),
)


def model_dir() -> Path:
    return Path(str(resources.files(__name__)))


def model_path(name: str) -> Path:
    """Path of a bundled model given its stem (``minidev_v1``) or file name."""
    stem = name[:-3] if name.endswith(".dm") else name
    path = model_dir() / f"{stem}.dm"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled model named {name}")
    return path


def bundled_models() -> List[str]:
    return sorted(p.stem for p in model_dir().glob("*.dm"))
