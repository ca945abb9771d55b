"""Protocols bundled with the package, addressable by short name."""

from __future__ import annotations

from importlib import resources

from .frontend import parse_global
from .rmpst import GlobalType

#: Protocols used by the centralised soundness suite.
SOUNDNESS_SUITE = (
    "adder",
    "pingpong",
    "auth",
    "ringmax",
    "three_buyers",
    "plus_minus",
    "plus_minus_refined",
    "gs",
    "three_party",
)


def names() -> list[str]:
    files = resources.files(__package__).joinpath("protocols")
    return sorted(p.name[: -len(".rscr")] for p in files.iterdir() if p.name.endswith(".rscr"))


def source(name: str) -> str:
    path = resources.files(__package__).joinpath("protocols", f"{name}.rscr")
    if not path.is_file():
        raise KeyError(f"no bundled protocol named {name!r}")
    return path.read_text(encoding="utf-8")


def load(name: str) -> GlobalType:
    return parse_global(source(name))
