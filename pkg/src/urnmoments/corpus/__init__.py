"""Bundled example urns."""

from __future__ import annotations

from importlib import resources

from ..urn_model import UrnSpec, parse_urn


def corpus_names() -> list:
    """Names of the bundled urns, sorted."""
    files = resources.files(__name__).iterdir()
    return sorted(f.name[: -len(".yaml")] for f in files if f.name.endswith(".yaml"))


def corpus_text(name: str) -> str:
    path = resources.files(__name__) / f"{name}.yaml"
    if not path.is_file():
        raise KeyError(f"no bundled urn named {name!r}; available: {', '.join(corpus_names())}")
    return path.read_text(encoding="utf-8")


def load_corpus_urn(name: str) -> UrnSpec:
    return parse_urn(corpus_text(name))


def load_corpus(include_incomplete: bool = True) -> list:
    """Every bundled urn, optionally skipping the incomplete fragments."""
    urns = [load_corpus_urn(n) for n in corpus_names()]
    return [u for u in urns if include_incomplete or not u.incomplete]
