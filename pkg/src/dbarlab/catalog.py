"""Built-in weights shipped as JSON files in ``dbarlab/catalog``."""

from __future__ import annotations

import json
from importlib import resources

from .errors import ConfigurationError
from .weights import WeightSpec


def catalog_ids() -> list[str]:
    files = resources.files("dbarlab") / "catalog"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def catalog_weight(key: str) -> WeightSpec:
    path = resources.files("dbarlab") / "catalog" / f"{key}.json"
    if not path.is_file():
        raise ConfigurationError(f"unknown catalog weight {key!r}; known: {', '.join(catalog_ids())}")
    return WeightSpec.from_dict(json.loads(path.read_text()))


def load_catalog() -> dict[str, WeightSpec]:
    return {k: catalog_weight(k) for k in catalog_ids()}
