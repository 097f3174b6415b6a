"""Shared builders for tests."""
from sealeg.config import apply_overrides, load_config

from conftest import CONFIGS


def config(name: str, overrides: dict | None = None):
    cfg = load_config(CONFIGS / name)
    return apply_overrides(cfg, overrides) if overrides else cfg
