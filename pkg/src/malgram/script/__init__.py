"""Front-end for the mini-script language: normalization, static scan and
path-exploring partial interpretation into the common event stream."""

from __future__ import annotations

from typing import Optional

from ..apimap import ApiCatalog, default_catalog
from ..classifier import AnalysisContext, ResourceConfig
from ..model import Event
from .interp import DEFAULT_PATH_CAP, DEFAULT_SELF, BindingEnv, Explorer, Val, explore
from .normalize import Line, normalize, normalize_text
from .structure import ScriptStructure, static_scan


def script_to_events(
    text: str,
    cfg: Optional[ResourceConfig] = None,
    catalog: Optional[ApiCatalog] = None,
    self_path: str = DEFAULT_SELF,
    path_cap: int = DEFAULT_PATH_CAP,
    ctx: Optional[AnalysisContext] = None,
) -> list[Event]:
    cfg = cfg or ResourceConfig.default()
    catalog = catalog if catalog is not None else default_catalog()
    return explore(static_scan(normalize(text)), cfg, catalog, self_path, path_cap, ctx)


__all__ = [
    "BindingEnv",
    "Explorer",
    "Line",
    "ScriptStructure",
    "Val",
    "explore",
    "normalize",
    "normalize_text",
    "script_to_events",
    "static_scan",
]
