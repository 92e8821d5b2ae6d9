"""Motion planning with metric temporal logic over hybrid-zonotope reachable sets."""

__version__ = "0.1.0"
