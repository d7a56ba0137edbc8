"""YAML reading restricted to scalars, mappings and sequences."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

import yaml


class YamlDocumentError(Exception):
    def __init__(self, path: str, line: Optional[int], message: str) -> None:
        where = f"{path}:{line}" if line else path
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
        self.message = message


def _reject_graph_features(text: str, display: str) -> None:
    for event in yaml.parse(text, Loader=yaml.SafeLoader):
        line = event.start_mark.line + 1
        if isinstance(event, yaml.AliasEvent):
            raise YamlDocumentError(display, line, f"aliases are not supported (*{event.anchor})")
        if getattr(event, "anchor", None):
            raise YamlDocumentError(display, line, f"anchors are not supported (&{event.anchor})")


def load_text(text: str, display: str) -> tuple[Any, Optional[yaml.Node]]:
    """Parse one YAML document, returning the value and its root node (for line lookups)."""
    try:
        _reject_graph_features(text, display)
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            data = loader.construct_document(node) if node is not None else None
        finally:
            loader.dispose()
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise YamlDocumentError(display, mark.line + 1 if mark else None, exc.problem or str(exc)) from None
    except yaml.YAMLError as exc:
        raise YamlDocumentError(display, None, str(exc)) from None
    return data, node


def load_file(path: Path, display: str) -> tuple[Any, Optional[yaml.Node]]:
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise YamlDocumentError(display, None, f"unreadable: {exc}") from None
    return load_text(text, display)


def child_line(node: Optional[yaml.Node], *keys: Any) -> Optional[int]:
    """1-based line of the node reached by following mapping keys / sequence indexes."""
    current = node
    line = current.start_mark.line + 1 if current is not None else None
    for key in keys:
        if isinstance(current, yaml.MappingNode):
            for k_node, v_node in current.value:
                if k_node.value == key:
                    current = v_node
                    break
            else:
                return line
        elif isinstance(current, yaml.SequenceNode) and isinstance(key, int) and key < len(current.value):
            current = current.value[key]
        else:
            return line
        line = current.start_mark.line + 1
    return line
