"""Hierarchical topic structure whose leaf labels form the classification space.

The taxonomy is loaded from a JSON document, validated once, and immutable
afterwards, so it can be shared freely across threads. Leaves (nodes without
children) are the class labels used by every classification stage; the two
shipped level-1 roots split them into clinical and non-clinical reasons.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

# Reserved sentinel labels. "Other" is a stage outcome meaning "no label
# assigned here"; "Unclassified" is the terminal outcome after the last stage.
# Neither may ever appear as a taxonomy node.
OTHER_LABEL = "Other"
UNCLASSIFIED_LABEL = "Unclassified"
_RESERVED = {OTHER_LABEL.casefold(), UNCLASSIFIED_LABEL.casefold()}


class TaxonomyError(ValueError):
    """A taxonomy document violates the documented schema or an invariant."""


@dataclass(frozen=True)
class TopicNode:
    """One topic in the hierarchy.

    level is 1 for roots and parent.level + 1 otherwise; description is free
    text surfaced in prompts and reused by the synthetic corpus generator.
    """

    id: str
    label: str
    level: int
    parent: str | None
    description: str = ""


class Taxonomy:
    """Validated, immutable topic tree.

    Node order is the document declaration order (depth-first for nested
    children); leaf_labels preserves that order so prompts and report columns
    stay stable across runs.
    """

    def __init__(self, nodes: Iterable[TopicNode]):
        self._nodes: tuple[TopicNode, ...] = tuple(nodes)
        if not self._nodes:
            raise TaxonomyError("taxonomy is empty")

        self._by_id: dict[str, TopicNode] = {}
        for node in self._nodes:
            if node.id in self._by_id:
                raise TaxonomyError(f"duplicate node id: {node.id!r}")
            self._by_id[node.id] = node

        children: dict[str, list[str]] = {node.id: [] for node in self._nodes}
        for node in self._nodes:
            if node.parent is not None:
                if node.parent not in self._by_id:
                    raise TaxonomyError(
                        f"node {node.id!r} references missing parent {node.parent!r}"
                    )
                children[node.parent].append(node.id)
        self._children = children

        self._check_levels()

        leaves = [node for node in self._nodes if not children[node.id]]
        seen_labels: set[str] = set()
        for leaf in leaves:
            if leaf.label.casefold() in _RESERVED:
                raise TaxonomyError(
                    f"node {leaf.id!r} uses reserved label {leaf.label!r}"
                )
            if leaf.label in seen_labels:
                raise TaxonomyError(f"duplicate leaf label: {leaf.label!r}")
            seen_labels.add(leaf.label)
        for node in self._nodes:
            if node.label.casefold() in _RESERVED:
                raise TaxonomyError(
                    f"node {node.id!r} uses reserved label {node.label!r}"
                )
        self._leaves = tuple(leaves)
        self._leaf_by_label = {leaf.label: leaf for leaf in leaves}

    def _check_levels(self) -> None:
        # Walking parent links must terminate at a root for every node; the
        # visited set catches parent cycles in flat-form documents.
        for node in self._nodes:
            seen = {node.id}
            current = node
            depth = 1
            while current.parent is not None:
                if current.parent in seen:
                    raise TaxonomyError(f"parent cycle involving node {node.id!r}")
                seen.add(current.parent)
                current = self._by_id[current.parent]
                depth += 1
            if node.level != depth:
                raise TaxonomyError(
                    f"node {node.id!r} has level {node.level}, expected {depth} "
                    "from its parent chain"
                )

    @property
    def nodes(self) -> tuple[TopicNode, ...]:
        return self._nodes

    @property
    def leaf_labels(self) -> tuple[str, ...]:
        return tuple(leaf.label for leaf in self._leaves)

    @property
    def roots(self) -> tuple[TopicNode, ...]:
        return tuple(node for node in self._nodes if node.parent is None)

    def node(self, node_id: str) -> TopicNode:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise TaxonomyError(f"unknown node id: {node_id!r}") from None

    def children_of(self, node_id: str) -> tuple[TopicNode, ...]:
        return tuple(self._by_id[cid] for cid in self._children[node_id])

    def leaf(self, label: str) -> TopicNode:
        try:
            return self._leaf_by_label[label]
        except KeyError:
            raise TaxonomyError(f"unknown leaf label: {label!r}") from None

    def level1_of(self, leaf_label: str) -> str:
        """Label of the level-1 ancestor of the given leaf (itself for roots)."""
        node = self.leaf(leaf_label)
        while node.parent is not None:
            node = self._by_id[node.parent]
        return node.label

    def leaves_under(self, level1_label: str) -> tuple[str, ...]:
        """Leaf labels whose level-1 ancestor carries the given label."""
        return tuple(
            leaf for leaf in self.leaf_labels if self.level1_of(leaf) == level1_label
        )

    def to_config(self) -> dict:
        """Canonical flat serialization; reloading yields an equal taxonomy."""
        return {
            "topics": [
                {
                    "id": node.id,
                    "label": node.label,
                    "description": node.description,
                    **({"parent": node.parent} if node.parent is not None else {}),
                }
                for node in self._nodes
            ]
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Taxonomy):
            return NotImplemented
        return self._nodes == other._nodes

    def __hash__(self) -> int:
        return hash(self._nodes)

    def __repr__(self) -> str:
        return f"Taxonomy({len(self._nodes)} nodes, {len(self._leaves)} leaves)"


def leaf_to_level1(taxonomy: Taxonomy, leaf_label: str) -> str:
    """Map a leaf label to its level-1 ancestor's label."""
    return taxonomy.level1_of(leaf_label)


@dataclass(frozen=True)
class StageLabelSets:
    """The per-stage label subsets; each stage may classify into its own set."""

    c1: tuple[str, ...]
    c2: tuple[str, ...]
    c3: tuple[str, ...]

    def validate(self, taxonomy: Taxonomy) -> None:
        leaves = set(taxonomy.leaf_labels)
        for name, labels in (("c1", self.c1), ("c2", self.c2), ("c3", self.c3)):
            if not labels:
                raise TaxonomyError(f"stage label set {name} is empty")
            for label in labels:
                if label.casefold() in _RESERVED:
                    raise TaxonomyError(
                        f"stage label set {name} contains reserved label {label!r}"
                    )
                if label not in leaves:
                    raise TaxonomyError(
                        f"stage label set {name} contains non-leaf label {label!r}"
                    )

    @classmethod
    def all_leaves(cls, taxonomy: Taxonomy) -> "StageLabelSets":
        """Default: every stage uses the full leaf label space."""
        leaves = taxonomy.leaf_labels
        sets = cls(c1=leaves, c2=leaves, c3=leaves)
        sets.validate(taxonomy)
        return sets


def _parse_node_entry(
    entry: Mapping, parent: str | None, out: list[dict]
) -> None:
    if not isinstance(entry, Mapping):
        raise TaxonomyError(f"topic entry is not an object: {entry!r}")
    node_id = entry.get("id")
    label = entry.get("label")
    if not node_id or not isinstance(node_id, str):
        raise TaxonomyError(f"topic entry missing id: {entry!r}")
    if not label or not isinstance(label, str):
        raise TaxonomyError(f"topic {node_id!r} missing label")

    explicit_parent = entry.get("parent")
    if explicit_parent is not None and parent is not None:
        raise TaxonomyError(
            f"topic {node_id!r} is nested under {parent!r} but also names "
            f"parent {explicit_parent!r}"
        )
    out.append(
        {
            "id": node_id,
            "label": label,
            "parent": parent if parent is not None else explicit_parent,
            "description": str(entry.get("description", "")),
            "declared_level": entry.get("level"),
        }
    )
    for child in entry.get("children", []) or []:
        _parse_node_entry(child, node_id, out)


def _derive_levels(raw: list[dict]) -> list[TopicNode]:
    # Levels are always derived from the parent chain; an explicit "level"
    # field is only verified against the derivation.
    by_id = {r["id"]: r for r in raw}
    nodes: list[TopicNode] = []
    for r in raw:
        level = 1
        seen = {r["id"]}
        current = r
        while current["parent"] is not None:
            if current["parent"] in seen or current["parent"] not in by_id:
                # Cycle or dangling reference; Taxonomy.__init__ reports it
                # with the offending id. Level left as computed so far.
                break
            seen.add(current["parent"])
            current = by_id[current["parent"]]
            level += 1
        declared = r["declared_level"]
        if declared is not None and declared != level:
            raise TaxonomyError(
                f"node {r['id']!r} declares level {declared} but its parent "
                f"chain implies level {level}"
            )
        nodes.append(
            TopicNode(
                id=r["id"],
                label=r["label"],
                level=level,
                parent=r["parent"],
                description=r["description"],
            )
        )
    return nodes


def load_taxonomy(source: str | Path | Mapping) -> Taxonomy:
    """Load and validate a taxonomy from a JSON file path or parsed mapping.

    The document holds a top-level "topics" list. Entries either nest
    subtopics under "children" or reference a parent by id via "parent";
    both forms may be mixed. Declaration order (depth-first) is preserved
    and determines leaf label order.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TaxonomyError(f"taxonomy file is not valid JSON: {exc}") from exc
    else:
        document = source

    if not isinstance(document, Mapping) or "topics" not in document:
        raise TaxonomyError('taxonomy document must be an object with a "topics" list')
    entries = document["topics"]
    if not isinstance(entries, Sequence) or isinstance(entries, (str, bytes)):
        raise TaxonomyError('"topics" must be a list')

    parsed: list[dict] = []
    for entry in entries:
        _parse_node_entry(entry, None, parsed)
    return Taxonomy(_derive_levels(parsed))


def save_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(taxonomy.to_config(), indent=2) + "\n", encoding="utf-8"
    )


def default_taxonomy_path() -> Path:
    """Path of the shipped illustrative taxonomy (clinical vs non-clinical)."""
    return Path(__file__).parent / "data" / "taxonomy.json"


def load_default_taxonomy() -> Taxonomy:
    return load_taxonomy(default_taxonomy_path())
