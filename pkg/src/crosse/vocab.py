"""Label/id vocabularies for entities and relations.

Ids are dense, assigned in first-seen order, and stable across re-encoding
of known labels. Labels are opaque byte strings: no case folding, no
whitespace normalization.
"""

from __future__ import annotations

import io


class Dictionary:
    """Bijective label <-> dense integer id map."""

    __slots__ = ("_ids", "_labels")

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._labels: list[str] = []

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._ids

    def add(self, label: str) -> int:
        """Return the id for `label`, inserting it if unseen."""
        i = self._ids.get(label)
        if i is None:
            i = len(self._labels)
            self._ids[label] = i
            self._labels.append(label)
        return i

    def encode(self, label: str) -> int:
        """Id of a known label. Raises KeyError for unknown labels."""
        return self._ids[label]

    def decode(self, i: int) -> str:
        if not 0 <= i < len(self._labels):
            raise IndexError(f"id {i} out of range [0, {len(self._labels)})")
        return self._labels[i]

    def labels(self) -> list[str]:
        return list(self._labels)

    def save(self, path) -> None:
        """Write `label<TAB>id` lines, one per entry, id order."""
        with io.open(path, "w", encoding="utf-8", newline="\n") as f:
            for i, label in enumerate(self._labels):
                f.write(f"{label}\t{i}\n")

    @classmethod
    def load(cls, path) -> "Dictionary":
        d = cls()
        with io.open(path, "r", encoding="utf-8", newline="\n") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\n").rstrip("\r")
                if not line:
                    continue
                label, _, id_text = line.rpartition("\t")
                try:
                    want = int(id_text)
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: malformed dictionary line"
                    ) from None
                got = d.add(label)
                if got != want:
                    raise ValueError(
                        f"{path}:{lineno}: non-dense id {want}, expected {got}"
                    )
        return d
