"""One-shot weight cache: trained per-layer weight blobs keyed by layer
signatures, served back to warm-start any new model sharing a prefix with a
previously trained one.

Lookup walks a signature trie; among entries sharing the deepest common
prefix the highest source reward wins, then the most recent. Blobs are
opaque bytes; only evaluators interpret them.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import BlobArityMismatch, CorruptCheckpoint
from .search_space import LayerSpec, layer_to_wire


def layer_signature(spec: LayerSpec) -> str:
    """Stable 128-bit content hash of the canonical serialized layer."""
    canonical = json.dumps(layer_to_wire(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canonical.encode("utf-8"), digest_size=16).hexdigest()


def signature_path(arch: Sequence[LayerSpec]) -> tuple[str, ...]:
    return tuple(layer_signature(spec) for spec in arch)


def _blob_hash(blob: bytes) -> str:
    return hashlib.blake2b(blob, digest_size=16).hexdigest()


@dataclass
class PrefixEntry:
    path: tuple[str, ...]
    blobs: list[bytes]
    source_reward: float
    updated_at: int

    def __post_init__(self) -> None:
        if len(self.blobs) != len(self.path):
            raise BlobArityMismatch(
                f"{len(self.blobs)} blobs for a {len(self.path)}-layer path"
            )


class _TrieNode:
    __slots__ = ("children", "entry_keys")

    def __init__(self) -> None:
        self.children: dict[str, _TrieNode] = {}
        self.entry_keys: set[tuple[str, ...]] = set()


class WeightStore:
    """In-memory trie over signature paths with optional directory persistence."""

    def __init__(self) -> None:
        self._entries: dict[tuple[str, ...], PrefixEntry] = {}
        self._root = _TrieNode()
        self._counter = 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> list[PrefixEntry]:
        return list(self._entries.values())

    def store_prefix_weights(
        self, arch: Sequence[LayerSpec], blobs: Sequence[bytes], reward: float
    ) -> None:
        """Insert or unconditionally overwrite the entry for this architecture.
        One blob per layer; parameterless layers carry empty blobs."""
        if len(blobs) != len(arch):
            raise BlobArityMismatch(
                f"{len(blobs)} blobs for a {len(arch)}-layer architecture"
            )
        path = signature_path(arch)
        self._counter += 1
        entry = PrefixEntry(
            path=path,
            blobs=[bytes(b) for b in blobs],
            source_reward=float(reward),
            updated_at=self._counter,
        )
        if path not in self._entries:
            node = self._root
            node.entry_keys.add(path)
            for sig in path:
                node = node.children.setdefault(sig, _TrieNode())
                node.entry_keys.add(path)
        self._entries[path] = entry

    def longest_prefix_match(
        self, arch: Sequence[LayerSpec]
    ) -> tuple[int, list[bytes]]:
        """(match length, blobs) of the deepest stored prefix of `arch`.

        Ties on length break by source reward, then recency. (0, []) when the
        first layer matches nothing.
        """
        node = self._root
        depth = 0
        for sig in signature_path(arch):
            child = node.children.get(sig)
            if child is None:
                break
            node = child
            depth += 1
        if depth == 0 or not node.entry_keys:
            return 0, []
        best = max(
            (self._entries[key] for key in node.entry_keys),
            key=lambda e: (e.source_reward, e.updated_at),
        )
        return depth, list(best.blobs[:depth])

    # -- persistence --------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        """Write blobs (content-hash named) and an index JSON, atomically."""
        directory = Path(directory)
        blob_dir = directory / "blobs"
        blob_dir.mkdir(parents=True, exist_ok=True)
        index = {"version": 1, "counter": self._counter, "entries": []}
        for entry in self._entries.values():
            hashes = []
            for blob in entry.blobs:
                h = _blob_hash(blob)
                target = blob_dir / f"{h}.bin"
                if not target.exists():
                    target.write_bytes(blob)
                hashes.append(h)
            index["entries"].append(
                {
                    "path": list(entry.path),
                    "blob_hashes": hashes,
                    "source_reward": entry.source_reward,
                    "updated_at": entry.updated_at,
                }
            )
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".index-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(index, fh, sort_keys=True)
            os.replace(tmp, directory / "index.json")
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    @classmethod
    def load(cls, directory: str | Path) -> "WeightStore":
        directory = Path(directory)
        index_file = directory / "index.json"
        store = cls()
        if not index_file.exists():
            return store
        index = json.loads(index_file.read_text())
        blob_dir = directory / "blobs"
        for item in index["entries"]:
            blobs = []
            for h in item["blob_hashes"]:
                blob = (blob_dir / f"{h}.bin").read_bytes()
                if _blob_hash(blob) != h:
                    raise CorruptCheckpoint(f"weight blob {h} failed its hash check")
                blobs.append(blob)
            path = tuple(item["path"])
            entry = PrefixEntry(
                path=path,
                blobs=blobs,
                source_reward=float(item["source_reward"]),
                updated_at=int(item["updated_at"]),
            )
            store._entries[path] = entry
            node = store._root
            node.entry_keys.add(path)
            for sig in path:
                node = node.children.setdefault(sig, _TrieNode())
                node.entry_keys.add(path)
        store._counter = int(index.get("counter", len(store._entries)))
        return store
