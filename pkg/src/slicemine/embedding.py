"""Text-embedding providers.

The built-in provider hashes character trigrams into a signed 384-dimensional
vector and L2-normalizes; it is dependency-free and byte-reproducible. Any
external model can be plugged in as an executable speaking the JSONL protocol:
stdin rows ``{"id": ..., "text": ...}``, stdout a header ``{"dim": D}``
followed by rows ``{"id": ..., "vector": [...]}``.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from typing import Protocol, Sequence

import numpy as np

from .errors import EmbeddingProviderUnavailable
from .hashing import stable_hash64


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class TrigramHashEmbedder:
    """Deterministic fallback embedder: signed character-trigram hashing."""

    def __init__(self, dim: int = 384):
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=float)
        for row, text in enumerate(texts):
            grams = [text[i : i + 3] for i in range(len(text) - 2)] or [text]
            for gram in grams:
                h = stable_hash64("tri", gram)
                sign = 1.0 if (h >> 60) & 1 else -1.0
                out[row, h % self.dim] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class CommandEmbedder:
    """Adapter around an external executable speaking the JSONL protocol."""

    def __init__(self, command: str):
        self.command = command
        self.dim = -1  # declared by the provider's header record

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        payload = "".join(
            json.dumps({"id": i, "text": t}) + "\n" for i, t in enumerate(texts)
        )
        try:
            proc = subprocess.run(
                shlex.split(self.command),
                input=payload.encode("utf-8"),
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                check=True,
            )
        except (OSError, subprocess.CalledProcessError) as exc:
            raise EmbeddingProviderUnavailable(str(exc)) from exc
        lines = [ln for ln in proc.stdout.decode("utf-8").splitlines() if ln.strip()]
        if not lines:
            raise EmbeddingProviderUnavailable("provider produced no output")
        try:
            header = json.loads(lines[0])
            dim = int(header["dim"])
            vectors = np.zeros((len(texts), dim), dtype=float)
            seen = set()
            for ln in lines[1:]:
                row = json.loads(ln)
                idx = int(row["id"])
                vec = np.asarray(row["vector"], dtype=float)
                if vec.shape != (dim,):
                    raise ValueError(f"vector for id {idx} has wrong dimension")
                vectors[idx] = vec
                seen.add(idx)
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise EmbeddingProviderUnavailable(f"bad provider output: {exc}") from exc
        if len(seen) != len(texts):
            raise EmbeddingProviderUnavailable(
                f"provider returned {len(seen)} of {len(texts)} vectors"
            )
        self.dim = dim
        return vectors


def get_provider(spec: str) -> EmbeddingProvider:
    """Resolve a provider spec: ``builtin`` or ``cmd:<executable ...>``."""
    if spec == "builtin":
        return TrigramHashEmbedder()
    if spec.startswith("cmd:"):
        return CommandEmbedder(spec[4:])
    raise EmbeddingProviderUnavailable(f"unknown provider spec {spec!r}")
