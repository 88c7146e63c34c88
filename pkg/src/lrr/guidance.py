"""Text-embedding bank storage and template-to-text selection.

The bank file format (magic ``EMB1``) is the interface to the offline
exporter; at desk scale a deterministic fixture generator stands in for
a real vision-language model so nothing here needs one.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBankError, FormatError, NumericError

MAGIC = b"EMB1"


@dataclass
class TextEmbedding:
    label: str
    vector: np.ndarray


@dataclass
class TemplateEmbedding:
    vector: np.ndarray
    source: str = ""


class EmbeddingBank:
    """Labeled M-dim vectors; labels unique, vectors non-zero."""

    def __init__(self, entries):
        labels = [lb for lb, _ in entries]
        if len(set(labels)) != len(labels):
            raise FormatError("duplicate labels in embedding bank")
        vecs = []
        for lb, v in entries:
            v = np.asarray(v, dtype=np.float32).reshape(-1)
            if not np.all(np.isfinite(v)):
                raise NumericError(f"non-finite embedding for {lb!r}")
            if float(np.linalg.norm(v)) == 0.0:
                raise NumericError(f"zero-norm embedding for {lb!r}")
            vecs.append(v)
        dims = {v.size for v in vecs}
        if len(dims) > 1:
            raise FormatError(f"mixed embedding dims {dims}")
        self.labels = labels
        self.vectors = vecs

    @property
    def dim(self):
        return self.vectors[0].size if self.vectors else 0

    def __len__(self):
        return len(self.labels)


def select_text_embedding(tpl, bank):
    """Entry with the highest cosine similarity to the template embedding.

    Ties break to the lowest entry index, so selection is deterministic
    given bank order and invariant to positive rescaling.
    """
    if len(bank) == 0:
        raise EmptyBankError("embedding bank has no entries")
    t = np.asarray(tpl.vector, dtype=np.float32).reshape(-1)
    tn = float(np.linalg.norm(t))
    if tn == 0.0 or not np.all(np.isfinite(t)):
        raise NumericError("template embedding has zero norm or non-finite values")
    if t.size != bank.dim:
        raise FormatError(f"template dim {t.size} != bank dim {bank.dim}")
    best, best_sim = 0, -np.inf
    for i, v in enumerate(bank.vectors):
        sim = float(np.dot(t, v) / (tn * np.linalg.norm(v)))
        if sim > best_sim:
            best, best_sim = i, sim
    return TextEmbedding(bank.labels[best], bank.vectors[best].copy())


# ---------------------------------------------------------------- EMB1 file

def save_bank(bank, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", bank.dim, len(bank)))
        for lb, v in zip(bank.labels, bank.vectors):
            raw = lb.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise FormatError(f"label too long: {lb[:32]!r}...")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(v.astype("<f4").tobytes())


def load_bank(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}")
    try:
        m, count = struct.unpack_from("<II", blob, 4)
        off = 12
        entries = []
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", blob, off)
            off += 2
            label = blob[off:off + ln].decode("utf-8")
            if len(blob[off:off + ln]) != ln:
                raise FormatError("truncated label")
            off += ln
            vec = np.frombuffer(blob, dtype="<f4", count=m, offset=off)
            if vec.size != m:
                raise FormatError("truncated vector")
            off += 4 * m
            entries.append((label, vec.copy()))
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"corrupt bank file: {exc}") from exc
    if off != len(blob):
        raise FormatError("trailing bytes in bank file")
    return EmbeddingBank(entries)


# ----------------------------------------------------------------- fixtures

def _label_rng(label, dim, salt="lrr-fixture"):
    digest = hashlib.sha256(f"{salt}:{label}:{dim}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def fixture_vector(label, dim=16):
    """Deterministic unit pseudo-embedding for a class label."""
    rng = _label_rng(label, dim)
    v = rng.standard_normal(dim).astype(np.float32)
    return v / np.float32(np.linalg.norm(v))


def fixture_bank(labels, dim=16):
    return EmbeddingBank([(lb, fixture_vector(lb, dim)) for lb in labels])


def fixture_template_embedding(label, dim=16, instance=0, noise=0.1):
    """Pseudo template embedding: the class vector plus a small
    instance-keyed perturbation, so selection recovers the class."""
    rng = _label_rng(f"{label}#tpl{instance}", dim, salt="lrr-template")
    v = fixture_vector(label, dim) + np.float32(noise) * rng.standard_normal(dim).astype(np.float32)
    return TemplateEmbedding(v / np.float32(np.linalg.norm(v)), source=f"fixture:{label}:{instance}")
