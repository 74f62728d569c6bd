"""Per-domain style entries from synthetic translated images, auxiliary-domain
selection, and the ``SIDB`` bank file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor_core import DimensionError, StyleStats, channel_stats, cosine_similarity

MAGIC = b"SIDB"
VERSION = 1


class BankFormatError(ValueError):
    pass


class BadMagicError(BankFormatError):
    pass


class VersionMismatchError(BankFormatError):
    pass


class TruncatedError(BankFormatError):
    pass


class InconsistentChannelsError(BankFormatError):
    pass


class SelectionError(LookupError):
    pass


def _check_domain(name: str) -> str:
    raw = name.encode("utf-8")
    if not raw or len(raw) > 255:
        raise ValueError(f"domain name must be 1..255 UTF-8 bytes, got {len(raw)}")
    return name


@dataclass(frozen=True)
class StyleEntry:
    domain: str
    stats: StyleStats
    gap: np.ndarray
    source_index: int

    def __post_init__(self):
        _check_domain(self.domain)
        gap = np.asarray(self.gap, dtype=np.float32).reshape(-1)
        if gap.size != self.stats.c:
            raise DimensionError("gap length must equal channel count")
        object.__setattr__(self, "gap", gap)


def build_entry(domain: str, f, k: int) -> StyleEntry:
    stats = channel_stats(f)
    # pooled vector is the channel mean
    return StyleEntry(domain, stats, stats.mu.copy(), int(k))


@dataclass
class StyleBank:
    channels: int
    entries_per_domain: int
    entries: list[StyleEntry] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.channels < 1 or self.entries_per_domain < 1:
            raise ValueError("channels and entries_per_domain must be >= 1")
        counts: dict[str, list[int]] = {}
        for e in self.entries:
            if e.stats.c != self.channels:
                raise InconsistentChannelsError(
                    f"entry {e.domain}/{e.source_index} has {e.stats.c} channels, bank has {self.channels}"
                )
            if not 1 <= e.source_index <= self.entries_per_domain:
                raise ValueError(f"source_index {e.source_index} outside [1, {self.entries_per_domain}]")
            counts.setdefault(e.domain, []).append(e.source_index)
        for d, idx in counts.items():
            if sorted(idx) != list(range(1, self.entries_per_domain + 1)):
                raise ValueError(f"domain {d!r} must hold exactly indices 1..{self.entries_per_domain}")
        if len(counts) < 2:
            raise ValueError("a bank needs at least two domains")

    @property
    def domains(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.domain not in seen:
                seen.append(e.domain)
        return seen

    def domain_entries(self, domain: str) -> list[StyleEntry]:
        out = sorted((e for e in self.entries if e.domain == domain), key=lambda e: e.source_index)
        if not out:
            raise KeyError(domain)
        return out

    @classmethod
    def from_features(cls, features: dict[str, list]) -> "StyleBank":
        """Build from ``{domain: [feature map, ...]}``; every list must have the same length."""
        entries = []
        n = None
        c = None
        for domain, feats in features.items():
            if n is None:
                n = len(feats)
            for k, f in enumerate(feats, start=1):
                e = build_entry(domain, f, k)
                c = e.stats.c if c is None else c
                entries.append(e)
        if n is None:
            raise ValueError("no domains given")
        return cls(c, n, entries)


def select_auxiliary(main: StyleEntry, bank: StyleBank) -> StyleEntry:
    """Most cosine-similar entry from any domain other than ``main.domain``.

    Ties go to the lexicographically smallest domain, then smallest index.
    """
    best = None
    best_key = None
    for e in bank.entries:
        if e.domain == main.domain:
            continue
        key = (-cosine_similarity(main.gap, e.gap), e.domain.encode("utf-8"), e.source_index)
        if best_key is None or key < best_key:
            best, best_key = e, key
    if best is None:
        raise SelectionError(f"bank has no domain other than {main.domain!r}")
    return best


def save_bank(bank: StyleBank, path) -> None:
    Path(path).write_bytes(dump_bank(bank))


def dump_bank(bank: StyleBank) -> bytes:
    bank.validate()
    domains = bank.domains
    parts = [MAGIC, struct.pack("<IIII", VERSION, bank.channels, bank.entries_per_domain, len(domains))]
    for d in domains:
        raw = d.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    le = np.dtype("<f4")
    for d in domains:
        for e in bank.domain_entries(d):
            for vec in (e.stats.mu, e.stats.sigma, e.gap):
                parts.append(np.asarray(vec, dtype=le).tobytes())
    return b"".join(parts)


def load_bank(path) -> StyleBank:
    return parse_bank(Path(path).read_bytes())


def parse_bank(buf: bytes) -> StyleBank:
    if len(buf) < 4:
        raise TruncatedError("file shorter than magic")
    if buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}")
    pos = 4
    if len(buf) < pos + 16:
        raise TruncatedError("truncated header")
    version, c, n, ndom = struct.unpack_from("<IIII", buf, pos)
    pos += 16
    if version != VERSION:
        raise VersionMismatchError(f"unsupported version {version}")
    if c < 1:
        raise InconsistentChannelsError("channel count must be >= 1")
    names = []
    for _ in range(ndom):
        if len(buf) < pos + 2:
            raise TruncatedError("truncated domain table")
        (ln,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if len(buf) < pos + ln:
            raise TruncatedError("truncated domain name")
        names.append(buf[pos:pos + ln].decode("utf-8"))
        pos += ln
    entry_bytes = 3 * 4 * c
    entries = []
    for d in names:
        for k in range(1, n + 1):
            if len(buf) < pos + entry_bytes:
                raise TruncatedError(f"truncated entry {d}/{k}")
            v = np.frombuffer(buf, dtype="<f4", count=3 * c, offset=pos).astype(np.float32)
            pos += entry_bytes
            entries.append(StyleEntry(d, StyleStats(v[:c], v[c:2 * c]), v[2 * c:], k))
    if pos != len(buf):
        raise InconsistentChannelsError(f"{len(buf) - pos} trailing bytes; header channel count disagrees with payload")
    return StyleBank(c, n, entries)
