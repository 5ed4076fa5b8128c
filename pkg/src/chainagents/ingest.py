"""Read and write the line-delimited chain format and address tag files.

Chain format, one JSON object per line, heights ascending::

    {"height": 1, "timestamp": 1231006505, "nonce": 2083236893, "extranonce": 4,
     "txs": [{"txid": "...", "is_coinbase": true, "inputs": [],
              "outputs": [["1A1z...", 5000000000]]}]}

``extranonce`` may be ``null``. Values are integer satoshi.

Tag format: ``address,label`` per line; blank lines and ``#`` comments are
ignored. Labels are opaque, case-sensitive strings.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import Address, Block, Chain, Transaction, validate_chain


class ChainFormatError(ValueError):
    """Malformed or inconsistent chain file."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class TagConflictError(ValueError):
    pass


@dataclass(frozen=True)
class TagFile:
    entries: tuple[tuple[Address, str], ...] = ()

    def as_dict(self) -> dict[Address, str]:
        return dict(self.entries)

    def __len__(self):
        return len(self.entries)


def _require(record: dict, key: str, kind, lineno: int, nullable: bool = False):
    if key not in record:
        raise ChainFormatError("missing", lineno, key)
    value = record[key]
    if value is None and nullable:
        return None
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ChainFormatError(f"expected integer, got {value!r}", lineno, key)
    if kind is not int and not isinstance(value, kind):
        raise ChainFormatError(f"expected {kind.__name__}, got {type(value).__name__}", lineno, key)
    return value


def _pairs(raw, lineno: int, key: str) -> list[tuple[str, int]]:
    if not isinstance(raw, list):
        raise ChainFormatError("expected list of [address, value]", lineno, key)
    out = []
    for item in raw:
        if (not isinstance(item, list) or len(item) != 2 or not isinstance(item[0], str)
                or isinstance(item[1], bool) or not isinstance(item[1], int)):
            raise ChainFormatError(f"bad pair {item!r}", lineno, key)
        out.append((item[0], item[1]))
    return out


def _parse_block(record, lineno: int) -> Block:
    if not isinstance(record, dict):
        raise ChainFormatError("expected a JSON object", lineno)
    txs = []
    for raw_tx in _require(record, "txs", list, lineno):
        if not isinstance(raw_tx, dict):
            raise ChainFormatError("expected transaction object", lineno, "txs")
        is_cb = raw_tx.get("is_coinbase")
        if not isinstance(is_cb, bool):
            raise ChainFormatError("expected boolean", lineno, "is_coinbase")
        txs.append(Transaction(
            txid=_require(raw_tx, "txid", str, lineno),
            inputs=_pairs(raw_tx.get("inputs"), lineno, "inputs"),
            outputs=_pairs(raw_tx.get("outputs"), lineno, "outputs"),
            is_coinbase=is_cb,
        ))
    return Block(
        height=_require(record, "height", int, lineno),
        timestamp=_require(record, "timestamp", int, lineno),
        nonce=_require(record, "nonce", int, lineno),
        extranonce=_require(record, "extranonce", int, lineno, nullable=True),
        txs=tuple(txs),
    )


def parse_chain(path: str | os.PathLike) -> Chain:
    """Parse a chain file, raising :class:`ChainFormatError` on any defect."""
    blocks: list[Block] = []
    last_height = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ChainFormatError(f"invalid JSON: {exc.msg}", lineno) from None
            block = _parse_block(record, lineno)
            if block.height == last_height or (blocks and block.height < last_height):
                raise ChainFormatError(f"duplicate height {block.height}", lineno, "height")
            if block.height != last_height + 1:
                raise ChainFormatError(
                    f"height gap: expected {last_height + 1}, got {block.height}", lineno, "height")
            last_height = block.height
            blocks.append(block)
    chain = Chain(tuple(blocks))
    violations = validate_chain(chain)
    if violations:
        v = violations[0]
        raise ChainFormatError(f"{v.rule} {v.detail}".strip() + f" at height {v.height}")
    return chain


def block_record(block: Block) -> dict:
    return {
        "height": block.height,
        "timestamp": block.timestamp,
        "nonce": block.nonce,
        "extranonce": block.extranonce,
        "txs": [
            {
                "txid": tx.txid,
                "is_coinbase": tx.is_coinbase,
                "inputs": [[a, v] for a, v in tx.inputs],
                "outputs": [[a, v] for a, v in tx.outputs],
            }
            for tx in block.txs
        ],
    }


def write_chain(chain: Chain, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for block in chain.blocks:
            fh.write(json.dumps(block_record(block), separators=(",", ":")))
            fh.write("\n")


def _tag_lines(path) -> Iterable[tuple[int, str, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            addr, sep, label = line.partition(",")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'address,label'")
            yield lineno, addr.strip(), label.strip()


def parse_tags(path: str | os.PathLike) -> TagFile:
    labels: dict[Address, str] = {}
    for lineno, addr, label in _tag_lines(path):
        if not addr:
            raise ValueError(f"line {lineno}: empty address")
        if not label:
            raise ValueError(f"line {lineno}: empty label for {addr}")
        prev = labels.setdefault(addr, label)
        if prev != label:
            raise TagConflictError(f"line {lineno}: {addr} tagged both {prev!r} and {label!r}")
    return TagFile(tuple(labels.items()))


def write_tags(tags: Mapping[Address, object], path: str | os.PathLike, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(f"# {header}\n")
        for addr, label in tags.items():
            fh.write(f"{addr},{label}\n")


def sha256_file(path: str | os.PathLike) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


__all__ = [
    "ChainFormatError", "TagConflictError", "TagFile", "parse_chain", "write_chain",
    "parse_tags", "write_tags", "block_record", "sha256_file",
]
