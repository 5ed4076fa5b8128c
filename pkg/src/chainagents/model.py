"""Ledger domain types: addresses, transactions, blocks and chains.

All values are integer satoshi. Types are frozen; a chain is built once and
shared read-only by every analysis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

Address = str

SATOSHI_PER_COIN = 100_000_000
NONCE_MAX = 2**32 - 1


@dataclass(frozen=True)
class Transaction:
    txid: str
    inputs: tuple[tuple[Address, int], ...] = ()
    outputs: tuple[tuple[Address, int], ...] = ()
    is_coinbase: bool = False

    def __post_init__(self):
        # accept lists from callers, store tuples so instances stay hashable
        object.__setattr__(self, "inputs", tuple((a, int(v)) for a, v in self.inputs))
        object.__setattr__(self, "outputs", tuple((a, int(v)) for a, v in self.outputs))

    @property
    def input_addresses(self) -> list[Address]:
        """Distinct input addresses in first-appearance order."""
        return list(dict.fromkeys(a for a, _ in self.inputs))

    @property
    def output_addresses(self) -> list[Address]:
        return list(dict.fromkeys(a for a, _ in self.outputs))

    @property
    def input_value(self) -> int:
        return sum(v for _, v in self.inputs)

    @property
    def output_value(self) -> int:
        return sum(v for _, v in self.outputs)


@dataclass(frozen=True)
class Block:
    height: int
    timestamp: int
    nonce: int
    extranonce: int | None = None
    txs: tuple[Transaction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "txs", tuple(self.txs))

    @property
    def coinbase(self) -> Transaction | None:
        for tx in self.txs:
            if tx.is_coinbase:
                return tx
        return None

    @property
    def coinbase_outputs(self) -> tuple[tuple[Address, int], ...]:
        cb = self.coinbase
        return cb.outputs if cb is not None else ()

    @property
    def miner_address(self) -> Address | None:
        """Recipient of the first coinbase output; the block's attributed miner."""
        outs = self.coinbase_outputs
        return outs[0][0] if outs else None


@dataclass(frozen=True)
class Chain:
    blocks: tuple[Block, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __eq__(self, other):
        if not isinstance(other, Chain):
            return NotImplemented
        return self.blocks == other.blocks

    def __hash__(self):
        return hash(self.blocks)

    @cached_property
    def address_index(self) -> dict[Address, int]:
        """Address -> height at which it first appears (input or output)."""
        index: dict[Address, int] = {}
        for block in self.blocks:
            for tx in block.txs:
                for a, _ in tx.inputs:
                    index.setdefault(a, block.height)
                for a, _ in tx.outputs:
                    index.setdefault(a, block.height)
        return index

    @cached_property
    def addresses(self) -> list[Address]:
        """All addresses ordered by first appearance."""
        return list(self.address_index)

    @cached_property
    def _height_pos(self) -> dict[int, int]:
        return {b.height: i for i, b in enumerate(self.blocks)}

    def block_at(self, height: int) -> Block:
        return self.blocks[self._height_pos[height]]

    @cached_property
    def coinbase_heights(self) -> dict[Address, list[int]]:
        """Address -> heights of the blocks whose coinbase paid it."""
        out: dict[Address, list[int]] = {}
        for block in self.blocks:
            for a in dict.fromkeys(a for a, _ in block.coinbase_outputs):
                out.setdefault(a, []).append(block.height)
        return out

    def transactions(self) -> Iterable[tuple[int, Transaction]]:
        for block in self.blocks:
            for tx in block.txs:
                yield block.height, tx

    @property
    def heights(self) -> list[int]:
        return [b.height for b in self.blocks]

    @property
    def timestamps(self) -> list[int]:
        return [b.timestamp for b in self.blocks]


@dataclass(frozen=True)
class Violation:
    height: int | None
    rule: str
    detail: str = ""

    def __str__(self):
        where = f"height {self.height}" if self.height is not None else "chain"
        return f"{where}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def validate_chain(chain: Chain, check_timestamps: bool = False) -> list[Violation]:
    """Check every type invariant of ``chain``.

    Violations are returned as data, never raised. With ``check_timestamps``
    the optional monotone-timestamp rule is applied as well.
    """
    out: list[Violation] = []
    seen_heights: set[int] = set()
    expected = 1
    prev_ts = None
    for block in chain.blocks:
        h = block.height
        if h in seen_heights:
            out.append(Violation(h, "duplicate height"))
            continue
        seen_heights.add(h)
        if h < expected:
            out.append(Violation(h, "height out of order", f"expected {expected}"))
        elif h > expected:
            for missing in range(expected, h):
                out.append(Violation(missing, f"gap at height {missing}"))
        expected = max(expected, h + 1)

        if not 0 <= block.nonce <= NONCE_MAX:
            out.append(Violation(h, "nonce out of range", str(block.nonce)))
        if block.extranonce is not None and block.extranonce < 0:
            out.append(Violation(h, "negative extranonce", str(block.extranonce)))
        if check_timestamps and prev_ts is not None and block.timestamp < prev_ts:
            out.append(Violation(h, "timestamp decreases", f"{prev_ts} -> {block.timestamp}"))
        prev_ts = block.timestamp

        n_coinbase = sum(tx.is_coinbase for tx in block.txs)
        if n_coinbase != 1:
            out.append(Violation(h, "coinbase count", f"{n_coinbase} coinbase transactions"))
        elif not block.coinbase_outputs:
            out.append(Violation(h, "empty coinbase outputs"))

        for tx in block.txs:
            if any(v <= 0 for _, v in tx.inputs) or any(v <= 0 for _, v in tx.outputs):
                out.append(Violation(h, "non-positive value", tx.txid))
            if any(not a for a, _ in tx.inputs) or any(not a for a, _ in tx.outputs):
                out.append(Violation(h, "empty address", tx.txid))
            if tx.is_coinbase:
                if tx.inputs:
                    out.append(Violation(h, "coinbase with inputs", tx.txid))
            elif tx.output_value > tx.input_value:
                out.append(Violation(h, "value creation", tx.txid))
            elif not tx.inputs:
                out.append(Violation(h, "transaction without inputs", tx.txid))
    return out


def balances(chain: Chain) -> dict[Address, int]:
    """Net balance per address after replaying every transaction."""
    bal: dict[Address, int] = {}
    for _, tx in chain.transactions():
        for a, v in tx.inputs:
            bal[a] = bal.get(a, 0) - v
        for a, v in tx.outputs:
            bal[a] = bal.get(a, 0) + v
    return bal


def to_coin(satoshi: int) -> float:
    """Display-only conversion."""
    return satoshi / SATOSHI_PER_COIN


def miners_by_height(chain: Chain, labels: Mapping[Address, object]) -> list:
    """Label of each block's miner address, in chain order."""
    return [labels[b.miner_address] for b in chain.blocks]
