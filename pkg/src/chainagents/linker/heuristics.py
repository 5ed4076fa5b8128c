"""Transaction-level address-linking heuristics."""
from __future__ import annotations

from collections import Counter
from itertools import combinations
from typing import NamedTuple

from ..model import Address, Chain

SAME_INPUT = "SameInput"
CHANGE = "Change"
CONSOLIDATION = "Consolidation"
SHARED_TRAJECTORY = "SharedTrajectory"
ROUND_CONSOLIDATION = "RoundConsolidation"
EDGE_KINDS = (SAME_INPUT, CHANGE, CONSOLIDATION, SHARED_TRAJECTORY, ROUND_CONSOLIDATION)


class LinkEdge(NamedTuple):
    a: Address
    b: Address
    kind: str
    provenance: str

    @classmethod
    def make(cls, a: Address, b: Address, kind: str, provenance: str) -> "LinkEdge":
        if a == b:
            raise ValueError("an edge needs two distinct addresses")
        if b < a:
            a, b = b, a
        return cls(a, b, kind, provenance)


def link_same_input(chain: Chain, complete: bool = True) -> list[LinkEdge]:
    """Link all input addresses of every multi-input transaction.

    ``complete=False`` emits a star from the first input instead of every
    pair; connectivity is identical and the edge count stays linear.
    """
    out = []
    for _, tx in chain.transactions():
        addrs = tx.input_addresses
        if len(addrs) < 2:
            continue
        pairs = combinations(addrs, 2) if complete else ((addrs[0], b) for b in addrs[1:])
        out.extend(LinkEdge.make(a, b, SAME_INPUT, tx.txid) for a, b in pairs)
    return out


def link_change(chain: Chain) -> list[LinkEdge]:
    """Link the inputs of a two-output payment to its single fresh output."""
    seen: set[Address] = set()
    out = []
    for _, tx in chain.transactions():
        ins = tx.input_addresses
        outs = tx.output_addresses
        if ins and len(outs) == 2 and not set(outs) & set(ins):
            fresh = [a for a in outs if a not in seen]
            if len(fresh) == 1:
                out.extend(LinkEdge.make(a, fresh[0], CHANGE, tx.txid) for a in ins)
        seen.update(ins)
        seen.update(outs)
    return out


def consolidation_backing(tx, traj_of_address, min_on_trajectory: int = 3) -> list[int]:
    """Trajectories carrying at least ``min_on_trajectory`` of the inputs' coinbase rewards."""
    counts: Counter = Counter()
    for a in tx.input_addresses:
        for tid in traj_of_address.get(a, ()):
            counts[tid] += 1
    return sorted(tid for tid, c in counts.items() if c >= min_on_trajectory)


def coinbase_trajectories(chain: Chain, traj_of_height, exclude_heights=()) -> dict[Address, tuple[int, ...]]:
    """Address -> trajectories of the blocks whose coinbase paid it."""
    exclude = set(exclude_heights)
    out: dict[Address, set[int]] = {}
    for addr, heights in chain.coinbase_heights.items():
        for h in heights:
            tid = traj_of_height.get(h)
            if tid is not None and h not in exclude:
                out.setdefault(addr, set()).add(tid)
    return {a: tuple(sorted(s)) for a, s in out.items()}


def link_consolidation(chain: Chain, trajectories, min_inputs: int = 3,
                       min_on_trajectory: int = 3, exclude_heights=()) -> list[LinkEdge]:
    """Link every input of a many-to-one transaction to its output.

    The transaction qualifies when it has at least ``min_inputs`` distinct
    input addresses, a single output address, and ``min_on_trajectory`` of
    its input coinbase rewards lie on a single trajectory.
    """
    traj_of_height = {h: t.id for t in trajectories for h in t.heights}
    by_addr = coinbase_trajectories(chain, traj_of_height, exclude_heights)
    out = []
    for _, tx in chain.transactions():
        ins = tx.input_addresses
        outs = tx.output_addresses
        if len(ins) < min_inputs or len(outs) != 1:
            continue
        if not consolidation_backing(tx, by_addr, min_on_trajectory):
            continue
        dest = outs[0]
        out.extend(LinkEdge.make(a, dest, CONSOLIDATION, tx.txid)
                   for a in ins if a != dest)
    return out
