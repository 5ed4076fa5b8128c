from __future__ import annotations

import csv

from ..model import Chain
from .assemble import AgentCatalog, AgentSummary

SUMMARY_COLUMNS = ("rank", "agent_id", "blocks", "satoshi", "first_ts", "last_ts")


def write_catalog(catalog: AgentCatalog, path) -> None:
    """``address,agent_id`` lines, ordered by agent then address."""
    rows = sorted(catalog.labels.items(), key=lambda kv: (kv[1], kv[0]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("address", "agent_id"))
        w.writerows(rows)


def read_catalog(path) -> dict[str, int]:
    out: dict[str, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0] == "address":
                continue
            if len(row) != 2:
                raise ValueError(f"line {lineno}: expected address,agent_id")
            try:
                out[row[0]] = int(row[1])
            except ValueError:
                raise ValueError(f"line {lineno}: agent_id must be an integer") from None
    return out


def write_summary(catalog: AgentCatalog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in catalog.summaries:
            w.writerow((s.rank, s.agent_id, s.blocks, s.satoshi, s.first_ts, s.last_ts))


def catalog_from_labels(chain: Chain, labels) -> AgentCatalog:
    """Rebuild summaries for an ``address -> agent_id`` map read back from disk.

    Agents are ranked by mined satoshi, then first appearance, then id.
    """
    mined: dict[int, int] = {}
    blocks: dict[int, int] = {}
    first: dict[int, int] = {}
    last: dict[int, int] = {}
    for b in chain.blocks:
        try:
            g = labels[b.miner_address]
        except KeyError:
            raise ValueError(f"catalog has no agent for miner {b.miner_address!r}") from None
        blocks[g] = blocks.get(g, 0) + 1
        for a, v in b.coinbase_outputs:
            mined[labels[a]] = mined.get(labels[a], 0) + v
        for tx in b.txs:
            for a in {a for a, _ in tx.inputs} | {a for a, _ in tx.outputs}:
                ga = labels.get(a)
                if ga is None:
                    continue
                first[ga] = min(first.get(ga, b.timestamp), b.timestamp)
                last[ga] = max(last.get(ga, b.timestamp), b.timestamp)
    order = sorted(first, key=lambda g: (-mined.get(g, 0), first[g], g))
    summaries = [AgentSummary(rank, g, blocks.get(g, 0), mined.get(g, 0), first[g], last[g])
                 for rank, g in enumerate(order, start=1)]
    return AgentCatalog(dict(labels), summaries)
