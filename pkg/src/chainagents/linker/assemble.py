"""Agent assembly: components, overlap quarantine, trajectory merges,
curated reintroduction and round-batch merges.

Footprints are kept per component as ``{trajectory_id: (lo, hi)}`` where the
interval spans only the component's own blocks on that trajectory. Two
trajectories overlap when their intervals share more than ``overlap_tol``
heights.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from ..model import Address, Chain
from .heuristics import CONSOLIDATION, consolidation_backing, coinbase_trajectories
from .nonce import nonce_profile_compatible
from .trajectories import overlap_length
from .unionfind import UnionFind


@dataclass(frozen=True)
class AgentSummary:
    rank: int
    agent_id: int
    blocks: int
    satoshi: int
    first_ts: int
    last_ts: int


@dataclass
class AgentCatalog:
    labels: dict[Address, int] = field(default_factory=dict)
    summaries: list[AgentSummary] = field(default_factory=list)
    patoshi_agent: int | None = None

    def __len__(self):
        return len(self.summaries)

    def members(self) -> dict[int, list[Address]]:
        out: dict[int, list[Address]] = {}
        for a, agent in self.labels.items():
            out.setdefault(agent, []).append(a)
        return out


def has_overlap(footprint, overlap_tol: int = 2, slopes=None, slope_rtol=None) -> bool:
    """True when two trajectories in ``footprint`` share > ``overlap_tol`` heights.

    With ``slopes`` and ``slope_rtol`` only trajectories of similar slope are
    compared, which tolerates one agent running distinct machines.
    """
    items = sorted(footprint.items(), key=lambda kv: kv[1])
    if slopes is None or slope_rtol is None:
        best_hi, best = None, None
        for _, iv in items:
            if best is not None and overlap_length(best, iv) > overlap_tol:
                return True
            if best_hi is None or iv[1] > best_hi:
                best_hi, best = iv[1], iv
        return False
    for i, (ta, ia) in enumerate(items):
        for tb, ib in items[i + 1:]:
            if ib[0] > ia[1]:
                break
            sa, sb = slopes[ta], slopes[tb]
            if abs(sa - sb) <= slope_rtol * max(sa, sb) and overlap_length(ia, ib) > overlap_tol:
                return True
    return False


def _merged(fa, fb):
    if len(fa) < len(fb):
        fa, fb = fb, fa
    out = dict(fa)
    for t, (lo, hi) in fb.items():
        cur = out.get(t)
        out[t] = (lo, hi) if cur is None else (min(cur[0], lo), max(cur[1], hi))
    return out


class _State:
    """Union-find plus per-root footprint, inherited trajectories and nonces."""

    def __init__(self, n, block_info, inherited, overlap_tol, slopes, slope_rtol):
        self.uf = UnionFind(n)
        self.block_info = block_info
        self.inherited0 = inherited
        self.overlap_tol = overlap_tol
        self.slopes = slopes
        self.slope_rtol = slope_rtol

    def link(self, pairs):
        for a, b in pairs:
            self.uf.union(a, b)
        self.refresh()

    def refresh(self):
        find = self.uf.find
        self.foot: dict[int, dict[int, tuple[int, int]]] = {}
        self.on_traj: dict[int, Counter] = {}
        self.nonces: dict[int, list[int]] = {}
        self.blocks: dict[int, int] = {}
        for addr, h, tid, nonce in self.block_info:
            r = find(addr)
            self.blocks[r] = self.blocks.get(r, 0) + 1
            self.nonces.setdefault(r, []).append(nonce)
            if tid is None:
                continue
            f = self.foot.setdefault(r, {})
            cur = f.get(tid)
            f[tid] = (h, h) if cur is None else (min(cur[0], h), max(cur[1], h))
            self.on_traj.setdefault(r, Counter())[tid] += 1
        self.inherited: dict[int, set[int]] = {}
        for addr, tids in self.inherited0.items():
            self.inherited.setdefault(find(addr), set()).update(tids)

    def overlaps(self, footprint) -> bool:
        return has_overlap(footprint, self.overlap_tol, self.slopes, self.slope_rtol)

    def trajectories(self, r) -> set[int]:
        return set(self.foot.get(r, {})) | self.inherited.get(r, set())

    def try_merge(self, ra, rb, check=None) -> bool:
        """Merge two roots unless the union shows overlap (or ``check`` vetoes)."""
        if ra == rb:
            return False
        fa, fb = self.foot.get(ra, {}), self.foot.get(rb, {})
        fm = _merged(fa, fb)
        if self.overlaps(fm):
            return False
        if check is not None and not check(ra, rb):
            return False
        r = self.uf.union(ra, rb)
        o = rb if r == ra else ra
        self.foot[r] = fm
        self.foot.pop(o, None)
        self.blocks[r] = self.blocks.get(ra, 0) + self.blocks.get(rb, 0)
        self.blocks.pop(o, None)
        self.nonces[r] = self.nonces.get(ra, []) + self.nonces.get(rb, [])
        self.nonces.pop(o, None)
        c = self.on_traj.get(ra, Counter()) + self.on_traj.get(rb, Counter())
        self.on_traj[r] = c
        self.on_traj.pop(o, None)
        self.inherited[r] = self.inherited.get(ra, set()) | self.inherited.get(rb, set())
        self.inherited.pop(o, None)
        return True


def assemble_agents(chain: Chain, edges, trajectories, patoshi_heights=(), *,
                    overlap_tol: int = 2, share_min: int = 3, round_counts=(20, 40),
                    consolidation_min: int = 3, multi_machine: bool = False,
                    slope_rtol: float = 0.1, steps: str = "defgh") -> AgentCatalog:
    """Turn evidence edges into an agent catalog.

    ``steps`` selects which of the assembly stages run; ``"d"`` alone gives
    plain connected components of the supplied edges. Blocks in
    ``patoshi_heights`` and their addresses are held out of the graph and
    form one reserved agent.
    """
    addrs = chain.addresses
    index = {a: i for i, a in enumerate(addrs)}
    n = len(addrs)
    patoshi = set(patoshi_heights)
    patoshi_addrs = {index[a] for h in patoshi for a, _ in chain.block_at(h).coinbase_outputs}

    traj_of_height = {h: t.id for t in trajectories for h in t.heights}
    slopes = {t.id: t.slope for t in trajectories}
    block_info = []
    for b in chain.blocks:
        if b.height in patoshi:
            continue
        block_info.append((index[b.miner_address], b.height, traj_of_height.get(b.height), b.nonce))

    pairs_fixed = []
    pairs_consol = []  # (a, b, txid) in transaction order
    for e in edges:
        ia, ib = index[e.a], index[e.b]
        if ia in patoshi_addrs or ib in patoshi_addrs:
            continue
        if e.kind == CONSOLIDATION:
            pairs_consol.append((ia, ib, e.provenance))
        else:
            pairs_fixed.append((ia, ib))

    # consolidation destinations inherit the trajectories backing them
    inherited: dict[int, set[int]] = {}
    consol_txids = {p[2] for p in pairs_consol}
    if consol_txids:
        by_addr = coinbase_trajectories(chain, traj_of_height, patoshi)
        for _, tx in chain.transactions():
            if tx.txid in consol_txids:
                backing = consolidation_backing(tx, by_addr, consolidation_min)
                inherited.setdefault(index[tx.outputs[0][0]], set()).update(backing)

    mm = (slopes, slope_rtol) if multi_machine else (None, None)
    st = _State(n, block_info, inherited, overlap_tol, *mm)
    st.link(pairs_fixed + [(a, b) for a, b, _ in pairs_consol])

    if "e" in steps:
        flagged = {r for r, f in st.foot.items() if st.overlaps(f)}
        quarantined = [p for p in pairs_consol if st.uf.find(p[0]) in flagged]
        kept = [(a, b) for a, b, _ in pairs_consol if st.uf.find(a) not in flagged]
        if quarantined:
            st = _State(n, block_info, inherited, overlap_tol, *mm)
            st.link(pairs_fixed + kept)
    else:
        quarantined = []

    if "f" in steps:
        _merge_shared_trajectories(st, share_min)

    if "g" in steps:
        for a, b, _ in quarantined:
            ra, rb = st.uf.find(a), st.uf.find(b)
            if ra != rb and st.trajectories(ra) & st.trajectories(rb):
                st.try_merge(ra, rb)

    if "h" in steps:
        _merge_round_batches(chain, st, index, patoshi_addrs, set(round_counts))

    return _catalog(chain, st, addrs, patoshi_addrs)


def _merge_shared_trajectories(st: _State, share_min: int):
    changed = True
    while changed:
        changed = False
        holders: dict[int, list[tuple[int, int]]] = {}
        for r, counts in st.on_traj.items():
            for tid, c in counts.items():
                if c >= share_min:
                    holders.setdefault(tid, []).append((r, c))
        for tid in sorted(holders):
            group = sorted(holders[tid], key=lambda rc: (-rc[1], rc[0]))
            for r, _ in group[1:]:
                head = st.uf.find(group[0][0])
                if st.try_merge(head, st.uf.find(r)):
                    changed = True


def _merge_round_batches(chain, st: _State, index, patoshi_addrs, round_counts):
    spends: dict[int, set[int]] = {}
    for _, tx in chain.transactions():
        if tx.is_coinbase:
            continue
        dests = {index[a] for a in tx.output_addresses}
        only = next(iter(dests)) if len(dests) == 1 else -1
        for a in tx.input_addresses:
            spends.setdefault(index[a], set()).add(only)

    coinbase_by_root: dict[int, list[int]] = {}
    for a in chain.coinbase_heights:
        i = index[a]
        if i not in patoshi_addrs:
            coinbase_by_root.setdefault(st.uf.find(i), []).append(i)

    groups: dict[int, list[int]] = {}
    for r, members in coinbase_by_root.items():
        if st.blocks.get(r, 0) not in round_counts:
            continue
        dest = set()
        for i in members:
            dest |= spends.get(i, {-1})
        if len(dest) != 1:
            continue
        d = next(iter(dest))
        if d < 0 or d in patoshi_addrs or st.uf.find(d) == r:
            continue
        groups.setdefault(d, []).append(r)

    def compatible(ra, rb):
        na, nb = st.nonces.get(ra), st.nonces.get(rb)
        return not na or not nb or nonce_profile_compatible(na, nb)

    for d in sorted(groups):
        for r in sorted(groups[d]):
            st.try_merge(st.uf.find(d), st.uf.find(r), compatible)


def _catalog(chain: Chain, st: _State, addrs, patoshi_addrs) -> AgentCatalog:
    n = len(addrs)
    find = st.uf.find
    patoshi_root = -1
    group_of = [patoshi_root if i in patoshi_addrs else find(i) for i in range(n)]

    mined: dict[int, int] = {}
    blocks: dict[int, int] = {}
    first: dict[int, int] = {}
    last: dict[int, int] = {}
    index = {a: i for i, a in enumerate(addrs)}
    for b in chain.blocks:
        g = group_of[index[b.miner_address]]
        blocks[g] = blocks.get(g, 0) + 1
        for a, v in b.coinbase_outputs:
            ga = group_of[index[a]]
            mined[ga] = mined.get(ga, 0) + v
        for tx in b.txs:
            for a in {a for a, _ in tx.inputs} | {a for a, _ in tx.outputs}:
                ga = group_of[index[a]]
                first.setdefault(ga, b.timestamp)
                first[ga] = min(first[ga], b.timestamp)
                last[ga] = max(last.get(ga, b.timestamp), b.timestamp)

    smallest: dict[int, Address] = {}
    for i, a in enumerate(addrs):
        g = group_of[i]
        if g not in smallest or a < smallest[g]:
            smallest[g] = a
    order = sorted(smallest, key=lambda g: (-mined.get(g, 0), first[g], smallest[g]))
    agent_of = {g: k for k, g in enumerate(order, start=1)}
    labels = {a: agent_of[group_of[i]] for i, a in enumerate(addrs)}
    summaries = [AgentSummary(agent_of[g], agent_of[g], blocks.get(g, 0), mined.get(g, 0), first[g], last[g])
                 for g in order]
    return AgentCatalog(labels, summaries, agent_of.get(patoshi_root))
