"""Seeded generator of synthetic chains with known address ownership.

Each miner runs one machine. A session starts with extranonce 0 and the
counter advances on every network block (``gpu_rate`` per block for
``gpu_like`` miners), so each session traces a straight line in
extranonce-vs-height space. Sessions have geometric lengths and restart
immediately. Every block pays a fresh coinbase address; rewards are later
moved according to the miner's consolidation policy.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import Address, Block, Chain, Transaction, balances

REWARD = 50 * 100_000_000
GENESIS_TS = 1231006505
BLOCK_INTERVAL = 600.0

NONCE_PROFILES = ("counter", "uniform", "restricted-range")
CONSOLIDATION_POLICIES = ("never", "per-session", "round-batch")
EXCHANGE_AGENT = "exchange"

_B58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"


@dataclass(frozen=True)
class MinerSpec:
    agent_id: str
    hashrate_weight: float = 1.0
    # mean session length in network heights; 0 means a single endless session
    session_mean: float = 2000.0
    nonce_profile: str = "uniform"
    # inclusive range of the nonce high byte, restricted-range profile only
    nonce_range: tuple[int, int] = (0, 255)
    consolidation: str = "per-session"
    batch_size: int = 20
    gpu_like: bool = False
    gpu_rate: int = 3
    extranonce_visible: bool = True
    start_block: int = 1
    end_block: int | None = None
    # chance that a consolidation goes to the shared exchange address
    exchange_rate: float = 0.0

    def __post_init__(self):
        if not self.hashrate_weight > 0:
            raise ValueError(f"{self.agent_id}: hashrate_weight must be > 0")
        if self.nonce_profile not in NONCE_PROFILES:
            raise ValueError(f"{self.agent_id}: unknown nonce_profile {self.nonce_profile!r}")
        if self.consolidation not in CONSOLIDATION_POLICIES:
            raise ValueError(f"{self.agent_id}: unknown consolidation {self.consolidation!r}")
        if self.batch_size <= 0:
            raise ValueError(f"{self.agent_id}: batch_size must be > 0")
        if self.session_mean < 0:
            raise ValueError(f"{self.agent_id}: session_mean must be >= 0")
        lo, hi = self.nonce_range
        if not 0 <= lo <= hi <= 255:
            raise ValueError(f"{self.agent_id}: nonce_range must satisfy 0 <= lo <= hi <= 255")
        if self.gpu_rate < 1:
            raise ValueError(f"{self.agent_id}: gpu_rate must be >= 1")
        if not 0.0 <= self.exchange_rate <= 1.0:
            raise ValueError(f"{self.agent_id}: exchange_rate must lie in [0, 1]")
        object.__setattr__(self, "nonce_range", (int(lo), int(hi)))

    @property
    def rate(self) -> int:
        return self.gpu_rate if self.gpu_like else 1


@dataclass
class GroundTruth:
    owner: dict[Address, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.owner)

    def __getitem__(self, address):
        return self.owner[address]

    def agents(self) -> dict[str, list[Address]]:
        out: dict[str, list[Address]] = {}
        for a, agent in self.owner.items():
            out.setdefault(agent, []).append(a)
        return out


class _Names:
    """Deterministic address and txid factory."""

    def __init__(self, seed: int, salt: str = ""):
        self.prefix = f"{seed}:{salt}:"
        self.n = 0

    def _digest(self, kind: str) -> bytes:
        self.n += 1
        return hashlib.sha256(f"{self.prefix}{kind}:{self.n}".encode()).digest()

    def address(self) -> Address:
        num = int.from_bytes(self._digest("a")[:24], "big")
        chars = []
        while num:
            num, r = divmod(num, 58)
            chars.append(_B58[r])
        return "1" + "".join(reversed(chars))[:33]

    def txid(self) -> str:
        return self._digest("t").hex()


def _draw_nonce(rng: np.random.Generator, spec: MinerSpec) -> int:
    if spec.nonce_profile == "uniform":
        return int(rng.integers(0, 2**32))
    low = int(rng.integers(0, 1 << 24))
    if spec.nonce_profile == "counter":
        return int(rng.integers(0, 16)) << 24 | low
    lo, hi = spec.nonce_range
    return int(rng.integers(lo, hi + 1)) << 24 | low


def _session_length(rng: np.random.Generator, mean: float) -> float:
    if mean <= 0:
        return math.inf
    return float(rng.geometric(min(1.0, 1.0 / mean)))


class _MinerState:
    def __init__(self, spec: MinerSpec):
        self.spec = spec
        self.session_start = spec.start_block
        self.session_end = spec.start_block - 1  # forces a draw on first use
        self.pending: list[Address] = []
        self.wallet: Address | None = None
        self.batch_dest: Address | None = None


def generate(miners, n_blocks: int, seed: int = 0, settle: bool = False) -> tuple[Chain, GroundTruth]:
    """Generate ``n_blocks`` blocks mined by ``miners``; deterministic in ``seed``.

    With ``settle`` every consolidating miner moves its outstanding rewards
    in the final block, so only that block's reward stays unspent.
    """
    miners = list(miners)
    if not miners:
        raise ValueError("at least one miner is required")
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    rng = np.random.default_rng(seed)
    names = _Names(seed)
    truth = GroundTruth()
    states = [_MinerState(m) for m in miners]
    weights = np.array([m.hashrate_weight for m in miners], dtype=float)
    starts = np.array([m.start_block for m in miners])
    ends = np.array([m.end_block if m.end_block is not None else n_blocks for m in miners])
    next_end = np.array([s.session_end for s in states], dtype=float)
    shared = {"exchange": None}

    blocks: list[Block] = []
    queued: list[Transaction] = []
    ts = float(GENESIS_TS)
    for h in range(1, n_blocks + 1):
        if h > 1:
            ts += max(1.0, float(rng.exponential(BLOCK_INTERVAL)))

        # sessions end on network time, consolidations land in this block
        for j in np.nonzero(next_end < h)[0]:
            st = states[j]
            spec = st.spec
            if st.session_end >= st.session_start and spec.consolidation == "per-session":
                if len(st.pending) >= 3 or (h > ends[j] and st.pending):
                    _emit_consolidation(st, rng, names, truth, queued, shared)
            if h > ends[j]:
                next_end[j] = math.inf
                continue
            st.session_start = h
            st.session_end = h + _session_length(rng, spec.session_mean) - 1
            # retirement also has to wake the miner for a final flush
            next_end[j] = min(st.session_end, ends[j])

        if settle and h == n_blocks:
            for st in states:
                if not st.pending:
                    continue
                if st.spec.consolidation == "per-session":
                    _emit_consolidation(st, rng, names, truth, queued, shared)
                elif st.spec.consolidation == "round-batch":
                    _emit_batch(st, names, truth, queued)

        active = (starts <= h) & (ends >= h)
        if not active.any():
            raise ValueError(f"no miner is active at height {h}")
        w = np.where(active, weights, 0.0)
        i = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
        i = min(i, len(miners) - 1)
        st = states[i]
        spec = st.spec

        extranonce = (h - st.session_start) * spec.rate if spec.extranonce_visible else None
        addr = names.address()
        truth.owner[addr] = spec.agent_id
        coinbase = Transaction(names.txid(), (), ((addr, REWARD),), True)
        blocks.append(Block(h, int(ts), _draw_nonce(rng, spec), extranonce, (coinbase, *queued)))
        queued = []

        if spec.consolidation != "never":
            st.pending.append(addr)
        if spec.consolidation == "round-batch" and len(st.pending) >= spec.batch_size:
            _emit_batch(st, names, truth, queued)
    return Chain(tuple(blocks)), truth


def _emit_batch(st: _MinerState, names: _Names, truth: GroundTruth, queued):
    if st.batch_dest is None:
        st.batch_dest = names.address()
        truth.owner[st.batch_dest] = st.spec.agent_id
    inputs = tuple((a, REWARD) for a in st.pending)
    queued.append(Transaction(names.txid(), inputs, ((st.batch_dest, REWARD * len(inputs)),)))
    st.pending = []


def _emit_consolidation(st: _MinerState, rng, names: _Names, truth: GroundTruth, queued, shared):
    spec = st.spec
    if spec.exchange_rate > 0 and rng.random() < spec.exchange_rate:
        if shared["exchange"] is None:
            shared["exchange"] = names.address()
            truth.owner[shared["exchange"]] = EXCHANGE_AGENT
        dest = shared["exchange"]
    else:
        if st.wallet is None:
            st.wallet = names.address()
            truth.owner[st.wallet] = spec.agent_id
        dest = st.wallet
    inputs = tuple((a, REWARD) for a in st.pending)
    queued.append(Transaction(names.txid(), inputs, ((dest, REWARD * len(inputs)),)))
    st.pending = []


def inject_change_txs(chain: Chain, truth: GroundTruth, rate: float, seed: int = 0) -> Chain:
    """Spend end-of-chain balances through two-output (payee, fresh change) transactions.

    A balance is eligible when it holds at least 2 satoshi, its owner is known,
    and it last received funds before the final block. Each eligible balance
    is spent with probability ``rate`` at a random later height; the payee is
    an address of a different agent that already exists at that height.
    ``truth`` is extended in place with the change addresses.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    if rate == 0.0 or len(chain) == 0:
        return chain
    rng = np.random.default_rng(seed)
    names = _Names(seed, "change")
    last_height = chain.blocks[-1].height
    last_receipt: dict[Address, int] = {}
    for h, tx in chain.transactions():
        for a, _ in tx.outputs:
            last_receipt[a] = h
    first_seen = chain.address_index
    by_first = sorted(first_seen, key=lambda a: (first_seen[a], a))
    first_heights = np.array([first_seen[a] for a in by_first])

    extra: dict[int, list[Transaction]] = {}
    for addr, bal in balances(chain).items():
        owner = truth.owner.get(addr)
        if bal < 2 or owner is None or last_receipt.get(addr, last_height) >= last_height:
            continue
        if rng.random() >= rate:
            continue
        h = int(rng.integers(last_receipt[addr] + 1, last_height + 1))
        n_old = int(np.searchsorted(first_heights, h, side="left"))
        payee = None
        for _ in range(64):
            cand = by_first[int(rng.integers(0, n_old))] if n_old else None
            if cand is not None and truth.owner.get(cand, owner) != owner:
                payee = cand
                break
        if payee is None:
            continue
        change = names.address()
        truth.owner[change] = owner
        pay = int(rng.integers(1, bal))
        extra.setdefault(h, []).append(
            Transaction(names.txid(), ((addr, bal),), ((payee, pay), (change, bal - pay))))

    blocks = [replace(b, txs=b.txs + tuple(extra[b.height])) if b.height in extra else b
              for b in chain.blocks]
    return Chain(tuple(blocks))


_SPEC_FIELDS = {
    "hashrate_weight": float, "session_mean": float, "nonce_profile": str,
    "consolidation": str, "batch_size": int, "gpu_like": bool, "gpu_rate": int,
    "extranonce_visible": bool, "start_block": int, "end_block": int,
    "exchange_rate": float, "nonce_range": tuple,
}


def load_miner_specs(path) -> list[MinerSpec]:
    """Read miners from an INI file, one ``[miner <agent_id>]`` section each."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    specs = []
    for section in parser.sections():
        kind, _, agent = section.partition(" ")
        if kind != "miner" or not agent.strip():
            raise ValueError(f"unexpected section [{section}]; use [miner <agent_id>]")
        kwargs: dict = {}
        for key, raw in parser.items(section):
            conv = _SPEC_FIELDS.get(key)
            if conv is None:
                raise ValueError(f"[{section}] unknown key {key!r}")
            if conv is bool:
                kwargs[key] = parser.getboolean(section, key)
            elif conv is tuple:
                lo, hi = raw.replace(",", " ").split()
                kwargs[key] = (int(lo), int(hi))
            else:
                kwargs[key] = conv(raw)
        specs.append(MinerSpec(agent.strip(), **kwargs))
    if not specs:
        raise ValueError("no miners defined")
    return specs


def dump_miner_specs(specs, path) -> None:
    parser = configparser.ConfigParser()
    for s in specs:
        sec = {}
        for key in _SPEC_FIELDS:
            val = getattr(s, key)
            if val is None:
                continue
            sec[key] = f"{val[0]},{val[1]}" if key == "nonce_range" else str(val).lower() if isinstance(val, bool) else str(val)
        parser[f"miner {s.agent_id}"] = sec
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def mixed_population(n_miners: int = 40, n_blocks: int = 50_000, seed: int = 0) -> list[MinerSpec]:
    """A varied miner population resembling an early mining community.

    One high-slope miner dominates the first part of the chain and never
    spends. The others join at staggered heights and mix nonce profiles,
    session lengths and consolidation policies; a few small hobbyists never
    spend and some consolidations go to a shared exchange address.
    """
    if n_miners < 2:
        raise ValueError("n_miners must be >= 2")
    rng = np.random.default_rng(seed)
    specs = [MinerSpec("m00", hashrate_weight=6.0, session_mean=0, nonce_profile="counter",
                       consolidation="never", gpu_like=True, gpu_rate=4,
                       end_block=max(1, int(0.4 * n_blocks)))]
    pool = np.arange(2, max(3, int(0.6 * n_blocks)))
    # shared start heights only when there are fewer candidates than miners
    starts = rng.choice(pool, size=n_miners - 1, replace=pool.size < n_miners - 1)
    for j in range(1, n_miners):
        r = rng.random()
        profile = "uniform" if r < 0.5 else "restricted-range" if r < 0.8 else "counter"
        lo = int(rng.integers(0, 224))
        if j % 10 == 0:
            policy = "round-batch"
        elif j % 13 == 0:
            policy = "never"
        else:
            policy = "per-session"
        start = int(starts[j - 1])
        span = int(rng.integers(int(0.3 * n_blocks), n_blocks + 1))
        weight = float(rng.pareto(1.5) + 0.2)
        specs.append(MinerSpec(
            f"m{j:02d}",
            hashrate_weight=min(weight, 0.4) if policy == "never" else weight,
            session_mean=float(rng.choice([1500.0, 3000.0, 6000.0])),
            nonce_profile=profile,
            nonce_range=(lo, lo + 31),
            consolidation=policy,
            batch_size=20 if j % 20 == 10 else 40,
            extranonce_visible=policy != "round-batch",
            start_block=start,
            end_block=min(n_blocks, start + span),
            exchange_rate=0.1 if policy == "per-session" and weight < 0.8 else 0.0,
        ))
    covered = np.zeros(n_blocks + 2, dtype=bool)
    for s in specs:
        covered[s.start_block:(s.end_block or n_blocks) + 1] = True
    gaps = np.flatnonzero(~covered[1:n_blocks + 1]) + 1
    if gaps.size:
        # short chains can fall between the anchor's exit and the next start
        j = max(range(1, n_miners), key=lambda i: (specs[i].end_block or n_blocks) - specs[i].start_block)
        specs[j] = replace(specs[j], start_block=min(specs[j].start_block, int(gaps[0])),
                           end_block=max(specs[j].end_block or n_blocks, int(gaps[-1])))
    return specs
