"""Small hand-built chains shared by the tests."""
from __future__ import annotations

from hypothesis import strategies as st

from chainagents.model import Block, Chain, Transaction

REWARD = 50 * 100_000_000


def coinbase(addr, value=REWARD, txid=None):
    return Transaction(txid or f"cb-{addr}", (), ((addr, value),), True)


def pay(txid, inputs, outputs):
    return Transaction(txid, tuple(inputs), tuple(outputs))


def block(h, miner, txs=(), ts=None, nonce=0, extranonce=None):
    cb = coinbase(miner, txid=f"cb{h}")
    return Block(h, 1_231_006_505 + 600 * h if ts is None else ts, nonce, extranonce, (cb, *txs))


def miner_chain(miners, extranonces=None) -> Chain:
    """One block per entry of ``miners``; each block pays a fresh address
    ``<miner>.<height>`` so addresses can be labeled back to the miner."""
    blocks = []
    for h, m in enumerate(miners, start=1):
        e = None if extranonces is None else extranonces[h - 1]
        blocks.append(block(h, f"{m}.{h}", extranonce=e))
    return Chain(tuple(blocks))


def miner_labels(chain: Chain) -> dict:
    return {b.miner_address: b.miner_address.split(".")[0] for b in chain.blocks}


ADDRS = st.sampled_from([f"1addr{i}" for i in range(8)])


@st.composite
def valid_chains(draw, max_blocks=6):
    """Chains that satisfy every invariant of ``validate_chain``."""
    n = draw(st.integers(0, max_blocks))
    blocks = []
    ts = 1_231_006_505
    for h in range(1, n + 1):
        ts += draw(st.integers(0, 2000))
        txs = [Transaction(f"c{h}", (), ((draw(ADDRS), draw(st.integers(1, 10**10))),), True)]
        for j in range(draw(st.integers(0, 2))):
            ins = draw(st.lists(st.tuples(ADDRS, st.integers(1, 10**9)), min_size=1, max_size=3))
            budget = sum(v for _, v in ins)
            n_out = draw(st.integers(1, 3))
            outs = []
            for _ in range(n_out):
                if budget < 1:
                    break
                v = draw(st.integers(1, budget))
                outs.append((draw(ADDRS), v))
                budget -= v
            txs.append(Transaction(f"t{h}.{j}", tuple(ins), tuple(outs)))
        extranonce = draw(st.one_of(st.none(), st.integers(0, 10**6)))
        blocks.append(Block(h, ts, draw(st.integers(0, 2**32 - 1)), extranonce, tuple(txs)))
    return Chain(tuple(blocks))
