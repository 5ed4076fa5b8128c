from collections import Counter
from itertools import combinations
from math import comb

import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import REWARD, block, miner_chain, pay
from chainagents.linker import (
    CONSOLIDATION, SAME_INPUT, AddressLinker, LinkEdge, Trajectory, UnionFind, assemble_agents,
    classify_nonces, detect_patoshi, detect_trajectories, link_change, link_consolidation,
    link_same_input, nonce_profile_compatible, validate,
)
from chainagents.linker.io import catalog_from_labels, read_catalog, write_catalog
from chainagents.model import Chain
from chainagents.synth import MinerSpec, generate


def pairs(edges):
    return {tuple(sorted((e.a, e.b))) for e in edges}


# -- heuristics ---------------------------------------------------------------

def test_same_input_pairs():
    tx = pay("t", [("A", 1), ("B", 1), ("C", 1)], [("D", 3)])
    chain = Chain((block(1, "A"), block(2, "B", [tx])))
    assert pairs(link_same_input(chain)) == {("A", "B"), ("A", "C"), ("B", "C")}
    assert pairs(link_same_input(chain, complete=False)) == {("A", "B"), ("A", "C")}
    assert all(e.kind == SAME_INPUT and e.provenance == "t" for e in link_same_input(chain))


def test_same_input_needs_two_inputs():
    tx = pay("t", [("A", 2)], [("B", 1)])
    assert link_same_input(Chain((block(1, "A", [tx]),))) == []


def test_change_fresh_output():
    # D is already known, H is new: H is change owned by the payer G
    chain = Chain((block(1, "G"), block(2, "D", [pay("t", [("G", REWARD)], [("D", 5), ("H", 6)])])))
    assert pairs(link_change(chain)) == {("G", "H")}


def test_change_needs_one_fresh_of_two_outputs():
    both_old = pay("t", [("G", REWARD)], [("D", 5), ("E", 6)])
    three = pay("u", [("G", REWARD)], [("X", 1), ("Y", 1), ("Z", 1)])
    chain = Chain((block(1, "G"), block(2, "D"), block(3, "E", [both_old]), block(4, "F", [three])))
    assert link_change(chain) == []


def _consolidation_chain(on_traj):
    # blocks 1..6 pay c1..c6; the first ``on_traj`` lie on one trajectory
    blocks = [block(h, f"c{h}", extranonce=h) for h in range(1, 7)]
    sweep = pay("s", [(f"c{h}", REWARD) for h in range(1, 6)], [("W", 5 * REWARD)])
    blocks[-1] = block(6, "c6", [sweep])
    traj = Trajectory(0, tuple(range(1, on_traj + 1)), tuple(range(1, on_traj + 1)), 1.0, 0.0)
    return Chain(tuple(blocks)), [traj]


def test_consolidation_links_every_input():
    chain, trajs = _consolidation_chain(4)
    edges = link_consolidation(chain, trajs)
    assert pairs(edges) == {("W", f"c{h}") for h in range(1, 6)}
    assert {e.kind for e in edges} == {CONSOLIDATION}


def test_consolidation_threshold():
    chain, trajs = _consolidation_chain(2)
    assert link_consolidation(chain, trajs) == []


def test_consolidation_single_output_only():
    blocks = [block(h, f"c{h}", extranonce=h) for h in range(1, 5)]
    split = pay("s", [(f"c{h}", REWARD) for h in range(1, 4)], [("W", REWARD), ("V", REWARD)])
    chain = Chain((*blocks[:3], block(4, "c4", [split])))
    traj = Trajectory(0, (1, 2, 3), (1, 2, 3), 1.0, 0.0)
    assert link_consolidation(chain, [traj]) == []


def test_edge_endpoints_sorted():
    e = LinkEdge.make("z", "a", SAME_INPUT, "t")
    assert (e.a, e.b) == ("a", "z")
    with pytest.raises(ValueError):
        LinkEdge.make("a", "a", SAME_INPUT, "t")


# -- trajectories ---------------------------------------------------------------

def test_single_session_single_trajectory():
    chain, _ = generate([MinerSpec("solo", session_mean=0)], 200, seed=0)
    trajs = detect_trajectories(chain)
    assert len(trajs) == 1
    assert trajs[0].heights == tuple(chain.heights)


def test_one_trajectory_per_session():
    chain, _ = generate([MinerSpec("s", session_mean=100)], 400, seed=3)
    restarts = [b.height for b in chain.blocks if b.extranonce == 0]
    trajs = detect_trajectories(chain)
    assert [t.start for t in trajs] == restarts
    assert all(t.extranonces[0] == 0 for t in trajs)
    assert all(a.end < b.start for a, b in zip(trajs, trajs[1:]))


def test_crossing_block_is_unassigned():
    # line A: e = h - 1 on odd heights; line B: e = 2(h - 12) on even heights >= 12;
    # both predict e = 22 at height 23
    miners, ex = [], []
    for h in range(1, 24):
        if h % 2 or h == 23:
            miners.append("A")
            ex.append(h - 1)
        else:
            miners.append("B")
            ex.append(2 * (h - 12) if h >= 12 else None)
    trajs = detect_trajectories(miner_chain(miners, ex), tolerance=0.5)
    assigned = {h for t in trajs for h in t.heights}
    assert 23 not in assigned
    assert sorted(t.slope for t in trajs) == [1.0, 2.0]


def test_patoshi_detection():
    specs = [MinerSpec("fast", hashrate_weight=2.0, gpu_like=True, gpu_rate=3, session_mean=0),
             MinerSpec("slow", session_mean=0, start_block=50)]
    # staggered start: two machines both at extranonce 0 on block 1 are indistinguishable
    chain, truth = generate(specs, 600, seed=4)
    heights = detect_patoshi(detect_trajectories(chain))
    assert heights == {b.height for b in chain.blocks if truth[b.miner_address] == "fast"}
    chain, _ = generate([MinerSpec("slow", session_mean=0)], 100, seed=4)
    assert detect_patoshi(detect_trajectories(chain)) == set()


def test_patoshi_threshold_inclusive():
    t = Trajectory(0, tuple(range(20)), tuple(range(0, 30, 1)), 1.5, 0.0)
    assert detect_patoshi([t], slope_min=1.5, len_min=20) == set(range(20))
    assert detect_patoshi([t], slope_min=1.5000001, len_min=20) == set()


# -- nonces ---------------------------------------------------------------

def test_nonce_profiles():
    import numpy as np

    rng = np.random.default_rng(0)
    uni_a = rng.integers(0, 2**32, 300)
    uni_b = rng.integers(0, 2**32, 300)
    counter = rng.integers(0, 16, 300) << 24 | rng.integers(0, 1 << 24, 300)
    assert nonce_profile_compatible(uni_a, uni_b)
    assert not nonce_profile_compatible(counter, uni_a)
    assert classify_nonces(counter)[0] == "counter"
    lo = rng.integers(100, 120, 300) << 24
    far = rng.integers(200, 220, 300) << 24
    assert not nonce_profile_compatible(lo, far)


def test_same_miner_halves_compatible():
    for profile in ("uniform", "counter", "restricted-range"):
        chain, _ = generate([MinerSpec("m", nonce_profile=profile, nonce_range=(40, 70))], 400, seed=8)
        nonces = [b.nonce for b in chain.blocks]
        assert nonce_profile_compatible(nonces[:200], nonces[200:])


# -- assembly ---------------------------------------------------------------

def test_no_edges_identity_partition():
    chain = miner_chain("ABCAB")
    cat = assemble_agents(chain, [], [])
    assert len(set(cat.labels.values())) == len(chain.addresses) == 5


def test_default_miners_recover_truth():
    chain, truth = generate([MinerSpec(f"m{i}") for i in range(4)], 3000, seed=1, settle=True)
    labels = AddressLinker().fit(chain).labels_
    # the final reward is never spent, so nothing ties it to its owner
    mined = [a for a in chain.coinbase_heights if a != chain.blocks[-1].miner_address]
    rep = validate({a: labels[a] for a in mined}, {a: truth[a] for a in mined})
    assert (rep.fn, rep.fp) == (0, 0)


def _two_machines(interleave):
    # T1 is shared by X (heights 1-3) and Y (4-6); X then runs T2, Y runs T3
    n = 31
    chain = miner_chain(["m"] * n, list(range(n)))
    addr = {b.height: b.miner_address for b in chain.blocks}
    t1 = Trajectory(0, (1, 2, 3, 4, 5, 6), (1, 2, 3, 4, 5, 6), 1.0, 0.0)
    if interleave:
        h2, h3 = tuple(range(8, 31, 2)), tuple(range(9, 32, 2))
    else:
        h2, h3 = tuple(range(7, 19)), tuple(range(19, 32))
    t2 = Trajectory(1, h2, h2, 1.0, 0.0)
    t3 = Trajectory(2, h3, h3, 1.0, 0.0)
    x = [addr[h] for h in (1, 2, 3, *h2)]
    y = [addr[h] for h in (4, 5, 6, *h3)]
    edges = [LinkEdge.make(x[0], a, SAME_INPUT, "x") for a in x[1:]]
    edges += [LinkEdge.make(y[0], a, SAME_INPUT, "y") for a in y[1:]]
    cat = assemble_agents(chain, edges, [t1, t2, t3])
    return cat.labels[x[0]] == cat.labels[y[0]]


def test_overlap_veto():
    assert _two_machines(interleave=False)
    assert not _two_machines(interleave=True)


def test_catalog_partition_and_baseline(small_synth):
    chain, _ = small_synth
    full = AddressLinker().fit(chain)
    base = AddressLinker(pipeline="same-input").fit(chain)
    assert set(full.labels_) == set(chain.addresses) == set(base.labels_)
    assert base.n_agents_ >= full.n_agents_
    # every baseline agent sits inside one full-pipeline agent
    for members in base.catalog_.members().values():
        assert len({full.labels_[a] for a in members}) == 1
    ranks = [s.rank for s in full.catalog_.summaries]
    assert ranks == list(range(1, len(ranks) + 1))
    mined = [s.satoshi for s in full.catalog_.summaries]
    assert mined == sorted(mined, reverse=True)


def test_estimator_params():
    lk = AddressLinker(pipeline="bogus")
    with pytest.raises(ValueError, match="pipeline"):
        lk.fit(miner_chain("AB"))
    with pytest.raises(TypeError):
        AddressLinker().fit([1, 2])
    assert AddressLinker(tolerance=3).get_params()["tolerance"] == 3


def test_catalog_io(tmp_path, small_synth):
    chain, _ = small_synth
    cat = AddressLinker().fit(chain).catalog_
    p = tmp_path / "cat.csv"
    write_catalog(cat, p)
    labels = read_catalog(p)
    assert labels == cat.labels
    again = catalog_from_labels(chain, labels)
    assert again.summaries == cat.summaries


# -- validation ---------------------------------------------------------------

def test_validation_counts():
    labels = {"a": 1, "b": 1, "c": 2, "d": 2}
    tags = {"a": "x", "b": "x", "c": "x", "d": "y"}
    rep = validate(labels, tags)
    assert (rep.tp, rep.fn, rep.fp, rep.tn) == (1, 2, 1, 2)


def test_validation_anchor_rounding():
    from chainagents.linker.validation import ValidationReport

    rep = ValidationReport(tp=2978, tn=13221, fp=87, fn=4)
    assert rep.percent() == (99.87, 99.35)
    assert round(rep.sensitivity, 5) == 0.99866
    assert round(rep.specificity, 5) == 0.99346


def test_validation_needs_two_tags():
    with pytest.raises(ValueError):
        validate({"a": 1}, {"a": "x"})


@given(st.dictionaries(st.integers(0, 30), st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=2))
def test_validation_matches_pair_enumeration(rows):
    labels = {a: g for a, (g, _) in rows.items()}
    tags = {a: t for a, (_, t) in rows.items()}
    c = Counter()
    for a, b in combinations(rows, 2):
        same_agent, same_tag = labels[a] == labels[b], tags[a] == tags[b]
        c[("tp" if same_tag else "fp") if same_agent else ("fn" if same_tag else "tn")] += 1
    rep = validate(labels, tags)
    assert (rep.tp, rep.tn, rep.fp, rep.fn) == (c["tp"], c["tn"], c["fp"], c["fn"])
    assert rep.pairs == comb(len(rows), 2)


# -- union-find ---------------------------------------------------------------

def _components(n, edges):
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    comp, seen = {}, set()
    for s in range(n):
        if s in seen:
            continue
        stack, group = [s], []
        seen.add(s)
        while stack:
            v = stack.pop()
            group.append(v)
            for w in adj[v] - seen:
                seen.add(w)
                stack.append(w)
        for v in group:
            comp[v] = min(group)
    return comp


@given(st.integers(1, 40).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))))))
def test_union_find_matches_search(case):
    n, edges = case
    uf = UnionFind(n)
    for a, b in edges:
        uf.union(a, b)
    comp = _components(n, edges)
    assert uf.roots() == [comp[i] for i in range(n)]
    assert sorted(sum(uf.groups().values(), [])) == list(range(n))


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=20),
       st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=20))
def test_more_same_input_edges_never_split(base, extra):
    chain = miner_chain([f"m{i}" for i in range(10)])
    addrs = chain.addresses

    def edges(ps):
        return [LinkEdge.make(addrs[a], addrs[b], SAME_INPUT, "t") for a, b in ps if a != b]

    small = assemble_agents(chain, edges(base), [], steps="d").labels
    big = assemble_agents(chain, edges(base + extra), [], steps="d").labels
    for a, b in combinations(addrs, 2):
        if small[a] == small[b]:
            assert big[a] == big[b]
