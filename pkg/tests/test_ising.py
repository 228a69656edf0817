import numpy as np
import pytest

from torwalk.ising import (
    HighTempConfig,
    WormChain,
    gibbs_two_point,
    ht_enumerate,
    ising_trail_length,
    run_worm,
)
from torwalk.lattice import TorusGeometry

# fixture: 22 occupied edge slots on the 5x5 torus with odd-degree vertices
# (0,0) and (1,2); the greedy lexicographic trail was traced by hand and
# visits every edge, ending at (1,2) after exactly 22 steps
TRAIL22_EDGES = [
    ([-2, -1], 0), ([-2, 0], 0), ([-2, 0], 1), ([-2, 2], 0),
    ([-1, -1], 0), ([-1, 0], 1), ([-1, 1], 0), ([-1, 2], 0),
    ([0, -1], 0), ([0, 0], 1), ([0, 1], 0), ([0, 1], 1),
    ([1, -2], 0), ([1, -1], 1), ([1, 0], 1), ([1, 2], 1),
    ([2, -1], 0), ([2, -1], 1), ([2, 0], 1), ([2, 1], 0),
    ([2, 2], 0), ([2, 2], 1),
]

TRAIL22_PATH = [
    [0, 0], [0, 1], [-1, 1], [-1, 0], [-2, 0], [-2, 1], [2, 1], [2, 0],
    [2, -1], [-2, -1], [-1, -1], [0, -1], [1, -1], [1, 0], [1, 1], [0, 1],
    [0, 2], [-1, 2], [-2, 2], [2, 2], [2, -2], [1, -2], [1, 2],
]


def python_trail_oracle(cfg):
    """Independent greedy-trail tracer: adjacency dict keyed by coordinate
    tuples, neighbor order by lexicographic coordinate comparison."""
    g = cfg.geom
    adj = {}
    for slot in np.nonzero(cfg.edge_occ)[0]:
        site, axis = divmod(int(slot), g.d)
        a = tuple(g.index_site(site))
        b = tuple(g.index_site(int(g.neighbor_table()[site, 2 * axis])))
        adj.setdefault(a, []).append((b, int(slot)))
        adj.setdefault(b, []).append((a, int(slot)))
    odd = sorted(v for v, es in adj.items() if len(es) % 2 == 1)
    if not odd:
        return 0
    assert len(odd) == 2
    cur, target = odd[0], odd[1]
    used = set()
    length = 0
    while True:
        nxt = None
        for b, slot in sorted(adj.get(cur, [])):
            if slot not in used:
                used.add(slot)
                nxt = b
                break
        if nxt is None:
            assert cur == target
            return length
        cur = nxt
        length += 1


def test_trail_fixture_length_22():
    g = TorusGeometry(2, 5)
    cfg = HighTempConfig.from_edges(g, 0.3, TRAIL22_EDGES)
    assert cfg.parity_ok()
    assert sorted(
        [tuple(g.index_site(int(s)).tolist()) for s in cfg.defects]
    ) == [(0, 0), (1, 2)]
    length, path = ising_trail_length(cfg, return_path=True)
    assert length == 22
    assert [g.index_site(p).tolist() for p in path] == TRAIL22_PATH
    assert ising_trail_length(cfg) == 22
    assert python_trail_oracle(cfg) == 22


def test_trail_stranded_cycle_not_counted():
    # single defect edge plus a detached four-cycle: the greedy trail stops
    # at the second defect leaving the cycle untraversed
    g = TorusGeometry(2, 5)
    edges = [
        ([0, 0], 0),
        ([-2, -2], 0), ([-1, -2], 1), ([-2, -1], 0), ([-2, -2], 1),
    ]
    cfg = HighTempConfig.from_edges(g, 0.3, edges)
    assert cfg.parity_ok()
    assert ising_trail_length(cfg) == 1
    assert python_trail_oracle(cfg) == 1


def test_trail_trivials():
    g = TorusGeometry(2, 5)
    assert ising_trail_length(HighTempConfig.empty(g, 0.3)) == 0
    cfg = HighTempConfig.from_edges(g, 0.3, [([0, 0], 0)])
    assert ising_trail_length(cfg) == 1


def test_trail_deterministic():
    g = TorusGeometry(2, 4)
    chain = WormChain(g, 0.4, seed=3)
    chain.step(5000)
    if not chain.cfg.in_even_sector:
        a = ising_trail_length(chain.cfg)
        assert all(ising_trail_length(chain.cfg) == a for _ in range(5))


def test_trail_matches_python_oracle_on_sampled_configs():
    for (d, L, z, seed) in [(2, 4, 0.4, 1), (2, 3, 0.55, 2), (3, 3, 0.25, 3)]:
        g = TorusGeometry(d, L)
        chain = WormChain(g, z, seed=seed)
        checked = 0
        for _ in range(60):
            chain.step(137)
            if chain.cfg.in_even_sector:
                continue
            assert ising_trail_length(chain.cfg) == python_trail_oracle(chain.cfg)
            checked += 1
        assert checked > 5


def test_parity_invariant_preserved():
    chain = WormChain(TorusGeometry(2, 4), 0.35, seed=11)
    for _ in range(100):
        chain.step(31)
        assert chain.cfg.parity_ok()


def test_ht_enum_matches_spin_sums():
    for (d, L, z) in [(2, 3, 0.3), (2, 3, 0.55), (1, 6, 0.4)]:
        g = TorusGeometry(d, L)
        en = ht_enumerate(g, z, want_trail=False)
        gb = gibbs_two_point(g, z)
        assert np.max(np.abs(en.g - gb)) < 1e-12


def test_worm_matches_enumeration_g_chi_trail():
    g = TorusGeometry(2, 3)
    z = 0.3
    en = ht_enumerate(g, z)
    obs = run_worm(g, z, steps=250_000, replicas=8, seed=5)
    zsc = np.abs(obs.g_field.data - en.g) / np.maximum(obs.g_field.stderr, 1e-9)
    assert np.max(zsc) < 4.5
    assert abs(obs.chi - en.chi) < 4 * obs.chi_err
    assert abs(obs.mean_len - en.mean_trail) < 4 * max(obs.mean_len_err, 1e-4)
    cond = obs.meta["mean_len_conditional"]
    assert abs(cond - en.mean_trail_conditional) < 0.05 * en.mean_trail_conditional
    assert obs.g_field.value([0, 0]) == 1.0


def test_small_z_concentrates_on_empty():
    g = TorusGeometry(2, 4)
    z = 0.01
    obs = run_worm(g, z, steps=100_000, replicas=2, seed=9)
    # nearly all steps sit in the all-even sector at the origin bin, and the
    # susceptibility follows its leading expansion 1 + 2d z
    assert obs.g_field.data[1, 1] == 1.0
    assert obs.chi == pytest.approx(1.0 + 4 * z, abs=0.01)
    assert obs.meta["c2_fraction"] < 0.06
    assert obs.mean_len < 0.1


def test_worm_reproducible():
    g = TorusGeometry(2, 4)
    a = run_worm(g, 0.35, steps=40_000, replicas=2, seed=31)
    b = run_worm(g, 0.35, steps=40_000, replicas=2, seed=31)
    np.testing.assert_array_equal(a.g_field.data, b.g_field.data)
    assert a.mean_len == b.mean_len


def test_from_edges_validation():
    g = TorusGeometry(2, 4)
    with pytest.raises(ValueError, match="odd-degree"):
        HighTempConfig.from_edges(g, 0.3, [([0, 0], 0), ([1, 1], 0)])
    with pytest.raises(ValueError, match="weight"):
        HighTempConfig.empty(g, 1.5)


def test_gibbs_enumeration_guard():
    with pytest.raises(ValueError, match="20 sites"):
        gibbs_two_point(TorusGeometry(2, 5), 0.3)
    with pytest.raises(ValueError, match="62 edge"):
        ht_enumerate(TorusGeometry(2, 6), 0.3)
