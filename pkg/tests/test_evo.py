import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gftlqr import evo
from gftlqr.evo import (
    BASELINE_GENOME_LENGTH,
    GFT_GENOME_LENGTH,
    GaConfig,
    decode_baseline,
    decode_gft,
    encode_baseline,
    encode_static_gft,
    qgain_bounds,
    run_ga,
)
from gftlqr.gft import bids, q_gains
from gftlqr.riccati import LqrWeights

genes = st.integers(0, 255)


def test_genome_layout():
    assert GFT_GENOME_LENGTH == 2 * 9 + 4 * 49 + 8 == 222


def test_decode_extremes():
    lo = decode_gft(np.zeros(GFT_GENOME_LENGTH, dtype=int))
    hi = decode_gft(np.full(GFT_GENOME_LENGTH, 255))
    for f in lo.bid_fis:
        assert np.all(f.consequents == 0.0) and (f.out_lo, f.out_hi) == (-1.0, 1.0)
    for f in lo.qgain_fis:
        assert f.out_lo == pytest.approx(1e-2) and f.out_hi == pytest.approx(1e-1)
    for f in hi.qgain_fis:
        assert np.all(f.consequents == 1.0)
        assert f.out_lo == pytest.approx(1e3) and f.out_hi == pytest.approx(1e8)
    with pytest.raises(ValueError):
        decode_gft(np.zeros(10, dtype=int))


@given(genes, genes)
def test_bounds_ordered(a, b):
    lo, hi = qgain_bounds(a, b)
    assert 0 < lo < hi
    assert hi / lo == pytest.approx(10.0 ** (1 + 4 * b / 255))


def test_baseline_decoding_endpoints():
    assert decode_baseline([0, 0, 0, 0]).q == pytest.approx((1e-2,) * 4)
    assert decode_baseline([255] * 4).q == pytest.approx((1e6,) * 4)
    # midpoint gene: 10 ** (-2 + 8 * 128 / 255)
    assert decode_baseline([128] * 4).q[0] == pytest.approx(10.0 ** (-2 + 8 * 128 / 255))
    assert np.log10(decode_baseline([128] * 4).q[0]) == pytest.approx(2.008, abs=0.01)
    with pytest.raises(ValueError):
        decode_baseline([1, 2, 3])


@given(st.lists(genes, min_size=4, max_size=4))
def test_baseline_roundtrip(g):
    assert np.array_equal(encode_baseline(decode_baseline(g)), g)


def test_static_gft_encoding_is_constant_q():
    q = (316.0, 12.0, 40.0, 0.5)
    ctrl = decode_gft(encode_static_gft(q))
    for b in [(-1.0, -1.0), (0.3, -0.7), (1.0, 0.2)]:
        got = q_gains(ctrl, *b)
        assert np.max(np.abs(np.log10(got) - np.log10(q))) < 0.02
    # the sliding-surface bid layer increases with error and error rate
    t = ctrl.bid_fis[0].rule_table()
    assert t[0, 0] < t[1, 1] < t[2, 2]
    assert bids(ctrl, np.zeros(4), np.zeros(4)) == pytest.approx((0.0, 0.0), abs=0.01)


@pytest.mark.parametrize("kw", [
    dict(population_size=10, n_islands=4),
    dict(population_size=4, n_islands=4),
    dict(crossover_rate=1.5),
    dict(elitism_count=28),
    dict(tournament_k=0),
    dict(seed=-1),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GaConfig(**kw)


def _onemax(g):
    return float(np.sum(g))


def test_onemax_small_genome():
    reached = []
    for seed in range(4):
        cfg = GaConfig(population_size=40, n_islands=4, n_generations=200, seed=seed)
        best, hist = run_ga(cfg, _onemax, genome_length=4)
        reached.append(hist[-1].best_cost == 0.0 and _onemax(best) == 0.0)
    assert np.mean(reached) >= 0.75


def test_hamming_improves_on_full_genome():
    target = np.random.default_rng(11).integers(0, 256, GFT_GENOME_LENGTH)

    def hamming(pop):
        return np.sum(pop != target, axis=1).astype(float)

    cfg = GaConfig(population_size=112, n_islands=4, n_generations=200, seed=2)
    best, hist = run_ga(cfg, hamming, genome_length=GFT_GENOME_LENGTH, vectorized=True)
    assert hist[-1].best_cost < hist[0].best_cost
    assert hamming(best[None])[0] == hist[-1].best_cost


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4]))
def test_history_monotone_and_reproducible(seed, islands):
    cfg = GaConfig(population_size=8 * islands, n_islands=islands, n_generations=15,
                   migration_interval=5, seed=seed)
    w = np.random.default_rng(seed).random(6)

    def cost(g):
        return float(np.abs(g - 100) @ w)

    b1, h1 = run_ga(cfg, cost, genome_length=6)
    b2, h2 = run_ga(cfg, cost, genome_length=6)
    assert h1 == h2 and np.array_equal(b1, b2)
    best = [r.best_cost for r in h1]
    assert all(a >= b for a, b in zip(best, best[1:]))
    assert [r.generation for r in h1] == list(range(16))
    assert cost(b1) == best[-1]


def test_independent_of_worker_count(monkeypatch):
    cfg = GaConfig(population_size=16, n_islands=2, n_generations=10, seed=4)

    def cost(g):
        return float(np.sum((g - 17) ** 2))

    monkeypatch.setenv("GFTLQR_THREADS", "1")
    r1 = run_ga(cfg, cost, genome_length=8)
    monkeypatch.setenv("GFTLQR_THREADS", "4")
    r4 = run_ga(cfg, cost, genome_length=8)
    assert np.array_equal(r1[0], r4[0]) and r1[1] == r4[1]


def test_initial_rows_are_evaluated():
    cfg = GaConfig(population_size=8, n_islands=2, n_generations=0, seed=0)
    best, hist = run_ga(cfg, _onemax, genome_length=5, initial=np.zeros((1, 5), dtype=int))
    assert hist[0].best_cost == 0.0 and not best.any()
    with pytest.raises(ValueError):
        run_ga(cfg, _onemax, genome_length=5, initial=np.zeros((1, 4), dtype=int))


def test_invalid_cost_rejected():
    cfg = GaConfig(population_size=8, n_islands=2, n_generations=1)
    with pytest.raises(ValueError):
        run_ga(cfg, lambda g: float("nan"), genome_length=3)
    with pytest.raises(ValueError):
        run_ga(cfg, lambda g: -1.0, genome_length=3)


def test_sink_receives_every_generation():
    seen = []
    cfg = GaConfig(population_size=8, n_islands=2, n_generations=5)
    _, hist = run_ga(cfg, _onemax, lambda *r: seen.append(r), genome_length=3)
    assert seen == [tuple(r) for r in hist]


def test_baseline_genome_length():
    assert BASELINE_GENOME_LENGTH == 4
    assert encode_baseline(LqrWeights((100.0, 100.0, 10.0, 10.0))).shape == (4,)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("GFTLQR_THREADS", "3")
    assert evo.worker_count() == 3
    monkeypatch.setenv("GFTLQR_THREADS", "junk")
    assert evo.worker_count() >= 1


@given(st.integers(0, 7), genes, genes)
def test_decode_injective_on_bound_genes(slot, a, b):
    if a == b:
        return
    g1 = np.full(GFT_GENOME_LENGTH, 77)
    g2 = g1.copy()
    g1[214 + slot], g2[214 + slot] = a, b
    f1, f2 = decode_gft(g1).qgain_fis[slot // 2], decode_gft(g2).qgain_fis[slot // 2]
    assert (f1.out_lo, f1.out_hi) != (f2.out_lo, f2.out_hi)
    others = [i for i in range(4) if i != slot // 2]
    assert all(decode_gft(g1).qgain_fis[i] == decode_gft(g2).qgain_fis[i] for i in others)
