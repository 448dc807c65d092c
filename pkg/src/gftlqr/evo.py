"""Island-model genetic algorithm over 8-bit integer chromosomes.

Each island runs tournament selection, one-point crossover, per-gene reset
mutation and elitism.  Every ``migration_interval`` generations the best
``migration_count`` individuals of island ``i`` replace the worst of island
``i + 1`` (ring).  All randomness comes from streams keyed on
``(seed, island, generation)``, and costs are gathered by index, so the
result does not depend on how many workers evaluate the population.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from gftlqr.gft import BID_MFS, QGAIN_MFS, FisSpec, GftController, MembershipPartition
from gftlqr.riccati import R_DEFAULT, LqrWeights

GENE_MAX = 255

N_BID_GENES = 2 * BID_MFS**2
N_QCONS_GENES = 4 * QGAIN_MFS**2
N_BOUND_GENES = 4 * 2
GFT_GENOME_LENGTH = N_BID_GENES + N_QCONS_GENES + N_BOUND_GENES  # 222
BASELINE_GENOME_LENGTH = 4

# Q-gain output bounds: lower bound log-uniform, upper bound as a decade span above it
QLO_LOG10 = (-2.0, 3.0)
QSPAN_LOG10 = (1.0, 5.0)
# baseline static weights, log-uniform
BASELINE_Q_LOG10 = (-2.0, 6.0)


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 112
    n_islands: int = 4
    n_generations: int = 1500
    migration_interval: int = 25
    migration_count: int = 2
    tournament_k: int = 3
    crossover_rate: float = 0.9
    mutation_rate: Optional[float] = None  # None -> 1 / genome length
    elitism_count: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("population_size", "n_islands", "tournament_k", "migration_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("n_generations", "migration_count", "elitism_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.population_size % self.n_islands:
            raise ValueError("population_size must be divisible by n_islands")
        if self.island_size < 2:
            raise ValueError("each island needs at least two individuals")
        if self.elitism_count >= self.island_size or self.migration_count >= self.island_size:
            raise ValueError("elitism_count and migration_count must be below the island size")
        rates = [self.crossover_rate] + ([] if self.mutation_rate is None else [self.mutation_rate])
        if not all(0.0 <= r <= 1.0 for r in rates):
            raise ValueError("rates must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def island_size(self) -> int:
        return self.population_size // self.n_islands

    def to_dict(self) -> dict:
        return asdict(self)


class GenerationRecord(NamedTuple):
    generation: int
    best_cost: float
    mean_cost: float


# ---------------------------------------------------------------------------
# decoding

def _unit(genes) -> np.ndarray:
    return np.asarray(genes, dtype=np.float64) / GENE_MAX


def _lerp(u, lo, hi):
    return lo + (hi - lo) * u


def qgain_bounds(lo_gene: int, span_gene: int) -> tuple[float, float]:
    lo = 10.0 ** _lerp(lo_gene / GENE_MAX, *QLO_LOG10)
    hi = lo * 10.0 ** _lerp(span_gene / GENE_MAX, *QSPAN_LOG10)
    return float(lo), float(hi)


def decode_gft(genes, **controller_kwargs) -> GftController:
    """Chromosome layout: bid1 rules (9), bid2 rules (9), q1..q4 rules (49 each),
    then (lower, span) bound genes for q1..q4."""
    genes = np.asarray(genes)
    if genes.shape != (GFT_GENOME_LENGTH,):
        raise ValueError(f"GFT chromosome must have {GFT_GENOME_LENGTH} genes, got {genes.shape}")
    u = _unit(genes)
    bid_part = MembershipPartition(BID_MFS)
    q_part = MembershipPartition(QGAIN_MFS)
    nb = BID_MFS**2
    nq = QGAIN_MFS**2
    bid = tuple(
        FisSpec((bid_part, bid_part), u[i * nb:(i + 1) * nb], -1.0, 1.0) for i in range(2)
    )
    off = N_BID_GENES
    bounds_off = N_BID_GENES + N_QCONS_GENES
    qfis = []
    for i in range(4):
        lo, hi = qgain_bounds(int(genes[bounds_off + 2 * i]), int(genes[bounds_off + 2 * i + 1]))
        qfis.append(FisSpec((q_part, q_part), u[off + i * nq: off + (i + 1) * nq], lo, hi))
    return GftController(bid, tuple(qfis), **controller_kwargs)


def decode_baseline(genes, r: float = R_DEFAULT) -> LqrWeights:
    genes = np.asarray(genes)
    if genes.shape != (BASELINE_GENOME_LENGTH,):
        raise ValueError(f"baseline chromosome must have {BASELINE_GENOME_LENGTH} genes")
    q = 10.0 ** _lerp(_unit(genes), *BASELINE_Q_LOG10)
    return LqrWeights(tuple(float(v) for v in q), (r, r))


def encode_baseline(weights: LqrWeights) -> np.ndarray:
    """Nearest chromosome for the given static weights."""
    lo, hi = BASELINE_Q_LOG10
    u = (np.log10(np.asarray(weights.q)) - lo) / (hi - lo)
    return np.clip(np.rint(u * GENE_MAX), 0, GENE_MAX).astype(np.int64)


def encode_static_gft(q, consequent_gene: int = 128, sliding_bids: bool = True) -> np.ndarray:
    """Chromosome whose Q-gain systems all output (approximately) the fixed ``q``.

    Every Q-gain rule gets the same consequent, so the bids have no influence
    on the decoded gains.  The span gene is minimal and the lower-bound gene
    is chosen so the output lands as close to ``q_i`` as the 8-bit grid
    allows.  With ``sliding_bids`` each bid rule ``(i, j)`` is set to
    ``(i + j) / (2 (n - 1))``, so a bid tracks error plus error rate and a
    single Q-rule mutation already changes the closed loop.
    """
    genes = np.full(GFT_GENOME_LENGTH, consequent_gene, dtype=np.int64)
    if sliding_bids:
        idx = np.add.outer(np.arange(BID_MFS), np.arange(BID_MFS)).ravel() / (2 * (BID_MFS - 1))
        bid_genes = np.rint(idx * GENE_MAX).astype(np.int64)
        genes[:N_BID_GENES] = np.tile(bid_genes, 2)
    bounds_off = N_BID_GENES + N_QCONS_GENES
    c = consequent_gene / GENE_MAX
    for i, qi in enumerate(q):
        best = None
        for lo_gene in range(GENE_MAX + 1):
            lo, hi = qgain_bounds(lo_gene, 0)
            err = abs(np.log10(lo + (hi - lo) * c) - np.log10(qi))
            if best is None or err < best[0]:
                best = (err, lo_gene)
        genes[bounds_off + 2 * i] = best[1]
        genes[bounds_off + 2 * i + 1] = 0
    return genes


# ---------------------------------------------------------------------------
# the GA

def worker_count() -> int:
    env = os.environ.get("GFTLQR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


class _Evaluator:
    def __init__(self, cost_fn, vectorized):
        self.cost_fn = cost_fn
        self.vectorized = vectorized
        self.cache: dict[bytes, float] = {}
        self.n_evals = 0

    def __call__(self, pop: np.ndarray) -> np.ndarray:
        keys = [row.tobytes() for row in pop]
        todo = []
        seen = set()
        for i, k in enumerate(keys):
            if k not in self.cache and k not in seen:
                todo.append(i)
                seen.add(k)
        if todo:
            sub = pop[todo]
            if self.vectorized:
                vals = np.asarray(self.cost_fn(sub), dtype=np.float64)
            else:
                n = worker_count()
                if n > 1 and len(todo) > 1:
                    with ThreadPoolExecutor(n) as ex:
                        vals = list(ex.map(self.cost_fn, sub))
                else:
                    vals = [self.cost_fn(row) for row in sub]
            for i, v in zip(todo, vals):
                v = float(v)
                if not np.isfinite(v) or v < 0:
                    raise ValueError(f"cost function returned {v!r}; costs must be finite and >= 0")
                self.cache[keys[i]] = v
            self.n_evals += len(todo)
        return np.array([self.cache[k] for k in keys])


def _tournament(rng, costs, k):
    idx = rng.integers(0, len(costs), size=k)
    return idx[np.argmin(costs[idx])]


def _next_generation(rng, pop, costs, cfg: GaConfig, mutation_rate):
    n, length = pop.shape
    order = np.argsort(costs, kind="stable")
    children = [pop[i].copy() for i in order[:cfg.elitism_count]]
    while len(children) < n:
        a = pop[_tournament(rng, costs, cfg.tournament_k)].copy()
        b = pop[_tournament(rng, costs, cfg.tournament_k)].copy()
        if length > 1 and rng.random() < cfg.crossover_rate:
            cut = rng.integers(1, length)
            a[cut:], b[cut:] = b[cut:].copy(), a[cut:].copy()
        for child in (a, b):
            mask = rng.random(length) < mutation_rate
            child[mask] = rng.integers(0, GENE_MAX + 1, size=int(mask.sum()))
            if len(children) < n:
                children.append(child)
    return np.array(children)


def run_ga(
    config: GaConfig,
    cost_fn: Callable,
    report_sink: Optional[Callable[[int, float, float], None]] = None,
    *,
    genome_length: int,
    initial: Optional[np.ndarray] = None,
    vectorized: bool = False,
) -> tuple[np.ndarray, list[GenerationRecord]]:
    """Minimize ``cost_fn`` over integer chromosomes in [0, 255].

    ``cost_fn`` maps one chromosome to a finite nonnegative cost, or a 2-D
    batch of chromosomes to a cost vector when ``vectorized`` is set.
    ``initial`` rows replace the first random individuals, spread round-robin
    over the islands.  Returns the best chromosome and one record per
    generation (generation 0 is the initial population).
    """
    mutation_rate = config.mutation_rate if config.mutation_rate is not None else 1.0 / genome_length
    n_isl, isl = config.n_islands, config.island_size
    evaluate = _Evaluator(cost_fn, vectorized)

    pops = [
        np.random.default_rng([config.seed, i, 0]).integers(0, GENE_MAX + 1, size=(isl, genome_length))
        for i in range(n_isl)
    ]
    if initial is not None:
        initial = np.atleast_2d(np.asarray(initial, dtype=np.int64))
        if initial.shape[1] != genome_length or initial.min() < 0 or initial.max() > GENE_MAX:
            raise ValueError("initial chromosomes have the wrong length or out-of-range genes")
        for j, row in enumerate(initial[: n_isl * isl]):
            pops[j % n_isl][j // n_isl] = row

    def evaluate_all(pops):
        flat = evaluate(np.concatenate(pops))
        return [flat[i * isl:(i + 1) * isl] for i in range(n_isl)]

    costs = evaluate_all(pops)
    history: list[GenerationRecord] = []
    best_cost = np.inf
    best = None

    def record(gen):
        nonlocal best_cost, best
        for p, c in zip(pops, costs):
            i = int(np.argmin(c))
            if c[i] < best_cost:
                best_cost = float(c[i])
                best = p[i].copy()
        mean = float(np.mean(np.concatenate(costs)))
        rec = GenerationRecord(gen, best_cost, mean)
        history.append(rec)
        if report_sink is not None:
            report_sink(*rec)

    record(0)
    for gen in range(1, config.n_generations + 1):
        pops = [
            _next_generation(np.random.default_rng([config.seed, i, gen]), pops[i], costs[i],
                             config, mutation_rate)
            for i in range(n_isl)
        ]
        costs = evaluate_all(pops)
        if n_isl > 1 and config.migration_count and gen % config.migration_interval == 0:
            k = config.migration_count
            migrants = [(p[np.argsort(c, kind="stable")[:k]].copy(), np.sort(c, kind="stable")[:k])
                        for p, c in zip(pops, costs)]
            for i in range(n_isl):
                dst = (i + 1) % n_isl
                worst = np.argsort(costs[dst], kind="stable")[::-1][:k]
                pops[dst][worst] = migrants[i][0]
                costs[dst][worst] = migrants[i][1]
        record(gen)
    return best, history
