"""Steady-state genetic algorithm over fixed-length module chromosomes.

A chromosome is a tuple of gene values: index 0 holds a base, the last
index an end effector, interior genes hold regular modules or 0 for an
empty slot. Truncation selection keeps the top parent_fraction of the
population as untouched elites; the remainder is refilled by single-point
crossover of random parent pairs followed by connector-aware mutation.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from . import fitness, planner, tasks
from .errors import InitFailure
from .modlib import Assembly, ModuleLibrary, assemble, mutation_candidates
from .seeding import derive_seed

logger = logging.getLogger(__name__)

Genes = tuple[int, ...]


@dataclass
class GaConfig:
    n_c: int = 12
    population: int = 25
    generations: int = 200
    p_m: float = 0.1
    p_j: float = 0.9
    parent_fraction: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.n_c < 2:
            raise ValueError("chromosome length must be >= 2")
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not (0.0 < self.parent_fraction < 1.0):
            raise ValueError("parent_fraction must lie in (0, 1)")
        if not (0.0 <= self.p_m <= 1.0):
            raise ValueError("p_m must lie in [0, 1]")
        if not (0.0 <= self.p_j <= 1.0):
            raise ValueError("p_j must lie in [0, 1]")


def decode(library: ModuleLibrary, genes) -> Assembly:
    """Drop empty genes and assemble the remaining module ids in order."""
    ids = [library.id_for_gene(g) for g in genes if g != 0]
    return assemble(library, ids)


def chromosome_valid(library: ModuleLibrary, genes) -> bool:
    try:
        decode(library, genes)
        return True
    except Exception:
        return False


def init_population(library: ModuleLibrary, config: GaConfig) -> list[Genes]:
    """Left-to-right weighted sampling with joint bias p_j on interior genes."""
    if not library.bases or not library.end_effectors:
        raise InitFailure("library needs at least one base and one end effector")
    rng = np.random.default_rng(derive_seed(config.seed, "init"))
    bases = library.bases
    population: list[Genes] = []
    for _ in range(config.population):
        genes = None
        for _attempt in range(100):
            genes = _sample_chromosome(library, bases, config, rng)
            if genes is not None:
                break
        if genes is None:
            raise InitFailure("no connector-valid chromosome found in 100 attempts")
        population.append(genes)
    return population


def _sample_chromosome(library, bases, config, rng):
    base = bases[rng.integers(len(bases))]
    genes = [library.gene_for_id(base.id)]
    tail = base.distal.ctype
    for _ in range(config.n_c - 2):
        compat = [m for m in library.regulars if m.proximal.ctype == tail]
        with_joint = [m for m in compat if m.has_joint]
        without = [m for m in compat if not m.has_joint]
        if with_joint and rng.random() < config.p_j:
            pick = with_joint[rng.integers(len(with_joint))]
        else:
            # the empty slot belongs to the non-joint group
            idx = rng.integers(len(without) + 1)
            pick = without[idx] if idx < len(without) else None
        if pick is None:
            genes.append(0)
        else:
            genes.append(library.gene_for_id(pick.id))
            tail = pick.distal.ctype
    eefs = [m for m in library.end_effectors if m.proximal.ctype == tail]
    if not eefs:
        return None
    genes.append(library.gene_for_id(eefs[rng.integers(len(eefs))].id))
    return tuple(genes)


def _rank_key(library: ModuleLibrary, genes: Genes, fv: fitness.FitnessVector, index: int):
    assembly = decode(library, genes)
    neg_fitness = tuple(-v for v in fv.key())
    return (*neg_fitness, assembly.n_joints, assembly.n_modules, index)


def select(
    evaluated: list[tuple[Genes, fitness.FitnessVector]],
    config: GaConfig,
    library: ModuleLibrary,
) -> list[tuple[Genes, fitness.FitnessVector]]:
    """Truncation: keep the top ceil(parent_fraction * p) individuals.

    Ties break toward fewer joints, then fewer modules, then insertion order.
    """
    n_keep = ceil(config.parent_fraction * len(evaluated))
    order = sorted(
        range(len(evaluated)),
        key=lambda i: _rank_key(library, evaluated[i][0], evaluated[i][1], i),
    )
    return [evaluated[i] for i in order[:n_keep]]


def crossover(parent_a: Genes, parent_b: Genes, rng, library: ModuleLibrary) -> Genes:
    """Single-point crossover; cut points are retried in random order until the
    offspring decodes to a valid assembly, else parent_a is copied."""
    n = len(parent_a)
    cuts = rng.permutation(np.arange(1, n))
    for cut in cuts:
        child = tuple(parent_a[:cut]) + tuple(parent_b[cut:])
        if chromosome_valid(library, child):
            return child
    return tuple(parent_a)


def mutate(genes: Genes, library: ModuleLibrary, p_m: float, rng) -> Genes:
    """Per-gene mutation drawing uniformly from the connector-safe candidates."""
    out = list(genes)
    for pos in range(len(out)):
        if rng.random() >= p_m:
            continue
        candidates = sorted(mutation_candidates(library, out, pos))
        if not candidates:
            continue
        new_gene = candidates[rng.integers(len(candidates))]
        if new_gene == out[pos]:
            continue
        old = out[pos]
        out[pos] = new_gene
        if not chromosome_valid(library, out):
            out[pos] = old
    return tuple(out)


# --- generation loop ----------------------------------------------------------


@dataclass
class GenerationRecord:
    generation: int
    best_fitness: fitness.FitnessVector
    best_genes: Genes
    depth_histogram: dict[int, int]
    n_feasible: int
    wall_ms: float

    def comparable(self) -> tuple:
        """Everything except wall-clock measurement, for determinism checks."""
        return (
            self.generation,
            self.best_fitness.key(),
            self.best_genes,
            tuple(sorted(self.depth_histogram.items())),
            self.n_feasible,
        )


@dataclass
class RunHistory:
    records: list[GenerationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    CSV_HEADER = "generation,best_f1,best_f2,best_f3,best_f4,depth_histogram"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for rec in self.records:
            fv = rec.best_fitness
            hist = "|".join(f"d{d}:{rec.depth_histogram.get(d, 0)}" for d in (1, 2, 3, 4))
            f4 = "" if fv.f4 is None else repr(fv.f4)
            lines.append(
                f"{rec.generation},{fv.f1},"
                f"{'' if fv.f2 is None else fv.f2},"
                f"{'' if fv.f3 is None else fv.f3},"
                f"{f4},{hist}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "generations": [
                {
                    "generation": rec.generation,
                    "best_fitness": {
                        "f1": rec.best_fitness.f1,
                        "f2": rec.best_fitness.f2,
                        "f3": rec.best_fitness.f3,
                        "f4": rec.best_fitness.f4,
                        "depth": rec.best_fitness.evaluated_depth,
                    },
                    "best_genes": list(rec.best_genes),
                    "depth_histogram": {str(k): v for k, v in sorted(rec.depth_histogram.items())},
                    "n_feasible": rec.n_feasible,
                    "wall_ms": rec.wall_ms,
                }
                for rec in self.records
            ]
        }


@dataclass
class RunResult:
    best_genes: Genes
    best_fitness: fitness.FitnessVector
    best_assembly: Assembly
    best_trajectory: planner.Trajectory | None
    best_seed: int
    history: RunHistory


def _eval_worker(args):
    library, ids, task, weights, opts, seed = args
    assembly = assemble(library, ids)
    return fitness.evaluate(assembly, task, weights=weights, opts=opts, seed=seed)


def run(
    library: ModuleLibrary,
    task: tasks.Task,
    config: GaConfig | None = None,
    weights: fitness.CostWeights | None = None,
    eval_opts: fitness.EvalOptions | None = None,
    parallelism: int = 1,
    model_cache: fitness.ModelCache | None = None,
) -> RunResult:
    """Full optimization loop; returns the best individual found overall.

    A best individual that never reached stage 4 (or whose f4 is -inf) is a
    valid no-solution outcome with best_trajectory None.
    """
    config = config or GaConfig()
    weights = weights or fitness.CostWeights()
    eval_opts = eval_opts or fitness.EvalOptions()
    cache = model_cache if model_cache is not None else fitness.ModelCache(1000)

    reach = (
        max(fitness.module_reach(m) for m in library.bases)
        + (config.n_c - 2) * max((fitness.module_reach(m) for m in library.regulars), default=0.0)
        + max(fitness.module_reach(m) for m in library.end_effectors)
    )
    if not tasks.plausibly_solvable(task, reach_estimate=max(reach, 1e-6)):
        logger.warning("task failed the plausibly-solvable pre-check; optimizing anyway")

    rng_ops = np.random.default_rng(derive_seed(config.seed, "operators"))
    population = init_population(library, config)
    history = RunHistory()
    best: tuple[Genes, fitness.FitnessVector, int] | None = None

    executor = ProcessPoolExecutor(max_workers=parallelism) if parallelism > 1 else None
    try:
        for gen in range(config.generations):
            start = time.perf_counter()
            seeds = [derive_seed(config.seed, "eval", gen, i) for i in range(len(population))]
            if executor is None:
                fvs = [
                    fitness.cached_evaluate(
                        cache, library,
                        tuple(library.id_for_gene(g) for g in genes if g != 0),
                        task, weights=weights, opts=eval_opts, seed=s,
                    )
                    for genes, s in zip(population, seeds)
                ]
            else:
                payload = [
                    (library, tuple(library.id_for_gene(g) for g in genes if g != 0),
                     task, weights, eval_opts, s)
                    for genes, s in zip(population, seeds)
                ]
                fvs = list(executor.map(_eval_worker, payload))

            evaluated = list(zip(population, fvs))
            gen_order = sorted(
                range(len(evaluated)),
                key=lambda i: _rank_key(library, evaluated[i][0], evaluated[i][1], i),
            )
            gen_best_idx = gen_order[0]
            gen_best_genes, gen_best_fv = evaluated[gen_best_idx]
            if best is None or fitness.lex_compare(gen_best_fv, best[1]) == fitness.GREATER:
                best = (gen_best_genes, gen_best_fv, seeds[gen_best_idx])

            depth_hist: dict[int, int] = {}
            for fv in fvs:
                depth_hist[fv.evaluated_depth] = depth_hist.get(fv.evaluated_depth, 0) + 1
            history.records.append(
                GenerationRecord(
                    generation=gen,
                    best_fitness=best[1],
                    best_genes=best[0],
                    depth_histogram=depth_hist,
                    n_feasible=sum(1 for fv in fvs if fv.feasible),
                    wall_ms=(time.perf_counter() - start) * 1e3,
                )
            )

            if gen == config.generations - 1:
                break
            parents = select(evaluated, config, library)
            next_pop = [genes for genes, _ in parents]
            while len(next_pop) < config.population:
                if len(parents) == 1:
                    child = parents[0][0]
                else:
                    i = int(rng_ops.integers(len(parents)))
                    j = int(rng_ops.integers(len(parents) - 1))
                    if j >= i:
                        j += 1
                    child = crossover(parents[i][0], parents[j][0], rng_ops, library)
                next_pop.append(mutate(child, library, config.p_m, rng_ops))
            population = next_pop
    finally:
        if executor is not None:
            executor.shutdown()

    best_genes, best_fv, best_seed = best
    best_assembly = decode(library, best_genes)
    trajectory = None
    if best_fv.feasible:
        trajectory = fitness.resolve_trajectory(
            best_assembly, task, opts=eval_opts, seed=best_seed
        )
    return RunResult(
        best_genes=best_genes,
        best_fitness=best_fv,
        best_assembly=best_assembly,
        best_trajectory=trajectory,
        best_seed=best_seed,
        history=history,
    )
