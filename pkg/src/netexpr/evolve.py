"""(1+lambda) evolution of whole-network genotypes.

Each generation scores every individual's chromosome position by
position: the best chromosome at position i (affine-fitted against the
traced layer output, fed with the already-chosen prefix's output) joins a
composite parent, which is then mutated into the next wave of offspring.

Total fitness is the mean of the hidden-layer MSEs plus the output-layer
loss (MSE for regression, soft-target cross-entropy for classification).
A layer whose surrogate values are not finite scores a flat 1e12 penalty
so broken expressions stay totally ordered and are never selected.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from . import cgp
from .affine import CROSS_ENTROPY, MSE, FitProblem, fit_affine
from .errors import DimensionMismatch
from .mlp import LayerTrace
from .surrogate import (LayerChromosome, NetGenotype, apply_affine,
                        chromosome_scalar, genotype_forward, mutate_net,
                        random_net_genotype)

REGRESSION = "regression"
CLASSIFICATION = "classification"

OVERFLOW_PENALTY = 1e12


@dataclass
class EvolveConfig:
    """Knobs for the evolution loop; defaults follow the benchmark setup."""
    n_offspring: int = 200
    max_generations: int = 5000
    mutation_prob: float = 0.4
    fitness_target: float = 1e-4
    affine_refit_every: int = 1     # classification runs typically use 50
    seed: int = 0
    n_rows: int = 10
    n_cols: int = 10
    n_constants: int = 1
    levels_back: int | None = None
    threads: int = 1
    lbfgs_max_iters: int = 500

    def __post_init__(self):
        if self.n_offspring < 1:
            raise ValueError("n_offspring must be >= 1")
        if self.fitness_target <= 0:
            raise ValueError("fitness_target must be > 0")
        if self.affine_refit_every < 1:
            raise ValueError("affine_refit_every must be >= 1")


@dataclass(frozen=True)
class FitnessReport:
    per_layer_mse: tuple[float, ...]   # hidden layers only
    output_loss: float
    total: float


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_total: float        # best-so-far, non-increasing
    mean_total: float
    layer_mses: tuple[float, ...]
    output_loss: float
    elapsed_ms: float


@dataclass
class ConvergenceLog:
    n_hidden: int
    records: list[GenerationRecord] = field(default_factory=list)

    def header(self, include_timing: bool = True) -> str:
        cols = ["generation", "best_total", "mean_total"]
        cols += [f"layer{i}_mse" for i in range(self.n_hidden)]
        cols += ["output_loss"]
        if include_timing:
            cols += ["elapsed_ms"]
        return ",".join(cols)

    def row(self, rec: GenerationRecord, include_timing: bool = True) -> str:
        cells = [str(rec.generation), repr(rec.best_total), repr(rec.mean_total)]
        cells += [repr(v) for v in rec.layer_mses]
        cells += [repr(rec.output_loss)]
        if include_timing:
            cells += [repr(rec.elapsed_ms)]
        return ",".join(cells)

    def to_csv(self, stream: TextIO, include_timing: bool = True) -> None:
        stream.write(self.header(include_timing) + "\n")
        for rec in self.records:
            stream.write(self.row(rec, include_timing) + "\n")

    @property
    def best_series(self) -> list[float]:
        return [r.best_total for r in self.records]


def _check_task(task: str) -> None:
    if task not in (REGRESSION, CLASSIFICATION):
        raise ValueError(f"unknown task {task!r}")


def score_values(pred: np.ndarray, target: np.ndarray, kind: str) -> float:
    """Layer loss: mean over samples and neurons, or soft-target CE.

    Non-finite predictions score the flat overflow penalty.
    """
    if not np.all(np.isfinite(pred)):
        return OVERFLOW_PENALTY
    with np.errstate(over="ignore", invalid="ignore"):
        if kind == MSE:
            d = pred - target
            loss = float((d * d).mean())
        else:
            z = pred - pred.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            loss = float(-(target * logp).sum() / pred.shape[0])
    return loss if math.isfinite(loss) else OVERFLOW_PENALTY


def _position_targets(trace: LayerTrace, task: str):
    """(target, loss kind) per chromosome position; output layer last."""
    out = [(np.asarray(h, dtype=float), MSE) for h in trace.h]
    out_kind = CROSS_ENTROPY if task == CLASSIFICATION else MSE
    out.append((np.asarray(trace.y, dtype=float), out_kind))
    return out


def fitness(g: NetGenotype, trace: LayerTrace, task: str) -> FitnessReport:
    """Score a genotype as-is (no affine refitting)."""
    _check_task(task)
    if g.widths != trace.widths:
        raise DimensionMismatch(
            f"genotype widths {g.widths} do not match trace widths {trace.widths}")
    targets = _position_targets(trace, task)
    outs = genotype_forward(g, trace.x)
    losses = [score_values(o.h_values, t, kind)
              for o, (t, kind) in zip(outs, targets)]
    hidden = tuple(losses[:-1])
    total = (sum(hidden) / len(hidden) if hidden else 0.0) + losses[-1]
    return FitnessReport(hidden, losses[-1], total)


def _fit_and_score(c: LayerChromosome, inputs: np.ndarray, target: np.ndarray,
                   kind: str, refit: bool, lbfgs_max_iters: int):
    """Returns (chromosome, wrapped values, loss) for one position."""
    f = chromosome_scalar(c, inputs)
    if not np.all(np.isfinite(f)):
        return c, apply_affine(np.nan_to_num(f), c.affine), OVERFLOW_PENALTY
    if refit:
        problem = FitProblem(f, target, kind)
        result = fit_affine(problem, lbfgs_max_iters=lbfgs_max_iters)
        c = c.with_affine(result.params)
    h = apply_affine(f, c.affine)
    return c, h, score_values(h, target, kind)


def select_layerwise_best(population: Sequence[NetGenotype], trace: LayerTrace,
                          task: str, refit: bool = True,
                          lbfgs_max_iters: int = 500,
                          pool: ThreadPoolExecutor | None = None):
    """Assemble the per-position best chromosomes into one composite parent.

    Positions are scanned in order; each individual's chromosome at
    position i is scored with the already-selected prefix's output as
    input, and ties go to the lowest population index.  Returns the
    composite genotype and the (n_individuals, n_positions) loss matrix.
    """
    _check_task(task)
    if not population:
        raise ValueError("population must be non-empty")
    targets = _position_targets(trace, task)
    n_positions = len(targets)
    loss_matrix = np.empty((len(population), n_positions))
    chosen: list[LayerChromosome] = []
    current = np.asarray(trace.x, dtype=float)
    for pos in range(n_positions):
        target, kind = targets[pos]

        def job(indiv: NetGenotype):
            return _fit_and_score(indiv.chromosomes[pos], current, target,
                                  kind, refit, lbfgs_max_iters)

        if pool is not None:
            results = list(pool.map(job, population))
        else:
            results = [job(indiv) for indiv in population]
        losses = np.array([r[2] for r in results])
        loss_matrix[:, pos] = losses
        best = int(np.argmin(losses))     # first minimum: lowest-index tie-break
        chosen.append(results[best][0])
        current = results[best][1]
    return NetGenotype(tuple(chosen)), loss_matrix


def _combine(loss_matrix: np.ndarray) -> np.ndarray:
    """Per-individual totals: mean of hidden-position losses plus output loss."""
    if loss_matrix.shape[1] == 1:
        return loss_matrix[:, 0].copy()
    return loss_matrix[:, :-1].mean(axis=1) + loss_matrix[:, -1]


def evolve(trace: LayerTrace, task: str, cfg: EvolveConfig,
           fset: cgp.FunctionSet | None = None,
           initial: Sequence[NetGenotype] | None = None,
           log_stream: TextIO | None = None,
           include_timing: bool = True,
           verify_fitness: bool = False):
    """Run the evolution loop; returns (best genotype, convergence log).

    The loop stops once the best-so-far total fitness reaches
    ``cfg.fitness_target`` or ``cfg.max_generations`` is hit.  Fully
    reproducible from ``cfg.seed``: threading only parallelizes pure
    chromosome evaluations.  ``initial`` individuals replace the front of
    the random starting population.  With ``verify_fitness`` every logged
    generation re-scores the parent through the plain fitness path and
    asserts agreement.
    """
    _check_task(task)
    fset = fset or cgp.default_function_set()
    widths = trace.widths
    n_inputs = trace.x.shape[1]
    rng = np.random.default_rng(cfg.seed)

    population: list[NetGenotype] = [
        random_net_genotype(n_inputs, widths, fset, rng, n_rows=cfg.n_rows,
                            n_cols=cfg.n_cols, n_constants=cfg.n_constants,
                            levels_back=cfg.levels_back)
        for _ in range(cfg.n_offspring)]
    if initial:
        for i, indiv in enumerate(initial[:len(population)]):
            if indiv.widths != widths:
                raise DimensionMismatch(
                    f"planted individual {i} widths {indiv.widths} != {widths}")
            population[i] = indiv

    log = ConvergenceLog(n_hidden=len(widths) - 1)
    if log_stream is not None:
        log_stream.write(log.header(include_timing) + "\n")

    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    best_geno: NetGenotype | None = None
    best_total = math.inf
    start = time.perf_counter()
    try:
        for gen in range(cfg.max_generations):
            refit = gen % cfg.affine_refit_every == 0
            parent, loss_matrix = select_layerwise_best(
                population, trace, task, refit=refit,
                lbfgs_max_iters=cfg.lbfgs_max_iters, pool=pool)
            per_pos = loss_matrix.min(axis=0)
            hidden = tuple(float(v) for v in per_pos[:-1])
            output_loss = float(per_pos[-1])
            parent_total = (sum(hidden) / len(hidden) if hidden else 0.0) + output_loss
            if verify_fitness:
                recomputed = fitness(parent, trace, task).total
                if not math.isclose(recomputed, parent_total,
                                    rel_tol=1e-9, abs_tol=1e-12):
                    raise AssertionError(
                        f"fitness decomposition mismatch at generation {gen}: "
                        f"{recomputed} vs {parent_total}")
            if parent_total <= best_total:       # ties drift to the newer parent
                best_geno, best_total = parent, parent_total
            rec = GenerationRecord(
                generation=gen,
                best_total=best_total,
                mean_total=float(_combine(loss_matrix).mean()),
                layer_mses=hidden,
                output_loss=output_loss,
                elapsed_ms=(time.perf_counter() - start) * 1000.0,
            )
            log.records.append(rec)
            if log_stream is not None:
                log_stream.write(log.row(rec, include_timing) + "\n")
                log_stream.flush()
            if best_total <= cfg.fitness_target:
                break
            offspring = [mutate_net(parent, cfg.mutation_prob, rng)
                         for _ in range(cfg.n_offspring)]
            population = offspring + [parent]
    finally:
        if pool is not None:
            pool.shutdown()
    return best_geno, log
