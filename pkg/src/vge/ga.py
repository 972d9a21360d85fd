"""Genetic search over recurrent architectures.

A genome lists recurrent layers (cell kind, units, dropout), optional
hidden dense layers, and the dropout on the input of the ``Dense(1)``
output.  Each ensemble slot runs its own generational search: a random
initial population, then per generation the elite is carried over and the
rest is filled with mutated crossovers of fitness-proportional parents.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .bayes import mc_predict
from .detect import DetectorConfig, tune_tau
from .evaluation import labels_to_segments
from .exceptions import InsufficientPopulation, TrainingDiverged
from .nn.layers import DENSE, RECURRENT_KINDS, LayerSpec
from .nn.model import init_model
from .nn.train import TrainConfig, predict, train

logger = logging.getLogger(__name__)

DIVERGED = -math.inf
_MAX_RETRIES = 10


@dataclass(frozen=True)
class LayerGene:
    kind: str
    units: int
    dropout_p: float = 0.0


@dataclass(frozen=True)
class Genome:
    recurrent: tuple[LayerGene, ...]
    dense: tuple[LayerGene, ...] = ()
    output_dropout: float = 0.0

    def to_layers(self) -> list[LayerSpec]:
        specs = [LayerSpec(g.kind, g.units, g.dropout_p) for g in self.recurrent]
        specs += [LayerSpec(DENSE, g.units, g.dropout_p) for g in self.dense]
        specs.append(LayerSpec(DENSE, 1, self.output_dropout))
        return specs

    @property
    def units(self) -> list[int]:
        return [g.units for g in self.recurrent]

    def to_dict(self):
        return {"recurrent": [asdict(g) for g in self.recurrent],
                "dense": [asdict(g) for g in self.dense],
                "output_dropout": self.output_dropout}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(LayerGene(**g) for g in d["recurrent"]),
                   tuple(LayerGene(**g) for g in d.get("dense", [])),
                   d.get("output_dropout", 0.0))


@dataclass(frozen=True)
class GaConfig:
    ni_range: tuple[int, int] = (3, 6)
    np_range: tuple[int, int] = (4, 6)
    layers_range: tuple[int, int] = (2, 6)
    units_range: tuple[int, int] = (128, 256)
    dense_range: tuple[int, int] = (0, 1)
    max_dropout: float = 0.2
    mutation_rate: float = 0.1
    min_mutation: float = 1e-4
    momentum: float = 0.1
    max_momentum: float = 0.1
    k: int = 2
    shared_pool: bool = False
    fitness_mode: str = "auto"    # "auto", "f1" or "mse"
    fitness_mc_samples: int = 30
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        for name in ("ni_range", "np_range", "layers_range", "units_range", "dense_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name}: need 0 <= min <= max, got {(lo, hi)}")
        if self.ni_range[0] < 1 or self.np_range[0] < 1 or self.units_range[0] < 1:
            raise ValueError("iterations, population and units must be >= 1")
        if self.layers_range[0] < 1:
            raise ValueError("at least one recurrent layer is required")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")
        if not 0.0 <= self.max_dropout < 1.0:
            raise ValueError("max_dropout must be in [0, 1)")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.fitness_mode not in ("auto", "f1", "mse"):
            raise ValueError(f"unknown fitness_mode {self.fitness_mode!r}")


@dataclass
class FitnessRecord:
    genome: Genome
    fitness: float
    model: object = None
    metrics: dict = field(default_factory=dict)
    generation: int = 0
    slot: int = 0
    wall_time: float = 0.0

    def log_entry(self) -> dict:
        return {"slot": self.slot, "generation": self.generation,
                "genome": self.genome.to_dict(),
                "fitness": self.fitness if math.isfinite(self.fitness) else None,
                "metrics": self.metrics, "wall_time": self.wall_time}


@dataclass
class SearchData:
    """Training and validation windows for fitness evaluation."""

    train: object                       # WindowBatch
    validation: object                  # WindowBatch
    validation_labels: np.ndarray | None = None   # bool per validation target
    train_config: TrainConfig = field(default_factory=TrainConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)


def _gene(kind, cfg: GaConfig, rng) -> LayerGene:
    return LayerGene(kind, int(rng.integers(cfg.units_range[0], cfg.units_range[1] + 1)),
                     float(rng.uniform(0.0, cfg.max_dropout)))


def random_genome(cfg: GaConfig, rng: np.random.Generator) -> Genome:
    n_layers = int(rng.integers(cfg.layers_range[0], cfg.layers_range[1] + 1))
    recurrent = tuple(_gene(RECURRENT_KINDS[int(rng.integers(len(RECURRENT_KINDS)))], cfg, rng)
                      for _ in range(n_layers))
    n_dense = int(rng.integers(cfg.dense_range[0], cfg.dense_range[1] + 1))
    dense = tuple(_gene(DENSE, cfg, rng) for _ in range(n_dense))
    return Genome(recurrent, dense, float(rng.uniform(0.0, cfg.max_dropout)))


def crossover(a: Genome, b: Genome, rng: np.random.Generator,
              cfg: GaConfig | None = None) -> Genome:
    """Single-point crossover of the recurrent gene lists.

    One cut ``c`` is drawn in ``[0, min(len(a), len(b))]`` and the child
    takes ``a[:c] + b[c:]``, so identical parents reproduce themselves.
    Dense genes and the output dropout come whole from either parent.
    """
    c = int(rng.integers(0, min(len(a.recurrent), len(b.recurrent)) + 1))
    rec = a.recurrent[:c] + b.recurrent[c:]
    dense = a.dense if rng.random() < 0.5 else b.dense
    out_drop = a.output_dropout if rng.random() < 0.5 else b.output_dropout
    if cfg is not None:
        lo, hi = cfg.layers_range
        rec = rec[:hi]
        while len(rec) < lo:
            rec = rec + (rec[-1] if rec else a.recurrent[0],)
    return Genome(rec, dense, out_drop)


def _mutate_gene(g: LayerGene, rate, rng, cfg: GaConfig, step: float) -> LayerGene:
    kind, units, drop = g.kind, g.units, g.dropout_p
    if g.kind != DENSE and rng.random() < rate:
        kind = RECURRENT_KINDS[int(rng.integers(len(RECURRENT_KINDS)))]
    if rng.random() < rate:
        delta = max(1, int(round(step * units)))
        units += delta if rng.random() < 0.5 else -delta
        units = int(np.clip(units, cfg.units_range[0], cfg.units_range[1]))
    if rng.random() < rate:
        drop = float(np.clip(drop + rng.uniform(-0.05, 0.05), 0.0, cfg.max_dropout))
    return LayerGene(kind, units, drop)


def mutate(g: Genome, rate: float, rng: np.random.Generator,
           cfg: GaConfig | None = None, step: float = 0.1) -> Genome:
    """Mutate every gene independently with probability ``rate``.

    Units move by ``+-step`` of their value (at least 1) and are clamped to
    the configured bounds, cell kinds are resampled uniformly, dropout
    rates are jittered inside ``[0, max_dropout]``.
    """
    cfg = cfg or GaConfig()
    if rate <= 0.0:
        return g
    rec = tuple(_mutate_gene(x, rate, rng, cfg, step) for x in g.recurrent)
    dense = tuple(_mutate_gene(x, rate, rng, cfg, step) for x in g.dense)
    out_drop = g.output_dropout
    if rng.random() < rate:
        out_drop = float(np.clip(out_drop + rng.uniform(-0.05, 0.05), 0.0, cfg.max_dropout))
    return Genome(rec, dense, out_drop)


def _fitness_mode(cfg: GaConfig, data: SearchData) -> str:
    if cfg.fitness_mode != "auto":
        return cfg.fitness_mode
    labels = data.validation_labels
    return "f1" if labels is not None and np.any(labels) else "mse"


def fitness(g: Genome, data: SearchData, cfg: GaConfig,
            rng: np.random.Generator) -> FitnessRecord:
    """Decode, train and score one genome.

    ``f1`` mode: best F1 over the detector's tau grid on the labeled
    validation span, using MC-dropout bands.  ``mse`` mode: negative
    validation MSE of the deterministic forecast.  Diverged training gives
    fitness ``-inf``.
    """
    start = time.perf_counter()
    n_features = data.train.inputs.shape[2]
    model = init_model(g.to_layers(), n_features, rng)
    try:
        model, history = train(model, data.train, data.train_config, rng)
        val_pred = predict(model, data.validation.inputs)
        val_mse = float(np.mean((val_pred - data.validation.targets) ** 2))
        if not np.isfinite(val_mse):
            raise TrainingDiverged("non-finite validation error")
    except TrainingDiverged as exc:
        logger.info("genome culled: %s", exc)
        return FitnessRecord(g, DIVERGED, None, {"diverged": True},
                             wall_time=time.perf_counter() - start)
    found = {"val_mse": val_mse, "final_train_loss": history[-1] if history else None}
    mode = _fitness_mode(cfg, data)
    if mode == "f1":
        dist = mc_predict(model, data.validation, max(2, cfg.fitness_mc_samples),
                          np.random.SeedSequence(int(rng.integers(2**63))), reservoir=0)
        segments = labels_to_segments(data.validation_labels)
        tau, per_tau = tune_tau(data.validation.targets, dist, segments, data.detector)
        found.update(tau=tau, f1=per_tau[tau]["f1"])
        value = per_tau[tau]["f1"]
    else:
        value = -val_mse
    found["mode"] = mode
    return FitnessRecord(g, float(value), model, found,
                         wall_time=time.perf_counter() - start)


def _select(records, rng, n=2):
    """Roulette on positive fitness, rank weights otherwise; -inf culled."""
    alive = [r for r in records if math.isfinite(r.fitness)] or list(records)
    fit = np.array([r.fitness for r in alive], dtype=float)
    if np.all(np.isfinite(fit)) and np.all(fit > 0):
        weights = fit
    else:
        order = np.argsort(np.argsort(np.nan_to_num(fit, neginf=-1e300), kind="stable"),
                           kind="stable")
        weights = order + 1.0
    weights = weights / weights.sum()
    picks = rng.choice(len(alive), size=n, replace=True, p=weights)
    return [alive[i] for i in picks]


def _child_rng(root: np.random.SeedSequence, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        root.entropy, spawn_key=tuple(root.spawn_key) + tuple(key)))


@dataclass
class SearchResult:
    best: list[FitnessRecord]
    records: list[FitnessRecord]
    best_trace: dict            # slot -> best-so-far fitness per generation

    def log_lines(self):
        return [json.dumps(r.log_entry(), sort_keys=True) for r in self.records]

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.log_lines():
                fh.write(line + "\n")


def _evaluate(genomes, evaluator, root, slot, gen, n_jobs):
    def one(i_g):
        i, g = i_g
        rec = evaluator(g, _child_rng(root, slot, 1, gen, i))
        rec.slot, rec.generation = slot, gen
        return rec
    jobs = list(enumerate(genomes))
    if n_jobs > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(one, jobs))
    return [one(j) for j in jobs]


def _mean_units(g: Genome) -> float:
    return float(np.mean(g.units))


def _run_stream(slot, cfg: GaConfig, evaluator, root):
    rng = _child_rng(root, slot, 0)
    n_iter = int(rng.integers(cfg.ni_range[0], cfg.ni_range[1] + 1))
    pop_size = int(rng.integers(cfg.np_range[0], cfg.np_range[1] + 1))
    population = [random_genome(cfg, rng) for _ in range(pop_size)]
    rate = max(cfg.mutation_rate, cfg.min_mutation)
    step = cfg.max_momentum
    best = None
    trace = []
    records = []
    carried = []
    seen = set()
    for gen in range(n_iter):
        fresh = _evaluate(population, evaluator, root, slot, gen, cfg.n_jobs)
        records.extend(fresh)
        seen.update(r.genome for r in fresh)
        current = carried + fresh
        gen_best = max(current, key=lambda r: r.fitness)
        prev = best
        if best is None or gen_best.fitness > best.fitness:
            best = gen_best
        trace.append(best.fitness)
        if gen == n_iter - 1:
            break
        if prev is not None:
            drift = abs(_mean_units(best.genome) - _mean_units(prev.genome)) / _mean_units(prev.genome)
            step = min(cfg.max_momentum, (1.0 - cfg.momentum) * step + cfg.momentum * drift)
        pop_size = int(rng.integers(cfg.np_range[0], cfg.np_range[1] + 1))
        carried = [best]
        population = []
        while len(population) < pop_size - 1:
            a, b = _select(current, rng)
            child = mutate(crossover(a.genome, b.genome, rng, cfg), rate, rng, cfg, step)
            for _ in range(_MAX_RETRIES):
                # a clone would spend an evaluation on a known fitness
                if child not in seen and child not in population:
                    break
                child = mutate(child, 1.0, rng, cfg, step)
            population.append(child)
    return best, records, trace


def evolve(data: SearchData | None, cfg: GaConfig = GaConfig(), rng=None,
           fitness_fn: Callable | None = None) -> SearchResult:
    """Run the search and return the best ``cfg.k`` records.

    ``fitness_fn(genome, rng)`` replaces training-based fitness; it may
    return a float or a :class:`FitnessRecord`.  Results depend only on
    ``cfg.seed`` (or ``rng``), not on ``cfg.n_jobs``.
    """
    if rng is None:
        root = np.random.SeedSequence(cfg.seed)
    elif isinstance(rng, np.random.SeedSequence):
        root = rng
    else:
        root = np.random.SeedSequence(int(np.random.default_rng(rng).integers(2**63)))

    if fitness_fn is None:
        if data is None:
            raise ValueError("data is required for training-based fitness")

        def evaluator(g, r):
            return fitness(g, data, cfg, r)
    else:
        def evaluator(g, r):
            out = fitness_fn(g, r)
            return out if isinstance(out, FitnessRecord) else FitnessRecord(g, float(out))

    records, traces, best = [], {}, []
    if cfg.shared_pool:
        _, records, traces[0] = _run_stream(0, cfg, evaluator, root)
        seen = set()
        for r in sorted(records, key=lambda r: r.fitness, reverse=True):
            if r.genome not in seen and math.isfinite(r.fitness):
                seen.add(r.genome)
                best.append(r)
            if len(best) == cfg.k:
                break
    else:
        for slot in range(cfg.k):
            b, recs, traces[slot] = _run_stream(slot, cfg, evaluator, root)
            records.extend(recs)
            if b is not None and math.isfinite(b.fitness):
                best.append(b)
    if len(best) < cfg.k:
        raise InsufficientPopulation(
            f"only {len(best)} usable genomes for an ensemble of {cfg.k}")
    return SearchResult(best, records, traces)


def desk_scale(cfg: GaConfig = GaConfig()) -> GaConfig:
    """Shrunk bounds that keep a full search within laptop budgets."""
    return replace(cfg, units_range=(8, 32), layers_range=(1, 2), dense_range=(0, 0),
                   ni_range=(1, 2), np_range=(2, 3))
