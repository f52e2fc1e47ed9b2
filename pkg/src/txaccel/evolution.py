"""Tournament-based evolution of acceleration formulas.

Each generation copies the elite unchanged, fills the rest with
tournament-selected parents recombined by subtree crossover (probability
p_c) and subtree mutation (probability p_m per offspring), tunes the
learnable parameter of every newly created or modified formula with
restarted Nelder-Mead, and stops at the generation cap or once the best
training fitness exceeds the target.

Fitness is the fraction of (sequence, position) comparisons where the
formula's consecutive relative error strictly beats the raw sequence's
error at the same position.  Invalid outputs (a vanishing accelerated
value makes the relative error undefined) count as losses.  All window
evaluation goes through the compiled-program kernels, so one fitness call
is a single batch evaluation.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import InsufficientHistoryError, InvalidConfigError
from .kernels import compile_formula, evaluate_program
from .sequences import TINY_DENOMINATOR
from .trees import (
    Formula,
    aitken_seed,
    contains_parameter,
    crossover,
    formula_node_count,
    mutate,
    random_tree,
    serialize,
)

DEFAULT_EVALUATION_ORDERS = (20, 28, 36, 44, 52)


@dataclass(frozen=True)
class ParamOptConfig:
    restarts: int = 5
    max_function_evals: int = 200
    p_init_range: tuple = (-2.0, 2.0)

    def __post_init__(self):
        if self.restarts < 1 or self.max_function_evals < 1:
            raise InvalidConfigError("param_opt needs restarts >= 1 and "
                                     "max_function_evals >= 1")
        lo, hi = self.p_init_range
        if not lo < hi:
            raise InvalidConfigError(f"empty p_init_range {self.p_init_range}")


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 40
    max_generations: int = 200
    crossover_rate: float = 0.70
    mutation_rate: float = 0.30
    elite_count: int = 2
    tournament_size: int = 3
    max_depth: int = 4
    target_fitness: float = 0.75
    train_fraction: float = 0.70
    evaluation_orders: tuple = DEFAULT_EVALUATION_ORDERS
    rng_seed: int = 0
    param_opt: ParamOptConfig = field(default_factory=ParamOptConfig)
    ephemeral_constants: bool = True

    def __post_init__(self):
        object.__setattr__(self, "evaluation_orders",
                           tuple(int(n) for n in self.evaluation_orders))
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise InvalidConfigError(f"crossover_rate {self.crossover_rate} not in [0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise InvalidConfigError(f"mutation_rate {self.mutation_rate} not in [0, 1]")
        if not 0 < self.elite_count < self.population_size:
            raise InvalidConfigError(
                f"elite_count must satisfy 0 < e < population size, got "
                f"{self.elite_count} of {self.population_size}"
            )
        if self.tournament_size < 2:
            raise InvalidConfigError(f"tournament_size must be >= 2, got "
                                     f"{self.tournament_size}")
        if not 0.0 < self.target_fitness <= 1.0:
            raise InvalidConfigError(f"target_fitness {self.target_fitness} "
                                     "not in (0, 1]")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfigError(f"train_fraction {self.train_fraction} "
                                     "not in (0, 1)")
        if self.max_depth < 1:
            raise InvalidConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if len(self.evaluation_orders) == 0:
            raise InvalidConfigError("evaluation_orders must be non-empty")


class FitnessEvaluator:
    """Precomputed window matrix and raw errors for one sequence set.

    For each sequence and each evaluation order k the formula needs its
    accelerated value at k and at the order just before k, so the window
    matrix holds one row per needed position and ``fitness_program`` is a
    single kernel call plus a vectorized comparison.
    """

    def __init__(self, sequences, orders):
        sequences = list(sequences)
        orders = tuple(int(n) for n in orders)
        if not sequences:
            raise InvalidConfigError("sequence set must be non-empty")
        rows = []
        curr_ids = []
        prev_ids = []
        raw_err = []
        for seq in sequences:
            values = seq.values
            row_of = {}
            for order in orders:
                try:
                    i = seq.index_of(order)
                except InsufficientHistoryError as exc:
                    raise InsufficientHistoryError(
                        f"insufficient window history: {exc}"
                    ) from None
                if i < 4:
                    raise InsufficientHistoryError(
                        f"insufficient window history: evaluation order {order} "
                        f"sits at index {i} of sequence {seq.id!r}; both it and "
                        "its predecessor need 3 trailing terms"
                    )
                for j in (i - 1, i):
                    if j not in row_of:
                        row_of[j] = len(rows)
                        rows.append((values[j], values[j - 1],
                                     values[j - 2], values[j - 3]))
                curr_ids.append(row_of[i])
                prev_ids.append(row_of[i - 1])
                raw_err.append(
                    np.inf if abs(values[i]) < TINY_DENOMINATOR
                    else abs(values[i] - values[i - 1]) / abs(values[i])
                )
        self.sequences = sequences
        self.orders = orders
        self.windows = np.asarray(rows, dtype=np.float64)
        self.curr_ids = np.asarray(curr_ids, dtype=np.intp)
        self.prev_ids = np.asarray(prev_ids, dtype=np.intp)
        self.raw_errors = np.asarray(raw_err, dtype=np.float64)
        self.comparisons = len(sequences) * len(orders)
        self.evals = 0

    def fitness_program(self, program, p: float) -> float:
        self.evals += 1
        accel = evaluate_program(program, self.windows, p)
        curr = accel[self.curr_ids]
        prev = accel[self.prev_ids]
        ok = np.abs(curr) >= TINY_DENOMINATOR
        err = np.where(ok, np.abs(curr - prev) / np.where(ok, np.abs(curr), 1.0),
                       np.inf)
        wins = int(np.count_nonzero(err < self.raw_errors))
        return wins / self.comparisons

    def fitness(self, f: Formula) -> float:
        return self.fitness_program(compile_formula(f), f.p)


def fitness(f: Formula, training, orders=DEFAULT_EVALUATION_ORDERS) -> float:
    """Fraction of (sequence, position) pairs where ``f`` beats raw."""
    return FitnessEvaluator(training, orders).fitness(f)


def _optimize_parameter(f, evaluator, param_cfg, rng):
    """Best (formula, fitness) over restarted Nelder-Mead tuning of p.

    Formulas without a p node are returned as-is (one fitness call, no
    optimizer).  Every objective evaluation is tracked, so the result is
    at least as fit as any tried initial value.
    """
    program = compile_formula(f)
    if not (contains_parameter(f.numerator) or contains_parameter(f.denominator)):
        return f, evaluator.fitness_program(program, f.p)

    best = {"p": f.p, "fitness": evaluator.fitness_program(program, f.p)}

    def objective(x):
        value = evaluator.fitness_program(program, float(x[0]))
        if value > best["fitness"]:
            best["fitness"] = value
            best["p"] = float(x[0])
        return -value

    lo, hi = param_cfg.p_init_range
    for p0 in rng.uniform(lo, hi, param_cfg.restarts):
        minimize(objective, np.array([p0]), method="Nelder-Mead",
                 options={"maxfev": param_cfg.max_function_evals})
    if best["p"] == f.p:
        return f, best["fitness"]
    return replace(f, p=best["p"]), best["fitness"]


def optimize_parameter(f: Formula, training, orders=DEFAULT_EVALUATION_ORDERS,
                       param_config: ParamOptConfig = None,
                       rng_seed: int = 0) -> Formula:
    evaluator = FitnessEvaluator(training, orders)
    cfg = param_config if param_config is not None else ParamOptConfig()
    tuned, _ = _optimize_parameter(f, evaluator, cfg, np.random.default_rng(rng_seed))
    return tuned


def _rank_key(individuals):
    """Total order: fitness desc, then fewer nodes, then earlier index."""
    sizes = [formula_node_count(ind[0]) for ind in individuals]

    def key(i):
        return (-individuals[i][1], sizes[i], i)

    return key


def tournament_select(population, rng, tournament_size: int = 3):
    """Fittest of ``tournament_size`` members drawn with replacement.

    ``population`` is a list of (formula, fitness) pairs.  Ties go to the
    smaller tree, then to the earlier population index.
    """
    if not population:
        raise InvalidConfigError("population must be non-empty")
    draws = rng.integers(0, len(population), size=tournament_size)
    key = _rank_key(population)
    return population[min(draws, key=key)][0]


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    evals: int
    population_size: int = 0


@dataclass
class EvolutionState:
    generation: int
    population: list  # (formula, fitness) pairs
    best: tuple
    history: list


@dataclass
class EvolutionReport:
    best_formula: Formula
    train_fitness: float
    validation_fitness: float
    history: list
    generations: int
    target_reached: bool
    comparisons: int
    evals: int

    def runlog_rows(self):
        yield "generation,best_fitness,mean_fitness,evals"
        for row in self.history:
            yield (f"{row.generation},{row.best_fitness:.17g},"
                   f"{row.mean_fitness:.17g},{row.evals}")


def split_dataset(sequences, train_fraction: float, rng_seed: int):
    """Seeded shuffle then split; sizes round(f*n) and the remainder."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidConfigError(f"train_fraction {train_fraction} not in (0, 1)")
    sequences = list(sequences)
    perm = np.random.default_rng(rng_seed).permutation(len(sequences))
    n_train = int(round(train_fraction * len(sequences)))
    train = [sequences[i] for i in perm[:n_train]]
    validation = [sequences[i] for i in perm[n_train:]]
    return train, validation


def _initial_population(config, rng):
    """The seeded delta-squared formula plus ramped random formulas."""
    formulas = [aitken_seed()]
    if config.max_depth >= 2:
        depths = list(range(2, config.max_depth + 1))
    else:
        depths = [1]
    methods = ("grow", "full")
    for i in range(config.population_size - 1):
        depth = depths[i % len(depths)]
        method = methods[(i // len(depths)) % 2]
        p = float(rng.uniform(*config.param_opt.p_init_range))
        num = random_tree(depth, method, rng, config.ephemeral_constants)
        den = random_tree(depth, method, rng, config.ephemeral_constants)
        formulas.append(Formula(num, den, p))
    return formulas


def evolve(config: EvolutionConfig, training, validation) -> EvolutionReport:
    """Run the full loop and report the best formula with held-out fitness.

    Deterministic given the config (seed included): the single generator
    is consumed in a fixed order and fitness evaluation never draws from
    it.
    """
    training = list(training)
    validation = list(validation)
    if not training:
        raise InvalidConfigError("training set must be non-empty")
    train_ids = {seq.id for seq in training}
    if any(seq.id in train_ids for seq in validation):
        raise InvalidConfigError("training and validation sets overlap")

    rng = np.random.default_rng(config.rng_seed)
    evaluator = FitnessEvaluator(training, config.evaluation_orders)

    population = []
    for f in _initial_population(config, rng):
        population.append(_optimize_parameter(f, evaluator, config.param_opt, rng))

    def best_index(pop):
        return min(range(len(pop)), key=_rank_key(pop))

    def record(state):
        fits = [fit for _, fit in state.population]
        state.history.append(GenerationStats(
            generation=state.generation,
            best_fitness=state.best[1],
            mean_fitness=float(np.mean(fits)),
            evals=evaluator.evals,
            population_size=len(state.population),
        ))

    state = EvolutionState(generation=0, population=population,
                           best=population[best_index(population)], history=[])
    record(state)

    while (state.generation < config.max_generations
           and state.best[1] <= config.target_fitness):
        new_population = []
        order = sorted(range(len(state.population)),
                       key=_rank_key(state.population))
        for i in order[:config.elite_count]:
            new_population.append(state.population[i])

        while len(new_population) < config.population_size:
            parent_a = tournament_select(state.population, rng,
                                         config.tournament_size)
            parent_b = tournament_select(state.population, rng,
                                         config.tournament_size)
            if rng.random() < config.crossover_rate:
                child_a, child_b = crossover(parent_a, parent_b, rng,
                                             config.max_depth,
                                             config.ephemeral_constants)
                modified_a = modified_b = True
            else:
                child_a, child_b = parent_a, parent_b
                modified_a = modified_b = False
            if rng.random() < config.mutation_rate:
                child_a = mutate(child_a, rng, config.max_depth,
                                 config.ephemeral_constants)
                modified_a = True
            if rng.random() < config.mutation_rate:
                child_b = mutate(child_b, rng, config.max_depth,
                                 config.ephemeral_constants)
                modified_b = True

            for child, modified, parent in ((child_a, modified_a, parent_a),
                                            (child_b, modified_b, parent_b)):
                if len(new_population) >= config.population_size:
                    break
                if modified:
                    new_population.append(
                        _optimize_parameter(child, evaluator, config.param_opt,
                                            rng))
                else:
                    # Straight copy: parent's p is already tuned, reuse its
                    # fitness instead of re-evaluating.
                    parent_fit = next(fit for f, fit in state.population
                                      if f is parent)
                    new_population.append((child, parent_fit))

        state.population = new_population
        state.generation += 1
        candidate = state.population[best_index(state.population)]
        if candidate[1] > state.best[1]:
            state.best = candidate
        record(state)

    best_formula, train_fitness = state.best
    if validation:
        validation_fitness = FitnessEvaluator(
            validation, config.evaluation_orders).fitness(best_formula)
    else:
        validation_fitness = float("nan")
    return EvolutionReport(
        best_formula=best_formula,
        train_fitness=train_fitness,
        validation_fitness=validation_fitness,
        history=state.history,
        generations=state.generation,
        target_reached=train_fitness > config.target_fitness,
        comparisons=evaluator.comparisons,
        evals=evaluator.evals,
    )


def write_report(report: EvolutionReport, out_dir) -> None:
    """Best formula text, run-log CSV, and a small fitness summary."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "formula.txt").write_text(serialize(report.best_formula) + "\n")
    (out_dir / "runlog.csv").write_text("\n".join(report.runlog_rows()) + "\n")
    summary = (
        f"generations={report.generations}\n"
        f"target_reached={report.target_reached}\n"
        f"train_fitness={report.train_fitness:.17g}\n"
        f"validation_fitness={report.validation_fitness:.17g}\n"
        f"comparisons_per_fitness={report.comparisons}\n"
        f"fitness_evaluations={report.evals}\n"
    )
    (out_dir / "summary.txt").write_text(summary)
