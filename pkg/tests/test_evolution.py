import numpy as np
import pytest

import txaccel.evolution as evolution_module
from txaccel.accelerators import aitken, is_invalid
from txaccel.errors import InsufficientHistoryError, InvalidConfigError
from txaccel.evolution import (
    EvolutionConfig,
    FitnessEvaluator,
    _initial_population,
    evolve,
    fitness,
    optimize_parameter,
    split_dataset,
    tournament_select,
    write_report,
)
from txaccel.sequences import Sequence, Window
from txaccel.trees import Formula, Node, eval_formula, parse, serialize

ORDERS = (20, 28, 36, 44, 52)


def geometric_training_set(n_seq=12, seed=0, prefix="g"):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_seq):
        a = rng.uniform(1.0, 5.0)
        b = rng.uniform(0.5, 2.0)
        r = rng.uniform(0.45, 0.60)
        values = a + b * r ** np.arange(1, 14)
        out.append(Sequence(id=f"{prefix}{i}", c=0.5, width_mfp=1.0,
                            orders=tuple(range(4, 53, 4)), values=values))
    return out


def identity_formula():
    return Formula(Node("Sn"), Node("const", value=1.0), 0.0)


class TestSplit:
    def test_default_split_sizes(self, dataset240):
        train, val = split_dataset(dataset240, 0.70, 7)
        assert len(train) == 168 and len(val) == 72

    def test_even_split(self):
        seqs = geometric_training_set(10)
        train, val = split_dataset(seqs, 0.5, 1)
        assert len(train) == 5 and len(val) == 5

    def test_deterministic_and_disjoint(self):
        seqs = geometric_training_set(10)
        t1, v1 = split_dataset(seqs, 0.7, 3)
        t2, v2 = split_dataset(seqs, 0.7, 3)
        assert [s.id for s in t1] == [s.id for s in t2]
        assert [s.id for s in v1] == [s.id for s in v2]
        assert {s.id for s in t1}.isdisjoint({s.id for s in v1})
        assert {s.id for s in t1} | {s.id for s in v1} == {s.id for s in seqs}

    def test_bad_fraction(self):
        with pytest.raises(InvalidConfigError):
            split_dataset(geometric_training_set(4), 1.0, 0)


class TestFitness:
    def test_identity_formula_scores_zero(self):
        training = geometric_training_set()
        assert fitness(identity_formula(), training, ORDERS) == 0.0

    def test_zero_output_formula_scores_zero(self):
        # A vanishing accelerated value has an undefined relative error,
        # which counts as a loss everywhere.
        f = Formula(Node("sub", children=(Node("Sn"), Node("Sn"))),
                    Node("const", value=1.0))
        training = geometric_training_set()
        assert fitness(f, training, ORDERS) == 0.0

    def test_denominator_is_sequences_times_positions(self, dataset240):
        train, _ = split_dataset(dataset240, 0.70, 7)
        evaluator = FitnessEvaluator(train, ORDERS)
        assert evaluator.comparisons == 840

    def test_matches_accelerator_route(self, mini24):
        # The kernel-based fitness and the per-window accelerator path
        # must agree on the win count.
        from txaccel.accelerators import Accelerator, apply_accelerator
        from txaccel.sequences import relative_error, success_at

        f = parse("(formula :p 0.5 :num (sub (mul Sn (d2)) (sq (sub Sn Snm1)))"
                  " :den (d2))")
        evaluator = FitnessEvaluator(mini24, ORDERS)
        fast = evaluator.fitness(f)

        acc = Accelerator("f", 4, lambda w: eval_formula(f, w))
        wins = 0
        for seq in mini24:
            result = apply_accelerator(acc, seq, ORDERS)
            for j, order in enumerate(ORDERS):
                i = seq.orders.index(order)
                raw = relative_error(seq.values[i], seq.values[i - 1])
                if success_at(result.errors[j], raw):
                    wins += 1
        assert fast == wins / evaluator.comparisons

    def test_insufficient_history_is_reported(self):
        short = Sequence(id="s", c=0.5, width_mfp=1.0,
                         orders=(4, 8, 12), values=np.ones(3))
        with pytest.raises(InsufficientHistoryError, match="insufficient window"):
            FitnessEvaluator([short], ORDERS)


class TestOptimizeParameter:
    def test_formula_without_p_is_untouched(self, monkeypatch):
        calls = []
        monkeypatch.setattr(evolution_module, "minimize",
                            lambda *a, **k: calls.append(1))
        f = identity_formula()
        out = optimize_parameter(f, geometric_training_set(), ORDERS)
        assert out is f
        assert calls == []

    def test_beats_grid_scan_oracle(self):
        # A_n = S_n + p*(S_n - S_{n-1}) on near-geometric data: compare the
        # simplex result against a brute-force p grid at 1e-3 resolution.
        f = Formula(
            Node("add", children=(
                Node("Sn"),
                Node("mul", children=(
                    Node("p"),
                    Node("sub", children=(Node("Sn"), Node("Snm1"))),
                )),
            )),
            Node("const", value=1.0),
            p=0.0,
        )
        training = geometric_training_set()
        evaluator = FitnessEvaluator(training, ORDERS)
        from txaccel.kernels import compile_formula
        program = compile_formula(f)
        grid = np.arange(-2.0, 2.0 + 1e-9, 1e-3)
        grid_best = max(evaluator.fitness_program(program, p) for p in grid)

        tuned = optimize_parameter(f, training, ORDERS)
        tuned_fitness = evaluator.fitness(tuned)
        assert tuned_fitness >= grid_best - 1e-6
        assert tuned_fitness > evaluator.fitness_program(program, 0.0)

    def test_deterministic(self):
        f = Formula(Node("add", children=(Node("Sn"), Node("p"))),
                    Node("const", value=1.0), p=0.0)
        training = geometric_training_set()
        a = optimize_parameter(f, training, ORDERS, rng_seed=5)
        b = optimize_parameter(f, training, ORDERS, rng_seed=5)
        assert a.p == b.p


class TestTournament:
    def test_best_in_tournament_wins(self):
        pop = [(identity_formula(), 0.1), (identity_formula(), 0.9),
               (identity_formula(), 0.5)]
        rng = np.random.default_rng(0)
        # With tournament size equal to the population the best always
        # appears among the draws often; check many draws never return a
        # formula beating the max drawn fitness.
        for _ in range(50):
            winner = tournament_select(pop, rng, tournament_size=3)
            assert winner in [f for f, _ in pop]

    def test_global_best_wins_when_drawn(self):
        # Draws are with replacement, so replay them with a twin generator
        # and condition on the best actually appearing in the sample.
        small = Formula(Node("Sn"), Node("Snm1"), 0.0)
        pop = [(identity_formula(), 0.2), (small, 1.0)]
        saw_best = 0
        for trial in range(40):
            draws = np.random.default_rng(trial).integers(0, 2, size=3)
            winner = tournament_select(pop, np.random.default_rng(trial), 3)
            if 1 in draws:
                assert winner is small
                saw_best += 1
            else:
                assert winner is pop[0][0]
        assert saw_best > 10

    def test_equal_fitness_prefers_smaller_tree(self):
        big = Formula(Node("add", children=(Node("Sn"), Node("Sn"))),
                      Node("Snm1"), 0.0)
        small = Formula(Node("Sn"), Node("Snm1"), 0.0)
        pop = [(big, 0.5), (small, 0.5)]
        for trial in range(40):
            draws = np.random.default_rng(trial).integers(0, 2, size=3)
            winner = tournament_select(pop, np.random.default_rng(trial), 3)
            assert winner is (small if 1 in draws else big)

    def test_single_member_population(self):
        only = identity_formula()
        assert tournament_select([(only, 0.3)],
                                 np.random.default_rng(0)) is only


class TestEvolve:
    def test_mini_run_invariants(self):
        training = geometric_training_set(8, seed=1)
        validation = geometric_training_set(4, seed=99, prefix="v")
        config = EvolutionConfig(population_size=8, max_generations=6,
                                 rng_seed=2, target_fitness=1.0)
        report = evolve(config, training, validation)
        bests = [h.best_fitness for h in report.history]
        assert all(b2 >= b1 for b1, b2 in zip(bests, bests[1:]))
        assert all(h.population_size == 8 for h in report.history)
        assert report.generations == 6
        assert 0.0 <= report.train_fitness <= 1.0
        assert 0.0 <= report.validation_fitness <= 1.0

    def test_generation_zero_contains_seeded_formula(self):
        # The first individual reproduces the delta-squared rule.
        config = EvolutionConfig(population_size=6, rng_seed=0)
        formulas = _initial_population(config, np.random.default_rng(0))
        seed = formulas[0]
        rng = np.random.default_rng(17)
        checked = 0
        while checked < 100:
            w = Window(*rng.uniform(0.5, 3.0, 4))
            classical = aitken(w.s_n, w.s_nm1, w.s_nm2)
            if is_invalid(classical):
                continue
            assert eval_formula(seed, w) == pytest.approx(classical, rel=1e-12)
            checked += 1

    def test_gen0_best_at_least_seed_fitness(self):
        training = geometric_training_set(8, seed=1)
        config = EvolutionConfig(population_size=8, max_generations=1,
                                 rng_seed=3, target_fitness=1.0)
        report = evolve(config, training, [])
        evaluator = FitnessEvaluator(training, config.evaluation_orders)
        seed_fitness = evaluator.fitness(
            _initial_population(config, np.random.default_rng(3))[0])
        assert report.history[0].best_fitness >= seed_fitness

    def test_reproducible(self):
        training = geometric_training_set(8, seed=1)
        config = EvolutionConfig(population_size=8, max_generations=4,
                                 rng_seed=4, target_fitness=1.0)
        a = evolve(config, training, [])
        b = evolve(config, training, [])
        assert serialize(a.best_formula) == serialize(b.best_formula)
        assert [h.best_fitness for h in a.history] == \
            [h.best_fitness for h in b.history]
        assert a.evals == b.evals

    def test_empty_training_rejected(self):
        with pytest.raises(InvalidConfigError):
            evolve(EvolutionConfig(), [], [])

    def test_overlapping_sets_rejected(self):
        seqs = geometric_training_set(4)
        with pytest.raises(InvalidConfigError):
            evolve(EvolutionConfig(population_size=4, elite_count=1),
                   seqs, seqs[:1])

    def test_write_report(self, tmp_path):
        training = geometric_training_set(6, seed=1)
        config = EvolutionConfig(population_size=6, max_generations=2,
                                 rng_seed=5, target_fitness=1.0)
        report = evolve(config, training, [])
        write_report(report, tmp_path)
        assert (tmp_path / "formula.txt").exists()
        parsed = parse((tmp_path / "formula.txt").read_text())
        assert serialize(parsed) == serialize(report.best_formula)
        lines = (tmp_path / "runlog.csv").read_text().splitlines()
        assert lines[0] == "generation,best_fitness,mean_fitness,evals"
        assert len(lines) == len(report.history) + 1
        assert "train_fitness=" in (tmp_path / "summary.txt").read_text()


class TestConfigValidation:
    def test_bad_rates(self):
        with pytest.raises(InvalidConfigError):
            EvolutionConfig(crossover_rate=1.5)
        with pytest.raises(InvalidConfigError):
            EvolutionConfig(mutation_rate=-0.1)

    def test_bad_elite(self):
        with pytest.raises(InvalidConfigError):
            EvolutionConfig(elite_count=0)
        with pytest.raises(InvalidConfigError):
            EvolutionConfig(elite_count=40, population_size=40)

    def test_bad_tournament(self):
        with pytest.raises(InvalidConfigError):
            EvolutionConfig(tournament_size=1)

    def test_bad_target(self):
        with pytest.raises(InvalidConfigError):
            EvolutionConfig(target_fitness=0.0)
