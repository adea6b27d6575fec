import os
import tempfile
import unittest

import numpy as np
import pandas as pd

import diffusion_engine
from diffusion_engine import (
    MAX_MEMORY_CAPACITY,
    AgentRole,
    DefenderBasis,
    FlipRule,
    InfoPiece,
    SimParams,
    TickStats,
    Valence,
    agent_counts,
    init_simulation,
    round_half_away,
    run_simulation,
    run_to_completion,
    step,
    write_time_series_csv,
)
from simulation_errors import ParameterError, SimulationStateError
from small_world_network import Network


def certain_params(**changes):
    values = dict(n_h=1, alpha1=0.0, p_g=1.0, p_c=1.0, p_p=1.0, threshold_t=2, max_ticks=10, seed=0)
    values.update(changes)
    return SimParams(**values)


class TestAgentCounts(unittest.TestCase):
    def test_round_half_away_from_zero(self):
        self.assertEqual(round_half_away(2.5), 3)
        self.assertEqual(round_half_away(-2.5), -3)
        self.assertEqual(round_half_away(0.5), 1)
        self.assertEqual(round_half_away(0.1 * 3 * 10), 3)

    def test_counts_on_bad_bot_basis(self):
        counts = agent_counts(SimParams(n_h=1000, alpha1=0.2, alpha2=0.15, alpha3=0.0125))
        self.assertEqual((counts.humans, counts.bad_bots, counts.info_correction_bots, counts.good_bots),
                         (1000, 200, 30, 3))
        self.assertEqual(counts.total, 1233)

    def test_counts_on_human_basis(self):
        params = SimParams(n_h=1000, alpha1=0.2, alpha2=0.0125, alpha3=0.5, defender_basis=DefenderBasis.HUMANS)
        counts = agent_counts(params)
        self.assertEqual((counts.info_correction_bots, counts.good_bots), (13, 500))

    def test_initial_roles_match_counts(self):
        params = SimParams(n_h=100, alpha1=0.3, alpha2=0.5, alpha3=0.2, mean_degree=4, seed=3)
        state = init_simulation(params)
        self.assertEqual(state.role_histogram, (100, 30, 6, 15))
        self.assertEqual(state.bad_humans, 0)
        self.assertEqual(state.network.node_count, 151)


class TestValidation(unittest.TestCase):
    def test_probability_out_of_range_names_field(self):
        with self.assertRaises(ParameterError) as ctx:
            SimParams(p_c=1.5).validate()
        self.assertEqual(ctx.exception.field, "p_c")

    def test_negative_ratio(self):
        with self.assertRaises(ParameterError) as ctx:
            SimParams(alpha2=-0.1).validate()
        self.assertEqual(ctx.exception.field, "alpha2")

    def test_memory_capacity_bounds(self):
        params = SimParams(n_h=40, alpha1=0.2, alpha3=2.0, mean_degree=6, max_ticks=100, seed=1)
        for capacity in (0, -3, MAX_MEMORY_CAPACITY + 1):
            with self.subTest(memory_capacity=capacity):
                with self.assertRaises(ParameterError) as ctx:
                    init_simulation(params.replace(memory_capacity=capacity))
                self.assertEqual(ctx.exception.field, "memory_capacity")

    def test_disengagement_threshold_values(self):
        self.assertIsNone(SimParams(disengagement_threshold=None).validate().disengagement_threshold)
        for value in (0, 2.5, True):
            with self.assertRaises(ParameterError) as ctx:
                SimParams(disengagement_threshold=value).validate()
            self.assertEqual(ctx.exception.field, "disengagement_threshold")

    def test_too_few_agents(self):
        with self.assertRaises(ParameterError):
            init_simulation(SimParams(n_h=1, alpha1=0.0))

    def test_roles_without_humans(self):
        network = Network.from_edges(2, [(0, 1)])
        with self.assertRaises(ParameterError):
            init_simulation(certain_params(), network=network, roles=[AgentRole.BAD_BOT, AgentRole.GOOD_BOT])

    def test_network_size_mismatch(self):
        with self.assertRaises(ParameterError):
            init_simulation(certain_params(), network=Network.from_edges(3, []),
                            roles=[AgentRole.BAD_BOT, AgentRole.HUMAN])

    def test_dict_round_trip(self):
        params = SimParams(alpha1=0.4, flip_rule=FlipRule.NET, defender_basis=DefenderBasis.HUMANS, seed=9)
        self.assertEqual(SimParams.from_dict(params.to_dict()), params)
        with self.assertRaises(ParameterError) as ctx:
            SimParams.from_dict({"flip_rule": "sideways"})
        self.assertEqual(ctx.exception.field, "flip_rule")


class TestHandTraces(unittest.TestCase):
    def test_bad_bot_converts_lone_human(self):
        # tick 1: bot posts 2 Bad pieces; tick 2: the human consumes both and flips
        state = init_simulation(certain_params(), network=Network.from_edges(2, [(0, 1)]),
                                roles=[AgentRole.BAD_BOT, AgentRole.HUMAN])
        stats = step(state)
        self.assertEqual((stats.bad_generated, stats.good_generated), (2, 1))
        self.assertEqual(state.bad_humans, 0)
        self.assertEqual(state.agent(1).inbox_prev, (InfoPiece(Valence.BAD, 0), InfoPiece(Valence.BAD, 0)))
        self.assertEqual(state.agent(1).human_state.state, Valence.GOOD)
        self.assertIsNone(state.agent(0).human_state)

        stats = step(state)
        self.assertEqual(stats.bad_consumed, 2)
        # echo suppression: each side only ever heard from the other
        self.assertEqual((stats.good_relayed, stats.bad_relayed), (0, 0))
        self.assertEqual(state.outcome.bad_majority_tick, 2)
        self.assertEqual(state.outcome.all_bad_tick, 2)
        self.assertTrue(state.terminated)
        with self.assertRaises(SimulationStateError):
            step(state)

    def test_isolated_human_never_flips(self):
        state = init_simulation(certain_params(max_ticks=5), network=Network.from_edges(2, []),
                                roles=[AgentRole.BAD_BOT, AgentRole.HUMAN])
        outcome = run_to_completion(state, check_invariants=True)
        self.assertIsNone(outcome.bad_majority_tick)
        self.assertIsNone(outcome.all_bad_tick)
        self.assertEqual(outcome.ticks_run, 5)
        self.assertEqual(outcome.final_good_humans, 1)

    def test_info_correction_bot_rewrites_bad_to_good(self):
        # path bad bot - info-correction bot - human: the human only ever sees Good
        network = Network.from_edges(3, [(0, 1), (1, 2)])
        state = init_simulation(certain_params(max_ticks=6), network=network,
                                roles=[AgentRole.BAD_BOT, AgentRole.INFO_CORRECTION_BOT, AgentRole.HUMAN])
        run_to_completion(state, check_invariants=True)
        self.assertEqual(int(state.bad_consumed[2]), 0)
        self.assertGreater(int(state.good_consumed[2]), 0)
        self.assertEqual(state.bad_humans, 0)

    def test_flip_rules_differ_on_mixed_exposure(self):
        for rule, expect_bad in ((FlipRule.GROSS, True), (FlipRule.NET, False)):
            state = init_simulation(certain_params(flip_rule=rule, threshold_t=5),
                                    network=Network.from_edges(2, [(0, 1)]),
                                    roles=[AgentRole.GOOD_BOT, AgentRole.HUMAN])
            state.bad_consumed[1] = 5
            state.good_consumed[1] = 4
            diffusion_engine._update_states(state)
            self.assertEqual(bool(state.is_bad[1]), expect_bad)
            if expect_bad:
                self.assertEqual((int(state.bad_consumed[1]), int(state.good_consumed[1])), (0, 0))

    def test_disengaged_humans_skip_good_pieces(self):
        # path good bot - human - human; human 1 relays what the bot posts only while engaged
        network = Network.from_edges(3, [(0, 1), (1, 2)])
        roles = [AgentRole.GOOD_BOT, AgentRole.HUMAN, AgentRole.HUMAN]
        for limit, on_edge in ((4, 1), (None, 3)):
            with self.subTest(disengagement_threshold=limit):
                state = init_simulation(certain_params(threshold_t=5, disengagement_threshold=limit),
                                        network=network, roles=roles)
                self.assertEqual(state.disengaged, limit is not None)
                for _ in range(3):
                    step(state)
                edge = int(np.flatnonzero((state.edge_src == 1) & (state.edge_dst == 2))[0])
                self.assertEqual(int(state.inbox_prev[edge, diffusion_engine.GOOD]), on_edge)
                if limit is None:
                    self.assertGreater(int(state.good_consumed[1]), 0)
                else:
                    self.assertEqual(int(state.good_consumed.sum()), 0)


class TestRuns(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_no_bad_bots_runs_to_cap(self):
        params = SimParams(n_h=40, alpha1=0.0, alpha3=0.5, defender_basis=DefenderBasis.HUMANS,
                           mean_degree=4, max_ticks=15, seed=2)
        outcome, history = run_simulation(params, check_invariants=True)
        self.assertIsNone(outcome.bad_majority_tick)
        self.assertIsNone(outcome.all_bad_tick)
        self.assertEqual(outcome.ticks_run, 15)
        self.assertEqual(len(history), 15)
        self.assertTrue(all(s.bad_generated == 0 and s.bad_relayed == 0 for s in history))

    def test_same_seed_same_run(self):
        params = SimParams(n_h=60, alpha1=0.5, alpha2=0.3, mean_degree=6, max_ticks=30, seed=11)
        first = run_simulation(params)
        second = run_simulation(params)
        self.assertEqual(first[0], second[0])
        self.assertEqual(first[1], second[1])

    def test_outcome_ordering_and_counts(self):
        params = SimParams(n_h=50, alpha1=1.0, mean_degree=6, threshold_t=3, max_ticks=60, seed=4)
        outcome, history = run_simulation(params, check_invariants=True)
        self.assertEqual(outcome.ticks_run, len(history))
        self.assertEqual(outcome.final_good_humans + outcome.final_bad_humans, 50)
        if outcome.all_bad_tick is not None:
            self.assertIsNotNone(outcome.bad_majority_tick)
            self.assertLessEqual(outcome.bad_majority_tick, outcome.all_bad_tick)
            self.assertEqual(outcome.ticks_run, outcome.all_bad_tick)

    def test_receive_buffers_stay_near_capacity(self):
        params = SimParams(n_h=200, alpha1=0.2, alpha3=0.5, max_ticks=40, memory_capacity=20, seed=5)
        state = init_simulation(params)
        while not state.terminated:
            step(state)
            received = np.bincount(state.edge_dst, weights=state.inbox_prev.sum(axis=1), minlength=state.agent_count)
            self.assertLessEqual(received.max(), 3 * params.memory_capacity)
            self.assertLessEqual(int(state.good_consumed.max() + state.bad_consumed.max()), 2 * 3 * 20 * state.tick)

    def test_largest_capacity_does_not_overflow(self):
        params = SimParams(n_h=40, alpha1=0.2, alpha3=2.0, mean_degree=6, max_ticks=100,
                           memory_capacity=MAX_MEMORY_CAPACITY, seed=1)
        state = init_simulation(params)
        outcome = run_to_completion(state, check_invariants=True)
        self.assertLessEqual(outcome.ticks_run, 100)
        self.assertGreaterEqual(int(state.inbox_prev.min()), 0)

    def test_time_series_csv(self):
        params = SimParams(n_h=30, alpha1=0.2, mean_degree=4, max_ticks=8, seed=1)
        _, history = run_simulation(params)
        path = os.path.join(self.tmpdir.name, "timeseries.csv")
        write_time_series_csv(history, path)
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), list(TickStats.TIME_SERIES_COLUMNS))
        self.assertEqual(frame["tick"].tolist(), list(range(1, len(history) + 1)))
        self.assertTrue(((frame["good_humans"] + frame["bad_humans"]) == 30).all())


class TestInvariantSuite(unittest.TestCase):
    def test_invariants_hold_on_random_small_configurations(self):
        rng = np.random.default_rng(2024)
        for case in range(1000):
            n_h = int(rng.integers(3, 51))
            params = SimParams(
                n_h=n_h,
                alpha1=float(rng.choice([0.0, rng.uniform(0, 1)])),
                alpha2=float(rng.choice([0.0, rng.uniform(0, 1.5)])),
                alpha3=float(rng.choice([0.0, rng.uniform(0, 2.0)])),
                defender_basis=DefenderBasis.HUMANS if rng.random() < 0.3 else DefenderBasis.BAD_BOTS,
                p_g=float(rng.uniform(0, 1)),
                p_c=float(rng.uniform(0, 1)),
                p_p=float(rng.uniform(0, 1)),
                threshold_t=int(rng.integers(1, 20)),
                max_ticks=int(rng.integers(1, 31)),
                mean_degree=int(rng.choice([2, 4])),
                beta=float(rng.uniform(0, 0.5)),
                graph_model="erdos_renyi" if rng.random() < 0.1 else "watts_strogatz",
                flip_rule=FlipRule.NET if rng.random() < 0.5 else FlipRule.GROSS,
                echo_suppression=bool(rng.random() < 0.8),
                memory_capacity=int(rng.choice([1, 5, 20, 10000])),
                disengagement_threshold=[None, 74, int(rng.integers(1, 20))][int(rng.integers(0, 3))],
                seed=case,
            )
            if params.mean_degree >= agent_counts(params).total:
                params = params.replace(mean_degree=2)
            with self.subTest(case=case):
                state = init_simulation(params)
                outcome = run_to_completion(state, check_invariants=True)
                self.assertLessEqual(outcome.ticks_run, params.max_ticks)
                self.assertEqual(state.role_histogram, tuple(np.bincount(state.roles, minlength=4)))


if __name__ == '__main__':
    unittest.main()
