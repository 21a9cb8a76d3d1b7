import numpy as np
import pytest

from modsynth import fixtures
from modsynth.baseline import (
    BaselineWeights,
    baseline_fitness,
    eliminate,
    run_baseline,
)
from modsynth.evolve import GaConfig, decode
from modsynth.fitness import EvalOptions, f3_collision_free_goals
from modsynth.kinematics import IkOptions, Pose, fk, ik_detailed, manipulability
from modsynth.modlib import assemble
from modsynth.planner import PlanOptions, solve_task
from modsynth.seeding import derive_seed
from modsynth.tasks import Goal, Task, tolerance_preset


def _fast_opts():
    return EvalOptions(
        ik=IkOptions(max_restarts=4, max_iters=60),
        plan=PlanOptions(timeout_s=1.0, iterations_per_s=200, edge_resolution=0.02,
                         dt=0.02, dt_check=0.05, shortcut_iters=40),
    )


def _three_goal_task(arm6, rng):
    qs = [arm6.clamp(rng.uniform(-0.9, 0.9, 6)) for _ in range(3)]
    return Task(goals=tuple(Goal(fk(arm6, q), id=str(i)) for i, q in enumerate(qs)),
                tol=tolerance_preset("sphere_like"))


class TestEliminate:
    def test_keeps_capable_assembly(self, arm6, rng):
        task = _three_goal_task(arm6, rng)
        assert eliminate(arm6, task, seed=0, opts=IkOptions(max_iters=80))

    def test_drops_short_arm(self, small_lib, rng, arm6):
        task = _three_goal_task(arm6, rng)
        shorty = assemble(small_lib, (1, 3, 6))
        assert not eliminate(shorty, task, seed=0, opts=IkOptions(max_restarts=4))

    def test_agrees_with_f3_on_tested_goals(self, arm6, rng):
        task = _three_goal_task(arm6, rng)
        opts = IkOptions(max_iters=80)
        for seed in range(3):
            first_last = Task(goals=(task.goals[0], task.goals[-1]), tol=task.tol,
                              scene=task.scene, base_pose=task.base_pose)
            # same per-goal seed stream as fitness: full agreement expected
            agrees = f3_collision_free_goals(arm6, first_last, seed=seed, opts=opts) == 2
            assert eliminate(arm6, task, seed=seed, opts=opts) == agrees


class TestBaselineFitness:
    def test_formula_matches_independent_recomputation(self, arm6, rng):
        """Spreadsheet-style oracle: recompute every criterion from the
        same IK witnesses and apply the formula by hand."""
        task = _three_goal_task(arm6, rng)
        weights = BaselineWeights(0.0, 1.0, 1.0, 0.0, 0.1, 0.5, 0.1, 1.0)
        opts = IkOptions(max_iters=80)
        seed = 3
        got = baseline_fitness(arm6, task, weights=weights, seed=seed, opts=opts)

        results = [
            ik_detailed(arm6, g.pose, task.tol_for(i), opts=opts,
                        rng_seed=derive_seed(seed, "ik", i))
            for i, g in enumerate(task.goals)
        ]
        linear = sum(r.pos_err for r in results)
        angular = sum(r.ang_err for r in results)
        travel = sum(float(np.abs(results[i + 1].q - results[i].q).sum())
                     for i in range(2))
        frac = sum(r.success for r in results) / 3
        expected = np.exp(-(1.0 * linear + 1.0 * angular + 0.1 * arm6.n_modules
                            + 0.5 * arm6.n_joints + 0.1 * travel)) + 1.0 * frac
        assert abs(got - expected) <= 1e-12

    def test_all_zero_criteria_give_one_plus_k8(self):
        # formula-level identity: e^0 = 1
        w = BaselineWeights()
        value = np.exp(-0.0) + w.k8 * 1.0
        assert value == 1.0 + w.k8

    def test_more_joints_lower_exponential(self, small_lib, arm6, rng):
        task = _three_goal_task(arm6, rng)
        # k6 only: fitness decreases with joint count, all else ignored
        weights = BaselineWeights(0, 0, 0, 0, 0, 0.5, 0, 0)
        opts = IkOptions(max_restarts=3, max_iters=40)
        small_arm = assemble(small_lib, (1, 3, 4, 3, 6))
        f_small = baseline_fitness(small_arm, task, weights=weights, seed=0, opts=opts)
        f_big = baseline_fitness(arm6, task, weights=weights, seed=0, opts=opts)
        assert f_small == np.exp(-0.5 * 2)
        assert f_big == np.exp(-0.5 * 6)
        assert f_big < f_small

    def test_bounds(self, arm6, rng):
        task = _three_goal_task(arm6, rng)
        w = BaselineWeights()
        value = baseline_fitness(arm6, task, weights=w, seed=1,
                                 opts=IkOptions(max_restarts=3, max_iters=50))
        assert 0.0 < value <= 1.0 + w.k8

    def test_pluggable_reliability_term(self, arm6, rng):
        task = _three_goal_task(arm6, rng)
        w = BaselineWeights(k1=1.0, k2=0, k3=0, k4=0, k5=0, k6=0, k7=0, k8=0)
        opts = IkOptions(max_restarts=2, max_iters=40)
        base = baseline_fitness(arm6, task, weights=w, seed=0, opts=opts)
        shifted = baseline_fitness(arm6, task, weights=w, seed=0, opts=opts,
                                   reliability=lambda a, t: 2.0)
        assert np.isclose(base, 1.0)
        assert np.isclose(shifted, np.exp(-2.0))

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            BaselineWeights(k1=-0.1)
        with pytest.raises(ValueError):
            BaselineWeights(0, 0, 0, 0, 0, 0, 0, 0)


class TestRunBaseline:
    def test_smoke_feasible_task(self, small_lib):
        probe = assemble(small_lib, (1, 3, 4, 3, 6))
        goal_pose = fk(probe, np.array([0.5, 0.4]))
        task = Task(goals=(Goal(goal_pose, id="g"),), tol=tolerance_preset("sphere_like"))
        config = GaConfig(population=8, generations=4, seed=2)
        result = run_baseline(small_lib, task, config=config, eval_opts=_fast_opts())
        assert len(result.stage2) <= 25
        assert len({tuple(e.module_ids) for e in result.stage2}) == len(result.stage2)
        assert result.best_trajectory is not None
        assert result.best_cost is not None
        # second stage feasibility flags agree with independent re-solves
        opts = _fast_opts()
        for rank, entry in enumerate(result.stage2[:5]):
            assembly = assemble(small_lib, entry.module_ids)
            traj = solve_task(assembly, task, opts.plan,
                              seed=derive_seed(config.seed, "stage2", rank))
            assert (traj is not None) == entry.solved
            if entry.solved:
                assert np.isclose(entry.t_max, traj.t_max)

    def test_no_solution_outcome(self, small_lib):
        probe = assemble(small_lib, (1, 3, 4, 3, 6))
        goal_pose = fk(probe, np.array([0.5, 0.4]))
        far = Pose(p=goal_pose.p + np.array([9.0, 0, 0]), n=goal_pose.n)
        task = Task(goals=(Goal(far, id="g"),), tol=tolerance_preset("sphere_like"))
        config = GaConfig(population=6, generations=2, seed=0)
        result = run_baseline(small_lib, task, config=config, eval_opts=_fast_opts())
        assert result.best_trajectory is None
        assert result.best_cost is None
        assert result.stage2 == []

    def test_deterministic(self, small_lib):
        probe = assemble(small_lib, (1, 3, 4, 3, 6))
        goal_pose = fk(probe, np.array([0.5, 0.4]))
        task = Task(goals=(Goal(goal_pose, id="g"),), tol=tolerance_preset("sphere_like"))
        config = GaConfig(population=6, generations=3, seed=9)
        r1 = run_baseline(small_lib, task, config=config, eval_opts=_fast_opts())
        r2 = run_baseline(small_lib, task, config=config, eval_opts=_fast_opts())
        assert r1.best_genes == r2.best_genes
        assert r1.best_cost == r2.best_cost
        assert [e.module_ids for e in r1.stage2] == [e.module_ids for e in r2.stage2]
