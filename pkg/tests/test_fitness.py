import numpy as np
import pytest

from modsynth import fixtures, se3
from modsynth.evolve import GaConfig, decode, init_population
from modsynth.fitness import (
    EQUAL,
    GREATER,
    LESS,
    CostWeights,
    EvalOptions,
    FitnessVector,
    ModelCache,
    cached_evaluate,
    evaluate,
    f1_reach_upper_bound,
    f2_reachable_goals,
    f3_collision_free_goals,
    f4_cost,
    lex_compare,
    module_reach,
)
from modsynth.geometry import CollisionPrimitive, Scene
from modsynth.kinematics import IkOptions, Pose, fk
from modsynth.modlib import assemble
from modsynth.planner import PlanOptions
from modsynth.tasks import Goal, Task, Tolerances, tolerance_preset


def _fast_opts():
    return EvalOptions(
        ik=IkOptions(max_restarts=6, max_iters=80),
        plan=PlanOptions(timeout_s=1.0, iterations_per_s=200, edge_resolution=0.02,
                         dt=0.02, dt_check=0.05, shortcut_iters=50),
    )


def _task_at(points, tol=None, scene=None, orientations=None):
    goals = []
    for i, p in enumerate(points):
        n = np.array([1.0, 0, 0, 0]) if orientations is None else orientations[i]
        goals.append(Goal(Pose(p=np.asarray(p, dtype=float), n=n), id=f"g{i}"))
    return Task(goals=tuple(goals), tol=tol or tolerance_preset("sphere_like"),
                scene=scene or Scene())


class TestF1:
    def test_reach_sufficient(self, arm6):
        task = _task_at([(1.5, 0, 0.3)])
        assert f1_reach_upper_bound(arm6, task) == 1

    def test_reach_insufficient(self, arm6):
        task = _task_at([(3.0, 0, 0.3)])
        assert f1_reach_upper_bound(arm6, task) == 0

    def test_threshold_is_sum_of_module_spans(self, arm6):
        total = sum(module_reach(m) for m in arm6.modules)
        assert f1_reach_upper_bound(arm6, _task_at([(total - 1e-6, 0, 0)])) == 1
        assert f1_reach_upper_bound(arm6, _task_at([(total + 1e-3, 0, 0)])) == 0

    def test_goals_measured_from_base_frame(self, arm6):
        task = Task(
            goals=(Goal(Pose(p=np.array([5.0, 0, 0.3]), n=np.array([1.0, 0, 0, 0]))),),
            tol=tolerance_preset("sphere_like"),
            base_pose=se3.translation(4.0, 0.0, 0.0),
        )
        assert f1_reach_upper_bound(arm6, task) == 1

    def test_prismatic_reach_matches_sampling_oracle(self, mixed_lib):
        slider = mixed_lib.module(9)
        got = module_reach(slider)
        # independent oracle: sample the slide range, distance is
        # housing + output + extension at full stroke
        best = 0.0
        for q in np.linspace(0.0, 0.25, 101):
            best = max(best, 0.15 + 0.10 + q)
        assert np.isclose(got, best, atol=1e-12)

    def test_revolute_module_reach(self, small_lib):
        # pitch joint: distal never exceeds the stacked height
        assert np.isclose(module_reach(small_lib.module(3)), 0.22, atol=1e-9)
        assert np.isclose(module_reach(small_lib.module(4)), 0.3, atol=1e-12)


class TestF2F3:
    def test_fk_generated_goals_all_reachable(self, arm6, rng):
        qs = [arm6.clamp(rng.uniform(-1.2, 1.2, 6)) for _ in range(3)]
        task = Task(goals=tuple(Goal(fk(arm6, q), id=str(i)) for i, q in enumerate(qs)),
                    tol=tolerance_preset("arbitrary"))
        assert f2_reachable_goals(arm6, task, seed=0) == 3

    def test_unreachable_goal_not_counted(self, arm6):
        task = _task_at([(0.5, 0, 0.5), (4.0, 0, 0.5)])
        assert f2_reachable_goals(arm6, task, seed=0, opts=IkOptions(max_iters=80)) == 1

    def test_f3_equals_f2_without_obstacles(self, arm6, rng):
        qs = [arm6.clamp(rng.uniform(-1.0, 1.0, 6)) for _ in range(2)]
        task = Task(goals=tuple(Goal(fk(arm6, q), id=str(i)) for i, q in enumerate(qs)),
                    tol=tolerance_preset("arbitrary"))
        assert f3_collision_free_goals(arm6, task, seed=5) == f2_reachable_goals(
            arm6, task, seed=5
        )

    def test_pocket_goal_counted_by_f2_not_f3(self, planar2):
        """Goal reachable only through colliding poses, proven by an
        exhaustive grid over the 2-DoF joint box at 0.01 rad."""
        target = np.array([0.45, 0.0, 0.70])
        box = CollisionPrimitive("box", se3.transform(translation=target), (0.05, 0.05, 0.05))
        tol = Tolerances(phi=np.pi, t_axis=(1, 1, 1), t_p=1e-3)
        task = Task(goals=(Goal(Pose(p=target, n=np.array([1.0, 0, 0, 0])), id="g"),),
                    tol=tol, scene=Scene((box,)))

        # independent planar-trig oracle over the whole joint box
        shoulder_z = 0.27
        l1, l2 = 0.52, 0.20
        q1 = np.arange(-2.4, 2.4 + 1e-9, 0.01)
        q2 = np.arange(-2.4, 2.4 + 1e-9, 0.01)
        g1, g2 = np.meshgrid(q1, q2, indexing="ij")
        elbow_x = l1 * np.sin(g1)
        elbow_z = shoulder_z + l1 * np.cos(g1)
        tip_x = elbow_x + l2 * np.sin(g1 + g2)
        tip_z = elbow_z + l2 * np.cos(g1 + g2)
        dist = np.sqrt((tip_x - target[0]) ** 2 + (tip_z - target[2]) ** 2)
        reaching = dist <= tol.t_p
        assert reaching.any(), "goal must be reachable ignoring collisions"
        # every reaching config has its TCP at least 0.04 inside the box,
        # so its end-effector geometry must intersect the obstacle
        inside_x = 0.05 - np.abs(tip_x[reaching] - target[0])
        inside_z = 0.05 - np.abs(tip_z[reaching] - target[2])
        assert np.min(np.minimum(inside_x, inside_z)) >= 0.04

        opts = IkOptions(max_restarts=12)
        assert f2_reachable_goals(planar2, task, seed=3, opts=opts) == 1
        assert f3_collision_free_goals(planar2, task, seed=3, opts=opts) == 0

    def test_f3_never_exceeds_f2(self, small_lib, rng):
        population = init_population(small_lib, GaConfig(population=12, seed=21))
        opts = IkOptions(max_restarts=3, max_iters=50)
        checked = 0
        for i, genes in enumerate(population):
            assembly = decode(small_lib, genes)
            points = rng.uniform([-1, -1, 0.1], [1, 1, 1.2], size=(2, 3))
            task = _task_at([tuple(p) for p in points], tol=tolerance_preset("sphere_like"),
                            scene=Scene((CollisionPrimitive(
                                "sphere", se3.transform(translation=points[0]), (0.08,)),)))
            f2 = f2_reachable_goals(assembly, task, seed=i, opts=opts)
            f3 = f3_collision_free_goals(assembly, task, seed=i, opts=opts)
            assert f3 <= f2
            checked += 1
        assert checked == 12


class TestF4:
    def test_cost_arithmetic(self):
        w = CostWeights()
        assert np.isclose(w.cost(6, 9, 3.1), 10.9)
        assert np.isclose(-w.cost(6, 9, 3.1), -10.9)

    def test_weight_sweep_form(self):
        # C_T(w_J) = w_J * n_J + (5 - w_J) * t_max
        for w_j in range(6):
            w = CostWeights(c_J=float(w_j), c_M=0.0, c_t=float(5 - w_j))
            assert np.isclose(w.cost(4, 7, 2.5), w_j * 4 + (5 - w_j) * 2.5)

    def test_infeasible_returns_neg_inf(self, arm6):
        task = _task_at([(4.0, 0, 0.5)])
        opts = _fast_opts()
        assert f4_cost(arm6, task, opts=opts.plan, seed=0) == -np.inf

    def test_feasible_returns_negative_cost(self, arm6, rng):
        q = arm6.clamp(rng.uniform(-0.8, 0.8, 6))
        task = Task(goals=(Goal(fk(arm6, q), id="g"),), tol=tolerance_preset("sphere_like"))
        value = f4_cost(arm6, task, opts=_fast_opts().plan, seed=1)
        assert np.isfinite(value)
        # setup cost alone: 6 joints + 0.2 * 10 modules = 8
        assert value < -8.0

    def test_validation(self):
        with pytest.raises(ValueError):
            CostWeights(w_s=-1.0)
        with pytest.raises(ValueError):
            CostWeights(w_s=0.0, w_p=0.0)


class TestEvaluate:
    def test_too_short_arm_stops_at_depth_1(self, small_lib):
        shorty = assemble(small_lib, (1, 3, 6))
        task = _task_at([(1.5, 0, 0.3)])
        fv = evaluate(shorty, task, seed=0)
        assert fv.evaluated_depth == 1
        assert fv.f1 == 0 and fv.f2 is None and fv.f3 is None and fv.f4 is None
        assert len(fv.stage_times) == 1

    def test_unreachable_goal_stops_at_depth_2(self, arm6):
        # within the length bound but inside the workspace hole near the base
        task = _task_at([(0.02, 0.0, 0.05)], tol=tolerance_preset("arbitrary"))
        fv = evaluate(arm6, task, opts=_fast_opts(), seed=0)
        assert fv.evaluated_depth == 2
        assert fv.f2 == 0

    def test_blocked_goal_stops_at_depth_3(self, planar2):
        target = np.array([0.45, 0.0, 0.70])
        box = CollisionPrimitive("box", se3.transform(translation=target), (0.05, 0.05, 0.05))
        tol = Tolerances(phi=np.pi, t_axis=(1, 1, 1), t_p=1e-3)
        task = Task(goals=(Goal(Pose(p=target, n=np.array([1.0, 0, 0, 0])), id="g"),),
                    tol=tol, scene=Scene((box,)))
        opts = EvalOptions(
            ik=IkOptions(max_restarts=16, max_iters=120),
            plan=PlanOptions(timeout_s=1.0, iterations_per_s=200),
        )
        fv = evaluate(planar2, task, opts=opts, seed=3)
        assert fv.evaluated_depth == 3
        assert fv.f2 == 1 and fv.f3 == 0

    def test_feasible_task_reaches_depth_4(self, arm6, rng):
        q = arm6.clamp(rng.uniform(-0.8, 0.8, 6))
        task = Task(goals=(Goal(fk(arm6, q), id="g"),), tol=tolerance_preset("sphere_like"))
        fv = evaluate(arm6, task, opts=_fast_opts(), seed=2)
        assert fv.evaluated_depth == 4
        assert fv.feasible
        assert len(fv.stage_times) == 4

    def test_dominance_soundness(self, small_lib, rng):
        """If planning succeeds for A and fails for B under the same seed,
        A's fitness must strictly exceed B's."""
        import dataclasses
        from modsynth.modlib import Body, ModuleLibrary

        # B: same arm but with joint torque limits too weak to hold gravity
        weak_mods = []
        for m in small_lib:
            joints = tuple(dataclasses.replace(j, tau_max=0.45) for j in m.joints)
            weak_mods.append(dataclasses.replace(m, joints=joints))
        weak_lib = ModuleLibrary(weak_mods)
        strong = assemble(small_lib, fixtures.ARM6_IDS)
        weak = assemble(weak_lib, fixtures.ARM6_IDS)

        q = strong.clamp(rng.uniform(-0.7, 0.7, 6))
        task = Task(goals=(Goal(fk(strong, q), id="g"),), tol=tolerance_preset("sphere_like"))
        opts = _fast_opts()
        fv_a = evaluate(strong, task, opts=opts, seed=4)
        fv_b = evaluate(weak, task, opts=opts, seed=4)
        assert fv_a.feasible
        assert fv_b.evaluated_depth == 4 and fv_b.f4 == -np.inf
        assert lex_compare(fv_a, fv_b) == GREATER


class TestLexCompare:
    def test_examples(self):
        a = FitnessVector(f1=1, f2=3, f3=2, evaluated_depth=3)
        b = FitnessVector(f1=1, f2=3, f3=3, f4=-10.9, evaluated_depth=4)
        assert lex_compare(a, b) == LESS
        assert lex_compare(b, a) == GREATER
        assert lex_compare(FitnessVector(f1=0), FitnessVector(f1=1, f2=2, evaluated_depth=2)) == LESS
        c = FitnessVector(f1=1, f2=3, f3=3, f4=-10.9, evaluated_depth=4)
        assert lex_compare(b, c) == EQUAL

    def test_early_stop_compares_at_deciding_index(self):
        shallow = FitnessVector(f1=1, f2=2, evaluated_depth=2)
        deep = FitnessVector(f1=1, f2=3, f3=1, evaluated_depth=3)
        assert lex_compare(shallow, deep) == LESS
        same_stage = FitnessVector(f1=1, f2=2, evaluated_depth=2)
        assert lex_compare(shallow, same_stage) == EQUAL

    def test_neg_inf_f4_still_beats_depth_3(self):
        stuck = FitnessVector(f1=1, f2=3, f3=2, evaluated_depth=3)
        planned_out = FitnessVector(f1=1, f2=3, f3=3, f4=-np.inf, evaluated_depth=4)
        assert lex_compare(planned_out, stuck) == GREATER

    def _random_vector(self, rng, n_goals=3):
        depth = rng.integers(1, 5)
        if depth == 1:
            return FitnessVector(f1=0)
        f2 = int(rng.integers(0, n_goals + 1))
        if depth == 2:
            return FitnessVector(f1=1, f2=min(f2, n_goals - 1), evaluated_depth=2)
        f3 = int(rng.integers(0, f2 + 1)) if f2 else 0
        if depth == 3:
            return FitnessVector(f1=1, f2=n_goals, f3=min(f3, n_goals - 1),
                                 evaluated_depth=3)
        f4 = -np.inf if rng.random() < 0.2 else float(-rng.uniform(1, 30))
        return FitnessVector(f1=1, f2=n_goals, f3=n_goals, f4=f4, evaluated_depth=4)

    def test_total_preorder_laws(self, rng):
        vectors = [self._random_vector(rng) for _ in range(60)]
        for a in vectors:
            assert lex_compare(a, a) == EQUAL
        for _ in range(3000):
            a, b, c = (vectors[rng.integers(len(vectors))] for _ in range(3))
            ab, ba = lex_compare(a, b), lex_compare(b, a)
            assert ab == -ba
            if ab == LESS and lex_compare(b, c) == LESS:
                assert lex_compare(a, c) == LESS
            if ab == EQUAL and lex_compare(b, c) == EQUAL:
                assert lex_compare(a, c) == EQUAL


class TestModelCache:
    def test_hits_and_misses(self, small_lib):
        cache = ModelCache(capacity=10)
        a1 = cache.get_or_build(small_lib, fixtures.ARM6_IDS)
        a2 = cache.get_or_build(small_lib, fixtures.ARM6_IDS)
        assert a1 is a2
        assert cache.hits == 1 and cache.misses == 1

    def test_lru_eviction(self, small_lib):
        cache = ModelCache(capacity=3)
        sequences = [(1, 4, 3, 6), (1, 3, 6), (1, 5, 3, 6), (1, 3, 4, 3, 6)]
        for ids in sequences:
            cache.get_or_build(small_lib, ids)
        assert len(cache) == 3
        # the first sequence was evicted; rebuilding it is a miss
        misses = cache.misses
        cache.get_or_build(small_lib, sequences[0])
        assert cache.misses == misses + 1

    def test_capacity_zero_equivalent(self, small_lib, rng):
        task = _task_at([(0.6, 0.1, 0.8)])
        opts = _fast_opts()
        fv_cached = cached_evaluate(ModelCache(1000), small_lib, fixtures.ARM6_IDS,
                                    task, opts=opts, seed=9)
        fv_plain = cached_evaluate(ModelCache(0), small_lib, fixtures.ARM6_IDS,
                                   task, opts=opts, seed=9)
        assert fv_cached.key() == fv_plain.key()
        assert fv_cached.evaluated_depth == fv_plain.evaluated_depth

    def test_invariant_f3_le_f2_in_vectors(self):
        fv = FitnessVector(f1=1, f2=3, f3=3, f4=-12.0, evaluated_depth=4)
        assert fv.f3 <= fv.f2
        assert fv.feasible


class TestEarlyStopConsistency:
    def test_ordering_equivalent_to_full_depth(self, small_lib, rng):
        """Early-stopped vectors order pairs exactly like forced full
        evaluation wherever the early-stop comparison is decided."""
        from modsynth.seeding import derive_seed

        population = init_population(small_lib, GaConfig(population=10, seed=31))
        probe = assemble(small_lib, (1, 3, 4, 3, 6))
        task = Task(goals=(Goal(fk(probe, np.array([0.6, 0.3])), id="g"),),
                    tol=tolerance_preset("sphere_like"))
        opts = _fast_opts()

        early = []
        full = []
        for i, genes in enumerate(population):
            assembly = decode(small_lib, genes)
            seed = derive_seed(0, "eval", 0, i)
            early.append(evaluate(assembly, task, opts=opts, seed=seed))
            # force every stage with the same stage seeds
            goal_seed = derive_seed(seed, "goals")
            f1 = f1_reach_upper_bound(assembly, task)
            f2 = f2_reachable_goals(assembly, task, seed=goal_seed, opts=opts.ik)
            f3 = f3_collision_free_goals(assembly, task, seed=goal_seed, opts=opts.ik)
            f4 = f4_cost(assembly, task, opts=opts.plan, seed=derive_seed(seed, "f4"))
            full.append((f1, f2, f3, f4))

        for i in range(len(population)):
            for j in range(len(population)):
                verdict = lex_compare(early[i], early[j])
                if verdict == EQUAL:
                    continue  # undecided pairs may differ at deeper stages
                assert (full[i] > full[j]) == (verdict == GREATER), (i, j)

    def test_f1_zero_is_sound_upper_bound(self, small_lib, rng):
        """A single-goal task failing f1 must also fail f2 when forced."""
        population = init_population(small_lib, GaConfig(population=10, seed=32))
        opts = IkOptions(max_restarts=3, max_iters=50)
        seen = 0
        for i, genes in enumerate(population):
            assembly = decode(small_lib, genes)
            from modsynth.fitness import assembly_reach

            far = assembly_reach(assembly) + 0.05
            task = _task_at([(far, 0.0, 0.0)])
            assert f1_reach_upper_bound(assembly, task) == 0
            assert f2_reachable_goals(assembly, task, seed=i, opts=opts) == 0
            seen += 1
        assert seen == 10
