"""Task-optimal serial modular-manipulator synthesis.

A lexicographic genetic algorithm composes robot modules into serial
manipulators, ranks candidates by staged feasibility objectives with
early-stop pruning, and plans full trajectories for the survivors.
"""

from .errors import (
    ConnectorMismatch,
    DimensionMismatch,
    EmptyPath,
    InitFailure,
    InvalidEndpoint,
    InvalidStructure,
    ModsynthError,
    Unsatisfiable,
)
from .geometry import CollisionPrimitive, Scene, in_collision, occupied_space
from .kinematics import AxisAngle, IkOptions, Pose, fk, ik, jacobian, rot
from .modlib import (
    Assembly,
    Body,
    Connector,
    ConnectorType,
    JointSpec,
    Module,
    ModuleLibrary,
    assemble,
    can_connect,
    count_compositions,
    mutation_candidates,
)
from .dynamics import DynState, inverse_dynamics, torque_feasible
from .tasks import (
    Goal,
    Task,
    Tolerances,
    all_goals_reached,
    generate_synthetic1,
    generate_synthetic2,
    plausibly_solvable,
    reached,
    tolerance_preset,
)
from .planner import Path, PlanOptions, Trajectory, plan_path, solve_task, time_parameterize
from .fitness import (
    CostWeights,
    EvalOptions,
    FitnessVector,
    ModelCache,
    cached_evaluate,
    evaluate,
    lex_compare,
)
from .evolve import GaConfig, RunHistory, RunResult, decode, run
from .baseline import BaselineWeights, baseline_fitness, eliminate, run_baseline

__version__ = "0.1.0"
