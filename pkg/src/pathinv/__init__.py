"""Globally path-invariant hybrid control of a kinematic car-like robot."""

from .curve import Circle, Curve, GraphCurve, Neighborhood, check_feasibility, curvature, eval_implicit, make_curve, poly, project, sinusoid, tangent_angle
from .errors import (
    BudgetExhausted,
    CurvatureInfeasible,
    EmptyPlan,
    HeadingViolation,
    NonFiniteState,
    NonUniqueProjection,
    NotInFlowOrJumpSet,
    NotInNeighborhood,
    PathInvError,
    ScenarioError,
    Singularity,
    StartInCollision,
    SteeringLimit,
)
from .global_ctrl import PurePursuit, PurePursuitConfig, kappa1
from .local_ctrl import BarrierConfig, FiniteTimeGains, LocalController, SpeedReference, kappa0, kappa_xi, qp_filter
from .planner import GoalSet, MotionPlan, ObstacleSet, PlannerConfig, plan, validate_plan
from .scenario import Scenario, bundled, from_dict, load
from .supervisor import HybridState, HybridTrace, SupervisorSets, jump_map, run_algorithm1, step_hybrid, summarize
from .tfl import decoupling_matrix, from_transverse_on_path, kappa_fb, lie_derivatives, to_transverse, virtual_output
from .vehicle import AuxInput, CarInput, CarParams, car_dynamics, extended_dynamics, integrate, rk4_step

__version__ = "0.1.0"
