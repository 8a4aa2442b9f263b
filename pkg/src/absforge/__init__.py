"""absforge: verify and repair QNP abstractions of generalized planning problems."""

from .pddl import (
    GpDomain,
    GpInstance,
    GroundAction,
    GroundState,
    Plan,
    apply_action,
    applicable,
    bounded_goal_reachable,
    ground_actions,
    holds_goal,
    parse_domain,
    parse_instance,
    validate_plan,
)
from .features import eval_count, eval_feature, eval_formula, parse_count, parse_formula
from .qnp import QnpAction, QnpProblem, QState, parse_qnp, format_qnp
from .solver import SolveBudget, SolveStatus, execute_policy_q, sieve_terminates, solve, verify_policy
from .refinement import (
    Abstraction,
    RefinementMapping,
    abstract_goal,
    abstract_state,
    check_hl_instance,
    is_refinement,
    to_qstate,
    transition_consistent,
)
from .pipeline import (
    DebugReport,
    PipelineBudgets,
    Stage,
    build_refined_tree,
    execute_refined_policy,
    render_prompt,
    run_asc,
    run_hlisc,
    run_llgrc,
    run_pipeline,
)
from .proposer import (
    AbstractionDoc,
    ProposerConfig,
    make_proposer,
    parse_abstraction_doc,
    validate_doc,
)
from .harness import RunConfig, RunRecord, evaluate_abstraction, report, run_loop

__version__ = "0.1.0"
