use crate::Scalar;

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Status<S> {
    Optimal,
    /// Incumbent found but the gap tolerance was not reached (node limit).
    Feasible(S),
    Infeasible,
    Unbounded,
    /// Wall-clock limit hit; carries the relative gap (infinite when no
    /// incumbent was found).
    TimeLimit(S),
}

#[derive(Debug, Clone)]
pub struct MilpSolution<S> {
    pub status: Status<S>,
    /// One value per model variable; empty when no incumbent exists.
    pub values: Vec<S>,
    pub objective: S,
    pub best_bound: S,
    pub relative_gap: S,
    pub node_count: u64,
    pub elapsed_seconds: f64,
}

impl<S: Scalar> MilpSolution<S> {
    pub fn infeasible() -> Self {
        MilpSolution {
            status: Status::Infeasible,
            values: Vec::new(),
            objective: S::nan(),
            best_bound: S::nan(),
            relative_gap: S::infinity(),
            node_count: 0,
            elapsed_seconds: 0.0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// True when an incumbent assignment is available.
    pub fn has_values(&self) -> bool {
        !self.values.is_empty()
    }
}

/// Relative gap as used throughout the solver.
pub fn relative_gap<S: Scalar>(objective: S, bound: S) -> S {
    let denom = objective.abs().max(S::from_f64(1e-10).unwrap());
    (objective - bound).abs() / denom
}

/// Variable selection rule for branching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchRule {
    MostFractional,
    FirstFractional,
}

/// Open-node selection rule for the branch-and-bound tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSelection {
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub integrality_tolerance: f64,
    pub feasibility_tolerance: f64,
    pub relative_gap_tolerance: f64,
    /// Wall-clock limit in seconds; `f64::INFINITY` disables it.
    pub time_limit_seconds: f64,
    pub node_limit: u64,
    pub branch_rule: BranchRule,
    pub node_selection: NodeSelection,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            integrality_tolerance: 1e-6,
            feasibility_tolerance: 1e-7,
            relative_gap_tolerance: 1e-4,
            time_limit_seconds: f64::INFINITY,
            node_limit: u64::MAX,
            branch_rule: BranchRule::MostFractional,
            node_selection: NodeSelection::BestBound,
        }
    }
}

impl SolverConfig {
    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit_seconds = seconds;
        self
    }
}
