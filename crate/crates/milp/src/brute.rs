//! Exhaustive enumeration oracle for small models.
//!
//! Discrete variables are enumerated depth-first with interval-based pruning;
//! at each leaf the remaining continuous part is solved as an LP. Intended for
//! tests only — refuses models with more than [`MAX_DISCRETE`] discrete
//! variables.

use crate::model::{MilpModel, RowSense, Sense};
use crate::simplex::solve_lp;
use crate::solution::{MilpSolution, SolverConfig, Status};
use crate::{MilpError, Scalar};

pub const MAX_DISCRETE: usize = 20;

pub fn brute_force<S: Scalar>(
    model: &MilpModel<S>,
    cfg: &SolverConfig,
) -> Result<MilpSolution<S>, MilpError> {
    model.validate()?;
    let discrete: Vec<usize> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind.is_discrete())
        .map(|(i, _)| i)
        .collect();
    if discrete.len() > MAX_DISCRETE {
        return Err(MilpError::TooManyDiscrete {
            count: discrete.len(),
            limit: MAX_DISCRETE,
        });
    }
    for &i in &discrete {
        let v = &model.variables[i];
        if !v.upper.is_finite() {
            return Err(MilpError::Malformed(format!(
                "variable {i}: discrete variables must have finite bounds for enumeration"
            )));
        }
    }

    let minimize = model.sense == Sense::Minimize;
    let key = move |obj: S| if minimize { obj } else { -obj };
    let mut scratch = model.clone();
    let mut best: Option<MilpSolution<S>> = None;
    let mut assignment: Vec<S> = Vec::with_capacity(discrete.len());
    enumerate(
        model,
        &mut scratch,
        cfg,
        &discrete,
        &mut assignment,
        &key,
        &mut best,
    )?;
    Ok(best.unwrap_or_else(MilpSolution::infeasible))
}

#[allow(clippy::too_many_arguments)]
fn enumerate<S: Scalar>(
    model: &MilpModel<S>,
    scratch: &mut MilpModel<S>,
    cfg: &SolverConfig,
    discrete: &[usize],
    assignment: &mut Vec<S>,
    key: &impl Fn(S) -> S,
    best: &mut Option<MilpSolution<S>>,
) -> Result<(), MilpError> {
    let depth = assignment.len();
    if !partial_feasible(model, discrete, assignment, cfg) {
        return Ok(());
    }
    if depth == discrete.len() {
        let lp = solve_lp(scratch, cfg)?;
        if lp.status == Status::Optimal {
            let replace = match best {
                None => true,
                Some(b) => key(lp.objective) < key(b.objective),
            };
            if replace {
                *best = Some(lp);
            }
        }
        return Ok(());
    }
    let var = discrete[depth];
    let lo = model.variables[var].lower.ceil();
    let hi = model.variables[var].upper.floor();
    let mut val = lo;
    while val <= hi {
        scratch.fix_var(var, val);
        assignment.push(val);
        enumerate(model, scratch, cfg, discrete, assignment, key, best)?;
        assignment.pop();
        val = val + S::one();
    }
    scratch.variables[var].lower = model.variables[var].lower;
    scratch.variables[var].upper = model.variables[var].upper;
    Ok(())
}

/// Interval propagation over the partially fixed prefix: prune when some
/// constraint cannot be satisfied for any completion within bounds.
fn partial_feasible<S: Scalar>(
    model: &MilpModel<S>,
    discrete: &[usize],
    assignment: &[S],
    cfg: &SolverConfig,
) -> bool {
    let tol = S::from_f64(cfg.feasibility_tolerance).unwrap();
    let fixed_value = |var: usize| -> Option<S> {
        discrete
            .iter()
            .position(|&d| d == var)
            .filter(|&p| p < assignment.len())
            .map(|p| assignment[p])
    };
    for c in &model.constraints {
        let mut lo = S::zero();
        let mut hi = S::zero();
        for &(var, coeff) in &c.terms {
            if coeff == S::zero() {
                continue;
            }
            let (l, u) = match fixed_value(var) {
                Some(v) => (v, v),
                None => (model.variables[var].lower, model.variables[var].upper),
            };
            if coeff >= S::zero() {
                lo = lo + coeff * l;
                hi = hi + coeff * u;
            } else {
                lo = lo + coeff * u;
                hi = hi + coeff * l;
            }
        }
        let ok = match c.sense {
            RowSense::Le => lo <= c.rhs + tol,
            RowSense::Ge => hi >= c.rhs - tol,
            RowSense::Eq => lo <= c.rhs + tol && hi >= c.rhs - tol,
        };
        if !ok {
            return false;
        }
    }
    true
}
