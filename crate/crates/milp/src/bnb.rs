//! Best-bound branch-and-bound over LP relaxations.
//!
//! Node selection dives depth-first until a first incumbent exists, then
//! follows the configured rule. All ties are broken by index, so a given
//! (model, config) pair always produces the same solution.

use crate::model::{MilpModel, Sense};
use crate::simplex::solve_lp;
use crate::solution::{relative_gap, BranchRule, MilpSolution, NodeSelection, SolverConfig, Status};
use crate::{MilpError, Scalar};

struct Node<S> {
    /// (variable, lower, upper) bound overrides accumulated on the path.
    bound_changes: Vec<(usize, S, S)>,
    /// LP bound of the parent (used for ordering before this node is solved).
    bound: S,
    id: u64,
    depth: u32,
}

pub fn solve_mip<S: Scalar>(
    model: &MilpModel<S>,
    cfg: &SolverConfig,
) -> Result<MilpSolution<S>, MilpError> {
    model.validate()?;
    let start = std::time::Instant::now();
    let minimize = model.sense == Sense::Minimize;
    let int_tol = S::from_f64(cfg.integrality_tolerance).unwrap();
    let gap_tol = S::from_f64(cfg.relative_gap_tolerance).unwrap();

    // Work on a scratch model whose bounds are rewritten per node.
    let mut scratch = model.clone();

    let root = solve_lp(model, cfg)?;
    match root.status {
        Status::Infeasible => return Ok(MilpSolution::infeasible()),
        Status::Unbounded => return Ok(root),
        _ => {}
    }

    let mut incumbent: Option<(Vec<S>, S)> = None;
    let mut node_count: u64 = 1;

    // Internally compare in "minimize" orientation.
    let key = |obj: S| if minimize { obj } else { -obj };

    if let Some(sol) = integral_candidate(model, &root.values, int_tol, cfg) {
        // Root LP already integral (or rounds to a feasible point).
        let all_integral = fractional_vars(model, &root.values, int_tol).is_empty();
        if all_integral {
            return Ok(MilpSolution {
                status: Status::Optimal,
                values: root.values,
                objective: root.objective,
                best_bound: root.objective,
                relative_gap: S::zero(),
                node_count,
                elapsed_seconds: start.elapsed().as_secs_f64(),
            });
        }
        incumbent = Some(sol);
    } else if incumbent.is_none() {
        incumbent = fix_and_repair(model, &mut scratch, &root.values, &[], cfg);
    }

    let mut open: Vec<Node<S>> = Vec::new();
    let mut next_id: u64 = 1;
    push_children(
        model,
        &root.values,
        root.objective,
        &[],
        int_tol,
        cfg.branch_rule,
        &mut open,
        &mut next_id,
        0,
    );
    let root_bound = root.objective;

    let mut limit_hit = false;
    while !open.is_empty() {
        if start.elapsed().as_secs_f64() > cfg.time_limit_seconds || node_count >= cfg.node_limit {
            limit_hit = true;
            break;
        }
        // Global bound from the open list (and prune against the incumbent).
        if let Some((_, inc_obj)) = &incumbent {
            let inc_key = key(*inc_obj);
            open.retain(|n| key(n.bound) < inc_key - S::from_f64(1e-9).unwrap());
            if open.is_empty() {
                break;
            }
            let best_open = open
                .iter()
                .map(|n| key(n.bound))
                .fold(S::infinity(), S::min);
            let bound = best_open.min(key(root_bound));
            if relative_gap(key(*inc_obj), bound) <= gap_tol {
                break;
            }
        }

        let pick = select_node(&open, cfg.node_selection, incumbent.is_some(), key);
        let node = open.swap_remove(pick);
        node_count += 1;

        for &(var, lo, hi) in &node.bound_changes {
            scratch.variables[var].lower = lo;
            scratch.variables[var].upper = hi;
        }
        let lp = solve_lp(&scratch, cfg);
        // Restore bounds before handling the result.
        for &(var, _, _) in &node.bound_changes {
            scratch.variables[var].lower = model.variables[var].lower;
            scratch.variables[var].upper = model.variables[var].upper;
        }
        let lp = lp?;
        if lp.status == Status::Infeasible {
            continue;
        }
        let node_bound = lp.objective;
        if let Some((_, inc_obj)) = &incumbent {
            if key(node_bound) >= key(*inc_obj) - S::from_f64(1e-9).unwrap() {
                continue;
            }
        }
        let fracs = fractional_vars(model, &lp.values, int_tol);
        if fracs.is_empty() {
            let better = match &incumbent {
                None => true,
                Some((_, inc_obj)) => key(node_bound) < key(*inc_obj),
            };
            if better {
                incumbent = Some((lp.values, node_bound));
            }
            continue;
        }
        if let Some(cand) = integral_candidate(model, &lp.values, int_tol, cfg) {
            let better = match &incumbent {
                None => true,
                Some((_, inc_obj)) => key(cand.1) < key(*inc_obj),
            };
            if better {
                incumbent = Some(cand);
            }
        } else if incumbent.is_none() {
            // No incumbent yet: fix the discrete variables at their rounded
            // values and re-solve the LP for the continuous part. One extra
            // LP per node is far cheaper than diving to full depth.
            if let Some(cand) =
                fix_and_repair(model, &mut scratch, &lp.values, &node.bound_changes, cfg)
            {
                incumbent = Some(cand);
            }
        }
        push_children(
            model,
            &lp.values,
            node_bound,
            &node.bound_changes,
            int_tol,
            cfg.branch_rule,
            &mut open,
            &mut next_id,
            node.depth + 1,
        );
    }

    let elapsed = start.elapsed().as_secs_f64();
    match incumbent {
        None => {
            if limit_hit {
                Ok(MilpSolution {
                    status: Status::TimeLimit(S::infinity()),
                    values: Vec::new(),
                    objective: S::nan(),
                    best_bound: root_bound,
                    relative_gap: S::infinity(),
                    node_count,
                    elapsed_seconds: elapsed,
                })
            } else {
                Ok(MilpSolution::infeasible())
            }
        }
        Some((values, objective)) => {
            let best_open = open
                .iter()
                .map(|n| key(n.bound))
                .fold(S::infinity(), S::min);
            let bound_key = best_open.min(key(objective));
            let gap = relative_gap(key(objective), bound_key);
            let best_bound = if minimize { bound_key } else { -bound_key };
            let status = if limit_hit && gap > gap_tol {
                Status::TimeLimit(gap)
            } else if gap > gap_tol {
                Status::Feasible(gap)
            } else {
                Status::Optimal
            };
            Ok(MilpSolution {
                status,
                values,
                objective,
                best_bound,
                relative_gap: gap,
                node_count,
                elapsed_seconds: elapsed,
            })
        }
    }
}

fn fractional_vars<S: Scalar>(model: &MilpModel<S>, values: &[S], int_tol: S) -> Vec<(usize, S)> {
    let mut out = Vec::new();
    for (i, v) in model.variables.iter().enumerate() {
        if v.kind.is_discrete() {
            let x = values[i];
            let frac = (x - x.round()).abs();
            if frac > int_tol {
                out.push((i, frac));
            }
        }
    }
    out
}

/// Round an LP point to the integer grid and keep it if it stays feasible.
fn integral_candidate<S: Scalar>(
    model: &MilpModel<S>,
    values: &[S],
    int_tol: S,
    cfg: &SolverConfig,
) -> Option<(Vec<S>, S)> {
    let _ = int_tol;
    let mut rounded = values.to_vec();
    for (i, v) in model.variables.iter().enumerate() {
        if v.kind.is_discrete() {
            rounded[i] = rounded[i].round().max(v.lower).min(v.upper);
        }
    }
    let viol = model.max_violation(&rounded);
    if viol <= S::from_f64(cfg.feasibility_tolerance).unwrap() {
        let obj = model.objective_value(&rounded);
        Some((rounded, obj))
    } else {
        None
    }
}

/// Fix every discrete variable at its rounded value (clamped to the node's
/// bounds) and solve the remaining LP. Returns a feasible integral point if
/// the fixed problem is feasible.
fn fix_and_repair<S: Scalar>(
    model: &MilpModel<S>,
    scratch: &mut MilpModel<S>,
    values: &[S],
    bound_changes: &[(usize, S, S)],
    cfg: &SolverConfig,
) -> Option<(Vec<S>, S)> {
    // Two candidate roundings: a plain round, and a round-up biased one that
    // lifts anything above 0.3 (helps covering-style constraints where the
    // relaxation spreads mass thinly).
    let thresholds = [S::from_f64(0.5).unwrap(), S::from_f64(0.3).unwrap()];
    let mut best: Option<(Vec<S>, S)> = None;
    let minimize = model.sense == crate::model::Sense::Minimize;
    for &th in &thresholds {
        for &(var, lo, hi) in bound_changes {
            scratch.variables[var].lower = lo;
            scratch.variables[var].upper = hi;
        }
        let mut fixed = Vec::new();
        for (i, v) in model.variables.iter().enumerate() {
            if v.kind.is_discrete() {
                let f = values[i].floor();
                let x = (if values[i] - f > th { f + S::one() } else { f })
                    .max(scratch.variables[i].lower)
                    .min(scratch.variables[i].upper);
                fixed.push(i);
                scratch.variables[i].lower = x;
                scratch.variables[i].upper = x;
            }
        }
        let lp = solve_lp(scratch, cfg);
        for &i in &fixed {
            scratch.variables[i].lower = model.variables[i].lower;
            scratch.variables[i].upper = model.variables[i].upper;
        }
        for &(var, _, _) in bound_changes {
            scratch.variables[var].lower = model.variables[var].lower;
            scratch.variables[var].upper = model.variables[var].upper;
        }
        let lp = match lp {
            Ok(lp) => lp,
            Err(_) => continue,
        };
        if lp.status == Status::Infeasible || lp.status == Status::Unbounded {
            continue;
        }
        let viol = model.max_violation(&lp.values);
        if viol > S::from_f64(cfg.feasibility_tolerance).unwrap() {
            continue;
        }
        let obj = model.objective_value(&lp.values);
        let better = match &best {
            None => true,
            Some((_, b)) => {
                if minimize {
                    obj < *b
                } else {
                    obj > *b
                }
            }
        };
        if better {
            best = Some((lp.values, obj));
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn push_children<S: Scalar>(
    model: &MilpModel<S>,
    values: &[S],
    bound: S,
    parent_changes: &[(usize, S, S)],
    int_tol: S,
    rule: BranchRule,
    open: &mut Vec<Node<S>>,
    next_id: &mut u64,
    depth: u32,
) {
    let fracs = fractional_vars(model, values, int_tol);
    let &(var, _) = match rule {
        BranchRule::FirstFractional => match fracs.first() {
            Some(f) => f,
            None => return,
        },
        BranchRule::MostFractional => {
            // Distance to the nearest integer, ties to the lowest index.
            match fracs.iter().max_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .unwrap()
                    .then(b.0.cmp(&a.0))
            }) {
                Some(f) => f,
                None => return,
            }
        }
    };
    let x = values[var];
    let floor = x.floor();
    let ceil = x.ceil();
    let lo = model.variables[var].lower;
    let hi = model.variables[var].upper;

    let mut down = parent_changes.to_vec();
    down.push((var, lo, floor));
    let mut up = parent_changes.to_vec();
    up.push((var, ceil, hi));

    // Push the child nearer the fractional value last so diving visits it first.
    let down_first = x - floor <= ceil - x;
    let (first, second) = if down_first { (down, up) } else { (up, down) };
    open.push(Node {
        bound_changes: first,
        bound,
        id: *next_id,
        depth,
    });
    *next_id += 1;
    open.push(Node {
        bound_changes: second,
        bound,
        id: *next_id,
        depth,
    });
    *next_id += 1;
}

fn select_node<S: Scalar>(
    open: &[Node<S>],
    rule: NodeSelection,
    have_incumbent: bool,
    key: impl Fn(S) -> S,
) -> usize {
    if rule == NodeSelection::DepthFirst || !have_incumbent {
        // Deepest, most recently created node.
        let mut best = 0;
        for (i, n) in open.iter().enumerate() {
            let b = &open[best];
            if (n.depth, n.id) > (b.depth, b.id) {
                best = i;
            }
        }
        return best;
    }
    let mut best = 0;
    for (i, n) in open.iter().enumerate() {
        let b = &open[best];
        let kn = key(n.bound);
        let kb = key(b.bound);
        if kn < kb || (kn == kb && n.id < b.id) {
            best = i;
        }
    }
    best
}
