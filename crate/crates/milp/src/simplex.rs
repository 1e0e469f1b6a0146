//! Two-phase primal simplex on a dense tableau.
//!
//! The model is brought to standard computational form (shifted variables,
//! explicit upper-bound rows, slack/artificial columns). Dantzig pricing is
//! used first; the solver falls back to Bland's rule after a fixed number of
//! iterations so that termination is guaranteed.

use crate::model::{MilpModel, RowSense, Sense};
use crate::solution::{MilpSolution, SolverConfig, Status};
use crate::{MilpError, Scalar};

const PIVOT_TOL: f64 = 1e-9;

/// Solve the LP relaxation of `model` (integrality marks are ignored).
pub fn solve_lp<S: Scalar>(
    model: &MilpModel<S>,
    cfg: &SolverConfig,
) -> Result<MilpSolution<S>, MilpError> {
    model.validate()?;
    let start = std::time::Instant::now();
    let mut sol = solve_lp_inner(model, cfg)?;
    sol.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(sol)
}

fn solve_lp_inner<S: Scalar>(
    model: &MilpModel<S>,
    cfg: &SolverConfig,
) -> Result<MilpSolution<S>, MilpError> {
    let feas_tol = S::from_f64(cfg.feasibility_tolerance).unwrap();
    let n = model.num_vars();

    // Presolve: variables with equal bounds are fixed and substituted out.
    let mut fixed = vec![None; n];
    let mut col_of = vec![usize::MAX; n];
    let mut var_of_col = Vec::new();
    for (i, v) in model.variables.iter().enumerate() {
        if v.upper.is_finite() && v.upper - v.lower <= S::zero() {
            fixed[i] = Some(v.lower);
        } else {
            col_of[i] = var_of_col.len();
            var_of_col.push(i);
        }
    }
    let ns = var_of_col.len();

    // Objective over shifted structural columns plus a constant part.
    let minimize = model.sense == Sense::Minimize;
    let mut obj = vec![S::zero(); ns];
    let mut obj_const = S::zero();
    for &(v, c) in &model.objective {
        let c = if minimize { c } else { -c };
        match fixed[v] {
            Some(val) => obj_const = obj_const + c * val,
            None => {
                obj[col_of[v]] = obj[col_of[v]] + c;
                obj_const = obj_const + c * model.variables[v].lower;
            }
        }
    }

    // Rows in standard form over the shifted variables.
    struct Row<S> {
        terms: Vec<(usize, S)>,
        sense: RowSense,
        rhs: S,
    }
    let mut rows: Vec<Row<S>> = Vec::new();
    for c in &model.constraints {
        let mut rhs = c.rhs;
        let mut terms: Vec<(usize, S)> = Vec::new();
        for &(v, coeff) in &c.terms {
            match fixed[v] {
                Some(val) => rhs = rhs - coeff * val,
                None => {
                    rhs = rhs - coeff * model.variables[v].lower;
                    if let Some(t) = terms.iter_mut().find(|(j, _)| *j == col_of[v]) {
                        t.1 = t.1 + coeff;
                    } else {
                        terms.push((col_of[v], coeff));
                    }
                }
            }
        }
        terms.retain(|(_, c)| c.abs() > S::from_f64(PIVOT_TOL).unwrap() * S::from_f64(1e-3).unwrap());
        if terms.is_empty() {
            let ok = match c.sense {
                RowSense::Le => -rhs <= feas_tol,
                RowSense::Ge => rhs <= feas_tol,
                RowSense::Eq => rhs.abs() <= feas_tol,
            };
            if !ok {
                return Ok(MilpSolution::infeasible());
            }
            continue;
        }
        rows.push(Row {
            terms,
            sense: c.sense,
            rhs,
        });
    }
    // Upper bounds become rows after the lower-bound shift.
    for (j, &v) in var_of_col.iter().enumerate() {
        let ub = model.variables[v].upper - model.variables[v].lower;
        if ub.is_finite() {
            rows.push(Row {
                terms: vec![(j, S::one())],
                sense: RowSense::Le,
                rhs: ub,
            });
        }
    }

    if ns == 0 {
        // Everything fixed; rows were checked above.
        let values: Vec<S> = fixed.iter().map(|f| f.unwrap()).collect();
        let objective = model.objective_value(&values);
        return Ok(MilpSolution {
            status: Status::Optimal,
            values,
            objective,
            best_bound: objective,
            relative_gap: S::zero(),
            node_count: 0,
            elapsed_seconds: 0.0,
        });
    }

    // Normalize rhs >= 0 and attach slack / artificial columns.
    let m = rows.len();
    let mut n_slack = 0usize;
    for r in &mut rows {
        if r.rhs < S::zero() {
            r.rhs = -r.rhs;
            for t in &mut r.terms {
                t.1 = -t.1;
            }
            r.sense = match r.sense {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
        if r.sense != RowSense::Eq {
            n_slack += 1;
        }
    }
    let n_art = rows
        .iter()
        .filter(|r| !matches!(r.sense, RowSense::Le))
        .count();
    let ncols = ns + n_slack + n_art;
    let width = ncols + 1; // last column is the rhs
    let mut tab = vec![S::zero(); (m + 1) * width]; // last row is the objective
    let mut basis = vec![0usize; m];
    let art_start = ns + n_slack;

    let mut slack_idx = ns;
    let mut art_idx = art_start;
    for (i, r) in rows.iter().enumerate() {
        let row = &mut tab[i * width..(i + 1) * width];
        for &(j, c) in &r.terms {
            row[j] = c;
        }
        row[ncols] = r.rhs;
        match r.sense {
            RowSense::Le => {
                row[slack_idx] = S::one();
                basis[i] = slack_idx;
                slack_idx += 1;
            }
            RowSense::Ge => {
                row[slack_idx] = -S::one();
                slack_idx += 1;
                row[art_idx] = S::one();
                basis[i] = art_idx;
                art_idx += 1;
            }
            RowSense::Eq => {
                row[art_idx] = S::one();
                basis[i] = art_idx;
                art_idx += 1;
            }
        }
    }

    let mut iters_left: u64 = 200_000 + 200 * (m as u64 + ncols as u64);
    let dantzig_budget: u64 = 20_000 + 20 * (m as u64 + ncols as u64);

    // Phase 1: drive the artificial variables to zero.
    if n_art > 0 {
        set_objective_row(&mut tab, m, width, ncols, &basis, &|j| {
            if j >= art_start {
                S::one()
            } else {
                S::zero()
            }
        });
        let res = run_simplex(
            &mut tab,
            m,
            width,
            ncols,
            &mut basis,
            ncols, // all columns may enter in phase 1
            &mut iters_left,
            dantzig_budget,
        );
        if res == SimplexOutcome::IterationLimit {
            return Err(MilpError::Numerical(
                "simplex iteration limit exceeded in phase 1".into(),
            ));
        }
        let phase1_obj = -tab[m * width + ncols];
        if phase1_obj > feas_tol {
            return Ok(MilpSolution::infeasible());
        }
        // Pivot basic artificials out so they cannot re-grow in phase 2.
        // A row with no non-artificial coefficient is redundant and its
        // artificial stays pinned at zero by construction.
        let tol = S::from_f64(PIVOT_TOL).unwrap();
        for i in 0..m {
            if basis[i] >= art_start {
                if let Some(q) = (0..art_start).find(|&j| tab[i * width + j].abs() > tol) {
                    pivot(&mut tab, m, width, ncols, i, q);
                    basis[i] = q;
                }
            }
        }
    }

    // Phase 2 over the original objective; artificial columns may not enter.
    set_objective_row(&mut tab, m, width, ncols, &basis, &|j| {
        if j < ns {
            obj[j]
        } else {
            S::zero()
        }
    });
    let res = run_simplex(
        &mut tab,
        m,
        width,
        ncols,
        &mut basis,
        art_start, // artificials excluded
        &mut iters_left,
        dantzig_budget,
    );
    match res {
        SimplexOutcome::Unbounded => {
            return Ok(MilpSolution {
                status: Status::Unbounded,
                values: Vec::new(),
                objective: if minimize {
                    S::neg_infinity()
                } else {
                    S::infinity()
                },
                best_bound: S::nan(),
                relative_gap: S::infinity(),
                node_count: 0,
                elapsed_seconds: 0.0,
            })
        }
        SimplexOutcome::IterationLimit => {
            return Err(MilpError::Numerical(
                "simplex iteration limit exceeded in phase 2".into(),
            ))
        }
        SimplexOutcome::Optimal => {}
    }

    // Recover the point in original variable space.
    let mut shifted = vec![S::zero(); ns];
    for (i, &b) in basis.iter().enumerate() {
        if b < ns {
            shifted[b] = tab[i * width + ncols];
        }
    }
    let mut values = vec![S::zero(); n];
    for (i, f) in fixed.iter().enumerate() {
        match f {
            Some(val) => values[i] = *val,
            None => values[i] = model.variables[i].lower + shifted[col_of[i]],
        }
    }
    let objective = model.objective_value(&values);
    Ok(MilpSolution {
        status: Status::Optimal,
        values,
        objective,
        best_bound: objective,
        relative_gap: S::zero(),
        node_count: 0,
        elapsed_seconds: 0.0,
    })
}

fn set_objective_row<S: Scalar>(
    tab: &mut [S],
    m: usize,
    width: usize,
    ncols: usize,
    basis: &[usize],
    cost: &dyn Fn(usize) -> S,
) {
    // Reduced-cost row: z_j = c_j - sum_i c_B[i] * T[i][j].
    let obj_row_start = m * width;
    for j in 0..=ncols {
        tab[obj_row_start + j] = if j < ncols { cost(j) } else { S::zero() };
    }
    for i in 0..m {
        let cb = cost(basis[i]);
        if cb != S::zero() {
            for j in 0..=ncols {
                let t = tab[i * width + j];
                tab[obj_row_start + j] = tab[obj_row_start + j] - cb * t;
            }
        }
    }
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum SimplexOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

#[allow(clippy::too_many_arguments)]
fn run_simplex<S: Scalar>(
    tab: &mut [S],
    m: usize,
    width: usize,
    ncols: usize,
    basis: &mut [usize],
    enter_limit: usize,
    iters_left: &mut u64,
    dantzig_budget: u64,
) -> SimplexOutcome {
    let tol = S::from_f64(PIVOT_TOL).unwrap();
    let mut iter: u64 = 0;
    loop {
        if *iters_left == 0 {
            return SimplexOutcome::IterationLimit;
        }
        *iters_left -= 1;
        iter += 1;
        let bland = iter > dantzig_budget;

        // Entering column.
        let obj_row = m * width;
        let mut entering = None;
        if bland {
            for j in 0..enter_limit {
                if tab[obj_row + j] < -tol {
                    entering = Some(j);
                    break;
                }
            }
        } else {
            let mut best = -tol;
            for j in 0..enter_limit {
                let r = tab[obj_row + j];
                if r < best {
                    best = r;
                    entering = Some(j);
                }
            }
        }
        let q = match entering {
            Some(q) => q,
            None => return SimplexOutcome::Optimal,
        };

        // Ratio test; ties broken by the smallest basis variable index.
        let mut leave: Option<(usize, S)> = None;
        for i in 0..m {
            let a = tab[i * width + q];
            if a > tol {
                let ratio = tab[i * width + ncols] / a;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - tol || (ratio < lr + tol && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let (p, _) = match leave {
            Some(l) => l,
            None => return SimplexOutcome::Unbounded,
        };

        pivot(tab, m, width, ncols, p, q);
        basis[p] = q;
    }
}

fn pivot<S: Scalar>(tab: &mut [S], m: usize, width: usize, ncols: usize, p: usize, q: usize) {
    let inv = S::one() / tab[p * width + q];
    for j in 0..=ncols {
        tab[p * width + j] = tab[p * width + j] * inv;
    }
    for i in 0..=m {
        if i == p {
            continue;
        }
        let factor = tab[i * width + q];
        if factor != S::zero() {
            for j in 0..=ncols {
                let t = tab[p * width + j];
                tab[i * width + j] = tab[i * width + j] - factor * t;
            }
        }
    }
}
