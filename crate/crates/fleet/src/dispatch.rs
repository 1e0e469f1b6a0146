//! Batch dispatch: match pending requests to idle vehicles each batch epoch,
//! maximizing fare revenue net of travel cost.

use milp::{solve_mip, Model, RowSense, Sense, SolverConfig};

use crate::core::{dist, EconomicParams, Metric, Minutes, Request, Usd, Vehicle};
use crate::{FleetError, Result};

/// Snapshot of one batch dispatch epoch.
#[derive(Debug)]
pub struct DispatchInstance<'a> {
    pub requests: &'a [Request],
    pub vehicles: &'a [Vehicle],
    pub econ: &'a EconomicParams,
    pub metric: Metric,
    pub now: Minutes,
}

/// Partial bipartite matching with its objective value.
#[derive(Debug, Clone, Default)]
pub struct DispatchResult {
    /// Pairs (request id, vehicle id).
    pub matching: Vec<(usize, usize)>,
    pub objective: Usd,
}

impl DispatchInstance<'_> {
    /// Net profit of serving request `r` with vehicle `v`: fare minus travel
    /// cost over deadhead + trip distance.
    pub fn pair_profit(&self, r: &Request, v: &Vehicle) -> Usd {
        let d_od = dist(r.origin, r.destination, self.metric);
        let d_vo = dist(v.location, r.origin, self.metric);
        r.fare - self.econ.travel_cost(d_od + d_vo)
    }

    /// Energy feasibility: the vehicle must finish the trip at or above its
    /// reserve level.
    pub fn energy_ok(&self, r: &Request, v: &Vehicle) -> bool {
        let d = dist(v.location, r.origin, self.metric) + dist(r.origin, r.destination, self.metric);
        v.soc - self.econ.energy_for(d) >= v.e_min - 1e-9
    }

    /// Wait feasibility: accumulated wait plus pickup travel time must not
    /// exceed the customer's maximum.
    pub fn wait_ok(&self, r: &Request, v: &Vehicle) -> bool {
        let pickup = self.econ.travel_time(dist(v.location, r.origin, self.metric));
        r.wait + pickup <= self.econ.max_customer_wait + 1e-9
    }
}

/// Build the batch-dispatch MILP: binary m_rv per (request, vehicle) pair,
/// assignment rows, and maximized net profit. Energy- or wait-infeasible
/// pairs are fixed to zero up front; the fix is equivalent to the big-M rows
/// because each such row involves a single binary.
pub fn build_dispatch_model(inst: &DispatchInstance) -> Model {
    let nr = inst.requests.len();
    let nv = inst.vehicles.len();
    let mut m = Model::new(Sense::Maximize);
    let mut vars = vec![vec![0usize; nv]; nr];
    for (i, r) in inst.requests.iter().enumerate() {
        for (j, v) in inst.vehicles.iter().enumerate() {
            let var = m.add_binary(Some(format!("m_{}_{}", r.id, v.id)));
            m.set_objective_coeff(var, inst.pair_profit(r, v));
            if !inst.energy_ok(r, v) || !inst.wait_ok(r, v) {
                m.fix_var(var, 0.0);
            }
            vars[i][j] = var;
        }
    }
    for i in 0..nr {
        m.add_constraint(
            (0..nv).map(|j| (vars[i][j], 1.0)).collect(),
            RowSense::Le,
            1.0,
            Some(format!("req_{i}")),
        );
    }
    for j in 0..nv {
        m.add_constraint(
            (0..nr).map(|i| (vars[i][j], 1.0)).collect(),
            RowSense::Le,
            1.0,
            Some(format!("veh_{j}")),
        );
    }
    m
}

/// Solve the batch dispatch and audit the matching against the feasibility
/// rules and the objective recomputation.
pub fn solve_dispatch(inst: &DispatchInstance, cfg: &SolverConfig) -> Result<DispatchResult> {
    if inst.requests.is_empty() || inst.vehicles.is_empty() {
        return Ok(DispatchResult::default());
    }
    let model = build_dispatch_model(inst);
    let sol = solve_mip(&model, cfg)?;
    if !sol.has_values() {
        return Err(FleetError::NoSolution("dispatch model had no incumbent".into()));
    }
    let nv = inst.vehicles.len();
    let mut matching = Vec::new();
    let mut objective = 0.0;
    let mut req_used = vec![false; inst.requests.len()];
    let mut veh_used = vec![false; nv];
    for (i, r) in inst.requests.iter().enumerate() {
        for (j, v) in inst.vehicles.iter().enumerate() {
            if sol.values[i * nv + j] > 0.5 {
                if req_used[i] || veh_used[j] {
                    return Err(FleetError::NoSolution("dispatch matching not one-to-one".into()));
                }
                req_used[i] = true;
                veh_used[j] = true;
                if !inst.energy_ok(r, v) || !inst.wait_ok(r, v) {
                    return Err(FleetError::NoSolution(format!(
                        "dispatch matched infeasible pair ({}, {})",
                        r.id, v.id
                    )));
                }
                objective += inst.pair_profit(r, v);
                matching.push((r.id, v.id));
            }
        }
    }
    if (objective - sol.objective).abs() > 1e-6 {
        return Err(FleetError::NoSolution(format!(
            "dispatch objective mismatch: recomputed {objective} vs solver {}",
            sol.objective
        )));
    }
    Ok(DispatchResult { matching, objective })
}
