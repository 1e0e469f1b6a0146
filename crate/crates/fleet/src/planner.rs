//! Day-ahead charging plan: parameter estimation from historical traces,
//! the planning MILP over 30-minute epochs, and plan serialization.

use std::path::Path;

use milp::{solve_mip, Model, RowSense, Sense, SolverConfig, Status};

use crate::core::{Charger, Kwh, Minutes, TimeGrid, Usd, Vehicle};
use crate::{FleetError, Result};

/// Estimated inputs of the day-ahead model. `delta`, `wait`, and prices are
/// indexed by 1-based epoch as `vec[h - 1]`.
#[derive(Debug, Clone)]
pub struct PlanParams {
    /// Average per-vehicle energy consumption per epoch, kWh.
    pub delta: Vec<Kwh>,
    /// Expected queue wait on arrival, minutes, per (epoch, charger id).
    pub wait: Vec<Vec<Minutes>>,
    /// Opportunity cost of a vehicle-minute, USD.
    pub gamma: Usd,
    /// Charging access cost per session, USD.
    pub access_cost: Usd,
    /// Average energy price per epoch, USD/kWh.
    pub epoch_prices: Vec<Usd>,
    /// Customer arrivals per epoch; descriptive metadata only.
    pub lambda: Vec<f64>,
}

impl PlanParams {
    pub fn validate(&self, num_chargers: usize) -> Result<()> {
        let n = self.delta.len();
        if self.epoch_prices.len() != n || self.wait.len() != n {
            return Err(FleetError::Validation("plan parameter vectors differ in length".into()));
        }
        if self.wait.iter().any(|row| row.len() != num_chargers) {
            return Err(FleetError::Validation("wait table width != number of chargers".into()));
        }
        if self.delta.iter().any(|d| *d < 0.0) || self.wait.iter().flatten().any(|w| *w < 0.0) {
            return Err(FleetError::Validation("delta and waits must be nonnegative".into()));
        }
        if !(self.gamma > 0.0) || !(self.access_cost > 0.0) {
            return Err(FleetError::Validation("gamma and access cost must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch fleet energy consumption observed in one historical day.
#[derive(Debug, Clone)]
pub struct DriveTrace {
    /// Total driving energy of the fleet per epoch, kWh.
    pub per_epoch_energy: Vec<Kwh>,
    pub num_vehicles: usize,
}

/// Queue and profit observations from one historical day.
#[derive(Debug, Clone)]
pub struct CongestionTrace {
    /// (1-based epoch of arrival, charger id, observed queue wait in minutes).
    pub waits: Vec<(usize, usize, Minutes)>,
    pub profit: Usd,
    pub drive_minutes: Minutes,
}

/// Average per-vehicle consumption per epoch across traces.
pub fn estimate_delta(traces: &[DriveTrace]) -> Result<Vec<Kwh>> {
    if traces.is_empty() {
        return Err(FleetError::Validation("delta estimation needs at least one trace".into()));
    }
    let n = traces[0].per_epoch_energy.len();
    let mut delta = vec![0.0; n];
    for t in traces {
        if t.per_epoch_energy.len() != n || t.num_vehicles == 0 {
            return Err(FleetError::Validation("inconsistent drive trace".into()));
        }
        for (h, e) in t.per_epoch_energy.iter().enumerate() {
            delta[h] += e / t.num_vehicles as f64;
        }
    }
    for d in &mut delta {
        *d /= traces.len() as f64;
    }
    Ok(delta)
}

/// Mean observed queue wait per (epoch, charger), zero where no arrivals,
/// and the mean profit per vehicle-minute traveled.
pub fn estimate_wait_and_gamma(
    traces: &[CongestionTrace],
    num_epochs: usize,
    num_chargers: usize,
) -> Result<(Vec<Vec<Minutes>>, Usd)> {
    if traces.is_empty() {
        return Err(FleetError::Validation("wait estimation needs at least one trace".into()));
    }
    let mut sum = vec![vec![0.0; num_chargers]; num_epochs];
    let mut count = vec![vec![0usize; num_chargers]; num_epochs];
    let mut gamma = 0.0;
    for t in traces {
        if !(t.drive_minutes > 0.0) {
            return Err(FleetError::Validation(
                "gamma estimation needs traces with nonzero driving".into(),
            ));
        }
        for &(h, s, w) in &t.waits {
            if h == 0 || h > num_epochs || s >= num_chargers {
                return Err(FleetError::Validation("wait observation out of range".into()));
            }
            sum[h - 1][s] += w;
            count[h - 1][s] += 1;
        }
        gamma += t.profit / t.drive_minutes;
    }
    let wait = sum
        .into_iter()
        .zip(count)
        .map(|(srow, crow)| {
            srow.into_iter()
                .zip(crow)
                .map(|(s, c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    Ok((wait, gamma / traces.len() as f64))
}

/// Planning horizon: the suffix of the day's epochs where charging decisions
/// are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanWindow {
    /// 1-based real epoch that becomes h = 1 of the plan.
    pub start_epoch: usize,
    /// Anticipated SoC entering the window.
    pub e0: Kwh,
}

/// First epoch at which the anticipated SoC drops below `e_max`, with the
/// anticipated level at that point. `None` when consumption never brings the
/// fleet below `e_max` (no charging needed).
pub fn compute_plan_window(e_init: Kwh, e_max: Kwh, delta: &[Kwh]) -> Option<PlanWindow> {
    if e_init <= e_max {
        return Some(PlanWindow { start_epoch: 1, e0: e_init });
    }
    let mut level = e_init;
    for (i, d) in delta.iter().enumerate() {
        level -= d;
        if level < e_max {
            return Some(PlanWindow { start_epoch: i + 1, e0: level });
        }
    }
    None
}

/// One planned charging operation.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    /// 1-based real epoch.
    pub epoch: usize,
    /// Advisory charger; execution picks the actual charger online.
    pub charger_id: usize,
    pub energy: Kwh,
    /// Planned post-charge SoC.
    pub target_soc: Kwh,
}

#[derive(Debug, Clone, Default)]
pub struct DayAheadPlan {
    /// Charging entries per vehicle id, ordered by epoch.
    pub entries: Vec<Vec<PlanEntry>>,
    pub objective: Usd,
}

impl DayAheadPlan {
    pub fn empty(num_vehicles: usize) -> Self {
        DayAheadPlan {
            entries: vec![Vec::new(); num_vehicles],
            objective: 0.0,
        }
    }
}

/// Variable layout of a built planning model.
#[derive(Debug, Clone)]
pub struct PlanModel {
    pub model: Model,
    pub window: PlanWindow,
    /// Number of window epochs.
    pub nw: usize,
    pub nv: usize,
    pub ns: usize,
}

impl PlanModel {
    pub fn x_idx(&self, v: usize, w: usize, s: usize) -> usize {
        ((v * self.nw + w) * self.ns + s) * 2
    }
    pub fn y_idx(&self, v: usize, w: usize, s: usize) -> usize {
        self.x_idx(v, w, s) + 1
    }
    pub fn e_idx(&self, v: usize, w: usize) -> usize {
        self.nv * self.nw * self.ns * 2 + v * (self.nw + 1) + w
    }
}

/// Build the day-ahead MILP: binaries x (charge at charger s during epoch h),
/// continuous y (energy) and e (SoC trajectory), minimizing energy cost plus
/// opportunity cost of charging time, access, and expected waits.
pub fn build_plan_model(
    fleet: &[Vehicle],
    chargers: &[Charger],
    params: &PlanParams,
    grid: &TimeGrid,
    window: PlanWindow,
) -> Result<PlanModel> {
    params.validate(chargers.len())?;
    let nh = grid.num_epochs();
    if params.delta.len() != nh {
        return Err(FleetError::Validation("delta length != number of epochs".into()));
    }
    if window.start_epoch == 0 || window.start_epoch > nh {
        return Err(FleetError::Validation("plan window start out of range".into()));
    }
    let nv = fleet.len();
    let ns = chargers.len();
    let nw = nh - window.start_epoch + 1;
    let caps: Vec<Kwh> = chargers.iter().map(|c| c.per_epoch_energy_cap(grid)).collect();
    let m3 = grid.charge_epoch_interval;
    let m4 = caps.iter().cloned().fold(0.0, f64::max);

    let mut m = Model::new(Sense::Minimize);
    for v in 0..nv {
        for w in 0..nw {
            let r = window.start_epoch + w;
            for (s, c) in chargers.iter().enumerate() {
                let x = m.add_binary(Some(format!("x_{v}_{r}_{s}")));
                m.set_objective_coeff(
                    x,
                    params.access_cost + params.gamma * params.wait[r - 1][s],
                );
                let y = m.add_continuous(0.0, caps[s], Some(format!("y_{v}_{r}_{s}")));
                m.set_objective_coeff(
                    y,
                    params.epoch_prices[r - 1] + params.gamma * 60.0 / c.power_kw,
                );
            }
        }
    }
    let pm = PlanModel {
        model: m,
        window,
        nw,
        nv,
        ns,
    };
    let mut m = pm.model.clone();
    for (v, veh) in fleet.iter().enumerate() {
        for w in 0..=nw {
            let name = Some(format!("e_{v}_{w}"));
            if w == 0 {
                let e0 = window.e0.min(veh.e_max);
                m.add_continuous(e0, e0, name);
            } else {
                m.add_continuous(veh.e_min, veh.e_max, name);
            }
        }
    }
    for v in 0..nv {
        for w in 0..nw {
            let r = window.start_epoch + w;
            let d = params.delta[r - 1];
            // one charger per vehicle-epoch
            m.add_constraint(
                (0..ns).map(|s| (pm.x_idx(v, w, s), 1.0)).collect(),
                RowSense::Le,
                1.0,
                Some(format!("veh_{v}_{r}")),
            );
            // SoC recursion: e_{h+1} = e_h - delta(1 - sum x) + sum y
            let mut terms = vec![(pm.e_idx(v, w + 1), 1.0), (pm.e_idx(v, w), -1.0)];
            for s in 0..ns {
                terms.push((pm.x_idx(v, w, s), -d));
                terms.push((pm.y_idx(v, w, s), -1.0));
            }
            m.add_constraint(terms, RowSense::Eq, -d, Some(format!("soc_{v}_{r}")));
            for (s, c) in chargers.iter().enumerate() {
                // minimum session duration with big-M deactivation
                m.add_constraint(
                    vec![(pm.y_idx(v, w, s), 60.0 / c.power_kw), (pm.x_idx(v, w, s), -m3)],
                    RowSense::Ge,
                    c.min_charge_minutes - m3,
                    Some(format!("dur_{v}_{r}_{s}")),
                );
                // energy only when charging
                m.add_constraint(
                    vec![(pm.y_idx(v, w, s), 1.0), (pm.x_idx(v, w, s), -m4)],
                    RowSense::Le,
                    0.0,
                    Some(format!("link_{v}_{r}_{s}")),
                );
            }
        }
    }
    for w in 0..nw {
        let r = window.start_epoch + w;
        for s in 0..ns {
            m.add_constraint(
                (0..nv).map(|v| (pm.x_idx(v, w, s), 1.0)).collect(),
                RowSense::Le,
                1.0,
                Some(format!("chg_{r}_{s}")),
            );
        }
    }
    Ok(PlanModel { model: m, ..pm })
}

/// Re-evaluate the planning constraints and objective on an extracted plan,
/// independently of the solver tableau.
pub fn verify_plan(
    plan: &DayAheadPlan,
    fleet: &[Vehicle],
    chargers: &[Charger],
    params: &PlanParams,
    grid: &TimeGrid,
    window: PlanWindow,
) -> Result<()> {
    let nh = grid.num_epochs();
    let tol = 1e-6;
    let mut per_slot: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();
    let mut objective = 0.0;
    for (v, entries) in plan.entries.iter().enumerate() {
        let veh = &fleet[v];
        let mut level = window.e0.min(veh.e_max);
        let mut by_epoch: std::collections::HashMap<usize, &PlanEntry> =
            std::collections::HashMap::new();
        for e in entries {
            if by_epoch.insert(e.epoch, e).is_some() {
                return Err(FleetError::Validation(format!(
                    "plan: vehicle {v} charges twice in epoch {}",
                    e.epoch
                )));
            }
            *per_slot.entry((e.epoch, e.charger_id)).or_default() += 1;
        }
        for r in window.start_epoch..=nh {
            if let Some(e) = by_epoch.get(&r) {
                let c = &chargers[e.charger_id];
                if e.energy * 60.0 / c.power_kw < c.min_charge_minutes - tol {
                    return Err(FleetError::Validation(format!(
                        "plan: vehicle {v} epoch {r} below minimum session duration"
                    )));
                }
                if e.energy > c.per_epoch_energy_cap(grid) + tol {
                    return Err(FleetError::Validation(format!(
                        "plan: vehicle {v} epoch {r} exceeds the epoch energy cap"
                    )));
                }
                if (e.target_soc - (level + e.energy)).abs() > tol {
                    return Err(FleetError::Validation(format!(
                        "plan: vehicle {v} epoch {r} target inconsistent with trajectory"
                    )));
                }
                objective += (params.epoch_prices[r - 1] + params.gamma * 60.0 / c.power_kw)
                    * e.energy
                    + params.access_cost
                    + params.gamma * params.wait[r - 1][e.charger_id];
                level += e.energy;
            } else {
                level -= params.delta[r - 1];
            }
            if level < veh.e_min - tol || level > veh.e_max + tol {
                return Err(FleetError::Validation(format!(
                    "plan: vehicle {v} SoC {level:.3} out of bounds after epoch {r}"
                )));
            }
        }
    }
    if per_slot.values().any(|&n| n > 1) {
        return Err(FleetError::Validation("plan: charger double-booked in an epoch".into()));
    }
    if (objective - plan.objective).abs() > 1e-6 {
        return Err(FleetError::Validation(format!(
            "plan objective mismatch: recomputed {objective} vs stored {}",
            plan.objective
        )));
    }
    Ok(())
}

fn extract_plan(pm: &PlanModel, values: &[f64], objective: Usd) -> DayAheadPlan {
    let mut entries = vec![Vec::new(); pm.nv];
    for v in 0..pm.nv {
        for w in 0..pm.nw {
            for s in 0..pm.ns {
                if values[pm.x_idx(v, w, s)] > 0.5 {
                    let energy = values[pm.y_idx(v, w, s)];
                    entries[v].push(PlanEntry {
                        epoch: pm.window.start_epoch + w,
                        charger_id: s,
                        energy,
                        target_soc: values[pm.e_idx(v, w)] + energy,
                    });
                }
            }
        }
    }
    DayAheadPlan { entries, objective }
}

/// Just-in-time greedy plan used when branch and bound finds no incumbent
/// within its budget. Vehicles are handled in id order; whenever a vehicle's
/// trajectory would dip below E_min, a full-headroom session is inserted at
/// the cheapest still-free (epoch, charger) slot at or before the dip.
/// Charger ids in the result are indices into `chargers`, as in the MILP.
fn greedy_plan(
    fleet: &[Vehicle],
    chargers: &[Charger],
    params: &PlanParams,
    grid: &TimeGrid,
    window: PlanWindow,
) -> Result<DayAheadPlan> {
    let nh = grid.num_epochs();
    let start = window.start_epoch;
    let mut occupied = std::collections::HashSet::new();
    let mut entries = vec![Vec::new(); fleet.len()];
    let mut objective = 0.0;
    for (v, veh) in fleet.iter().enumerate() {
        let mut charges: std::collections::BTreeMap<usize, (usize, Kwh)> =
            std::collections::BTreeMap::new();
        loop {
            // Trajectory under the current session set; levels[i] is the SoC
            // entering epoch start + i.
            let mut levels = vec![window.e0.min(veh.e_max)];
            let mut dip = None;
            for r in start..=nh {
                let before = *levels.last().unwrap();
                let after = match charges.get(&r) {
                    Some(&(_, y)) => before + y,
                    None => before - params.delta[r - 1],
                };
                if after < veh.e_min - 1e-9 {
                    dip = Some(r);
                    break;
                }
                levels.push(after);
            }
            let Some(dip) = dip else { break };
            // Only insert after the vehicle's last session so earlier levels
            // (and their headroom-sized energies) stay valid.
            let floor = charges.keys().max().map_or(start, |m| m + 1);
            let mut best: Option<(f64, usize, usize, Kwh)> = None;
            for r in floor..=dip {
                if charges.contains_key(&r) {
                    continue;
                }
                let before = levels[r - start];
                for (s, c) in chargers.iter().enumerate() {
                    if occupied.contains(&(r, s)) {
                        continue;
                    }
                    let y = c.per_epoch_energy_cap(grid).min(veh.e_max - before);
                    if y * 60.0 / c.power_kw < c.min_charge_minutes - 1e-9 {
                        continue;
                    }
                    // Rank by marginal cost per kWh; prefer later epochs so a
                    // session lands where headroom is largest.
                    let rate = params.epoch_prices[r - 1] + params.gamma * 60.0 / c.power_kw;
                    let rank = rate - 1e-9 * r as f64;
                    if best.map_or(true, |(b, ..)| rank < b) {
                        best = Some((rank, r, s, y));
                    }
                }
            }
            let Some((_, r, s, y)) = best else {
                return Err(FleetError::NoSolution(
                    "greedy day-ahead plan ran out of charger slots".into(),
                ));
            };
            occupied.insert((r, s));
            charges.insert(r, (s, y));
        }
        // Replay once more to record target SoCs and the objective.
        let mut level = window.e0.min(veh.e_max);
        for r in start..=nh {
            match charges.get(&r) {
                Some(&(s, y)) => {
                    let c = &chargers[s];
                    entries[v].push(PlanEntry {
                        epoch: r,
                        charger_id: s,
                        energy: y,
                        target_soc: level + y,
                    });
                    objective += (params.epoch_prices[r - 1] + params.gamma * 60.0 / c.power_kw)
                        * y
                        + params.access_cost
                        + params.gamma * params.wait[r - 1][s];
                    level += y;
                }
                None => level -= params.delta[r - 1],
            }
        }
    }
    Ok(DayAheadPlan { entries, objective })
}

/// Solve the day-ahead plan directly (no decomposition).
fn solve_plan_direct(
    fleet: &[Vehicle],
    chargers: &[Charger],
    params: &PlanParams,
    grid: &TimeGrid,
    window: PlanWindow,
    cfg: &SolverConfig,
) -> Result<DayAheadPlan> {
    let pm = build_plan_model(fleet, chargers, params, grid, window)?;
    let sol = solve_mip(&pm.model, cfg)?;
    match sol.status {
        Status::Infeasible => Err(FleetError::NoSolution("day-ahead plan infeasible".into())),
        Status::Unbounded => Err(FleetError::NoSolution("day-ahead plan unbounded".into())),
        _ if !sol.has_values() => {
            let plan = greedy_plan(fleet, chargers, params, grid, window)?;
            verify_plan(&plan, fleet, chargers, params, grid, window)?;
            Ok(plan)
        }
        _ => {
            let plan = extract_plan(&pm, &sol.values, sol.objective);
            verify_plan(&plan, fleet, chargers, params, grid, window)?;
            Ok(plan)
        }
    }
}

/// Solve the day-ahead plan, optionally with block decomposition: partition
/// the fleet and chargers into `blocks` proportional groups, solve the first
/// block, and replicate its plan to the remaining blocks by index mapping.
pub fn solve_plan(
    fleet: &[Vehicle],
    chargers: &[Charger],
    params: &PlanParams,
    grid: &TimeGrid,
    cfg: &SolverConfig,
    blocks: usize,
) -> Result<DayAheadPlan> {
    if fleet.is_empty() || chargers.is_empty() {
        return Err(FleetError::Validation("plan needs vehicles and chargers".into()));
    }
    let window = match compute_plan_window(fleet[0].e_init, fleet[0].e_max, &params.delta) {
        Some(w) => w,
        None => return Ok(DayAheadPlan::empty(fleet.len())),
    };
    if params.delta.iter().all(|d| *d == 0.0) && window.e0 >= fleet[0].e_min {
        return Ok(DayAheadPlan::empty(fleet.len()));
    }
    let k = blocks.max(1).min(fleet.len()).min(chargers.len());
    if k == 1 {
        return solve_plan_direct(fleet, chargers, params, grid, window, cfg);
    }
    // Block 0: every k-th vehicle and charger. Charger ids inside the block
    // keep their true ids so waits and powers line up.
    let block_vehicles: Vec<Vehicle> = fleet.iter().step_by(k).cloned().collect();
    let charger_groups: Vec<Vec<&Charger>> = (0..k)
        .map(|b| chargers.iter().skip(b).step_by(k).collect())
        .collect();
    let block_chargers: Vec<Charger> = charger_groups[0].iter().map(|c| (*c).clone()).collect();
    // Reindex the wait table to the block's charger subset.
    let block_params = PlanParams {
        wait: params
            .wait
            .iter()
            .map(|row| block_chargers.iter().map(|c| row[c.id]).collect())
            .collect(),
        ..params.clone()
    };
    let pm = build_plan_model(&block_vehicles, &block_chargers, &block_params, grid, window)?;
    let sol = solve_mip(&pm.model, cfg)?;
    let block_plan = if sol.has_values() {
        extract_plan(&pm, &sol.values, sol.objective)
    } else {
        greedy_plan(&block_vehicles, &block_chargers, &block_params, grid, window)?
    };
    verify_plan(&block_plan, &block_vehicles, &block_chargers, &block_params, grid, window)?;

    // Replicate: vehicle i belongs to block i % k at position i / k; it takes
    // the plan of the solved block's vehicle at the same position, with the
    // charger remapped to its block's charger at the same subset position.
    // Block plan charger ids are indices into the block's charger subset.
    let mut entries = vec![Vec::new(); fleet.len()];
    for (i, slot) in entries.iter_mut().enumerate() {
        let b = i % k;
        let pos = i / k;
        if pos >= block_plan.entries.len() {
            continue;
        }
        let group = &charger_groups[b];
        for e in &block_plan.entries[pos] {
            slot.push(PlanEntry {
                charger_id: group[e.charger_id % group.len()].id,
                ..e.clone()
            });
        }
    }
    Ok(DayAheadPlan {
        entries,
        objective: block_plan.objective * k as f64,
    })
}

// ---- plan serialization --------------------------------------------------

pub fn plan_to_csv(plan: &DayAheadPlan) -> String {
    let mut out = String::from("vehicle_id,epoch,charger_id,energy_kwh,target_soc_kwh\n");
    for (v, entries) in plan.entries.iter().enumerate() {
        for e in entries {
            out.push_str(&format!(
                "{v},{},{},{},{}\n",
                e.epoch, e.charger_id, e.energy, e.target_soc
            ));
        }
    }
    out
}

pub fn save_plan(plan: &DayAheadPlan, path: &Path) -> Result<()> {
    std::fs::write(path, plan_to_csv(plan))?;
    Ok(())
}

pub fn load_plan(path: &Path, num_vehicles: usize) -> Result<DayAheadPlan> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut entries = vec![Vec::new(); num_vehicles];
    for (i, rec) in rdr.deserialize::<(usize, usize, usize, f64, f64)>().enumerate() {
        let (v, epoch, charger_id, energy, target_soc) =
            rec.map_err(|e| FleetError::Validation(format!("plan line {}: {e}", i + 2)))?;
        if v >= num_vehicles {
            return Err(FleetError::Validation(format!(
                "plan line {}: vehicle id {v} out of range",
                i + 2
            )));
        }
        entries[v].push(PlanEntry {
            epoch,
            charger_id,
            energy,
            target_soc,
        });
    }
    for slot in &mut entries {
        slot.sort_by_key(|e| e.epoch);
    }
    Ok(DayAheadPlan { entries, objective: 0.0 })
}
