//! Online vehicle-to-charger assignment: the go-charge pool, target SoC
//! anticipation, the assignment MILP with its infeasibility-relaxation loop,
//! and the congestion delay rule.

use milp::{solve_mip, Model, RowSense, Sense, SolverConfig, Status};

use crate::core::{dist, Charger, EconomicParams, Kwh, Metric, Minutes, TimeGrid, Vehicle};
use crate::{FleetError, Result};

/// Why a vehicle entered the go-charge pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolReason {
    Planned,
    LowSoc,
    Delayed,
}

#[derive(Debug, Clone, Copy)]
pub struct PoolEntry {
    pub vehicle_id: usize,
    pub reason: PoolReason,
    pub target: Kwh,
}

/// Pool of go-charge vehicles; a vehicle appears at most once.
#[derive(Debug, Clone, Default)]
pub struct ChargePool {
    entries: Vec<PoolEntry>,
}

impl ChargePool {
    pub fn contains(&self, vehicle_id: usize) -> bool {
        self.entries.iter().any(|e| e.vehicle_id == vehicle_id)
    }

    /// Insert unless already pooled; an existing entry keeps its target.
    pub fn admit(&mut self, entry: PoolEntry) {
        if !self.contains(entry.vehicle_id) {
            self.entries.push(entry);
        }
    }

    pub fn remove(&mut self, vehicle_id: usize) -> Option<PoolEntry> {
        let pos = self.entries.iter().position(|e| e.vehicle_id == vehicle_id)?;
        Some(self.entries.remove(pos))
    }

    pub fn mark_delayed(&mut self, vehicle_id: usize) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.vehicle_id == vehicle_id) {
            e.reason = PoolReason::Delayed;
        }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// How post-charge targets are chosen for low-SoC pool admissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolicy {
    /// Anticipate remaining energy need to the end of the day.
    Anticipative,
    /// Always charge to E_max.
    FullToMax,
}

/// Remaining energy need to the end of the day: consumption over the epochs
/// left, minus a reserve of m epochs whose consumption stays within E_min.
pub fn anticipated_need(h_t: usize, delta: &[Kwh], e_min: Kwh) -> Kwh {
    if h_t == 0 || h_t > delta.len() {
        return 0.0;
    }
    let remaining: Kwh = delta[h_t - 1..].iter().sum();
    let d = delta[h_t - 1];
    let m = if d > 0.0 { (e_min / d).floor() } else { 0.0 };
    (remaining - m * d).max(0.0)
}

/// Target SoC for a low-SoC pool admission.
pub fn target_soc(
    policy: TargetPolicy,
    soc: Kwh,
    e_bar: Kwh,
    h_t: usize,
    delta: &[Kwh],
    e_min: Kwh,
) -> Kwh {
    match policy {
        TargetPolicy::FullToMax => e_bar,
        TargetPolicy::Anticipative => e_bar.min(soc + anticipated_need(h_t, delta, e_min)),
    }
}

/// Energy a vehicle must take to be worth a session: the equivalent of the
/// minimum charging duration on a fast charger.
pub fn min_useful_energy(chargers: &[Charger]) -> Kwh {
    chargers
        .iter()
        .map(|c| c.min_session_energy())
        .fold(0.0, f64::max)
}

/// Retain pooled vehicles that are idle and whose deficit to target is at
/// least the minimum useful energy; returns pool entries in pool order.
pub fn filter_pool(
    pool: &ChargePool,
    vehicles: &[Vehicle],
    threshold: Kwh,
) -> Vec<PoolEntry> {
    pool.entries()
        .iter()
        .filter(|e| {
            let v = &vehicles[e.vehicle_id];
            v.is_idle() && e.target - v.soc >= threshold - 1e-9
        })
        .cloned()
        .collect()
}

/// Deterministic queue lookahead: the wait a vehicle arriving at `arrival`
/// would see, from the in-service session's remainder plus the expected
/// session durations of everyone already queued.
pub fn predicted_wait(charger: &Charger, arrival: Minutes, vehicles: &[Vehicle]) -> Minutes {
    let mut wait = if charger.current.is_some() {
        (charger.busy_until - arrival).max(0.0)
    } else {
        0.0
    };
    let session = |v: &Vehicle| {
        let deficit = (v.target_soc.unwrap_or(v.e_max) - v.soc).max(0.0);
        (deficit * 60.0 / charger.power_kw).max(charger.min_charge_minutes)
    };
    for &(vid, _) in &charger.queue {
        wait += session(&vehicles[vid]);
    }
    // Vehicles already driving here that will arrive first are ahead of us.
    for v in vehicles {
        if v.state == crate::core::VehicleState::ToCharger
            && v.heading_to == Some(charger.id)
            && v.busy_until <= arrival
        {
            wait += session(v);
        }
    }
    wait
}

/// One assignment instance: the filtered candidates with live waits.
#[derive(Debug, Clone)]
pub struct AssignmentInstance<'a> {
    pub candidates: Vec<PoolEntry>,
    pub chargers: &'a [Charger],
    /// Predicted queue wait per (candidate position, charger), minutes.
    pub wait: Vec<Vec<Minutes>>,
    pub vehicles: &'a [Vehicle],
    pub econ: &'a EconomicParams,
    pub metric: Metric,
    pub grid: &'a TimeGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub vehicle_id: usize,
    pub charger_id: usize,
    /// Planned charged energy, kWh.
    pub energy: Kwh,
}

#[derive(Debug, Clone, Default)]
pub struct AssignmentOutcome {
    pub assignments: Vec<Assignment>,
    /// Assigned but postponed by the delay rule; stay pooled.
    pub delayed: Vec<usize>,
    /// Dropped by the relaxation loop; back to idle, re-pooled next epoch.
    pub removed: Vec<usize>,
}

impl AssignmentInstance<'_> {
    fn access_minutes(&self, cand: &PoolEntry, charger: &Charger) -> Minutes {
        let v = &self.vehicles[cand.vehicle_id];
        self.econ.travel_time(dist(v.location, charger.location, self.metric))
    }

    /// Energy the session will deliver at this charger: reach the target
    /// after the access-travel consumption, and at least the session
    /// duration floor.
    fn required_energy(&self, cand: &PoolEntry, charger: &Charger) -> Kwh {
        let v = &self.vehicles[cand.vehicle_id];
        let d = dist(v.location, charger.location, self.metric);
        let need = cand.target - (v.soc - self.econ.energy_for(d));
        need.max(charger.min_session_energy())
    }

    /// The vehicle can reach the charger without dropping below zero.
    pub fn pair_feasible(&self, cand: &PoolEntry, charger: &Charger) -> bool {
        let v = &self.vehicles[cand.vehicle_id];
        let d = dist(v.location, charger.location, self.metric);
        v.soc - self.econ.energy_for(d) >= -1e-9
    }
}

/// Build the assignment MILP: binary x per (vehicle, charger) and continuous
/// charged energy, minimizing access + wait + charging minutes. Every
/// candidate must be assigned; each charger takes at most one new vehicle.
/// Unreachable or cap-violating pairs are fixed to zero, standing in for the
/// single-binary big-M rows.
pub fn build_assignment_model(inst: &AssignmentInstance) -> Model {
    let nv = inst.candidates.len();
    let ns = inst.chargers.len();
    let mut m = Model::new(Sense::Minimize);
    for (i, cand) in inst.candidates.iter().enumerate() {
        for (s, c) in inst.chargers.iter().enumerate() {
            let x = m.add_binary(Some(format!("x_{}_{s}", cand.vehicle_id)));
            m.set_objective_coeff(x, inst.access_minutes(cand, c) + inst.wait[i][s]);
            let req = inst.required_energy(cand, c);
            let psi = m.add_continuous(0.0, req, Some(format!("psi_{}_{s}", cand.vehicle_id)));
            m.set_objective_coeff(psi, 60.0 / c.power_kw);
            if !inst.pair_feasible(cand, c) {
                m.fix_var(x, 0.0);
            } else {
                // charge to target and honor the session floor when chosen
                m.add_constraint(
                    vec![(psi, 1.0), (x, -req)],
                    RowSense::Ge,
                    0.0,
                    Some(format!("tgt_{}_{s}", cand.vehicle_id)),
                );
            }
            // energy only on the chosen charger
            m.add_constraint(
                vec![(psi, 1.0), (x, -req)],
                RowSense::Le,
                0.0,
                Some(format!("link_{}_{s}", cand.vehicle_id)),
            );
        }
    }
    for i in 0..nv {
        m.add_constraint(
            (0..ns).map(|s| (i * ns * 2 + s * 2, 1.0)).collect(),
            RowSense::Eq,
            1.0,
            Some(format!("veh_{i}")),
        );
    }
    for s in 0..ns {
        m.add_constraint(
            (0..nv).map(|i| (i * ns * 2 + s * 2, 1.0)).collect(),
            RowSense::Le,
            1.0,
            Some(format!("chg_{s}")),
        );
    }
    m
}

/// Re-check an extracted assignment against the reachability, target, floor,
/// and cap rules.
fn verify_assignment(inst: &AssignmentInstance, picks: &[(usize, usize, Kwh)]) -> Result<()> {
    let mut used = vec![false; inst.chargers.len()];
    for &(i, s, psi) in picks {
        let cand = &inst.candidates[i];
        let c = &inst.chargers[s];
        if used[s] {
            return Err(FleetError::NoSolution("charger assigned twice".into()));
        }
        used[s] = true;
        if !inst.pair_feasible(cand, c)
            || psi < inst.required_energy(cand, c) - 1e-6
            || psi > inst.required_energy(cand, c) + 1e-6
        {
            return Err(FleetError::NoSolution(format!(
                "assignment of vehicle {} to charger {s} fails the feasibility audit",
                cand.vehicle_id
            )));
        }
    }
    Ok(())
}

/// Solve P3 with the relaxation loop: on infeasibility the highest-SoC
/// candidate is dropped and the model rebuilt; on success, assignments whose
/// predicted wait exceeds `max_queue_wait` are delayed instead of dispatched.
pub fn solve_with_relaxation(
    inst: &AssignmentInstance,
    cfg: &SolverConfig,
    max_queue_wait: Minutes,
) -> Result<AssignmentOutcome> {
    let mut active: Vec<usize> = (0..inst.candidates.len()).collect();
    let mut removed = Vec::new();
    loop {
        if active.is_empty() {
            return Ok(AssignmentOutcome {
                removed: removed
                    .iter()
                    .map(|&i: &usize| inst.candidates[i].vehicle_id)
                    .collect(),
                ..AssignmentOutcome::default()
            });
        }
        let sub = AssignmentInstance {
            candidates: active.iter().map(|&i| inst.candidates[i]).collect(),
            wait: active.iter().map(|&i| inst.wait[i].clone()).collect(),
            ..inst.clone()
        };
        let model = build_assignment_model(&sub);
        let sol = solve_mip(&model, cfg)?;
        if sol.status == Status::Infeasible || !sol.has_values() {
            // drop the highest-SoC candidate; ties to the lower vehicle id
            let worst = *active
                .iter()
                .max_by(|&&a, &&b| {
                    let sa = inst.vehicles[inst.candidates[a].vehicle_id].soc;
                    let sb = inst.vehicles[inst.candidates[b].vehicle_id].soc;
                    sa.partial_cmp(&sb).unwrap().then(b.cmp(&a))
                })
                .unwrap();
            active.retain(|&i| i != worst);
            removed.push(worst);
            continue;
        }
        let ns = inst.chargers.len();
        let mut picks = Vec::new();
        for (j, &i) in active.iter().enumerate() {
            for s in 0..ns {
                if sol.values[j * ns * 2 + s * 2] > 0.5 {
                    picks.push((i, s, sol.values[j * ns * 2 + s * 2 + 1]));
                }
            }
        }
        verify_assignment(inst, &picks)?;
        let mut out = AssignmentOutcome {
            removed: removed
                .iter()
                .map(|&i: &usize| inst.candidates[i].vehicle_id)
                .collect(),
            ..AssignmentOutcome::default()
        };
        for (i, s, psi) in picks {
            let vid = inst.candidates[i].vehicle_id;
            if inst.wait[i][s] > max_queue_wait {
                out.delayed.push(vid);
            } else {
                out.assignments.push(Assignment {
                    vehicle_id: vid,
                    charger_id: inst.chargers[s].id,
                    energy: psi,
                });
            }
        }
        return Ok(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{ChargerClass, Point};

    fn charger_at(id: usize, location: Point, power_kw: f64) -> Charger {
        Charger {
            id,
            station_id: id,
            location,
            power_kw,
            class: if power_kw >= 50.0 { ChargerClass::Fast } else { ChargerClass::Slow },
            min_charge_minutes: 10.0,
            current: None,
            busy_until: 0.0,
            queue: Vec::new(),
        }
    }

    fn vehicle_at(id: usize, location: Point, soc: Kwh) -> Vehicle {
        let mut v = Vehicle::new(id, location, 62.0, 0.10, 0.80);
        v.soc = soc;
        v
    }

    #[test]
    fn target_soc_examples() {
        // 10 epochs remaining at 2.5 kWh, E_min = 6.2: m = 2, need = 20.
        let delta = vec![2.5; 10];
        let t = target_soc(TargetPolicy::Anticipative, 12.0, 49.6, 1, &delta, 6.2);
        assert!((t - 32.0).abs() < 1e-12);
        // Need exceeds headroom: capped at E_bar.
        let t = target_soc(TargetPolicy::Anticipative, 45.0, 49.6, 1, &delta, 6.2);
        assert_eq!(t, 49.6);
        // No epochs remaining.
        let t = target_soc(TargetPolicy::Anticipative, 12.0, 49.6, 11, &delta, 6.2);
        assert_eq!(t, 12.0);
        // Anticipation off: straight to E_max.
        let t = target_soc(TargetPolicy::FullToMax, 12.0, 49.6, 1, &delta, 6.2);
        assert_eq!(t, 49.6);
    }

    #[test]
    fn pool_admission_is_idempotent() {
        let mut pool = ChargePool::default();
        pool.admit(PoolEntry { vehicle_id: 3, reason: PoolReason::Planned, target: 40.0 });
        pool.admit(PoolEntry { vehicle_id: 3, reason: PoolReason::LowSoc, target: 20.0 });
        assert_eq!(pool.entries().len(), 1);
        assert_eq!(pool.entries()[0].target, 40.0);
        assert!(pool.remove(3).is_some());
        assert!(pool.is_empty());
    }

    #[test]
    fn filter_threshold_examples() {
        let chargers = vec![charger_at(0, Point::new(0.0, 0.0), 50.0)];
        let threshold = min_useful_energy(&chargers);
        assert!((threshold - 50.0 / 6.0).abs() < 1e-9);

        let mut vehicles = vec![
            vehicle_at(0, Point::new(0.0, 0.0), 10.0),
            vehicle_at(1, Point::new(0.0, 0.0), 10.0),
            vehicle_at(2, Point::new(0.0, 0.0), 10.0),
        ];
        vehicles[2].state = crate::core::VehicleState::Serving;
        let mut pool = ChargePool::default();
        // deficit 9: eligible; deficit 5: not; serving: never
        pool.admit(PoolEntry { vehicle_id: 0, reason: PoolReason::LowSoc, target: 19.0 });
        pool.admit(PoolEntry { vehicle_id: 1, reason: PoolReason::LowSoc, target: 15.0 });
        pool.admit(PoolEntry { vehicle_id: 2, reason: PoolReason::LowSoc, target: 40.0 });
        let kept = filter_pool(&pool, &vehicles, threshold);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].vehicle_id, 0);
    }

    #[test]
    fn queue_lookahead() {
        let vehicles = vec![
            vehicle_at(0, Point::new(0.0, 0.0), 10.0),
            {
                let mut v = vehicle_at(1, Point::new(0.0, 0.0), 20.0);
                v.target_soc = Some(45.0); // 25 kWh at 50 kW = 30 min
                v
            },
        ];
        let mut c = charger_at(0, Point::new(0.0, 0.0), 50.0);
        assert_eq!(predicted_wait(&c, 400.0, &vehicles), 0.0);
        c.current = Some(0);
        c.busy_until = 410.0;
        assert_eq!(predicted_wait(&c, 400.0, &vehicles), 10.0);
        c.queue.push((1, 399.0));
        assert_eq!(predicted_wait(&c, 400.0, &vehicles), 40.0);
        // Already past the in-service session's end.
        assert_eq!(predicted_wait(&c, 415.0, &vehicles), 30.0);
    }

    fn instance<'a>(
        candidates: Vec<PoolEntry>,
        chargers: &'a [Charger],
        wait: Vec<Vec<Minutes>>,
        vehicles: &'a [Vehicle],
        econ: &'a EconomicParams,
        grid: &'a TimeGrid,
    ) -> AssignmentInstance<'a> {
        AssignmentInstance {
            candidates,
            chargers,
            wait,
            vehicles,
            econ,
            metric: Metric::Rectilinear,
            grid,
        }
    }

    #[test]
    fn prefers_far_idle_charger_over_near_congested() {
        // 10 min access + 0 wait beats 2 min access + 30 min wait.
        let econ = EconomicParams::default();
        let grid = TimeGrid::default();
        let vehicles = vec![vehicle_at(0, Point::new(0.0, 0.0), 12.0)];
        let chargers = vec![
            charger_at(0, Point::new(0.0, 5.0), 50.0),
            charger_at(1, Point::new(0.0, 1.0), 50.0),
        ];
        let cand = vec![PoolEntry { vehicle_id: 0, reason: PoolReason::LowSoc, target: 32.0 }];
        let inst = instance(cand, &chargers, vec![vec![0.0, 30.0]], &vehicles, &econ, &grid);
        let out = solve_with_relaxation(&inst, &SolverConfig::default(), f64::INFINITY).unwrap();
        assert_eq!(out.assignments.len(), 1);
        assert_eq!(out.assignments[0].charger_id, 0);
        assert!(out.delayed.is_empty() && out.removed.is_empty());
    }

    #[test]
    fn slow_charger_carries_full_deficit() {
        // Deficit 20 kWh on an 11 kW charger: the session is priced at its
        // true duration rather than truncated at the epoch cap.
        let econ = EconomicParams::default();
        let grid = TimeGrid::default();
        let vehicles = vec![vehicle_at(0, Point::new(0.0, 0.0), 12.0)];
        let slow = vec![charger_at(0, Point::new(0.0, 0.0), 11.0)];
        let cand = vec![PoolEntry { vehicle_id: 0, reason: PoolReason::LowSoc, target: 32.0 }];
        let inst = instance(cand.clone(), &slow, vec![vec![0.0]], &vehicles, &econ, &grid);
        assert!(inst.pair_feasible(&cand[0], &slow[0]));
        let out = solve_with_relaxation(&inst, &SolverConfig::default(), f64::INFINITY).unwrap();
        assert_eq!(out.assignments.len(), 1);
        assert!((out.assignments[0].energy - 20.0).abs() < 1e-6);
        assert!(out.removed.is_empty());
    }

    #[test]
    fn colocated_vehicle_zero_access_and_wait() {
        let econ = EconomicParams::default();
        let grid = TimeGrid::default();
        let vehicles = vec![vehicle_at(0, Point::new(1.0, 1.0), 12.0)];
        let chargers = vec![charger_at(0, Point::new(1.0, 1.0), 50.0)];
        let cand = vec![PoolEntry { vehicle_id: 0, reason: PoolReason::LowSoc, target: 32.0 }];
        let inst = instance(cand, &chargers, vec![vec![0.0]], &vehicles, &econ, &grid);
        let model = build_assignment_model(&inst);
        let sol = solve_mip(&model, &SolverConfig::default()).unwrap();
        // Objective is charging minutes only: 20 kWh at 50 kW = 24 min.
        assert!((sol.objective - 24.0).abs() < 1e-6);
    }

    #[test]
    fn relaxation_drops_highest_soc() {
        // Two candidates, one charger: the lower-SoC vehicle wins the slot.
        let econ = EconomicParams::default();
        let grid = TimeGrid::default();
        let vehicles = vec![
            vehicle_at(0, Point::new(0.0, 0.0), 15.0),
            vehicle_at(1, Point::new(0.0, 0.0), 10.0),
        ];
        let chargers = vec![charger_at(0, Point::new(0.0, 0.0), 50.0)];
        let cand = vec![
            PoolEntry { vehicle_id: 0, reason: PoolReason::LowSoc, target: 32.0 },
            PoolEntry { vehicle_id: 1, reason: PoolReason::LowSoc, target: 32.0 },
        ];
        let inst = instance(cand, &chargers, vec![vec![0.0], vec![0.0]], &vehicles, &econ, &grid);
        let out = solve_with_relaxation(&inst, &SolverConfig::default(), f64::INFINITY).unwrap();
        assert_eq!(out.removed, vec![0]);
        assert_eq!(out.assignments.len(), 1);
        assert_eq!(out.assignments[0].vehicle_id, 1);
    }

    #[test]
    fn delay_rule_thresholds() {
        let econ = EconomicParams::default();
        let grid = TimeGrid::default();
        let vehicles = vec![vehicle_at(0, Point::new(0.0, 0.0), 12.0)];
        let chargers = vec![charger_at(0, Point::new(0.0, 0.0), 50.0)];
        let cand = vec![PoolEntry { vehicle_id: 0, reason: PoolReason::LowSoc, target: 32.0 }];
        let inst = instance(cand, &chargers, vec![vec![45.0]], &vehicles, &econ, &grid);
        // 45 min predicted wait > 30 min threshold: delayed.
        let out = solve_with_relaxation(&inst, &SolverConfig::default(), 30.0).unwrap();
        assert!(out.assignments.is_empty());
        assert_eq!(out.delayed, vec![0]);
        // No limit: dispatched.
        let out = solve_with_relaxation(&inst, &SolverConfig::default(), f64::INFINITY).unwrap();
        assert_eq!(out.assignments.len(), 1);
        assert!(out.delayed.is_empty());
    }
}
