//! Deterministic continuous-time discrete-event engine: batch dispatch,
//! plan- and threshold-driven pool admission, online charger assignment,
//! charging physics, queue dynamics, and KPI accounting.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use milp::SolverConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assigner::{
    filter_pool, min_useful_energy, predicted_wait, solve_with_relaxation, AssignmentInstance,
    ChargePool, PoolEntry, PoolReason, TargetPolicy,
};
use crate::core::{
    dist, Charger, Km, Kwh, Minutes, PriceSchedule, Request, RequestStatus, Usd, Vehicle,
    VehicleState,
};
use crate::dispatch::{solve_dispatch, DispatchInstance};
use crate::planner::DayAheadPlan;
use crate::policies::{
    on_arrival_requeue, select_charger, should_trigger, PolicyKind, QueueBehavior, RequeueAction,
    ThresholdTable,
};
use crate::scenario::Scenario;
use crate::{FleetError, Result};

/// Run-time options of one simulated day.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub policy: PolicyKind,
    pub queue_behavior: QueueBehavior,
    /// Benchmark per-queue patience before chasing another charger.
    pub max_wait_at_charger: Minutes,
    /// Delay threshold of the online assignment (infinite disables it).
    pub max_queue_wait: Minutes,
    pub target_policy: TargetPolicy,
    pub threshold_table: ThresholdTable,
    /// Estimation mode: no charging, SoC bookkept without bounds.
    pub energy_unconstrained: bool,
    pub solver: SolverConfig,
    pub collect_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            policy: PolicyKind::Nearest,
            queue_behavior: QueueBehavior::ChasingB,
            max_wait_at_charger: 15.0,
            max_queue_wait: 30.0,
            target_policy: TargetPolicy::Anticipative,
            threshold_table: ThresholdTable::default(),
            energy_unconstrained: false,
            // per-minute models are assignment-shaped and solve fast; the
            // limit is a backstop against pathological instances
            solver: SolverConfig::default().with_time_limit(5.0),
            collect_trace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    ChargingFinished { vehicle: usize, charger: usize },
    TripCompleted { vehicle: usize, request: usize },
    Relocated { vehicle: usize },
    ArrivedPickup { vehicle: usize, request: usize },
    ArrivedCharger { vehicle: usize, charger: usize },
    RequestArrival { request: usize },
    ChargeEpochTick { epoch: usize },
    BatchTick,
    DayEnd,
}

impl EventKind {
    /// Tie-break priority at equal times; lower runs first. Freshly freed
    /// vehicles must be visible to arrivals, epoch admission, and the batch.
    fn priority(&self) -> u8 {
        match self {
            EventKind::ChargingFinished { .. } => 0,
            EventKind::TripCompleted { .. } | EventKind::Relocated { .. } => 1,
            EventKind::ArrivedPickup { .. } => 2,
            EventKind::ArrivedCharger { .. } => 3,
            EventKind::RequestArrival { .. } => 4,
            EventKind::ChargeEpochTick { .. } => 5,
            EventKind::BatchTick => 6,
            EventKind::DayEnd => 7,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: Minutes,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // BinaryHeap is a max-heap; reverse for earliest-first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.priority().cmp(&self.kind.priority()))
            .then(other.seq.cmp(&self.seq))
    }
}

/// One completed charging session.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub vehicle_id: usize,
    pub charger_id: usize,
    pub start: Minutes,
    pub duration: Minutes,
    pub energy: Kwh,
    pub cost: Usd,
    /// Time between joining the queue (or arriving) and plugging in.
    pub queue_wait: Minutes,
    /// 1-based epoch of the arrival at the charger.
    pub arrival_epoch: usize,
}

/// Flat event log row.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub time: Minutes,
    pub kind: &'static str,
    pub vehicle_id: Option<usize>,
    pub charger_id: Option<usize>,
    pub request_id: Option<usize>,
    pub detail: String,
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("time,event_kind,vehicle_id,charger_id,request_id,detail\n");
    let fmt = |o: Option<usize>| o.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.time,
            r.kind,
            fmt(r.vehicle_id),
            fmt(r.charger_id),
            fmt(r.request_id),
            r.detail
        ));
    }
    out
}

/// Day-level outcome and audit data.
#[derive(Debug, Clone, Default)]
pub struct KpiReport {
    pub revenue: Usd,
    pub charging_cost: Usd,
    pub charged_energy: Kwh,
    pub km_total: Km,
    pub served: usize,
    pub abandoned: usize,
    pub total_requests: usize,
    /// Total queue wait at chargers, minutes.
    pub wait_minutes: Minutes,
    /// Total plugged-in time, minutes.
    pub charge_minutes: Minutes,
    pub drive_minutes: Minutes,
    pub sessions: Vec<SessionRecord>,
    pub per_epoch_drive_energy: Vec<Kwh>,
    /// Vehicles plugged in, sampled at each epoch start.
    pub per_epoch_charging: Vec<usize>,
    /// Vehicles queued, sampled at each epoch start.
    pub per_epoch_waiting: Vec<usize>,
    pub final_soc: Vec<Kwh>,
    pub vehicle_km: Vec<Km>,
    pub vehicle_charged: Vec<Kwh>,
    pub travel_cost_per_km: Usd,
}

impl KpiReport {
    pub fn travel_cost(&self) -> Usd {
        self.travel_cost_per_km * self.km_total
    }

    /// PF = TR - TTC - CC.
    pub fn profit(&self) -> Usd {
        self.revenue - self.travel_cost() - self.charging_cost
    }

    /// Served fraction; 1.0 for an empty day.
    pub fn service_rate(&self) -> f64 {
        if self.total_requests == 0 {
            1.0
        } else {
            self.served as f64 / self.total_requests as f64
        }
    }

    pub const CSV_HEADER: &'static str =
        "pf_kusd,tr_kusd,ttc_kusd,cc_kusd,eng_kwh,sr_pct,kmt_1000km,tw_h,tc_h";

    /// One row in the reporting units: kUSD, kWh, %, 1000 km, hours.
    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{:.4},{:.4},{:.2},{:.2},{:.4},{:.3},{:.3}",
            self.profit() / 1000.0,
            self.revenue / 1000.0,
            self.travel_cost() / 1000.0,
            self.charging_cost / 1000.0,
            self.charged_energy,
            self.service_rate() * 100.0,
            self.km_total / 1000.0,
            self.wait_minutes / 60.0,
            self.charge_minutes / 60.0
        )
    }
}

/// Energy and billing of one session: at least the duration floor, never
/// beyond the battery's usable headroom.
pub fn plan_session(
    soc: Kwh,
    target: Kwh,
    capacity: Kwh,
    charger: &Charger,
    start: Minutes,
    prices: &PriceSchedule,
) -> Result<(Kwh, Minutes, Usd)> {
    let deficit = (target - soc).max(0.0);
    let energy = deficit
        .max(charger.min_session_energy())
        .min((capacity - soc).max(0.0));
    let duration = (energy * 60.0 / charger.power_kw).max(charger.min_charge_minutes);
    let cost = prices.energy_cost(start, charger.power_kw, energy)?;
    Ok((energy, duration, cost))
}

struct Sim<'a> {
    scenario: &'a Scenario,
    cfg: &'a SimConfig,
    plan: Option<&'a DayAheadPlan>,
    delta: Option<&'a [Kwh]>,
    vehicles: Vec<Vehicle>,
    chargers: Vec<Charger>,
    requests: Vec<Request>,
    pool: ChargePool,
    heap: BinaryHeap<Event>,
    seq: u64,
    rng: ChaCha8Rng,
    now: Minutes,
    /// Next unconsumed plan entry per vehicle.
    plan_cursor: Vec<usize>,
    /// Queue join time per vehicle, while queued or charging.
    join_time: Vec<Minutes>,
    arrival_epoch: Vec<usize>,
    report: KpiReport,
    trace: Vec<TraceRow>,
}

impl<'a> Sim<'a> {
    fn push(&mut self, time: Minutes, kind: EventKind) {
        debug_assert!(time >= self.now - 1e-9, "event scheduled in the past");
        self.seq += 1;
        self.heap.push(Event { time, seq: self.seq, kind });
    }

    fn log(
        &mut self,
        kind: &'static str,
        vehicle_id: Option<usize>,
        charger_id: Option<usize>,
        request_id: Option<usize>,
        detail: String,
    ) {
        if self.cfg.collect_trace {
            self.trace.push(TraceRow {
                time: self.now,
                kind,
                vehicle_id,
                charger_id,
                request_id,
                detail,
            });
        }
    }

    fn drive(&mut self, vehicle: usize, d: Km) {
        let econ = &self.scenario.config.econ;
        let energy = econ.energy_for(d);
        self.vehicles[vehicle].soc -= energy;
        self.report.km_total += d;
        self.report.vehicle_km[vehicle] += d;
        self.report.drive_minutes += econ.travel_time(d);
        let h = self.scenario.config.grid.epoch_of(self.now);
        self.report.per_epoch_drive_energy[h - 1] += energy;
        if !self.cfg.energy_unconstrained {
            debug_assert!(self.vehicles[vehicle].soc >= -1e-6, "SoC below zero");
        }
    }

    fn current_target(&self, v: &Vehicle) -> Kwh {
        let e_bar = match self.cfg.target_policy {
            TargetPolicy::Anticipative | TargetPolicy::FullToMax => v.e_max,
        };
        match self.delta {
            Some(delta) => crate::assigner::target_soc(
                self.cfg.target_policy,
                v.soc,
                e_bar,
                self.scenario.config.grid.epoch_of(self.now),
                delta,
                v.e_min,
            ),
            None => e_bar,
        }
    }

    fn admit_low_soc(&mut self) {
        let theta = self.scenario.config.econ.low_soc_fraction;
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            if v.is_idle() && v.soc < theta * v.battery_capacity && !self.pool.contains(i) {
                let target = self.current_target(&self.vehicles[i]);
                self.pool.admit(PoolEntry {
                    vehicle_id: i,
                    reason: PoolReason::LowSoc,
                    target,
                });
            }
        }
    }

    fn admit_planned(&mut self) {
        let Some(plan) = self.plan else { return };
        let h = self.scenario.config.grid.epoch_of(self.now);
        for i in 0..self.vehicles.len() {
            let cursor = self.plan_cursor[i];
            let Some(entry) = plan.entries[i].get(cursor) else { continue };
            if entry.epoch <= h && self.vehicles[i].is_idle() && !self.pool.contains(i) {
                // Cap the planned target by the anticipated remaining need so
                // late-day sessions shrink with the horizon.
                let target = entry.target_soc.min(self.current_target(&self.vehicles[i]));
                self.pool.admit(PoolEntry {
                    vehicle_id: i,
                    reason: PoolReason::Planned,
                    target,
                });
                self.plan_cursor[i] += 1;
            }
        }
    }

    /// Drop pooled vehicles whose deficit no longer justifies a session.
    fn prune_pool(&mut self, threshold: Kwh) {
        let stale: Vec<usize> = self
            .pool
            .entries()
            .iter()
            .filter(|e| {
                self.vehicles[e.vehicle_id].is_idle()
                    && e.target - self.vehicles[e.vehicle_id].soc < threshold - 1e-9
            })
            .map(|e| e.vehicle_id)
            .collect();
        for id in stale {
            self.pool.remove(id);
        }
    }

    fn clamp_to_area(&self, p: crate::core::Point) -> crate::core::Point {
        let cfg = &self.scenario.config;
        crate::core::Point::new(
            p.x.clamp(0.0, cfg.area_width_km),
            p.y.clamp(0.0, cfg.area_height_km),
        )
    }

    /// Out-of-area dropoffs drive straight back to the nearest in-area point;
    /// stranded-forever vehicles would otherwise bleed the fleet dry.
    fn relocate_if_outside(&mut self, vehicle: usize) {
        let loc = self.vehicles[vehicle].location;
        let target = self.clamp_to_area(loc);
        let d = dist(loc, target, self.scenario.config.metric);
        if d < 1e-9 {
            return;
        }
        let eta = self.now + self.scenario.config.econ.travel_time(d);
        self.vehicles[vehicle].state = VehicleState::Relocating;
        self.vehicles[vehicle].busy_until = eta;
        self.push(eta, EventKind::Relocated { vehicle });
    }

    fn send_to_charger(&mut self, vehicle: usize, charger: usize, target: Kwh) {
        let d = dist(
            self.vehicles[vehicle].location,
            self.chargers[charger].location,
            self.scenario.config.metric,
        );
        let eta = self.now + self.scenario.config.econ.travel_time(d);
        self.vehicles[vehicle].state = VehicleState::ToCharger;
        self.vehicles[vehicle].target_soc = Some(target);
        self.vehicles[vehicle].heading_to = Some(charger);
        self.vehicles[vehicle].busy_until = eta;
        self.pool.remove(vehicle);
        self.log(
            "charge_dispatch",
            Some(vehicle),
            Some(charger),
            None,
            format!("target={target:.3}"),
        );
        self.push(eta, EventKind::ArrivedCharger { vehicle, charger });
    }

    fn congestion_aware_charging(&mut self) {
        self.admit_planned();
        self.admit_low_soc();
        let threshold = min_useful_energy(&self.chargers);
        self.prune_pool(threshold);
        let candidates = filter_pool(&self.pool, &self.vehicles, threshold);
        if candidates.is_empty() {
            return;
        }
        let econ = &self.scenario.config.econ;
        let metric = self.scenario.config.metric;
        let wait: Vec<Vec<Minutes>> = candidates
            .iter()
            .map(|e| {
                let v = &self.vehicles[e.vehicle_id];
                self.chargers
                    .iter()
                    .map(|c| {
                        let eta =
                            self.now + econ.travel_time(dist(v.location, c.location, metric));
                        predicted_wait(c, eta, &self.vehicles)
                    })
                    .collect()
            })
            .collect();
        let inst = AssignmentInstance {
            candidates,
            chargers: &self.chargers,
            wait,
            vehicles: &self.vehicles,
            econ,
            metric,
            grid: &self.scenario.config.grid,
        };
        let outcome = match solve_with_relaxation(&inst, &self.cfg.solver, self.cfg.max_queue_wait)
        {
            Ok(o) => o,
            Err(_) => return,
        };
        for vid in &outcome.delayed {
            self.pool.mark_delayed(*vid);
        }
        // Removed vehicles stay pooled: idle, dispatchable, retried next tick.
        for a in outcome.assignments {
            let target = self
                .pool
                .entries()
                .iter()
                .find(|e| e.vehicle_id == a.vehicle_id)
                .map(|e| e.target)
                .unwrap_or(self.vehicles[a.vehicle_id].e_max);
            self.send_to_charger(a.vehicle_id, a.charger_id, target);
        }
    }

    fn benchmark_charging(&mut self) {
        let theta = self.scenario.config.econ.low_soc_fraction;
        let econ = self.scenario.config.econ;
        let metric = self.scenario.config.metric;
        for i in 0..self.vehicles.len() {
            if !self.vehicles[i].is_idle() {
                continue;
            }
            if !should_trigger(
                self.cfg.policy,
                &self.vehicles[i],
                self.now,
                &self.cfg.threshold_table,
                theta,
            ) {
                continue;
            }
            let pick = select_charger(
                self.cfg.policy,
                &self.vehicles[i],
                &self.chargers,
                &self.vehicles,
                &econ,
                metric,
                self.now,
                &mut self.rng,
            );
            if let Some(c) = pick {
                let target = self.vehicles[i].e_max;
                self.send_to_charger(i, c, target);
            }
        }
    }

    fn abandon_overdue(&mut self) {
        let w_max = self.scenario.config.econ.max_customer_wait;
        for i in 0..self.requests.len() {
            let overdue = {
                let r = &mut self.requests[i];
                if r.status == RequestStatus::Pending && r.arrival_time <= self.now {
                    r.wait = self.now - r.arrival_time;
                    if r.wait >= w_max {
                        r.status = RequestStatus::Abandoned;
                        true
                    } else {
                        false
                    }
                } else {
                    false
                }
            };
            if overdue {
                self.report.abandoned += 1;
                self.log("abandoned", None, None, Some(i), String::new());
            }
        }
    }

    fn dispatch_customers(&mut self) {
        let pending: Vec<usize> = self
            .requests
            .iter()
            .filter(|r| r.status == RequestStatus::Pending && r.arrival_time <= self.now)
            .map(|r| r.id)
            .collect();
        let idle: Vec<usize> = self
            .vehicles
            .iter()
            .filter(|v| v.is_idle())
            .map(|v| v.id)
            .collect();
        if pending.is_empty() || idle.is_empty() {
            return;
        }
        let reqs: Vec<Request> = pending.iter().map(|&i| self.requests[i].clone()).collect();
        let mut vehs: Vec<Vehicle> = idle.iter().map(|&i| self.vehicles[i].clone()).collect();
        if self.cfg.energy_unconstrained {
            // estimation mode serves demand as if batteries never ran down
            for v in &mut vehs {
                v.soc = v.battery_capacity;
            }
        }
        let inst = DispatchInstance {
            requests: &reqs,
            vehicles: &vehs,
            econ: &self.scenario.config.econ,
            metric: self.scenario.config.metric,
            now: self.now,
        };
        let result = match solve_dispatch(&inst, &self.cfg.solver) {
            Ok(r) => r,
            Err(_) => return,
        };
        for (rid, vid) in result.matching {
            let d = dist(
                self.vehicles[vid].location,
                self.requests[rid].origin,
                self.scenario.config.metric,
            );
            let eta = self.now + self.scenario.config.econ.travel_time(d);
            self.requests[rid].status = RequestStatus::Assigned;
            self.vehicles[vid].state = VehicleState::ToPickup;
            self.vehicles[vid].busy_until = eta;
            self.pool.remove(vid);
            self.log("dispatch", Some(vid), None, Some(rid), String::new());
            self.push(eta, EventKind::ArrivedPickup { vehicle: vid, request: rid });
        }
    }

    fn start_session(&mut self, vehicle: usize, charger: usize) -> Result<()> {
        debug_assert!(self.chargers[charger].current.is_none(), "charger overlap");
        let v = &self.vehicles[vehicle];
        let target = v.target_soc.unwrap_or(v.e_max);
        let (energy, duration, cost) = plan_session(
            v.soc,
            target,
            v.battery_capacity,
            &self.chargers[charger],
            self.now,
            &self.scenario.prices,
        )?;
        let wait = self.now - self.join_time[vehicle];
        self.report.wait_minutes += wait;
        self.report.charge_minutes += duration;
        self.report.charging_cost += cost;
        self.report.charged_energy += energy;
        self.report.vehicle_charged[vehicle] += energy;
        self.report.sessions.push(SessionRecord {
            vehicle_id: vehicle,
            charger_id: charger,
            start: self.now,
            duration,
            energy,
            cost,
            queue_wait: wait,
            arrival_epoch: self.arrival_epoch[vehicle],
        });
        self.vehicles[vehicle].state = VehicleState::Charging;
        self.vehicles[vehicle].busy_until = self.now + duration;
        self.chargers[charger].current = Some(vehicle);
        self.chargers[charger].busy_until = self.now + duration;
        self.log(
            "charging_started",
            Some(vehicle),
            Some(charger),
            None,
            format!("energy={energy:.3},wait={wait:.2}"),
        );
        self.push(self.now + duration, EventKind::ChargingFinished { vehicle, charger });
        // the delivered energy lands on the battery when the session ends
        self.vehicles[vehicle].target_soc = Some(self.vehicles[vehicle].soc + energy);
        Ok(())
    }

    fn arrived_at_charger(&mut self, vehicle: usize, charger: usize) -> Result<()> {
        let d = dist(
            self.vehicles[vehicle].location,
            self.chargers[charger].location,
            self.scenario.config.metric,
        );
        self.drive(vehicle, d);
        self.vehicles[vehicle].location = self.chargers[charger].location;
        // Clear before any wait lookups so the vehicle never counts itself.
        self.vehicles[vehicle].heading_to = None;
        self.arrival_epoch[vehicle] = self.scenario.config.grid.epoch_of(self.now);
        // Chasing applies to benchmark runs on arrival only.
        if self.cfg.policy != PolicyKind::CongestionAware
            && self.chargers[charger].current.is_some()
        {
            let action = on_arrival_requeue(
                self.cfg.queue_behavior,
                &self.vehicles[vehicle],
                &self.chargers[charger],
                &self.chargers,
                &self.vehicles,
                &self.scenario.config.econ,
                self.scenario.config.metric,
                self.now,
                self.cfg.max_wait_at_charger,
            );
            if let RequeueAction::MoveTo(next) = action {
                let d = dist(
                    self.vehicles[vehicle].location,
                    self.chargers[next].location,
                    self.scenario.config.metric,
                );
                let eta = self.now + self.scenario.config.econ.travel_time(d);
                self.vehicles[vehicle].state = VehicleState::ToCharger;
                self.vehicles[vehicle].heading_to = Some(next);
                self.vehicles[vehicle].busy_until = eta;
                self.log("requeue", Some(vehicle), Some(next), None, String::new());
                self.push(eta, EventKind::ArrivedCharger { vehicle, charger: next });
                return Ok(());
            }
        }
        self.join_time[vehicle] = self.now;
        self.log("arrived_charger", Some(vehicle), Some(charger), None, String::new());
        if self.chargers[charger].current.is_none() {
            self.start_session(vehicle, charger)?;
        } else {
            self.vehicles[vehicle].state = VehicleState::QueuedAtCharger;
            self.chargers[charger].queue.push((vehicle, self.now));
        }
        Ok(())
    }

    fn handle(&mut self, ev: Event) -> Result<()> {
        debug_assert!(ev.time >= self.now - 1e-9, "clock moved backwards");
        self.now = ev.time;
        match ev.kind {
            EventKind::RequestArrival { request } => {
                self.log("request_arrival", None, None, Some(request), String::new());
            }
            EventKind::ArrivedPickup { vehicle, request } => {
                let origin = self.requests[request].origin;
                let d = dist(
                    self.vehicles[vehicle].location,
                    origin,
                    self.scenario.config.metric,
                );
                self.drive(vehicle, d);
                self.vehicles[vehicle].location = origin;
                let r = &mut self.requests[request];
                r.wait = self.now - r.arrival_time;
                r.status = RequestStatus::Served;
                self.report.served += 1;
                self.report.revenue += r.fare;
                let trip = dist(r.origin, r.destination, self.scenario.config.metric);
                let eta = self.now + self.scenario.config.econ.travel_time(trip);
                let wait = r.wait;
                self.vehicles[vehicle].state = VehicleState::Serving;
                self.vehicles[vehicle].busy_until = eta;
                self.log(
                    "pickup",
                    Some(vehicle),
                    None,
                    Some(request),
                    format!("wait={wait:.2}"),
                );
                self.push(eta, EventKind::TripCompleted { vehicle, request });
            }
            EventKind::TripCompleted { vehicle, request } => {
                let dest = self.requests[request].destination;
                let d = dist(
                    self.vehicles[vehicle].location,
                    dest,
                    self.scenario.config.metric,
                );
                self.drive(vehicle, d);
                self.vehicles[vehicle].location = dest;
                self.vehicles[vehicle].state = VehicleState::Idle;
                self.log("trip_completed", Some(vehicle), None, Some(request), String::new());
                self.relocate_if_outside(vehicle);
            }
            EventKind::Relocated { vehicle } => {
                let target = self.clamp_to_area(self.vehicles[vehicle].location);
                let d = dist(
                    self.vehicles[vehicle].location,
                    target,
                    self.scenario.config.metric,
                );
                self.drive(vehicle, d);
                self.vehicles[vehicle].location = target;
                self.vehicles[vehicle].state = VehicleState::Idle;
                self.log("relocated", Some(vehicle), None, None, String::new());
            }
            EventKind::ArrivedCharger { vehicle, charger } => {
                self.arrived_at_charger(vehicle, charger)?;
            }
            EventKind::ChargingFinished { vehicle, charger } => {
                let v = &mut self.vehicles[vehicle];
                v.soc = v.target_soc.take().unwrap_or(v.soc).min(v.battery_capacity);
                v.state = VehicleState::Idle;
                debug_assert_eq!(self.chargers[charger].current, Some(vehicle));
                self.chargers[charger].current = None;
                self.log("charging_finished", Some(vehicle), Some(charger), None, String::new());
                if !self.chargers[charger].queue.is_empty() {
                    let (next, _) = self.chargers[charger].queue.remove(0);
                    self.start_session(next, charger)?;
                }
            }
            EventKind::ChargeEpochTick { epoch } => {
                let charging =
                    self.vehicles.iter().filter(|v| v.state == VehicleState::Charging).count();
                let waiting = self
                    .vehicles
                    .iter()
                    .filter(|v| v.state == VehicleState::QueuedAtCharger)
                    .count();
                self.report.per_epoch_charging[epoch - 1] = charging;
                self.report.per_epoch_waiting[epoch - 1] = waiting;
            }
            EventKind::BatchTick => {
                self.abandon_overdue();
                if !self.cfg.energy_unconstrained {
                    match self.cfg.policy {
                        PolicyKind::CongestionAware => self.congestion_aware_charging(),
                        _ => self.benchmark_charging(),
                    }
                }
                self.dispatch_customers();
            }
            EventKind::DayEnd => {
                for r in &mut self.requests {
                    if r.status == RequestStatus::Pending {
                        r.status = RequestStatus::Abandoned;
                        self.report.abandoned += 1;
                    }
                }
                self.log("day_end", None, None, None, String::new());
            }
        }
        Ok(())
    }
}

/// Execute one service day and drain in-flight activity past its end.
pub fn run_day(
    scenario: &Scenario,
    plan: Option<&DayAheadPlan>,
    delta: Option<&[Kwh]>,
    cfg: &SimConfig,
    seed: u64,
) -> Result<(KpiReport, Vec<TraceRow>)> {
    scenario.validate()?;
    if cfg.policy == PolicyKind::CongestionAware && plan.is_none() && delta.is_none() {
        return Err(FleetError::Config(
            "congestion-aware runs need a plan or estimated consumption".into(),
        ));
    }
    let grid = &scenario.config.grid;
    let nh = grid.num_epochs();
    let nv = scenario.fleet.len();
    let mut sim = Sim {
        scenario,
        cfg,
        plan,
        delta,
        vehicles: scenario.fleet.clone(),
        chargers: scenario.chargers.clone(),
        requests: scenario.requests.clone(),
        pool: ChargePool::default(),
        heap: BinaryHeap::new(),
        seq: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
        now: grid.service_start,
        plan_cursor: vec![0; nv],
        join_time: vec![0.0; nv],
        arrival_epoch: vec![0; nv],
        report: KpiReport {
            total_requests: scenario.requests.len(),
            per_epoch_drive_energy: vec![0.0; nh],
            per_epoch_charging: vec![0; nh],
            per_epoch_waiting: vec![0; nh],
            final_soc: vec![0.0; nv],
            vehicle_km: vec![0.0; nv],
            vehicle_charged: vec![0.0; nv],
            travel_cost_per_km: scenario.config.econ.travel_cost_per_km,
            ..KpiReport::default()
        },
        trace: Vec::new(),
    };
    for r in &scenario.requests {
        sim.push(r.arrival_time, EventKind::RequestArrival { request: r.id });
    }
    for h in 1..=nh {
        sim.push(grid.epoch_start(h), EventKind::ChargeEpochTick { epoch: h });
    }
    let mut t = grid.service_start;
    while t < grid.service_end {
        sim.push(t, EventKind::BatchTick);
        t += grid.batch_interval;
    }
    sim.push(grid.service_end, EventKind::DayEnd);

    while let Some(ev) = sim.heap.pop() {
        sim.handle(ev)?;
    }

    for (i, v) in sim.vehicles.iter().enumerate() {
        sim.report.final_soc[i] = v.soc;
    }
    // energy ledger: final = initial - driven + charged
    for i in 0..nv {
        let expected = scenario.fleet[i].soc
            - scenario.config.econ.energy_for(sim.report.vehicle_km[i])
            + sim.report.vehicle_charged[i];
        debug_assert!(
            (sim.report.final_soc[i] - expected).abs() < 1e-6,
            "energy ledger broken for vehicle {i}"
        );
    }
    Ok((sim.report, sim.trace))
}
