//! Shared domain types: geometry, time grid, fares, energy arithmetic, and
//! the time-of-use price schedule.
//!
//! Units are fixed across the workspace: kilometers, clock minutes from
//! midnight, kWh, kW, and USD.

use serde::{Deserialize, Serialize};

use crate::{FleetError, Result};

pub type Minutes = f64;
pub type Km = f64;
pub type Kwh = f64;
pub type Usd = f64;

/// Planar location in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Km,
    pub y: Km,
}

impl Point {
    pub fn new(x: Km, y: Km) -> Self {
        Point { x, y }
    }
}

/// Distance metric on the plane. Rectilinear matches the Manhattan-style
/// street grid and is the default; Euclidean is available as a config option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Rectilinear,
    Euclidean,
}

pub fn dist(a: Point, b: Point, metric: Metric) -> Km {
    match metric {
        Metric::Rectilinear => (a.x - b.x).abs() + (a.y - b.y).abs(),
        Metric::Euclidean => ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt(),
    }
}

/// Service-day time discretization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimeGrid {
    /// First service minute of the day (6:00).
    pub service_start: Minutes,
    /// End of the service day (24:00).
    pub service_end: Minutes,
    /// Batch dispatch interval.
    pub batch_interval: Minutes,
    /// Charging decision epoch length.
    pub charge_epoch_interval: Minutes,
    /// Resolution of the energy price step function.
    pub price_resolution: Minutes,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            service_start: 360.0,
            service_end: 1440.0,
            batch_interval: 1.0,
            charge_epoch_interval: 30.0,
            price_resolution: 15.0,
        }
    }
}

impl TimeGrid {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_interval > 0.0
            && self.charge_epoch_interval > 0.0
            && self.price_resolution > 0.0;
        if !ok {
            return Err(FleetError::Validation("time intervals must be positive".into()));
        }
        let ratio = self.charge_epoch_interval / self.batch_interval;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(FleetError::Validation(
                "charge epoch interval must be a multiple of the batch interval".into(),
            ));
        }
        let span = self.service_end - self.service_start;
        let epochs = span / self.charge_epoch_interval;
        if span <= 0.0 || (epochs - epochs.round()).abs() > 1e-9 {
            return Err(FleetError::Validation(
                "service window must be a positive multiple of the charge epoch interval".into(),
            ));
        }
        Ok(())
    }

    /// Number of charging decision epochs in the service day.
    pub fn num_epochs(&self) -> usize {
        ((self.service_end - self.service_start) / self.charge_epoch_interval).round() as usize
    }

    /// 1-based epoch index of clock minute `t`; clamped to the service day.
    pub fn epoch_of(&self, t: Minutes) -> usize {
        let h = ((t - self.service_start) / self.charge_epoch_interval).floor() as i64 + 1;
        h.clamp(1, self.num_epochs() as i64) as usize
    }

    /// Clock minute at which 1-based epoch `h` starts.
    pub fn epoch_start(&self, h: usize) -> Minutes {
        self.service_start + (h as f64 - 1.0) * self.charge_epoch_interval
    }
}

/// Tariff, cost, and physical constants of the case study.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EconomicParams {
    /// Base fare in USD.
    pub base_fare: Usd,
    /// Distance fee in USD/km.
    pub distance_fare: Usd,
    /// Vehicle travel cost in USD/km.
    pub travel_cost_per_km: Usd,
    /// Energy consumption in kWh/km.
    pub consumption_per_km: Kwh,
    /// Constant vehicle speed in km/h.
    pub speed_kmh: f64,
    /// Maximum customer waiting time in minutes.
    pub max_customer_wait: Minutes,
    /// Low-SoC trigger threshold as a fraction of battery capacity.
    pub low_soc_fraction: f64,
    /// Opportunity cost of a vehicle-minute, USD/min (estimated from traces).
    pub gamma_per_minute: Usd,
    /// Charging access cost per session, USD.
    pub charging_access_cost: Usd,
}

impl Default for EconomicParams {
    fn default() -> Self {
        EconomicParams {
            base_fare: 8.0,
            distance_fare: 3.1,
            travel_cost_per_km: 0.53,
            consumption_per_km: 0.25,
            speed_kmh: 30.0,
            max_customer_wait: 10.0,
            low_soc_fraction: 0.20,
            gamma_per_minute: 0.5,
            charging_access_cost: 2.7,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.base_fare,
            self.distance_fare,
            self.travel_cost_per_km,
            self.consumption_per_km,
            self.speed_kmh,
            self.max_customer_wait,
            self.low_soc_fraction,
            self.gamma_per_minute,
            self.charging_access_cost,
        ];
        if vals.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(FleetError::Validation(
                "economic parameters must be strictly positive and finite".into(),
            ));
        }
        Ok(())
    }

    pub fn fare(&self, d: Km) -> Usd {
        self.base_fare + self.distance_fare * d
    }

    pub fn travel_time(&self, d: Km) -> Minutes {
        d / self.speed_kmh * 60.0
    }

    pub fn energy_for(&self, d: Km) -> Kwh {
        self.consumption_per_km * d
    }

    pub fn travel_cost(&self, d: Km) -> Usd {
        self.travel_cost_per_km * d
    }
}

/// Vehicle activity lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleState {
    Idle,
    ToPickup,
    Serving,
    ToCharger,
    QueuedAtCharger,
    Charging,
    /// Returning to the service area after an out-of-area dropoff.
    Relocating,
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: usize,
    pub location: Point,
    /// Current battery energy in kWh.
    pub soc: Kwh,
    pub battery_capacity: Kwh,
    pub e_min: Kwh,
    pub e_max: Kwh,
    pub e_init: Kwh,
    pub state: VehicleState,
    /// Post-charge target when the vehicle is pooled or charging.
    pub target_soc: Option<Kwh>,
    /// Destination charger while in the ToCharger state.
    pub heading_to: Option<usize>,
    pub busy_until: Minutes,
}

impl Vehicle {
    pub fn new(id: usize, location: Point, battery: Kwh, e_min_frac: f64, e_max_frac: f64) -> Self {
        Vehicle {
            id,
            location,
            soc: battery,
            battery_capacity: battery,
            e_min: battery * e_min_frac,
            e_max: battery * e_max_frac,
            e_init: battery,
            state: VehicleState::Idle,
            target_soc: None,
            heading_to: None,
            busy_until: 0.0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.state == VehicleState::Idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestStatus {
    Pending,
    Assigned,
    Served,
    Abandoned,
}

#[derive(Debug, Clone)]
pub struct Request {
    pub id: usize,
    pub origin: Point,
    pub destination: Point,
    pub arrival_time: Minutes,
    pub fare: Usd,
    /// Cumulative waiting time, updated while the request is pending.
    pub wait: Minutes,
    pub status: RequestStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChargerClass {
    Fast,
    Slow,
}

#[derive(Debug, Clone)]
pub struct Charger {
    pub id: usize,
    pub station_id: usize,
    pub location: Point,
    pub power_kw: f64,
    pub class: ChargerClass,
    /// Minimum session duration in minutes.
    pub min_charge_minutes: Minutes,
    /// Vehicle currently plugged in, if any.
    pub current: Option<usize>,
    /// End time of the current session.
    pub busy_until: Minutes,
    /// FIFO queue of (vehicle id, queue join time).
    pub queue: Vec<(usize, Minutes)>,
}

impl Charger {
    /// Maximum energy deliverable within one charging decision epoch.
    pub fn per_epoch_energy_cap(&self, grid: &TimeGrid) -> Kwh {
        self.power_kw * grid.charge_epoch_interval / 60.0
    }

    /// Minimum energy of a session honoring the duration floor.
    pub fn min_session_energy(&self) -> Kwh {
        self.min_charge_minutes * self.power_kw / 60.0
    }
}

/// Step-function energy price over the day.
#[derive(Debug, Clone)]
pub struct PriceSchedule {
    pub resolution: Minutes,
    /// Steps covering [0, resolution * steps.len()) from midnight.
    pub steps: Vec<Usd>,
}

impl PriceSchedule {
    pub fn constant(price: Usd, resolution: Minutes) -> Self {
        let n = (1440.0 / resolution).ceil() as usize;
        PriceSchedule {
            resolution,
            steps: vec![price; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution <= 0.0 || self.steps.is_empty() {
            return Err(FleetError::Validation("empty price schedule".into()));
        }
        if self.steps.iter().any(|p| !(*p > 0.0)) {
            return Err(FleetError::Validation("prices must be positive".into()));
        }
        Ok(())
    }

    pub fn end_minute(&self) -> Minutes {
        self.resolution * self.steps.len() as f64
    }

    pub fn price_at(&self, t: Minutes) -> Result<Usd> {
        if t < 0.0 || t >= self.end_minute() {
            return Err(FleetError::Validation(format!(
                "price query at minute {t} outside schedule [0, {})",
                self.end_minute()
            )));
        }
        Ok(self.steps[(t / self.resolution).floor() as usize])
    }

    /// Mean price over 1-based charging epoch `h` of `grid`.
    pub fn epoch_price(&self, h: usize, grid: &TimeGrid) -> Result<Usd> {
        let start = grid.epoch_start(h);
        let end = start + grid.charge_epoch_interval;
        if start < 0.0 || end > self.end_minute() + 1e-9 {
            return Err(FleetError::Validation(format!(
                "epoch {h} not covered by the price schedule"
            )));
        }
        let first = (start / self.resolution).round() as usize;
        let last = (end / self.resolution).round() as usize;
        let n = last - first;
        Ok(self.steps[first..last].iter().sum::<f64>() / n as f64)
    }

    /// Cost of charging `energy` kWh at constant `power_kw` starting at
    /// `start`, billed piecewise against the price steps spanned. Sessions
    /// running past the schedule's end wrap onto the next day's steps.
    pub fn energy_cost(&self, start: Minutes, power_kw: f64, energy: Kwh) -> Result<Usd> {
        if energy <= 0.0 {
            return Ok(0.0);
        }
        let duration = energy / power_kw * 60.0;
        let end = start + duration;
        let mut cost = 0.0;
        let mut t = start;
        while t < end - 1e-9 {
            let step_end = (t / self.resolution).floor() * self.resolution + self.resolution;
            let seg_end = step_end.min(end);
            let seg_energy = (seg_end - t) / 60.0 * power_kw;
            cost += seg_energy * self.price_at(t % self.end_minute())?;
            t = seg_end;
        }
        Ok(cost)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, resolution: Minutes) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows: Vec<(f64, f64)> = Vec::new();
        for (i, rec) in rdr.deserialize::<(f64, f64)>().enumerate() {
            let (start, price) =
                rec.map_err(|e| FleetError::Validation(format!("price row {}: {e}", i + 2)))?;
            rows.push((start, price));
        }
        if rows.is_empty() {
            return Err(FleetError::Validation("price file has no rows".into()));
        }
        let mut steps = Vec::with_capacity(rows.len());
        for (i, (start, price)) in rows.iter().enumerate() {
            let expected = i as f64 * resolution;
            if (start - expected).abs() > 1e-6 {
                return Err(FleetError::Validation(format!(
                    "price row {}: start minute {start} != expected {expected} (rows must be sorted and gap-free)",
                    i + 2
                )));
            }
            steps.push(*price);
        }
        let sched = PriceSchedule { resolution, steps };
        sched.validate()?;
        Ok(sched)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("start_minute,price_usd_per_kwh\n");
        for (i, p) in self.steps.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i as f64 * self.resolution, p));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dist_hand_values() {
        let m = Metric::Rectilinear;
        assert_eq!(dist(Point::new(0.0, 0.0), Point::new(0.0, 0.0), m), 0.0);
        assert_eq!(dist(Point::new(0.0, 0.0), Point::new(3.0, 4.0), m), 7.0);
        assert_eq!(dist(Point::new(1.0, 2.0), Point::new(4.0, 2.0), m), 3.0);
        assert_eq!(
            dist(Point::new(0.0, 0.0), Point::new(3.0, 4.0), Metric::Euclidean),
            5.0
        );
    }

    #[test]
    fn travel_time_hand_values() {
        let p = EconomicParams::default();
        assert_eq!(p.travel_time(0.0), 0.0);
        assert_eq!(p.travel_time(7.0), 14.0);
        assert_eq!(p.travel_time(5.0), 10.0);
    }

    #[test]
    fn fare_hand_values() {
        let p = EconomicParams::default();
        assert_eq!(p.fare(0.0), 8.0);
        assert!((p.fare(5.0) - 23.5).abs() < 1e-12);
        assert!((p.fare(10.0) - 39.0).abs() < 1e-12);
    }

    #[test]
    fn energy_hand_values() {
        let p = EconomicParams::default();
        assert_eq!(p.energy_for(0.0), 0.0);
        assert!((p.energy_for(7.0) - 1.75).abs() < 1e-12);
        assert!((p.energy_for(20.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_price_lookup() {
        let s = PriceSchedule::constant(0.33, 15.0);
        let grid = TimeGrid::default();
        assert_eq!(s.price_at(0.0).unwrap(), 0.33);
        assert_eq!(s.price_at(1439.9).unwrap(), 0.33);
        assert_eq!(s.epoch_price(1, &grid).unwrap(), 0.33);
        assert_eq!(s.epoch_price(36, &grid).unwrap(), 0.33);
        assert!(s.price_at(1500.0).is_err());
        assert!(s.price_at(-1.0).is_err());
    }

    #[test]
    fn epoch_price_is_mean_of_steps() {
        // Steps 0.10 then 0.20 covering the first 30-minute epoch.
        let mut steps = vec![0.33; 96];
        steps[24] = 0.10; // 360..375
        steps[25] = 0.20; // 375..390
        let s = PriceSchedule {
            resolution: 15.0,
            steps,
        };
        let grid = TimeGrid::default();
        assert!((s.epoch_price(1, &grid).unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn piecewise_energy_cost() {
        // Half the energy billed at 0.10, half at 0.20 -> effective 0.15.
        let mut steps = vec![0.33; 96];
        steps[24] = 0.10;
        steps[25] = 0.20;
        let s = PriceSchedule {
            resolution: 15.0,
            steps,
        };
        // 50 kW for 30 min starting at 360 -> 25 kWh, 12.5 in each step.
        let cost = s.energy_cost(360.0, 50.0, 25.0).unwrap();
        assert!((cost - 0.15 * 25.0).abs() < 1e-9);
    }

    #[test]
    fn epoch_indexing() {
        let g = TimeGrid::default();
        g.validate().unwrap();
        assert_eq!(g.num_epochs(), 36);
        assert_eq!(g.epoch_of(360.0), 1);
        assert_eq!(g.epoch_of(389.9), 1);
        assert_eq!(g.epoch_of(390.0), 2);
        assert_eq!(g.epoch_of(1439.0), 36);
        assert_eq!(g.epoch_start(1), 360.0);
        assert_eq!(g.epoch_start(36), 1410.0);
    }

    #[test]
    fn low_soc_trigger_above_reserve() {
        let p = EconomicParams::default();
        let v = Vehicle::new(0, Point::new(0.0, 0.0), 62.0, 0.10, 0.80);
        assert!(p.low_soc_fraction * v.battery_capacity > v.e_min);
    }

    #[test]
    fn charger_epoch_cap() {
        let g = TimeGrid::default();
        let c = Charger {
            id: 0,
            station_id: 0,
            location: Point::new(0.0, 0.0),
            power_kw: 50.0,
            class: ChargerClass::Fast,
            min_charge_minutes: 10.0,
            current: None,
            busy_until: 0.0,
            queue: Vec::new(),
        };
        assert!((c.per_epoch_energy_cap(&g) - 25.0).abs() < 1e-12);
        assert!((c.min_session_energy() - 50.0 / 6.0).abs() < 1e-12);
    }
}
