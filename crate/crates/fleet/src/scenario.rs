//! Experiment instance generation and bundle IO: study area, charger
//! network, synthetic demand stream, and time-of-use prices.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::core::{
    dist, Charger, ChargerClass, EconomicParams, Metric, Point, PriceSchedule, Request,
    RequestStatus, TimeGrid, Vehicle,
};
use crate::{FleetError, Result};

/// One charging station with a homogeneous bank of chargers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationSpec {
    pub station_id: usize,
    pub x: f64,
    pub y: f64,
    pub power_kw: f64,
    pub class: ChargerClass,
    pub count: usize,
}

/// Full configuration of a synthetic instance. Defaults reproduce the
/// base case study (100 vehicles, 62 kWh, 4 stations, 12 chargers).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub area_width_km: f64,
    pub area_height_km: f64,
    pub fleet_size: usize,
    pub battery_kwh: f64,
    pub e_min_frac: f64,
    pub e_max_frac: f64,
    pub demand_total: usize,
    pub min_trip_km: f64,
    pub dest_buffer_km: f64,
    pub alpha_minutes: f64,
    pub metric: Metric,
    pub grid: TimeGrid,
    pub econ: EconomicParams,
    /// Station layout; `None` selects the default 4-station layout.
    pub stations: Option<Vec<StationSpec>>,
    /// Flat price replacing the ToU curve (the "without ToU" configuration).
    pub constant_price: Option<f64>,
    /// Demand intensity weights per 10-minute bin; `None` selects the
    /// default peaked profile.
    pub demand_weights: Option<Vec<f64>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            area_width_km: 4.0,
            area_height_km: 20.0,
            fleet_size: 100,
            battery_kwh: 62.0,
            e_min_frac: 0.10,
            e_max_frac: 0.80,
            demand_total: 3000,
            min_trip_km: 5.0,
            dest_buffer_km: 5.0,
            alpha_minutes: 10.0,
            metric: Metric::Rectilinear,
            grid: TimeGrid::default(),
            econ: EconomicParams::default(),
            stations: None,
            constant_price: None,
            demand_weights: None,
        }
    }
}

/// A fully materialized experiment instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub fleet: Vec<Vehicle>,
    pub chargers: Vec<Charger>,
    pub requests: Vec<Request>,
    pub prices: PriceSchedule,
    pub seed: u64,
}

/// Default 4-station layout approximating the study-area figure: one fast
/// station bottom center, one center right, two slow stations on the west
/// side. Coordinates are configurable artifact defaults.
pub fn default_stations(chargers_per_station: usize) -> Vec<StationSpec> {
    vec![
        StationSpec {
            station_id: 0,
            x: 2.0,
            y: 3.0,
            power_kw: 50.0,
            class: ChargerClass::Fast,
            count: chargers_per_station,
        },
        StationSpec {
            station_id: 1,
            x: 3.5,
            y: 10.0,
            power_kw: 50.0,
            class: ChargerClass::Fast,
            count: chargers_per_station,
        },
        StationSpec {
            station_id: 2,
            x: 1.0,
            y: 7.0,
            power_kw: 11.0,
            class: ChargerClass::Slow,
            count: chargers_per_station,
        },
        StationSpec {
            station_id: 3,
            x: 2.0,
            y: 16.0,
            power_kw: 11.0,
            class: ChargerClass::Slow,
            count: chargers_per_station,
        },
    ]
}

/// Default ToU price curve at 15-minute resolution: cheap overnight, a
/// morning ramp, and an evening peak; range [0.09, 0.58] USD/kWh.
pub fn default_tou_prices(resolution: f64) -> PriceSchedule {
    let hourly = [
        0.12, 0.10, 0.09, 0.09, 0.10, 0.12, 0.18, 0.26, 0.34, 0.38, 0.33, 0.30, 0.32, 0.30, 0.28,
        0.30, 0.38, 0.48, 0.58, 0.55, 0.45, 0.32, 0.22, 0.15,
    ];
    let steps_per_hour = (60.0 / resolution).round() as usize;
    let offsets = [0.0, 0.01, -0.01, 0.0];
    let mut steps = Vec::with_capacity(24 * steps_per_hour);
    for (h, base) in hourly.iter().enumerate() {
        for q in 0..steps_per_hour {
            let p: f64 = base + offsets[q % offsets.len()];
            steps.push(p.clamp(0.09, 0.58));
        }
        let _ = h;
    }
    PriceSchedule { resolution, steps }
}

/// Default arrival-intensity weights per 10-minute bin over the service day,
/// peaked around 8:00-10:00, 12:00-13:00, and 15:00-18:00.
pub fn default_demand_weights(grid: &TimeGrid) -> Vec<f64> {
    let bins = ((grid.service_end - grid.service_start) / 10.0).round() as usize;
    (0..bins)
        .map(|b| {
            let hour = (grid.service_start + b as f64 * 10.0) / 60.0;
            match hour {
                h if h < 7.0 => 0.8,
                h if h < 8.0 => 1.4,
                h if h < 10.0 => 2.2,
                h if h < 12.0 => 1.2,
                h if h < 13.0 => 2.0,
                h if h < 15.0 => 1.2,
                h if h < 18.0 => 2.2,
                h if h < 20.0 => 1.4,
                h if h < 22.0 => 1.0,
                _ => 0.7,
            }
        })
        .collect()
}

/// Expand station specs into individual chargers.
pub fn generate_network(stations: &[StationSpec], alpha_minutes: f64) -> Vec<Charger> {
    let mut chargers = Vec::new();
    for s in stations {
        for _ in 0..s.count {
            chargers.push(Charger {
                id: chargers.len(),
                station_id: s.station_id,
                location: Point::new(s.x, s.y),
                power_kw: s.power_kw,
                class: s.class,
                min_charge_minutes: alpha_minutes,
                current: None,
                busy_until: 0.0,
                queue: Vec::new(),
            });
        }
    }
    chargers
}

/// Sample a demand stream: Poisson counts per 10-minute bin proportional to
/// the weights, uniform times within bins, uniform origins in the area, and
/// destinations in a buffered rectangle resampled until the minimum trip
/// length holds.
pub fn generate_demand(cfg: &ScenarioConfig, weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<Request> {
    let total_weight: f64 = weights.iter().sum();
    let mut times: Vec<f64> = Vec::new();
    for (b, w) in weights.iter().enumerate() {
        let mean = cfg.demand_total as f64 * w / total_weight;
        let count = if mean > 0.0 {
            Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
        } else {
            0
        };
        let bin_start = cfg.grid.service_start + b as f64 * 10.0;
        for _ in 0..count {
            times.push(bin_start + rng.random_range(0.0..10.0));
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut requests = Vec::with_capacity(times.len());
    for (id, t) in times.into_iter().enumerate() {
        let origin = Point::new(
            rng.random_range(0.0..cfg.area_width_km),
            rng.random_range(0.0..cfg.area_height_km),
        );
        let destination = loop {
            let d = Point::new(
                rng.random_range(-cfg.dest_buffer_km..cfg.area_width_km + cfg.dest_buffer_km),
                rng.random_range(-cfg.dest_buffer_km..cfg.area_height_km + cfg.dest_buffer_km),
            );
            if dist(origin, d, cfg.metric) >= cfg.min_trip_km {
                break d;
            }
        };
        let fare = cfg.econ.fare(dist(origin, destination, cfg.metric));
        requests.push(Request {
            id,
            origin,
            destination,
            arrival_time: t,
            fare,
            wait: 0.0,
            status: RequestStatus::Pending,
        });
    }
    requests
}

/// Materialize a scenario from a config and a seed. Pure: identical inputs
/// give an identical scenario.
pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    validate_config(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fleet: Vec<Vehicle> = (0..cfg.fleet_size)
        .map(|id| {
            let loc = Point::new(
                rng.random_range(0.0..cfg.area_width_km),
                rng.random_range(0.0..cfg.area_height_km),
            );
            Vehicle::new(id, loc, cfg.battery_kwh, cfg.e_min_frac, cfg.e_max_frac)
        })
        .collect();
    let stations = cfg
        .stations
        .clone()
        .unwrap_or_else(|| default_stations(3));
    let chargers = generate_network(&stations, cfg.alpha_minutes);
    let weights = cfg
        .demand_weights
        .clone()
        .unwrap_or_else(|| default_demand_weights(&cfg.grid));
    let requests = generate_demand(cfg, &weights, &mut rng);
    let prices = match cfg.constant_price {
        Some(p) => PriceSchedule::constant(p, cfg.grid.price_resolution),
        None => default_tou_prices(cfg.grid.price_resolution),
    };
    let scenario = Scenario {
        config: cfg.clone(),
        fleet,
        chargers,
        requests,
        prices,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn validate_config(cfg: &ScenarioConfig) -> Result<()> {
    cfg.grid.validate()?;
    cfg.econ.validate()?;
    if cfg.fleet_size == 0 || cfg.battery_kwh <= 0.0 {
        return Err(FleetError::Validation("fleet must be nonempty with positive battery".into()));
    }
    if !(cfg.e_min_frac >= 0.0 && cfg.e_min_frac < cfg.e_max_frac && cfg.e_max_frac <= 1.0) {
        return Err(FleetError::Validation("need 0 <= e_min_frac < e_max_frac <= 1".into()));
    }
    if let Some(stations) = &cfg.stations {
        for s in stations {
            if s.count == 0 || s.power_kw <= 0.0 {
                return Err(FleetError::Validation(format!(
                    "station {}: counts and powers must be positive",
                    s.station_id
                )));
            }
            if s.x < 0.0 || s.x > cfg.area_width_km || s.y < 0.0 || s.y > cfg.area_height_km {
                return Err(FleetError::Validation(format!(
                    "station {} lies outside the study area",
                    s.station_id
                )));
            }
        }
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        validate_config(&self.config)?;
        self.prices.validate()?;
        let cfg = &self.config;
        let mut last_t = f64::NEG_INFINITY;
        for r in &self.requests {
            if r.origin.x < 0.0
                || r.origin.x > cfg.area_width_km
                || r.origin.y < 0.0
                || r.origin.y > cfg.area_height_km
            {
                return Err(FleetError::Validation(format!(
                    "request {}: origin outside the study area",
                    r.id
                )));
            }
            let d = dist(r.origin, r.destination, cfg.metric);
            if d < cfg.min_trip_km - 1e-9 {
                return Err(FleetError::Validation(format!(
                    "request {}: trip length {d:.3} km below the {} km minimum",
                    r.id, cfg.min_trip_km
                )));
            }
            if r.arrival_time < last_t {
                return Err(FleetError::Validation(format!(
                    "request {}: arrival times must be nondecreasing",
                    r.id
                )));
            }
            last_t = r.arrival_time;
        }
        Ok(())
    }

    pub fn num_fast(&self) -> usize {
        self.chargers.iter().filter(|c| c.class == ChargerClass::Fast).count()
    }
}

// ---- bundle IO ----------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TripRow {
    pickup_minute: f64,
    origin_x: f64,
    origin_y: f64,
    dest_x: f64,
    dest_y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChargerRow {
    station_id: usize,
    x: f64,
    y: f64,
    power_kw: f64,
    class: String,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleMeta {
    seed: u64,
    #[serde(flatten)]
    config: ScenarioConfig,
}

/// Write a scenario as a bundle directory: `scenario.toml`, `trips.csv`,
/// `prices.csv`, `chargers.csv`.
pub fn save_bundle(scenario: &Scenario, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut cfg = scenario.config.clone();
    cfg.stations = Some(
        cfg.stations
            .clone()
            .unwrap_or_else(|| default_stations(3)),
    );
    let meta = BundleMeta {
        seed: scenario.seed,
        config: cfg,
    };
    let toml_text = toml::to_string_pretty(&meta)
        .map_err(|e| FleetError::Config(format!("serializing scenario.toml: {e}")))?;
    fs::write(dir.join("scenario.toml"), toml_text)?;

    let mut w = csv::Writer::from_path(dir.join("trips.csv"))?;
    for r in &scenario.requests {
        w.serialize(TripRow {
            pickup_minute: r.arrival_time,
            origin_x: r.origin.x,
            origin_y: r.origin.y,
            dest_x: r.destination.x,
            dest_y: r.destination.y,
        })?;
    }
    w.flush()?;

    fs::write(dir.join("prices.csv"), scenario.prices.to_csv_string())?;

    let mut w = csv::Writer::from_path(dir.join("chargers.csv"))?;
    let stations = scenario.config.stations.clone().unwrap_or_else(|| default_stations(3));
    for s in &stations {
        w.serialize(ChargerRow {
            station_id: s.station_id,
            x: s.x,
            y: s.y,
            power_kw: s.power_kw,
            class: match s.class {
                ChargerClass::Fast => "fast".into(),
                ChargerClass::Slow => "slow".into(),
            },
            count: s.count,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Load trips from CSV, validating each row and reporting line numbers.
pub fn load_trip_csv(path: &Path, cfg: &ScenarioConfig) -> Result<Vec<Request>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut requests = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (i, rec) in rdr.deserialize::<TripRow>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| FleetError::Validation(format!("trips line {line}: {e}")))?;
        let origin = Point::new(row.origin_x, row.origin_y);
        let destination = Point::new(row.dest_x, row.dest_y);
        let d = dist(origin, destination, cfg.metric);
        if d < cfg.min_trip_km - 1e-9 {
            return Err(FleetError::Validation(format!(
                "trips line {line}: trip length {d:.3} km below the {} km minimum",
                cfg.min_trip_km
            )));
        }
        if row.pickup_minute < last_t {
            return Err(FleetError::Validation(format!(
                "trips line {line}: pickup times must be sorted"
            )));
        }
        last_t = row.pickup_minute;
        requests.push(Request {
            id: requests.len(),
            origin,
            destination,
            arrival_time: row.pickup_minute,
            fare: cfg.econ.fare(d),
            wait: 0.0,
            status: RequestStatus::Pending,
        });
    }
    Ok(requests)
}

/// Load a scenario bundle directory written by [`save_bundle`].
pub fn load_bundle(dir: &Path) -> Result<Scenario> {
    let toml_text = fs::read_to_string(dir.join("scenario.toml"))?;
    let meta: BundleMeta = toml::from_str(&toml_text)
        .map_err(|e| FleetError::Config(format!("scenario.toml: {e}")))?;
    let cfg = meta.config;
    validate_config(&cfg)?;

    let requests = load_trip_csv(&dir.join("trips.csv"), &cfg)?;
    let prices = PriceSchedule::from_csv_reader(
        fs::File::open(dir.join("prices.csv"))?,
        cfg.grid.price_resolution,
    )?;

    let mut rdr = csv::Reader::from_path(dir.join("chargers.csv"))?;
    let mut stations = Vec::new();
    for (i, rec) in rdr.deserialize::<ChargerRow>().enumerate() {
        let row: ChargerRow =
            rec.map_err(|e| FleetError::Validation(format!("chargers line {}: {e}", i + 2)))?;
        let class = match row.class.as_str() {
            "fast" => ChargerClass::Fast,
            "slow" => ChargerClass::Slow,
            other => {
                return Err(FleetError::Validation(format!(
                    "chargers line {}: unknown class {other:?}",
                    i + 2
                )))
            }
        };
        stations.push(StationSpec {
            station_id: row.station_id,
            x: row.x,
            y: row.y,
            power_kw: row.power_kw,
            class,
            count: row.count,
        });
    }
    let chargers = generate_network(&stations, cfg.alpha_minutes);

    // Fleet initial locations are regenerated from the stored seed, using the
    // same stream position as `generate`.
    let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
    let fleet: Vec<Vehicle> = (0..cfg.fleet_size)
        .map(|id| {
            let loc = Point::new(
                rng.random_range(0.0..cfg.area_width_km),
                rng.random_range(0.0..cfg.area_height_km),
            );
            Vehicle::new(id, loc, cfg.battery_kwh, cfg.e_min_frac, cfg.e_max_frac)
        })
        .collect();

    let scenario = Scenario {
        config: cfg,
        fleet,
        chargers,
        requests,
        prices,
        seed: meta.seed,
    };
    scenario.validate()?;
    Ok(scenario)
}
