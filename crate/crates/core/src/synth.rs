//! Synthetic charging-event generator.
//!
//! Each day's arrivals form an inhomogeneous Poisson process. The hourly
//! intensity is a daily profile, raised during 08:00–17:00 by the work-hour
//! multiplier and modulated by a latent campus-demand factor shared by every
//! station.
//!
//! Arrivals are habitual. With probability `habit` a session recurs on the
//! next day as an exact copy. Fresh arrivals are drawn at `1 − habit` times
//! the full intensity, so every day is marginally the same Poisson process.
//!
//! Stations are partitioned into small groups, reshuffled every
//! `regroup_days`. An arrival event is either a single vehicle at one station
//! or a group arrival that plugs in every free station of a group for one
//! shared session. `neighbor_coupling` is the fraction of arrival events that
//! are group arrivals and also scales the variance of the campus-demand
//! factor, so a coupling of zero gives independent stations.
//!
//! Sessions are exponential with the configured mean, truncated at 24 hours.
//! An arrival at a station that is still busy is dropped, so no station ever
//! holds two sessions at once. The base rate and a duration scale are
//! calibrated by repeated simulation until the discretized occupancy and the
//! mean session length match their targets.

use chrono::{DateTime, Duration, FixedOffset};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{discretize, grid_stats, EventRecord, HOURS_PER_DAY, HOURS_PER_WEEK};

const SECONDS_PER_HOUR: f64 = 3600.0;
const MAX_SESSION_SECONDS: f64 = 24.0 * SECONDS_PER_HOUR;
const WORK_START: usize = 8;
const WORK_END: usize = 17;
/// Log-scale standard deviation of the demand factor at full coupling.
const DEMAND_SIGMA: f64 = 0.8;
/// Hour-to-hour autocorrelation of the log demand factor.
const DEMAND_PERSISTENCE: f64 = 0.85;
const BISECTION_ROUNDS: usize = 40;
const MAX_EXPANSIONS: usize = 40;
/// Calibration stops once occupancy is this close to the target.
const OCCUPANCY_TOLERANCE: f64 = 5e-4;
const SCALE_ROUNDS: usize = 6;
/// Duration rescaling stops once the mean session is this close, in seconds.
const DURATION_TOLERANCE_SECONDS: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_stations: usize,
    pub weeks: usize,
    pub rng_seed: u64,
    pub target_occupancy: f64,
    pub mean_session_minutes: f64,
    pub workhour_arrival_multiplier: f64,
    pub neighbor_coupling: f64,
    /// Stations per group for group arrivals.
    pub group_size: usize,
    /// Days between reshuffles of the station groups.
    pub regroup_days: usize,
    /// Probability that a session recurs at the same time on the next day.
    pub habit: f64,
    /// First hour of the generated timeline; aligned to an hour boundary.
    pub origin: DateTime<FixedOffset>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_stations: 57,
            weeks: 10,
            rng_seed: 0,
            target_occupancy: 0.1073,
            mean_session_minutes: 216.0,
            workhour_arrival_multiplier: 6.0,
            neighbor_coupling: 0.5,
            group_size: 4,
            regroup_days: 7,
            habit: 0.9,
            origin: default_origin(),
        }
    }
}

/// Monday 2020-01-06 00:00 UTC.
pub fn default_origin() -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339("2020-01-06T00:00:00Z").expect("valid literal")
}

impl SynthConfig {
    pub fn hours(&self) -> usize {
        self.weeks * HOURS_PER_WEEK
    }

    pub fn station_ids(&self) -> Vec<String> {
        let width = (self.n_stations.max(1) - 1).to_string().len().max(2);
        (0..self.n_stations)
            .map(|i| format!("S{i:0width$}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_stations < 2 {
            return invalid("n_stations must be at least 2");
        }
        if self.weeks == 0 {
            return invalid("weeks must be at least 1");
        }
        if !(self.target_occupancy > 0.0 && self.target_occupancy < 1.0) {
            return invalid("target_occupancy must lie in (0, 1)");
        }
        if !(self.mean_session_minutes > 0.0 && self.mean_session_minutes.is_finite()) {
            return invalid("mean_session_minutes must be positive");
        }
        if !(self.workhour_arrival_multiplier >= 1.0
            && self.workhour_arrival_multiplier.is_finite())
        {
            return invalid("workhour_arrival_multiplier must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.neighbor_coupling) {
            return invalid("neighbor_coupling must lie in [0, 1]");
        }
        if self.group_size == 0 {
            return invalid("group_size must be at least 1");
        }
        if self.regroup_days == 0 {
            return invalid("regroup_days must be at least 1");
        }
        if !(0.0..1.0).contains(&self.habit) {
            return invalid("habit must lie in [0, 1)");
        }
        Ok(())
    }

    fn profile(&self, hour_of_day: usize) -> f64 {
        if (WORK_START..WORK_END).contains(&hour_of_day) {
            self.workhour_arrival_multiplier
        } else {
            1.0
        }
    }
}

/// Generates a calibrated event log.
///
/// The base rate is tuned for the occupancy target. Because sessions recur
/// from day to day, the realized mean duration of one run can stray from the
/// configured mean, so durations are rescaled and the rate tuned again until
/// both match.
pub fn generate(config: &SynthConfig) -> Result<Vec<EventRecord>> {
    config.validate()?;
    let structure = Structure::draw(config);
    let target_seconds = config.mean_session_minutes * 60.0;
    let mut scale = 1.0;
    let mut best: Option<(f64, Vec<EventRecord>)> = None;
    for _ in 0..SCALE_ROUNDS {
        let events = calibrate_rate(config, &structure, scale)?;
        let mean = mean_duration_seconds(&events);
        let miss = (mean - target_seconds).abs();
        if best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, events));
        }
        if miss < DURATION_TOLERANCE_SECONDS || mean <= 0.0 {
            break;
        }
        scale *= target_seconds / mean;
    }
    Ok(best.map(|(_, events)| events).unwrap_or_default())
}

fn mean_duration_seconds(events: &[EventRecord]) -> f64 {
    if events.is_empty() {
        return 0.0;
    }
    events
        .iter()
        .map(|e| e.duration_seconds() as f64)
        .sum::<f64>()
        / events.len() as f64
}

/// Bisects the base rate until the discretized occupancy meets the target.
fn calibrate_rate(
    config: &SynthConfig,
    structure: &Structure,
    scale: f64,
) -> Result<Vec<EventRecord>> {
    let stations = config.station_ids();
    let occupancy = |rate: f64| -> Result<(f64, Vec<EventRecord>)> {
        let events = simulate(config, structure, rate, scale)?;
        let grid = discretize(&events, config.origin, config.hours(), &stations)?;
        Ok((grid_stats(&grid).occupancy_rate, events))
    };

    let target = config.target_occupancy;
    let mean_profile =
        (0..HOURS_PER_DAY).map(|h| config.profile(h)).sum::<f64>() / HOURS_PER_DAY as f64;
    // each session touches about (mean duration in hours + 1) hourly cells
    let guess = target / ((scale * config.mean_session_minutes / 60.0 + 1.0) * mean_profile);

    let mut lo = 0.0;
    let mut hi = guess;
    let mut best = occupancy(hi)?;
    let mut expansions = 0;
    while best.0 < target {
        lo = hi;
        hi *= 2.0;
        let next = occupancy(hi)?;
        expansions += 1;
        if expansions > MAX_EXPANSIONS || next.0 <= best.0 && next.0 < target {
            return Err(Error::InfeasibleOccupancy {
                target,
                achieved: next.0.max(best.0),
            });
        }
        best = next;
    }
    // the randomness is shared across rates, so occupancy grows with the rate
    for _ in 0..BISECTION_ROUNDS {
        if (best.0 - target).abs() < OCCUPANCY_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let trial = occupancy(mid)?;
        if trial.0 < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (trial.0 - target).abs() < (best.0 - target).abs() {
            best = trial;
        }
    }
    Ok(best.1)
}

/// Rate-independent random structure: station groups and the demand path.
struct Structure {
    /// Station groups in force for each regrouping period.
    groups: Vec<Vec<Vec<usize>>>,
    /// Campus-demand multiplier per hour.
    demand: Vec<f64>,
}

impl Structure {
    fn draw(config: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let hours = config.hours();
        let period = HOURS_PER_DAY * config.regroup_days;
        let group_size = config.group_size.min(config.n_stations);
        let mut order: Vec<usize> = (0..config.n_stations).collect();
        let groups = (0..hours.div_ceil(period))
            .map(|_| {
                order.shuffle(&mut rng);
                order.chunks(group_size).map(<[usize]>::to_vec).collect()
            })
            .collect();

        let sigma = config.neighbor_coupling * DEMAND_SIGMA;
        let innovation = (1.0 - DEMAND_PERSISTENCE * DEMAND_PERSISTENCE).sqrt();
        let mut level: f64 = StandardNormal.sample(&mut rng);
        let demand = (0..hours)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                level = DEMAND_PERSISTENCE * level + innovation * z;
                (sigma * level - 0.5 * sigma * sigma).exp()
            })
            .collect();
        Self { groups, demand }
    }
}

/// Independent stream for one (hour, arrival source) cell.
fn cell_rng(seed: u64, hour: usize, source: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((hour as u64) << 32) | source as u64);
    rng
}

/// Poisson draw by CDF inversion of a single uniform, monotone in `mean`.
fn poisson_inverse(u: f64, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

/// A session template that may recur on later days.
struct Arrival {
    id: u64,
    /// Seconds after the start of the day.
    offset: f64,
    duration: f64,
    stations: Vec<usize>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) determined by the seed, the template id and the day.
fn recurrence_draw(seed: u64, id: u64, day: usize) -> f64 {
    let z = splitmix(seed ^ splitmix(id ^ splitmix(day as u64)));
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Runs the arrival process with a fixed per-station base rate.
fn simulate(
    config: &SynthConfig,
    structure: &Structure,
    rate: f64,
    scale: f64,
) -> Result<Vec<EventRecord>> {
    let n = config.n_stations;
    let coupling = config.neighbor_coupling;
    let group_size = config.group_size.min(n);
    let durations = Exp::new(1.0 / (config.mean_session_minutes * 60.0))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    // Share of each station's sessions that come from group arrivals when a
    // fraction `coupling` of arrival events are group arrivals.
    let group_share = if group_size > 1 {
        let g = group_size as f64;
        coupling * g / (coupling * g + 1.0 - coupling)
    } else {
        0.0
    };
    let period = HOURS_PER_DAY * config.regroup_days;
    let days = config.hours() / HOURS_PER_DAY;

    let mut busy_until = vec![0.0f64; n];
    let mut events = Vec::new();
    let mut today: Vec<Arrival> = Vec::new();
    let draw = |rng: &mut ChaCha8Rng,
                mean: f64,
                base: u64,
                hour_offset: f64,
                stations: &[usize],
                out: &mut Vec<Arrival>| {
        let count = poisson_inverse(rng.random::<f64>(), mean);
        for k in 0..count {
            out.push(Arrival {
                id: base.wrapping_add(k as u64),
                offset: hour_offset + (rng.random::<f64>() * SECONDS_PER_HOUR).floor(),
                duration: (scale * durations.sample(rng))
                    .min(MAX_SESSION_SECONDS)
                    .round()
                    .max(1.0),
                stations: stations.to_vec(),
            });
        }
    };

    for day in 0..days {
        // templates from yesterday recur independently with probability `habit`
        today.retain(|a| recurrence_draw(config.rng_seed, a.id, day) < config.habit);
        // fresh arrivals top the process back up to its full intensity
        let fresh = if day == 0 { 1.0 } else { 1.0 - config.habit };
        for hour_in_day in 0..HOURS_PER_DAY {
            let hour = day * HOURS_PER_DAY + hour_in_day;
            let hour_of_day = (config.origin_hour() + hour) % HOURS_PER_DAY;
            let intensity = fresh * rate * config.profile(hour_of_day) * structure.demand[hour];
            let groups = &structure.groups[hour / period];
            let hour_offset = hour_in_day as f64 * SECONDS_PER_HOUR;
            let base = |source: usize| ((hour as u64) << 40) | ((source as u64) << 20);

            for station in 0..n {
                let mut rng = cell_rng(config.rng_seed, hour, station);
                let mean = intensity * (1.0 - group_share);
                draw(
                    &mut rng,
                    mean,
                    base(station),
                    hour_offset,
                    &[station],
                    &mut today,
                );
            }
            if group_share > 0.0 {
                for (g, group) in groups.iter().enumerate().filter(|(_, g)| g.len() > 1) {
                    let mut rng = cell_rng(config.rng_seed, hour, n + g);
                    let mean = intensity * group_share;
                    draw(&mut rng, mean, base(n + g), hour_offset, group, &mut today);
                }
            }
        }
        today.sort_by(|a, b| a.offset.total_cmp(&b.offset).then(a.id.cmp(&b.id)));

        let day_start = (day * HOURS_PER_DAY) as f64 * SECONDS_PER_HOUR;
        for arrival in &today {
            let plug = day_start + arrival.offset;
            for &station in &arrival.stations {
                if busy_until[station] > plug {
                    continue;
                }
                busy_until[station] = plug + arrival.duration;
                events.push((plug as i64, station, (plug + arrival.duration) as i64));
            }
        }
    }

    let ids = config.station_ids();
    events.sort_unstable();
    events
        .into_iter()
        .map(|(plug, station, unplug)| {
            EventRecord::new(
                ids[station].clone(),
                config.origin + Duration::seconds(plug),
                config.origin + Duration::seconds(unplug),
            )
        })
        .collect()
}

impl SynthConfig {
    fn origin_hour(&self) -> usize {
        use chrono::Timelike;
        self.origin.hour() as usize
    }
}
