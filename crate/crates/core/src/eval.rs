//! Benchmark harness: NOLR against persistence and fixed-window logistic
//! regression, scored week by week, plus the window-length search.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{persistence_predict, traditional_logreg};
use crate::error::{Error, Result};
use crate::ingest::{OccupancyGrid, HOURS_PER_WEEK};
use crate::logreg::{classify, train, TrainConfig, WeightVector};
use crate::matrixize::{build_dataset, neighbor_vector, Dataset};
use crate::par::{self, ExecMode};
use crate::window::{segment_of, select_window, WindowPolicy};

/// Fraction of positions where `predictions` and `truth` agree.
pub fn score(predictions: &[u8], truth: &[u8]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} observations",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyScore);
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// SplitMix64 finalizer, used to derive an independent seed per test hour.
fn mix_seed(seed: u64, hour: usize) -> u64 {
    let mut z = seed ^ (hour as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains the model NOLR uses for one test hour.
///
/// Returns the training set with the fitted weights, or `None` when the
/// training window would start before the timeline.
pub fn nolr_model(
    grid: &OccupancyGrid,
    target: &str,
    test_hour: usize,
    policy: &WindowPolicy,
    config: &TrainConfig,
) -> Result<Option<(Dataset, WeightVector)>> {
    let window = match select_window(test_hour, grid.hour_of_day(test_hour), policy) {
        Ok(w) => w,
        Err(Error::WindowUnderflow { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let training = build_dataset(grid, target, window.start, window.end())?;
    assert!(
        training.hours.iter().all(|&h| h < test_hour),
        "training window {window:?} leaks into test hour {test_hour}"
    );
    let w = train(
        training.x.view(),
        training.y.view(),
        &config.with_seed(mix_seed(config.rng_seed, test_hour)),
    )?;
    Ok(Some((training, w)))
}

/// Trains a fresh model for one test hour and classifies it.
///
/// Returns `None` when the training window would start before the timeline.
pub fn nolr_point(
    grid: &OccupancyGrid,
    target: &str,
    test_hour: usize,
    policy: &WindowPolicy,
    config: &TrainConfig,
) -> Result<Option<u8>> {
    let Some((_, w)) = nolr_model(grid, target, test_hour, policy, config)? else {
        return Ok(None);
    };
    let x = neighbor_vector(grid, target, test_hour)?;
    classify(x.view(), &w).map(Some)
}

/// NOLR predictions for every hour in `[lo, hi)`; `None` marks skipped hours.
pub fn nolr_predict(
    grid: &OccupancyGrid,
    target: &str,
    lo: usize,
    hi: usize,
    policy: &WindowPolicy,
    config: &TrainConfig,
    mode: ExecMode,
) -> Result<Vec<Option<u8>>> {
    policy.validate()?;
    config.validate()?;
    check_range(grid, lo, hi)?;
    if grid.station_index(target).is_none() {
        return Err(Error::UnknownStation(target.to_string()));
    }
    par::map(mode, (lo..hi).collect(), |x| {
        nolr_point(grid, target, x, policy, config)
    })
    .into_iter()
    .collect()
}

fn check_range(grid: &OccupancyGrid, lo: usize, hi: usize) -> Result<()> {
    if lo >= hi || hi > grid.hours() {
        return Err(Error::InvalidRange {
            lo,
            hi,
            len: grid.hours(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Nolr,
    Persistence,
    Logreg,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Nolr, Model::Persistence, Model::Logreg];

    pub fn name(self) -> &'static str {
        match self {
            Model::Nolr => "nolr",
            Model::Persistence => "persistence",
            Model::Logreg => "logreg",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model {s:?}")))
    }
}

/// Half-open hour ranges of whole weeks, counted from the grid origin.
///
/// `first` and `last` are 1-based and inclusive, so weeks 5..=10 are the
/// last six weeks of a ten-week grid.
pub fn week_ranges(first: usize, last: usize) -> Result<Vec<(usize, usize)>> {
    if first == 0 || last < first {
        return Err(Error::InvalidConfig(format!(
            "invalid week range {first}..{last} (weeks are 1-based)"
        )));
    }
    Ok((first..=last)
        .map(|w| ((w - 1) * HOURS_PER_WEEK, w * HOURS_PER_WEEK))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub models: Vec<Model>,
    pub policy: WindowPolicy,
    pub train: TrainConfig,
    /// Fixed training range of the traditional model. Defaults to the four
    /// weeks before the first test week.
    pub logreg_train_range: Option<(usize, usize)>,
    #[serde(skip)]
    pub mode: ExecMode,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            models: Model::ALL.to_vec(),
            policy: WindowPolicy::default(),
            train: TrainConfig::default(),
            logreg_train_range: None,
            mode: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    /// Accuracy per test week; `None` if nothing in the week was scored.
    pub weeks: Vec<Option<f64>>,
    /// Scored points per week.
    pub scored: Vec<usize>,
    /// Accuracy over all scored points.
    pub average: f64,
    pub skipped: usize,
}

impl ModelReport {
    fn from_weeks(weekly: &[(Vec<Option<u8>>, &[u8])]) -> Self {
        let mut weeks = Vec::with_capacity(weekly.len());
        let mut scored = Vec::with_capacity(weekly.len());
        let mut skipped = 0;
        let (mut hits, mut total) = (0usize, 0usize);
        for (predictions, truth) in weekly {
            let pairs: Vec<(u8, u8)> = predictions
                .iter()
                .zip(truth.iter())
                .filter_map(|(p, &t)| p.map(|p| (p, t)))
                .collect();
            skipped += predictions.len() - pairs.len();
            let week_hits = pairs.iter().filter(|(p, t)| p == t).count();
            weeks.push((!pairs.is_empty()).then(|| week_hits as f64 / pairs.len() as f64));
            scored.push(pairs.len());
            hits += week_hits;
            total += pairs.len();
        }
        Self {
            weeks,
            scored,
            average: if total == 0 {
                0.0
            } else {
                hits as f64 / total as f64
            },
            skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: String,
    pub test_weeks: Vec<(usize, usize)>,
    pub models: BTreeMap<String, ModelReport>,
    pub fingerprint: String,
}

impl EvalReport {
    pub fn model(&self, model: Model) -> Option<&ModelReport> {
        self.models.get(model.name())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Per-model summary: `model,average,scored,skipped`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        writer.write_record(["model", "average", "scored", "skipped"])?;
        for (name, report) in &self.models {
            writer.write_record([
                name.as_str(),
                &report.average.to_string(),
                &report.scored.iter().sum::<usize>().to_string(),
                &report.skipped.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Long-format plot data: `week_index,model,accuracy`, weeks numbered from 1.
    pub fn write_plot_data<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        writer.write_record(["week_index", "model", "accuracy"])?;
        for (name, report) in &self.models {
            for (i, acc) in report.weeks.iter().enumerate() {
                let acc = acc.map_or_else(String::new, |a| a.to_string());
                writer.write_record([(i + 1).to_string().as_str(), name, &acc])?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

fn grid_digest(grid: &OccupancyGrid) -> String {
    let mut hasher = Sha256::new();
    hasher.update(grid.origin().to_rfc3339().as_bytes());
    for (s, id) in grid.stations().iter().enumerate() {
        hasher.update(id.as_bytes());
        hasher.update([0]);
        hasher.update(grid.row(s));
    }
    hex::encode(hasher.finalize())
}

fn fingerprint(
    grid: &OccupancyGrid,
    target: &str,
    test_weeks: &[(usize, usize)],
    config: &BenchmarkConfig,
) -> Result<String> {
    let payload = serde_json::json!({
        "grid": grid_digest(grid),
        "target": target,
        "test_weeks": test_weeks,
        "config": config,
    });
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&payload)?)))
}

/// Runs every enabled model over each test week.
pub fn weekly_report(
    grid: &OccupancyGrid,
    target: &str,
    test_weeks: &[(usize, usize)],
    config: &BenchmarkConfig,
) -> Result<EvalReport> {
    let t = grid
        .station_index(target)
        .ok_or_else(|| Error::UnknownStation(target.to_string()))?;
    if test_weeks.is_empty() {
        return Err(Error::InvalidConfig("no test weeks".into()));
    }
    for &(lo, hi) in test_weeks {
        check_range(grid, lo, hi)?;
    }
    if test_weeks.windows(2).any(|w| w[0].1 > w[1].0) {
        return Err(Error::InvalidConfig(
            "test weeks must be ordered and disjoint".into(),
        ));
    }
    let truth = grid.row(t);

    let mut models = BTreeMap::new();
    for &model in &config.models {
        let mut weekly = Vec::with_capacity(test_weeks.len());
        match model {
            Model::Nolr => {
                for &(lo, hi) in test_weeks {
                    let p = nolr_predict(
                        grid,
                        target,
                        lo,
                        hi,
                        &config.policy,
                        &config.train,
                        config.mode,
                    )?;
                    weekly.push((p, &truth[lo..hi]));
                }
            }
            Model::Persistence => {
                for &(lo, hi) in test_weeks {
                    let mut p = Vec::with_capacity(hi - lo);
                    // the very first hour of the timeline has no predecessor
                    let start = lo.max(1);
                    p.extend(std::iter::repeat_n(None, start - lo));
                    if start < hi {
                        p.extend(persistence_predict(truth, start, hi)?.into_iter().map(Some));
                    }
                    weekly.push((p, &truth[lo..hi]));
                }
            }
            Model::Logreg => {
                let (train_lo, train_hi) = match config.logreg_train_range {
                    Some(range) => range,
                    None => {
                        let first = test_weeks[0].0;
                        (first.saturating_sub(4 * HOURS_PER_WEEK), first)
                    }
                };
                let train_set = build_dataset(grid, target, train_lo, train_hi)?;
                for &(lo, hi) in test_weeks {
                    let test = build_dataset(grid, target, lo, hi)?;
                    let p = traditional_logreg(&train_set, &test, &config.train)?;
                    weekly.push((p.into_iter().map(Some).collect(), &truth[lo..hi]));
                }
            }
        }
        models.insert(model.name().to_string(), ModelReport::from_weeks(&weekly));
    }

    Ok(EvalReport {
        target: target.to_string(),
        test_weeks: test_weeks.to_vec(),
        models,
        fingerprint: fingerprint(grid, target, test_weeks, config)?,
    })
}

/// Which window-length triples to try.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Candidates {
    /// Cartesian product of per-segment length lists.
    Grid(Vec<Vec<usize>>),
    /// An explicit list of length tuples.
    List(Vec<Vec<usize>>),
}

impl Candidates {
    /// Every length in `1..=24` with the given stride, for each segment.
    pub fn full(segments: usize, stride: usize) -> Self {
        let lengths: Vec<usize> = (1..=24).step_by(stride.max(1)).collect();
        Candidates::Grid(vec![lengths; segments])
    }

    fn expand(&self) -> Vec<Vec<usize>> {
        match self {
            Candidates::List(list) => list.clone(),
            Candidates::Grid(axes) => {
                let mut out = vec![Vec::new()];
                for axis in axes {
                    out = out
                        .into_iter()
                        .flat_map(|prefix| {
                            axis.iter().map(move |&n| {
                                let mut next = prefix.clone();
                                next.push(n);
                                next
                            })
                        })
                        .collect();
                }
                if axes.is_empty() {
                    out.clear();
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub lengths: Vec<usize>,
    pub accuracy: f64,
    pub scored: usize,
    pub evaluated: usize,
}

/// Searches window lengths for the best validation accuracy over `[lo, hi)`.
///
/// Each test hour's prediction depends only on the length of its own
/// segment, so hits are tallied once per (segment, length) and summed per
/// candidate. Ties go to the lexicographically smallest length tuple.
#[allow(clippy::too_many_arguments)]
pub fn tune_lengths(
    grid: &OccupancyGrid,
    target: &str,
    lo: usize,
    hi: usize,
    base: &WindowPolicy,
    config: &TrainConfig,
    candidates: &Candidates,
    mode: ExecMode,
) -> Result<TuneResult> {
    check_range(grid, lo, hi)?;
    let t = grid
        .station_index(target)
        .ok_or_else(|| Error::UnknownStation(target.to_string()))?;
    let mut triples = candidates.expand();
    triples.retain(|c| c.len() == base.segments());
    if triples.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    for c in &triples {
        base.with_lengths(c.clone())?;
    }

    let segment_hours: Vec<Vec<usize>> = (0..base.segments())
        .map(|s| {
            (lo..hi)
                .filter(|&x| segment_of(grid.hour_of_day(x), base) == s)
                .collect()
        })
        .collect();

    let mut needed: Vec<(usize, usize)> = triples
        .iter()
        .flat_map(|c| c.iter().copied().enumerate())
        .collect();
    needed.sort_unstable();
    needed.dedup();

    let truth = grid.row(t);
    let tallies = par::map(mode, needed.clone(), |(segment, length)| {
        let mut lengths = base.lengths.clone();
        lengths[segment] = length;
        let policy = base.with_lengths(lengths)?;
        let (mut hits, mut scored) = (0usize, 0usize);
        for &x in &segment_hours[segment] {
            if let Some(p) = nolr_point(grid, target, x, &policy, config)? {
                scored += 1;
                hits += usize::from(p == truth[x]);
            }
        }
        Ok((hits, scored))
    });
    let table: HashMap<(usize, usize), (usize, usize)> = needed
        .into_iter()
        .zip(tallies)
        .map(|(k, v)| v.map(|v| (k, v)))
        .collect::<Result<_>>()?;

    triples.sort();
    let mut best: Option<(usize, usize, &Vec<usize>)> = None;
    for c in &triples {
        let (hits, scored) = c
            .iter()
            .enumerate()
            .map(|(s, &n)| table[&(s, n)])
            .fold((0, 0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
        if best.is_none_or(|(h, _, _)| hits > h) {
            best = Some((hits, scored, c));
        }
    }
    let (hits, scored, lengths) = best.expect("candidates are nonempty");
    Ok(TuneResult {
        lengths: lengths.clone(),
        accuracy: if scored == 0 {
            0.0
        } else {
            hits as f64 / scored as f64
        },
        scored,
        evaluated: triples.len(),
    })
}
