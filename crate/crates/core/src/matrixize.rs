//! Leave-one-station-out vectorization of an occupancy grid.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::ingest::OccupancyGrid;

/// Supervised dataset for one target station.
///
/// Row `k` of `x` holds every other station's occupancy at absolute hour
/// `hours[k]`, in grid station order; `y[k]` is the target's occupancy then.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub target_station: String,
    /// Station id of each column of `x`.
    pub columns: Vec<String>,
    /// Absolute grid hour of each row.
    pub hours: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.y.iter().map(|&v| v as u8).collect()
    }
}

fn target_index(grid: &OccupancyGrid, target: &str) -> Result<usize> {
    grid.station_index(target)
        .ok_or_else(|| Error::UnknownStation(target.to_string()))
}

pub fn build_dataset(grid: &OccupancyGrid, target: &str, lo: usize, hi: usize) -> Result<Dataset> {
    let t = target_index(grid, target)?;
    if lo >= hi || hi > grid.hours() {
        return Err(Error::InvalidRange {
            lo,
            hi,
            len: grid.hours(),
        });
    }
    let neighbors: Vec<usize> = (0..grid.station_count()).filter(|&s| s != t).collect();
    let rows = hi - lo;
    let x = Array2::from_shape_fn((rows, neighbors.len()), |(k, j)| {
        f64::from(grid.cell(neighbors[j], lo + k))
    });
    let y = Array1::from_shape_fn(rows, |k| f64::from(grid.cell(t, lo + k)));
    Ok(Dataset {
        x,
        y,
        target_station: target.to_string(),
        columns: neighbors
            .iter()
            .map(|&s| grid.stations()[s].clone())
            .collect(),
        hours: (lo..hi).collect(),
    })
}

/// The neighbor input vector at a single hour, laid out like a [`Dataset`] row.
pub fn neighbor_vector(grid: &OccupancyGrid, target: &str, hour: usize) -> Result<Array1<f64>> {
    let t = target_index(grid, target)?;
    if hour >= grid.hours() {
        return Err(Error::InvalidRange {
            lo: hour,
            hi: hour + 1,
            len: grid.hours(),
        });
    }
    Ok((0..grid.station_count())
        .filter(|&s| s != t)
        .map(|s| f64::from(grid.cell(s, hour)))
        .collect())
}
