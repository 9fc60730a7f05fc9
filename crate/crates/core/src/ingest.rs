//! Charging-event ingestion and hourly discretization.
//!
//! Events arrive as CSV rows `station_id,plug_time,unplug_time` with RFC 3339
//! timestamps. [`discretize`] folds them into an [`OccupancyGrid`], where a
//! station is occupied for an hour if any session overlaps that hour for a
//! nonzero duration. Hours are half-open, so a session ending exactly on the
//! hour does not occupy the following hour.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{DateTime, FixedOffset, SecondsFormat, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: i64 = 3600;
pub const HOURS_PER_DAY: usize = 24;
pub const HOURS_PER_WEEK: usize = 168;

const EVENT_HEADER: [&str; 3] = ["station_id", "plug_time", "unplug_time"];

/// One charging session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub station_id: String,
    pub plug_time: DateTime<FixedOffset>,
    pub unplug_time: DateTime<FixedOffset>,
}

impl EventRecord {
    pub fn new(
        station_id: impl Into<String>,
        plug_time: DateTime<FixedOffset>,
        unplug_time: DateTime<FixedOffset>,
    ) -> Result<Self> {
        let station_id = station_id.into();
        if station_id.is_empty() {
            return Err(Error::MalformedRow {
                line: 0,
                message: "empty station id".into(),
            });
        }
        if unplug_time <= plug_time {
            return Err(Error::InvertedInterval {
                line: 0,
                plug: plug_time.to_rfc3339(),
                unplug: unplug_time.to_rfc3339(),
            });
        }
        Ok(Self {
            station_id,
            plug_time,
            unplug_time,
        })
    }

    pub fn duration_seconds(&self) -> i64 {
        (self.unplug_time - self.plug_time).num_seconds()
    }
}

/// Parses the event CSV. Rows are returned in file order.
pub fn parse_events<R: Read>(raw: R) -> Result<Vec<EventRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw);

    let header = reader.headers()?.clone();
    if header.len() != EVENT_HEADER.len() || header.iter().zip(EVENT_HEADER).any(|(a, b)| a != b) {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                EVENT_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let station_id = &record[0];
        if station_id.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty station id".into(),
            });
        }
        let parse = |value: &str| {
            DateTime::parse_from_rfc3339(value).map_err(|source| Error::BadTimestamp {
                line,
                value: value.to_string(),
                source,
            })
        };
        let plug_time = parse(&record[1])?;
        let unplug_time = parse(&record[2])?;
        if unplug_time <= plug_time {
            return Err(Error::InvertedInterval {
                line,
                plug: record[1].to_string(),
                unplug: record[2].to_string(),
            });
        }
        events.push(EventRecord {
            station_id: station_id.to_string(),
            plug_time,
            unplug_time,
        });
    }
    Ok(events)
}

/// Writes events in the same CSV format [`parse_events`] reads.
pub fn write_events<W: Write>(events: &[EventRecord], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(EVENT_HEADER)?;
    for event in events {
        writer.write_record([
            event.station_id.as_str(),
            &event.plug_time.to_rfc3339_opts(SecondsFormat::Secs, true),
            &event.unplug_time.to_rfc3339_opts(SecondsFormat::Secs, true),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Binary station × hour occupancy matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    origin: DateTime<FixedOffset>,
    stations: Vec<String>,
    hours: usize,
    // station-major: cells[s * hours + h]
    cells: Vec<u8>,
}

impl OccupancyGrid {
    /// Builds a grid from per-station rows of `0`/`1` values.
    pub fn from_rows(
        origin: DateTime<FixedOffset>,
        stations: Vec<String>,
        rows: Vec<Vec<u8>>,
    ) -> Result<Self> {
        check_origin(&origin)?;
        check_unique(&stations)?;
        if rows.len() != stations.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} station ids but {} rows",
                stations.len(),
                rows.len()
            )));
        }
        let hours = rows.first().map_or(0, Vec::len);
        if hours == 0 {
            return Err(Error::EmptyTimeline);
        }
        let mut cells = Vec::with_capacity(hours * stations.len());
        for (id, row) in stations.iter().zip(&rows) {
            if row.len() != hours {
                return Err(Error::ShapeMismatch(format!(
                    "station {id:?} has {} hours, expected {hours}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|&&v| v > 1) {
                return Err(Error::ShapeMismatch(format!(
                    "station {id:?} has non-binary cell {bad}"
                )));
            }
            cells.extend_from_slice(row);
        }
        Ok(Self {
            origin,
            stations,
            hours,
            cells,
        })
    }

    fn zeros(origin: DateTime<FixedOffset>, stations: Vec<String>, hours: usize) -> Self {
        let cells = vec![0; hours * stations.len()];
        Self {
            origin,
            stations,
            hours,
            cells,
        }
    }

    pub fn origin(&self) -> DateTime<FixedOffset> {
        self.origin
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s == id)
    }

    pub fn cell(&self, station: usize, hour: usize) -> u8 {
        self.cells[station * self.hours + hour]
    }

    /// The full hourly series of one station.
    pub fn row(&self, station: usize) -> &[u8] {
        &self.cells[station * self.hours..(station + 1) * self.hours]
    }

    /// Hour of day (in the origin's offset) of an absolute hour index.
    pub fn hour_of_day(&self, hour: usize) -> usize {
        (self.origin.hour() as usize + hour) % HOURS_PER_DAY
    }

    fn set(&mut self, station: usize, hour: usize) {
        self.cells[station * self.hours + hour] = 1;
    }

    /// Exports the grid as `hour_index,<station ids...>` CSV, one row per hour.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["hour_index".to_string()];
        header.extend(self.stations.iter().cloned());
        writer.write_record(&header)?;
        let mut record = Vec::with_capacity(self.stations.len() + 1);
        for h in 0..self.hours {
            record.clear();
            record.push(h.to_string());
            record.extend((0..self.stations.len()).map(|s| self.cell(s, h).to_string()));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a grid previously written by [`OccupancyGrid::write_csv`].
    ///
    /// The CSV carries no timestamps, so the caller supplies the origin.
    pub fn read_csv<R: Read>(raw: R, origin: DateTime<FixedOffset>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(raw);
        let header = reader.headers()?.clone();
        if header.get(0) != Some("hour_index") || header.len() < 2 {
            return Err(Error::MalformedRow {
                line: 1,
                message: "expected header `hour_index,<station ids...>`".into(),
            });
        }
        let stations: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = vec![Vec::new(); stations.len()];
        for (expected, record) in reader.records().enumerate() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != stations.len() + 1 {
                return Err(Error::MalformedRow {
                    line,
                    message: format!(
                        "expected {} fields, found {}",
                        stations.len() + 1,
                        record.len()
                    ),
                });
            }
            if record[0].parse::<usize>().ok() != Some(expected) {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("expected hour_index {expected}, found {:?}", &record[0]),
                });
            }
            for (row, value) in rows.iter_mut().zip(record.iter().skip(1)) {
                row.push(match value {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(Error::MalformedRow {
                            line,
                            message: format!("cell must be 0 or 1, found {other:?}"),
                        })
                    }
                });
            }
        }
        Self::from_rows(origin, stations, rows)
    }
}

fn check_origin(origin: &DateTime<FixedOffset>) -> Result<()> {
    if origin.minute() != 0 || origin.second() != 0 || origin.nanosecond() != 0 {
        return Err(Error::UnalignedOrigin(origin.to_rfc3339()));
    }
    Ok(())
}

fn check_unique(stations: &[String]) -> Result<()> {
    let mut seen = HashMap::with_capacity(stations.len());
    for id in stations {
        if seen.insert(id.as_str(), ()).is_some() {
            return Err(Error::DuplicateStation(id.clone()));
        }
    }
    Ok(())
}

/// Folds events into an hourly binary grid of `hours` hours starting at `origin`.
///
/// Overlapping sessions on one station are OR-ed. Parts of sessions outside
/// the grid's timeline are ignored.
pub fn discretize(
    events: &[EventRecord],
    origin: DateTime<FixedOffset>,
    hours: usize,
    stations: &[String],
) -> Result<OccupancyGrid> {
    check_origin(&origin)?;
    check_unique(stations)?;
    if hours == 0 {
        return Err(Error::EmptyTimeline);
    }
    let index: HashMap<&str, usize> = stations
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let mut grid = OccupancyGrid::zeros(origin, stations.to_vec(), hours);
    let span = hours as i64 * SECONDS_PER_HOUR;
    let base = origin.timestamp();
    for event in events {
        let station = *index
            .get(event.station_id.as_str())
            .ok_or_else(|| Error::UnknownStation(event.station_id.clone()))?;
        let lo = (event.plug_time.timestamp() - base).max(0);
        let hi = (event.unplug_time.timestamp() - base).min(span);
        if hi <= lo {
            continue;
        }
        let first = (lo / SECONDS_PER_HOUR) as usize;
        let last = ((hi - 1) / SECONDS_PER_HOUR) as usize;
        for h in first..=last {
            grid.set(station, h);
        }
    }
    Ok(grid)
}

/// Summary statistics of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub occupied_cells: usize,
    pub total_cells: usize,
    pub occupancy_rate: f64,
    /// Fraction of hours in which no station is occupied.
    pub event_free_fraction: f64,
}

pub fn grid_stats(grid: &OccupancyGrid) -> GridStats {
    let occupied_cells = grid.cells.iter().filter(|&&c| c == 1).count();
    let total_cells = grid.cells.len();
    let empty_hours = (0..grid.hours)
        .filter(|&h| (0..grid.station_count()).all(|s| grid.cell(s, h) == 0))
        .count();
    GridStats {
        occupied_cells,
        total_cells,
        occupancy_rate: occupied_cells as f64 / total_cells as f64,
        event_free_fraction: empty_hours as f64 / grid.hours as f64,
    }
}
