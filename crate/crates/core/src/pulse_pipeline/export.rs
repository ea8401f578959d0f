//! CSV tables for pipeline outputs.
//!
//! | file            | columns                                           |
//! |-----------------|---------------------------------------------------|
//! | events          | `sample,time,peak_height,truncated,photons`       |
//! | counts          | `bin,start_time,count,overflow`                   |
//! | height histogram| `lower,upper,count`                               |
//! | photon histogram| `n,probability` (last row `n = overflow`)         |
//!
//! `photons` is empty for events above the overflow level.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{CountSeries, EventRecord, HeightHistogram};
use crate::error::{Error, Result};
use crate::fockspace::PhotonDistribution;
use crate::fsutil::atomic_write;

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    sample: u64,
    time: f64,
    peak_height: f64,
    truncated: bool,
    photons: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    bin: usize,
    start_time: f64,
    count: u32,
    overflow: bool,
}

fn to_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(e.to_string())
    }
}

pub fn events_csv(events: &[EventRecord], photons: &[Option<u32>]) -> Result<Vec<u8>> {
    if events.len() != photons.len() {
        return Err(Error::InvalidArgument(
            "one photon number per event required".into(),
        ));
    }
    to_bytes(events.iter().zip(photons).map(|(e, &p)| EventRow {
        sample: e.sample,
        time: e.time,
        peak_height: e.peak_height,
        truncated: e.truncated,
        photons: p,
    }))
}

pub fn write_events(path: &Path, events: &[EventRecord], photons: &[Option<u32>]) -> Result<()> {
    Ok(atomic_write(path, &events_csv(events, photons)?)?)
}

pub fn read_events(path: &Path) -> Result<(Vec<EventRecord>, Vec<Option<u32>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut events = Vec::new();
    let mut photons = Vec::new();
    for row in r.deserialize::<EventRow>() {
        let row = row.map_err(csv_err)?;
        events.push(EventRecord {
            sample: row.sample,
            time: row.time,
            peak_height: row.peak_height,
            truncated: row.truncated,
        });
        photons.push(row.photons);
    }
    Ok((events, photons))
}

pub fn counts_csv(series: &CountSeries) -> Result<Vec<u8>> {
    to_bytes(
        series
            .counts
            .iter()
            .zip(&series.overflow)
            .enumerate()
            .map(|(i, (&c, &o))| CountRow {
                bin: i,
                start_time: i as f64 * series.bin_duration,
                count: c,
                overflow: o,
            }),
    )
}

pub fn write_counts(path: &Path, series: &CountSeries) -> Result<()> {
    Ok(atomic_write(path, &counts_csv(series)?)?)
}

pub fn read_counts(path: &Path) -> Result<CountSeries> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut counts = Vec::new();
    let mut overflow = Vec::new();
    let mut starts = Vec::new();
    for (i, row) in r.deserialize::<CountRow>().enumerate() {
        let row = row.map_err(csv_err)?;
        if row.bin != i {
            return Err(Error::Format(format!(
                "count row {i} is labelled bin {}",
                row.bin
            )));
        }
        starts.push(row.start_time);
        counts.push(row.count);
        overflow.push(row.overflow);
    }
    if counts.len() < 2 {
        return Err(Error::Format("count table needs at least two bins".into()));
    }
    Ok(CountSeries {
        bin_duration: starts[1] - starts[0],
        counts,
        overflow,
    })
}

pub fn height_histogram_csv(hist: &HeightHistogram) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Row {
        lower: f64,
        upper: f64,
        count: u64,
    }
    to_bytes(hist.counts.iter().enumerate().map(|(i, &c)| Row {
        lower: hist.lo + i as f64 * hist.width,
        upper: hist.lo + (i + 1) as f64 * hist.width,
        count: c,
    }))
}

pub fn photon_histogram_csv(dist: &PhotonDistribution) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Row {
        n: String,
        probability: f64,
    }
    let rows = dist
        .probs()
        .iter()
        .enumerate()
        .map(|(n, &p)| Row {
            n: n.to_string(),
            probability: p,
        })
        .chain(std::iter::once(Row {
            n: "overflow".into(),
            probability: dist.tail_mass(),
        }));
    to_bytes(rows)
}
