//! Ground-assisted-analytics budgeting from contact-window traces:
//! connection-interval CDF and per-contact downlinkable-data ratio.

use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GroundlinkError {
    #[error("satellite {0} has {1} contacts; at least 2 are required")]
    TooFewContacts(usize, usize),
    #[error("contact window with start {0} >= end {1}")]
    InvalidWindow(f64, f64),
    #[error("overlapping or unsorted contacts for satellite {0} at {1} s")]
    OverlappingContacts(usize, f64),
    #[error("non-positive downlink rate {0}")]
    InvalidRate(f64),
    #[error("malformed trace CSV at line {0}: {1}")]
    Parse(usize, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactWindow {
    pub satellite: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub rate_bps: f64,
}

/// Ground-contact windows per satellite, sorted and non-overlapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactTrace {
    contacts: Vec<ContactWindow>,
    pub horizon_s: f64,
}

impl ContactTrace {
    pub fn new(mut contacts: Vec<ContactWindow>, horizon_s: f64) -> Result<Self, GroundlinkError> {
        for c in &contacts {
            if !(c.start_s < c.end_s) {
                return Err(GroundlinkError::InvalidWindow(c.start_s, c.end_s));
            }
            if !(c.rate_bps > 0.0) {
                return Err(GroundlinkError::InvalidRate(c.rate_bps));
            }
        }
        contacts.sort_by(|a, b| {
            a.satellite
                .cmp(&b.satellite)
                .then(a.start_s.total_cmp(&b.start_s))
        });
        for w in contacts.windows(2) {
            if w[0].satellite == w[1].satellite && w[1].start_s < w[0].end_s {
                return Err(GroundlinkError::OverlappingContacts(
                    w[1].satellite,
                    w[1].start_s,
                ));
            }
        }
        Ok(Self {
            contacts,
            horizon_s,
        })
    }

    pub fn contacts(&self) -> &[ContactWindow] {
        &self.contacts
    }

    fn per_satellite(&self) -> BTreeMap<usize, Vec<&ContactWindow>> {
        let mut map: BTreeMap<usize, Vec<&ContactWindow>> = BTreeMap::new();
        for c in &self.contacts {
            map.entry(c.satellite).or_default().push(c);
        }
        map
    }

    /// Parses `sat_id,start_s,end_s,rate_bps` CSV (header optional); the
    /// horizon is the latest contact end.
    pub fn parse_csv(text: &str) -> Result<Self, GroundlinkError> {
        let mut contacts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if lineno == 0 && line.to_ascii_lowercase().starts_with("sat_id") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(GroundlinkError::Parse(
                    lineno + 1,
                    format!("expected 4 fields, got {}", fields.len()),
                ));
            }
            let parse_f = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| GroundlinkError::Parse(lineno + 1, e.to_string()))
            };
            contacts.push(ContactWindow {
                satellite: fields[0]
                    .parse()
                    .map_err(|e: std::num::ParseIntError| {
                        GroundlinkError::Parse(lineno + 1, e.to_string())
                    })?,
                start_s: parse_f(fields[1])?,
                end_s: parse_f(fields[2])?,
                rate_bps: parse_f(fields[3])?,
            });
        }
        let horizon = contacts.iter().map(|c| c.end_s).fold(0.0, f64::max);
        Self::new(contacts, horizon)
    }
}

/// Empirical CDF of the gaps between consecutive contact windows, pooled
/// over satellites. Returned as (interval seconds, cumulative fraction)
/// step points at each distinct interval.
pub fn contact_interval_cdf(trace: &ContactTrace) -> Result<Vec<(f64, f64)>, GroundlinkError> {
    let mut intervals = Vec::new();
    for (sat, contacts) in trace.per_satellite() {
        if contacts.len() < 2 {
            return Err(GroundlinkError::TooFewContacts(sat, contacts.len()));
        }
        for w in contacts.windows(2) {
            intervals.push(w[1].start_s - w[0].end_s);
        }
    }
    intervals.sort_by(f64::total_cmp);
    let n = intervals.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (k, &iv) in intervals.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if (last.0 - iv).abs() < 1e-12 => last.1 = frac,
            _ => points.push((iv, frac)),
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactRatio {
    pub satellite: usize,
    pub contact_start_s: f64,
    /// Fraction of the backlog accumulated since the previous contact that
    /// this window can downlink, clamped to 1.
    pub ratio: f64,
}

/// Per-contact downlinkable ratio: window capacity over the data generated
/// during the preceding interval, after on-board filtering. The first
/// contact of each satellite has no preceding interval and is skipped.
pub fn downlinkable_ratio(
    trace: &ContactTrace,
    data_gen_rate_bytes_per_s: f64,
    filter_fraction: f64,
) -> Result<Vec<ContactRatio>, GroundlinkError> {
    if !(data_gen_rate_bytes_per_s > 0.0) {
        return Err(GroundlinkError::InvalidRate(data_gen_rate_bytes_per_s));
    }
    let keep = 1.0 - filter_fraction.clamp(0.0, 1.0);
    let mut out = Vec::new();
    for (_, contacts) in trace.per_satellite() {
        for w in contacts.windows(2) {
            let prev_interval = w[1].start_s - w[0].end_s;
            let backlog = keep * data_gen_rate_bytes_per_s * prev_interval;
            let capacity = (w[1].end_s - w[1].start_s) * w[1].rate_bps / 8.0;
            let ratio = if backlog <= 0.0 {
                1.0
            } else {
                (capacity / backlog).min(1.0)
            };
            out.push(ContactRatio {
                satellite: w[1].satellite,
                contact_start_s: w[1].start_s,
                ratio,
            });
        }
    }
    Ok(out)
}
