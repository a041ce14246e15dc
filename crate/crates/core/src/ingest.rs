//! Edit events, quarterly aggregation and population sampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, Months, NaiveDate, NaiveDateTime, TimeDelta};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::{math, rng, Error, Result};

/// One edit by one user. `timestamp` counts seconds since the platform epoch.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EditEvent {
    pub user: String,
    pub timestamp: u64,
    pub namespace: usize,
}

/// One user's edit counts per namespace over one quarter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub user: String,
    pub quarter: u32,
    pub counts: Vec<u64>,
}

impl ActivityRecord {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Maps timestamps to quarter indices. Quarter `q` starts `3q` calendar
/// months after the epoch (midnight), with chrono's end-of-month clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuarterClock {
    epoch: NaiveDateTime,
}

impl QuarterClock {
    pub fn new(epoch: NaiveDate) -> Self {
        Self {
            epoch: epoch.and_hms_opt(0, 0, 0).expect("midnight is valid"),
        }
    }

    pub fn epoch(&self) -> NaiveDate {
        self.epoch.date()
    }

    /// Seconds from the epoch to `t`, or `None` when `t` precedes it.
    pub fn seconds_since_epoch(&self, t: NaiveDateTime) -> Option<u64> {
        let secs = (t - self.epoch).num_seconds();
        u64::try_from(secs).ok()
    }

    pub fn datetime(&self, timestamp: u64) -> NaiveDateTime {
        self.epoch + TimeDelta::seconds(timestamp as i64)
    }

    /// First second of quarter `q`.
    pub fn quarter_start(&self, q: u32) -> u64 {
        let start = self
            .epoch
            .checked_add_months(Months::new(3 * q))
            .expect("quarter start within chrono range");
        (start - self.epoch).num_seconds() as u64
    }

    pub fn quarter_of(&self, timestamp: u64) -> u32 {
        let t = self.datetime(timestamp);
        let e = self.epoch;
        let months = i64::from(t.year() - e.year()) * 12 + i64::from(t.month0()) - i64::from(e.month0());
        let mut q = (months.max(0) / 3) as u32;
        while q > 0 && self.quarter_start(q) > timestamp {
            q -= 1;
        }
        while self.quarter_start(q + 1) <= timestamp {
            q += 1;
        }
        q
    }
}

/// A skipped input line and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(t) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").ok()
}

/// Parses one `user<TAB>timestamp<TAB>namespace` line. Timestamps are
/// RFC 3339 (offsets are converted to UTC) or naive `YYYY-MM-DDTHH:MM:SS`.
pub fn parse_event_line(
    line: &str,
    vocab: &Vocabulary,
    clock: &QuarterClock,
) -> core::result::Result<EditEvent, String> {
    let mut fields = line.split('\t');
    let (Some(user), Some(ts), Some(ns), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
        return Err("expected 3 tab-separated fields".into());
    };
    if user.is_empty() {
        return Err("empty user id".into());
    }
    let t = parse_timestamp(ts).ok_or_else(|| alloc::format!("bad timestamp {ts:?}"))?;
    let timestamp = clock
        .seconds_since_epoch(t)
        .ok_or_else(|| alloc::format!("timestamp {ts} precedes the epoch {}", clock.epoch()))?;
    let namespace = vocab.id(ns).ok_or_else(|| alloc::format!("unknown namespace {ns:?}"))?;
    Ok(EditEvent {
        user: user.into(),
        timestamp,
        namespace,
    })
}

/// Parses event lines in order. Bad lines are skipped and reported; empty
/// lines are ignored.
pub fn parse_events<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    vocab: &Vocabulary,
    clock: &QuarterClock,
) -> (Vec<EditEvent>, Vec<LineError>) {
    let mut events = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in lines.into_iter().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        match parse_event_line(line, vocab, clock) {
            Ok(ev) => events.push(ev),
            Err(message) => errors.push(LineError { line: i + 1, message }),
        }
    }
    (events, errors)
}

/// Renders an event as a TSV line (no trailing newline).
pub fn format_event(ev: &EditEvent, vocab: &Vocabulary, clock: &QuarterClock) -> Result<String> {
    let ns = vocab
        .name(ev.namespace)
        .ok_or_else(|| Error::invalid(alloc::format!("namespace id {} outside vocabulary", ev.namespace)))?;
    Ok(alloc::format!(
        "{}\t{}\t{}",
        ev.user,
        clock.datetime(ev.timestamp).format("%Y-%m-%dT%H:%M:%SZ"),
        ns
    ))
}

/// Aggregates events into one record per (user, quarter) with activity.
///
/// Output is ordered by user id, then quarter.
pub fn quarterize(events: &[EditEvent], clock: &QuarterClock, vocab_size: usize) -> Result<Vec<ActivityRecord>> {
    let mut acc: BTreeMap<(&str, u32), Vec<u64>> = BTreeMap::new();
    for ev in events {
        if ev.namespace >= vocab_size {
            return Err(Error::invalid(alloc::format!(
                "event for user {} has namespace id {} outside vocabulary of {}",
                ev.user,
                ev.namespace,
                vocab_size
            )));
        }
        let q = clock.quarter_of(ev.timestamp);
        acc.entry((ev.user.as_str(), q))
            .or_insert_with(|| alloc::vec![0; vocab_size])[ev.namespace] += 1;
    }
    Ok(acc
        .into_iter()
        .map(|((user, quarter), counts)| ActivityRecord {
            user: user.into(),
            quarter,
            counts,
        })
        .collect())
}

/// Drops every record at or after quarter `end` (used to exclude an
/// incomplete trailing quarter).
pub fn truncate_quarters(records: Vec<ActivityRecord>, end: u32) -> Vec<ActivityRecord> {
    records.into_iter().filter(|r| r.quarter < end).collect()
}

fn active_quarters(records: &[ActivityRecord]) -> BTreeMap<&str, BTreeSet<u32>> {
    let mut users: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for r in records {
        users.entry(r.user.as_str()).or_default().insert(r.quarter);
    }
    users
}

/// Keeps every user active in two or more quarters plus a seeded uniform
/// subset of `round(fraction * n)` of the `n` single-quarter users.
///
/// Retained records are returned unchanged and in input order.
pub fn sample_population(
    records: &[ActivityRecord],
    single_quarter_fraction: f64,
    seed: u64,
) -> Result<Vec<ActivityRecord>> {
    if !(0.0..=1.0).contains(&single_quarter_fraction) {
        return Err(Error::invalid(alloc::format!(
            "single-quarter fraction {single_quarter_fraction} outside [0, 1]"
        )));
    }
    let users = active_quarters(records);
    let singles: Vec<&str> = users.iter().filter(|(_, qs)| qs.len() == 1).map(|(u, _)| *u).collect();
    let keep_n = math::round(single_quarter_fraction * singles.len() as f64) as usize;
    let mut rng = rng::seeded(seed);
    let kept: BTreeSet<&str> = index::sample(&mut rng, singles.len(), keep_n)
        .into_iter()
        .map(|i| singles[i])
        .collect();
    Ok(records
        .iter()
        .filter(|r| users[r.user.as_str()].len() > 1 || kept.contains(r.user.as_str()))
        .cloned()
        .collect())
}

/// Number of users by count of active quarters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifespanHistogram {
    pub buckets: BTreeMap<u32, u64>,
}

impl LifespanHistogram {
    pub fn total_users(&self) -> u64 {
        self.buckets.values().sum()
    }
}

pub fn lifespan_stats(records: &[ActivityRecord]) -> LifespanHistogram {
    let mut buckets = BTreeMap::new();
    for qs in active_quarters(records).values() {
        *buckets.entry(qs.len() as u32).or_insert(0) += 1;
    }
    LifespanHistogram { buckets }
}
