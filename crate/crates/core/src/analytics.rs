//! Editing metrics computed from an interaction log and draft snapshots.
//! Distances and lengths count Unicode scalar values.

use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use crate::clock::Timestamp;
use crate::exec::{map_ordered, ExecMode};
use crate::store::events::InteractionEvent;
use crate::store::{self, Snapshot, SnapshotTrigger, StoreError, EVENTS_FILE, INITIAL_FILE, SNAPSHOT_DIR};

pub const DEFAULT_GAP: Duration = Duration::from_secs(60);

pub const REPORT_COLUMNS: [&str; 7] = [
    "snapshot",
    "timestamp_ms",
    "trigger",
    "active_minutes",
    "writing_actions",
    "levenshtein_from_initial",
    "length_delta_chars",
];

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("snapshot {index} at {at} ms precedes the previous one at {previous} ms")]
    SnapshotsOutOfOrder { index: usize, at: i64, previous: i64 },
    #[error("{deltas} length deltas for {points} series points")]
    DeltaCount { points: usize, deltas: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing report: {0}")]
    Csv(#[from] csv::Error),
}

/// Unit-cost edit distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Text edits in the draft or instruction fields. Structural section
/// operations are not counted.
pub fn writing_actions(events: &[InteractionEvent]) -> usize {
    events.iter().filter(|e| e.is_writing_action()).count()
}

/// Minutes covered by gaps between consecutive events that do not exceed
/// `gap`. Longer gaps count as idle.
pub fn active_time(events: &[InteractionEvent], gap: Duration) -> f64 {
    let limit = gap.as_millis() as i64;
    let ms: i64 = events
        .windows(2)
        .map(|w| w[1].timestamp.millis() - w[0].timestamp.millis())
        .filter(|d| (0..=limit).contains(d))
        .sum();
    ms as f64 / 60_000.0
}

/// Signed change in character count.
pub fn length_delta(initial: &str, current: &str) -> i64 {
    current.chars().count() as i64 - initial.chars().count() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub timestamp: Timestamp,
    pub trigger: SnapshotTrigger,
    pub active_minutes: f64,
    pub writing_actions: usize,
    pub levenshtein_from_initial: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EditingPowerSeries {
    pub points: Vec<SeriesPoint>,
}

/// One point per snapshot: active time and writing actions logged up to the
/// snapshot, and the snapshot's distance from the initial draft.
pub fn editing_power_series(
    initial: &str,
    snapshots: &[Snapshot],
    events: &[InteractionEvent],
) -> Result<EditingPowerSeries, AnalyticsError> {
    editing_power_series_with(initial, snapshots, events, DEFAULT_GAP, ExecMode::default())
}

pub fn editing_power_series_with(
    initial: &str,
    snapshots: &[Snapshot],
    events: &[InteractionEvent],
    gap: Duration,
    mode: ExecMode,
) -> Result<EditingPowerSeries, AnalyticsError> {
    for (index, w) in snapshots.windows(2).enumerate() {
        if w[1].timestamp < w[0].timestamp {
            return Err(AnalyticsError::SnapshotsOutOfOrder {
                index: index + 1,
                at: w[1].timestamp.millis(),
                previous: w[0].timestamp.millis(),
            });
        }
    }
    let distances = map_ordered(mode, snapshots, |s| levenshtein(initial, &s.text));
    let points = snapshots
        .iter()
        .zip(distances)
        .map(|(s, d)| {
            let upto = events.partition_point(|e| e.timestamp <= s.timestamp);
            SeriesPoint {
                timestamp: s.timestamp,
                trigger: s.trigger,
                active_minutes: active_time(&events[..upto], gap),
                writing_actions: writing_actions(&events[..upto]),
                levenshtein_from_initial: d,
            }
        })
        .collect();
    Ok(EditingPowerSeries { points })
}

/// Length change of each snapshot against the initial draft.
pub fn length_deltas(initial: &str, snapshots: &[Snapshot]) -> Vec<i64> {
    snapshots.iter().map(|s| length_delta(initial, &s.text)).collect()
}

/// Renders the series as CSV in [`REPORT_COLUMNS`] order, minutes to three
/// decimals. An empty series yields only the header row.
pub fn export_report(series: &EditingPowerSeries, deltas: &[i64]) -> Result<String, AnalyticsError> {
    if series.points.len() != deltas.len() {
        return Err(AnalyticsError::DeltaCount {
            points: series.points.len(),
            deltas: deltas.len(),
        });
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS)?;
    for (i, (p, d)) in series.points.iter().zip(deltas).enumerate() {
        w.write_record([
            (i + 1).to_string(),
            p.timestamp.millis().to_string(),
            p.trigger.as_str().to_string(),
            format!("{:.3}", p.active_minutes),
            p.writing_actions.to_string(),
            p.levenshtein_from_initial.to_string(),
            d.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Everything computed for one workspace directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    pub series: EditingPowerSeries,
    pub length_deltas: Vec<i64>,
    pub writing_actions: usize,
    pub active_minutes: f64,
    pub final_length_delta: i64,
}

impl SessionReport {
    pub fn to_csv(&self) -> Result<String, AnalyticsError> {
        export_report(&self.series, &self.length_deltas)
    }
}

pub fn analyze(initial: &str, snapshots: &[Snapshot], events: &[InteractionEvent]) -> Result<SessionReport, AnalyticsError> {
    let series = editing_power_series(initial, snapshots, events)?;
    let final_text = snapshots.last().map_or(initial, |s| s.text.as_str());
    Ok(SessionReport {
        series,
        length_deltas: length_deltas(initial, snapshots),
        writing_actions: writing_actions(events),
        active_minutes: active_time(events, DEFAULT_GAP),
        final_length_delta: length_delta(initial, final_text),
    })
}

/// Analyzes a workspace directory laid out by [`store::FileStore`].
pub fn analyze_dir(dir: &Path) -> Result<SessionReport, AnalyticsError> {
    let initial_path = dir.join(INITIAL_FILE);
    let initial = std::fs::read_to_string(&initial_path).map_err(|source| AnalyticsError::Io {
        path: initial_path.display().to_string(),
        source,
    })?;
    let events = store::read_events(&dir.join(EVENTS_FILE))?;
    let snapshots = store::read_snapshots(&dir.join(SNAPSHOT_DIR))?;
    analyze(&initial, &snapshots, &events)
}
