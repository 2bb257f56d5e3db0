//! Tactic trace data model and preparation pipeline.
//!
//! A trace is an ordered series of tactic executions, each carrying a latency
//! and a cost observation plus optional uncertainty-reduction side channels
//! (a ping round-trip time and an availability flag). This module ingests the
//! canonical CSV format, splits a trace chronologically into train/test/
//! validation spans, min-max normalizes it against the training span, merges
//! URT side channels, downsamples to emulate reduced sampling rates, and
//! builds the sliding supervised windows all predictors train on.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Channel name for tactic latency (seconds).
pub const CH_LATENCY: &str = "latency";
/// Channel name for tactic cost (CPU fraction).
pub const CH_COST: &str = "cost";
/// Channel name for the URT ping round-trip time (seconds).
pub const CH_URT_PING: &str = "urt_ping";
/// Channel name for the URT availability flag (0/1).
pub const CH_URT_AVAILABLE: &str = "urt_available";

const MANDATORY_COLUMNS: [&str; 4] = ["seq_index", "tactic_source", CH_LATENCY, CH_COST];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("dataset too small: {0}")]
    TooSmall(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("channel {0:?} is constant over the training split; cannot normalize")]
    DegenerateChannel(String),
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("dataset has no split; call split_chronological or split_exact first")]
    NoSplit,
    #[error("dataset is not normalized; call normalize_fit_apply first")]
    NotNormalized,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One observation of a tactic execution.
///
/// In a raw trace `latency > 0`, `cost` lies in `[0, 1]` and `urt_ping >= 0`;
/// after [`normalize_fit_apply`] the numeric fields hold normalized values
/// and those raw-unit invariants no longer apply.
#[derive(Debug, Clone, PartialEq)]
pub struct TacticRecord {
    pub seq_index: usize,
    pub tactic_source: String,
    pub latency: f64,
    pub cost: f64,
    pub urt_ping: Option<f64>,
    pub urt_available: Option<bool>,
}

impl TacticRecord {
    /// Channel value as a float; availability maps to 0/1.
    pub fn channel(&self, name: &str) -> Option<f64> {
        match name {
            CH_LATENCY => Some(self.latency),
            CH_COST => Some(self.cost),
            CH_URT_PING => self.urt_ping,
            CH_URT_AVAILABLE => self.urt_available.map(|b| if b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    fn set_channel(&mut self, name: &str, value: f64) {
        match name {
            CH_LATENCY => self.latency = value,
            CH_COST => self.cost = value,
            CH_URT_PING => self.urt_ping = Some(value),
            // Stored via urt_ping-style float is impossible here; the flag is
            // re-encoded on write, so keep the 0/1 interpretation.
            CH_URT_AVAILABLE => self.urt_available = Some(value != 0.0),
            _ => unreachable!("unknown channel {name}"),
        }
    }
}

/// Contiguous chronological split sizes: train first, then test, then validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: usize,
    pub test: usize,
    pub val: usize,
}

impl Split {
    pub fn total(&self) -> usize {
        self.train + self.test + self.val
    }

    /// Half-open record ranges for (train, test, validation).
    pub fn ranges(&self) -> [std::ops::Range<usize>; 3] {
        let a = self.train;
        let b = a + self.test;
        let c = b + self.val;
        [0..a, a..b, b..c]
    }
}

/// Per-channel min-max parameters fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NormParams {
    channels: BTreeMap<String, (f64, f64)>,
}

impl NormParams {
    pub fn get(&self, channel: &str) -> Option<(f64, f64)> {
        self.channels.get(channel).copied()
    }

    pub fn normalize(&self, channel: &str, raw: f64) -> Result<f64, TraceError> {
        let (lo, hi) = self
            .get(channel)
            .ok_or_else(|| TraceError::UnknownChannel(channel.to_string()))?;
        Ok((raw - lo) / (hi - lo))
    }

    pub fn denormalize(&self, channel: &str, normalized: f64) -> Result<f64, TraceError> {
        let (lo, hi) = self
            .get(channel)
            .ok_or_else(|| TraceError::UnknownChannel(channel.to_string()))?;
        Ok(normalized * (hi - lo) + lo)
    }
}

/// An ordered multichannel time series with optional split boundaries and
/// normalization state. Immutable after construction; preparation steps
/// return new datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceDataset {
    pub records: Vec<TacticRecord>,
    pub channels: Vec<String>,
    pub split: Option<Split>,
    pub norm: Option<NormParams>,
}

impl TraceDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tactic_source(&self) -> &str {
        self.records
            .first()
            .map(|r| r.tactic_source.as_str())
            .unwrap_or("")
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.channels.iter().any(|c| c == name)
    }

    /// Extract one channel as a dense vector.
    pub fn channel_values(&self, name: &str) -> Result<Vec<f64>, TraceError> {
        if !self.has_channel(name) {
            return Err(TraceError::UnknownChannel(name.to_string()));
        }
        self.records
            .iter()
            .map(|r| {
                r.channel(name).ok_or_else(|| {
                    TraceError::Schema(format!("record {} lacks channel {name}", r.seq_index))
                })
            })
            .collect()
    }

    /// Records of one split span.
    pub fn split_records(&self, which: SplitKind) -> Result<&[TacticRecord], TraceError> {
        let split = self.split.ok_or(TraceError::NoSplit)?;
        let ranges = split.ranges();
        Ok(&self.records[ranges[which as usize].clone()])
    }
}

/// Identifies one of the three chronological spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train = 0,
    Test = 1,
    Val = 2,
}

/// Parse the canonical trace CSV format:
/// `seq_index,tactic_source,latency,cost[,urt_ping][,urt_available]`.
///
/// Records keep file order and are assigned fresh, gap-free `seq_index`
/// values. Row numbers in errors count the header as row 1.
pub fn parse_trace(csv_text: &str) -> Result<TraceDataset, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(csv_text.as_bytes());

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| TraceError::Schema(format!("unreadable header: {e}")))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    validate_header(&headers)?;

    let has_ping = headers.iter().any(|h| h == CH_URT_PING);
    let has_avail = headers.iter().any(|h| h == CH_URT_AVAILABLE);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (c_src, c_lat, c_cost) = (col("tactic_source"), col(CH_LATENCY), col(CH_COST));

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2; // header is row 1
        let row = row.map_err(|e| TraceError::Parse {
            row: row_no,
            msg: e.to_string(),
        })?;
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let num = |idx: usize, name: &str| -> Result<f64, TraceError> {
            let parsed: Option<f64> = field(idx).parse().ok().filter(|v: &f64| v.is_finite());
            parsed.ok_or_else(|| TraceError::Parse {
                row: row_no,
                msg: format!("field {name} is not a finite number: {:?}", field(idx)),
            })
        };

        let latency = num(c_lat, CH_LATENCY)?;
        let cost = num(c_cost, CH_COST)?;
        if latency <= 0.0 {
            return Err(TraceError::Parse {
                row: row_no,
                msg: format!("latency must be > 0, got {latency}"),
            });
        }
        if !(0.0..=1.0).contains(&cost) {
            return Err(TraceError::Parse {
                row: row_no,
                msg: format!("cost must be in [0, 1], got {cost}"),
            });
        }
        let urt_ping = if has_ping {
            let v = num(col(CH_URT_PING), CH_URT_PING)?;
            if v < 0.0 {
                return Err(TraceError::Parse {
                    row: row_no,
                    msg: format!("urt_ping must be >= 0, got {v}"),
                });
            }
            Some(v)
        } else {
            None
        };
        let urt_available = if has_avail {
            match field(col(CH_URT_AVAILABLE)) {
                "0" => Some(false),
                "1" => Some(true),
                other => {
                    return Err(TraceError::Parse {
                        row: row_no,
                        msg: format!("urt_available must be 0 or 1, got {other:?}"),
                    })
                }
            }
        } else {
            None
        };

        records.push(TacticRecord {
            seq_index: records.len(),
            tactic_source: field(c_src).to_string(),
            latency,
            cost,
            urt_ping,
            urt_available,
        });
    }

    if let Some(first) = records.first() {
        if let Some(bad) = records
            .iter()
            .find(|r| r.tactic_source != first.tactic_source)
        {
            return Err(TraceError::Schema(format!(
                "mixed tactic sources in one trace: {:?} and {:?}",
                first.tactic_source, bad.tactic_source
            )));
        }
    }

    let mut channels = vec![CH_LATENCY.to_string(), CH_COST.to_string()];
    if has_ping {
        channels.push(CH_URT_PING.to_string());
    }
    if has_avail {
        channels.push(CH_URT_AVAILABLE.to_string());
    }

    Ok(TraceDataset {
        records,
        channels,
        split: None,
        norm: None,
    })
}

fn validate_header(headers: &[String]) -> Result<(), TraceError> {
    for required in MANDATORY_COLUMNS {
        if !headers.iter().any(|h| h == required) {
            return Err(TraceError::Schema(format!(
                "missing mandatory column {required:?}"
            )));
        }
    }
    let mut expected: Vec<&str> = MANDATORY_COLUMNS.to_vec();
    if headers.iter().any(|h| h == CH_URT_PING) {
        expected.push(CH_URT_PING);
    }
    if headers.iter().any(|h| h == CH_URT_AVAILABLE) {
        expected.push(CH_URT_AVAILABLE);
    }
    let got: Vec<&str> = headers.iter().map(String::as_str).collect();
    if got != expected {
        return Err(TraceError::Schema(format!(
            "header must be exactly {expected:?} in that order, got {got:?}"
        )));
    }
    Ok(())
}

/// Render a dataset back to the canonical CSV format.
pub fn write_trace_csv(ds: &TraceDataset) -> String {
    let mut out = String::from("seq_index,tactic_source,latency,cost");
    if ds.has_channel(CH_URT_PING) {
        out.push_str(",urt_ping");
    }
    if ds.has_channel(CH_URT_AVAILABLE) {
        out.push_str(",urt_available");
    }
    out.push('\n');
    for r in &ds.records {
        out.push_str(&format!(
            "{},{},{},{}",
            r.seq_index, r.tactic_source, r.latency, r.cost
        ));
        if ds.has_channel(CH_URT_PING) {
            out.push_str(&format!(",{}", r.urt_ping.unwrap_or(0.0)));
        }
        if ds.has_channel(CH_URT_AVAILABLE) {
            out.push_str(&format!(",{}", u8::from(r.urt_available.unwrap_or(false))));
        }
        out.push('\n');
    }
    out
}

/// Split a trace chronologically by fractions. The test and validation counts
/// are rounded to the nearest record and the remainder goes to training.
pub fn split_chronological(
    ds: &TraceDataset,
    fractions: (f64, f64, f64),
) -> Result<TraceDataset, TraceError> {
    let (f_train, f_test, f_val) = fractions;
    if !(f_train > 0.0 && f_test > 0.0 && f_val > 0.0) {
        return Err(TraceError::InvalidArgument(
            "split fractions must be positive".into(),
        ));
    }
    if (f_train + f_test + f_val - 1.0).abs() > 1e-9 {
        return Err(TraceError::InvalidArgument(format!(
            "split fractions must sum to 1, got {}",
            f_train + f_test + f_val
        )));
    }
    let n = ds.len();
    if n < 3 {
        return Err(TraceError::TooSmall(format!(
            "need at least 3 records to split, have {n}"
        )));
    }
    let test = (n as f64 * f_test).round() as usize;
    let val = (n as f64 * f_val).round() as usize;
    if test + val >= n {
        return Err(TraceError::TooSmall(format!(
            "test ({test}) + validation ({val}) leave no training records out of {n}"
        )));
    }
    let train = n - test - val;
    split_exact(ds, (train, test, val))
}

/// Split a trace chronologically with explicit counts (the published dataset
/// fixes exact boundaries that round fractions cannot reproduce).
pub fn split_exact(
    ds: &TraceDataset,
    counts: (usize, usize, usize),
) -> Result<TraceDataset, TraceError> {
    let (train, test, val) = counts;
    if train + test + val != ds.len() {
        return Err(TraceError::InvalidArgument(format!(
            "split counts {train}+{test}+{val} != {} records",
            ds.len()
        )));
    }
    if train == 0 || test == 0 || val == 0 {
        return Err(TraceError::TooSmall(format!(
            "every split must be non-empty, got ({train}, {test}, {val})"
        )));
    }
    let mut out = ds.clone();
    out.split = Some(Split { train, test, val });
    Ok(out)
}

/// Fit per-channel min-max parameters on the training split only and apply
/// them to every record. Values outside the training range map outside
/// `[0, 1]`; no clamping.
pub fn normalize_fit_apply(ds: &TraceDataset) -> Result<TraceDataset, TraceError> {
    let split = ds.split.ok_or(TraceError::NoSplit)?;
    let mut params = NormParams::default();
    for ch in &ds.channels {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in &ds.records[..split.train] {
            let v = r
                .channel(ch)
                .ok_or_else(|| TraceError::UnknownChannel(ch.clone()))?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi <= lo {
            return Err(TraceError::DegenerateChannel(ch.clone()));
        }
        params.channels.insert(ch.clone(), (lo, hi));
    }
    let mut out = ds.clone();
    for r in &mut out.records {
        for ch in &ds.channels {
            let raw = r.channel(ch).unwrap();
            r.set_channel(ch, params.normalize(ch, raw)?);
        }
    }
    out.norm = Some(params);
    Ok(out)
}

/// Invert [`normalize_fit_apply`], restoring raw units.
pub fn denormalize(ds: &TraceDataset) -> Result<TraceDataset, TraceError> {
    let params = ds.norm.clone().ok_or(TraceError::NotNormalized)?;
    let mut out = ds.clone();
    for r in &mut out.records {
        for ch in &ds.channels {
            let v = r.channel(ch).unwrap();
            r.set_channel(ch, params.denormalize(ch, v)?);
        }
    }
    out.norm = None;
    Ok(out)
}

/// Keep every `n`th record (indices 0, n, 2n, ...), reassigning gap-free
/// sequence indices. Split counts, when set, are recomputed proportionally
/// with the remainder going to training.
pub fn downsample(ds: &TraceDataset, n: usize) -> Result<TraceDataset, TraceError> {
    if n == 0 {
        return Err(TraceError::InvalidArgument(
            "downsample rate must be >= 1".into(),
        ));
    }
    let mut out = ds.clone();
    out.records = ds.records.iter().step_by(n).cloned().collect();
    for (i, r) in out.records.iter_mut().enumerate() {
        r.seq_index = i;
    }
    if let Some(split) = ds.split {
        let old_total = split.total() as f64;
        let new_total = out.records.len();
        let test = (new_total as f64 * split.test as f64 / old_total).round() as usize;
        let val = (new_total as f64 * split.val as f64 / old_total).round() as usize;
        if test + val >= new_total || test == 0 || val == 0 {
            return Err(TraceError::TooSmall(format!(
                "downsampling by {n} leaves no usable split ({new_total} records)"
            )));
        }
        out.split = Some(Split {
            train: new_total - test - val,
            test,
            val,
        });
    }
    Ok(out)
}

/// Merge URT side channels into a tactic trace by sequence-index alignment.
///
/// Missing URT values are forward-filled from the last observation; indices
/// before the first URT observation take that first value (cold start).
pub fn merge_urt(ds: &TraceDataset, urt: &TraceDataset) -> Result<TraceDataset, TraceError> {
    if ds.is_empty() || urt.is_empty() {
        return Err(TraceError::Alignment(
            "cannot merge an empty dataset".into(),
        ));
    }
    if ds.tactic_source() != urt.tactic_source() {
        return Err(TraceError::Alignment(format!(
            "tactic sources differ: {:?} vs {:?}",
            ds.tactic_source(),
            urt.tactic_source()
        )));
    }
    if !urt.has_channel(CH_URT_PING) {
        return Err(TraceError::Alignment(
            "URT dataset has no urt_ping channel".into(),
        ));
    }
    let with_avail = urt.has_channel(CH_URT_AVAILABLE);
    for ch in [CH_URT_PING, CH_URT_AVAILABLE] {
        if ds.has_channel(ch) {
            return Err(TraceError::Alignment(format!(
                "trace already has channel {ch:?}"
            )));
        }
    }

    let by_index: BTreeMap<usize, &TacticRecord> =
        urt.records.iter().map(|r| (r.seq_index, r)).collect();
    if !ds
        .records
        .iter()
        .any(|r| by_index.contains_key(&r.seq_index))
    {
        return Err(TraceError::Alignment(
            "no overlapping sequence indices between trace and URT".into(),
        ));
    }

    let first = urt.records.first().unwrap();
    let mut last_ping = first.urt_ping.unwrap_or(0.0);
    let mut last_avail = first.urt_available;
    let mut out = ds.clone();
    for r in &mut out.records {
        if let Some(u) = by_index.get(&r.seq_index) {
            last_ping = u.urt_ping.unwrap_or(last_ping);
            if with_avail {
                last_avail = u.urt_available.or(last_avail);
            }
        }
        r.urt_ping = Some(last_ping);
        if with_avail {
            r.urt_available = last_avail.or(Some(true));
        }
    }
    out.channels.push(CH_URT_PING.to_string());
    if with_avail {
        out.channels.push(CH_URT_AVAILABLE.to_string());
    }
    Ok(out)
}

/// Drop channels not listed in `keep` (latency and cost are always kept).
pub fn retain_channels(ds: &TraceDataset, keep: &[String]) -> TraceDataset {
    let mut out = ds.clone();
    let keep_ch =
        |name: &str| name == CH_LATENCY || name == CH_COST || keep.iter().any(|k| k == name);
    out.channels.retain(|c| keep_ch(c));
    for r in &mut out.records {
        if !out.channels.iter().any(|c| c == CH_URT_PING) {
            r.urt_ping = None;
        }
        if !out.channels.iter().any(|c| c == CH_URT_AVAILABLE) {
            r.urt_available = None;
        }
    }
    out
}

/// One supervised sequence: `targets[t]` holds the target channels' values at
/// step `t + 1` (teacher-forced one-step-ahead).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

/// All windows of one split, with channel bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub input_channels: Vec<String>,
    pub target_channels: Vec<String>,
    pub windows: Vec<Window>,
}

impl WindowSet {
    pub fn seq_len(&self) -> usize {
        self.windows.first().map(|w| w.inputs.len()).unwrap_or(0)
    }
}

/// Windows for each chronological split.
#[derive(Debug, Clone)]
pub struct SplitWindows {
    pub train: WindowSet,
    pub test: WindowSet,
    pub val: WindowSet,
}

/// Build sliding windows (length `seq_len`, stride 1) independently per
/// split. A split of length `L` yields `L - seq_len` windows.
pub fn make_windows(
    ds: &TraceDataset,
    input_channels: &[String],
    target_channels: &[String],
    seq_len: usize,
) -> Result<SplitWindows, TraceError> {
    if seq_len < 2 {
        return Err(TraceError::InvalidArgument(format!(
            "seq_len must be >= 2, got {seq_len}"
        )));
    }
    if ds.norm.is_none() {
        return Err(TraceError::NotNormalized);
    }
    let split = ds.split.ok_or(TraceError::NoSplit)?;
    for ch in input_channels.iter().chain(target_channels) {
        if !ds.has_channel(ch) {
            return Err(TraceError::UnknownChannel(ch.clone()));
        }
    }
    if target_channels.is_empty() {
        return Err(TraceError::InvalidArgument(
            "need at least one target channel".into(),
        ));
    }

    let names = ["train", "test", "validation"];
    let mut sets = Vec::with_capacity(3);
    for (range, name) in split.ranges().into_iter().zip(names) {
        let records = &ds.records[range];
        if records.len() < seq_len + 1 {
            return Err(TraceError::TooSmall(format!(
                "{name} split has {} records; needs at least seq_len + 1 = {}",
                records.len(),
                seq_len + 1
            )));
        }
        let mut windows = Vec::with_capacity(records.len() - seq_len);
        for start in 0..records.len() - seq_len {
            let inputs = (start..start + seq_len)
                .map(|t| {
                    input_channels
                        .iter()
                        .map(|c| records[t].channel(c).unwrap())
                        .collect()
                })
                .collect();
            let targets = (start + 1..start + seq_len + 1)
                .map(|t| {
                    target_channels
                        .iter()
                        .map(|c| records[t].channel(c).unwrap())
                        .collect()
                })
                .collect();
            windows.push(Window { inputs, targets });
        }
        sets.push(WindowSet {
            input_channels: input_channels.to_vec(),
            target_channels: target_channels.to_vec(),
            windows,
        });
    }
    let val = sets.pop().unwrap();
    let test = sets.pop().unwrap();
    let train = sets.pop().unwrap();
    Ok(SplitWindows { train, test, val })
}
