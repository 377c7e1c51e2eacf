//! Fixation logs and trial outcomes: parsing, validation and grouping into
//! per-participant trials.
//!
//! Both input files are UTF-8 CSV with a header row. Columns are located by
//! name, so exports carrying extra columns parse unchanged. Lines starting
//! with `#` are comments.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIXATION_COLUMNS: [&str; 8] = [
    "participant_id",
    "semester",
    "session_index",
    "opt_index",
    "fixation_index",
    "aoi_id",
    "start_ms",
    "duration_ms",
];

pub const OUTCOME_COLUMNS: [&str; 7] = [
    "participant_id",
    "semester",
    "session_index",
    "opt_index",
    "anomalies_found",
    "anomalies_total",
    "bfd_normalized",
];

/// Tolerance used when reconciling stored and recomputed scores, and when
/// snapping scores onto the `[0, 1]` boundary.
pub const SCORE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvFormat {
    pub delimiter: u8,
}

impl Default for CsvFormat {
    fn default() -> Self {
        CsvFormat { delimiter: b',' }
    }
}

/// One AOI fixation inside a trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixationRecord {
    pub participant_id: String,
    pub semester: u32,
    pub session_index: u32,
    pub opt_index: u32,
    pub fixation_index: u32,
    pub aoi_id: String,
    pub start_ms: u64,
    pub duration_ms: u64,
}

impl FixationRecord {
    fn trial_id(&self) -> TrialId {
        TrialId {
            participant_id: self.participant_id.clone(),
            semester: self.semester,
            session_index: self.session_index,
            opt_index: self.opt_index,
        }
    }

    fn sort_key(&self) -> (&str, u32, u32, u32, u32) {
        (
            &self.participant_id,
            self.semester,
            self.session_index,
            self.opt_index,
            self.fixation_index,
        )
    }
}

/// Per-trial outcome. Either the raw anomaly counts, the normalized score,
/// or both must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub participant_id: String,
    pub semester: u32,
    pub session_index: u32,
    pub opt_index: u32,
    pub anomalies_found: Option<u32>,
    pub anomalies_total: Option<u32>,
    pub bfd_normalized: Option<f64>,
}

impl TrialOutcome {
    fn trial_id(&self) -> TrialId {
        TrialId {
            participant_id: self.participant_id.clone(),
            semester: self.semester,
            session_index: self.session_index,
            opt_index: self.opt_index,
        }
    }
}

/// Trial identity without the derived chronological index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrialId {
    pub participant_id: String,
    pub semester: u32,
    pub session_index: u32,
    pub opt_index: u32,
}

/// Trial identity plus `ordered_index`, the participant's 0-based
/// chronological trial counter over (semester, session, opt).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub participant_id: String,
    pub semester: u32,
    pub session_index: u32,
    pub opt_index: u32,
    pub ordered_index: u32,
}

impl TrialKey {
    /// Filesystem-friendly label, e.g. `p01_s6_0_3`.
    pub fn label(&self) -> String {
        let pid: String = self
            .participant_id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        format!(
            "{}_s{}_{}_{}",
            pid, self.semester, self.session_index, self.opt_index
        )
    }
}

/// The ordered AOI sequence of one trial with per-fixation durations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Scanpath {
    pub aois: Vec<String>,
    pub durations_ms: Vec<u64>,
}

impl Scanpath {
    /// Scanpath with unit durations, so duration-weighted statistics equal
    /// count-weighted ones.
    pub fn from_aois<S: AsRef<str>>(aois: &[S]) -> Self {
        Scanpath {
            aois: aois.iter().map(|a| a.as_ref().to_string()).collect(),
            durations_ms: vec![1; aois.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.aois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aois.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub scanpath: Scanpath,
    /// Normalized performance score; `None` when no outcome row exists.
    pub bfd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialSet {
    pub trials: BTreeMap<TrialKey, Trial>,
    /// Non-fatal issues, e.g. outcome rows without fixations.
    pub warnings: Vec<String>,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn participants(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .trials
            .keys()
            .map(|k| k.participant_id.as_str())
            .collect();
        ids.dedup();
        ids
    }
}

struct Columns {
    indices: Vec<Option<usize>>,
}

impl Columns {
    fn locate(
        headers: &csv::StringRecord,
        wanted: &[&str],
        required: &[&str],
        path: &str,
    ) -> Result<Self> {
        let indices: Vec<Option<usize>> = wanted
            .iter()
            .map(|name| headers.iter().position(|h| h.trim() == *name))
            .collect();
        for (name, idx) in wanted.iter().zip(&indices) {
            if idx.is_none() && required.contains(name) {
                return Err(Error::MissingColumn {
                    path: path.to_string(),
                    column: name.to_string(),
                });
            }
        }
        Ok(Columns { indices })
    }

    fn get<'r>(&self, record: &'r csv::StringRecord, slot: usize) -> Option<&'r str> {
        self.indices[slot]
            .and_then(|i| record.get(i))
            .map(str::trim)
    }
}

struct RowContext<'a> {
    path: &'a str,
    line: u64,
}

impl RowContext<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Row {
            path: self.path.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn required<'r>(&self, value: Option<&'r str>, column: &str) -> Result<&'r str> {
        match value {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.error(format!("empty value in column `{column}`"))),
        }
    }

    fn int<T: std::str::FromStr>(&self, value: &str, column: &str) -> Result<T> {
        value.parse::<T>().map_err(|_| {
            self.error(format!(
                "cannot parse `{value}` in column `{column}` as a non-negative integer"
            ))
        })
    }

    fn opt_int<T: std::str::FromStr>(
        &self,
        value: Option<&str>,
        column: &str,
    ) -> Result<Option<T>> {
        match value {
            None | Some("") => Ok(None),
            Some(v) => self.int(v, column).map(Some),
        }
    }
}

fn csv_reader<R: Read>(input: R, format: CsvFormat) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

pub fn parse_fixation_log(path: &Path, format: CsvFormat) -> Result<Vec<FixationRecord>> {
    read_fixations(open(path)?, format, &path.display().to_string())
}

/// Parses fixation rows from any reader; `source` names the input in errors.
pub fn read_fixations<R: Read>(
    input: R,
    format: CsvFormat,
    source: &str,
) -> Result<Vec<FixationRecord>> {
    let mut reader = csv_reader(input, format);
    let headers = reader.headers()?.clone();
    let cols = Columns::locate(&headers, &FIXATION_COLUMNS, &FIXATION_COLUMNS, source)?;

    let mut records = Vec::new();
    let mut lines = Vec::new();
    for row in reader.records() {
        let row = row?;
        let ctx = RowContext {
            path: source,
            line: row.position().map(|p| p.line()).unwrap_or(0),
        };
        let field = |slot: usize| ctx.required(cols.get(&row, slot), FIXATION_COLUMNS[slot]);

        let participant_id = field(0)?.to_string();
        let semester: u32 = ctx.int(field(1)?, "semester")?;
        if semester < 1 {
            return Err(ctx.error("semester must be >= 1"));
        }
        let session_index = ctx.int(field(2)?, "session_index")?;
        let opt_index = ctx.int(field(3)?, "opt_index")?;
        let fixation_index = ctx.int(field(4)?, "fixation_index")?;
        let aoi_id = field(5)?.to_string();
        let start_ms = ctx.int(field(6)?, "start_ms")?;
        let duration: i64 = ctx.int(field(7)?, "duration_ms")?;
        if duration <= 0 {
            return Err(ctx.error(format!("duration_ms must be > 0, got {duration}")));
        }
        records.push(FixationRecord {
            participant_id,
            semester,
            session_index,
            opt_index,
            fixation_index,
            aoi_id,
            start_ms,
            duration_ms: duration as u64,
        });
        lines.push(ctx.line);
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].sort_key().cmp(&records[b].sort_key()));
    let lines: Vec<u64> = order.iter().map(|&i| lines[i]).collect();
    let mut slots: Vec<Option<FixationRecord>> = records.into_iter().map(Some).collect();
    let records: Vec<FixationRecord> = order.iter().map(|&i| slots[i].take().unwrap()).collect();

    for w in 1..records.len() {
        let (prev, cur) = (&records[w - 1], &records[w]);
        if prev.trial_id() != cur.trial_id() {
            continue;
        }
        let ctx = RowContext {
            path: source,
            line: lines[w],
        };
        if prev.fixation_index == cur.fixation_index {
            return Err(ctx.error(format!(
                "duplicate fixation_index {} (also on line {})",
                cur.fixation_index,
                lines[w - 1]
            )));
        }
        if cur.start_ms < prev.start_ms {
            return Err(ctx.error(format!(
                "start_ms {} precedes start_ms {} of the previous fixation",
                cur.start_ms, prev.start_ms
            )));
        }
    }
    Ok(records)
}

pub fn parse_outcomes(path: &Path, format: CsvFormat) -> Result<Vec<TrialOutcome>> {
    read_outcomes(open(path)?, format, &path.display().to_string())
}

pub fn read_outcomes<R: Read>(
    input: R,
    format: CsvFormat,
    source: &str,
) -> Result<Vec<TrialOutcome>> {
    let mut reader = csv_reader(input, format);
    let headers = reader.headers()?.clone();
    let cols = Columns::locate(&headers, &OUTCOME_COLUMNS, &OUTCOME_COLUMNS[..4], source)?;
    if (4..7).all(|slot| cols.indices[slot].is_none()) {
        return Err(Error::MissingColumn {
            path: source.to_string(),
            column: "bfd_normalized".to_string(),
        });
    }

    let mut seen = BTreeMap::new();
    let mut outcomes = Vec::new();
    for row in reader.records() {
        let row = row?;
        let ctx = RowContext {
            path: source,
            line: row.position().map(|p| p.line()).unwrap_or(0),
        };
        let field = |slot: usize| ctx.required(cols.get(&row, slot), OUTCOME_COLUMNS[slot]);
        let bfd_normalized =
            match cols.get(&row, 6) {
                None | Some("") => None,
                Some(v) => Some(v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(
                    || ctx.error(format!("cannot parse `{v}` in column `bfd_normalized`")),
                )?),
            };
        let outcome = TrialOutcome {
            participant_id: field(0)?.to_string(),
            semester: ctx.int(field(1)?, "semester")?,
            session_index: ctx.int(field(2)?, "session_index")?,
            opt_index: ctx.int(field(3)?, "opt_index")?,
            anomalies_found: ctx.opt_int(cols.get(&row, 4), "anomalies_found")?,
            anomalies_total: ctx.opt_int(cols.get(&row, 5), "anomalies_total")?,
            bfd_normalized,
        };
        validate_outcome(&outcome).map_err(|e| ctx.error(e.to_string()))?;
        if let Some(prev) = seen.insert(outcome.trial_id(), ctx.line) {
            return Err(ctx.error(format!(
                "duplicate outcome for trial (first on line {prev})"
            )));
        }
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

fn validate_outcome(outcome: &TrialOutcome) -> Result<()> {
    match (outcome.anomalies_found, outcome.anomalies_total) {
        (Some(_), None) | (None, Some(_)) => {
            return Err(Error::Validation(
                "anomalies_found and anomalies_total must be given together".into(),
            ))
        }
        (None, None) if outcome.bfd_normalized.is_none() => {
            return Err(Error::Validation(
                "outcome needs anomaly counts or bfd_normalized".into(),
            ))
        }
        _ => {}
    }
    if outcome.anomalies_total == Some(0) {
        return Err(Error::Validation("anomalies_total must be > 0".into()));
    }
    normalize_bfd(outcome).map(|_| ())
}

/// Normalized performance score in `[0, 1]`.
///
/// Prefers the stored `bfd_normalized`; otherwise `found / total`. Values
/// within [`SCORE_TOLERANCE`] outside the unit interval are snapped onto it.
pub fn normalize_bfd(outcome: &TrialOutcome) -> Result<f64> {
    let ratio = match (outcome.anomalies_found, outcome.anomalies_total) {
        (Some(found), Some(total)) => {
            if total == 0 {
                return Err(Error::Validation("anomalies_total must be > 0".into()));
            }
            if found > total {
                return Err(Error::Validation(format!(
                    "anomalies_found ({found}) exceeds anomalies_total ({total})"
                )));
            }
            Some(found as f64 / total as f64)
        }
        _ => None,
    };
    let score = match (outcome.bfd_normalized, ratio) {
        (Some(stored), Some(r)) => {
            if (stored - r).abs() > SCORE_TOLERANCE {
                return Err(Error::Validation(format!(
                    "bfd_normalized {stored} disagrees with anomalies_found/anomalies_total = {r}"
                )));
            }
            stored
        }
        (Some(stored), None) => stored,
        (None, Some(r)) => r,
        (None, None) => {
            return Err(Error::Validation(
                "outcome needs anomaly counts or bfd_normalized".into(),
            ))
        }
    };
    if !(-SCORE_TOLERANCE..=1.0 + SCORE_TOLERANCE).contains(&score) {
        return Err(Error::Validation(format!(
            "normalized score {score} lies outside [0, 1]"
        )));
    }
    Ok(score.clamp(0.0, 1.0))
}

/// Joins fixations and outcomes into trials keyed by [`TrialKey`].
///
/// Input order does not matter. Trials without an outcome keep a missing
/// score; outcomes without fixations are reported in `warnings`.
pub fn build_trials(fixations: &[FixationRecord], outcomes: &[TrialOutcome]) -> Result<TrialSet> {
    let mut grouped: BTreeMap<TrialId, Vec<&FixationRecord>> = BTreeMap::new();
    for rec in fixations {
        if rec.aoi_id.is_empty() {
            return Err(Error::Validation(format!(
                "empty aoi_id in trial {:?}",
                rec.trial_id()
            )));
        }
        if rec.duration_ms == 0 {
            return Err(Error::Validation("duration_ms must be > 0".into()));
        }
        grouped.entry(rec.trial_id()).or_default().push(rec);
    }

    let mut scores: BTreeMap<TrialId, f64> = BTreeMap::new();
    for outcome in outcomes {
        let score = normalize_bfd(outcome)?;
        if scores.insert(outcome.trial_id(), score).is_some() {
            return Err(Error::Validation(format!(
                "duplicate outcome for trial {:?}",
                outcome.trial_id()
            )));
        }
    }

    let mut set = TrialSet::default();
    let mut counter: BTreeMap<String, u32> = BTreeMap::new();
    for (id, mut recs) in grouped {
        recs.sort_by_key(|r| r.fixation_index);
        for pair in recs.windows(2) {
            if pair[0].fixation_index == pair[1].fixation_index {
                return Err(Error::Validation(format!(
                    "duplicate fixation_index {} in trial {id:?}",
                    pair[0].fixation_index
                )));
            }
            if pair[1].start_ms < pair[0].start_ms {
                return Err(Error::Validation(format!(
                    "start_ms decreases at fixation_index {} in trial {id:?}",
                    pair[1].fixation_index
                )));
            }
        }
        let next = counter.entry(id.participant_id.clone()).or_insert(0);
        let key = TrialKey {
            participant_id: id.participant_id.clone(),
            semester: id.semester,
            session_index: id.session_index,
            opt_index: id.opt_index,
            ordered_index: *next,
        };
        *next += 1;
        let scanpath = Scanpath {
            aois: recs.iter().map(|r| r.aoi_id.clone()).collect(),
            durations_ms: recs.iter().map(|r| r.duration_ms).collect(),
        };
        let bfd = scores.remove(&id);
        set.trials.insert(key, Trial { scanpath, bfd });
    }
    for id in scores.keys() {
        set.warnings.push(format!(
            "outcome for participant {} semester {} session {} opt {} has no fixations",
            id.participant_id, id.semester, id.session_index, id.opt_index
        ));
    }
    Ok(set)
}

pub fn load_trials(
    fixations: &Path,
    outcomes: Option<&Path>,
    format: CsvFormat,
) -> Result<TrialSet> {
    let fix = parse_fixation_log(fixations, format)?;
    let out = match outcomes {
        Some(p) => parse_outcomes(p, format)?,
        None => Vec::new(),
    };
    build_trials(&fix, &out)
}

pub fn write_fixations<W: Write>(out: W, records: &[FixationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIXATION_COLUMNS)?;
    for r in records {
        w.write_record([
            r.participant_id.clone(),
            r.semester.to_string(),
            r.session_index.to_string(),
            r.opt_index.to_string(),
            r.fixation_index.to_string(),
            r.aoi_id.clone(),
            r.start_ms.to_string(),
            r.duration_ms.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<fixations>", e))?;
    Ok(())
}

pub fn write_outcomes<W: Write>(out: W, outcomes: &[TrialOutcome]) -> Result<()> {
    fn opt<T: ToString>(v: Option<T>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OUTCOME_COLUMNS)?;
    for o in outcomes {
        w.write_record([
            o.participant_id.clone(),
            o.semester.to_string(),
            o.session_index.to_string(),
            o.opt_index.to_string(),
            opt(o.anomalies_found),
            opt(o.anomalies_total),
            opt(o.bfd_normalized),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<outcomes>", e))?;
    Ok(())
}
