//! Raw event ingestion.
//!
//! Three CSV streams are accepted, each UTF-8 with a mandatory header row:
//!
//! | file        | header                          |
//! |-------------|---------------------------------|
//! | `cgm.csv`   | `subject,timestamp,bg`          |
//! | `bolus.csv` | `subject,timestamp,kind,units`  |
//! | `meal.csv`  | `subject,timestamp,carbs`       |
//!
//! Timestamps are device-local `YYYY-MM-DDTHH:MM`. Rows are validated against
//! sanity bands; rejected rows are collected (or abort the parse in strict
//! mode). Valid events are then grouped into one [`SubjectDayBundle`] per
//! subject and calendar date.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

pub const BG_RANGE: (f64, f64) = (20.0, 600.0);
pub const MAX_INSULIN_UNITS: f64 = 300.0;
pub const MAX_MEAL_CARBS: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SubjectId(String);

impl SubjectId {
    pub fn new(value: impl Into<String>) -> Result<Self, String> {
        let value = value.into();
        if value.trim().is_empty() {
            return Err("empty subject id".to_string());
        }
        Ok(SubjectId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// File-name-safe rendering used for per-subject bundle files.
    pub fn file_stem(&self) -> String {
        self.0
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    }
}

impl TryFrom<String> for SubjectId {
    type Error = String;
    fn try_from(value: String) -> Result<Self, String> {
        SubjectId::new(value)
    }
}

impl From<SubjectId> for String {
    fn from(id: SubjectId) -> String {
        id.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgmReading {
    pub subject: SubjectId,
    pub timestamp: NaiveDateTime,
    pub bg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InsulinKind {
    Correction,
    Meal,
    Total,
}

impl InsulinKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InsulinKind::Correction => "correction",
            InsulinKind::Meal => "meal",
            InsulinKind::Total => "total",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "correction" => Some(InsulinKind::Correction),
            "meal" => Some(InsulinKind::Meal),
            "total" => Some(InsulinKind::Total),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsulinEvent {
    pub subject: SubjectId,
    pub timestamp: NaiveDateTime,
    pub kind: InsulinKind,
    pub units: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MealEvent {
    pub subject: SubjectId,
    pub timestamp: NaiveDateTime,
    pub carbs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawEvent {
    Cgm(CgmReading),
    Insulin(InsulinEvent),
    Meal(MealEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Cgm,
    Bolus,
    Meal,
}

impl StreamKind {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            StreamKind::Cgm => &["subject", "timestamp", "bg"],
            StreamKind::Bolus => &["subject", "timestamp", "kind", "units"],
            StreamKind::Meal => &["subject", "timestamp", "carbs"],
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            StreamKind::Cgm => "cgm.csv",
            StreamKind::Bolus => "bolus.csv",
            StreamKind::Meal => "meal.csv",
        }
    }
}

/// Events from one or more parsed files plus every row that was rejected.
#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub events: Vec<RawEvent>,
    pub rejected: Vec<Error>,
}

/// Parses every file in `paths` as `kind`. Files are read concurrently and
/// merged in (path, line) order. In strict mode the first bad row aborts.
pub fn parse_event_files(
    paths: &[PathBuf],
    kind: StreamKind,
    strict: bool,
) -> Result<ParseOutcome> {
    let mut sorted: Vec<PathBuf> = paths.to_vec();
    sorted.sort();
    let per_file = par::map_slice(&sorted, |path| {
        let file = fs::File::open(path).map_err(Error::io(path))?;
        parse_events(file, path, kind, strict)
    });
    let mut out = ParseOutcome::default();
    for result in per_file {
        let outcome = result?;
        out.events.extend(outcome.events);
        out.rejected.extend(outcome.rejected);
    }
    Ok(out)
}

/// Parses one CSV stream from any reader; `source` only labels errors.
pub fn parse_events<R: Read>(
    reader: R,
    source: &Path,
    kind: StreamKind,
    strict: bool,
) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(Error::csv(source))?.clone();
    let expected = kind.header();
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h.trim() != *e)
    {
        return Err(Error::MalformedRow {
            file: source.to_path_buf(),
            line: 1,
            reason: format!("expected header `{}`", expected.join(",")),
        });
    }

    let mut out = ParseOutcome::default();
    for record in rdr.records() {
        let record = record.map_err(Error::csv(source))?;
        let line = record.position().map_or(0, |p| p.line());
        match parse_row(&record, kind, source, line) {
            Ok(event) => out.events.push(event),
            Err(err) => {
                if strict {
                    return Err(err);
                }
                log::warn!("rejected row: {err}");
                out.rejected.push(err);
            }
        }
    }
    Ok(out)
}

fn parse_row(
    record: &csv::StringRecord,
    kind: StreamKind,
    file: &Path,
    line: u64,
) -> Result<RawEvent> {
    let malformed = |reason: String| Error::MalformedRow {
        file: file.to_path_buf(),
        line,
        reason,
    };
    let out_of_range = |reason: String| Error::OutOfRange {
        file: file.to_path_buf(),
        line,
        reason,
    };
    let expected = kind.header().len();
    if record.len() != expected {
        return Err(malformed(format!(
            "expected {expected} fields, found {}",
            record.len()
        )));
    }
    let subject = SubjectId::new(record[0].trim()).map_err(malformed)?;
    let timestamp = NaiveDateTime::parse_from_str(record[1].trim(), TIMESTAMP_FORMAT)
        .map_err(|e| malformed(format!("timestamp `{}`: {e}", &record[1])))?;
    let number = |field: &str, name: &str| -> Result<f64> {
        field
            .trim()
            .parse::<f64>()
            .map_err(|_| malformed(format!("{name} `{field}` is not a number")))
    };

    match kind {
        StreamKind::Cgm => {
            let bg = number(&record[2], "bg")?;
            if !bg.is_finite() || bg < BG_RANGE.0 || bg > BG_RANGE.1 {
                return Err(out_of_range(format!(
                    "bg {bg} outside [{}, {}]",
                    BG_RANGE.0, BG_RANGE.1
                )));
            }
            Ok(RawEvent::Cgm(CgmReading {
                subject,
                timestamp,
                bg,
            }))
        }
        StreamKind::Bolus => {
            let kind = InsulinKind::parse(record[2].trim())
                .ok_or_else(|| malformed(format!("unknown bolus kind `{}`", &record[2])))?;
            let units = number(&record[3], "units")?;
            if !units.is_finite() || !(0.0..=MAX_INSULIN_UNITS).contains(&units) {
                return Err(out_of_range(format!(
                    "units {units} outside [0, {MAX_INSULIN_UNITS}]"
                )));
            }
            Ok(RawEvent::Insulin(InsulinEvent {
                subject,
                timestamp,
                kind,
                units,
            }))
        }
        StreamKind::Meal => {
            let carbs = number(&record[2], "carbs")?;
            if !carbs.is_finite() || !(0.0..=MAX_MEAL_CARBS).contains(&carbs) {
                return Err(out_of_range(format!(
                    "carbs {carbs} outside [0, {MAX_MEAL_CARBS}]"
                )));
            }
            Ok(RawEvent::Meal(MealEvent {
                subject,
                timestamp,
                carbs,
            }))
        }
    }
}

/// All events of one subject on one calendar date.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDayBundle {
    pub subject: SubjectId,
    pub date: NaiveDate,
    /// Strictly increasing timestamps.
    pub cgm: Vec<CgmReading>,
    pub insulin: Vec<InsulinEvent>,
    pub meals: Vec<MealEvent>,
}

impl SubjectDayBundle {
    fn empty(subject: SubjectId, date: NaiveDate) -> Self {
        SubjectDayBundle {
            subject,
            date,
            cgm: Vec::new(),
            insulin: Vec::new(),
            meals: Vec::new(),
        }
    }

    pub fn event_count(&self) -> usize {
        self.cgm.len() + self.insulin.len() + self.meals.len()
    }
}

/// Groups events by (subject, calendar date). Bundles come out sorted by
/// subject then date; duplicate CGM timestamps keep the last occurrence.
pub fn bundle_by_day(events: impl IntoIterator<Item = RawEvent>) -> Vec<SubjectDayBundle> {
    let mut groups: BTreeMap<(SubjectId, NaiveDate), SubjectDayBundle> = BTreeMap::new();
    fn slot<'a>(
        groups: &'a mut BTreeMap<(SubjectId, NaiveDate), SubjectDayBundle>,
        subject: &SubjectId,
        ts: &NaiveDateTime,
    ) -> &'a mut SubjectDayBundle {
        groups
            .entry((subject.clone(), ts.date()))
            .or_insert_with(|| SubjectDayBundle::empty(subject.clone(), ts.date()))
    }
    for event in events {
        match event {
            RawEvent::Cgm(r) => slot(&mut groups, &r.subject, &r.timestamp).cgm.push(r),
            RawEvent::Insulin(e) => slot(&mut groups, &e.subject, &e.timestamp).insulin.push(e),
            RawEvent::Meal(m) => slot(&mut groups, &m.subject, &m.timestamp).meals.push(m),
        }
    }

    groups
        .into_values()
        .map(|mut bundle| {
            bundle.cgm.sort_by_key(|r| r.timestamp);
            let mut deduped: Vec<CgmReading> = Vec::with_capacity(bundle.cgm.len());
            for reading in bundle.cgm.drain(..) {
                match deduped.last_mut() {
                    Some(last) if last.timestamp == reading.timestamp => *last = reading,
                    _ => deduped.push(reading),
                }
            }
            bundle.cgm = deduped;
            bundle.insulin.sort_by_key(|e| e.timestamp);
            bundle.meals.sort_by_key(|m| m.timestamp);
            bundle
        })
        .collect()
}

/// One JSON line per subject-day in a bundle file.
///
/// ```text
/// {"subject":"S01","date":"2013-04-02",
///  "cgm":[["2013-04-02T08:05",112.0],...],
///  "bolus":[["2013-04-02T08:10","meal",4.0],...],
///  "meal":[["2013-04-02T08:00",45.0],...]}
/// ```
#[derive(Debug, Serialize, Deserialize)]
struct BundleLine {
    subject: SubjectId,
    date: NaiveDate,
    cgm: Vec<(String, f64)>,
    bolus: Vec<(String, InsulinKind, f64)>,
    meal: Vec<(String, f64)>,
}

fn fmt_ts(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

impl From<&SubjectDayBundle> for BundleLine {
    fn from(b: &SubjectDayBundle) -> Self {
        BundleLine {
            subject: b.subject.clone(),
            date: b.date,
            cgm: b.cgm.iter().map(|r| (fmt_ts(&r.timestamp), r.bg)).collect(),
            bolus: b
                .insulin
                .iter()
                .map(|e| (fmt_ts(&e.timestamp), e.kind, e.units))
                .collect(),
            meal: b
                .meals
                .iter()
                .map(|m| (fmt_ts(&m.timestamp), m.carbs))
                .collect(),
        }
    }
}

impl BundleLine {
    fn into_bundle(self) -> Result<SubjectDayBundle, String> {
        let ts = |s: &str| {
            NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
                .map_err(|e| format!("timestamp `{s}`: {e}"))
        };
        let subject = self.subject;
        let cgm = self
            .cgm
            .iter()
            .map(|(t, bg)| {
                Ok(CgmReading {
                    subject: subject.clone(),
                    timestamp: ts(t)?,
                    bg: *bg,
                })
            })
            .collect::<Result<_, String>>()?;
        let insulin = self
            .bolus
            .iter()
            .map(|(t, kind, units)| {
                Ok(InsulinEvent {
                    subject: subject.clone(),
                    timestamp: ts(t)?,
                    kind: *kind,
                    units: *units,
                })
            })
            .collect::<Result<_, String>>()?;
        let meals = self
            .meal
            .iter()
            .map(|(t, carbs)| {
                Ok(MealEvent {
                    subject: subject.clone(),
                    timestamp: ts(t)?,
                    carbs: *carbs,
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(SubjectDayBundle {
            subject,
            date: self.date,
            cgm,
            insulin,
            meals,
        })
    }
}

/// Writes one `<subject>.jsonl` file per subject into `dir`.
pub fn write_bundles(dir: &Path, bundles: &[SubjectDayBundle]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut by_subject: BTreeMap<&SubjectId, Vec<&SubjectDayBundle>> = BTreeMap::new();
    for b in bundles {
        by_subject.entry(&b.subject).or_default().push(b);
    }
    let mut written = Vec::with_capacity(by_subject.len());
    for (subject, days) in by_subject {
        let path = dir.join(format!("{}.jsonl", subject.file_stem()));
        let file = fs::File::create(&path).map_err(Error::io(&path))?;
        let mut w = BufWriter::new(file);
        for day in days {
            serde_json::to_writer(&mut w, &BundleLine::from(day)).map_err(Error::json(&path))?;
            w.write_all(b"\n").map_err(Error::io(&path))?;
        }
        w.flush().map_err(Error::io(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads every `*.jsonl` bundle file in `dir`, returning bundles sorted by
/// (subject, date).
pub fn read_bundles(dir: &Path) -> Result<Vec<SubjectDayBundle>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    paths.sort();
    let mut bundles = Vec::new();
    for path in paths {
        let file = fs::File::open(&path).map_err(Error::io(&path))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(Error::io(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: BundleLine = serde_json::from_str(&line).map_err(Error::json(&path))?;
            let bundle = parsed.into_bundle().map_err(|reason| Error::MalformedRow {
                file: path.clone(),
                line: i as u64 + 1,
                reason,
            })?;
            bundles.push(bundle);
        }
    }
    bundles.sort_by(|a, b| (&a.subject, a.date).cmp(&(&b.subject, b.date)));
    Ok(bundles)
}

/// Parses the three standard CSVs found in `dir` (each optional except
/// `cgm.csv`) and bundles them.
pub fn load_raw_dir(dir: &Path, strict: bool) -> Result<(Vec<SubjectDayBundle>, Vec<Error>)> {
    let mut events = Vec::new();
    let mut rejected = Vec::new();
    for kind in [StreamKind::Cgm, StreamKind::Bolus, StreamKind::Meal] {
        let path = dir.join(kind.file_name());
        if kind != StreamKind::Cgm && !path.exists() {
            continue;
        }
        let outcome = parse_event_files(&[path], kind, strict)?;
        events.extend(outcome.events);
        rejected.extend(outcome.rejected);
    }
    Ok((bundle_by_day(events), rejected))
}
