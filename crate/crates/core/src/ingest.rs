//! Movement records: CSV parsing, cleaning, and time-slot binning.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, TimeZone};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{BBox, LonLat};

/// Exact header of the movement CSV format.
pub const MOVEMENT_HEADER: [&str; 9] = [
    "taxi_id", "on_time", "on_lon", "on_lat", "off_time", "off_lon", "off_lat", "price", "mileage",
];

/// Offset all timestamps are normalized to (+08:00).
pub const LOCAL_OFFSET_SECONDS: i32 = 8 * 3600;

pub const SLOTS_PER_DAY: usize = 48;

pub fn local_offset() -> FixedOffset {
    FixedOffset::east_opt(LOCAL_OFFSET_SECONDS).expect("valid offset")
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: expected {expected}, found {found}")]
    MalformedHeader { expected: String, found: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("time {time} is before span start {start}")]
    BeforeSpan { time: String, start: String },
    #[error("invalid span: {0}")]
    InvalidSpan(String),
    #[error("invalid slot length: {0} minutes")]
    InvalidSlotLength(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementRecord {
    pub taxi_id: String,
    pub on_time: DateTime<FixedOffset>,
    pub on_pos: LonLat,
    pub off_time: DateTime<FixedOffset>,
    pub off_pos: LonLat,
    pub price: f64,
    pub mileage: f64,
}

/// Inclusive range of local calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Span {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, IngestError> {
        if end < start {
            return Err(IngestError::InvalidSpan(format!("{end} precedes {start}")));
        }
        Ok(Self { start, end })
    }

    pub fn from_days(start: NaiveDate, days: usize) -> Result<Self, IngestError> {
        if days == 0 {
            return Err(IngestError::InvalidSpan("zero days".into()));
        }
        Ok(Self {
            start,
            end: start + Duration::days(days as i64 - 1),
        })
    }

    pub fn day_count(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    /// Local midnight starting the span.
    pub fn start_time(&self) -> DateTime<FixedOffset> {
        midnight(self.start)
    }

    /// Local midnight after the last day (exclusive end).
    pub fn end_time(&self) -> DateTime<FixedOffset> {
        midnight(self.end) + Duration::days(1)
    }

    pub fn contains(&self, t: DateTime<FixedOffset>) -> bool {
        t >= self.start_time() && t < self.end_time()
    }
}

fn midnight(d: NaiveDate) -> DateTime<FixedOffset> {
    local_offset()
        .from_local_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight"))
        .single()
        .expect("fixed offsets are unambiguous")
}

/// A time-slot ordinal counted from the span start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotIndex(pub usize);

/// Maps timestamps to slot ordinals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotClock {
    pub span_start: DateTime<FixedOffset>,
    pub slot_minutes: u32,
}

impl SlotClock {
    pub fn new(span_start: DateTime<FixedOffset>, slot_minutes: u32) -> Result<Self, IngestError> {
        if slot_minutes == 0 || (24 * 60) % slot_minutes != 0 {
            return Err(IngestError::InvalidSlotLength(slot_minutes));
        }
        Ok(Self {
            span_start,
            slot_minutes,
        })
    }

    pub fn for_span(span: &Span, slot_minutes: u32) -> Result<Self, IngestError> {
        Self::new(span.start_time(), slot_minutes)
    }

    pub fn slots_per_day(&self) -> usize {
        (24 * 60 / self.slot_minutes) as usize
    }

    pub fn bin(&self, t: DateTime<FixedOffset>) -> Result<SlotIndex, IngestError> {
        let secs = (t - self.span_start).num_seconds();
        if secs < 0 {
            return Err(IngestError::BeforeSpan {
                time: t.to_rfc3339(),
                start: self.span_start.to_rfc3339(),
            });
        }
        Ok(SlotIndex((secs / (self.slot_minutes as i64 * 60)) as usize))
    }

    pub fn slot_start(&self, slot: SlotIndex) -> DateTime<FixedOffset> {
        self.span_start + Duration::minutes(self.slot_minutes as i64 * slot.0 as i64)
    }
}

/// Slot of a record's get-on time.
pub fn bin_time(rec: &MovementRecord, clock: &SlotClock) -> Result<SlotIndex, IngestError> {
    clock.bin(rec.on_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Unparsable,
    MissingTimes,
    InvertedTimes,
    OutOfBbox,
    OutOfSpan,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::Unparsable => "unparsable",
            DropReason::MissingTimes => "missing_times",
            DropReason::InvertedTimes => "inverted_times",
            DropReason::OutOfBbox => "out_of_bbox",
            DropReason::OutOfSpan => "out_of_span",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows_read: usize,
    pub retained: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl CleaningReport {
    fn drop(&mut self, reason: DropReason) {
        *self.dropped.entry(reason).or_insert(0) += 1;
    }

    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

/// The per-record cleaning rule applied to an already parsed record.
pub fn check_record(rec: &MovementRecord, bbox: &BBox, span: &Span) -> Option<DropReason> {
    if rec.off_time <= rec.on_time {
        Some(DropReason::InvertedTimes)
    } else if !bbox.contains(rec.on_pos) {
        Some(DropReason::OutOfBbox)
    } else if !span.contains(rec.on_time) {
        Some(DropReason::OutOfSpan)
    } else {
        None
    }
}

fn sort_records(records: &mut [MovementRecord]) {
    records.sort_by(|a, b| {
        a.on_time
            .cmp(&b.on_time)
            .then_with(|| a.taxi_id.cmp(&b.taxi_id))
            .then_with(|| a.off_time.cmp(&b.off_time))
            .then_with(|| a.on_pos.lon.total_cmp(&b.on_pos.lon))
            .then_with(|| a.on_pos.lat.total_cmp(&b.on_pos.lat))
    });
}

/// Filters parsed records by the cleaning rules and sorts the survivors by get-on time.
pub fn clean_records(
    records: Vec<MovementRecord>,
    bbox: &BBox,
    span: &Span,
) -> (Vec<MovementRecord>, CleaningReport) {
    let mut report = CleaningReport {
        rows_read: records.len(),
        ..Default::default()
    };
    let mut kept: Vec<MovementRecord> = Vec::with_capacity(records.len());
    for rec in records {
        match check_record(&rec, bbox, span) {
            Some(reason) => report.drop(reason),
            None => kept.push(rec),
        }
    }
    sort_records(&mut kept);
    report.retained = kept.len();
    (kept, report)
}

fn parse_time(s: &str) -> Option<Result<DateTime<FixedOffset>, ()>> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    Some(
        DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&local_offset()))
            .map_err(|_| ()),
    )
}

enum RowOutcome {
    Record(MovementRecord),
    Dropped(DropReason),
}

fn parse_row(row: &csv::StringRecord) -> RowOutcome {
    if row.len() != MOVEMENT_HEADER.len() {
        return RowOutcome::Dropped(DropReason::Unparsable);
    }
    let num = |i: usize| row[i].trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let (on, off) = match (parse_time(&row[1]), parse_time(&row[4])) {
        (Some(Ok(a)), Some(Ok(b))) => (a, b),
        (None, _) | (_, None) => return RowOutcome::Dropped(DropReason::MissingTimes),
        _ => return RowOutcome::Dropped(DropReason::Unparsable),
    };
    let taxi_id = row[0].trim();
    match (num(2), num(3), num(5), num(6), num(7), num(8)) {
        (Some(on_lon), Some(on_lat), Some(off_lon), Some(off_lat), Some(price), Some(mileage)) if !taxi_id.is_empty() => {
            RowOutcome::Record(MovementRecord {
                taxi_id: taxi_id.to_string(),
                on_time: on,
                on_pos: LonLat::new(on_lon, on_lat),
                off_time: off,
                off_pos: LonLat::new(off_lon, off_lat),
                price,
                mileage,
            })
        }
        _ => RowOutcome::Dropped(DropReason::Unparsable),
    }
}

/// Parses movement CSV from a reader, dropping rows that fail cleaning.
pub fn parse_and_clean_reader<R: Read>(
    reader: R,
    bbox: &BBox,
    span: &Span,
) -> Result<(Vec<MovementRecord>, CleaningReport), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != MOVEMENT_HEADER {
        return Err(IngestError::MalformedHeader {
            expected: MOVEMENT_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut parsed = Vec::new();
    let mut early = CleaningReport::default();
    for row in rdr.records() {
        early.rows_read += 1;
        match row {
            Ok(row) => match parse_row(&row) {
                RowOutcome::Record(r) => parsed.push(r),
                RowOutcome::Dropped(reason) => early.drop(reason),
            },
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => early.drop(DropReason::Unparsable),
        }
    }
    let (kept, late) = clean_records(parsed, bbox, span);
    let mut report = early;
    for (reason, n) in late.dropped {
        *report.dropped.entry(reason).or_insert(0) += n;
    }
    report.retained = kept.len();
    Ok((kept, report))
}

pub fn parse_and_clean(
    path: &Path,
    bbox: &BBox,
    span: &Span,
) -> Result<(Vec<MovementRecord>, CleaningReport), IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_and_clean_reader(std::io::BufReader::new(file), bbox, span)
}

fn format_time(t: &DateTime<FixedOffset>) -> String {
    t.with_timezone(&local_offset()).format("%Y-%m-%dT%H:%M:%S%:z").to_string()
}

pub fn write_movements<W: Write>(writer: W, records: &[MovementRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MOVEMENT_HEADER)?;
    for r in records {
        w.write_record([
            r.taxi_id.clone(),
            format_time(&r.on_time),
            r.on_pos.lon.to_string(),
            r.on_pos.lat.to_string(),
            format_time(&r.off_time),
            r.off_pos.lon.to_string(),
            r.off_pos.lat.to_string(),
            r.price.to_string(),
            r.mileage.to_string(),
        ])?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_movements_file(path: &Path, records: &[MovementRecord]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_movements(std::io::BufWriter::new(file), records)
}
