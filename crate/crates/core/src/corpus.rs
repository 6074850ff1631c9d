//! Event ingestion and the immutable sparse count store.
//!
//! An [`EventCorpus`] holds aggregated (source, destination, timestamp)
//! counts with marginals and label dictionaries. Source and destination
//! dictionaries are disjoint index spaces: an entity handling both roles
//! gets one index per axis. Timestamps are normalized to integer day
//! indices relative to the corpus minimum.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One aggregated count cell, indices into the corpus dictionaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub source: u32,
    pub dest: u32,
    /// Position in the sorted distinct-timestamp list.
    pub time: u32,
    pub count: u64,
}

/// A raw input event prior to aggregation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub source: String,
    pub destination: Option<String>,
    pub timestamp: Option<TimeValue>,
    pub count: u64,
}

/// Timestamp forms accepted on ingestion. All records of one corpus must
/// use the same form so the values share a total order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeValue {
    /// Integer day index.
    Day(i64),
    /// Calendar date, normalized to days internally.
    Date(NaiveDate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeKind {
    Day,
    Date,
}

/// Origin of the normalized day indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeBase {
    /// Collapsed or absent time axis: a single pseudo-timestamp.
    None,
    /// Day indices were rebased by subtracting this value.
    Days(i64),
    /// Dates were rebased against this minimum date.
    Dates(NaiveDate),
}

/// Aggregated bigram view of the corpus over one axis pair, with both
/// row-major and column-major sorted layouts for O(nnz) sweeps.
#[derive(Debug, Clone)]
pub struct PairView {
    n_rows: u32,
    n_cols: u32,
    row_offsets: Vec<usize>,
    row_data: Vec<(u32, u64)>,
    col_offsets: Vec<usize>,
    col_data: Vec<(u32, u64)>,
}

impl PairView {
    /// Build from (row, col, count) triples; duplicates must be pre-aggregated.
    fn build(n_rows: u32, n_cols: u32, mut triples: Vec<(u32, u32, u64)>) -> Self {
        triples.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; n_rows as usize + 1];
        let mut row_data = Vec::with_capacity(triples.len());
        for &(r, c, v) in &triples {
            row_offsets[r as usize + 1] += 1;
            row_data.push((c, v));
        }
        for i in 0..n_rows as usize {
            row_offsets[i + 1] += row_offsets[i];
        }
        triples.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut col_offsets = vec![0usize; n_cols as usize + 1];
        let mut col_data = Vec::with_capacity(triples.len());
        for &(r, c, v) in &triples {
            col_offsets[c as usize + 1] += 1;
            col_data.push((r, v));
        }
        for i in 0..n_cols as usize {
            col_offsets[i + 1] += col_offsets[i];
        }
        PairView {
            n_rows,
            n_cols,
            row_offsets,
            row_data,
            col_offsets,
            col_data,
        }
    }

    /// Nonzero (col, count) entries of one row, sorted by col.
    pub fn row(&self, r: u32) -> &[(u32, u64)] {
        &self.row_data[self.row_offsets[r as usize]..self.row_offsets[r as usize + 1]]
    }

    /// Nonzero (row, count) entries of one column, sorted by row.
    pub fn col(&self, c: u32) -> &[(u32, u64)] {
        &self.col_data[self.col_offsets[c as usize]..self.col_offsets[c as usize + 1]]
    }

    pub fn n_rows(&self) -> u32 {
        self.n_rows
    }

    pub fn n_cols(&self) -> u32 {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.row_data.len()
    }

    /// All (row, col, count) triples in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).iter().map(move |&(c, v)| (r, c, v)))
    }
}

/// Immutable sparse count store over (source, destination, timestamp).
#[derive(Debug, Clone)]
pub struct EventCorpus {
    source_labels: Vec<String>,
    dest_labels: Vec<String>,
    source_lookup: HashMap<String, u32>,
    dest_lookup: HashMap<String, u32>,
    /// Sorted distinct normalized day indices (a single 0 when collapsed).
    times: Vec<i64>,
    time_base: TimeBase,
    has_destinations: bool,
    has_times: bool,
    /// Canonical cells sorted by (source, dest, time).
    cells: Vec<Cell>,
    source_marginals: Vec<u64>,
    dest_marginals: Vec<u64>,
    time_marginals: Vec<u64>,
    total: u64,
    active_sources: Vec<u32>,
    active_dests: Vec<u32>,
    spatial: Option<PairView>,
    temporal: Option<PairView>,
}

impl EventCorpus {
    pub fn n_sources(&self) -> u32 {
        self.source_labels.len() as u32
    }

    pub fn n_destinations(&self) -> u32 {
        self.dest_labels.len() as u32
    }

    pub fn n_times(&self) -> u32 {
        self.times.len() as u32
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn has_destinations(&self) -> bool {
        self.has_destinations
    }

    pub fn has_times(&self) -> bool {
        self.has_times
    }

    pub fn source_label(&self, i: u32) -> &str {
        &self.source_labels[i as usize]
    }

    pub fn dest_label(&self, j: u32) -> &str {
        &self.dest_labels[j as usize]
    }

    pub fn source_index(&self, label: &str) -> Option<u32> {
        self.source_lookup.get(label).copied()
    }

    pub fn dest_index(&self, label: &str) -> Option<u32> {
        self.dest_lookup.get(label).copied()
    }

    /// Normalized day indices of the observed timestamps, ascending.
    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn time_base(&self) -> TimeBase {
        self.time_base
    }

    /// Human-readable label of the timestamp at a given position: an ISO
    /// date when the corpus was ingested from dates, the original integer
    /// otherwise.
    pub fn time_label(&self, pos: u32) -> String {
        let v = self.times[pos as usize];
        match self.time_base {
            TimeBase::None => v.to_string(),
            TimeBase::Days(base) => (base + v).to_string(),
            TimeBase::Dates(base) => (base + chrono::Duration::days(v)).format("%Y-%m-%d").to_string(),
        }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn source_marginals(&self) -> &[u64] {
        &self.source_marginals
    }

    pub fn dest_marginals(&self) -> &[u64] {
        &self.dest_marginals
    }

    pub fn time_marginals(&self) -> &[u64] {
        &self.time_marginals
    }

    /// Sources with at least one call; only these participate in fitting.
    pub fn active_sources(&self) -> &[u32] {
        &self.active_sources
    }

    pub fn active_destinations(&self) -> &[u32] {
        &self.active_dests
    }

    /// Aggregated (source, destination) counts.
    pub fn spatial_view(&self) -> Result<&PairView> {
        self.spatial.as_ref().ok_or(Error::NoDestinations)
    }

    /// Aggregated (source, timestamp-position) counts.
    pub fn temporal_view(&self) -> Result<&PairView> {
        self.temporal.as_ref().ok_or(Error::NoTimestamps)
    }

    /// Collapse the time axis, keeping (source, destination) counts.
    pub fn project_spatial(&self) -> Result<EventCorpus> {
        let view = self.spatial_view()?;
        let mut builder = CorpusBuilder::new();
        for label in &self.source_labels {
            builder.declare_source(label);
        }
        for label in &self.dest_labels {
            builder.declare_destination(label);
        }
        for (i, j, c) in view.iter() {
            builder
                .add(&self.source_labels[i as usize], Some(&self.dest_labels[j as usize]), None, c)
                .expect("projection records are well-formed");
        }
        builder.build()
    }

    /// Collapse the destination axis, keeping (source, timestamp) counts.
    pub fn project_temporal(&self) -> Result<EventCorpus> {
        let view = self.temporal_view()?;
        let mut builder = CorpusBuilder::new();
        for label in &self.source_labels {
            builder.declare_source(label);
        }
        for (i, t, c) in view.iter() {
            let tv = match self.time_base {
                TimeBase::None => TimeValue::Day(self.times[t as usize]),
                TimeBase::Days(base) => TimeValue::Day(base + self.times[t as usize]),
                TimeBase::Dates(base) => {
                    TimeValue::Date(base + chrono::Duration::days(self.times[t as usize]))
                }
            };
            builder
                .add(&self.source_labels[i as usize], None, Some(tv), c)
                .expect("projection records are well-formed");
        }
        builder.build()
    }

    /// Content digest, invariant under input record order and dictionary
    /// numbering (labels are canonicalized by sorting before hashing).
    pub fn digest(&self) -> String {
        let mut src_sorted: Vec<u32> = (0..self.n_sources()).collect();
        src_sorted.sort_by(|&a, &b| self.source_labels[a as usize].cmp(&self.source_labels[b as usize]));
        let mut src_rank = vec![0u32; self.n_sources() as usize];
        for (rank, &i) in src_sorted.iter().enumerate() {
            src_rank[i as usize] = rank as u32;
        }
        let mut dst_sorted: Vec<u32> = (0..self.n_destinations()).collect();
        dst_sorted.sort_by(|&a, &b| self.dest_labels[a as usize].cmp(&self.dest_labels[b as usize]));
        let mut dst_rank = vec![0u32; self.n_destinations() as usize];
        for (rank, &j) in dst_sorted.iter().enumerate() {
            dst_rank[j as usize] = rank as u32;
        }

        let mut hasher = Sha256::new();
        hasher.update(b"cocluster-corpus-v1");
        hasher.update((self.n_sources() as u64).to_le_bytes());
        hasher.update((self.n_destinations() as u64).to_le_bytes());
        hasher.update((self.times.len() as u64).to_le_bytes());
        hasher.update([self.has_destinations as u8, self.has_times as u8]);
        match self.time_base {
            TimeBase::None => hasher.update(b"T0"),
            TimeBase::Days(base) => {
                hasher.update(b"TD");
                hasher.update(base.to_le_bytes());
            }
            TimeBase::Dates(base) => {
                hasher.update(b"TI");
                hasher.update(base.format("%Y-%m-%d").to_string().as_bytes());
            }
        }
        for &i in &src_sorted {
            let label = &self.source_labels[i as usize];
            hasher.update((label.len() as u64).to_le_bytes());
            hasher.update(label.as_bytes());
        }
        for &j in &dst_sorted {
            let label = &self.dest_labels[j as usize];
            hasher.update((label.len() as u64).to_le_bytes());
            hasher.update(label.as_bytes());
        }
        let mut entries: Vec<(u32, u32, i64, u64)> = self
            .cells
            .iter()
            .map(|c| {
                let d = if self.has_destinations { dst_rank[c.dest as usize] } else { 0 };
                (src_rank[c.source as usize], d, self.times[c.time as usize], c.count)
            })
            .collect();
        entries.sort_unstable();
        for (s, d, t, c) in entries {
            hasher.update((s as u64).to_le_bytes());
            hasher.update((d as u64).to_le_bytes());
            hasher.update(t.to_le_bytes());
            hasher.update(c.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Write the corpus as a normalized CSV that round-trips through
    /// [`ingest_csv`] to an identical count multiset. Collapsed axes are
    /// omitted from the output.
    pub fn export_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["source"];
        if self.has_destinations {
            header.push("destination");
        }
        if self.has_times {
            header.push("timestamp");
        }
        header.push("count");
        w.write_record(&header)?;
        for cell in &self.cells {
            let mut record = vec![self.source_labels[cell.source as usize].clone()];
            if self.has_destinations {
                record.push(self.dest_labels[cell.dest as usize].clone());
            }
            if self.has_times {
                record.push(self.time_label(cell.time));
            }
            record.push(cell.count.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Default)]
struct Indexer {
    labels: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl Indexer {
    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&i) = self.lookup.get(label) {
            return i;
        }
        let i = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.lookup.insert(label.to_string(), i);
        i
    }
}

/// Accumulates event records and builds an [`EventCorpus`].
///
/// Dictionaries assign dense indices in first-seen order; duplicate
/// (source, destination, timestamp) records aggregate by summation.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    sources: Indexer,
    dests: Indexer,
    shape: Option<(bool, bool)>, // (has_destinations, has_times)
    time_kind: Option<TimeKind>,
    cells: HashMap<(u32, u32, i64), u64>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        CorpusBuilder::default()
    }

    /// Register a source label without any calls. Zero-marginal entities
    /// stay in the dictionary but are excluded from fitting.
    pub fn declare_source(&mut self, label: &str) {
        self.sources.intern(label);
    }

    pub fn declare_destination(&mut self, label: &str) {
        self.dests.intern(label);
    }

    pub fn add(
        &mut self,
        source: &str,
        destination: Option<&str>,
        timestamp: Option<TimeValue>,
        count: u64,
    ) -> Result<()> {
        if count == 0 {
            return Err(Error::InvalidInput("count must be >= 1".into()));
        }
        let shape = (destination.is_some(), timestamp.is_some());
        if shape == (false, false) {
            return Err(Error::InvalidInput(
                "record needs a destination or a timestamp".into(),
            ));
        }
        match self.shape {
            None => self.shape = Some(shape),
            Some(s) if s != shape => {
                return Err(Error::InvalidInput(
                    "records mix presence of destination/timestamp fields".into(),
                ))
            }
            _ => {}
        }
        let day = match timestamp {
            None => 0,
            Some(TimeValue::Day(d)) => {
                match self.time_kind {
                    None => self.time_kind = Some(TimeKind::Day),
                    Some(TimeKind::Day) => {}
                    Some(TimeKind::Date) => {
                        return Err(Error::InvalidInput(
                            "integer day index mixed with calendar dates".into(),
                        ))
                    }
                }
                d
            }
            Some(TimeValue::Date(date)) => {
                match self.time_kind {
                    None => self.time_kind = Some(TimeKind::Date),
                    Some(TimeKind::Date) => {}
                    Some(TimeKind::Day) => {
                        return Err(Error::InvalidInput(
                            "calendar date mixed with integer day indices".into(),
                        ))
                    }
                }
                date.signed_duration_since(NaiveDate::from_ymd_opt(1970, 1, 1).unwrap())
                    .num_days()
            }
        };
        let s = self.sources.intern(source);
        let d = destination.map(|l| self.dests.intern(l)).unwrap_or(0);
        *self.cells.entry((s, d, day)).or_insert(0) += count;
        Ok(())
    }

    pub fn build(self) -> Result<EventCorpus> {
        if self.cells.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let (has_destinations, has_times) = self.shape.expect("cells imply shape");

        let mut day_values: Vec<i64> = if has_times {
            let mut v: Vec<i64> = self.cells.keys().map(|&(_, _, t)| t).collect();
            v.sort_unstable();
            v.dedup();
            v
        } else {
            vec![0]
        };
        let min_day = day_values[0];
        for v in &mut day_values {
            *v -= min_day;
        }
        let time_base = if !has_times {
            TimeBase::None
        } else {
            match self.time_kind.expect("timestamped cells imply a kind") {
                TimeKind::Day => TimeBase::Days(min_day),
                TimeKind::Date => TimeBase::Dates(
                    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(min_day),
                ),
            }
        };
        let time_pos: HashMap<i64, u32> = day_values
            .iter()
            .enumerate()
            .map(|(p, &v)| (v, p as u32))
            .collect();

        let mut cells: Vec<Cell> = self
            .cells
            .iter()
            .map(|(&(s, d, t), &c)| Cell {
                source: s,
                dest: d,
                time: time_pos[&(t - min_day)],
                count: c,
            })
            .collect();
        cells.sort_unstable_by_key(|c| (c.source, c.dest, c.time));

        let n_sources = self.sources.labels.len();
        let n_dests = self.dests.labels.len();
        let mut source_marginals = vec![0u64; n_sources];
        let mut dest_marginals = vec![0u64; n_dests];
        let mut time_marginals = vec![0u64; day_values.len()];
        let mut total = 0u64;
        for cell in &cells {
            source_marginals[cell.source as usize] += cell.count;
            if has_destinations {
                dest_marginals[cell.dest as usize] += cell.count;
            }
            time_marginals[cell.time as usize] += cell.count;
            total += cell.count;
        }

        let spatial = if has_destinations {
            let mut triples: Vec<(u32, u32, u64)> = Vec::new();
            let mut agg: BTreeMap<(u32, u32), u64> = BTreeMap::new();
            for cell in &cells {
                *agg.entry((cell.source, cell.dest)).or_insert(0) += cell.count;
            }
            triples.extend(agg.into_iter().map(|((r, c), v)| (r, c, v)));
            Some(PairView::build(n_sources as u32, n_dests as u32, triples))
        } else {
            None
        };
        let temporal = if has_times {
            let mut agg: BTreeMap<(u32, u32), u64> = BTreeMap::new();
            for cell in &cells {
                *agg.entry((cell.source, cell.time)).or_insert(0) += cell.count;
            }
            let triples: Vec<(u32, u32, u64)> = agg.into_iter().map(|((r, c), v)| (r, c, v)).collect();
            Some(PairView::build(
                n_sources as u32,
                day_values.len() as u32,
                triples,
            ))
        } else {
            None
        };

        let active_sources: Vec<u32> = (0..n_sources as u32)
            .filter(|&i| source_marginals[i as usize] > 0)
            .collect();
        let active_dests: Vec<u32> = (0..n_dests as u32)
            .filter(|&j| dest_marginals[j as usize] > 0)
            .collect();

        Ok(EventCorpus {
            source_labels: self.sources.labels,
            dest_labels: self.dests.labels,
            source_lookup: self.sources.lookup,
            dest_lookup: self.dests.lookup,
            times: day_values,
            time_base,
            has_destinations,
            has_times,
            cells,
            source_marginals,
            dest_marginals,
            time_marginals,
            total,
            active_sources,
            active_dests,
            spatial,
            temporal,
        })
    }
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub source: String,
    pub destination: Option<String>,
    pub timestamp: Option<String>,
    pub count: Option<String>,
    pub separator: u8,
    /// Labels to drop on sight, on either axis.
    pub ignore: HashSet<String>,
}

impl CsvSchema {
    pub fn new(source: impl Into<String>) -> Self {
        CsvSchema {
            source: source.into(),
            destination: None,
            timestamp: None,
            count: None,
            separator: b',',
            ignore: HashSet::new(),
        }
    }

    pub fn destination(mut self, col: impl Into<String>) -> Self {
        self.destination = Some(col.into());
        self
    }

    pub fn timestamp(mut self, col: impl Into<String>) -> Self {
        self.timestamp = Some(col.into());
        self
    }

    pub fn count(mut self, col: impl Into<String>) -> Self {
        self.count = Some(col.into());
        self
    }

    pub fn separator(mut self, sep: u8) -> Self {
        self.separator = sep;
        self
    }
}

fn parse_time_value(raw: &str) -> Option<TimeValue> {
    if let Ok(day) = raw.trim().parse::<i64>() {
        return Some(TimeValue::Day(day));
    }
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
        .ok()
        .map(TimeValue::Date)
}

/// Ingest a CSV file into an [`EventCorpus`].
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<EventCorpus> {
    let file = std::fs::File::open(path)?;
    ingest_csv_reader(file, schema)
}

/// Same as [`ingest_csv`], reading from any source.
pub fn ingest_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<EventCorpus> {
    if schema.destination.is_none() && schema.timestamp.is_none() {
        return Err(Error::InvalidInput(
            "schema must name a destination or a timestamp column".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.separator)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = match rdr.headers() {
        Ok(h) if !h.is_empty() => h.clone(),
        _ => return Err(Error::EmptyCorpus),
    };
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let source_col = col(&schema.source)?;
    let dest_col = schema.destination.as_deref().map(col).transpose()?;
    let time_col = schema.timestamp.as_deref().map(col).transpose()?;
    let count_col = schema.count.as_deref().map(col).transpose()?;

    let mut builder = CorpusBuilder::new();
    let mut saw_rows = false;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        saw_rows = true;
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::MalformedRecord {
                line,
                msg: "missing field".into(),
            })
        };
        let source = field(source_col)?.trim();
        if source.is_empty() {
            return Err(Error::MalformedRecord {
                line,
                msg: "empty source label".into(),
            });
        }
        let destination = match dest_col {
            Some(idx) => {
                let d = field(idx)?.trim();
                if d.is_empty() {
                    return Err(Error::MalformedRecord {
                        line,
                        msg: "empty destination label".into(),
                    });
                }
                Some(d)
            }
            None => None,
        };
        let timestamp = match time_col {
            Some(idx) => {
                let raw = field(idx)?;
                Some(parse_time_value(raw).ok_or_else(|| Error::MalformedRecord {
                    line,
                    msg: format!("unparseable timestamp `{}`", raw.trim()),
                })?)
            }
            None => None,
        };
        let count = match count_col {
            Some(idx) => {
                let raw = field(idx)?.trim();
                let n: i64 = raw.parse().map_err(|_| Error::MalformedRecord {
                    line,
                    msg: format!("unparseable count `{raw}`"),
                })?;
                if n <= 0 {
                    return Err(Error::MalformedRecord {
                        line,
                        msg: format!("count must be >= 1, got {n}"),
                    });
                }
                n as u64
            }
            None => 1,
        };
        if schema.ignore.contains(source) || destination.map_or(false, |d| schema.ignore.contains(d)) {
            continue;
        }
        builder
            .add(source, destination, timestamp, count)
            .map_err(|e| Error::MalformedRecord {
                line,
                msg: e.to_string(),
            })?;
    }
    if !saw_rows {
        return Err(Error::EmptyCorpus);
    }
    builder.build()
}

/// Entity label -> (latitude, longitude) table for map exports.
#[derive(Debug, Clone, Default)]
pub struct CoordinateTable {
    map: HashMap<String, (f64, f64)>,
}

impl CoordinateTable {
    pub fn new() -> Self {
        CoordinateTable::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, lat: f64, lon: f64) -> Result<()> {
        let id = id.into();
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidCoordinate { id, lat, lon });
        }
        self.map.insert(id, (lat, lon));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<(f64, f64)> {
        self.map.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Read a `id,lat,lon` CSV.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (id_col, lat_col, lon_col) = (col("id")?, col("lat")?, col("lon")?);
        let mut table = CoordinateTable::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let parse = |idx: usize| -> Result<f64> {
                record
                    .get(idx)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::MalformedRecord {
                        line,
                        msg: "unparseable coordinate".into(),
                    })
            };
            let id = record.get(id_col).unwrap_or("").trim().to_string();
            table.insert(id, parse(lat_col)?, parse(lon_col)?)?;
        }
        Ok(table)
    }
}
