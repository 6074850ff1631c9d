//! Mutual-information contribution reporting: which bicluster carries an
//! excess or a deficit of traffic relative to independence of the two
//! partitions.

use serde::{Deserialize, Serialize};

use crate::corpus::{CoordinateTable, EventCorpus};
use crate::criterion::{Axis, ClusterId, SpatialModel, TemporalModel};
use crate::error::{Error, Result};

/// Default relative deviation from independence before a cell is flagged.
pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Excess,
    Deficit,
    Neutral,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Excess => write!(f, "excess"),
            Classification::Deficit => write!(f, "deficit"),
            Classification::Neutral => write!(f, "neutral"),
        }
    }
}

/// Classify a cell by comparing its joint probability against the product
/// of its marginals. Zero-traffic cells are neutral: null traffic reads the
/// same as expected traffic.
pub fn classify(p_joint: f64, p_expected: f64, epsilon: f64) -> Classification {
    debug_assert!(epsilon >= 0.0);
    if p_joint == 0.0 {
        return Classification::Neutral;
    }
    if p_joint > p_expected * (1.0 + epsilon) {
        Classification::Excess
    } else if p_joint < p_expected * (1.0 - epsilon) {
        Classification::Deficit
    } else {
        Classification::Neutral
    }
}

/// One (source cluster, destination cluster or time segment) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Contribution {
    pub row: ClusterId,
    pub col: ClusterId,
    pub joint_count: u64,
    pub p_joint: f64,
    pub p_row: f64,
    pub p_col: f64,
    /// p(i,j) * ln(p(i,j) / (p(i) p(j))), 0 for empty cells; nats.
    pub contribution: f64,
    pub label: Classification,
}

/// Per-bicluster mutual-information contributions of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContributionReport {
    /// The partner axis of the columns: destinations or time segments.
    pub col_axis: Axis,
    /// All cells, rows and columns in canonical order.
    pub entries: Vec<Contribution>,
    /// Total mutual information in nats; always >= 0.
    pub total_mi: f64,
    pub epsilon: f64,
}

impl ContributionReport {
    pub fn entry(&self, row: ClusterId, col: ClusterId) -> Option<&Contribution> {
        self.entries.iter().find(|e| e.row == row && e.col == col)
    }
}

fn contribution_table(
    rows: &[(ClusterId, u64)],
    cols: &[(ClusterId, u64)],
    block: impl Fn(ClusterId, ClusterId) -> u64,
    total: u64,
    col_axis: Axis,
    epsilon: f64,
) -> ContributionReport {
    let m = total as f64;
    let mut entries = Vec::with_capacity(rows.len() * cols.len());
    let mut total_mi = 0.0;
    for &(i, row_count) in rows {
        let p_i = row_count as f64 / m;
        for &(j, col_count) in cols {
            let p_j = col_count as f64 / m;
            let joint = block(i, j);
            let p_ij = joint as f64 / m;
            let contribution = if joint == 0 {
                0.0
            } else {
                p_ij * (p_ij / (p_i * p_j)).ln()
            };
            total_mi += contribution;
            entries.push(Contribution {
                row: i,
                col: j,
                joint_count: joint,
                p_joint: p_ij,
                p_row: p_i,
                p_col: p_j,
                contribution,
                label: classify(p_ij, p_i * p_j, epsilon),
            });
        }
    }
    ContributionReport {
        col_axis,
        entries,
        total_mi,
        epsilon,
    }
}

/// MI contributions between source clusters and destination clusters.
/// Clusters are reported in canonical order (by smallest member entity).
pub fn mi_contributions_spatial(
    model: &SpatialModel,
    corpus: &EventCorpus,
    epsilon: f64,
) -> Result<ContributionReport> {
    if corpus.total() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let rows: Vec<(ClusterId, u64)> = canonical_with_counts(model, Axis::Sources)?;
    let cols: Vec<(ClusterId, u64)> = canonical_with_counts(model, Axis::Destinations)?;
    Ok(contribution_table(
        &rows,
        &cols,
        |i, j| model.block_count(i, j).expect("live clusters"),
        corpus.total(),
        Axis::Destinations,
        epsilon,
    ))
}

/// MI contributions between source clusters and time segments; segments
/// appear in time order.
pub fn mi_contributions_temporal(
    model: &TemporalModel,
    corpus: &EventCorpus,
    epsilon: f64,
) -> Result<ContributionReport> {
    if corpus.total() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut rows: Vec<(ClusterId, u64)> = Vec::new();
    for id in canonical_source_order_temporal(model) {
        rows.push((id, model.cluster_count(Axis::Sources, id)?));
    }
    let mut cols: Vec<(ClusterId, u64)> = Vec::new();
    for id in model.segments_in_order() {
        cols.push((id, model.cluster_count(Axis::Segments, id)?));
    }
    Ok(contribution_table(
        &rows,
        &cols,
        |i, t| model.block_count(i, t).expect("live clusters"),
        corpus.total(),
        Axis::Segments,
        epsilon,
    ))
}

// Cluster ids ordered by smallest member entity, paired with counts.
fn canonical_with_counts(model: &SpatialModel, axis: Axis) -> Result<Vec<(ClusterId, u64)>> {
    let mut ids = model.cluster_ids(axis);
    ids.sort_by_key(|&id| model.cluster_min_member(axis, id).expect("live cluster"));
    ids.into_iter()
        .map(|id| Ok((id, model.cluster_count(axis, id)?)))
        .collect()
}

fn canonical_source_order_temporal(model: &TemporalModel) -> Vec<ClusterId> {
    let mut ids = model.cluster_ids(Axis::Sources);
    ids.sort_by_key(|&id| {
        model
            .cluster_min_member(Axis::Sources, id)
            .expect("live cluster")
    });
    ids
}

/// One destination entity of a map report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntityRecord {
    pub label: String,
    /// Destination cluster of the entity; None for zero-traffic entities
    /// outside the fitted partition.
    pub cluster: Option<ClusterId>,
    /// Its cluster's contribution against the focus cluster.
    pub contribution: f64,
    pub label_class: Classification,
    /// ln(1 + incoming calls of the entity).
    pub size: f64,
    pub lat: f64,
    pub lon: f64,
}

/// Map report: per-destination-entity records for one focus source cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntityReport {
    pub focus: ClusterId,
    pub records: Vec<EntityRecord>,
    /// Entities dropped because the coordinate table lacks them.
    pub skipped_missing_coords: usize,
}

/// Build per-entity records from a spatial contribution report: each
/// destination entity inherits its cluster's contribution and label against
/// the focus source cluster, and carries a log-scaled size channel.
pub fn entity_report(
    report: &ContributionReport,
    model: &SpatialModel,
    corpus: &EventCorpus,
    coordinates: &CoordinateTable,
    focus: ClusterId,
) -> Result<EntityReport> {
    if report.col_axis != Axis::Destinations {
        return Err(Error::InvalidInput(
            "entity reports require a spatial contribution report".into(),
        ));
    }
    if !model.has_cluster(Axis::Sources, focus) {
        return Err(Error::UnknownCluster(focus));
    }
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for j in 0..corpus.n_destinations() {
        let label = corpus.dest_label(j).to_string();
        let Some((lat, lon)) = coordinates.get(&label) else {
            skipped += 1;
            continue;
        };
        let incoming = corpus.dest_marginals()[j as usize];
        let cluster = model.assignment_of(Axis::Destinations, j)?;
        let (contribution, class) = match cluster {
            Some(c) => {
                let e = report
                    .entry(focus, c)
                    .ok_or_else(|| Error::InvalidInput("report/model mismatch".into()))?;
                (e.contribution, e.label)
            }
            None => (0.0, Classification::Neutral),
        };
        records.push(EntityRecord {
            label,
            cluster,
            contribution,
            label_class: class,
            size: (1.0 + incoming as f64).ln(),
            lat,
            lon,
        });
    }
    Ok(EntityReport {
        focus,
        records,
        skipped_missing_coords: skipped,
    })
}

/// Calendar grid: one row per source cluster, one column per observed day,
/// each day inheriting its segment's classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalendarReport {
    /// Source cluster ids, canonical order.
    pub clusters: Vec<ClusterId>,
    /// Day labels (ISO dates or day indices), time order.
    pub days: Vec<String>,
    /// grid[cluster][day].
    pub grid: Vec<Vec<Classification>>,
}

/// Build the calendar of excesses and deficits of a fitted temporal model.
pub fn calendar_report(
    model: &TemporalModel,
    corpus: &EventCorpus,
    epsilon: f64,
) -> Result<CalendarReport> {
    let report = mi_contributions_temporal(model, corpus, epsilon)?;
    let clusters = canonical_source_order_temporal(model);
    let days: Vec<String> = (0..corpus.n_times()).map(|p| corpus.time_label(p)).collect();
    let mut grid = Vec::with_capacity(clusters.len());
    for &c in &clusters {
        let mut row = Vec::with_capacity(days.len());
        for p in 0..corpus.n_times() {
            let seg = model.segment_of_position(p)?;
            let e = report
                .entry(c, seg)
                .ok_or_else(|| Error::InvalidInput("report/model mismatch".into()))?;
            row.push(e.label);
        }
        grid.push(row);
    }
    Ok(CalendarReport { clusters, days, grid })
}
