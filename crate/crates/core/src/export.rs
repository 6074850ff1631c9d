//! Report writers: informativity curve CSV, contribution CSV, calendar CSV
//! and GeoJSON map exports.

use std::io::Write;

use serde_json::json;

use crate::analysis::{CalendarReport, ContributionReport, EntityReport};
use crate::error::Result;
use crate::hierarchy::CurvePoint;

/// Unit for reported contribution values; costs and MI are computed in
/// nats internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Nats,
    Bits,
}

impl Unit {
    fn convert(self, nats: f64) -> f64 {
        match self {
            Unit::Nats => nats,
            Unit::Bits => nats / std::f64::consts::LN_2,
        }
    }
}

/// `clusters,tau,cost` rows, leaves first, root last.
pub fn write_curve_csv<W: Write>(writer: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["clusters", "tau", "cost"])?;
    for p in points {
        w.write_record([p.clusters.to_string(), p.tau.to_string(), p.cost.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `source_cluster,dest_cluster_or_segment,joint_count,contribution,label`
/// rows. Cluster ids are renumbered to dense canonical ranks.
pub fn write_contribution_csv<W: Write>(
    writer: W,
    report: &ContributionReport,
    unit: Unit,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "source_cluster",
        "dest_cluster_or_segment",
        "joint_count",
        "contribution",
        "label",
    ])?;
    let mut row_rank = std::collections::HashMap::new();
    let mut col_rank = std::collections::HashMap::new();
    for e in &report.entries {
        let next = row_rank.len();
        row_rank.entry(e.row).or_insert(next);
        let next = col_rank.len();
        col_rank.entry(e.col).or_insert(next);
    }
    for e in &report.entries {
        w.write_record([
            row_rank[&e.row].to_string(),
            col_rank[&e.col].to_string(),
            e.joint_count.to_string(),
            unit.convert(e.contribution).to_string(),
            e.label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Calendar grid: one row per cluster, one column per observed day.
pub fn write_calendar_csv<W: Write>(writer: W, report: &CalendarReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["cluster".to_string()];
    header.extend(report.days.iter().cloned());
    w.write_record(&header)?;
    for (rank, row) in report.grid.iter().enumerate() {
        let mut record = vec![rank.to_string()];
        record.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// GeoJSON FeatureCollection with one Point feature per reported entity.
/// Coordinates are (longitude, latitude); properties carry the cluster,
/// contribution, classification label and log-scaled size channel.
pub fn write_geojson<W: Write>(mut writer: W, report: &EntityReport, unit: Unit) -> Result<()> {
    let features: Vec<serde_json::Value> = report
        .records
        .iter()
        .map(|r| {
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [r.lon, r.lat],
                },
                "properties": {
                    "id": r.label,
                    "cluster": r.cluster,
                    "contribution": unit.convert(r.contribution),
                    "label": r.label_class.to_string(),
                    "size": r.size,
                },
            })
        })
        .collect();
    let collection = json!({
        "type": "FeatureCollection",
        "features": features,
    });
    let mut s = serde_json::to_string_pretty(&collection)?;
    s.push('\n');
    writer.write_all(s.as_bytes())?;
    Ok(())
}
