//! Versioned JSON documents for fitted models and dendrograms.
//!
//! Documents reference entities by label rather than index, carry the
//! digest of the corpus they were computed against, and serialize
//! deterministically (fixed field order, canonical cluster order), so
//! identical runs produce byte-identical files.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::EventCorpus;
use crate::criterion::{SpatialModel, TemporalModel};
use crate::error::{Error, Result};
use crate::hierarchy::{DendrogramLeaves, MergeDendrogram, MergeStep};
use crate::optimizer::RestartTrace;

pub const MODEL_FORMAT: &str = "cocluster-model";
pub const DENDROGRAM_FORMAT: &str = "cocluster-dendrogram";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Spatial,
    Temporal,
}

/// One time segment of a serialized temporal model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentDoc {
    pub first_index: u32,
    pub last_index: u32,
    pub first_label: String,
    pub last_label: String,
}

/// Per-cluster statistics, in the same order as the cluster lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterStatsDoc {
    pub source_sizes: Vec<u32>,
    pub source_counts: Vec<u64>,
    pub col_sizes: Vec<u32>,
    pub col_counts: Vec<u64>,
}

/// Serialized model: partitions (by label), segment boundaries, cluster
/// statistics, the cached cost and the corpus digest it was fitted
/// against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub corpus_digest: String,
    pub cost: f64,
    pub null_cost: f64,
    pub source_clusters: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub destination_clusters: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<SegmentDoc>>,
    pub cluster_stats: ClusterStatsDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<RestartTrace>>,
}

fn groups_to_labels(groups: &[Vec<u32>], label: impl Fn(u32) -> String) -> Vec<Vec<String>> {
    groups
        .iter()
        .map(|g| g.iter().map(|&e| label(e)).collect())
        .collect()
}

fn labels_to_groups(
    clusters: &[Vec<String>],
    lookup: impl Fn(&str) -> Option<u32>,
) -> Result<Vec<Vec<u32>>> {
    clusters
        .iter()
        .map(|c| {
            c.iter()
                .map(|l| {
                    lookup(l).ok_or_else(|| {
                        Error::InvalidModel(format!("label `{l}` not present in the corpus"))
                    })
                })
                .collect()
        })
        .collect()
}

/// Build the document for a fitted or cut spatial model.
pub fn spatial_document(
    model: &SpatialModel,
    corpus: &EventCorpus,
    null_cost: f64,
    trace: Option<&[RestartTrace]>,
) -> ModelDocument {
    let source_groups = model.source_groups();
    let dest_groups = model.dest_groups();
    let stats = ClusterStatsDoc {
        source_sizes: source_groups.iter().map(|g| g.len() as u32).collect(),
        source_counts: source_groups
            .iter()
            .map(|g| g.iter().map(|&e| corpus.source_marginals()[e as usize]).sum())
            .collect(),
        col_sizes: dest_groups.iter().map(|g| g.len() as u32).collect(),
        col_counts: dest_groups
            .iter()
            .map(|g| g.iter().map(|&e| corpus.dest_marginals()[e as usize]).sum())
            .collect(),
    };
    ModelDocument {
        format: MODEL_FORMAT.to_string(),
        version: FORMAT_VERSION,
        kind: ModelKind::Spatial,
        corpus_digest: corpus.digest(),
        cost: model.cost(),
        null_cost,
        source_clusters: groups_to_labels(&source_groups, |e| corpus.source_label(e).to_string()),
        destination_clusters: Some(groups_to_labels(&dest_groups, |e| {
            corpus.dest_label(e).to_string()
        })),
        segments: None,
        cluster_stats: stats,
        trace: trace.map(|t| t.to_vec()),
    }
}

/// Build the document for a fitted or cut temporal model.
pub fn temporal_document(
    model: &TemporalModel,
    corpus: &EventCorpus,
    null_cost: f64,
    trace: Option<&[RestartTrace]>,
) -> ModelDocument {
    let source_groups = model.source_groups();
    let intervals = model.segment_intervals();
    let stats = ClusterStatsDoc {
        source_sizes: source_groups.iter().map(|g| g.len() as u32).collect(),
        source_counts: source_groups
            .iter()
            .map(|g| g.iter().map(|&e| corpus.source_marginals()[e as usize]).sum())
            .collect(),
        col_sizes: intervals.iter().map(|&(f, l)| l - f + 1).collect(),
        col_counts: intervals
            .iter()
            .map(|&(f, l)| (f..=l).map(|p| corpus.time_marginals()[p as usize]).sum())
            .collect(),
    };
    ModelDocument {
        format: MODEL_FORMAT.to_string(),
        version: FORMAT_VERSION,
        kind: ModelKind::Temporal,
        corpus_digest: corpus.digest(),
        cost: model.cost(),
        null_cost,
        source_clusters: groups_to_labels(&source_groups, |e| corpus.source_label(e).to_string()),
        destination_clusters: None,
        segments: Some(
            intervals
                .iter()
                .map(|&(f, l)| SegmentDoc {
                    first_index: f,
                    last_index: l,
                    first_label: corpus.time_label(f),
                    last_label: corpus.time_label(l),
                })
                .collect(),
        ),
        cluster_stats: stats,
        trace: trace.map(|t| t.to_vec()),
    }
}

fn check_header(format: &str, doc_format: &str, version: u32) -> Result<()> {
    if doc_format != format {
        return Err(Error::InvalidModel(format!(
            "expected format `{format}`, found `{doc_format}`"
        )));
    }
    if version != FORMAT_VERSION {
        return Err(Error::InvalidModel(format!(
            "unsupported version {version} (supported: {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

/// Verify that a document was computed against this corpus.
pub fn verify_digest(doc_digest: &str, corpus: &EventCorpus) -> Result<()> {
    let actual = corpus.digest();
    if doc_digest != actual {
        return Err(Error::DigestMismatch {
            expected: doc_digest.to_string(),
            actual,
        });
    }
    Ok(())
}

/// Rebuild a spatial model from its document; checks the digest and that
/// the stored cost matches a from-scratch evaluation.
pub fn load_spatial(doc: &ModelDocument, corpus: &EventCorpus) -> Result<SpatialModel> {
    check_header(MODEL_FORMAT, &doc.format, doc.version)?;
    if doc.kind != ModelKind::Spatial {
        return Err(Error::InvalidModel("expected a spatial model".into()));
    }
    verify_digest(&doc.corpus_digest, corpus)?;
    let dst = doc
        .destination_clusters
        .as_ref()
        .ok_or_else(|| Error::InvalidModel("spatial model lacks destination clusters".into()))?;
    let src_groups = labels_to_groups(&doc.source_clusters, |l| corpus.source_index(l))?;
    let dst_groups = labels_to_groups(dst, |l| corpus.dest_index(l))?;
    let model = SpatialModel::from_partitions(corpus, &src_groups, &dst_groups)?;
    if (model.cost() - doc.cost).abs() > 1e-6 {
        return Err(Error::InvalidModel(format!(
            "stored cost {} disagrees with evaluation {}",
            doc.cost,
            model.cost()
        )));
    }
    Ok(model)
}

/// Rebuild a temporal model from its document.
pub fn load_temporal(doc: &ModelDocument, corpus: &EventCorpus) -> Result<TemporalModel> {
    check_header(MODEL_FORMAT, &doc.format, doc.version)?;
    if doc.kind != ModelKind::Temporal {
        return Err(Error::InvalidModel("expected a temporal model".into()));
    }
    verify_digest(&doc.corpus_digest, corpus)?;
    let segments = doc
        .segments
        .as_ref()
        .ok_or_else(|| Error::InvalidModel("temporal model lacks segments".into()))?;
    let src_groups = labels_to_groups(&doc.source_clusters, |l| corpus.source_index(l))?;
    let intervals: Vec<(u32, u32)> = segments.iter().map(|s| (s.first_index, s.last_index)).collect();
    let model = TemporalModel::from_partitions(corpus, &src_groups, &intervals)?;
    if (model.cost() - doc.cost).abs() > 1e-6 {
        return Err(Error::InvalidModel(format!(
            "stored cost {} disagrees with evaluation {}",
            doc.cost,
            model.cost()
        )));
    }
    Ok(model)
}

/// Serialized dendrogram: canonical leaves (by label) plus the merge list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DendrogramDocument {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub corpus_digest: String,
    pub best_cost: f64,
    pub null_cost: f64,
    pub leaf_source_clusters: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf_destination_clusters: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf_segments: Option<Vec<(u32, u32)>>,
    pub steps: Vec<MergeStep>,
}

pub fn dendrogram_document(dendro: &MergeDendrogram, corpus: &EventCorpus) -> DendrogramDocument {
    let (kind, sources, destinations, segments) = match &dendro.leaves {
        DendrogramLeaves::Spatial { sources, destinations } => (
            ModelKind::Spatial,
            groups_to_labels(sources, |e| corpus.source_label(e).to_string()),
            Some(groups_to_labels(destinations, |e| corpus.dest_label(e).to_string())),
            None,
        ),
        DendrogramLeaves::Temporal { sources, segments } => (
            ModelKind::Temporal,
            groups_to_labels(sources, |e| corpus.source_label(e).to_string()),
            None,
            Some(segments.clone()),
        ),
    };
    DendrogramDocument {
        format: DENDROGRAM_FORMAT.to_string(),
        version: FORMAT_VERSION,
        kind,
        corpus_digest: corpus.digest(),
        best_cost: dendro.best_cost,
        null_cost: dendro.null_cost,
        leaf_source_clusters: sources,
        leaf_destination_clusters: destinations,
        leaf_segments: segments,
        steps: dendro.steps.clone(),
    }
}

pub fn load_dendrogram(doc: &DendrogramDocument, corpus: &EventCorpus) -> Result<MergeDendrogram> {
    check_header(DENDROGRAM_FORMAT, &doc.format, doc.version)?;
    verify_digest(&doc.corpus_digest, corpus)?;
    let sources = labels_to_groups(&doc.leaf_source_clusters, |l| corpus.source_index(l))?;
    let leaves = match doc.kind {
        ModelKind::Spatial => {
            let dst = doc
                .leaf_destination_clusters
                .as_ref()
                .ok_or_else(|| Error::InvalidModel("spatial dendrogram lacks destinations".into()))?;
            DendrogramLeaves::Spatial {
                sources,
                destinations: labels_to_groups(dst, |l| corpus.dest_index(l))?,
            }
        }
        ModelKind::Temporal => DendrogramLeaves::Temporal {
            sources,
            segments: doc
                .leaf_segments
                .clone()
                .ok_or_else(|| Error::InvalidModel("temporal dendrogram lacks segments".into()))?,
        },
    };
    Ok(MergeDendrogram {
        leaves,
        steps: doc.steps.clone(),
        best_cost: doc.best_cost,
        null_cost: doc.null_cost,
    })
}

/// Deterministic pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(to_json_string(value)?.as_bytes())?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let mut file = std::fs::File::open(path)?;
    let mut buf = String::new();
    file.read_to_string(&mut buf)?;
    Ok(serde_json::from_str(&buf)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusBuilder;
    use crate::hierarchy::coarsen_spatial;
    use crate::optimizer::{fit_spatial, OptimizerConfig};

    fn planted() -> EventCorpus {
        let mut b = CorpusBuilder::new();
        for s in ["s1", "s2"] {
            for d in ["d1", "d2"] {
                b.add(s, Some(d), None, 25).unwrap();
            }
        }
        for s in ["s3", "s4"] {
            for d in ["d3", "d4"] {
                b.add(s, Some(d), None, 25).unwrap();
            }
        }
        b.build().unwrap()
    }

    #[test]
    fn spatial_model_roundtrips_through_document() {
        let corpus = planted();
        let fit = fit_spatial(&corpus, &OptimizerConfig::default()).unwrap();
        let doc = spatial_document(&fit.model, &corpus, fit.null_cost, Some(&fit.restarts));
        let json = to_json_string(&doc).unwrap();
        let parsed: ModelDocument = serde_json::from_str(&json).unwrap();
        let loaded = load_spatial(&parsed, &corpus).unwrap();
        assert_eq!(loaded.source_groups(), fit.model.source_groups());
        assert_eq!(loaded.dest_groups(), fit.model.dest_groups());
        assert_eq!(loaded.cost(), fit.model.cost());
        // Serialization is deterministic.
        assert_eq!(json, to_json_string(&spatial_document(&fit.model, &corpus, fit.null_cost, Some(&fit.restarts))).unwrap());
    }

    #[test]
    fn digest_mismatch_is_detected() {
        let corpus = planted();
        let fit = fit_spatial(&corpus, &OptimizerConfig::default()).unwrap();
        let doc = spatial_document(&fit.model, &corpus, fit.null_cost, None);
        let mut other = CorpusBuilder::new();
        for s in ["s1", "s2", "s3", "s4"] {
            for d in ["d1", "d2", "d3", "d4"] {
                other.add(s, Some(d), None, 1).unwrap();
            }
        }
        let other = other.build().unwrap();
        assert!(matches!(
            load_spatial(&doc, &other),
            Err(Error::DigestMismatch { .. })
        ));
    }

    #[test]
    fn dendrogram_roundtrips_through_document() {
        let corpus = planted();
        let fit = fit_spatial(&corpus, &OptimizerConfig::default()).unwrap();
        let dendro = coarsen_spatial(&fit, &corpus).unwrap();
        let doc = dendrogram_document(&dendro, &corpus);
        let json = to_json_string(&doc).unwrap();
        let parsed: DendrogramDocument = serde_json::from_str(&json).unwrap();
        let loaded = load_dendrogram(&parsed, &corpus).unwrap();
        assert_eq!(loaded.steps.len(), dendro.steps.len());
        assert_eq!(loaded.best_cost, dendro.best_cost);
        let replayed = crate::hierarchy::replay_spatial(&loaded, &corpus, loaded.steps.len()).unwrap();
        assert_eq!(replayed.k_sources(), 1);
        assert_eq!(replayed.k_destinations(), 1);
    }
}
