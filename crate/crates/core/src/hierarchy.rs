//! Agglomerative coarsening of a fitted model into a full merge dendrogram,
//! with informativity rates and granularity cuts.
//!
//! Coarsening repeatedly applies the merge that increases the criterion the
//! least (decreases it the most, if any exists) until the null model, so
//! each intermediate model is the most probable one for its cluster count
//! reachable by merges. The dendrogram stores the canonical leaves and the
//! merge list only; intermediate models are reconstructed by replay.

use serde::{Deserialize, Serialize};

use crate::corpus::EventCorpus;
use crate::criterion::{Axis, ClusterId, SpatialModel, TemporalModel};
use crate::error::{Error, Result};
use crate::optimizer::{
    spatial_regenerate, spatial_seed_heap, temporal_regenerate, temporal_seed_heap, CandidateHeap,
    FitResult,
};

/// Informativity rate of a model:
/// (cost - null_cost) / (best_cost - null_cost).
///
/// 1 at the optimal model, 0 at the null model, possibly negative for
/// models worse than the null one. When the best cost does not beat the
/// null cost the data has no detected structure and the rate is 0 by
/// convention.
pub fn informativity_rate(model_cost: f64, null_cost: f64, best_cost: f64) -> f64 {
    let denom = best_cost - null_cost;
    if denom >= 0.0 {
        return 0.0;
    }
    if model_cost == best_cost {
        return 1.0;
    }
    if model_cost == null_cost {
        return 0.0;
    }
    (model_cost - null_cost) / denom
}

/// One recorded merge of the coarsening sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeStep {
    pub axis: Axis,
    pub a: ClusterId,
    pub b: ClusterId,
    /// Id assigned to the merged cluster during replay.
    pub merged: ClusterId,
    /// Model cost after this merge.
    pub cost: f64,
    /// Informativity rate after this merge.
    pub tau: f64,
}

/// Leaves of a dendrogram: the canonical partition of the fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DendrogramLeaves {
    Spatial {
        sources: Vec<Vec<u32>>,
        destinations: Vec<Vec<u32>>,
    },
    Temporal {
        sources: Vec<Vec<u32>>,
        segments: Vec<(u32, u32)>,
    },
}

/// Full merge history from the fitted model up to the null model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeDendrogram {
    pub leaves: DendrogramLeaves,
    pub steps: Vec<MergeStep>,
    /// Cost of the fitted model (the leaves).
    pub best_cost: f64,
    /// Cost of the null model (the root).
    pub null_cost: f64,
}

impl MergeDendrogram {
    /// Bicluster count at the leaves: k_S * k_D or k_S * k_T.
    pub fn leaf_bicluster_count(&self) -> u64 {
        let (a, b) = self.leaf_axis_counts();
        a as u64 * b as u64
    }

    /// (k_S, k_D-or-k_T) at the leaves.
    pub fn leaf_axis_counts(&self) -> (u32, u32) {
        match &self.leaves {
            DendrogramLeaves::Spatial { sources, destinations } => {
                (sources.len() as u32, destinations.len() as u32)
            }
            DendrogramLeaves::Temporal { sources, segments } => {
                (sources.len() as u32, segments.len() as u32)
            }
        }
    }
}

/// Coarsen a fitted spatial model to the null model, one least-cost-increase
/// merge at a time.
pub fn coarsen_spatial(
    fit: &FitResult<SpatialModel>,
    corpus: &EventCorpus,
) -> Result<MergeDendrogram> {
    let sources = fit.model.source_groups();
    let destinations = fit.model.dest_groups();
    let mut model = SpatialModel::from_partitions(corpus, &sources, &destinations)?;
    let best_cost = fit.final_cost;
    let null_cost = fit.null_cost;
    let mut heap = CandidateHeap::new();
    spatial_seed_heap(&model, &mut heap);
    let mut steps = Vec::new();
    while model.k_sources() > 1 || model.k_destinations() > 1 {
        let cand = {
            let m = &model;
            heap.pop_best(
                |ax, id| m.has_cluster(ax, id),
                |ax, a, b| m.merge_delta(ax, a, b).expect("live clusters"),
            )
        }
        .expect("merge candidates exist until the null model");
        let merged = model.apply_merge(cand.axis, cand.a, cand.b)?;
        heap.bump();
        spatial_regenerate(&model, &mut heap, cand.axis, merged);
        let cost = model.cost();
        steps.push(MergeStep {
            axis: cand.axis,
            a: cand.a.min(cand.b),
            b: cand.a.max(cand.b),
            merged,
            cost,
            tau: informativity_rate(cost, null_cost, best_cost),
        });
    }
    // Pin the root to a from-scratch evaluation so the endpoint rate is
    // exactly 0: the canonical evaluation of the single-cluster partition
    // reproduces the null cost bit for bit.
    if let Some(last) = steps.last_mut() {
        last.cost = model.recompute_cost(corpus)?;
        last.tau = informativity_rate(last.cost, null_cost, best_cost);
    }
    Ok(MergeDendrogram {
        leaves: DendrogramLeaves::Spatial { sources, destinations },
        steps,
        best_cost,
        null_cost,
    })
}

/// Coarsen a fitted temporal model; segment merges stay adjacent.
pub fn coarsen_temporal(
    fit: &FitResult<TemporalModel>,
    corpus: &EventCorpus,
) -> Result<MergeDendrogram> {
    let sources = fit.model.source_groups();
    let segments = fit.model.segment_intervals();
    let mut model = TemporalModel::from_partitions(corpus, &sources, &segments)?;
    let best_cost = fit.final_cost;
    let null_cost = fit.null_cost;
    let mut heap = CandidateHeap::new();
    temporal_seed_heap(&model, &mut heap);
    let mut steps = Vec::new();
    while model.k_sources() > 1 || model.k_segments() > 1 {
        let cand = {
            let m = &model;
            heap.pop_best(
                |ax, id| m.has_cluster(ax, id),
                |ax, a, b| m.merge_delta(ax, a, b).expect("live adjacent clusters"),
            )
        }
        .expect("merge candidates exist until the null model");
        let merged = model.apply_merge(cand.axis, cand.a, cand.b)?;
        heap.bump();
        temporal_regenerate(&model, &mut heap, cand.axis, merged);
        let cost = model.cost();
        steps.push(MergeStep {
            axis: cand.axis,
            a: cand.a.min(cand.b),
            b: cand.a.max(cand.b),
            merged,
            cost,
            tau: informativity_rate(cost, null_cost, best_cost),
        });
    }
    if let Some(last) = steps.last_mut() {
        last.cost = model.recompute_cost(corpus)?;
        last.tau = informativity_rate(last.cost, null_cost, best_cost);
    }
    Ok(MergeDendrogram {
        leaves: DendrogramLeaves::Temporal { sources, segments },
        steps,
        best_cost,
        null_cost,
    })
}

/// Rebuild the spatial model after the first `n_steps` dendrogram merges.
pub fn replay_spatial(
    dendrogram: &MergeDendrogram,
    corpus: &EventCorpus,
    n_steps: usize,
) -> Result<SpatialModel> {
    let (sources, destinations) = match &dendrogram.leaves {
        DendrogramLeaves::Spatial { sources, destinations } => (sources, destinations),
        DendrogramLeaves::Temporal { .. } => {
            return Err(Error::InvalidInput(
                "temporal dendrogram cannot replay a spatial model".into(),
            ))
        }
    };
    let mut model = SpatialModel::from_partitions(corpus, sources, destinations)?;
    for step in &dendrogram.steps[..n_steps] {
        let merged = model.apply_merge(step.axis, step.a, step.b)?;
        debug_assert_eq!(merged, step.merged, "replay ids are deterministic");
    }
    model.recompute_cost(corpus)?;
    Ok(model)
}

/// Rebuild the temporal model after the first `n_steps` dendrogram merges.
pub fn replay_temporal(
    dendrogram: &MergeDendrogram,
    corpus: &EventCorpus,
    n_steps: usize,
) -> Result<TemporalModel> {
    let (sources, segments) = match &dendrogram.leaves {
        DendrogramLeaves::Temporal { sources, segments } => (sources, segments),
        DendrogramLeaves::Spatial { .. } => {
            return Err(Error::InvalidInput(
                "spatial dendrogram cannot replay a temporal model".into(),
            ))
        }
    };
    let mut model = TemporalModel::from_partitions(corpus, sources, segments)?;
    for step in &dendrogram.steps[..n_steps] {
        let merged = model.apply_merge(step.axis, step.a, step.b)?;
        debug_assert_eq!(merged, step.merged, "replay ids are deterministic");
    }
    model.recompute_cost(corpus)?;
    Ok(model)
}

/// One point of the informativity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Bicluster count k = k_S * k_D (or k_S * k_T).
    pub clusters: u64,
    pub tau: f64,
    pub cost: f64,
}

/// Informativity rate as a function of the bicluster count: the leaves
/// point followed by one point per merge, ending at (1, 0).
pub fn informativity_curve(dendrogram: &MergeDendrogram) -> Vec<CurvePoint> {
    let (mut k_row, mut k_col) = dendrogram.leaf_axis_counts();
    let mut points = Vec::with_capacity(dendrogram.steps.len() + 1);
    points.push(CurvePoint {
        clusters: k_row as u64 * k_col as u64,
        tau: informativity_rate(dendrogram.best_cost, dendrogram.null_cost, dendrogram.best_cost),
        cost: dendrogram.best_cost,
    });
    for step in &dendrogram.steps {
        match step.axis {
            Axis::Sources => k_row -= 1,
            Axis::Destinations | Axis::Segments => k_col -= 1,
        }
        points.push(CurvePoint {
            clusters: k_row as u64 * k_col as u64,
            tau: step.tau,
            cost: step.cost,
        });
    }
    points
}

/// Where to cut a dendrogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutCriterion {
    /// Coarsest model whose informativity rate is at least this.
    Tau(f64),
    /// First model whose cluster count on one axis reaches the target.
    AxisCount { axis: Axis, count: u32 },
    /// First model with at most this many clusters on every axis.
    MaxCount(u32),
}

/// Resolve a cut criterion to the number of merges to replay.
pub fn resolve_cut(dendrogram: &MergeDendrogram, criterion: CutCriterion) -> Result<usize> {
    let (leaf_rows, leaf_cols) = dendrogram.leaf_axis_counts();
    match criterion {
        CutCriterion::Tau(target) => {
            if target >= 1.0 {
                return Ok(0);
            }
            let leaf_tau = informativity_rate(
                dendrogram.best_cost,
                dendrogram.null_cost,
                dendrogram.best_cost,
            );
            let mut best = if leaf_tau >= target { Some(0) } else { None };
            for (i, step) in dendrogram.steps.iter().enumerate() {
                if step.tau >= target {
                    best = Some(i + 1);
                }
            }
            best.ok_or_else(|| {
                Error::InvalidInput(format!("no model reaches informativity rate {target}"))
            })
        }
        CutCriterion::AxisCount { axis, count } => {
            let leaf = match axis {
                Axis::Sources => leaf_rows,
                Axis::Destinations | Axis::Segments => leaf_cols,
            };
            if count < 1 || count > leaf {
                return Err(Error::UnreachableTarget {
                    requested: count,
                    nearest: leaf.min(count.max(1)),
                });
            }
            if count == leaf {
                return Ok(0);
            }
            let (mut k_row, mut k_col) = (leaf_rows, leaf_cols);
            for (i, step) in dendrogram.steps.iter().enumerate() {
                match step.axis {
                    Axis::Sources => k_row -= 1,
                    Axis::Destinations | Axis::Segments => k_col -= 1,
                }
                let current = match axis {
                    Axis::Sources => k_row,
                    Axis::Destinations | Axis::Segments => k_col,
                };
                if current == count {
                    return Ok(i + 1);
                }
            }
            Err(Error::UnreachableTarget {
                requested: count,
                nearest: 1,
            })
        }
        CutCriterion::MaxCount(count) => {
            if count < 1 {
                return Err(Error::UnreachableTarget {
                    requested: count,
                    nearest: 1,
                });
            }
            if leaf_rows.max(leaf_cols) <= count {
                return Ok(0);
            }
            let (mut k_row, mut k_col) = (leaf_rows, leaf_cols);
            for (i, step) in dendrogram.steps.iter().enumerate() {
                match step.axis {
                    Axis::Sources => k_row -= 1,
                    Axis::Destinations | Axis::Segments => k_col -= 1,
                }
                if k_row.max(k_col) <= count {
                    return Ok(i + 1);
                }
            }
            unreachable!("the root model has one cluster per axis")
        }
    }
}

/// Cut a spatial dendrogram at a chosen granularity.
pub fn cut_spatial(
    dendrogram: &MergeDendrogram,
    corpus: &EventCorpus,
    criterion: CutCriterion,
) -> Result<SpatialModel> {
    let n = resolve_cut(dendrogram, criterion)?;
    replay_spatial(dendrogram, corpus, n)
}

/// Cut a temporal dendrogram at a chosen granularity.
pub fn cut_temporal(
    dendrogram: &MergeDendrogram,
    corpus: &EventCorpus,
    criterion: CutCriterion,
) -> Result<TemporalModel> {
    let n = resolve_cut(dendrogram, criterion)?;
    replay_temporal(dendrogram, corpus, n)
}
