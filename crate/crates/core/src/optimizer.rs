//! Criterion minimization: a greedy bottom-up merge heuristic over a
//! priority structure of candidate deltas, with element-move (and, for
//! temporal models, boundary-shift) post-optimization, seeded restarts and
//! optional pre-clustering for large axes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::corpus::EventCorpus;
use crate::criterion::{Axis, ClusterId, ShiftDirection, SpatialModel, TemporalModel};
use crate::error::{Error, Result};

/// Search-effort knobs. None of these change the model form, only how hard
/// the optimizer looks for the minimum.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Master seed; all randomness (restarts, pre-clustering) derives from it.
    pub seed: u64,
    /// Number of restarts; they differ only in pre-clustering seed.
    pub restarts: u32,
    /// Cap on initial clusters per axis; defaults to max(64, ceil(sqrt(m))).
    pub max_preclusters: Option<u32>,
    /// Merge/move alternation rounds after the initial merge phase.
    pub post_opt_passes: u32,
    /// A step is accepted only if it improves the cost by more than this.
    pub cost_tolerance: f64,
    /// Exhaustively enumerate co-partitions on tiny instances, guaranteeing
    /// the global minimum there.
    pub exact_small_instances: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            seed: 0,
            restarts: 4,
            max_preclusters: None,
            post_opt_passes: 2,
            cost_tolerance: 1e-9,
            exact_small_instances: true,
        }
    }
}

/// Axis sizes below which exhaustive enumeration is tractable and applied.
pub const SPATIAL_EXACT_LIMIT: u32 = 5;
pub const TEMPORAL_EXACT_SOURCE_LIMIT: u32 = 4;
pub const TEMPORAL_EXACT_TIME_LIMIT: u32 = 6;

const PARALLEL_DELTA_THRESHOLD: usize = 4096;

pub(crate) fn default_max_preclusters(m: u64) -> u32 {
    64.max((m as f64).sqrt().ceil() as u32)
}

fn splitmix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn restart_seed(seed: u64, restart: u32) -> u64 {
    splitmix64(seed ^ 0x9E3779B97F4A7C15u64.wrapping_mul(restart as u64 + 1))
}

/// One accepted-step trace of a restart.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RestartTrace {
    pub seed: u64,
    pub final_cost: f64,
    /// Cost after each accepted merge/move/shift.
    pub accepted_costs: Vec<f64>,
}

/// Outcome of a fit: the best model across restarts plus diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult<M> {
    pub model: M,
    pub final_cost: f64,
    pub null_cost: f64,
    pub restarts: Vec<RestartTrace>,
    pub wall_time: Duration,
}

/// Progress event emitted after every accepted optimization step.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub restart: u32,
    pub step: u64,
    pub cost: f64,
    /// Source cluster count.
    pub k_row: u32,
    /// Destination cluster or time segment count.
    pub k_col: u32,
}

// ---- candidate heap --------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub(crate) delta: f64,
    pub(crate) axis: Axis,
    pub(crate) a: ClusterId,
    pub(crate) b: ClusterId,
    version: u64,
}

impl Candidate {
    fn key(&self) -> (f64, ClusterId, ClusterId, u8) {
        let rank = match self.axis {
            Axis::Sources => 0,
            Axis::Destinations | Axis::Segments => 1,
        };
        (self.delta, self.a.min(self.b), self.a.max(self.b), rank)
    }
}

struct HeapEntry(Candidate);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap pops the maximum; invert so the smallest key (lowest
        // delta, then lowest (min id, max id), then axis) pops first.
        let (da, ia, ja, ra) = self.0.key();
        let (db, ib, jb, rb) = other.0.key();
        db.total_cmp(&da)
            .then_with(|| ib.cmp(&ia))
            .then_with(|| jb.cmp(&ja))
            .then_with(|| rb.cmp(&ra))
    }
}

/// Priority structure over candidate merges with lazy revalidation: any
/// model mutation bumps the version, and stale candidates popped later are
/// recomputed and reinserted rather than rebuilt eagerly.
pub(crate) struct CandidateHeap {
    heap: BinaryHeap<HeapEntry>,
    version: u64,
}

impl CandidateHeap {
    pub(crate) fn new() -> Self {
        CandidateHeap {
            heap: BinaryHeap::new(),
            version: 0,
        }
    }

    pub(crate) fn push(&mut self, axis: Axis, a: ClusterId, b: ClusterId, delta: f64) {
        self.heap.push(HeapEntry(Candidate {
            delta,
            axis,
            a,
            b,
            version: self.version,
        }));
    }

    fn push_candidate(&mut self, c: Candidate) {
        self.heap.push(HeapEntry(c));
    }

    pub(crate) fn bump(&mut self) {
        self.version += 1;
    }

    pub(crate) fn pop_best(
        &mut self,
        alive: impl Fn(Axis, ClusterId) -> bool,
        recompute: impl Fn(Axis, ClusterId, ClusterId) -> f64,
    ) -> Option<Candidate> {
        while let Some(HeapEntry(mut cand)) = self.heap.pop() {
            if !alive(cand.axis, cand.a) || !alive(cand.axis, cand.b) {
                continue;
            }
            if cand.version != self.version {
                cand.delta = recompute(cand.axis, cand.a, cand.b);
                cand.version = self.version;
                self.heap.push(HeapEntry(cand));
                continue;
            }
            return Some(cand);
        }
        None
    }
}

fn batch_deltas<F>(pairs: &[(Axis, ClusterId, ClusterId)], delta: F) -> Vec<f64>
where
    F: Fn(Axis, ClusterId, ClusterId) -> f64 + Sync,
{
    if pairs.len() >= PARALLEL_DELTA_THRESHOLD {
        pairs.par_iter().map(|&(ax, a, b)| delta(ax, a, b)).collect()
    } else {
        pairs.iter().map(|&(ax, a, b)| delta(ax, a, b)).collect()
    }
}

// ---- pre-clustering --------------------------------------------------------

/// Deterministic seeded pre-agglomeration of one entity axis into at most
/// `target_count` groups. The highest-traffic entities stay singletons;
/// the low-traffic tail is bucketed by a seeded hash of each entity's top
/// traffic partner, a cheap profile-similarity proxy. Post-optimization
/// moves refine the groups later.
pub fn precluster(
    corpus: &EventCorpus,
    axis: Axis,
    target_count: u32,
    seed: u64,
) -> Result<Vec<Vec<u32>>> {
    if target_count < 1 {
        return Err(Error::InvalidInput("target_count must be >= 1".into()));
    }
    let (actives, marginals): (&[u32], &[u64]) = match axis {
        Axis::Sources => (corpus.active_sources(), corpus.source_marginals()),
        Axis::Destinations => (corpus.active_destinations(), corpus.dest_marginals()),
        Axis::Segments => {
            return Err(Error::InvalidInput(
                "pre-clustering applies to entity axes only".into(),
            ))
        }
    };
    if actives.len() <= target_count as usize {
        return Ok(actives.iter().map(|&e| vec![e]).collect());
    }
    // Profile proxy: the partner entity receiving most of this entity's
    // traffic (spatial view when present, else the temporal view).
    let top_partner = |e: u32| -> u32 {
        let row: &[(u32, u64)] = match axis {
            Axis::Sources => match corpus.spatial_view() {
                Ok(v) => v.row(e),
                Err(_) => corpus.temporal_view().expect("one view exists").row(e),
            },
            Axis::Destinations => corpus.spatial_view().expect("destinations imply view").col(e),
            Axis::Segments => unreachable!(),
        };
        row.iter()
            .max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)))
            .map(|&(p, _)| p)
            .unwrap_or(0)
    };
    let mut order: Vec<u32> = actives.to_vec();
    order.sort_by(|&a, &b| {
        marginals[b as usize]
            .cmp(&marginals[a as usize])
            .then(a.cmp(&b))
    });
    let singles = (target_count / 2) as usize;
    let buckets = target_count as usize - singles;
    let mut groups: Vec<Vec<u32>> = order[..singles].iter().map(|&e| vec![e]).collect();
    let mut tail: Vec<Vec<u32>> = vec![Vec::new(); buckets];
    for &e in &order[singles..] {
        let slot = (splitmix64(seed ^ top_partner(e) as u64) % buckets as u64) as usize;
        tail[slot].push(e);
    }
    groups.extend(tail.into_iter().filter(|g| !g.is_empty()));
    Ok(groups)
}

// ---- exhaustive enumeration for tiny instances ------------------------------

/// All set partitions of 0..n as restricted-growth assignment vectors, in
/// lexicographic order.
fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(rgs: &mut Vec<usize>, max_used: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if rgs.len() == n {
            out.push(rgs.clone());
            return;
        }
        for b in 0..=max_used + 1 {
            rgs.push(b);
            rec(rgs, max_used.max(b), n, out);
            rgs.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut rgs = vec![0usize];
    rec(&mut rgs, 0, n, &mut out);
    out
}

fn assignment_to_groups(actives: &[u32], rgs: &[usize]) -> Vec<Vec<u32>> {
    let k = rgs.iter().max().map(|&b| b + 1).unwrap_or(0);
    let mut groups = vec![Vec::new(); k];
    for (pos, &b) in rgs.iter().enumerate() {
        groups[b].push(actives[pos]);
    }
    groups
}

/// All contiguous segmentations of `n_times` positions, in lexicographic
/// boundary-mask order.
fn contiguous_segmentations(n_times: u32) -> Vec<Vec<(u32, u32)>> {
    let cuts = n_times - 1;
    let mut out = Vec::with_capacity(1 << cuts);
    for mask in 0u64..(1u64 << cuts) {
        let mut intervals = Vec::new();
        let mut start = 0u32;
        for p in 0..cuts {
            if mask & (1 << p) != 0 {
                intervals.push((start, p));
                start = p + 1;
            }
        }
        intervals.push((start, n_times - 1));
        out.push(intervals);
    }
    out
}

fn exact_spatial_minimum(corpus: &EventCorpus) -> Result<SpatialModel> {
    let src_actives = corpus.active_sources().to_vec();
    let dst_actives = corpus.active_destinations().to_vec();
    let mut best: Option<SpatialModel> = None;
    for src_rgs in set_partitions(src_actives.len()) {
        let src_groups = assignment_to_groups(&src_actives, &src_rgs);
        for dst_rgs in set_partitions(dst_actives.len()) {
            let dst_groups = assignment_to_groups(&dst_actives, &dst_rgs);
            let model = SpatialModel::from_partitions(corpus, &src_groups, &dst_groups)?;
            if best.as_ref().map_or(true, |b| model.cost() < b.cost()) {
                best = Some(model);
            }
        }
    }
    Ok(best.expect("at least the null partition exists"))
}

fn exact_temporal_minimum(corpus: &EventCorpus) -> Result<TemporalModel> {
    let actives = corpus.active_sources().to_vec();
    let mut best: Option<TemporalModel> = None;
    for rgs in set_partitions(actives.len()) {
        let groups = assignment_to_groups(&actives, &rgs);
        for intervals in contiguous_segmentations(corpus.n_times()) {
            let model = TemporalModel::from_partitions(corpus, &groups, &intervals)?;
            if best.as_ref().map_or(true, |b| model.cost() < b.cost()) {
                best = Some(model);
            }
        }
    }
    Ok(best.expect("at least the null segmentation exists"))
}

// ---- shared driver plumbing -------------------------------------------------

struct StepLog<'a> {
    restart: u32,
    step: u64,
    accepted_costs: Vec<f64>,
    progress: &'a mut dyn FnMut(Progress),
}

impl<'a> StepLog<'a> {
    fn record(&mut self, cost: f64, k_row: u32, k_col: u32) {
        self.step += 1;
        self.accepted_costs.push(cost);
        (self.progress)(Progress {
            restart: self.restart,
            step: self.step,
            cost,
            k_row,
            k_col,
        });
    }
}

// ---- spatial fit ------------------------------------------------------------

pub(crate) fn spatial_seed_heap(model: &SpatialModel, heap: &mut CandidateHeap) {
    for axis in [Axis::Sources, Axis::Destinations] {
        let ids = model.cluster_ids(axis);
        let mut pairs = Vec::with_capacity(ids.len() * (ids.len().saturating_sub(1)) / 2);
        for i in 0..ids.len() {
            for j in (i + 1)..ids.len() {
                pairs.push((axis, ids[i], ids[j]));
            }
        }
        let deltas = batch_deltas(&pairs, |ax, a, b| {
            model.merge_delta(ax, a, b).expect("live clusters")
        });
        for (&(ax, a, b), d) in pairs.iter().zip(deltas) {
            heap.push(ax, a, b, d);
        }
    }
}

/// Push fresh candidates pairing a newly merged cluster with its peers.
pub(crate) fn spatial_regenerate(
    model: &SpatialModel,
    heap: &mut CandidateHeap,
    axis: Axis,
    new_id: ClusterId,
) {
    let others: Vec<ClusterId> = model
        .cluster_ids(axis)
        .into_iter()
        .filter(|&id| id != new_id)
        .collect();
    let pairs: Vec<(Axis, ClusterId, ClusterId)> =
        others.iter().map(|&o| (axis, new_id, o)).collect();
    let deltas = batch_deltas(&pairs, |ax, a, b| {
        model.merge_delta(ax, a, b).expect("live clusters")
    });
    for (&(ax, a, b), d) in pairs.iter().zip(deltas) {
        heap.push(ax, a, b, d);
    }
}

fn spatial_merge_phase(
    model: &mut SpatialModel,
    heap: &mut CandidateHeap,
    tol: f64,
    log: &mut StepLog,
) -> bool {
    let mut any = false;
    loop {
        let cand = {
            let m = &*model;
            heap.pop_best(
                |ax, id| m.has_cluster(ax, id),
                |ax, a, b| m.merge_delta(ax, a, b).expect("live clusters"),
            )
        };
        let cand = match cand {
            None => break,
            Some(c) if c.delta >= -tol => {
                // Best candidate does not improve; keep it around for the
                // next phase.
                heap.push_candidate(c);
                break;
            }
            Some(c) => c,
        };
        let new_id = model.apply_merge(cand.axis, cand.a, cand.b).expect("live clusters");
        heap.bump();
        spatial_regenerate(model, heap, cand.axis, new_id);
        any = true;
        log.record(model.cost(), model.k_sources(), model.k_destinations());
    }
    any
}

fn spatial_move_phase(
    model: &mut SpatialModel,
    corpus: &EventCorpus,
    heap: &mut CandidateHeap,
    tol: f64,
    log: &mut StepLog,
) -> Result<bool> {
    let mut any = false;
    loop {
        let mut improved = false;
        for axis in [Axis::Sources, Axis::Destinations] {
            let actives: Vec<u32> = match axis {
                Axis::Sources => corpus.active_sources().to_vec(),
                _ => corpus.active_destinations().to_vec(),
            };
            for &e in &actives {
                let from = model
                    .assignment_of(axis, e)?
                    .expect("active entities are assigned");
                if model.cluster_size(axis, from)? == 1 {
                    continue;
                }
                let mut best: Option<(f64, ClusterId)> = None;
                for t in model.cluster_ids(axis) {
                    if t == from {
                        continue;
                    }
                    let d = model.move_delta(corpus, axis, e, t)?;
                    if d < -tol && best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, t));
                    }
                }
                if let Some((_, t)) = best {
                    model.apply_move(corpus, axis, e, t)?;
                    heap.bump();
                    improved = true;
                    log.record(model.cost(), model.k_sources(), model.k_destinations());
                }
            }
        }
        if !improved {
            break;
        }
        any = true;
    }
    Ok(any)
}

fn spatial_partition_key(model: &SpatialModel) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    (model.source_groups(), model.dest_groups())
}

/// Fit the spatial model: greedy merges from the (possibly pre-clustered)
/// finest model, move post-optimization, merge/move alternation, restarts,
/// with the null model as the fallback candidate.
pub fn fit_spatial(corpus: &EventCorpus, config: &OptimizerConfig) -> Result<FitResult<SpatialModel>> {
    fit_spatial_with_progress(corpus, config, &mut |_| {})
}

pub fn fit_spatial_with_progress(
    corpus: &EventCorpus,
    config: &OptimizerConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<FitResult<SpatialModel>> {
    let start = Instant::now();
    corpus.spatial_view()?;
    if corpus.total() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut null_model = SpatialModel::null(corpus)?;
    let null_cost = null_model.cost();

    let n_src = corpus.active_sources().len() as u32;
    let n_dst = corpus.active_destinations().len() as u32;
    let cap = config
        .max_preclusters
        .unwrap_or_else(|| default_max_preclusters(corpus.total()));
    let randomized = n_src > cap || n_dst > cap;
    let restarts = if randomized { config.restarts.max(1) } else { 1 };

    let mut traces = Vec::new();
    let mut best: Option<(SpatialModel, (Vec<Vec<u32>>, Vec<Vec<u32>>))> = None;
    for r in 0..restarts {
        let seed_r = restart_seed(config.seed, r);
        let src_groups = if n_src > cap {
            precluster(corpus, Axis::Sources, cap, seed_r)?
        } else {
            corpus.active_sources().iter().map(|&e| vec![e]).collect()
        };
        let dst_groups = if n_dst > cap {
            precluster(corpus, Axis::Destinations, cap, splitmix64(seed_r))?
        } else {
            corpus.active_destinations().iter().map(|&e| vec![e]).collect()
        };
        let mut model = SpatialModel::from_partitions(corpus, &src_groups, &dst_groups)?;
        let mut heap = CandidateHeap::new();
        spatial_seed_heap(&model, &mut heap);
        let mut log = StepLog {
            restart: r,
            step: 0,
            accepted_costs: Vec::new(),
            progress,
        };
        spatial_merge_phase(&mut model, &mut heap, config.cost_tolerance, &mut log);
        for _ in 0..config.post_opt_passes {
            let moved = spatial_move_phase(&mut model, corpus, &mut heap, config.cost_tolerance, &mut log)?;
            let merged = spatial_merge_phase(&mut model, &mut heap, config.cost_tolerance, &mut log);
            if !moved && !merged {
                break;
            }
        }
        model.recompute_cost(corpus)?;
        traces.push(RestartTrace {
            seed: seed_r,
            final_cost: model.cost(),
            accepted_costs: log.accepted_costs,
        });
        let key = spatial_partition_key(&model);
        let replace = match &best {
            None => true,
            Some((b, bkey)) => {
                model.cost() < b.cost() - config.cost_tolerance
                    || ((model.cost() - b.cost()).abs() <= config.cost_tolerance && key < *bkey)
            }
        };
        if replace {
            best = Some((model, key));
        }
    }
    let (mut model, _) = best.expect("at least one restart ran");

    if config.exact_small_instances && n_src <= SPATIAL_EXACT_LIMIT && n_dst <= SPATIAL_EXACT_LIMIT {
        let exact = exact_spatial_minimum(corpus)?;
        if exact.cost() < model.cost() - config.cost_tolerance {
            model = exact;
        }
    }
    // The null model is always a candidate.
    if model.cost() >= null_cost - config.cost_tolerance {
        null_model.recompute_cost(corpus)?;
        model = null_model;
    }
    let final_cost = model.cost();
    Ok(FitResult {
        model,
        final_cost,
        null_cost,
        restarts: traces,
        wall_time: start.elapsed(),
    })
}

// ---- temporal fit -----------------------------------------------------------

pub(crate) fn temporal_seed_heap(model: &TemporalModel, heap: &mut CandidateHeap) {
    let ids = model.cluster_ids(Axis::Sources);
    let mut pairs = Vec::with_capacity(ids.len() * (ids.len().saturating_sub(1)) / 2);
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            pairs.push((Axis::Sources, ids[i], ids[j]));
        }
    }
    for (a, b) in model.adjacent_segment_pairs() {
        pairs.push((Axis::Segments, a, b));
    }
    let deltas = batch_deltas(&pairs, |ax, a, b| {
        model.merge_delta(ax, a, b).expect("live clusters")
    });
    for (&(ax, a, b), d) in pairs.iter().zip(deltas) {
        heap.push(ax, a, b, d);
    }
}

/// Push fresh candidates pairing a newly merged cluster or segment with its
/// legal partners.
pub(crate) fn temporal_regenerate(
    model: &TemporalModel,
    heap: &mut CandidateHeap,
    axis: Axis,
    new_id: ClusterId,
) {
    match axis {
        Axis::Sources => {
            let others: Vec<ClusterId> = model
                .cluster_ids(Axis::Sources)
                .into_iter()
                .filter(|&id| id != new_id)
                .collect();
            let pairs: Vec<(Axis, ClusterId, ClusterId)> =
                others.iter().map(|&o| (Axis::Sources, new_id, o)).collect();
            let deltas = batch_deltas(&pairs, |ax, a, b| {
                model.merge_delta(ax, a, b).expect("live clusters")
            });
            for (&(ax, a, b), d) in pairs.iter().zip(deltas) {
                heap.push(ax, a, b, d);
            }
        }
        Axis::Segments => {
            let order = model.segments_in_order();
            let pos = order.iter().position(|&s| s == new_id).expect("merged segment");
            if pos > 0 {
                let (a, b) = (order[pos - 1], new_id);
                let d = model.merge_delta(Axis::Segments, a, b).expect("adjacent");
                heap.push(Axis::Segments, a, b, d);
            }
            if pos + 1 < order.len() {
                let (a, b) = (new_id, order[pos + 1]);
                let d = model.merge_delta(Axis::Segments, a, b).expect("adjacent");
                heap.push(Axis::Segments, a, b, d);
            }
        }
        Axis::Destinations => unreachable!(),
    }
}

fn temporal_merge_phase(
    model: &mut TemporalModel,
    heap: &mut CandidateHeap,
    tol: f64,
    log: &mut StepLog,
) -> bool {
    let mut any = false;
    loop {
        let cand = {
            let m = &*model;
            heap.pop_best(
                |ax, id| m.has_cluster(ax, id),
                |ax, a, b| m.merge_delta(ax, a, b).expect("live adjacent clusters"),
            )
        };
        let cand = match cand {
            None => break,
            Some(c) if c.delta >= -tol => {
                heap.push_candidate(c);
                break;
            }
            Some(c) => c,
        };
        let new_id = model.apply_merge(cand.axis, cand.a, cand.b).expect("live clusters");
        heap.bump();
        temporal_regenerate(model, heap, cand.axis, new_id);
        any = true;
        log.record(model.cost(), model.k_sources(), model.k_segments());
    }
    any
}

fn temporal_move_phase(
    model: &mut TemporalModel,
    corpus: &EventCorpus,
    heap: &mut CandidateHeap,
    tol: f64,
    log: &mut StepLog,
) -> Result<bool> {
    let mut any = false;
    loop {
        let mut improved = false;
        for &e in corpus.active_sources() {
            let from = model.assignment_of(e)?.expect("active entities are assigned");
            if model.cluster_size(Axis::Sources, from)? == 1 {
                continue;
            }
            let mut best: Option<(f64, ClusterId)> = None;
            for t in model.cluster_ids(Axis::Sources) {
                if t == from {
                    continue;
                }
                let d = model.move_delta(corpus, e, t)?;
                if d < -tol && best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, t));
                }
            }
            if let Some((_, t)) = best {
                model.apply_move(corpus, e, t)?;
                heap.bump();
                improved = true;
                log.record(model.cost(), model.k_sources(), model.k_segments());
            }
        }
        // Boundary refinement: slide each boundary while it improves.
        for bi in 0..model.k_segments().saturating_sub(1) as usize {
            loop {
                let mut best: Option<(f64, ShiftDirection)> = None;
                for dir in [ShiftDirection::Left, ShiftDirection::Right] {
                    if let Ok(d) = model.boundary_shift_delta(corpus, bi, dir) {
                        if d < -tol && best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, dir));
                        }
                    }
                }
                match best {
                    Some((_, dir)) => {
                        model.apply_boundary_shift(corpus, bi, dir)?;
                        heap.bump();
                        improved = true;
                        log.record(model.cost(), model.k_sources(), model.k_segments());
                    }
                    None => break,
                }
            }
        }
        if !improved {
            break;
        }
        any = true;
    }
    Ok(any)
}

fn temporal_partition_key(model: &TemporalModel) -> (Vec<Vec<u32>>, Vec<(u32, u32)>) {
    (model.source_groups(), model.segment_intervals())
}

/// Fit the temporal model: like [`fit_spatial`], with segment merges
/// restricted to adjacent intervals and boundary shifts in
/// post-optimization.
pub fn fit_temporal(corpus: &EventCorpus, config: &OptimizerConfig) -> Result<FitResult<TemporalModel>> {
    fit_temporal_with_progress(corpus, config, &mut |_| {})
}

pub fn fit_temporal_with_progress(
    corpus: &EventCorpus,
    config: &OptimizerConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<FitResult<TemporalModel>> {
    let start = Instant::now();
    corpus.temporal_view()?;
    if corpus.total() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut null_model = TemporalModel::null(corpus)?;
    let null_cost = null_model.cost();

    let n_src = corpus.active_sources().len() as u32;
    let n_times = corpus.n_times();
    let cap = config
        .max_preclusters
        .unwrap_or_else(|| default_max_preclusters(corpus.total()));
    let randomized = n_src > cap;
    let restarts = if randomized { config.restarts.max(1) } else { 1 };

    let mut traces = Vec::new();
    let mut best: Option<(TemporalModel, (Vec<Vec<u32>>, Vec<(u32, u32)>))> = None;
    for r in 0..restarts {
        let seed_r = restart_seed(config.seed, r);
        let src_groups = if n_src > cap {
            precluster(corpus, Axis::Sources, cap, seed_r)?
        } else {
            corpus.active_sources().iter().map(|&e| vec![e]).collect()
        };
        // The time axis is capped deterministically with even contiguous
        // chunks; the ordering constraint leaves no seeding freedom.
        let intervals: Vec<(u32, u32)> = if n_times > cap {
            (0..cap)
                .map(|c| {
                    let first = (c as u64 * n_times as u64 / cap as u64) as u32;
                    let last = ((c as u64 + 1) * n_times as u64 / cap as u64) as u32 - 1;
                    (first, last)
                })
                .collect()
        } else {
            (0..n_times).map(|p| (p, p)).collect()
        };
        let mut model = TemporalModel::from_partitions(corpus, &src_groups, &intervals)?;
        let mut heap = CandidateHeap::new();
        temporal_seed_heap(&model, &mut heap);
        let mut log = StepLog {
            restart: r,
            step: 0,
            accepted_costs: Vec::new(),
            progress,
        };
        temporal_merge_phase(&mut model, &mut heap, config.cost_tolerance, &mut log);
        for _ in 0..config.post_opt_passes {
            let moved = temporal_move_phase(&mut model, corpus, &mut heap, config.cost_tolerance, &mut log)?;
            let merged = temporal_merge_phase(&mut model, &mut heap, config.cost_tolerance, &mut log);
            if !moved && !merged {
                break;
            }
        }
        model.recompute_cost(corpus)?;
        traces.push(RestartTrace {
            seed: seed_r,
            final_cost: model.cost(),
            accepted_costs: log.accepted_costs,
        });
        let key = temporal_partition_key(&model);
        let replace = match &best {
            None => true,
            Some((b, bkey)) => {
                model.cost() < b.cost() - config.cost_tolerance
                    || ((model.cost() - b.cost()).abs() <= config.cost_tolerance && key < *bkey)
            }
        };
        if replace {
            best = Some((model, key));
        }
    }
    let (mut model, _) = best.expect("at least one restart ran");

    if config.exact_small_instances
        && n_src <= TEMPORAL_EXACT_SOURCE_LIMIT
        && n_times <= TEMPORAL_EXACT_TIME_LIMIT
    {
        let exact = exact_temporal_minimum(corpus)?;
        if exact.cost() < model.cost() - config.cost_tolerance {
            model = exact;
        }
    }
    if model.cost() >= null_cost - config.cost_tolerance {
        null_model.recompute_cost(corpus)?;
        model = null_model;
    }
    let final_cost = model.cost();
    Ok(FitResult {
        model,
        final_cost,
        null_cost,
        restarts: traces,
        wall_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusBuilder, TimeValue};

    fn spatial_corpus(records: &[(&str, &str, u64)]) -> EventCorpus {
        let mut b = CorpusBuilder::new();
        for &(s, d, c) in records {
            b.add(s, Some(d), None, c).unwrap();
        }
        b.build().unwrap()
    }

    fn planted_two_block() -> EventCorpus {
        let mut records = Vec::new();
        for s in ["s1", "s2"] {
            for d in ["d1", "d2"] {
                records.push((s, d, 25u64));
            }
        }
        for s in ["s3", "s4"] {
            for d in ["d3", "d4"] {
                records.push((s, d, 25u64));
            }
        }
        spatial_corpus(&records)
    }

    #[test]
    fn single_cell_corpus_returns_null_with_zero_cost() {
        let corpus = spatial_corpus(&[("s1", "d1", 7)]);
        let fit = fit_spatial(&corpus, &OptimizerConfig::default()).unwrap();
        assert_eq!(fit.final_cost, 0.0);
        assert_eq!(fit.model.k_sources(), 1);
        assert_eq!(fit.model.k_destinations(), 1);
        assert_eq!(fit.null_cost, 0.0);
    }

    #[test]
    fn planted_two_block_is_recovered_and_matches_enumeration() {
        let corpus = planted_two_block();
        let fit = fit_spatial(&corpus, &OptimizerConfig::default()).unwrap();
        assert_eq!(fit.model.k_sources(), 2);
        assert_eq!(fit.model.k_destinations(), 2);
        let groups = fit.model.source_groups();
        assert_eq!(groups, vec![vec![0, 1], vec![2, 3]]);
        let exact = exact_spatial_minimum(&corpus).unwrap();
        assert!((fit.final_cost - exact.cost()).abs() < 1e-9);
        assert!(fit.final_cost <= fit.null_cost + 1e-9);
    }

    #[test]
    fn greedy_alone_recovers_planted_blocks() {
        let corpus = planted_two_block();
        let config = OptimizerConfig {
            exact_small_instances: false,
            ..OptimizerConfig::default()
        };
        let fit = fit_spatial(&corpus, &config).unwrap();
        assert_eq!(fit.model.source_groups(), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(fit.model.dest_groups(), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn accepted_cost_trace_is_nonincreasing() {
        let corpus = planted_two_block();
        let fit = fit_spatial(&corpus, &OptimizerConfig::default()).unwrap();
        for trace in &fit.restarts {
            for w in trace.accepted_costs.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let corpus = planted_two_block();
        let config = OptimizerConfig::default();
        let f1 = fit_spatial(&corpus, &config).unwrap();
        let f2 = fit_spatial(&corpus, &config).unwrap();
        assert_eq!(f1.final_cost, f2.final_cost);
        assert_eq!(f1.model.source_groups(), f2.model.source_groups());
        assert_eq!(f1.model.dest_groups(), f2.model.dest_groups());
    }

    #[test]
    fn temporal_single_source_single_day_is_null() {
        let mut b = CorpusBuilder::new();
        b.add("s1", None, Some(TimeValue::Day(0)), 1).unwrap();
        let corpus = b.build().unwrap();
        let fit = fit_temporal(&corpus, &OptimizerConfig::default()).unwrap();
        assert_eq!(fit.final_cost, 0.0);
        assert_eq!(fit.model.k_segments(), 1);
    }

    #[test]
    fn temporal_two_regimes_recover_boundary() {
        let mut b = CorpusBuilder::new();
        for day in 1..=10 {
            b.add("A", None, Some(TimeValue::Day(day)), 5).unwrap();
        }
        for day in 11..=20 {
            b.add("B", None, Some(TimeValue::Day(day)), 5).unwrap();
        }
        let corpus = b.build().unwrap();
        let fit = fit_temporal(&corpus, &OptimizerConfig::default()).unwrap();
        assert_eq!(fit.model.k_sources(), 2);
        assert_eq!(fit.model.k_segments(), 2);
        // Day 1 maps to position 0; the boundary sits between positions 9
        // and 10, i.e. days 10 and 11.
        assert_eq!(fit.model.segment_intervals(), vec![(0, 9), (10, 19)]);
    }

    #[test]
    fn precluster_contracts() {
        let mut records = Vec::new();
        let names: Vec<String> = (0..50).map(|i| format!("s{i}")).collect();
        for (i, s) in names.iter().enumerate() {
            records.push((s.as_str(), if i % 2 == 0 { "d1" } else { "d2" }, 1 + (i as u64 % 5)));
        }
        let corpus = spatial_corpus(&records);
        // target >= entities: identity.
        let id = precluster(&corpus, Axis::Sources, 64, 1).unwrap();
        assert_eq!(id.len(), 50);
        assert!(id.iter().all(|g| g.len() == 1));
        // target 1: single cluster.
        let one = precluster(&corpus, Axis::Sources, 1, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 50);
        // target 10: at most 10 groups, every entity assigned exactly once.
        let ten = precluster(&corpus, Axis::Sources, 10, 1).unwrap();
        assert!(ten.len() <= 10);
        let mut all: Vec<u32> = ten.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, corpus.active_sources());
    }

    #[test]
    fn empty_axis_errors() {
        let mut b = CorpusBuilder::new();
        b.add("s1", None, Some(TimeValue::Day(0)), 1).unwrap();
        let corpus = b.build().unwrap();
        assert!(matches!(
            fit_spatial(&corpus, &OptimizerConfig::default()),
            Err(Error::NoDestinations)
        ));
    }

    #[test]
    fn set_partitions_counts_are_bell_numbers() {
        assert_eq!(set_partitions(1).len(), 1);
        assert_eq!(set_partitions(2).len(), 2);
        assert_eq!(set_partitions(3).len(), 5);
        assert_eq!(set_partitions(4).len(), 15);
        assert_eq!(set_partitions(5).len(), 52);
    }

    #[test]
    fn segmentation_enumeration_is_complete() {
        let segs = contiguous_segmentations(4);
        assert_eq!(segs.len(), 8);
        assert!(segs.contains(&vec![(0, 3)]));
        assert!(segs.contains(&vec![(0, 0), (1, 1), (2, 2), (3, 3)]));
    }
}
