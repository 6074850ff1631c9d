//! The temporal model: a source partition plus an ordered discretization
//! of the observed timestamps into contiguous segments.

use std::collections::HashMap;

use crate::combinatorics::{log_binomial_unchecked as lbu, log_factorial as lf, LogBRow, StableSum};
use crate::corpus::EventCorpus;
use crate::error::{Error, Result};

use super::{
    bicluster_prior_delta, blocks_add, blocks_get, blocks_merge_delta, blocks_remove, blocks_sub,
    cluster_pair_merge_delta, merge_sorted_blocks, Axis, AxisState, ClusterId, Segments,
    ShiftDirection, NO_CLUSTER,
};

/// A co-clustering of sources and time segments with cached sufficient
/// statistics and cost. Segments respect the time ordering: merges touch
/// adjacent segments only and boundaries move one observed timestamp at a
/// time.
#[derive(Debug, Clone)]
pub struct TemporalModel {
    pub(crate) sources: AxisState,
    pub(crate) segments: Segments,
    total: u64,
    logb_sources: LogBRow,
    cached_cost: f64,
}

impl TemporalModel {
    /// Build from explicit source clusters and inclusive (first, last)
    /// timestamp-position intervals covering the observed timestamps.
    pub fn from_partitions(
        corpus: &EventCorpus,
        source_groups: &[Vec<u32>],
        intervals: &[(u32, u32)],
    ) -> Result<TemporalModel> {
        if corpus.total() == 0 {
            return Err(Error::EmptyCorpus);
        }
        let view = corpus.temporal_view()?;
        let mut sources =
            AxisState::from_groups(source_groups, corpus.n_sources(), corpus.active_sources())?;
        let mut segments = Segments::from_intervals(intervals, corpus.n_times())?;
        for cluster in sources.clusters.values_mut() {
            let mut map = std::collections::BTreeMap::new();
            for &e in &cluster.members {
                cluster.count += corpus.source_marginals()[e as usize];
                for &(pos, v) in view.row(e) {
                    *map.entry(segments.seg_of_pos[pos as usize]).or_insert(0u64) += v;
                }
            }
            cluster.blocks = map.into_iter().collect();
        }
        for (&sid, cluster) in &sources.clusters {
            for &(seg, v) in &cluster.blocks {
                let s = segments.segs.get_mut(&seg).expect("segment exists");
                s.count += v;
                s.blocks.push((sid, v));
            }
        }
        // Source ids ascend during the iteration above, so each segment's
        // block list is already sorted.
        let n_s = corpus.active_sources().len() as u64;
        let mut model = TemporalModel {
            logb_sources: LogBRow::new(n_s, sources.k() as u64),
            sources,
            segments,
            total: corpus.total(),
            cached_cost: 0.0,
        };
        model.cached_cost = model.evaluate(corpus)?;
        Ok(model)
    }

    /// One cluster per active source, one segment per observed timestamp.
    pub fn finest(corpus: &EventCorpus) -> Result<TemporalModel> {
        let src: Vec<Vec<u32>> = corpus.active_sources().iter().map(|&e| vec![e]).collect();
        let segs: Vec<(u32, u32)> = (0..corpus.n_times()).map(|p| (p, p)).collect();
        TemporalModel::from_partitions(corpus, &src, &segs)
    }

    /// The null model: one source cluster, one time segment.
    pub fn null(corpus: &EventCorpus) -> Result<TemporalModel> {
        TemporalModel::from_partitions(
            corpus,
            &[corpus.active_sources().to_vec()],
            &[(0, corpus.n_times() - 1)],
        )
    }

    pub fn k_sources(&self) -> u32 {
        self.sources.k()
    }

    pub fn k_segments(&self) -> u32 {
        self.segments.k()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cost(&self) -> f64 {
        self.cached_cost
    }

    pub fn source_groups(&self) -> Vec<Vec<u32>> {
        self.sources.groups()
    }

    /// Segment intervals (first, last) in time order.
    pub fn segment_intervals(&self) -> Vec<(u32, u32)> {
        self.segments.intervals()
    }

    /// Segment ids in time order.
    pub fn segments_in_order(&self) -> Vec<ClusterId> {
        self.segments.order.clone()
    }

    pub fn segment_of_position(&self, pos: u32) -> Result<ClusterId> {
        self.segments
            .seg_of_pos
            .get(pos as usize)
            .copied()
            .ok_or_else(|| Error::InvalidSegmentation(format!("position {pos} out of range")))
    }

    pub fn cluster_ids(&self, axis: Axis) -> Vec<ClusterId> {
        match axis {
            Axis::Sources => self.sources.clusters.keys().copied().collect(),
            Axis::Segments => self.segments.segs.keys().copied().collect(),
            Axis::Destinations => Vec::new(),
        }
    }

    pub fn has_cluster(&self, axis: Axis, id: ClusterId) -> bool {
        match axis {
            Axis::Sources => self.sources.clusters.contains_key(&id),
            Axis::Segments => self.segments.segs.contains_key(&id),
            Axis::Destinations => false,
        }
    }

    pub fn cluster_size(&self, axis: Axis, id: ClusterId) -> Result<u32> {
        match axis {
            Axis::Sources => Ok(self.sources.cluster(id)?.size),
            Axis::Segments => {
                let s = self.segments.segment(id)?;
                Ok(s.last - s.first + 1)
            }
            Axis::Destinations => Err(Error::InvalidInput(
                "temporal model has no destination axis".into(),
            )),
        }
    }

    pub fn cluster_count(&self, axis: Axis, id: ClusterId) -> Result<u64> {
        match axis {
            Axis::Sources => Ok(self.sources.cluster(id)?.count),
            Axis::Segments => Ok(self.segments.segment(id)?.count),
            Axis::Destinations => Err(Error::InvalidInput(
                "temporal model has no destination axis".into(),
            )),
        }
    }

    /// Calls from a source cluster within a time segment.
    pub fn block_count(&self, source: ClusterId, segment: ClusterId) -> Result<u64> {
        let c = self.sources.cluster(source)?;
        self.segments.segment(segment)?;
        Ok(blocks_get(&c.blocks, segment))
    }

    /// Smallest member entity of a source cluster, or the first timestamp
    /// position of a segment; the canonical ordering key.
    pub fn cluster_min_member(&self, axis: Axis, id: ClusterId) -> Result<u32> {
        match axis {
            Axis::Sources => Ok(self.sources.cluster(id)?.members[0]),
            Axis::Segments => Ok(self.segments.segment(id)?.first),
            Axis::Destinations => Err(Error::InvalidInput(
                "temporal model has no destination axis".into(),
            )),
        }
    }

    pub fn assignment_of(&self, entity: u32) -> Result<Option<ClusterId>> {
        let id = *self
            .sources
            .assignment
            .get(entity as usize)
            .ok_or_else(|| Error::PartitionMismatch(format!("entity {entity} out of range")))?;
        Ok(if id == NO_CLUSTER { None } else { Some(id) })
    }

    pub fn evaluate(&self, corpus: &EventCorpus) -> Result<f64> {
        let (prior, like) = self.evaluate_parts(corpus)?;
        Ok(prior + like)
    }

    /// (prior, likelihood) blocks of the cost, canonically summed.
    pub fn evaluate_parts(&self, corpus: &EventCorpus) -> Result<(f64, f64)> {
        let view = corpus.temporal_view()?;
        if corpus.total() == 0 {
            return Err(Error::EmptyCorpus);
        }
        validate_sources_cover(&self.sources, corpus)?;
        if self.segments.seg_of_pos.len() != corpus.n_times() as usize {
            return Err(Error::InvalidSegmentation(format!(
                "segmentation covers {} timestamps, corpus has {}",
                self.segments.seg_of_pos.len(),
                corpus.n_times()
            )));
        }

        let m = corpus.total();
        let n_s = corpus.active_sources().len() as u64;
        let src_order = self.sources.canonical_order();
        let k_s = src_order.len() as u64;
        let k_t = self.segments.k() as u64;
        let k = k_s * k_t;
        let seg_rank: HashMap<ClusterId, u32> = self
            .segments
            .order
            .iter()
            .enumerate()
            .map(|(r, &id)| (id, r as u32))
            .collect();

        let mut src_counts = Vec::with_capacity(src_order.len());
        let mut rows: Vec<Vec<(u32, u64)>> = Vec::with_capacity(src_order.len());
        for id in &src_order {
            let cluster = &self.sources.clusters[id];
            let mut count = 0u64;
            let mut map = std::collections::BTreeMap::new();
            for &e in &cluster.members {
                count += corpus.source_marginals()[e as usize];
                for &(pos, v) in view.row(e) {
                    let seg = self.segments.seg_of_pos[pos as usize];
                    *map.entry(seg_rank[&seg]).or_insert(0u64) += v;
                }
            }
            src_counts.push(count);
            rows.push(map.into_iter().collect());
        }
        let seg_counts: Vec<u64> = self
            .segments
            .order
            .iter()
            .map(|id| {
                let s = &self.segments.segs[id];
                (s.first..=s.last)
                    .map(|p| corpus.time_marginals()[p as usize])
                    .sum()
            })
            .collect();

        let mut prior = StableSum::new();
        prior.add((n_s as f64).ln());
        prior.add((m as f64).ln());
        prior.add(self.logb_sources.get(k_s));
        prior.add(lbu(m + k - 1, k - 1));
        for (rank, &id) in src_order.iter().enumerate() {
            let n_i = self.sources.clusters[&id].size as u64;
            prior.add(lbu(src_counts[rank] + n_i - 1, n_i - 1));
        }

        let mut like = StableSum::new();
        like.add(lf(m));
        for row in &rows {
            for &(_, v) in row {
                like.add(-lf(v));
            }
        }
        for &c in &seg_counts {
            like.add(lf(c));
        }
        for &c in &src_counts {
            like.add(lf(c));
        }
        for &i in corpus.active_sources() {
            like.add(-lf(corpus.source_marginals()[i as usize]));
        }
        Ok((prior.value(), like.value()))
    }

    pub fn recompute_cost(&mut self, corpus: &EventCorpus) -> Result<f64> {
        self.cached_cost = self.evaluate(corpus)?;
        Ok(self.cached_cost)
    }

    /// Adjacent segment id pairs in time order, the legal segment merges.
    pub fn adjacent_segment_pairs(&self) -> Vec<(ClusterId, ClusterId)> {
        self.segments
            .order
            .windows(2)
            .map(|w| (w[0], w[1]))
            .collect()
    }

    /// Cost change of merging two clusters (sources) or two adjacent
    /// segments.
    pub fn merge_delta(&self, axis: Axis, a: ClusterId, b: ClusterId) -> Result<f64> {
        if a == b {
            return Err(Error::SameCluster(a));
        }
        let k_s = self.sources.k() as u64;
        let k_t = self.segments.k() as u64;
        match axis {
            Axis::Sources => {
                let (a, b) = (a.min(b), a.max(b));
                let ca = self.sources.cluster(a)?;
                let cb = self.sources.cluster(b)?;
                Ok(self.logb_sources.get(k_s - 1) - self.logb_sources.get(k_s)
                    + bicluster_prior_delta(self.total, k_s * k_t, (k_s - 1) * k_t)
                    + cluster_pair_merge_delta(ca.count, ca.size as u64, cb.count, cb.size as u64)
                    + blocks_merge_delta(&ca.blocks, &cb.blocks))
            }
            Axis::Segments => {
                let pa = self
                    .segments
                    .position_in_order(a)
                    .ok_or(Error::UnknownCluster(a))?;
                let pb = self
                    .segments
                    .position_in_order(b)
                    .ok_or(Error::UnknownCluster(b))?;
                if pa.abs_diff(pb) != 1 {
                    return Err(Error::NonAdjacentSegments { a, b });
                }
                let sa = self.segments.segment(a)?;
                let sb = self.segments.segment(b)?;
                // The segment marginal factorials enter the likelihood with
                // a positive sign, so merging adds lf(sum) - lf(a) - lf(b).
                Ok(bicluster_prior_delta(self.total, k_s * k_t, k_s * (k_t - 1))
                    + lf(sa.count + sb.count)
                    - lf(sa.count)
                    - lf(sb.count)
                    + blocks_merge_delta(&sa.blocks, &sb.blocks))
            }
            Axis::Destinations => Err(Error::InvalidInput(
                "temporal model has no destination axis".into(),
            )),
        }
    }

    pub fn apply_merge(&mut self, axis: Axis, a: ClusterId, b: ClusterId) -> Result<ClusterId> {
        let delta = self.merge_delta(axis, a, b)?;
        let new_id = match axis {
            Axis::Sources => {
                let (a, b) = (a.min(b), a.max(b));
                let ca = self.sources.clusters.remove(&a).expect("validated");
                let cb = self.sources.clusters.remove(&b).expect("validated");
                let c = self.sources.next_id;
                self.sources.next_id += 1;
                for &(seg, _) in &ca.blocks {
                    blocks_remove(&mut self.segments.segs.get_mut(&seg).expect("segment").blocks, a);
                }
                for &(seg, _) in &cb.blocks {
                    blocks_remove(&mut self.segments.segs.get_mut(&seg).expect("segment").blocks, b);
                }
                let blocks = merge_sorted_blocks(&ca.blocks, &cb.blocks);
                for &(seg, v) in &blocks {
                    self.segments
                        .segs
                        .get_mut(&seg)
                        .expect("segment")
                        .blocks
                        .push((c, v));
                }
                let mut members = ca.members;
                members.extend_from_slice(&cb.members);
                members.sort_unstable();
                for &e in &members {
                    self.sources.assignment[e as usize] = c;
                }
                self.sources.clusters.insert(
                    c,
                    super::Cluster {
                        size: ca.size + cb.size,
                        count: ca.count + cb.count,
                        members,
                        blocks,
                    },
                );
                c
            }
            Axis::Segments => {
                let pa = self.segments.position_in_order(a).expect("validated");
                let pb = self.segments.position_in_order(b).expect("validated");
                let (left_pos, left_id, right_id) = if pa < pb { (pa, a, b) } else { (pb, b, a) };
                let sl = self.segments.segs.remove(&left_id).expect("validated");
                let sr = self.segments.segs.remove(&right_id).expect("validated");
                let c = self.segments.next_id;
                self.segments.next_id += 1;
                for &(src, _) in &sl.blocks {
                    blocks_remove(
                        &mut self.sources.clusters.get_mut(&src).expect("cluster").blocks,
                        left_id,
                    );
                }
                for &(src, _) in &sr.blocks {
                    blocks_remove(
                        &mut self.sources.clusters.get_mut(&src).expect("cluster").blocks,
                        right_id,
                    );
                }
                let blocks = merge_sorted_blocks(&sl.blocks, &sr.blocks);
                for &(src, v) in &blocks {
                    // c exceeds every live segment id, so pushing keeps the
                    // cluster rows sorted.
                    self.sources
                        .clusters
                        .get_mut(&src)
                        .expect("cluster")
                        .blocks
                        .push((c, v));
                }
                for p in sl.first..=sr.last {
                    self.segments.seg_of_pos[p as usize] = c;
                }
                self.segments.order.splice(left_pos..left_pos + 2, [c]);
                self.segments.segs.insert(
                    c,
                    super::Segment {
                        count: sl.count + sr.count,
                        first: sl.first,
                        last: sr.last,
                        blocks,
                    },
                );
                c
            }
            Axis::Destinations => unreachable!("rejected by merge_delta"),
        };
        self.cached_cost += delta;
        Ok(new_id)
    }

    /// Cost change of reassigning a source entity to another cluster.
    pub fn move_delta(&self, corpus: &EventCorpus, entity: u32, target: ClusterId) -> Result<f64> {
        let (delta, _, _) = self.move_parts(corpus, entity, target)?;
        Ok(delta)
    }

    fn move_parts(
        &self,
        corpus: &EventCorpus,
        entity: u32,
        target: ClusterId,
    ) -> Result<(f64, ClusterId, Vec<(ClusterId, u64)>)> {
        let view = corpus.temporal_view()?;
        let marginal = *corpus
            .source_marginals()
            .get(entity as usize)
            .ok_or_else(|| Error::PartitionMismatch(format!("entity {entity} out of range")))?;
        let mut map = std::collections::BTreeMap::new();
        for &(pos, v) in view.row(entity) {
            *map.entry(self.segments.seg_of_pos[pos as usize]).or_insert(0u64) += v;
        }
        let row: Vec<(ClusterId, u64)> = map.into_iter().collect();
        let from = self.sources.assignment[entity as usize];
        if from == NO_CLUSTER {
            return Err(Error::PartitionMismatch(format!(
                "entity {entity} is inactive and not part of the model"
            )));
        }
        let ct = self.sources.cluster(target)?;
        if from == target {
            return Ok((0.0, from, row));
        }
        let cf = self.sources.cluster(from)?;
        if cf.size == 1 {
            return Err(Error::MoveWouldEmptyCluster(from));
        }
        let (nf, nt) = (cf.size as u64, ct.size as u64);
        let mut delta = lbu(cf.count - marginal + nf - 2, nf - 2)
            + lbu(ct.count + marginal + nt, nt)
            - lbu(cf.count + nf - 1, nf - 1)
            - lbu(ct.count + nt - 1, nt - 1)
            + lf(cf.count - marginal)
            + lf(ct.count + marginal)
            - lf(cf.count)
            - lf(ct.count);
        for &(seg, r) in &row {
            let vf = blocks_get(&cf.blocks, seg);
            let vt = blocks_get(&ct.blocks, seg);
            debug_assert!(vf >= r);
            delta += lf(vf) + lf(vt) - lf(vf - r) - lf(vt + r);
        }
        Ok((delta, from, row))
    }

    pub fn apply_move(&mut self, corpus: &EventCorpus, entity: u32, target: ClusterId) -> Result<()> {
        let (delta, from, row) = self.move_parts(corpus, entity, target)?;
        if from == target {
            return Ok(());
        }
        let marginal = corpus.source_marginals()[entity as usize];
        {
            let cf = self.sources.clusters.get_mut(&from).expect("validated");
            let pos = cf.members.binary_search(&entity).expect("member");
            cf.members.remove(pos);
            cf.size -= 1;
            cf.count -= marginal;
            for &(seg, r) in &row {
                blocks_sub(&mut cf.blocks, seg, r);
            }
        }
        {
            let ct = self.sources.clusters.get_mut(&target).expect("validated");
            let pos = ct.members.binary_search(&entity).unwrap_err();
            ct.members.insert(pos, entity);
            ct.size += 1;
            ct.count += marginal;
            for &(seg, r) in &row {
                blocks_add(&mut ct.blocks, seg, r);
            }
        }
        for &(seg, r) in &row {
            let s = self.segments.segs.get_mut(&seg).expect("segment");
            blocks_sub(&mut s.blocks, from, r);
            blocks_add(&mut s.blocks, target, r);
        }
        self.sources.assignment[entity as usize] = target;
        self.cached_cost += delta;
        Ok(())
    }

    /// Cost change of moving the boundary between adjacent segments by one
    /// observed timestamp. `boundary` is the index of the boundary in time
    /// order (0 separates the first two segments).
    pub fn boundary_shift_delta(
        &self,
        corpus: &EventCorpus,
        boundary: usize,
        direction: ShiftDirection,
    ) -> Result<f64> {
        let (delta, ..) = self.shift_parts(corpus, boundary, direction)?;
        Ok(delta)
    }

    #[allow(clippy::type_complexity)]
    fn shift_parts(
        &self,
        corpus: &EventCorpus,
        boundary: usize,
        direction: ShiftDirection,
    ) -> Result<(f64, ClusterId, ClusterId, u32, Vec<(ClusterId, u64)>)> {
        if boundary + 1 >= self.segments.order.len() {
            return Err(Error::InvalidBoundary(boundary));
        }
        let view = corpus.temporal_view()?;
        let left = self.segments.order[boundary];
        let right = self.segments.order[boundary + 1];
        let sl = self.segments.segment(left)?;
        let sr = self.segments.segment(right)?;
        let (donor_id, recv_id, pos) = match direction {
            ShiftDirection::Right => {
                if sr.first == sr.last {
                    return Err(Error::ShiftWouldEmptySegment(right));
                }
                (right, left, sr.first)
            }
            ShiftDirection::Left => {
                if sl.first == sl.last {
                    return Err(Error::ShiftWouldEmptySegment(left));
                }
                (left, right, sl.last)
            }
        };
        let donor = self.segments.segment(donor_id)?;
        let recv = self.segments.segment(recv_id)?;
        let mut map = std::collections::BTreeMap::new();
        for &(e, v) in view.col(pos) {
            *map.entry(self.sources.assignment[e as usize]).or_insert(0u64) += v;
        }
        let moved: Vec<(ClusterId, u64)> = map.into_iter().collect();
        let col_total = corpus.time_marginals()[pos as usize];
        let mut delta = lf(donor.count - col_total) + lf(recv.count + col_total)
            - lf(donor.count)
            - lf(recv.count);
        for &(src, c) in &moved {
            let vd = blocks_get(&donor.blocks, src);
            let vr = blocks_get(&recv.blocks, src);
            debug_assert!(vd >= c);
            let cf = &self.sources.clusters[&src];
            let fd = blocks_get(&cf.blocks, donor_id);
            let fr = blocks_get(&cf.blocks, recv_id);
            debug_assert_eq!(fd, vd);
            debug_assert_eq!(fr, vr);
            delta += lf(vd) + lf(vr) - lf(vd - c) - lf(vr + c);
        }
        Ok((delta, donor_id, recv_id, pos, moved))
    }

    pub fn apply_boundary_shift(
        &mut self,
        corpus: &EventCorpus,
        boundary: usize,
        direction: ShiftDirection,
    ) -> Result<()> {
        let (delta, donor_id, recv_id, pos, moved) = self.shift_parts(corpus, boundary, direction)?;
        let col_total = corpus.time_marginals()[pos as usize];
        {
            let donor = self.segments.segs.get_mut(&donor_id).expect("validated");
            donor.count -= col_total;
            match direction {
                ShiftDirection::Right => donor.first += 1,
                ShiftDirection::Left => donor.last -= 1,
            }
            for &(src, c) in &moved {
                blocks_sub(&mut donor.blocks, src, c);
            }
        }
        {
            let recv = self.segments.segs.get_mut(&recv_id).expect("validated");
            recv.count += col_total;
            match direction {
                ShiftDirection::Right => recv.last += 1,
                ShiftDirection::Left => recv.first -= 1,
            }
            for &(src, c) in &moved {
                blocks_add(&mut recv.blocks, src, c);
            }
        }
        self.segments.seg_of_pos[pos as usize] = recv_id;
        for &(src, c) in &moved {
            let cf = self.sources.clusters.get_mut(&src).expect("cluster");
            blocks_sub(&mut cf.blocks, donor_id, c);
            blocks_add(&mut cf.blocks, recv_id, c);
        }
        self.cached_cost += delta;
        Ok(())
    }
}

fn validate_sources_cover(ax: &AxisState, corpus: &EventCorpus) -> Result<()> {
    if ax.assignment.len() != corpus.n_sources() as usize {
        return Err(Error::PartitionMismatch(format!(
            "partition indexes {} entities, corpus has {}",
            ax.assignment.len(),
            corpus.n_sources()
        )));
    }
    let mut members: Vec<u32> = ax
        .clusters
        .values()
        .flat_map(|c| c.members.iter().copied())
        .collect();
    members.sort_unstable();
    if members != corpus.active_sources() {
        return Err(Error::PartitionMismatch(
            "partition does not cover exactly the corpus's active sources".into(),
        ));
    }
    Ok(())
}

/// Exact temporal cost of a model against a corpus (from-scratch,
/// validating).
pub fn temporal_cost(model: &TemporalModel, corpus: &EventCorpus) -> Result<f64> {
    model.evaluate(corpus)
}

/// The (prior, likelihood) blocks of the temporal cost.
pub fn temporal_cost_parts(model: &TemporalModel, corpus: &EventCorpus) -> Result<(f64, f64)> {
    model.evaluate_parts(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusBuilder, TimeValue};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus_from(records: &[(&str, i64, u64)]) -> EventCorpus {
        let mut b = CorpusBuilder::new();
        for &(s, t, c) in records {
            b.add(s, None, Some(TimeValue::Day(t)), c).unwrap();
        }
        b.build().unwrap()
    }

    fn random_temporal_corpus(rng: &mut ChaCha8Rng, n_s: u32, n_t: i64, cells: usize) -> EventCorpus {
        let mut b = CorpusBuilder::new();
        for i in 0..n_s {
            b.add(&format!("s{i}"), None, Some(TimeValue::Day(rng.gen_range(0..n_t))), 1)
                .unwrap();
        }
        for t in 0..n_t {
            b.add(
                &format!("s{}", rng.gen_range(0..n_s)),
                None,
                Some(TimeValue::Day(t)),
                1 + rng.gen_range(0..3),
            )
            .unwrap();
        }
        for _ in 0..cells {
            b.add(
                &format!("s{}", rng.gen_range(0..n_s)),
                None,
                Some(TimeValue::Day(rng.gen_range(0..n_t))),
                1 + rng.gen_range(0..5),
            )
            .unwrap();
        }
        b.build().unwrap()
    }

    fn random_intervals(rng: &mut ChaCha8Rng, n_times: u32) -> Vec<(u32, u32)> {
        let mut bounds: Vec<u32> = (1..n_times).filter(|_| rng.gen_bool(0.5)).collect();
        bounds.push(n_times);
        let mut intervals = Vec::new();
        let mut start = 0;
        for &b in &bounds {
            intervals.push((start, b - 1));
            start = b;
        }
        intervals
    }

    #[test]
    fn one_source_one_call_costs_zero() {
        let corpus = corpus_from(&[("s1", 3, 1)]);
        let model = TemporalModel::null(&corpus).unwrap();
        assert_eq!(model.cost(), 0.0);
    }

    #[test]
    fn one_source_two_calls_null_cost_is_ln_4() {
        let corpus = corpus_from(&[("s1", 3, 2)]);
        let model = TemporalModel::null(&corpus).unwrap();
        assert!((model.cost() - 4f64.ln()).abs() < 1e-9, "{}", model.cost());
    }

    #[test]
    fn likelihood_part_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let corpus = random_temporal_corpus(&mut rng, 4, 5, 10);
            let intervals = random_intervals(&mut rng, corpus.n_times());
            let model =
                TemporalModel::from_partitions(&corpus, &[corpus.active_sources().to_vec()], &intervals)
                    .unwrap();
            let (_, like) = temporal_cost_parts(&model, &corpus).unwrap();
            assert!(like >= -1e-12);
        }
    }

    #[test]
    fn segment_merges_require_adjacency() {
        let corpus = corpus_from(&[("s1", 0, 1), ("s1", 1, 1), ("s1", 2, 1)]);
        let model = TemporalModel::finest(&corpus).unwrap();
        let order = model.segments_in_order();
        assert!(model.merge_delta(Axis::Segments, order[0], order[1]).is_ok());
        assert!(matches!(
            model.merge_delta(Axis::Segments, order[0], order[2]),
            Err(Error::NonAdjacentSegments { .. })
        ));
    }

    #[test]
    fn merge_and_move_deltas_match_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let corpus = random_temporal_corpus(&mut rng, 4, 6, 12);
            let intervals = random_intervals(&mut rng, corpus.n_times());
            let groups: Vec<Vec<u32>> = corpus.active_sources().iter().map(|&e| vec![e]).collect();
            let mut model = TemporalModel::from_partitions(&corpus, &groups, &intervals).unwrap();
            // A couple of source merges to land in a random mid-state.
            for _ in 0..2 {
                let ids = model.cluster_ids(Axis::Sources);
                if ids.len() >= 2 {
                    model.apply_merge(Axis::Sources, ids[0], ids[1]).unwrap();
                }
            }
            let before = model.evaluate(&corpus).unwrap();
            // Source merge delta.
            let ids = model.cluster_ids(Axis::Sources);
            if ids.len() >= 2 {
                let d = model.merge_delta(Axis::Sources, ids[0], ids[1]).unwrap();
                let mut m2 = model.clone();
                m2.apply_merge(Axis::Sources, ids[0], ids[1]).unwrap();
                let r = m2.evaluate(&corpus).unwrap() - before;
                assert!((d - r).abs() < 1e-6, "source merge {d} vs {r}");
            }
            // Segment merge delta.
            if let Some(&(a, b)) = model.adjacent_segment_pairs().first() {
                let d = model.merge_delta(Axis::Segments, a, b).unwrap();
                let mut m2 = model.clone();
                m2.apply_merge(Axis::Segments, a, b).unwrap();
                let r = m2.evaluate(&corpus).unwrap() - before;
                assert!((d - r).abs() < 1e-6, "segment merge {d} vs {r}");
            }
            // Move delta.
            let actives = corpus.active_sources();
            let e = actives[rng.gen_range(0..actives.len())];
            let ids = model.cluster_ids(Axis::Sources);
            let target = ids[rng.gen_range(0..ids.len())];
            match model.move_delta(&corpus, e, target) {
                Ok(d) => {
                    let mut m2 = model.clone();
                    m2.apply_move(&corpus, e, target).unwrap();
                    let r = m2.evaluate(&corpus).unwrap() - before;
                    assert!((d - r).abs() < 1e-6, "move {d} vs {r}");
                }
                Err(Error::MoveWouldEmptyCluster(_)) => {}
                Err(e) => panic!("unexpected {e}"),
            }
        }
    }

    #[test]
    fn boundary_shift_matches_recompute_and_reverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let corpus = random_temporal_corpus(&mut rng, 3, 6, 10);
            if corpus.n_times() < 2 {
                continue;
            }
            // Split once so a boundary exists.
            let mid = corpus.n_times() / 2;
            let model = TemporalModel::from_partitions(
                &corpus,
                &[corpus.active_sources().to_vec()],
                &[(0, mid - 1), (mid, corpus.n_times() - 1)],
            )
            .unwrap();
            let before = model.evaluate(&corpus).unwrap();
            for dir in [ShiftDirection::Left, ShiftDirection::Right] {
                match model.boundary_shift_delta(&corpus, 0, dir) {
                    Ok(d) => {
                        let mut m2 = model.clone();
                        m2.apply_boundary_shift(&corpus, 0, dir).unwrap();
                        let r = m2.evaluate(&corpus).unwrap() - before;
                        assert!((d - r).abs() < 1e-6, "shift {d} vs {r}");
                        // Reverse shift cancels.
                        let back = match dir {
                            ShiftDirection::Left => ShiftDirection::Right,
                            ShiftDirection::Right => ShiftDirection::Left,
                        };
                        let d_back = m2.boundary_shift_delta(&corpus, 0, back).unwrap();
                        assert!((d + d_back).abs() < 1e-9, "shift {d} + reverse {d_back}");
                    }
                    Err(Error::ShiftWouldEmptySegment(_)) => {}
                    Err(e) => panic!("unexpected {e}"),
                }
            }
        }
    }

    #[test]
    fn single_timestamp_has_no_legal_shift() {
        let corpus = corpus_from(&[("s1", 0, 2), ("s2", 0, 1)]);
        let model = TemporalModel::null(&corpus).unwrap();
        assert!(matches!(
            model.boundary_shift_delta(&corpus, 0, ShiftDirection::Right),
            Err(Error::InvalidBoundary(0))
        ));
    }

    #[test]
    fn relabeled_models_evaluate_bit_identically() {
        let corpus = corpus_from(&[("a", 0, 2), ("b", 1, 3), ("c", 2, 4), ("a", 2, 1)]);
        let m1 = TemporalModel::from_partitions(&corpus, &[vec![0, 2], vec![1]], &[(0, 1), (2, 2)])
            .unwrap();
        let m2 = TemporalModel::from_partitions(&corpus, &[vec![1], vec![2, 0]], &[(0, 1), (2, 2)])
            .unwrap();
        assert_eq!(m1.cost(), m2.cost());
    }
}
