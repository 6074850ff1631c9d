//! The spatial model: a partition per antenna axis and its exact MDL cost.

use std::collections::HashMap;

use crate::combinatorics::{log_binomial_unchecked as lbu, log_factorial as lf, LogBRow, StableSum};
use crate::corpus::EventCorpus;
use crate::error::{Error, Result};

use super::{
    bicluster_prior_delta, blocks_add, blocks_get, blocks_merge_delta, blocks_remove, blocks_sub,
    cluster_pair_merge_delta, merge_sorted_blocks, Axis, AxisState, ClusterId, NO_CLUSTER,
};

/// A co-clustering of sources and destinations with cached sufficient
/// statistics and cost.
#[derive(Debug, Clone)]
pub struct SpatialModel {
    pub(crate) sources: AxisState,
    pub(crate) dests: AxisState,
    total: u64,
    logb_sources: LogBRow,
    logb_dests: LogBRow,
    cached_cost: f64,
}

impl SpatialModel {
    /// Build a model from explicit clusters of corpus entity indices. The
    /// clusters must exactly cover the corpus's active entities on each
    /// axis.
    pub fn from_partitions(
        corpus: &EventCorpus,
        source_groups: &[Vec<u32>],
        dest_groups: &[Vec<u32>],
    ) -> Result<SpatialModel> {
        if corpus.total() == 0 {
            return Err(Error::EmptyCorpus);
        }
        let view = corpus.spatial_view()?;
        let mut sources =
            AxisState::from_groups(source_groups, corpus.n_sources(), corpus.active_sources())?;
        let mut dests = AxisState::from_groups(
            dest_groups,
            corpus.n_destinations(),
            corpus.active_destinations(),
        )?;
        for cluster in sources.clusters.values_mut() {
            let mut map = std::collections::BTreeMap::new();
            for &e in &cluster.members {
                cluster.count += corpus.source_marginals()[e as usize];
                for &(j, v) in view.row(e) {
                    *map.entry(dests.assignment[j as usize]).or_insert(0u64) += v;
                }
            }
            cluster.blocks = map.into_iter().collect();
        }
        for cluster in dests.clusters.values_mut() {
            let mut map = std::collections::BTreeMap::new();
            for &e in &cluster.members {
                cluster.count += corpus.dest_marginals()[e as usize];
                for &(i, v) in view.col(e) {
                    *map.entry(sources.assignment[i as usize]).or_insert(0u64) += v;
                }
            }
            cluster.blocks = map.into_iter().collect();
        }
        let n_s = corpus.active_sources().len() as u64;
        let n_c = corpus.active_destinations().len() as u64;
        let mut model = SpatialModel {
            logb_sources: LogBRow::new(n_s, sources.k() as u64),
            logb_dests: LogBRow::new(n_c, dests.k() as u64),
            sources,
            dests,
            total: corpus.total(),
            cached_cost: 0.0,
        };
        model.cached_cost = model.evaluate(corpus)?;
        Ok(model)
    }

    /// One cluster per active entity on each axis.
    pub fn finest(corpus: &EventCorpus) -> Result<SpatialModel> {
        let src: Vec<Vec<u32>> = corpus.active_sources().iter().map(|&e| vec![e]).collect();
        let dst: Vec<Vec<u32>> = corpus.active_destinations().iter().map(|&e| vec![e]).collect();
        SpatialModel::from_partitions(corpus, &src, &dst)
    }

    /// The null model: a single cluster on each axis.
    pub fn null(corpus: &EventCorpus) -> Result<SpatialModel> {
        SpatialModel::from_partitions(
            corpus,
            &[corpus.active_sources().to_vec()],
            &[corpus.active_destinations().to_vec()],
        )
    }

    pub fn k_sources(&self) -> u32 {
        self.sources.k()
    }

    pub fn k_destinations(&self) -> u32 {
        self.dests.k()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// The cached cost, maintained incrementally by merges and moves.
    pub fn cost(&self) -> f64 {
        self.cached_cost
    }

    /// Clusters of source entity indices, canonical order.
    pub fn source_groups(&self) -> Vec<Vec<u32>> {
        self.sources.groups()
    }

    pub fn dest_groups(&self) -> Vec<Vec<u32>> {
        self.dests.groups()
    }

    fn axis(&self, axis: Axis) -> Result<&AxisState> {
        match axis {
            Axis::Sources => Ok(&self.sources),
            Axis::Destinations => Ok(&self.dests),
            Axis::Segments => Err(Error::InvalidInput(
                "spatial model has no time segments".into(),
            )),
        }
    }

    /// Live cluster ids on an axis, ascending.
    pub fn cluster_ids(&self, axis: Axis) -> Vec<ClusterId> {
        self.axis(axis)
            .map(|a| a.clusters.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn has_cluster(&self, axis: Axis, id: ClusterId) -> bool {
        self.axis(axis).map(|a| a.clusters.contains_key(&id)).unwrap_or(false)
    }

    pub fn cluster_size(&self, axis: Axis, id: ClusterId) -> Result<u32> {
        Ok(self.axis(axis)?.cluster(id)?.size)
    }

    pub fn cluster_count(&self, axis: Axis, id: ClusterId) -> Result<u64> {
        Ok(self.axis(axis)?.cluster(id)?.count)
    }

    /// Calls from a source cluster to a destination cluster.
    pub fn block_count(&self, source: ClusterId, dest: ClusterId) -> Result<u64> {
        let c = self.sources.cluster(source)?;
        self.dests.cluster(dest)?;
        Ok(blocks_get(&c.blocks, dest))
    }

    /// Smallest member entity of a cluster; the canonical ordering key.
    pub fn cluster_min_member(&self, axis: Axis, id: ClusterId) -> Result<u32> {
        Ok(self.axis(axis)?.cluster(id)?.members[0])
    }

    /// Cluster of an entity, or None for inactive entities.
    pub fn assignment_of(&self, axis: Axis, entity: u32) -> Result<Option<ClusterId>> {
        let a = self.axis(axis)?;
        let id = *a
            .assignment
            .get(entity as usize)
            .ok_or_else(|| Error::PartitionMismatch(format!("entity {entity} out of range")))?;
        Ok(if id == NO_CLUSTER { None } else { Some(id) })
    }

    /// From-scratch canonical evaluation of Eq.-style cost terms against a
    /// corpus; validates the partition and ignores cached statistics.
    pub fn evaluate(&self, corpus: &EventCorpus) -> Result<f64> {
        let (prior, like) = self.evaluate_parts(corpus)?;
        Ok(prior + like)
    }

    /// (prior, likelihood) blocks of the cost, canonically summed. The
    /// likelihood block is a log of a count ratio >= 1 and thus >= 0.
    pub fn evaluate_parts(&self, corpus: &EventCorpus) -> Result<(f64, f64)> {
        let view = corpus.spatial_view()?;
        if corpus.total() == 0 {
            return Err(Error::EmptyCorpus);
        }
        validate_axis_cover(&self.sources, corpus.n_sources(), corpus.active_sources())?;
        validate_axis_cover(&self.dests, corpus.n_destinations(), corpus.active_destinations())?;

        let m = corpus.total();
        let n_s = corpus.active_sources().len() as u64;
        let n_c = corpus.active_destinations().len() as u64;
        let src_order = self.sources.canonical_order();
        let dst_order = self.dests.canonical_order();
        let k_s = src_order.len() as u64;
        let k_d = dst_order.len() as u64;
        let k = k_s * k_d;
        let dst_rank: HashMap<ClusterId, u32> = dst_order
            .iter()
            .enumerate()
            .map(|(r, &id)| (id, r as u32))
            .collect();

        // Derive cluster counts and block rows from the corpus, keyed by
        // canonical rank so the summation order is label-independent.
        let mut src_counts = Vec::with_capacity(src_order.len());
        let mut rows: Vec<Vec<(u32, u64)>> = Vec::with_capacity(src_order.len());
        for id in &src_order {
            let cluster = &self.sources.clusters[id];
            let mut count = 0u64;
            let mut map = std::collections::BTreeMap::new();
            for &e in &cluster.members {
                count += corpus.source_marginals()[e as usize];
                for &(j, v) in view.row(e) {
                    let dj = self.dests.assignment[j as usize];
                    *map.entry(dst_rank[&dj]).or_insert(0u64) += v;
                }
            }
            src_counts.push(count);
            rows.push(map.into_iter().collect());
        }
        let mut dst_counts = Vec::with_capacity(dst_order.len());
        for id in &dst_order {
            let cluster = &self.dests.clusters[id];
            let count: u64 = cluster
                .members
                .iter()
                .map(|&e| corpus.dest_marginals()[e as usize])
                .sum();
            dst_counts.push(count);
        }

        let mut prior = StableSum::new();
        prior.add((n_s as f64).ln());
        prior.add((n_c as f64).ln());
        prior.add(self.logb_sources.get(k_s));
        prior.add(self.logb_dests.get(k_d));
        prior.add(lbu(m + k - 1, k - 1));
        for (rank, &id) in src_order.iter().enumerate() {
            let n_i = self.sources.clusters[&id].size as u64;
            prior.add(lbu(src_counts[rank] + n_i - 1, n_i - 1));
        }
        for (rank, &id) in dst_order.iter().enumerate() {
            let n_j = self.dests.clusters[&id].size as u64;
            prior.add(lbu(dst_counts[rank] + n_j - 1, n_j - 1));
        }

        let mut like = StableSum::new();
        like.add(lf(m));
        for row in &rows {
            for &(_, v) in row {
                like.add(-lf(v));
            }
        }
        for &c in &dst_counts {
            like.add(lf(c));
        }
        for &j in corpus.active_destinations() {
            like.add(-lf(corpus.dest_marginals()[j as usize]));
        }
        for &c in &src_counts {
            like.add(lf(c));
        }
        for &i in corpus.active_sources() {
            like.add(-lf(corpus.source_marginals()[i as usize]));
        }
        Ok((prior.value(), like.value()))
    }

    /// Replace the cached cost with a from-scratch evaluation.
    pub fn recompute_cost(&mut self, corpus: &EventCorpus) -> Result<f64> {
        self.cached_cost = self.evaluate(corpus)?;
        Ok(self.cached_cost)
    }

    /// Cost change of merging clusters `a` and `b` on an axis; symmetric
    /// in its arguments.
    pub fn merge_delta(&self, axis: Axis, a: ClusterId, b: ClusterId) -> Result<f64> {
        if a == b {
            return Err(Error::SameCluster(a));
        }
        let (a, b) = (a.min(b), a.max(b));
        let (ax, logb) = match axis {
            Axis::Sources => (&self.sources, &self.logb_sources),
            Axis::Destinations => (&self.dests, &self.logb_dests),
            Axis::Segments => {
                return Err(Error::InvalidInput(
                    "spatial model has no time segments".into(),
                ))
            }
        };
        let ca = ax.cluster(a)?;
        let cb = ax.cluster(b)?;
        let k_axis = ax.k() as u64;
        let k_other = match axis {
            Axis::Sources => self.dests.k() as u64,
            _ => self.sources.k() as u64,
        };
        let delta = logb.get(k_axis - 1) - logb.get(k_axis)
            + bicluster_prior_delta(self.total, k_axis * k_other, (k_axis - 1) * k_other)
            + cluster_pair_merge_delta(ca.count, ca.size as u64, cb.count, cb.size as u64)
            + blocks_merge_delta(&ca.blocks, &cb.blocks);
        Ok(delta)
    }

    /// Apply a merge, updating statistics and the cached cost. Returns the
    /// id of the merged cluster.
    pub fn apply_merge(&mut self, axis: Axis, a: ClusterId, b: ClusterId) -> Result<ClusterId> {
        let delta = self.merge_delta(axis, a, b)?;
        let (a, b) = (a.min(b), a.max(b));
        let new_id = match axis {
            Axis::Sources => merge_axis_clusters(&mut self.sources, &mut self.dests, a, b),
            Axis::Destinations => merge_axis_clusters(&mut self.dests, &mut self.sources, a, b),
            Axis::Segments => unreachable!("rejected by merge_delta"),
        };
        self.cached_cost += delta;
        Ok(new_id)
    }

    /// Cost change of reassigning one entity to another cluster. Moving an
    /// entity to its own cluster is a no-op with delta 0; a move that would
    /// empty its cluster is signaled distinctly.
    pub fn move_delta(
        &self,
        corpus: &EventCorpus,
        axis: Axis,
        entity: u32,
        target: ClusterId,
    ) -> Result<f64> {
        let (delta, _, _) = self.move_parts(corpus, axis, entity, target)?;
        Ok(delta)
    }

    fn move_parts(
        &self,
        corpus: &EventCorpus,
        axis: Axis,
        entity: u32,
        target: ClusterId,
    ) -> Result<(f64, ClusterId, Vec<(ClusterId, u64)>)> {
        let view = corpus.spatial_view()?;
        let (ax, other, marginal, row): (&AxisState, &AxisState, u64, Vec<(ClusterId, u64)>) =
            match axis {
                Axis::Sources => {
                    let marg = *corpus
                        .source_marginals()
                        .get(entity as usize)
                        .ok_or_else(|| {
                            Error::PartitionMismatch(format!("entity {entity} out of range"))
                        })?;
                    let row = entity_blocks(view.row(entity), &self.dests.assignment);
                    (&self.sources, &self.dests, marg, row)
                }
                Axis::Destinations => {
                    let marg = *corpus
                        .dest_marginals()
                        .get(entity as usize)
                        .ok_or_else(|| {
                            Error::PartitionMismatch(format!("entity {entity} out of range"))
                        })?;
                    let row = entity_blocks(view.col(entity), &self.sources.assignment);
                    (&self.dests, &self.sources, marg, row)
                }
                Axis::Segments => {
                    return Err(Error::InvalidInput(
                        "spatial model has no time segments".into(),
                    ))
                }
            };
        let _ = other;
        let from = ax.assignment[entity as usize];
        if from == NO_CLUSTER {
            return Err(Error::PartitionMismatch(format!(
                "entity {entity} is inactive and not part of the model"
            )));
        }
        let ct = ax.cluster(target)?;
        if from == target {
            return Ok((0.0, from, row));
        }
        let cf = ax.cluster(from)?;
        if cf.size == 1 {
            return Err(Error::MoveWouldEmptyCluster(from));
        }
        let (nf, nt) = (cf.size as u64, ct.size as u64);
        let mut delta = lbu(cf.count - marginal + nf - 2, nf - 2) + lbu(ct.count + marginal + nt, nt)
            - lbu(cf.count + nf - 1, nf - 1)
            - lbu(ct.count + nt - 1, nt - 1)
            + lf(cf.count - marginal)
            + lf(ct.count + marginal)
            - lf(cf.count)
            - lf(ct.count);
        for &(j, r) in &row {
            let vf = blocks_get(&cf.blocks, j);
            let vt = blocks_get(&ct.blocks, j);
            debug_assert!(vf >= r);
            delta += lf(vf) + lf(vt) - lf(vf - r) - lf(vt + r);
        }
        Ok((delta, from, row))
    }

    /// Apply an element move, updating statistics and the cached cost.
    pub fn apply_move(
        &mut self,
        corpus: &EventCorpus,
        axis: Axis,
        entity: u32,
        target: ClusterId,
    ) -> Result<()> {
        let (delta, from, row) = self.move_parts(corpus, axis, entity, target)?;
        if from == target {
            return Ok(());
        }
        let marginal = match axis {
            Axis::Sources => corpus.source_marginals()[entity as usize],
            Axis::Destinations => corpus.dest_marginals()[entity as usize],
            Axis::Segments => unreachable!(),
        };
        let (ax, other) = match axis {
            Axis::Sources => (&mut self.sources, &mut self.dests),
            Axis::Destinations => (&mut self.dests, &mut self.sources),
            Axis::Segments => unreachable!(),
        };
        {
            let cf = ax.clusters.get_mut(&from).expect("validated");
            let pos = cf.members.binary_search(&entity).expect("member of its cluster");
            cf.members.remove(pos);
            cf.size -= 1;
            cf.count -= marginal;
            for &(j, r) in &row {
                blocks_sub(&mut cf.blocks, j, r);
            }
        }
        {
            let ct = ax.clusters.get_mut(&target).expect("validated");
            let pos = ct.members.binary_search(&entity).unwrap_err();
            ct.members.insert(pos, entity);
            ct.size += 1;
            ct.count += marginal;
            for &(j, r) in &row {
                blocks_add(&mut ct.blocks, j, r);
            }
        }
        for &(j, r) in &row {
            let oc = other.clusters.get_mut(&j).expect("partner cluster exists");
            blocks_sub(&mut oc.blocks, from, r);
            blocks_add(&mut oc.blocks, target, r);
        }
        ax.assignment[entity as usize] = target;
        self.cached_cost += delta;
        Ok(())
    }
}

fn merge_axis_clusters(ax: &mut AxisState, other: &mut AxisState, a: ClusterId, b: ClusterId) -> ClusterId {
    let ca = ax.clusters.remove(&a).expect("validated");
    let cb = ax.clusters.remove(&b).expect("validated");
    let c = ax.next_id;
    ax.next_id += 1;
    for &(j, _) in &ca.blocks {
        blocks_remove(&mut other.clusters.get_mut(&j).expect("partner").blocks, a);
    }
    for &(j, _) in &cb.blocks {
        blocks_remove(&mut other.clusters.get_mut(&j).expect("partner").blocks, b);
    }
    let blocks = merge_sorted_blocks(&ca.blocks, &cb.blocks);
    for &(j, v) in &blocks {
        // c exceeds every live id on this axis, so pushing keeps the
        // partner's block list sorted.
        other.clusters.get_mut(&j).expect("partner").blocks.push((c, v));
    }
    let mut members = Vec::with_capacity(ca.members.len() + cb.members.len());
    let (mut i, mut j) = (0, 0);
    while i < ca.members.len() && j < cb.members.len() {
        if ca.members[i] < cb.members[j] {
            members.push(ca.members[i]);
            i += 1;
        } else {
            members.push(cb.members[j]);
            j += 1;
        }
    }
    members.extend_from_slice(&ca.members[i..]);
    members.extend_from_slice(&cb.members[j..]);
    for &e in &members {
        ax.assignment[e as usize] = c;
    }
    ax.clusters.insert(
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

fn entity_blocks(view_row: &[(u32, u64)], other_assign: &[ClusterId]) -> Vec<(ClusterId, u64)> {
    let mut map = std::collections::BTreeMap::new();
    for &(j, v) in view_row {
        *map.entry(other_assign[j as usize]).or_insert(0u64) += v;
    }
    map.into_iter().collect()
}

fn validate_axis_cover(ax: &AxisState, n_entities: u32, actives: &[u32]) -> Result<()> {
    if ax.assignment.len() != n_entities as usize {
        return Err(Error::PartitionMismatch(format!(
            "partition indexes {} entities, corpus has {n_entities}",
            ax.assignment.len()
        )));
    }
    let mut members: Vec<u32> = ax
        .clusters
        .values()
        .flat_map(|c| c.members.iter().copied())
        .collect();
    members.sort_unstable();
    if members != actives {
        return Err(Error::PartitionMismatch(
            "partition does not cover exactly the corpus's active entities".into(),
        ));
    }
    if ax.clusters.values().any(|c| c.members.is_empty()) {
        return Err(Error::EmptyCluster);
    }
    Ok(())
}

/// Exact spatial cost of a model against a corpus (from-scratch, validating).
pub fn spatial_cost(model: &SpatialModel, corpus: &EventCorpus) -> Result<f64> {
    model.evaluate(corpus)
}

/// The (prior, likelihood) blocks of the spatial cost.
pub fn spatial_cost_parts(model: &SpatialModel, corpus: &EventCorpus) -> Result<(f64, f64)> {
    model.evaluate_parts(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus_from(records: &[(&str, &str, u64)]) -> EventCorpus {
        let mut b = CorpusBuilder::new();
        for &(s, d, c) in records {
            b.add(s, Some(d), None, c).unwrap();
        }
        b.build().unwrap()
    }

    fn random_corpus(rng: &mut ChaCha8Rng, n_s: u32, n_c: u32, cells: usize) -> EventCorpus {
        let mut b = CorpusBuilder::new();
        // Touch every entity once so the active sets are exactly 0..n.
        for i in 0..n_s {
            let j = rng.gen_range(0..n_c);
            b.add(&format!("s{i}"), Some(&format!("d{j}")), None, 1 + rng.gen_range(0..4))
                .unwrap();
        }
        for j in 0..n_c {
            let i = rng.gen_range(0..n_s);
            b.add(&format!("s{i}"), Some(&format!("d{j}")), None, 1 + rng.gen_range(0..4))
                .unwrap();
        }
        for _ in 0..cells {
            let i = rng.gen_range(0..n_s);
            let j = rng.gen_range(0..n_c);
            b.add(&format!("s{i}"), Some(&format!("d{j}")), None, 1 + rng.gen_range(0..6))
                .unwrap();
        }
        b.build().unwrap()
    }

    fn random_partition(rng: &mut ChaCha8Rng, entities: &[u32], max_k: usize) -> Vec<Vec<u32>> {
        let k = rng.gen_range(1..=max_k.min(entities.len()));
        let mut groups: Vec<Vec<u32>> = vec![Vec::new(); k];
        for (idx, &e) in entities.iter().enumerate() {
            if idx < k {
                groups[idx].push(e);
            } else {
                groups[rng.gen_range(0..k)].push(e);
            }
        }
        groups
    }

    #[test]
    fn single_pair_corpus_costs_zero_for_any_mass() {
        for m in [1u64, 7, 100] {
            let corpus = corpus_from(&[("s1", "d1", m)]);
            let model = SpatialModel::null(&corpus).unwrap();
            assert_eq!(model.cost(), 0.0, "m={m}");
        }
    }

    #[test]
    fn two_source_null_model_is_ln_12() {
        let corpus = corpus_from(&[("s1", "d1", 1), ("s2", "d1", 1)]);
        let model = SpatialModel::null(&corpus).unwrap();
        assert!((model.cost() - 12f64.ln()).abs() < 1e-9, "{}", model.cost());
    }

    #[test]
    fn likelihood_part_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let corpus = random_corpus(&mut rng, 4, 3, 10);
            let src = random_partition(&mut rng, corpus.active_sources(), 3);
            let dst = random_partition(&mut rng, corpus.active_destinations(), 3);
            let model = SpatialModel::from_partitions(&corpus, &src, &dst).unwrap();
            let (_, like) = spatial_cost_parts(&model, &corpus).unwrap();
            assert!(like >= -1e-12, "likelihood {like} < 0");
        }
    }

    #[test]
    fn cost_is_invariant_under_cluster_relabeling() {
        let corpus = corpus_from(&[
            ("a", "x", 3),
            ("a", "y", 1),
            ("b", "x", 2),
            ("c", "y", 4),
            ("c", "x", 1),
        ]);
        let m1 = SpatialModel::from_partitions(&corpus, &[vec![0, 1], vec![2]], &[vec![0], vec![1]])
            .unwrap();
        // Same partition, groups given in a different order.
        let m2 = SpatialModel::from_partitions(&corpus, &[vec![2], vec![1, 0]], &[vec![1], vec![0]])
            .unwrap();
        assert_eq!(m1.cost(), m2.cost(), "bit-identical canonical evaluation");
    }

    #[test]
    fn merge_delta_is_symmetric_and_matches_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..30 {
            let corpus = random_corpus(&mut rng, 5, 4, 12);
            let src = random_partition(&mut rng, corpus.active_sources(), 4);
            let dst = random_partition(&mut rng, corpus.active_destinations(), 3);
            let model = SpatialModel::from_partitions(&corpus, &src, &dst).unwrap();
            for axis in [Axis::Sources, Axis::Destinations] {
                let ids = model.cluster_ids(axis);
                if ids.len() < 2 {
                    continue;
                }
                let (a, b) = (ids[0], ids[ids.len() - 1]);
                let d1 = model.merge_delta(axis, a, b).unwrap();
                let d2 = model.merge_delta(axis, b, a).unwrap();
                assert_eq!(d1, d2, "merge delta symmetric");
                let mut merged = model.clone();
                merged.apply_merge(axis, a, b).unwrap();
                let recomputed = merged.evaluate(&corpus).unwrap() - model.evaluate(&corpus).unwrap();
                assert!(
                    (d1 - recomputed).abs() < 1e-6,
                    "trial {trial} axis {axis:?}: delta {d1} vs recomputed {recomputed}"
                );
                assert!(
                    (merged.cost() - merged.evaluate(&corpus).unwrap()).abs() < 1e-6,
                    "cached cost tracks recompute"
                );
            }
        }
    }

    #[test]
    fn move_delta_matches_recompute_and_identity_move_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let corpus = random_corpus(&mut rng, 5, 4, 15);
            let src = random_partition(&mut rng, corpus.active_sources(), 3);
            let dst = random_partition(&mut rng, corpus.active_destinations(), 3);
            let model = SpatialModel::from_partitions(&corpus, &src, &dst).unwrap();
            for axis in [Axis::Sources, Axis::Destinations] {
                let ids = model.cluster_ids(axis);
                let actives = match axis {
                    Axis::Sources => corpus.active_sources(),
                    _ => corpus.active_destinations(),
                };
                let e = actives[rng.gen_range(0..actives.len())];
                let from = model.assignment_of(axis, e).unwrap().unwrap();
                assert_eq!(model.move_delta(&corpus, axis, e, from).unwrap(), 0.0);
                let target = ids[rng.gen_range(0..ids.len())];
                match model.move_delta(&corpus, axis, e, target) {
                    Ok(delta) => {
                        let mut moved = model.clone();
                        moved.apply_move(&corpus, axis, e, target).unwrap();
                        let recomputed =
                            moved.evaluate(&corpus).unwrap() - model.evaluate(&corpus).unwrap();
                        assert!(
                            (delta - recomputed).abs() < 1e-6,
                            "move delta {delta} vs recomputed {recomputed}"
                        );
                    }
                    Err(Error::MoveWouldEmptyCluster(c)) => {
                        assert_eq!(c, from);
                        assert_eq!(model.cluster_size(axis, from).unwrap(), 1);
                        assert_ne!(target, from);
                    }
                    Err(e) => panic!("unexpected error {e}"),
                }
            }
        }
    }

    #[test]
    fn deltas_compose_along_merge_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let corpus = random_corpus(&mut rng, 6, 5, 20);
        let mut model = SpatialModel::finest(&corpus).unwrap();
        let initial = model.evaluate(&corpus).unwrap();
        let mut summed = 0.0;
        let mut steps = 0;
        while model.k_sources() > 1 || model.k_destinations() > 1 {
            let axis = if model.k_sources() > 1 {
                Axis::Sources
            } else {
                Axis::Destinations
            };
            let ids = model.cluster_ids(axis);
            let delta = model.merge_delta(axis, ids[0], ids[1]).unwrap();
            model.apply_merge(axis, ids[0], ids[1]).unwrap();
            summed += delta;
            steps += 1;
        }
        let final_cost = model.evaluate(&corpus).unwrap();
        assert!(
            ((final_cost - initial) - summed).abs() < steps as f64 * 1e-6,
            "chain of {steps} deltas drifted: {} vs {}",
            final_cost - initial,
            summed
        );
    }

    #[test]
    fn merging_identical_rows_is_favorable_at_finest() {
        // Two sources with identical destination rows in a planted corpus.
        let corpus = corpus_from(&[
            ("s1", "d1", 25),
            ("s1", "d2", 25),
            ("s2", "d1", 25),
            ("s2", "d2", 25),
            ("s3", "d3", 25),
            ("s3", "d4", 25),
            ("s4", "d3", 25),
            ("s4", "d4", 25),
        ]);
        let model = SpatialModel::finest(&corpus).unwrap();
        let s1 = corpus.source_index("s1").unwrap();
        let s2 = corpus.source_index("s2").unwrap();
        let a = model.assignment_of(Axis::Sources, s1).unwrap().unwrap();
        let b = model.assignment_of(Axis::Sources, s2).unwrap().unwrap();
        assert!(model.merge_delta(Axis::Sources, a, b).unwrap() < 0.0);
    }

    #[test]
    fn partition_mismatch_and_empty_cluster_error() {
        let corpus = corpus_from(&[("a", "x", 1), ("b", "y", 1)]);
        let err = SpatialModel::from_partitions(&corpus, &[vec![0]], &[vec![0], vec![1]]).unwrap_err();
        assert!(matches!(err, Error::PartitionMismatch(_)));
        let err =
            SpatialModel::from_partitions(&corpus, &[vec![0, 1], vec![]], &[vec![0, 1]]).unwrap_err();
        assert!(matches!(err, Error::EmptyCluster));
    }

    #[test]
    fn merge_with_itself_errors() {
        let corpus = corpus_from(&[("a", "x", 1), ("b", "y", 1)]);
        let model = SpatialModel::finest(&corpus).unwrap();
        let ids = model.cluster_ids(Axis::Sources);
        assert!(matches!(
            model.merge_delta(Axis::Sources, ids[0], ids[0]),
            Err(Error::SameCluster(_))
        ));
    }
}
