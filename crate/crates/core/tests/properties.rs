//! Property tests for the structural invariants: ingestion marginals,
//! projection mass preservation, delta/recompute agreement and cost
//! relabeling invariance on randomized inputs.

mod common;

use cocluster::corpus::CorpusBuilder;
use cocluster::criterion::{Axis, SpatialModel};
use cocluster::hierarchy::informativity_rate;
use proptest::prelude::*;

fn record_strategy() -> impl Strategy<Value = Vec<(u8, u8, i8, u8)>> {
    prop::collection::vec((0u8..6, 0u8..6, 0i8..4, 1u8..5), 1..40)
}

fn build_corpus(records: &[(u8, u8, i8, u8)]) -> cocluster::EventCorpus {
    let mut b = CorpusBuilder::new();
    for &(s, d, t, c) in records {
        b.add(
            &format!("s{s}"),
            Some(&format!("d{d}")),
            Some(cocluster::corpus::TimeValue::Day(t as i64)),
            c as u64,
        )
        .unwrap();
    }
    b.build().unwrap()
}

proptest! {
    #[test]
    fn marginals_always_recount_from_cells(records in record_strategy()) {
        let corpus = build_corpus(&records);
        let mut total = 0u64;
        let mut src = vec![0u64; corpus.n_sources() as usize];
        let mut dst = vec![0u64; corpus.n_destinations() as usize];
        let mut tim = vec![0u64; corpus.n_times() as usize];
        for c in corpus.cells() {
            total += c.count;
            src[c.source as usize] += c.count;
            dst[c.dest as usize] += c.count;
            tim[c.time as usize] += c.count;
        }
        prop_assert_eq!(total, corpus.total());
        prop_assert_eq!(&src[..], corpus.source_marginals());
        prop_assert_eq!(&dst[..], corpus.dest_marginals());
        prop_assert_eq!(&tim[..], corpus.time_marginals());
    }

    #[test]
    fn projections_preserve_mass_and_kept_marginals(records in record_strategy()) {
        let corpus = build_corpus(&records);
        let spatial = corpus.project_spatial().unwrap();
        prop_assert_eq!(spatial.total(), corpus.total());
        prop_assert_eq!(spatial.source_marginals(), corpus.source_marginals());
        prop_assert_eq!(spatial.dest_marginals(), corpus.dest_marginals());
        let temporal = corpus.project_temporal().unwrap();
        prop_assert_eq!(temporal.total(), corpus.total());
        prop_assert_eq!(temporal.source_marginals(), corpus.source_marginals());
        prop_assert_eq!(temporal.time_marginals(), corpus.time_marginals());
    }

    #[test]
    fn export_reingest_preserves_digest(records in record_strategy()) {
        let corpus = build_corpus(&records);
        let mut buf = Vec::new();
        corpus.export_csv(&mut buf).unwrap();
        let schema = cocluster::CsvSchema::new("source")
            .destination("destination")
            .timestamp("timestamp")
            .count("count");
        let again = cocluster::corpus::ingest_csv_reader(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(corpus.digest(), again.digest());
    }

    #[test]
    fn merge_deltas_match_recomputation(records in record_strategy(), pick in 0usize..1000) {
        let corpus = build_corpus(&records);
        let model = SpatialModel::finest(&corpus).unwrap();
        for axis in [Axis::Sources, Axis::Destinations] {
            let ids = model.cluster_ids(axis);
            if ids.len() < 2 {
                continue;
            }
            let a = ids[pick % ids.len()];
            let b = ids[(pick / 7 + 1) % ids.len()];
            if a == b {
                continue;
            }
            let delta = model.merge_delta(axis, a, b).unwrap();
            let mut merged = model.clone();
            merged.apply_merge(axis, a, b).unwrap();
            let recomputed = merged.evaluate(&corpus).unwrap() - model.evaluate(&corpus).unwrap();
            prop_assert!((delta - recomputed).abs() < 1e-6);
        }
    }

    #[test]
    fn cost_is_invariant_under_group_order(records in record_strategy()) {
        let corpus = build_corpus(&records);
        let actives = corpus.active_sources().to_vec();
        if actives.len() < 2 {
            return Ok(());
        }
        let (first, rest) = actives.split_at(1);
        let groups_fwd = vec![first.to_vec(), rest.to_vec()];
        let groups_rev = vec![rest.to_vec(), first.to_vec()];
        let dst: Vec<Vec<u32>> = vec![corpus.active_destinations().to_vec()];
        let m1 = SpatialModel::from_partitions(&corpus, &groups_fwd, &dst).unwrap();
        let m2 = SpatialModel::from_partitions(&corpus, &groups_rev, &dst).unwrap();
        prop_assert_eq!(m1.cost().to_bits(), m2.cost().to_bits());
    }

    #[test]
    fn informativity_rate_is_bounded_above_by_one(model_cost in -50.0f64..150.0) {
        let tau = informativity_rate(model_cost.max(60.0), 100.0, 60.0);
        prop_assert!(tau <= 1.0);
    }
}
