//! Test-side oracle: an independent evaluation of the model costs from raw
//! count triples, plus partition/segmentation enumeration and scoring
//! helpers. Nothing here calls into the library's cost or combinatorics
//! paths, so oracle values check the implementation rather than echo it.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// ln(n!) by direct summation.
pub fn ln_fact(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// ln C(n, k).
pub fn ln_binom(n: u64, k: u64) -> f64 {
    assert!(k <= n);
    ln_fact(n) - ln_fact(k) - ln_fact(n - k)
}

/// Number of partitions of n elements into at most k non-empty subsets,
/// via an exact Stirling triangle in u128.
pub fn partition_count(n: u64, k: u64) -> u128 {
    let n = n as usize;
    let k = k as usize;
    let mut row = vec![0u128; k + 1];
    row[1.min(k)] = if k >= 1 { 1 } else { 0 };
    for _ in 2..=n.max(1) {
        for j in (1..=k).rev() {
            row[j] = row[j] * j as u128 + row[j - 1];
        }
    }
    row[1..=k.min(n)].iter().sum()
}

/// ln B(n, k).
pub fn ln_b(n: u64, k: u64) -> f64 {
    (partition_count(n, k) as f64).ln()
}

/// Direct evaluation of the spatial criterion from (source, destination,
/// count) triples over dense entity indices 0..n_s and 0..n_c; every
/// entity must have at least one call.
pub fn spatial_cost(
    triples: &[(usize, usize, u64)],
    n_s: usize,
    n_c: usize,
    src_assign: &[usize],
    dst_assign: &[usize],
) -> f64 {
    let k_s = src_assign.iter().max().unwrap() + 1;
    let k_d = dst_assign.iter().max().unwrap() + 1;
    let mut m = 0u64;
    let mut src_marg = vec![0u64; n_s];
    let mut dst_marg = vec![0u64; n_c];
    let mut blocks: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for &(i, j, c) in triples {
        m += c;
        src_marg[i] += c;
        dst_marg[j] += c;
        *blocks.entry((src_assign[i], dst_assign[j])).or_insert(0) += c;
    }
    let mut cluster_sizes_s = vec![0u64; k_s];
    let mut cluster_counts_s = vec![0u64; k_s];
    for i in 0..n_s {
        cluster_sizes_s[src_assign[i]] += 1;
        cluster_counts_s[src_assign[i]] += src_marg[i];
    }
    let mut cluster_sizes_d = vec![0u64; k_d];
    let mut cluster_counts_d = vec![0u64; k_d];
    for j in 0..n_c {
        cluster_sizes_d[dst_assign[j]] += 1;
        cluster_counts_d[dst_assign[j]] += dst_marg[j];
    }
    let k = (k_s * k_d) as u64;

    let mut cost = (n_s as f64).ln() + (n_c as f64).ln();
    cost += ln_b(n_s as u64, k_s as u64) + ln_b(n_c as u64, k_d as u64);
    cost += ln_binom(m + k - 1, k - 1);
    for g in 0..k_s {
        cost += ln_binom(cluster_counts_s[g] + cluster_sizes_s[g] - 1, cluster_sizes_s[g] - 1);
    }
    for g in 0..k_d {
        cost += ln_binom(cluster_counts_d[g] + cluster_sizes_d[g] - 1, cluster_sizes_d[g] - 1);
    }
    cost += ln_fact(m);
    for &v in blocks.values() {
        cost -= ln_fact(v);
    }
    for g in 0..k_d {
        cost += ln_fact(cluster_counts_d[g]);
    }
    for j in 0..n_c {
        cost -= ln_fact(dst_marg[j]);
    }
    for g in 0..k_s {
        cost += ln_fact(cluster_counts_s[g]);
    }
    for i in 0..n_s {
        cost -= ln_fact(src_marg[i]);
    }
    cost
}

/// Direct evaluation of the temporal criterion from (source, timestamp
/// position, count) triples.
pub fn temporal_cost(
    triples: &[(usize, usize, u64)],
    n_s: usize,
    n_t: usize,
    src_assign: &[usize],
    seg_of_pos: &[usize],
) -> f64 {
    assert_eq!(seg_of_pos.len(), n_t);
    let k_s = src_assign.iter().max().unwrap() + 1;
    let k_t = seg_of_pos.iter().max().unwrap() + 1;
    let mut m = 0u64;
    let mut src_marg = vec![0u64; n_s];
    let mut seg_counts = vec![0u64; k_t];
    let mut blocks: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for &(i, t, c) in triples {
        m += c;
        src_marg[i] += c;
        seg_counts[seg_of_pos[t]] += c;
        *blocks.entry((src_assign[i], seg_of_pos[t])).or_insert(0) += c;
    }
    let mut cluster_sizes = vec![0u64; k_s];
    let mut cluster_counts = vec![0u64; k_s];
    for i in 0..n_s {
        cluster_sizes[src_assign[i]] += 1;
        cluster_counts[src_assign[i]] += src_marg[i];
    }
    let k = (k_s * k_t) as u64;

    let mut cost = (n_s as f64).ln() + (m as f64).ln();
    cost += ln_b(n_s as u64, k_s as u64);
    cost += ln_binom(m + k - 1, k - 1);
    for g in 0..k_s {
        cost += ln_binom(cluster_counts[g] + cluster_sizes[g] - 1, cluster_sizes[g] - 1);
    }
    cost += ln_fact(m);
    for &v in blocks.values() {
        cost -= ln_fact(v);
    }
    for &v in &seg_counts {
        cost += ln_fact(v);
    }
    for g in 0..k_s {
        cost += ln_fact(cluster_counts[g]);
    }
    for i in 0..n_s {
        cost -= ln_fact(src_marg[i]);
    }
    cost
}

/// All set partitions of 0..n as assignment vectors (restricted growth
/// strings), lexicographic.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
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
    let mut rgs = vec![0];
    rec(&mut rgs, 0, n, &mut out);
    out
}

/// All contiguous segmentations of n_t positions as seg-of-position
/// vectors.
pub fn segmentations(n_t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << (n_t - 1)) {
        let mut seg = Vec::with_capacity(n_t);
        let mut current = 0usize;
        for p in 0..n_t {
            seg.push(current);
            if p + 1 < n_t && mask & (1 << p) != 0 {
                current += 1;
            }
        }
        out.push(seg);
    }
    out
}

/// Exhaustive minimum of the spatial oracle cost over all co-partitions.
pub fn spatial_exhaustive_min(
    triples: &[(usize, usize, u64)],
    n_s: usize,
    n_c: usize,
) -> (f64, Vec<usize>, Vec<usize>) {
    let mut best = f64::INFINITY;
    let mut best_src = Vec::new();
    let mut best_dst = Vec::new();
    for src in partitions(n_s) {
        for dst in partitions(n_c) {
            let cost = spatial_cost(triples, n_s, n_c, &src, &dst);
            if cost < best {
                best = cost;
                best_src = src.clone();
                best_dst = dst.clone();
            }
        }
    }
    (best, best_src, best_dst)
}

/// Exhaustive minimum of the temporal oracle cost over all source
/// partitions x contiguous segmentations.
pub fn temporal_exhaustive_min(
    triples: &[(usize, usize, u64)],
    n_s: usize,
    n_t: usize,
) -> (f64, Vec<usize>, Vec<usize>) {
    let mut best = f64::INFINITY;
    let mut best_src = Vec::new();
    let mut best_seg = Vec::new();
    for src in partitions(n_s) {
        for seg in segmentations(n_t) {
            let cost = temporal_cost(triples, n_s, n_t, &src, &seg);
            if cost < best {
                best = cost;
                best_src = src.clone();
                best_seg = seg.clone();
            }
        }
    }
    (best, best_src, best_seg)
}

/// Adjusted Rand index between two assignment vectors.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for i in 0..n {
        table[a[i]][b[i]] += 1;
    }
    let choose2 = |x: u64| -> f64 { (x * x.saturating_sub(1)) as f64 / 2.0 };
    let sum_ij: f64 = table.iter().flatten().map(|&x| choose2(x)).sum();
    let sum_a: f64 = (0..ka)
        .map(|i| choose2(table[i].iter().sum::<u64>()))
        .sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2((0..ka).map(|i| table[i][j]).sum::<u64>()))
        .sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = (sum_a + sum_b) / 2.0;
    if (max_index - expected).abs() < 1e-12 {
        // Both partitions trivial; identical iff the tables agree.
        return if sum_ij == max_index { 1.0 } else { 0.0 };
    }
    (sum_ij - expected) / (max_index - expected)
}

/// Extract dense (source, destination, count) triples and the active-index
/// mapping from a corpus's spatial view. Entity indices are remapped to
/// 0..n_active in active order.
pub fn spatial_triples(corpus: &cocluster::EventCorpus) -> (Vec<(usize, usize, u64)>, usize, usize) {
    let view = corpus.spatial_view().unwrap();
    let src_pos: std::collections::HashMap<u32, usize> = corpus
        .active_sources()
        .iter()
        .enumerate()
        .map(|(p, &e)| (e, p))
        .collect();
    let dst_pos: std::collections::HashMap<u32, usize> = corpus
        .active_destinations()
        .iter()
        .enumerate()
        .map(|(p, &e)| (e, p))
        .collect();
    let mut triples = Vec::new();
    for (i, j, c) in view.iter() {
        triples.push((src_pos[&i], dst_pos[&j], c));
    }
    (triples, src_pos.len(), dst_pos.len())
}

/// Same for the temporal view: (source, timestamp position, count).
pub fn temporal_triples(corpus: &cocluster::EventCorpus) -> (Vec<(usize, usize, u64)>, usize, usize) {
    let view = corpus.temporal_view().unwrap();
    let src_pos: std::collections::HashMap<u32, usize> = corpus
        .active_sources()
        .iter()
        .enumerate()
        .map(|(p, &e)| (e, p))
        .collect();
    let mut triples = Vec::new();
    for (i, t, c) in view.iter() {
        triples.push((src_pos[&i], t as usize, c));
    }
    (triples, src_pos.len(), corpus.n_times() as usize)
}

/// Model source/dest groups as an assignment vector over active entities
/// (positions in active order).
pub fn groups_to_assignment(groups: &[Vec<u32>], actives: &[u32]) -> Vec<usize> {
    let pos: std::collections::HashMap<u32, usize> =
        actives.iter().enumerate().map(|(p, &e)| (e, p)).collect();
    let mut assign = vec![usize::MAX; actives.len()];
    for (g, members) in groups.iter().enumerate() {
        for &e in members {
            assign[pos[&e]] = g;
        }
    }
    assert!(assign.iter().all(|&x| x != usize::MAX));
    assign
}

/// Peak resident set size of this process in kilobytes. Prefers the
/// VmHWM procfs field, falling back to getrusage (ru_maxrss is in kB on
/// Linux) where the sandboxed procfs omits it.
pub fn peak_rss_kb() -> Option<u64> {
    if let Ok(status) = std::fs::read_to_string("/proc/self/status") {
        for line in status.lines() {
            if let Some(rest) = line.strip_prefix("VmHWM:") {
                if let Ok(kb) = rest.trim().trim_end_matches("kB").trim().parse() {
                    return Some(kb);
                }
            }
        }
    }
    unsafe {
        let mut usage: libc::rusage = std::mem::zeroed();
        if libc::getrusage(libc::RUSAGE_SELF, &mut usage) == 0 {
            return Some(usage.ru_maxrss as u64);
        }
    }
    None
}

/// Seeded random spatial corpus over exactly n_s x n_c entities, every
/// entity active.
pub fn random_spatial_corpus(
    seed: u64,
    n_s: u32,
    n_c: u32,
    extra_cells: usize,
    max_count: u64,
) -> cocluster::EventCorpus {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut b = cocluster::CorpusBuilder::new();
    for i in 0..n_s {
        let j = rng.gen_range(0..n_c);
        b.add(&format!("s{i}"), Some(&format!("d{j}")), None, 1 + rng.gen_range(0..max_count))
            .unwrap();
    }
    for j in 0..n_c {
        let i = rng.gen_range(0..n_s);
        b.add(&format!("s{i}"), Some(&format!("d{j}")), None, 1 + rng.gen_range(0..max_count))
            .unwrap();
    }
    for _ in 0..extra_cells {
        let i = rng.gen_range(0..n_s);
        let j = rng.gen_range(0..n_c);
        b.add(&format!("s{i}"), Some(&format!("d{j}")), None, 1 + rng.gen_range(0..max_count))
            .unwrap();
    }
    b.build().unwrap()
}

/// Uniform random 10x10 corpus with 200 calls: the null-on-noise suite.
pub fn random_noise_corpus(seed: u64) -> cocluster::EventCorpus {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut b = cocluster::CorpusBuilder::new();
    for _ in 0..200 {
        let i = rng.gen_range(0..10);
        let j = rng.gen_range(0..10);
        b.add(&format!("s{i}"), Some(&format!("d{j}")), None, 1).unwrap();
    }
    b.build().unwrap()
}

/// Seeded random temporal corpus covering every source and day at least
/// once.
pub fn random_temporal_corpus(
    seed: u64,
    n_s: u32,
    n_days: i64,
    extra_cells: usize,
    max_count: u64,
) -> cocluster::EventCorpus {
    use cocluster::corpus::TimeValue;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut b = cocluster::CorpusBuilder::new();
    for i in 0..n_s {
        b.add(
            &format!("s{i}"),
            None,
            Some(TimeValue::Day(rng.gen_range(0..n_days))),
            1 + rng.gen_range(0..max_count),
        )
        .unwrap();
    }
    for d in 0..n_days {
        b.add(
            &format!("s{}", rng.gen_range(0..n_s)),
            None,
            Some(TimeValue::Day(d)),
            1 + rng.gen_range(0..max_count),
        )
        .unwrap();
    }
    for _ in 0..extra_cells {
        b.add(
            &format!("s{}", rng.gen_range(0..n_s)),
            None,
            Some(TimeValue::Day(rng.gen_range(0..n_days))),
            1 + rng.gen_range(0..max_count),
        )
        .unwrap();
    }
    b.build().unwrap()
}
