//! Seeded planted-structure corpus generators for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusBuilder, EventCorpus, TimeValue};
use crate::error::{Error, Result};

/// Planted spatial block structure: sources and destinations are split into
/// contiguous equal blocks, and each source block sends its calls to one
/// destination block (modulo a uniform noise fraction).
#[derive(Debug, Clone)]
pub struct SpatialSynthConfig {
    pub sources: u32,
    pub destinations: u32,
    pub source_blocks: u32,
    pub dest_blocks: u32,
    pub calls: u64,
    /// Fraction of calls drawn uniformly at random instead of block-wise.
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SpatialSynth {
    pub corpus: EventCorpus,
    /// Planted source clusters as corpus entity indices (active entities only).
    pub planted_sources: Vec<Vec<u32>>,
    pub planted_destinations: Vec<Vec<u32>>,
}

fn block_of(i: u32, n: u32, blocks: u32) -> u32 {
    (i as u64 * blocks as u64 / n as u64) as u32
}

fn block_range(b: u32, n: u32, blocks: u32) -> (u32, u32) {
    let first = (b as u64 * n as u64 / blocks as u64) as u32;
    let last = ((b as u64 + 1) * n as u64 / blocks as u64) as u32;
    (first, last)
}

pub fn synth_spatial(cfg: &SpatialSynthConfig) -> Result<SpatialSynth> {
    if cfg.sources == 0 || cfg.destinations == 0 || cfg.calls == 0 {
        return Err(Error::InvalidInput("sources, destinations and calls must be positive".into()));
    }
    if cfg.source_blocks == 0 || cfg.source_blocks > cfg.sources || cfg.dest_blocks == 0 || cfg.dest_blocks > cfg.destinations {
        return Err(Error::InvalidInput("block counts must be in 1..=entity counts".into()));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::InvalidInput("noise must be within [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = (cfg.sources.max(cfg.destinations) as f64).log10().ceil() as usize + 1;
    let mut builder = CorpusBuilder::new();
    for _ in 0..cfg.calls {
        let (i, j) = if rng.gen_bool(cfg.noise) {
            (rng.gen_range(0..cfg.sources), rng.gen_range(0..cfg.destinations))
        } else {
            let i = rng.gen_range(0..cfg.sources);
            let h = block_of(i, cfg.sources, cfg.source_blocks) % cfg.dest_blocks;
            let (first, last) = block_range(h, cfg.destinations, cfg.dest_blocks);
            (i, rng.gen_range(first..last))
        };
        builder.add(&format!("s{i:0width$}"), Some(&format!("d{j:0width$}")), None, 1)?;
    }
    let corpus = builder.build()?;
    let planted_sources = planted_groups(cfg.sources, cfg.source_blocks, |i| {
        corpus.source_index(&format!("s{i:0width$}"))
    });
    let planted_destinations = planted_groups(cfg.destinations, cfg.dest_blocks, |j| {
        corpus.dest_index(&format!("d{j:0width$}"))
    });
    Ok(SpatialSynth {
        corpus,
        planted_sources,
        planted_destinations,
    })
}

fn planted_groups(n: u32, blocks: u32, lookup: impl Fn(u32) -> Option<u32>) -> Vec<Vec<u32>> {
    let mut groups = vec![Vec::new(); blocks as usize];
    for i in 0..n {
        if let Some(idx) = lookup(i) {
            groups[block_of(i, n, blocks) as usize].push(idx);
        }
    }
    groups.retain(|g| !g.is_empty());
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// Planted temporal structure: days are split into contiguous segments and
/// each segment's traffic originates from one source block.
#[derive(Debug, Clone)]
pub struct TemporalSynthConfig {
    pub sources: u32,
    pub days: u32,
    pub source_blocks: u32,
    pub segments: u32,
    pub calls: u64,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TemporalSynth {
    pub corpus: EventCorpus,
    pub planted_sources: Vec<Vec<u32>>,
    /// Planted segment boundaries as inclusive day ranges.
    pub planted_day_ranges: Vec<(i64, i64)>,
}

pub fn synth_temporal(cfg: &TemporalSynthConfig) -> Result<TemporalSynth> {
    if cfg.sources == 0 || cfg.days == 0 || cfg.calls == 0 {
        return Err(Error::InvalidInput("sources, days and calls must be positive".into()));
    }
    if cfg.source_blocks == 0 || cfg.source_blocks > cfg.sources || cfg.segments == 0 || cfg.segments > cfg.days {
        return Err(Error::InvalidInput("block counts must be in 1..=axis sizes".into()));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::InvalidInput("noise must be within [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = (cfg.sources as f64).log10().ceil() as usize + 1;
    let mut builder = CorpusBuilder::new();
    for _ in 0..cfg.calls {
        let (i, d) = if rng.gen_bool(cfg.noise) {
            (rng.gen_range(0..cfg.sources), rng.gen_range(0..cfg.days))
        } else {
            let d = rng.gen_range(0..cfg.days);
            let s = block_of(d, cfg.days, cfg.segments);
            let g = s % cfg.source_blocks;
            let (first, last) = block_range(g, cfg.sources, cfg.source_blocks);
            (rng.gen_range(first..last), d)
        };
        builder.add(&format!("s{i:0width$}"), None, Some(TimeValue::Day(d as i64)), 1)?;
    }
    let corpus = builder.build()?;
    let planted_sources = planted_groups(cfg.sources, cfg.source_blocks, |i| {
        corpus.source_index(&format!("s{i:0width$}"))
    });
    let planted_day_ranges = (0..cfg.segments)
        .map(|s| {
            let (first, last) = block_range(s, cfg.days, cfg.segments);
            (first as i64, last as i64 - 1)
        })
        .collect();
    Ok(TemporalSynth {
        corpus,
        planted_sources,
        planted_day_ranges,
    })
}
