//! Log-scale combinatorial terms: ln n!, ln C(n,k) and ln B(n,k).
//!
//! B(n,k) is the number of partitions of an n-element set into at most k
//! non-empty subsets, i.e. the cumulative sum of Stirling numbers of the
//! second kind. (Partitions into "k potentially empty subsets" count the
//! same objects.) All values are natural-log scale; base conversion, if
//! any, happens at reporting time.

use std::sync::OnceLock;

use num_bigint::BigUint;

use crate::error::{Error, Result};

/// Natural-log-scale quantity.
pub type LogValue = f64;

const LN_FACT_TABLE_LEN: usize = 1 << 20;
/// Largest n whose factorial is computed with exact integer arithmetic
/// before taking the log.
const EXACT_FACTORIAL_LIMIT: usize = 64;
/// Largest n for which ln B(n,k) uses exact big-integer Stirling sums.
const EXACT_PARTITION_LIMIT: u64 = 200;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = vec![0.0f64; LN_FACT_TABLE_LEN];
        let mut fact = BigUint::from(1u32);
        for n in 1..=EXACT_FACTORIAL_LIMIT {
            fact *= n as u64;
            table[n] = ln_biguint(&fact);
        }
        // Continue with a compensated running sum of ln n. The compensation
        // keeps consecutive differences accurate across the whole table.
        let mut sum = table[EXACT_FACTORIAL_LIMIT];
        let mut comp = 0.0f64;
        for n in (EXACT_FACTORIAL_LIMIT + 1)..LN_FACT_TABLE_LEN {
            let term = (n as f64).ln();
            let t = sum + term;
            comp += if sum.abs() >= term.abs() {
                (sum - t) + term
            } else {
                (term - t) + sum
            };
            sum = t;
            table[n] = sum + comp;
        }
        table
    })
}

/// ln of an arbitrary-size non-negative integer, accurate to ~1 ulp.
fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 63 {
        let v: u64 = x.try_into().expect("fits u64");
        return (v as f64).ln();
    }
    // Take the top 53 bits as a mantissa; the discarded tail contributes a
    // relative error below 2^-53.
    let shift = bits - 53;
    let top: u64 = (x >> shift).try_into().expect("53 bits fit u64");
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

/// ln(n!). Exact-table driven for small n, gamma-function based beyond.
pub fn log_factorial(n: u64) -> LogValue {
    let table = ln_fact_table();
    if (n as usize) < table.len() {
        table[n as usize]
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

/// ln C(n,k). Errors when k > n.
pub fn log_binomial(n: u64, k: u64) -> Result<LogValue> {
    if k > n {
        return Err(Error::BinomialRange { n, k });
    }
    Ok(log_binomial_unchecked(n, k))
}

/// ln C(n,k) for pre-validated 0 <= k <= n.
#[inline]
pub(crate) fn log_binomial_unchecked(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    log_factorial(n) - log_factorial(k) - log_factorial(n - k)
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Cached row of ln B(n, k) values for a fixed n and all k in 1..=k_max.
///
/// Building a row costs O(n * min(k_max, n)); lookups are O(1). Fitting
/// builds one row per axis up front so incremental merge deltas stay cheap.
#[derive(Debug, Clone)]
pub struct LogBRow {
    n: u64,
    // values[k-1] = ln B(n, k) for k = 1..=len
    values: Vec<f64>,
}

impl LogBRow {
    pub fn new(n: u64, k_max: u64) -> Self {
        assert!(n >= 1 && k_max >= 1, "LogBRow requires n >= 1 and k_max >= 1");
        let k_eff = k_max.min(n);
        let values = if n <= EXACT_PARTITION_LIMIT {
            exact_log_b_row(n, k_eff)
        } else {
            float_log_b_row(n, k_eff)
        };
        LogBRow { n, values }
    }

    /// ln B(n, k). For k beyond the built range the row must have been
    /// built with k_max >= n, where B saturates at the Bell number.
    pub fn get(&self, k: u64) -> f64 {
        assert!(k >= 1, "k must be >= 1");
        let idx = (k.min(self.n) as usize) - 1;
        assert!(
            idx < self.values.len(),
            "LogBRow built for k <= {}, asked for {}",
            self.values.len(),
            k
        );
        self.values[idx]
    }

    pub fn n(&self) -> u64 {
        self.n
    }
}

// Exact Stirling triangle row via BigUint, then cumulative sums.
fn exact_log_b_row(n: u64, k_max: u64) -> Vec<f64> {
    let k = k_max as usize;
    // row[j] = S(r, j) for the current r, j = 0..=k
    let mut row: Vec<BigUint> = vec![BigUint::from(0u32); k + 1];
    if k >= 1 {
        row[1] = BigUint::from(1u32);
    }
    for _r in 2..=n {
        for j in (1..=k).rev() {
            let carried = std::mem::take(&mut row[j - 1]);
            let scaled = &row[j] * (j as u64);
            row[j] = scaled + &carried;
            row[j - 1] = carried;
        }
    }
    let mut out = Vec::with_capacity(k);
    let mut cum = BigUint::from(0u32);
    for j in 1..=k {
        cum += &row[j];
        out.push(ln_biguint(&cum));
    }
    out
}

// Log-space Stirling recurrence: ln S(r,j) = logaddexp(ln j + ln S(r-1,j),
// ln S(r-1,j-1)). All terms are positive, so there is no cancellation.
fn float_log_b_row(n: u64, k_max: u64) -> Vec<f64> {
    let k = k_max as usize;
    let ln_j: Vec<f64> = (0..=k).map(|j| (j as f64).ln()).collect();
    let mut row = vec![f64::NEG_INFINITY; k + 1];
    if k >= 1 {
        row[1] = 0.0;
    }
    for _r in 2..=n {
        for j in (1..=k).rev() {
            row[j] = log_add_exp(ln_j[j] + row[j], row[j - 1]);
        }
        row[0] = f64::NEG_INFINITY;
    }
    let mut out = Vec::with_capacity(k);
    let mut cum = f64::NEG_INFINITY;
    for j in 1..=k {
        cum = log_add_exp(cum, row[j]);
        out.push(cum);
    }
    out
}

/// ln B(n,k): partitions of n elements into at most k non-empty subsets.
///
/// Convenience entry point; builds a fresh row per call. Hot paths should
/// hold a [`LogBRow`] instead.
pub fn log_b(n: u64, k: u64) -> LogValue {
    assert!(n >= 1 && k >= 1, "log_b requires n >= 1 and k >= 1");
    LogBRow::new(n, k).get(k)
}

/// Compensated (Neumaier) accumulator for the canonicalized cost sums.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct StableSum {
    sum: f64,
    comp: f64,
}

impl StableSum {
    pub fn new() -> Self {
        StableSum::default()
    }

    #[inline]
    pub fn add(&mut self, term: f64) {
        let t = self.sum + term;
        self.comp += if self.sum.abs() >= term.abs() {
            (self.sum - t) + term
        } else {
            (term - t) + self.sum
        };
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
