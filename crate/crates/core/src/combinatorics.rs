//! Counting hierarchical backup paths: ordered sequences of `n` jumps, each
//! of length `1..=h`, that cover a total depth `t`.

use num_bigint::BigUint;
use thiserror::Error;

/// Largest enumeration `enumerate_paths` will materialise.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum CombinatoricsError {
    #[error("{count} paths exceed the enumeration limit of {ENUMERATION_LIMIT}")]
    TooMany { count: BigUint },
    #[error("h and n must be at least 1")]
    Degenerate,
}

/// `C(a, b)`, zero when `a < 0` or `a < b`.
fn binomial(a: i64, b: i64) -> BigUint {
    if a < 0 || b < 0 || a < b {
        return BigUint::from(0u32);
    }
    let b = b.min(a - b);
    let mut acc = BigUint::from(1u32);
    for i in 0..b {
        acc *= BigUint::from((a - i) as u64);
        acc /= BigUint::from((i + 1) as u64);
    }
    acc
}

/// Number of paths of `n` jumps in `1..=h` summing to `t`, by inclusion-exclusion.
pub fn alpha(t: u64, h: u64, n: u64) -> BigUint {
    assert!(h >= 1 && n >= 1, "h and n must be at least 1");
    let (t, h, n) = (t as i64, h as i64, n as i64);
    let mut plus = BigUint::from(0u32);
    let mut minus = BigUint::from(0u32);
    for j in 0..=n {
        let term = binomial(n, j) * binomial(t - h * j - 1, n - 1);
        if j % 2 == 0 {
            plus += term;
        } else {
            minus += term;
        }
    }
    plus - minus
}

/// Sum of `alpha` over every reachable depth; equals `h^n`.
pub fn total_paths(h: u64, n: u64) -> BigUint {
    (n..=n * h).map(|d| alpha(d, h, n)).sum()
}

/// Number of update targets touched by the strided scheme.
pub fn sparsified_path_count(h: u64, n: u64) -> u64 {
    n * h
}

/// Path count by dynamic programming; independent of the closed form.
fn count_by_dp(t: u64, h: u64, n: u64) -> BigUint {
    let t = t as usize;
    let mut ways = vec![BigUint::from(0u32); t + 1];
    ways[0] = BigUint::from(1u32);
    for _ in 0..n {
        let mut next = vec![BigUint::from(0u32); t + 1];
        for (d, w) in ways.iter().enumerate() {
            if *w == BigUint::from(0u32) {
                continue;
            }
            for step in 1..=h as usize {
                if d + step <= t {
                    next[d + step] += w;
                }
            }
        }
        ways = next;
    }
    ways.swap_remove(t)
}

/// Every ordered jump sequence `(d_1, …, d_n)` with `d_i ∈ [1, h]` and `Σ d_i = t`,
/// in lexicographic order.
pub fn enumerate_paths(t: u64, h: u64, n: u64) -> Result<Vec<Vec<u64>>, CombinatoricsError> {
    if h == 0 || n == 0 {
        return Err(CombinatoricsError::Degenerate);
    }
    if t < n || t > n * h {
        return Ok(Vec::new());
    }
    let count = count_by_dp(t, h, n);
    if count > BigUint::from(ENUMERATION_LIMIT) {
        return Err(CombinatoricsError::TooMany { count });
    }
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(n as usize);
    extend(t, h, n, &mut prefix, &mut out);
    Ok(out)
}

fn extend(left: u64, h: u64, jumps: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
    if jumps == 0 {
        if left == 0 {
            out.push(prefix.clone());
        }
        return;
    }
    // Remaining jumps must still fit: jumps-1 ≤ left-d ≤ (jumps-1)·h.
    for d in 1..=h.min(left) {
        let rest = left - d;
        if rest < jumps - 1 || rest > (jumps - 1) * h {
            continue;
        }
        prefix.push(d);
        extend(rest, h, jumps - 1, prefix, out);
        prefix.pop();
    }
}
