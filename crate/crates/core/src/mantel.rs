//! Mantel permutation test for comparing two document similarity matrices
//! over the same fold.
//!
//! The statistic is the Spearman correlation of the off-diagonal entries
//! (diagonals are self-similarities and are excluded). The null shuffles
//! document identity: one matrix's rows and columns are permuted jointly
//! and the statistic recomputed. Joint permutation maps diagonal to
//! diagonal, so each replicate sees the same off-diagonal rank multiset;
//! the ranks are therefore computed once and each replicate only re-pairs
//! them, which keeps a replicate at O(n²).

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// Average-tie ranks (1-based). Equal values share the mean of the ranks
/// they occupy.
pub fn rank_average_ties(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("cannot rank NaN values".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ties; their 1-based ranks average.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let len = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / len;
    let mean_y = y.iter().sum::<f64>() / len;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mean_x) * (b - mean_y);
        var_x += (a - mean_x) * (a - mean_x);
        var_y += (b - mean_y) * (b - mean_y);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "an input is constant after ranking".into(),
        ));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Spearman correlation of two paired sequences.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "sequences have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 paired values, got {}",
            x.len()
        )));
    }
    pearson(&rank_average_ties(x)?, &rank_average_ties(y)?)
}

/// The off-diagonal entries of a row-major n×n matrix, in row order.
pub fn offdiag(matrix: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push(matrix[i * n + j]);
            }
        }
    }
    out
}

/// Spearman correlation of two matrices' off-diagonal entries.
pub fn spearman_offdiag(a: &[f64], b: &[f64], n: usize) -> Result<f64> {
    check_square(a, b, n)?;
    spearman(&offdiag(a, n), &offdiag(b, n))
}

fn check_square(a: &[f64], b: &[f64], n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 documents, got {n}"
        )));
    }
    if a.len() != n * n || b.len() != n * n {
        return Err(Error::Dimension(format!(
            "matrices have {} and {} entries for n={n}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Apply one permutation of document identity to a square matrix:
/// entry (i, j) of the result is `a[perm[i]][perm[j]]`.
pub fn permute_matrix(a: &[f64], n: usize, perm: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = a[perm[i] * n + perm[j]];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tail {
    #[serde(rename = "upper")]
    Upper,
    #[serde(rename = "two-sided")]
    TwoSided,
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tail::Upper => "upper",
            Tail::TwoSided => "two-sided",
        })
    }
}

impl FromStr for Tail {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Tail::Upper),
            "two-sided" => Ok(Tail::TwoSided),
            other => Err(Error::Config(format!(
                "unknown tail '{other}' (expected upper or two-sided)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MantelResult {
    pub rho: f64,
    pub p: f64,
    pub permutations: usize,
    pub tail: Tail,
    pub seed: u64,
    pub n: usize,
}

impl MantelResult {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("cannot serialize result: {e}")))?;
        fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&body).map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

/// Permutation test of association between two similarity matrices.
///
/// `p = (c + 1) / (permutations + 1)` where `c` counts replicates at least
/// as extreme as the observed statistic (`≥ rho` for the upper tail,
/// `|rho_perm| ≥ |rho|` two-sided). Replicate `i` draws its permutation
/// from a stream seeded by `derive_seed(seed, "perm/i")`, so the result
/// does not depend on evaluation order.
pub fn mantel_test(
    a: &[f64],
    b: &[f64],
    n: usize,
    permutations: usize,
    seed: u64,
    tail: Tail,
) -> Result<MantelResult> {
    check_square(a, b, n)?;
    if permutations == 0 {
        return Err(Error::Config("need at least one permutation".into()));
    }
    let rho = spearman_offdiag(a, b, n)?;

    // Rank grids: off-diagonal ranks written back into matrix positions,
    // diagonal cells unused. Joint permutation preserves the off-diagonal
    // multiset, so means and variances are the same in every replicate.
    let len = (n * (n - 1)) as f64;
    let ranks_a = rank_average_ties(&offdiag(a, n))?;
    let ranks_b = rank_average_ties(&offdiag(b, n))?;
    let mut grid_a = vec![0.0; n * n];
    let mut grid_b = vec![0.0; n * n];
    {
        let mut k = 0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    grid_a[i * n + j] = ranks_a[k];
                    grid_b[i * n + j] = ranks_b[k];
                    k += 1;
                }
            }
        }
    }
    let mean_a = ranks_a.iter().sum::<f64>() / len;
    let mean_b = ranks_b.iter().sum::<f64>() / len;
    let ss_a: f64 = ranks_a.iter().map(|r| (r - mean_a) * (r - mean_a)).sum();
    let ss_b: f64 = ranks_b.iter().map(|r| (r - mean_b) * (r - mean_b)).sum();
    let scale = ss_a.sqrt() * ss_b.sqrt();

    let mut extreme = 0usize;
    for r in 0..permutations {
        let mut rng = rng_from(derive_seed(seed, &format!("perm/{r}")));
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let mut cross = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    cross += grid_a[perm[i] * n + perm[j]] * grid_b[i * n + j];
                }
            }
        }
        let rho_perm = (cross - len * mean_a * mean_b) / scale;
        let hit = match tail {
            Tail::Upper => rho_perm >= rho,
            Tail::TwoSided => rho_perm.abs() >= rho.abs(),
        };
        if hit {
            extreme += 1;
        }
    }
    Ok(MantelResult {
        rho,
        p: (extreme + 1) as f64 / (permutations + 1) as f64,
        permutations,
        tail,
        seed,
        n,
    })
}
