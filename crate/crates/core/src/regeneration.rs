//! Return times of the initial k-string and the excursion blocks between them.
//!
//! Positions are one-based: `R_0 = 1` is the first symbol of the trajectory.
//! Occurrences may overlap, so a block can be shorter than `k`.

use std::io::Write;

use serde::Serialize;

use crate::chain_model::{Observable, Symbol};
use crate::error::{Error, Result};

/// Return times `R_0..R_m` and the block lengths `D_l = R_l - R_{l-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenerationDecomposition {
    k: usize,
    return_times: Vec<usize>,
}

impl RegenerationDecomposition {
    pub fn new(trajectory: &[Symbol], k: usize, m: usize) -> Result<Self> {
        Ok(Self {
            k,
            return_times: return_times(trajectory, k, m)?,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn return_times(&self) -> &[usize] {
        &self.return_times
    }

    pub fn block_count(&self) -> usize {
        self.return_times.len() - 1
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.return_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `R_m - 1`, the number of symbols covered by the blocks.
    pub fn segment_len(&self) -> usize {
        self.return_times[self.return_times.len() - 1] - 1
    }

    pub fn blocks<'t>(&self, trajectory: &'t [Symbol]) -> Result<Vec<&'t [Symbol]>> {
        extract_blocks(trajectory, &self.return_times)
    }
}

/// Prefix function of `pattern` (Knuth-Morris-Pratt failure links).
fn prefix_function(pattern: &[Symbol]) -> Vec<usize> {
    let mut pi = vec![0; pattern.len()];
    let mut j = 0;
    for i in 1..pattern.len() {
        while j > 0 && pattern[i] != pattern[j] {
            j = pi[j - 1];
        }
        if pattern[i] == pattern[j] {
            j += 1;
        }
        pi[i] = j;
    }
    pi
}

/// `R_0 = 1` and `R_i = min { n > R_{i-1} : X_n..X_{n+k-1} = X_1..X_k }` for
/// `i = 1..=m`, one-based.
pub fn return_times(trajectory: &[Symbol], k: usize, m: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("string length k must be at least 1".into()));
    }
    if trajectory.len() < k {
        return Err(Error::TrajectoryTooShort {
            needed: k - 1,
            got: trajectory.len(),
        });
    }
    let pattern = &trajectory[..k];
    let failure = prefix_function(pattern);
    let mut times = Vec::with_capacity(m + 1);
    times.push(1);
    if m == 0 {
        return Ok(times);
    }
    // Scan from the second symbol so the trivial match at position 1 is skipped.
    let mut matched = 0;
    for (i, &s) in trajectory.iter().enumerate().skip(1) {
        while matched > 0 && (matched == k || pattern[matched] != s) {
            matched = failure[matched - 1];
        }
        if pattern[matched] == s {
            matched += 1;
        }
        if matched == k {
            // Match ends at zero-based i, so it starts at one-based i - k + 2.
            times.push(i + 2 - k);
            if times.len() == m + 1 {
                return Ok(times);
            }
        }
    }
    Err(Error::InsufficientReturns {
        found: times.len() - 1,
        needed: m,
    })
}

/// `xi_i = (X_{R_{i-1}}, .., X_{R_i - 1})` for `i = 1..=m`.
pub fn extract_blocks<'t>(trajectory: &'t [Symbol], return_times: &[usize]) -> Result<Vec<&'t [Symbol]>> {
    if return_times.first() != Some(&1) {
        return Err(Error::InvalidArgument("return times must start at 1".into()));
    }
    let mut blocks = Vec::with_capacity(return_times.len() - 1);
    for w in return_times.windows(2) {
        if w[1] <= w[0] || w[1] - 1 > trajectory.len() {
            return Err(Error::InvalidArgument(format!(
                "return times {} -> {} do not fit a trajectory of length {}",
                w[0],
                w[1],
                trajectory.len()
            )));
        }
        blocks.push(&trajectory[w[0] - 1..w[1] - 1]);
    }
    Ok(blocks)
}

/// Centered block sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStats {
    /// Mean of `f` over all block symbols.
    pub mu_hat: f64,
    /// `Z_l`, centered at `mu_hat`.
    pub z: Vec<f64>,
    /// `Z~_l`, centered at the supplied `mu`.
    pub z_tilde: Option<Vec<f64>>,
    /// `D_l`.
    pub lengths: Vec<usize>,
}

impl BlockStats {
    pub fn sum_of_squares(&self) -> f64 {
        self.z.iter().map(|z| z * z).sum()
    }
}

pub fn block_statistics(blocks: &[&[Symbol]], f: &Observable, mu: Option<f64>) -> Result<BlockStats> {
    if blocks.is_empty() {
        return Err(Error::EmptyBlocks);
    }
    let n = f.alphabet_size();
    let mut counts = vec![0u64; n];
    let mut total = 0usize;
    for block in blocks {
        for &s in *block {
            *counts.get_mut(s as usize).ok_or_else(|| {
                Error::InvalidArgument(format!("symbol {s} outside alphabet of size {n}"))
            })? += 1;
        }
        total += block.len();
    }
    if total == 0 {
        return Err(Error::EmptySample);
    }
    let mu_hat = f.mean_from_counts(&counts, total);
    let centered_sum = |block: &[Symbol], center: f64| -> f64 {
        block.iter().map(|&s| f.value(s) - center).sum()
    };
    Ok(BlockStats {
        mu_hat,
        z: blocks.iter().map(|b| centered_sum(b, mu_hat)).collect(),
        z_tilde: mu.map(|mu| blocks.iter().map(|b| centered_sum(b, mu)).collect()),
        lengths: blocks.iter().map(|b| b.len()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Diagnostics {
    /// `sum Z^4 / (sum Z^2)^2`.
    pub lindeberg_ratio: f64,
    /// `sum Z^2 / sum Z~^2`.
    pub centering_ratio: Option<f64>,
}

pub fn regeneration_diagnostics(z: &[f64], z_tilde: Option<&[f64]>) -> Result<Diagnostics> {
    let sq: f64 = z.iter().map(|v| v * v).sum();
    if !(sq > 0.0) {
        return Err(Error::Degenerate(
            "sum of squared block sums is zero: every block has the same centered sum".into(),
        ));
    }
    let quartic: f64 = z.iter().map(|v| v.powi(4)).sum();
    let centering_ratio = match z_tilde {
        None => None,
        Some(zt) => {
            let sq_tilde: f64 = zt.iter().map(|v| v * v).sum();
            if !(sq_tilde > 0.0) {
                return Err(Error::Degenerate("sum of squared Z~ is zero".into()));
            }
            Some(sq / sq_tilde)
        }
    };
    Ok(Diagnostics {
        lindeberg_ratio: quartic / (sq * sq),
        centering_ratio,
    })
}

/// CSV with one row per block: `index,start,length,z`.
pub fn write_decomposition_csv<W: Write>(
    writer: W,
    decomposition: &RegenerationDecomposition,
    stats: &BlockStats,
) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        index: usize,
        start: usize,
        length: usize,
        z: f64,
    }
    let mut w = csv::Writer::from_writer(writer);
    for (i, (&start, (&length, &z))) in decomposition
        .return_times()
        .iter()
        .zip(stats.lengths.iter().zip(&stats.z))
        .enumerate()
    {
        w.serialize(Row {
            index: i + 1,
            start,
            length,
            z,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::Alphabet;

    fn identity() -> Observable {
        Observable::identity(Alphabet::new(2).unwrap())
    }

    #[test]
    fn alternating_returns_and_blocks() {
        let x = [0u8, 1, 0, 1, 0, 1, 0, 1];
        let r = return_times(&x, 2, 3).unwrap();
        assert_eq!(r, vec![1, 3, 5, 7]);
        let blocks = extract_blocks(&x, &r).unwrap();
        assert_eq!(blocks, vec![&[0u8, 1][..], &[0, 1], &[0, 1]]);
        assert_eq!(blocks.concat(), &x[..6]);
    }

    #[test]
    fn overlapping_returns() {
        let x = [0u8; 5];
        let r = return_times(&x, 2, 3).unwrap();
        assert_eq!(r, vec![1, 2, 3, 4]);
        let d = RegenerationDecomposition::new(&x, 2, 3).unwrap();
        assert_eq!(d.lengths(), vec![1, 1, 1]);
        assert_eq!(d.blocks(&x).unwrap(), vec![&[0u8][..], &[0], &[0]]);
        assert_eq!(d.segment_len(), 3);
    }

    #[test]
    fn missing_return_is_an_error() {
        let x = [0u8, 1, 1, 1, 1, 1];
        assert!(matches!(
            return_times(&x, 2, 1),
            Err(Error::InsufficientReturns { found: 0, needed: 1 })
        ));
        // The final window must fit entirely.
        assert!(return_times(&[0u8, 1, 0], 2, 1).is_err());
        assert!(return_times(&[0u8], 2, 0).is_err());
    }

    #[test]
    fn kmp_handles_self_overlapping_strings() {
        let x = [0u8, 0, 1, 0, 0, 0, 1, 0, 0, 1];
        assert_eq!(return_times(&x, 3, 2).unwrap(), vec![1, 5, 8]);
    }

    #[test]
    fn block_statistics_by_hand() {
        let x = [0u8, 1, 0, 1, 0, 1];
        let blocks = vec![&x[0..2], &x[2..4], &x[4..6]];
        let s = block_statistics(&blocks, &identity(), Some(0.4)).unwrap();
        assert_eq!(s.mu_hat, 0.5);
        assert_eq!(s.z, vec![0.0; 3]);
        let zt = s.z_tilde.as_ref().unwrap();
        for (z, (zt, d)) in s.z.iter().zip(zt.iter().zip(&s.lengths)) {
            assert!((zt - 0.2).abs() < 1e-12);
            assert!((z - (zt + (0.4 - 0.5) * *d as f64)).abs() < 1e-12);
        }
        let c = Observable::constant(Alphabet::new(2).unwrap(), 2.5);
        let s = block_statistics(&blocks, &c, None).unwrap();
        assert_eq!(s.mu_hat, 2.5);
        assert!(s.z.iter().all(|&z| z == 0.0));
        assert!(matches!(block_statistics(&[], &c, None), Err(Error::EmptyBlocks)));
    }

    #[test]
    fn diagnostics_arithmetic() {
        let d = regeneration_diagnostics(&[1.0, -1.0], None).unwrap();
        assert_eq!(d.lindeberg_ratio, 0.5);
        let d = regeneration_diagnostics(&[1.0, -1.0, 1.0, -1.0], Some(&[1.0, -1.0, 1.0, -1.0])).unwrap();
        assert_eq!(d.lindeberg_ratio, 0.25);
        assert_eq!(d.centering_ratio, Some(1.0));
        assert!(matches!(regeneration_diagnostics(&[0.0, 0.0], None), Err(Error::Degenerate(_))));
    }

    #[test]
    fn csv_export() {
        let x = [0u8, 1, 1, 0, 1, 0, 1, 1];
        let d = RegenerationDecomposition::new(&x, 2, 2).unwrap();
        let blocks = d.blocks(&x).unwrap();
        let s = block_statistics(&blocks, &identity(), None).unwrap();
        let mut out = Vec::new();
        write_decomposition_csv(&mut out, &d, &s).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "index,start,length,z");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,1,3,"));
        assert!(lines[2].starts_with("2,4,2,"));
    }
}
