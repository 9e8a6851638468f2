//! Regeneration-block bootstrap: uniform block draws, sample assembly and the
//! normalized bootstrap statistic.
//!
//! Block indices are zero-based here (`0..m`), where the usual notation has
//! `1..=m`.

use rand::Rng;
use rayon::prelude::*;

use crate::chain_model::{Observable, Symbol};
use crate::error::{Error, Result};
use crate::simulator::SeedSpec;

/// Tolerance between the defining and reduced forms of the statistic,
/// relative to `max(1, |statistic|)`.
pub const STATISTIC_IDENTITY_TOLERANCE: f64 = 1e-10;

/// `m` independent indices, uniform on `0..m`.
pub fn draw_indices(m: usize, seed: SeedSpec) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidArgument("block count must be at least 1".into()));
    }
    let mut rng = seed.rng();
    Ok((0..m).map(|_| rng.gen_range(0..m)).collect())
}

/// Concatenated bootstrap blocks and their return times `R*_0..R*_m`
/// (one-based, `R*_0 = 1`, `R*_l = R*_{l-1} + D_{I_l}`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledSample {
    pub symbols: Vec<Symbol>,
    pub return_times: Vec<usize>,
}

pub fn assemble_sample(blocks: &[&[Symbol]], indices: &[usize]) -> Result<AssembledSample> {
    if let Some(&i) = indices.iter().find(|&&i| i >= blocks.len()) {
        return Err(Error::InvalidArgument(format!(
            "block index {i} out of range for {} blocks",
            blocks.len()
        )));
    }
    let total: usize = indices.iter().map(|&i| blocks[i].len()).sum();
    let mut symbols = Vec::with_capacity(total);
    let mut return_times = Vec::with_capacity(indices.len() + 1);
    return_times.push(1);
    for &i in indices {
        symbols.extend_from_slice(blocks[i]);
        return_times.push(symbols.len() + 1);
    }
    Ok(AssembledSample {
        symbols,
        return_times,
    })
}

/// Mean of `f` over a (bootstrap or original) segment.
pub fn segment_mean(sample: &[Symbol], f: &Observable) -> Result<f64> {
    f.mean_over(sample)
}

fn sum_of_squares(z: &[f64]) -> Result<f64> {
    let ss: f64 = z.iter().map(|v| v * v).sum();
    if !(ss > 0.0) {
        return Err(Error::Degenerate(
            "sum of squared block sums is zero: every excursion has the same centered sum".into(),
        ));
    }
    Ok(ss)
}

/// `sigma* = sqrt(sum_l Z_l^2 / (R*_m - 1))`, using `Var*(sum Z*) = sum Z^2`.
pub fn sigma_star(z: &[f64], star_total_length: usize) -> Result<f64> {
    if star_total_length == 0 {
        return Err(Error::EmptySample);
    }
    Ok((sum_of_squares(z)? / star_total_length as f64).sqrt())
}

/// `sum_l Z_{I_l} / sqrt(sum_j Z_j^2)`.
pub fn reduced_statistic(z: &[f64], indices: &[usize]) -> Result<f64> {
    let ss = sum_of_squares(z)?;
    Ok(indices.iter().map(|&i| z[i]).sum::<f64>() / ss.sqrt())
}

/// One fully assembled bootstrap replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReplicate {
    pub indices: Vec<usize>,
    pub star_return_times: Vec<usize>,
    pub star_sample: Vec<Symbol>,
    pub mu_star: f64,
    pub sigma_star: f64,
    /// Reduced form.
    pub statistic: f64,
    /// Defining form evaluated on the assembled sample.
    pub assembled_statistic: f64,
}

impl BootstrapReplicate {
    /// Assemble the bootstrap sample for `indices` and evaluate
    /// `sqrt(R*_m - 1) (mu* - mu_hat) / sigma*` from it. The result is checked
    /// against the reduced form `sum Z_{I_l} / sqrt(sum Z^2)`; `z` must be the
    /// block sums centered at the mean of `blocks`.
    pub fn build(blocks: &[&[Symbol]], z: &[f64], indices: Vec<usize>, f: &Observable) -> Result<Self> {
        if blocks.len() != z.len() {
            return Err(Error::InvalidArgument(format!(
                "{} blocks but {} block sums",
                blocks.len(),
                z.len()
            )));
        }
        let reduced = reduced_statistic(z, &indices)?;
        let original: Vec<Symbol> = blocks.concat();
        let mu_hat = segment_mean(&original, f)?;
        let assembled = assemble_sample(blocks, &indices)?;
        let star_len = assembled.symbols.len();
        let mu_star = segment_mean(&assembled.symbols, f)?;
        let sigma = sigma_star(z, star_len)?;
        let defining = (star_len as f64).sqrt() / sigma * (mu_star - mu_hat);
        let gap = (defining - reduced).abs();
        if gap > STATISTIC_IDENTITY_TOLERANCE * reduced.abs().max(1.0) {
            return Err(Error::IdentityViolation(format!(
                "defining form {defining} and reduced form {reduced} differ by {gap:e}"
            )));
        }
        Ok(Self {
            indices,
            star_return_times: assembled.return_times,
            star_sample: assembled.symbols,
            mu_star,
            sigma_star: sigma,
            statistic: reduced,
            assembled_statistic: defining,
        })
    }
}

/// Normalized bootstrap statistic for one index draw, computed through full
/// assembly and through the reduced form; returns the reduced form.
pub fn normalized_statistic(
    blocks: &[&[Symbol]],
    z: &[f64],
    indices: &[usize],
    f: &Observable,
) -> Result<f64> {
    Ok(BootstrapReplicate::build(blocks, z, indices.to_vec(), f)?.statistic)
}

/// `replicates` bootstrap statistics; replicate `b` draws its indices from
/// stream `b` of `master_seed`. Output order is the replicate order
/// regardless of thread count.
pub fn bootstrap_distribution(z: &[f64], replicates: usize, master_seed: u64) -> Result<Vec<f64>> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("need at least one bootstrap replicate".into()));
    }
    if z.is_empty() {
        return Err(Error::EmptyBlocks);
    }
    let norm = sum_of_squares(z)?.sqrt();
    let m = z.len();
    (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let indices = draw_indices(m, SeedSpec::new(master_seed, b))?;
            Ok(indices.iter().map(|&i| z[i]).sum::<f64>() / norm)
        })
        .collect()
}
