//! Alphabets, observables and the two built-in kernel families.
//!
//! A kernel gives the law of the next symbol given the past. Contexts are
//! passed oldest first, most recent last. Both families come with closed-form
//! constants for the positivity bound `delta`, the continuity rates `beta_l`
//! and the exponential mixing exponent `c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov_approx::{self, OrderKKernel};

/// Alphabet symbol. Alphabets hold at most 256 symbols.
pub type Symbol = u8;

/// Tolerance on row sums of every probability table.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

/// Largest tail weight discarded when an infinite-order law is evaluated on a
/// truncated past (2^-60).
const TRUNCATION_TAIL: f64 = 8.673617379884035e-19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if !(2..=256).contains(&size) {
            return Err(Error::InvalidArgument(format!(
                "alphabet size must be in 2..=256, got {size}"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> {
        (0..self.size).map(|a| a as Symbol)
    }
}

/// Real observable of a single coordinate, one value per symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    values: Vec<f64>,
}

impl Observable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values.len() > 256 {
            return Err(Error::InvalidArgument(format!(
                "observable needs one value per symbol of an alphabet of size 2..=256, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("observable value {v} is not finite")));
        }
        Ok(Self { values })
    }

    /// `f(a) = a`.
    pub fn identity(alphabet: Alphabet) -> Self {
        Self {
            values: (0..alphabet.size()).map(|a| a as f64).collect(),
        }
    }

    pub fn constant(alphabet: Alphabet, value: f64) -> Self {
        Self {
            values: vec![value; alphabet.size()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alphabet_size(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn value(&self, symbol: Symbol) -> f64 {
        self.values[symbol as usize]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    /// `max_a |f(a) - center|`, the constant bounding `|Z_l| / D_l`.
    pub fn range_bound(&self, center: f64) -> f64 {
        self.values.iter().map(|v| (v - center).abs()).fold(0.0, f64::max)
    }

    /// Arithmetic mean of `f` over `symbols`.
    ///
    /// Computed from symbol frequencies as `min f + sum_a freq_a (f(a) - min f)`,
    /// which is exact for constant observables and avoids long running sums.
    pub fn mean_over(&self, symbols: &[Symbol]) -> Result<f64> {
        if symbols.is_empty() {
            return Err(Error::EmptySample);
        }
        let counts = symbol_counts(symbols, self.values.len())?;
        Ok(self.mean_from_counts(&counts, symbols.len()))
    }

    pub(crate) fn mean_from_counts(&self, counts: &[u64], total: usize) -> f64 {
        let base = self.min_value();
        let n = total as f64;
        base + counts
            .iter()
            .zip(&self.values)
            .map(|(&c, &v)| (c as f64 / n) * (v - base))
            .sum::<f64>()
    }

    /// `sum_a weights_a f(a)` for a probability vector, shifted the same way as
    /// [`Observable::mean_over`].
    pub fn expectation(&self, weights: &[f64]) -> f64 {
        let base = self.min_value();
        base + weights
            .iter()
            .zip(&self.values)
            .map(|(&w, &v)| w * (v - base))
            .sum::<f64>()
    }
}

pub(crate) fn symbol_counts(symbols: &[Symbol], alphabet_size: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; alphabet_size];
    for &s in symbols {
        match counts.get_mut(s as usize) {
            Some(c) => *c += 1,
            None => {
                return Err(Error::InvalidArgument(format!(
                    "symbol {s} outside alphabet of size {alphabet_size}"
                )))
            }
        }
    }
    Ok(counts)
}

/// Index of a context in base-`|A|` row-major order, oldest symbol most
/// significant.
#[inline]
pub fn context_index(context: &[Symbol], alphabet_size: usize) -> usize {
    context
        .iter()
        .fold(0usize, |acc, &s| acc * alphabet_size + s as usize)
}

/// Inverse of [`context_index`] for contexts of length `len`.
pub fn context_symbols(mut index: usize, len: usize, alphabet_size: usize) -> Vec<Symbol> {
    let mut out = vec![0 as Symbol; len];
    for slot in out.iter_mut().rev() {
        *slot = (index % alphabet_size) as Symbol;
        index /= alphabet_size;
    }
    out
}

pub(crate) fn validate_rows(table: &[f64], width: usize, what: &str) -> Result<()> {
    if width == 0 || table.is_empty() || !table.len().is_multiple_of(width) {
        return Err(Error::InvalidKernel(format!(
            "{what}: table of {} entries is not a whole number of rows of width {width}",
            table.len()
        )));
    }
    for (r, row) in table.chunks_exact(width).enumerate() {
        if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidKernel(format!("{what}: row {r} has entry {p}")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::InvalidKernel(format!(
                "{what}: row {r} sums to {sum}, not 1"
            )));
        }
    }
    Ok(())
}

/// Order-`m` Markov kernel used as a chain of (trivially) infinite order.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteOrderKernel {
    alphabet: Alphabet,
    order: usize,
    table: Vec<f64>,
}

impl FiniteOrderKernel {
    /// `table` has `|A|^order` rows of width `|A|`, contexts in
    /// [`context_index`] order.
    pub fn new(alphabet: Alphabet, order: usize, table: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidKernel("order must be at least 1".into()));
        }
        let rows = (alphabet.size() as u64)
            .checked_pow(order as u32)
            .filter(|&r| r <= markov_approx::CONTEXT_CAP)
            .ok_or(Error::ContextCapExceeded {
                contexts: u64::MAX,
                cap: markov_approx::CONTEXT_CAP,
            })?;
        if table.len() as u64 != rows * alphabet.size() as u64 {
            return Err(Error::InvalidKernel(format!(
                "order-{order} table over {} symbols needs {} entries, got {}",
                alphabet.size(),
                rows * alphabet.size() as u64,
                table.len()
            )));
        }
        validate_rows(&table, alphabet.size(), "finite-order kernel")?;
        Ok(Self {
            alphabet,
            order,
            table,
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn row(&self, context_index: usize) -> &[f64] {
        let n = self.alphabet.size();
        &self.table[context_index * n..(context_index + 1) * n]
    }
}

/// `p(a | past) = sum_{l >= 1} (1 - theta) theta^(l-1) q(a | x_{-l})`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMixtureKernel {
    alphabet: Alphabet,
    theta: f64,
    base: Vec<f64>,
}

impl GeometricMixtureKernel {
    pub fn new(alphabet: Alphabet, theta: f64, base: Vec<f64>) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidKernel(format!("theta must lie in (0, 1), got {theta}")));
        }
        let n = alphabet.size();
        if base.len() != n * n {
            return Err(Error::InvalidKernel(format!(
                "base table needs {} entries, got {}",
                n * n,
                base.len()
            )));
        }
        validate_rows(&base, n, "geometric mixture base table")?;
        Ok(Self {
            alphabet,
            theta,
            base,
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn base_row(&self, symbol: Symbol) -> &[f64] {
        let n = self.alphabet.size();
        let s = symbol as usize;
        &self.base[s * n..(s + 1) * n]
    }

    /// `max_{a,b,b'} |q(a|b) - q(a|b')|`.
    pub fn spread(&self) -> f64 {
        let n = self.alphabet.size();
        (0..n)
            .map(|a| {
                let col = (0..n).map(|b| self.base[b * n + a]);
                let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    FiniteOrder(FiniteOrderKernel),
    GeometricMixture(GeometricMixtureKernel),
}

impl Kernel {
    /// Convenience constructor from nested rows.
    pub fn finite_order(order: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let alphabet = Alphabet::new(rows.first().map_or(0, Vec::len))?;
        let table = rows.iter().flatten().copied().collect();
        Ok(Kernel::FiniteOrder(FiniteOrderKernel::new(alphabet, order, table)?))
    }

    pub fn geometric_mixture(theta: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let alphabet = Alphabet::new(rows.first().map_or(0, Vec::len))?;
        let base = rows.iter().flatten().copied().collect();
        Ok(Kernel::GeometricMixture(GeometricMixtureKernel::new(
            alphabet, theta, base,
        )?))
    }

    pub fn alphabet(&self) -> Alphabet {
        match self {
            Kernel::FiniteOrder(k) => k.alphabet(),
            Kernel::GeometricMixture(k) => k.alphabet(),
        }
    }

    /// Shortest context accepted by [`Kernel::conditional_distribution`].
    pub fn min_context(&self) -> usize {
        match self {
            Kernel::FiniteOrder(k) => k.order(),
            Kernel::GeometricMixture(_) => 1,
        }
    }

    /// Number of most recent symbols that determine the next-symbol law up to
    /// a tail weight of at most 2^-60. Exact for finite-order kernels.
    pub fn memory_window(&self) -> usize {
        match self {
            Kernel::FiniteOrder(k) => k.order(),
            Kernel::GeometricMixture(k) => {
                let w = TRUNCATION_TAIL.ln() / k.theta().ln();
                (w.ceil() as usize).max(1)
            }
        }
    }

    /// Law of the next symbol given `context` (oldest first).
    pub fn conditional_distribution(&self, context: &[Symbol]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.alphabet().size()];
        self.conditional_into(context, &mut out)?;
        Ok(out)
    }

    /// Allocation-free form of [`Kernel::conditional_distribution`]. A
    /// geometric mixture treats every lag beyond the context as a copy of the
    /// oldest context symbol.
    pub fn conditional_into(&self, context: &[Symbol], out: &mut [f64]) -> Result<()> {
        let n = self.alphabet().size();
        debug_assert_eq!(out.len(), n);
        if context.len() < self.min_context() {
            return Err(Error::ContextTooShort {
                needed: self.min_context(),
                got: context.len(),
            });
        }
        if let Some(&s) = context.iter().find(|&&s| s as usize >= n) {
            return Err(Error::InvalidArgument(format!(
                "symbol {s} outside alphabet of size {n}"
            )));
        }
        match self {
            Kernel::FiniteOrder(k) => {
                let idx = context_index(&context[context.len() - k.order()..], n);
                out.copy_from_slice(k.row(idx));
            }
            Kernel::GeometricMixture(k) => {
                let theta = k.theta();
                // Weight per conditioning symbol.
                let mut weights = [0.0f64; 256];
                let mut pow = 1.0;
                for &s in context.iter().rev() {
                    weights[s as usize] += (1.0 - theta) * pow;
                    pow *= theta;
                }
                // Lags beyond the context repeat the oldest symbol: tail weight theta^L.
                weights[context[0] as usize] += pow;
                out.iter_mut().for_each(|p| *p = 0.0);
                for (b, &wb) in weights[..n].iter().enumerate() {
                    if wb == 0.0 {
                        continue;
                    }
                    for (p, &q) in out.iter_mut().zip(k.base_row(b as Symbol)) {
                        *p += wb * q;
                    }
                }
            }
        }
        Ok(())
    }

    /// Positivity constant: every positive transition probability is at least
    /// this large, for every history.
    pub fn delta_lower_bound(&self) -> f64 {
        match self {
            Kernel::FiniteOrder(k) => min_positive(k.table()),
            Kernel::GeometricMixture(k) => k.base().iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Upper bound on `beta_l`, the largest change of the next-symbol law
    /// between two pasts sharing their `l` most recent symbols.
    pub fn continuity_rate(&self, l: usize) -> Result<f64> {
        if l == 0 {
            return Err(Error::InvalidArgument("continuity rate needs l >= 1".into()));
        }
        Ok(match self {
            Kernel::FiniteOrder(k) => {
                if l >= k.order() {
                    0.0
                } else {
                    // Pasts agreeing on fewer than `order` symbols: bounded by the
                    // largest difference between rows.
                    max_row_gap(k)
                }
            }
            Kernel::GeometricMixture(k) => k.theta().powi(l as i32) * k.spread(),
        })
    }

    /// `c = -limsup (1/l) ln beta_l`; `+inf` for finite-order kernels.
    pub fn mixing_exponent(&self) -> f64 {
        match self {
            Kernel::FiniteOrder(_) => f64::INFINITY,
            Kernel::GeometricMixture(k) => (1.0 / k.theta()).ln(),
        }
    }

    /// Stationary law of a single coordinate.
    pub fn stationary_marginal(&self) -> Result<Vec<f64>> {
        let n = self.alphabet().size();
        match self {
            Kernel::FiniteOrder(k) => {
                let approx = OrderKKernel::from_table(k.alphabet(), k.order(), k.table().to_vec())?;
                let pi = markov_approx::stationary_distribution(
                    &approx,
                    markov_approx::DEFAULT_TOLERANCE,
                )?;
                let mut marginal = vec![0.0; n];
                for (ctx, p) in pi.iter().enumerate() {
                    marginal[ctx % n] += p;
                }
                Ok(marginal)
            }
            // Stationarity gives P(X_0 = a) = sum_b P(X_{-l} = b) q(a|b) for
            // every lag, so the marginal is the stationary law of q.
            Kernel::GeometricMixture(k) => {
                let approx = OrderKKernel::from_table(k.alphabet(), 1, k.base().to_vec())?;
                markov_approx::stationary_distribution(&approx, markov_approx::DEFAULT_TOLERANCE)
            }
        }
    }

    /// Exact stationary mean `mu = E f(X_0)`.
    pub fn stationary_mean(&self, f: &Observable) -> Result<f64> {
        check_observable(f, self.alphabet())?;
        Ok(f.expectation(&self.stationary_marginal()?))
    }
}

pub(crate) fn check_observable(f: &Observable, alphabet: Alphabet) -> Result<()> {
    if f.alphabet_size() != alphabet.size() {
        return Err(Error::InvalidArgument(format!(
            "observable has {} values but the alphabet has {} symbols",
            f.alphabet_size(),
            alphabet.size()
        )));
    }
    Ok(())
}

fn min_positive(table: &[f64]) -> f64 {
    table
        .iter()
        .copied()
        .filter(|&p| p > 0.0)
        .fold(f64::INFINITY, f64::min)
}

fn max_row_gap(k: &FiniteOrderKernel) -> f64 {
    let n = k.alphabet().size();
    let rows = k.table().len() / n;
    (0..n)
        .map(|a| {
            let (lo, hi) = (0..rows)
                .map(|r| k.table()[r * n + a])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Long-run variance `gamma_0 + 2 sum_{j=1..J} gamma_j` of `f(X_n)` with
/// biased (1/n) empirical autocovariances.
pub fn long_run_variance_estimate(
    trajectory: &[Symbol],
    f: &Observable,
    lag_window: usize,
) -> Result<f64> {
    let needed = 10 * (lag_window + 1);
    if trajectory.len() <= needed {
        return Err(Error::TrajectoryTooShort {
            needed,
            got: trajectory.len(),
        });
    }
    let mean = f.mean_over(trajectory)?;
    let centered: Vec<f64> = trajectory.iter().map(|&s| f.value(s) - mean).collect();
    let n = centered.len() as f64;
    let autocov = |j: usize| -> f64 {
        centered[..centered.len() - j]
            .iter()
            .zip(&centered[j..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n
    };
    Ok(autocov(0) + 2.0 * (1..=lag_window).map(autocov).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub delta: f64,
    /// Mixing exponent; `None` stands for `+inf` (finite memory).
    pub c: Option<f64>,
    pub sigma2_estimate: f64,
    pub h1_ok: bool,
    pub h2_ok: bool,
    pub h3_ok: bool,
}

impl HypothesisReport {
    pub fn assess(
        kernel: &Kernel,
        trajectory: &[Symbol],
        f: &Observable,
        lag_window: usize,
    ) -> Result<Self> {
        let delta = kernel.delta_lower_bound();
        let c = kernel.mixing_exponent();
        let sigma2_estimate = long_run_variance_estimate(trajectory, f, lag_window)?;
        Ok(Self {
            delta,
            c: c.is_finite().then_some(c),
            sigma2_estimate,
            h1_ok: delta > 0.0,
            h2_ok: c > 0.0,
            h3_ok: sigma2_estimate > 0.0,
        })
    }
}
