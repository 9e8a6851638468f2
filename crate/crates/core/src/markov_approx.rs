//! Canonical order-k Markov approximations, their stationary laws, and the
//! stepwise maximal coupling between a chain and its approximation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain_model::{
    check_observable, context_index, validate_rows, Alphabet, Kernel, Observable, Symbol,
    PROBABILITY_SUM_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::simulator::{sample_categorical, SeedSpec, Trajectory};

/// Largest context table (`|A|^k` rows) handled.
pub const CONTEXT_CAP: u64 = 1 << 20;
/// Power-iteration tolerance on `||pi P - pi||_1`.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const ITERATION_CAP: usize = 1_000_000;
/// Coupled segments simulated after one burn-in in [`discrepancy_rate`].
pub const SEGMENTS_PER_CHUNK: usize = 1_000;

/// Transition table of an order-k chain on `A^k` contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderKKernel {
    alphabet: Alphabet,
    order: usize,
    table: Vec<f64>,
    /// False for contexts with no information (never seen in the estimation
    /// trajectory, or of zero stationary mass); their rows are uniform.
    observed: Vec<bool>,
}

fn context_count(alphabet: Alphabet, order: usize) -> Result<usize> {
    let rows = (alphabet.size() as u64).checked_pow(order as u32);
    match rows {
        Some(r) if r <= CONTEXT_CAP => Ok(r as usize),
        _ => Err(Error::ContextCapExceeded {
            contexts: rows.unwrap_or(u64::MAX),
            cap: CONTEXT_CAP,
        }),
    }
}

impl OrderKKernel {
    pub fn from_table(alphabet: Alphabet, order: usize, table: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidKernel("order must be at least 1".into()));
        }
        let rows = context_count(alphabet, order)?;
        if table.len() != rows * alphabet.size() {
            return Err(Error::InvalidKernel(format!(
                "order-{order} table needs {} entries, got {}",
                rows * alphabet.size(),
                table.len()
            )));
        }
        validate_rows(&table, alphabet.size(), "order-k kernel")?;
        Ok(Self {
            alphabet,
            order,
            table,
            observed: vec![true; rows],
        })
    }

    pub fn from_rows(order: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let alphabet = Alphabet::new(rows.first().map_or(0, Vec::len))?;
        Self::from_table(alphabet, order, rows.iter().flatten().copied().collect())
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

    pub fn contexts(&self) -> usize {
        self.observed.len()
    }

    #[inline]
    pub fn row(&self, context: usize) -> &[f64] {
        let n = self.alphabet.size();
        &self.table[context * n..(context + 1) * n]
    }

    pub fn is_observed(&self, context: usize) -> bool {
        self.observed[context]
    }

    pub fn require_observed(&self) -> Result<()> {
        match self.observed.iter().position(|&o| !o) {
            Some(context) => Err(Error::UnobservedContext { context }),
            None => Ok(()),
        }
    }

    /// Context reached from `context` after emitting `symbol`.
    #[inline]
    pub fn next_context(&self, context: usize, symbol: Symbol) -> usize {
        let n = self.alphabet.size();
        (context % (self.contexts() / n)) * n + symbol as usize
    }

    /// Smallest positive transition probability over informative rows.
    pub fn delta_k(&self) -> f64 {
        self.table
            .chunks_exact(self.alphabet.size())
            .zip(&self.observed)
            .filter(|(_, &o)| o)
            .flat_map(|(row, _)| row.iter().copied())
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Exact canonical order-k approximation of a finite-order kernel.
///
/// For `k >= m` each row copies the order-m row of its last `m` symbols. For
/// `k < m` the order-m rows sharing the last `k` symbols are averaged with
/// weights given by the stationary law of the order-m context chain.
pub fn canonical_from_kernel(kernel: &Kernel, k: usize) -> Result<OrderKKernel> {
    let source = match kernel {
        Kernel::FiniteOrder(source) => source,
        Kernel::GeometricMixture(_) => {
            return Err(Error::UnsupportedKernel(
                "exact canonical approximation needs a finite-order kernel; estimate it from a trajectory instead"
                    .into(),
            ))
        }
    };
    if k == 0 {
        return Err(Error::InvalidArgument("approximation order must be at least 1".into()));
    }
    let alphabet = source.alphabet();
    let n = alphabet.size();
    let m = source.order();
    context_count(alphabet, k.max(m))?;
    let rows_k = context_count(alphabet, k)?;

    if k >= m {
        let rows_m = context_count(alphabet, m)?;
        let mut table = Vec::with_capacity(rows_k * n);
        for ctx in 0..rows_k {
            table.extend_from_slice(source.row(ctx % rows_m));
        }
        return OrderKKernel::from_table(alphabet, k, table);
    }

    let full = OrderKKernel::from_table(alphabet, m, source.table().to_vec())?;
    let pi = stationary_distribution(&full, DEFAULT_TOLERANCE)?;
    let mut table = vec![0.0; rows_k * n];
    let mut mass = vec![0.0; rows_k];
    for (ctx, &w) in pi.iter().enumerate() {
        let suffix = ctx % rows_k;
        mass[suffix] += w;
        for (acc, &p) in table[suffix * n..(suffix + 1) * n].iter_mut().zip(full.row(ctx)) {
            *acc += w * p;
        }
    }
    let mut observed = vec![true; rows_k];
    for (suffix, row) in table.chunks_exact_mut(n).enumerate() {
        if mass[suffix] > 0.0 {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
        } else {
            observed[suffix] = false;
            row.iter_mut().for_each(|p| *p = 1.0 / n as f64);
        }
    }
    let mut out = OrderKKernel::from_table(alphabet, k, table)?;
    out.observed = observed;
    Ok(out)
}

/// Empirical canonical approximation: `P(b | ctx) = count(ctx b) / count(ctx .)`.
/// Contexts never followed by a symbol are flagged and given uniform rows.
pub fn canonical_from_trajectory(
    trajectory: &[Symbol],
    alphabet: Alphabet,
    k: usize,
) -> Result<OrderKKernel> {
    if k == 0 {
        return Err(Error::InvalidArgument("approximation order must be at least 1".into()));
    }
    let n = alphabet.size();
    let rows = context_count(alphabet, k)?;
    if trajectory.len() <= k {
        return Err(Error::TrajectoryTooShort {
            needed: k,
            got: trajectory.len(),
        });
    }
    if let Some(&s) = trajectory.iter().find(|&&s| s as usize >= n) {
        return Err(Error::InvalidArgument(format!("symbol {s} outside alphabet of size {n}")));
    }
    let mut counts = vec![0u64; rows * n];
    let mut ctx = context_index(&trajectory[..k], n);
    for &b in &trajectory[k..] {
        counts[ctx * n + b as usize] += 1;
        ctx = (ctx % (rows / n)) * n + b as usize;
    }
    let mut table = vec![0.0; rows * n];
    let mut observed = vec![true; rows];
    for (c, (row, out)) in counts.chunks_exact(n).zip(table.chunks_exact_mut(n)).enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            observed[c] = false;
            out.iter_mut().for_each(|p| *p = 1.0 / n as f64);
        } else {
            for (p, &cnt) in out.iter_mut().zip(row) {
                *p = cnt as f64 / total as f64;
            }
        }
    }
    Ok(OrderKKernel {
        alphabet,
        order: k,
        table,
        observed,
    })
}

/// Canonical approximation of any kernel: exact for finite-order sources,
/// estimated from `estimation` otherwise.
pub fn canonical_approximation(
    kernel: &Kernel,
    k: usize,
    estimation: &Trajectory,
) -> Result<OrderKKernel> {
    match kernel {
        Kernel::FiniteOrder(_) => canonical_from_kernel(kernel, k),
        Kernel::GeometricMixture(_) => canonical_from_trajectory(estimation, kernel.alphabet(), k),
    }
}

/// Stationary law on `A^k` contexts by power iteration from the uniform law.
pub fn stationary_distribution(kernel: &OrderKKernel, tol: f64) -> Result<Vec<f64>> {
    stationary_with_cap(kernel, tol, ITERATION_CAP)
}

pub(crate) fn stationary_with_cap(kernel: &OrderKKernel, tol: f64, cap: usize) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let rows = kernel.contexts();
    let n = kernel.alphabet().size();
    let stride = rows / n;
    let mut pi = vec![1.0 / rows as f64; rows];
    let mut next = vec![0.0; rows];
    let mut gap = f64::INFINITY;
    for _ in 0..cap {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (ctx, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let base = (ctx % stride) * n;
            for (b, &p) in kernel.row(ctx).iter().enumerate() {
                next[base + b] += w * p;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        gap = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if gap <= tol {
            return Ok(pi);
        }
    }
    Err(Error::NonConvergence {
        iterations: cap,
        gap,
    })
}

/// `mu^(k) = sum_ctx pi(ctx) f(last symbol of ctx)`.
pub fn markov_mean(kernel: &OrderKKernel, f: &Observable) -> Result<f64> {
    let pi = stationary_distribution(kernel, DEFAULT_TOLERANCE)?;
    mean_under(kernel, &pi, f)
}

pub(crate) fn mean_under(kernel: &OrderKKernel, pi: &[f64], f: &Observable) -> Result<f64> {
    check_observable(f, kernel.alphabet())?;
    let n = kernel.alphabet().size();
    let mut marginal = vec![0.0; n];
    for (ctx, &w) in pi.iter().enumerate() {
        marginal[ctx % n] += w;
    }
    Ok(f.expectation(&marginal))
}

/// One draw of a maximal coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CouplingDraw {
    pub x: Symbol,
    pub y: Symbol,
    pub agreed: bool,
}

/// Total-variation distance `(1/2) sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn validate_probability(p: &[f64], name: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidProbability(format!("{name} = {p:?}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(Error::InvalidProbability(format!("{name} sums to {sum}")));
    }
    Ok(())
}

/// Draw `(x, y)` with `x ~ p`, `y ~ q` and `P(x != y) = TV(p, q)`.
pub fn maximal_coupling_step<R: Rng + ?Sized>(p: &[f64], q: &[f64], rng: &mut R) -> Result<CouplingDraw> {
    validate_probability(p, "p")?;
    validate_probability(q, "q")?;
    if p.len() != q.len() {
        return Err(Error::InvalidProbability(format!(
            "p has {} entries but q has {}",
            p.len(),
            q.len()
        )));
    }
    Ok(coupling_step(p, q, rng))
}

pub(crate) fn coupling_step<R: Rng + ?Sized>(p: &[f64], q: &[f64], rng: &mut R) -> CouplingDraw {
    if p == q {
        let x = sample_categorical(p, rng.gen());
        return CouplingDraw { x, y: x, agreed: true };
    }
    let overlap: f64 = p.iter().zip(q).map(|(a, b)| a.min(*b)).sum();
    let u: f64 = rng.gen();
    if u < overlap {
        let v: f64 = rng.gen::<f64>() * overlap;
        let x = draw_weighted(p.iter().zip(q).map(|(a, b)| a.min(*b)), v);
        CouplingDraw { x, y: x, agreed: true }
    } else {
        let excess_p: f64 = p.iter().zip(q).map(|(a, b)| (a - b).max(0.0)).sum();
        let excess_q: f64 = p.iter().zip(q).map(|(a, b)| (b - a).max(0.0)).sum();
        let x = draw_weighted(p.iter().zip(q).map(|(a, b)| (a - b).max(0.0)), rng.gen::<f64>() * excess_p);
        let y = draw_weighted(p.iter().zip(q).map(|(a, b)| (b - a).max(0.0)), rng.gen::<f64>() * excess_q);
        // The residual supports are disjoint, so x != y whenever both are genuine.
        CouplingDraw { x, y, agreed: x == y }
    }
}

/// Inverse-CDF draw from unnormalized weights, `v` in `[0, total)`.
fn draw_weighted(weights: impl Iterator<Item = f64>, v: f64) -> Symbol {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (a, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = a;
            if v < acc {
                return a as Symbol;
            }
        }
    }
    last_positive as Symbol
}

/// The infinite-order chain and its order-k approximation run on one
/// probability space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledPair {
    pub x: Trajectory,
    pub y: Trajectory,
    /// Zero-based index of the first position where `x` and `y` differ.
    pub first_discrepancy: Option<usize>,
}

/// Stepwise maximal coupling of a kernel with an order-k kernel. Both laws are
/// evaluated on the pair's own pasts; the pre-history is all zeros.
struct CoupledStepper<'a> {
    kernel: &'a Kernel,
    approx: &'a OrderKKernel,
    window: usize,
    x_history: Vec<Symbol>,
    y_context: usize,
    rng: rand_chacha::ChaCha8Rng,
    px: Vec<f64>,
}

impl<'a> CoupledStepper<'a> {
    fn new(kernel: &'a Kernel, approx: &'a OrderKKernel, seed: SeedSpec) -> Result<Self> {
        if kernel.alphabet() != approx.alphabet() {
            return Err(Error::InvalidArgument(
                "kernel and approximation use different alphabets".into(),
            ));
        }
        approx.require_observed()?;
        let window = kernel.memory_window();
        let pad = window.max(approx.order());
        Ok(Self {
            kernel,
            approx,
            window,
            x_history: vec![0; pad],
            y_context: 0,
            rng: seed.rng(),
            px: vec![0.0; kernel.alphabet().size()],
        })
    }

    fn refresh_x_law(&mut self) {
        let ctx = &self.x_history[self.x_history.len() - self.window..];
        self.kernel
            .conditional_into(ctx, &mut self.px)
            .expect("padded history covers the kernel window");
    }

    /// Advance `x` alone.
    fn step_x(&mut self) -> Symbol {
        self.refresh_x_law();
        let s = sample_categorical(&self.px, self.rng.gen());
        self.x_history.push(s);
        s
    }

    /// Reset the approximation's past to the last `k` symbols of `x`.
    fn synchronize(&mut self) {
        let k = self.approx.order();
        let tail = &self.x_history[self.x_history.len() - k..];
        self.y_context = context_index(tail, self.approx.alphabet().size());
    }

    fn step_coupled(&mut self) -> CouplingDraw {
        self.refresh_x_law();
        let draw = coupling_step(&self.px, self.approx.row(self.y_context), &mut self.rng);
        self.x_history.push(draw.x);
        self.y_context = self.approx.next_context(self.y_context, draw.y);
        draw
    }
}

/// Run `burn_in` steps of the original chain, hand its past to the
/// approximation, then `n` maximally coupled steps.
pub fn coupled_pair_trajectories(
    kernel: &Kernel,
    approx: &OrderKKernel,
    n: usize,
    burn_in: usize,
    seed: SeedSpec,
) -> Result<CoupledPair> {
    let mut stepper = CoupledStepper::new(kernel, approx, seed)?;
    for _ in 0..burn_in {
        stepper.step_x();
    }
    stepper.synchronize();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut first_discrepancy = None;
    for t in 0..n {
        let d = stepper.step_coupled();
        if !d.agreed && first_discrepancy.is_none() {
            first_discrepancy = Some(t);
        }
        x.push(d.x);
        y.push(d.y);
    }
    Ok(CoupledPair {
        x: x.into(),
        y: y.into(),
        first_discrepancy,
    })
}

/// Monte Carlo estimate of a probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub se: f64,
    pub trials: usize,
}

impl RateEstimate {
    pub fn from_counts(hits: usize, trials: usize) -> Self {
        if trials == 0 {
            return Self {
                rate: 0.0,
                se: 0.0,
                trials,
            };
        }
        let rate = hits as f64 / trials as f64;
        Self {
            rate,
            se: (rate * (1.0 - rate) / trials as f64).sqrt(),
            trials,
        }
    }
}

/// Fraction of coupled pairs with a discrepancy somewhere in positions `1..=r`.
///
/// Pairs are simulated in chunks of [`SEGMENTS_PER_CHUNK`]: chunk `c` uses
/// stream `c`, burns in the original chain, then runs back-to-back segments of
/// `r` coupled steps, resetting the approximation to the original chain's past
/// at the start of each segment. `r = 0` gives 0.
pub fn discrepancy_rate(
    kernel: &Kernel,
    approx: &OrderKKernel,
    r: usize,
    replicates: usize,
    burn_in: usize,
    master_seed: u64,
) -> Result<RateEstimate> {
    if r == 0 || replicates == 0 {
        return Ok(RateEstimate::from_counts(0, replicates));
    }
    // Validate before fanning out.
    CoupledStepper::new(kernel, approx, SeedSpec::new(master_seed, 0))?;
    let chunks = replicates.div_ceil(SEGMENTS_PER_CHUNK);
    let hits: Vec<usize> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let segments = SEGMENTS_PER_CHUNK.min(replicates - c * SEGMENTS_PER_CHUNK);
            let mut stepper = CoupledStepper::new(kernel, approx, SeedSpec::new(master_seed, c as u64))
                .expect("validated above");
            for _ in 0..burn_in {
                stepper.step_x();
            }
            let mut hits = 0;
            for _ in 0..segments {
                stepper.synchronize();
                let mut disagreed = false;
                for _ in 0..r {
                    disagreed |= !stepper.step_coupled().agreed;
                }
                hits += usize::from(disagreed);
            }
            hits
        })
        .collect();
    Ok(RateEstimate::from_counts(hits.iter().sum(), replicates))
}
