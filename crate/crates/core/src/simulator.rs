//! Seeded trajectory generation.
//!
//! Randomness comes from ChaCha8 keyed by `master_seed` with the stream
//! selector set to `stream_id`; ChaCha is counter based, so a draw is fully
//! determined by `(master_seed, stream_id, position)` and replicates can run on
//! any thread in any order.

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain_model::{context_symbols, Kernel, Symbol};
use crate::error::{Error, Result};
use crate::markov_approx::{self, OrderKKernel};

/// Burn-in floor, in symbols.
pub const MIN_BURN_IN: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }
}

/// Master seed for an independent family of streams, keyed by a purpose
/// label and an index.
pub fn derive_master(master_seed: u64, label: &str, index: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    splitmix64(splitmix64(master_seed ^ h) ^ splitmix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Finite sample `X_1..X_n` of a chain.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trajectory {
    symbols: Vec<Symbol>,
}

impl Trajectory {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Self { symbols }
    }

    pub fn into_symbols(self) -> Vec<Symbol> {
        self.symbols
    }
}

impl Deref for Trajectory {
    type Target = [Symbol];

    fn deref(&self) -> &[Symbol] {
        &self.symbols
    }
}

impl From<Vec<Symbol>> for Trajectory {
    fn from(symbols: Vec<Symbol>) -> Self {
        Self { symbols }
    }
}

/// Anything that emits a chain one symbol at a time.
pub trait SymbolSource {
    fn next_symbol(&mut self) -> Symbol;
}

/// Inverse-CDF draw from a probability vector.
#[inline]
pub fn sample_categorical(probs: &[f64], u: f64) -> Symbol {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = a;
            if u < acc {
                return a as Symbol;
            }
        }
    }
    // Rounding left a sliver above the cumulative sum.
    last_positive as Symbol
}

/// Lag `L >= 1` with `P(L = l) = (1 - theta) theta^(l-1)`, from `u` in `[0, 1)`.
#[inline]
pub fn geometric_lag(ln_theta: f64, u: f64) -> usize {
    // P(L > l) = P(1 - u <= theta^l) = theta^l.
    1 + ((1.0 - u).ln() / ln_theta).floor() as usize
}

/// Default burn-in: `ceil(40 / c)` with a floor of [`MIN_BURN_IN`].
pub fn default_burn_in(kernel: &Kernel) -> usize {
    let c = kernel.mixing_exponent();
    if c.is_finite() {
        ((40.0 / c).ceil() as usize).max(MIN_BURN_IN)
    } else {
        MIN_BURN_IN
    }
}

/// Step-by-step sampler for a kernel started from the all-zeros pre-history.
pub struct InfiniteOrderSampler<'a> {
    kernel: &'a Kernel,
    history: Vec<Symbol>,
    rng: ChaCha8Rng,
    ln_theta: f64,
}

impl<'a> InfiniteOrderSampler<'a> {
    pub fn new(kernel: &'a Kernel, seed: SeedSpec) -> Self {
        let ln_theta = match kernel {
            Kernel::GeometricMixture(k) => k.theta().ln(),
            Kernel::FiniteOrder(_) => 0.0,
        };
        Self {
            kernel,
            history: Vec::new(),
            rng: seed.rng(),
            ln_theta,
        }
    }

    /// Symbols emitted so far.
    pub fn history(&self) -> &[Symbol] {
        &self.history
    }

    pub fn into_history(self) -> Vec<Symbol> {
        self.history
    }

    pub fn reserve(&mut self, additional: usize) {
        self.history.reserve(additional);
    }

    fn symbol_at_lag(&self, lag: usize) -> Symbol {
        let t = self.history.len();
        if lag > t {
            0
        } else {
            self.history[t - lag]
        }
    }
}

impl SymbolSource for InfiniteOrderSampler<'_> {
    fn next_symbol(&mut self) -> Symbol {
        let s = match self.kernel {
            Kernel::FiniteOrder(k) => {
                let n = k.alphabet().size();
                let ctx = (1..=k.order())
                    .rev()
                    .fold(0usize, |acc, lag| acc * n + self.symbol_at_lag(lag) as usize);
                let u: f64 = self.rng.gen();
                sample_categorical(k.row(ctx), u)
            }
            Kernel::GeometricMixture(k) => {
                let lag = geometric_lag(self.ln_theta, self.rng.gen());
                let source = self.symbol_at_lag(lag);
                let u: f64 = self.rng.gen();
                sample_categorical(k.base_row(source), u)
            }
        };
        self.history.push(s);
        s
    }
}

/// `X_1..X_n` after discarding `burn_in` symbols. Geometric mixtures pick a
/// lag first and then a symbol from the base row of the symbol at that lag.
pub fn sample_infinite_order_trajectory(
    kernel: &Kernel,
    n: usize,
    burn_in: usize,
    seed: SeedSpec,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
    }
    let mut sampler = InfiniteOrderSampler::new(kernel, seed);
    sampler.reserve(burn_in + n);
    for _ in 0..burn_in + n {
        sampler.next_symbol();
    }
    let mut symbols = sampler.into_history();
    symbols.drain(..burn_in);
    Ok(Trajectory::new(symbols))
}

/// Order-k chain paired with its stationary law on contexts.
#[derive(Debug, Clone)]
pub struct StationaryMarkov {
    kernel: OrderKKernel,
    stationary: Vec<f64>,
}

impl StationaryMarkov {
    pub fn new(kernel: OrderKKernel) -> Result<Self> {
        kernel.require_observed()?;
        let stationary =
            markov_approx::stationary_distribution(&kernel, markov_approx::DEFAULT_TOLERANCE)?;
        Ok(Self { kernel, stationary })
    }

    pub fn kernel(&self) -> &OrderKKernel {
        &self.kernel
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn sampler(&self, seed: SeedSpec) -> MarkovSampler<'_> {
        MarkovSampler::new(self, seed)
    }

    pub fn sample(&self, n: usize, seed: SeedSpec) -> Result<Trajectory> {
        if n < self.kernel.order() {
            return Err(Error::InvalidArgument(format!(
                "an order-{} chain needs at least {} symbols, asked for {n}",
                self.kernel.order(),
                self.kernel.order()
            )));
        }
        let mut sampler = self.sampler(seed);
        Ok(Trajectory::new((0..n).map(|_| sampler.next_symbol()).collect()))
    }
}

/// Stationary order-k sampler: the first `k` symbols are a context drawn from
/// the stationary law, later symbols follow the transition table.
pub struct MarkovSampler<'a> {
    chain: &'a StationaryMarkov,
    rng: ChaCha8Rng,
    context: usize,
    initial: Vec<Symbol>,
    emitted: usize,
}

impl<'a> MarkovSampler<'a> {
    fn new(chain: &'a StationaryMarkov, seed: SeedSpec) -> Self {
        let mut rng = seed.rng();
        let u: f64 = rng.gen();
        let context = sample_index(&chain.stationary, u);
        let k = chain.kernel.order();
        let initial = context_symbols(context, k, chain.kernel.alphabet().size());
        Self {
            chain,
            rng,
            context,
            initial,
            emitted: 0,
        }
    }
}

impl SymbolSource for MarkovSampler<'_> {
    fn next_symbol(&mut self) -> Symbol {
        if self.emitted < self.initial.len() {
            self.emitted += 1;
            return self.initial[self.emitted - 1];
        }
        let u: f64 = self.rng.gen();
        let kernel = &self.chain.kernel;
        let s = sample_categorical(kernel.row(self.context), u);
        self.context = kernel.next_context(self.context, s);
        self.emitted += 1;
        s
    }
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Stationary sample of length `n` from an order-k kernel.
pub fn sample_markov_trajectory(kernel: &OrderKKernel, n: usize, seed: SeedSpec) -> Result<Trajectory> {
    StationaryMarkov::new(kernel.clone())?.sample(n, seed)
}

/// Either the infinite-order chain itself (after burn-in) or a stationary
/// order-k Markov chain.
#[derive(Debug, Clone)]
pub enum ChainSource {
    InfiniteOrder { kernel: Kernel, burn_in: usize },
    Markov(StationaryMarkov),
}

impl ChainSource {
    pub fn sample(&self, n: usize, seed: SeedSpec) -> Result<Trajectory> {
        match self {
            ChainSource::InfiniteOrder { kernel, burn_in } => {
                sample_infinite_order_trajectory(kernel, n, *burn_in, seed)
            }
            ChainSource::Markov(chain) => chain.sample(n, seed),
        }
    }

    /// Streaming sampler positioned at `X_1` (burn-in already consumed).
    pub fn stream(&self, seed: SeedSpec) -> Box<dyn SymbolSource + '_> {
        match self {
            ChainSource::InfiniteOrder { kernel, burn_in } => {
                let mut s = InfiniteOrderSampler::new(kernel, seed);
                for _ in 0..*burn_in {
                    s.next_symbol();
                }
                Box::new(s)
            }
            ChainSource::Markov(chain) => Box::new(chain.sampler(seed)),
        }
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            ChainSource::InfiniteOrder { kernel, .. } => kernel.alphabet().size(),
            ChainSource::Markov(chain) => chain.kernel().alphabet().size(),
        }
    }

    /// Positivity constant of the sampled chain.
    pub fn delta(&self) -> f64 {
        match self {
            ChainSource::InfiniteOrder { kernel, .. } => kernel.delta_lower_bound(),
            ChainSource::Markov(chain) => chain.kernel().delta_k(),
        }
    }
}
