//! Sampling separation oracle.
//!
//! Each query first tests `y` against `Y`. Inside `Y` it draws `N_s`
//! scenarios and scans them in draw order, stages ascending; the first
//! infeasible stage yields a separator. If every sampled scenario passes the
//! oracle is stuck. The call counter `s` advances once per query.
//!
//! Scenario `i` of call `s` is drawn from a ChaCha8 stream seeded by a
//! splitmix64 hash of `(seed, tag, s, i)`, so draws do not depend on how the
//! checks are scheduled across threads.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Separator;
use crate::model::{first_violation, membership_or_separator, Membership, SemiStochasticModel};

pub const ORACLE_TAG: u64 = 1;
pub const VALIDATION_TAG: u64 = 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for item `index` of call `call` in stream `tag`.
pub fn substream(seed: u64, tag: u64, call: u64, index: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for part in [tag, call, index] {
        h = splitmix64(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `N = ]ln(M/delta)/epsilon[` at every call.
    Fixed { m: u64 },
    /// `N_s = ]ln(kappa_s/delta)/epsilon[` with `kappa_s = s^2 pi^2 / 6`.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub schedule: Schedule,
    pub seed: u64,
    /// Worker threads for scenario checks; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl OracleConfig {
    pub fn new(epsilon: f64, delta: f64, schedule: Schedule, seed: u64) -> Result<Self> {
        let c = Self {
            epsilon,
            delta,
            schedule,
            seed,
            threads: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!("epsilon = {} not in (0,1)", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta = {} not in (0,1)", self.delta)));
        }
        if let Schedule::Fixed { m: 0 } = self.schedule {
            return Err(Error::InvalidConfig("fixed schedule needs M >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }
}

/// Smallest integer strictly greater than `a`.
pub fn strict_ceil(a: f64) -> u64 {
    (a.floor() + 1.0).max(1.0) as u64
}

pub fn sample_size(config: &OracleConfig, s: u64) -> u64 {
    let kappa = match config.schedule {
        Schedule::Fixed { m } => m as f64,
        Schedule::Adaptive => {
            let s = s.max(1) as f64;
            s * s * PI * PI / 6.0
        }
    };
    strict_ceil((kappa / config.delta).ln() / config.epsilon)
}

/// Call counter and stream seed; persists across engine runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleState {
    next_call: u64,
    seed: u64,
}

impl OracleState {
    pub fn new(seed: u64) -> Self {
        Self { next_call: 1, seed }
    }

    /// Number of queries answered so far.
    pub fn calls(&self) -> u64 {
        self.next_call - 1
    }

    /// Index the next query will use.
    pub fn next_call(&self) -> u64 {
        self.next_call
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeparatorSource {
    YMembership,
    Stage(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryOutcome {
    Separator {
        sep: Separator,
        source: SeparatorSource,
        /// Scenarios drawn by this call (0 for a `Y` separator).
        samples: u64,
    },
    Stuck {
        samples: u64,
    },
}

impl QueryOutcome {
    pub fn samples(&self) -> u64 {
        match self {
            QueryOutcome::Separator { samples, .. } | QueryOutcome::Stuck { samples } => *samples,
        }
    }
}

/// Anything the cutting engines can query.
pub trait SeparationOracle {
    fn dim(&self) -> usize;

    fn query(&mut self, y: &[f64]) -> Result<QueryOutcome>;

    /// Queries answered so far (across runs, for persistent oracles).
    fn calls(&self) -> u64;
}

/// The sampling oracle over a model.
pub struct SamplingOracle<'a> {
    model: &'a SemiStochasticModel,
    config: &'a OracleConfig,
    state: &'a mut OracleState,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl<'a> SamplingOracle<'a> {
    pub fn new(model: &'a SemiStochasticModel, config: &'a OracleConfig, state: &'a mut OracleState) -> Result<Self> {
        config.validate()?;
        let pool = match config.threads {
            Some(k) => Some(Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
            )),
            None => None,
        };
        Ok(Self {
            model,
            config,
            state,
            pool,
        })
    }

    /// Same as [`SamplingOracle::new`] but sharing an existing pool.
    pub fn with_pool(
        model: &'a SemiStochasticModel,
        config: &'a OracleConfig,
        state: &'a mut OracleState,
        pool: Option<Arc<rayon::ThreadPool>>,
    ) -> Self {
        Self {
            model,
            config,
            state,
            pool,
        }
    }

    pub fn state(&self) -> &OracleState {
        self.state
    }

    fn scan(&self, call: u64, n: u64, y: &[f64]) -> Result<Option<(usize, Separator)>> {
        let model = self.model;
        let seed = self.state.seed;
        let chunk = 4 * rayon::current_num_threads().max(1) as u64;
        let mut start = 0u64;
        while start < n {
            let end = (start + chunk).min(n);
            let found = (start..end)
                .into_par_iter()
                .map(|i| {
                    let mut rng = substream(seed, ORACLE_TAG, call, i);
                    let scenario = model.sample(&mut rng);
                    first_violation(model, &scenario, y)
                })
                .find_first(|r| !matches!(r, Ok(None)));
            match found {
                Some(Ok(v)) => return Ok(v),
                Some(Err(e)) => return Err(e),
                None => {}
            }
            start = end;
        }
        Ok(None)
    }
}

impl SeparationOracle for SamplingOracle<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn query(&mut self, y: &[f64]) -> Result<QueryOutcome> {
        let call = self.state.next_call;
        self.state.next_call += 1;
        if let Membership::Separator(sep) = membership_or_separator(self.model, y)? {
            return Ok(QueryOutcome::Separator {
                sep,
                source: SeparatorSource::YMembership,
                samples: 0,
            });
        }
        let n = sample_size(self.config, call);
        let hit = match &self.pool {
            Some(pool) => pool.install(|| self.scan(call, n, y)),
            None => self.scan(call, n, y),
        }?;
        Ok(match hit {
            Some((t, sep)) => QueryOutcome::Separator {
                sep,
                source: SeparatorSource::Stage(t),
                samples: n,
            },
            None => QueryOutcome::Stuck { samples: n },
        })
    }

    fn calls(&self) -> u64 {
        self.state.calls()
    }
}
