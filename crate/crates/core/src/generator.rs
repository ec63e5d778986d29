//! Random schedulable task sets.
//!
//! Periods are products of factors drawn from a small prime basis, so every
//! generated hyper-period divides the product of the basis. Per-task
//! utilizations come from a simplex-uniform split of the target total.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{acet_from_fraction, default_gamma, hyper_period, TaskSet, TaskSpec, Tick};

pub const DEFAULT_PERIOD_FACTORS: [Tick; 6] = [2, 3, 5, 7, 11, 13];
pub const DEFAULT_HYPER_PERIOD_CAP: Tick = 30030;
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_tasks: usize,
    /// Inclusive bounds on total utilization.
    pub util_range: (f64, f64),
    pub period_factors: Vec<Tick>,
    /// Upper bound on how many factors one period multiplies together.
    pub max_factors: usize,
    /// Allow one factor to appear more than once in a period.
    pub allow_factor_repetition: bool,
    pub hyper_period_cap: Tick,
    pub acet_fraction: f64,
    pub rng_seed: u64,
    pub max_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_tasks: 10,
            util_range: (0.5, 0.6),
            period_factors: DEFAULT_PERIOD_FACTORS.to_vec(),
            max_factors: 6,
            allow_factor_repetition: false,
            hyper_period_cap: DEFAULT_HYPER_PERIOD_CAP,
            acet_fraction: 0.8,
            rng_seed: 0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl GenConfig {
    pub fn new(n_tasks: usize, util_range: (f64, f64), rng_seed: u64) -> Self {
        GenConfig {
            n_tasks,
            util_range,
            rng_seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.util_range;
        if !(0.0 < lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("bad utilization range [{lo}, {hi}]")));
        }
        if !(1..=15).contains(&self.n_tasks) {
            return Err(Error::Config(format!("n_tasks {} outside [1, 15]", self.n_tasks)));
        }
        if !(self.acet_fraction > 0.0 && self.acet_fraction <= 1.0) {
            return Err(Error::Config("acet_fraction must lie in (0, 1]".into()));
        }
        if self.period_factors.is_empty() || self.period_factors.iter().any(|&f| f < 2) {
            return Err(Error::Config("period factors must be >= 2".into()));
        }
        if self.max_factors == 0 {
            return Err(Error::Config("max_factors must be positive".into()));
        }
        Ok(())
    }
}

/// Draws task sets until one satisfies the utilization range, the
/// hyper-period cap and response-time schedulability.
pub fn generate_taskset(config: &GenConfig) -> Result<TaskSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let (lo, hi) = config.util_range;
    let mut last_reason = String::from("no draw attempted");

    for _ in 0..config.max_attempts {
        let total = rng.random_range(lo..=hi);
        let utils = split_utilization(total, config.n_tasks, &mut rng);
        let mut tasks = Vec::with_capacity(config.n_tasks);
        let mut ok = true;
        for (i, &u) in utils.iter().enumerate() {
            let period = draw_period(config, &mut rng);
            let wcet = ((u * period as f64).round() as Tick).max(1);
            if wcet > period {
                ok = false;
                last_reason = "wcet exceeds period".into();
                break;
            }
            let acet = acet_from_fraction(wcet, config.acet_fraction);
            let offset = rng.random_range(0..period);
            tasks.push(TaskSpec {
                id: i as u32 + 1,
                period,
                wcet,
                acet,
                deadline: period,
                offset,
                priority: i as u32,
                gamma: default_gamma(wcet, acet),
                theta: 0,
            });
        }
        if !ok {
            continue;
        }
        let actual: f64 = tasks.iter().map(TaskSpec::utilization).sum();
        if actual < lo || actual > hi {
            last_reason = format!("rounded utilization {actual:.4} outside range");
            continue;
        }
        if hyper_period(&tasks)? > config.hyper_period_cap {
            last_reason = "hyper-period above cap".into();
            continue;
        }
        let set = rm_priorities(&TaskSet::new(tasks)?);
        if !rta_schedulable(&set) {
            last_reason = "not schedulable".into();
            continue;
        }
        return Ok(set);
    }
    Err(Error::GenerationInfeasible {
        attempts: config.max_attempts,
        reason: last_reason,
    })
}

fn draw_period<R: Rng + ?Sized>(config: &GenConfig, rng: &mut R) -> Tick {
    let factors = &config.period_factors;
    if config.allow_factor_repetition {
        let k = rng.random_range(1..=config.max_factors);
        (0..k).map(|_| factors[rng.random_range(0..factors.len())]).product()
    } else {
        let k = rng.random_range(1..=config.max_factors.min(factors.len()));
        index::sample(rng, factors.len(), k)
            .iter()
            .map(|i| factors[i])
            .product()
    }
}

/// Rate-monotonic priorities: shorter period ranks higher, ties go to the
/// lower id. Priorities are `n - rank`, so the top task holds `n`.
pub fn rm_priorities(taskset: &TaskSet) -> TaskSet {
    let mut order: Vec<usize> = (0..taskset.len()).collect();
    order.sort_by_key(|&i| (taskset.tasks()[i].period, taskset.tasks()[i].id));
    let n = taskset.len() as u32;
    let mut tasks = taskset.tasks().to_vec();
    for (rank, &i) in order.iter().enumerate() {
        tasks[i].priority = n - rank as u32;
    }
    taskset.replace_tasks(tasks)
}

/// Exact response-time test for fixed priorities with implicit deadlines.
pub fn rta_schedulable(taskset: &TaskSet) -> bool {
    let tasks = taskset.tasks();
    tasks.iter().all(|t| {
        let hp: Vec<&TaskSpec> = tasks.iter().filter(|o| o.priority > t.priority).collect();
        let mut r = t.wcet;
        loop {
            let next = t.wcet + hp.iter().map(|o| r.div_ceil(o.period) * o.wcet).sum::<Tick>();
            if next > t.deadline {
                return false;
            }
            if next == r {
                return true;
            }
            r = next;
        }
    })
}

/// Splits `total` into `n` positive shares, uniformly over the simplex.
pub fn split_utilization<R: Rng + ?Sized>(total: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let mut shares = Vec::with_capacity(n);
    let mut remaining = total;
    for i in (1..n).rev() {
        let next = remaining * rng.random::<f64>().powf(1.0 / i as f64);
        shares.push(remaining - next);
        remaining = next;
    }
    shares.push(remaining);
    shares
}

/// Number of task pairs where one period divides the other.
pub fn harmonic_pairs(taskset: &TaskSet) -> usize {
    let ps: Vec<Tick> = taskset.tasks().iter().map(|t| t.period).collect();
    let mut count = 0;
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            if ps[i].is_multiple_of(ps[j]) || ps[j].is_multiple_of(ps[i]) {
                count += 1;
            }
        }
    }
    count
}

/// Independent per-experiment seed from a master seed and a coordinate path.
pub fn stream_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(master), |acc, &p| splitmix(acc ^ splitmix(p)))
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
