//! Slot-accurate Monte Carlo simulation of the remote-estimation loop.
//!
//! Each slot runs in a fixed order:
//!
//! 1. If out of sync for `k` slots (this one included), the policy decides
//!    whether a fresh sample is transmitted in this slot.
//! 2. The source makes its transition.
//! 3. A transmission is preempted if the source moved; otherwise it is
//!    delivered with probability `sigma` and the estimate takes the sample.
//! 4. AoII becomes 0 if source and estimate agree, else grows by one.
//!
//! The slot cost is `f_est(AoII) + lambda * attempted`, with no penalty while
//! in sync. Replication `r` draws from ChaCha8 seeded with `seed` on stream
//! `r`, so replications never share random numbers and reruns are bit-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::drph::Penalty;
use crate::error::{Error, Result};
use crate::markov::DtmcSource;
use crate::smdp::{check_sigma, PenaltySet};

/// Identity of the generator and the replication stream rule.
pub const RNG_DESCRIPTION: &str = "ChaCha8Rng::seed_from_u64(seed), stream = replication index";

/// z-quantile for two-sided 95% intervals.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub enum SimPolicy {
    /// Transmit iff AoII exceeds the threshold of the current estimate.
    MultiThreshold(Vec<usize>),
    /// One threshold shared by every estimate.
    SingleThreshold(usize),
    /// Transmit with probability `alpha` in every out-of-sync slot.
    RandomSampling(f64),
}

impl SimPolicy {
    #[inline]
    fn transmits<R: Rng>(&self, est: usize, age: u64, rng: &mut R) -> bool {
        match self {
            SimPolicy::MultiThreshold(taus) => age > taus[est] as u64,
            SimPolicy::SingleThreshold(tau) => age > *tau as u64,
            SimPolicy::RandomSampling(alpha) => rng.random::<f64>() < *alpha,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            SimPolicy::MultiThreshold(taus) if taus.len() != n => Err(Error::DimensionMismatch(
                format!("policy has {} thresholds for {n} states", taus.len()),
            )),
            SimPolicy::RandomSampling(a) if !(*a >= 0.0 && *a <= 1.0) => {
                Err(Error::InvalidProbability {
                    name: "alpha",
                    value: *a,
                })
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Slots per replication, warmup included.
    pub slots: u64,
    pub replications: usize,
    /// Leading slots excluded from every statistic.
    pub warmup: u64,
    pub seed: u64,
    pub policy: SimPolicy,
}

impl SimConfig {
    /// Warmup defaults to 1% of the slots.
    pub fn new(policy: SimPolicy, slots: u64, replications: usize, seed: u64) -> Self {
        Self {
            slots,
            replications,
            warmup: slots / 100,
            seed,
            policy,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.slots == 0 || self.warmup >= self.slots {
            return Err(Error::InvalidConfig(format!(
                "need warmup ({}) < slots ({})",
                self.warmup, self.slots
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        self.policy.validate(n)
    }
}

/// Welford accumulator; merges are order-sensitive only through rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 +=
            other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Empirical record of completed cycles of one type.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTally {
    pub in_sync: RunningStats,
    pub out_of_sync: RunningStats,
    pub attempts: RunningStats,
    pub penalty: RunningStats,
    /// `out_of_sync_hist[t]` counts cycles with `T = t`.
    pub out_of_sync_hist: Vec<u64>,
    /// `next_ep[i]` counts cycles ending in embedded value `i`.
    pub next_ep: Vec<u64>,
}

impl CycleTally {
    fn new(n: usize) -> Self {
        Self {
            in_sync: RunningStats::default(),
            out_of_sync: RunningStats::default(),
            attempts: RunningStats::default(),
            penalty: RunningStats::default(),
            out_of_sync_hist: Vec::new(),
            next_ep: vec![0; n],
        }
    }

    pub fn cycles(&self) -> u64 {
        self.in_sync.count
    }

    fn record(&mut self, c: &CycleRecord) {
        self.in_sync.push(c.in_sync as f64);
        self.out_of_sync.push(c.out_of_sync as f64);
        self.attempts.push(c.attempts as f64);
        self.penalty.push(c.penalty);
        let t = c.out_of_sync as usize;
        if self.out_of_sync_hist.len() <= t {
            self.out_of_sync_hist.resize(t + 1, 0);
        }
        self.out_of_sync_hist[t] += 1;
        self.next_ep[c.next] += 1;
    }

    fn merge(&mut self, other: &CycleTally) {
        self.in_sync.merge(&other.in_sync);
        self.out_of_sync.merge(&other.out_of_sync);
        self.attempts.merge(&other.attempts);
        self.penalty.merge(&other.penalty);
        if self.out_of_sync_hist.len() < other.out_of_sync_hist.len() {
            self.out_of_sync_hist
                .resize(other.out_of_sync_hist.len(), 0);
        }
        for (a, b) in self
            .out_of_sync_hist
            .iter_mut()
            .zip(&other.out_of_sync_hist)
        {
            *a += b;
        }
        for (a, b) in self.next_ep.iter_mut().zip(&other.next_ep) {
            *a += b;
        }
    }

    /// Empirical `P(next embedded value = i)`.
    pub fn next_ep_freq(&self) -> Vec<f64> {
        let total = self.cycles().max(1) as f64;
        self.next_ep.iter().map(|&c| c as f64 / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    /// Slots measured (after warmup).
    pub slots: u64,
    pub penalty_total: f64,
    pub attempts: u64,
    /// `penalty_total + lambda * attempts`.
    pub cost_total: f64,
}

impl ReplicationStats {
    pub fn mean_cost(&self) -> f64 {
        self.cost_total / self.slots as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    /// Mean cost per slot over replications.
    pub mean_cost: f64,
    /// 95% halfwidth across replications (infinite with one replication).
    pub ci95: f64,
    pub mean_aoii_penalty: f64,
    /// Transmission attempts per slot.
    pub tx_rate: f64,
    pub replications: Vec<ReplicationStats>,
    /// Per estimation state, completed cycles observed after warmup.
    pub census: Vec<CycleTally>,
    pub rng: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CycleRecord {
    in_sync: u64,
    out_of_sync: u64,
    attempts: u64,
    penalty: f64,
    next: usize,
}

/// What happened in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub source: usize,
    pub estimate: usize,
    pub aoii: u64,
    pub transmitted: bool,
    pub delivered: bool,
    pub penalty: f64,
}

/// Source, estimate and AoII plus the fixed system parameters.
struct Loop<'a> {
    cumulative: Vec<Vec<f64>>,
    sigma: f64,
    penalties: &'a PenaltySet,
    source: usize,
    estimate: usize,
    aoii: u64,
}

impl<'a> Loop<'a> {
    fn new(src: &DtmcSource, sigma: f64, penalties: &'a PenaltySet, start: usize) -> Self {
        let cumulative = src
            .rows()
            .into_iter()
            .map(|row| {
                let mut acc = 0.0;
                row.into_iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self {
            cumulative,
            sigma,
            penalties,
            source: start,
            estimate: start,
            aoii: 0,
        }
    }

    #[inline]
    fn next_state<R: Rng>(&self, rng: &mut R) -> usize {
        let row = &self.cumulative[self.source];
        let u = rng.random::<f64>() * row[row.len() - 1];
        row.iter().position(|&c| u < c).unwrap_or(row.len() - 1)
    }

    #[inline]
    fn step<R: Rng>(&mut self, policy: &SimPolicy, rng: &mut R) -> SlotRecord {
        let (source, estimate, aoii) = (self.source, self.estimate, self.aoii);
        let transmitted = aoii > 0 && policy.transmits(estimate, aoii, rng);
        let penalty = if aoii > 0 {
            self.penalties[estimate].eval(aoii)
        } else {
            0.0
        };
        let next = self.next_state(rng);
        let delivered = transmitted && next == source && rng.random::<f64>() < self.sigma;
        if delivered {
            self.estimate = source;
        }
        self.source = next;
        self.aoii = if self.source == self.estimate {
            0
        } else {
            aoii + 1
        };
        SlotRecord {
            source,
            estimate,
            aoii,
            transmitted,
            delivered,
            penalty,
        }
    }
}

fn validate_inputs(src: &DtmcSource, sigma: f64, penalties: &PenaltySet) -> Result<()> {
    check_sigma(sigma)?;
    if penalties.len() != src.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} penalties for {} states",
            penalties.len(),
            src.n()
        )));
    }
    Ok(())
}

fn replication_rng(seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

fn run_replication(
    src: &DtmcSource,
    sigma: f64,
    penalties: &PenaltySet,
    lambda: f64,
    cfg: &SimConfig,
    replication: usize,
) -> (ReplicationStats, Vec<CycleTally>) {
    let n = src.n();
    let mut rng = replication_rng(cfg.seed, replication);
    let mut sys = Loop::new(src, sigma, penalties, 0);
    let mut census = vec![CycleTally::new(n); n];

    let mut penalty_total = 0.0;
    let mut attempts = 0u64;
    // Cycle in progress: (type, record), started at an embedded point after warmup.
    let mut current: Option<(usize, CycleRecord)> = None;
    // The run starts in sync, which counts as an embedded point.
    let mut prev_out_of_sync = true;

    for slot in 0..cfg.slots {
        let rec = sys.step(&cfg.policy, &mut rng);
        let measured = slot >= cfg.warmup;
        if measured {
            penalty_total += rec.penalty;
            attempts += rec.transmitted as u64;
        }
        if rec.aoii == 0 && prev_out_of_sync {
            if let Some((j, mut done)) = current.take() {
                done.next = rec.estimate;
                census[j].record(&done);
            }
            if measured {
                current = Some((
                    rec.estimate,
                    CycleRecord {
                        in_sync: 0,
                        out_of_sync: 0,
                        attempts: 0,
                        penalty: 0.0,
                        next: rec.estimate,
                    },
                ));
            }
        }
        if let Some((_, c)) = current.as_mut() {
            if rec.aoii == 0 {
                c.in_sync += 1;
            } else {
                c.out_of_sync += 1;
                c.attempts += rec.transmitted as u64;
                c.penalty += rec.penalty;
            }
        }
        prev_out_of_sync = rec.aoii > 0;
    }

    let slots = cfg.slots - cfg.warmup;
    let stats = ReplicationStats {
        slots,
        penalty_total,
        attempts,
        cost_total: penalty_total + lambda * attempts as f64,
    };
    (stats, census)
}

/// Simulates `cfg.replications` independent runs of `cfg.slots` slots each.
pub fn simulate(
    src: &DtmcSource,
    sigma: f64,
    penalties: &PenaltySet,
    lambda: f64,
    cfg: &SimConfig,
) -> Result<SimStats> {
    validate_inputs(src, sigma, penalties)?;
    cfg.validate(src.n())?;
    let runs: Vec<(ReplicationStats, Vec<CycleTally>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(src, sigma, penalties, lambda, cfg, r))
        .collect();

    // Merge in replication-index order.
    let mut cost = RunningStats::default();
    let mut penalty = RunningStats::default();
    let mut tx = RunningStats::default();
    let mut census = vec![CycleTally::new(src.n()); src.n()];
    for (rep, tallies) in &runs {
        let slots = rep.slots as f64;
        penalty.push(rep.penalty_total / slots);
        tx.push(rep.attempts as f64 / slots);
        cost.push(rep.mean_cost());
        for (acc, t) in census.iter_mut().zip(tallies) {
            acc.merge(t);
        }
    }
    let ci95 = if cost.count >= 2 {
        Z95 * cost.std_err()
    } else {
        f64::INFINITY
    };
    Ok(SimStats {
        mean_cost: penalty.mean() + lambda * tx.mean(),
        ci95,
        mean_aoii_penalty: penalty.mean(),
        tx_rate: tx.mean(),
        replications: runs.into_iter().map(|(r, _)| r).collect(),
        census,
        rng: RNG_DESCRIPTION,
    })
}

/// Slot-by-slot trace of a single run starting in sync at state 0.
pub fn trace(
    src: &DtmcSource,
    sigma: f64,
    penalties: &PenaltySet,
    policy: &SimPolicy,
    slots: usize,
    seed: u64,
) -> Result<Vec<SlotRecord>> {
    validate_inputs(src, sigma, penalties)?;
    policy.validate(src.n())?;
    let mut rng = replication_rng(seed, 0);
    let mut sys = Loop::new(src, sigma, penalties, 0);
    Ok((0..slots).map(|_| sys.step(policy, &mut rng)).collect())
}

/// Isolated cycles of type `j` under threshold `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleCensus {
    pub j: usize,
    pub tau: usize,
    pub tally: CycleTally,
}

/// Simulates `cycles` independent cycles that start at an embedded point
/// with value `j`, recording `H_j`, `T_j`, `C_j`, the penalty sum and the
/// next embedded value.
pub fn cycle_census(
    src: &DtmcSource,
    sigma: f64,
    j: usize,
    tau: usize,
    penalty: &Penalty,
    cycles: u64,
    seed: u64,
) -> Result<CycleCensus> {
    check_sigma(sigma)?;
    let n = src.n();
    if j >= n {
        return Err(Error::InvalidState { state: j, n });
    }
    // Only estimate j is ever charged within a cycle of type j.
    let penalties: PenaltySet = vec![penalty.clone(); n];
    let policy = SimPolicy::SingleThreshold(tau);
    let mut rng = replication_rng(seed, 0);
    let mut tally = CycleTally::new(n);
    for _ in 0..cycles {
        let mut sys = Loop::new(src, sigma, &penalties, j);
        let mut rec = CycleRecord {
            in_sync: 0,
            out_of_sync: 0,
            attempts: 0,
            penalty: 0.0,
            next: j,
        };
        loop {
            let slot = sys.step(&policy, &mut rng);
            if slot.aoii == 0 {
                rec.in_sync += 1;
            } else {
                rec.out_of_sync += 1;
                rec.attempts += slot.transmitted as u64;
                rec.penalty += slot.penalty;
                if sys.aoii == 0 {
                    rec.next = sys.estimate;
                    break;
                }
            }
        }
        tally.record(&rec);
    }
    Ok(CycleCensus { j, tau, tally })
}
