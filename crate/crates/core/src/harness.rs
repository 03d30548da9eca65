//! Seeded instance generation, worst-case ratio search and batch sweeps.
//!
//! All randomness comes from per-task ChaCha streams derived from explicit
//! seeds, and parallel results are merged in a fixed order, so every
//! function here is a deterministic function of its arguments.

use std::io::Write;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::model::{Agent, Instance, Preference};
use crate::rational::Rational;
use crate::verification::{cap_for, check_strategyproof, default_misreports, instance_ratio, Ratio};

/// Default grid density for location supports.
pub const DEFAULT_RESOLUTION: u32 = 32;

/// Probabilities of the preferences `(1,0)`, `(0,1)` and `(1,1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PreferenceMix {
    pub q10: Rational,
    pub q01: Rational,
    pub q11: Rational,
}

impl PreferenceMix {
    pub fn new(q10: Rational, q01: Rational, q11: Rational) -> Result<Self> {
        let mix = PreferenceMix { q10, q01, q11 };
        mix.validate()?;
        Ok(mix)
    }

    pub fn uniform() -> Self {
        let third = Rational::new(1, 3);
        PreferenceMix { q10: third, q01: third, q11: third }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.q10, self.q01, self.q11];
        if parts.iter().any(Rational::is_negative) {
            return Err(Error::InvalidConfig(format!("negative preference probability in {self:?}")));
        }
        let total: Rational = parts.iter().sum();
        if total != Rational::ONE {
            return Err(Error::InvalidConfig(format!("preference mix sums to {total}, not 1")));
        }
        Ok(())
    }

    /// Exact draw: a uniform integer below the common denominator is
    /// compared against the scaled cumulative weights.
    fn sample(&self, rng: &mut impl Rng) -> Preference {
        let scale = [self.q10, self.q01, self.q11].iter().fold(1i128, |acc, r| acc.lcm(&r.denom()));
        let ticket = Rational::from_integer(rng.gen_range(0..scale)) / Rational::from_integer(scale);
        if ticket < self.q10 {
            Preference::F1_ONLY
        } else if ticket < self.q10 + self.q01 {
            Preference::F2_ONLY
        } else {
            Preference::BOTH
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationLaw {
    /// Uniform over `{k/m : 0 ≤ k ≤ m}`.
    UniformGrid(u32),
    /// Uniform over [`breakpoints`] for the config's `d` and the default grid.
    Breakpoints,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub d: Rational,
    pub mix: PreferenceMix,
    pub law: LocationLaw,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(n: usize, d: Rational, mix: PreferenceMix, law: LocationLaw, seed: u64) -> Self {
        GeneratorConfig { n, d, mix, law, seed }
    }
}

/// Locations where a mechanism branch or an OPT kink can change:
/// `{0, 1/2, 1, d, 1 − d} ∪ {k/m}`, sorted.
pub fn breakpoints(d: Rational, resolution: u32) -> Vec<Rational> {
    let m = i128::from(resolution.max(1));
    let mut points: Vec<Rational> = [Rational::ZERO, Rational::HALF, Rational::ONE, d, Rational::ONE - d]
        .into_iter()
        .chain((0..=m).map(|k| Rational::new(k, m)))
        .filter(|x| *x >= Rational::ZERO && *x <= Rational::ONE)
        .collect();
    points.sort();
    points.dedup();
    points
}

pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance> {
    config.mix.validate()?;
    let support = match config.law {
        LocationLaw::UniformGrid(0) => {
            return Err(Error::InvalidConfig("grid resolution must be at least 1".into()));
        }
        LocationLaw::UniformGrid(m) => (0..=i128::from(m)).map(|k| Rational::new(k, i128::from(m))).collect(),
        LocationLaw::Breakpoints => breakpoints(config.d, DEFAULT_RESOLUTION),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let agents = (0..config.n)
        .map(|_| {
            let x = *support.choose(&mut rng).expect("support is non-empty");
            Agent::new(x, config.mix.sample(&mut rng))
        })
        .collect();
    Instance::new(config.d, agents)
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchResult {
    pub best_instance: Instance,
    pub best_ratio: Ratio,
    pub evaluations: usize,
    /// `(evaluation index, best ratio so far)` at every strict improvement.
    pub trace: Vec<(usize, Ratio)>,
    /// Evaluated instances whose ratio exceeded the mechanism's proven cap
    /// (first few only); always empty for mechanisms without a cap.
    pub cap_breaches: Vec<Instance>,
    pub cap_breach_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchConfig {
    pub budget: usize,
    pub seed: u64,
    pub resolution: u32,
    /// Independent restart streams run in parallel.
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { budget: 10_000, seed: 0, resolution: DEFAULT_RESOLUTION, workers: 4 }
    }
}

const MAX_RECORDED_BREACHES: usize = 16;

/// Shared bookkeeping for a stream of evaluations.
struct Tally<'a> {
    mechanism: &'a dyn Mechanism,
    evaluations: usize,
    best: Option<(Instance, Ratio)>,
    trace: Vec<(usize, Ratio)>,
    breaches: Vec<Instance>,
    breach_count: usize,
}

impl<'a> Tally<'a> {
    fn new(mechanism: &'a dyn Mechanism) -> Self {
        Tally { mechanism, evaluations: 0, best: None, trace: Vec::new(), breaches: Vec::new(), breach_count: 0 }
    }

    fn evaluate(&mut self, instance: &Instance) -> Result<Ratio> {
        let (_, _, ratio) = instance_ratio(self.mechanism, instance)?;
        self.evaluations += 1;
        if let Some(cap) = cap_for(self.mechanism.id(), instance) {
            if !ratio.at_most(cap) {
                self.breach_count += 1;
                if self.breaches.len() < MAX_RECORDED_BREACHES {
                    self.breaches.push(instance.clone());
                }
            }
        }
        if self.best.as_ref().is_none_or(|(_, r)| ratio > *r) {
            self.best = Some((instance.clone(), ratio));
            self.trace.push((self.evaluations, ratio));
        }
        Ok(ratio)
    }

    fn finish(self) -> SearchResult {
        let (best_instance, best_ratio) = self.best.expect("at least one evaluation");
        SearchResult {
            best_instance,
            best_ratio,
            evaluations: self.evaluations,
            trace: self.trace,
            cap_breaches: self.breaches,
            cap_breach_count: self.breach_count,
        }
    }
}

/// Combines independent results: the maximum ratio wins, ties go to the
/// lexicographically smaller instance digest. Traces are laid end to end in
/// input order and reduced to their running maxima.
fn merge(parts: Vec<SearchResult>) -> SearchResult {
    let mut offset = 0;
    let mut trace: Vec<(usize, Ratio)> = Vec::new();
    let mut breaches = Vec::new();
    let mut breach_count = 0;
    let mut best: Option<(Instance, Ratio, String)> = None;
    for part in parts {
        for &(step, ratio) in &part.trace {
            if trace.last().is_none_or(|&(_, r)| ratio > r) {
                trace.push((offset + step, ratio));
            }
        }
        offset += part.evaluations;
        breach_count += part.cap_breach_count;
        for b in part.cap_breaches {
            if breaches.len() < MAX_RECORDED_BREACHES {
                breaches.push(b);
            }
        }
        let digest = part.best_instance.digest();
        let better = match &best {
            None => true,
            Some((_, r, dg)) => part.best_ratio > *r || (part.best_ratio == *r && digest < *dg),
        };
        if better {
            best = Some((part.best_instance, part.best_ratio, digest));
        }
    }
    let (best_instance, best_ratio, _) = best.expect("merge of at least one result");
    SearchResult { best_instance, best_ratio, evaluations: offset, trace, cap_breaches: breaches, cap_breach_count: breach_count }
}

fn worker_seed(seed: u64, worker: usize) -> u64 {
    seed ^ (worker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Coordinate ascent over the breakpoint lattice: one agent moves at a
/// time (location, and preference too when `profile` is `None`); strict
/// improvements are accepted and a stalled chain restarts from a fresh
/// random instance. Stops after exactly `budget` evaluations.
pub fn adversarial_search(
    mechanism: &dyn Mechanism,
    n: usize,
    d: Rational,
    profile: Option<&[Preference]>,
    config: &SearchConfig,
) -> Result<SearchResult> {
    if config.budget == 0 {
        return Err(Error::InvalidConfig("search budget must be at least 1".into()));
    }
    if let Some(p) = profile {
        if p.len() != n {
            return Err(Error::InvalidConfig(format!("profile has {} entries for {n} agents", p.len())));
        }
    }
    // surface inapplicability and invalid d before spawning workers
    mechanism.evaluate(&Instance::new(d, vec![])?)?;

    let lattice = breakpoints(d, config.resolution);
    let workers = config.workers.clamp(1, config.budget);
    let parts = (0..workers)
        .into_par_iter()
        .map(|w| {
            let share = config.budget / workers + usize::from(w < config.budget % workers);
            let mut rng = ChaCha8Rng::seed_from_u64(worker_seed(config.seed, w));
            ascend(mechanism, n, d, profile, &lattice, share, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(parts))
}

fn ascend(
    mechanism: &dyn Mechanism,
    n: usize,
    d: Rational,
    profile: Option<&[Preference]>,
    lattice: &[Rational],
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SearchResult> {
    enum Move {
        Location(Rational),
        Pref(Preference),
    }

    let mut tally = Tally::new(mechanism);
    while tally.evaluations < budget {
        let mut current = Instance::new(
            d,
            (0..n)
                .map(|i| {
                    let x = *lattice.choose(rng).expect("lattice is non-empty");
                    let p = profile.map_or_else(|| *Preference::ALL.choose(rng).unwrap(), |p| p[i]);
                    Agent::new(x, p)
                })
                .collect(),
        )?;
        let mut current_ratio = tally.evaluate(&current)?;

        let mut improved = true;
        while improved && tally.evaluations < budget {
            improved = false;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            for agent in order {
                let mut moves: Vec<Move> = lattice
                    .iter()
                    .filter(|&&x| x != current.agents[agent].x)
                    .map(|&x| Move::Location(x))
                    .collect();
                if profile.is_none() {
                    moves.extend(
                        Preference::ALL.iter().filter(|&&p| p != current.agents[agent].p).map(|&p| Move::Pref(p)),
                    );
                }
                moves.shuffle(rng);
                for mv in moves {
                    if tally.evaluations >= budget {
                        break;
                    }
                    let mut candidate = current.clone();
                    match mv {
                        Move::Location(x) => candidate.agents[agent].x = x,
                        Move::Pref(p) => candidate.agents[agent].p = p,
                    }
                    let ratio = tally.evaluate(&candidate)?;
                    if ratio > current_ratio {
                        current = candidate;
                        current_ratio = ratio;
                        improved = true;
                    }
                }
            }
        }
    }
    Ok(tally.finish())
}

/// Every instance on the breakpoint lattice for `n` agents, under the given
/// profile or all `3^n` profiles. Intended for `n ≤ 3`.
pub fn exhaustive_search(
    mechanism: &dyn Mechanism,
    n: usize,
    d: Rational,
    profile: Option<&[Preference]>,
    resolution: u32,
) -> Result<SearchResult> {
    if n > 4 {
        return Err(Error::InvalidConfig(format!("exhaustive search is limited to n ≤ 4, got {n}")));
    }
    mechanism.evaluate(&Instance::new(d, vec![])?)?;

    let lattice = breakpoints(d, resolution);
    let profiles: Vec<Vec<Preference>> = match profile {
        Some(p) if p.len() != n => {
            return Err(Error::InvalidConfig(format!("profile has {} entries for {n} agents", p.len())));
        }
        Some(p) => vec![p.to_vec()],
        None => odometer(3, n).map(|digits| digits.into_iter().map(|k| Preference::ALL[k]).collect()).collect(),
    };
    let parts = profiles
        .par_iter()
        .map(|prefs| {
            let mut tally = Tally::new(mechanism);
            for idx in odometer(lattice.len(), n) {
                let agents = idx.iter().zip(prefs).map(|(&k, &p)| Agent::new(lattice[k], p)).collect();
                tally.evaluate(&Instance::new(d, agents)?)?;
            }
            Ok(tally.finish())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(parts))
}

/// All base-`radix` digit vectors of length `len`, in lexicographic order.
fn odometer(radix: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut next = if radix == 0 && len > 0 { None } else { Some(vec![0usize; len]) };
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut succ = current.clone();
        let mut i = len;
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            succ[i] += 1;
            if succ[i] < radix {
                next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(current)
    })
}

/// Exact mean that cannot overflow.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MeanRatio {
    Finite(BigRational),
    Infinite,
}

impl MeanRatio {
    fn of(ratios: &[Ratio]) -> Option<MeanRatio> {
        if ratios.is_empty() {
            return None;
        }
        let mut sum = BigRational::zero();
        for r in ratios {
            match r {
                Ratio::Finite(v) => sum += BigRational::new(BigInt::from(v.numer()), BigInt::from(v.denom())),
                Ratio::Infinite => return Some(MeanRatio::Infinite),
            }
        }
        Some(MeanRatio::Finite(sum / BigInt::from(ratios.len())))
    }

    pub fn exact(&self) -> String {
        match self {
            MeanRatio::Finite(r) if r.denom() == &BigInt::from(1) => r.numer().to_string(),
            MeanRatio::Finite(r) => format!("{}/{}", r.numer(), r.denom()),
            MeanRatio::Infinite => "inf".into(),
        }
    }

    /// Rounded half away from zero, same convention as [`Rational::to_decimal`].
    pub fn to_decimal(&self, digits: usize) -> String {
        let MeanRatio::Finite(r) = self else {
            return "inf".into();
        };
        let scale = BigInt::from(10).pow(digits as u32);
        let scaled = r.abs() * BigRational::from_integer(scale.clone());
        let (whole, rem) = scaled.numer().div_rem(scaled.denom());
        let rounded = if rem * 2 >= *scaled.denom() { whole + 1 } else { whole };
        let (int_part, frac) = rounded.div_rem(&scale);
        let sign = if r.is_negative() && !rounded_is_zero(&int_part, &frac) { "-" } else { "" };
        if digits == 0 {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{:0>width$}", frac.to_string(), width = digits)
        }
    }
}

fn rounded_is_zero(a: &BigInt, b: &BigInt) -> bool {
    a.is_zero() && b.is_zero()
}

/// One (mechanism, d, generator) cell of a sweep.
#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub mechanism: String,
    pub d: Rational,
    pub config: GeneratorConfig,
    pub instances: usize,
    /// `None` when the mechanism is not applicable at this `d`.
    pub max_ratio: Option<Ratio>,
    pub mean_ratio: Option<MeanRatio>,
    pub sp_ok: Option<bool>,
    pub cap_ok: Option<bool>,
}

impl SweepRecord {
    pub fn skipped(&self) -> bool {
        self.max_ratio.is_none()
    }
}

pub struct SweepSpec {
    pub mechanisms: Vec<Arc<dyn Mechanism>>,
    pub ds: Vec<Rational>,
    /// Templates; each cell overrides `d`. Instance `i` of a cell uses seed
    /// `config.seed + i`.
    pub configs: Vec<GeneratorConfig>,
    pub per_cell: usize,
    pub check_sp: bool,
}

pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    if spec.mechanisms.is_empty() || spec.ds.is_empty() || spec.configs.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one mechanism, d value and generator".into()));
    }
    let cells: Vec<(Arc<dyn Mechanism>, Rational, GeneratorConfig)> = spec
        .mechanisms
        .iter()
        .flat_map(|m| {
            spec.ds.iter().flat_map(move |&d| {
                spec.configs.iter().map(move |c| (Arc::clone(m), d, GeneratorConfig { d, ..*c }))
            })
        })
        .collect();
    cells
        .par_iter()
        .map(|(mechanism, d, config)| run_cell(mechanism.as_ref(), *d, config, spec.per_cell, spec.check_sp))
        .collect()
}

fn run_cell(
    mechanism: &dyn Mechanism,
    d: Rational,
    config: &GeneratorConfig,
    count: usize,
    check_sp: bool,
) -> Result<SweepRecord> {
    let mut record = SweepRecord {
        mechanism: mechanism.id().to_string(),
        d,
        config: *config,
        instances: 0,
        max_ratio: None,
        mean_ratio: None,
        sp_ok: None,
        cap_ok: None,
    };
    if let Err(Error::NotApplicable { .. }) = mechanism.evaluate(&Instance::new(d, vec![])?) {
        return Ok(record);
    }
    let mut ratios = Vec::with_capacity(count);
    let mut sp_ok = true;
    let mut cap_ok = true;
    for i in 0..count {
        let instance = generate_instance(&GeneratorConfig { seed: config.seed.wrapping_add(i as u64), ..*config })?;
        let (_, _, ratio) = instance_ratio(mechanism, &instance)?;
        if let Some(cap) = cap_for(mechanism.id(), &instance) {
            cap_ok &= ratio.at_most(cap);
        }
        if check_sp {
            sp_ok &= check_strategyproof(mechanism, &instance, &default_misreports(&instance))?.is_empty();
        }
        ratios.push(ratio);
    }
    record.instances = count;
    record.max_ratio = Some(ratios.iter().copied().max().unwrap_or(Ratio::Finite(Rational::ONE)));
    record.mean_ratio = MeanRatio::of(&ratios).or(Some(MeanRatio::Finite(BigRational::from_integer(1.into()))));
    record.sp_ok = check_sp.then_some(sp_ok);
    record.cap_ok = Some(cap_ok);
    Ok(record)
}

pub const SWEEP_CSV_HEADER: [&str; 14] = [
    "mechanism",
    "d",
    "n",
    "q10",
    "q01",
    "q11",
    "seed",
    "max_ratio",
    "max_ratio_decimal",
    "mean_ratio",
    "mean_ratio_decimal",
    "sp_ok",
    "cap_ok",
    "status",
];

/// Writes sweep records as CSV. Rationals appear exact and as 12-digit
/// decimals; skipped cells leave the measurement columns empty.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SWEEP_CSV_HEADER)?;
    let flag = |b: Option<bool>| b.map_or(String::new(), |v| v.to_string());
    for r in records {
        let (max, max_dec) = r.max_ratio.map_or((String::new(), String::new()), |m| (m.to_string(), m.to_decimal(12)));
        let (mean, mean_dec) =
            r.mean_ratio.as_ref().map_or((String::new(), String::new()), |m| (m.exact(), m.to_decimal(12)));
        writer.write_record([
            r.mechanism.clone(),
            r.d.to_string(),
            r.config.n.to_string(),
            r.config.mix.q10.to_string(),
            r.config.mix.q01.to_string(),
            r.config.mix.q11.to_string(),
            r.config.seed.to_string(),
            max,
            max_dec,
            mean,
            mean_dec,
            flag(r.sp_ok),
            flag(r.cap_ok),
            if r.skipped() { "skipped".into() } else { "ok".into() },
        ])?;
    }
    writer.flush()?;
    Ok(())
}
