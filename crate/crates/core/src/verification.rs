//! Strategyproofness checks, approximation ratios, proven ratio caps and
//! replays of the two lower-bound constructions.

use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mechanisms::{mechanism3_branch, M3Case, Mechanism, MechanismId};
use crate::model::{expected_agent_utility, social_utility, Agent, Instance, Outcome, Preference};
use crate::opt::{optimal_placement, welfare_upper_bound};
use crate::rational::{q, Rational};

/// `OPT / SU(f)`, with `+∞` when the mechanism gets nothing but OPT is positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ratio {
    Finite(Rational),
    Infinite,
}

impl Ratio {
    /// Per-instance ratio; `0 / 0` is 1 by convention.
    pub fn of(opt: Rational, value: Rational) -> Ratio {
        if value.is_zero() {
            if opt.is_zero() {
                Ratio::Finite(Rational::ONE)
            } else {
                Ratio::Infinite
            }
        } else {
            Ratio::Finite(opt / value)
        }
    }

    pub fn finite(&self) -> Option<Rational> {
        match self {
            Ratio::Finite(r) => Some(*r),
            Ratio::Infinite => None,
        }
    }

    pub fn at_most(&self, cap: Rational) -> bool {
        matches!(self, Ratio::Finite(r) if *r <= cap)
    }

    pub fn to_decimal(&self, digits: usize) -> String {
        match self {
            Ratio::Finite(r) => r.to_decimal(digits),
            Ratio::Infinite => "inf".into(),
        }
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Ratio::Finite(a), Ratio::Finite(b)) => a.cmp(b),
            (Ratio::Finite(_), Ratio::Infinite) => Ordering::Less,
            (Ratio::Infinite, Ratio::Finite(_)) => Ordering::Greater,
            (Ratio::Infinite, Ratio::Infinite) => Ordering::Equal,
        }
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Finite(r) => write!(f, "{r}"),
            Ratio::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RatioReport {
    pub instance_digest: String,
    pub mechanism: String,
    pub mechanism_value: Rational,
    pub opt_value: Rational,
    pub ratio: Ratio,
}

/// `(mechanism value, OPT, ratio)` without building a full report.
pub fn instance_ratio(mechanism: &dyn Mechanism, instance: &Instance) -> Result<(Rational, Rational, Ratio)> {
    let outcome = mechanism.evaluate(instance)?;
    let mechanism_value = social_utility(instance, &outcome)?;
    let opt_value = optimal_placement(instance).value;
    Ok((mechanism_value, opt_value, Ratio::of(opt_value, mechanism_value)))
}

pub fn approximation_ratio(mechanism: &dyn Mechanism, instance: &Instance) -> Result<RatioReport> {
    let (mechanism_value, opt_value, _) = instance_ratio(mechanism, instance)?;
    Ok(RatioReport {
        instance_digest: instance.digest(),
        mechanism: mechanism.id().to_string(),
        mechanism_value,
        opt_value,
        ratio: Ratio::of(opt_value, mechanism_value),
    })
}

/// A profitable unilateral deviation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpViolation {
    pub agent: usize,
    pub true_location: Rational,
    pub misreport: Rational,
    pub truthful_utility: Rational,
    pub misreport_utility: Rational,
}

/// `{0, 1/4, 1/2, 3/4, 1} ∪ {x_i} ∪ {k/32}`, sorted and deduplicated.
pub fn default_misreports(instance: &Instance) -> Vec<Rational> {
    let mut set: Vec<Rational> = [q(0, 1), q(1, 4), q(1, 2), q(3, 4), q(1, 1)]
        .into_iter()
        .chain(instance.locations())
        .chain((0..=32).map(|k| q(k, 32)))
        .collect();
    set.sort();
    set.dedup();
    set
}

/// Tries every misreport for every agent, measuring utility at the true
/// location. Violations come back ordered by `(agent, misreport)`.
pub fn check_strategyproof(
    mechanism: &dyn Mechanism,
    instance: &Instance,
    misreports: &[Rational],
) -> Result<Vec<SpViolation>> {
    if let Some(bad) = misreports.iter().find(|x| **x < Rational::ZERO || **x > Rational::ONE) {
        return Err(Error::InvalidConfig(format!("misreport {bad} outside [0,1]")));
    }
    let mut candidates = misreports.to_vec();
    candidates.sort();
    candidates.dedup();

    let truthful = mechanism.evaluate(instance)?;
    let mut violations = Vec::new();
    for (index, agent) in instance.agents.iter().enumerate() {
        let honest = expected_agent_utility(agent, &truthful);
        for &lie in candidates.iter().filter(|&&lie| lie != agent.x) {
            let outcome = mechanism.evaluate(&instance.with_location(index, lie))?;
            let gained = expected_agent_utility(agent, &outcome);
            if gained > honest {
                violations.push(SpViolation {
                    agent: index,
                    true_location: agent.x,
                    misreport: lie,
                    truthful_utility: honest,
                    misreport_utility: gained,
                });
            }
        }
    }
    Ok(violations)
}

/// Whether the mechanism returns the same outcome on every instance. A
/// report-independent mechanism is group strategyproof outright.
pub fn check_constant_outcome(mechanism: &dyn Mechanism, instances: &[Instance]) -> Result<bool> {
    if instances.len() < 2 {
        return Err(Error::InvalidConfig("constant-outcome check needs at least two instances".into()));
    }
    let first = mechanism.evaluate(&instances[0])?.to_lottery();
    for instance in &instances[1..] {
        if mechanism.evaluate(instance)?.to_lottery() != first {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Proven worst-case ratio for a built-in mechanism on this instance. For
/// M3 the bound is refined by the branch the instance falls in.
pub fn ratio_cap(id: MechanismId, instance: &Instance) -> Rational {
    match id {
        MechanismId::M1 => q(4, 1),
        MechanismId::M2 | MechanismId::M4 => q(2, 1),
        MechanismId::M3 => m3_case_cap(instance),
    }
}

/// `2(4 − d)` for `d ≤ 1/2` and `(4 − d)/d` above it on shared-branch
/// instances, 8 on exclusive-branch instances.
pub fn m3_case_cap(instance: &Instance) -> Rational {
    let d = instance.d;
    match mechanism3_branch(instance).case {
        M3Case::Shared if d <= Rational::HALF => q(2, 1) * (q(4, 1) - d),
        M3Case::Shared => (q(4, 1) - d) / d,
        M3Case::Exclusive => q(8, 1),
    }
}

/// Cap for a registry id, if it names a built-in mechanism.
pub fn cap_for(mechanism_id: &str, instance: &Instance) -> Option<Rational> {
    mechanism_id.parse::<MechanismId>().ok().map(|id| ratio_cap(id, instance))
}

/// Every check run against one (mechanism, instance) pair.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceVerdict {
    pub instance: Instance,
    pub report: RatioReport,
    pub cap: Option<Rational>,
    pub cap_ok: bool,
    pub opt_bound: Rational,
    pub bound_ok: bool,
    pub violations: Vec<SpViolation>,
}

impl InstanceVerdict {
    pub fn passed(&self) -> bool {
        self.cap_ok && self.bound_ok && self.violations.is_empty()
    }
}

pub fn verify_instance(mechanism: &dyn Mechanism, instance: &Instance) -> Result<InstanceVerdict> {
    let report = approximation_ratio(mechanism, instance)?;
    let cap = cap_for(mechanism.id(), instance);
    let cap_ok = cap.is_none_or(|c| report.ratio.at_most(c)) && report.ratio >= Ratio::Finite(Rational::ONE);
    let opt_bound = welfare_upper_bound(instance);
    let bound_ok = report.opt_value <= opt_bound;
    let violations = check_strategyproof(mechanism, instance, &default_misreports(instance))?;
    Ok(InstanceVerdict { instance: instance.clone(), report, cap, cap_ok, opt_bound, bound_ok, violations })
}

/// Result of replaying a lower-bound construction.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub mechanism: String,
    pub ratio: Ratio,
    /// The universal bound every strategyproof mechanism of this kind obeys.
    pub bound: Rational,
    pub meets_bound: bool,
    pub visited: Vec<(Instance, Ratio)>,
}

fn two_f1_agents(x1: Rational, x2: Rational) -> Instance {
    Instance::new(
        Rational::ZERO,
        vec![Agent::new(x1, Preference::F1_ONLY), Agent::new(x2, Preference::F1_ONLY)],
    )
    .expect("probe instances are valid")
}

fn ratio_on(mechanism: &dyn Mechanism, instance: &Instance) -> Result<(Outcome, Ratio)> {
    let outcome = mechanism.evaluate(instance)?;
    let value = social_utility(instance, &outcome)?;
    Ok((outcome, Ratio::of(optimal_placement(instance).value, value)))
}

/// Replays the deterministic construction on `x = (1/3, 2/3)`, both agents
/// affected by F1 only. Where `y1` lands decides whether the ratio is read
/// off that instance or off the one with the near agent moved to its
/// endpoint. Returns the largest ratio seen.
pub fn probe_deterministic_lower_bound(mechanism: &dyn Mechanism) -> Result<ProbeReport> {
    let base = two_f1_agents(q(1, 3), q(2, 3));
    let (outcome, base_ratio) = ratio_on(mechanism, &base)?;
    let Outcome::Deterministic(placement) = outcome else {
        return Err(Error::NotApplicable {
            mechanism: mechanism.id().to_string(),
            reason: "deterministic probe needs a deterministic mechanism".into(),
        });
    };
    let mut visited = vec![(base.clone(), base_ratio)];
    let y1 = placement.y1;
    let follow_up = if y1 < q(1, 3) {
        Some(two_f1_agents(Rational::ZERO, q(2, 3)))
    } else if y1 > q(2, 3) {
        // mirror image of the previous construction
        Some(two_f1_agents(q(1, 3), Rational::ONE))
    } else {
        None
    };
    if let Some(instance) = follow_up {
        let (_, ratio) = ratio_on(mechanism, &instance)?;
        visited.push((instance, ratio));
    }
    let ratio = visited.iter().map(|(_, r)| *r).max().expect("base instance always visited");
    let bound = q(2, 1);
    Ok(ProbeReport { mechanism: mechanism.id().to_string(), ratio, bound, meets_bound: ratio >= Ratio::Finite(bound), visited })
}

/// Replays the randomized construction on `x = (1/6, 5/6)`. The agent
/// whose expected distance to F1 is at most 1/2 is moved to her endpoint,
/// and the ratio on that second instance is returned. With
/// `wrap_deterministic` a deterministic outcome is treated as a point mass.
pub fn probe_randomized_lower_bound(mechanism: &dyn Mechanism, wrap_deterministic: bool) -> Result<ProbeReport> {
    let base = two_f1_agents(q(1, 6), q(5, 6));
    let (outcome, base_ratio) = ratio_on(mechanism, &base)?;
    if outcome.is_deterministic() && !wrap_deterministic {
        return Err(Error::NotApplicable {
            mechanism: mechanism.id().to_string(),
            reason: "randomized probe needs a mechanism returning a lottery".into(),
        });
    }
    let lottery = outcome.to_lottery();
    let far_right = lottery.expect(|pl| pl.y1.dist(q(5, 6)));
    let follow_up = if far_right <= Rational::HALF {
        two_f1_agents(q(1, 6), Rational::ONE)
    } else {
        two_f1_agents(Rational::ZERO, q(5, 6))
    };
    let (_, ratio) = ratio_on(mechanism, &follow_up)?;
    let bound = q(14, 13);
    Ok(ProbeReport {
        mechanism: mechanism.id().to_string(),
        ratio,
        bound,
        meets_bound: ratio >= Ratio::Finite(bound),
        visited: vec![(base, base_ratio), (follow_up, ratio)],
    })
}
