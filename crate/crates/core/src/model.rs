//! Instances, placements, lotteries and the utilitarian objective.
//!
//! Agents live on the unit interval and dislike the facilities that affect
//! them: an agent's utility is the sum of her distances to those facilities.
//! Everything here is immutable once built and every evaluation is exact.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Which of the two facilities affect an agent. `(false, false)` is
/// representable so that validation can report it, but never valid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Preference {
    pub p1: bool,
    pub p2: bool,
}

impl Preference {
    pub const F1_ONLY: Preference = Preference { p1: true, p2: false };
    pub const F2_ONLY: Preference = Preference { p1: false, p2: true };
    pub const BOTH: Preference = Preference { p1: true, p2: true };

    /// The three valid preferences, in the order `(1,0), (0,1), (1,1)`.
    pub const ALL: [Preference; 3] = [Self::F1_ONLY, Self::F2_ONLY, Self::BOTH];

    pub fn new(p1: bool, p2: bool) -> Self {
        Preference { p1, p2 }
    }

    pub fn is_valid(&self) -> bool {
        self.p1 || self.p2
    }

    /// Whether facility `j` (1 or 2) affects this agent.
    pub fn affected_by(&self, j: usize) -> bool {
        match j {
            1 => self.p1,
            2 => self.p2,
            _ => panic!("facility index must be 1 or 2, got {j}"),
        }
    }
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", u8::from(self.p1), u8::from(self.p2))
    }
}

impl Serialize for Preference {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [u8::from(self.p1), u8::from(self.p2)].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Preference {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [a, b] = <[u8; 2]>::deserialize(deserializer)?;
        let bit = |v: u8| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("preference entries must be 0 or 1, got {other}"))),
        };
        Ok(Preference { p1: bit(a)?, p2: bit(b)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Agent {
    pub x: Rational,
    pub p: Preference,
}

impl Agent {
    pub fn new(x: Rational, p: Preference) -> Self {
        Agent { x, p }
    }
}

/// A profile of reported agents plus the minimum-distance constraint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub d: Rational,
    pub agents: Vec<Agent>,
}

/// One broken instance invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    LocationOutOfRange { index: usize, x: Rational },
    DistanceOutOfRange { d: Rational },
    ForbiddenPreference { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LocationOutOfRange { index, x } => {
                write!(f, "location out of [0,1] at index {index} (x = {x})")
            }
            Violation::DistanceOutOfRange { d } => {
                write!(f, "minimum distance out of [0,1] (d = {d})")
            }
            Violation::ForbiddenPreference { index } => {
                write!(f, "preference (0,0) forbidden at index {index}")
            }
        }
    }
}

fn in_unit_interval(v: Rational) -> bool {
    v >= Rational::ZERO && v <= Rational::ONE
}

/// Cardinalities of the preference classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionCounts {
    /// |N1|
    pub n1: usize,
    /// |N2|
    pub n2: usize,
    /// |N1 ∩ N2|
    pub both: usize,
    /// |N1 \ N2|
    pub only1: usize,
    /// |N2 \ N1|
    pub only2: usize,
}

impl PartitionCounts {
    pub fn as_tuple(&self) -> (usize, usize, usize, usize, usize) {
        (self.n1, self.n2, self.both, self.only1, self.only2)
    }
}

impl Instance {
    /// Builds an instance, rejecting it if any invariant is violated.
    pub fn new(d: Rational, agents: Vec<Agent>) -> Result<Self> {
        let instance = Instance { d, agents };
        instance.validate().map_err(Error::InvalidInstance)?;
        Ok(instance)
    }

    /// Convenience for the common all-rational case: `(x, p)` pairs.
    pub fn from_pairs(d: Rational, pairs: &[(Rational, Preference)]) -> Result<Self> {
        Instance::new(d, pairs.iter().map(|&(x, p)| Agent::new(x, p)).collect())
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn locations(&self) -> impl Iterator<Item = Rational> + '_ {
        self.agents.iter().map(|a| a.x)
    }

    /// Every violated invariant, in index order (distance first).
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        if !in_unit_interval(self.d) {
            violations.push(Violation::DistanceOutOfRange { d: self.d });
        }
        for (index, agent) in self.agents.iter().enumerate() {
            if !in_unit_interval(agent.x) {
                violations.push(Violation::LocationOutOfRange { index, x: agent.x });
            }
            if !agent.p.is_valid() {
                violations.push(Violation::ForbiddenPreference { index });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn partition_counts(&self) -> PartitionCounts {
        let mut counts = PartitionCounts { n1: 0, n2: 0, both: 0, only1: 0, only2: 0 };
        for agent in &self.agents {
            match (agent.p.p1, agent.p.p2) {
                (true, true) => counts.both += 1,
                (true, false) => counts.only1 += 1,
                (false, true) => counts.only2 += 1,
                (false, false) => {}
            }
        }
        counts.n1 = counts.only1 + counts.both;
        counts.n2 = counts.only2 + counts.both;
        counts
    }

    /// Replaces agent `index`'s reported location.
    pub fn with_location(&self, index: usize, x: Rational) -> Instance {
        let mut next = self.clone();
        next.agents[index].x = x;
        next
    }

    /// The mirror image under `x ↦ 1 − x`.
    pub fn reflect(&self) -> Instance {
        Instance {
            d: self.d,
            agents: self.agents.iter().map(|a| Agent::new(a.x.reflect(), a.p)).collect(),
        }
    }

    /// Parses the canonical JSON schema and validates the result.
    pub fn from_json(text: &str) -> Result<Self> {
        let instance: Instance = serde_json::from_str(text)?;
        instance.validate().map_err(Error::InvalidInstance)?;
        Ok(instance)
    }

    /// Compact canonical JSON: `{"d":..,"agents":[{"x":..,"p":[..]},..]}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serialization is infallible")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization is infallible")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_json().as_bytes());
        hex::encode(&hash[..8])
    }
}

/// A facility location profile `(y1, y2)`. Ordered lexicographically.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub y1: Rational,
    pub y2: Rational,
}

impl Placement {
    pub fn new(y1: Rational, y2: Rational) -> Self {
        Placement { y1, y2 }
    }

    pub fn separation(&self) -> Rational {
        self.y1.dist(self.y2)
    }

    pub fn is_feasible(&self, d: Rational) -> bool {
        in_unit_interval(self.y1) && in_unit_interval(self.y2) && self.separation() >= d
    }

    pub fn reflect(&self) -> Placement {
        Placement::new(self.y1.reflect(), self.y2.reflect())
    }

    /// Location of facility `j` (1 or 2).
    pub fn facility(&self, j: usize) -> Rational {
        match j {
            1 => self.y1,
            2 => self.y2,
            _ => panic!("facility index must be 1 or 2, got {j}"),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.y1, self.y2)
    }
}

impl fmt::Debug for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A finite distribution over placements, kept sorted by placement.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Lottery {
    support: Vec<(Placement, Rational)>,
}

impl Lottery {
    pub fn new(entries: Vec<(Placement, Rational)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidLottery("empty support".into()));
        }
        if let Some((placement, p)) = entries.iter().find(|(_, p)| p.is_negative()) {
            return Err(Error::InvalidLottery(format!("negative probability {p} on {placement}")));
        }
        let total: Rational = entries.iter().map(|(_, p)| *p).sum();
        if total != Rational::ONE {
            return Err(Error::InvalidLottery(format!("probabilities sum to {total}, not 1")));
        }
        let mut support = entries;
        support.sort_by_key(|a| a.0);
        if let Some(w) = support.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidLottery(format!("duplicate placement {}", w[0].0)));
        }
        Ok(Lottery { support })
    }

    /// Uniform lottery over distinct placements.
    pub fn uniform(placements: &[Placement]) -> Result<Self> {
        let p = Rational::new(1, placements.len().max(1) as i128);
        Lottery::new(placements.iter().map(|&pl| (pl, p)).collect())
    }

    pub fn point(placement: Placement) -> Self {
        Lottery { support: vec![(placement, Rational::ONE)] }
    }

    pub fn support(&self) -> &[(Placement, Rational)] {
        &self.support
    }

    /// Expectation of `f` over the lottery.
    pub fn expect(&self, mut f: impl FnMut(&Placement) -> Rational) -> Rational {
        self.support.iter().map(|(pl, p)| *p * f(pl)).sum()
    }
}

impl fmt::Display for Lottery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (pl, p)) in self.support.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{pl}: {p}")?;
        }
        f.write_str("}")
    }
}

/// What a mechanism returns: one placement, or the full lottery of a
/// randomized mechanism (never a sample).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Deterministic(Placement),
    Randomized(Lottery),
}

impl Outcome {
    pub fn is_deterministic(&self) -> bool {
        matches!(self, Outcome::Deterministic(_))
    }

    /// The equivalent lottery (a point mass for deterministic outcomes).
    pub fn to_lottery(&self) -> Lottery {
        match self {
            Outcome::Deterministic(pl) => Lottery::point(*pl),
            Outcome::Randomized(l) => l.clone(),
        }
    }

    pub fn placements(&self) -> Vec<Placement> {
        match self {
            Outcome::Deterministic(pl) => vec![*pl],
            Outcome::Randomized(l) => l.support().iter().map(|(pl, _)| *pl).collect(),
        }
    }

    pub fn expect(&self, mut f: impl FnMut(&Placement) -> Rational) -> Rational {
        match self {
            Outcome::Deterministic(pl) => f(pl),
            Outcome::Randomized(l) => l.expect(f),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Deterministic(pl) => write!(f, "{pl}"),
            Outcome::Randomized(l) => write!(f, "{l}"),
        }
    }
}

impl From<Placement> for Outcome {
    fn from(pl: Placement) -> Self {
        Outcome::Deterministic(pl)
    }
}

impl From<Lottery> for Outcome {
    fn from(l: Lottery) -> Self {
        Outcome::Randomized(l)
    }
}

/// `p1·|x − y1| + p2·|x − y2|`.
pub fn agent_utility(agent: &Agent, placement: &Placement) -> Rational {
    let mut u = Rational::ZERO;
    if agent.p.p1 {
        u += agent.x.dist(placement.y1);
    }
    if agent.p.p2 {
        u += agent.x.dist(placement.y2);
    }
    u
}

pub fn expected_agent_utility(agent: &Agent, outcome: &Outcome) -> Rational {
    outcome.expect(|pl| agent_utility(agent, pl))
}

/// Social utility of a single placement, without the feasibility check.
pub fn placement_welfare(instance: &Instance, placement: &Placement) -> Rational {
    instance.agents.iter().map(|a| agent_utility(a, placement)).sum()
}

/// Expected social utility; fails if any placement in the outcome
/// violates the instance's minimum distance.
pub fn social_utility(instance: &Instance, outcome: &Outcome) -> Result<Rational> {
    for placement in outcome.placements() {
        if !placement.is_feasible(instance.d) {
            return Err(Error::Infeasible { placement, d: instance.d });
        }
    }
    Ok(outcome.expect(|pl| placement_welfare(instance, pl)))
}
