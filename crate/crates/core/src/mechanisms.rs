//! The four strategyproof mechanisms and a registry for dispatching by id.
//!
//! Every mechanism reads locations only through the indicator `x ≤ 1/2`
//! (the closed left half). Randomized mechanisms return their whole lottery.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Instance, Lottery, Outcome, Placement};
use crate::rational::Rational;

pub trait Mechanism: Send + Sync {
    /// Registry key, e.g. `"M3"`.
    fn id(&self) -> &str;

    fn evaluate(&self, instance: &Instance) -> Result<Outcome>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MechanismId {
    M1,
    M2,
    M3,
    M4,
}

impl MechanismId {
    pub const ALL: [MechanismId; 4] = [MechanismId::M1, MechanismId::M2, MechanismId::M3, MechanismId::M4];

    pub fn as_str(&self) -> &'static str {
        match self {
            MechanismId::M1 => "M1",
            MechanismId::M2 => "M2",
            MechanismId::M3 => "M3",
            MechanismId::M4 => "M4",
        }
    }

    /// M1 and M2 only run without a distance constraint.
    pub fn requires_zero_distance(&self) -> bool {
        matches!(self, MechanismId::M1 | MechanismId::M2)
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self, MechanismId::M2 | MechanismId::M4)
    }

    pub fn is_applicable(&self, d: Rational) -> bool {
        !self.requires_zero_distance() || d.is_zero()
    }

    pub fn mechanism(&self) -> Arc<dyn Mechanism> {
        match self {
            MechanismId::M1 => Arc::new(Mechanism1),
            MechanismId::M2 => Arc::new(Mechanism2),
            MechanismId::M3 => Arc::new(Mechanism3),
            MechanismId::M4 => Arc::new(Mechanism4),
        }
    }
}

impl fmt::Display for MechanismId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MechanismId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownMechanism(s.to_string()))
    }
}

fn is_left(x: Rational) -> bool {
    x <= Rational::HALF
}

fn require_zero_distance(id: MechanismId, instance: &Instance) -> Result<()> {
    if instance.d.is_zero() {
        Ok(())
    } else {
        Err(Error::NotApplicable {
            mechanism: id.to_string(),
            reason: format!("requires d = 0, instance has d = {}", instance.d),
        })
    }
}

/// Majority vote per facility: `y_j = 1` iff strictly more than half of
/// `N_j` sits in `[0, 1/2]`, else `y_j = 0`. An empty `N_j` gives 0.
pub fn mechanism1(instance: &Instance) -> Result<Placement> {
    require_zero_distance(MechanismId::M1, instance)?;
    let side = |j: usize| {
        let (members, left) = instance
            .agents
            .iter()
            .filter(|a| a.p.affected_by(j))
            .fold((0usize, 0usize), |(m, l), a| (m + 1, l + usize::from(is_left(a.x))));
        if 2 * left > members {
            Rational::ONE
        } else {
            Rational::ZERO
        }
    };
    Ok(Placement::new(side(1), side(2)))
}

/// The four corners with probability 1/4 each.
pub fn mechanism2(instance: &Instance) -> Result<Lottery> {
    require_zero_distance(MechanismId::M2, instance)?;
    Ok(corner_lottery())
}

fn corner_lottery() -> Lottery {
    let (zero, one) = (Rational::ZERO, Rational::ONE);
    Lottery::uniform(&[
        Placement::new(zero, zero),
        Placement::new(zero, one),
        Placement::new(one, zero),
        Placement::new(one, one),
    ])
    .expect("corner lottery is well formed")
}

/// Which branch Mechanism 3 takes on an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum M3Case {
    /// `|N1 ∩ N2| ≥ |N_j* \ N_3−j*|`: the shared agents vote, facilities
    /// are placed exactly `d` apart.
    Shared,
    /// `|N_j* \ N_3−j*| > |N1 ∩ N2|`: the exclusive agents of `F_j*` vote,
    /// facilities go to opposite endpoints.
    Exclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct M3Branch {
    /// The facility `j*` with the larger exclusive group (1 on ties).
    pub j_star: usize,
    pub case: M3Case,
}

pub fn mechanism3_branch(instance: &Instance) -> M3Branch {
    let counts = instance.partition_counts();
    let (j_star, exclusive) = if counts.only2 > counts.only1 { (2, counts.only2) } else { (1, counts.only1) };
    let case = if counts.both >= exclusive { M3Case::Shared } else { M3Case::Exclusive };
    M3Branch { j_star, case }
}

pub fn mechanism3(instance: &Instance) -> Placement {
    let branch = mechanism3_branch(instance);
    let j_star = branch.j_star;
    let (n_left, n_right) = instance
        .agents
        .iter()
        .filter(|a| match branch.case {
            M3Case::Shared => a.p.p1 && a.p.p2,
            M3Case::Exclusive => a.p.affected_by(j_star) && !a.p.affected_by(3 - j_star),
        })
        .fold((0usize, 0usize), |(l, r), a| if is_left(a.x) { (l + 1, r) } else { (l, r + 1) });
    let d = instance.d;
    // (y_j*, y_3−j*)
    let (main, other) = match (branch.case, n_left >= n_right) {
        (M3Case::Shared, true) => (Rational::ONE, Rational::ONE - d),
        (M3Case::Shared, false) => (Rational::ZERO, d),
        (M3Case::Exclusive, true) => (Rational::ONE, Rational::ZERO),
        (M3Case::Exclusive, false) => (Rational::ZERO, Rational::ONE),
    };
    if j_star == 1 {
        Placement::new(main, other)
    } else {
        Placement::new(other, main)
    }
}

/// `(0, 1)` and `(1, 0)` with probability 1/2 each; feasible for every d.
pub fn mechanism4(_instance: &Instance) -> Lottery {
    let (zero, one) = (Rational::ZERO, Rational::ONE);
    Lottery::uniform(&[Placement::new(zero, one), Placement::new(one, zero)])
        .expect("endpoint lottery is well formed")
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Mechanism1;
#[derive(Clone, Copy, Debug, Default)]
pub struct Mechanism2;
#[derive(Clone, Copy, Debug, Default)]
pub struct Mechanism3;
#[derive(Clone, Copy, Debug, Default)]
pub struct Mechanism4;

impl Mechanism for Mechanism1 {
    fn id(&self) -> &str {
        "M1"
    }

    fn evaluate(&self, instance: &Instance) -> Result<Outcome> {
        mechanism1(instance).map(Outcome::Deterministic)
    }
}

impl Mechanism for Mechanism2 {
    fn id(&self) -> &str {
        "M2"
    }

    fn evaluate(&self, instance: &Instance) -> Result<Outcome> {
        mechanism2(instance).map(Outcome::Randomized)
    }
}

impl Mechanism for Mechanism3 {
    fn id(&self) -> &str {
        "M3"
    }

    fn evaluate(&self, instance: &Instance) -> Result<Outcome> {
        Ok(Outcome::Deterministic(mechanism3(instance)))
    }
}

impl Mechanism for Mechanism4 {
    fn id(&self) -> &str {
        "M4"
    }

    fn evaluate(&self, instance: &Instance) -> Result<Outcome> {
        Ok(Outcome::Randomized(mechanism4(instance)))
    }
}

/// Ignores the reports and always returns the same outcome. Infeasible
/// outcomes are reported as inapplicable.
#[derive(Clone, Debug)]
pub struct ConstantMechanism {
    id: String,
    outcome: Outcome,
}

impl ConstantMechanism {
    pub fn new(id: impl Into<String>, outcome: impl Into<Outcome>) -> Self {
        ConstantMechanism { id: id.into(), outcome: outcome.into() }
    }
}

impl Mechanism for ConstantMechanism {
    fn id(&self) -> &str {
        &self.id
    }

    fn evaluate(&self, instance: &Instance) -> Result<Outcome> {
        if let Some(bad) = self.outcome.placements().into_iter().find(|pl| !pl.is_feasible(instance.d)) {
            return Err(Error::NotApplicable {
                mechanism: self.id.clone(),
                reason: format!("placement {bad} infeasible for d = {}", instance.d),
            });
        }
        Ok(self.outcome.clone())
    }
}

/// Negative control: puts both facilities on the first agent's report.
/// Any agent affected by F1 gains by reporting an endpoint far from herself,
/// so a strategyproofness checker must flag it.
#[derive(Clone, Copy, Debug, Default)]
pub struct FollowFirstAgent;

impl FollowFirstAgent {
    pub const ID: &'static str = "BROKEN";
}

impl Mechanism for FollowFirstAgent {
    fn id(&self) -> &str {
        Self::ID
    }

    fn evaluate(&self, instance: &Instance) -> Result<Outcome> {
        if !instance.d.is_zero() {
            return Err(Error::NotApplicable {
                mechanism: Self::ID.into(),
                reason: format!("requires d = 0, instance has d = {}", instance.d),
            });
        }
        let y = instance.agents.first().map_or(Rational::ZERO, |a| a.x);
        Ok(Outcome::Deterministic(Placement::new(y, y)))
    }
}

/// Mechanisms keyed by id. Iteration order is the key order.
#[derive(Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, Arc<dyn Mechanism>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// M1–M4.
    pub fn standard() -> Self {
        let mut registry = Registry::empty();
        for id in MechanismId::ALL {
            registry.register(id.mechanism());
        }
        registry
    }

    /// M1–M4 plus the `BROKEN` negative control.
    pub fn with_controls() -> Self {
        let mut registry = Registry::standard();
        registry.register(Arc::new(FollowFirstAgent));
        registry
    }

    /// Adds or replaces a mechanism under its own id.
    pub fn register(&mut self, mechanism: Arc<dyn Mechanism>) {
        self.entries.insert(mechanism.id().to_string(), mechanism);
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn Mechanism>> {
        self.entries
            .get(id)
            .or_else(|| self.entries.iter().find(|(k, _)| k.eq_ignore_ascii_case(id)).map(|(_, v)| v))
            .cloned()
            .ok_or_else(|| Error::UnknownMechanism(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
