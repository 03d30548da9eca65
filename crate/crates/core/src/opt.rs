//! Optimal social utility.
//!
//! Social utility is a sum of convex functions of `(y1, y2)`, so on each
//! convex piece of the feasible region `{|y1 − y2| ≥ d} ∩ [0,1]²` its maximum
//! sits at a vertex. For `0 < d < 1` the region is two triangles; at the
//! extremes it degenerates to the square (`d = 0`) or two points (`d = 1`).
//! `optimal_placement` enumerates those vertices; `brute_force_opt` is an
//! independent grid oracle evaluated in scaled integer arithmetic.

use num_integer::Integer;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{placement_welfare, Instance, Placement};
use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OptResult {
    pub placement: Placement,
    pub value: Rational,
    pub candidates_evaluated: usize,
}

/// Vertices of the feasible region, deduplicated and sorted.
pub fn feasible_vertices(d: Rational) -> Result<Vec<Placement>> {
    if d < Rational::ZERO || d > Rational::ONE {
        return Err(Error::InvalidConfig(format!("minimum distance {d} outside [0,1]")));
    }
    let (zero, one) = (Rational::ZERO, Rational::ONE);
    let mut vertices = vec![
        // y2 ≥ y1 + d
        Placement::new(zero, d),
        Placement::new(zero, one),
        Placement::new(one - d, one),
        // y1 ≥ y2 + d
        Placement::new(d, zero),
        Placement::new(one, zero),
        Placement::new(one, one - d),
    ];
    vertices.sort();
    vertices.dedup();
    Ok(vertices)
}

/// Exact optimum by vertex enumeration; ties go to the lexicographically
/// smallest placement.
pub fn optimal_placement(instance: &Instance) -> OptResult {
    let vertices = feasible_vertices(instance.d).expect("instance distance validated on construction");
    let mut best: Option<(Placement, Rational)> = None;
    for &vertex in &vertices {
        let value = placement_welfare(instance, &vertex);
        if best.is_none_or(|(_, v)| value > v) {
            best = Some((vertex, value));
        }
    }
    let (placement, value) = best.expect("feasible region always has a vertex");
    OptResult { placement, value, candidates_evaluated: vertices.len() }
}

/// Grid oracle over `{k/m}²` with the vertex candidates force-included.
pub fn brute_force_opt(instance: &Instance, resolution: u32) -> Result<OptResult> {
    grid_opt(instance, resolution, true)
}

/// Exhaustive search over all feasible pairs `(k/m, l/m)`, optionally
/// adding the vertex candidates. Evaluation is done on integers scaled by
/// the least common denominator, independently of `Rational` arithmetic.
pub fn grid_opt(instance: &Instance, resolution: u32, include_vertices: bool) -> Result<OptResult> {
    if resolution == 0 {
        return Err(Error::InvalidConfig("grid resolution must be at least 1".into()));
    }
    let m = i128::from(resolution);
    let scale = instance
        .agents
        .iter()
        .map(|a| a.x.denom())
        .chain([m, instance.d.denom()])
        .fold(1i128, |acc, den| acc.lcm(&den));
    let to_scaled = |r: Rational| r.numer() * (scale / r.denom());
    let xs: Vec<(i128, bool, bool)> =
        instance.agents.iter().map(|a| (to_scaled(a.x), a.p.p1, a.p.p2)).collect();
    let min_sep = to_scaled(instance.d);

    // per-coordinate partial sums: F1 side and F2 side
    let column = |y: i128| -> (i128, i128) {
        xs.iter().fold((0, 0), |(s1, s2), &(x, p1, p2)| {
            let dist = (x - y).abs();
            (s1 + if p1 { dist } else { 0 }, s2 + if p2 { dist } else { 0 })
        })
    };

    let step = scale / m;
    let grid: Vec<(i128, (i128, i128))> = (0..=m).map(|k| (k * step, column(k * step))).collect();

    let mut best: Option<((i128, i128), i128)> = None;
    let mut evaluated = 0usize;
    let consider = |pair: (i128, i128), value: i128, best: &mut Option<((i128, i128), i128)>| {
        let better = match *best {
            None => true,
            Some((p, v)) => value > v || (value == v && pair < p),
        };
        if better {
            *best = Some((pair, value));
        }
    };

    for &(y1, (s1, _)) in &grid {
        for &(y2, (_, s2)) in &grid {
            if (y1 - y2).abs() < min_sep {
                continue;
            }
            evaluated += 1;
            consider((y1, y2), s1 + s2, &mut best);
        }
    }
    if include_vertices {
        for vertex in feasible_vertices(instance.d)? {
            let (y1, y2) = (to_scaled(vertex.y1), to_scaled(vertex.y2));
            evaluated += 1;
            consider((y1, y2), column(y1).0 + column(y2).1, &mut best);
        }
    }

    let ((y1, y2), value) = best.ok_or_else(|| {
        Error::InvalidConfig(format!("no grid point with resolution {resolution} is feasible for d = {}", instance.d))
    })?;
    let unscale = |v: i128| Rational::new(v, scale);
    Ok(OptResult {
        placement: Placement::new(unscale(y1), unscale(y2)),
        value: unscale(value),
        candidates_evaluated: evaluated,
    })
}

/// `n + (1 − d)·|N1 ∩ N2|`: no feasible placement does better.
pub fn welfare_upper_bound(instance: &Instance) -> Rational {
    let both = instance.partition_counts().both;
    Rational::from(instance.n()) + (Rational::ONE - instance.d) * Rational::from(both)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Agent, Preference};
    use crate::rational::q;
    use proptest::prelude::*;

    fn pl(a: Rational, b: Rational) -> Placement {
        Placement::new(a, b)
    }

    fn inst(d: Rational, pairs: &[(Rational, Preference)]) -> Instance {
        Instance::from_pairs(d, pairs).unwrap()
    }

    #[test]
    fn vertex_sets() {
        let (z, o) = (q(0, 1), q(1, 1));
        assert_eq!(feasible_vertices(z).unwrap(), vec![pl(z, z), pl(z, o), pl(o, z), pl(o, o)]);
        let h = q(1, 2);
        assert_eq!(
            feasible_vertices(h).unwrap(),
            vec![pl(z, h), pl(z, o), pl(h, z), pl(h, o), pl(o, z), pl(o, h)]
        );
        assert_eq!(feasible_vertices(o).unwrap(), vec![pl(z, o), pl(o, z)]);
        assert!(feasible_vertices(q(3, 2)).is_err());
        assert!(feasible_vertices(q(-1, 2)).is_err());
    }

    #[test]
    fn optimum_examples() {
        let two = inst(q(0, 1), &[(q(1, 3), Preference::F1_ONLY), (q(2, 3), Preference::F1_ONLY)]);
        let opt = optimal_placement(&two);
        assert_eq!(opt.value, q(1, 1));
        assert_eq!(opt.placement, pl(q(0, 1), q(0, 1)));

        let shifted = inst(q(0, 1), &[(q(1, 6), Preference::F1_ONLY), (q(1, 1), Preference::F1_ONLY)]);
        assert_eq!(optimal_placement(&shifted).value, q(7, 6));

        let single = inst(q(1, 1), &[(q(1, 2), Preference::BOTH)]);
        let opt = optimal_placement(&single);
        assert_eq!(opt.value, q(1, 1));
        assert_eq!(opt.placement, pl(q(0, 1), q(1, 1)));
        assert_eq!(opt.candidates_evaluated, 2);
    }

    #[test]
    fn empty_instance_optimum_is_zero() {
        let empty = inst(q(1, 3), &[]);
        assert_eq!(optimal_placement(&empty).value, Rational::ZERO);
        assert_eq!(brute_force_opt(&empty, 5).unwrap().value, Rational::ZERO);
    }

    #[test]
    fn grid_oracle_examples() {
        let two = inst(q(0, 1), &[(q(1, 3), Preference::F1_ONLY), (q(2, 3), Preference::F1_ONLY)]);
        assert_eq!(brute_force_opt(&two, 3).unwrap().value, q(1, 1));
        let single = inst(q(1, 2), &[(q(1, 2), Preference::BOTH)]);
        let res = brute_force_opt(&single, 2).unwrap();
        assert_eq!(res.value, q(1, 1));
        assert_eq!(res.placement, pl(q(0, 1), q(1, 1)));
        assert!(brute_force_opt(&single, 0).is_err());
    }

    #[test]
    fn pure_grid_can_miss_vertices() {
        // d = 1/3 on a halves grid: the vertex (0, 1/3) is off-grid
        let i = inst(q(1, 3), &[(q(1, 1), Preference::F1_ONLY), (q(1, 1), Preference::F2_ONLY)]);
        let exact = optimal_placement(&i).value;
        assert_eq!(exact, q(5, 3));
        assert_eq!(grid_opt(&i, 2, false).unwrap().value, q(3, 2));
        assert_eq!(brute_force_opt(&i, 2).unwrap().value, exact);
    }

    #[test]
    fn upper_bound_examples() {
        let two = inst(q(0, 1), &[(q(1, 3), Preference::F1_ONLY), (q(2, 3), Preference::F1_ONLY)]);
        assert_eq!(welfare_upper_bound(&two), q(2, 1));
        let single = inst(q(1, 2), &[(q(1, 2), Preference::BOTH)]);
        assert_eq!(welfare_upper_bound(&single), q(3, 2));
        assert_eq!(welfare_upper_bound(&inst(q(0, 1), &[])), Rational::ZERO);
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        let agent = (0i128..=12, 0usize..3).prop_map(|(k, p)| Agent::new(q(k, 12), Preference::ALL[p]));
        (prop::sample::select(vec![q(0, 1), q(1, 3), q(1, 2), q(3, 4), q(1, 1)]), prop::collection::vec(agent, 0..7))
            .prop_map(|(d, agents)| Instance { d, agents })
    }

    proptest! {
        #[test]
        fn oracle_agrees(i in arb_instance(), m in 1u32..13) {
            let exact = optimal_placement(&i);
            let oracle = brute_force_opt(&i, m).unwrap();
            prop_assert_eq!(exact.value, oracle.value);
            prop_assert!(exact.placement.is_feasible(i.d));
            prop_assert_eq!(placement_welfare(&i, &oracle.placement), oracle.value);
            if let Ok(pure) = grid_opt(&i, m, false) {
                prop_assert!(pure.value <= exact.value);
            }
        }

        #[test]
        fn dense_grid_is_close(i in arb_instance()) {
            let m = 240u32;
            let pure = grid_opt(&i, m, false).unwrap();
            let exact = optimal_placement(&i).value;
            let slack = q(2 * i.n() as i128, i128::from(m));
            prop_assert!(exact - pure.value <= slack);
        }

        #[test]
        fn bounded_by_welfare_bound(i in arb_instance()) {
            prop_assert!(optimal_placement(&i).value <= welfare_upper_bound(&i));
        }

        #[test]
        fn symmetric_under_reordering_and_reflection(i in arb_instance()) {
            let value = optimal_placement(&i).value;
            let mut reversed = i.clone();
            reversed.agents.reverse();
            prop_assert_eq!(optimal_placement(&reversed).value, value);
            prop_assert_eq!(optimal_placement(&i.reflect()).value, value);
        }
    }
}
