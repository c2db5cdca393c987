//! The coordination game that drives link creation and deletion.
//!
//! Agent `i` earns `b` per unit of each active neighbor's coordination level
//! and pays `c * x_i` per active link:
//!
//! ```text
//! f_i(x) = b * sum_{j active} x_j  -  c * |active(i)| * x_i .
//! ```
//!
//! Creating link `(i,j)` changes `f_i` by `b*x_j - c*x_i`; dropping it by the
//! negation. Both endpoints' deltas are summed and squashed through tanh to
//! give the Bernoulli success probabilities for keeping an active link
//! ([`weight_maintain`]) or creating an inactive one ([`weight_create`]).
//! The two expressions are kept separate even though they agree for equal
//! arguments; tests assert the equality instead.
//!
//! `tanh` comes from `libm` so weights (and therefore whole trajectories)
//! are bit-identical across platforms.

use crate::topology::{EdgeState, FeasibleGraph};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Per-unit benefit `b` and cost `c` of coordination, with `b > c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub b: f64,
    pub c: f64,
}

impl GameParams {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        if !(b.is_finite() && c.is_finite() && b > c && c > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "game parameters must satisfy b > c > 0, got b={b}, c={c}"
            )));
        }
        Ok(Self { b, c })
    }
}

impl Default for GameParams {
    fn default() -> Self {
        Self { b: 5.0, c: 4.0 }
    }
}

/// Fitness of vertex `i` given the current state and active links.
pub fn fitness(
    i: usize,
    x: &[f64],
    g: &FeasibleGraph,
    state: &EdgeState,
    params: &GameParams,
) -> f64 {
    debug_assert_eq!(state.len(), g.edge_count());
    let mut neighbor_sum = 0.0;
    let mut active_degree = 0usize;
    for (idx, &(a, b)) in g.edges().iter().enumerate() {
        if !state.is_active(idx) {
            continue;
        }
        if a as usize == i {
            neighbor_sum += x[b as usize];
            active_degree += 1;
        } else if b as usize == i {
            neighbor_sum += x[a as usize];
            active_degree += 1;
        }
    }
    params.b * neighbor_sum - params.c * active_degree as f64 * x[i]
}

/// Fitness change for `i` from creating link `(i,j)`: `b*x_j - c*x_i`.
pub fn delta_fitness_create(x_i: f64, x_j: f64, params: &GameParams) -> f64 {
    params.b * x_j - params.c * x_i
}

/// Fitness change for `i` from dropping link `(i,j)`: `c*x_i - b*x_j`.
pub fn delta_fitness_drop(x_i: f64, x_j: f64, params: &GameParams) -> f64 {
    params.c * x_i - params.b * x_j
}

/// Probability of keeping an active link:
/// `1/2 - 1/2 * tanh((c-b)(x_i+x_j))`.
///
/// For `b > c` and states in `[0,1]` this lies in `[1/2, 1)`.
pub fn weight_maintain(x_i: f64, x_j: f64, params: &GameParams) -> f64 {
    0.5 - 0.5 * libm::tanh((params.c - params.b) * (x_i + x_j))
}

/// Probability of creating an inactive link:
/// `1/2 + 1/2 * tanh((b-c)(x_i+x_j))`.
pub fn weight_create(x_i: f64, x_j: f64, params: &GameParams) -> f64 {
    0.5 + 0.5 * libm::tanh((params.b - params.c) * (x_i + x_j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::init_active_sets;
    use crate::{rng::trial_rng, topology::FeasibleGraph};
    use proptest::prelude::*;

    fn b5c4() -> GameParams {
        GameParams::new(5.0, 4.0).unwrap()
    }

    #[test]
    fn params_reject_bad_orderings() {
        assert!(GameParams::new(4.0, 5.0).is_err());
        assert!(GameParams::new(5.0, 5.0).is_err());
        assert!(GameParams::new(5.0, 0.0).is_err());
        assert!(GameParams::new(5.0, -1.0).is_err());
        assert!(GameParams::new(f64::NAN, 1.0).is_err());
        assert!(GameParams::new(5.0, 4.0).is_ok());
    }

    #[test]
    fn fitness_of_isolated_vertex_is_zero() {
        let g = FeasibleGraph::complete(3).unwrap();
        let state = EdgeState::all_inactive(g.edge_count());
        let x = [0.3, 0.9, 0.1];
        for i in 0..3 {
            assert_eq!(fitness(i, &x, &g, &state, &b5c4()), 0.0);
        }
    }

    #[test]
    fn fitness_matches_hand_arithmetic() {
        // vertex 0 active with neighbors holding 0.2 and 0.4, own value 0.5:
        // 5*(0.2+0.4) - 4*2*0.5 = -1
        let g = FeasibleGraph::from_edges(3, [(0, 1), (0, 2)]).unwrap();
        let state = EdgeState::from_flags(vec![true, true]);
        let x = [0.5, 0.2, 0.4];
        assert!((fitness(0, &x, &g, &state, &b5c4()) - (-1.0)).abs() < 1e-15);

        // one active neighbor at 1.0, own value 0: fitness 5
        let g2 = FeasibleGraph::from_edges(2, [(0, 1)]).unwrap();
        let state2 = EdgeState::from_flags(vec![true]);
        assert_eq!(fitness(0, &[0.0, 1.0], &g2, &state2, &b5c4()), 5.0);
    }

    #[test]
    fn fitness_deltas_match_examples() {
        let p = b5c4();
        assert_eq!(delta_fitness_create(0.0, 0.0, &p), 0.0);
        assert_eq!(delta_fitness_drop(0.0, 0.0, &p), 0.0);
        assert!((delta_fitness_create(0.5, 0.5, &p) - 0.5).abs() < 1e-15);
        assert_eq!(delta_fitness_create(1.0, 0.0, &p), -4.0);
        assert_eq!(delta_fitness_drop(1.0, 0.0, &p), 4.0);
    }

    #[test]
    fn weights_match_frozen_tanh_values() {
        let p = b5c4();
        assert_eq!(weight_maintain(0.0, 0.0, &p), 0.5);
        assert_eq!(weight_create(0.0, 0.0, &p), 0.5);
        // 1/2 + 1/2*tanh(2) and 1/2 + 1/2*tanh(1), evaluated in double precision
        assert!((weight_maintain(1.0, 1.0, &p) - 0.9820137900379085).abs() < 1e-15);
        assert!((weight_create(1.0, 1.0, &p) - 0.9820137900379085).abs() < 1e-15);
        assert!((weight_maintain(0.5, 0.5, &p) - 0.8807970779778824).abs() < 1e-15);
    }

    #[test]
    fn adding_a_neighbor_shifts_fitness_by_delta_create() {
        let g = FeasibleGraph::complete(4).unwrap();
        let mut rng = trial_rng(11, 0);
        let x = [0.3, 0.8, 0.25, 0.6];
        let p = b5c4();
        let before = init_active_sets(&g, 0.5, &mut rng).unwrap();
        // toggle each inactive edge on and compare against the closed form
        for (idx, &(a, b)) in g.edges().iter().enumerate() {
            if before.is_active(idx) {
                continue;
            }
            let mut flags = before.flags().to_vec();
            flags[idx] = true;
            let after = EdgeState::from_flags(flags);
            let (i, j) = (a as usize, b as usize);
            let gained = fitness(i, &x, &g, &after, &p) - fitness(i, &x, &g, &before, &p);
            assert!((gained - delta_fitness_create(x[i], x[j], &p)).abs() < 1e-12);
            // and dropping it again is the mirrored delta
            let lost = fitness(i, &x, &g, &before, &p) - fitness(i, &x, &g, &after, &p);
            assert!((lost - delta_fitness_drop(x[i], x[j], &p)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn drop_is_exact_negation_of_create(
            x_i in 0.0f64..=1.0,
            x_j in 0.0f64..=1.0,
            c in 0.1f64..10.0,
            gap in 0.1f64..5.0,
        ) {
            let p = GameParams::new(c + gap, c).unwrap();
            prop_assert_eq!(
                delta_fitness_drop(x_i, x_j, &p),
                -delta_fitness_create(x_i, x_j, &p)
            );
        }

        #[test]
        fn weights_are_bounded_equal_and_symmetric(
            x_i in 0.0f64..=1.0,
            x_j in 0.0f64..=1.0,
            c in 0.1f64..10.0,
            gap in 0.1f64..5.0,
        ) {
            let p = GameParams::new(c + gap, c).unwrap();
            let wm = weight_maintain(x_i, x_j, &p);
            let wc = weight_create(x_i, x_j, &p);
            prop_assert!(wm >= 0.5);
            prop_assert!(wm < 1.0);
            // the two rules agree bit-for-bit, and are symmetric in (i,j)
            prop_assert_eq!(wm.to_bits(), wc.to_bits());
            prop_assert_eq!(wm.to_bits(), weight_maintain(x_j, x_i, &p).to_bits());
            prop_assert_eq!(wc.to_bits(), weight_create(x_j, x_i, &p).to_bits());
        }

        #[test]
        fn weights_increase_in_the_state_sum(
            lo in 0.0f64..0.9,
            bump in 0.01f64..=1.0,
            c in 0.1f64..10.0,
            gap in 0.1f64..5.0,
        ) {
            let hi = (lo + bump).min(1.0);
            prop_assume!(hi - lo >= 0.01);
            let p = GameParams::new(c + gap, c).unwrap();
            prop_assert!(weight_create(lo, lo, &p) < weight_create(hi, hi, &p));
        }
    }
}
