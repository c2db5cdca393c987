//! Dense Laplacian spectra and the algebraic connectivity.
//!
//! The Fiedler value (second-smallest Laplacian eigenvalue) lower-bounds the
//! expected convergence rate, so it is computed once per experiment from the
//! full feasible graph. A dense tridiagonalization-based symmetric
//! eigensolve is the only path; it is exercised up to `n = 2000`.

use crate::laplacian::{full_graph_laplacian, LaplacianMatrix};
use crate::topology::FeasibleGraph;
use crate::{Error, Result};
use nalgebra::DMatrix;

/// Eigenvalues of a Laplacian, ascending. For a valid Laplacian the first
/// entry is zero to within `1e-9 * n` and none is below `-1e-9 * n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("spectrum is non-empty")
    }

    /// Second-smallest eigenvalue; `None` for 1x1 matrices.
    pub fn lambda2(&self) -> Option<f64> {
        self.eigenvalues.get(1).copied()
    }
}

fn ascending_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    // eigenvalues-only path: tridiagonalize, then implicit QL without
    // accumulating eigenvectors
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    values
}

/// The full ascending eigenvalue list of a Laplacian.
pub fn spectrum(l: &LaplacianMatrix) -> Spectrum {
    Spectrum {
        eigenvalues: ascending_eigenvalues(l.as_matrix()),
    }
}

/// The Fiedler value (algebraic connectivity) of a Laplacian.
///
/// The known null direction `1/sqrt(n)` is deflated by adding
/// `sigma * (1 1^T)/n` with `sigma` above the Gershgorin bound on the
/// spectrum, which moves the trivial eigenvalue to `sigma` and leaves the
/// rest untouched; the smallest remaining eigenvalue is `lambda_2`.
/// Zero for disconnected graphs (a second null direction survives
/// deflation).
pub fn fiedler_value(l: &LaplacianMatrix) -> Result<f64> {
    let n = l.n();
    if n < 2 {
        return Err(Error::NotLaplacian(
            "the Fiedler value needs at least two vertices".into(),
        ));
    }
    let max_diag = (0..n).map(|i| l.entry(i, i)).fold(0.0f64, f64::max);
    let sigma = 2.0 * max_diag + 1.0;
    let bump = sigma / n as f64;
    let mut deflated = l.as_matrix().clone();
    for i in 0..n {
        for j in 0..n {
            deflated[(i, j)] += bump;
        }
    }
    Ok(ascending_eigenvalues(&deflated)[0])
}

/// Fiedler value of the full feasible graph (all feasible edges present).
pub fn graph_fiedler_value(g: &FeasibleGraph) -> Result<f64> {
    fiedler_value(&full_graph_laplacian(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{trial_rng, unit_f64};
    use crate::topology::{init_active_sets, is_connected, sample_graph};
    use crate::{game::GameParams, laplacian::weighted_laplacian};
    use nalgebra::DMatrix;

    #[test]
    fn complete_graph_fiedler_value_is_n() {
        for n in [2, 3, 4, 5, 6, 7, 8, 200] {
            let g = FeasibleGraph::complete(n).unwrap();
            let l = full_graph_laplacian(&g);
            let lambda2 = fiedler_value(&l).unwrap();
            assert!(
                (lambda2 - n as f64).abs() < 1e-8 * n as f64,
                "K_{n}: lambda2 = {lambda2}"
            );
        }
    }

    #[test]
    fn path_spectrum_is_zero_one_three() {
        let g = FeasibleGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let s = spectrum(&full_graph_laplacian(&g));
        assert!(s.eigenvalues[0].abs() < 1e-9);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-9);
        assert!((s.eigenvalues[2] - 3.0).abs() < 1e-9);
        assert!((fiedler_value(&full_graph_laplacian(&g)).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn k4_spectrum_is_zero_and_three_fours() {
        let g = FeasibleGraph::complete(4).unwrap();
        let s = spectrum(&full_graph_laplacian(&g));
        assert!(s.eigenvalues[0].abs() < 1e-9);
        for &v in &s.eigenvalues[1..] {
            assert!((v - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn disconnected_pair_has_zero_fiedler_value() {
        let g = FeasibleGraph::from_edges(2, []).unwrap();
        let lambda2 = fiedler_value(&full_graph_laplacian(&g)).unwrap();
        assert!(lambda2.abs() < 1e-9);
    }

    #[test]
    fn zero_matrix_spectrum_is_all_zeros() {
        let l = LaplacianMatrix::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        let s = spectrum(&l);
        for &v in &s.eigenvalues {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn single_vertex_has_no_fiedler_value() {
        let l = LaplacianMatrix::from_matrix(DMatrix::zeros(1, 1)).unwrap();
        assert!(fiedler_value(&l).is_err());
        assert_eq!(spectrum(&l).eigenvalues, vec![0.0]);
    }

    #[test]
    fn positivity_of_lambda2_characterizes_connectivity() {
        let mut hits = [0u32; 2];
        for trial in 0..100u64 {
            let mut rng = trial_rng(41, trial);
            let n = 4 + (unit_f64(&mut rng) * 20.0) as usize;
            let p = 0.05 + 0.4 * unit_f64(&mut rng);
            let g = sample_graph(n, p, &mut rng).unwrap();
            let lambda2 = graph_fiedler_value(&g).unwrap();
            let connected = is_connected(&g);
            hits[connected as usize] += 1;
            if connected {
                assert!(lambda2 > 1e-9, "connected graph with lambda2 = {lambda2}");
            } else {
                assert!(lambda2.abs() < 1e-9, "disconnected graph with lambda2 = {lambda2}");
            }
        }
        // the sweep must actually exercise both classes
        assert!(hits[0] > 5, "too few disconnected samples: {}", hits[0]);
        assert!(hits[1] > 5, "too few connected samples: {}", hits[1]);
    }

    #[test]
    fn laplacian_eigenvalues_never_exceed_n() {
        for trial in 0..20u64 {
            let mut rng = trial_rng(43, trial);
            let g = sample_graph(15, 0.5, &mut rng).unwrap();
            let s = spectrum(&full_graph_laplacian(&g));
            assert!(s.max() <= 15.0 + 1e-9);
            assert!(s.min() >= -1e-9 * 15.0);
        }
    }

    #[test]
    fn weighted_fiedler_value_dominates_half_the_feasible_one() {
        let params = GameParams::new(5.0, 4.0).unwrap();
        for trial in 0..30u64 {
            let mut rng = trial_rng(47, trial);
            let n = 5 + (unit_f64(&mut rng) * 30.0) as usize;
            let g = sample_graph(n, 0.3, &mut rng).unwrap();
            let state = init_active_sets(&g, 0.5, &mut rng).unwrap();
            let x: Vec<f64> = (0..n).map(|_| unit_f64(&mut rng)).collect();
            let lambda2_feasible = graph_fiedler_value(&g).unwrap();
            let lambda2_weighted =
                fiedler_value(&weighted_laplacian(&g, &state, &x, &params)).unwrap();
            assert!(
                lambda2_weighted >= 0.5 * lambda2_feasible - 1e-9,
                "lambda2(W) = {lambda2_weighted} < half of {lambda2_feasible}"
            );
        }
    }
}
