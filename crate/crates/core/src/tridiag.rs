//! Thomas elimination for strictly diagonally dominant tridiagonal systems.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TridiagError {
    #[error(
        "row {row} is not strictly diagonally dominant (|diag| = {diag}, off-diagonal sum = {off})"
    )]
    NotDominant { row: usize, diag: f64, off: f64 },
    #[error("inconsistent band lengths: lower {lower}, diag {diag}, upper {upper}, rhs {rhs}")]
    Shape {
        lower: usize,
        diag: usize,
        upper: usize,
        rhs: usize,
    },
}

/// `A x = rhs` with `A[i][i−1] = lower[i−1]`, `A[i][i] = diag[i]`,
/// `A[i][i+1] = upper[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn solve(&self) -> Result<Vec<f64>, TridiagError> {
        let mut x = vec![0.0; self.diag.len()];
        let mut scratch = vec![0.0; self.diag.len()];
        solve_into(
            &self.lower,
            &self.diag,
            &self.upper,
            &self.rhs,
            &mut x,
            &mut scratch,
        )?;
        Ok(x)
    }

    /// A·v for the stored matrix.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.lower[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * v[i + 1];
                }
                s
            })
            .collect()
    }
}

/// Checks strict diagonal dominance row by row.
pub fn check_dominance(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<(), TridiagError> {
    let n = diag.len();
    for i in 0..n {
        let mut off = 0.0;
        if i > 0 {
            off += lower[i - 1].abs();
        }
        if i + 1 < n {
            off += upper[i].abs();
        }
        let d = diag[i].abs();
        if !(d > off) {
            return Err(TridiagError::NotDominant {
                row: i,
                diag: d,
                off,
            });
        }
    }
    Ok(())
}

/// Solves into `x`, using `scratch` (length n) for the modified upper band.
/// No pivoting; dominance is checked up front.
pub fn solve_into(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    x: &mut [f64],
    scratch: &mut [f64],
) -> Result<(), TridiagError> {
    let n = diag.len();
    let band = n.saturating_sub(1);
    if lower.len() != band
        || upper.len() != band
        || rhs.len() != n
        || x.len() != n
        || scratch.len() < n
    {
        return Err(TridiagError::Shape {
            lower: lower.len(),
            diag: n,
            upper: upper.len(),
            rhs: rhs.len(),
        });
    }
    if n == 0 {
        return Ok(());
    }
    check_dominance(lower, diag, upper)?;

    let up = scratch;
    let mut denom = diag[0];
    up[0] = if n > 1 { upper[0] / denom } else { 0.0 };
    x[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * up[i - 1];
        if i + 1 < n {
            up[i] = upper[i] / denom;
        }
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        x[i] -= up[i] * x[i + 1];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::dense_solve;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn to_dense(sys: &TridiagonalSystem) -> Vec<Vec<f64>> {
        let n = sys.diag.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = sys.diag[i];
            if i > 0 {
                a[i][i - 1] = sys.lower[i - 1];
            }
            if i + 1 < n {
                a[i][i + 1] = sys.upper[i];
            }
        }
        a
    }

    fn random_dominant(n: usize, rng: &mut impl Rng) -> TridiagonalSystem {
        let lower: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let upper: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let diag = (0..n)
            .map(|i| {
                let off = if i > 0 { lower[i - 1].abs() } else { 0.0 }
                    + if i + 1 < n { upper[i].abs() } else { 0.0 };
                let d = off + rng.random_range(0.01..2.0);
                if rng.random_bool(0.5) {
                    d
                } else {
                    -d
                }
            })
            .collect();
        let rhs = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        TridiagonalSystem {
            lower,
            diag,
            upper,
            rhs,
        }
    }

    fn inf_norm(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn identity_system() {
        let sys = TridiagonalSystem {
            lower: vec![0.0; 2],
            diag: vec![1.0; 3],
            upper: vec![0.0; 2],
            rhs: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(sys.solve().unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two() {
        let sys = TridiagonalSystem {
            lower: vec![1.0],
            diag: vec![2.0, 2.0],
            upper: vec![1.0],
            rhs: vec![3.0, 3.0],
        };
        let x = sys.solve().unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sys = random_dominant(50, &mut rng);
        let x = sys.solve().unwrap();
        let oracle = dense_solve(to_dense(&sys), sys.rhs.clone());
        let scale = inf_norm(&oracle);
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn rejects_non_dominant_rows() {
        let sys = TridiagonalSystem {
            lower: vec![1.0, 1.0],
            diag: vec![3.0, 1.5, 3.0],
            upper: vec![1.0, 1.0],
            rhs: vec![1.0; 3],
        };
        assert!(matches!(
            sys.solve(),
            Err(TridiagError::NotDominant { row: 1, .. })
        ));
        let bad = TridiagonalSystem {
            lower: vec![1.0],
            diag: vec![3.0, 3.0, 3.0],
            upper: vec![1.0, 1.0],
            rhs: vec![1.0; 3],
        };
        assert!(matches!(bad.solve(), Err(TridiagError::Shape { .. })));
    }

    #[test]
    fn single_unknown() {
        let sys = TridiagonalSystem {
            lower: vec![],
            diag: vec![4.0],
            upper: vec![],
            rhs: vec![2.0],
        };
        assert_eq!(sys.solve().unwrap(), vec![0.5]);
    }

    proptest! {
        #[test]
        fn residual_is_tiny(n in 2usize..200, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = random_dominant(n, &mut rng);
            let x = sys.solve().unwrap();
            let ax = sys.apply(&x);
            let resid: Vec<f64> = ax.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();
            let a_norm = to_dense(&sys)
                .iter()
                .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let rel = inf_norm(&resid) / (a_norm * inf_norm(&x) + inf_norm(&sys.rhs));
            prop_assert!(rel <= 1e-12, "relative residual {}", rel);
        }

        #[test]
        fn recovers_ones(n in 2usize..200, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sys = random_dominant(n, &mut rng);
            sys.rhs = sys.apply(&vec![1.0; n]);
            let x = sys.solve().unwrap();
            for v in x {
                prop_assert!((v - 1.0).abs() <= 1e-12);
            }
        }
    }
}
