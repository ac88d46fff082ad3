//! Restarted block Krylov Rayleigh-Ritz for the largest-magnitude eigenpairs of a symmetric
//! operator.
//!
//! Each step appends `A` applied to the residuals of the leading Ritz pairs (which span the
//! next Krylov block), orthogonalized twice against the basis. `A V` is stored, so Ritz
//! residuals cost no extra applications. When the basis is full it is compressed to the
//! leading Ritz vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;

/// Symmetric linear map on `R^dim` with the Euclidean inner product.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;

    /// Maps a start vector into the subspace the operator is symmetric on.
    fn prepare(&self, _x: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenOptions {
    pub nev: usize,
    /// Relative residual `|A y - theta y| / (|theta| |y|)` required of every wanted pair.
    pub tol: f64,
    /// Cap on block steps.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            nev: 4,
            tol: 1e-6,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenSolution {
    /// Ordered by magnitude, descending; equal magnitudes put the positive value first.
    pub values: Vec<f64>,
    /// Unit Euclidean norm.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub applications: usize,
    pub converged: bool,
}

pub fn block_size(nev: usize) -> usize {
    (nev + 2).max(4)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += c * b;
    }
}

/// Relative magnitude difference under which two eigenvalues count as tied.
const TIE: f64 = 1e-9;

/// Indices by magnitude, descending; runs of tied magnitudes list positive values first.
pub fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    let mut start = 0;
    while start < order.len() {
        let head = values[order[start]].abs();
        let mut end = start + 1;
        while end < order.len() && head - values[order[end]].abs() <= TIE * head {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        start = end;
    }
    order
}

/// Linear combinations `sum_j basis[j] * coef[(j, col)]` for the given columns.
fn combine(basis: &[Vec<f64>], coef: &DMatrix<f64>, cols: &[usize]) -> Vec<Vec<f64>> {
    let n = basis.first().map_or(0, |b| b.len());
    cols.iter()
        .map(|&c| {
            let mut out = vec![0.0; n];
            for (j, b) in basis.iter().enumerate() {
                let w = coef[(j, c)];
                if w != 0.0 {
                    axpy(&mut out, w, b);
                }
            }
            out
        })
        .collect()
}

/// Orthonormalizes `block` against `basis` and itself (two Gram-Schmidt passes); vectors
/// that lose all but `1e-10` of their norm are dropped.
fn orthonormalize(basis: &[Vec<f64>], block: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    for mut v in block {
        let start = dot(&v, &v).sqrt();
        if start == 0.0 || !start.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for b in basis.iter().chain(accepted.iter()) {
                let c = dot(b, &v);
                axpy(&mut v, -c, b);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 * start {
            v.iter_mut().for_each(|x| *x /= norm);
            accepted.push(v);
        }
    }
    accepted
}

/// Largest-magnitude eigenpairs of `op`. `start` vectors (if any) replace the leading
/// random start columns. Returns the best iterate with `converged = false` when
/// `max_iter` block steps do not reach the tolerance.
pub fn extreme_eigs_op(
    op: &dyn LinearOperator,
    options: &EigenOptions,
    start: &[Vec<f64>],
) -> Result<EigenSolution> {
    let n = op.dim();
    let nev = options.nev.max(1).min(n);
    let block = block_size(nev).min(n);
    let max_basis = (nev + 3 * block).max(40).min(n);
    let keep = (nev + block).min(max_basis.saturating_sub(block)).max(nev);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut initial: Vec<Vec<f64>> = Vec::with_capacity(block);
    for s in start.iter().take(block) {
        initial.push(s.clone());
    }
    while initial.len() < block {
        initial.push((0..n).map(|_| StandardNormal.sample(&mut rng)).collect());
    }
    for v in initial.iter_mut() {
        op.prepare(v)?;
    }

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut t = DMatrix::<f64>::zeros(0, 0);
    let mut next = initial;
    let mut applications = 0;
    let mut best: Option<EigenSolution> = None;

    for iteration in 1..=options.max_iter.max(1) {
        // residuals are small differences of vectors that sit in the subspace only up to
        // solver tolerance, so they are mapped back before entering the basis
        if iteration > 1 {
            for v in next.iter_mut() {
                op.prepare(v)?;
            }
        }
        let fresh = orthonormalize(&basis, next);
        let old = basis.len();
        for v in fresh {
            let mut av = vec![0.0; n];
            op.apply(&v, &mut av)?;
            applications += 1;
            basis.push(v);
            images.push(av);
        }
        let m = basis.len();
        let mut grown = DMatrix::<f64>::zeros(m, m);
        grown.view_mut((0, 0), (old, old)).copy_from(&t);
        for j in old..m {
            for i in 0..m {
                let v = dot(&basis[i], &images[j]);
                grown[(i, j)] = v;
                grown[(j, i)] = v;
            }
        }
        // symmetrize the new block against its transpose
        for j in old..m {
            for i in old..m {
                let s = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                grown[(i, j)] = s;
            }
        }
        t = grown;

        let eig = SymmetricEigen::new(t.clone());
        let order = magnitude_order(eig.eigenvalues.as_slice());
        let lead: Vec<usize> = order.iter().copied().take(block.min(m)).collect();
        let ritz = combine(&basis, &eig.eigenvectors, &lead);
        let ritz_images = combine(&images, &eig.eigenvectors, &lead);
        let mut residual_vectors = Vec::with_capacity(lead.len());
        let mut residuals = Vec::with_capacity(lead.len());
        for (k, &c) in lead.iter().enumerate() {
            let theta = eig.eigenvalues[c];
            let mut r = ritz_images[k].clone();
            axpy(&mut r, -theta, &ritz[k]);
            let rn = dot(&r, &r).sqrt();
            residuals.push(if theta != 0.0 { rn / theta.abs() } else { rn });
            residual_vectors.push(r);
        }
        let wanted = nev.min(lead.len());
        let converged = wanted == nev && residuals[..wanted].iter().all(|r| *r <= options.tol);
        let solution = EigenSolution {
            values: lead[..wanted].iter().map(|&c| eig.eigenvalues[c]).collect(),
            vectors: ritz[..wanted].to_vec(),
            residuals: residuals[..wanted].to_vec(),
            iterations: iteration,
            applications,
            converged,
        };
        if converged || m == n {
            return Ok(EigenSolution {
                converged: true,
                ..solution
            });
        }
        best = Some(solution);

        next = residual_vectors
            .into_iter()
            .zip(&residuals)
            .filter(|(_, r)| **r > 0.1 * options.tol)
            .map(|(v, _)| v)
            .collect();
        if next.is_empty() {
            // wanted pairs converged but the trailing block ones stalled at zero: restart
            // from fresh directions
            next = (0..block)
                .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            for v in next.iter_mut() {
                op.prepare(v)?;
            }
        }
        if m + next.len() > max_basis {
            let kept: Vec<usize> = order.iter().copied().take(keep.min(m)).collect();
            basis = combine(&basis, &eig.eigenvectors, &kept);
            images = combine(&images, &eig.eigenvectors, &kept);
            t = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                kept.len(),
                kept.iter().map(|&c| eig.eigenvalues[c]),
            ));
        }
    }
    Ok(best.expect("at least one block step ran"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    struct Dense(DMatrix<f64>);

    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
            let v = &self.0 * nalgebra::DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
            Ok(())
        }
    }

    struct Scaled<'a>(&'a Dense, f64);

    impl LinearOperator for Scaled<'_> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
            self.0.apply(x, y)?;
            y.iter_mut().for_each(|v| *v *= self.1);
            Ok(())
        }
    }

    /// Symmetric matrix with prescribed spectrum in a random orthonormal frame.
    fn with_spectrum(spectrum: &[f64], seed: u64) -> Dense {
        let n = spectrum.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(spectrum));
        Dense(&q * d * q.transpose())
    }

    fn decaying(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } / (1.0 + k as f64 * 0.3))
            .collect()
    }

    #[test]
    fn matches_dense_decomposition() {
        let mut spectrum = decaying(150);
        spectrum[3] = 0.9;
        let op = with_spectrum(&spectrum, 1);
        let opts = EigenOptions {
            nev: 5,
            tol: 1e-9,
            max_iter: 500,
            seed: 3,
        };
        let sol = extreme_eigs_op(&op, &opts, &[]).unwrap();
        assert!(sol.converged);
        let expect: Vec<f64> = magnitude_order(&spectrum)
            .into_iter()
            .map(|i| spectrum[i])
            .collect();
        for (got, want) in sol.values.iter().zip(&expect) {
            assert!((got - want).abs() < 1e-10, "{got} {want}");
        }
        for (v, lam) in sol.vectors.iter().zip(&sol.values) {
            let mut av = vec![0.0; v.len()];
            op.apply(v, &mut av).unwrap();
            axpy(&mut av, -lam, v);
            assert!(dot(&av, &av).sqrt() <= 1e-9 * lam.abs() * 1.01);
        }
    }

    #[test]
    fn degenerate_and_opposite_clusters() {
        let mut spectrum = vec![0.5, 0.5, 0.5, -0.5, -0.5, -0.5];
        spectrum.extend(
            (0..120).map(|k| 0.4 / (1.0 + k as f64 * 0.1) * if k % 2 == 0 { 1.0 } else { -1.0 }),
        );
        let op = with_spectrum(&spectrum, 2);
        let sol = extreme_eigs_op(
            &op,
            &EigenOptions {
                nev: 8,
                tol: 1e-8,
                max_iter: 500,
                seed: 1,
            },
            &[],
        )
        .unwrap();
        assert!(sol.converged);
        assert_eq!(
            &sol.values[..3]
                .iter()
                .map(|v| (v * 1e6).round())
                .collect::<Vec<_>>(),
            &[5e5; 3]
        );
        assert!(sol.values[3..6].iter().all(|v| (v + 0.5).abs() < 1e-10));
    }

    #[test]
    fn scaling_operator_scales_values_and_seed_is_irrelevant() {
        let op = with_spectrum(&decaying(80), 4);
        let opts = EigenOptions {
            nev: 3,
            tol: 1e-10,
            max_iter: 400,
            seed: 7,
        };
        let a = extreme_eigs_op(&op, &opts, &[]).unwrap();
        let b = extreme_eigs_op(&Scaled(&op, 2.5), &opts, &[]).unwrap();
        let c = extreme_eigs_op(&op, &EigenOptions { seed: 99, ..opts }, &[]).unwrap();
        for k in 0..3 {
            assert!((b.values[k] - 2.5 * a.values[k]).abs() < 1e-9);
            assert!((c.values[k] - a.values[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let op = with_spectrum(&decaying(60), 5);
        let opts = EigenOptions {
            nev: 2,
            tol: 1e-8,
            max_iter: 200,
            seed: 11,
        };
        let a = extreme_eigs_op(&op, &opts, &[]).unwrap();
        let b = extreme_eigs_op(&op, &opts, &[]).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn ties_put_positive_first() {
        let v = [0.3, -0.5, 0.5 - 1e-14, 0.1, -0.3];
        assert_eq!(magnitude_order(&v), vec![2, 1, 0, 4, 3]);
    }

    #[test]
    fn iteration_cap_flags_best_iterate() {
        let op = with_spectrum(
            &(0..200).map(|k| 1.0 - k as f64 * 1e-4).collect::<Vec<_>>(),
            6,
        );
        let sol = extreme_eigs_op(
            &op,
            &EigenOptions {
                nev: 1,
                tol: 1e-14,
                max_iter: 2,
                seed: 0,
            },
            &[],
        )
        .unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
    }

    #[test]
    fn operator_errors_propagate() {
        struct Failing;
        impl LinearOperator for Failing {
            fn dim(&self) -> usize {
                10
            }
            fn apply(&self, _: &[f64], _: &mut [f64]) -> Result<()> {
                Err(Error::PoissonNotConverged {
                    iterations: 1,
                    residual: 1.0,
                })
            }
        }
        assert!(extreme_eigs_op(&Failing, &EigenOptions::default(), &[]).is_err());
    }
}
