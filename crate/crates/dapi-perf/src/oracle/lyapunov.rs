//! Dense Lyapunov solver via real Schur reduction.
//!
//! Solves the observability-Gramian equation `A^T X + X A + M = 0` for
//! Hurwitz `A`: reduce `A = U T U^T` to real Schur form, solve the
//! quasi-triangular equation `T^T Y + Y T = -U^T M U` by block forward
//! substitution (1x1 and 2x2 diagonal blocks, small Kronecker systems), and
//! transform back. Designed for the desk-scale envelope of a few hundred
//! states.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub struct SchurForm {
    pub u: DMatrix<f64>,
    pub t: DMatrix<f64>,
    blocks: Vec<(usize, usize)>, // (start, size) along the diagonal
}

/// Relative threshold under which a subdiagonal entry of the Schur factor is
/// treated as structurally zero.
const SUBDIAG_TOL: f64 = 1e-12;

pub fn real_schur(a: &DMatrix<f64>) -> Result<SchurForm> {
    // machine-epsilon subdiagonal tolerance stalls the QR iteration on
    // matrices with repeated eigenvalues (every uniform-parameter loop has
    // them); 1e-14 converges and sits far below the downstream residual
    // tolerance
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-14, 100_000)
        .or_else(|| nalgebra::linalg::Schur::try_new(a.clone(), 1e-12, 100_000))
        .ok_or(Error::EigenFailure)?;
    let (u, mut t) = schur.unpack();
    let n = t.nrows();

    let mut blocks = Vec::new();
    let mut k = 0;
    while k < n {
        let is_pair = k + 1 < n && {
            let scale = t[(k, k)].abs() + t[(k + 1, k + 1)].abs() + 1.0;
            t[(k + 1, k)].abs() > SUBDIAG_TOL * scale
        };
        if is_pair {
            blocks.push((k, 2));
            k += 2;
        } else {
            if k + 1 < n {
                t[(k + 1, k)] = 0.0;
            }
            blocks.push((k, 1));
            k += 1;
        }
    }
    Ok(SchurForm { u, t, blocks })
}

impl SchurForm {
    /// Eigenvalues of the original matrix, read off the diagonal blocks.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        let mut eigs = Vec::new();
        for &(s, len) in &self.blocks {
            if len == 1 {
                eigs.push((self.t[(s, s)], 0.0));
            } else {
                let a = self.t[(s, s)];
                let b = self.t[(s, s + 1)];
                let c = self.t[(s + 1, s)];
                let d = self.t[(s + 1, s + 1)];
                let mean = 0.5 * (a + d);
                let disc = 0.25 * (a - d) * (a - d) + b * c;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    eigs.push((mean + r, 0.0));
                    eigs.push((mean - r, 0.0));
                } else {
                    let im = (-disc).sqrt();
                    eigs.push((mean, im));
                    eigs.push((mean, -im));
                }
            }
        }
        eigs
    }

    /// Largest real part over all eigenvalues.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Solves `A^T X + X A + M = 0` given the Schur form of `A`. The result is
/// symmetrized. Fails only if an eigenvalue pair sums to zero (marginal or
/// sign-symmetric spectrum).
pub fn solve_lyapunov_schur(schur: &SchurForm, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = schur.t.nrows();
    let t = &schur.t;
    let c = -(schur.u.transpose() * m * &schur.u);
    let mut y = DMatrix::<f64>::zeros(n, n);

    for &(js, jlen) in &schur.blocks {
        // residual column block: C[:, j] - Y T[:, j] (columns of Y past the
        // current block are still zero, so the full product is safe)
        let mut r = c.columns(js, jlen).clone_owned();
        r -= &y * t.columns(js, jlen);

        let t_jj = t.view((js, js), (jlen, jlen)).clone_owned();
        for &(ps, plen) in &schur.blocks {
            let rhs = r.view((ps, 0), (plen, jlen)).clone_owned();
            let l_pp = t.view((ps, ps), (plen, plen)).transpose();
            let y_pj = solve_small_sylvester(&l_pp, &t_jj, &rhs)?;

            y.view_mut((ps, js), (plen, jlen)).copy_from(&y_pj);
            // push the new block into the residual rows below
            for &(rs, rlen) in &schur.blocks {
                if rs > ps {
                    let coupling = t.view((ps, rs), (plen, rlen)).transpose();
                    let update = coupling * &y_pj;
                    let mut target = r.view_mut((rs, 0), (rlen, jlen));
                    target -= update;
                }
            }
        }
    }

    let x = &schur.u * y * schur.u.transpose();
    Ok((&x + x.transpose()) * 0.5)
}

/// Solves `L Y + Y R = RHS` for blocks of size at most 2x2 via the
/// vectorized Kronecker system `(I (x) L + R^T (x) I) vec(Y) = vec(RHS)`.
fn solve_small_sylvester(
    l: &DMatrix<f64>,
    r: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (p, q) = (l.nrows(), r.nrows());
    let dim = p * q;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    // column-stacking order: vec index = col * p + row
    for col in 0..q {
        for row in 0..p {
            let eq = col * p + row;
            for row2 in 0..p {
                k[(eq, col * p + row2)] += l[(row, row2)];
            }
            for col2 in 0..q {
                k[(eq, col2 * p + row)] += r[(col2, col)];
            }
        }
    }
    let mut v = DVector::<f64>::zeros(dim);
    for col in 0..q {
        for row in 0..p {
            v[col * p + row] = rhs[(row, col)];
        }
    }
    let lu = k.lu();
    let sol = lu.solve(&v).ok_or(Error::SingularLyapunov)?;
    let mut out = DMatrix::<f64>::zeros(p, q);
    for col in 0..q {
        for row in 0..p {
            out[(row, col)] = sol[col * p + row];
        }
    }
    Ok(out)
}

/// One-shot solve of `A^T X + X A + M = 0` with a Hurwitz check.
pub fn solve_lyapunov(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let schur = real_schur(a)?;
    let abscissa = schur.spectral_abscissa();
    if abscissa >= -f64::EPSILON {
        let worst = schur
            .eigenvalues()
            .into_iter()
            .max_by(|x, y| x.0.total_cmp(&y.0))
            .unwrap_or((abscissa, 0.0));
        return Err(Error::NotHurwitz {
            re: worst.0,
            im: worst.1,
        });
    }
    solve_lyapunov_schur(&schur, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn residual(a: &DMatrix<f64>, x: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
        (a.transpose() * x + x * a + m).norm() / m.norm().max(1e-300)
    }

    #[test]
    fn scalar_case() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let m = DMatrix::from_element(1, 1, 1.0);
        let x = solve_lyapunov(&a, &m).unwrap();
        assert_relative_eq!(x[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn random_stable_systems_have_tiny_residuals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 3, 5, 17, 40] {
            let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = raw - DMatrix::identity(n, n) * (2.0 + n as f64 * 0.5);
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = &g * g.transpose();
            let x = solve_lyapunov(&a, &m).unwrap();
            assert!(residual(&a, &x, &m) < 1e-11, "n = {n}");
        }
    }

    #[test]
    fn complex_eigenvalue_blocks() {
        // rotation plus damping: eigenvalues -0.1 +/- 5i, plus a real mode
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(3, 3, &[
            -0.1, 5.0, 0.3,
            -5.0, -0.1, 0.1,
            0.0, 0.0, -2.0,
        ]);
        let m = DMatrix::identity(3, 3);
        let x = solve_lyapunov(&a, &m).unwrap();
        assert!(residual(&a, &x, &m) < 1e-12);
        let schur = real_schur(&a).unwrap();
        let eigs = schur.eigenvalues();
        assert!(eigs.iter().any(|e| e.1.abs() > 4.9));
        assert_relative_eq!(schur.spectral_abscissa(), -0.1, epsilon = 1e-9);
    }

    #[test]
    fn rejects_unstable_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -1.0]);
        let m = DMatrix::identity(2, 2);
        match solve_lyapunov(&a, &m) {
            Err(Error::NotHurwitz { re, .. }) => assert_relative_eq!(re, 0.5, epsilon = 1e-9),
            other => panic!("expected NotHurwitz, got {other:?}"),
        }
    }

    #[test]
    fn rejects_marginal_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]);
        let m = DMatrix::identity(2, 2);
        assert!(matches!(solve_lyapunov(&a, &m), Err(Error::NotHurwitz { .. })));
    }
}
