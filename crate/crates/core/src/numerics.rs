//! Dense SPD kernels: Cholesky-based inverse and log-determinant, Sherman–Morrison
//! rank-1 updates, quadratic forms, and log-domain helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{GcrError, Result};

/// Pivots and rank-1 denominators at or below this value are treated as singular.
pub const PD_TOL: f64 = 1e-12;

/// Number of consecutive rank-1 updates after which the stored inverse is re-symmetrized.
pub const RESYM_INTERVAL: u32 = 64;

/// Inverse and log-determinant of a symmetric positive-definite matrix, kept
/// current under rank-1 modifications.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdState {
    inverse: DMatrix<f64>,
    logdet: f64,
    updates: u32,
}

impl PsdState {
    /// Factorizes `a` (Cholesky) and stores `a⁻¹` and `log det a`.
    pub fn build(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "build_psd needs a square matrix");
        let l = cholesky_lower(a)?;
        let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();

        // L⁻¹ by forward substitution, then A⁻¹ = L⁻ᵀ L⁻¹.
        let mut linv = DMatrix::<f64>::zeros(n, n);
        for col in 0..n {
            for row in col..n {
                let mut acc = if row == col { 1.0 } else { 0.0 };
                for k in col..row {
                    acc -= l[(row, k)] * linv[(k, col)];
                }
                linv[(row, col)] = acc / l[(row, row)];
            }
        }
        let mut inverse = linv.transpose() * &linv;
        symmetrize(&mut inverse);
        Ok(Self {
            inverse,
            logdet,
            updates: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.inverse.nrows()
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Rank-1 updates applied since the last re-symmetrization.
    pub fn pending_updates(&self) -> u32 {
        self.updates
    }

    /// `xᵀ A⁻¹ x`, clamped at zero.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        quad(&self.inverse, x)
    }

    /// `A⁻¹ x`.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.inverse * x
    }

    /// Replaces the state with that of `A + c·v·vᵀ`.
    pub fn rank1_update(&mut self, v: &DVector<f64>, c: f64) -> Result<()> {
        let u = self.solve(v);
        let vu = v.dot(&u);
        self.rank1_update_with(&u, vu, c)
    }

    /// Same as [`PsdState::rank1_update`] with `u = A⁻¹v` and `vu = vᵀA⁻¹v`
    /// already computed by the caller.
    pub fn rank1_update_with(&mut self, u: &DVector<f64>, vu: f64, c: f64) -> Result<()> {
        let t = 1.0 + c * vu;
        if !(t > PD_TOL) {
            return Err(GcrError::DowndateSingular { denominator: t });
        }
        self.inverse.ger(-c / t, u, u, 1.0);
        self.logdet += t.ln();
        self.updates += 1;
        if self.updates >= RESYM_INTERVAL {
            symmetrize(&mut self.inverse);
            self.updates = 0;
        }
        Ok(())
    }
}

/// Builds the state of a symmetric positive-definite matrix.
pub fn build_psd(a: &DMatrix<f64>) -> Result<PsdState> {
    PsdState::build(a)
}

/// Returns the state of `A + c·v·vᵀ`, leaving `s` untouched.
pub fn rank1_update(s: &PsdState, v: &DVector<f64>, c: f64) -> Result<PsdState> {
    let mut out = s.clone();
    out.rank1_update(v, c)?;
    Ok(out)
}

pub fn quad_form(s: &PsdState, x: &DVector<f64>) -> f64 {
    quad(s.inverse(), x)
}

fn quad(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for j in 0..n {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let col = m.column(j);
        let mut s = 0.0;
        for i in 0..n {
            s += col[i] * x[i];
        }
        acc += xj * s;
    }
    acc.max(0.0)
}

/// Log-determinant and quadratic form of `C = H − α_H·x·xᵀ` from `q = xᵀH⁻¹x` and
/// `log det H`, via the matrix determinant lemma and Sherman–Morrison.
pub fn self_downdate_stats(q: f64, logdet_h: f64, alpha_h: f64) -> Result<(f64, f64)> {
    let t = 1.0 - alpha_h * q;
    if !(t > PD_TOL) {
        return Err(GcrError::DowndateSingular { denominator: t });
    }
    Ok((logdet_h + t.ln(), q / t))
}

/// `log Σ exp(vᵢ)` with max-shifting.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let max = values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Err(GcrError::EmptyInput);
    }
    if values.len() == 1 || !max.is_finite() {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(GcrError::DomainError(format!("log_gamma({x})")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// Averages a square matrix with its transpose in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > PD_TOL) {
            return Err(GcrError::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_pd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n + 2, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(n, n)
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn scalar_and_identity() {
        let s = build_psd(&(DMatrix::identity(3, 3) * 2.0)).unwrap();
        assert_relative_eq!(s.logdet(), 3.0 * 2f64.ln(), epsilon = 1e-14);
        assert!(max_abs(&(s.inverse() - DMatrix::identity(3, 3) * 0.5)) < 1e-15);

        let s = build_psd(&DMatrix::identity(5, 5)).unwrap();
        assert_eq!(s.logdet(), 0.0);
        assert_eq!(s.inverse(), &DMatrix::identity(5, 5));
    }

    #[test]
    fn gram_plus_identity_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 12] {
            let a = random_pd(n, &mut rng);
            let s = build_psd(&a).unwrap();
            let err = s.inverse() * &a - DMatrix::identity(n, n);
            assert!(max_abs(&err) < 1e-8);
            // symmetric after build
            assert!(max_abs(&(s.inverse() - s.inverse().transpose())) < 1e-9);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = DMatrix::identity(2, 2);
        a[(1, 1)] = -1.0;
        assert!(matches!(
            build_psd(&a),
            Err(GcrError::NotPositiveDefinite { index: 1, .. })
        ));
        assert!(build_psd(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn rank1_analytic() {
        let s = build_psd(&DMatrix::identity(2, 2)).unwrap();
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let up = rank1_update(&s, &v, 1.0).unwrap();
        assert_relative_eq!(up.inverse()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(up.inverse()[(1, 1)], 1.0, epsilon = 1e-15);
        assert_eq!(up.inverse()[(0, 1)], 0.0);
        assert_relative_eq!(up.logdet(), 2f64.ln(), epsilon = 1e-15);

        assert!(matches!(
            rank1_update(&s, &v, -1.0),
            Err(GcrError::DowndateSingular { .. })
        ));
    }

    #[test]
    fn rank1_matches_fresh_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_pd(6, &mut rng);
        let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let s = build_psd(&a).unwrap();
        let up = rank1_update(&s, &v, 0.37).unwrap();
        let fresh = build_psd(&(&a + &v * v.transpose() * 0.37)).unwrap();
        assert!((up.logdet() - fresh.logdet()).abs() <= 1e-8 * fresh.logdet().abs().max(1.0));
        assert!(max_abs(&(up.inverse() - fresh.inverse())) < 1e-6);
    }

    #[test]
    fn resymmetrizes_after_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = build_psd(&random_pd(4, &mut rng)).unwrap();
        for k in 0..RESYM_INTERVAL {
            let v = DVector::from_fn(4, |_, _| rng.random_range(-0.3..0.3));
            s.rank1_update(&v, 0.2).unwrap();
            assert_eq!(s.pending_updates(), (k + 1) % RESYM_INTERVAL);
        }
        assert_eq!(s.inverse(), &s.inverse().transpose());
    }

    #[test]
    fn quad_form_cases() {
        let s = build_psd(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(quad_form(&s, &DVector::from_vec(vec![3.0, 4.0])), 25.0);
        assert_eq!(quad_form(&s, &DVector::zeros(2)), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_pd(5, &mut rng);
        let x = DVector::from_fn(5, |_, _| rng.random_range(-2.0..2.0));
        let s = build_psd(&a).unwrap();
        let direct = x.dot(&a.clone().lu().solve(&x).unwrap());
        assert_relative_eq!(quad_form(&s, &x), direct, max_relative = 1e-9);
    }

    #[test]
    fn self_downdate_closed_forms() {
        let (ld, q) = self_downdate_stats(0.5, 0.0, 1.0).unwrap();
        assert_relative_eq!(ld, 0.5f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(q, 1.0, epsilon = 1e-15);
        assert_eq!(self_downdate_stats(0.7, 2.5, 0.0).unwrap(), (2.5, 0.7));
        assert!(self_downdate_stats(1.0, 0.0, 1.0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let alpha = rng.random_range(0.01..2.0);
            let h = random_pd(4, &mut rng) + &x * x.transpose() * alpha;
            let hs = build_psd(&h).unwrap();
            let (ld, qc) = self_downdate_stats(quad_form(&hs, &x), hs.logdet(), alpha).unwrap();
            let c = build_psd(&(&h - &x * x.transpose() * alpha)).unwrap();
            assert_relative_eq!(ld, c.logdet(), max_relative = 1e-8);
            assert_relative_eq!(qc, quad_form(&c, &x), max_relative = 1e-8);
        }
    }

    #[test]
    fn log_sum_exp_cases() {
        assert_relative_eq!(log_sum_exp(&[0.0, 0.0]).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
        assert_relative_eq!(
            log_sum_exp(&[1000.0, 1000.0]).unwrap(),
            1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(log_sum_exp(&[]), Err(GcrError::EmptyInput));
        assert_relative_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, 0.0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn log_gamma_reference_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-15);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-15);
        assert_relative_eq!(
            log_gamma(0.5).unwrap(),
            std::f64::consts::PI.sqrt().ln(),
            epsilon = 1e-14
        );
        // 40-digit reference values.
        let table = [
            (0.001, 6.907178885383853682512345),
            (0.01, 4.599479878042021722513945),
            (0.1, 2.252712651734205959869702),
            (1.5, -0.1207822376352452223455184),
            (2.5, 0.2846828704729191596324947),
            (3.7, 1.428072326665387921872381),
            (10.0, 12.80182748008146961120772),
            (33.3, 82.60372358165495292832303),
            (100.5, 361.4355404677776215552519),
            (1000.0, 5905.220423209181211826077),
        ];
        for (x, want) in table {
            assert!((log_gamma(x).unwrap() - want).abs() <= 1e-10, "x = {x}");
        }
        // Beyond ~1e4 an f64 ulp of ln Γ exceeds 1e-10, so compare relatively.
        for (x, want) in [(12345.6, 103959.1850661684555824548), (1e6, 12815504.56914761165997697)] {
            assert_relative_eq!(log_gamma(x).unwrap(), want, max_relative = 1e-14);
        }
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
    }
}
