//! Direct numerical marginalization of the reconstruction weight and noise
//! variance for a two-sample, one-dimensional instance.
//!
//! For each sample `i` with partner `j` and prior scale `α` (slab or spike),
//!
//! ```text
//! I_i(α) = ∫∫ N(x_i | w·x_j, σ²) · N(w | 0, σ²α) · IG(σ² | ν/2, νλ/2) dw dσ²
//! ```
//!
//! is integrated numerically (σ² on a log scale, then w), and the ratio
//! `q([1,1]) / q([1,2])` is formed from these integrals and the Dirichlet
//! count factor. Nothing here uses the closed-form marginal.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use crate::error::{GcrError, Result};
use crate::model::{self, Dataset, Hyperparams, Mode};
use crate::numerics;

const LOG_SIGMA2_MIN: f64 = -27.631021115928547; // ln 1e-12
const LOG_SIGMA2_MAX: f64 = 36.841361487904734; // ln 1e16
const OUTER_PIECES: usize = 64;
const OUTER_REL_TOL: f64 = 1e-9;
const INNER_REL_TOL: f64 = 1e-11;
const MAX_INTERVALS: usize = 4000;
const SD_SPAN: f64 = 12.0;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kron * h, (kron - gauss).abs() * h)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive Gauss–Kronrod integration over consecutive breakpoints:
/// the piece with the largest error estimate is bisected until the summed
/// error is within `rel_tol` of the summed value.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    breakpoints: &[f64],
    rel_tol: f64,
) -> Result<f64> {
    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    for w in breakpoints.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e) = gk15(&mut f, w[0], w[1]);
        total += v;
        err += e;
        heap.push(Piece { a: w[0], b: w[1], value: v, err: e });
    }
    while err > rel_tol * total.abs() {
        if heap.len() >= MAX_INTERVALS {
            return Err(GcrError::QuadratureFailure(format!(
                "error {err:e} on value {total:e} after {MAX_INTERVALS} intervals"
            )));
        }
        let Some(p) = heap.pop() else { break };
        if !(p.value.is_finite() && p.err.is_finite()) {
            return Err(GcrError::QuadratureFailure("non-finite integrand".into()));
        }
        let mid = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(&mut f, p.a, mid);
        let (v2, e2) = gk15(&mut f, mid, p.b);
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: p.b, value: v2, err: e2 });
    }
    // Re-sum to shed the drift of incremental updates.
    let total: f64 = heap.iter().map(|p| p.value).sum();
    Ok(total)
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

/// `∫ N(x_i | w·x_j, σ²)·N(w | 0, σ²α) dw` by adaptive quadrature in `w`.
fn weight_integral(xi: f64, xj: f64, sigma2: f64, alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(log_normal_pdf(xi, 0.0, sigma2).exp());
    }
    let sd_prior = (sigma2 * alpha).sqrt();
    let mut pts = vec![-SD_SPAN * sd_prior, 0.0, SD_SPAN * sd_prior];
    if xj != 0.0 {
        // Likelihood in w peaks at x_i/x_j with width σ/|x_j|; bracket that
        // peak and the region between it and the prior so no mass is skipped.
        let peak = xi / xj;
        let sd_lik = sigma2.sqrt() / xj.abs();
        let sd_both = sd_prior * sd_lik / (sd_prior * sd_prior + sd_lik * sd_lik).sqrt();
        let mid = peak * sd_prior * sd_prior / (sd_prior * sd_prior + sd_lik * sd_lik);
        pts.extend([
            peak - SD_SPAN * sd_lik,
            peak,
            peak + SD_SPAN * sd_lik,
            mid - SD_SPAN * sd_both,
            mid,
            mid + SD_SPAN * sd_both,
        ]);
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    pts.dedup();
    let integrand = |w: f64| {
        (log_normal_pdf(xi, w * xj, sigma2) + log_normal_pdf(w, 0.0, sigma2 * alpha)).exp()
    };
    integrate_adaptive(integrand, &pts, INNER_REL_TOL)
}

/// `I_i(α)` with σ² integrated on a log scale.
fn sample_integral(xi: f64, xj: f64, alpha: f64, hp: &Hyperparams) -> Result<f64> {
    let shape = 0.5 * hp.nu;
    let scale = 0.5 * hp.nu * hp.lambda;
    let log_norm = shape * scale.ln() - numerics::log_gamma(shape)?;
    let step = (LOG_SIGMA2_MAX - LOG_SIGMA2_MIN) / OUTER_PIECES as f64;
    let pts: Vec<f64> = (0..=OUTER_PIECES)
        .map(|k| LOG_SIGMA2_MIN + step * k as f64)
        .collect();
    let mut failure = None;
    let value = integrate_adaptive(
        |s: f64| {
            let sigma2 = s.exp();
            // dσ² = σ² ds
            let log_ig = log_norm - (shape + 1.0) * s - scale / sigma2;
            match weight_integral(xi, xj, sigma2, alpha) {
                Ok(inner) => inner * (log_ig + s).exp(),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        &pts,
        OUTER_REL_TOL,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// Returns `(ratio from the collapsed posterior, ratio by quadrature)` for
/// `q(both samples together) / q(samples apart)` on a 1-D, two-sample,
/// `K = 2` instance.
pub fn quadrature_marginal_check(x: [f64; 2], hp: &Hyperparams) -> Result<(f64, f64)> {
    if hp.mode != (Mode::Finite { k: 2 }) {
        return Err(GcrError::InvalidConfig("quadrature check needs finite K = 2".into()));
    }
    hp.validate_relaxed()?;
    let data = Dataset::new(DMatrix::from_row_slice(1, 2, &x), None)?;
    let ratio_model = (model::log_posterior_naive(&data, &[0, 0], hp)?
        - model::log_posterior_naive(&data, &[0, 1], hp)?)
    .exp();

    let prior = (model::log_f0_finite(&[2, 0], hp.beta0, 2)?
        - model::log_f0_finite(&[1, 1], hp.beta0, 2)?)
    .exp();
    let mut ratio_quad = prior;
    for (i, j) in [(0, 1), (1, 0)] {
        let together = sample_integral(x[i], x[j], hp.alpha_h, hp)?;
        let apart = sample_integral(x[i], x[j], hp.alpha_l, hp)?;
        ratio_quad *= together / apart;
    }
    Ok((ratio_model, ratio_quad))
}
