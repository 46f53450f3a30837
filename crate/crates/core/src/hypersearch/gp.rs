use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Squared-exponential kernel settings, in units of the standardized targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

const LENGTH_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.3, 0.5, 1.0];
const SIGNAL_GRID: [f64; 3] = [0.25, 1.0, 4.0];
const NOISE_GRID: [f64; 4] = [1e-6, 1e-4, 1e-2, 1e-1];
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

/// GP posterior with a constant prior mean equal to the sample mean.
#[derive(Debug, Clone)]
pub struct Gp {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    hyper: GpHyper,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_ml: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl GpHyper {
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_var * (-sq_dist(a, b) / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// Fits with hyperparameters chosen by maximum marginal likelihood over a grid.
pub fn gp_fit(points: &[Vec<f64>], y: &[f64]) -> Result<Gp> {
    let mut best: Option<Gp> = None;
    for &length_scale in &LENGTH_GRID {
        for &signal_var in &SIGNAL_GRID {
            for &noise_var in &NOISE_GRID {
                let h = GpHyper {
                    length_scale,
                    signal_var,
                    noise_var,
                };
                match gp_fit_with(points, y, h) {
                    Ok(gp) if best.as_ref().is_none_or(|b| gp.log_ml > b.log_ml) => best = Some(gp),
                    Ok(_) => {}
                    Err(Error::SingularKernel(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    best.ok_or(Error::SingularKernel(JITTER_MAX))
}

/// Fits with fixed hyperparameters. A kernel matrix that is not positive
/// definite gets jitter from 1e-8 up to 1e-4.
pub fn gp_fit_with(points: &[Vec<f64>], y: &[f64], hyper: GpHyper) -> Result<Gp> {
    if points.is_empty() || points.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} points with {} targets",
            points.len(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("non-finite GP target".into()));
    }
    let n = y.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
    gp_fit_fixed(points, y, hyper, y_mean, y_scale)
}

/// Fits with fixed hyperparameters and a fixed prior: targets are modelled as
/// `prior_mean + scale * f` with `f` a zero-mean GP.
pub fn gp_fit_fixed(points: &[Vec<f64>], y: &[f64], hyper: GpHyper, y_mean: f64, y_scale: f64) -> Result<Gp> {
    if points.is_empty() || points.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} points with {} targets",
            points.len(),
            y.len()
        )));
    }
    if !(y_scale > 0.0) || !y_mean.is_finite() {
        return Err(Error::Shape("invalid GP prior".into()));
    }
    let n = y.len();
    let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));
    let k = DMatrix::from_fn(n, n, |i, j| hyper.kernel(&points[i], &points[j]));

    let mut jitter = 0.0;
    let chol = loop {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += hyper.noise_var + jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            break c;
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::SingularKernel(JITTER_MAX));
        }
    };
    if jitter > 0.0 {
        log::debug!("gp kernel needed jitter {jitter:e}");
    }
    let alpha = chol.solve(&ys);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let log_ml = -0.5 * ys.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok(Gp {
        x: points.to_vec(),
        y_mean,
        y_scale,
        hyper,
        jitter,
        chol,
        alpha,
        log_ml,
    })
}

impl Gp {
    pub fn hyper(&self) -> GpHyper {
        self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_ml
    }

    pub fn prior_mean(&self) -> f64 {
        self.y_mean
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|p| self.hyper.kernel(p, x)));
        let mu = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("triangular factor is invertible");
        let var = (self.hyper.signal_var - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mu, self.y_scale * self.y_scale * var)
    }
}

/// Closed-form expected improvement below `best`.
pub fn ei_closed_form(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 0.0 {
        return (best - mu).max(0.0);
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let z = (best - mu) / sigma;
    ((best - mu) * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

pub fn expected_improvement(gp: &Gp, x: &[f64], best: f64) -> f64 {
    let (mu, var) = gp.predict(x);
    ei_closed_form(mu, var.sqrt(), best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EXACT: GpHyper = GpHyper {
        length_scale: 0.3,
        signal_var: 1.0,
        noise_var: 1e-12,
    };

    #[test]
    fn interpolates_observations() {
        let x = vec![vec![0.1], vec![0.5], vec![0.8]];
        let y = [2.0, -1.0, 0.5];
        let gp = gp_fit_with(&x, &y, EXACT).unwrap();
        for (p, v) in x.iter().zip(y) {
            let (m, var) = gp.predict(p);
            assert!((m - v).abs() < 1e-6);
            assert!(var <= 1e-6);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let gp = gp_fit_with(&[vec![0.2, 0.2]], &[3.5], EXACT).unwrap();
        let (m, var) = gp.predict(&[50.0, 50.0]);
        assert!((m - gp.prior_mean()).abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    /// Posterior via an explicit 3x3 solve by Gaussian elimination.
    #[test]
    fn three_point_oracle() {
        let xs = [0.0, 0.4, 1.0];
        let ys = [1.0, 3.0, 2.0];
        let h = GpHyper {
            length_scale: 0.5,
            signal_var: 2.0,
            noise_var: 0.1,
        };
        let gp = gp_fit_with(&xs.map(|v| vec![v]), &ys, h).unwrap();

        let mean = 2.0;
        let sd = (ys.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0).sqrt();
        let k = |a: f64, b: f64| 2.0 * (-(a - b) * (a - b) / 0.5).exp();
        let solve = |rhs: [f64; 3]| -> [f64; 3] {
            let mut a = [[0.0; 4]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] = k(xs[i], xs[j]) + if i == j { 0.1 } else { 0.0 };
                }
                a[i][3] = rhs[i];
            }
            for c in 0..3 {
                for r in c + 1..3 {
                    let f = a[r][c] / a[c][c];
                    for j in c..4 {
                        a[r][j] -= f * a[c][j];
                    }
                }
            }
            let mut x = [0.0; 3];
            for r in (0..3).rev() {
                x[r] = (a[r][3] - (r + 1..3).map(|j| a[r][j] * x[j]).sum::<f64>()) / a[r][r];
            }
            x
        };
        let alpha = solve(ys.map(|v| (v - mean) / sd));
        for q in [0.2, 0.7, 1.3] {
            let ks = xs.map(|x| k(x, q));
            let mu: f64 = ks.iter().zip(alpha).map(|(a, b)| a * b).sum();
            let w = solve(ks);
            let var = 2.0 - ks.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            let (m, v) = gp.predict(&[q]);
            assert!((m - (mean + sd * mu)).abs() < 1e-10);
            assert!((v - sd * sd * var).abs() < 1e-10);
        }
    }

    #[test]
    fn ei_values() {
        assert!((ei_closed_form(1.0, 1.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(ei_closed_form(2.0, 0.0, 1.0), 0.0);
        let x = vec![vec![0.1], vec![0.5]];
        let gp = gp_fit_with(&x, &[1.0, 0.0], EXACT).unwrap();
        assert!(expected_improvement(&gp, &[0.5], 0.0) < 1e-6);
    }

    #[test]
    fn ei_non_negative_and_variance_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.gen()).collect()).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gp = gp_fit(&x, &y).unwrap();
        for _ in 0..500 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            assert!(gp.predict(&q).1 >= 0.0);
            assert!(expected_improvement(&gp, &q, -1.0) >= 0.0);
        }
    }

    /// Holds for interpolating fixtures; with sizeable noise a posterior mean
    /// far above `best` can be pulled down enough to raise EI.
    #[test]
    fn conditioning_on_incumbent_does_not_raise_its_ei() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = GpHyper { length_scale: 0.3, signal_var: 1.0, noise_var: 1e-10 };
        for _ in 0..20 {
            let mut x: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen(), rng.gen()]).collect();
            let mut y: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let gp = gp_fit_fixed(&x, &y, h, 0.5, 0.3).unwrap();
            let best = y.iter().copied().fold(f64::INFINITY, f64::min);
            let ib = y.iter().position(|&v| v == best).unwrap();
            let before = expected_improvement(&gp, &x[ib], best);
            x.push(x[ib].clone());
            y.push(best);
            let after = expected_improvement(&gp_fit_fixed(&x, &y, h, 0.5, 0.3).unwrap(), &x[ib], best);
            assert!(after <= before + 1e-9, "{before} -> {after}");
        }
    }

    #[test]
    fn duplicate_points_need_jitter() {
        let x = vec![vec![0.3], vec![0.3]];
        let h = GpHyper { length_scale: 0.3, signal_var: 1.0, noise_var: 0.0 };
        let gp = gp_fit_with(&x, &[1.0, 1.0], h).unwrap();
        assert!(gp.jitter() >= 1e-8);
    }
}
