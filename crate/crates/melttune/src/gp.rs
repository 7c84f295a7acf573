//! Gaussian-process regression over the 2D gain space.
//!
//! Squared-exponential kernel with per-input length scales, constant prior
//! mean, and i.i.d. gaussian observation noise. The posterior mean and
//! variance at a query point come from the standard prediction equations,
//! solved through a Cholesky factorization of the noisy gram matrix instead
//! of an explicit inverse. Hyperparameters are fixed at construction and
//! never refit during a run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-exponential kernel with per-dimension length scales.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Kernel {
    /// Signal variance sigma^2 (kernel value at zero distance).
    pub variance: f64,
    pub length_scales: [f64; 2],
}

impl Kernel {
    pub fn new(variance: f64, length_scales: [f64; 2]) -> Result<Self> {
        if variance <= 0.0 || !variance.is_finite() {
            return Err(Error::config(format!(
                "kernel variance must be positive, got {variance}"
            )));
        }
        for l in length_scales {
            if l <= 0.0 || !l.is_finite() {
                return Err(Error::config(format!(
                    "kernel length scales must be positive, got {l}"
                )));
            }
        }
        Ok(Kernel {
            variance,
            length_scales,
        })
    }

    /// sigma^2 * exp(-1/2 * sum_d ((a_d - b_d)/l_d)^2)
    pub fn eval(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let mut q = 0.0;
        for d in 0..2 {
            let z = (a[d] - b[d]) / self.length_scales[d];
            q += z * z;
        }
        self.variance * (-0.5 * q).exp()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub kernel_variance: f64,
    pub length_scales: [f64; 2],
    /// Observation noise variance sigma_omega^2 on the (standardized) costs.
    pub noise_var: f64,
    /// Constant prior mean psi.
    pub prior_mean: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            kernel_variance: 1.0,
            length_scales: [0.3, 0.3],
            noise_var: 1e-3,
            prior_mean: 0.0,
        }
    }
}

impl GpConfig {
    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::new(self.kernel_variance, self.length_scales)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel()?;
        if self.noise_var < 0.0 || !self.noise_var.is_finite() {
            return Err(Error::config(format!(
                "gp noise variance must be nonnegative, got {}",
                self.noise_var
            )));
        }
        if !self.prior_mean.is_finite() {
            return Err(Error::config("gp prior mean must be finite"));
        }
        Ok(())
    }
}

/// Jitter escalation ladder, as multiples of the kernel variance.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// GP model over observed (gains, cost) pairs.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: Kernel,
    noise_var: f64,
    prior_mean: f64,
    x: Vec<[f64; 2]>,
    g: Vec<f64>,
    /// Lower Cholesky factor of K + (noise + jitter) I, row-major R x R.
    chol: Vec<f64>,
    /// Cached (K + noise I)^{-1} (g - psi).
    alpha: Vec<f64>,
}

impl GpModel {
    pub fn new(cfg: &GpConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(GpModel {
            kernel: cfg.kernel()?,
            noise_var: cfg.noise_var,
            prior_mean: cfg.prior_mean,
            x: Vec::new(),
            g: Vec::new(),
            chol: Vec::new(),
            alpha: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn observations(&self) -> (&[[f64; 2]], &[f64]) {
        (&self.x, &self.g)
    }

    /// Adds one noisy observation and refactors the gram matrix.
    pub fn add(&mut self, x: [f64; 2], g_obs: f64) -> Result<()> {
        if !x[0].is_finite() || !x[1].is_finite() || !g_obs.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite observation ({x:?}, {g_obs})"
            )));
        }
        self.x.push(x);
        self.g.push(g_obs);
        self.refactor()
    }

    /// Posterior mean and variance at a query point. With no data this is
    /// the prior (psi, sigma^2). Variance is clamped at zero.
    pub fn posterior(&self, x: [f64; 2]) -> (f64, f64) {
        let r = self.len();
        if r == 0 {
            return (self.prior_mean, self.kernel.variance);
        }
        let k: Vec<f64> = self.x.iter().map(|&xi| self.kernel.eval(x, xi)).collect();
        let mean = self.prior_mean + dot(&k, &self.alpha);
        let mut v = k;
        forward_solve(&self.chol, &mut v, r);
        let variance = self.kernel.eval(x, x) - dot(&v, &v);
        (mean, variance.max(0.0))
    }

    fn refactor(&mut self) -> Result<()> {
        let r = self.len();
        let mut jitter = 0.0;
        loop {
            let mut a = vec![0.0; r * r];
            for i in 0..r {
                for j in 0..=i {
                    let mut v = self.kernel.eval(self.x[i], self.x[j]);
                    if i == j {
                        v += self.noise_var + jitter;
                    }
                    a[i * r + j] = v;
                    a[j * r + i] = v;
                }
            }
            if cholesky_in_place(&mut a, r).is_ok() {
                self.chol = a;
                let mut rhs: Vec<f64> = self.g.iter().map(|&g| g - self.prior_mean).collect();
                forward_solve(&self.chol, &mut rhs, r);
                back_solve(&self.chol, &mut rhs, r);
                self.alpha = rhs;
                return Ok(());
            }
            jitter = if jitter == 0.0 {
                JITTER_START * self.kernel.variance
            } else {
                jitter * 10.0
            };
            if jitter > JITTER_MAX * self.kernel.variance {
                return Err(Error::numerical(
                    "gram matrix not positive definite even after jitter escalation",
                ));
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place lower Cholesky; fails on a non-positive pivot.
fn cholesky_in_place(a: &mut [f64], n: usize) -> std::result::Result<(), ()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(());
        }
        let l = d.sqrt();
        a[j * n + j] = l;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l;
        }
        for k in (j + 1)..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

/// Solves L v = b in place.
fn forward_solve(l: &[f64], b: &mut [f64], n: usize) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves L^T v = b in place.
fn back_solve(l: &[f64], b: &mut [f64], n: usize) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}
