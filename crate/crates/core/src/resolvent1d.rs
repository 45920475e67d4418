//! Weighted outgoing resolvent of `Q = -h^2 d^2/ds^2 + tau phi(s) - 1` with
//! `phi = f^-4`, estimated on a finite grid.
//!
//! The outgoing condition comes from a quadratic complex absorbing
//! potential near the ends of `[-L, L]`, and the weighted operator norm of
//! `w (Q - i W)^-1 w` with `w = (1 + |s|)^{-(1 + alpha)/2}` is found by power
//! iteration on `K* K`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::ModelSpec;
use crate::par;

/// Complex tridiagonal matrix factored with partial pivoting (the LAPACK
/// `gttrf` layout).
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    dl: Vec<Complex64>,
    d: Vec<Complex64>,
    du: Vec<Complex64>,
    du2: Vec<Complex64>,
    swapped: Vec<bool>,
}

impl Tridiagonal {
    /// Factor the matrix with sub-diagonal `lower`, diagonal `diag` and
    /// super-diagonal `upper`. `None` if it is singular.
    pub fn factor(lower: &[Complex64], diag: &[Complex64], upper: &[Complex64]) -> Option<Self> {
        let n = diag.len();
        assert!(n >= 1 && lower.len() + 1 == n && upper.len() + 1 == n);
        let mut dl = lower.to_vec();
        let mut d = diag.to_vec();
        let mut du = upper.to_vec();
        let mut du2 = vec![Complex64::new(0.0, 0.0); n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].norm() >= dl[i].norm() {
                if d[i].norm() == 0.0 {
                    return None;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1].norm() == 0.0 {
            return None;
        }
        Some(Self { dl, d, du, du2, swapped })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Overwrite `b` with `A^-1 b`.
    pub fn solve(&self, b: &mut [Complex64]) {
        let n = self.len();
        assert_eq!(b.len(), n);
        for i in 0..n - 1 {
            if self.swapped[i] {
                let t = b[i];
                b[i] = b[i + 1];
                b[i + 1] = t - self.dl[i] * b[i];
            } else {
                let t = b[i];
                b[i + 1] -= self.dl[i] * t;
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }

    /// `A^-H b` for a complex symmetric `A`, where `A^H = conj(A)`.
    pub fn solve_adjoint_symmetric(&self, b: &mut [Complex64]) {
        b.iter_mut().for_each(|x| *x = x.conj());
        self.solve(b);
        b.iter_mut().for_each(|x| *x = x.conj());
    }
}

/// Quadratic absorbing layer `strength * ((|s| - (L - width)) / width)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Absorber {
    pub width: f64,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedResolventProblem {
    pub model: ModelSpec,
    /// Spectral margin: `tau <= 1 - epsilon`.
    pub epsilon: f64,
    pub alpha: f64,
    pub half_length: f64,
    pub absorber: Absorber,
    pub points_per_wavelength: f64,
    /// Relative change that stops the power iteration.
    pub tol: f64,
    pub max_iterations: usize,
}

impl WeightedResolventProblem {
    pub fn new(model: ModelSpec) -> Self {
        let half_length = model.half_width() + 40.0;
        Self {
            model,
            epsilon: 0.1,
            alpha: 1.0,
            half_length,
            absorber: Absorber { width: 18.0, strength: 0.5 },
            points_per_wavelength: 20.0,
            tol: 1e-6,
            max_iterations: 2000,
        }
    }

    pub fn weight(&self, s: f64) -> f64 {
        (1.0 + s.abs()).powf(-0.5 * (1.0 + self.alpha))
    }

    /// `n` equally spaced values on `[0, 1 - epsilon]`.
    pub fn tau_grid(&self, n: usize) -> Vec<f64> {
        let top = 1.0 - self.epsilon;
        (0..n).map(|i| top * i as f64 / (n - 1).max(1) as f64).collect()
    }

    fn absorption(&self, s: f64, strength: f64) -> f64 {
        let start = self.half_length - self.absorber.width;
        let x = ((s.abs() - start) / self.absorber.width).max(0.0);
        strength * x * x
    }

    /// Interior grid of `[-L, L]`, symmetric about 0, with Dirichlet ends.
    pub fn grid(&self, h: f64) -> Vec<f64> {
        // local wavenumber is at most 1/h for tau >= 0
        let dx_target = TAU * h / self.points_per_wavelength;
        let n = (2.0 * self.half_length / dx_target).ceil() as usize;
        let dx = 2.0 * self.half_length / (n + 1) as f64;
        (1..=n).map(|j| -self.half_length + j as f64 * dx).collect()
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `|| w (Q - i W)^-1 w ||` at one `(tau, h)` and absorber strength.
pub fn weighted_resolvent_norm_with(prob: &WeightedResolventProblem, tau: f64, h: f64, strength: f64) -> Result<f64> {
    if tau > 1.0 - prob.epsilon + 1e-12 || tau < 0.0 {
        return Err(Error::InvalidModel(format!("tau={tau} outside [0, 1 - epsilon]")));
    }
    let s = prob.grid(h);
    let n = s.len();
    let dx = s[1] - s[0];
    let c = h * h / (dx * dx);
    let diag: Vec<Complex64> = s
        .iter()
        .map(|&x| {
            let phi = prob.model.profile.eval(x).f.powi(-4);
            Complex64::new(2.0 * c + tau * phi - 1.0, -prob.absorption(x, strength))
        })
        .collect();
    let off = vec![Complex64::new(-c, 0.0); n - 1];
    let lu = Tridiagonal::factor(&off, &diag, &off).ok_or(Error::InvalidModel("singular resolvent matrix".into()))?;
    let w: Vec<f64> = s.iter().map(|&x| prob.weight(x)).collect();

    // deterministic start with support everywhere
    let mut v: Vec<Complex64> = (0..n).map(|j| Complex64::new(1.0 + 0.5 * ((j as f64) * 0.7).sin(), 0.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut prev = 0.0;
    for _ in 0..prob.max_iterations {
        let mut y: Vec<Complex64> = v.iter().zip(&w).map(|(x, wi)| x * wi).collect();
        lu.solve(&mut y);
        y.iter_mut().zip(&w).for_each(|(x, wi)| *x *= wi * wi);
        lu.solve_adjoint_symmetric(&mut y);
        y.iter_mut().zip(&w).for_each(|(x, wi)| *x *= wi);
        let ny = norm(&y);
        if ny == 0.0 {
            return Err(Error::ZeroState);
        }
        let est = ny.sqrt();
        v = y.into_iter().map(|x| x / ny).collect();
        if (est - prev).abs() <= prob.tol * est {
            return Ok(est);
        }
        prev = est;
    }
    Err(Error::NonConvergedPowerIteration { iterations: prob.max_iterations })
}

pub fn weighted_resolvent_norm(prob: &WeightedResolventProblem, tau: f64, h: f64) -> Result<f64> {
    weighted_resolvent_norm_with(prob, tau, h, prob.absorber.strength)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventEstimate {
    pub tau: f64,
    pub h: f64,
    pub norm: f64,
    /// Norm with half the absorber strength over the norm.
    pub absorber_ratio: f64,
}

impl ResolventEstimate {
    /// Halving the absorber moved the value by more than 5%.
    pub fn absorber_sensitive(&self) -> bool {
        (self.absorber_ratio - 1.0).abs() > 0.05
    }
}

pub fn estimate(prob: &WeightedResolventProblem, tau: f64, h: f64) -> Result<ResolventEstimate> {
    let norm = weighted_resolvent_norm(prob, tau, h)?;
    let half = weighted_resolvent_norm_with(prob, tau, h, 0.5 * prob.absorber.strength)?;
    Ok(ResolventEstimate { tau, h, norm, absorber_ratio: half / norm })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEstimate {
    pub h: f64,
    pub sup: f64,
    pub tau_at_sup: f64,
    /// Ratio of the sup with half the absorber strength to the sup.
    pub absorber_ratio: f64,
    pub rows: Vec<ResolventEstimate>,
}

/// Maximum of the weighted norm over an `n_tau`-point grid on `[0, 1 - epsilon]`.
pub fn sup_over_tau(prob: &WeightedResolventProblem, h: f64, n_tau: usize) -> Result<SupEstimate> {
    let taus = prob.tau_grid(n_tau);
    let rows = par::try_map(&taus, |&t| estimate(prob, t, h))?;
    let best = rows.iter().copied().max_by(|a, b| a.norm.total_cmp(&b.norm)).expect("non-empty tau grid");
    let half_sup = rows.iter().map(|r| r.norm * r.absorber_ratio).fold(0.0, f64::max);
    Ok(SupEstimate { h, sup: best.norm, tau_at_sup: best.tau, absorber_ratio: half_sup / best.norm, rows })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PotentialSpec, Profile};
    use nalgebra::{DMatrix, DVector};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let n = 9;
        let lower: Vec<Complex64> = (0..n - 1).map(|i| c(1.0 + i as f64, 0.3)).collect();
        // small diagonal forces pivoting
        let diag: Vec<Complex64> = (0..n).map(|i| c(0.01 * i as f64, -0.2)).collect();
        let upper: Vec<Complex64> = (0..n - 1).map(|i| c(-0.5, 0.1 * i as f64)).collect();
        let mut a = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = diag[i];
            if i + 1 < n {
                a[(i + 1, i)] = lower[i];
                a[(i, i + 1)] = upper[i];
            }
        }
        let b: Vec<Complex64> = (0..n).map(|i| c((i as f64).cos(), (i as f64).sin())).collect();
        let lu = Tridiagonal::factor(&lower, &diag, &upper).unwrap();
        let mut x = b.clone();
        lu.solve(&mut x);
        let r = &a * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn adjoint_solve_for_symmetric() {
        let n = 7;
        let off: Vec<Complex64> = (0..n - 1).map(|i| c(-1.0, 0.05 * i as f64)).collect();
        let diag: Vec<Complex64> = (0..n).map(|i| c(0.3 - 0.1 * i as f64, -0.4)).collect();
        let lu = Tridiagonal::factor(&off, &diag, &off).unwrap();
        let mut a = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = diag[i];
            if i + 1 < n {
                a[(i + 1, i)] = off[i];
                a[(i, i + 1)] = off[i];
            }
        }
        let b: Vec<Complex64> = (0..n).map(|i| c(i as f64, 1.0)).collect();
        let mut x = b.clone();
        lu.solve_adjoint_symmetric(&mut x);
        let r = a.adjoint() * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.norm() < 1e-12);
        assert!(Tridiagonal::factor(&[c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0)]).is_none());
    }

    #[test]
    fn free_resolvent_kernel() {
        // (-h^2 d^2 - 1 - i0)^-1 has kernel (i / 2h) e^{i|s - s'|/h}
        let h = 0.1;
        let mut prob = WeightedResolventProblem::new(ModelSpec::free(1.0, h).unwrap());
        // fine enough that the discrete dispersion drifts < 0.01 rad over the probes
        prob.points_per_wavelength = 80.0;
        let s = prob.grid(h);
        let n = s.len();
        let dx = s[1] - s[0];
        let cc = h * h / (dx * dx);
        let diag: Vec<Complex64> = s.iter().map(|&x| c(2.0 * cc - 1.0, -prob.absorption(x, 0.5))).collect();
        let off = vec![c(-cc, 0.0); n - 1];
        let lu = Tridiagonal::factor(&off, &diag, &off).unwrap();
        let src = |x: f64| (-(x * x) * 4.0).exp();
        let mut u: Vec<Complex64> = s.iter().map(|&x| c(src(x), 0.0)).collect();
        lu.solve(&mut u);
        for probe in [-3.0, 0.0, 2.5] {
            let j = s.iter().position(|&x| x >= probe).unwrap();
            let x0 = s[j];
            let exact: Complex64 = s.iter().map(|&y| c(0.0, 0.5 / h) * Complex64::from_polar(src(y) * dx, (x0 - y).abs() / h)).sum();
            assert!((u[j] - exact).norm() / exact.norm() < 0.02, "{} {}", u[j], exact);
        }
    }

    #[test]
    fn free_norm_scales_like_inverse_h() {
        let model = ModelSpec::free(1.0, 0.1).unwrap();
        let prob = WeightedResolventProblem::new(model);
        let a = weighted_resolvent_norm(&prob, 0.0, 0.1).unwrap();
        let b = weighted_resolvent_norm(&prob, 0.0, 0.05).unwrap();
        assert!((1.6..=2.4).contains(&(b / a)), "{}", b / a);
    }

    #[test]
    fn mirrored_profile_same_norm() {
        let p = Profile::new(crate::geometry::ProfileKind::Bulge, 0.3, 1.0, 0.6, 0.3).unwrap();
        let m1 = ModelSpec::new(p.clone(), PotentialSpec::none(), 0.1).unwrap();
        let m2 = ModelSpec::new(p.mirrored(), PotentialSpec::none(), 0.1).unwrap();
        let a = weighted_resolvent_norm(&WeightedResolventProblem::new(m1), 0.5, 0.1).unwrap();
        let b = weighted_resolvent_norm(&WeightedResolventProblem::new(m2), 0.5, 0.1).unwrap();
        assert!((a - b).abs() <= 1e-6 * a);
    }

    #[test]
    fn tau_outside_margin_rejected() {
        let prob = WeightedResolventProblem::new(ModelSpec::free(1.0, 0.1).unwrap());
        assert!(weighted_resolvent_norm(&prob, 0.95, 0.1).is_err());
        assert_eq!(prob.tau_grid(21).len(), 21);
        assert!((prob.tau_grid(21)[20] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h| (h, 3.0 / h)).collect();
        assert!((loglog_slope(&pts) + 1.0).abs() < 1e-12);
    }
}
