//! Coherent states on the two cross-section circles, anti-Wick
//! quantization and Husimi densities.
//!
//! A coherent state centred at `(theta0, eta0)` has mode coefficients
//! `c_m ∝ exp(-h (m - eta0/h)^2 / 2 - i m theta0)`. Vectors on the channel
//! space use the layout of [`BlockScatteringMatrix::index`]: ends
//! outermost, modes ascending.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::channels::BlockScatteringMatrix;
use crate::classical_flow::{angle_diff, scattering_map, wrap_angle, BoundaryPoint, FlowOptions};
use crate::error::{Error, Result};
use crate::geometry::{open_channels, ChannelSet, End, ModelSpec};
use crate::par;

/// Smallest allowed distance of `|eta0|` from 1, in units of `sqrt(h)`.
pub const EDGE_MARGIN: f64 = 3.0;

fn gaussian(h: f64, m: i64, eta: f64) -> f64 {
    let d = m as f64 - eta / h;
    (-0.5 * h * d * d).exp()
}

/// Squared normalization of a coherent state summed over every integer
/// mode, `sqrt(h / pi)` up to exponentially small terms.
pub fn lattice_norm_sq(h: f64) -> f64 {
    (h / PI).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherentState {
    pub center: BoundaryPoint,
    pub h: f64,
    pub modes: Vec<i64>,
    pub coeffs: Vec<Complex64>,
}

impl CoherentState {
    /// Embed in the channel space (zero on the other end).
    pub fn to_vector(&self) -> Vec<Complex64> {
        let n = self.modes.len();
        let mut v = vec![Complex64::new(0.0, 0.0); 2 * n];
        let off = self.center.end.index() * n;
        v[off..off + n].copy_from_slice(&self.coeffs);
        v
    }

    pub fn overlap(&self, other: &CoherentState) -> Complex64 {
        if self.center.end != other.center.end {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum()
    }

    /// Mass of `|c_m|^2` with `|h m - eta0| > width`.
    pub fn mass_outside(&self, width: f64) -> f64 {
        self.modes
            .iter()
            .zip(&self.coeffs)
            .filter(|(&m, _)| (self.h * m as f64 - self.center.eta).abs() > width)
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }
}

/// Coherent state centred at `center`, projected to the open channels and
/// normalized.
pub fn coherent_state(center: BoundaryPoint, channels: &ChannelSet) -> Result<CoherentState> {
    let h = channels.h;
    if center.eta.abs() > 1.0 - EDGE_MARGIN * h.sqrt() {
        return Err(Error::TooCloseToEdge { eta: center.eta, h });
    }
    let modes: Vec<i64> = channels.modes().collect();
    let mut coeffs: Vec<Complex64> = modes
        .iter()
        .map(|&m| Complex64::from_polar(gaussian(h, m, center.eta), -(m as f64) * center.theta))
        .collect();
    let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    coeffs.iter_mut().for_each(|c| *c /= norm);
    Ok(CoherentState { center, h, modes, coeffs })
}

/// Tensor grid on `[0, 2pi) x [eta_lo, eta_hi]`, trapezoid weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseGrid {
    pub n_theta: usize,
    pub n_eta: usize,
    pub eta_lo: f64,
    pub eta_hi: f64,
}

impl PhaseGrid {
    /// Grid fine enough for `channels`: the theta sum is exact for every
    /// mode difference and the eta spacing is a quarter of the packet width.
    pub fn for_channels(channels: &ChannelSet, eta_lo: f64, eta_hi: f64) -> Self {
        let n_theta = (4 * channels.max_mode() as usize + 4).next_power_of_two().max(64);
        let step = 0.25 * channels.h.sqrt();
        let n_eta = ((eta_hi - eta_lo) / step).ceil() as usize + 1;
        Self { n_theta, n_eta, eta_lo, eta_hi }
    }

    pub fn theta(&self, i: usize) -> f64 {
        TAU * i as f64 / self.n_theta as f64
    }

    pub fn eta(&self, j: usize) -> f64 {
        if self.n_eta == 1 {
            return self.eta_lo;
        }
        self.eta_lo + (self.eta_hi - self.eta_lo) * j as f64 / (self.n_eta - 1) as f64
    }

    fn eta_weight(&self, j: usize) -> f64 {
        if self.n_eta == 1 {
            return 1.0;
        }
        let d = (self.eta_hi - self.eta_lo) / (self.n_eta - 1) as f64;
        if j == 0 || j + 1 == self.n_eta {
            0.5 * d
        } else {
            d
        }
    }
}

/// Anti-Wick quantization `(2 pi h)^-1 ∫ symbol |g><g| dtheta deta` of a
/// symbol on both ends, as a dense matrix on the channel space.
///
/// The coherent states use the lattice normalization, so a symbol equal to
/// 1 on a neighbourhood of every open mode gives the identity.
pub fn anti_wick<F>(symbol: F, channels: &ChannelSet, grid: &PhaseGrid) -> DMatrix<Complex64>
where
    F: Fn(End, f64, f64) -> f64 + Sync,
{
    let h = channels.h;
    let modes: Vec<i64> = channels.modes().collect();
    let n = modes.len();
    let nt = grid.n_theta;
    let pref = lattice_norm_sq(h) / (TAU * h) * (TAU / nt as f64);
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for end in End::BOTH {
        let rows: Vec<usize> = (0..grid.n_eta).collect();
        let parts = par::map(&rows, |&j| {
            let eta = grid.eta(j);
            let mut coeffs: Vec<Complex64> = (0..nt).map(|i| Complex64::new(symbol(end, grid.theta(i), eta), 0.0)).collect();
            if coeffs.iter().all(|x| x.re == 0.0) {
                return None;
            }
            // coeffs[d] = sum_i symbol_i e^{-i d theta_i}
            FftPlanner::new().plan_fft_forward(nt).process(&mut coeffs);
            let g: Vec<f64> = modes.iter().map(|&m| gaussian(h, m, eta)).collect();
            let w = grid.eta_weight(j) * pref;
            let mut block = DMatrix::<Complex64>::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    let d = (modes[a] - modes[b]).rem_euclid(nt as i64) as usize;
                    block[(a, b)] = coeffs[d] * (w * g[a] * g[b]);
                }
            }
            Some(block)
        });
        let off = end.index() * n;
        for block in parts.into_iter().flatten() {
            let mut view = out.view_mut((off, off), (n, n));
            view += block;
        }
    }
    out
}

/// Husimi density `|<g_(end, theta, eta), u>|^2` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HusimiGrid {
    pub grid: PhaseGrid,
    /// Per end, row-major `n_eta x n_theta`.
    pub values: [Vec<f64>; 2],
}

impl HusimiGrid {
    pub fn at(&self, end: End, j: usize, i: usize) -> f64 {
        self.values[end.index()][j * self.grid.n_theta + i]
    }

    pub fn mass(&self, end: End) -> f64 {
        self.values[end.index()].iter().sum()
    }
}

/// One Husimi row at fixed `eta`, all `theta` of the grid, by FFT.
fn husimi_row(u: &[Complex64], modes: &[i64], h: f64, eta: f64, n_theta: usize) -> Vec<f64> {
    let mut a = vec![Complex64::new(0.0, 0.0); n_theta];
    for (&m, &c) in modes.iter().zip(u) {
        a[m.rem_euclid(n_theta as i64) as usize] += c * gaussian(h, m, eta);
    }
    // sum_m a_m e^{i m theta}
    FftPlanner::new().plan_fft_inverse(n_theta).process(&mut a);
    let norm = lattice_norm_sq(h);
    a.iter().map(|x| x.norm_sqr() * norm).collect()
}

pub fn husimi(u: &[Complex64], channels: &ChannelSet, grid: &PhaseGrid) -> HusimiGrid {
    let modes: Vec<i64> = channels.modes().collect();
    let n = modes.len();
    assert_eq!(u.len(), 2 * n);
    let rows: Vec<(End, usize)> = End::BOTH.into_iter().flat_map(|e| (0..grid.n_eta).map(move |j| (e, j))).collect();
    let computed = par::map(&rows, |&(end, j)| {
        let off = end.index() * n;
        husimi_row(&u[off..off + n], &modes, channels.h, grid.eta(j), grid.n_theta)
    });
    let mut values = [Vec::new(), Vec::new()];
    for ((end, _), row) in rows.into_iter().zip(computed) {
        values[end.index()].extend(row);
    }
    HusimiGrid { grid: *grid, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HusimiCenter {
    pub end: End,
    pub theta: f64,
    pub eta: f64,
    /// Share of the Husimi mass on the selected end.
    pub end_share: f64,
    /// Mass split closer than 60/40 between the ends.
    pub degenerate: bool,
}

/// Phase-space center of `u`.
///
/// The end is the one carrying more Husimi mass. On it, `eta` is the mean
/// over cells above 1% of the peak, and `theta` the circular mean of the
/// row evaluated exactly at that `eta`, thresholded the same way against
/// the row's own peak. Averaging theta over all rows instead would mix in
/// the eta-dependent drift of the sheared packet.
pub fn husimi_center(u: &[Complex64], channels: &ChannelSet, grid: &PhaseGrid) -> Result<HusimiCenter> {
    if u.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(Error::ZeroState);
    }
    let hg = husimi(u, channels, grid);
    let ml = hg.mass(End::Left);
    let mr = hg.mass(End::Right);
    let end = if ml >= mr { End::Left } else { End::Right };
    let share = ml.max(mr) / (ml + mr);
    let vals = &hg.values[end.index()];
    let peak = vals.iter().cloned().fold(0.0, f64::max);
    let (mut w, mut we) = (0.0, 0.0);
    for j in 0..grid.n_eta {
        for i in 0..grid.n_theta {
            let v = hg.at(end, j, i);
            if v >= 0.01 * peak {
                w += v;
                we += v * grid.eta(j);
            }
        }
    }
    let eta = we / w;
    let n = channels.channels.len();
    let modes: Vec<i64> = channels.modes().collect();
    let off = end.index() * n;
    let row = husimi_row(&u[off..off + n], &modes, channels.h, eta, grid.n_theta);
    let row_peak = row.iter().cloned().fold(0.0, f64::max);
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &v) in row.iter().enumerate() {
        if v >= 0.01 * row_peak {
            acc += Complex64::from_polar(v, grid.theta(i));
        }
    }
    Ok(HusimiCenter { end, theta: wrap_angle(acc.arg()), eta, end_share: share, degenerate: share < 0.6 })
}

/// One row of the coherent-state transport check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FioRow {
    pub h: f64,
    pub center: BoundaryPoint,
    pub kappa: BoundaryPoint,
    pub husimi: HusimiCenter,
    /// Infinite when the ends disagree.
    pub distance: f64,
}

impl FioRow {
    pub fn end_matches(&self) -> bool {
        self.kappa.end == self.husimi.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FioReport {
    pub h: f64,
    pub rows: Vec<FioRow>,
}

impl FioReport {
    pub fn median_distance(&self) -> f64 {
        median(self.rows.iter().map(|r| r.distance).collect())
    }

    pub fn max_distance(&self) -> f64 {
        self.rows.iter().map(|r| r.distance).fold(0.0, f64::max)
    }

    pub fn end_match_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 1.0;
        }
        self.rows.iter().filter(|r| r.end_matches()).count() as f64 / self.rows.len() as f64
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Transport each coherent state by `S_U` and compare its Husimi center
/// with the classical image.
pub fn fio_check(centers: &[BoundaryPoint], model: &ModelSpec, su: &BlockScatteringMatrix) -> Result<FioReport> {
    let channels = open_channels(model);
    let grid = PhaseGrid::for_channels(&channels, -1.0, 1.0);
    let opts = FlowOptions::default();
    let rows = par::try_map(centers, |&c| {
        let image = scattering_map(&c, model, &opts)?.ok_or(Error::Trapped { theta: c.theta, eta: c.eta })?;
        let g = coherent_state(c, &channels)?;
        let out = su.apply(&g.to_vector());
        let hc = husimi_center(&out, &channels, &grid)?;
        let distance = if hc.end == image.point.end {
            angle_diff(hc.theta, image.point.theta).hypot(hc.eta - image.point.eta)
        } else {
            f64::INFINITY
        };
        Ok(FioRow { h: model.h, center: c, kappa: image.point, husimi: hc, distance })
    })?;
    Ok(FioReport { h: model.h, rows })
}

/// Centers `theta x eta` on one end.
pub fn center_lattice(end: End, thetas: usize, etas: &[f64]) -> Vec<BoundaryPoint> {
    (0..thetas)
        .flat_map(|i| etas.iter().map(move |&e| BoundaryPoint::new(end, TAU * i as f64 / thetas as f64, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::assemble_pair;
    use crate::geometry::{channels_for, PotentialSpec, Profile};

    #[test]
    fn centred_state_is_real_and_even() {
        let ch = channels_for(0.05, 1e-3);
        let g = coherent_state(BoundaryPoint::new(End::Left, 0.0, 0.0), &ch).unwrap();
        let norm: f64 = g.coeffs.iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-14);
        let n = g.modes.len();
        for j in 0..n {
            assert_eq!(g.coeffs[j].im, 0.0);
            assert!((g.coeffs[j] - g.coeffs[n - 1 - j]).norm() < 1e-15);
        }
        let peak = (0..n).max_by(|&a, &b| g.coeffs[a].re.total_cmp(&g.coeffs[b].re)).unwrap();
        assert_eq!(g.modes[peak], 0);
        assert!((g.overlap(&g) - 1.0).norm() < 1e-14);
    }

    #[test]
    fn distant_states_are_orthogonal() {
        let h = 0.02;
        let ch = channels_for(h, 1e-3);
        let a = coherent_state(BoundaryPoint::new(End::Right, 1.0, -0.4), &ch).unwrap();
        let b = coherent_state(BoundaryPoint::new(End::Right, 1.0, -0.4 + 6.0 * h.sqrt()), &ch).unwrap();
        let c = coherent_state(BoundaryPoint::new(End::Right, 1.0 + 6.0 * h.sqrt(), -0.4), &ch).unwrap();
        // Gaussian overlap exp(-d^2 / 4h) = e^{-9} at d = 6 sqrt(h)
        let expected = (-9.0f64).exp();
        assert!((a.overlap(&b).norm() / expected - 1.0).abs() < 1e-3);
        assert!((a.overlap(&c).norm() / expected - 1.0).abs() < 1e-3);
        let d = coherent_state(BoundaryPoint::new(End::Right, 1.0, -0.4 + 6.2 * h.sqrt()), &ch).unwrap();
        assert!(a.overlap(&d).norm() <= 1e-4);
    }

    #[test]
    fn mode_mass_concentrates() {
        let h = 0.02;
        let ch = channels_for(h, 1e-3);
        for eta in [-0.5, 0.0, 0.3, 0.55] {
            let g = coherent_state(BoundaryPoint::new(End::Left, 2.0, eta), &ch).unwrap();
            assert!(g.mass_outside(5.0 * h.sqrt()) <= 1e-4);
        }
        let err = coherent_state(BoundaryPoint::new(End::Left, 0.0, 0.9), &ch).unwrap_err();
        assert!(matches!(err, Error::TooCloseToEdge { .. }));
    }

    #[test]
    fn resolution_of_identity() {
        let ch = channels_for(0.05, 1e-3);
        let grid = PhaseGrid::for_channels(&ch, -1.5, 1.5);
        let a = anti_wick(|_, _, _| 1.0, &ch, &grid);
        let id = DMatrix::<Complex64>::identity(ch.dim(), ch.dim());
        assert!((a - id).norm() / (ch.dim() as f64).sqrt() < 0.05);
        let z = anti_wick(|_, _, _| 0.0, &ch, &grid);
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn multiplier_symbol_is_diagonal() {
        let ch = channels_for(0.05, 1e-3);
        let grid = PhaseGrid::for_channels(&ch, -1.0, 1.0);
        let a = anti_wick(|_, _, eta| (-(eta * eta) * 4.0).exp(), &ch, &grid);
        let mut off = 0.0f64;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if i != j {
                    off = off.max(a[(i, j)].norm());
                }
            }
        }
        assert!(off <= 1e-6, "{off}");
    }

    #[test]
    fn husimi_recovers_own_center() {
        let h = 0.02;
        let ch = channels_for(h, 1e-3);
        let grid = PhaseGrid::for_channels(&ch, -1.0, 1.0);
        for (end, theta, eta) in [(End::Left, 1.0, 0.3), (End::Right, 5.5, -0.2)] {
            let g = coherent_state(BoundaryPoint::new(end, theta, eta), &ch).unwrap();
            let c = husimi_center(&g.to_vector(), &ch, &grid).unwrap();
            assert_eq!(c.end, end);
            assert!(angle_diff(c.theta, theta).abs() < 0.5 * h.sqrt());
            assert!((c.eta - eta).abs() < 0.5 * h.sqrt());
            assert!(!c.degenerate);
        }
        let zero = vec![Complex64::new(0.0, 0.0); ch.dim()];
        assert_eq!(husimi_center(&zero, &ch, &grid), Err(Error::ZeroState));
    }

    #[test]
    fn bulge_transport_single_center() {
        let m = ModelSpec::new(Profile::bulge(0.3, 1.0).unwrap(), PotentialSpec::none(), 0.02).unwrap();
        let (_, su) = assemble_pair(&m).unwrap();
        let rep = fio_check(&[BoundaryPoint::new(End::Right, 1.0, 0.5), BoundaryPoint::new(End::Right, 2.0, 0.0)], &m, &su).unwrap();
        for r in &rep.rows {
            assert!(r.end_matches());
            assert!(r.distance <= 1.5 * 0.02f64.sqrt(), "{r:?}");
        }
        let r0 = &rep.rows[1];
        assert_eq!(r0.husimi.end, End::Left);
        assert!(r0.husimi.eta.abs() < 1e-6, "{r0:?}");
        assert!(angle_diff(r0.husimi.theta, 2.0).abs() < 1e-4);
    }
}
