//! Eigenphases of the block scattering matrix, trace functionals, Weyl
//! counts and the equidistribution sweep.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::channels::{assemble_pair, BlockScatteringMatrix};
use crate::classical_flow::rotation_number;
use crate::error::{Error, Result};
use crate::geometry::{channels_for, eta_c, ModelSpec, ProfileKind};
use crate::par;

/// `c_1 vol(Y)` for two unit circles: `(1/pi) * 4 pi`.
pub const WEYL_CONSTANT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModePhases {
    pub m: i64,
    /// Both eigenphases in `[0, 2pi)`, ascending.
    pub phases: [f64; 2],
    /// Largest `| |lambda| - 1 |` of the two eigenvalues.
    pub modulus_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseShiftSet {
    pub h: f64,
    pub modes: Vec<ModePhases>,
}

impl PhaseShiftSet {
    pub fn len(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// All phases, sorted.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.modes.iter().flat_map(|p| p.phases).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn max_modulus_defect(&self) -> f64 {
        self.modes.iter().map(|p| p.modulus_defect).fold(0.0, f64::max)
    }

    /// `Tr S^k` from the phases; `k = 0` gives the dimension.
    pub fn trace_power(&self, k: i32) -> Complex64 {
        self.modes
            .iter()
            .flat_map(|p| p.phases)
            .map(|phi| Complex64::from_polar(1.0, k as f64 * phi))
            .sum()
    }
}

fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Eigenphases block by block from the closed-form 2x2 eigenvalues.
pub fn eigenphases(s: &BlockScatteringMatrix) -> Result<PhaseShiftSet> {
    let defect = s.max_unitarity_defect();
    if defect > 1e-6 {
        return Err(Error::NonUnitaryInput { defect });
    }
    let modes = s
        .blocks
        .iter()
        .map(|b| {
            let [[a, c], [d, e]] = b.s;
            let half = 0.5 * (a + e);
            let disc = (half * half - (a * e - c * d)).sqrt();
            let l = [half + disc, half - disc];
            let mut phases = [wrap_phase(l[0].arg()), wrap_phase(l[1].arg())];
            phases.sort_by(f64::total_cmp);
            let modulus_defect = l.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
            ModePhases { m: b.m, phases, modulus_defect }
        })
        .collect();
    Ok(PhaseShiftSet { h: s.h, modes })
}

/// Trigonometric polynomial `sum_k a_k z^k` on the unit circle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrigPoly {
    pub id: String,
    pub coeffs: Vec<(i32, Complex64)>,
}

impl TrigPoly {
    pub fn monomial(k: i32) -> Self {
        Self { id: format!("z^{k}"), coeffs: vec![(k, Complex64::new(1.0, 0.0))] }
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coeffs.iter().filter(|(k, _)| *k == 0).map(|(_, a)| *a).sum()
    }

    pub fn degree(&self) -> i32 {
        self.coeffs.iter().map(|(k, _)| k.abs()).max().unwrap_or(0)
    }

    /// Value at `e^{i theta}`.
    pub fn eval(&self, theta: f64) -> Complex64 {
        self.coeffs.iter().map(|&(k, a)| a * Complex64::from_polar(1.0, k as f64 * theta)).sum()
    }
}

/// `Tr f(S)` through the eigenphases.
pub fn trace_functional(set: &PhaseShiftSet, f: &TrigPoly) -> Complex64 {
    f.coeffs.iter().map(|&(k, a)| a * set.trace_power(k)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylCount {
    pub h: f64,
    pub dim: usize,
    /// `h * dim`
    pub scaled: f64,
    pub target: f64,
}

pub fn weyl_count(h: f64, threshold_guard: f64) -> WeylCount {
    let dim = channels_for(h, threshold_guard).dim();
    WeylCount { h, dim, scaled: h * dim as f64, target: WEYL_CONSTANT }
}

/// Counts of phases in `bins` equal arcs of `[0, 2pi)`.
pub fn histogram(phases: &[f64], bins: usize) -> Vec<usize> {
    let mut out = vec![0; bins];
    for &p in phases {
        let i = ((wrap_phase(p) / TAU) * bins as f64) as usize;
        out[i.min(bins - 1)] += 1;
    }
    out
}

/// Kolmogorov distance between the empirical phase distribution and the
/// uniform one.
pub fn cdf_sup_deviation(phases: &[f64]) -> f64 {
    let mut v: Vec<f64> = phases.iter().map(|&p| wrap_phase(p) / TAU).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquidistRow {
    pub h: f64,
    pub dim: usize,
    pub f_id: String,
    /// `h * Tr f(S_U)`
    #[serde(skip)]
    pub trace_scaled: Complex64,
    /// `4 * a_0`
    #[serde(skip)]
    pub target: Complex64,
    pub cdf_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquidistReport {
    pub rows: Vec<EquidistRow>,
    /// `(h, counts)` per sweep point.
    pub histograms: Vec<(f64, Vec<usize>)>,
    /// Set when the model is outside the family where the dynamical
    /// hypotheses are checked (the hourglass traps a band of trajectories).
    pub caveat: Option<String>,
}

impl EquidistReport {
    pub fn trace(&self, h: f64, f_id: &str) -> Option<Complex64> {
        self.rows.iter().find(|r| r.h == h && r.f_id == f_id).map(|r| r.trace_scaled)
    }
}

/// Solve, diagonalize and evaluate every functional at every `h`.
pub fn equidist_sweep(model: &ModelSpec, hs: &[f64], functionals: &[TrigPoly], bins: usize) -> Result<EquidistReport> {
    let caveat = (model.profile.kind() == ProfileKind::Hourglass)
        .then(|| "hourglass: trapped band around eta_c, equidistribution hypotheses unverified".to_string());
    let per_h = hs
        .iter()
        .map(|&h| {
            let m = model.with_h(h);
            m.validate()?;
            let (_, su) = assemble_pair(&m)?;
            eigenphases(&su)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut histograms = Vec::new();
    for (set, &h) in per_h.iter().zip(hs) {
        let sorted = set.sorted();
        let cdf_dev = cdf_sup_deviation(&sorted);
        histograms.push((h, histogram(&sorted, bins)));
        for f in functionals {
            rows.push(EquidistRow {
                h,
                dim: set.len(),
                f_id: f.id.clone(),
                trace_scaled: trace_functional(set, f) * h,
                target: f.constant_term() * WEYL_CONSTANT,
                cdf_dev,
            });
        }
    }
    Ok(EquidistReport { rows, histograms, caveat })
}

/// True if the sequence of magnitudes strictly decreases.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Band {
    /// `h|m| <= eta_c - 0.1`: should transmit.
    Transmit,
    /// `eta_c - 0.1 < h|m| < eta_c + 0.1`: tunnelling, not judged.
    Tunnelling,
    /// `eta_c + 0.1 <= h|m| <= 0.9`: should reflect.
    Reflect,
    /// `h|m| > 0.9`.
    Beyond,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DichotomyRow {
    pub m: i64,
    pub hm: f64,
    pub transmission: f64,
    pub reflection: f64,
    pub band: Band,
}

impl DichotomyRow {
    /// `|r|^2 <= tol` in the transmit band, `|t|^2 <= tol` in the reflect band.
    pub fn passes(&self, tol: f64) -> bool {
        match self.band {
            Band::Transmit => self.reflection <= tol,
            Band::Reflect => self.transmission <= tol,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyReport {
    pub h: f64,
    pub eta_c: f64,
    pub rows: Vec<DichotomyRow>,
}

impl DichotomyReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.rows.iter().all(|r| r.passes(tol))
    }
}

/// Per-mode `|t|^2`, `|r|^2` of an hourglass against the `eta_c` bands.
pub fn dichotomy_report(model: &ModelSpec, s: &BlockScatteringMatrix) -> Result<DichotomyReport> {
    if model.profile.kind() != ProfileKind::Hourglass {
        return Err(Error::NotHourglass);
    }
    let ec = eta_c(&model.profile)?;
    let rows = s
        .blocks
        .iter()
        .map(|b| {
            let hm = (s.h * b.m as f64).abs();
            let band = if hm <= ec - 0.1 {
                Band::Transmit
            } else if hm < ec + 0.1 {
                Band::Tunnelling
            } else if hm <= 0.9 {
                Band::Reflect
            } else {
                Band::Beyond
            };
            // flux-normalized, so |t|^2 + |r|^2 = 1 per column
            let t = b.s[1][0].norm_sqr().max(b.s[0][1].norm_sqr());
            let r = b.s[0][0].norm_sqr().max(b.s[1][1].norm_sqr());
            DichotomyRow { m: b.m, hm, transmission: t, reflection: r, band }
        })
        .collect();
    Ok(DichotomyReport { h: s.h, eta_c: ec, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    /// Iterate of the return map.
    pub m: u32,
    pub eta: f64,
    /// The integer `n` with `m delta_theta = 2 pi n`.
    pub winding: i64,
}

/// Values of `eta` on `(-eta_max, eta_max)` where `m delta_theta(eta)` hits
/// `2 pi Z`, located by sign changes on a grid and refined by bisection.
pub fn fixed_point_scan(model: &ModelSpec, max_iterate: u32, eta_max: f64, grid: usize) -> Result<Vec<FixedPoint>> {
    let etas: Vec<f64> = (0..=grid).map(|i| -eta_max + 2.0 * eta_max * i as f64 / grid as f64).collect();
    let deltas = par::try_map(&etas, |&e| rotation_number(e, model))?;
    let mut out = Vec::new();
    for m in 1..=max_iterate {
        let lift = |d: f64| m as f64 * d / TAU;
        for i in 0..grid {
            let (a, b) = (lift(deltas[i]), lift(deltas[i + 1]));
            let lo = a.min(b);
            let hi = a.max(b);
            let mut n = lo.ceil() as i64;
            // count each crossing once: integers in (lo, hi], or exactly at the grid start
            if (n as f64) == lo && i > 0 {
                n += 1;
            }
            while (n as f64) <= hi {
                let target = n as f64 * TAU / m as f64;
                let (mut x0, mut x1) = (etas[i], etas[i + 1]);
                let g = |e: f64| rotation_number(e, model).map(|d| d - target);
                let mut g0 = deltas[i] - target;
                for _ in 0..60 {
                    let mid = 0.5 * (x0 + x1);
                    let gm = g(mid)?;
                    if gm == 0.0 {
                        x0 = mid;
                        x1 = mid;
                        break;
                    }
                    if gm.signum() == g0.signum() {
                        x0 = mid;
                        g0 = gm;
                    } else {
                        x1 = mid;
                    }
                }
                out.push(FixedPoint { m, eta: 0.5 * (x0 + x1), winding: n });
                n += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{assemble, ModeBlock};
    use crate::geometry::{PotentialSpec, Profile};

    fn bulge(h: f64) -> ModelSpec {
        ModelSpec::new(Profile::bulge(0.3, 1.0).unwrap(), PotentialSpec::none(), h).unwrap()
    }

    #[test]
    fn free_phases_are_antipodal() {
        let m = ModelSpec::free(1.0, 0.1).unwrap();
        let s = assemble(&m).unwrap();
        let set = eigenphases(&s).unwrap();
        for (p, b) in set.modes.iter().zip(&s.blocks) {
            let phi = wrap_phase(2.0 * m.section() * b.tau / m.h);
            let want = {
                let mut w = [phi, wrap_phase(phi + std::f64::consts::PI)];
                w.sort_by(f64::total_cmp);
                w
            };
            for k in 0..2 {
                let d = (p.phases[k] - want[k]).abs();
                assert!(d.min(TAU - d) < 1e-8);
            }
        }
        assert!(set.trace_power(1).norm() < 1e-8);
        assert_eq!(set.trace_power(0), Complex64::new(set.len() as f64, 0.0));
    }

    #[test]
    fn identity_has_zero_phases() {
        let one = Complex64::new(1.0, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let blocks = (-2..=2).map(|m| ModeBlock { m, tau: 1.0, s: [[one, z], [z, one]], unitarity_defect: 0.0 }).collect();
        let s = BlockScatteringMatrix { h: 0.35, blocks, normalized: true };
        let set = eigenphases(&s).unwrap();
        assert!(set.sorted().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn non_unitary_rejected() {
        let two = Complex64::new(2.0, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let s = BlockScatteringMatrix {
            h: 0.5,
            blocks: vec![ModeBlock { m: 0, tau: 1.0, s: [[two, z], [z, two]], unitarity_defect: 3.0 }],
            normalized: true,
        };
        assert!(matches!(eigenphases(&s), Err(Error::NonUnitaryInput { .. })));
    }

    #[test]
    fn bulge_coarse_phases() {
        let s = assemble(&bulge(0.35)).unwrap();
        let set = eigenphases(&s).unwrap();
        assert_eq!(set.len(), 10);
        assert!(set.max_modulus_defect() <= 1e-8);
    }

    #[test]
    fn traces_match_matrix_powers() {
        let s = assemble(&bulge(0.1)).unwrap();
        let set = eigenphases(&s).unwrap();
        let dense = s.to_dense();
        let mut p = dense.clone();
        for k in 1..=4 {
            assert!((p.trace() - set.trace_power(k)).norm() < 1e-8);
            p = &p * &dense;
        }
        let f = TrigPoly { id: "mix".into(), coeffs: vec![(0, Complex64::new(2.0, 0.0)), (-1, Complex64::new(0.0, 1.0))] };
        let direct = set.trace_power(0) * 2.0 + set.trace_power(-1) * Complex64::new(0.0, 1.0);
        assert!((trace_functional(&set, &f) - direct).norm() < 1e-12);
        assert_eq!(trace_functional(&set, &TrigPoly { id: "1".into(), coeffs: vec![(0, Complex64::new(1.0, 0.0))] }).re, set.len() as f64);
    }

    #[test]
    fn weyl_counts() {
        assert_eq!(weyl_count(0.1, 1e-3).dim, 38);
        let w = weyl_count(0.01, 1e-3);
        assert_eq!(w.dim, 398);
        assert!((w.scaled - 3.98).abs() < 1e-12);
        assert_eq!(weyl_count(2.0, 1e-3).dim, 2);
    }

    #[test]
    fn histogram_and_cdf() {
        let uniform: Vec<f64> = (0..64).map(|i| (i as f64 + 0.5) * TAU / 64.0).collect();
        let hist = histogram(&uniform, 32);
        assert!(hist.iter().all(|&c| c == 2));
        assert!(cdf_sup_deviation(&uniform) <= 1.0 / 64.0 + 1e-12);
        let clumped = vec![0.1; 10];
        assert!(cdf_sup_deviation(&clumped) > 0.9);
        assert_eq!(histogram(&clumped, 32).iter().sum::<usize>(), 10);
    }

    #[test]
    fn hourglass_bands() {
        let m = ModelSpec::new(Profile::hourglass(-0.2, 1.0).unwrap(), PotentialSpec::none(), 0.05).unwrap();
        let (_, su) = assemble_pair(&m).unwrap();
        let rep = dichotomy_report(&m, &su).unwrap();
        assert!((rep.eta_c - 0.64).abs() < 1e-12);
        assert!(rep.rows.iter().any(|r| r.band == Band::Transmit));
        assert!(rep.rows.iter().any(|r| r.band == Band::Reflect));
        assert!(matches!(dichotomy_report(&bulge(0.1), &su), Err(Error::NotHourglass)));
    }

    #[test]
    fn fixed_points_are_isolated() {
        let m = bulge(0.1);
        let pts = fixed_point_scan(&m, 2, 0.9, 400).unwrap();
        // eta = 0 is a fixed point of every iterate
        assert!(pts.iter().filter(|p| p.eta.abs() < 1e-9).count() == 2);
        for m_it in 1..=2 {
            let mut e: Vec<f64> = pts.iter().filter(|p| p.m == m_it).map(|p| p.eta).collect();
            e.sort_by(f64::total_cmp);
            assert!(e.windows(2).all(|w| w[1] - w[0] > 1e-6));
        }
    }
}
