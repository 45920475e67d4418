//! Per-mode radial scattering and the block scattering matrix.
//!
//! Separating `e^{i m theta}` leaves, for each mode, the 1D problem
//! `-h^2 w'' + U w = w` with
//! `U = h^2 f''/f + h^2 m^2 f^-4 + V0 + h^2 (V2 + W)`, which is `h^2 m^2`
//! outside the core. Its 2x2 scattering matrix is read at the two
//! reference sections.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{open_channels, Channel, ChannelSet, End, ModelSpec};
use crate::par;

pub type Block = [[Complex64; 2]; 2];

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Effective potential of one angular mode.
#[derive(Debug, Clone, Copy)]
pub struct ModePotential<'a> {
    pub model: &'a ModelSpec,
    pub m: i64,
    pub tau: f64,
}

impl<'a> ModePotential<'a> {
    pub fn new(model: &'a ModelSpec, m: i64) -> Self {
        let hm = model.h * m as f64;
        Self { model, m, tau: (1.0 - hm * hm).max(0.0).sqrt() }
    }

    /// Asymptotic wavenumber `tau / h`.
    pub fn wavenumber(&self) -> f64 {
        self.tau / self.model.h
    }

    pub fn eval(&self, s: f64) -> f64 {
        let h = self.model.h;
        let p = self.model.profile.eval(s);
        let hm = h * self.m as f64;
        let (v0, _) = self.model.potential.classical(s);
        h * h * p.d2f / p.f + hm * hm / p.f.powi(4) + v0 + h * h * self.model.potential.subprincipal(s)
    }

    /// Samples on a uniform grid.
    pub fn sample(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let s = lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64;
                (s, self.eval(s))
            })
            .collect()
    }
}

/// Where the numerical solution is matched to plane waves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Matching {
    /// Just outside the core, then translated analytically to the sections.
    #[default]
    Core,
    /// Directly at the reference sections.
    Sections,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub points_per_wavelength: f64,
    pub matching: Matching,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { points_per_wavelength: 60.0, matching: Matching::Core }
    }
}

/// Scattering matrix of one mode, `[[r_L, t_RL], [t_LR, r_R]]`: column =
/// incoming end, row = outgoing end, phases referenced to `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeBlock {
    pub m: i64,
    pub tau: f64,
    #[serde(skip)]
    pub s: Block,
    pub unitarity_defect: f64,
}

impl ModeBlock {
    pub fn reflection(&self, end: End) -> Complex64 {
        self.s[end.index()][end.index()]
    }

    /// Amplitude arriving at `to` for unit input on the other end.
    pub fn transmission(&self, to: End) -> Complex64 {
        self.s[to.index()][to.opposite().index()]
    }

    pub fn entry(&self, out: End, inc: End) -> Complex64 {
        self.s[out.index()][inc.index()]
    }
}

pub fn unitarity_defect(b: &Block) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                acc += b[k][i].conj() * b[k][j];
            }
            if i == j {
                acc -= 1.0;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

/// Exponential of a traceless real 2x2 matrix `[[a, b], [c, -a]]`.
fn expm_traceless(a: f64, b: f64, c: f64) -> [[f64; 2]; 2] {
    let d = a * a + b * c;
    let r = d.abs().sqrt();
    let (ch, sh) = if r < 1e-8 {
        (1.0 + 0.5 * d, 1.0 + d / 6.0)
    } else if d > 0.0 {
        (r.cosh(), r.sinh() / r)
    } else {
        (r.cos(), r.sin() / r)
    };
    [[ch + sh * a, sh * b], [sh * c, ch - sh * a]]
}

/// Fourth-order Magnus propagators of `(w, w')` across a uniform grid on
/// `[lo, hi]`. Each factor has unit determinant.
fn magnus_steps(mp: &ModePotential, lo: f64, hi: f64, n: usize) -> Vec<[[f64; 2]; 2]> {
    let h2 = mp.model.h * mp.model.h;
    let ds = (hi - lo) / n as f64;
    let g = 3f64.sqrt() / 6.0;
    let c3 = 3f64.sqrt() * ds * ds / 12.0;
    (0..n)
        .map(|i| {
            let s0 = lo + i as f64 * ds;
            let q1 = (mp.eval(s0 + (0.5 - g) * ds) - 1.0) / h2;
            let q2 = (mp.eval(s0 + (0.5 + g) * ds) - 1.0) / h2;
            // A(q) = [[0,1],[q,0]];  [A2, A1] = diag(q1 - q2, q2 - q1)
            expm_traceless(c3 * (q1 - q2), ds, 0.5 * ds * (q1 + q2))
        })
        .collect()
}

struct Scaled {
    v: [Complex64; 2],
    log_scale: f64,
}

fn apply(m: &[[f64; 2]; 2], v: &mut [Complex64; 2]) {
    let a = m[0][0] * v[0] + m[0][1] * v[1];
    let b = m[1][0] * v[0] + m[1][1] * v[1];
    v[0] = a;
    v[1] = b;
}

fn apply_inverse(m: &[[f64; 2]; 2], v: &mut [Complex64; 2]) {
    let a = m[1][1] * v[0] - m[0][1] * v[1];
    let b = -m[1][0] * v[0] + m[0][0] * v[1];
    v[0] = a;
    v[1] = b;
}

fn renormalize(x: &mut Scaled) {
    let n = x.v[0].norm().max(x.v[1].norm());
    if n > 1e64 || (n < 1e-64 && n > 0.0) {
        x.v[0] /= n;
        x.v[1] /= n;
        x.log_scale += n.ln();
    }
}

/// Split `(w, w')` at `s` into `(A, B)` with `w = A e^{iks} + B e^{-iks}`.
fn plane_wave_split(v: &[Complex64; 2], k: f64, s: f64) -> (Complex64, Complex64) {
    let d = v[1] / (I * k);
    let a = 0.5 * (v[0] + d) * Complex64::from_polar(1.0, -k * s);
    let b = 0.5 * (v[0] - d) * Complex64::from_polar(1.0, k * s);
    (a, b)
}

fn matching_point(mp: &ModePotential, opts: &SolverOptions) -> f64 {
    match opts.matching {
        Matching::Core => mp.model.half_width() + 1.0,
        Matching::Sections => mp.model.section(),
    }
}

/// Number of Magnus steps on `[-l, l]` for the requested resolution.
fn step_count(mp: &ModePotential, l: f64, ppw: f64) -> usize {
    let h = mp.model.h;
    let a = mp.model.half_width();
    let worst = mp
        .sample(-a, a, 801)
        .into_iter()
        .map(|(_, u)| (u - 1.0).abs())
        .fold(mp.tau * mp.tau, f64::max);
    let k_loc = worst.sqrt() / h;
    let waves = 2.0 * l * k_loc / std::f64::consts::TAU;
    (waves * ppw).ceil() as usize + 16
}

/// Solve one mode by Magnus integration of both scattering solutions.
///
/// Each solution is launched as a pure outgoing wave on its exit side and
/// integrated toward the incoming side, where it is split into incident and
/// reflected parts. That direction keeps tunnelling solutions dominant.
pub fn solve_stationary(mp: &ModePotential, opts: &SolverOptions) -> Result<ModeBlock> {
    if opts.points_per_wavelength < 20.0 {
        return Err(Error::GridTooCoarse { points_per_wavelength: opts.points_per_wavelength });
    }
    if !(mp.tau > 0.0) {
        return Err(Error::ThresholdCollision { mode: mp.m, gap: 1.0 - mp.tau * mp.tau });
    }
    let k = mp.wavenumber();
    let l = matching_point(mp, opts);
    let n = step_count(mp, l, opts.points_per_wavelength);
    let steps = magnus_steps(mp, -l, l, n);

    // Amplitudes are local: referenced to s = -l and s = +l.
    // incident from the left: w = t e^{ik(s-l)} beyond +l
    let one = Complex64::new(1.0, 0.0);
    let mut x = Scaled { v: [one, I * k], log_scale: 0.0 };
    for m in steps.iter().rev() {
        apply_inverse(m, &mut x.v);
        renormalize(&mut x);
    }
    let (inc, refl) = plane_wave_split(&x.v, k, 0.0);
    let t_lr = (-x.log_scale).exp() / inc;
    let r_l = refl / inc;

    // incident from the right: w = t e^{-ik(s+l)} beyond -l
    let mut x = Scaled { v: [one, -I * k], log_scale: 0.0 };
    for m in &steps {
        apply(m, &mut x.v);
        renormalize(&mut x);
    }
    let (refl, inc) = plane_wave_split(&x.v, k, 0.0);
    let t_rl = (-x.log_scale).exp() / inc;
    let r_r = refl / inc;

    let phase = Complex64::from_polar(1.0, 2.0 * k * (mp.model.section() - l));
    let s = [[r_l * phase, t_rl * phase], [t_lr * phase, r_r * phase]];
    let defect = unitarity_defect(&s);
    if defect > 1e-6 {
        return Err(Error::NonUnitary { mode: mp.m, defect });
    }
    Ok(ModeBlock { m: mp.m, tau: mp.tau, s, unitarity_defect: defect })
}

/// Block-diagonal scattering matrix over the open channels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockScatteringMatrix {
    pub h: f64,
    pub blocks: Vec<ModeBlock>,
    /// True for the flux-normalized matrix.
    pub normalized: bool,
}

impl BlockScatteringMatrix {
    pub fn dim(&self) -> usize {
        2 * self.blocks.len()
    }

    pub fn block(&self, m: i64) -> Option<&ModeBlock> {
        self.blocks.binary_search_by_key(&m, |b| b.m).ok().map(|i| &self.blocks[i])
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.blocks.iter().map(|b| b.unitarity_defect).fold(0.0, f64::max)
    }

    /// Largest `|S - S^T|` entry over the blocks.
    pub fn max_asymmetry(&self) -> f64 {
        self.blocks.iter().map(|b| (b.s[0][1] - b.s[1][0]).norm()).fold(0.0, f64::max)
    }

    /// Flux normalization `tau^{1/4} S tau^{-1/4}` per end.
    pub fn normalize(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let w = [b.tau.powf(0.25), b.tau.powf(0.25)];
                let mut s = b.s;
                for (i, row) in s.iter_mut().enumerate() {
                    for (j, x) in row.iter_mut().enumerate() {
                        *x *= w[i] / w[j];
                    }
                }
                ModeBlock { s, unitarity_defect: unitarity_defect(&s), ..*b }
            })
            .collect();
        Self { h: self.h, blocks, normalized: true }
    }

    /// Index in the full matrix: ends outermost, modes ascending.
    pub fn index(&self, end: End, j: usize) -> usize {
        end.index() * self.blocks.len() + j
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for (j, b) in self.blocks.iter().enumerate() {
            for o in End::BOTH {
                for i in End::BOTH {
                    out[(self.index(o, j), self.index(i, j))] = b.entry(o, i);
                }
            }
        }
        out
    }

    /// Apply to a vector laid out as in [`Self::index`].
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.blocks.len();
        assert_eq!(v.len(), 2 * n);
        let mut out = vec![Complex64::new(0.0, 0.0); 2 * n];
        for (j, b) in self.blocks.iter().enumerate() {
            for o in 0..2 {
                out[o * n + j] = b.s[o][0] * v[j] + b.s[o][1] * v[n + j];
            }
        }
        out
    }
}

/// Solve every open mode. Modes `m` and `-m` share one solve.
pub fn assemble_with(model: &ModelSpec, channels: &ChannelSet, opts: &SolverOptions) -> Result<BlockScatteringMatrix> {
    let nonneg: Vec<Channel> = channels.channels.iter().copied().filter(|c| c.m >= 0).collect();
    let solved = par::try_map(&nonneg, |c| solve_stationary(&ModePotential::new(model, c.m), opts))?;
    let blocks = channels
        .channels
        .iter()
        .map(|c| {
            let i = nonneg.binary_search_by_key(&c.m.abs(), |d| d.m).expect("mirror mode solved");
            ModeBlock { m: c.m, ..solved[i] }
        })
        .collect();
    Ok(BlockScatteringMatrix { h: model.h, blocks, normalized: false })
}

pub fn assemble(model: &ModelSpec) -> Result<BlockScatteringMatrix> {
    assemble_with(model, &open_channels(model), &SolverOptions::default())
}

/// Both the raw and the flux-normalized matrix.
pub fn assemble_pair(model: &ModelSpec) -> Result<(BlockScatteringMatrix, BlockScatteringMatrix)> {
    let s = assemble(model)?;
    let su = s.normalize();
    Ok((s, su))
}

/// Move both reference sections out by `d`: every entry picks up
/// `e^{2 i d tau / h}`.
pub fn shift_origin_smatrix(s: &BlockScatteringMatrix, d: f64) -> BlockScatteringMatrix {
    let blocks = s
        .blocks
        .iter()
        .map(|b| {
            let ph = Complex64::from_polar(1.0, 2.0 * d * b.tau / s.h);
            let mut out = b.s;
            out.iter_mut().flatten().for_each(|x| *x *= ph);
            ModeBlock { s: out, ..*b }
        })
        .collect();
    BlockScatteringMatrix { h: s.h, blocks, normalized: s.normalized }
}

/// Exact free-cylinder block.
pub fn free_block(model: &ModelSpec, m: i64) -> Block {
    let hm = model.h * m as f64;
    let tau = (1.0 - hm * hm).sqrt();
    let t = Complex64::from_polar(1.0, 2.0 * model.section() * tau / model.h);
    let z = Complex64::new(0.0, 0.0);
    [[z, t], [t, z]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Bumps, PotentialSpec, Profile};

    fn model(p: Profile, h: f64) -> ModelSpec {
        ModelSpec::new(p, PotentialSpec::none(), h).unwrap()
    }

    fn max_diff(a: &Block, b: &Block) -> f64 {
        let mut w: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                w = w.max((a[i][j] - b[i][j]).norm());
            }
        }
        w
    }

    #[test]
    fn free_potential_is_flat() {
        let m = ModelSpec::free(1.0, 0.1).unwrap();
        let mp = ModePotential::new(&m, 3);
        for (_, u) in mp.sample(-3.0, 3.0, 50) {
            assert!((u - 0.09).abs() < 1e-15);
        }
    }

    #[test]
    fn bulge_m0_potential() {
        let m = model(Profile::bulge(0.3, 1.0).unwrap(), 0.1);
        let mp = ModePotential::new(&m, 0);
        assert!((mp.eval(0.0) - 0.01 * (-0.6 / 1.3)).abs() < 1e-15);
        assert_eq!(mp.eval(1.5), 0.0);
    }

    #[test]
    fn hourglass_closed_over_neck() {
        let m = model(Profile::hourglass(-0.2, 1.0).unwrap(), 0.02);
        let mp = ModePotential::new(&m, 45);
        let top = 0.81 / 0.8f64.powi(4);
        assert!((top - 1.9775390625).abs() < 1e-12);
        assert!((mp.eval(0.0) - (top + 0.0004 * 2.0 * 0.2 / 0.8)).abs() < 1e-12);
    }

    #[test]
    fn free_blocks_exact() {
        for h in [0.35, 0.1] {
            let m = ModelSpec::free(1.0, h).unwrap();
            let s = assemble(&m).unwrap();
            for b in &s.blocks {
                assert!(max_diff(&b.s, &free_block(&m, b.m)) < 1e-10, "h={h} m={} {:?} {:?}", b.m, b.s, free_block(&m, b.m));
            }
        }
    }

    #[test]
    fn normalized_equals_raw() {
        let m = model(Profile::bulge(0.3, 1.0).unwrap(), 0.35);
        let (s, su) = assemble_pair(&m).unwrap();
        assert_eq!(s.dim(), 10);
        for (a, b) in s.blocks.iter().zip(&su.blocks) {
            assert!(max_diff(&a.s, &b.s) < 1e-15);
        }
        assert!(su.max_unitarity_defect() < 1e-8);
    }

    #[test]
    fn hourglass_barrier_stays_unitary() {
        let m = model(Profile::hourglass(-0.2, 1.0).unwrap(), 0.02);
        let s = assemble(&m).unwrap();
        assert!(s.max_unitarity_defect() < 1e-8);
        assert!(s.max_asymmetry() < 1e-8);
        let b = s.block(45).unwrap();
        assert!(b.transmission(End::Left).norm() < 1e-6);
    }

    #[test]
    fn sections_matching_agrees() {
        let m = model(Profile::bulge(0.3, 1.0).unwrap(), 0.1);
        let core = SolverOptions { points_per_wavelength: 160.0, matching: Matching::Core };
        let a = assemble_with(&m, &open_channels(&m), &core).unwrap();
        let opts = SolverOptions { matching: Matching::Sections, ..core };
        let b = assemble_with(&m, &open_channels(&m), &opts).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert!(max_diff(&x.s, &y.s) < 1e-8, "m={} {}", x.m, max_diff(&x.s, &y.s));
        }
    }

    #[test]
    fn shift_free_gains_phase() {
        let m = ModelSpec::free(1.0, 0.1).unwrap();
        let s = assemble(&m).unwrap();
        assert_eq!(shift_origin_smatrix(&s, 0.0), s);
        let s1 = shift_origin_smatrix(&s, 1.0);
        for (a, b) in s.blocks.iter().zip(&s1.blocks) {
            let ratio = b.s[0][1] / a.s[0][1];
            assert!((ratio - Complex64::from_polar(1.0, 2.0 * b.tau / 0.1)).norm() < 1e-10);
        }
    }

    #[test]
    fn grid_convergence() {
        let m = model(Profile::bulge(0.3, 1.0).unwrap(), 0.05);
        let ch = open_channels(&m);
        let a = assemble_with(&m, &ch, &SolverOptions { points_per_wavelength: 40.0, ..Default::default() }).unwrap();
        let b = assemble_with(&m, &ch, &SolverOptions { points_per_wavelength: 80.0, ..Default::default() }).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert!(max_diff(&x.s, &y.s) <= 1e-6);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let m = ModelSpec::free(1.0, 0.1).unwrap();
        let opts = SolverOptions { points_per_wavelength: 10.0, ..Default::default() };
        assert!(matches!(
            solve_stationary(&ModePotential::new(&m, 0), &opts),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn subprincipal_potential_fades() {
        let mut errs = Vec::new();
        for h in [0.2, 0.1, 0.05] {
            let pot = PotentialSpec { w: Bumps::single(2.0, 1.0, 0.0), ..Default::default() };
            let m = ModelSpec::new(Profile::constant(1.0).unwrap(), pot, h).unwrap();
            let s = assemble(&m).unwrap();
            let b = s.block(0).unwrap();
            errs.push(max_diff(&b.s, &free_block(&m, 0)));
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
