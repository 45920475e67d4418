//! Time-dependent route to the scattering matrix.
//!
//! For each mode and incoming end an incoming packet `tau chi(r) e^{-ikr}`
//! is placed just inside the reference section, evolved with the 1D
//! Schrödinger group for a time long enough that everything it sends out
//! has crossed the section again, and then projected on outgoing plane
//! waves through the window `chi_M - chi_1`. Multiplying by `e^{i t / h}`
//! undoes the energy-one phase and leaves the scattering matrix column.
//!
//! The packet is first passed through a Gaussian energy localizer that is
//! exactly 1 at the target energy. Without it the packet's broad spectrum
//! spreads slow and fast content into the readout window.
//!
//! Evolution uses Strang-split Fourier steps, which are unitary and exact
//! for the flat part of the potential.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::channels::{BlockScatteringMatrix, ModePotential};
use crate::error::{Error, Result};
use crate::geometry::{bump, open_channels, smooth_step, End, ModelSpec};
use crate::par;

/// Bump supported in `(-1/4, 0)` with unit integral.
#[derive(Debug, Clone, Copy)]
pub struct EntryBump {
    norm: f64,
}

impl EntryBump {
    pub fn new() -> Self {
        // integral of bump(x) over (-1, 1), by the trapezoid rule, which is
        // spectrally accurate for compactly supported smooth integrands
        let n = 4000;
        let sum: f64 = (1..n).map(|i| bump(-1.0 + 2.0 * i as f64 / n as f64).0).sum();
        let integral = sum * 2.0 / n as f64;
        Self { norm: integral / 8.0 }
    }

    pub fn eval(&self, r: f64) -> f64 {
        bump((r + 0.125) * 8.0).0 / self.norm
    }

    pub const SUPPORT: (f64, f64) = (-0.25, 0.0);
}

impl Default for EntryBump {
    fn default() -> Self {
        Self::new()
    }
}

/// Smoothed step `chi_j`: 1 for `r < j - 2`, 0 for `r > j - 3/2`.
pub fn window_step(j: i64, r: f64) -> f64 {
    1.0 - smooth_step((r - (j as f64 - 2.0)) / 0.5)
}

/// Readout window `chi_M - chi_1`.
pub fn readout_window(m_top: i64, r: f64) -> f64 {
    window_step(m_top, r) - window_step(1, r)
}

/// Spectral cutoff `psi_sp`: 1 on `[0, b]`, 0 from 1 on.
pub fn spectral_cutoff(b: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    1.0 - smooth_step((x - b) / (1.0 - b))
}

/// Tunables of the time-dependent route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    /// Width of the Gaussian energy localizer in wavenumber, relative to `k`.
    pub spectral_width: f64,
    /// Localizer widths counted as carrying the packet.
    pub packet_sigmas: f64,
    /// Localizer widths kept inside the box.
    pub clearance_sigmas: f64,
    /// Grid wavenumber limit over the largest packet wavenumber.
    pub oversample: f64,
    /// Time step as a multiple of `h`.
    pub dt_over_h: f64,
    /// Plateau of the spectral cutoff.
    pub b_psi: f64,
    /// Multiplier on the minimal admissible evolution time.
    pub t_psi_scale: f64,
    /// Allowed relative mass near the box edge.
    pub edge_tolerance: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            spectral_width: 0.06,
            packet_sigmas: 3.5,
            clearance_sigmas: 7.0,
            oversample: 3.0,
            dt_over_h: 0.1,
            b_psi: 0.8,
            t_psi_scale: 1.0,
            edge_tolerance: 1e-8,
        }
    }
}

/// Cutoffs and times for one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffConfig {
    pub m: i64,
    pub k: f64,
    pub sigma: f64,
    pub t_psi: f64,
    /// Index of the outer window step.
    pub window_top: i64,
    pub b_psi: f64,
    /// Half-length of the periodic box.
    pub box_half: f64,
    pub points: usize,
}

impl CutoffConfig {
    /// Packet content with wavenumber in `k ± packet_sigmas * sigma` that
    /// went through the core must sit at `r >= 1` on exit, and the window
    /// edge goes halfway between that content and the part of the initial
    /// packet that left without entering.
    pub fn for_mode(model: &ModelSpec, m: i64, cfg: &PropagatorConfig) -> Self {
        let mp = ModePotential::new(model, m);
        let h = model.h;
        let k = mp.wavenumber();
        let sigma = cfg.spectral_width * k;
        let q_lo = k - cfg.packet_sigmas * sigma;
        let q_hi = k + cfg.packet_sigmas * sigma;
        let d = model.section();
        let t_psi = cfg.t_psi_scale * (2.0 * d + 1.0) / (2.0 * h * q_lo);
        let through_hi = 2.0 * h * t_psi * q_hi - 2.0 * d;
        let direct_lo = 2.0 * h * t_psi * q_lo;
        let mid = 0.5 * (through_hi + direct_lo);
        let window_top = ((mid + 1.75).round() as i64).max(2);

        let q_far = k + cfg.clearance_sigmas * sigma;
        // travel of the fastest retained content plus the packet's own spread
        let box_half = d + 2.0 * h * t_psi * q_far + cfg.clearance_sigmas / sigma + 4.0;
        let a = model.half_width();
        let u_min = mp.sample(-a, a, 801).into_iter().map(|(_, u)| u).fold(f64::INFINITY, f64::min);
        let k_core = (1.0 - u_min.min(mp.tau * mp.tau)).max(0.0).sqrt() / h;
        let q_max = cfg.oversample * q_far.max(k_core);
        let want = 2.0 * box_half * q_max / PI;
        let points = (want.ceil() as usize).next_power_of_two().max(256);
        Self { m, k, sigma, t_psi, window_top, b_psi: cfg.b_psi, box_half, points }
    }
}

/// Wave function of one mode on a periodic uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState1D {
    pub m: i64,
    pub s0: f64,
    pub dx: f64,
    pub values: Vec<Complex64>,
    pub time: f64,
}

impl WaveState1D {
    pub fn zeros(m: i64, box_half: f64, points: usize) -> Self {
        let dx = 2.0 * box_half / points as f64;
        Self { m, s0: -box_half, dx, values: vec![Complex64::new(0.0, 0.0); points], time: 0.0 }
    }

    pub fn grid(&self, j: usize) -> f64 {
        self.s0 + j as f64 * self.dx
    }

    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dx).sqrt()
    }

    /// Root mass within two cells of either box edge over the total.
    pub fn edge_fraction(&self) -> f64 {
        let n = self.values.len();
        let edge: f64 = [0, 1, n - 2, n - 1].iter().map(|&j| self.values[j].norm_sqr()).sum::<f64>() * self.dx;
        let total = self.norm();
        if total == 0.0 {
            0.0
        } else {
            edge.sqrt() / total
        }
    }

    /// Edge fraction of the part of the state with `|q| <= q_cut`, rolled
    /// off smoothly up to `2 q_cut` so the projection does not ring.
    pub fn edge_fraction_in_band(&self, q_cut: f64) -> f64 {
        let n = self.values.len();
        let mut planner = FftPlanner::new();
        let mut v = self.values.clone();
        planner.plan_fft_forward(n).process(&mut v);
        for (x, q) in v.iter_mut().zip(self.wavenumbers()) {
            *x *= (1.0 - smooth_step(q.abs() / q_cut - 1.0)) / n as f64;
        }
        planner.plan_fft_inverse(n).process(&mut v);
        let band = WaveState1D { values: v, ..self.clone() };
        let edge = [0, 1, n - 2, n - 1].iter().map(|&j| band.values[j].norm_sqr()).sum::<f64>() * self.dx;
        let total = self.norm();
        if total == 0.0 {
            0.0
        } else {
            edge.sqrt() / total
        }
    }

    /// Angular wavenumbers in FFT order.
    fn wavenumbers(&self) -> Vec<f64> {
        let n = self.values.len();
        let dq = TAU / (n as f64 * self.dx);
        (0..n)
            .map(|j| if j < n / 2 { j as f64 * dq } else { (j as f64 - n as f64) * dq })
            .collect()
    }
}

/// Gaussian energy localizer `exp(-(|q| - k)^2 / 2 sigma^2)`; equals 1 at
/// the target wavenumber `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWindow {
    pub k: f64,
    pub sigma: f64,
}

impl EnergyWindow {
    pub fn eval(&self, q: f64) -> f64 {
        let d = (q.abs() - self.k) / self.sigma;
        (-0.5 * d * d).exp()
    }
}

/// Incoming packet `scale * chi(r) e^{-ikr}` on `end`. Without a filter it
/// is sampled directly. With one it is built from exact Fourier
/// coefficients so that nothing aliases onto the grid.
pub fn build_r_minus_mode(
    model: &ModelSpec,
    m: i64,
    end: End,
    state: &mut WaveState1D,
    scale: f64,
    filter: Option<EnergyWindow>,
) {
    let mp = ModePotential::new(model, m);
    let k = mp.wavenumber();
    let chi = EntryBump::new();
    state.m = m;
    state.time = 0.0;
    let Some(f) = filter else {
        for j in 0..state.values.len() {
            let s = state.grid(j);
            let r = model.r_of_s(s);
            state.values[j] = if s * end.sign() > 0.0 {
                Complex64::from_polar(scale * chi.eval(r), -k * r)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        return;
    };
    let n = state.values.len();
    let q = state.wavenumbers();
    let dq = TAU / (n as f64 * state.dx);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    if scale != 0.0 {
        let nodes = 256;
        let (r0, r1) = EntryBump::SUPPORT;
        let dr = (r1 - r0) / nodes as f64;
        for i in 1..nodes {
            let r = r0 + i as f64 * dr;
            let s = model.s_of_r(end, r);
            let w = Complex64::from_polar(scale * chi.eval(r) * dr, -k * r);
            let x = s - state.s0;
            // e^{-i q_j x}, walked by recurrence over the FFT ordering
            let step = Complex64::from_polar(1.0, -dq * x);
            let mut ph = w;
            for v in spectrum.iter_mut().take(n / 2) {
                *v += ph;
                ph *= step;
            }
            let mut ph = w * Complex64::from_polar(1.0, dq * (n / 2) as f64 * x);
            for v in spectrum.iter_mut().skip(n / 2) {
                *v += ph;
                ph *= step;
            }
        }
    }
    for (v, &qj) in spectrum.iter_mut().zip(&q) {
        *v *= f.eval(qj);
    }
    let fft = FftPlanner::new().plan_fft_inverse(n);
    fft.process(&mut spectrum);
    let norm = 1.0 / (n as f64 * state.dx);
    for (v, s) in state.values.iter_mut().zip(spectrum) {
        *v = s * norm;
    }
}

/// Split-step evolution by `e^{-i t P / h}`.
pub struct Evolver {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kinetic: Vec<Complex64>,
    half_potential: Vec<Complex64>,
    dt: f64,
    scratch: Vec<Complex64>,
    band: Option<f64>,
}

impl Evolver {
    pub fn new(model: &ModelSpec, state: &WaveState1D, dt: f64) -> Self {
        let n = state.values.len();
        let h = model.h;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let inv_n = 1.0 / n as f64;
        let kinetic = state
            .wavenumbers()
            .into_iter()
            .map(|q| Complex64::from_polar(inv_n, -dt * h * q * q))
            .collect();
        let mp = ModePotential::new(model, state.m);
        let half_potential = (0..n)
            .map(|j| Complex64::from_polar(1.0, -0.5 * dt * mp.eval(state.grid(j)) / h))
            .collect();
        let scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
        Self { forward, inverse, kinetic, half_potential, dt, scratch, band: None }
    }

    /// Restrict the edge check to `|q| <= q_cut`.
    pub fn with_band(mut self, q_cut: f64) -> Self {
        self.band = Some(q_cut);
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn kick(&self, v: &mut [Complex64], times: usize) {
        for (x, p) in v.iter_mut().zip(&self.half_potential) {
            *x *= if times == 2 { p * p } else { *p };
        }
    }

    fn drift(&mut self, v: &mut [Complex64]) {
        self.forward.process_with_scratch(v, &mut self.scratch);
        for (x, k) in v.iter_mut().zip(&self.kinetic) {
            *x *= k;
        }
        self.inverse.process_with_scratch(v, &mut self.scratch);
    }

    /// Advance by `steps` Strang steps, checking the box edge every
    /// `check_every` steps.
    pub fn run(&mut self, state: &mut WaveState1D, steps: usize, edge_tol: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        if steps == 0 {
            return Ok(state.edge_fraction());
        }
        let check_every = 64;
        self.kick(&mut state.values, 1);
        for i in 0..steps {
            let mut v = std::mem::take(&mut state.values);
            self.drift(&mut v);
            self.kick(&mut v, if i + 1 < steps { 2 } else { 1 });
            state.values = v;
            if i % check_every == check_every - 1 || i + 1 == steps {
                let e = match self.band {
                    Some(q) => state.edge_fraction_in_band(q),
                    None => state.edge_fraction(),
                };
                worst = worst.max(e);
                if e > edge_tol {
                    return Err(Error::BoundaryContamination { amplitude: e });
                }
            }
        }
        state.time += steps as f64 * self.dt;
        Ok(worst)
    }
}

/// Evolve `state` for time `t` with steps no longer than `max_dt`.
pub fn evolve(state: &WaveState1D, t: f64, model: &ModelSpec, max_dt: f64, edge_tol: f64) -> Result<WaveState1D> {
    let mut out = state.clone();
    if t == 0.0 {
        return Ok(out);
    }
    let steps = (t / max_dt).ceil() as usize;
    let mut ev = Evolver::new(model, state, t / steps as f64);
    ev.run(&mut out, steps, edge_tol)?;
    out.time = state.time + t;
    Ok(out)
}

/// Outgoing plane-wave coefficient `∫ e^{-ikr} w(r) u dr` on `end`, with
/// `w = chi_M - chi_1` when a window is given.
pub fn apply_t_plus_mode(state: &WaveState1D, model: &ModelSpec, end: End, window_top: Option<i64>) -> Complex64 {
    let k = ModePotential::new(model, state.m).wavenumber();
    transform(state, model, end, window_top, -k)
}

/// Incoming coefficient `∫ e^{ikr} u dr` on `end`.
pub fn apply_t_minus_mode(state: &WaveState1D, model: &ModelSpec, end: End) -> Complex64 {
    let k = ModePotential::new(model, state.m).wavenumber();
    transform(state, model, end, None, k)
}

fn transform(state: &WaveState1D, model: &ModelSpec, end: End, window_top: Option<i64>, freq: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, v) in state.values.iter().enumerate() {
        let s = state.grid(j);
        if s * end.sign() <= 0.0 {
            continue;
        }
        let r = model.r_of_s(s);
        if r <= -4.0 {
            continue;
        }
        let w = window_top.map_or(1.0, |top| readout_window(top, r));
        if w != 0.0 {
            acc += v * Complex64::from_polar(w, freq * r);
        }
    }
    acc * state.dx
}

/// Step length for the split-step scheme. Beyond `dt h q^2 = pi` at the
/// grid's Nyquist wavenumber, splitting errors become resonant and feed
/// spurious fast content that wraps round the box.
pub fn max_step(state: &WaveState1D, h: f64, dt_over_h: f64) -> f64 {
    let q_nyq = PI / state.dx;
    (dt_over_h * h).min(PI / (h * q_nyq * q_nyq))
}

/// One column of `S psi2(h^2 m^2)` by the time-dependent route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagatedColumn {
    pub m: i64,
    pub incoming: End,
    /// Indexed by outgoing end.
    #[serde(skip)]
    pub entries: [Complex64; 2],
    pub cutoffs: CutoffConfig,
    pub edge_fraction: f64,
    pub norm_drift: f64,
}

/// Run the full chain for one mode and incoming end.
pub fn propagate_column(model: &ModelSpec, m: i64, incoming: End, weight: f64, cfg: &PropagatorConfig) -> Result<PropagatedColumn> {
    let cut = CutoffConfig::for_mode(model, m, cfg);
    let h = model.h;
    let mp = ModePotential::new(model, m);
    let tau = mp.tau;
    let sp = spectral_cutoff(cfg.b_psi, h * h * (m * m) as f64);
    let zero = Complex64::new(0.0, 0.0);
    if weight * sp == 0.0 {
        return Ok(PropagatedColumn { m, incoming, entries: [zero; 2], cutoffs: cut, edge_fraction: 0.0, norm_drift: 0.0 });
    }
    let mut state = WaveState1D::zeros(m, cut.box_half, cut.points);
    let filter = EnergyWindow { k: cut.k, sigma: cut.sigma };
    build_r_minus_mode(model, m, incoming, &mut state, tau * sp * weight, Some(filter));
    let n0 = state.norm();
    let steps = (cut.t_psi / max_step(&state, h, cfg.dt_over_h)).ceil() as usize;
    // Where the entry packet overlaps the core, the bump excites broadband
    // content far above the energy window. It wraps round the box but cannot
    // reach the readout, so only the packet band is held to the edge check.
    let q_band = cut.k + cfg.clearance_sigmas * cut.sigma;
    let mut ev = Evolver::new(model, &state, cut.t_psi / steps as f64).with_band(q_band);
    let edge = ev.run(&mut state, steps, cfg.edge_tolerance)?;
    let drift = (state.norm() - n0).abs() / n0;
    let phase = Complex64::from_polar(sp / tau, cut.t_psi / h);
    let mut entries = [zero; 2];
    for out in End::BOTH {
        entries[out.index()] = phase * apply_t_plus_mode(&state, model, out, Some(cut.window_top));
    }
    Ok(PropagatedColumn { m, incoming, entries, cutoffs: cut, edge_fraction: edge, norm_drift: drift })
}

/// `S psi2(h^2 Delta)` column by column over the open channels.
pub fn smatrix_via_propagator<F>(model: &ModelSpec, cfg: &PropagatorConfig, multiplier: F) -> Result<Vec<PropagatedColumn>>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let h = model.h;
    let ch = open_channels(model);
    let jobs: Vec<(i64, End)> = ch
        .channels
        .iter()
        .filter(|c| c.m >= 0)
        .flat_map(|c| End::BOTH.into_iter().map(move |e| (c.m, e)))
        .collect();
    let solved = par::try_map(&jobs, |&(m, e)| {
        let w = multiplier(h * h * (m * m) as f64);
        propagate_column(model, m, e, w, cfg)
    })?;
    let mut out = Vec::with_capacity(2 * ch.channels.len());
    for c in &ch.channels {
        for e in End::BOTH {
            let i = solved.iter().position(|p| p.m == c.m.abs() && p.incoming == e).expect("mirror mode solved");
            out.push(PropagatedColumn { m: c.m, ..solved[i] });
        }
    }
    Ok(out)
}

/// Entry-wise comparison with the stationary matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouteComparison {
    pub m: i64,
    pub incoming: End,
    pub outgoing: End,
    #[serde(skip)]
    pub stationary: Complex64,
    #[serde(skip)]
    pub propagated: Complex64,
    pub abs_err: f64,
    /// Error over the norm of the stationary column.
    pub rel_err: f64,
}

pub fn compare_routes<F>(s: &BlockScatteringMatrix, columns: &[PropagatedColumn], multiplier: F, b_psi: f64) -> Vec<RouteComparison>
where
    F: Fn(f64) -> f64,
{
    let mut out = Vec::new();
    for col in columns {
        let Some(b) = s.block(col.m) else { continue };
        let x = s.h * s.h * (col.m * col.m) as f64;
        let w = multiplier(x) * spectral_cutoff(b_psi, x).powi(2);
        let stat = [b.entry(End::Left, col.incoming) * w, b.entry(End::Right, col.incoming) * w];
        let col_norm = (stat[0].norm_sqr() + stat[1].norm_sqr()).sqrt();
        for out_end in End::BOTH {
            let st = stat[out_end.index()];
            let pr = col.entries[out_end.index()];
            let abs_err = (st - pr).norm();
            let rel_err = if col_norm > 0.0 { abs_err / col_norm } else if abs_err == 0.0 { 0.0 } else { f64::INFINITY };
            out.push(RouteComparison { m: col.m, incoming: col.incoming, outgoing: out_end, stationary: st, propagated: pr, abs_err, rel_err });
        }
    }
    out
}

/// Smooth multiplier equal to 1 on `[0, plateau]` and 0 from `top` on.
pub fn smooth_multiplier(plateau: f64, top: f64) -> impl Fn(f64) -> f64 + Copy + Send + Sync {
    move |x: f64| if x < 0.0 { 0.0 } else { 1.0 - smooth_step((x - plateau) / (top - plateau)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{assemble, free_block};
    use crate::geometry::{PotentialSpec, Profile};

    #[test]
    fn entry_bump_unit_mass() {
        let chi = EntryBump::new();
        let n = 20000;
        let dr = 0.25 / n as f64;
        let total: f64 = (1..n).map(|i| chi.eval(-0.25 + i as f64 * dr)).sum::<f64>() * dr;
        assert!((total - 1.0).abs() < 1e-10);
        assert_eq!(chi.eval(0.0), 0.0);
        assert_eq!(chi.eval(-0.25), 0.0);
        assert_eq!(chi.eval(0.1), 0.0);
    }

    #[test]
    fn window_steps_nest() {
        for j in 1..6 {
            for i in 0..200 {
                let r = -2.0 + 10.0 * i as f64 / 199.0;
                let a = window_step(j, r);
                assert!((a * window_step(j + 1, r) - a).abs() < 1e-15);
            }
        }
        assert_eq!(window_step(3, 0.99), 1.0);
        assert_eq!(window_step(3, 1.5), 0.0);
    }

    #[test]
    fn t_minus_inverts_r_minus() {
        let m = ModelSpec::free(1.0, 0.05).unwrap();
        let mut st = WaveState1D::zeros(2, 8.0, 1 << 15);
        build_r_minus_mode(&m, 2, End::Right, &mut st, 1.0, None);
        let c = apply_t_minus_mode(&st, &m, End::Right);
        assert!((c - 1.0).norm() < 1e-8, "{c}");
        // support
        for (j, v) in st.values.iter().enumerate() {
            let r = m.r_of_s(st.grid(j));
            if st.grid(j) > 0.0 && !(-0.26..0.01).contains(&r) {
                assert_eq!(v.norm(), 0.0, "{}", st.grid(j));
            }
        }
        let mut z = WaveState1D::zeros(2, 8.0, 1024);
        build_r_minus_mode(&m, 2, End::Right, &mut z, 0.0, None);
        assert!(z.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn outgoing_packet_coefficient() {
        // The incoming-phase coefficient is the bump's Fourier transform at
        // 2k, which only reaches 1e-6 for k in the hundreds.
        let k = 800.0;
        let m = ModelSpec::free(1.0, 1.0 / k).unwrap();
        let chi = EntryBump::new();
        let mut st = WaveState1D::zeros(0, 10.0, 1 << 16);
        for j in 0..st.values.len() {
            let s = st.grid(j);
            if s > 0.0 {
                let r = m.r_of_s(s);
                st.values[j] = Complex64::from_polar(chi.eval(r - 3.0), k * r);
            }
        }
        assert!((apply_t_plus_mode(&st, &m, End::Right, None).norm() - 1.0).abs() < 1e-8);
        // incoming phase averages out
        for v in st.values.iter_mut() {
            *v = v.conj();
        }
        let c = apply_t_plus_mode(&st, &m, End::Right, None).norm();
        assert!(c < 1e-6, "{c}");
        let z = WaveState1D::zeros(0, 20.0, 1024);
        assert_eq!(apply_t_plus_mode(&z, &m, End::Left, Some(5)), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn free_packet_group_velocity() {
        let m = ModelSpec::free(1.0, 0.05).unwrap();
        let h = 0.05;
        let mut st = WaveState1D::zeros(4, 40.0, 8192);
        let tau = (1.0f64 - (h * 4.0) * (h * 4.0)).sqrt();
        let k = tau / h;
        for j in 0..st.values.len() {
            let s = st.grid(j);
            st.values[j] = Complex64::from_polar((-(s + 10.0) * (s + 10.0)).exp(), k * s);
        }
        let center = |st: &WaveState1D| {
            let w: f64 = st.values.iter().map(|v| v.norm_sqr()).sum();
            (0..st.values.len()).map(|j| st.grid(j) * st.values[j].norm_sqr()).sum::<f64>() / w
        };
        let c0 = center(&st);
        let n0 = st.norm();
        let out = evolve(&st, 5.0, &m, 0.005, 1.0).unwrap();
        let v = (center(&out) - c0) / 5.0;
        assert!((v / (2.0 * tau) - 1.0).abs() < 0.02);
        assert!((out.norm() - n0).abs() / n0 < 1e-10);
        assert_eq!(evolve(&st, 0.0, &m, 0.005, 1.0).unwrap(), st);
    }

    #[test]
    fn free_model_column() {
        let m = ModelSpec::free(1.0, 0.05).unwrap();
        let cfg = PropagatorConfig::default();
        for mode in [0, 6] {
            let col = propagate_column(&m, mode, End::Right, 1.0, &cfg).unwrap();
            let exact = free_block(&m, mode);
            let t = col.entries[End::Left.index()];
            assert!((t - exact[0][1]).norm() < 1e-3, "m={mode} {t} {}", exact[0][1]);
            assert!(col.entries[End::Right.index()].norm() < 1e-3);
            assert!(col.norm_drift < 1e-10);
        }
    }

    #[test]
    fn zero_multiplier_column() {
        let m = ModelSpec::free(1.0, 0.05).unwrap();
        let col = propagate_column(&m, 3, End::Left, 0.0, &PropagatorConfig::default()).unwrap();
        assert!(col.entries.iter().all(|e| e.norm() <= 1e-8));
    }

    #[test]
    fn bulge_routes_agree() {
        let m = ModelSpec::new(Profile::bulge(0.3, 1.0).unwrap(), PotentialSpec::none(), 0.05).unwrap();
        let cfg = PropagatorConfig::default();
        let psi = smooth_multiplier(0.35, 0.7);
        let cols = smatrix_via_propagator(&m, &cfg, psi).unwrap();
        let s = assemble(&m).unwrap();
        let cmp = compare_routes(&s, &cols, psi, cfg.b_psi);
        let worst = cmp.iter().map(|c| c.rel_err).fold(0.0, f64::max);
        assert!(worst < 1e-2, "{worst}");
    }
}
