//! Hamilton flow of `p = rho^2 + f(s)^-4 eta^2 + V0(s)` and the classical
//! scattering map between the two reference sections.
//!
//! The angular momentum `eta` is conserved, so the integrator carries only
//! `(s, theta, rho)`.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{End, ModelSpec, ProfileKind};
use crate::par;
use crate::quadrature;

pub const DEFAULT_T_MAX: f64 = 1e3;
pub const DEFAULT_TOL: f64 = 1e-12;

/// Wrap an angle into `[0, 2pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Signed angular difference in `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub s: f64,
    pub theta: f64,
    pub rho: f64,
    pub eta: f64,
}

/// A covector at a reference section: `(end, theta, eta)` with `|eta| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub end: End,
    pub theta: f64,
    pub eta: f64,
}

impl BoundaryPoint {
    pub fn new(end: End, theta: f64, eta: f64) -> Self {
        Self { end, theta: wrap_angle(theta), eta }
    }

    /// Momentum reversal `(theta, eta) -> (theta, -eta)`, same end.
    pub fn reversed(&self) -> Self {
        Self { eta: -self.eta, ..*self }
    }

    /// Distance in `(theta, eta)`, infinite across ends.
    pub fn distance(&self, other: &BoundaryPoint) -> f64 {
        if self.end != other.end {
            return f64::INFINITY;
        }
        angle_diff(self.theta, other.theta).hypot(self.eta - other.eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome")]
pub enum FlowOutcome {
    Exited { point: BoundaryPoint, t_plus: f64 },
    Trapped { t_max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub outcome: FlowOutcome,
    pub energy_drift: f64,
    pub samples: Vec<(f64, PhasePoint)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub t_max: f64,
    pub tol: f64,
    pub record: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { t_max: DEFAULT_T_MAX, tol: DEFAULT_TOL, record: false }
    }
}

pub fn hamiltonian(pt: &PhasePoint, model: &ModelSpec) -> f64 {
    pt.rho * pt.rho + model.effective_potential(pt.s, pt.eta).0
}

type State = [f64; 3];

fn rhs(model: &ModelSpec, eta: f64, y: &State) -> State {
    let p = model.profile.eval(y[0]);
    let f4 = p.f.powi(4);
    let (_, dv) = model.potential.classical(y[0]);
    [
        2.0 * y[2],
        2.0 * eta / f4,
        4.0 * eta * eta * p.df / (f4 * p.f) - dv,
    ]
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step; returns the fifth-order solution and the
/// embedded error estimate.
fn dp_step(model: &ModelSpec, eta: f64, y: &State, dt: f64) -> (State, State) {
    let mut k = [[0.0; 3]; 7];
    k[0] = rhs(model, eta, y);
    for i in 1..7 {
        let mut yi = *y;
        for j in 0..i {
            for (d, v) in yi.iter_mut().enumerate() {
                *v += dt * A[i][j] * k[j][d];
            }
        }
        k[i] = rhs(model, eta, &yi);
    }
    let mut y5 = *y;
    let mut err = [0.0; 3];
    for d in 0..3 {
        let mut s5 = 0.0;
        let mut s4 = 0.0;
        for i in 0..7 {
            s5 += B5[i] * k[i][d];
            s4 += B4[i] * k[i][d];
        }
        y5[d] += dt * s5;
        err[d] = dt * (s5 - s4);
    }
    (y5, err)
}

/// Saddle points of the effective potential sitting exactly at energy `e`.
///
/// A trajectory with that energy which runs into one of them approaches it
/// asymptotically and never leaves.
fn separatrix_points(model: &ModelSpec, eta: f64, e: f64) -> Vec<f64> {
    let a = model.half_width();
    let n = 4000;
    let du = |s: f64| model.effective_potential(s, eta).1;
    let mut pts = Vec::new();
    if let Some(c) = model.profile.critical_point() {
        if model.potential.v0.is_zero() {
            pts.push(c);
        }
    }
    let mut s0 = -a;
    let mut d0 = du(s0);
    for i in 1..=n {
        let s1 = -a + 2.0 * a * i as f64 / n as f64;
        let d1 = du(s1);
        if d0 != 0.0 && d1 != 0.0 && d0.signum() != d1.signum() {
            let (mut lo, mut hi) = (s0, s1);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if du(mid).signum() == du(lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            pts.push(0.5 * (lo + hi));
        }
        s0 = s1;
        d0 = d1;
    }
    // local maxima at the energy level
    pts.retain(|&s| {
        let u = model.effective_potential(s, eta).0;
        let d = 1e-4;
        (u - e).abs() <= 1e-10
            && model.effective_potential(s - d, eta).0 <= u
            && model.effective_potential(s + d, eta).0 <= u
    });
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    pts
}

/// Integrate from `start` until the trajectory crosses a reference section
/// moving outward, or until `t_max`.
pub fn flow(start: &PhasePoint, model: &ModelSpec, opts: &FlowOptions) -> Result<FlowResult> {
    let eta = start.eta;
    let e0 = hamiltonian(start, model);
    let section = model.section();
    let saddles = separatrix_points(model, eta, e0);
    let mut y: State = [start.s, start.theta, start.rho];
    let mut t = 0.0;
    let mut dt: f64 = 1e-3;
    let mut drift: f64 = 0.0;
    let mut samples = Vec::new();
    let point = |y: &State| PhasePoint { s: y[0], theta: y[1], rho: y[2], eta };
    if opts.record {
        samples.push((t, point(&y)));
    }
    let r_of = |y: &State| y[0].abs() - section;
    let outward = |y: &State| y[0] * y[2] > 0.0;

    // The flow is straight outside the core, so the error estimate alone
    // would let a step jump clean over it.
    let dt_cap = 0.025 * model.half_width().min(model.profile.width()).max(1e-3);
    while t < opts.t_max {
        dt = dt.min(dt_cap).min(opts.t_max - t);
        let (y1, err) = dp_step(model, eta, &y, dt);
        let scale = |d: usize| opts.tol * (1.0 + y[d].abs().max(y1[d].abs()));
        let en = (0..3).map(|d| (err[d] / scale(d)).powi(2)).sum::<f64>() / 3.0;
        let en = en.sqrt();
        if en > 1.0 {
            dt *= (0.9 * en.powf(-0.2)).max(0.2);
            if dt < 1e-14 * (1.0 + t) {
                return Err(Error::IntegratorFailure { t });
            }
            continue;
        }
        let r0 = r_of(&y);
        let r1 = r_of(&y1);
        if r0 < 0.0 && r1 >= 0.0 && outward(&y1) {
            // Illinois iteration on the step length
            let g = |d: f64| r_of(&dp_step(model, eta, &y, d).0);
            let (mut a, mut b) = (0.0, dt);
            let (mut ga, mut gb) = (r0, r1);
            let mut side = 0;
            for _ in 0..200 {
                if (b - a).abs() <= 1e-13 {
                    break;
                }
                let c = (a * gb - b * ga) / (gb - ga);
                let c = if c <= a || c >= b { 0.5 * (a + b) } else { c };
                let gc = g(c);
                if gc == 0.0 {
                    a = c;
                    b = c;
                    break;
                }
                if gc.signum() == gb.signum() {
                    b = c;
                    gb = gc;
                    if side == -1 {
                        ga *= 0.5;
                    }
                    side = -1;
                } else {
                    a = c;
                    ga = gc;
                    if side == 1 {
                        gb *= 0.5;
                    }
                    side = 1;
                }
            }
            let dc = if ga.abs() < gb.abs() { a } else { b };
            let yc = dp_step(model, eta, &y, dc).0;
            let pc = point(&yc);
            drift = drift.max((hamiltonian(&pc, model) - e0).abs());
            if opts.record {
                samples.push((t + dc, pc));
            }
            let end = model.end_of_s(yc[0]);
            return Ok(FlowResult {
                outcome: FlowOutcome::Exited {
                    point: BoundaryPoint::new(end, yc[1], eta),
                    t_plus: t + dc,
                },
                energy_drift: drift,
                samples,
            });
        }
        t += dt;
        y = y1;
        let pt = point(&y);
        drift = drift.max((hamiltonian(&pt, model) - e0).abs());
        if opts.record {
            samples.push((t, pt));
        }
        if saddles.iter().any(|&c| (y[0] - c).abs() < 1e-3 && y[2].abs() < 1e-3) {
            return Ok(FlowResult {
                outcome: FlowOutcome::Trapped { t_max: opts.t_max },
                energy_drift: drift,
                samples,
            });
        }
        let grow = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
        dt *= grow;
    }
    Ok(FlowResult { outcome: FlowOutcome::Trapped { t_max: opts.t_max }, energy_drift: drift, samples })
}

/// Inbound launch covector at the section of `b.end`, on the unit energy shell.
pub fn launch_point(b: &BoundaryPoint, model: &ModelSpec) -> Result<PhasePoint> {
    if !(b.eta.abs() < 1.0) {
        return Err(Error::InvalidModel(format!("|eta| must be < 1, got {}", b.eta)));
    }
    let s = model.s_of_r(b.end, 0.0);
    let (u, _) = model.effective_potential(s, b.eta);
    let speed = (1.0 - u).max(0.0).sqrt();
    Ok(PhasePoint { s, theta: b.theta, rho: -b.end.sign() * speed, eta: b.eta })
}

/// Image of `b` under the scattering map together with the exit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterImage {
    pub point: BoundaryPoint,
    pub t_plus: f64,
    pub energy_drift: f64,
}

/// Classical scattering map. `Ok(None)` means trapped up to `opts.t_max`.
pub fn scattering_map(b: &BoundaryPoint, model: &ModelSpec, opts: &FlowOptions) -> Result<Option<ScatterImage>> {
    let start = launch_point(b, model)?;
    let res = flow(&start, model, opts)?;
    Ok(match res.outcome {
        FlowOutcome::Exited { point, t_plus } => {
            Some(ScatterImage { point, t_plus, energy_drift: res.energy_drift })
        }
        FlowOutcome::Trapped { .. } => None,
    })
}

/// Exact map of the flat cylinder `f = 1`, `V0 = 0`.
pub fn kappa_flat(b: &BoundaryPoint, model: &ModelSpec) -> BoundaryPoint {
    let d = model.section();
    BoundaryPoint::new(b.end.opposite(), b.theta + 2.0 * d * b.eta / (1.0 - b.eta * b.eta).sqrt(), b.eta)
}

/// Angular drift of one transit, `∫ f^-2 (f^4 - eta^2)^-1/2 ds` over the
/// section-to-section interval, times `eta`.
pub fn transit_drift(eta: f64, model: &ModelSpec) -> Result<f64> {
    let p = &model.profile;
    if !matches!(p.kind(), ProfileKind::Bulge | ProfileKind::Constant) || !model.potential.v0.is_zero() {
        return Err(Error::InvalidModel("drift quadrature needs a transit model (f >= 1, no V0)".into()));
    }
    if !(eta.abs() < 1.0) {
        return Err(Error::InvalidModel(format!("|eta| must be < 1, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = p.support();
    let d = model.section();
    let integrand = |s: f64| {
        let f = p.eval(s).f;
        let f2 = f * f;
        1.0 / (f2 * (f2 * f2 - eta * eta).sqrt())
    };
    let flat = 1.0 / (1.0 - eta * eta).sqrt();
    let core = quadrature::integrate(integrand, lo, hi, 1e-14, 1e-14)?;
    let tails = (2.0 * d - (hi - lo)) * flat;
    Ok(eta * (core + tails))
}

/// Scattering map of a transit model by quadrature of the angular drift.
pub fn kappa_quadrature(b: &BoundaryPoint, model: &ModelSpec) -> Result<BoundaryPoint> {
    let drift = transit_drift(b.eta, model)?;
    Ok(BoundaryPoint::new(b.end.opposite(), b.theta + drift, b.eta))
}

/// Drift of the return map (two transits): a smooth increasing function
/// of `eta`.
pub fn rotation_number(eta: f64, model: &ModelSpec) -> Result<f64> {
    Ok(2.0 * transit_drift(eta, model)?)
}

/// Boundary flow of `sqrt(1 - eta^2)` for time `-c`.
pub fn shift_boundary(b: &BoundaryPoint, c: f64) -> BoundaryPoint {
    BoundaryPoint::new(b.end, b.theta + c * b.eta / (1.0 - b.eta * b.eta).sqrt(), b.eta)
}

/// Scattering map for sections moved out by `c`, from the conjugation
/// identity rather than a fresh integration.
pub fn shift_origin_map(b: &BoundaryPoint, c: f64, model: &ModelSpec, opts: &FlowOptions) -> Result<Option<BoundaryPoint>> {
    let inner = shift_boundary(b, c);
    Ok(scattering_map(&inner, model, opts)?.map(|img| shift_boundary(&img.point, c)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainCell {
    pub start: BoundaryPoint,
    pub image: Option<ScatterImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainScan {
    pub cells: Vec<DomainCell>,
    pub t_max: f64,
}

impl DomainScan {
    pub fn trapped_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().filter(|c| c.image.is_none()).count() as f64 / self.cells.len() as f64
    }
}

/// Label every grid point as exiting or trapped.
pub fn domain_scan(model: &ModelSpec, starts: &[BoundaryPoint], opts: &FlowOptions) -> Result<DomainScan> {
    let cells = par::try_map(starts, |b| {
        Ok::<_, Error>(DomainCell { start: *b, image: scattering_map(b, model, opts)? })
    })?;
    Ok(DomainScan { cells, t_max: opts.t_max })
}

/// Uniform `(theta, eta)` grid on one end, `eta` strictly inside `(-1, 1)`.
pub fn boundary_grid(end: End, n_theta: usize, n_eta: usize, eta_max: f64) -> Vec<BoundaryPoint> {
    let mut out = Vec::with_capacity(n_theta * n_eta);
    for j in 0..n_eta {
        let eta = if n_eta == 1 { 0.0 } else { -eta_max + 2.0 * eta_max * j as f64 / (n_eta - 1) as f64 };
        for i in 0..n_theta {
            out.push(BoundaryPoint::new(end, TAU * i as f64 / n_theta as f64, eta));
        }
    }
    out
}
