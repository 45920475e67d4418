//! Invariant suites run by `verify`. Each check yields a value and a bound.

use std::str::FromStr;

use cylscat::channels::{assemble, assemble_pair, free_block, shift_origin_smatrix, BlockScatteringMatrix};
use cylscat::classical_flow::{
    boundary_grid, domain_scan, kappa_flat, kappa_quadrature, scattering_map, shift_boundary, BoundaryPoint,
    FlowOptions,
};
use cylscat::geometry::eta_c;
use cylscat::phasespace::{center_lattice, fio_check};
use cylscat::resolvent1d::{weighted_resolvent_norm, WeightedResolventProblem};
use cylscat::spectral_stats::{dichotomy_report, weyl_count};
use cylscat::{End, ModelSpec, PotentialSpec, Profile};

use crate::config::Tolerances;
use crate::report::num;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Free,
    Bulge,
    Hourglass,
    All,
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "free" => Ok(Suite::Free),
            "bulge" => Ok(Suite::Bulge),
            "hourglass" => Ok(Suite::Hourglass),
            "all" => Ok(Suite::All),
            _ => Err(format!("unknown suite '{s}' (free, bulge, hourglass, all)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

impl Check {
    fn below(suite: &'static str, name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { suite, name: name.into(), value, bound: format!("<= {tol:e}"), pass: value <= tol }
    }

    fn within(suite: &'static str, name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self { suite, name: name.into(), value, bound: format!("[{lo}, {hi}]"), pass: (lo..=hi).contains(&value) }
    }

    pub fn row(&self) -> Vec<String> {
        vec![self.suite.into(), self.name.clone(), num(self.value), self.bound.clone(), self.pass.to_string()]
    }
}

pub const COLUMNS: [&str; 5] = ["suite", "check", "value", "bound", "pass"];

fn dist_or_inf(a: Option<BoundaryPoint>, b: &BoundaryPoint) -> f64 {
    a.map_or(f64::INFINITY, |p| p.distance(b))
}

fn time_reversal_defect(model: &ModelSpec, pts: &[BoundaryPoint]) -> Result<f64, CliError> {
    let opts = FlowOptions::default();
    let mut worst: f64 = 0.0;
    for b in pts {
        let Some(img) = scattering_map(b, model, &opts)? else { continue };
        let back = scattering_map(&img.point.reversed(), model, &opts)?.map(|i| i.point.reversed());
        worst = worst.max(dist_or_inf(back, b));
    }
    Ok(worst)
}

fn block_diff(a: &BlockScatteringMatrix, b: &BlockScatteringMatrix) -> f64 {
    a.blocks
        .iter()
        .zip(&b.blocks)
        .flat_map(|(x, y)| (0..2).flat_map(move |i| (0..2).map(move |j| (x.s[i][j] - y.s[i][j]).norm())))
        .fold(0.0, f64::max)
}

fn classical_shift_defect(model: &ModelSpec, c: f64, pts: &[BoundaryPoint]) -> Result<f64, CliError> {
    let shifted = model.with_origin_offset(model.origin_offset + c);
    let opts = FlowOptions::default();
    let mut worst: f64 = 0.0;
    for b in pts {
        let direct = scattering_map(b, &shifted, &opts)?.map(|i| i.point);
        let conj = scattering_map(&shift_boundary(b, c), model, &opts)?.map(|i| shift_boundary(&i.point, c));
        match (direct, conj) {
            (Some(d), Some(k)) => worst = worst.max(d.distance(&k)),
            (None, None) => {}
            _ => worst = f64::INFINITY,
        }
    }
    Ok(worst)
}

fn quantum_shift_defect(model: &ModelSpec, c: f64) -> Result<f64, CliError> {
    let s = assemble(model)?;
    let shifted = assemble(&model.with_origin_offset(model.origin_offset + c))?;
    Ok(block_diff(&shifted, &shift_origin_smatrix(&s, c)))
}

fn free_suite(tol: &Tolerances) -> Result<Vec<Check>, CliError> {
    const S: &str = "free";
    let mut out = Vec::new();
    let model = ModelSpec::free(1.0, 0.1)?;
    let grid = boundary_grid(End::Left, 5, 10, 0.95);
    let opts = FlowOptions::default();
    let mut worst: f64 = 0.0;
    for b in &grid {
        let flow = scattering_map(b, &model, &opts)?.map(|i| i.point);
        worst = worst.max(dist_or_inf(flow, &kappa_flat(b, &model)));
    }
    out.push(Check::below(S, "kappa flow vs closed form", worst, tol.kappa));
    out.push(Check::below(S, "time reversal", time_reversal_defect(&model, &grid)?, tol.time_reversal));
    for h in [0.35, 0.1, 0.02] {
        let m = ModelSpec::free(1.0, h)?;
        let (s, su) = assemble_pair(&m)?;
        let oracle = s
            .blocks
            .iter()
            .flat_map(|b| {
                let f = free_block(&m, b.m);
                (0..2).flat_map(move |i| (0..2).map(move |j| (b.s[i][j] - f[i][j]).norm()))
            })
            .fold(0.0, f64::max);
        out.push(Check::below(S, format!("S vs free oracle h={h}"), oracle, tol.unitarity));
        out.push(Check::below(S, format!("unitarity h={h}"), su.max_unitarity_defect(), tol.unitarity));
    }
    out.push(Check::below(S, "S origin shift c=0.5", quantum_shift_defect(&model, 0.5)?, 1e-6));
    let w = weyl_count(0.01, model.threshold_guard);
    out.push(Check::within(S, "Weyl h*dim at h=0.01", w.scaled, 3.8, 4.05));
    Ok(out)
}

fn bulge_suite(tol: &Tolerances) -> Result<Vec<Check>, CliError> {
    const S: &str = "bulge";
    let mut out = Vec::new();
    let model = ModelSpec::new(Profile::bulge(0.3, 1.0)?, PotentialSpec::none(), 0.05)?;
    let opts = FlowOptions::default();
    let grid = boundary_grid(End::Left, 5, 10, 0.95);
    let mut worst: f64 = 0.0;
    for b in &grid {
        let flow = scattering_map(b, &model, &opts)?.map(|i| i.point);
        worst = worst.max(dist_or_inf(flow, &kappa_quadrature(b, &model)?));
    }
    out.push(Check::below(S, "kappa flow vs quadrature", worst, 1e-6));
    out.push(Check::below(S, "time reversal", time_reversal_defect(&model, &grid)?, tol.time_reversal));
    for c in [0.5, 1.0] {
        let sub = &grid[..20];
        out.push(Check::below(S, format!("kappa origin shift c={c}"), classical_shift_defect(&model, c, sub)?, tol.kappa));
    }
    let scan = domain_scan(&model, &boundary_grid(End::Left, 8, 21, 0.95), &opts)?;
    out.push(Check::below(S, "trapped fraction", scan.trapped_fraction(), 0.0));
    for h in [0.1, 0.05] {
        let (_, su) = assemble_pair(&model.with_h(h))?;
        out.push(Check::below(S, format!("unitarity h={h}"), su.max_unitarity_defect(), tol.unitarity));
        out.push(Check::below(S, format!("symmetry h={h}"), su.max_asymmetry(), tol.unitarity));
    }
    let (_, su) = assemble_pair(&model)?;
    let centers = center_lattice(End::Left, 6, &[-0.3, -0.1, 0.1, 0.3]);
    let fio = fio_check(&centers, &model, &su)?;
    out.push(Check::within(S, "FIO end match fraction h=0.05", fio.end_match_fraction(), 1.0, 1.0));
    out.push(Check::below(S, "FIO max distance / sqrt(h) h=0.05", fio.max_distance() / model.h.sqrt(), tol.fio));
    let prob = WeightedResolventProblem::new(ModelSpec::free(1.0, 0.1)?);
    let ratio = weighted_resolvent_norm(&prob, 0.0, 0.05)? / weighted_resolvent_norm(&prob, 0.0, 0.1)?;
    out.push(Check::within(S, "free resolvent ratio h=0.1 -> 0.05", ratio, 1.6, 2.4));
    Ok(out)
}

fn hourglass_suite(tol: &Tolerances) -> Result<Vec<Check>, CliError> {
    const S: &str = "hourglass";
    let mut out = Vec::new();
    let model = ModelSpec::new(Profile::hourglass(-0.2, 1.0)?, PotentialSpec::none(), 0.02)?;
    let ec = eta_c(&model.profile)?;
    out.push(Check::within(S, "eta_c = f_min^2", ec, 0.64 - 1e-12, 0.64 + 1e-12));
    let sep = scattering_map(&BoundaryPoint::new(End::Left, 0.0, ec), &model, &FlowOptions::default())?;
    out.push(Check::within(S, "separatrix orbit trapped", if sep.is_none() { 1.0 } else { 0.0 }, 1.0, 1.0));
    let grid = boundary_grid(End::Left, 5, 10, 0.95);
    out.push(Check::below(S, "time reversal", time_reversal_defect(&model, &grid)?, tol.time_reversal));
    let (_, su) = assemble_pair(&model)?;
    out.push(Check::below(S, "unitarity h=0.02", su.max_unitarity_defect(), tol.unitarity));
    out.push(Check::below(S, "symmetry h=0.02", su.max_asymmetry(), tol.unitarity));
    let rep = dichotomy_report(&model, &su)?;
    let worst = rep
        .rows
        .iter()
        .map(|r| match r.band {
            cylscat::spectral_stats::Band::Transmit => r.reflection,
            cylscat::spectral_stats::Band::Reflect => r.transmission,
            _ => 0.0,
        })
        .fold(0.0, f64::max);
    out.push(Check::below(S, "dichotomy h=0.02", worst, tol.dichotomy));
    Ok(out)
}

pub fn run(suite: Suite, tol: &Tolerances) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Free | Suite::All) {
        out.extend(free_suite(tol)?);
    }
    if matches!(suite, Suite::Bulge | Suite::All) {
        out.extend(bulge_suite(tol)?);
    }
    if matches!(suite, Suite::Hourglass | Suite::All) {
        out.extend(hourglass_suite(tol)?);
    }
    Ok(out)
}
