use cylscat::channels::{assemble_pair, assemble_with, BlockScatteringMatrix, Matching, SolverOptions};
use cylscat::classical_flow::{boundary_grid, domain_scan, scattering_map, BoundaryPoint, FlowOptions};
use cylscat::geometry::open_channels;
use cylscat::phasespace::{center_lattice, fio_check};
use cylscat::propagator::{compare_routes, smatrix_via_propagator, smooth_multiplier, PropagatorConfig};
use cylscat::resolvent1d::{loglog_slope, sup_over_tau, Absorber, WeightedResolventProblem};
use cylscat::spectral_stats::{
    dichotomy_report, eigenphases, equidist_sweep, strictly_decreasing, weyl_count, TrigPoly, WEYL_CONSTANT,
};
use cylscat::{End, ModelSpec};
use num_complex::Complex64;

use crate::config::{ExperimentConfig, MatchingChoice};
use crate::report::{gnuplot_preamble, h_tag, num, Outputs};
use crate::CliError;

/// What a command found, for the terminal.
#[derive(Debug, Default)]
pub struct Summary {
    pub lines: Vec<String>,
    /// Checks that did not meet their tolerance. Only `verify` turns
    /// these into a non-zero exit.
    pub failures: Vec<String>,
}

impl Summary {
    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        let tag = if ok { "ok" } else { "FAIL" };
        self.lines.push(format!("{tag:<4} {name}: {detail}"));
        if !ok {
            self.failures.push(name.to_string());
        }
    }
}

pub struct Context {
    pub cfg: ExperimentConfig,
    pub model: ModelSpec,
    pub out: Outputs,
}

impl Context {
    fn model_at(&self, h: f64) -> Result<ModelSpec, CliError> {
        let m = self.model.with_h(h);
        m.validate()?;
        Ok(m)
    }
}

fn flow_options(t_max: f64) -> FlowOptions {
    FlowOptions { t_max, ..FlowOptions::default() }
}

fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn re_im(z: Complex64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

pub struct KappaArgs {
    pub end: Option<End>,
    pub theta: Option<f64>,
    pub eta: Option<f64>,
}

pub fn kappa(ctx: &mut Context, args: &KappaArgs) -> Result<Summary, CliError> {
    let k = &ctx.cfg.kappa;
    let start = BoundaryPoint::new(args.end.unwrap_or(k.end), args.theta.unwrap_or(k.theta), args.eta.unwrap_or(k.eta));
    if !(start.eta.abs() < 1.0) {
        return Err(CliError::Config(format!("|eta| must be < 1, got {}", start.eta)));
    }
    let image = scattering_map(&start, &ctx.model, &flow_options(k.t_max))?;
    let columns = ["end", "theta", "eta", "outcome", "end_out", "theta_out", "eta_out", "t_plus", "energy_drift"];
    let mut row = vec![start.end.to_string(), num(start.theta), num(start.eta)];
    match image {
        Some(img) => row.extend([
            "exited".into(),
            img.point.end.to_string(),
            num(img.point.theta),
            num(img.point.eta),
            num(img.t_plus),
            num(img.energy_drift),
        ]),
        None => row.extend(["trapped".into(), String::new(), String::new(), String::new(), String::new(), String::new()]),
    }
    ctx.out.table("kappa.csv", &columns, &[row.clone()])?;
    let mut s = Summary::default();
    s.line(ctx.out.header().to_string());
    s.line(columns.join(","));
    s.line(row.join(","));
    Ok(s)
}

pub fn domain(ctx: &mut Context) -> Result<Summary, CliError> {
    let d = ctx.cfg.domain.clone();
    if !(d.eta_max > 0.0 && d.eta_max < 1.0) || d.n_theta == 0 || d.n_eta == 0 {
        return Err(CliError::Config("domain grid needs n_theta, n_eta >= 1 and 0 < eta_max < 1".into()));
    }
    let starts = boundary_grid(d.end, d.n_theta, d.n_eta, d.eta_max);
    let scan = domain_scan(&ctx.model, &starts, &flow_options(d.t_max))?;
    let columns = ["end", "theta", "eta", "outcome", "t_plus", "theta_out", "eta_out", "energy_drift"];
    let rows: Vec<Vec<String>> = scan
        .cells
        .iter()
        .map(|c| {
            let head = [c.start.end.to_string(), num(c.start.theta), num(c.start.eta)];
            let tail = match c.image {
                Some(img) => {
                    let outcome = if img.point.end == c.start.end { "reflected" } else { "transmitted" };
                    [outcome.into(), num(img.t_plus), num(img.point.theta), num(img.point.eta), num(img.energy_drift)]
                }
                None => ["trapped".into(), String::new(), String::new(), String::new(), String::new()],
            };
            head.into_iter().chain(tail).collect()
        })
        .collect();
    ctx.out.table("domain.csv", &columns, &rows)?;
    let script = format!(
        "{}set xlabel 'theta'\nset ylabel 'eta'\nset cblabel 't_+'\n\
         plot 'domain.csv' using 2:3:5 with points pt 5 ps 0.6 palette notitle\n",
        gnuplot_preamble("domain.png")
    );
    ctx.out.text("domain.gp", &script)?;
    let mut s = Summary::default();
    s.line(format!("{} starts, trapped fraction {:.4}", scan.cells.len(), scan.trapped_fraction()));
    let worst = scan.cells.iter().filter_map(|c| c.image.map(|i| i.energy_drift)).fold(0.0, f64::max);
    s.line(format!("max energy drift {worst:.3e}"));
    Ok(s)
}

fn smatrix_rows(s: &BlockScatteringMatrix) -> Vec<Vec<String>> {
    s.blocks
        .iter()
        .map(|b| {
            let mut row = vec![b.m.to_string(), num(b.tau)];
            row.extend(re_im(b.s[0][0]));
            row.extend(re_im(b.s[1][0]));
            row.extend(re_im(b.s[1][1]));
            row.push(num(b.unitarity_defect));
            row
        })
        .collect()
}

/// Dense matrix as text: one row per line, entries as `re im` pairs.
fn dense_text(s: &BlockScatteringMatrix) -> String {
    let modes: Vec<String> = s.blocks.iter().map(|b| b.m.to_string()).collect();
    let mut out = format!(
        "# dim {} rows/cols: end L modes ascending, then end R modes ascending\n# modes {}\n\
         # each line is one row: re(S_i1) im(S_i1) re(S_i2) im(S_i2) ...\n",
        s.dim(),
        modes.join(" ")
    );
    let dense = s.to_dense();
    for i in 0..dense.nrows() {
        let line: Vec<String> = (0..dense.ncols()).flat_map(|j| re_im(dense[(i, j)])).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn smatrix(ctx: &mut Context) -> Result<Summary, CliError> {
    let sc = ctx.cfg.smatrix.clone();
    let opts = SolverOptions {
        points_per_wavelength: sc.points_per_wavelength,
        matching: match sc.matching {
            MatchingChoice::Core => Matching::Core,
            MatchingChoice::Sections => Matching::Sections,
        },
    };
    let tol = ctx.cfg.tolerances.unitarity;
    let mut s = Summary::default();
    let columns = ["m", "tau_m", "re_rL", "im_rL", "re_t", "im_t", "re_rR", "im_rR", "unitarity_defect"];
    for h in ctx.cfg.h_values() {
        let model = ctx.model_at(h)?;
        let ch = open_channels(&model);
        let raw = assemble_with(&model, &ch, &opts)?;
        let sm = if sc.normalized { raw.normalize() } else { raw };
        let tag = h_tag(h);
        ctx.out.table(&format!("smatrix_{tag}.csv"), &columns, &smatrix_rows(&sm))?;
        if sc.dense {
            ctx.out.text(&format!("smatrix_{tag}.txt"), &dense_text(&sm))?;
        }
        let script = format!(
            "{}set xlabel 'm'\nset ylabel 'probability'\n\
             plot 'smatrix_{tag}.csv' using 1:($5**2+$6**2) with linespoints title '|t|^2', \
             '' using 1:($3**2+$4**2) with linespoints title '|r_L|^2'\n",
            gnuplot_preamble(&format!("smatrix_{tag}.png"))
        );
        ctx.out.text(&format!("smatrix_{tag}.gp"), &script)?;
        s.line(format!("h={h}: {} channels, threshold modes {:?}", sm.dim(), ch.threshold_modes));
        if sc.normalized {
            let d = sm.max_unitarity_defect();
            let a = sm.max_asymmetry();
            s.check(&format!("unitarity h={h}"), d <= tol, format!("{d:.3e} (tol {tol:.1e})"));
            s.check(&format!("symmetry h={h}"), a <= tol, format!("{a:.3e} (tol {tol:.1e})"));
        }
    }
    Ok(s)
}

pub fn smatrix_prop(ctx: &mut Context) -> Result<Summary, CliError> {
    let p = ctx.cfg.propagator.clone();
    let cfg = PropagatorConfig {
        b_psi: p.b_psi,
        spectral_width: p.spectral_width,
        dt_over_h: p.dt_over_h,
        ..PropagatorConfig::default()
    };
    if !(0.0 <= p.plateau && p.plateau < p.top) {
        return Err(CliError::Config("propagator multiplier needs 0 <= plateau < top".into()));
    }
    let psi = smooth_multiplier(p.plateau, p.top);
    let tol = ctx.cfg.tolerances.route;
    let columns = [
        "m",
        "end_in",
        "end_out",
        "route_stationary_re",
        "route_stationary_im",
        "route_propagator_re",
        "route_propagator_im",
        "abs_err",
        "rel_err",
    ];
    let mut s = Summary::default();
    let mut worst_by_h = Vec::new();
    for h in ctx.cfg.h_values() {
        let model = ctx.model_at(h)?;
        let cols = smatrix_via_propagator(&model, &cfg, psi)?;
        let (raw, _) = assemble_pair(&model)?;
        let cmp = compare_routes(&raw, &cols, psi, cfg.b_psi);
        let rows: Vec<Vec<String>> = cmp
            .iter()
            .map(|c| {
                let mut row = vec![c.m.to_string(), c.incoming.to_string(), c.outgoing.to_string()];
                row.extend(re_im(c.stationary));
                row.extend(re_im(c.propagated));
                row.push(num(c.abs_err));
                row.push(num(c.rel_err));
                row
            })
            .collect();
        let tag = h_tag(h);
        ctx.out.table(&format!("smatrix_prop_{tag}.csv"), &columns, &rows)?;
        let worst = cmp.iter().map(|c| c.rel_err).fold(0.0, f64::max);
        s.check(&format!("route agreement h={h}"), worst <= tol, format!("max rel err {worst:.3e} (tol {tol:.1e})"));
        worst_by_h.push((h, worst));
    }
    if worst_by_h.len() > 1 {
        let mut sorted = worst_by_h.clone();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let errs: Vec<f64> = sorted.iter().map(|x| x.1).collect();
        s.check("route error decreases with h", strictly_decreasing(&errs), list(&errs));
    }
    Ok(s)
}

pub fn phases(ctx: &mut Context) -> Result<Summary, CliError> {
    let mut s = Summary::default();
    let columns = ["m", "phase_1", "phase_2", "modulus_defect"];
    for h in ctx.cfg.h_values() {
        let model = ctx.model_at(h)?;
        let (_, su) = assemble_pair(&model)?;
        let set = eigenphases(&su)?;
        let rows: Vec<Vec<String>> = set
            .modes
            .iter()
            .map(|p| vec![p.m.to_string(), num(p.phases[0]), num(p.phases[1]), num(p.modulus_defect)])
            .collect();
        let tag = h_tag(h);
        ctx.out.table(&format!("phases_{tag}.csv"), &columns, &rows)?;
        let script = format!(
            "{}set xlabel 'm'\nset ylabel 'eigenphase'\nset yrange [0:2*pi]\n\
             plot 'phases_{tag}.csv' using 1:2 with points pt 7 title 'phase 1', '' using 1:3 with points pt 7 title 'phase 2'\n",
            gnuplot_preamble(&format!("phases_{tag}.png"))
        );
        ctx.out.text(&format!("phases_{tag}.gp"), &script)?;
        s.line(format!("h={h}: {} eigenphases, max modulus defect {:.3e}", set.len(), set.max_modulus_defect()));
    }
    Ok(s)
}

/// `z^1 .. z^k` plus one polynomial with a constant term, `1 + cos`.
fn functionals(max_power: i32) -> Vec<TrigPoly> {
    let mut out: Vec<TrigPoly> = (1..=max_power).map(TrigPoly::monomial).collect();
    let half = Complex64::new(0.5, 0.0);
    out.push(TrigPoly { id: "1+cos".into(), coeffs: vec![(0, Complex64::new(1.0, 0.0)), (1, half), (-1, half)] });
    out
}

pub fn equidist(ctx: &mut Context) -> Result<Summary, CliError> {
    let e = ctx.cfg.equidist.clone();
    if e.bins == 0 || e.max_power < 1 {
        return Err(CliError::Config("equidist needs bins >= 1 and max_power >= 1".into()));
    }
    let mut hs = ctx.cfg.h_values();
    hs.sort_by(|a, b| b.total_cmp(a));
    let fs = functionals(e.max_power);
    let report = equidist_sweep(&ctx.model, &hs, &fs, e.bins)?;
    let columns = ["h", "dim", "f_id", "re_trace_scaled", "im_trace_scaled", "target_re", "target_im", "cdf_dev"];
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![num(r.h), r.dim.to_string(), r.f_id.clone()];
            row.extend(re_im(r.trace_scaled));
            row.extend(re_im(r.target));
            row.push(num(r.cdf_dev));
            row
        })
        .collect();
    ctx.out.table("equidist.csv", &columns, &rows)?;

    let mut hist_rows = Vec::new();
    for (h, counts) in &report.histograms {
        let total: usize = counts.iter().sum();
        for (i, c) in counts.iter().enumerate() {
            let lo = std::f64::consts::TAU * i as f64 / e.bins as f64;
            let hi = std::f64::consts::TAU * (i + 1) as f64 / e.bins as f64;
            hist_rows.push(vec![num(*h), num(lo), num(hi), c.to_string(), num(total as f64 / e.bins as f64)]);
        }
    }
    ctx.out.table("equidist_hist.csv", &["h", "bin_lo", "bin_hi", "count", "expected"], &hist_rows)?;

    let mut hist_plot = gnuplot_preamble("equidist_hist.png");
    hist_plot.push_str("set xlabel 'eigenphase'\nset ylabel 'count'\nset style fill solid 0.4\n");
    let parts: Vec<String> = hs
        .iter()
        .map(|h| {
            format!(
                "'equidist_hist.csv' using (abs($1-{h})<1e-12*{h} ? ($2+$3)/2 : 1/0):4 with boxes title 'h={h}'"
            )
        })
        .collect();
    hist_plot.push_str(&format!("plot {}\n", parts.join(", ")));
    ctx.out.text("equidist_hist.gp", &hist_plot)?;

    let mut trend = gnuplot_preamble("equidist_trend.png");
    trend.push_str("set logscale xy\nset xlabel 'h'\nset ylabel '|h Tr f(S_U) - 4 a_0|'\n");
    let parts: Vec<String> = fs
        .iter()
        .map(|f| {
            format!(
                "'equidist.csv' using (strcol(3) eq '{id}' ? $1 : 1/0):(sqrt(($4-$6)**2+($5-$7)**2)) with linespoints title '{id}'",
                id = f.id
            )
        })
        .collect();
    trend.push_str(&format!("plot {}\n", parts.join(", ")));
    ctx.out.text("equidist_trend.gp", &trend)?;

    let mut s = Summary::default();
    if let Some(c) = &report.caveat {
        s.line(format!("caveat: {c}"));
    }
    for &h in &hs {
        let w = weyl_count(h, ctx.model.threshold_guard);
        s.line(format!("h={h}: dim {} h*dim {:.4} (target {WEYL_CONSTANT})", w.dim, w.scaled));
    }
    if hs.len() > 1 {
        for f in &fs {
            let devs: Vec<f64> = hs
                .iter()
                .map(|&h| {
                    let r = report.rows.iter().find(|r| r.h == h && r.f_id == f.id).expect("row per h");
                    (r.trace_scaled - r.target).norm()
                })
                .collect();
            s.check(&format!("{} decreasing", f.id), strictly_decreasing(&devs), list(&devs));
        }
    }
    let h_min = *hs.last().expect("non-empty h list");
    let dev = report.rows.iter().find(|r| r.h == h_min).map_or(f64::NAN, |r| r.cdf_dev);
    let tol = ctx.cfg.tolerances.cdf;
    s.check(&format!("cdf deviation h={h_min}"), dev <= tol, format!("{dev:.4} (tol {tol})"));
    Ok(s)
}

pub fn coherent(ctx: &mut Context) -> Result<Summary, CliError> {
    let c = ctx.cfg.coherent.clone();
    if c.thetas == 0 || c.etas.is_empty() {
        return Err(CliError::Config("coherent needs thetas >= 1 and a non-empty eta list".into()));
    }
    let centers = center_lattice(c.end, c.thetas, &c.etas);
    let tol = ctx.cfg.tolerances.fio;
    let columns = [
        "y_end",
        "theta0",
        "eta0",
        "kappa_end",
        "kappa_theta",
        "kappa_eta",
        "center_end",
        "center_theta",
        "center_eta",
        "dist",
        "h",
    ];
    let mut rows = Vec::new();
    let mut s = Summary::default();
    let mut medians = Vec::new();
    for h in ctx.cfg.h_values() {
        let model = ctx.model_at(h)?;
        let (_, su) = assemble_pair(&model)?;
        let report = fio_check(&centers, &model, &su)?;
        for r in &report.rows {
            rows.push(vec![
                r.center.end.to_string(),
                num(r.center.theta),
                num(r.center.eta),
                r.kappa.end.to_string(),
                num(r.kappa.theta),
                num(r.kappa.eta),
                r.husimi.end.to_string(),
                num(r.husimi.theta),
                num(r.husimi.eta),
                num(r.distance),
                num(h),
            ]);
        }
        let frac = report.end_match_fraction();
        let bound = tol * h.sqrt();
        let worst = report.max_distance();
        s.check(&format!("end match h={h}"), frac == 1.0, format!("{:.1}%", 100.0 * frac));
        s.check(&format!("distance h={h}"), worst <= bound, format!("max {worst:.4}, bound {bound:.4}"));
        medians.push((h, report.median_distance()));
    }
    ctx.out.table("coherent.csv", &columns, &rows)?;
    let script = format!(
        "{}set xlabel 'theta'\nset ylabel 'eta'\n\
         plot 'coherent.csv' using 5:6 with points pt 6 ps 1.5 title 'kappa', '' using 8:9 with points pt 7 title 'Husimi center'\n",
        gnuplot_preamble("coherent.png")
    );
    ctx.out.text("coherent.gp", &script)?;
    for (h, m) in &medians {
        s.line(format!("h={h}: median distance {m:.4e}"));
    }
    Ok(s)
}

pub fn dichotomy(ctx: &mut Context) -> Result<Summary, CliError> {
    let tol = ctx.cfg.tolerances.dichotomy;
    let columns = ["m", "hm", "transmission", "reflection", "band", "pass"];
    let mut s = Summary::default();
    for h in ctx.cfg.h_values() {
        let model = ctx.model_at(h)?;
        let (_, su) = assemble_pair(&model)?;
        let rep = dichotomy_report(&model, &su)?;
        let rows: Vec<Vec<String>> = rep
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.m.to_string(),
                    num(r.hm),
                    num(r.transmission),
                    num(r.reflection),
                    format!("{:?}", r.band).to_lowercase(),
                    r.passes(tol).to_string(),
                ]
            })
            .collect();
        let tag = h_tag(h);
        ctx.out.table(&format!("dichotomy_{tag}.csv"), &columns, &rows)?;
        let script = format!(
            "{}set xlabel 'h|m|'\nset ylabel 'probability'\nset arrow from {ec},0 to {ec},1 nohead dt 2\n\
             plot 'dichotomy_{tag}.csv' using 2:3 with points pt 7 title '|t|^2', '' using 2:4 with points pt 6 title '|r|^2'\n",
            gnuplot_preamble(&format!("dichotomy_{tag}.png")),
            ec = rep.eta_c
        );
        ctx.out.text(&format!("dichotomy_{tag}.gp"), &script)?;
        let bad = rep.rows.iter().filter(|r| !r.passes(tol)).count();
        s.check(
            &format!("dichotomy h={h}"),
            bad == 0,
            format!("eta_c {:.4}, {bad} of {} modes outside tolerance {tol}", rep.eta_c, rep.rows.len()),
        );
    }
    Ok(s)
}

pub fn resolvent(ctx: &mut Context) -> Result<Summary, CliError> {
    let r = ctx.cfg.resolvent.clone();
    if r.tau_points < 2 {
        return Err(CliError::Config("resolvent needs tau_points >= 2".into()));
    }
    let mut prob = WeightedResolventProblem::new(ctx.model.clone());
    prob.epsilon = r.epsilon;
    prob.alpha = r.alpha;
    prob.half_length = ctx.model.half_width() + r.margin;
    prob.absorber = Absorber { width: r.layer_width, strength: r.strength };
    prob.points_per_wavelength = r.points_per_wavelength;
    if !(r.layer_width > 0.0 && r.layer_width < r.margin) || !(r.epsilon > 0.0 && r.epsilon < 1.0) {
        return Err(CliError::Config("resolvent needs 0 < layer_width < margin and 0 < epsilon < 1".into()));
    }
    let mut hs = ctx.cfg.h_values();
    hs.sort_by(|a, b| b.total_cmp(a));
    let mut rows = Vec::new();
    let mut sups = Vec::new();
    for &h in &hs {
        let est = sup_over_tau(&prob, h, r.tau_points)?;
        for row in &est.rows {
            rows.push(vec![num(row.tau), num(h), num(row.norm), num(row.absorber_ratio)]);
        }
        sups.push(est);
    }
    ctx.out.table("resolvent.csv", &["tau", "h", "norm", "absorber_check_ratio"], &rows)?;
    let pts: Vec<(f64, f64)> = sups.iter().map(|e| (e.h, e.sup)).collect();
    let slope = if pts.len() > 1 { loglog_slope(&pts) } else { f64::NAN };
    let sweep: Vec<Vec<String>> = sups
        .iter()
        .map(|e| vec![num(e.h), num(e.sup), num(e.tau_at_sup), num(e.absorber_ratio), num(slope)])
        .collect();
    ctx.out.table("resolvent_sweep.csv", &["h", "sup_norm", "tau_at_sup", "absorber_check_ratio", "slope"], &sweep)?;
    let script = format!(
        "{}set logscale xy\nset xlabel 'h'\nset ylabel 'sup_tau weighted norm'\n\
         plot 'resolvent_sweep.csv' using 1:2 with linespoints title 'sup', '' using 1:({c}/$1) with lines dt 2 title 'C/h'\n",
        gnuplot_preamble("resolvent.png"),
        c = num(sups[0].sup * sups[0].h)
    );
    ctx.out.text("resolvent.gp", &script)?;
    let mut s = Summary::default();
    let tol = ctx.cfg.tolerances.absorber;
    for e in &sups {
        let change = (e.absorber_ratio - 1.0).abs();
        s.line(format!("h={}: sup {:.4} at tau {:.3}", e.h, e.sup, e.tau_at_sup));
        s.check(&format!("absorber h={}", e.h), change <= tol, format!("change {change:.2e} (tol {tol})"));
    }
    if pts.len() > 1 {
        s.check("slope in [-1.3, -0.7]", (-1.3..=-0.7).contains(&slope), format!("{slope:.4}"));
    }
    Ok(s)
}
