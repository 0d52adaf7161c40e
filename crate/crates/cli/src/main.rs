//! `metric-slice`: reproducible experiments on metrics over the discretized flat torus.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metric_slice::diffeo::DiffeoGrid;
use metric_slice::finite::{self, Rot, SpdPoint};
use metric_slice::io::{read_field, write_field, write_report, Field, Report};
use metric_slice::l2::{l2_exp_with, l2_log_with, ExpOptions, LogOptions};
use metric_slice::refinement::{adjointness_study, equivariance_study, RefinementStudy};
use metric_slice::rng::{perturbed_identity, smooth_symtensor, smooth_vector, SplitMix64};
use metric_slice::slice::{
    horizontal_lift, isometry_candidates, normal_part, orbit_split, slice_decompose, DecomposeOptions, MetricPath,
};
use metric_slice::tensor::MetricGeometry;
use metric_slice::{Error, GridSpec, MetricField, Sym2};

#[derive(Parser, Debug)]
#[command(name = "metric-slice", version, about = "Slice and orbit experiments for metrics on the flat torus")]
struct Cli {
    #[command(flatten)]
    cfg: RunConfig,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct RunConfig {
    /// Grid resolution N (N×N cells).
    #[arg(long = "grid", global = true, default_value_t = 32)]
    grid: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Relative tolerance of the orthogonal splitting.
    #[arg(long = "tol-solver", global = true, default_value_t = 1e-10)]
    tol_solver: f64,
    /// Local error tolerance of geodesic integration.
    #[arg(long = "tol-ode", global = true, default_value_t = 1e-10)]
    tol_ode: f64,
    /// Relative residual target of slice decomposition, log and lift.
    #[arg(long = "tol-decompose", global = true, default_value_t = 1e-6)]
    tol_decompose: f64,
    /// Working radius for chart-based checks.
    #[arg(long, global = true, default_value_t = 0.1)]
    radius: f64,
    /// Input files, in the order the subcommand expects.
    #[arg(long = "in", global = true)]
    inputs: Vec<PathBuf>,
    /// Output directory for field files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report file; the report is also printed to stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a tensor at a metric into orbit-tangent and divergence-free parts. Inputs: metric, tensor.
    Project,
    /// Geodesic from a metric with an initial velocity. Inputs: metric, velocity.
    Exp {
        #[arg(long, default_value_t = 1.0)]
        time: f64,
    },
    /// Initial velocity of the geodesic between two metrics. Inputs: base, target.
    Log,
    /// Write a metric as a gauge acting on a slice point. Inputs: base, target.
    Decompose,
    /// Horizontal lift of a sampled path. Inputs: the path points in order.
    Lift,
    /// Lattice isometries of a metric. Inputs: metric.
    Isometries {
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Checks of the SO(2) model acting on 2×2 SPD matrices.
    FiniteDemo {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Grid-refinement study of adjointness and equivariance.
    Convergence {
        #[arg(long, value_delimiter = ',', default_values_t = [16, 32, 64])]
        sizes: Vec<usize>,
        #[arg(long = "min-order", default_value_t = 1.9)]
        min_order: f64,
    },
    /// Write example inputs for every subcommand into --out.
    GenExamples,
}

enum Failure {
    Usage(String),
    Module(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Module(e)
    }
}

type CmdResult = Result<(Report, bool), Failure>;

impl RunConfig {
    fn validate(&self) -> Result<GridSpec, Failure> {
        for (name, v) in [
            ("tol-solver", self.tol_solver),
            ("tol-ode", self.tol_ode),
            ("tol-decompose", self.tol_decompose),
            ("radius", self.radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Failure::Usage(format!("--{name} must be positive, got {v}")));
            }
        }
        GridSpec::new(self.grid).map_err(|e| Failure::Usage(e.to_string()))
    }

    fn inputs(&self, count: usize) -> Result<&[PathBuf], Failure> {
        if self.inputs.len() != count {
            return Err(Failure::Usage(format!("expected {count} --in files, got {}", self.inputs.len())));
        }
        Ok(&self.inputs)
    }

    fn out_dir(&self) -> Result<Option<&Path>, Failure> {
        if let Some(dir) = &self.out {
            std::fs::create_dir_all(dir).map_err(Error::from)?;
        }
        Ok(self.out.as_deref())
    }

    fn decompose_opts(&self) -> DecomposeOptions {
        DecomposeOptions { split_tol: self.tol_solver, ..DecomposeOptions::with_tol(self.tol_decompose) }
    }

    fn base_entries(&self, r: &mut Report) {
        r.set("grid", self.grid).set("seed", self.seed);
    }
}

fn read_metric(p: &Path) -> Result<MetricField, Failure> {
    Ok(read_field(p)?.into_metric()?)
}

fn save(dir: Option<&Path>, name: &str, field: Field) -> Result<(), Failure> {
    if let Some(d) = dir {
        write_field(d.join(name), &field)?;
    }
    Ok(())
}

fn cmd_project(cfg: &RunConfig) -> CmdResult {
    let ins = cfg.inputs(2)?;
    let g = read_metric(&ins[0])?;
    let s = read_field(&ins[1])?.into_symtensor()?;
    let split = orbit_split(&g, &s, cfg.tol_solver)?;
    let geom = MetricGeometry::new(&g)?;
    let recon = &(&geom.lie_derivative(&split.x) + &split.h) - &s;
    let recon_rel = geom.sigma_norm(&recon) / geom.sigma_norm(&s).max(f64::MIN_POSITIVE);
    let div = geom.one_form_norm(&geom.divergence_adjoint(&split.h)) / geom.sigma_norm(&s).max(f64::MIN_POSITIVE);
    let mut r = Report::new("project");
    cfg.base_entries(&mut r);
    r.set("grid", g.spec().n());
    r.set("tol_solver", cfg.tol_solver)
        .set("iterations", split.iterations)
        .set("solver_residual", split.residual)
        .set("reconstruction", recon_rel)
        .set("divergence_defect", div)
        .set("orthogonality_defect", split.orthogonality_defect);
    let ok = recon_rel <= 1e-8 && div <= 1e-8;
    r.set("passed", ok);
    let dir = cfg.out_dir()?;
    save(dir, "x.field", Field::Vector(split.x))?;
    save(dir, "h.field", Field::SymTensor(split.h))?;
    Ok((r, ok))
}

fn cmd_exp(cfg: &RunConfig, time: f64) -> CmdResult {
    let ins = cfg.inputs(2)?;
    let g = read_metric(&ins[0])?;
    let s = read_field(&ins[1])?.into_symtensor()?;
    let path = l2_exp_with(&g, &s, time, &ExpOptions { tol: cfg.tol_ode, ..Default::default() })?;
    let dev = path.speed_deviation()?;
    let mut r = Report::new("exp");
    cfg.base_entries(&mut r);
    r.set("grid", g.spec().n());
    r.set("time", time)
        .set("tol_ode", cfg.tol_ode)
        .set("steps", path.steps)
        .set("max_error_estimate", path.max_error_estimate)
        .set("speed_deviation", dev);
    let speeds = path.speeds()?;
    let t = r.table("samples", &["t", "speed"]);
    for (sample, v) in path.samples.iter().zip(speeds) {
        t.row(vec![sample.t.into(), v.into()]);
    }
    let ok = dev <= 1e-6;
    r.set("passed", ok);
    save(cfg.out_dir()?, "endpoint.field", Field::Metric(path.endpoint().clone()))?;
    Ok((r, ok))
}

fn cmd_log(cfg: &RunConfig) -> CmdResult {
    let ins = cfg.inputs(2)?;
    let g = read_metric(&ins[0])?;
    let target = read_metric(&ins[1])?;
    let opts = LogOptions { ode_tol: cfg.tol_ode.min(LogOptions::with_tol(cfg.tol_decompose).ode_tol), ..LogOptions::with_tol(cfg.tol_decompose) };
    let out = l2_log_with(&g, &target, None, &opts)?;
    let mut r = Report::new("log");
    cfg.base_entries(&mut r);
    r.set("grid", g.spec().n());
    r.set("tol", cfg.tol_decompose).set("iterations", out.iterations).set("residual", out.residual);
    let ok = out.residual <= cfg.tol_decompose;
    r.set("passed", ok);
    save(cfg.out_dir()?, "velocity.field", Field::SymTensor(out.velocity))?;
    Ok((r, ok))
}

fn cmd_decompose(cfg: &RunConfig) -> CmdResult {
    let ins = cfg.inputs(2)?;
    let g0 = read_metric(&ins[0])?;
    let g = read_metric(&ins[1])?;
    let d = slice_decompose(&g0, &g, &cfg.decompose_opts())?;
    let mut r = Report::new("decompose");
    cfg.base_entries(&mut r);
    r.set("grid", g0.spec().n());
    r.set("tol_decompose", cfg.tol_decompose)
        .set("residual", d.residual)
        .set("iterations", d.iterations)
        .set("divergence_defect", d.divergence_defect)
        .set("gauge_max_displacement", d.phi.max_displacement());
    let t = r.table("history", &["iteration", "residual"]);
    for (k, res) in d.history.iter().enumerate() {
        t.row(vec![k.into(), (*res).into()]);
    }
    let ok = d.residual <= cfg.tol_decompose;
    r.set("passed", ok);
    let dir = cfg.out_dir()?;
    save(dir, "phi.field", Field::Diffeo(d.phi))?;
    save(dir, "h.field", Field::SymTensor(d.h))?;
    Ok((r, ok))
}

fn cmd_lift(cfg: &RunConfig) -> CmdResult {
    if cfg.inputs.len() < 2 {
        return Err(Failure::Usage("lift needs at least two --in path points".into()));
    }
    let points = cfg.inputs.iter().map(|p| read_metric(p)).collect::<Result<Vec<_>, _>>()?;
    let n = points[0].spec().n();
    let path = MetricPath::new(0.0, 1.0, points)?;
    let lift = horizontal_lift(&path, &cfg.decompose_opts())?;
    let mut r = Report::new("lift");
    cfg.base_entries(&mut r);
    r.set("grid", n);
    r.set("tol_decompose", cfg.tol_decompose)
        .set("points", path.points.len())
        .set("max_residual", lift.max_residual)
        .set("max_divergence_defect", lift.max_divergence_defect);
    let t = r.table("gauges", &["k", "t", "max_displacement"]);
    for (k, (g, time)) in lift.gauges.iter().zip(path.times()).enumerate() {
        t.row(vec![k.into(), time.into(), g.max_displacement().into()]);
    }
    let ok = lift.max_residual <= cfg.tol_decompose;
    r.set("passed", ok);
    let dir = cfg.out_dir()?;
    for (k, (p, g)) in lift.lifted.points.into_iter().zip(lift.gauges).enumerate() {
        save(dir, &format!("lifted_{k:03}.field"), Field::Metric(p))?;
        save(dir, &format!("gauge_{k:03}.field"), Field::Diffeo(g))?;
    }
    Ok((r, ok))
}

fn cmd_isometries(cfg: &RunConfig, tol: f64) -> CmdResult {
    let ins = cfg.inputs(1)?;
    let g = read_metric(&ins[0])?;
    let isos = isometry_candidates(&g, tol)?;
    let mut r = Report::new("isometries");
    cfg.base_entries(&mut r);
    r.set("grid", g.spec().n());
    r.set("tol", tol).set("candidates", 8 * g.spec().len()).set("isometries", isos.len());
    let t = r.table("isometries", &["a11", "a12", "a21", "a22", "shift_x", "shift_y"]);
    for m in &isos {
        let l = m.linear();
        let s = m.lattice_shift().unwrap_or([0, 0]);
        t.row(vec![
            (l.m11 as i64).into(),
            (l.m12 as i64).into(),
            (l.m21 as i64).into(),
            (l.m22 as i64).into(),
            s[0].into(),
            s[1].into(),
        ]);
    }
    Ok((r, true))
}

fn cmd_finite_demo(cfg: &RunConfig, samples: usize) -> CmdResult {
    const TOL: f64 = 1e-12;
    let mut rng = SplitMix64::new(cfg.seed);
    let a = SpdPoint::diag(2.0, 1.0)?;
    let slice = finite::slice_at(&a, cfg.radius)?;
    let mut r = Report::new("finite-demo");
    r.set("seed", cfg.seed).set("samples", samples).set("radius", cfg.radius).set("tol", TOL);

    let (classes, points) = finite::sample_tube(&slice, &mut rng, samples);
    let mut chart_err: f64 = 0.0;
    for c in &classes {
        let s = slice.point(c.s)?;
        let (coset, back) = slice.chart_inverse(&slice.chart(c.angle, &s))?;
        chart_err = chart_err.max(finite::frobenius_distance(&back, &s));
        chart_err = chart_err.max(finite::frobenius_distance(&slice.chart(coset, &back), &slice.chart(c.angle, &s)));
    }
    let mut inverse_err: f64 = 0.0;
    for q in &points {
        let (coset, s) = slice.chart_inverse(q)?;
        inverse_err = inverse_err.max(finite::frobenius_distance(&slice.chart(coset, &s), q));
    }

    // slice property (i): the isotropy element R(π) fixes slice points
    // slice property (ii): every other rotation on a θ-grid leaves the slice
    let flip = Rot::new(std::f64::consts::PI);
    let mut fixed_err: f64 = 0.0;
    let mut leaves = true;
    for c in classes.iter().take(100) {
        let s = slice.point(c.s)?;
        fixed_err = fixed_err.max(finite::frobenius_distance(&finite::act(&flip, &s), &s));
        for k in 1..10_000 {
            if k == 5000 {
                continue;
            }
            let theta = std::f64::consts::TAU * k as f64 / 10_000.0;
            leaves &= !slice.contains(&finite::act(&Rot::new(theta), &s), TOL);
        }
    }
    let tube = finite::tube_quotient(&slice, &classes, &points, TOL);
    r.set("chart_roundtrip", chart_err)
        .set("inverse_roundtrip", inverse_err)
        .set("isotropy_fixes_slice", fixed_err)
        .set("other_rotations_leave_slice", leaves)
        .set("tube_well_defined", tube.well_defined_error)
        .set("tube_min_pair_distance", tube.min_pair_distance)
        .set("tube_surjectivity", tube.surjectivity_error)
        .set("tube_violations", tube.violations.len());
    let ok = chart_err <= TOL && inverse_err <= TOL && fixed_err <= TOL && leaves && tube.passed();
    r.set("passed", ok);
    Ok((r, ok))
}

fn study_table(r: &mut Report, name: &str, s: &RefinementStudy) {
    let t = r.table(name, &["n", "error"]);
    for row in &s.rows {
        t.row(vec![row.n.into(), row.error.into()]);
    }
}

fn cmd_convergence(cfg: &RunConfig, sizes: &[usize], min_order: f64) -> CmdResult {
    if sizes.len() < 2 {
        return Err(Failure::Usage("--sizes needs at least two resolutions".into()));
    }
    for &n in sizes {
        GridSpec::new(n).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let adj = adjointness_study(sizes)?;
    let eqv = equivariance_study(sizes, cfg.tol_ode)?;
    let mut r = Report::new("convergence");
    r.set("sizes", sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","))
        .set("min_order", min_order)
        .set("adjointness_order", adj.order)
        .set("equivariance_order", eqv.order);
    study_table(&mut r, "adjointness", &adj);
    study_table(&mut r, "equivariance", &eqv);
    let ok = adj.order >= min_order && eqv.order >= min_order;
    r.set("passed", ok);
    Ok((r, ok))
}

fn cmd_gen_examples(cfg: &RunConfig, spec: GridSpec) -> CmdResult {
    let dir = cfg.out_dir()?.ok_or_else(|| Failure::Usage("gen-examples needs --out".into()))?;
    let mut rng = SplitMix64::new(cfg.seed);
    let base = perturbed_identity(spec, &mut rng, 0.1);
    let geom = MetricGeometry::new(&base)?;
    let tensor = smooth_symtensor(spec, &mut rng, 0.1);
    let raw = normal_part(&base, &smooth_symtensor(spec, &mut rng, 0.1), cfg.tol_solver)?;
    let h0 = &raw * (0.05 * geom.sigma_norm(base.tensor()) / geom.sigma_norm(&raw));
    let gauge = smooth_vector(spec, &mut rng, 0.01);
    let slice_point = l2_exp_with(&base, &h0, 1.0, &ExpOptions { tol: cfg.tol_ode, ..Default::default() })?;
    let target = DiffeoGrid::flow_exp(&gauge, 1.0)?.pullback(slice_point.endpoint())?;
    let bump = MetricField::new(metric_slice::SymTensorField::from_fn(spec, |x, _| {
        Sym2::diag(1.0 + 0.1 * (2.0 * std::f64::consts::PI * x).sin(), 1.0)
    }))?;

    let mut written = vec![];
    let mut put = |name: &str, f: Field| -> Result<(), Failure> {
        write_field(dir.join(name), &f)?;
        written.push(name.to_string());
        Ok(())
    };
    put("base.field", Field::Metric(base.clone()))?;
    put("tensor.field", Field::SymTensor(tensor))?;
    put("velocity.field", Field::SymTensor(h0.clone()))?;
    put("target.field", Field::Metric(target))?;
    put("flat.field", Field::Metric(MetricField::identity(spec)))?;
    put("bump.field", Field::Metric(bump))?;
    for k in 0..5 {
        let t = k as f64 / 4.0;
        let point = if k == 0 {
            base.clone()
        } else {
            let e = l2_exp_with(&base, &(&h0 * t), 1.0, &ExpOptions { tol: cfg.tol_ode, ..Default::default() })?;
            DiffeoGrid::flow_exp(&gauge, t)?.pullback(e.endpoint())?
        };
        put(&format!("path_{k:03}.field"), Field::Metric(point))?;
    }
    let mut r = Report::new("gen-examples");
    cfg.base_entries(&mut r);
    let t = r.table("files", &["name"]);
    for w in written {
        t.row(vec![w.into()]);
    }
    Ok((r, true))
}

fn run(cli: &Cli) -> CmdResult {
    let cfg = &cli.cfg;
    let spec = cfg.validate()?;
    match &cli.cmd {
        Command::Project => cmd_project(cfg),
        Command::Exp { time } => cmd_exp(cfg, *time),
        Command::Log => cmd_log(cfg),
        Command::Decompose => cmd_decompose(cfg),
        Command::Lift => cmd_lift(cfg),
        Command::Isometries { tol } => cmd_isometries(cfg, *tol),
        Command::FiniteDemo { samples } => cmd_finite_demo(cfg, *samples),
        Command::Convergence { sizes, min_order } => cmd_convergence(cfg, sizes, *min_order),
        Command::GenExamples => cmd_gen_examples(cfg, spec),
    }
}

fn error_line(kind: &str, msg: &str) {
    eprintln!("error: kind={kind} msg={}", msg.replace('\n', " "));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                error_line("UsageError", &e.to_string());
                return ExitCode::from(2);
            }
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok((report, ok)) => {
            print!("{}", report.render());
            if let Some(p) = &cli.cfg.report {
                if let Err(e) = write_report(p, &report) {
                    error_line(e.kind(), &e.to_string());
                    return ExitCode::from(2);
                }
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Failure::Usage(msg)) => {
            error_line("UsageError", &msg);
            ExitCode::from(2)
        }
        Err(Failure::Module(e)) => {
            error_line(e.kind(), &e.to_string());
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
