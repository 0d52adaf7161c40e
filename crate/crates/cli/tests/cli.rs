use std::path::Path;
use std::process::{Command, Output};

use metric_slice::io::{write_field, Field};
use metric_slice::{GridSpec, MetricField, Sym2, SymTensorField};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metric-slice"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(report: &str, key: &str) -> f64 {
    let line = report.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap_or_else(|| panic!("no {key}"));
    line.split(" = ").nth(1).unwrap().parse().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn decompose_of_base_point_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.field");
    write_field(&flat, &Field::Metric(MetricField::identity(GridSpec::new(16).unwrap()))).unwrap();
    let o = run(&["decompose", "--in", p(&flat), "--in", p(&flat), "--out", p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&stdout(&o), "residual"), 0.0);
    assert!(dir.path().join("out/phi.field").exists());
}

#[test]
fn finite_demo_passes() {
    let o = run(&["finite-demo"]);
    assert_eq!(o.status.code(), Some(0));
    let r = stdout(&o);
    assert!(value(&r, "chart_roundtrip") <= 1e-12);
    assert!(value(&r, "tube_violations") == 0.0);
}

#[test]
fn convergence_orders() {
    let o = run(&["convergence", "--sizes", "16,32,64"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(value(&stdout(&o), "adjointness_order") >= 1.9);
    let strict = run(&["convergence", "--min-order", "10"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [vec!["decompose"], vec!["nonsense"], vec!["--grid", "3", "finite-demo"], vec!["--tol-ode", "-1", "log"]]
    {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.starts_with("error: kind=UsageError msg="), "{err}");
    }
    let missing = run(&["isometries", "--in", "/nonexistent/file.field"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error: kind=IoError"));
}

#[test]
fn positivity_loss_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GridSpec::new(8).unwrap();
    let (g, v) = (dir.path().join("g.field"), dir.path().join("v.field"));
    write_field(&g, &Field::Metric(MetricField::identity(spec))).unwrap();
    write_field(&v, &Field::SymTensor(SymTensorField::from_fn(spec, |_, _| Sym2::diag(-3.0, -3.0)))).unwrap();
    let o = run(&["exp", "--in", p(&g), "--in", p(&v)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: kind=PositivityLoss msg="));
}

#[test]
fn examples_drive_every_subcommand_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = run(&["gen-examples", "--grid", "16", "--seed", "3", "--out", p(d)]);
    assert_eq!(gen.status.code(), Some(0));
    let f = |name: &str| d.join(name);

    let proj = run(&["project", "--in", p(&f("base.field")), "--in", p(&f("tensor.field"))]);
    assert_eq!(proj.status.code(), Some(0), "{}", String::from_utf8_lossy(&proj.stderr));
    assert!(value(&stdout(&proj), "reconstruction") <= 1e-8);

    let exp = run(&["exp", "--in", p(&f("base.field")), "--in", p(&f("velocity.field"))]);
    assert_eq!(exp.status.code(), Some(0));
    let log = run(&["log", "--in", p(&f("base.field")), "--in", p(&f("path_001.field"))]);
    assert_eq!(log.status.code(), Some(0));

    let (r1, r2) = (f("r1.txt"), f("r2.txt"));
    for r in [&r1, &r2] {
        let o = run(&["decompose", "--in", p(&f("base.field")), "--in", p(&f("target.field")), "--report", p(r)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("residual = ") && text.contains("iterations = ") && text.contains("divergence_defect = "));

    let mut args = vec!["lift".to_string()];
    for k in 0..5 {
        args.push("--in".into());
        args.push(p(&f(&format!("path_{k:03}.field"))).into());
    }
    let lift = bin().args(&args).output().unwrap();
    assert_eq!(lift.status.code(), Some(0), "{}", String::from_utf8_lossy(&lift.stderr));

    let iso = run(&["isometries", "--in", p(&f("bump.field"))]);
    assert_eq!(iso.status.code(), Some(0));
    assert_eq!(value(&stdout(&iso), "isometries"), 4.0 * 16.0);
}
