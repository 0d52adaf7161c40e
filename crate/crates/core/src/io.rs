//! Field files and run reports.
//!
//! A field file is a text header followed by a binary payload:
//!
//! ```text
//! metric-slice field
//! version 1
//! kind metric
//! n 16
//! components g11 g12 g22
//! end
//! <3·N² little-endian f64, one component after another, row-major>
//! ```
//!
//! Diffeomorphism files add `linear`, `shift` (lattice maps only) and
//! `inverse_residual` lines and store the displacement and the cached inverse
//! displacement as four components. Header floats use Rust's shortest
//! round-trip formatting, so every value reads back bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::diffeo::DiffeoGrid;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, MetricField, ScalarField, SymTensorField, VectorField};
use crate::mat2::Mat2;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "metric-slice field";

#[derive(Debug, Clone)]
pub enum Field {
    Metric(MetricField),
    SymTensor(SymTensorField),
    Vector(VectorField),
    Scalar(ScalarField),
    Diffeo(DiffeoGrid),
}

impl Field {
    pub fn kind(&self) -> &'static str {
        match self {
            Field::Metric(_) => "metric",
            Field::SymTensor(_) => "symtensor",
            Field::Vector(_) => "vector",
            Field::Scalar(_) => "scalar",
            Field::Diffeo(_) => "diffeo",
        }
    }

    pub fn spec(&self) -> GridSpec {
        match self {
            Field::Metric(g) => g.spec(),
            Field::SymTensor(s) => s.spec(),
            Field::Vector(v) => v.spec(),
            Field::Scalar(f) => f.spec(),
            Field::Diffeo(d) => d.spec(),
        }
    }

    fn components(&self) -> (Vec<&'static str>, Vec<&[f64]>) {
        fn sym(s: &SymTensorField) -> Vec<&[f64]> {
            vec![s.s11.values(), s.s12.values(), s.s22.values()]
        }
        match self {
            Field::Metric(g) => (vec!["g11", "g12", "g22"], sym(g.tensor())),
            Field::SymTensor(s) => (vec!["s11", "s12", "s22"], sym(s)),
            Field::Vector(v) => (vec!["x1", "x2"], vec![v.x1.values(), v.x2.values()]),
            Field::Scalar(f) => (vec!["f"], vec![f.values()]),
            Field::Diffeo(d) => {
                let (u, v) = (d.displacement(), d.inverse_displacement());
                (vec!["u1", "u2", "v1", "v2"], vec![u.x1.values(), u.x2.values(), v.x1.values(), v.x2.values()])
            }
        }
    }

    pub fn into_metric(self) -> Result<MetricField> {
        match self {
            Field::Metric(g) => Ok(g),
            Field::SymTensor(s) => MetricField::new(s).map_err(|e| Error::Validation(e.to_string())),
            other => Err(Error::Format(format!("expected a metric, found kind {}", other.kind()))),
        }
    }

    pub fn into_symtensor(self) -> Result<SymTensorField> {
        match self {
            Field::Metric(g) => Ok(g.into_tensor()),
            Field::SymTensor(s) => Ok(s),
            other => Err(Error::Format(format!("expected a symmetric tensor, found kind {}", other.kind()))),
        }
    }

    pub fn into_diffeo(self) -> Result<DiffeoGrid> {
        match self {
            Field::Diffeo(d) => Ok(d),
            other => Err(Error::Format(format!("expected a diffeo, found kind {}", other.kind()))),
        }
    }
}

pub fn encode_field(field: &Field) -> Vec<u8> {
    let spec = field.spec();
    let (names, data) = field.components();
    let mut head = format!("{MAGIC}\nversion {FORMAT_VERSION}\nkind {}\nn {}\n", field.kind(), spec.n());
    if let Field::Diffeo(d) = field {
        let l = d.linear();
        writeln!(head, "linear {:?} {:?} {:?} {:?}", l.m11, l.m12, l.m21, l.m22).unwrap();
        if let Some(s) = d.lattice_shift() {
            writeln!(head, "shift {} {}", s[0], s[1]).unwrap();
        }
        writeln!(head, "inverse_residual {:?}", d.inverse_residual()).unwrap();
    }
    writeln!(head, "components {}\nend", names.join(" ")).unwrap();
    let mut out = head.into_bytes();
    out.reserve(8 * spec.len() * data.len());
    for comp in data {
        for x in comp {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_field(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    std::fs::write(path, encode_field(field))?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| bad(format!("bad number {s:?}")))
}

pub fn decode_field(reader: impl Read) -> Result<Field> {
    let mut r = BufReader::new(reader);
    let mut header = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("header ends before `end`"));
        }
        let line = line.trim_end_matches(['\n', '\r']).to_string();
        if line == "end" {
            break;
        }
        if header.len() > 32 {
            return Err(bad("header too long"));
        }
        header.push(line);
    }
    if header.first().map(String::as_str) != Some(MAGIC) {
        return Err(bad("bad magic line"));
    }
    let get = |key: &str| -> Option<Vec<&str>> {
        header[1..].iter().find_map(|l| {
            let mut it = l.split_whitespace();
            (it.next() == Some(key)).then(|| it.collect())
        })
    };
    let need = |key: &str| get(key).ok_or_else(|| bad(format!("missing `{key}`")));
    let one = |key: &str| -> Result<String> {
        match need(key)?.as_slice() {
            [v] => Ok(v.to_string()),
            _ => Err(bad(format!("`{key}` takes one value"))),
        }
    };
    let version: u32 = one("version")?.parse().map_err(|_| bad("bad version"))?;
    if version > FORMAT_VERSION {
        return Err(bad(format!("format version {version} is newer than supported {FORMAT_VERSION}")));
    }
    let kind = one("kind")?;
    let n: usize = one("n")?.parse().map_err(|_| bad("bad grid size"))?;
    let spec = GridSpec::new(n).map_err(|e| bad(e.to_string()))?;
    let names = need("components")?;
    let expected: &[&str] = match kind.as_str() {
        "metric" => &["g11", "g12", "g22"],
        "symtensor" => &["s11", "s12", "s22"],
        "vector" => &["x1", "x2"],
        "scalar" => &["f"],
        "diffeo" => &["u1", "u2", "v1", "v2"],
        other => return Err(bad(format!("unknown kind {other:?}"))),
    };
    if names != expected {
        return Err(bad(format!("components {names:?} do not match kind {kind}")));
    }

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let want = 8 * expected.len() * spec.len();
    if payload.len() != want {
        return Err(bad(format!("payload has {} bytes, expected {want}", payload.len())));
    }
    let mut comps = payload.chunks_exact(8 * spec.len()).map(|chunk| {
        let v = chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        ScalarField::new(spec, v).expect("length checked")
    });
    let mut next = || comps.next().expect("component count checked");
    let field = match kind.as_str() {
        "metric" => {
            let t = SymTensorField { s11: next(), s12: next(), s22: next() };
            Field::Metric(MetricField::new(t).map_err(|e| Error::Validation(e.to_string()))?)
        }
        "symtensor" => Field::SymTensor(SymTensorField { s11: next(), s12: next(), s22: next() }),
        "vector" => Field::Vector(VectorField { x1: next(), x2: next() }),
        "scalar" => Field::Scalar(next()),
        _ => {
            let l = need("linear")?.iter().map(|s| parse_f64(s)).collect::<Result<Vec<_>>>()?;
            let [m11, m12, m21, m22] = l[..] else { return Err(bad("`linear` takes four values")) };
            let shift = match get("shift") {
                Some(v) => match v[..] {
                    [a, b] => Some([
                        a.parse().map_err(|_| bad("bad shift"))?,
                        b.parse().map_err(|_| bad("bad shift"))?,
                    ]),
                    _ => return Err(bad("`shift` takes two values")),
                },
                None => None,
            };
            let residual = parse_f64(&one("inverse_residual")?)?;
            let u = VectorField { x1: next(), x2: next() };
            let v = VectorField { x1: next(), x2: next() };
            let d = DiffeoGrid::from_stored(Mat2::new(m11, m12, m21, m22), u, v, shift, residual)
                .map_err(|e| Error::Validation(e.to_string()))?;
            Field::Diffeo(d)
        }
    };
    Ok(field)
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    decode_field(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:e}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Text(v) => write!(f, "{v}"),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

/// Key/value entries and tables, written in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub title: String,
    entries: Vec<(String, Value)>,
    tables: Vec<Table>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), ..Default::default() }
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        let key = key.into();
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn entries(&self) -> &[(String, Value)] {
        &self.entries
    }

    pub fn table(&mut self, name: impl Into<String>, columns: &[&str]) -> &mut Table {
        self.tables.push(Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        });
        self.tables.last_mut().expect("just pushed")
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn render(&self) -> String {
        let mut s = format!("# report: {}\n", self.title);
        for (k, v) in &self.entries {
            writeln!(s, "{k} = {v}").unwrap();
        }
        for t in &self.tables {
            writeln!(s, "\n[{}]\n{}", t.name, t.columns.join("\t")).unwrap();
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(s, "{}", cells.join("\t")).unwrap();
            }
        }
        s
    }
}

impl Table {
    pub fn row(&mut self, cells: Vec<Value>) -> &mut Self {
        self.rows.push(cells);
        self
    }
}

pub fn write_report(path: impl AsRef<Path>, report: &Report) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(report.render().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{smooth_symtensor, smooth_vector, SplitMix64};

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    fn bits(f: &Field) -> Vec<Vec<u64>> {
        f.components().1.iter().map(|c| c.iter().map(|x| x.to_bits()).collect()).collect()
    }

    #[test]
    fn roundtrips_are_bit_exact() {
        let s = spec(16);
        let mut rng = SplitMix64::new(1);
        let fields = vec![
            Field::Metric(MetricField::identity(s)),
            Field::SymTensor(smooth_symtensor(s, &mut rng, 0.3)),
            Field::Vector(smooth_vector(s, &mut rng, 0.01)),
            Field::Scalar(ScalarField::from_fn(s, |x, y| (x * 7.0).sin() * y)),
            Field::Diffeo(DiffeoGrid::from_displacement(smooth_vector(s, &mut rng, 0.01)).unwrap()),
            Field::Diffeo(DiffeoGrid::lattice(s, Mat2::new(0.0, -1.0, 1.0, 0.0), [3, 5]).unwrap()),
        ];
        for f in &fields {
            let back = decode_field(&encode_field(f)[..]).unwrap();
            assert_eq!(back.kind(), f.kind());
            assert_eq!(bits(&back), bits(f));
            if let (Field::Diffeo(a), Field::Diffeo(b)) = (f, &back) {
                assert_eq!(a.linear(), b.linear());
                assert_eq!(a.lattice_shift(), b.lattice_shift());
                assert_eq!(a.inverse_residual().to_bits(), b.inverse_residual().to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_files() {
        let s = spec(8);
        let mut bytes = encode_field(&Field::SymTensor(SymTensorField::from_fn(s, |_, _| {
            crate::mat2::Sym2::new(1.0, 0.0, 1.0)
        })));
        let mut metric = encode_field(&Field::Metric(MetricField::identity(s)));
        let head = metric.len() - 8 * 3 * s.len();
        metric[head..head + 8].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(decode_field(&metric[..]), Err(Error::Validation(_))));

        let newer = String::from_utf8(bytes[..bytes.len() - 8 * 3 * s.len()].to_vec())
            .unwrap()
            .replace("version 1", "version 2");
        let mut newer = newer.into_bytes();
        newer.extend_from_slice(&bytes[bytes.len() - 8 * 3 * s.len()..]);
        assert!(matches!(decode_field(&newer[..]), Err(Error::Format(_))));

        bytes[0] = b'X';
        assert!(matches!(decode_field(&bytes[..]), Err(Error::Format(_))));
        let short = encode_field(&Field::Metric(MetricField::identity(s)));
        assert!(matches!(decode_field(&short[..short.len() - 1]), Err(Error::Format(_))));
    }

    #[test]
    fn report_rendering() {
        assert_eq!(Report::new("empty").render(), "# report: empty\n");
        let mut r = Report::new("decompose");
        r.set("residual", 1.5e-7).set("iterations", 4usize).set("divergence_defect", 2e-12);
        r.set("iterations", 5usize);
        r.table("history", &["iteration", "residual"]).row(vec![0usize.into(), 0.1.into()]);
        let text = r.render();
        assert_eq!(
            text,
            "# report: decompose\nresidual = 1.5e-7\niterations = 5\ndivergence_defect = 2e-12\n\n[history]\niteration\tresidual\n0\t1e-1\n"
        );
    }
}
