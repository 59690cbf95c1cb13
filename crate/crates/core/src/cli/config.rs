//! Run configuration: TOML keyed like the workflow variables
//! (`space.dof`, `hamilt.pot.1.1`, `psi.init`, `time.propa`, ...).
//!
//! Numbers are atomic units. Where a physical unit makes sense a string
//! with a suffix is accepted instead: `"500 fs"`, `"3424.19 cm-1"`,
//! `"328.5 MV/cm"`, or `"... au"`. Every key read, including defaults, is
//! echoed into a resolved table that is itself a valid configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::grids::{Grid1D, ProductGrid};
use crate::operators::{
    JahnTellerParams, MeckeParams, Model, MorseParams, OperatorSpec, PowerNipParams, Spline, TaylorSeries,
};
use crate::propagators::{Envelope, Pulse, SplitOrder, TimeGrid};
use crate::stationary::{EigenMethod, EigenOptions, DEFAULT_DIM_CAP};
use crate::system::ChannelTerm;

pub const FS: f64 = 41.341373;
pub const CM1: f64 = 219474.63;
pub const MV_CM: f64 = 5142.2064;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    None,
    Time,
    Energy,
    Field,
}

impl Unit {
    fn suffixes(self) -> &'static [(&'static str, f64)] {
        match self {
            Unit::None => &[("au", 1.0)],
            Unit::Time => &[("fs", FS), ("au", 1.0)],
            Unit::Energy => &[("cm-1", 1.0 / CM1), ("au", 1.0)],
            Unit::Field => &[("MV/cm", 1.0 / MV_CM), ("au", 1.0)],
        }
    }

    /// Parses `"<number> <suffix>"` into atomic units.
    pub fn parse(self, text: &str) -> std::result::Result<f64, String> {
        let text = text.trim();
        for (suffix, factor) in self.suffixes() {
            if let Some(num) = text.strip_suffix(suffix) {
                let v: f64 = num
                    .trim()
                    .parse()
                    .map_err(|_| format!("cannot read a number from `{text}`"))?;
                return Ok(v * factor);
            }
        }
        let allowed: Vec<&str> = self.suffixes().iter().map(|s| s.0).collect();
        Err(format!("`{text}` needs a number or one of the unit suffixes {}", allowed.join(", ")))
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

/// Reads one table, remembering which keys were asked for so that leftovers
/// can be reported as unknown.
pub(crate) struct Reader<'a> {
    path: String,
    table: &'a Table,
    known: BTreeSet<String>,
    echo: Table,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(path: impl Into<String>, table: &'a Table) -> Self {
        Reader { path: path.into(), table, known: BTreeSet::new(), echo: Table::new() }
    }

    fn field(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::config(self.field(key), message)
    }

    fn get(&mut self, key: &str) -> Option<&'a Value> {
        self.known.insert(key.to_string());
        self.table.get(key)
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn missing(&self, key: &str) -> Error {
        self.err(key, "missing required field")
    }

    fn num(&mut self, key: &str, unit: Unit) -> Result<Option<f64>> {
        let v = match self.get(key) {
            None => return Ok(None),
            Some(Value::Integer(i)) => *i as f64,
            Some(Value::Float(f)) => *f,
            Some(Value::String(s)) if unit != Unit::None => unit.parse(s).map_err(|m| self.err(key, m))?,
            Some(other) => return Err(self.err(key, format!("expected a number, found {}", type_name(other)))),
        };
        if !v.is_finite() {
            return Err(self.err(key, "must be finite"));
        }
        self.echo.insert(key.into(), Value::Float(v));
        Ok(Some(v))
    }

    fn req(&mut self, key: &str, unit: Unit) -> Result<f64> {
        self.num(key, unit)?.ok_or_else(|| self.missing(key))
    }

    fn num_or(&mut self, key: &str, unit: Unit, default: f64) -> Result<f64> {
        let v = self.num(key, unit)?.unwrap_or(default);
        self.echo.insert(key.into(), Value::Float(v));
        Ok(v)
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => {
                self.echo.insert(key.into(), Value::Integer(*i));
                Ok(Some(*i as usize))
            }
            Some(Value::Integer(i)) => Err(self.err(key, format!("must be non-negative, got {i}"))),
            Some(other) => Err(self.err(key, format!("expected an integer, found {}", type_name(other)))),
        }
    }

    fn req_count(&mut self, key: &str) -> Result<usize> {
        self.count(key)?.ok_or_else(|| self.missing(key))
    }

    fn count_or(&mut self, key: &str, default: usize) -> Result<usize> {
        let v = self.count(key)?.unwrap_or(default);
        self.echo.insert(key.into(), Value::Integer(v as i64));
        Ok(v)
    }

    /// One-based index converted to zero-based.
    fn index_or(&mut self, key: &str, default: usize) -> Result<usize> {
        let v = self.count_or(key, default)?;
        if v == 0 {
            return Err(self.err(key, "indices start at 1"));
        }
        Ok(v - 1)
    }

    fn boolean(&mut self, key: &str, default: bool) -> Result<bool> {
        let v = match self.get(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(other) => return Err(self.err(key, format!("expected true or false, found {}", type_name(other)))),
        };
        self.echo.insert(key.into(), Value::Boolean(v));
        Ok(v)
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => {
                self.echo.insert(key.into(), Value::String(s.clone()));
                Ok(Some(s.clone()))
            }
            Some(other) => Err(self.err(key, format!("expected a string, found {}", type_name(other)))),
        }
    }

    /// A string that must be one of `choices`; returns its index.
    fn choice(&mut self, key: &str, choices: &[&str], default: Option<&str>) -> Result<usize> {
        let s = match self.string(key)? {
            Some(s) => s,
            None => match default {
                Some(d) => d.to_string(),
                None => return Err(self.missing(key)),
            },
        };
        let idx = choices.iter().position(|c| c.eq_ignore_ascii_case(&s)).ok_or_else(|| {
            self.err(key, format!("unknown choice `{s}`; valid choices: {}", choices.join(", ")))
        })?;
        self.echo.insert(key.into(), Value::String(choices[idx].into()));
        Ok(idx)
    }

    fn nums(&mut self, key: &str, unit: Unit) -> Result<Option<Vec<f64>>> {
        let arr = match self.get(key) {
            None => return Ok(None),
            Some(Value::Array(a)) => a,
            Some(other) => return Err(self.err(key, format!("expected an array, found {}", type_name(other)))),
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, v) in arr.iter().enumerate() {
            let x = match v {
                Value::Integer(i) => *i as f64,
                Value::Float(f) => *f,
                Value::String(s) if unit != Unit::None => unit.parse(s).map_err(|m| self.err(key, m))?,
                other => {
                    return Err(self.err(key, format!("element {}: expected a number, found {}", i + 1, type_name(other))))
                }
            };
            out.push(x);
        }
        self.echo.insert(key.into(), Value::Array(out.iter().map(|x| Value::Float(*x)).collect()));
        Ok(Some(out))
    }

    fn table(&mut self, key: &str) -> Result<Option<Reader<'a>>> {
        let field = self.field(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Reader::new(field, t))),
            Some(other) => Err(Error::config(field, format!("expected a table, found {}", type_name(other)))),
        }
    }

    /// An array of tables, or a single table treated as a one-element array.
    fn tables(&mut self, key: &str) -> Result<Option<Vec<Reader<'a>>>> {
        let field = self.field(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(vec![Reader::new(format!("{field}.1"), t)])),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::Table(t) => Ok(Reader::new(format!("{field}.{}", i + 1), t)),
                    other => Err(Error::config(
                        format!("{field}.{}", i + 1),
                        format!("expected a table, found {}", type_name(other)),
                    )),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(other) => Err(Error::config(field, format!("expected a table, found {}", type_name(other)))),
        }
    }

    fn keys(&mut self) -> Vec<String> {
        let keys: Vec<String> = self.table.keys().cloned().collect();
        self.known.extend(keys.iter().cloned());
        keys
    }

    fn put(&mut self, key: &str, value: Value) {
        self.echo.insert(key.into(), value);
    }

    fn put_table(&mut self, key: &str, reader: Reader<'_>) -> Result<()> {
        let t = reader.finish()?;
        self.echo.insert(key.into(), Value::Table(t));
        Ok(())
    }

    fn put_tables(&mut self, key: &str, readers: Vec<Reader<'_>>) -> Result<()> {
        let arr = readers.into_iter().map(|r| r.finish().map(Value::Table)).collect::<Result<Vec<_>>>()?;
        self.echo.insert(key.into(), Value::Array(arr));
        Ok(())
    }

    fn finish(self) -> Result<Table> {
        if let Some(k) = self.table.keys().find(|k| !self.known.contains(*k)) {
            let expected: Vec<&str> = self.known.iter().map(String::as_str).collect();
            return Err(self.err(k, format!("unknown key; expected one of: {}", expected.join(", "))));
        }
        Ok(self.echo)
    }
}

/// Prefixes the field of a configuration error raised by a constructor.
fn within(prefix: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { field, message } => Error::Config { field: format!("{prefix}.{field}"), message },
        other => other,
    }
}

/// One factor of the initial product state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitDof {
    Gauss { pos_0: f64, width: f64, mom_0: f64 },
    /// Analytic Morse eigenfunction `n`; the mass is taken from the grid.
    Morse { d_e: f64, r_e: f64, alf: f64, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub dofs: Vec<InitDof>,
    /// zero-based channel that carries the product state
    pub channel: usize,
    /// place the state on the `channel`-th adiabatic surface instead
    pub adiabatic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSpec {
    /// highest state index, so `stop + 1` states
    pub stop: usize,
    pub options: EigenOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Handle {
    ChebyReal,
    ChebyImag,
    Splitting,
    Sod,
}

pub const HANDLES: [&str; 4] = ["cheby_real", "cheby_imag", "splitting", "sod"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropaSpec {
    pub handle: Option<Handle>,
    pub precision: f64,
    pub order: SplitOrder,
    /// relative energy change that ends a relaxation
    pub tolerance: f64,
    /// number of states relaxed one after the other
    pub states: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaveSpec {
    pub export: bool,
    /// relative to the output directory unless absolute
    pub dir: Option<PathBuf>,
    pub file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Curve,
    Contour,
    Wigner,
    Flux,
    Reduced,
}

pub const PLOT_KINDS: [&str; 5] = ["curve", "contour", "wigner", "flux", "reduced"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Dvr,
    Fbr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub representation: Representation,
    /// frames every this many main steps
    pub every: usize,
    pub png: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// dotted key path, one-based indices into arrays (`time.efield.1.ampli`)
    pub key: String,
    pub values: Vec<Value>,
    /// scalar reported per point
    pub output: String,
    /// pipeline run at every point
    pub run: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Bound,
    Propa,
    Relax,
}

/// A fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub grid: ProductGrid,
    pub n_eqs: usize,
    pub pot: Vec<ChannelTerm>,
    pub dip: Vec<ChannelTerm>,
    pub nip: Option<OperatorSpec>,
    pub truncate: Option<f64>,
    /// report adiabatic populations alongside the diabatic ones
    pub adiabatic: bool,
    pub init: Option<InitSpec>,
    pub eigen: Option<EigenSpec>,
    pub propa: PropaSpec,
    pub time: Option<TimeGrid>,
    pub pulses: Vec<Pulse>,
    pub save: SaveSpec,
    pub stem: String,
    pub plot: Option<PlotSpec>,
    pub sweep: Option<SweepSpec>,
    /// resolved configuration with all defaults, as TOML
    pub echo: String,
    /// configuration as read, before resolution
    pub source: Table,
    /// directory that relative file names are resolved against
    pub base_dir: PathBuf,
}

/// Reads and validates a configuration file. The default file stem is the
/// name of the configuration file.
pub fn parse_config(path: &Path) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("qdynkit").to_string();
    parse_str(&text, &base, &stem)
}

pub fn parse_str(text: &str, base_dir: &Path, default_stem: &str) -> Result<RunSpec> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        let at = match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}")
            }
            None => "file".to_string(),
        };
        Error::config(at, msg)
    })?;
    from_table(table, base_dir, default_stem)
}

pub fn from_table(table: Table, base_dir: &Path, default_stem: &str) -> Result<RunSpec> {
    let mut root = Reader::new("", &table);

    let mut space = root.table("space")?.ok_or_else(|| {
        Error::config("space.dof", "missing required section: the grids, one [[space.dof]] table per degree of freedom")
    })?;
    let mut dof_readers = space.tables("dof")?.ok_or_else(|| {
        Error::config("space.dof", "missing required section: the grids, one [[space.dof]] table per degree of freedom")
    })?;
    let mut dofs = Vec::with_capacity(dof_readers.len());
    for r in dof_readers.iter_mut() {
        dofs.push(read_grid(r)?);
    }
    space.put_tables("dof", dof_readers)?;
    root.put_table("space", space)?;
    let grid = ProductGrid::new(dofs).map_err(within("space.dof"))?;

    let mut hamilt = root.table("hamilt")?.ok_or_else(|| Error::config("hamilt", "missing required section"))?;
    let n_eqs = hamilt.count_or("n_eqs", 1)?;
    if n_eqs == 0 {
        return Err(Error::config("hamilt.n_eqs", "must be at least 1"));
    }
    let adiabatic = hamilt.choice("coupling", &["dia", "adi"], Some("dia"))? == 1;
    let pot = read_matrix(&mut hamilt, "pot", n_eqs, grid.ndim(), base_dir)?;
    if pot.is_empty() {
        return Err(Error::config("hamilt.pot", "missing required section: at least one potential element"));
    }
    let dip = read_matrix(&mut hamilt, "dip", n_eqs, grid.ndim(), base_dir)?;
    let nip = match hamilt.table("nip")? {
        Some(mut r) => {
            let op = read_operator(&mut r, grid.ndim(), base_dir, None)?;
            hamilt.put_table("nip", r)?;
            Some(op)
        }
        None => None,
    };
    let truncate = match hamilt.table("truncate")? {
        Some(mut r) => {
            let de = r.req("delta_e", Unit::Energy)?;
            if !(de > 0.0) {
                return Err(r.err("delta_e", format!("must be positive, got {de}")));
            }
            hamilt.put_table("truncate", r)?;
            Some(de)
        }
        None => None,
    };
    root.put_table("hamilt", hamilt)?;

    let mut init = None;
    let mut eigen = None;
    let mut save = SaveSpec { export: false, dir: None, file: String::new() };
    let mut psi_table = root.table("psi")?;
    if let Some(psi) = psi_table.as_mut() {
        if let Some(mut r) = psi.table("init")? {
            init = Some(read_init(&mut r, &grid, n_eqs)?);
            psi.put_table("init", r)?;
        }
        if let Some(mut r) = psi.table("eigen")? {
            let stop = r.req_count("stop")?;
            let method = match r.choice("method", &["dense", "sparse"], Some("dense"))? {
                0 => EigenMethod::Dense,
                _ => EigenMethod::Sparse,
            };
            let threshold = r.num_or("threshold", Unit::Energy, 0.0)?;
            let dim_cap = r.count_or("dim_cap", DEFAULT_DIM_CAP)?;
            eigen = Some(EigenSpec { stop, options: EigenOptions { method, threshold, dim_cap } });
            psi.put_table("eigen", r)?;
        }
        if let Some(mut r) = psi.table("save")? {
            save.export = r.boolean("export", false)?;
            save.dir = r.string("dir")?.map(PathBuf::from);
            save.file = r.string("file")?.unwrap_or_default();
            psi.put_table("save", r)?;
        }
    }

    let mut out = root.table("output")?;
    let stem = match out.as_mut() {
        Some(r) => r.string("stem")?.unwrap_or_else(|| default_stem.to_string()),
        None => default_stem.to_string(),
    };
    if stem.is_empty() || stem.contains(['/', '\\']) {
        return Err(Error::config("output.stem", format!("`{stem}` is not a plain file name")));
    }
    match out {
        Some(mut r) => {
            r.put("stem", Value::String(stem.clone()));
            root.put_table("output", r)?;
        }
        None => {
            let mut t = Table::new();
            t.insert("stem".into(), Value::String(stem.clone()));
            root.put("output", Value::Table(t));
        }
    }
    if save.file.is_empty() {
        save.file = stem.clone();
    }
    if let Some(mut psi) = psi_table {
        if let Some(Value::Table(s)) = psi.echo.get_mut("save") {
            s.insert("file".into(), Value::String(save.file.clone()));
        }
        root.put_table("psi", psi)?;
    }

    let mut propa = PropaSpec {
        handle: None,
        precision: 1e-8,
        order: SplitOrder::Strang,
        tolerance: 1e-10,
        states: 1,
    };
    let mut time = None;
    let mut pulses = Vec::new();
    if let Some(mut t) = root.table("time")? {
        if let Some(mut r) = t.table("propa")? {
            propa = read_propa(&mut r)?;
            t.put_table("propa", r)?;
        }
        let sub_n = match t.table("sub")? {
            Some(mut r) => {
                let n = r.count_or("n", 1)?;
                t.put_table("sub", r)?;
                n
            }
            None => 1,
        };
        if let Some(mut r) = t.table("main")? {
            let delta = r.req("delta", Unit::Time)?;
            let stop = r.req_count("stop")?;
            t.put_table("main", r)?;
            time = Some(TimeGrid::new(delta, stop, sub_n)?);
        } else if t.has("sub") {
            return Err(Error::config("time.main", "time.sub given without time.main"));
        }
        if let Some(mut rs) = t.tables("efield")? {
            for r in rs.iter_mut() {
                pulses.push(read_pulse(r, base_dir)?);
            }
            t.put_tables("efield", rs)?;
        }
        root.put_table("time", t)?;
    }
    if !pulses.is_empty() && dip.is_empty() {
        return Err(Error::config("time.efield", "a field needs a dipole: add [hamilt.dip.i.j]"));
    }

    let plot = match root.table("plot")? {
        Some(mut r) => {
            let kind = match r.choice("kind", &PLOT_KINDS, None)? {
                0 => PlotKind::Curve,
                1 => PlotKind::Contour,
                2 => PlotKind::Wigner,
                3 => PlotKind::Flux,
                _ => PlotKind::Reduced,
            };
            let representation = match r.choice("representation", &["dvr", "fbr"], Some("dvr"))? {
                0 => Representation::Dvr,
                _ => Representation::Fbr,
            };
            let every = r.count_or("every", 1)?;
            if every == 0 {
                return Err(r.err("every", "must be at least 1"));
            }
            let png = r.boolean("png", true)?;
            root.put_table("plot", r)?;
            Some(PlotSpec { kind, representation, every, png })
        }
        None => None,
    };

    let sweep = match root.table("sweep")? {
        Some(mut r) => {
            let key = r.string("key")?.ok_or_else(|| r.missing("key"))?;
            let values = match r.get("values") {
                Some(Value::Array(a)) => a.clone(),
                Some(other) => return Err(r.err("values", format!("expected an array, found {}", type_name(other)))),
                None => return Err(r.missing("values")),
            };
            if values.is_empty() {
                return Err(r.err("values", "needs at least one value"));
            }
            r.put("values", Value::Array(values.clone()));
            let output = r.string("output")?.unwrap_or_else(|| "total".into());
            r.put("output", Value::String(output.clone()));
            let run = match r.choice("run", &["bound", "propa", "relax"], Some("propa"))? {
                0 => Mode::Bound,
                1 => Mode::Propa,
                _ => Mode::Relax,
            };
            root.put_table("sweep", r)?;
            Some(SweepSpec { key, values, output, run })
        }
        None => None,
    };

    let echo = toml::to_string(&root.finish()?).map_err(|e| Error::config("file", e.to_string()))?;
    Ok(RunSpec {
        grid,
        n_eqs,
        pot,
        dip,
        nip,
        truncate,
        adiabatic,
        init,
        eigen,
        propa,
        time,
        pulses,
        save,
        stem,
        plot,
        sweep,
        echo,
        source: table,
        base_dir: base_dir.to_path_buf(),
    })
}

fn read_grid(r: &mut Reader) -> Result<Grid1D> {
    let kind = r.choice("kind", &["fft", "hermite", "legendre"], None)?;
    let mass = r.req("mass", Unit::None)?;
    let n = r.req_count("n_pts")?;
    let prefix = r.path.clone();
    match kind {
        0 => {
            let lo = r.req("x_min", Unit::None)?;
            let hi = r.req("x_max", Unit::None)?;
            Grid1D::fft(n, lo, hi, mass)
        }
        1 => {
            let omega = r.req("omega", Unit::Energy)?;
            let r_e = r.num_or("r_e", Unit::None, 0.0)?;
            Grid1D::hermite(n, mass, omega, r_e)
        }
        _ => {
            let radius = r.req("r_e", Unit::None)?;
            let m = r.count_or("m_0", 0)?;
            let m = u32::try_from(m).map_err(|_| r.err("m_0", "too large"))?;
            Grid1D::legendre(n, mass, radius, m)
        }
    }
    .map_err(within(&prefix))
}

const MODELS: [&str; 6] = ["morse", "mecke", "power", "taylor", "tabulated", "jahn_teller"];

fn read_operator(r: &mut Reader, ndim: usize, base_dir: &Path, element: Option<(usize, usize)>) -> Result<OperatorSpec> {
    let prefix = r.path.clone();
    let which = r.choice("model", &MODELS, None)?;
    let dof = r.index_or("dof", 1)?;
    let model = match which {
        0 => Model::Morse(
            MorseParams::new(r.req("d_e", Unit::Energy)?, r.req("r_e", Unit::None)?, r.req("alf", Unit::None)?)
                .map_err(within(&prefix))?,
        ),
        1 => Model::Mecke(MeckeParams::new(r.req("q_0", Unit::None)?, r.req("r_0", Unit::None)?).map_err(within(&prefix))?),
        2 => Model::Power(
            PowerNipParams::new(
                r.req("exp", Unit::None)?,
                r.req("min", Unit::None)?,
                r.req("max", Unit::None)?,
                r.num_or("strength", Unit::Energy, 1.0)?,
            )
            .map_err(within(&prefix))?,
        ),
        3 => {
            let coeffs = r.nums("coeffs", Unit::None)?.ok_or_else(|| r.missing("coeffs"))?;
            let center = r.num_or("center", Unit::None, 0.0)?;
            Model::Taylor(TaylorSeries { coeffs, center })
        }
        4 => {
            let file = r.string("file")?.ok_or_else(|| r.missing("file"))?;
            let path = base_dir.join(&file);
            r.put("file", Value::String(path.display().to_string()));
            Model::Tabulated(Spline::from_file(&path)?)
        }
        _ => {
            let params = JahnTellerParams { kappa: r.req("kappa", Unit::None)?, lam: r.req("lam", Unit::None)? };
            let (row, col) = element.ok_or_else(|| r.err("model", "jahn_teller is a channel-matrix model"))?;
            if row > 1 || col > 1 {
                return Err(r.err("model", "jahn_teller has two channels"));
            }
            Model::JahnTeller { params, row, col }
        }
    };
    let needed = if matches!(model, Model::JahnTeller { .. }) { dof + 2 } else { dof + 1 };
    if needed > ndim {
        return Err(r.err("dof", format!("model `{}` needs dof {needed} but there are {ndim}", MODELS[which])));
    }
    Ok(OperatorSpec::on_dof(model, dof))
}

/// `[what.i.j]` tables with one-based channel indices.
fn read_matrix(parent: &mut Reader, what: &str, n_eqs: usize, ndim: usize, base_dir: &Path) -> Result<Vec<ChannelTerm>> {
    let mut rows = match parent.table(what)? {
        Some(r) => r,
        None => return Ok(Vec::new()),
    };
    let mut terms = Vec::new();
    let mut echo_rows = Table::new();
    for i in rows.keys() {
        let row = parse_index(&rows, &i, n_eqs)?;
        let mut cols = rows.table(&i)?.expect("key listed");
        let mut echo_cols = Table::new();
        for j in cols.keys() {
            let col = parse_index(&cols, &j, n_eqs)?;
            let mut r = cols.table(&j)?.expect("key listed");
            let op = read_operator(&mut r, ndim, base_dir, Some((row, col)))?;
            terms.push(ChannelTerm { row, col, op });
            echo_cols.insert(j.clone(), Value::Table(r.finish()?));
        }
        cols.finish()?;
        echo_rows.insert(i.clone(), Value::Table(echo_cols));
    }
    rows.finish()?;
    parent.put(what, Value::Table(echo_rows));
    Ok(terms)
}

fn parse_index(r: &Reader, key: &str, n_eqs: usize) -> Result<usize> {
    match key.parse::<usize>() {
        Ok(k) if (1..=n_eqs).contains(&k) => Ok(k - 1),
        Ok(k) => Err(r.err(key, format!("channel {k} outside 1..={n_eqs} (hamilt.n_eqs)"))),
        Err(_) => Err(r.err(key, "expected a one-based channel index")),
    }
}

fn read_init(r: &mut Reader, grid: &ProductGrid, n_eqs: usize) -> Result<InitSpec> {
    let channel = r.index_or("channel", 1)?;
    if channel >= n_eqs {
        return Err(r.err("channel", format!("channel {} exceeds hamilt.n_eqs = {n_eqs}", channel + 1)));
    }
    let adiabatic = r.boolean("adiabatic", false)?;
    let mut rs = r.tables("dof")?.ok_or_else(|| r.missing("dof"))?;
    if rs.len() != grid.ndim() {
        return Err(r.err("dof", format!("{} entries for {} grid dof(s)", rs.len(), grid.ndim())));
    }
    let mut dofs = Vec::with_capacity(rs.len());
    for d in rs.iter_mut() {
        dofs.push(match d.choice("model", &["gauss", "morse"], None)? {
            0 => {
                let width = d.req("width", Unit::None)?;
                if !(width > 0.0) {
                    return Err(d.err("width", format!("must be positive, got {width}")));
                }
                InitDof::Gauss { pos_0: d.req("pos_0", Unit::None)?, width, mom_0: d.num_or("mom_0", Unit::None, 0.0)? }
            }
            _ => InitDof::Morse {
                d_e: d.req("d_e", Unit::Energy)?,
                r_e: d.req("r_e", Unit::None)?,
                alf: d.req("alf", Unit::None)?,
                n: d.count_or("n", 0)?,
            },
        });
    }
    r.put_tables("dof", rs)?;
    Ok(InitSpec { dofs, channel, adiabatic })
}

fn read_propa(r: &mut Reader) -> Result<PropaSpec> {
    let handle = match r.has("handle") {
        true => Some(match r.choice("handle", &HANDLES, None)? {
            0 => Handle::ChebyReal,
            1 => Handle::ChebyImag,
            2 => Handle::Splitting,
            _ => Handle::Sod,
        }),
        false => None,
    };
    let precision = r.num_or("precision", Unit::None, 1e-8)?;
    if !(precision > 0.0 && precision < 1.0) {
        return Err(r.err("precision", format!("must lie in (0, 1), got {precision}")));
    }
    let order = r.count_or("order", 3)?;
    let order = SplitOrder::from_config(order as u32)?;
    let tolerance = r.num_or("tolerance", Unit::None, 1e-10)?;
    if !(tolerance > 0.0) {
        return Err(r.err("tolerance", format!("must be positive, got {tolerance}")));
    }
    let states = r.count_or("states", 1)?;
    if states == 0 {
        return Err(r.err("states", "must be at least 1"));
    }
    Ok(PropaSpec { handle, precision, order, tolerance, states })
}

fn read_pulse(r: &mut Reader, base_dir: &Path) -> Result<Pulse> {
    let prefix = r.path.clone();
    let shape = r.choice("shape", &["sin^2", "gauss", "rect", "tabulated"], None)?;
    let envelope = match shape {
        0 => Envelope::Sin2,
        1 => Envelope::Gauss,
        2 => Envelope::Rect,
        _ => {
            let file = r.string("file")?.ok_or_else(|| r.missing("file"))?;
            let path = base_dir.join(&file);
            r.put("file", Value::String(path.display().to_string()));
            Envelope::Tabulated(Spline::from_file(&path)?)
        }
    };
    let fwhm = match shape {
        3 => r.num_or("fwhm", Unit::Time, 0.0)?,
        _ => r.req("fwhm", Unit::Time)?,
    };
    let p = Pulse {
        envelope,
        delay: r.req("delay", Unit::Time)?,
        fwhm,
        ampli: r.req("ampli", Unit::Field)?,
        frequ: r.req("frequ", Unit::Energy)?,
        chirp: r.num_or("chirp", Unit::None, 0.0)?,
        chirp2: r.num_or("chirp2", Unit::None, 0.0)?,
        phase: r.num_or("phase", Unit::None, 0.0)?,
    };
    p.validate().map_err(|e| match e {
        Error::Config { field, message } => Error::Config {
            field: field.replace("time.efield", &prefix),
            message,
        },
        other => other,
    })?;
    Ok(p)
}

/// Replaces the value at a dotted key path (`time.efield.1.ampli`; array
/// indices are one-based). The parent must exist; the final key may not.
pub fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let err = |m: &str| Error::config("sweep.key", format!("`{key}`: {m}"));
    let (last, parents) = parts.split_last().ok_or_else(|| err("empty key"))?;
    let mut cur: &mut Value = table
        .get_mut(parents.first().copied().unwrap_or(last))
        .ok_or_else(|| err("no such section"))?;
    if parents.is_empty() {
        *cur = value;
        return Ok(());
    }
    for p in &parents[1..] {
        cur = step_into(cur, p).ok_or_else(|| err(&format!("no entry `{p}`")))?;
    }
    match cur {
        Value::Table(t) => {
            t.insert(last.to_string(), value);
            Ok(())
        }
        Value::Array(a) => {
            let i: usize = last.parse().map_err(|_| err("array index expected"))?;
            let slot = i.checked_sub(1).and_then(|i| a.get_mut(i)).ok_or_else(|| err("array index out of range"))?;
            *slot = value;
            Ok(())
        }
        _ => Err(err("parent is not a table")),
    }
}

fn step_into<'v>(v: &'v mut Value, key: &str) -> Option<&'v mut Value> {
    match v {
        Value::Table(t) => t.get_mut(key),
        Value::Array(a) => key.parse::<usize>().ok()?.checked_sub(1).and_then(move |i| a.get_mut(i)),
        _ => None,
    }
}
