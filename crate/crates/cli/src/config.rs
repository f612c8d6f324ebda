//! Run configuration: command-line flags plus an optional flat key-value
//! config file; flags override file entries.
//!
//! Config grammar, one entry per line:
//!
//! ```text
//! # comment
//! command   = analyze | taming-scan | nijenhuis | reznikov-check |
//!             sphere-regularity | mechanism-demo
//! metric    = <catalog name>
//! metric-file = <path to an expression table>
//! grid      = 3                 # points per axis of the region grid
//! center    = 0,0,0,0
//! half      = 0.5,0.5,0.5,0.5
//! samples   = 20                # sample count for pointwise commands
//! sphere-n  = 24                # collocation grid size
//! t-values  = 0,1e-3,1e-2
//! gap-factor = 1e-5
//! seed      = 7
//! format    = json | markdown
//! out       = report.json
//! ```
//!
//! A metric expression table holds the ten packed components `g11..g44`
//! (row-then-column upper triangle), plus `orientation = 1 | -1` and
//! `domain = box <half> | ball <radius>`:
//!
//! ```text
//! g11 = 4/(1+x1^2+x2^2+x3^2+x4^2)^2
//! g12 = 0
//! ...
//! g44 = 4/(1+x1^2+x2^2+x3^2+x4^2)^2
//! orientation = 1
//! domain = ball 1.5
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use twistorlab_core::chart::{Domain, MetricChart, Orientation};
use twistorlab_core::expr::parse_expr;
use twistorlab_core::jet::{sym_index, NSYM};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Analyze,
    TamingScan,
    Nijenhuis,
    ReznikovCheck,
    SphereRegularity,
    MechanismDemo,
}

impl Command {
    pub fn parse(name: &str) -> Result<Command, String> {
        Ok(match name {
            "analyze" => Command::Analyze,
            "taming-scan" => Command::TamingScan,
            "nijenhuis" => Command::Nijenhuis,
            "reznikov-check" => Command::ReznikovCheck,
            "sphere-regularity" => Command::SphereRegularity,
            "mechanism-demo" => Command::MechanismDemo,
            other => return Err(format!("unknown command '{other}'")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::TamingScan => "taming-scan",
            Command::Nijenhuis => "nijenhuis",
            Command::ReznikovCheck => "reznikov-check",
            Command::SphereRegularity => "sphere-regularity",
            Command::MechanismDemo => "mechanism-demo",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Markdown,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub metric: Option<String>,
    pub metric_file: Option<PathBuf>,
    pub grid_n: usize,
    pub center: [f64; 4],
    pub half: [f64; 4],
    pub samples: usize,
    pub sphere_n: usize,
    pub t_values: Vec<f64>,
    pub gap_factor: f64,
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Analyze,
            metric: None,
            metric_file: None,
            grid_n: 3,
            center: [0.0; 4],
            half: [0.25; 4],
            samples: 12,
            sphere_n: 24,
            t_values: vec![0.0, 1e-3, 1e-2],
            gap_factor: 1e-5,
            seed: 7,
            format: Format::Json,
            out: None,
        }
    }
}

fn parse_quad(text: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected four comma-separated numbers, got '{text}'"));
    }
    let mut out = [0.0; 4];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse::<f64>().map_err(|_| format!("bad number '{p}'"))?;
    }
    Ok(out)
}

fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| format!("bad number '{p}'")))
        .collect()
}

impl RunConfig {
    /// Apply one key-value entry (config file or flag spelling).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "command" => self.command = Command::parse(value)?,
            "metric" => self.metric = Some(value.to_string()),
            "metric-file" => self.metric_file = Some(PathBuf::from(value)),
            "grid" => self.grid_n = value.parse().map_err(|_| format!("bad grid '{value}'"))?,
            "center" => self.center = parse_quad(value)?,
            "half" => self.half = parse_quad(value)?,
            "samples" => self.samples = value.parse().map_err(|_| format!("bad samples '{value}'"))?,
            "sphere-n" => self.sphere_n = value.parse().map_err(|_| format!("bad sphere-n '{value}'"))?,
            "t-values" => self.t_values = parse_list(value)?,
            "gap-factor" => {
                self.gap_factor = value.parse().map_err(|_| format!("bad gap-factor '{value}'"))?
            }
            "seed" => self.seed = value.parse().map_err(|_| format!("bad seed '{value}'"))?,
            "format" => {
                self.format = match value {
                    "json" => Format::Json,
                    "markdown" | "md" => Format::Markdown,
                    other => return Err(format!("unknown format '{other}'")),
                }
            }
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(format!("unknown configuration key '{other}'")),
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("{}:{}: expected 'key = value'", path.display(), lineno + 1));
            };
            self.apply(key.trim(), value.trim())
                .map_err(|e| format!("{}:{}: {e}", path.display(), lineno + 1))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.grid_n == 0 || self.grid_n > 12 {
            return Err("grid must be between 1 and 12 points per axis".into());
        }
        if self.sphere_n < 16 || self.sphere_n > 64 {
            return Err("sphere-n must be between 16 and 64".into());
        }
        if self.gap_factor <= 0.0 || self.samples == 0 {
            return Err("tolerances and sample counts must be positive".into());
        }
        if self.half.iter().any(|h| *h <= 0.0) {
            return Err("region half-widths must be positive".into());
        }
        Ok(())
    }

    /// Resolve the metric: a catalog name or an expression-table file.
    pub fn resolve_metric(&self) -> Result<MetricChart, String> {
        if let Some(path) = &self.metric_file {
            return load_metric_file(path);
        }
        let name = self.metric.as_deref().unwrap_or("flat");
        twistorlab_core::catalog(name).map_err(|e| e.to_string())
    }

    /// Echo the resolved configuration into the report.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("command".into(), self.command.name().to_string());
        if let Some(m) = &self.metric {
            map.insert("metric".into(), m.clone());
        }
        if let Some(f) = &self.metric_file {
            map.insert("metric-file".into(), f.display().to_string());
        }
        map.insert("grid".into(), self.grid_n.to_string());
        map.insert("center".into(), format!("{:?}", self.center));
        map.insert("half".into(), format!("{:?}", self.half));
        map.insert("samples".into(), self.samples.to_string());
        map.insert("sphere-n".into(), self.sphere_n.to_string());
        map.insert("t-values".into(), format!("{:?}", self.t_values));
        map.insert("gap-factor".into(), format!("{:e}", self.gap_factor));
        map.insert("seed".into(), self.seed.to_string());
        map
    }
}

fn load_metric_file(path: &Path) -> Result<MetricChart, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read metric file {}: {e}", path.display()))?;
    let mut exprs: [Option<twistorlab_core::ExprAst>; NSYM] = Default::default();
    let mut orientation = Orientation::Standard;
    let mut domain = Domain::Ball { radius: 0.9 };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("{}:{}: expected 'key = value'", path.display(), lineno + 1));
        };
        let (key, value) = (key.trim(), value.trim());
        if let Some(rest) = key.strip_prefix('g') {
            let bytes = rest.as_bytes();
            if bytes.len() == 2 && bytes.iter().all(|b| (b'1'..=b'4').contains(b)) {
                let i = (bytes[0] - b'1') as usize;
                let j = (bytes[1] - b'1') as usize;
                let ast = parse_expr(value)
                    .map_err(|e| format!("{}:{}: {e}", path.display(), lineno + 1))?;
                exprs[sym_index(i, j)] = Some(ast);
                continue;
            }
        }
        match key {
            "orientation" => {
                orientation = match value {
                    "1" | "+1" => Orientation::Standard,
                    "-1" => Orientation::Reversed,
                    other => return Err(format!("bad orientation '{other}'")),
                };
            }
            "domain" => {
                let mut parts = value.split_whitespace();
                let kind = parts.next().unwrap_or("");
                let size: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| format!("bad domain '{value}'"))?;
                domain = match kind {
                    "ball" => Domain::Ball { radius: size },
                    "box" => Domain::Box { half: size },
                    other => return Err(format!("unknown domain kind '{other}'")),
                };
            }
            other => return Err(format!("unknown metric-file key '{other}'")),
        }
    }
    let mut table = Vec::with_capacity(NSYM);
    for (k, e) in exprs.into_iter().enumerate() {
        match e {
            Some(e) => table.push(e),
            None => return Err(format!("metric file is missing component #{k} (g11..g44)")),
        }
    }
    let components: [twistorlab_core::ExprAst; NSYM] =
        table.try_into().expect("length checked above");
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "expression-metric".into());
    Ok(MetricChart::from_expressions(&name, components, orientation, domain))
}
