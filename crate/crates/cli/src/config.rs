//! Run configuration: flat `section.key = value` lines with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use raman_core::PumpShape;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl ConfigError {
    fn at(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn missing(key: &str, why: &str) -> Self {
        Self {
            line: None,
            key: Some(key.to_string()),
            message: format!("missing required key ({why})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subcommand {
    Stokes,
    Readout,
    Chain,
    Stats,
    Sweep,
    Calibrate,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Stokes => "stokes",
            Subcommand::Readout => "readout",
            Subcommand::Chain => "chain",
            Subcommand::Stats => "stats",
            Subcommand::Sweep => "sweep",
            Subcommand::Calibrate => "calibrate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    StokesG0,
    StokesDeltaBeta,
    ReadoutG0,
    ReadoutDeltaBeta,
}

impl SweepParameter {
    pub fn key(self) -> &'static str {
        match self {
            SweepParameter::StokesG0 => "stokes.g0",
            SweepParameter::StokesDeltaBeta => "stokes.delta_beta",
            SweepParameter::ReadoutG0 => "readout.g0_prime",
            SweepParameter::ReadoutDeltaBeta => "readout.delta_beta_prime",
        }
    }

    /// CSV column name for the swept value.
    pub fn column(self) -> &'static str {
        self.key().split('.').nth(1).unwrap_or("value")
    }

    pub fn is_readout(self) -> bool {
        matches!(
            self,
            SweepParameter::ReadoutG0 | SweepParameter::ReadoutDeltaBeta
        )
    }

    fn parse(s: &str) -> Option<Self> {
        [
            SweepParameter::StokesG0,
            SweepParameter::StokesDeltaBeta,
            SweepParameter::ReadoutG0,
            SweepParameter::ReadoutDeltaBeta,
        ]
        .into_iter()
        .find(|p| p.key() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridBlock {
    pub length: f64,
    pub nz: usize,
    pub nt: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StokesBlock {
    pub g0: Option<f64>,
    pub tau_p: f64,
    pub delta_beta: f64,
    pub shape: PumpShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutBlock {
    pub g0_prime: Option<f64>,
    pub tau_p_prime: f64,
    pub delta_beta_prime: f64,
    pub shape: PumpShape,
    pub delta_k: f64,
    /// 1-based Stokes mode that is stored and read.
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepBlock {
    pub parameter: Option<SweepParameter>,
    pub range: Option<(f64, f64)>,
    pub count: Option<usize>,
}

impl SweepBlock {
    /// Evenly spaced values including both ends.
    pub fn values(&self) -> Vec<f64> {
        match (self.range, self.count) {
            (Some((a, b)), Some(n)) => (0..n)
                .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsBlock {
    pub n_max: Option<u64>,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateBlock {
    pub target: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub csv: bool,
    pub json: bool,
    /// How many leading modes get their mode functions written.
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridBlock,
    pub stokes: StokesBlock,
    pub readout: ReadoutBlock,
    pub sweep: SweepBlock,
    pub stats: StatsBlock,
    pub calibrate: CalibrateBlock,
    pub output: OutputBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridBlock {
                length: 75.0,
                nz: 200,
                nt: 200,
                margin: 3.0,
            },
            stokes: StokesBlock {
                g0: None,
                tau_p: 200.0,
                delta_beta: 0.0,
                shape: PumpShape::Gaussian,
            },
            readout: ReadoutBlock {
                g0_prime: None,
                tau_p_prime: 200.0,
                delta_beta_prime: 0.0,
                shape: PumpShape::Gaussian,
                delta_k: 0.0,
                target: 1,
            },
            sweep: SweepBlock {
                parameter: None,
                range: None,
                count: None,
            },
            stats: StatsBlock {
                n_max: None,
                resolution: 2000,
            },
            calibrate: CalibrateBlock {
                target: 1e6,
                rel_tol: 1e-3,
                max_steps: 40,
            },
            output: OutputBlock {
                directory: PathBuf::from("raman-modes-out"),
                csv: true,
                json: true,
                modes: 5,
            },
        }
    }
}

pub const KEYS: &[&str] = &[
    "grid.L",
    "grid.nz",
    "grid.nt",
    "grid.margin",
    "stokes.g0",
    "stokes.tau_p",
    "stokes.delta_beta",
    "stokes.shape",
    "readout.g0_prime",
    "readout.tau_p_prime",
    "readout.delta_beta_prime",
    "readout.shape",
    "readout.delta_k",
    "readout.target",
    "sweep.parameter",
    "sweep.range",
    "sweep.count",
    "stats.n_max",
    "stats.resolution",
    "calibrate.target",
    "calibrate.rel_tol",
    "calibrate.max_steps",
    "output.directory",
    "output.formats",
    "output.modes",
];

fn number(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v
        .parse()
        .map_err(|_| ConfigError::at(line, key, format!("expected a number, got '{v}'")))?;
    if !x.is_finite() {
        return Err(ConfigError::at(
            line,
            key,
            format!("value must be finite, got '{v}'"),
        ));
    }
    Ok(x)
}

fn positive(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = number(line, key, v)?;
    if x <= 0.0 {
        return Err(ConfigError::at(
            line,
            key,
            format!("must be positive, got {v}"),
        ));
    }
    Ok(x)
}

fn count(line: usize, key: &str, v: &str, min: u64) -> Result<u64, ConfigError> {
    let n: u64 = v.parse().map_err(|_| {
        ConfigError::at(
            line,
            key,
            format!("expected a non-negative integer, got '{v}'"),
        )
    })?;
    if n < min {
        return Err(ConfigError::at(
            line,
            key,
            format!("must be at least {min}, got {n}"),
        ));
    }
    Ok(n)
}

fn shape(line: usize, key: &str, v: &str) -> Result<PumpShape, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::at(line, key, format!("expected gaussian or square, got '{v}'")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line),
                    key: None,
                    message: format!("expected 'section.key = value', got '{body}'"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::at(line, key, "unknown key"));
            }
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(ConfigError::at(
                    line,
                    key,
                    format!("already set on line {first}"),
                ));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line, key, "empty value"));
            }
            cfg.set(line, key, value)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "grid.L" => self.grid.length = positive(line, key, v)?,
            "grid.nz" => self.grid.nz = count(line, key, v, 2)? as usize,
            "grid.nt" => self.grid.nt = count(line, key, v, 2)? as usize,
            "grid.margin" => {
                let m = number(line, key, v)?;
                if m < 2.0 {
                    return Err(ConfigError::at(
                        line,
                        key,
                        format!("must be at least 2, got {v}"),
                    ));
                }
                self.grid.margin = m;
            }
            "stokes.g0" => self.stokes.g0 = Some(coupling(line, key, v)?),
            "stokes.tau_p" => self.stokes.tau_p = positive(line, key, v)?,
            "stokes.delta_beta" => self.stokes.delta_beta = number(line, key, v)?,
            "stokes.shape" => self.stokes.shape = shape(line, key, v)?,
            "readout.g0_prime" => self.readout.g0_prime = Some(coupling(line, key, v)?),
            "readout.tau_p_prime" => self.readout.tau_p_prime = positive(line, key, v)?,
            "readout.delta_beta_prime" => self.readout.delta_beta_prime = number(line, key, v)?,
            "readout.shape" => self.readout.shape = shape(line, key, v)?,
            "readout.delta_k" => self.readout.delta_k = number(line, key, v)?,
            "readout.target" => self.readout.target = count(line, key, v, 1)? as usize,
            "sweep.parameter" => {
                self.sweep.parameter = Some(SweepParameter::parse(v).ok_or_else(|| {
                    ConfigError::at(
                        line,
                        key,
                        format!(
                            "'{v}' cannot be swept (stokes.g0, stokes.delta_beta, \
                             readout.g0_prime or readout.delta_beta_prime)"
                        ),
                    )
                })?)
            }
            "sweep.range" => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                let [a, b] = parts[..] else {
                    return Err(ConfigError::at(
                        line,
                        key,
                        format!("expected 'start, stop', got '{v}'"),
                    ));
                };
                let (a, b) = (number(line, key, a)?, number(line, key, b)?);
                if a == b {
                    return Err(ConfigError::at(line, key, "start and stop must differ"));
                }
                self.sweep.range = Some((a, b));
            }
            "sweep.count" => self.sweep.count = Some(count(line, key, v, 2)? as usize),
            "stats.n_max" => self.stats.n_max = Some(count(line, key, v, 1)?),
            "stats.resolution" => self.stats.resolution = count(line, key, v, 2)? as usize,
            "calibrate.target" => self.calibrate.target = positive(line, key, v)?,
            "calibrate.rel_tol" => self.calibrate.rel_tol = positive(line, key, v)?,
            "calibrate.max_steps" => self.calibrate.max_steps = count(line, key, v, 1)? as usize,
            "output.directory" => self.output.directory = PathBuf::from(v),
            "output.formats" => {
                let (mut csv, mut json) = (false, false);
                for f in v.split(',').map(str::trim) {
                    match f {
                        "csv" => csv = true,
                        "json" => json = true,
                        other => {
                            return Err(ConfigError::at(
                                line,
                                key,
                                format!("unknown format '{other}' (csv, json)"),
                            ))
                        }
                    }
                }
                self.output.csv = csv;
                self.output.json = json;
            }
            "output.modes" => self.output.modes = count(line, key, v, 0)? as usize,
            _ => unreachable!("key list and setter disagree on {key}"),
        }
        Ok(())
    }

    /// Checks that the keys a subcommand cannot default are present.
    pub fn require(&self, cmd: Subcommand) -> Result<(), ConfigError> {
        let need_stokes = |why: &str| match self.stokes.g0 {
            Some(_) => Ok(()),
            None => Err(ConfigError::missing("stokes.g0", why)),
        };
        let need_readout = |why: &str| match self.readout.g0_prime {
            Some(_) => Ok(()),
            None => Err(ConfigError::missing("readout.g0_prime", why)),
        };
        match cmd {
            Subcommand::Stokes | Subcommand::Stats => need_stokes(cmd.name()),
            Subcommand::Readout => need_readout("readout"),
            Subcommand::Chain => need_stokes("chain").and(need_readout("chain")),
            Subcommand::Calibrate => Ok(()),
            Subcommand::Sweep => {
                let Some(p) = self.sweep.parameter else {
                    return Err(ConfigError::missing("sweep.parameter", "sweep"));
                };
                if self.sweep.range.is_none() {
                    return Err(ConfigError::missing("sweep.range", "sweep"));
                }
                if self.sweep.count.is_none() {
                    return Err(ConfigError::missing("sweep.count", "sweep"));
                }
                if p != SweepParameter::StokesG0 {
                    need_stokes("sweep")?;
                }
                if p.is_readout() && p != SweepParameter::ReadoutG0 {
                    need_readout("sweep")?;
                }
                if p == SweepParameter::StokesG0 {
                    let (a, b) = self.sweep.range.unwrap_or((0.0, 0.0));
                    if a < 0.0 || b < 0.0 {
                        return Err(ConfigError {
                            line: None,
                            key: Some("sweep.range".into()),
                            message: "couplings must be non-negative".into(),
                        });
                    }
                }
                if p == SweepParameter::ReadoutG0 {
                    let (a, b) = self.sweep.range.unwrap_or((0.0, 0.0));
                    if a < 0.0 || b < 0.0 {
                        return Err(ConfigError {
                            line: None,
                            key: Some("sweep.range".into()),
                            message: "couplings must be non-negative".into(),
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// Every key with its resolved value, in the input syntax, so a run can
    /// be repeated from its provenance alone.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.resolved() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Resolved values keyed as in the input; unset optional keys are left out.
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        let f = |x: f64| format!("{x:?}");
        let shape = |s: PumpShape| s.to_string();
        let mut v: Vec<(&'static str, String)> = vec![
            ("grid.L", f(self.grid.length)),
            ("grid.nz", self.grid.nz.to_string()),
            ("grid.nt", self.grid.nt.to_string()),
            ("grid.margin", f(self.grid.margin)),
        ];
        if let Some(g) = self.stokes.g0 {
            v.push(("stokes.g0", f(g)));
        }
        v.extend([
            ("stokes.tau_p", f(self.stokes.tau_p)),
            ("stokes.delta_beta", f(self.stokes.delta_beta)),
            ("stokes.shape", shape(self.stokes.shape)),
        ]);
        if let Some(g) = self.readout.g0_prime {
            v.push(("readout.g0_prime", f(g)));
        }
        v.extend([
            ("readout.tau_p_prime", f(self.readout.tau_p_prime)),
            ("readout.delta_beta_prime", f(self.readout.delta_beta_prime)),
            ("readout.shape", shape(self.readout.shape)),
            ("readout.delta_k", f(self.readout.delta_k)),
            ("readout.target", self.readout.target.to_string()),
        ]);
        if let Some(p) = self.sweep.parameter {
            v.push(("sweep.parameter", p.key().to_string()));
        }
        if let Some((a, b)) = self.sweep.range {
            v.push(("sweep.range", format!("{}, {}", f(a), f(b))));
        }
        if let Some(n) = self.sweep.count {
            v.push(("sweep.count", n.to_string()));
        }
        if let Some(n) = self.stats.n_max {
            v.push(("stats.n_max", n.to_string()));
        }
        let formats: Vec<&str> = [(self.output.csv, "csv"), (self.output.json, "json")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, name)| *name)
            .collect();
        v.extend([
            ("stats.resolution", self.stats.resolution.to_string()),
            ("calibrate.target", f(self.calibrate.target)),
            ("calibrate.rel_tol", f(self.calibrate.rel_tol)),
            ("calibrate.max_steps", self.calibrate.max_steps.to_string()),
            (
                "output.directory",
                self.output.directory.display().to_string(),
            ),
            ("output.formats", formats.join(", ")),
            ("output.modes", self.output.modes.to_string()),
        ]);
        v
    }
}

fn coupling(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let g = number(line, key, v)?;
    if g < 0.0 {
        return Err(ConfigError::at(
            line,
            key,
            format!("coupling must be non-negative, got {v}"),
        ));
    }
    Ok(g)
}
