use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::density_solver::{FluxForm, SolverConfig, TimeScheme};
use crate::mass_solver::MassSolverConfig;
use crate::model::{ModelParams, PotentialSpec, Radial};
use crate::stationary_solver::StationaryConfig;
use crate::ModelError;

/// What `run` executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Density,
    Mass,
    Both,
    Stationary,
    Sweep,
    Convergence,
}

impl Mode {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "density" => Mode::Density,
            "mass" => Mode::Mass,
            "both" => Mode::Both,
            "stationary" => Mode::Stationary,
            "sweep" => Mode::Sweep,
            "convergence" => Mode::Convergence,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Density => "density",
            Mode::Mass => "mass",
            Mode::Both => "both",
            Mode::Stationary => "stationary",
            Mode::Sweep => "sweep",
            Mode::Convergence => "convergence",
        }
    }
}

/// Initial density, normalized to `mass0` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    Uniform,
    /// exp(-|x|²/(2σ²))
    Gaussian {
        sigma: f64,
    },
    /// Indicator of |x| < r0.
    Step {
        r0: f64,
    },
    /// Two columns (r, ρ), linearly interpolated at cell centers; or one column of cell values.
    File {
        path: PathBuf,
    },
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Uniform => write!(f, "uniform"),
            InitialCondition::Gaussian { sigma } => write!(f, "gaussian{{{sigma}}}"),
            InitialCondition::Step { r0 } => write!(f, "step{{{r0}}}"),
            InitialCondition::File { path } => write!(f, "file{{{}}}", path.display()),
        }
    }
}

fn parse_initial(s: &str) -> Result<InitialCondition, (usize, String)> {
    let s = s.trim();
    if s == "uniform" {
        return Ok(InitialCondition::Uniform);
    }
    let open = s
        .find('{')
        .ok_or((1, format!("unknown initial condition `{s}`")))?;
    if !s.ends_with('}') {
        return Err((s.len(), "expected `}` at the end".into()));
    }
    let tag = &s[..open];
    let arg = s[open + 1..s.len() - 1].trim();
    let num = |what: &str| -> Result<f64, (usize, String)> {
        match arg.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
            Ok(_) => Err((open + 2, format!("{what} must be positive"))),
            Err(_) => Err((open + 2, format!("expected a number, found `{arg}`"))),
        }
    };
    match tag {
        "gaussian" => Ok(InitialCondition::Gaussian {
            sigma: num("sigma")?,
        }),
        "step" => Ok(InitialCondition::Step { r0: num("r0")? }),
        "file" if !arg.is_empty() => Ok(InitialCondition::File {
            path: PathBuf::from(arg),
        }),
        "file" => Err((open + 2, "empty path".into())),
        other => Err((1, format!("unknown initial condition `{other}`"))),
    }
}

/// Where results go and how often states are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    /// Subdirectory of the output root.
    pub dir: String,
    pub record_every: f64,
}

/// Settings of the checks attached to a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub viscosity_samples: usize,
    pub seed: u64,
    /// Relative slack in the energy monotonicity check.
    pub energy_slack: f64,
}

/// One swept key and its values, in config syntax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub n_cells: usize,
    pub potential: PotentialSpec,
    pub v_source: String,
    pub w_source: String,
    pub initial: InitialCondition,
    pub solver: SolverConfig,
    pub mass_solver: MassSolverConfig,
    pub stationary: StationaryConfig,
    pub output: OutputConfig,
    pub diagnostics: DiagnosticsConfig,
    pub mode: Mode,
    /// Mode run at every point of a sweep.
    pub sweep_mode: Mode,
    pub sweep: Vec<SweepAxis>,
    pub levels: usize,
    entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Canonical `key = value` text; parsing it gives back the same config.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Reparses with some keys replaced.
    pub fn with_overrides(
        &self,
        overrides: &[(&str, &str)],
    ) -> Result<ExperimentConfig, ConfigErrors> {
        let mut entries = self.entries.clone();
        for (k, v) in overrides {
            entries.insert(k.to_string(), v.to_string());
        }
        let mut text = String::new();
        for (k, v) in &entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        parse_config(&text)
    }

    /// The value of `key` as written, if it was set.
    pub fn entry(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn problem(&self) -> Result<crate::model::Problem, ModelError> {
        crate::model::Problem::new(self.params, self.potential.clone(), self.n_cells)
    }
}

/// One problem in the config text; `line` and `column` are 1-based, 0 when not tied to a line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(
                f,
                "line {}, column {}: {}",
                self.line, self.column, self.message
            )
        }
    }
}

/// Every error found in one parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

struct Entry<'a> {
    value: &'a str,
    line: usize,
    column: usize,
}

const KEYS: &[&str] = &[
    "m",
    "d",
    "R",
    "mass0",
    "T",
    "n_cells",
    "V",
    "W",
    "initial",
    "mode",
    "sweep.mode",
    "levels",
    "output.dir",
    "output.record_every",
    "solver.dt",
    "solver.scheme",
    "solver.flux",
    "solver.cfl_safety",
    "solver.picard_tol",
    "solver.picard_max_iter",
    "solver.rho_floor",
    "solver.k_reg",
    "solver.newton_tol",
    "solver.newton_max_iter",
    "solver.max_retries",
    "solver.track_dissipation",
    "mass.dt",
    "mass.scheme",
    "mass.flux",
    "mass.cfl_safety",
    "mass.slope_floor",
    "mass.hold_boundary",
    "mass.dirac_threshold",
    "mass.stationarity_tol",
    "mass.k_reg",
    "mass.picard_tol",
    "mass.picard_max_iter",
    "stationary.tol",
    "stationary.damping",
    "stationary.max_iter",
    "diagnostics.viscosity_samples",
    "diagnostics.seed",
    "diagnostics.energy_slack",
];

const REQUIRED: &[&str] = &["m", "d", "R", "V", "W", "initial"];

struct Builder<'a> {
    entries: BTreeMap<&'a str, Entry<'a>>,
    errors: Vec<ConfigError>,
}

impl<'a> Builder<'a> {
    fn err(&mut self, key: &str, offset: usize, message: impl Into<String>) {
        let (line, column) = self
            .entries
            .get(key)
            .map_or((0, 0), |e| (e.line, e.column + offset));
        self.errors.push(ConfigError {
            line,
            column,
            message: message.into(),
        });
    }

    fn get<T>(&mut self, key: &str, default: T, parse: impl Fn(&str) -> Result<T, String>) -> T {
        let Some(e) = self.entries.get(key) else {
            return default;
        };
        match parse(e.value) {
            Ok(v) => v,
            Err(msg) => {
                self.err(key, 0, format!("`{key}`: {msg}"));
                default
            }
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        self.get(key, default, |s| {
            s.parse::<f64>()
                .map_err(|_| format!("expected a number, found `{s}`"))
        })
    }

    fn usize(&mut self, key: &str, default: usize) -> usize {
        self.get(key, default, |s| {
            s.parse::<usize>()
                .map_err(|_| format!("expected a nonnegative integer, found `{s}`"))
        })
    }

    fn bool(&mut self, key: &str, default: bool) -> bool {
        self.get(key, default, |s| match s {
            "true" | "yes" | "on" => Ok(true),
            "false" | "no" | "off" => Ok(false),
            _ => Err(format!("expected true or false, found `{s}`")),
        })
    }

    fn k_reg(&mut self, key: &str) -> Option<f64> {
        self.get(key, None, |s| match s {
            "none" => Ok(None),
            _ => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| format!("expected `none` or a number, found `{s}`")),
        })
    }

    fn scheme(&mut self, key: &str, default: TimeScheme) -> TimeScheme {
        self.get(key, default, |s| match s {
            "explicit" => Ok(TimeScheme::Explicit),
            "implicit" => Ok(TimeScheme::Implicit),
            _ => Err(format!("expected explicit or implicit, found `{s}`")),
        })
    }

    fn flux(&mut self, key: &str) -> FluxForm {
        self.get(key, FluxForm::Upwind, |s| match s {
            "upwind" => Ok(FluxForm::Upwind),
            "entropy" => Ok(FluxForm::Entropy),
            _ => Err(format!("expected upwind or entropy, found `{s}`")),
        })
    }

    fn mode(&mut self, key: &str, default: Mode) -> Mode {
        self.get(key, default, |s| {
            Mode::parse(s).ok_or_else(|| format!("unknown mode `{s}`"))
        })
    }

    fn radial(&mut self, key: &str) -> Radial {
        let Some(e) = self.entries.get(key) else {
            return Radial::Zero;
        };
        match e.value.parse::<Radial>() {
            Ok(r) => r,
            Err(ModelError::Expression { column, reason }) => {
                self.err(
                    key,
                    column - 1,
                    format!("`{key}`: malformed expression: {reason}"),
                );
                Radial::Zero
            }
            Err(other) => {
                self.err(key, 0, format!("`{key}`: {other}"));
                Radial::Zero
            }
        }
    }

    fn solver_error(&mut self, prefix: &str, err: crate::SolverError) {
        match err {
            crate::SolverError::Model(ModelError::InvalidParameter { name, reason }) => {
                let key = format!("{prefix}.{name}");
                self.err(&key, 0, format!("`{key}`: {reason}"));
            }
            other => self.errors.push(ConfigError {
                line: 0,
                column: 0,
                message: other.to_string(),
            }),
        }
    }
}

/// Parses the line-oriented `key = value` format. `#` starts a comment; blank lines are ignored.
/// Keys under `sweep.` other than `sweep.mode` take `|`-separated lists of values for that key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut b = Builder {
        entries: BTreeMap::new(),
        errors: Vec::new(),
    };
    let mut sweep_raw: Vec<(&str, Entry)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let Some(eq) = body.find('=') else {
            let column = body.len() - body.trim_start().len() + 1;
            b.errors.push(ConfigError {
                line,
                column,
                message: "expected `key = value`".into(),
            });
            continue;
        };
        let key = body[..eq].trim();
        let rest = &body[eq + 1..];
        let value = rest.trim();
        let column = eq + 2 + (rest.len() - rest.trim_start().len());
        let key_col = body.len() - body.trim_start().len() + 1;
        if key.is_empty() {
            b.errors.push(ConfigError {
                line,
                column: key_col,
                message: "missing key".into(),
            });
            continue;
        }
        let entry = Entry {
            value,
            line,
            column,
        };
        let is_axis = key.starts_with("sweep.") && key != "sweep.mode";
        if !is_axis && !KEYS.contains(&key) {
            b.errors.push(ConfigError {
                line,
                column: key_col,
                message: format!("unknown key `{key}`"),
            });
            continue;
        }
        let first = if is_axis {
            sweep_raw
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, e)| e.line)
        } else {
            b.entries.get(key).map(|e| e.line)
        };
        if let Some(first) = first {
            b.errors.push(ConfigError {
                line,
                column: key_col,
                message: format!("duplicate key `{key}` at lines {first} and {line}"),
            });
            continue;
        }
        if is_axis {
            sweep_raw.push((key, entry));
        } else {
            b.entries.insert(key, entry);
        }
    }
    for key in REQUIRED {
        if !b.entries.contains_key(key) {
            b.errors.push(ConfigError {
                line: 0,
                column: 0,
                message: format!("missing required key `{key}`"),
            });
        }
    }

    let m = b.f64("m", 0.5);
    let d = b.usize("d", 1);
    let radius = b.f64("R", 1.0);
    let mass0 = b.f64("mass0", 1.0);
    let horizon = b.f64("T", 1.0);
    let params = ModelParams {
        m,
        d,
        radius,
        mass0,
        horizon,
    };
    let base = ModelParams {
        m: 0.5,
        d: 1,
        radius: 1.0,
        mass0: 1.0,
        horizon: 1.0,
    };
    for probe in [
        ModelParams { m, ..base },
        ModelParams { d, ..base },
        ModelParams { radius, ..base },
        ModelParams { mass0, ..base },
        ModelParams { horizon, ..base },
    ] {
        if let Err(ModelError::InvalidParameter { name, reason }) = probe.validate() {
            b.err(name, 0, reason);
        }
    }
    let n_cells = b.usize("n_cells", 256);
    if n_cells < 4 {
        b.err("n_cells", 0, "need at least 4 cells");
    }
    let v = b.radial("V");
    let w = b.radial("W");
    let initial = match b.entries.get("initial") {
        Some(e) => match parse_initial(e.value) {
            Ok(ic) => ic,
            Err((col, msg)) => {
                b.err("initial", col - 1, format!("`initial`: {msg}"));
                InitialCondition::Uniform
            }
        },
        None => InitialCondition::Uniform,
    };
    if let InitialCondition::Step { r0 } = initial {
        if r0 > radius {
            b.err("initial", 0, "`initial`: step radius exceeds R");
        }
    }
    let mode = b.mode("mode", Mode::Both);
    let sweep_mode = b.mode("sweep.mode", Mode::Density);
    if matches!(sweep_mode, Mode::Sweep | Mode::Convergence) {
        b.err("sweep.mode", 0, "`sweep.mode` must be a single-run mode");
    }
    let levels = b.usize("levels", 3);
    if levels < 3 {
        b.err(
            "levels",
            0,
            "`levels`: a convergence study needs at least 3 levels",
        );
    }
    let output = OutputConfig {
        dir: b
            .entries
            .get("output.dir")
            .map_or_else(|| "run".to_string(), |e| e.value.to_string()),
        record_every: b.f64("output.record_every", horizon / 10.0),
    };
    if !(output.record_every > 0.0) {
        b.err(
            "output.record_every",
            0,
            "`output.record_every` must be positive",
        );
    }

    let sd = SolverConfig::default();
    let solver = SolverConfig {
        dt: b.f64("solver.dt", sd.dt),
        scheme: b.scheme("solver.scheme", sd.scheme),
        flux: b.flux("solver.flux"),
        cfl_safety: b.f64("solver.cfl_safety", sd.cfl_safety),
        picard_tol: b.f64("solver.picard_tol", sd.picard_tol),
        picard_max_iter: b.usize("solver.picard_max_iter", sd.picard_max_iter),
        rho_floor: b.f64("solver.rho_floor", sd.rho_floor),
        k_reg: b.k_reg("solver.k_reg"),
        newton_tol: b.f64("solver.newton_tol", sd.newton_tol),
        newton_max_iter: b.usize("solver.newton_max_iter", sd.newton_max_iter),
        max_retries: b.usize("solver.max_retries", sd.max_retries),
        track_dissipation: b.bool("solver.track_dissipation", sd.track_dissipation),
    };
    if let Err(e) = solver.validate() {
        b.solver_error("solver", e);
    }
    let md = MassSolverConfig::default();
    let mass_solver = MassSolverConfig {
        dt: b.f64("mass.dt", md.dt),
        scheme: b.scheme("mass.scheme", md.scheme),
        flux: b.flux("mass.flux"),
        cfl_safety: b.f64("mass.cfl_safety", md.cfl_safety),
        slope_floor: b.f64("mass.slope_floor", md.slope_floor),
        hold_boundary: b.bool("mass.hold_boundary", md.hold_boundary),
        dirac_threshold: b.f64("mass.dirac_threshold", md.dirac_threshold),
        stationarity_tol: b.f64("mass.stationarity_tol", md.stationarity_tol),
        k_reg: b.k_reg("mass.k_reg"),
        picard_tol: b.f64("mass.picard_tol", md.picard_tol),
        picard_max_iter: b.usize("mass.picard_max_iter", md.picard_max_iter),
    };
    if let Err(e) = mass_solver.validate() {
        b.solver_error("mass", e);
    }
    let st = StationaryConfig::default();
    let stationary = StationaryConfig {
        tol: b.f64("stationary.tol", st.tol),
        damping: b.f64("stationary.damping", st.damping),
        max_iter: b.usize("stationary.max_iter", st.max_iter),
    };
    if !(stationary.tol > 0.0) {
        b.err("stationary.tol", 0, "`stationary.tol` must be positive");
    }
    if !(stationary.damping > 0.0 && stationary.damping <= 1.0) {
        b.err(
            "stationary.damping",
            0,
            "`stationary.damping` must lie in (0, 1]",
        );
    }
    let diagnostics = DiagnosticsConfig {
        viscosity_samples: b.usize("diagnostics.viscosity_samples", 400),
        seed: b.get("diagnostics.seed", 0, |s| {
            s.parse::<u64>()
                .map_err(|_| format!("expected an integer, found `{s}`"))
        }),
        energy_slack: b.f64("diagnostics.energy_slack", 1e-8),
    };

    let mut sweep = Vec::new();
    for (key, e) in &sweep_raw {
        let target = &key["sweep.".len()..];
        let values: Vec<String> = e.value.split('|').map(|s| s.trim().to_string()).collect();
        if !KEYS.contains(&target) || matches!(target, "mode" | "sweep.mode" | "levels") {
            b.errors.push(ConfigError {
                line: e.line,
                column: 1,
                message: format!("cannot sweep over `{target}`"),
            });
        } else if values.iter().any(String::is_empty) {
            b.errors.push(ConfigError {
                line: e.line,
                column: e.column,
                message: format!("`{key}`: empty value in list"),
            });
        } else {
            sweep.push(SweepAxis {
                key: target.to_string(),
                values,
            });
        }
    }
    if mode == Mode::Sweep && sweep.is_empty() {
        b.errors.push(ConfigError {
            line: 0,
            column: 0,
            message: "mode = sweep needs at least one `sweep.<key>` list".into(),
        });
    }

    if !b.errors.is_empty() {
        b.errors.sort_by_key(|e| (e.line == 0, e.line, e.column));
        b.errors.dedup();
        return Err(ConfigErrors(b.errors));
    }
    let mut entries: BTreeMap<String, String> = b
        .entries
        .iter()
        .map(|(k, e)| (k.to_string(), e.value.to_string()))
        .collect();
    for (k, e) in &sweep_raw {
        entries.insert(k.to_string(), e.value.to_string());
    }
    Ok(ExperimentConfig {
        params,
        n_cells,
        v_source: v.to_string(),
        w_source: w.to_string(),
        potential: PotentialSpec::new(v, w),
        initial,
        solver,
        mass_solver,
        stationary,
        output,
        diagnostics,
        mode,
        sweep_mode,
        sweep,
        levels,
        entries,
    })
}
