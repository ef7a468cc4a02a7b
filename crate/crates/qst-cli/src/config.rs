//! Experiment configuration: a flat key=value schema readable from a file
//! (with cosmetic `[section]` headers) and overridable by flags. Every run
//! echoes the fully resolved values to a JSON sidecar.

use std::collections::BTreeMap;
use std::path::PathBuf;

use qst_core::hamiltonian::GateMode;
use qst_core::measure::FidelityConvention;
use qst_core::protocols::NoiseKind;

use crate::units::PlanckConvention;
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Run,
    Optimize,
    Switch,
    Cycles,
    Disorder,
    Noise,
    Table1,
    Experimental,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Run => "run",
            Scenario::Optimize => "optimize",
            Scenario::Switch => "switch",
            Scenario::Cycles => "cycles",
            Scenario::Disorder => "disorder",
            Scenario::Noise => "noise",
            Scenario::Table1 => "table1",
            Scenario::Experimental => "experimental",
        }
    }
}

/// Fully resolved experiment description. String forms of every field make
/// up the documented schema; `to_key_values` and `from_key_values` round-trip
/// it exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub l: usize,
    pub n: usize,
    pub mode: GateMode,
    pub eps_sd: f64,
    pub eps_open: f64,
    pub eps_closed: f64,
    pub u: f64,
    pub v: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau_max: usize,
    pub tau_step: usize,
    pub occupancy: bool,
    pub negativity: bool,
    pub quad_theta: usize,
    pub quad_phi: usize,
    pub fidelity: FidelityConvention,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub convention: PlanckConvention,
    pub t_mev: f64,
    pub lambda: f64,
    pub n_real: usize,
    pub preserve_ms: bool,
    pub noise_kind: NoiseKind,
    pub noise_grid: Vec<f64>,
    pub tau_opt: f64,
    pub tau_sw_grid: Vec<f64>,
    pub cycles: usize,
    pub tau_sw_frac: f64,
    pub dwell: Option<f64>,
    pub window_frac: f64,
    pub budget: Option<usize>,
    pub threshold: f64,
    pub eps_sd_min: usize,
    pub eps_sd_max: usize,
    pub eps_open_min: usize,
    pub eps_open_max: usize,
}

/// Name of the environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "QST_OUT_DIR";

impl Default for ExperimentConfig {
    fn default() -> Self {
        let out_dir = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        ExperimentConfig {
            scenario: Scenario::Run,
            l: 3,
            n: 1,
            mode: GateMode::Open,
            eps_sd: 39.0,
            eps_open: 10.0,
            eps_closed: 20.0,
            u: 50.0,
            v: 1.0,
            alpha: 0.0,
            beta: 0.0,
            tau_max: 500,
            tau_step: 1,
            occupancy: false,
            negativity: false,
            quad_theta: 0,
            quad_phi: 0,
            fidelity: FidelityConvention::Squared,
            seed: 0,
            threads: 0,
            out_dir,
            convention: PlanckConvention::H,
            t_mev: 0.02,
            lambda: 0.0,
            n_real: 500,
            preserve_ms: true,
            noise_kind: NoiseKind::Thermal,
            noise_grid: vec![0.0, 0.13, 0.26],
            tau_opt: 64.0,
            tau_sw_grid: vec![0.0, 2.88, 5.76, 8.64, 11.52],
            cycles: 10,
            tau_sw_frac: 0.18,
            dwell: None,
            window_frac: 1.5,
            budget: None,
            threshold: 0.98,
            eps_sd_min: 0,
            eps_sd_max: 100,
            eps_open_min: 0,
            eps_open_max: 100,
        }
    }
}

/// Where a value came from, for error messages and the override record.
#[derive(Clone, Copy)]
enum Source {
    File(usize),
    Flag,
}

impl Source {
    fn describe(&self, key: &str) -> String {
        match self {
            Source::File(line) => format!("key `{key}` at line {line}"),
            Source::Flag => format!("flag --{}", key.replace('_', "-")),
        }
    }
}

fn bad(key: &str, src: Source, detail: impl std::fmt::Display) -> CliError {
    CliError::User(format!("invalid value for {}: {detail}", src.describe(key)))
}

fn num<T: std::str::FromStr>(key: &str, src: Source, raw: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| bad(key, src, format!("`{raw}` ({e})")))
}

fn boolean(key: &str, src: Source, raw: &str) -> CliResult<bool> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, src, format!("`{raw}` (expected true or false)"))),
    }
}

fn float_list(key: &str, src: Source, raw: &str) -> CliResult<Vec<f64>> {
    let vals: CliResult<Vec<f64>> = raw
        .split(',')
        .map(|piece| num::<f64>(key, src, piece.trim()))
        .collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(bad(key, src, "empty list"));
    }
    Ok(vals)
}

fn join_floats(vals: &[f64]) -> String {
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn apply(cfg: &mut ExperimentConfig, key: &str, raw: &str, src: Source) -> CliResult<()> {
    match key {
        "scenario" => {
            cfg.scenario = match raw {
                "run" => Scenario::Run,
                "optimize" => Scenario::Optimize,
                "switch" => Scenario::Switch,
                "cycles" => Scenario::Cycles,
                "disorder" => Scenario::Disorder,
                "noise" => Scenario::Noise,
                "table1" => Scenario::Table1,
                "experimental" => Scenario::Experimental,
                _ => {
                    return Err(bad(
                        key,
                        src,
                        format!(
                            "`{raw}` (expected run, optimize, switch, cycles, disorder, noise, \
                             table1, or experimental)"
                        ),
                    ))
                }
            }
        }
        "l" => cfg.l = num(key, src, raw)?,
        "n" => cfg.n = num(key, src, raw)?,
        "mode" => {
            cfg.mode = match raw {
                "open" => GateMode::Open,
                "closed" => GateMode::Closed,
                _ => return Err(bad(key, src, format!("`{raw}` (expected open or closed)"))),
            }
        }
        "eps_sd" => cfg.eps_sd = num(key, src, raw)?,
        "eps_open" => cfg.eps_open = num(key, src, raw)?,
        "eps_closed" => cfg.eps_closed = num(key, src, raw)?,
        "u" => cfg.u = num(key, src, raw)?,
        "v" => cfg.v = num(key, src, raw)?,
        "alpha" => cfg.alpha = num(key, src, raw)?,
        "beta" => cfg.beta = num(key, src, raw)?,
        "tau_max" => cfg.tau_max = num(key, src, raw)?,
        "tau_step" => cfg.tau_step = num(key, src, raw)?,
        "occupancy" => cfg.occupancy = boolean(key, src, raw)?,
        "negativity" => cfg.negativity = boolean(key, src, raw)?,
        "quad_theta" => cfg.quad_theta = num(key, src, raw)?,
        "quad_phi" => cfg.quad_phi = num(key, src, raw)?,
        "fidelity" => {
            cfg.fidelity = match raw {
                "squared" => FidelityConvention::Squared,
                "root" => FidelityConvention::Root,
                _ => return Err(bad(key, src, format!("`{raw}` (expected squared or root)"))),
            }
        }
        "seed" => cfg.seed = num(key, src, raw)?,
        "threads" => cfg.threads = num(key, src, raw)?,
        "out_dir" => cfg.out_dir = PathBuf::from(raw),
        "convention" => {
            cfg.convention = match raw {
                "h" => PlanckConvention::H,
                "hbar" => PlanckConvention::Hbar,
                _ => return Err(bad(key, src, format!("`{raw}` (expected h or hbar)"))),
            }
        }
        "t_mev" => cfg.t_mev = num(key, src, raw)?,
        "lambda" => cfg.lambda = num(key, src, raw)?,
        "n_real" => cfg.n_real = num(key, src, raw)?,
        "preserve_ms" => cfg.preserve_ms = boolean(key, src, raw)?,
        "noise_kind" => {
            cfg.noise_kind = match raw {
                "thermal" => NoiseKind::Thermal,
                "dephasing" => NoiseKind::Dephasing,
                "soc" => NoiseKind::SpinOrbit,
                _ => {
                    return Err(bad(
                        key,
                        src,
                        format!("`{raw}` (expected thermal, dephasing, or soc)"),
                    ))
                }
            }
        }
        "noise_grid" => cfg.noise_grid = float_list(key, src, raw)?,
        "tau_opt" => cfg.tau_opt = num(key, src, raw)?,
        "tau_sw_grid" => cfg.tau_sw_grid = float_list(key, src, raw)?,
        "cycles" => cfg.cycles = num(key, src, raw)?,
        "tau_sw_frac" => cfg.tau_sw_frac = num(key, src, raw)?,
        "dwell" => cfg.dwell = Some(num(key, src, raw)?),
        "window_frac" => cfg.window_frac = num(key, src, raw)?,
        "budget" => cfg.budget = Some(num(key, src, raw)?),
        "threshold" => cfg.threshold = num(key, src, raw)?,
        "eps_sd_min" => cfg.eps_sd_min = num(key, src, raw)?,
        "eps_sd_max" => cfg.eps_sd_max = num(key, src, raw)?,
        "eps_open_min" => cfg.eps_open_min = num(key, src, raw)?,
        "eps_open_max" => cfg.eps_open_max = num(key, src, raw)?,
        _ => {
            return Err(CliError::User(format!("unknown {}", src.describe(key))));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// Canonical string form of every field, in schema order. Optional
    /// fields (`dwell`, `budget`) are omitted when unset.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = vec![
            ("scenario".into(), self.scenario.label().into()),
            ("l".into(), self.l.to_string()),
            ("n".into(), self.n.to_string()),
            ("mode".into(), self.mode.label().into()),
            ("eps_sd".into(), self.eps_sd.to_string()),
            ("eps_open".into(), self.eps_open.to_string()),
            ("eps_closed".into(), self.eps_closed.to_string()),
            ("u".into(), self.u.to_string()),
            ("v".into(), self.v.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("beta".into(), self.beta.to_string()),
            ("tau_max".into(), self.tau_max.to_string()),
            ("tau_step".into(), self.tau_step.to_string()),
            ("occupancy".into(), self.occupancy.to_string()),
            ("negativity".into(), self.negativity.to_string()),
            ("quad_theta".into(), self.quad_theta.to_string()),
            ("quad_phi".into(), self.quad_phi.to_string()),
            (
                "fidelity".into(),
                match self.fidelity {
                    FidelityConvention::Squared => "squared".into(),
                    FidelityConvention::Root => "root".into(),
                },
            ),
            ("seed".into(), self.seed.to_string()),
            ("threads".into(), self.threads.to_string()),
            ("out_dir".into(), self.out_dir.display().to_string()),
            ("convention".into(), self.convention.label().into()),
            ("t_mev".into(), self.t_mev.to_string()),
            ("lambda".into(), self.lambda.to_string()),
            ("n_real".into(), self.n_real.to_string()),
            ("preserve_ms".into(), self.preserve_ms.to_string()),
            (
                "noise_kind".into(),
                match self.noise_kind {
                    NoiseKind::Thermal => "thermal".into(),
                    NoiseKind::Dephasing => "dephasing".into(),
                    NoiseKind::SpinOrbit => "soc".into(),
                },
            ),
            ("noise_grid".into(), join_floats(&self.noise_grid)),
            ("tau_opt".into(), self.tau_opt.to_string()),
            ("tau_sw_grid".into(), join_floats(&self.tau_sw_grid)),
            ("cycles".into(), self.cycles.to_string()),
            ("tau_sw_frac".into(), self.tau_sw_frac.to_string()),
            ("window_frac".into(), self.window_frac.to_string()),
            ("threshold".into(), self.threshold.to_string()),
            ("eps_sd_min".into(), self.eps_sd_min.to_string()),
            ("eps_sd_max".into(), self.eps_sd_max.to_string()),
            ("eps_open_min".into(), self.eps_open_min.to_string()),
            ("eps_open_max".into(), self.eps_open_max.to_string()),
        ];
        if let Some(d) = self.dwell {
            out.push(("dwell".into(), d.to_string()));
        }
        if let Some(b) = self.budget {
            out.push(("budget".into(), b.to_string()));
        }
        out
    }

    /// Rebuild a config from its canonical string form. Inverse of
    /// `to_key_values`, also usable as a schema re-validation pass.
    pub fn from_key_values<'a, I>(pairs: I) -> CliResult<ExperimentConfig>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut cfg = ExperimentConfig::default();
        for (key, value) in pairs {
            apply(&mut cfg, key, value, Source::Flag)?;
        }
        validate(&cfg)?;
        Ok(cfg)
    }
}

fn validate(cfg: &ExperimentConfig) -> CliResult<()> {
    let user = |m: String| Err(CliError::User(m));
    if cfg.l == 0 {
        return user("l must be at least 1".into());
    }
    for (name, v) in [
        ("eps_sd", cfg.eps_sd),
        ("eps_open", cfg.eps_open),
        ("eps_closed", cfg.eps_closed),
        ("lambda", cfg.lambda),
        ("tau_opt", cfg.tau_opt),
        ("tau_sw_frac", cfg.tau_sw_frac),
    ] {
        if !v.is_finite() || v < 0.0 {
            return user(format!("{name} must be finite and non-negative, got {v}"));
        }
    }
    for (name, v) in [("u", cfg.u), ("v", cfg.v), ("alpha", cfg.alpha), ("beta", cfg.beta)] {
        if !v.is_finite() {
            return user(format!("{name} must be finite, got {v}"));
        }
    }
    if !(cfg.t_mev > 0.0) || !cfg.t_mev.is_finite() {
        return user(format!("t_mev must be positive, got {}", cfg.t_mev));
    }
    if cfg.tau_step == 0 {
        return user("tau_step must be at least 1".into());
    }
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return user(format!("threshold must lie in [0,1], got {}", cfg.threshold));
    }
    if !(cfg.window_frac > 0.0) {
        return user(format!("window_frac must be positive, got {}", cfg.window_frac));
    }
    if let Some(d) = cfg.dwell {
        if !d.is_finite() || d < 0.0 {
            return user(format!("dwell must be finite and non-negative, got {d}"));
        }
    }
    if (cfg.quad_theta == 0) != (cfg.quad_phi == 0) {
        return user("quad_theta and quad_phi must be set together".into());
    }
    if cfg.eps_sd_min > cfg.eps_sd_max {
        return user(format!(
            "eps_sd_min {} exceeds eps_sd_max {}",
            cfg.eps_sd_min, cfg.eps_sd_max
        ));
    }
    if cfg.eps_open_min > cfg.eps_open_max {
        return user(format!(
            "eps_open_min {} exceeds eps_open_max {}",
            cfg.eps_open_min, cfg.eps_open_max
        ));
    }
    Ok(())
}

/// One file entry: key, raw value, 1-based line.
pub type FileEntry = (String, String, usize);

/// Parse the flat key=value format. `#` and `;` start comments, blank lines
/// and `[section]` headers carry no content, duplicate keys are rejected.
pub fn parse_file_text(text: &str) -> CliResult<Vec<FileEntry>> {
    let mut entries: Vec<FileEntry> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw_line.find(['#', ';']) {
            Some(cut) => &raw_line[..cut],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(CliError::User(format!(
                    "unterminated section header at line {lineno}: `{line}`"
                )));
            }
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(CliError::User(format!(
                "expected key=value at line {lineno}, got `{line}`"
            )));
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(CliError::User(format!("missing key before `=` at line {lineno}")));
        }
        if let Some(first) = seen.get(&key) {
            return Err(CliError::User(format!(
                "duplicate key `{key}` at lines {first} and {lineno}"
            )));
        }
        seen.insert(key.clone(), lineno);
        entries.push((key, value, lineno));
    }
    Ok(entries)
}

/// A key set from both the file and a flag; the flag value won.
#[derive(Clone, Debug)]
pub struct OverrideRecord {
    pub key: String,
    pub file_value: String,
    pub flag_value: String,
}

/// Provenance echoed to the sidecar next to the resolved values.
#[derive(Clone, Debug, Default)]
pub struct ResolveInfo {
    pub config_file: Option<String>,
    pub overrides: Vec<OverrideRecord>,
}

/// Defaults, then file entries, then flags; flags win on conflict and the
/// sidecar records both values.
pub fn resolve(
    file: Option<(String, Vec<FileEntry>)>,
    flags: Vec<(&'static str, String)>,
) -> CliResult<(ExperimentConfig, ResolveInfo)> {
    let mut cfg = ExperimentConfig::default();
    let mut info = ResolveInfo::default();
    let mut file_values: BTreeMap<String, String> = BTreeMap::new();
    if let Some((path, entries)) = file {
        info.config_file = Some(path);
        for (key, value, line) in entries {
            apply(&mut cfg, &key, &value, Source::File(line))?;
            file_values.insert(key, value);
        }
    }
    for (key, value) in flags {
        apply(&mut cfg, key, &value, Source::Flag)?;
        if let Some(file_value) = file_values.get(key) {
            info.overrides.push(OverrideRecord {
                key: key.to_string(),
                file_value: file_value.clone(),
                flag_value: value,
            });
        }
    }
    validate(&cfg)?;
    Ok((cfg, info))
}
