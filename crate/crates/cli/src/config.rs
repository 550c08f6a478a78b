//! Experiment configuration: presets, the flat `key = value` config-file
//! format with one `[experiment.<id>]` section per study, and command-line
//! overrides.

use std::collections::BTreeMap;
use std::fmt;

use jfsce_core::estimators::Method;
use jfsce_core::signal::FrameConfig;

/// The studies the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    MseVsSnr,
    MseVsNe,
    TimeVsNe,
    MseVsSparsity,
    EqTaps,
    LoopbackIndex,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::MseVsSnr,
        ExperimentId::MseVsNe,
        ExperimentId::TimeVsNe,
        ExperimentId::MseVsSparsity,
        ExperimentId::EqTaps,
        ExperimentId::LoopbackIndex,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::MseVsSnr => "mse-vs-snr",
            ExperimentId::MseVsNe => "mse-vs-ne",
            ExperimentId::TimeVsNe => "time-vs-ne",
            ExperimentId::MseVsSparsity => "mse-vs-sparsity",
            ExperimentId::EqTaps => "eq-taps",
            ExperimentId::LoopbackIndex => "loopback-index",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|e| e.name() == name)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Problem scale: the full simulation dimensions or a desk-scale preset
/// that keeps the slow solvers affordable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Paper,
    Small,
}

impl Scale {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Scale::Paper),
            "small" => Some(Scale::Small),
            _ => None,
        }
    }
}

/// Fully resolved configuration for one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub scale: Scale,
    pub frame: FrameConfig,
    /// True frame boundary used for the synthetic studies.
    pub boundary: usize,
    pub methods: Vec<Method>,
    pub snr_grid_db: Vec<f64>,
    pub ne_grid: Vec<usize>,
    pub sparsity_grid: Vec<usize>,
    /// Sparsity budget handed to the solvers for fixed-channel studies.
    pub sparsity_budget: usize,
    pub trials: usize,
    pub base_seed: u64,
    /// Equalizer length and active-tap budget.
    pub eq_num_taps: usize,
    pub eq_budget: usize,
    /// Budget grid for the eq-taps study.
    pub budget_grid: Vec<usize>,
    /// Manual channel indices for the loopback-index study.
    pub loopback_indices: Vec<usize>,
    /// SNR for the loopback studies (dB).
    pub loopback_snr_db: f64,
    /// Zero out wall-time columns for byte-identical reruns.
    pub zero_time: bool,
    /// Optional IQ dump path prefix for loopback runs.
    pub iq_dump: Option<String>,
}

impl ExperimentConfig {
    /// Documented defaults per experiment and scale. The loopback studies
    /// always use the testbed frame (M=100, L=5, NE=43, P=10).
    pub fn defaults(id: ExperimentId, scale: Scale) -> Self {
        let (frame, boundary) = match id {
            ExperimentId::EqTaps | ExperimentId::LoopbackIndex => {
                (FrameConfig::new(100, 5, 43, 10).unwrap(), 0)
            }
            _ => match scale {
                Scale::Paper => (FrameConfig::new(1000, 100, 148, 10).unwrap(), 500),
                Scale::Small => (FrameConfig::new(100, 20, 40, 10).unwrap(), 50),
            },
        };
        let methods = match id {
            ExperimentId::EqTaps => vec![Method::Omp],
            ExperimentId::LoopbackIndex => vec![
                Method::Ideal,
                Method::Omp,
                Method::Classical,
                Method::Conventional,
            ],
            ExperimentId::TimeVsNe => vec![
                Method::Classical,
                Method::Omp,
                Method::Cosamp,
                Method::ReweightedL1,
                Method::Sbl,
                Method::Emgmamp,
            ],
            _ => vec![
                Method::Ideal,
                Method::Conventional,
                Method::GenieConventional,
                Method::Classical,
                Method::Omp,
                Method::Cosamp,
                Method::ReweightedL1,
                Method::Sbl,
                Method::Emgmamp,
            ],
        };
        let snr_grid_db: Vec<f64> = match id {
            ExperimentId::MseVsSnr => (0..=15).map(|i| 2.0 * i as f64).collect(),
            _ => vec![20.0],
        };
        let combined = frame.combined_len();
        let ne_grid: Vec<usize> = match id {
            ExperimentId::MseVsNe => [0.05, 0.1, 0.135, 0.2, 0.4, 0.7, 1.0, 1.2]
                .iter()
                .map(|f| ((combined as f64 * f).round() as usize).max(4))
                .collect(),
            ExperimentId::TimeVsNe => [0.1, 0.2, 0.4, 0.8]
                .iter()
                .map(|f| (combined as f64 * f).round() as usize)
                .collect(),
            _ => vec![frame.num_equations],
        };
        let sparsity_grid = match id {
            ExperimentId::MseVsSparsity => match scale {
                Scale::Paper => vec![10, 20, 30, 40, 50, 60],
                Scale::Small => vec![4, 8, 12, 16, 20],
            },
            _ => Vec::new(),
        };
        let trials = match id {
            ExperimentId::TimeVsNe => 5,
            ExperimentId::EqTaps => 10,
            ExperimentId::LoopbackIndex => 20,
            _ => 200,
        };
        let mut budget_grid: Vec<usize> = (1..=20).collect();
        budget_grid.extend([25, 30, 40, 50, 75, 100, 150, 200]);
        Self {
            id,
            scale,
            frame,
            boundary,
            methods,
            snr_grid_db,
            ne_grid,
            sparsity_grid,
            sparsity_budget: 10,
            trials,
            base_seed: 1,
            // synthetic studies use a long dense equalizer (full budget via
            // the Toeplitz fast path); the loopback studies exercise the
            // sparse selection at the testbed's 200-tap length
            eq_num_taps: match id {
                ExperimentId::EqTaps | ExperimentId::LoopbackIndex => 200,
                _ => match scale {
                    Scale::Paper => 800,
                    Scale::Small => 160,
                },
            },
            eq_budget: match id {
                ExperimentId::LoopbackIndex => 11,
                ExperimentId::EqTaps => 200,
                _ => match scale {
                    Scale::Paper => 800,
                    Scale::Small => 160,
                },
            },
            budget_grid,
            loopback_indices: (1..=8).collect(),
            loopback_snr_db: 20.0,
            zero_time: false,
            iq_dump: None,
        }
    }

    /// One-paragraph description of the study and its resolved parameters,
    /// for `describe`.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let header = match self.id {
            ExperimentId::MseVsSnr => "equalized MSE versus SNR for every method",
            ExperimentId::MseVsNe => "equalized MSE versus the number of equations NE at fixed SNR",
            ExperimentId::TimeVsNe => "estimator wall time versus NE, with a log-log slope fit",
            ExperimentId::MseVsSparsity => {
                "equalized MSE versus channel sparsity k with random supports and amplitudes"
            }
            ExperimentId::EqTaps => "loopback equalized MSE versus the number of active equalizer taps",
            ExperimentId::LoopbackIndex => {
                "loopback equalized MSE versus the manual channel index i"
            }
        };
        s.push_str(&format!("{}: {header}\n", self.id));
        s.push_str(&format!(
            "  frame: M={} L={} NE={} (M+L={}, training {})\n",
            self.frame.data_len,
            self.frame.cir_memory,
            self.frame.num_equations,
            self.frame.combined_len(),
            self.frame.training_len()
        ));
        match self.id {
            ExperimentId::MseVsSnr => {
                s.push_str(&format!("  snr_db = {}\n", fmt_f64_grid(&self.snr_grid_db)))
            }
            ExperimentId::MseVsNe | ExperimentId::TimeVsNe => {
                s.push_str(&format!(
                    "  ne = {} at snr_db = {}\n",
                    fmt_usize_grid(&self.ne_grid),
                    fmt_f64_grid(&self.snr_grid_db)
                ));
            }
            ExperimentId::MseVsSparsity => {
                s.push_str(&format!(
                    "  sparsity = {} at NE={}, M+L={}, snr_db = {}\n",
                    fmt_usize_grid(&self.sparsity_grid),
                    self.frame.num_equations,
                    self.frame.combined_len(),
                    fmt_f64_grid(&self.snr_grid_db)
                ));
            }
            ExperimentId::EqTaps => {
                s.push_str(&format!(
                    "  budgets = {} (equalizer N = {}), loopback snr_db = {}\n",
                    fmt_usize_grid(&self.budget_grid),
                    self.eq_num_taps,
                    self.loopback_snr_db
                ));
            }
            ExperimentId::LoopbackIndex => {
                s.push_str(&format!(
                    "  indices = {} with {} active taps of {}, loopback snr_db = {}\n",
                    fmt_usize_grid(&self.loopback_indices),
                    self.eq_budget,
                    self.eq_num_taps,
                    self.loopback_snr_db
                ));
            }
        }
        s.push_str(&format!(
            "  methods = {}\n  trials = {}, seed = {}, boundary = {}\n",
            self.methods
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(","),
            self.trials,
            self.base_seed,
            self.boundary
        ));
        s
    }
}

fn fmt_f64_grid(g: &[f64]) -> String {
    g.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_usize_grid(g: &[usize]) -> String {
    g.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Parsed config file: global overrides plus one entry per experiment
/// section, in file order.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiments: Vec<ExperimentConfig>,
}

/// Overrides supplied on the command line; applied after file parsing.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub scale: Option<Scale>,
    pub no_timing: bool,
}

/// Parse the flat `key = value` format. Keys before the first section set
/// global defaults; each `[experiment.<id>]` section opens one study.
pub fn parse_config(text: &str, overrides: &CliOverrides) -> Result<RunConfig, String> {
    let mut globals: BTreeMap<String, String> = BTreeMap::new();
    let mut sections: Vec<(ExperimentId, BTreeMap<String, String>)> = Vec::new();
    let mut current: Option<usize> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(section) = line.strip_prefix('[') {
            let section = section
                .strip_suffix(']')
                .ok_or_else(|| format!("line {}: unterminated section header", lineno + 1))?;
            let id_name = section
                .strip_prefix("experiment.")
                .ok_or_else(|| format!("line {}: sections must be [experiment.<id>]", lineno + 1))?;
            let id = ExperimentId::parse(id_name).ok_or_else(|| {
                format!(
                    "line {}: unknown experiment '{id_name}' (valid: {})",
                    lineno + 1,
                    ExperimentId::ALL.map(|e| e.name()).join(", ")
                )
            })?;
            sections.push((id, BTreeMap::new()));
            current = Some(sections.len() - 1);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        let map = match current {
            Some(idx) => &mut sections[idx].1,
            None => &mut globals,
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }

    if sections.is_empty() {
        return Err("config defines no [experiment.<id>] sections".into());
    }

    let scale = match overrides.scale {
        Some(s) => s,
        None => match globals.get("scale") {
            Some(v) => Scale::parse(v).ok_or_else(|| format!("unknown scale '{v}'"))?,
            None => Scale::Paper,
        },
    };

    let mut experiments = Vec::new();
    for (id, section) in sections {
        let mut cfg = ExperimentConfig::defaults(id, scale);
        for (key, value) in globals.iter().chain(section.iter()) {
            apply_key(&mut cfg, key, value)?;
        }
        if let Some(seed) = overrides.seed {
            cfg.base_seed = seed;
        }
        if let Some(trials) = overrides.trials {
            cfg.trials = trials;
        }
        if let Some(methods) = &overrides.methods {
            cfg.methods = methods.clone();
        }
        if overrides.no_timing {
            cfg.zero_time = true;
        }
        validate(&cfg)?;
        experiments.push(cfg);
    }
    Ok(RunConfig { experiments })
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "scale" => {} // handled globally before defaults are materialized
        "seed" => cfg.base_seed = parse_num(key, value)?,
        "trials" => cfg.trials = parse_num(key, value)?,
        "methods" => cfg.methods = parse_methods(value)?,
        "snr_db" => cfg.snr_grid_db = parse_f64_grid(value).map_err(|e| format!("{key}: {e}"))?,
        "ne" => cfg.ne_grid = parse_usize_grid(value).map_err(|e| format!("{key}: {e}"))?,
        "sparsity" => {
            cfg.sparsity_grid = parse_usize_grid(value).map_err(|e| format!("{key}: {e}"))?
        }
        "sparsity_budget" => cfg.sparsity_budget = parse_num(key, value)?,
        "budgets" => cfg.budget_grid = parse_usize_grid(value).map_err(|e| format!("{key}: {e}"))?,
        "indices" => {
            cfg.loopback_indices = parse_usize_grid(value).map_err(|e| format!("{key}: {e}"))?
        }
        "boundary" => cfg.boundary = parse_num(key, value)?,
        "eq_taps" => cfg.eq_num_taps = parse_num(key, value)?,
        "eq_budget" => cfg.eq_budget = parse_num(key, value)?,
        "loopback_snr_db" => {
            cfg.loopback_snr_db = value
                .parse()
                .map_err(|_| format!("{key}: not a number: {value}"))?
        }
        "zero_time" => {
            cfg.zero_time = value
                .parse()
                .map_err(|_| format!("{key}: expected true/false, got {value}"))?
        }
        "iq_dump" => cfg.iq_dump = Some(value.to_string()),
        "m" | "l" | "ne_default" | "p" => {
            let mut m = cfg.frame.data_len;
            let mut l = cfg.frame.cir_memory;
            let mut ne = cfg.frame.num_equations;
            let mut p = cfg.frame.training_period;
            match key {
                "m" => m = parse_num(key, value)?,
                "l" => l = parse_num(key, value)?,
                "ne_default" => ne = parse_num(key, value)?,
                _ => p = parse_num(key, value)?,
            }
            cfg.frame = FrameConfig::new(m, l, ne, p).map_err(|e| e.to_string())?;
            // keep the default boundary meaningful when the frame shrinks;
            // an explicit `boundary` key still wins because sections apply
            // in file order after globals
            if cfg.boundary >= m {
                cfg.boundary = m / 2;
            }
        }
        _ => return Err(format!("unknown config key '{key}'")),
    }
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> Result<(), String> {
    if cfg.trials == 0 {
        return Err("trials must be >= 1".into());
    }
    if cfg.methods.is_empty() {
        return Err("method list is empty".into());
    }
    let grid_empty = match cfg.id {
        ExperimentId::MseVsSnr => cfg.snr_grid_db.is_empty(),
        ExperimentId::MseVsNe | ExperimentId::TimeVsNe => cfg.ne_grid.is_empty(),
        ExperimentId::MseVsSparsity => cfg.sparsity_grid.is_empty(),
        ExperimentId::EqTaps => cfg.budget_grid.is_empty(),
        ExperimentId::LoopbackIndex => cfg.loopback_indices.is_empty(),
    };
    if grid_empty {
        return Err(format!("{}: sweep grid is empty", cfg.id));
    }
    if cfg.boundary >= cfg.frame.data_len {
        return Err(format!(
            "boundary {} outside [0, {})",
            cfg.boundary, cfg.frame.data_len
        ));
    }
    if cfg.eq_budget == 0 || cfg.eq_budget > cfg.eq_num_taps {
        return Err(format!(
            "eq_budget must lie in [1, {}], got {}",
            cfg.eq_num_taps, cfg.eq_budget
        ));
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: not a valid number: {value}"))
}

pub fn parse_methods(value: &str) -> Result<Vec<Method>, String> {
    let mut out = Vec::new();
    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = Method::parse(name).ok_or_else(|| {
            format!(
                "unknown method '{name}' (valid: {})",
                Method::ALL.map(|m| m.name()).join(", ")
            )
        })?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err("method list is empty".into());
    }
    Ok(out)
}

/// Grids accept comma lists and `start:step:stop` ranges (inclusive).
fn parse_f64_grid(value: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((start, rest)) = part.split_once(':') {
            let (step, stop) = rest
                .split_once(':')
                .ok_or_else(|| format!("range must be start:step:stop, got {part}"))?;
            let (start, step, stop): (f64, f64, f64) = (
                start.trim().parse().map_err(|_| format!("bad number in {part}"))?,
                step.trim().parse().map_err(|_| format!("bad number in {part}"))?,
                stop.trim().parse().map_err(|_| format!("bad number in {part}"))?,
            );
            if step <= 0.0 {
                return Err(format!("range step must be positive in {part}"));
            }
            let mut v = start;
            while v <= stop + 1e-9 {
                out.push(v);
                v += step;
            }
        } else {
            out.push(part.parse().map_err(|_| format!("bad number: {part}"))?);
        }
    }
    Ok(out)
}

fn parse_usize_grid(value: &str) -> Result<Vec<usize>, String> {
    parse_f64_grid(value)?
        .into_iter()
        .map(|v| {
            if v < 0.0 || v.fract().abs() > 1e-9 {
                Err(format!("expected nonnegative integers, got {v}"))
            } else {
                Ok(v as usize)
            }
        })
        .collect()
}
