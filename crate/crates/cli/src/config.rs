//! Run configuration: TOML sections with defaults, flag overrides, and
//! validation of everything the core library does not check itself.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use basketnet::community::{CalibrationBaseline, DEFAULT_NMI_FLOOR};
use basketnet::measures::MeasureChoice;
use basketnet::null_models::NullModelKind;
use serde::{Deserialize, Serialize};

use crate::{Cli, Command};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub null_model: NullModelSection,
    pub measure: MeasureSection,
    pub baseline: BaselineSection,
    pub detector: DetectorSection,
    pub calibration: CalibrationSection,
    pub io: IoSection,
    pub simulate: SimulateSection,
    /// Partners listed per query product in the ranking tables.
    pub top_k: usize,
    /// Worker-thread cap; absent means one worker per core.
    pub threads: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            null_model: NullModelSection::default(),
            measure: MeasureSection::default(),
            baseline: BaselineSection::default(),
            detector: DetectorSection::default(),
            calibration: CalibrationSection::default(),
            io: IoSection::default(),
            simulate: SimulateSection::default(),
            top_k: 3,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NullModelSection {
    pub kind: NullModelKind,
    pub alpha_m: f64,
    pub alpha_l: f64,
}

impl Default for NullModelSection {
    fn default() -> Self {
        NullModelSection {
            kind: NullModelKind::ErVariant,
            alpha_m: 0.05,
            alpha_l: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSection {
    pub measure: MeasureChoice,
    pub q_c: f64,
    pub q_s: f64,
}

impl Default for MeasureSection {
    fn default() -> Self {
        MeasureSection {
            measure: MeasureChoice::Original,
            q_c: 0.0,
            q_s: 0.7,
        }
    }
}

/// Reference point for the calibration sweeps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub alpha: f64,
    pub q_c: f64,
    pub q_s: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let b = CalibrationBaseline::default();
        BaselineSection {
            alpha: b.alpha,
            q_c: b.q_c,
            q_s: b.q_s,
        }
    }
}

impl BaselineSection {
    pub fn to_core(self) -> CalibrationBaseline {
        CalibrationBaseline {
            alpha: self.alpha,
            q_c: self.q_c,
            q_s: self.q_s,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub seed: u64,
    pub n_trials: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            seed: 0,
            n_trials: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub alpha_m: Vec<f64>,
    pub alpha_l: Vec<f64>,
    pub q_c: Vec<f64>,
    pub q_s: Vec<f64>,
    pub nmi_floor: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let alphas = vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2];
        CalibrationSection {
            alpha_m: alphas.clone(),
            alpha_l: alphas,
            q_c: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            q_s: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            nmi_floor: DEFAULT_NMI_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    /// Input transaction CSV (`transaction_id, date, product_id, quantity`).
    pub transactions: Option<PathBuf>,
    /// Directory all run artifacts are written into.
    pub out_dir: Option<PathBuf>,
    /// Ingredient-to-compound CSV for flavour statistics.
    pub flavour: Option<PathBuf>,
    /// Recipe list (`cuisine<TAB>ingredient;ingredient;...`).
    pub recipes: Option<PathBuf>,
    /// Product-to-ingredient match CSV.
    pub matches: Option<PathBuf>,
    /// Product category hierarchy CSV (four levels).
    pub hierarchy: Option<PathBuf>,
    /// Date splitting the records for the robustness check.
    pub split_date: Option<String>,
    /// Correlate over all pairs instead of positively scored pairs only.
    pub all_pairs: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n_transactions: usize,
    /// World seed; `simulate` refuses to run without one.
    pub seed: Option<u64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            n_transactions: 1000,
            seed: None,
        }
    }
}

fn parse_null_model(s: &str) -> Result<NullModelKind> {
    match s {
        "er-variant" => Ok(NullModelKind::ErVariant),
        "bicm-poisson" => Ok(NullModelKind::BicmPoisson),
        "bicm-chernoff" => Ok(NullModelKind::BicmChernoff),
        other => bail!(
            "unknown null model '{other}' (expected er-variant, bicm-poisson, or bicm-chernoff)"
        ),
    }
}

fn parse_measure(s: &str) -> Result<MeasureChoice> {
    match s {
        "original" => Ok(MeasureChoice::Original),
        "randomised-config" => Ok(MeasureChoice::RandomisedConfig),
        other => bail!("unknown measure '{other}' (expected original or randomised-config)"),
    }
}

/// Load the TOML config, or defaults when none is given.
pub fn load(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

impl Config {
    /// Apply command-line overrides; flags always win over the file.
    pub fn apply_flags(&mut self, cli: &Cli) -> Result<()> {
        if let Some(kind) = cli.null_model.as_deref() {
            self.null_model.kind = parse_null_model(kind)?;
        }
        if let Some(measure) = cli.measure.as_deref() {
            self.measure.measure = parse_measure(measure)?;
        }
        if let Some(a) = cli.alpha_m {
            self.null_model.alpha_m = a;
        }
        if let Some(a) = cli.alpha_l {
            self.null_model.alpha_l = a;
        }
        if let Some(q) = cli.qc {
            self.measure.q_c = q;
        }
        if let Some(q) = cli.qs {
            self.measure.q_s = q;
        }
        if let Some(t) = cli.threads {
            self.threads = Some(t);
        }
        if let Some(out) = &cli.out {
            self.io.out_dir = Some(out.clone());
        }
        if let Some(seed) = cli.seed {
            if cli.command == Command::Simulate {
                self.simulate.seed = Some(seed);
            } else {
                self.detector.seed = seed;
            }
        }
        Ok(())
    }

    /// Checks the core library does not perform at construction time.
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            bail!("top_k must be at least 1");
        }
        if !(self.calibration.nmi_floor > 0.0 && self.calibration.nmi_floor < 1.0) {
            bail!(
                "calibration nmi_floor {} out of range (0, 1)",
                self.calibration.nmi_floor
            );
        }
        if self.threads == Some(0) {
            bail!("--threads must be at least 1");
        }
        if self.simulate.n_transactions == 0 {
            bail!("simulate n_transactions must be at least 1");
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.io
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("basketnet-out"))
    }
}
