//! Run configuration (TOML). Every field has a default; the defaults are the
//! reference constants, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mrf_core::bloch::{IsochromatEnsemble, TissueParams, DEFAULT_NV, DEFAULT_TE_MS, FAST_NV};
use mrf_core::design::{DesignConfig, DesignMode, REFERENCE_TISSUES, REFERENCE_WEIGHTS};
use mrf_core::dictionary::{GridSpec, Segment};
use mrf_core::mc::snr_to_sigma;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub bloch: BlochSection,
    pub design: DesignSection,
    pub dictionary: DictionarySection,
    pub mc: McSection,
    pub sweep: SweepSection,
    pub io: IoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            bloch: BlochSection::default(),
            design: DesignSection::default(),
            dictionary: DictionarySection::default(),
            mc: McSection::default(),
            sweep: SweepSection::default(),
            io: IoSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaRule {
    /// `beta_r = -pi + 2 pi (r - 1/2) / Nv`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlochSection {
    pub te_ms: f64,
    pub nv: usize,
    pub beta_rule: BetaRule,
}

impl Default for BlochSection {
    fn default() -> Self {
        Self {
            te_ms: DEFAULT_TE_MS,
            nv: DEFAULT_NV,
            beta_rule: BetaRule::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Box constraints only.
    Opt1,
    /// Box constraints plus the flip-angle variation bound.
    Opt2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub n: usize,
    pub mode: Mode,
    /// `[t1_ms, t2_ms, m0]` per representative tissue.
    pub tissues: Vec<[f64; 3]>,
    pub weights: [f64; 3],
    pub tr_min_ms: f64,
    pub tr_max_ms: f64,
    pub alpha_min_deg: f64,
    pub alpha_max_first_deg: f64,
    pub alpha_max_rest_deg: f64,
    /// Used in `opt2` mode only.
    pub delta_alpha_max_deg: f64,
    pub nv_design: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            n: 400,
            mode: Mode::Opt2,
            tissues: REFERENCE_TISSUES.iter().map(|t| t.to_array()).collect(),
            weights: REFERENCE_WEIGHTS,
            tr_min_ms: 11.0,
            tr_max_ms: 15.0,
            alpha_min_deg: 10.0,
            alpha_max_first_deg: 180.0,
            alpha_max_rest_deg: 60.0,
            delta_alpha_max_deg: 1.0,
            nv_design: FAST_NV,
            tol: 1e-4,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySection {
    /// `[start_ms, end_ms, step_ms]` runs.
    pub t1_segments: Vec<[f64; 3]>,
    pub t2_segments: Vec<[f64; 3]>,
}

impl Default for DictionarySection {
    fn default() -> Self {
        let seg = |s: &Segment| [s.start, s.end, s.step];
        let g = GridSpec::reference();
        Self {
            t1_segments: g.t1_segments.iter().map(seg).collect(),
            t2_segments: g.t2_segments.iter().map(seg).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub snr_db: f64,
    /// Reference signal level for the SNR definition.
    pub s_ref: f64,
    /// Overrides the SNR-derived noise level when set.
    pub sigma: Option<f64>,
    pub trials: usize,
    /// Seed for noise and for generated conventional schedules.
    pub seed: u64,
    /// `[t1_ms, t2_ms, m0]` of the simulated voxel.
    pub tissue: [f64; 3],
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            snr_db: 33.0,
            s_ref: 0.6,
            sigma: None,
            trials: 100,
            seed: 0,
            tissue: REFERENCE_TISSUES[0].to_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lengths: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lengths: vec![300, 400, 500, 600, 700, 800],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub out_dir: PathBuf,
}

impl Default for IoSection {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("out") }
    }
}

fn tissue(v: [f64; 3]) -> Result<TissueParams, CliError> {
    Ok(TissueParams::new(v[0], v[1], v[2])?)
}

fn grid(segments: &[[f64; 3]]) -> Vec<Segment> {
    segments.iter().map(|s| Segment::new(s[0], s[1], s[2])).collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Checks every section against the library invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "unsupported config version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        if !(self.bloch.te_ms > 0.0 && self.bloch.te_ms < self.design.tr_min_ms) {
            return Err(CliError::Validation(format!(
                "te_ms must lie in (0, tr_min_ms), got {}",
                self.bloch.te_ms
            )));
        }
        self.ensemble()?;
        self.design_config(self.design.mode)?.validate()?;
        self.sigma()?;
        self.grid().t1_values()?;
        self.grid().t2_values()?;
        self.mc_tissue()?;
        if self.mc.trials < 2 {
            return Err(CliError::Validation(format!("mc.trials must be >= 2, got {}", self.mc.trials)));
        }
        if self.sweep.lengths.is_empty() || self.sweep.lengths.iter().any(|&n| n < 2) {
            return Err(CliError::Validation("sweep.lengths must be nonempty and >= 2".into()));
        }
        Ok(())
    }

    pub fn ensemble(&self) -> Result<IsochromatEnsemble, CliError> {
        Ok(IsochromatEnsemble::uniform(self.bloch.nv)?)
    }

    pub fn sigma(&self) -> Result<f64, CliError> {
        match self.mc.sigma {
            Some(s) if s > 0.0 && s.is_finite() => Ok(s),
            Some(s) => Err(CliError::Validation(format!("mc.sigma must be positive, got {s}"))),
            None => Ok(snr_to_sigma(self.mc.snr_db, self.mc.s_ref)?),
        }
    }

    pub fn tissues(&self) -> Result<Vec<TissueParams>, CliError> {
        self.design.tissues.iter().map(|&t| tissue(t)).collect()
    }

    pub fn mc_tissue(&self) -> Result<TissueParams, CliError> {
        tissue(self.mc.tissue)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            t1_segments: grid(&self.dictionary.t1_segments),
            t2_segments: grid(&self.dictionary.t2_segments),
        }
    }

    pub fn design_config(&self, mode: Mode) -> Result<DesignConfig, CliError> {
        let d = &self.design;
        let core_mode = match mode {
            Mode::Opt1 => DesignMode::Unconstrained,
            Mode::Opt2 => DesignMode::Smooth,
        };
        let mut c = DesignConfig::reference(d.n, self.sigma()?, core_mode);
        c.tissues = self.tissues()?;
        c.weights = d.weights;
        c.tr_min = d.tr_min_ms;
        c.tr_max = d.tr_max_ms;
        c.alpha_min = d.alpha_min_deg * DEG;
        c.alpha_max_first = d.alpha_max_first_deg * DEG;
        c.alpha_max_rest = d.alpha_max_rest_deg * DEG;
        if mode == Mode::Opt2 {
            c.delta_alpha_max = d.delta_alpha_max_deg * DEG;
        }
        c.nv_design = d.nv_design;
        c.nv_report = self.bloch.nv;
        c.tol = d.tol;
        c.max_iter = d.max_iter;
        Ok(c)
    }
}
