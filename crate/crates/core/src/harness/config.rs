use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{ProbeQuantity, ProbeSetup};
use crate::error::{Error, Result};
use crate::model::{gaussian_profile, model_by_name, EnvelopeProfile, FriedrichsModel};
use crate::spectra::{select_carrier, CarrierRule, CarrierWave};

/// How the time step is chosen per ε.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    /// `dt` for every ε.
    Fixed,
    /// `dt·min(1, ε/0.1)`.
    Scaled,
    /// Start at `dt` and halve until the sup-t errors change by less than 2%.
    Halving,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub name: String,
    pub gamma: f64,
    pub kappa: Vec<f64>,
    pub carrier_rule: CarrierRule,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            name: "klein_gordon_1d".into(),
            gamma: 0.7,
            kappa: vec![1.2],
            carrier_rule: CarrierRule::Largest,
        }
    }
}

/// Gaussian envelope `exp(-|x - center|²)·direction`; without an explicit
/// direction the kernel vector of `L(ω, κ)` is used (polarized data).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    pub center: f64,
    /// `[re, im]` pairs.
    pub direction: Option<Vec<[f64; 2]>>,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            center: 0.5,
            direction: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub length: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            length: 128.0,
            points: 1 << 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub t_end: f64,
    pub dt: f64,
    pub dt_policy: DtPolicy,
    pub observers: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            dt: 1e-3,
            dt_policy: DtPolicy::Fixed,
            observers: 201,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub eps: Vec<f64>,
    pub m_list: Vec<usize>,
    pub reference_m: usize,
    /// Reference step as a fraction of the candidate step (1 or 1/2, ...).
    pub reference_dt_factor: f64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

/// `10^{-1-0.2i}`, `i = 0..count`.
pub fn log_spaced_eps(count: usize) -> Vec<f64> {
    (0..count).map(|i| 10f64.powf(-1.0 - 0.2 * i as f64)).collect()
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            eps: log_spaced_eps(4),
            m_list: vec![1, 3],
            reference_m: 5,
            reference_dt_factor: 1.0,
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub eps: Vec<f64>,
    pub m: usize,
    pub quantities: Vec<ProbeQuantity>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            eps: vec![0.1, 0.05],
            m: 3,
            quantities: ProbeQuantity::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Fill the `wallclock_s` column; off gives byte-identical output for
    /// identical inputs.
    pub wallclock: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            wallclock: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub model: ModelSection,
    pub profile: ProfileSection,
    pub grid: GridSection,
    pub time: TimeSection,
    pub study: StudySection,
    pub probe: ProbeSection,
    pub output: OutputSection,
}

impl StudyConfig {
    /// `N = 2^14`, `dt = t_end/10⁵`, six ε from 0.1 down to 0.01.
    pub fn paper_scale() -> Self {
        let mut c = Self::default();
        c.grid.points = 1 << 14;
        c.time.dt = c.time.t_end / 1e5;
        c.study.eps = log_spaced_eps(6);
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        check_eps(&self.study.eps, "study.eps")?;
        check_eps(&self.probe.eps, "probe.eps")?;
        let r = self.study.reference_m;
        if r % 2 == 0 {
            return bad(format!("study.reference_m must be odd, got {r}"));
        }
        if self.study.m_list.is_empty() {
            return bad("study.m_list is empty".into());
        }
        for &m in &self.study.m_list {
            if m % 2 == 0 || m > r {
                return bad(format!("study.m_list entries must be odd and <= reference_m = {r}, got {m}"));
            }
        }
        if self.probe.m % 2 == 0 {
            return bad(format!("probe.m must be odd, got {}", self.probe.m));
        }
        if !self.grid.points.is_power_of_two() || self.grid.points < 4 {
            return bad(format!("grid.points must be a power of two, got {}", self.grid.points));
        }
        if !(self.grid.length > 0.0) {
            return bad(format!("grid.length must be positive, got {}", self.grid.length));
        }
        if !(self.time.dt > 0.0 && self.time.t_end > 0.0) {
            return bad(format!("time.dt and time.t_end must be positive, got {} and {}", self.time.dt, self.time.t_end));
        }
        if self.time.observers < 2 {
            return bad(format!("time.observers must be >= 2, got {}", self.time.observers));
        }
        let f = self.study.reference_dt_factor;
        if !(f > 0.0 && f <= 1.0) || (1.0 / f).fract() != 0.0 {
            return bad(format!("study.reference_dt_factor must be 1/k for a positive integer k, got {f}"));
        }
        if self.model.kappa.len() != 1 {
            return bad(format!("model.kappa must have exactly one entry, got {:?}", self.model.kappa));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<FriedrichsModel> {
        model_by_name(&self.model.name, self.model.gamma)
    }

    pub fn build_carrier(&self, model: &FriedrichsModel) -> Result<CarrierWave> {
        select_carrier(model, &self.model.kappa, self.model.carrier_rule)
    }

    pub fn build_profile(&self, carrier: &CarrierWave) -> Result<EnvelopeProfile> {
        let direction = match &self.profile.direction {
            Some(d) => d.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
            None => carrier.kernel.clone(),
        };
        gaussian_profile(vec![self.profile.center], direction)
    }

    /// Time step for a given ε (the halving policy starts from this value).
    pub fn dt_for(&self, eps: f64) -> f64 {
        match self.time.dt_policy {
            DtPolicy::Scaled => self.time.dt * (eps / 0.1).min(1.0),
            DtPolicy::Fixed | DtPolicy::Halving => self.time.dt,
        }
    }

    pub fn probe_setup(&self) -> Result<ProbeSetup> {
        let model = self.build_model()?;
        let carrier = self.build_carrier(&model)?;
        let profile = self.build_profile(&carrier)?;
        Ok(ProbeSetup {
            model,
            carrier,
            profile,
            length: self.grid.length,
            points: self.grid.points,
            dt: self.time.dt,
            t_end: self.time.t_end,
            m: self.probe.m,
            observers: self.time.observers,
        })
    }
}

fn check_eps(eps: &[f64], key: &str) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::Config(format!("{key} is empty")));
    }
    if eps.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(Error::Config(format!("{key} entries must lie in (0, 1]: {eps:?}")));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("{key} must be strictly decreasing: {eps:?}")));
    }
    Ok(())
}
