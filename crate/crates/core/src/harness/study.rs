use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::diagnostics::{reconstruct, ProbeRow};
use crate::error::{Error, Result};
use crate::grid::{self, Field, SpectralGrid, Transform};
use crate::model::{EnvelopeProfile, FriedrichsModel};
use crate::solver::{init_state, EnvelopeState, Schedule, StrangIntegrator};
use crate::spectra::{check_nonresonance, CarrierWave, NonresonanceLevel, NonresonanceReport};

use super::config::{DtPolicy, StudyConfig};

/// Relative change in the sup-t errors below which a halved step is accepted.
pub const HALVING_TOLERANCE: f64 = 0.02;
pub const MAX_HALVINGS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub m: usize,
    pub eps: f64,
    pub dt: f64,
    pub status: RowStatus,
    /// `sup_t max_x |ũ^(m) - ũ^(ref)|₂`.
    pub linf_error: Option<f64>,
    /// Same with the max-abs vector norm over components.
    pub linf_error_maxabs: Option<f64>,
    /// `sup_t Σ_j 2‖v̂_j^(m) - v̂_j^(ref)‖_W`.
    pub wiener_error: Option<f64>,
    pub wallclock_s: Option<f64>,
}

impl StudyRow {
    fn failed(m: usize, eps: f64, dt: f64, reason: String) -> Self {
        Self {
            m,
            eps,
            dt,
            status: RowStatus::Failed(reason),
            linf_error: None,
            linf_error_maxabs: None,
            wiener_error: None,
            wallclock_s: None,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest `|log e_i - (slope·log ε_i + intercept)|`.
    pub max_residual: f64,
    pub points: usize,
}

impl OrderFit {
    pub fn predict(&self, eps: f64) -> f64 {
        (self.intercept + self.slope * eps.ln()).exp()
    }
}

/// Least squares on `(log ε, log error)`.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "order fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|(e, v)| !(*e > 0.0 && *v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "order fit needs positive eps and error values, got {p:?}"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("order fit needs at least two distinct eps".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Ok(OrderFit {
        slope,
        intercept,
        max_residual,
        points: points.len(),
    })
}

#[derive(Clone, Debug)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub carrier: CarrierWave,
    /// Sorted by `(m, ε descending)`.
    pub rows: Vec<StudyRow>,
    /// Per candidate `m`, present when at least 3 rows succeeded.
    pub fits: BTreeMap<usize, OrderFit>,
    pub nonresonance: Vec<NonresonanceReport>,
    /// Level that the requested cutoffs rely on.
    pub required_level: NonresonanceLevel,
    /// Soft-check violations (monotonicity, error ordering, non-resonance).
    pub flags: Vec<String>,
    /// Filled by callers that also run the scaling probes.
    pub probes: Vec<ProbeRow>,
}

impl StudyResult {
    pub fn rows_for(&self, m: usize) -> impl Iterator<Item = &StudyRow> {
        self.rows.iter().filter(move |r| r.m == m)
    }

    pub fn row(&self, m: usize, eps: f64) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.m == m && r.eps == eps)
    }

    pub fn all_completed(&self) -> bool {
        self.rows.iter().all(StudyRow::ok)
    }

    pub fn nonresonance_passed(&self) -> bool {
        self.nonresonance
            .iter()
            .filter(|r| r.level == self.required_level)
            .all(|r| r.passed)
    }
}

pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let model = config.build_model()?;
    let carrier = config.build_carrier(&model)?;
    let profile = config.build_profile(&carrier)?;
    let grid = Arc::new(SpectralGrid::new(config.grid.length, config.grid.points)?);

    let required_level = if config.study.reference_m >= 5 {
        NonresonanceLevel::M5
    } else {
        NonresonanceLevel::M3
    };
    let mut flags = Vec::new();
    let mut nonresonance = Vec::new();
    for level in [NonresonanceLevel::M3, NonresonanceLevel::M5, NonresonanceLevel::ThreeTerm] {
        let report = check_nonresonance(&model, &carrier, level)?;
        if level == required_level && !report.passed {
            flags.push(format!(
                "non-resonance [{level}] fails (margin {:.3e}); results are not covered by the approximation theory",
                report.min_margin
            ));
        }
        nonresonance.push(report);
    }

    let run_all = || -> Vec<Vec<StudyRow>> {
        config
            .study
            .eps
            .par_iter()
            .map(|&eps| rows_for_eps(config, &model, &carrier, &profile, &grid, eps))
            .collect()
    };
    let per_eps = if config.study.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.study.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run_all)
    } else {
        run_all()
    };

    let mut rows: Vec<StudyRow> = per_eps.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.m.cmp(&b.m).then(b.eps.total_cmp(&a.eps)));

    let mut fits = BTreeMap::new();
    for &m in &config.study.m_list {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.m == m && r.ok())
            .filter_map(|r| r.linf_error.map(|e| (r.eps, e)))
            .collect();
        if pts.len() >= 3 && pts.iter().all(|p| p.1 > 0.0) {
            fits.insert(m, fit_order(&pts)?);
        }
    }
    flags.extend(soft_checks(&rows, &config.study.m_list));

    Ok(StudyResult {
        config: config.clone(),
        carrier,
        rows,
        fits,
        nonresonance,
        required_level,
        flags,
        probes: Vec::new(),
    })
}

fn soft_checks(rows: &[StudyRow], m_list: &[usize]) -> Vec<String> {
    let mut flags = Vec::new();
    for &m in m_list {
        let ok: Vec<&StudyRow> = rows.iter().filter(|r| r.m == m && r.ok()).collect();
        for w in ok.windows(2) {
            if let (Some(a), Some(b)) = (w[0].linf_error, w[1].linf_error) {
                if b > a {
                    flags.push(format!(
                        "monotonicity: m={m} error grows from {a:.4e} (eps={}) to {b:.4e} (eps={})",
                        w[0].eps, w[1].eps
                    ));
                }
            }
        }
    }
    if m_list.contains(&1) && m_list.contains(&3) {
        for r1 in rows.iter().filter(|r| r.m == 1) {
            let e3 = rows.iter().find(|r| r.m == 3 && r.eps == r1.eps).and_then(|r| r.linf_error);
            if let (Some(e1), Some(e3)) = (r1.linf_error, e3) {
                if e3 > e1 {
                    flags.push(format!("ordering: at eps={} m=3 error {e3:.4e} exceeds m=1 error {e1:.4e}", r1.eps));
                }
            }
        }
    }
    flags
}

fn rows_for_eps(
    config: &StudyConfig,
    model: &FriedrichsModel,
    carrier: &CarrierWave,
    profile: &EnvelopeProfile,
    grid: &Arc<SpectralGrid>,
    eps: f64,
) -> Vec<StudyRow> {
    let mut dt = config.dt_for(eps);
    let mut rows = compare_runs(config, model, carrier, profile, grid, eps, dt);
    if config.time.dt_policy != DtPolicy::Halving {
        return rows;
    }
    for _ in 0..MAX_HALVINGS {
        if !rows.iter().all(StudyRow::ok) {
            break;
        }
        dt *= 0.5;
        let finer = compare_runs(config, model, carrier, profile, grid, eps, dt);
        let settled = rows.iter().zip(&finer).all(|(a, b)| match (a.linf_error, b.linf_error) {
            (Some(x), Some(y)) if y > 0.0 => ((x - y) / y).abs() < HALVING_TOLERANCE,
            (Some(x), Some(y)) => x == y,
            _ => false,
        });
        rows = finer;
        if settled {
            break;
        }
    }
    rows
}

struct Run {
    m: usize,
    state: EnvelopeState,
    integrator: StrangIntegrator,
    steps: usize,
    seconds: f64,
    failure: Option<String>,
}

impl Run {
    fn new(model: &FriedrichsModel, state: EnvelopeState, dt: f64, steps: usize) -> Result<Self> {
        let integrator = StrangIntegrator::new(model, &state, dt)?;
        Ok(Self {
            m: state.m,
            state,
            integrator,
            steps,
            seconds: 0.0,
            failure: None,
        })
    }

    fn advance(&mut self, t: f64) {
        if self.failure.is_some() {
            return;
        }
        let start = Instant::now();
        match self.integrator.advance(&mut self.state, self.steps) {
            Ok(()) => self.state.t = t,
            Err(e) => self.failure = Some(e.to_string()),
        }
        self.seconds += start.elapsed().as_secs_f64();
    }
}

#[derive(Default, Clone, Copy)]
struct Sup {
    linf: f64,
    maxabs: f64,
    wiener: f64,
}

/// Integrates the reference and every candidate cutoff in lockstep from the
/// same data and records sup-over-observer-time errors.
fn compare_runs(
    config: &StudyConfig,
    model: &FriedrichsModel,
    carrier: &CarrierWave,
    profile: &EnvelopeProfile,
    grid: &Arc<SpectralGrid>,
    eps: f64,
    dt: f64,
) -> Vec<StudyRow> {
    match compare_runs_inner(config, model, carrier, profile, grid, eps, dt) {
        Ok(rows) => rows,
        Err(e) => config
            .study
            .m_list
            .iter()
            .map(|&m| StudyRow::failed(m, eps, dt, e.to_string()))
            .collect(),
    }
}

fn compare_runs_inner(
    config: &StudyConfig,
    model: &FriedrichsModel,
    carrier: &CarrierWave,
    profile: &EnvelopeProfile,
    grid: &Arc<SpectralGrid>,
    eps: f64,
    dt: f64,
) -> Result<Vec<StudyRow>> {
    let schedule = Schedule::new(config.time.t_end / eps, dt, config.time.observers)?;
    let refine = (1.0 / config.study.reference_dt_factor).round() as usize;
    let ref_m = config.study.reference_m;

    let mut runs = vec![Run::new(
        model,
        init_state(model, carrier, profile, grid.clone(), ref_m, eps)?,
        schedule.dt() / refine as f64,
        schedule.steps_per_obs * refine,
    )?];
    // A candidate at the reference cutoff and step is the reference itself.
    let self_compare = refine == 1;
    let candidates: Vec<usize> = config
        .study
        .m_list
        .iter()
        .copied()
        .filter(|&m| !(self_compare && m == ref_m))
        .collect();
    for &m in &candidates {
        let state = init_state(model, carrier, profile, grid.clone(), m, eps)?;
        runs.push(Run::new(model, state, schedule.dt(), schedule.steps_per_obs)?);
    }

    let mut transform = Transform::new(grid.clone());
    let mut sups = vec![Sup::default(); runs.len()];
    for i in 0..schedule.n_obs {
        if i > 0 {
            let t = schedule.time(i);
            runs.par_iter_mut().for_each(|r| r.advance(t));
        }
        if let Some(f) = &runs[0].failure {
            return Err(Error::BlowUp {
                t: runs[0].state.t,
                reason: format!("reference m={ref_m}: {f}"),
            });
        }
        let reference = reconstruct(&runs[0].state, &mut transform)?.field;
        for k in 1..runs.len() {
            if runs[k].failure.is_some() {
                continue;
            }
            let field = reconstruct(&runs[k].state, &mut transform)?.field;
            let diff = field.sub(&reference)?;
            let s = &mut sups[k];
            s.linf = s.linf.max(grid::linf_norm(&diff)?);
            s.maxabs = s.maxabs.max(linf_maxabs(&diff));
            s.wiener = s.wiener.max(coefficient_wiener_distance(&runs[k].state, &runs[0].state));
        }
    }

    let mut rows = Vec::new();
    for &m in &config.study.m_list {
        if self_compare && m == ref_m {
            rows.push(StudyRow {
                m,
                eps,
                dt: schedule.dt(),
                status: RowStatus::Ok,
                linf_error: Some(0.0),
                linf_error_maxabs: Some(0.0),
                wiener_error: Some(0.0),
                wallclock_s: Some(runs[0].seconds),
            });
            continue;
        }
        let k = 1 + candidates.iter().position(|&c| c == m).expect("candidate run");
        let run = &runs[k];
        debug_assert_eq!(run.m, m);
        rows.push(match &run.failure {
            Some(reason) => StudyRow::failed(m, eps, schedule.dt(), reason.clone()),
            None => StudyRow {
                m,
                eps,
                dt: schedule.dt(),
                status: RowStatus::Ok,
                linf_error: Some(sups[k].linf),
                linf_error_maxabs: Some(sups[k].maxabs),
                wiener_error: Some(sups[k].wiener),
                wallclock_s: Some(run.seconds),
            },
        });
    }
    Ok(rows)
}

/// `max_x max_c |f_c(x)|`.
pub fn linf_maxabs(field: &Field) -> f64 {
    field.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `Σ_j 2‖a_j - b_j‖_W` over all harmonics stored in either state; missing
/// harmonics count as zero. Both states must share grid, ε, time and frame.
pub fn coefficient_wiener_distance(a: &EnvelopeState, b: &EnvelopeState) -> f64 {
    let dk = a.grid.dk();
    let (long, short) = if a.coeffs.len() >= b.coeffs.len() { (a, b) } else { (b, a) };
    long.coeffs
        .iter()
        .enumerate()
        .map(|(h, f)| {
            let diff: Vec<_> = match short.coeffs.get(h) {
                Some(g) => f.values.iter().zip(&g.values).map(|(x, y)| x - y).collect(),
                None => f.values.clone(),
            };
            2.0 * grid::wiener_norm_raw(&diff, f.comps, f.points(), dk)
        })
        .sum()
}
