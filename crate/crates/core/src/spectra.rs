//! Symbols `L(α,β) = -αI + A(β) - iE`, their eigendecompositions, the carrier
//! wave and the non-resonance diagnostics.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, HermitianEigen};
use crate::model::FriedrichsModel;

/// Relative eigenvalue gap below which the extremal position is not trusted.
const GAP_TOL: f64 = 1e-10;

/// `-αI + A(β) - iE`.
pub fn symbol(model: &FriedrichsModel, alpha: f64, beta: &[f64]) -> CMatrix {
    let n = model.size();
    let a = model.a_of(beta);
    CMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { alpha } else { 0.0 };
        Complex64::new(a[(i, j)] - diag, -model.e[(i, j)])
    })
}

pub fn eig_hermitian(m: &CMatrix) -> Result<HermitianEigen> {
    linalg::eig_hermitian(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarrierRule {
    Largest,
    Smallest,
}

impl std::str::FromStr for CarrierRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "largest" => Ok(Self::Largest),
            "smallest" => Ok(Self::Smallest),
            other => Err(Error::Config(format!("unknown carrier rule '{other}'"))),
        }
    }
}

impl CarrierRule {
    /// Position of the selected branch in a descending eigenvalue list.
    fn position(self, n: usize) -> usize {
        match self {
            CarrierRule::Largest => 0,
            CarrierRule::Smallest => n - 1,
        }
    }
}

/// Wave vector, carrier frequency and group velocity of the fast phase.
#[derive(Clone, Debug, PartialEq)]
pub struct CarrierWave {
    pub kappa: Vec<f64>,
    pub omega: f64,
    pub rule: CarrierRule,
    /// Branch index after re-enumeration; the kernel branch is always first.
    pub branch: usize,
    pub cg: Vec<f64>,
    /// Unit vector spanning `ker L(ω, κ)`.
    pub kernel: Vec<Complex64>,
}

/// Eigendecomposition of `L_j(θ) = L(jω, jκ + θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    pub j: i32,
    pub theta: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub psi: CMatrix,
}

impl EigenSystem {
    pub fn size(&self) -> usize {
        self.lambdas.len()
    }

    /// Column `l` of `Ψ`.
    pub fn vector(&self, l: usize) -> Vec<Complex64> {
        self.psi.column(l).iter().copied().collect()
    }

    pub fn residual(&self, m: &CMatrix) -> f64 {
        HermitianEigen {
            values: self.lambdas.clone(),
            vectors: self.psi.clone(),
        }
        .residual(m)
    }

    pub fn unitarity_defect(&self) -> f64 {
        linalg::max_abs(&(self.psi.adjoint() * &self.psi - CMatrix::identity(self.size(), self.size())))
    }
}

fn overlap(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm()
}

fn shifted_beta(carrier: &CarrierWave, j: i32, theta: &[f64]) -> Vec<f64> {
    carrier
        .kappa
        .iter()
        .zip(theta)
        .map(|(k, t)| j as f64 * k + t)
        .collect()
}

/// Eigendecomposition of `L_j(θ)` in the fixed enumeration: descending
/// eigenvalues, and for `j = 1` the branch continuous with `λ₁₁(0) = 0` moved
/// to the front.
///
/// The kernel branch is the carrier's extremal eigenvalue, which stays
/// separated from the rest of the spectrum. If that separation falls below
/// `1e-10·‖L‖`, the branch is picked among the near-degenerate cluster by
/// maximal overlap with `reference` (or with `ψ₁₁(0)` when no reference is
/// given).
pub fn eig_lj_tracked(
    model: &FriedrichsModel,
    carrier: &CarrierWave,
    j: i32,
    theta: &[f64],
    reference: Option<&[Complex64]>,
) -> Result<EigenSystem> {
    if j < 1 || j % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "harmonic index must be a positive odd integer, got {j}"
        )));
    }
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, model dimension is {}",
            theta.len(),
            model.dim()
        )));
    }
    let beta = shifted_beta(carrier, j, theta);
    let l = symbol(model, j as f64 * carrier.omega, &beta);
    let eig = linalg::eig_hermitian(&l)?;
    let n = eig.values.len();
    let mut order: Vec<usize> = (0..n).collect();

    if j == 1 {
        let scale = linalg::max_abs(&l).max(1.0);
        let pos = carrier.rule.position(n);
        let gap = (0..n)
            .filter(|&i| i != pos)
            .map(|i| (eig.values[i] - eig.values[pos]).abs())
            .fold(f64::INFINITY, f64::min);
        let chosen = if gap > GAP_TOL * scale {
            pos
        } else {
            let reference = reference.unwrap_or(&carrier.kernel);
            let cluster: Vec<usize> = (0..n)
                .filter(|&i| (eig.values[i] - eig.values[pos]).abs() <= GAP_TOL * scale)
                .collect();
            let mut scored: Vec<(usize, f64)> = cluster
                .iter()
                .map(|&i| {
                    let v: Vec<Complex64> = eig.vectors.column(i).iter().copied().collect();
                    (i, overlap(&v, reference))
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1));
            let best = scored[0];
            let runner_up = scored.get(1).map_or(0.0, |s| s.1);
            if best.1 < 0.5 || best.1 - runner_up < 1e-6 {
                return Err(Error::Enumeration {
                    j,
                    theta: theta.to_vec(),
                    reason: format!(
                        "kernel branch degenerate (gap {gap:.3e}) and overlap matching is ambiguous: {scored:?}"
                    ),
                });
            }
            best.0
        };
        order.retain(|&i| i != chosen);
        order.insert(0, chosen);
    }

    let lambdas = order.iter().map(|&i| eig.values[i]).collect();
    let psi = CMatrix::from_fn(n, n, |r, c| eig.vectors[(r, order[c])]);
    Ok(EigenSystem {
        j,
        theta: theta.to_vec(),
        lambdas,
        psi,
    })
}

pub fn eig_lj(model: &FriedrichsModel, carrier: &CarrierWave, j: i32, theta: &[f64]) -> Result<EigenSystem> {
    eig_lj_tracked(model, carrier, j, theta, None)
}

/// Selected eigenvalue branch `ω₁(β)` of `A(β) - iE`.
pub fn branch_frequency(model: &FriedrichsModel, rule: CarrierRule, beta: &[f64]) -> Result<f64> {
    let eig = linalg::eig_hermitian(&symbol(model, 0.0, beta))?;
    Ok(eig.values[rule.position(eig.values.len())])
}

/// Picks `ω` as the largest or smallest eigenvalue of `A(κ) - iE`, checks
/// that `ker L(ω, κ)` is one-dimensional and attaches the group velocity.
pub fn select_carrier(model: &FriedrichsModel, kappa: &[f64], rule: CarrierRule) -> Result<CarrierWave> {
    if kappa.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "kappa has {} entries, model dimension is {}",
            kappa.len(),
            model.dim()
        )));
    }
    if kappa.iter().all(|k| *k == 0.0) {
        return Err(Error::InvalidArgument("wave vector kappa must be nonzero".into()));
    }
    let omega = branch_frequency(model, rule, kappa)?;
    let l = symbol(model, omega, kappa);
    let eig = linalg::eig_hermitian(&l)?;
    let scale = linalg::max_abs(&l).max(1.0);
    let zeros: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i].abs() <= GAP_TOL * scale)
        .collect();
    if zeros.len() != 1 {
        return Err(Error::KernelDimension {
            dim: zeros.len(),
            eigenvalues: eig.values,
        });
    }
    let kernel = eig.vectors.column(zeros[0]).iter().copied().collect();
    let mut carrier = CarrierWave {
        kappa: kappa.to_vec(),
        omega,
        rule,
        branch: 1,
        cg: vec![0.0; kappa.len()],
        kernel,
    };
    carrier.cg = group_velocity(model, &carrier)?;
    Ok(carrier)
}

fn central_difference(model: &FriedrichsModel, carrier: &CarrierWave, h: f64) -> Result<Vec<f64>> {
    (0..carrier.kappa.len())
        .map(|axis| {
            let mut plus = carrier.kappa.clone();
            let mut minus = carrier.kappa.clone();
            plus[axis] += h;
            minus[axis] -= h;
            Ok((branch_frequency(model, carrier.rule, &plus)?
                - branch_frequency(model, carrier.rule, &minus)?)
                / (2.0 * h))
        })
        .collect()
}

/// `∇ω(κ)` of the tracked branch.
///
/// Central differences at `h = 1e-4` and `h/2` must agree to `1e-6`
/// (relative); the Richardson-extrapolated value is returned unless the model
/// supplies a closed form, which is then cross-checked at the same tolerance.
pub fn group_velocity(model: &FriedrichsModel, carrier: &CarrierWave) -> Result<Vec<f64>> {
    let h = 1e-4;
    let coarse = central_difference(model, carrier, h)?;
    let fine = central_difference(model, carrier, h / 2.0)?;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    let agree = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| rel(*x, *y) <= 1e-6 || (x - y).abs() <= 1e-12);
    if !agree(&coarse, &fine) {
        return Err(Error::Richardson { coarse, fine });
    }
    let numeric: Vec<f64> = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect();
    match model.group_velocity {
        Some(closed_form) => {
            let closed = closed_form(&carrier.kappa, carrier.omega);
            if !agree(&closed, &numeric) {
                return Err(Error::GroupVelocityMismatch { closed, numeric });
            }
            Ok(closed)
        }
        None => Ok(numeric),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonresonanceLevel {
    M3,
    M5,
    ThreeTerm,
}

impl std::str::FromStr for NonresonanceLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m3" => Ok(Self::M3),
            "m5" => Ok(Self::M5),
            "three_term" => Ok(Self::ThreeTerm),
            other => Err(Error::Config(format!("unknown non-resonance level '{other}'"))),
        }
    }
}

impl fmt::Display for NonresonanceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NonresonanceLevel::M3 => "m3",
            NonresonanceLevel::M5 => "m5",
            NonresonanceLevel::ThreeTerm => "three_term",
        })
    }
}

/// Outcome of a non-resonance check plus sampled spectral properties.
#[derive(Clone, Debug, PartialEq)]
pub struct NonresonanceReport {
    pub level: NonresonanceLevel,
    pub passed: bool,
    pub threshold: f64,
    /// Smallest separation between eigenvalues of the compared harmonics
    /// (or smallest three-term combination).
    pub min_margin: f64,
    /// 1-based `(ℓ, ℓ₁, ℓ₂)` or `(i, ℓ)` indices attaining `min_margin`.
    pub argmin: Vec<usize>,
    /// Smallest `|λ|` of the higher harmonic (regularity), if the level asks for it.
    pub regularity_margin: Option<f64>,
    /// `λ_{jℓ}(0)` per harmonic.
    pub lambdas: BTreeMap<i32, Vec<f64>>,
    /// `ω_n(β) = -ω₁(β)` on the sample.
    pub p1: bool,
    /// Some interior branch vanishes identically on the sample.
    pub p2: bool,
    pub beta_range: (f64, f64),
    pub beta_samples: usize,
    /// `min |λ₁ℓ(θ)|` over `ℓ ≥ 2` and the θ sample.
    pub min_nonkernel_gap: f64,
    /// Largest sampled `|Δλ| / |Δθ|₁` over all branches of `j ∈ {1,3,5}`.
    pub lipschitz_estimate: f64,
}

impl NonresonanceReport {
    /// Machine-readable key/value view.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("level".into(), self.level.to_string());
        map.insert("passed".into(), self.passed.to_string());
        map.insert("threshold".into(), format!("{:e}", self.threshold));
        map.insert("min_margin".into(), format!("{:e}", self.min_margin));
        map.insert(
            "argmin".into(),
            self.argmin.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
        );
        if let Some(r) = self.regularity_margin {
            map.insert("regularity_margin".into(), format!("{r:e}"));
        }
        for (j, l) in &self.lambdas {
            map.insert(
                format!("lambda_{j}"),
                l.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","),
            );
        }
        map.insert("p1".into(), self.p1.to_string());
        map.insert("p2".into(), self.p2.to_string());
        map.insert(
            "beta_range".into(),
            format!("{:e},{:e}", self.beta_range.0, self.beta_range.1),
        );
        map.insert("beta_samples".into(), self.beta_samples.to_string());
        map.insert("min_nonkernel_gap".into(), format!("{:e}", self.min_nonkernel_gap));
        map.insert("lipschitz_estimate".into(), format!("{:e}", self.lipschitz_estimate));
        map
    }
}

impl fmt::Display for NonresonanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "non-resonance [{}]: {}",
            self.level,
            if self.passed { "pass" } else { "FAIL" }
        )?;
        writeln!(
            f,
            "  min margin        {:.6e} at {:?} (threshold {:.1e})",
            self.min_margin, self.argmin, self.threshold
        )?;
        if let Some(r) = self.regularity_margin {
            writeln!(f, "  regularity margin {r:.6e}")?;
        }
        for (j, l) in &self.lambdas {
            let list: Vec<String> = l.iter().map(|v| format!("{v:+.6}")).collect();
            writeln!(f, "  lambda_{j}(0)      [{}]", list.join(", "))?;
        }
        writeln!(
            f,
            "  (P1) symmetric spectrum: {}   (P2) vanishing branch: {}   [beta in {:?}, {} samples]",
            self.p1, self.p2, self.beta_range, self.beta_samples
        )?;
        write!(
            f,
            "  min |lambda_1l(theta)|, l>=2: {:.6e}   sampled Lipschitz: {:.6e}",
            self.min_nonkernel_gap, self.lipschitz_estimate
        )
    }
}

/// Sampled β-box used by the spectral property probes.
pub const PROBE_BETA_RANGE: (f64, f64) = (-10.0, 10.0);
pub const PROBE_SAMPLES: usize = 401;

fn probe_points(model: &FriedrichsModel) -> Vec<Vec<f64>> {
    let (lo, hi) = PROBE_BETA_RANGE;
    (0..PROBE_SAMPLES)
        .map(|i| {
            let s = lo + (hi - lo) * i as f64 / (PROBE_SAMPLES - 1) as f64;
            // Diagonal line through the box; in d = 1 this is the whole interval.
            vec![s; model.dim()]
        })
        .collect()
}

/// Evaluates the requested non-resonance condition at `θ = 0`.
///
/// A margin counts as nonzero iff it exceeds `1e-8·max(1, |ω|)`.
pub fn check_nonresonance(
    model: &FriedrichsModel,
    carrier: &CarrierWave,
    level: NonresonanceLevel,
) -> Result<NonresonanceReport> {
    let threshold = 1e-8 * carrier.omega.abs().max(1.0);
    let zero = vec![0.0; model.dim()];
    let mut lambdas = BTreeMap::new();
    for j in [1, 3, 5] {
        lambdas.insert(j, eig_lj(model, carrier, j, &zero)?.lambdas);
    }
    let n = model.size();

    let pairwise = |hi: i32, lo: i32| -> (f64, Vec<usize>) {
        let mut best = (f64::INFINITY, vec![]);
        for (i, a) in lambdas[&hi].iter().enumerate() {
            for (l, b) in lambdas[&lo].iter().enumerate() {
                let d = (a - b).abs();
                if d < best.0 {
                    best = (d, vec![i + 1, l + 1]);
                }
            }
        }
        best
    };
    let regular = |j: i32| lambdas[&j].iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);

    let (min_margin, argmin, regularity_margin) = match level {
        NonresonanceLevel::M3 => {
            let (m, a) = pairwise(3, 1);
            (m, a, Some(regular(3)))
        }
        NonresonanceLevel::M5 => {
            let (m, a) = pairwise(5, 3);
            (m, a, Some(regular(5)))
        }
        NonresonanceLevel::ThreeTerm => {
            let mut best = (f64::INFINITY, vec![]);
            for l in 0..n {
                for l1 in 0..n {
                    for l2 in 1..n {
                        let v = (lambdas[&5][l] - lambdas[&3][l1] - lambdas[&1][l2]).abs();
                        if v < best.0 {
                            best = (v, vec![l + 1, l1 + 1, l2 + 1]);
                        }
                    }
                }
            }
            (best.0, best.1, None)
        }
    };
    let passed = min_margin > threshold && regularity_margin.map_or(true, |r| r > threshold);

    // Spectral properties of L(0, β) on the sample.
    let points = probe_points(model);
    let mut p1 = true;
    let mut vanishing = vec![true; n];
    for beta in &points {
        let eig = linalg::eig_hermitian(&symbol(model, 0.0, beta))?;
        let w = &eig.values;
        let tol = 1e-10 * w[0].abs().max(1.0);
        if (w[n - 1] + w[0]).abs() > tol {
            p1 = false;
        }
        for (l, v) in w.iter().enumerate() {
            if v.abs() > tol {
                vanishing[l] = false;
            }
        }
    }
    let p2 = n > 2 && (1..n - 1).any(|l| vanishing[l]);

    // λ₁ℓ(θ) bounded below for ℓ ≥ 2, and a Lipschitz probe, on θ-samples.
    let mut min_nonkernel_gap = f64::INFINITY;
    let mut lipschitz_estimate: f64 = 0.0;
    for j in [1, 3, 5] {
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for theta in &points {
            let es = eig_lj(model, carrier, j, theta)?;
            if j == 1 {
                for v in &es.lambdas[1..] {
                    min_nonkernel_gap = min_nonkernel_gap.min(v.abs());
                }
            }
            if let Some((pt, pl)) = &prev {
                let dtheta: f64 = pt.iter().zip(theta).map(|(a, b)| (a - b).abs()).sum();
                for (a, b) in pl.iter().zip(&es.lambdas) {
                    lipschitz_estimate = lipschitz_estimate.max((a - b).abs() / dtheta);
                }
            }
            prev = Some((theta.clone(), es.lambdas));
        }
    }

    Ok(NonresonanceReport {
        level,
        passed,
        threshold,
        min_margin,
        argmin,
        regularity_margin,
        lambdas,
        p1,
        p2,
        beta_range: PROBE_BETA_RANGE,
        beta_samples: PROBE_SAMPLES,
        min_nonkernel_gap,
        lipschitz_estimate,
    })
}
