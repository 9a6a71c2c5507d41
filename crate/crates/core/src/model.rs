//! Friedrichs systems `∂ₜu + A(∂)u + Eu/ε = ε T(u,u,u)` and initial envelopes.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, RMatrix};
use crate::solver::multiindex::InteractionPlan;

/// Pointwise trilinear map `ℂⁿ × ℂⁿ × ℂⁿ → ℂⁿ`.
///
/// Implementations must be complex-linear in every slot (the trilinear
/// extension of a real nonlinearity), so that substituting the harmonic
/// ansatz produces the phase bookkeeping `j₁ + j₂ + j₃ = j`.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn apply(&self, f1: &[Complex64], f2: &[Complex64], f3: &[Complex64], out: &mut [Complex64]);

    /// For every target `j` of `plan`, accumulates `Σ_{#J=j} T(u_{j₁}, u_{j₂}, u_{j₃})`
    /// into `out[h]` (with `j = 2h + 1`).
    ///
    /// `harmonics[h]` holds `u_{2h+1}` in physical space, component-major
    /// (`n` blocks of `points` values). Negative harmonics are the complex
    /// conjugates. Output buffers have the same layout and are overwritten.
    fn harmonic_sums(
        &self,
        plan: &InteractionPlan,
        harmonics: &[Vec<Complex64>],
        n: usize,
        points: usize,
        out: &mut [Vec<Complex64>],
    ) {
        generic_harmonic_sums(self, plan, harmonics, n, points, out);
    }
}

/// Reference implementation of [`Nonlinearity::harmonic_sums`]: one `apply`
/// per multi-index per point.
pub fn generic_harmonic_sums<T: Nonlinearity + ?Sized>(
    t: &T,
    plan: &InteractionPlan,
    harmonics: &[Vec<Complex64>],
    n: usize,
    points: usize,
    out: &mut [Vec<Complex64>],
) {
    let count = plan.harmonic_count();
    // values[slot] for slot = signed_slot(j); negative j are conjugates.
    let mut values = vec![Complex64::new(0.0, 0.0); 2 * count * n];
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    let mut term = vec![Complex64::new(0.0, 0.0); n];
    for p in 0..points {
        for h in 0..count {
            for c in 0..n {
                let z = harmonics[h][c * points + p];
                values[InteractionPlan::signed_slot(2 * h as i32 + 1, count) * n + c] = z;
                values[InteractionPlan::signed_slot(-(2 * h as i32 + 1), count) * n + c] = z.conj();
            }
        }
        for (h, triples) in plan.triples.iter().enumerate() {
            acc.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for &[a, b, c] in triples {
                let sa = InteractionPlan::signed_slot(a, count) * n;
                let sb = InteractionPlan::signed_slot(b, count) * n;
                let sc = InteractionPlan::signed_slot(c, count) * n;
                t.apply(&values[sa..sa + n], &values[sb..sb + n], &values[sc..sc + n], &mut term);
                for (x, y) in acc.iter_mut().zip(&term) {
                    *x += y;
                }
            }
            for c in 0..n {
                out[h][c * points + p] = acc[c];
            }
        }
    }
}

/// `T(f₁, f₂, f₃) = (f₁ · f₂) E f₃` with the bilinear product `f₁ · f₂ = Σ f₁ᵢ f₂ᵢ`.
///
/// On real vectors this is the Klein–Gordon type cubic term; its complex
/// extension is linear in every slot.
#[derive(Clone, Debug)]
pub struct DotCubic {
    coupling: RMatrix,
}

impl DotCubic {
    pub fn new(coupling: RMatrix) -> Self {
        Self { coupling }
    }

    fn apply_coupling(&self, v: &[Complex64], out: &mut [Complex64]) {
        let n = self.coupling.nrows();
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += v[k] * self.coupling[(i, k)];
            }
            out[i] = s;
        }
    }
}

impl Nonlinearity for DotCubic {
    fn apply(&self, f1: &[Complex64], f2: &[Complex64], f3: &[Complex64], out: &mut [Complex64]) {
        let dot: Complex64 = f1.iter().zip(f2).map(|(a, b)| a * b).sum();
        self.apply_coupling(f3, out);
        for z in out.iter_mut() {
            *z *= dot;
        }
    }

    /// Factorized evaluation: `Σ_{#J=j} (u_{j₁}·u_{j₂}) E u_{j₃} = E Σ_{j₃} S_{j-j₃} u_{j₃}`
    /// with pair sums `S_s = Σ_{j₁+j₂=s} u_{j₁}·u_{j₂}` and `S_{-s} = conj(S_s)`.
    /// Works on blocks of points so the inner loops are plain array updates.
    fn harmonic_sums(
        &self,
        plan: &InteractionPlan,
        harmonics: &[Vec<Complex64>],
        n: usize,
        points: usize,
        out: &mut [Vec<Complex64>],
    ) {
        const BLOCK: usize = 256;
        let m = plan.m as i32;
        let pairs = pair_terms(m);
        let zero = Complex64::new(0.0, 0.0);
        // sums[q] holds S_{2q} for q = 0..=m.
        let mut sums = vec![[zero; BLOCK]; m as usize + 1];
        let mut w = vec![[zero; BLOCK]; n];
        let h_of = |j: i32| (j.unsigned_abs() as usize - 1) / 2;

        for p0 in (0..points).step_by(BLOCK) {
            let len = BLOCK.min(points - p0);
            let u = |j: i32, c: usize| &harmonics[h_of(j)][c * points + p0..c * points + p0 + len];
            for (q, terms) in pairs.iter().enumerate() {
                let acc = &mut sums[q][..len];
                acc.iter_mut().for_each(|z| *z = zero);
                for &(a, b, weight) in terms {
                    for c in 0..n {
                        let (ua, ub) = (u(a, c), u(b, c));
                        // a > 0 always; only b may be a conjugated slot.
                        if b > 0 {
                            for ((s, x), y) in acc.iter_mut().zip(ua).zip(ub) {
                                *s += x * y * weight;
                            }
                        } else {
                            for ((s, x), y) in acc.iter_mut().zip(ua).zip(ub) {
                                *s += x * y.conj() * weight;
                            }
                        }
                    }
                }
            }
            for (h, &target) in plan.targets.iter().enumerate() {
                for wc in w.iter_mut() {
                    wc[..len].iter_mut().for_each(|z| *z = zero);
                }
                for j3 in (-m..=m).step_by(2) {
                    let q = (target - j3) / 2;
                    let sq = &sums[q.unsigned_abs() as usize][..len];
                    for (c, wc) in w.iter_mut().enumerate() {
                        let uc = u(j3, c);
                        let wc = &mut wc[..len];
                        match (q >= 0, j3 > 0) {
                            (true, true) => wc.iter_mut().zip(sq).zip(uc).for_each(|((o, s), x)| *o += s * x),
                            (true, false) => wc.iter_mut().zip(sq).zip(uc).for_each(|((o, s), x)| *o += s * x.conj()),
                            (false, true) => wc.iter_mut().zip(sq).zip(uc).for_each(|((o, s), x)| *o += s.conj() * x),
                            (false, false) => wc.iter_mut().zip(sq).zip(uc).for_each(|((o, s), x)| *o += (s * x).conj()),
                        }
                    }
                }
                for r in 0..n {
                    let dst = &mut out[h][r * points + p0..r * points + p0 + len];
                    dst.iter_mut().for_each(|z| *z = zero);
                    for (k, wk) in w.iter().enumerate() {
                        let e = self.coupling[(r, k)];
                        if e != 0.0 {
                            dst.iter_mut().zip(&wk[..len]).for_each(|(o, x)| *o += x * e);
                        }
                    }
                }
            }
        }
    }
}

/// For each `q = 0..=m`, the unordered pairs `(a, b)` with `a + b = 2q`,
/// `a > 0`, over `{±1, ±3, …, ±m}`, weighted 2 off the diagonal.
fn pair_terms(m: i32) -> Vec<Vec<(i32, i32, f64)>> {
    (0..=m)
        .map(|q| {
            let mut terms = Vec::new();
            for a in (1..=m).step_by(2) {
                let b = 2 * q - a;
                if b.abs() > m || (b > 0 && b > a) {
                    continue;
                }
                // With b < 0 the pair (a, b) is distinct from (b, a) as well.
                terms.push((a, b, if a == b { 1.0 } else { 2.0 }));
            }
            terms
        })
        .collect()
}

/// `T ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNonlinearity;

impl Nonlinearity for ZeroNonlinearity {
    fn apply(&self, _: &[Complex64], _: &[Complex64], _: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    }

    fn harmonic_sums(
        &self,
        _: &InteractionPlan,
        _: &[Vec<Complex64>],
        _: usize,
        _: usize,
        out: &mut [Vec<Complex64>],
    ) {
        for buf in out {
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        }
    }
}

/// Closed-form group velocity `∇ω(κ)` given `κ` and the carrier frequency `ω`.
pub type GroupVelocityFn = fn(kappa: &[f64], omega: f64) -> Vec<f64>;

/// A Friedrichs system: symmetric `A_ℓ`, skew-symmetric `E`, trilinear `T`.
///
/// The constructor only checks shapes; use [`validate_model`] for the
/// structural invariants.
#[derive(Clone)]
pub struct FriedrichsModel {
    pub name: String,
    pub a: Vec<RMatrix>,
    pub e: RMatrix,
    pub nonlinearity: Arc<dyn Nonlinearity>,
    pub group_velocity: Option<GroupVelocityFn>,
}

impl fmt::Debug for FriedrichsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FriedrichsModel")
            .field("name", &self.name)
            .field("d", &self.dim())
            .field("n", &self.size())
            .field("a", &self.a)
            .field("e", &self.e)
            .field("nonlinearity", &self.nonlinearity)
            .finish()
    }
}

impl FriedrichsModel {
    pub fn new(
        name: impl Into<String>,
        a: Vec<RMatrix>,
        e: RMatrix,
        nonlinearity: Arc<dyn Nonlinearity>,
    ) -> Result<Self> {
        let n = e.nrows();
        if a.is_empty() {
            return Err(Error::InvalidArgument("at least one spatial dimension required".into()));
        }
        if n == 0 || e.ncols() != n || a.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::DimensionMismatch(format!(
                "all coefficient matrices must be {n}x{n}"
            )));
        }
        Ok(Self {
            name: name.into(),
            a,
            e,
            nonlinearity,
            group_velocity: None,
        })
    }

    pub fn with_group_velocity(mut self, f: GroupVelocityFn) -> Self {
        self.group_velocity = Some(f);
        self
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// System dimension `n`.
    pub fn size(&self) -> usize {
        self.e.nrows()
    }

    /// `A(β) = Σ β_ℓ A_ℓ`.
    pub fn a_of(&self, beta: &[f64]) -> RMatrix {
        let n = self.size();
        let mut out = RMatrix::zeros(n, n);
        for (b, a) in beta.iter().zip(&self.a) {
            out += a * *b;
        }
        out
    }

    pub fn apply_t(&self, f1: &[Complex64], f2: &[Complex64], f3: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.size()];
        self.nonlinearity.apply(f1, f2, f3, &mut out);
        out
    }

    pub fn with_nonlinearity(&self, nonlinearity: Arc<dyn Nonlinearity>) -> Self {
        Self {
            nonlinearity,
            ..self.clone()
        }
    }
}

fn klein_gordon_coupling(gamma: f64) -> RMatrix {
    RMatrix::from_row_slice(2, 2, &[0.0, -gamma, gamma, 0.0])
}

/// One-dimensional Klein–Gordon system: `A₁ = [[0,1],[1,0]]`,
/// `E = [[0,-γ],[γ,0]]`, `T(f₁,f₂,f₃) = (f₁·f₂) E f₃`.
///
/// Ships the closed-form group velocity `κ/ω(κ)`.
pub fn klein_gordon_1d(gamma: f64) -> Result<FriedrichsModel> {
    if gamma == 0.0 || !gamma.is_finite() {
        return Err(Error::DegenerateModel(format!(
            "Klein-Gordon needs gamma != 0 (got {gamma}); E = 0 closes the dispersion gap"
        )));
    }
    let a = vec![RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])];
    let e = klein_gordon_coupling(gamma);
    let t = Arc::new(DotCubic::new(e.clone()));
    Ok(FriedrichsModel::new("klein_gordon_1d", a, e, t)?
        .with_group_velocity(|kappa, omega| kappa.iter().map(|k| k / omega).collect()))
}

/// Three-component model whose spectrum is `{+√(β²+γ²), 0, -√(β²+γ²)}`:
/// symmetric about zero and with an identically vanishing middle branch.
/// It is the smallest system with both spectral properties that break the
/// three-term non-resonance condition.
pub fn zero_branch_model(gamma: f64) -> Result<FriedrichsModel> {
    if gamma == 0.0 || !gamma.is_finite() {
        return Err(Error::DegenerateModel(format!("gamma must be nonzero (got {gamma})")));
    }
    let a = vec![RMatrix::from_row_slice(
        3,
        3,
        &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    )];
    let e = RMatrix::from_row_slice(3, 3, &[0.0, -gamma, 0.0, gamma, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let t = Arc::new(DotCubic::new(e.clone()));
    Ok(FriedrichsModel::new("zero_branch", a, e, t)?
        .with_group_velocity(|kappa, omega| kappa.iter().map(|k| k / omega).collect()))
}

/// Model lookup by name for configuration files.
pub fn model_by_name(name: &str, gamma: f64) -> Result<FriedrichsModel> {
    match name {
        "klein_gordon_1d" => klein_gordon_1d(gamma),
        "zero_branch" => zero_branch_model(gamma),
        other => Err(Error::Config(format!("unknown model '{other}'"))),
    }
}

type ProfileFn = Arc<dyn Fn(&[f64]) -> Vec<Complex64> + Send + Sync>;

/// Initial envelope `p = p₀ + ε p₁` as closed-form evaluators.
#[derive(Clone)]
pub struct EnvelopeProfile {
    size: usize,
    p0: ProfileFn,
    p1: Option<ProfileFn>,
}

impl fmt::Debug for EnvelopeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvelopeProfile")
            .field("size", &self.size)
            .field("has_correction", &self.p1.is_some())
            .finish()
    }
}

impl EnvelopeProfile {
    pub fn new(
        size: usize,
        p0: impl Fn(&[f64]) -> Vec<Complex64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            size,
            p0: Arc::new(p0),
            p1: None,
        }
    }

    pub fn with_correction(
        mut self,
        p1: impl Fn(&[f64]) -> Vec<Complex64> + Send + Sync + 'static,
    ) -> Self {
        self.p1 = Some(Arc::new(p1));
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn p0(&self, x: &[f64]) -> Vec<Complex64> {
        (self.p0)(x)
    }

    pub fn p1(&self, x: &[f64]) -> Vec<Complex64> {
        match &self.p1 {
            Some(p1) => p1(x),
            None => vec![Complex64::new(0.0, 0.0); self.size],
        }
    }

    pub fn has_correction(&self) -> bool {
        self.p1.is_some()
    }

    /// `p₀(x) + ε p₁(x)`.
    pub fn sample(&self, x: &[f64], eps: f64) -> Vec<Complex64> {
        let mut v = self.p0(x);
        if self.p1.is_some() {
            for (a, b) in v.iter_mut().zip(self.p1(x)) {
                *a += b * eps;
            }
        }
        v
    }

    /// Largest relative residual `|L p₀(x)|₂ / |p₀(x)|₂` over the sample points.
    pub fn polarization_residual(&self, symbol: &CMatrix, xs: &[Vec<f64>]) -> f64 {
        xs.iter()
            .map(|x| {
                let p = nalgebra::DVector::from_vec(self.p0(x));
                let norm = p.norm();
                if norm == 0.0 {
                    0.0
                } else {
                    (symbol * &p).norm() / norm
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `p₀(x) = exp(-|x - center|²) · direction/|direction|`, `p₁ ≡ 0`.
pub fn gaussian_profile(center: Vec<f64>, direction: Vec<Complex64>) -> Result<EnvelopeProfile> {
    let norm = direction.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidArgument("profile direction must be a nonzero vector".into()));
    }
    let dir: Vec<Complex64> = direction.iter().map(|z| z / norm).collect();
    Ok(EnvelopeProfile::new(dir.len(), move |x| {
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
        let g = (-r2).exp();
        dir.iter().map(|z| z * g).collect()
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub model: String,
    pub symmetry_residual: f64,
    pub skew_residual: f64,
    pub trilinearity_residual: f64,
    pub reality_residual: f64,
    pub tolerance: f64,
}

impl ValidationReport {
    pub fn symmetry_ok(&self) -> bool {
        self.symmetry_residual <= self.tolerance
    }
    pub fn skew_ok(&self) -> bool {
        self.skew_residual <= self.tolerance
    }
    pub fn trilinearity_ok(&self) -> bool {
        self.trilinearity_residual <= self.tolerance
    }
    pub fn reality_ok(&self) -> bool {
        self.reality_residual <= self.tolerance
    }
    pub fn passed(&self) -> bool {
        self.symmetry_ok() && self.skew_ok() && self.trilinearity_ok() && self.reality_ok()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(f, "model {}", self.model)?;
        writeln!(f, "  A_l symmetric      {:.3e}  {}", self.symmetry_residual, tag(self.symmetry_ok()))?;
        writeln!(f, "  E skew-symmetric   {:.3e}  {}", self.skew_residual, tag(self.skew_ok()))?;
        writeln!(f, "  T trilinear        {:.3e}  {}", self.trilinearity_residual, tag(self.trilinearity_ok()))?;
        writeln!(f, "  T real on reals    {:.3e}  {}", self.reality_residual, tag(self.reality_ok()))?;
        write!(f, "  overall            {}", if self.passed() { "pass" } else { "FAIL" })
    }
}

/// Structural checks on a model. Never fails; failures are carried in the report.
pub fn validate_model(model: &FriedrichsModel) -> ValidationReport {
    let tolerance = 1e-12;
    let symmetry_residual = model
        .a
        .iter()
        .map(|a| (a - a.transpose()).amax())
        .fold(0.0, f64::max);
    let skew_residual = (&model.e + model.e.transpose()).amax();

    let n = model.size();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let cvec = |rng: &mut ChaCha8Rng| -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    };
    let mut trilinearity_residual: f64 = 0.0;
    let mut reality_residual: f64 = 0.0;
    for _ in 0..8 {
        let f = cvec(&mut rng);
        let g = cvec(&mut rng);
        let h = cvec(&mut rng);
        let k = cvec(&mut rng);
        let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let b = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let combo: Vec<Complex64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        for slot in 0..3 {
            let args = |v: &[Complex64]| -> Vec<Complex64> {
                match slot {
                    0 => model.apply_t(v, &h, &k),
                    1 => model.apply_t(&h, v, &k),
                    _ => model.apply_t(&h, &k, v),
                }
            };
            let lhs = args(&combo);
            let rf = args(&f);
            let rg = args(&g);
            let scale = lhs
                .iter()
                .chain(&rf)
                .chain(&rg)
                .map(|z| z.norm())
                .fold(1.0, f64::max);
            for i in 0..n {
                let err = (lhs[i] - (a * rf[i] + b * rg[i])).norm() / scale;
                trilinearity_residual = trilinearity_residual.max(err);
            }
        }
        let re = |v: &[Complex64]| -> Vec<Complex64> { v.iter().map(|z| Complex64::new(z.re, 0.0)).collect() };
        let out = model.apply_t(&re(&f), &re(&g), &re(&h));
        let scale = out.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for z in out {
            reality_residual = reality_residual.max(z.im.abs() / scale);
        }
    }
    ValidationReport {
        model: model.name.clone(),
        symmetry_residual,
        skew_residual,
        trilinearity_residual,
        reality_residual,
        tolerance,
    }
}
