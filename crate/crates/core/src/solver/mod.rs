//! Strang splitting for the coefficient system
//! `∂ₜû_j = -(i/ε) L_j(εk) û_j + ε Σ_{#J=j} 𝒯(û_{j₁}, û_{j₂}, û_{j₃})`,
//! optionally in co-moving coordinates (extra `+ i c_g k û_j`).

pub mod multiindex;
mod propagator;
pub mod snapshot;

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{self, Field, Space, SpectralGrid, Transform};
use crate::model::{EnvelopeProfile, FriedrichsModel};
use crate::spectra::CarrierWave;

pub use multiindex::{enumerate_multiindices, InteractionPlan};
pub use propagator::LinearPropagator;
pub use snapshot::Snapshot;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Growth factor over the initial Wiener norm that counts as blow-up.
pub const BLOW_UP_FACTOR: f64 = 1e6;

/// Fourier coefficients `û_j`, `j = 1, 3, …, m`; negative harmonics are
/// the conjugates and never stored.
#[derive(Clone, Debug)]
pub struct EnvelopeState {
    pub m: usize,
    pub eps: f64,
    pub t: f64,
    /// `coeffs[h]` is `û_{2h+1}`.
    pub coeffs: Vec<Field>,
    pub carrier: CarrierWave,
    pub grid: Arc<SpectralGrid>,
    pub comoving: bool,
}

impl EnvelopeState {
    pub fn comps(&self) -> usize {
        self.coeffs[0].comps
    }

    pub fn harmonic(&self, j: i32) -> Result<&Field> {
        if j < 1 || j % 2 == 0 || j as usize > self.m {
            return Err(Error::MissingHarmonic(j));
        }
        Ok(&self.coeffs[(j as usize - 1) / 2])
    }

    /// `Σ_j ‖û_j‖_W`.
    pub fn wiener_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|f| grid::wiener_norm_raw(&f.values, f.comps, f.points(), self.grid.dk()))
            .sum()
    }

    /// Physical-space `u_j` on the grid, in the lab frame at the current time.
    pub fn lab_frame_coeff(&self, j: i32, transform: &mut Transform) -> Result<Field> {
        let mut f = self.harmonic(j)?.clone();
        if self.comoving {
            undo_frame(&mut f, self.carrier.cg[0], self.t);
        }
        transform.inverse(&f)
    }
}

/// `û = e^{-ik c_g t} v̂`.
pub(crate) fn undo_frame(f: &mut Field, cg: f64, t: f64) {
    let ks = f.grid.wavenumbers().to_vec();
    for c in 0..f.comps {
        for (z, k) in f.component_mut(c).iter_mut().zip(&ks) {
            *z *= Complex64::from_polar(1.0, -k * cg * t);
        }
    }
}

fn check_setup(model: &FriedrichsModel, carrier: &CarrierWave, m: usize, eps: f64) -> Result<()> {
    if m % 2 == 0 {
        return Err(Error::InvalidArgument(format!("harmonic cutoff m must be odd, got {m}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
    }
    if model.dim() != 1 || carrier.kappa.len() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "spectral grid is one-dimensional; model has d = {}, carrier has {} wave-vector entries",
            model.dim(),
            carrier.kappa.len()
        )));
    }
    Ok(())
}

/// `û₁(0) = 𝓕(p₀ + ε p₁)` (Nyquist mode dropped), all other harmonics zero,
/// `t = 0`, co-moving frame.
pub fn init_state(
    model: &FriedrichsModel,
    carrier: &CarrierWave,
    profile: &EnvelopeProfile,
    grid: Arc<SpectralGrid>,
    m: usize,
    eps: f64,
) -> Result<EnvelopeState> {
    check_setup(model, carrier, m, eps)?;
    let n = model.size();
    if profile.size() != n {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} components, model has {n}",
            profile.size()
        )));
    }
    let mut transform = Transform::new(grid.clone());
    let phys = Field::from_fn(grid.clone(), n, |x| profile.sample(&[x], eps));
    let mut u1 = transform.forward(&phys)?;
    u1.set(grid.nyquist(), &vec![ZERO; n]);
    let mut coeffs = vec![u1];
    for _ in (3..=m).step_by(2) {
        coeffs.push(Field::zeros(grid.clone(), n, Space::Fourier));
    }
    Ok(EnvelopeState {
        m,
        eps,
        t: 0.0,
        coeffs,
        carrier: carrier.clone(),
        grid,
        comoving: true,
    })
}

/// Evaluates `ε Σ_{#J=j} 𝒯(û_{j₁}, û_{j₂}, û_{j₃})` for all stored `j` with
/// preplanned transforms on the 2× padded grid.
///
/// The Nyquist mode has no conjugate partner on the grid, so it is ignored on
/// input and left at zero on output.
#[derive(Debug)]
pub struct NonlinearRhs {
    plan: InteractionPlan,
    transform: Transform,
    comps: usize,
    modes: Vec<Complex64>,
    phys: Vec<Vec<Complex64>>,
    sums: Vec<Vec<Complex64>>,
}

impl NonlinearRhs {
    pub fn new(grid: Arc<SpectralGrid>, m: usize, comps: usize) -> Self {
        let plan = InteractionPlan::new(m);
        let count = plan.harmonic_count();
        let grid_points = grid.points();
        let padded = 2 * grid_points;
        Self {
            plan,
            transform: Transform::new(grid),
            comps,
            modes: vec![ZERO; grid_points],
            phys: vec![vec![ZERO; comps * padded]; count],
            sums: vec![vec![ZERO; comps * padded]; count],
        }
    }

    pub fn plan(&self) -> &InteractionPlan {
        &self.plan
    }

    /// `inputs[h]` and `out[h]` are component-major Fourier blocks of `u_{2h+1}`.
    pub fn eval(&mut self, model: &FriedrichsModel, eps: f64, inputs: &[Vec<Complex64>], out: &mut [Vec<Complex64>]) {
        let points = self.transform.grid().points();
        let padded = 2 * points;
        let n = self.comps;
        let nyq = points / 2;
        for (h, input) in inputs.iter().enumerate() {
            for c in 0..n {
                self.modes.copy_from_slice(&input[c * points..(c + 1) * points]);
                self.modes[nyq] = ZERO;
                self.transform
                    .to_padded(&self.modes, &mut self.phys[h][c * padded..(c + 1) * padded]);
            }
        }
        model
            .nonlinearity
            .harmonic_sums(&self.plan, &self.phys, n, padded, &mut self.sums);
        for (h, o) in out.iter_mut().enumerate() {
            for c in 0..n {
                self.transform.from_padded(
                    &mut self.sums[h][c * padded..(c + 1) * padded],
                    &mut o[c * points..(c + 1) * points],
                );
                o[c * points + nyq] = ZERO;
            }
            o.iter_mut().for_each(|z| *z *= eps);
        }
    }
}

/// One-off evaluation of the nonlinear right-hand side of `state`.
pub fn rhs_nonlinear(model: &FriedrichsModel, state: &EnvelopeState) -> Vec<Field> {
    let mut rhs = NonlinearRhs::new(state.grid.clone(), state.m, state.comps());
    let inputs: Vec<Vec<Complex64>> = state.coeffs.iter().map(|f| f.values.clone()).collect();
    let mut out = inputs.clone();
    rhs.eval(model, state.eps, &inputs, &mut out);
    out.into_iter()
        .map(|values| Field {
            grid: state.grid.clone(),
            comps: state.comps(),
            space: Space::Fourier,
            values,
        })
        .collect()
}

/// Observer times `t_i = i·t_final/(n_obs-1)` with a whole number of steps in
/// between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub t_final: f64,
    pub n_obs: usize,
    pub steps_per_obs: usize,
}

impl Schedule {
    /// Uses the smallest number of steps per observer interval whose step
    /// does not exceed `dt_max`.
    pub fn new(t_final: f64, dt_max: f64, n_obs: usize) -> Result<Self> {
        Self::validate(t_final, dt_max, n_obs)?;
        let interval = t_final / (n_obs - 1) as f64;
        let steps = (interval / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(Self {
            t_final,
            n_obs,
            steps_per_obs: steps,
        })
    }

    /// Requires `dt` to divide the observer interval (to `1e-9` relative).
    pub fn exact(t_final: f64, dt: f64, n_obs: usize) -> Result<Self> {
        Self::validate(t_final, dt, n_obs)?;
        let interval = t_final / (n_obs - 1) as f64;
        let ratio = interval / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
            return Err(Error::Schedule(format!(
                "observer interval {interval} is not a whole multiple of dt = {dt}"
            )));
        }
        Ok(Self {
            t_final,
            n_obs,
            steps_per_obs: steps as usize,
        })
    }

    fn validate(t_final: f64, dt: f64, n_obs: usize) -> Result<()> {
        if n_obs < 2 {
            return Err(Error::Schedule(format!("need at least 2 observer times, got {n_obs}")));
        }
        if !(t_final > 0.0 && t_final.is_finite() && dt > 0.0 && dt.is_finite()) {
            return Err(Error::Schedule(format!("invalid t_final = {t_final} or dt = {dt}")));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / ((self.n_obs - 1) * self.steps_per_obs) as f64
    }

    pub fn total_steps(&self) -> usize {
        (self.n_obs - 1) * self.steps_per_obs
    }

    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.n_obs {
            self.t_final
        } else {
            self.t_final * i as f64 / (self.n_obs - 1) as f64
        }
    }
}

/// `S(dt) = L(dt/2) ∘ N(dt) ∘ L(dt/2)` with the exact linear flow `L` and one
/// classical RK4 step `N` for the trilinear coupling.
#[derive(Debug)]
pub struct StrangIntegrator {
    model: FriedrichsModel,
    dt: f64,
    half: LinearPropagator,
    rhs: NonlinearRhs,
    y: Vec<Vec<Complex64>>,
    stage: Vec<Vec<Complex64>>,
    k: Vec<Vec<Complex64>>,
    acc: Vec<Vec<Complex64>>,
    bound: Option<f64>,
}

impl StrangIntegrator {
    pub fn new(model: &FriedrichsModel, state: &EnvelopeState, dt: f64) -> Result<Self> {
        check_setup(model, &state.carrier, state.m, state.eps)?;
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be finite and nonzero, got {dt}")));
        }
        let half = LinearPropagator::new(
            model,
            &state.carrier,
            state.grid.clone(),
            state.m,
            state.eps,
            0.5 * dt,
            state.comoving,
        )?;
        let count = state.coeffs.len();
        let len = state.comps() * state.grid.points();
        let buf = || vec![vec![ZERO; len]; count];
        let w0 = state.wiener_norm();
        Ok(Self {
            model: model.clone(),
            dt,
            half,
            rhs: NonlinearRhs::new(state.grid.clone(), state.m, state.comps()),
            y: buf(),
            stage: buf(),
            k: buf(),
            acc: buf(),
            bound: (w0 > 0.0).then_some(BLOW_UP_FACTOR * w0),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn propagator(&self) -> &LinearPropagator {
        &self.half
    }

    /// Exact linear substep with the cached half-step propagator.
    pub fn linear_flow(&self, state: &mut EnvelopeState, dt: f64) -> Result<()> {
        self.half.apply(state, dt)
    }

    /// One RK4 step of `∂ₜû = ε Σ 𝒯` (the time `state.t` is left untouched).
    pub fn nonlinear_flow(&mut self, state: &mut EnvelopeState, dt: f64) -> Result<()> {
        let eps = state.eps;
        for (y, f) in self.y.iter_mut().zip(&state.coeffs) {
            y.copy_from_slice(&f.values);
        }
        let weights = [1.0, 2.0, 2.0, 1.0];
        let offsets = [0.5, 0.5, 1.0];
        for s in 0..4 {
            let input = if s == 0 { &self.y } else { &self.stage };
            self.rhs.eval(&self.model, eps, input, &mut self.k);
            for h in 0..self.y.len() {
                let w = weights[s];
                if s == 0 {
                    for (a, k) in self.acc[h].iter_mut().zip(&self.k[h]) {
                        *a = k * w;
                    }
                } else {
                    for (a, k) in self.acc[h].iter_mut().zip(&self.k[h]) {
                        *a += k * w;
                    }
                }
                if s < 3 {
                    let c = offsets[s] * dt;
                    for ((st, y), k) in self.stage[h].iter_mut().zip(&self.y[h]).zip(&self.k[h]) {
                        *st = y + k * c;
                    }
                }
            }
        }
        for (f, (y, a)) in state.coeffs.iter_mut().zip(self.y.iter().zip(&self.acc)) {
            for ((v, y), a) in f.values.iter_mut().zip(y).zip(a) {
                *v = y + a * (dt / 6.0);
            }
        }
        self.guard(state)
    }

    fn guard(&self, state: &EnvelopeState) -> Result<()> {
        let n = state.comps();
        let points = state.grid.points();
        for (h, f) in state.coeffs.iter().enumerate() {
            for i in 0..points {
                let mag = grid::pointwise_norm(&f.values, n, points, i);
                if !mag.is_finite() {
                    return Err(Error::BlowUp {
                        t: state.t,
                        reason: format!("non-finite coefficient in harmonic {} at mode {}", 2 * h + 1, state.grid.signed(i)),
                    });
                }
                if let Some(bound) = self.bound {
                    if mag > bound {
                        return Err(Error::BlowUp {
                            t: state.t,
                            reason: format!(
                                "|u_{}({})| = {mag:.3e} exceeds {BLOW_UP_FACTOR:.0e} x initial Wiener norm",
                                2 * h + 1,
                                state.grid.wavenumbers()[i]
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn step(&mut self, state: &mut EnvelopeState) -> Result<()> {
        let half = 0.5 * self.dt;
        self.half.apply(state, half)?;
        self.nonlinear_flow(state, self.dt)?;
        self.half.apply(state, half)?;
        state.t += self.dt;
        Ok(())
    }

    pub fn advance(&mut self, state: &mut EnvelopeState, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(state)?;
        }
        Ok(())
    }

    /// Runs `schedule` from `state.t = 0`, calling `observer(i, state)` at each
    /// observer time (including `t = 0` and `t_final`).
    pub fn integrate(
        &mut self,
        state: &mut EnvelopeState,
        schedule: &Schedule,
        mut observer: impl FnMut(usize, &EnvelopeState) -> Result<()>,
    ) -> Result<()> {
        if (schedule.dt() - self.dt).abs() > 1e-15 * self.dt.abs() {
            return Err(Error::Schedule(format!(
                "integrator built for dt = {}, schedule needs dt = {}",
                self.dt,
                schedule.dt()
            )));
        }
        observer(0, state)?;
        for i in 1..schedule.n_obs {
            self.advance(state, schedule.steps_per_obs)?;
            state.t = schedule.time(i);
            observer(i, state)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generic_harmonic_sums, gaussian_profile, klein_gordon_1d, ZeroNonlinearity};
    use crate::spectra::{eig_lj, select_carrier, CarrierRule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn setup(n: usize, length: f64) -> (FriedrichsModel, CarrierWave, EnvelopeProfile, Arc<SpectralGrid>) {
        let model = klein_gordon_1d(0.7).unwrap();
        let carrier = select_carrier(&model, &[1.2], CarrierRule::Largest).unwrap();
        let profile = gaussian_profile(vec![0.5], carrier.kernel.clone()).unwrap();
        let grid = Arc::new(SpectralGrid::new(length, n).unwrap());
        (model, carrier, profile, grid)
    }

    fn max_diff(a: &EnvelopeState, b: &EnvelopeState) -> f64 {
        a.coeffs
            .iter()
            .zip(&b.coeffs)
            .flat_map(|(x, y)| x.values.iter().zip(&y.values).map(|(p, q)| (p - q).norm()))
            .fold(0.0, f64::max)
    }

    fn randomize(state: &mut EnvelopeState, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for f in &mut state.coeffs {
            for (i, z) in f.values.iter_mut().enumerate() {
                let k = state.grid.wavenumbers()[i % state.grid.points()];
                *z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (-k * k / 4.0).exp();
            }
        }
    }

    #[test]
    fn initial_state() {
        let (model, carrier, profile, grid) = setup(1 << 12, 128.0);
        let s3 = init_state(&model, &carrier, &profile, grid.clone(), 3, 0.1).unwrap();
        assert_eq!(s3.coeffs.len(), 2);
        assert!(s3.coeffs[1].values.iter().all(|z| *z == ZERO));
        assert!((grid::wiener_norm(&s3.coeffs[0]).unwrap() - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-6);
        let s1 = init_state(&model, &carrier, &profile, grid.clone(), 1, 0.05).unwrap();
        assert_eq!(s1.coeffs[0].values, s3.coeffs[0].values);
        assert!(init_state(&model, &carrier, &profile, grid.clone(), 2, 0.1).is_err());
        assert!(init_state(&model, &carrier, &profile, grid.clone(), 1, 0.0).is_err());
        let bad = gaussian_profile(vec![0.0], vec![c(1.0, 0.0); 3]).unwrap();
        assert!(matches!(
            init_state(&model, &carrier, &bad, grid, 1, 0.1),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn zero_state_has_zero_rhs() {
        let (model, carrier, profile, grid) = setup(32, 16.0);
        let mut s = init_state(&model, &carrier, &profile, grid, 3, 0.1).unwrap();
        s.coeffs[0].values.iter_mut().for_each(|z| *z = ZERO);
        for f in rhs_nonlinear(&model, &s) {
            assert!(f.values.iter().all(|z| *z == ZERO));
        }
    }

    #[test]
    fn constant_mode_rhs_is_pointwise_sum() {
        // A field whose only mode is k = 0 is constant in space, so the
        // convolution collapses to a pointwise evaluation.
        let (model, carrier, profile, grid) = setup(16, 8.0);
        let eps = 0.1;
        let mut s = init_state(&model, &carrier, &profile, grid.clone(), 1, eps).unwrap();
        s.coeffs[0].values.iter_mut().for_each(|z| *z = ZERO);
        let psi = eig_lj(&model, &carrier, 1, &[0.0]).unwrap().vector(0);
        s.coeffs[0].set(0, &psi);
        let rhs = rhs_nonlinear(&model, &s);
        // Physical value of the constant field.
        let amp = grid.dk() / (2.0 * std::f64::consts::PI).sqrt();
        let u: Vec<Complex64> = psi.iter().map(|z| z * amp).collect();
        let ub: Vec<Complex64> = u.iter().map(|z| z.conj()).collect();
        let mut expected = vec![ZERO; 2];
        for (a, b, cc) in [(&ub, &u, &u), (&u, &ub, &u), (&u, &u, &ub)] {
            for (e, t) in expected.iter_mut().zip(model.apply_t(a, b, cc)) {
                *e += t;
            }
        }
        // Back to the mode value.
        let back = 1.0 / amp;
        let got = rhs[0].at(0);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e * back * eps).norm() < 1e-13, "{g} vs {}", e * back * eps);
        }
        for i in 1..16 {
            assert!(rhs[0].at(i).iter().all(|z| z.norm() < 1e-13));
        }
    }

    #[test]
    fn real_rhs_for_real_nonlinearity() {
        // E = 0 coupling replaced by a real symmetric one keeps real fields real.
        let (model, carrier, profile, grid) = setup(32, 10.0);
        let real_t = crate::model::DotCubic::new(crate::linalg::RMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -2.0]));
        let model = model.with_nonlinearity(Arc::new(real_t));
        let mut s = init_state(&model, &carrier, &profile, grid.clone(), 3, 0.1).unwrap();
        let mut t = Transform::new(grid.clone());
        for (h, f) in s.coeffs.iter_mut().enumerate() {
            let phys = Field::from_fn(grid.clone(), 2, |x| {
                vec![c((-(x - h as f64).powi(2)).exp(), 0.0), c((x * 0.3).sin() * (-x * x / 8.0).exp(), 0.0)]
            });
            *f = t.forward(&phys).unwrap();
        }
        for f in rhs_nonlinear(&model, &s) {
            let phys = t.inverse(&f).unwrap();
            let scale = phys.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(scale > 0.0);
            assert!(phys.values.iter().all(|z| z.im.abs() <= 1e-12 * scale.max(1.0)));
        }
    }

    #[test]
    fn factorized_sums_match_triple_loop() {
        let model = klein_gordon_1d(0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [1usize, 3, 5] {
            let plan = InteractionPlan::new(m);
            let count = plan.harmonic_count();
            let points = 7;
            let harmonics: Vec<Vec<Complex64>> = (0..count)
                .map(|_| (0..2 * points).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
                .collect();
            let mut fast = vec![vec![ZERO; 2 * points]; count];
            let mut slow = fast.clone();
            model.nonlinearity.harmonic_sums(&plan, &harmonics, 2, points, &mut fast);
            generic_harmonic_sums(model.nonlinearity.as_ref(), &plan, &harmonics, 2, points, &mut slow);
            for (a, b) in fast.iter().flatten().zip(slow.iter().flatten()) {
                assert!((a - b).norm() < 1e-12, "m={m}");
            }
        }
    }

    #[test]
    fn rhs_matches_direct_convolution() {
        let (model, carrier, profile, grid) = setup(16, 7.0);
        let mut s = init_state(&model, &carrier, &profile, grid.clone(), 3, 0.2).unwrap();
        randomize(&mut s, 5);
        let conj_reflect = |f: &Field| {
            let mut out = Field::zeros(grid.clone(), 2, Space::Fourier);
            for i in 0..grid.points() {
                let r = grid.signed(i);
                if let Some(j) = grid.slot(-r) {
                    let v: Vec<Complex64> = f.at(j).iter().map(|z| z.conj()).collect();
                    out.set(i, &v);
                }
            }
            out
        };
        // The Nyquist mode does not take part in the interaction.
        for f in &mut s.coeffs {
            f.set(grid.nyquist(), &[ZERO, ZERO]);
        }
        let rhs = rhs_nonlinear(&model, &s);
        let field = |j: i32| {
            let f = &s.coeffs[(j.unsigned_abs() as usize - 1) / 2];
            if j > 0 {
                f.clone()
            } else {
                conj_reflect(f)
            }
        };
        for (h, target) in [1, 3].iter().enumerate() {
            let mut expected = Field::zeros(grid.clone(), 2, Space::Fourier);
            for [a, b, cc] in enumerate_multiindices(3, *target) {
                let term = grid::direct_trilinear_conv(&model, &field(a), &field(b), &field(cc));
                expected.axpy(c(0.2, 0.0), &term).unwrap();
            }
            expected.set(grid.nyquist(), &[ZERO, ZERO]);
            let scale = expected.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let err = rhs[h].sub(&expected).unwrap().values.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err <= 1e-10 * scale, "j={target}: {err:e}");
        }
    }

    #[test]
    fn propagator_is_unitary_and_a_semigroup() {
        let (model, carrier, profile, grid) = setup(64, 32.0);
        let p = LinearPropagator::new(&model, &carrier, grid.clone(), 5, 0.05, 0.01, true).unwrap();
        assert!(p.max_unitarity_defect() <= 1e-12);
        let p2 = LinearPropagator::new(&model, &carrier, grid.clone(), 5, 0.05, 0.02, true).unwrap();
        let mut a = init_state(&model, &carrier, &profile, grid.clone(), 5, 0.05).unwrap();
        randomize(&mut a, 1);
        let mut b = a.clone();
        p.apply(&mut a, 0.01).unwrap();
        p.apply(&mut a, 0.01).unwrap();
        p2.apply(&mut b, 0.02).unwrap();
        assert!(max_diff(&a, &b) <= 1e-12);
        assert!(matches!(p.apply(&mut b, 0.02), Err(Error::StalePropagator(_))));
        let mut other_eps = b.clone();
        other_eps.eps = 0.1;
        assert!(matches!(p.apply(&mut other_eps, 0.01), Err(Error::StalePropagator(_))));
    }

    #[test]
    fn kernel_component_is_stationary_at_zero_mode() {
        let (model, carrier, profile, grid) = setup(16, 8.0);
        let mut s = init_state(&model, &carrier, &profile, grid.clone(), 1, 0.1).unwrap();
        s.coeffs[0].values.iter_mut().for_each(|z| *z = ZERO);
        let es = eig_lj(&model, &carrier, 1, &[0.0]).unwrap();
        let v: Vec<Complex64> = (0..2).map(|i| es.psi[(i, 0)] * 0.7 + es.psi[(i, 1)] * c(0.0, 0.3)).collect();
        s.coeffs[0].set(0, &v);
        let dt = 0.37;
        let p = LinearPropagator::new(&model, &carrier, grid, 1, 0.1, dt, true).unwrap();
        p.apply(&mut s, dt).unwrap();
        let got = s.coeffs[0].at(0);
        let rot = Complex64::from_polar(1.0, -dt * es.lambdas[1] / 0.1);
        for i in 0..2 {
            let expected = es.psi[(i, 0)] * 0.7 + es.psi[(i, 1)] * c(0.0, 0.3) * rot;
            assert!((got[i] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_dynamics_is_step_size_independent() {
        let (model, carrier, profile, grid) = setup(256, 64.0);
        let model = model.with_nonlinearity(Arc::new(ZeroNonlinearity));
        let s0 = init_state(&model, &carrier, &profile, grid.clone(), 3, 0.1).unwrap();
        let w0 = s0.wiener_norm();
        let run = |dt: f64| {
            let mut s = s0.clone();
            let mut integ = StrangIntegrator::new(&model, &s, dt).unwrap();
            let sched = Schedule::exact(10.0, dt, 11).unwrap();
            let mut norms = vec![];
            integ
                .integrate(&mut s, &sched, |_, st| {
                    norms.push(st.wiener_norm());
                    Ok(())
                })
                .unwrap();
            (s, norms)
        };
        let (a, na) = run(0.05);
        let (b, _) = run(0.025);
        assert!(max_diff(&a, &b) <= 1e-12, "{:e}", max_diff(&a, &b));
        assert!(na.iter().all(|w| (w - w0).abs() <= 1e-10 * w0));
        assert!((a.t - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        let (model, carrier, profile, grid) = setup(128, 32.0);
        let eps = 0.5;
        let mut s0 = init_state(&model, &carrier, &profile, grid.clone(), 3, eps).unwrap();
        s0.coeffs[0].scale(c(3.0, 0.0));
        let mut integ = StrangIntegrator::new(&model, &s0, 0.01).unwrap();
        let mut diffs = vec![];
        for dt in [1e-2, 5e-3, 2.5e-3] {
            let mut once = s0.clone();
            integ.nonlinear_flow(&mut once, dt).unwrap();
            let mut twice = s0.clone();
            integ.nonlinear_flow(&mut twice, dt / 2.0).unwrap();
            integ.nonlinear_flow(&mut twice, dt / 2.0).unwrap();
            diffs.push(max_diff(&once, &twice));
        }
        for w in diffs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 5.0).abs() < 0.3, "{diffs:?}");
        }
    }

    #[test]
    fn nonlinear_update_is_linear_in_eps() {
        let (model, carrier, profile, grid) = setup(64, 32.0);
        let mut deltas = vec![];
        for eps in [0.02, 0.01] {
            let s0 = init_state(&model, &carrier, &profile, grid.clone(), 1, eps).unwrap();
            let mut s = s0.clone();
            let mut integ = StrangIntegrator::new(&model, &s, 1e-3).unwrap();
            integ.nonlinear_flow(&mut s, 1e-3).unwrap();
            deltas.push(max_diff(&s, &s0));
        }
        assert!((deltas[0] / deltas[1] - 2.0).abs() < 1e-4);
        let zero = model.with_nonlinearity(Arc::new(ZeroNonlinearity));
        let s0 = init_state(&zero, &carrier, &profile, grid, 1, 0.1).unwrap();
        let mut s = s0.clone();
        StrangIntegrator::new(&zero, &s, 1e-2).unwrap().nonlinear_flow(&mut s, 1e-2).unwrap();
        assert_eq!(max_diff(&s, &s0), 0.0);
    }

    #[test]
    fn one_step_only_feeds_reachable_harmonics() {
        let (model, carrier, profile, grid) = setup(128, 32.0);
        let mut s = init_state(&model, &carrier, &profile, grid.clone(), 5, 0.1).unwrap();
        let mut integ = StrangIntegrator::new(&model, &s, 1e-3).unwrap();
        let mut rhs = NonlinearRhs::new(grid, 5, 2);
        let inputs: Vec<Vec<Complex64>> = s.coeffs.iter().map(|f| f.values.clone()).collect();
        let mut out = inputs.clone();
        rhs.eval(&model, 0.1, &inputs, &mut out);
        // From u₁ alone, one interaction reaches j = 1 and 3 but not 5.
        assert!(out[1].iter().any(|z| z.norm() > 1e-8));
        assert!(out[2].iter().all(|z| *z == ZERO));
        integ.step(&mut s).unwrap();
        assert!(s.coeffs[1].values.iter().any(|z| z.norm() > 0.0));
    }

    #[test]
    fn strang_step_is_symmetric() {
        let (model, carrier, profile, grid) = setup(256, 64.0);
        let s0 = init_state(&model, &carrier, &profile, grid.clone(), 3, 0.1).unwrap();
        let mut s = s0.clone();
        let dt = 1e-3;
        StrangIntegrator::new(&model, &s, dt).unwrap().step(&mut s).unwrap();
        StrangIntegrator::new(&model, &s, -dt).unwrap().step(&mut s).unwrap();
        assert!(max_diff(&s, &s0) <= 1e-10);
        assert!(s.t.abs() < 1e-15);
    }

    #[test]
    fn blow_up_is_reported() {
        let (model, carrier, profile, grid) = setup(64, 32.0);
        let mut s = init_state(&model, &carrier, &profile, grid, 1, 1.0).unwrap();
        s.coeffs[0].scale(c(1e3, 0.0));
        let mut integ = StrangIntegrator::new(&model, &s, 0.5).unwrap();
        let err = (0..200).try_for_each(|_| integ.step(&mut s));
        assert!(matches!(err, Err(Error::BlowUp { .. })));
    }

    #[test]
    fn schedules() {
        let s = Schedule::new(15.848931924611133, 1e-3, 201).unwrap();
        assert!(s.dt() <= 1e-3);
        assert_eq!(s.steps_per_obs, 80);
        assert_eq!(s.time(200), 15.848931924611133);
        let s = Schedule::new(10.0, 1e-3, 201).unwrap();
        assert_eq!(s.steps_per_obs, 50);
        assert_eq!(s.total_steps(), 10_000);
        assert!(Schedule::exact(10.0, 1e-3, 201).is_ok());
        assert!(matches!(Schedule::exact(10.0, 3e-3, 201), Err(Error::Schedule(_))));
        assert!(Schedule::new(10.0, 1e-3, 1).is_err());
    }

    #[test]
    fn integration_is_deterministic() {
        let (model, carrier, profile, grid) = setup(128, 32.0);
        let run = || {
            let mut s = init_state(&model, &carrier, &profile, grid.clone(), 3, 0.2).unwrap();
            let mut integ = StrangIntegrator::new(&model, &s, 0.01).unwrap();
            integ.advance(&mut s, 50).unwrap();
            s
        };
        let (a, b) = (run(), run());
        for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
            assert_eq!(x.values, y.values);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let (model, carrier, profile, grid) = setup(32, 16.0);
        let mut s = init_state(&model, &carrier, &profile, grid, 3, 0.1).unwrap();
        randomize(&mut s, 9);
        s.t = 1.0 / 3.0;
        let snap = Snapshot::from_state(&s);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.snap");
        snap.save(&path).unwrap();
        let back = Snapshot::load(&path).unwrap();
        assert_eq!(back, snap);
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"svea-snapshot 1\nm 3\n"));
        assert!(Snapshot::read_from(&b"garbage\n"[..]).is_err());
    }
}
