//! Measurable counterparts of the analysis: the projector onto the kernel
//! branch, the z-transform, the scaled norm, reconstruction of the
//! oscillatory field and ε-scaling probes.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{self, Field, Space, SpectralGrid, Transform};
use crate::model::{EnvelopeProfile, FriedrichsModel};
use crate::solver::{init_state, undo_frame, EnvelopeState, NonlinearRhs, Schedule, StrangIntegrator};
use crate::spectra::{eig_lj_tracked, symbol, CarrierWave, EigenSystem};

/// `EigenSystem` of `L_j(εk)` for every mode and stored harmonic, with the
/// kernel branch of `j = 1` tracked outward from `k = 0`.
#[derive(Clone, Debug)]
pub struct EigenCache {
    pub eps: f64,
    pub grid: Arc<SpectralGrid>,
    /// `systems[h][i]` for `j = 2h + 1` and mode slot `i`.
    pub systems: Vec<Vec<EigenSystem>>,
}

impl EigenCache {
    pub fn new(
        model: &FriedrichsModel,
        carrier: &CarrierWave,
        grid: Arc<SpectralGrid>,
        m: usize,
        eps: f64,
    ) -> Result<Self> {
        let n = grid.points();
        let ks = grid.wavenumbers();
        let mut systems = Vec::new();
        for j in (1..=m as i32).step_by(2) {
            let mut row: Vec<Option<EigenSystem>> = vec![None; n];
            let root = eig_lj_tracked(model, carrier, j, &[eps * ks[0]], None)?;
            // Positive wavenumbers, then negative ones down to the Nyquist mode.
            for range in [(1..n / 2).collect::<Vec<_>>(), (n / 2..n).rev().collect()] {
                let mut prev = root.vector(0);
                for i in range {
                    let es = eig_lj_tracked(model, carrier, j, &[eps * ks[i]], Some(&prev))?;
                    prev = es.vector(0);
                    row[i] = Some(es);
                }
            }
            row[0] = Some(root);
            systems.push(row.into_iter().map(Option::unwrap).collect());
        }
        Ok(Self { eps, grid, systems })
    }

    pub fn harmonics(&self) -> usize {
        self.systems.len()
    }

    fn check(&self, state: &EnvelopeState, harmonics: usize) -> Result<()> {
        if state.eps != self.eps || *state.grid != *self.grid || harmonics > self.harmonics() {
            return Err(Error::StalePropagator(format!(
                "eigen cache for eps={}, N={}, {} harmonics does not fit state eps={}, N={}, m={}",
                self.eps,
                self.grid.points(),
                self.harmonics(),
                state.eps,
                state.grid.points(),
                state.m
            )));
        }
        Ok(())
    }

    /// `ψ₁₁(εk_i)`.
    pub fn kernel_vector(&self, i: usize) -> Vec<Complex64> {
        self.systems[0][i].vector(0)
    }
}

/// `P_ε û₁` and `P_ε^⊥ û₁` with their Wiener (`L¹` in Fourier) norms.
#[derive(Clone, Debug)]
pub struct ProjectedSplit {
    pub part_in: Field,
    pub part_out: Field,
    pub norm_in: f64,
    pub norm_out: f64,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Applies the per-mode rank-one projector `ψ₁₁(εk) ψ₁₁(εk)*` to `f`.
pub fn project(cache: &EigenCache, f: &Field) -> Field {
    let mut out = Field::zeros(f.grid.clone(), f.comps, f.space);
    for i in 0..f.points() {
        let psi = cache.kernel_vector(i);
        let v = f.at(i);
        let a = dot(&psi, &v);
        let p: Vec<Complex64> = psi.iter().map(|z| z * a).collect();
        out.set(i, &p);
    }
    out
}

pub fn project_split(cache: &EigenCache, state: &EnvelopeState) -> Result<ProjectedSplit> {
    cache.check(state, 1)?;
    let u1 = state.harmonic(1)?;
    let part_in = project(cache, u1);
    let part_out = u1.sub(&part_in)?;
    Ok(ProjectedSplit {
        norm_in: grid::wiener_norm(&part_in)?,
        norm_out: grid::wiener_norm(&part_out)?,
        part_in,
        part_out,
    })
}

/// `z_j(t,k) = exp(itΛ_j(εk)/ε) Ψ_j*(εk) û_j(t,k)` for every stored `j`.
#[derive(Clone, Debug)]
pub struct TransformedState {
    /// `z[h]` for `j = 2h + 1`; component `ℓ` is the `ℓ`-th eigen-coordinate.
    pub z: Vec<Field>,
    pub t: f64,
    pub eps: f64,
}

impl TransformedState {
    pub fn harmonic(&self, j: i32) -> Result<&Field> {
        if j < 1 || j % 2 == 0 || (j as usize - 1) / 2 >= self.z.len() {
            return Err(Error::MissingHarmonic(j));
        }
        Ok(&self.z[(j as usize - 1) / 2])
    }

    /// `‖P z₁‖` and `‖P^⊥ z₁‖` (first eigen-coordinate and the rest).
    pub fn split_norms(&self) -> Result<(f64, f64)> {
        let z1 = self.harmonic(1)?;
        let n = z1.points();
        let dk = z1.grid.dk();
        let first = dk * z1.component(0).iter().map(|z| z.norm()).sum::<f64>();
        let rest = dk
            * (0..n)
                .map(|i| (1..z1.comps).map(|c| z1.values[c * n + i].norm_sqr()).sum::<f64>().sqrt())
                .sum::<f64>();
        Ok((first, rest))
    }
}

pub fn transform_z(cache: &EigenCache, state: &EnvelopeState) -> Result<TransformedState> {
    cache.check(state, state.coeffs.len())?;
    let mut z = Vec::with_capacity(state.coeffs.len());
    for (h, coeff) in state.coeffs.iter().enumerate() {
        let mut u = coeff.clone();
        if state.comoving {
            undo_frame(&mut u, state.carrier.cg[0], state.t);
        }
        let mut out = Field::zeros(u.grid.clone(), u.comps, Space::Fourier);
        for i in 0..u.points() {
            let es = &cache.systems[h][i];
            let v = u.at(i);
            let w: Vec<Complex64> = (0..es.size())
                .map(|l| {
                    let col: Vec<Complex64> = es.psi.column(l).iter().copied().collect();
                    Complex64::from_polar(1.0, state.t * es.lambdas[l] / state.eps) * dot(&col, &v)
                })
                .collect();
            out.set(i, &w);
        }
        z.push(out);
    }
    Ok(TransformedState {
        z,
        t: state.t,
        eps: state.eps,
    })
}

/// `2‖Pz₁‖ + (2/ε)‖P^⊥z₁‖ + (2/ε²)‖z₃‖`.
pub fn scaled_norm(z: &TransformedState) -> Result<f64> {
    let z3 = z.harmonic(3)?;
    let (pin, pout) = z.split_norms()?;
    let eps = z.eps;
    Ok(2.0 * pin + 2.0 / eps * pout + 2.0 / (eps * eps) * grid::wiener_norm(z3)?)
}

/// `Σ_{j>0} e^{ijφ/ε} u_j + c.c.` on the grid, with
/// `φ = κξ + (κc_g - ω)t` in co-moving coordinates (`κx - ωt` otherwise).
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub field: Field,
    /// Largest `|Im|` before it was discarded, relative to the largest entry.
    pub imag_residual: f64,
}

pub fn reconstruct(state: &EnvelopeState, transform: &mut Transform) -> Result<Reconstruction> {
    let grid = state.grid.clone();
    let n = grid.points();
    let comps = state.comps();
    let kappa = state.carrier.kappa[0];
    let omega = state.carrier.omega;
    let drift = if state.comoving {
        (kappa * state.carrier.cg[0] - omega) * state.t
    } else {
        -omega * state.t
    };
    let mut out = Field::zeros(grid.clone(), comps, Space::Physical);
    for (h, coeff) in state.coeffs.iter().enumerate() {
        let j = (2 * h + 1) as f64;
        let phys = transform.inverse(coeff)?;
        for i in 0..n {
            let phase = Complex64::from_polar(1.0, j * (kappa * grid.x(i) + drift) / state.eps);
            for c in 0..comps {
                let w = phase * phys.values[c * n + i];
                out.values[c * n + i] += w + w.conj();
            }
        }
    }
    let scale = out.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let imag = out.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    out.values.iter_mut().for_each(|z| z.im = 0.0);
    Ok(Reconstruction {
        field: out,
        imag_residual: if scale > 0.0 { imag / scale } else { 0.0 },
    })
}

/// Right-hand side of the coefficient equation for `û₁` in the lab frame,
/// `-(i/ε) L₁(εk) û₁ + ε Σ_{#J=1} 𝒯`, evaluated on `state` (returned in the
/// state's frame; the frame phase does not change per-mode norms).
pub fn rhs_u1(model: &FriedrichsModel, state: &EnvelopeState, rhs: &mut NonlinearRhs) -> Result<Field> {
    let inputs: Vec<Vec<Complex64>> = state.coeffs.iter().map(|f| f.values.clone()).collect();
    let mut out = inputs.clone();
    rhs.eval(model, state.eps, &inputs, &mut out);
    let u1 = state.harmonic(1)?;
    let n = u1.points();
    let mut field = Field {
        grid: state.grid.clone(),
        comps: u1.comps,
        space: Space::Fourier,
        values: out.swap_remove(0),
    };
    let carrier = &state.carrier;
    for (i, &k) in state.grid.wavenumbers().iter().enumerate() {
        let l = symbol(model, carrier.omega, &[carrier.kappa[0] + state.eps * k]);
        let v = u1.at(i);
        for r in 0..u1.comps {
            let lv: Complex64 = (0..u1.comps).map(|c| l[(r, c)] * v[c]).sum();
            field.values[r * n + i] += Complex64::new(0.0, -1.0 / state.eps) * lv;
        }
    }
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ProbeQuantity {
    /// `‖P_ε^⊥ û₁(t)‖_{L¹}`
    #[serde(rename = "Pperp_u1")]
    PperpU1,
    /// `‖û₃(t)‖_{L¹}`
    #[serde(rename = "u3")]
    U3,
    /// `‖P_ε ∂ₜ û₁(t)‖_{L¹}`
    #[serde(rename = "dtPeps_u1")]
    DtPepsU1,
}

impl ProbeQuantity {
    pub const ALL: [ProbeQuantity; 3] = [ProbeQuantity::PperpU1, ProbeQuantity::U3, ProbeQuantity::DtPepsU1];

    pub fn name(self) -> &'static str {
        match self {
            ProbeQuantity::PperpU1 => "Pperp_u1",
            ProbeQuantity::U3 => "u3",
            ProbeQuantity::DtPepsU1 => "dtPeps_u1",
        }
    }

    /// Expected power of ε in the ratio between successive halvings.
    pub fn order(self) -> i32 {
        match self {
            ProbeQuantity::PperpU1 => 1,
            ProbeQuantity::U3 => 2,
            ProbeQuantity::DtPepsU1 => 0,
        }
    }
}

impl std::str::FromStr for ProbeQuantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown probe quantity '{s}'")))
    }
}

/// Everything needed to run one envelope simulation per ε.
#[derive(Clone, Debug)]
pub struct ProbeSetup {
    pub model: FriedrichsModel,
    pub carrier: CarrierWave,
    pub profile: EnvelopeProfile,
    pub length: f64,
    pub points: usize,
    pub dt: f64,
    pub t_end: f64,
    pub m: usize,
    pub observers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub eps: f64,
    pub quantity: ProbeQuantity,
    pub sup_value: f64,
    /// `sup(previous ε) / sup(this ε)`; `None` on the first row.
    pub ratio_to_previous: Option<f64>,
}

/// Runs `setup` to `t_end/ε` for every ε and records the sup over observer
/// times of each quantity.
pub fn scaling_probe_all(
    setup: &ProbeSetup,
    quantities: &[ProbeQuantity],
    eps_list: &[f64],
) -> Result<Vec<ProbeRow>> {
    for w in eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Config(format!("eps list must be strictly decreasing: {eps_list:?}")));
        }
    }
    if quantities.contains(&ProbeQuantity::U3) && setup.m < 3 {
        return Err(Error::MissingHarmonic(3));
    }
    let sups: Vec<Vec<f64>> = eps_list
        .par_iter()
        .map(|&eps| probe_run(setup, quantities, eps))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (qi, &q) in quantities.iter().enumerate() {
        for (ei, &eps) in eps_list.iter().enumerate() {
            let sup = sups[ei][qi];
            rows.push(ProbeRow {
                eps,
                quantity: q,
                sup_value: sup,
                ratio_to_previous: (ei > 0).then(|| sups[ei - 1][qi] / sup),
            });
        }
    }
    Ok(rows)
}

pub fn scaling_probe(setup: &ProbeSetup, quantity: ProbeQuantity, eps_list: &[f64]) -> Result<Vec<ProbeRow>> {
    scaling_probe_all(setup, &[quantity], eps_list)
}

fn probe_run(setup: &ProbeSetup, quantities: &[ProbeQuantity], eps: f64) -> Result<Vec<f64>> {
    let grid = Arc::new(SpectralGrid::new(setup.length, setup.points)?);
    let mut state = init_state(&setup.model, &setup.carrier, &setup.profile, grid.clone(), setup.m, eps)?;
    let schedule = Schedule::new(setup.t_end / eps, setup.dt, setup.observers)?;
    let mut integ = StrangIntegrator::new(&setup.model, &state, schedule.dt())?;
    let cache = EigenCache::new(&setup.model, &setup.carrier, grid.clone(), 1, eps)?;
    let mut rhs = NonlinearRhs::new(grid, setup.m, setup.model.size());
    let mut sups = vec![0.0f64; quantities.len()];
    integ.integrate(&mut state, &schedule, |_, st| {
        for (s, q) in sups.iter_mut().zip(quantities) {
            let v = match q {
                ProbeQuantity::PperpU1 => project_split(&cache, st)?.norm_out,
                ProbeQuantity::U3 => grid::wiener_norm(st.harmonic(3)?)?,
                ProbeQuantity::DtPepsU1 => {
                    let d = rhs_u1(&setup.model, st, &mut rhs)?;
                    grid::wiener_norm(&project(&cache, &d))?
                }
            };
            *s = s.max(v);
        }
        Ok(())
    })?;
    Ok(sups)
}

/// `eps,quantity,sup_value,ratio_to_previous`
pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from("eps,quantity,sup_value,ratio_to_previous\n");
    for r in rows {
        let ratio = r.ratio_to_previous.map(|v| format!("{v:.6e}")).unwrap_or_default();
        let _ = writeln!(s, "{:e},{},{:.6e},{}", r.eps, r.quantity.name(), r.sup_value, ratio);
    }
    s
}
