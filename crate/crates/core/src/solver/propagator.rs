use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::linalg;
use crate::model::FriedrichsModel;
use crate::spectra::{symbol, CarrierWave};

use super::EnvelopeState;

/// Per-mode, per-harmonic `e^{iΔt c_g k} exp(-i Δt/ε L_j(εk))` for a fixed `Δt`.
#[derive(Clone, Debug)]
pub struct LinearPropagator {
    dt: f64,
    eps: f64,
    m: usize,
    comoving: bool,
    grid: Arc<SpectralGrid>,
    size: usize,
    /// `mats[h]` holds `N` row-major `n×n` blocks for `j = 2h + 1`.
    mats: Vec<Vec<Complex64>>,
}

impl LinearPropagator {
    pub fn new(
        model: &FriedrichsModel,
        carrier: &CarrierWave,
        grid: Arc<SpectralGrid>,
        m: usize,
        eps: f64,
        dt: f64,
        comoving: bool,
    ) -> Result<Self> {
        if carrier.kappa.len() != 1 || model.dim() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "spectral grid is one-dimensional; model has d = {}",
                model.dim()
            )));
        }
        if !dt.is_finite() || !eps.is_finite() || eps <= 0.0 {
            return Err(Error::InvalidArgument(format!("invalid step dt={dt}, eps={eps}")));
        }
        let n = model.size();
        let points = grid.points();
        let cg = carrier.cg[0];
        let mut mats = Vec::new();
        for j in (1..=m as i32).step_by(2) {
            let jf = j as f64;
            let mut block = vec![Complex64::new(0.0, 0.0); points * n * n];
            for (i, &k) in grid.wavenumbers().iter().enumerate() {
                let l = symbol(model, jf * carrier.omega, &[jf * carrier.kappa[0] + eps * k]);
                let eig = linalg::eig_hermitian(&l)?;
                let frame = if comoving {
                    Complex64::from_polar(1.0, dt * cg * k)
                } else {
                    Complex64::new(1.0, 0.0)
                };
                let phases: Vec<Complex64> = eig
                    .values
                    .iter()
                    .map(|lam| Complex64::from_polar(1.0, -dt * lam / eps) * frame)
                    .collect();
                let out = &mut block[i * n * n..(i + 1) * n * n];
                for r in 0..n {
                    for c in 0..n {
                        let mut s = Complex64::new(0.0, 0.0);
                        for (l, ph) in phases.iter().enumerate() {
                            s += eig.vectors[(r, l)] * ph * eig.vectors[(c, l)].conj();
                        }
                        out[r * n + c] = s;
                    }
                }
            }
            mats.push(block);
        }
        Ok(Self {
            dt,
            eps,
            m,
            comoving,
            grid,
            size: n,
            mats,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn matrix(&self, h: usize, mode: usize) -> &[Complex64] {
        let nn = self.size * self.size;
        &self.mats[h][mode * nn..(mode + 1) * nn]
    }

    pub fn matches(&self, state: &EnvelopeState, dt: f64) -> bool {
        self.dt == dt
            && self.eps == state.eps
            && self.m >= state.m
            && self.comoving == state.comoving
            && *self.grid == *state.grid
    }

    /// `max ‖U*U - I‖` over all stored blocks.
    pub fn max_unitarity_defect(&self) -> f64 {
        let n = self.size;
        let mut worst: f64 = 0.0;
        for block in &self.mats {
            for u in block.chunks(n * n) {
                for r in 0..n {
                    for c in 0..n {
                        let mut s = Complex64::new(0.0, 0.0);
                        for l in 0..n {
                            s += u[l * n + r].conj() * u[l * n + c];
                        }
                        if r == c {
                            s -= 1.0;
                        }
                        worst = worst.max(s.norm());
                    }
                }
            }
        }
        worst
    }

    /// Applies the flow to every harmonic of `state`; `dt` must be the one
    /// this propagator was built for.
    pub fn apply(&self, state: &mut EnvelopeState, dt: f64) -> Result<()> {
        if !self.matches(state, dt) {
            return Err(Error::StalePropagator(format!(
                "built for dt={}, eps={}, m={}, N={}, comoving={}; asked for dt={}, eps={}, m={}, N={}, comoving={}",
                self.dt,
                self.eps,
                self.m,
                self.grid.points(),
                self.comoving,
                dt,
                state.eps,
                state.m,
                state.grid.points(),
                state.comoving
            )));
        }
        for (h, field) in state.coeffs.iter_mut().enumerate() {
            self.apply_block(h, &mut field.values);
        }
        Ok(())
    }

    pub(crate) fn apply_block(&self, h: usize, values: &mut [Complex64]) {
        let n = self.size;
        let points = self.grid.points();
        let mats = &self.mats[h];
        if n == 2 {
            let (a, b) = values.split_at_mut(points);
            for i in 0..points {
                let u = &mats[4 * i..4 * i + 4];
                let (x, y) = (a[i], b[i]);
                a[i] = u[0] * x + u[1] * y;
                b[i] = u[2] * x + u[3] * y;
            }
            return;
        }
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..points {
            let u = &mats[i * n * n..(i + 1) * n * n];
            for c in 0..n {
                v[c] = values[c * points + i];
            }
            for r in 0..n {
                values[r * points + i] = (0..n).map(|c| u[r * n + c] * v[c]).sum();
            }
        }
    }
}
