//! Periodic one-dimensional spectral grid, transforms, the dealiased
//! trilinear product and discrete norms.
//!
//! Mode values approximate the continuum transform
//! `f̂(k) = (2π)^{-1/2} ∫ f(x) e^{-ikx} dx`, so a Wiener norm is just the
//! Riemann sum `Δk Σ |f̂(k_r)|₂`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::FriedrichsModel;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `x_n = -L/2 + n·dx`, `k_r = 2πr/L` for `r ∈ [-N/2, N/2)`, stored in FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    length: f64,
    n: usize,
    dx: f64,
    wavenumbers: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidArgument(format!("domain length must be positive, got {length}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("N must be a power of two >= 4, got {n}")));
        }
        let wavenumbers = (0..n).map(|i| 2.0 * PI * signed_index(i, n) as f64 / length).collect();
        Ok(Self {
            length,
            n,
            dx: length / n as f64,
            wavenumbers,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn x(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn signed(&self, i: usize) -> i64 {
        signed_index(i, self.n)
    }

    /// Storage slot of the signed mode `r`, if representable.
    pub fn slot(&self, r: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        (-half..half)
            .contains(&r)
            .then(|| r.rem_euclid(self.n as i64) as usize)
    }

    pub fn nyquist(&self) -> usize {
        self.n / 2
    }
}

fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Physical,
    Fourier,
}

impl Space {
    fn name(self) -> &'static str {
        match self {
            Space::Physical => "physical",
            Space::Fourier => "fourier",
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `ℂⁿ`-valued samples on a grid, component-major: component `c` occupies
/// `values[c·N .. (c+1)·N]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Arc<SpectralGrid>,
    pub comps: usize,
    pub space: Space,
    pub values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: Arc<SpectralGrid>, comps: usize, space: Space) -> Self {
        let values = vec![ZERO; comps * grid.points()];
        Self {
            grid,
            comps,
            space,
            values,
        }
    }

    /// Samples `f(x_n)` in physical space.
    pub fn from_fn(grid: Arc<SpectralGrid>, comps: usize, f: impl Fn(f64) -> Vec<Complex64>) -> Self {
        let n = grid.points();
        let mut field = Self::zeros(grid, comps, Space::Physical);
        for i in 0..n {
            let v = f(field.grid.x(i));
            for c in 0..comps {
                field.values[c * n + i] = v[c];
            }
        }
        field
    }

    pub fn points(&self) -> usize {
        self.grid.points()
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let n = self.points();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.points();
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Vector at grid point (or mode slot) `i`.
    pub fn at(&self, i: usize) -> Vec<Complex64> {
        let n = self.points();
        (0..self.comps).map(|c| self.values[c * n + i]).collect()
    }

    pub fn set(&mut self, i: usize, v: &[Complex64]) {
        let n = self.points();
        for (c, z) in v.iter().enumerate() {
            self.values[c * n + i] = *z;
        }
    }

    pub fn scale(&mut self, a: Complex64) {
        self.values.iter_mut().for_each(|z| *z *= a);
    }

    pub fn axpy(&mut self, a: Complex64, other: &Field) -> Result<()> {
        self.check_compatible(other)?;
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn expect_space(&self, space: Space) -> Result<()> {
        if self.space != space {
            return Err(Error::SpaceMismatch {
                expected: space.name(),
                found: self.space.name(),
            });
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.comps != other.comps {
            return Err(Error::GridMismatch(format!(
                "fields on N={} (L={}, n={}) and N={} (L={}, n={})",
                self.points(),
                self.grid.length(),
                self.comps,
                other.points(),
                other.grid.length(),
                other.comps
            )));
        }
        other.expect_space(self.space)
    }
}

/// FFT plans and scratch for one grid and its 2× padded counterpart.
pub struct Transform {
    grid: Arc<SpectralGrid>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transform").field("grid", &self.grid).finish()
    }
}

impl Transform {
    pub fn new(grid: Arc<SpectralGrid>) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let fwd2 = planner.plan_fft_forward(2 * n);
        let inv2 = planner.plan_fft_inverse(2 * n);
        let len = [&fwd, &inv, &fwd2, &inv2]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            grid,
            fwd,
            inv,
            fwd2,
            inv2,
            scratch: vec![ZERO; len],
        }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    /// Physical samples to mode values, in place on one component.
    pub fn forward_in_place(&mut self, buf: &mut [Complex64]) {
        self.fwd.process_with_scratch(buf, &mut self.scratch);
        let w = self.grid.dx() / (2.0 * PI).sqrt();
        for (i, z) in buf.iter_mut().enumerate() {
            // e^{-ik_r x_0} with x_0 = -L/2 is (-1)^r.
            *z *= if i % 2 == 0 { w } else { -w };
        }
    }

    pub fn inverse_in_place(&mut self, buf: &mut [Complex64]) {
        let w = self.grid.dk() / (2.0 * PI).sqrt();
        for (i, z) in buf.iter_mut().enumerate() {
            *z *= if i % 2 == 0 { w } else { -w };
        }
        self.inv.process_with_scratch(buf, &mut self.scratch);
    }

    pub fn forward(&mut self, field: &Field) -> Result<Field> {
        self.check_grid(field)?;
        field.expect_space(Space::Physical)?;
        let mut out = field.clone();
        out.space = Space::Fourier;
        for c in 0..out.comps {
            self.forward_in_place(out.component_mut(c));
        }
        Ok(out)
    }

    pub fn inverse(&mut self, field: &Field) -> Result<Field> {
        self.check_grid(field)?;
        field.expect_space(Space::Fourier)?;
        let mut out = field.clone();
        out.space = Space::Physical;
        for c in 0..out.comps {
            self.inverse_in_place(out.component_mut(c));
        }
        Ok(out)
    }

    /// Modes on `N` to physical samples on the `2N` grid `x_0 + n·dx/2`.
    /// `out` has length `2N`.
    pub fn to_padded(&mut self, modes: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.points();
        debug_assert_eq!(out.len(), 2 * n);
        let w = self.grid.dk() / (2.0 * PI).sqrt();
        out.iter_mut().for_each(|z| *z = ZERO);
        for (i, z) in modes.iter().enumerate() {
            let r = self.grid.signed(i);
            let slot = r.rem_euclid(2 * n as i64) as usize;
            // (-1)^r phase from x_0 = -L/2, same on both grids.
            out[slot] = if r % 2 == 0 { *z * w } else { -*z * w };
        }
        self.inv2.process_with_scratch(out, &mut self.scratch);
    }

    /// Samples on the `2N` grid back to the `N` retained modes; `padded` is
    /// clobbered.
    pub fn from_padded(&mut self, padded: &mut [Complex64], out: &mut [Complex64]) {
        let n = self.grid.points();
        debug_assert_eq!(padded.len(), 2 * n);
        self.fwd2.process_with_scratch(padded, &mut self.scratch);
        let w = 0.5 * self.grid.dx() / (2.0 * PI).sqrt();
        for (i, z) in out.iter_mut().enumerate() {
            let r = self.grid.signed(i);
            let v = padded[r.rem_euclid(2 * n as i64) as usize] * w;
            *z = if r % 2 == 0 { v } else { -v };
        }
    }

    /// `𝓕(T(f₁, f₂, f₃))` for Fourier-space fields, evaluated on the 2×
    /// padded grid and truncated back, which is alias-free for cubic products.
    pub fn trilinear_conv(&mut self, model: &FriedrichsModel, f1: &Field, f2: &Field, f3: &Field) -> Result<Field> {
        for f in [f1, f2, f3] {
            self.check_grid(f)?;
            f.expect_space(Space::Fourier)?;
            if f.comps != model.size() {
                return Err(Error::DimensionMismatch(format!(
                    "field has {} components, model has {}",
                    f.comps,
                    model.size()
                )));
            }
        }
        let n = self.grid.points();
        let comps = model.size();
        let m = 2 * n;
        let mut phys = [vec![ZERO; comps * m], vec![ZERO; comps * m], vec![ZERO; comps * m]];
        for (buf, f) in phys.iter_mut().zip([f1, f2, f3]) {
            for c in 0..comps {
                self.to_padded(f.component(c), &mut buf[c * m..(c + 1) * m]);
            }
        }
        let mut prod = vec![ZERO; comps * m];
        let (mut a, mut b, mut cc, mut o) = (vec![ZERO; comps], vec![ZERO; comps], vec![ZERO; comps], vec![ZERO; comps]);
        for p in 0..m {
            for c in 0..comps {
                a[c] = phys[0][c * m + p];
                b[c] = phys[1][c * m + p];
                cc[c] = phys[2][c * m + p];
            }
            model.nonlinearity.apply(&a, &b, &cc, &mut o);
            for c in 0..comps {
                prod[c * m + p] = o[c];
            }
        }
        let mut out = Field::zeros(self.grid.clone(), comps, Space::Fourier);
        for c in 0..comps {
            let (head, _) = out.values.split_at_mut((c + 1) * n);
            self.from_padded(&mut prod[c * m..(c + 1) * m], &mut head[c * n..]);
        }
        Ok(out)
    }

    fn check_grid(&self, field: &Field) -> Result<()> {
        if *field.grid != *self.grid {
            return Err(Error::GridMismatch(format!(
                "transform planned for N={}, L={}; field has N={}, L={}",
                self.grid.points(),
                self.grid.length(),
                field.points(),
                field.grid.length()
            )));
        }
        Ok(())
    }
}

/// `D_μ`: multiplication by `i k_μ`, Nyquist mode zeroed.
pub fn fourier_multiplier_d(field: &Field, axis: usize) -> Result<Field> {
    field.expect_space(Space::Fourier)?;
    if axis != 0 {
        return Err(Error::AxisOutOfRange { axis, dim: 1 });
    }
    let n = field.points();
    let nyq = field.grid.nyquist();
    let mut out = field.clone();
    for c in 0..field.comps {
        for (i, z) in out.component_mut(c).iter_mut().enumerate() {
            *z = if i == nyq {
                ZERO
            } else {
                *z * Complex64::new(0.0, field.grid.wavenumbers()[i])
            };
        }
    }
    debug_assert_eq!(out.values.len(), field.comps * n);
    Ok(out)
}

/// Pointwise Euclidean norm of the vector stored at slot `i`.
pub fn pointwise_norm(values: &[Complex64], comps: usize, points: usize, i: usize) -> f64 {
    (0..comps)
        .map(|c| values[c * points + i].norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `Δk Σ_r |f̂(k_r)|₂`.
pub fn wiener_norm(field: &Field) -> Result<f64> {
    field.expect_space(Space::Fourier)?;
    Ok(wiener_norm_raw(&field.values, field.comps, field.points(), field.grid.dk()))
}

pub fn wiener_norm_raw(values: &[Complex64], comps: usize, points: usize, dk: f64) -> f64 {
    dk * (0..points)
        .map(|i| pointwise_norm(values, comps, points, i))
        .sum::<f64>()
}

/// `max_n |f(x_n)|₂`.
pub fn linf_norm(field: &Field) -> Result<f64> {
    field.expect_space(Space::Physical)?;
    let n = field.points();
    Ok((0..n)
        .map(|i| pointwise_norm(&field.values, field.comps, n, i))
        .fold(0.0, f64::max))
}

/// Direct `O(N²)`-per-mode convolution: `(2π)^{-1} Δk² Σ_{a+b+c=r} T(f̂₁(a), f̂₂(b), f̂₃(c))`
/// over representable modes without wrap-around.
pub fn direct_trilinear_conv(model: &FriedrichsModel, f1: &Field, f2: &Field, f3: &Field) -> Field {
    let grid = f1.grid.clone();
    let n = grid.points() as i64;
    let comps = f1.comps;
    let scale = grid.dk() * grid.dk() / (2.0 * PI);
    let mut out = Field::zeros(grid.clone(), comps, Space::Fourier);
    let mut term = vec![ZERO; comps];
    for r in -n / 2..n / 2 {
        let mut acc = vec![ZERO; comps];
        for a in -n / 2..n / 2 {
            for b in -n / 2..n / 2 {
                let c = r - a - b;
                let Some(sc) = grid.slot(c) else { continue };
                let va = f1.at(grid.slot(a).unwrap());
                let vb = f2.at(grid.slot(b).unwrap());
                let vc = f3.at(sc);
                model.nonlinearity.apply(&va, &vb, &vc, &mut term);
                for (x, y) in acc.iter_mut().zip(&term) {
                    *x += y * scale;
                }
            }
        }
        out.set(grid.slot(r).unwrap(), &acc);
    }
    out
}
