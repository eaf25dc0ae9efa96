//! Periodic sample grid, real and spectral fields, and the exact spectral
//! operators every other module builds on.
//!
//! Layout: samples are row-major with `x1` along a row, so the sample at
//! `(i1, i2)` of component `c` sits at `c * n * n + i2 * n + i1`. Spectra use
//! the same layout with lattice index `i` standing for the integer mode
//! `m = i` for `i < n/2` and `m = i - n` otherwise.
//!
//! The forward transform carries the `1/n^2` factor, so a constant field `c`
//! has the single coefficient `c` at `m = (0, 0)` and the grid-quadrature
//! L2 norm satisfies `spacing^2 * sum |f|^2 = L^2 * sum |f_hat|^2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default period: a box of 16 unit wavelengths, `L = 2 pi * 16`.
pub const DEFAULT_LENGTH: f64 = 2.0 * PI * 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size n = {n} must be a power of two and at least 16"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Config(format!(
                "grid period L = {length} must be a positive finite number"
            )));
        }
        Ok(Grid { n, length })
    }

    pub fn with_default_length(n: usize) -> Result<Self> {
        Grid::new(n, DEFAULT_LENGTH)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of samples per component.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Lattice spacing of the frequency grid, `2 pi / L`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn k_nyquist(&self) -> f64 {
        (self.n / 2) as f64 * self.dk()
    }

    /// Integer mode for lattice index `i`.
    pub fn mode(&self, i: usize) -> i64 {
        let half = self.n / 2;
        if i < half {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    pub fn wavenumber(&self, i: usize) -> f64 {
        self.mode(i) as f64 * self.dk()
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.wavenumber(i)).collect()
    }

    /// Largest retained |m| per axis under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Radius of the largest disc contained in the dealias band.
    pub fn dealias_radius(&self) -> f64 {
        self.dealias_cutoff() as f64 * self.dk()
    }

    pub fn in_dealias_band(&self, i1: usize, i2: usize) -> bool {
        let c = self.dealias_cutoff();
        self.mode(i1).abs() <= c && self.mode(i2).abs() <= c
    }

    /// |k| at every lattice point, row-major.
    pub fn radii(&self) -> Vec<f64> {
        let ks = self.wavenumbers();
        let mut out = Vec::with_capacity(self.len());
        for k2 in &ks {
            for k1 in &ks {
                out.push((k1 * k1 + k2 * k2).sqrt());
            }
        }
        out
    }

    /// Index of the lattice point carrying mode `-m`.
    pub fn conjugate_index(&self, i: usize) -> usize {
        (self.n - i) % self.n
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::SizeMismatch(format!(
                "grid (n = {}, L = {}) does not match grid (n = {}, L = {})",
                self.n, self.length, other.n, other.length
            )));
        }
        Ok(())
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Unnormalized 2D transform of one `n x n` plane in place.
fn fft2_plane(data: &mut [Complex64], n: usize, inverse: bool, scratch: &mut Vec<Complex64>) {
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    scratch.resize(fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
    fft.process_with_scratch(data, scratch);
    transpose_square(data, n);
    fft.process_with_scratch(data, scratch);
    transpose_square(data, n);
}

/// Real samples of a scalar (1 component) or vector (2 component) field.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        assert!(components >= 1, "a field needs at least one component");
        Field {
            grid,
            components,
            values: vec![0.0; grid.len() * components],
        }
    }

    pub fn from_values(grid: Grid, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || values.len() != grid.len() * components {
            return Err(Error::SizeMismatch(format!(
                "expected {} samples for {} component(s) on n = {}, got {}",
                grid.len() * components,
                components,
                grid.n(),
                values.len()
            )));
        }
        Ok(Field {
            grid,
            components,
            values,
        })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field {
            grid,
            components: 1,
            values: vec![value; grid.len()],
        }
    }

    /// Scalar field sampled from `f(x1, x2)`.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for i2 in 0..n {
            for i1 in 0..n {
                values.push(f(grid.coordinate(i1), grid.coordinate(i2)));
            }
        }
        Field {
            grid,
            components: 1,
            values,
        }
    }

    pub fn from_components(parts: &[Field]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::SizeMismatch("no components supplied".into()))?;
        let mut values = Vec::with_capacity(first.grid.len() * parts.len());
        for p in parts {
            first.grid.ensure_same(&p.grid)?;
            if p.components != 1 {
                return Err(Error::SizeMismatch("components must be scalar fields".into()));
            }
            values.extend_from_slice(&p.values);
        }
        Ok(Field {
            grid: first.grid,
            components: parts.len(),
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component_values(&self, c: usize) -> &[f64] {
        let len = self.grid.len();
        &self.values[c * len..(c + 1) * len]
    }

    pub fn component(&self, c: usize) -> Field {
        Field {
            grid: self.grid,
            components: 1,
            values: self.component_values(c).to_vec(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Field {
            grid: self.grid,
            components: self.components,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    fn ensure_compatible(&self, other: &Field) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.components != other.components {
            return Err(Error::SizeMismatch(format!(
                "{} component(s) vs {} component(s)",
                self.components, other.components
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.linear_combination(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.linear_combination(1.0, other, -1.0)
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.ensure_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Field {
            grid: self.grid,
            components: self.components,
            values,
        })
    }

    /// Pointwise Euclidean magnitude across components.
    pub fn magnitude(&self) -> Vec<f64> {
        let len = self.grid.len();
        if self.components == 1 {
            return self.values.iter().map(|v| v.abs()).collect();
        }
        (0..len)
            .map(|i| {
                (0..self.components)
                    .map(|c| self.values[c * len + i].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Periodic roll by whole grid steps.
    pub fn shifted(&self, d1: usize, d2: usize) -> Field {
        let n = self.grid.n();
        let len = self.grid.len();
        let mut values = vec![0.0; self.values.len()];
        for c in 0..self.components {
            for i2 in 0..n {
                for i1 in 0..n {
                    values[c * len + ((i2 + d2) % n) * n + (i1 + d1) % n] =
                        self.values[c * len + i2 * n + i1];
                }
            }
        }
        Field {
            grid: self.grid,
            components: self.components,
            values,
        }
    }

    /// Grid-quadrature integral of each component.
    pub fn integral(&self, c: usize) -> f64 {
        let h = self.grid.spacing();
        h * h * self.component_values(c).iter().sum::<f64>()
    }
}

/// Spectral coefficients with the same component layout as [`Field`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    components: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        SpectralField {
            grid,
            components,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len() * components],
        }
    }

    pub fn from_coeffs(grid: Grid, components: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if components == 0 || coeffs.len() != grid.len() * components {
            return Err(Error::SizeMismatch(format!(
                "expected {} coefficients, got {}",
                grid.len() * components,
                coeffs.len()
            )));
        }
        Ok(SpectralField {
            grid,
            components,
            coeffs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn component_coeffs(&self, c: usize) -> &[Complex64] {
        let len = self.grid.len();
        &self.coeffs[c * len..(c + 1) * len]
    }

    pub fn component(&self, c: usize) -> SpectralField {
        SpectralField {
            grid: self.grid,
            components: 1,
            coeffs: self.component_coeffs(c).to_vec(),
        }
    }

    pub fn from_components(parts: &[SpectralField]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::SizeMismatch("no components supplied".into()))?;
        let mut coeffs = Vec::with_capacity(first.grid.len() * parts.len());
        for p in parts {
            first.grid.ensure_same(&p.grid)?;
            coeffs.extend_from_slice(&p.coeffs);
        }
        Ok(SpectralField {
            grid: first.grid,
            components: coeffs.len() / first.grid.len(),
            coeffs,
        })
    }

    pub fn ensure_compatible(&self, other: &SpectralField) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.components != other.components {
            return Err(Error::SizeMismatch(format!(
                "{} component(s) vs {} component(s)",
                self.components, other.components
            )));
        }
        Ok(())
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) -> Result<()> {
        self.ensure_compatible(other)?;
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y * a;
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        SpectralField {
            grid: self.grid,
            components: self.components,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// Multiply by a real lattice table, shared by all components or given
    /// per component (`table.len() == components * n^2`).
    pub fn multiplied(&self, table: &[f64]) -> SpectralField {
        let len = self.grid.len();
        let mut coeffs = self.coeffs.clone();
        if table.len() == coeffs.len() {
            for (c, m) in coeffs.iter_mut().zip(table) {
                *c *= *m;
            }
        } else {
            debug_assert_eq!(table.len(), len);
            for chunk in coeffs.chunks_mut(len) {
                for (c, m) in chunk.iter_mut().zip(table) {
                    *c *= *m;
                }
            }
        }
        SpectralField {
            grid: self.grid,
            components: self.components,
            coeffs,
        }
    }

    /// Zero the modes outside the 2/3-rule band.
    pub fn dealias_in_place(&mut self) {
        let grid = self.grid;
        let n = grid.n();
        let len = grid.len();
        for chunk in self.coeffs.chunks_mut(len) {
            for i2 in 0..n {
                for i1 in 0..n {
                    if !grid.in_dealias_band(i1, i2) {
                        chunk[i2 * n + i1] = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }

    pub fn dealiased(&self) -> SpectralField {
        let mut out = self.clone();
        out.dealias_in_place();
        out
    }

    /// Scalar to vector: multiplier `i k`. Nyquist modes are dropped.
    pub fn gradient(&self) -> Result<SpectralField> {
        if self.components != 1 {
            return Err(Error::SizeMismatch("gradient expects a scalar field".into()));
        }
        let grid = self.grid;
        let n = grid.n();
        let len = grid.len();
        let ks = derivative_wavenumbers(&grid);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * len];
        for i2 in 0..n {
            for i1 in 0..n {
                let idx = i2 * n + i1;
                let c = self.coeffs[idx];
                coeffs[idx] = c * Complex64::new(0.0, ks[i1]);
                coeffs[len + idx] = c * Complex64::new(0.0, ks[i2]);
            }
        }
        Ok(SpectralField {
            grid,
            components: 2,
            coeffs,
        })
    }

    /// Vector to scalar: multiplier `i k .`.
    pub fn divergence(&self) -> Result<SpectralField> {
        if self.components != 2 {
            return Err(Error::SizeMismatch("divergence expects a vector field".into()));
        }
        let grid = self.grid;
        let n = grid.n();
        let len = grid.len();
        let ks = derivative_wavenumbers(&grid);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len];
        for i2 in 0..n {
            for i1 in 0..n {
                let idx = i2 * n + i1;
                coeffs[idx] = self.coeffs[idx] * Complex64::new(0.0, ks[i1])
                    + self.coeffs[len + idx] * Complex64::new(0.0, ks[i2]);
            }
        }
        Ok(SpectralField {
            grid,
            components: 1,
            coeffs,
        })
    }

    /// Componentwise multiplier `-|k|^2`.
    pub fn laplacian(&self) -> SpectralField {
        let table: Vec<f64> = self.grid.radii().iter().map(|k| -k * k).collect();
        self.multiplied(&table)
    }

    /// Derivative along axis 0 (`x1`) or 1 (`x2`) of every component.
    pub fn partial(&self, axis: usize) -> SpectralField {
        let grid = self.grid;
        let n = grid.n();
        let len = grid.len();
        let ks = derivative_wavenumbers(&grid);
        let mut coeffs = self.coeffs.clone();
        for chunk in coeffs.chunks_mut(len) {
            for i2 in 0..n {
                for i1 in 0..n {
                    let k = if axis == 0 { ks[i1] } else { ks[i2] };
                    chunk[i2 * n + i1] *= Complex64::new(0.0, k);
                }
            }
        }
        SpectralField {
            grid,
            components: self.components,
            coeffs,
        }
    }

    /// Largest coefficient modulus.
    pub fn max_modulus(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Grid-consistent L2 norm, `L * sqrt(sum |c|^2)` summed over components.
    pub fn l2_norm(&self) -> f64 {
        self.grid.length() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Wavenumbers for first derivatives; the unpaired Nyquist mode maps to zero.
fn derivative_wavenumbers(grid: &Grid) -> Vec<f64> {
    let n = grid.n();
    (0..n)
        .map(|i| if i == n / 2 { 0.0 } else { grid.wavenumber(i) })
        .collect()
}

pub fn dft_forward(f: &Field) -> SpectralField {
    let grid = f.grid;
    let n = grid.n();
    let len = grid.len();
    let norm = 1.0 / len as f64;
    let mut coeffs: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut scratch = Vec::new();
    for plane in coeffs.chunks_mut(len) {
        fft2_plane(plane, n, false, &mut scratch);
        for c in plane.iter_mut() {
            *c *= norm;
        }
    }
    SpectralField {
        grid,
        components: f.components,
        coeffs,
    }
}

/// Inverse transform; the imaginary residue of a Hermitian spectrum is discarded.
pub fn dft_inverse(f: &SpectralField) -> Field {
    let grid = f.grid;
    let n = grid.n();
    let len = grid.len();
    let mut work = f.coeffs.clone();
    let mut scratch = Vec::new();
    for plane in work.chunks_mut(len) {
        fft2_plane(plane, n, true, &mut scratch);
    }
    Field {
        grid,
        components: f.components,
        values: work.into_iter().map(|c| c.re).collect(),
    }
}

pub fn gradient(f: &Field) -> Result<Field> {
    Ok(dft_inverse(&dft_forward(f).gradient()?))
}

pub fn divergence(v: &Field) -> Result<Field> {
    Ok(dft_inverse(&dft_forward(v).divergence()?))
}

pub fn laplacian(f: &Field) -> Field {
    dft_inverse(&dft_forward(f).laplacian())
}

/// All first derivatives: component `2 c + a` is `d_a f^c`.
pub fn jacobian(f: &Field) -> Field {
    let spec = dft_forward(f);
    let parts: Vec<SpectralField> = (0..f.components())
        .flat_map(|c| {
            let comp = spec.component(c);
            [comp.partial(0), comp.partial(1)]
        })
        .collect();
    dft_inverse(&SpectralField::from_components(&parts).expect("same grid"))
}

/// Projection onto the 2/3-rule band.
pub fn dealias(f: &Field) -> Field {
    dft_inverse(&dft_forward(f).dealiased())
}

/// Pointwise product of the band-limited parts of `a` and `b`, projected back
/// onto the band. Each product mode equals the exact convolution truncated to
/// `|m_i| <= n/3`. A scalar factor broadcasts over the components of the other.
pub fn pointwise_product(a: &Field, b: &Field) -> Result<Field> {
    a.grid.ensure_same(&b.grid)?;
    let pa = dealias(a);
    let pb = dealias(b);
    let raw = raw_product(&pa, &pb)?;
    Ok(dealias(&raw))
}

/// Sample-space product without any projection.
pub fn raw_product(a: &Field, b: &Field) -> Result<Field> {
    a.grid.ensure_same(&b.grid)?;
    let len = a.grid.len();
    let (comps, values) = match (a.components, b.components) {
        (x, y) if x == y => (
            x,
            a.values.iter().zip(&b.values).map(|(p, q)| p * q).collect(),
        ),
        (1, y) => (
            y,
            (0..y * len)
                .map(|i| a.values[i % len] * b.values[i])
                .collect(),
        ),
        (x, 1) => (
            x,
            (0..x * len)
                .map(|i| a.values[i] * b.values[i % len])
                .collect(),
        ),
        (x, y) => {
            return Err(Error::SizeMismatch(format!(
                "cannot multiply {x}-component and {y}-component fields"
            )))
        }
    };
    Ok(Field {
        grid: a.grid,
        components: comps,
        values,
    })
}

/// Spectral product for solver inner loops: both inputs are assumed band-limited.
pub(crate) fn product_spectral(a: &Field, b: &Field) -> Result<SpectralField> {
    let raw = raw_product(a, b)?;
    Ok(dft_forward(&raw).dealiased())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid16() -> Grid {
        Grid::new(16, 2.0 * PI * 2.0).unwrap()
    }

    fn random_field(grid: Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Field::from_values(grid, 1, values).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(8, 1.0).is_err());
        assert!(Grid::new(24, 1.0).is_err());
        assert!(Grid::new(32, 0.0).is_err());
        assert!(Grid::new(32, 1.0).is_ok());
    }

    #[test]
    fn lattice_modes() {
        let g = grid16();
        let modes: Vec<i64> = (0..16).map(|i| g.mode(i)).collect();
        assert_eq!(modes[0], 0);
        assert_eq!(modes[7], 7);
        assert_eq!(modes[8], -8);
        assert_eq!(modes[15], -1);
        assert_eq!(g.dealias_cutoff(), 5);
    }

    #[test]
    fn constant_spectrum() {
        let g = grid16();
        let s = dft_forward(&Field::constant(g, 2.5));
        assert!((s.coeffs()[0] - Complex64::new(2.5, 0.0)).norm() < 1e-14);
        let rest = s.coeffs()[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(rest < 1e-14);
    }

    #[test]
    fn cosine_has_two_modes() {
        let g = grid16();
        let l = g.length();
        let f = Field::from_fn(g, |x1, _| (2.0 * PI * x1 / l).cos());
        let s = dft_forward(&f);
        let n = g.n();
        for (idx, c) in s.coeffs().iter().enumerate() {
            let (i1, i2) = (idx % n, idx / n);
            let expected = if i2 == 0 && (i1 == 1 || i1 == n - 1) { 0.5 } else { 0.0 };
            assert!((c.re - expected).abs() < 1e-14 && c.im.abs() < 1e-14);
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        let g = Grid::new(32, 7.0).unwrap();
        for seed in 0..100 {
            let f = random_field(g, seed);
            let s = dft_forward(&f);
            let back = dft_inverse(&s);
            let err = f.sub(&back).unwrap().max_abs();
            assert!(err < 1e-12 * f.max_abs());
            let h = g.spacing();
            let phys = (h * h * f.values().iter().map(|v| v * v).sum::<f64>()).sqrt();
            assert!((phys - s.l2_norm()).abs() < 1e-11 * phys);
        }
    }

    #[test]
    fn gradient_of_sine() {
        let g = Grid::new(32, 10.0).unwrap();
        let w = 2.0 * PI / g.length();
        let f = Field::from_fn(g, |x1, _| (w * x1).sin());
        let grad = gradient(&f).unwrap();
        let expected = Field::from_fn(g, |x1, _| w * (w * x1).cos());
        assert!(grad.component(0).sub(&expected).unwrap().max_abs() < 1e-13);
        assert!(grad.component(1).max_abs() < 1e-13);
    }

    #[test]
    fn laplacian_eigenvalue() {
        let g = Grid::new(32, 10.0).unwrap();
        let (k1, k2) = (3.0 * g.dk(), -2.0 * g.dk());
        let f = Field::from_fn(g, |x1, x2| (k1 * x1 + k2 * x2).cos());
        let lap = laplacian(&f);
        let expected = f.scaled(-(k1 * k1 + k2 * k2));
        assert!(lap.sub(&expected).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        let g = Grid::new(32, 10.0).unwrap();
        let f = dealias(&random_field(g, 3));
        let lhs = divergence(&gradient(&f).unwrap()).unwrap();
        let rhs = laplacian(&f);
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-11 * rhs.max_abs());
    }

    #[test]
    fn shift_commutes_with_gradient() {
        let g = Grid::new(32, 10.0).unwrap();
        let f = random_field(g, 11);
        let a = dft_forward(&gradient(&f.shifted(3, 5)).unwrap());
        let b = dft_forward(&gradient(&f).unwrap().shifted(3, 5));
        let diff = a
            .coeffs()
            .iter()
            .zip(b.coeffs())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-14 * a.max_modulus().max(1.0));
    }

    #[test]
    fn product_with_one_is_identity_on_band() {
        let g = Grid::new(32, 10.0).unwrap();
        let f = dealias(&random_field(g, 5));
        let p = pointwise_product(&f, &Field::constant(g, 1.0)).unwrap();
        assert!(p.sub(&f).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn cosine_square_identity() {
        let g = Grid::new(32, 10.0).unwrap();
        let k = 3.0 * g.dk();
        let f = Field::from_fn(g, |x1, _| (k * x1).cos());
        let p = pointwise_product(&f, &f).unwrap();
        let expected = Field::from_fn(g, |x1, _| 0.5 * (1.0 + (2.0 * k * x1).cos()));
        assert!(p.sub(&expected).unwrap().max_abs() < 1e-11);
    }

    /// Direct O(n^4) convolution truncated to the dealias band.
    #[test]
    fn product_matches_truncated_convolution() {
        let g = grid16();
        let n = g.n() as i64;
        let a = random_field(g, 21);
        let b = random_field(g, 22);
        let sa = dft_forward(&a);
        let sb = dft_forward(&b);
        let cut = g.dealias_cutoff();
        let idx = |m: i64| (m.rem_euclid(n)) as usize;
        let coeff = |s: &SpectralField, m1: i64, m2: i64| -> Complex64 {
            if m1.abs() > cut || m2.abs() > cut {
                Complex64::new(0.0, 0.0)
            } else {
                s.coeffs()[idx(m2) * n as usize + idx(m1)]
            }
        };
        let got = dft_forward(&pointwise_product(&a, &b).unwrap());
        for m2 in -n / 2..n / 2 {
            for m1 in -n / 2..n / 2 {
                let mut acc = Complex64::new(0.0, 0.0);
                if m1.abs() <= cut && m2.abs() <= cut {
                    for p2 in -cut..=cut {
                        for p1 in -cut..=cut {
                            acc += coeff(&sa, p1, p2) * coeff(&sb, m1 - p1, m2 - p2);
                        }
                    }
                }
                let c = got.coeffs()[idx(m2) * n as usize + idx(m1)];
                assert!((c - acc).norm() < 1e-13, "mode ({m1},{m2})");
            }
        }
    }

    #[test]
    fn product_symmetric_and_bilinear() {
        let g = Grid::new(32, 10.0).unwrap();
        let a = random_field(g, 1);
        let b = random_field(g, 2);
        let c = random_field(g, 3);
        let ab = pointwise_product(&a, &b).unwrap();
        let ba = pointwise_product(&b, &a).unwrap();
        assert!(ab.sub(&ba).unwrap().max_abs() < 1e-14);
        let lhs = pointwise_product(&a.linear_combination(2.0, &c, -3.0).unwrap(), &b).unwrap();
        let rhs = ab
            .linear_combination(2.0, &pointwise_product(&c, &b).unwrap(), -3.0)
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn hermitian_spectrum_of_real_field() {
        let g = grid16();
        let s = dft_forward(&random_field(g, 9));
        let n = g.n();
        for i2 in 0..n {
            for i1 in 0..n {
                let c = s.coeffs()[i2 * n + i1];
                let d = s.coeffs()[g.conjugate_index(i2) * n + g.conjugate_index(i1)];
                assert!((c - d.conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn size_mismatch_is_reported() {
        let a = Field::zeros(grid16(), 1);
        let b = Field::zeros(Grid::new(32, 1.0).unwrap(), 1);
        assert!(matches!(pointwise_product(&a, &b), Err(Error::SizeMismatch(_))));
        assert!(Field::from_values(grid16(), 1, vec![0.0; 3]).is_err());
    }
}
