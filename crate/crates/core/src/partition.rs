//! Dyadic partition of unity on the frequency lattice and the block,
//! low-frequency cut-off, paraproduct and remainder operators.
//!
//! The profile `chi` equals 1 on `|xi| <= 1` and vanishes for `|xi| >= 4/3`;
//! `phi(xi) = chi(xi / 2) - chi(xi)` lives on `3/4 <= |xi| <= 8/3`. Block `j`
//! uses `phi(2^-j k)` for `j >= 0` and `chi(k)` for `j = -1`. Because the
//! tables telescope, `chi + sum_{j <= J} phi_j = chi(2^-(J+1) k)`, which is
//! exactly 1 on `|k| <= 2^(J+1)`.

use crate::error::{Error, Result};
use crate::grid::{dft_forward, dft_inverse, raw_product, dealias, Field, Grid, SpectralField};

/// Lower edge of the smooth transition of `chi`.
pub const CHI_INNER: f64 = 1.0;
/// Radius beyond which `chi` vanishes.
pub const CHI_OUTER: f64 = 4.0 / 3.0;

fn mollifier(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// C-infinity step from 0 (x <= 0) to 1 (x >= 1).
pub fn smooth_step(x: f64) -> f64 {
    let a = mollifier(x);
    let b = mollifier(1.0 - x);
    a / (a + b)
}

/// Radial profile of the ball multiplier.
pub fn chi(xi: f64) -> f64 {
    let r = xi.abs();
    if r <= CHI_INNER {
        1.0
    } else if r >= CHI_OUTER {
        0.0
    } else {
        1.0 - smooth_step((r - CHI_INNER) / (CHI_OUTER - CHI_INNER))
    }
}

/// Radial profile of the annulus multiplier.
pub fn phi(xi: f64) -> f64 {
    chi(xi / 2.0) - chi(xi)
}

#[derive(Clone, Debug)]
pub struct DyadicPartition {
    grid: Grid,
    j_max: i32,
    radii: Vec<f64>,
    chi_table: Vec<f64>,
    phi_tables: Vec<Vec<f64>>,
}

/// Largest block index whose annulus base fits under the Nyquist radius.
pub fn j_max_for(grid: &Grid) -> i32 {
    (grid.k_nyquist() / CHI_OUTER).log2().floor() as i32
}

pub fn build_partition(grid: Grid) -> Result<DyadicPartition> {
    let j_max = j_max_for(&grid);
    if j_max < 1 {
        return Err(Error::Config(format!(
            "grid n = {} with L = {} has Nyquist wavenumber {:.4}; \
             at least blocks -1, 0, 1 are required (j_max = {j_max}); \
             increase n or shrink L",
            grid.n(),
            grid.length(),
            grid.k_nyquist()
        )));
    }
    let radii = grid.radii();
    let chi_table = radii.iter().map(|&k| chi(k)).collect();
    let phi_tables = (0..=j_max)
        .map(|j| {
            let scale = 2f64.powi(-j);
            radii.iter().map(|&k| phi(scale * k)).collect()
        })
        .collect();
    Ok(DyadicPartition {
        grid,
        j_max,
        radii,
        chi_table,
        phi_tables,
    })
}

impl DyadicPartition {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Block indices `-1..=j_max`.
    pub fn blocks(&self) -> impl Iterator<Item = i32> {
        -1..=self.j_max
    }

    pub fn block_count(&self) -> usize {
        (self.j_max + 2) as usize
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn chi_table(&self) -> &[f64] {
        &self.chi_table
    }

    /// Multiplier table of block `j`, `None` outside `-1..=j_max`.
    pub fn table(&self, j: i32) -> Option<&[f64]> {
        match j {
            -1 => Some(&self.chi_table),
            j if j >= 0 && j <= self.j_max => Some(&self.phi_tables[j as usize]),
            _ => None,
        }
    }

    /// Radius up to which the tables sum to one.
    pub fn coverage_radius(&self) -> f64 {
        2f64.powi(self.j_max + 1) * CHI_INNER
    }

    /// Outer edge of the top block's inner transition, `2^J * 4/3`.
    pub fn nominal_coverage_radius(&self) -> f64 {
        2f64.powi(self.j_max) * CHI_OUTER
    }

    /// Largest radius on which random test data may live: inside both the
    /// dealias band and the partition coverage.
    pub fn operative_radius(&self) -> f64 {
        self.nominal_coverage_radius().min(self.grid.dealias_radius())
    }

    /// Sum of all tables at each lattice point.
    pub fn unity_sum(&self) -> Vec<f64> {
        let mut acc = self.chi_table.clone();
        for t in &self.phi_tables {
            for (a, v) in acc.iter_mut().zip(t) {
                *a += v;
            }
        }
        acc
    }

    /// Rejects spectra with mass beyond the coverage radius.
    pub fn check_coverage(&self, f: &SpectralField) -> Result<()> {
        let scale = f.max_modulus();
        if scale == 0.0 {
            return Ok(());
        }
        let cover = self.coverage_radius();
        let len = self.grid.len();
        for c in 0..f.components() {
            let coeffs = f.component_coeffs(c);
            for idx in 0..len {
                let k = self.radii[idx];
                let a = coeffs[idx].norm();
                if k > cover && a > 1e-10 * scale {
                    return Err(Error::Coverage {
                        amplitude: a,
                        radius: k,
                        coverage: cover,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_grid(&self, f: &Grid) -> Result<()> {
        if *f != self.grid {
            return Err(Error::SizeMismatch(format!(
                "field grid (n = {}, L = {}) differs from partition grid (n = {}, L = {})",
                f.n(),
                f.length(),
                self.grid.n(),
                self.grid.length()
            )));
        }
        Ok(())
    }

    fn check_block(&self, j: i32) -> Result<()> {
        if j > self.j_max {
            return Err(Error::OutOfRange(format!(
                "block j = {j} exceeds j_max = {}",
                self.j_max
            )));
        }
        Ok(())
    }

    /// Block multiplier applied to a spectrum; zero for `j <= -2`.
    pub fn block_spectral(&self, j: i32, f: &SpectralField) -> Result<SpectralField> {
        self.check_grid(f.grid())?;
        self.check_block(j)?;
        Ok(match self.table(j) {
            Some(t) => f.multiplied(t),
            None => SpectralField::zeros(*f.grid(), f.components()),
        })
    }

    /// Multiplier of `S_j`, the sum of tables for blocks `<= j - 1`.
    fn cutoff_table(&self, j: i32) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.len()];
        for jj in -1..=(j - 1).min(self.j_max) {
            let t = self.table(jj).expect("block in range");
            for (a, v) in acc.iter_mut().zip(t) {
                *a += v;
            }
        }
        acc
    }

    pub fn cutoff_spectral(&self, j: i32, f: &SpectralField) -> Result<SpectralField> {
        self.check_grid(f.grid())?;
        Ok(f.multiplied(&self.cutoff_table(j)))
    }

    /// Every block of `f` in sample space, indexed from `j = -1`.
    pub fn decompose(&self, f: &Field) -> Result<Vec<Field>> {
        self.check_grid(f.grid())?;
        let spec = dft_forward(f);
        Ok(self
            .blocks()
            .map(|j| dft_inverse(&spec.multiplied(self.table(j).unwrap())))
            .collect())
    }
}

/// `Delta_j f`.
pub fn dyadic_block(p: &DyadicPartition, j: i32, f: &Field) -> Result<Field> {
    p.check_grid(f.grid())?;
    p.check_block(j)?;
    if j <= -2 {
        return Ok(Field::zeros(*f.grid(), f.components()));
    }
    Ok(dft_inverse(&p.block_spectral(j, &dft_forward(f))?))
}

/// `S_j f = sum_{j' <= j-1} Delta_{j'} f`.
pub fn low_freq_cutoff(p: &DyadicPartition, j: i32, f: &Field) -> Result<Field> {
    if j < 0 {
        return Err(Error::OutOfRange(format!("S_j requires j >= 0, got {j}")));
    }
    Ok(dft_inverse(&p.cutoff_spectral(j, &dft_forward(f))?))
}

/// Band-limited blocks and cut-offs of `u`: `(Delta_j u, S_{j-1} u)` for
/// `j = -1..=j_max`.
fn ladders(p: &DyadicPartition, u: &Field) -> Result<(Vec<Field>, Vec<Field>)> {
    p.check_grid(u.grid())?;
    let spec = dft_forward(u).dealiased();
    let blocks: Vec<Field> = p
        .blocks()
        .map(|j| dft_inverse(&spec.multiplied(p.table(j).unwrap())))
        .collect();
    let mut cuts = Vec::with_capacity(blocks.len());
    let mut running = Field::zeros(*u.grid(), u.components());
    // S_{j-1} u = sum of blocks <= j - 2.
    for (idx, _) in blocks.iter().enumerate() {
        cuts.push(running.clone());
        if idx >= 1 {
            running = running.add(&blocks[idx - 1])?;
        }
    }
    Ok((blocks, cuts))
}

fn accumulate(acc: &mut Option<Field>, term: Field) -> Result<()> {
    *acc = Some(match acc.take() {
        None => term,
        Some(a) => a.add(&term)?,
    });
    Ok(())
}

/// `T_u v = sum_j S_{j-1} u Delta_j v`, dealiased.
pub fn paraproduct(p: &DyadicPartition, u: &Field, v: &Field) -> Result<Field> {
    let (_, cuts_u) = ladders(p, u)?;
    let (blocks_v, _) = ladders(p, v)?;
    let mut acc = None;
    for (s, d) in cuts_u.iter().zip(&blocks_v) {
        accumulate(&mut acc, raw_product(s, d)?)?;
    }
    Ok(dealias(&acc.expect("at least one block")))
}

/// `R(u, v) = sum_{|k - j| <= 1} Delta_k u Delta_j v`, dealiased.
pub fn remainder(p: &DyadicPartition, u: &Field, v: &Field) -> Result<Field> {
    let (blocks_u, _) = ladders(p, u)?;
    let (blocks_v, _) = ladders(p, v)?;
    let nb = blocks_u.len();
    let mut acc = None;
    for k in 0..nb {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(nb - 1);
        let mut near = blocks_v[lo].clone();
        for b in &blocks_v[lo + 1..=hi] {
            near = near.add(b)?;
        }
        accumulate(&mut acc, raw_product(&blocks_u[k], &near)?)?;
    }
    Ok(dealias(&acc.expect("at least one block")))
}

/// Partition audit rows `(j, |k|, multiplier)` along the positive `k1` axis.
pub fn partition_rows(p: &DyadicPartition) -> Vec<(i32, f64, f64)> {
    let g = p.grid();
    let mut rows = Vec::new();
    for j in p.blocks() {
        let t = p.table(j).unwrap();
        for i1 in 0..g.n() / 2 {
            rows.push((j, g.wavenumber(i1), t[i1]));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::pointwise_product;
    use std::f64::consts::PI;

    fn part() -> DyadicPartition {
        build_partition(Grid::new(64, 8.0 * PI).unwrap()).unwrap()
    }

    #[test]
    fn profile_values() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(4.0 / 3.0), 0.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(phi(0.5), 0.0);
        assert_eq!(phi(3.0), 0.0);
        assert_eq!(phi(1.5), 1.0);
        for i in 0..1000 {
            let x = i as f64 * 0.004;
            assert!((0.0..=1.0).contains(&chi(x)));
            assert!((0.0..=1.0).contains(&phi(x)));
        }
    }

    #[test]
    fn small_grid_is_refused() {
        let g = Grid::new(64, 32.0 * PI).unwrap();
        assert!(matches!(build_partition(g), Err(Error::Config(_))));
    }

    #[test]
    fn j_max_values() {
        assert_eq!(part().j_max(), 2);
        let g = Grid::new(128, 32.0 * PI).unwrap();
        assert_eq!(build_partition(g).unwrap().j_max(), 1);
    }

    #[test]
    fn constant_lives_in_ball() {
        let p = part();
        let c = Field::constant(*p.grid(), 3.0);
        let d = dyadic_block(&p, -1, &c).unwrap();
        assert!(d.sub(&c).unwrap().max_abs() < 1e-14);
        assert!(dyadic_block(&p, 0, &c).unwrap().max_abs() < 1e-14);
        assert!(dyadic_block(&p, -3, &c).unwrap().max_abs() == 0.0);
        assert!(dyadic_block(&p, 3, &c).is_err());
        assert!(low_freq_cutoff(&p, -1, &c).is_err());
        let s1 = low_freq_cutoff(&p, 1, &c).unwrap();
        assert!(s1.sub(&c).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn cutoff_matches_block_sum() {
        let p = part();
        let g = *p.grid();
        let f = dealias(&Field::from_fn(g, |x, y| (x * 0.75).sin() * (y * 1.5).cos() + (x * 3.0).cos()));
        for j in 0..=p.j_max() + 2 {
            let mut acc = Field::zeros(g, 1);
            for jj in -1..=j - 1 {
                if jj <= p.j_max() {
                    acc = acc.add(&dyadic_block(&p, jj, &f).unwrap()).unwrap();
                }
            }
            let s = low_freq_cutoff(&p, j, &f).unwrap();
            assert!(s.sub(&acc).unwrap().max_abs() < 1e-13);
        }
    }

    #[test]
    fn trivial_bony_cases() {
        let p = part();
        let g = *p.grid();
        let u = Field::from_fn(g, |x, _| (x * 0.5).cos());
        let z = Field::zeros(g, 1);
        assert_eq!(paraproduct(&p, &u, &z).unwrap().max_abs(), 0.0);
        assert_eq!(paraproduct(&p, &z, &u).unwrap().max_abs(), 0.0);
        assert_eq!(remainder(&p, &u, &z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn bony_on_modes() {
        let p = part();
        let g = *p.grid();
        let u = Field::from_fn(g, |x, y| (x * 0.5).cos() + (y * 2.25).sin());
        let v = Field::from_fn(g, |x, y| (x * 1.75 + y).cos());
        let sum = paraproduct(&p, &u, &v)
            .unwrap()
            .add(&paraproduct(&p, &v, &u).unwrap())
            .unwrap()
            .add(&remainder(&p, &u, &v).unwrap())
            .unwrap();
        let prod = pointwise_product(&u, &v).unwrap();
        assert!(sum.sub(&prod).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn coverage_rejects_corner_mass() {
        let p = part();
        let g = *p.grid();
        let k = g.wavenumber(g.n() / 2 - 1);
        let f = Field::from_fn(g, |x, y| (k * x).cos() * (k * y).cos());
        assert!(matches!(
            p.check_coverage(&dft_forward(&f)),
            Err(Error::Coverage { .. })
        ));
        assert!(p.check_coverage(&dft_forward(&dealias(&f))).is_ok());
    }

    #[test]
    fn audit_rows_cover_every_block() {
        let p = part();
        let rows = partition_rows(&p);
        assert_eq!(rows.len(), p.block_count() * p.grid().n() / 2);
        assert_eq!(rows.first().unwrap().0, -1);
        assert_eq!(rows.last().unwrap().0, p.j_max());
    }
}
