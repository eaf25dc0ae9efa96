//! Lebesgue, Besov, Sobolev and Chemin-Lerner norms.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{dft_forward, dft_inverse, Field};
use crate::partition::DyadicPartition;

/// An exponent in `[1, inf]`; infinity serializes as the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 1.0 {
            return Err(Error::Config(format!(
                "exponent {value} must lie in [1, inf]"
            )));
        }
        Ok(Exponent(value))
    }

    pub fn finite(value: f64) -> Self {
        Exponent::new(value).expect("exponent must be >= 1")
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `1 / value`, zero at infinity.
    pub fn reciprocal(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0
        }
    }

    /// Exponent with the given reciprocal.
    pub fn from_reciprocal(inv: f64) -> Result<Self> {
        if inv == 0.0 {
            Ok(Exponent::INFINITY)
        } else {
            Exponent::new(1.0 / inv)
        }
    }

    /// Holder conjugate `p'`.
    pub fn conjugate(self) -> Exponent {
        let inv = 1.0 - self.reciprocal();
        if inv <= 0.0 {
            Exponent::INFINITY
        } else {
            Exponent(1.0 / inv)
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::INFINITY),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| Error::Config(format!("cannot parse exponent {s:?}")))?;
                Exponent::new(v)
            }
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Exponent;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a number >= 1 or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Exponent, E> {
                Exponent::new(v).map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Exponent, E> {
                self.visit_f64(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Exponent, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Exponent, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovParams {
    pub s: f64,
    pub p: Exponent,
    pub r: Exponent,
}

impl BesovParams {
    pub fn new(s: f64, p: f64, r: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::Config(format!("smoothness s = {s} must be finite")));
        }
        Ok(BesovParams {
            s,
            p: Exponent::new(p)?,
            r: Exponent::new(r)?,
        })
    }

    pub fn with_s(self, s: f64) -> Self {
        BesovParams { s, ..self }
    }
}

/// `l^r` norm of a nonnegative sequence; `max` for `r = inf`.
pub fn lr_aggregate(values: &[f64], r: Exponent) -> f64 {
    if r.is_infinite() {
        return values.iter().copied().fold(0.0, f64::max);
    }
    let q = r.value();
    if q == 1.0 {
        return values.iter().sum();
    }
    let top = values.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    // Scaled to avoid overflow for large q.
    top * values.iter().map(|v| (v / top).powf(q)).sum::<f64>().powf(1.0 / q)
}

fn lp_of_magnitudes(mags: &[f64], spacing: f64, p: Exponent) -> f64 {
    if p.is_infinite() {
        return mags.iter().copied().fold(0.0, f64::max);
    }
    let q = p.value();
    let top = mags.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    let w = spacing * spacing;
    top * (w * mags.iter().map(|m| (m / top).powf(q)).sum::<f64>()).powf(1.0 / q)
}

/// Grid-quadrature `L^p` norm, pointwise Euclidean across components.
pub fn lp_norm(f: &Field, p: Exponent) -> f64 {
    lp_of_magnitudes(&f.magnitude(), f.grid().spacing(), p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub params: BesovParams,
    pub per_block: Vec<(i32, f64)>,
    pub total: f64,
}

/// `||Delta_j f||_{L^p}` for `j = -1..=j_max` after a coverage check.
pub fn block_lp_norms(part: &DyadicPartition, f: &Field, p: Exponent) -> Result<Vec<f64>> {
    if f.grid() != part.grid() {
        return Err(Error::SizeMismatch("field and partition grids differ".into()));
    }
    let spec = dft_forward(f);
    part.check_coverage(&spec)?;
    Ok(part
        .blocks()
        .map(|j| lp_norm(&dft_inverse(&spec.multiplied(part.table(j).unwrap())), p))
        .collect())
}

/// Weighted ladder `2^{js} x_j` from raw block norms starting at `j = -1`.
pub fn weighted_ladder(raw: &[f64], s: f64) -> Vec<(i32, f64)> {
    raw.iter()
        .enumerate()
        .map(|(i, v)| {
            let j = i as i32 - 1;
            (j, 2f64.powf(j as f64 * s) * v)
        })
        .collect()
}

pub fn besov_from_blocks(raw: &[f64], params: BesovParams) -> NormReport {
    let per_block = weighted_ladder(raw, params.s);
    let vals: Vec<f64> = per_block.iter().map(|(_, v)| *v).collect();
    NormReport {
        params,
        total: lr_aggregate(&vals, params.r),
        per_block,
    }
}

pub fn besov_norm(part: &DyadicPartition, f: &Field, params: BesovParams) -> Result<NormReport> {
    let raw = block_lp_norms(part, f, params.p)?;
    Ok(besov_from_blocks(&raw, params))
}

/// `||f||_{H^s} = L (sum (1 + |k|^2)^s |f_hat|^2)^{1/2}`.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let spec = dft_forward(f);
    let radii = f.grid().radii();
    let len = f.grid().len();
    let mut acc = 0.0;
    for c in 0..f.components() {
        for (coef, k) in spec.component_coeffs(c).iter().zip(&radii) {
            acc += (1.0 + k * k).powf(s) * coef.norm_sqr();
        }
    }
    debug_assert_eq!(radii.len(), len);
    f.grid().length() * acc.sqrt()
}

/// Per-snapshot raw block norms of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSeries {
    pub times: Vec<f64>,
    /// `blocks[snapshot][j + 1] = ||Delta_j f(t)||_{L^p}`.
    pub blocks: Vec<Vec<f64>>,
    pub p: Exponent,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Precondition("trajectory is empty".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("trajectory times are not sorted".into()));
    }
    Ok(())
}

/// `L^rho` norm in time of samples `g` by the trapezoid rule on `|g|^rho`.
pub fn time_norm(times: &[f64], g: &[f64], rho: Exponent) -> f64 {
    if rho.is_infinite() {
        return g.iter().copied().fold(0.0, f64::max);
    }
    let q = rho.value();
    let mut acc = 0.0;
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        acc += 0.5 * dt * (g[i - 1].powf(q) + g[i].powf(q));
    }
    acc.powf(1.0 / q)
}

impl BlockSeries {
    pub fn from_trajectory(
        part: &DyadicPartition,
        trajectory: &[(f64, Field)],
        p: Exponent,
    ) -> Result<Self> {
        let times: Vec<f64> = trajectory.iter().map(|(t, _)| *t).collect();
        check_times(&times)?;
        let blocks = trajectory
            .iter()
            .map(|(_, f)| block_lp_norms(part, f, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockSeries { times, blocks, p })
    }

    fn block_count(&self) -> usize {
        self.blocks[0].len()
    }

    /// `||Delta_j f||_{L^rho_T(L^p)}` per block.
    pub fn block_time_norms(&self, rho: Exponent) -> Vec<f64> {
        (0..self.block_count())
            .map(|b| {
                let g: Vec<f64> = self.blocks.iter().map(|row| row[b]).collect();
                time_norm(&self.times, &g, rho)
            })
            .collect()
    }

    pub fn chemin_lerner(&self, rho: Exponent, s: f64, r: Exponent) -> TrajectoryNorm {
        let raw = self.block_time_norms(rho);
        let per_block_time = weighted_ladder(&raw, s);
        let vals: Vec<f64> = per_block_time.iter().map(|(_, v)| *v).collect();
        TrajectoryNorm {
            rho,
            params: BesovParams { s, p: self.p, r },
            total: lr_aggregate(&vals, r),
            per_block_time,
        }
    }

    /// `||f(t)||_{B^s_{p,r}}` at each snapshot.
    pub fn snapshot_norms(&self, s: f64, r: Exponent) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|row| {
                let vals: Vec<f64> = weighted_ladder(row, s).into_iter().map(|(_, v)| v).collect();
                lr_aggregate(&vals, r)
            })
            .collect()
    }

    /// `||f||_{L^rho_T(B^s_{p,r})}` with the time norm outside.
    pub fn lebesgue_besov(&self, rho: Exponent, s: f64, r: Exponent) -> f64 {
        time_norm(&self.times, &self.snapshot_norms(s, r), rho)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryNorm {
    pub rho: Exponent,
    pub params: BesovParams,
    pub per_block_time: Vec<(i32, f64)>,
    pub total: f64,
}

pub fn chemin_lerner_norm(
    part: &DyadicPartition,
    trajectory: &[(f64, Field)],
    rho: Exponent,
    params: BesovParams,
) -> Result<TrajectoryNorm> {
    let series = BlockSeries::from_trajectory(part, trajectory, params.p)?;
    Ok(series.chemin_lerner(rho, params.s, params.r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::partition::build_partition;
    use std::f64::consts::PI;

    fn part() -> DyadicPartition {
        build_partition(Grid::new(64, 8.0 * PI).unwrap()).unwrap()
    }

    #[test]
    fn exponent_serde() {
        let e: Exponent = serde_json::from_str("\"inf\"").unwrap();
        assert!(e.is_infinite());
        assert_eq!(serde_json::to_string(&e).unwrap(), "\"inf\"");
        let f: Exponent = serde_json::from_str("2").unwrap();
        assert_eq!(f.value(), 2.0);
        assert!(serde_json::from_str::<Exponent>("0.5").is_err());
        assert_eq!(Exponent::finite(2.0).conjugate().value(), 2.0);
        assert!(Exponent::finite(1.0).conjugate().is_infinite());
    }

    #[test]
    fn lp_basics() {
        let g = Grid::new(32, 10.0).unwrap();
        assert_eq!(lp_norm(&Field::zeros(g, 1), Exponent::finite(2.0)), 0.0);
        assert_eq!(lp_norm(&Field::constant(g, -3.0), Exponent::INFINITY), 3.0);
        let l = g.length();
        let f = Field::from_fn(g, |x, _| (2.0 * PI * x / l).cos());
        assert!((lp_norm(&f, Exponent::finite(2.0)) - l / 2f64.sqrt()).abs() < 1e-12);
        assert!((lp_norm(&Field::constant(g, 1.0), Exponent::finite(1.0)) - l * l).abs() < 1e-9);
    }

    #[test]
    fn lr_cases() {
        let v = [3.0, 4.0];
        assert_eq!(lr_aggregate(&v, Exponent::finite(1.0)), 7.0);
        assert!((lr_aggregate(&v, Exponent::finite(2.0)) - 5.0).abs() < 1e-15);
        assert_eq!(lr_aggregate(&v, Exponent::INFINITY), 4.0);
    }

    #[test]
    fn zero_and_total_consistency() {
        let p = part();
        let g = *p.grid();
        let params = BesovParams::new(1.5, 2.0, 2.0).unwrap();
        assert_eq!(besov_norm(&p, &Field::zeros(g, 1), params).unwrap().total, 0.0);
        let f = Field::from_fn(g, |x, y| (0.5 * x).sin() + (1.5 * y).cos());
        let rep = besov_norm(&p, &f, params).unwrap();
        let vals: Vec<f64> = rep.per_block.iter().map(|b| b.1).collect();
        let direct = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((rep.total - direct).abs() < 1e-13 * direct);
    }

    #[test]
    fn sobolev_single_mode() {
        let g = Grid::new(32, 10.0).unwrap();
        let k = 3.0 * g.dk();
        let f = Field::from_fn(g, |x, _| (k * x).cos());
        let s = 1.3;
        let expected = (1.0 + k * k).powf(s / 2.0) * lp_norm(&f, Exponent::finite(2.0));
        assert!((sobolev_norm(&f, s) - expected).abs() < 1e-12 * expected);
        assert_eq!(sobolev_norm(&Field::zeros(g, 1), s), 0.0);
    }

    #[test]
    fn chemin_lerner_trivial_cases() {
        let p = part();
        let g = *p.grid();
        let f = Field::from_fn(g, |x, _| (0.75 * x).cos());
        let params = BesovParams::new(1.0, 2.0, 2.0).unwrap();
        let traj: Vec<(f64, Field)> = (0..4).map(|i| (i as f64 * 0.1, f.clone())).collect();
        let cl = chemin_lerner_norm(&p, &traj, Exponent::INFINITY, params).unwrap();
        let b = besov_norm(&p, &f, params).unwrap();
        assert!((cl.total - b.total).abs() < 1e-14 * b.total);
        let single = chemin_lerner_norm(&p, &traj[..1], Exponent::finite(1.0), params).unwrap();
        assert_eq!(single.total, 0.0);
        assert!(chemin_lerner_norm(&p, &[], Exponent::finite(1.0), params).is_err());
    }
}
