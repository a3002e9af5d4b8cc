//! Random radii, the breather potential and equidistributed ball indicators.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{assemble_hamiltonian, GridSpec, HamiltonianMatrix, MagneticSpec};
use crate::rng;

/// Radii may exceed the support of μ after shifting, but never 1/2.
pub const MAX_RADIUS: f64 = 0.5;
const SHIFT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Density {
    Uniform,
    /// Density proportional to `1 + slope·t` with `t = (λ - ω₋)/(ω₊ - ω₋)`;
    /// requires `slope ≥ -1`.
    TruncatedLinear { slope: f64 },
}

/// Single-site distribution μ on `[ω₋, ω₊]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub omega_minus: f64,
    pub omega_plus: f64,
    pub density: Density,
}

impl MeasureSpec {
    pub fn new(omega_minus: f64, omega_plus: f64, density: Density) -> Result<Self> {
        let m = MeasureSpec { omega_minus, omega_plus, density };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(omega_minus: f64, omega_plus: f64) -> Result<Self> {
        Self::new(omega_minus, omega_plus, Density::Uniform)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.omega_minus, self.omega_plus);
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi < 0.5) {
            return Err(Error::invalid(format!(
                "need 0 ≤ ω₋ < ω₊ < 1/2, got ω₋ = {lo}, ω₊ = {hi}"
            )));
        }
        if let Density::TruncatedLinear { slope } = self.density {
            if !(slope.is_finite() && slope >= -1.0) {
                return Err(Error::invalid(format!("truncated_linear slope must be ≥ -1, got {slope}")));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.omega_plus - self.omega_minus
    }

    fn slope(&self) -> f64 {
        match self.density {
            Density::Uniform => 0.0,
            Density::TruncatedLinear { slope } => slope,
        }
    }

    /// The density ν_μ; zero outside `[ω₋, ω₊]`.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.omega_minus || x > self.omega_plus {
            return 0.0;
        }
        let s = self.slope();
        let t = (x - self.omega_minus) / self.width();
        (1.0 + s * t) / (self.width() * (1.0 + 0.5 * s))
    }

    /// `‖ν_μ‖_∞`.
    pub fn density_sup(&self) -> f64 {
        let s = self.slope();
        1.0f64.max(1.0 + s) / (self.width() * (1.0 + 0.5 * s))
    }

    pub fn mean(&self) -> f64 {
        let s = self.slope();
        let t = (0.5 + s / 3.0) / (1.0 + 0.5 * s);
        self.omega_minus + self.width() * t
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let s = self.slope();
        // F(t) = (t + s t²/2) / (1 + s/2); stable root of s/2 t² + t - u(1 + s/2) = 0
        let q = u * (1.0 + 0.5 * s);
        let t = if s == 0.0 { u } else { 2.0 * q / (1.0 + (1.0 + 2.0 * s * q).max(0.0).sqrt()) };
        self.omega_minus + self.width() * t.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SingleSiteShape {
    /// Open ball `B_ω(j)`.
    #[default]
    Ball,
    /// Open cube `Λ_2ω(j)`.
    Cube,
}

/// One realization of the radii `ω_j` for `j ∈ Λ_L ∩ ℤ^d`, lexicographic.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaSample {
    dim: usize,
    box_side: usize,
    values: Vec<f64>,
}

impl OmegaSample {
    pub fn new(dim: usize, box_side: usize, values: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) || box_side % 2 == 0 {
            return Err(Error::invalid("OmegaSample needs d ∈ {1,2,3} and odd L"));
        }
        if values.len() != box_side.pow(dim as u32) {
            return Err(Error::invalid(format!(
                "expected {} radii for L = {box_side}, d = {dim}, got {}",
                box_side.pow(dim as u32),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= MAX_RADIUS)) {
            return Err(Error::invalid(format!("radius {v} outside [0, 1/2]")));
        }
        Ok(OmegaSample { dim, box_side, values })
    }

    /// Every site set to the same radius.
    pub fn constant(dim: usize, box_side: usize, value: f64) -> Result<Self> {
        Self::new(dim, box_side, vec![value; box_side.pow(dim as u32)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn box_side(&self) -> usize {
        self.box_side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_sites(&self) -> usize {
        self.values.len()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    fn half(&self) -> i64 {
        (self.box_side as i64 - 1) / 2
    }

    /// Integer coordinates of the site with lexicographic index `k`.
    pub fn site(&self, k: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim];
        let mut rem = k;
        for a in (0..self.dim).rev() {
            out[a] = (rem % self.box_side) as i64 - self.half();
            rem /= self.box_side;
        }
        out
    }

    pub fn site_index(&self, site: &[i64]) -> Option<usize> {
        if site.len() != self.dim {
            return None;
        }
        let mut k = 0usize;
        for &c in site {
            if c.abs() > self.half() {
                return None;
            }
            k = k * self.box_side + (c + self.half()) as usize;
        }
        Some(k)
    }

    pub fn value_at(&self, site: &[i64]) -> Option<f64> {
        self.site_index(site).map(|k| self.values[k])
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        OmegaSample { dim: self.dim, box_side: self.box_side, values }
    }

    pub fn with_value(&self, k: usize, value: f64) -> Result<Self> {
        if !(value >= 0.0 && value <= MAX_RADIUS + SHIFT_SLACK) {
            return Err(Error::invalid(format!("radius {value} outside [0, 1/2]")));
        }
        let mut v = self.values.clone();
        v[k] = value.min(MAX_RADIUS);
        Ok(self.with_values(v))
    }
}

#[derive(Serialize, Deserialize)]
struct OmegaJson {
    #[serde(rename = "L")]
    box_side: usize,
    d: usize,
    sites: Vec<(Vec<i64>, f64)>,
}

impl Serialize for OmegaSample {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OmegaJson {
            box_side: self.box_side,
            d: self.dim,
            sites: (0..self.num_sites()).map(|k| (self.site(k), self.values[k])).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OmegaSample {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = OmegaJson::deserialize(d)?;
        let template = OmegaSample::constant(raw.d, raw.box_side, 0.0).map_err(D::Error::custom)?;
        let mut values = vec![f64::NAN; template.num_sites()];
        for (site, v) in raw.sites {
            let k = template
                .site_index(&site)
                .ok_or_else(|| D::Error::custom(format!("site {site:?} outside Λ_L")))?;
            values[k] = v;
        }
        OmegaSample::new(raw.d, raw.box_side, values).map_err(D::Error::custom)
    }
}

/// Draws i.i.d. radii; site `k` uses the stream `(seed, k)`.
pub fn sample_omega(measure: &MeasureSpec, dim: usize, box_side: usize, seed: u64) -> Result<OmegaSample> {
    measure.validate()?;
    let n = box_side.pow(dim as u32);
    let values = (0..n)
        .map(|k| {
            let u: f64 = rng::stream(seed, k as u64).random();
            measure.inverse_cdf(u)
        })
        .collect();
    OmegaSample::new(dim, box_side, values)
}

fn in_shape(shape: SingleSiteShape, scaled_offset: &[f64], scaled_radius: f64) -> bool {
    match shape {
        SingleSiteShape::Ball => scaled_offset.iter().map(|m| m * m).sum::<f64>() < scaled_radius * scaled_radius,
        SingleSiteShape::Cube => scaled_offset.iter().all(|m| m.abs() < scaled_radius),
    }
}

/// `V_ω(x) = Σ_j χ_shape(ω_j)(x - j)`; supports are disjoint so the value is 0 or 1.
pub fn evaluate_potential(omega: &OmegaSample, shape: SingleSiteShape, x: &[f64]) -> Result<f64> {
    let half_box = omega.box_side as f64 / 2.0;
    if x.len() != omega.dim || x.iter().any(|c| !(c.abs() <= half_box)) {
        return Err(Error::invalid(format!("point {x:?} outside the closed box")));
    }
    let site: Vec<i64> = x.iter().map(|c| c.round() as i64).collect();
    let Some(r) = omega.value_at(&site) else { return Ok(0.0) };
    let offset: Vec<f64> = x.iter().zip(&site).map(|(c, j)| c - *j as f64).collect();
    Ok(if in_shape(shape, &offset, r) { 1.0 } else { 0.0 })
}

/// `V_ω` sampled at every grid point, using exact integer coordinates.
pub fn potential_on_grid(omega: &OmegaSample, shape: SingleSiteShape, grid: &GridSpec) -> Result<Vec<f64>> {
    if grid.dim != omega.dim || grid.box_side != omega.box_side {
        return Err(Error::invalid("grid and ω disagree on d or L"));
    }
    let two_nh = 2 * grid.mesh_per_unit as i64;
    let out = (0..grid.num_points())
        .map(|p| {
            let m = grid.scaled_coords(p);
            // nearest site: round(m / 2n_h)
            let site: Vec<i64> = m.iter().map(|&c| (c + grid.mesh_per_unit as i64).div_euclid(two_nh)).collect();
            match omega.value_at(&site) {
                None => 0.0,
                Some(r) => {
                    let off: Vec<f64> = m.iter().zip(&site).map(|(c, j)| (c - j * two_nh) as f64).collect();
                    if in_shape(shape, &off, two_nh as f64 * r) {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();
    Ok(out)
}

fn check_shift(value: f64, delta: f64) -> Result<f64> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::invalid(format!("shift δ must be nonnegative, got {delta}")));
    }
    let v = value + delta;
    if v > MAX_RADIUS + SHIFT_SLACK {
        return Err(Error::invalid(format!("shifted radius {v} exceeds 1/2")));
    }
    Ok(v.min(MAX_RADIUS))
}

/// `(ω + δ)_j = ω_j + δ` for every site.
pub fn shift_all(omega: &OmegaSample, delta: f64) -> Result<OmegaSample> {
    let values = omega.values.iter().map(|&v| check_shift(v, delta)).collect::<Result<_>>()?;
    Ok(omega.with_values(values))
}

/// `(ω + δe_i)`: only site `i` moves.
pub fn shift_one(omega: &OmegaSample, site: &[i64], delta: f64) -> Result<OmegaSample> {
    let k = omega
        .site_index(site)
        .ok_or_else(|| Error::invalid(format!("site {site:?} outside Λ_L ∩ ℤ^d")))?;
    let mut values = omega.values.clone();
    values[k] = check_shift(values[k], delta)?;
    Ok(omega.with_values(values))
}

/// Centers `x_j` of balls of radius `radius`, one per lattice cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquidistributedCenters {
    pub radius: f64,
    pub centers: Vec<Vec<f64>>,
    pub sites: Vec<Vec<i64>>,
}

impl EquidistributedCenters {
    /// True iff `B_radius(x_j) ⊂ Λ_1(j)` for every center.
    pub fn is_equidistributed(&self) -> bool {
        self.radius > 0.0
            && self.radius < 0.5
            && self.centers.iter().zip(&self.sites).all(|(x, j)| {
                x.iter().zip(j).all(|(c, s)| (c - *s as f64).abs() + self.radius <= 0.5)
            })
    }
}

/// Balls of radius δ/2 inside the increments `supp(V_ω+δ - V_ω)`.
///
/// Center `x_j = j + (ω_j + δ/2)·e₁` for both shapes: in the ball case it
/// lies mid-annulus on the positive first axis, in the cube case mid-shell on
/// the `+e₁` face.
pub fn increment_centers(omega: &OmegaSample, delta: f64) -> Result<EquidistributedCenters> {
    shift_all(omega, delta)?;
    if !(delta > 0.0) {
        return Err(Error::invalid("increment centers need δ > 0"));
    }
    let r = 0.5 * delta;
    let (centers, sites) = (0..omega.num_sites())
        .map(|k| {
            let j = omega.site(k);
            let mut x: Vec<f64> = j.iter().map(|&c| c as f64).collect();
            x[0] += omega.values[k] + r;
            (x, j)
        })
        .unzip();
    Ok(EquidistributedCenters { radius: r, centers, sites })
}

/// Indicator of `⋃_j B_radius(x_j)` at the grid points (strict membership).
pub fn w_indicator(centers: &EquidistributedCenters, grid: &GridSpec) -> Vec<f64> {
    let two_nh = 2.0 * grid.mesh_per_unit as f64;
    let r = two_nh * centers.radius;
    let scaled: Vec<Vec<f64>> = centers.centers.iter().map(|c| c.iter().map(|x| two_nh * x).collect()).collect();
    (0..grid.num_points())
        .map(|p| {
            let m = grid.scaled_coords(p);
            let hit = scaled.iter().any(|c| {
                let off: Vec<f64> = m.iter().zip(c).map(|(a, b)| *a as f64 - b).collect();
                in_shape(SingleSiteShape::Ball, &off, r)
            });
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Whether the operator carries the breather potential or is the free Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    Breather,
    None,
}

/// Everything but ω needed to assemble `H_ω,L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub grid: GridSpec,
    pub shape: SingleSiteShape,
    pub magnetic: MagneticSpec,
    pub potential: PotentialKind,
}

impl Model {
    pub fn new(grid: GridSpec, shape: SingleSiteShape, magnetic: MagneticSpec) -> Self {
        Model { grid, shape, magnetic, potential: PotentialKind::Breather }
    }

    pub fn free(grid: GridSpec, magnetic: MagneticSpec) -> Self {
        Model { grid, shape: SingleSiteShape::Ball, magnetic, potential: PotentialKind::None }
    }

    pub fn potential(&self, omega: &OmegaSample) -> Result<Vec<f64>> {
        match self.potential {
            PotentialKind::Breather => potential_on_grid(omega, self.shape, &self.grid),
            PotentialKind::None => Ok(vec![0.0; self.grid.num_points()]),
        }
    }

    pub fn hamiltonian(&self, omega: &OmegaSample) -> Result<HamiltonianMatrix> {
        assemble_hamiltonian(&self.grid, &self.potential(omega)?, &self.magnetic)
    }
}
