//! Density measures integrated over power cells.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::Error;

/// Anything that can be evaluated pointwise as a density.
pub trait Density: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F> Density for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// The density fields used by the quantization and transport drivers.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityField {
    /// `rho(x) = 1`.
    Uniform,
    /// Normal distribution with diagonal covariance.
    Gaussian {
        mean: Vec<f64>,
        variance: Vec<f64>,
        norm: f64,
    },
    /// `100 / (h^2 + 0.001)` where `h` is the distance, in the radial-time
    /// plane, from `(r(x), t)` to the segment `(r0, 0) -> (r1, 1)`. The last
    /// coordinate is time and `r(x)` is the distance of the remaining
    /// coordinates from `axis_center`.
    Cone {
        r0: f64,
        r1: f64,
        axis_center: Vec<f64>,
    },
    /// `1 + 100 |x - mean|^2`.
    Sphere { mean: Vec<f64> },
}

impl DensityField {
    pub fn uniform() -> Self {
        Self::Uniform
    }

    /// Gaussian centred in the unit cube with variance 0.02 per axis.
    pub fn gaussian(dim: usize) -> Self {
        Self::gaussian_with(vec![0.5; dim], vec![0.02; dim])
    }

    pub fn gaussian_with(mean: Vec<f64>, variance: Vec<f64>) -> Self {
        let det: f64 = variance.iter().product();
        let norm = 1.0 / ((2.0 * PI).powi(mean.len() as i32) * det).sqrt();
        Self::Gaussian {
            mean,
            variance,
            norm,
        }
    }

    /// Expanding sphere from radius 0.4 at `t = 0` to 0.7 at `t = 1`, with
    /// the axis at the origin of the spatial coordinates.
    pub fn cone(dim: usize) -> Self {
        Self::cone_with(0.4, 0.7, vec![0.0; dim.saturating_sub(1)])
    }

    pub fn cone_with(r0: f64, r1: f64, axis_center: Vec<f64>) -> Self {
        Self::Cone { r0, r1, axis_center }
    }

    pub fn sphere(dim: usize) -> Self {
        Self::Sphere {
            mean: vec![0.5; dim],
        }
    }

    /// Builds a field by name for a `dim`-dimensional domain.
    pub fn by_name(name: &str, dim: usize) -> Result<Self, Error> {
        match name.parse::<DensityKind>()? {
            DensityKind::Uniform => Ok(Self::uniform()),
            DensityKind::Gaussian => Ok(Self::gaussian(dim)),
            DensityKind::Cone if dim < 2 => Err(Error::InvalidInput(
                "the cone density needs at least two dimensions".into(),
            )),
            DensityKind::Cone => Ok(Self::cone(dim)),
            DensityKind::Sphere => Ok(Self::sphere(dim)),
        }
    }

    pub fn kind(&self) -> DensityKind {
        match self {
            Self::Uniform => DensityKind::Uniform,
            Self::Gaussian { .. } => DensityKind::Gaussian,
            Self::Cone { .. } => DensityKind::Cone,
            Self::Sphere { .. } => DensityKind::Sphere,
        }
    }

    /// Quadrature order at which the transport energy `rho |x - y|^2` is
    /// exact for polynomial fields. Line searches on the weight energy need
    /// values that agree with the (exact) mass gradient.
    pub fn energy_order(&self) -> usize {
        match self {
            Self::Uniform | Self::Cone { .. } => 2,
            Self::Gaussian { .. } | Self::Sphere { .. } => 4,
        }
    }

    /// Quadrature order that integrates this field adequately.
    pub fn recommended_order(&self) -> usize {
        match self {
            Self::Gaussian { .. } => 4,
            Self::Uniform | Self::Cone { .. } | Self::Sphere { .. } => 2,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Uniform => 1.0,
            Self::Gaussian {
                mean,
                variance,
                norm,
            } => {
                let q: f64 = x
                    .iter()
                    .zip(mean)
                    .zip(variance)
                    .map(|((xi, mi), vi)| (xi - mi) * (xi - mi) / vi)
                    .sum();
                norm * (-0.5 * q).exp()
            }
            Self::Cone { r0, r1, axis_center } => {
                let (space, t) = x.split_at(x.len() - 1);
                let r = space
                    .iter()
                    .zip(axis_center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let h = segment_distance((r, t[0]), (*r0, 0.0), (*r1, 1.0));
                100.0 / (h * h + 0.001)
            }
            Self::Sphere { mean } => {
                let r2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
                1.0 + 100.0 * r2
            }
        }
    }
}

impl Density for DensityField {
    fn eval(&self, x: &[f64]) -> f64 {
        DensityField::eval(self, x)
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let (apx, apy) = (p.0 - a.0, p.1 - a.1);
    let t = ((apx * abx + apy * aby) / (abx * abx + aby * aby)).clamp(0.0, 1.0);
    let (dx, dy) = (apx - t * abx, apy - t * aby);
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    Uniform,
    Gaussian,
    Cone,
    Sphere,
}

impl FromStr for DensityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "gaussian" => Ok(Self::Gaussian),
            "cone" => Ok(Self::Cone),
            "sphere" => Ok(Self::Sphere),
            other => Err(Error::InvalidInput(format!("unknown density '{other}'"))),
        }
    }
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Gaussian => "gaussian",
            Self::Cone => "cone",
            Self::Sphere => "sphere",
        })
    }
}
