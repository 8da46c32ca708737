//! Synthetic source/target distributions: Gaussian mixtures, two-moons data
//! and the standard Gaussian, with exact densities where they exist.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use crate::SampleBatch;

const SQRT_TAU: f64 = 2.5066282746310002; // sqrt(2*pi)

/// One isotropic Gaussian component: weight, mean and a per-axis stdev.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub stdev: f64,
}

/// A mixture of isotropic Gaussians in `dim` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<MixtureComponent>,
    dim: usize,
}

impl GaussianMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution("mixture has no components".into()));
        }
        let dim = components[0].mean.len();
        if dim == 0 {
            return Err(Error::InvalidDistribution("zero-dimensional mean".into()));
        }
        let mut total = 0.0;
        for c in &components {
            if c.mean.len() != dim {
                return Err(Error::InvalidDistribution(format!(
                    "component mean dim {} != {}",
                    c.mean.len(),
                    dim
                )));
            }
            if !(c.stdev > 0.0) {
                return Err(Error::InvalidDistribution("stdev must be > 0".into()));
            }
            if c.weight < 0.0 {
                return Err(Error::InvalidDistribution("negative weight".into()));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components, dim })
    }

    /// Standard Gaussian as a one-component mixture.
    pub fn standard(dim: usize) -> Self {
        Self {
            components: vec![MixtureComponent {
                weight: 1.0,
                mean: vec![0.0; dim],
                stdev: 1.0,
            }],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut p = 0.0;
        for c in &self.components {
            let mut comp = c.weight;
            for k in 0..self.dim {
                comp *= gauss_pdf(x[k], c.mean[k], c.stdev);
            }
            p += comp;
        }
        Ok(p)
    }

    /// Mixture mean vector.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in &self.components {
            for k in 0..self.dim {
                m[k] += c.weight * c.mean[k];
            }
        }
        m
    }

    /// Per-axis variances.
    pub fn variances(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = vec![0.0; self.dim];
        for c in &self.components {
            for k in 0..self.dim {
                let d = c.mean[k] - m[k];
                v[k] += c.weight * (c.stdev * c.stdev + d * d);
            }
        }
        v
    }

    pub fn sample_with(&self, n: usize, rng: &mut ChaCha8Rng) -> SampleBatch {
        let mut out = Array2::zeros((n, self.dim));
        for i in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut idx = self.components.len() - 1;
            for (j, c) in self.components.iter().enumerate() {
                acc += c.weight;
                if u < acc {
                    idx = j;
                    break;
                }
            }
            let c = &self.components[idx];
            for k in 0..self.dim {
                let z: f64 = rng.sample(StandardNormal);
                out[[i, k]] = c.mean[k] + c.stdev * z;
            }
        }
        out
    }
}

fn gauss_pdf(x: f64, mean: f64, stdev: f64) -> f64 {
    let z = (x - mean) / stdev;
    (-0.5 * z * z).exp() / (stdev * SQRT_TAU)
}

/// Two half-circle arcs with truncated Gaussian jitter.
///
/// Arc A is `radius*(cos w, sin w)`, arc B is `radius*(1-cos w, 1/2-sin w)`
/// for `w in [0, pi]`; both are shifted by `offset`. The jitter norm is
/// rejection-truncated at `4*noise_stdev`, so every generated point lies
/// within that distance of one arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoonDataset {
    pub noise_stdev: f64,
    pub radius: f64,
    pub offset: [f64; 2],
}

impl MoonDataset {
    pub fn validate(&self) -> Result<()> {
        if self.noise_stdev < 0.0 {
            return Err(Error::InvalidDistribution("noise_stdev must be >= 0".into()));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidDistribution("radius must be > 0".into()));
        }
        Ok(())
    }

    fn arc_point(&self, upper: bool, w: f64) -> [f64; 2] {
        let r = self.radius;
        if upper {
            [r * w.cos() + self.offset[0], r * w.sin() + self.offset[1]]
        } else {
            [
                r * (1.0 - w.cos()) + self.offset[0],
                r * (0.5 - w.sin()) + self.offset[1],
            ]
        }
    }

    pub fn sample_with(&self, n: usize, rng: &mut ChaCha8Rng) -> SampleBatch {
        let mut out = Array2::zeros((n, 2));
        let cap = 4.0 * self.noise_stdev;
        for i in 0..n {
            let upper = rng.random::<f64>() < 0.5;
            let w = rng.random::<f64>() * std::f64::consts::PI;
            let p = self.arc_point(upper, w);
            let (mut nx, mut ny) = (0.0, 0.0);
            if self.noise_stdev > 0.0 {
                loop {
                    nx = self.noise_stdev * rng.sample::<f64, _>(StandardNormal);
                    ny = self.noise_stdev * rng.sample::<f64, _>(StandardNormal);
                    if (nx * nx + ny * ny).sqrt() <= cap {
                        break;
                    }
                }
            }
            out[[i, 0]] = p[0] + nx;
            out[[i, 1]] = p[1] + ny;
        }
        out
    }

    /// Distance from `x` to the nearest of the two arcs.
    pub fn arc_distance(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        // Dense enough for the 4-sigma membership check in tests.
        const STEPS: usize = 2000;
        for upper in [true, false] {
            for s in 0..=STEPS {
                let w = std::f64::consts::PI * s as f64 / STEPS as f64;
                let p = self.arc_point(upper, w);
                let d = ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt();
                if d < best {
                    best = d;
                }
            }
        }
        best
    }
}

/// Declarative source/target distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub enum DistributionSpec {
    Mixture(GaussianMixture),
    Moons(MoonDataset),
    StandardGaussian { dim: usize },
}

/// JSON wire form: `{"type": "mixture", "weights": [...], "means": [[...]], "stdevs": [...]}` etc.
#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
enum SpecRepr {
    Mixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        stdevs: Vec<f64>,
    },
    Moons {
        noise_stdev: f64,
        radius: f64,
        offset: [f64; 2],
    },
    StandardGaussian {
        dim: usize,
    },
}

impl TryFrom<SpecRepr> for DistributionSpec {
    type Error = Error;

    fn try_from(repr: SpecRepr) -> Result<Self> {
        match repr {
            SpecRepr::Mixture { weights, means, stdevs } => {
                if weights.len() != means.len() || weights.len() != stdevs.len() {
                    return Err(Error::InvalidDistribution(
                        "weights, means and stdevs must have equal length".into(),
                    ));
                }
                let components = weights
                    .into_iter()
                    .zip(means)
                    .zip(stdevs)
                    .map(|((weight, mean), stdev)| MixtureComponent { weight, mean, stdev })
                    .collect();
                Ok(DistributionSpec::Mixture(GaussianMixture::new(components)?))
            }
            SpecRepr::Moons { noise_stdev, radius, offset } => {
                let m = MoonDataset { noise_stdev, radius, offset };
                m.validate()?;
                Ok(DistributionSpec::Moons(m))
            }
            SpecRepr::StandardGaussian { dim } => {
                if dim == 0 {
                    return Err(Error::InvalidDistribution("dim must be >= 1".into()));
                }
                Ok(DistributionSpec::StandardGaussian { dim })
            }
        }
    }
}

impl From<DistributionSpec> for SpecRepr {
    fn from(spec: DistributionSpec) -> Self {
        match spec {
            DistributionSpec::Mixture(m) => SpecRepr::Mixture {
                weights: m.components.iter().map(|c| c.weight).collect(),
                means: m.components.iter().map(|c| c.mean.clone()).collect(),
                stdevs: m.components.iter().map(|c| c.stdev).collect(),
            },
            DistributionSpec::Moons(m) => SpecRepr::Moons {
                noise_stdev: m.noise_stdev,
                radius: m.radius,
                offset: m.offset,
            },
            DistributionSpec::StandardGaussian { dim } => SpecRepr::StandardGaussian { dim },
        }
    }
}

impl DistributionSpec {
    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::Mixture(m) => m.dim(),
            DistributionSpec::Moons(_) => 2,
            DistributionSpec::StandardGaussian { dim } => *dim,
        }
    }

    /// Mixture view, if one exists (standard Gaussian counts).
    pub fn as_mixture(&self) -> Option<GaussianMixture> {
        match self {
            DistributionSpec::Mixture(m) => Some(m.clone()),
            DistributionSpec::StandardGaussian { dim } => Some(GaussianMixture::standard(*dim)),
            DistributionSpec::Moons(_) => None,
        }
    }

    /// Draw `n` rows; a pure function of `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let mut rng = stream_rng(seed, streams::DIST_SAMPLE);
        Ok(self.sample_with(n, &mut rng))
    }

    /// Draw from an explicitly owned generator state.
    pub fn sample_with(&self, n: usize, rng: &mut ChaCha8Rng) -> SampleBatch {
        match self {
            DistributionSpec::Mixture(m) => m.sample_with(n, rng),
            DistributionSpec::Moons(m) => m.sample_with(n, rng),
            DistributionSpec::StandardGaussian { dim } => {
                let mut out = Array2::zeros((n, *dim));
                for i in 0..n {
                    for k in 0..*dim {
                        out[[i, k]] = rng.sample::<f64, _>(StandardNormal);
                    }
                }
                out
            }
        }
    }

    /// Exact density at `x`; moons have no closed form.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        match self {
            DistributionSpec::Mixture(m) => m.density(x),
            DistributionSpec::StandardGaussian { dim } => {
                GaussianMixture::standard(*dim).density(x)
            }
            DistributionSpec::Moons(_) => Err(Error::DensityUnavailable),
        }
    }
}

/// Named experiment presets: `(source, target)` pairs.
pub fn preset(name: &str) -> Result<(DistributionSpec, DistributionSpec)> {
    match name {
        "1d-2n" => {
            let target = GaussianMixture::new(vec![
                MixtureComponent { weight: 0.5, mean: vec![-1.0], stdev: 0.3 },
                MixtureComponent { weight: 0.5, mean: vec![1.0], stdev: 0.3 },
            ])?;
            Ok((
                DistributionSpec::StandardGaussian { dim: 1 },
                DistributionSpec::Mixture(target),
            ))
        }
        "1d-5n" => {
            let target = GaussianMixture::new(
                (-2..=2)
                    .map(|m| MixtureComponent {
                        weight: 0.2,
                        mean: vec![m as f64],
                        stdev: 0.2,
                    })
                    .collect(),
            )?;
            Ok((
                DistributionSpec::StandardGaussian { dim: 1 },
                DistributionSpec::Mixture(target),
            ))
        }
        "2d-6n" => {
            let target = GaussianMixture::new(circle_components(6, 3.0, 0.3))?;
            Ok((
                DistributionSpec::StandardGaussian { dim: 2 },
                DistributionSpec::Mixture(target),
            ))
        }
        "8n-moons" => {
            let source = GaussianMixture::new(circle_components(8, 3.0, 0.1))?;
            let target = MoonDataset {
                noise_stdev: 0.05,
                radius: 1.5,
                offset: [-0.75, -0.375],
            };
            Ok((
                DistributionSpec::Mixture(source),
                DistributionSpec::Moons(target),
            ))
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// All preset names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 4] = ["1d-2n", "1d-5n", "2d-6n", "8n-moons"];

fn circle_components(n: usize, radius: f64, stdev: f64) -> Vec<MixtureComponent> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            MixtureComponent {
                weight: 1.0 / n as f64,
                mean: vec![radius * a.cos(), radius * a.sin()],
                stdev,
            }
        })
        .collect()
}
