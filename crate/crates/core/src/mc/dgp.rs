use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{selection_sample, ModelKind, ModelSpec};
use crate::regions::ThetaGrid;
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    /// Participation tends to one at the finite support point `x = 1`.
    Finite,
    /// Participation tends to one as `x -> inf`.
    Infinity,
}

/// Data-generating processes bundled with the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpSpec {
    /// `X ~ U(-3, 3)`, `W* = theta_1 + theta_2 X + U` with `U ~ U(-1, 1)`,
    /// missing with probability `1/5 - X^2/20 + X^4/200`; missing rows get
    /// `(W^L, W^H) = (-inf, inf)`. Interval median regression.
    MedianMissing {
        #[serde(default = "median_missing_theta")]
        true_theta: Vec<f64>,
    },
    /// `X ~ U(-1/2, 1/2)`, `W^H = X^2 + e_H`, `W^L = -X^2 + e_L` with
    /// standard normal noise. Interval regression with the intercept held
    /// at zero, so the identified set is the single slope `0`.
    SlopeCounterexample {},
    /// `X ~ U(0, 1)`, `W = theta0 + e`, `e ~ N(0, 1)`. One-sided regression
    /// whose moment at `(theta0, 0)` has conditional mean zero everywhere.
    ContactSet {
        #[serde(default)]
        theta0: f64,
    },
    /// Selection model with `Y* ~ U(0, 1)` and participation probability
    /// approaching one at the edge of the support of `X` with exponent
    /// `phi_m`; the density of `X` behaves like `|x0 - x|^phi_x` (finite
    /// side) or `x^-phi_x` (infinite side). The identified set is `{1/2}`.
    SelectionTails { phi_m: f64, phi_x: f64, at: TailSide },
}

fn median_missing_theta() -> Vec<f64> {
    vec![0.25, 0.5]
}

/// `p(x) = 1/5 - x^2/20 + x^4/200`.
pub fn missing_probability(x: f64) -> f64 {
    let x2 = x * x;
    0.2 - x2 / 20.0 + x2 * x2 / 200.0
}

impl DgpSpec {
    pub fn median_missing() -> Self {
        DgpSpec::MedianMissing {
            true_theta: median_missing_theta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DgpSpec::MedianMissing { true_theta } if true_theta.len() != 2 => Err(Error::config(
                "dgp.true_theta",
                format!("expected 2 coordinates, got {}", true_theta.len()),
            )),
            DgpSpec::MedianMissing { true_theta } if true_theta.iter().any(|v| !v.is_finite()) => {
                Err(Error::config("dgp.true_theta", "must be finite"))
            }
            DgpSpec::ContactSet { theta0 } if !theta0.is_finite() => Err(Error::config("dgp.theta0", "must be finite")),
            DgpSpec::SelectionTails { phi_m, .. } if !(*phi_m > 0.0) => {
                Err(Error::config("dgp.phi_m", "must be positive"))
            }
            DgpSpec::SelectionTails { phi_x, at: TailSide::Finite, .. } if !(*phi_x > -1.0) => {
                Err(Error::config("dgp.phi_x", "finite side needs phi_x > -1"))
            }
            DgpSpec::SelectionTails { phi_x, at: TailSide::Infinity, .. } if !(*phi_x > 1.0) => {
                Err(Error::config("dgp.phi_x", "infinite side needs phi_x > 1"))
            }
            _ => Ok(()),
        }
    }

    /// A point of the identified set.
    pub fn true_theta(&self) -> Vec<f64> {
        match self {
            DgpSpec::MedianMissing { true_theta } => true_theta.clone(),
            DgpSpec::SlopeCounterexample {} => vec![0.0, 0.0],
            DgpSpec::ContactSet { theta0 } => vec![*theta0, 0.0],
            DgpSpec::SelectionTails { .. } => vec![0.5],
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        match self {
            DgpSpec::MedianMissing { .. } => ModelSpec::new(
                ModelKind::IntervalQuantile { tau: 0.5 },
                1,
                vec![(-10.0, 10.0), (-10.0, 10.0)],
            ),
            DgpSpec::SlopeCounterexample {} => {
                ModelSpec::new(ModelKind::IntervalRegression, 1, vec![(0.0, 0.0), (-2.0, 2.0)])
            }
            DgpSpec::ContactSet { theta0 } => ModelSpec::new(
                ModelKind::OneSidedRegression,
                1,
                vec![(theta0 - 5.0, theta0 + 5.0), (-5.0, 5.0)],
            ),
            DgpSpec::SelectionTails { .. } => ModelSpec::new(
                ModelKind::Selection {
                    y_lower: 0.0,
                    y_upper: 1.0,
                },
                1,
                vec![(0.0, 1.0)],
            ),
        }
    }

    /// Parameter grid used when a design does not set one.
    pub fn default_grid(&self) -> GridSpec {
        match self {
            DgpSpec::MedianMissing { true_theta } => GridSpec {
                bounds: vec![
                    (true_theta[0] - 1.5, true_theta[0] + 1.5),
                    (true_theta[1] - 1.0, true_theta[1] + 1.0),
                ],
                pitch: 0.005,
            },
            DgpSpec::SlopeCounterexample {} => GridSpec {
                bounds: vec![(0.0, 0.0), (-1.0, 1.0)],
                pitch: 0.0025,
            },
            DgpSpec::ContactSet { theta0 } => GridSpec {
                bounds: vec![(theta0 - 1.0, theta0 + 1.0), (-1.0, 1.0)],
                pitch: 0.01,
            },
            DgpSpec::SelectionTails { .. } => GridSpec {
                bounds: vec![(0.0, 1.0)],
                pitch: 0.001,
            },
        }
    }

    /// Support of `X` used for the oracle's x-check grid.
    pub fn x_support(&self) -> (f64, f64) {
        match self {
            DgpSpec::MedianMissing { .. } => (-3.0, 3.0),
            DgpSpec::SlopeCounterexample {} => (-0.5, 0.5),
            DgpSpec::ContactSet { .. } => (0.0, 1.0),
            DgpSpec::SelectionTails { at: TailSide::Finite, .. } => (0.0, 1.0),
            DgpSpec::SelectionTails { at: TailSide::Infinity, .. } => (1.0, f64::INFINITY),
        }
    }

    /// Bounds `(lo(x), hi(x))` that the regression line must respect for the
    /// line-type DGPs; None for the selection model.
    pub fn line_bands(&self, x: f64) -> Option<(f64, f64)> {
        match self {
            DgpSpec::MedianMissing { true_theta } => Some(bands_at(true_theta, x)),
            DgpSpec::SlopeCounterexample {} => Some((-x * x, x * x)),
            DgpSpec::ContactSet { theta0 } => Some((f64::NEG_INFINITY, *theta0)),
            DgpSpec::SelectionTails { .. } => None,
        }
    }
}

fn bands_at(theta: &[f64], x: f64) -> (f64, f64) {
    let p = missing_probability(x);
    let line = theta[0] + theta[1] * x;
    (line - 1.0 + (1.0 - 2.0 * p) / (1.0 - p), line - 1.0 + 1.0 / (1.0 - p))
}

/// Conditional medians `(q_L(x), q_H(x))` of `W^L` and `W^H` under the
/// median-missing design.
pub fn median_bands(dgp: &DgpSpec, x: f64) -> Result<(f64, f64)> {
    let DgpSpec::MedianMissing { true_theta } = dgp else {
        return Err(Error::config("dgp.kind", "median bands need the median_missing design"));
    };
    if !(x.abs() <= 3.0) {
        return Err(Error::config("x", format!("must lie in [-3, 3], got {x}")));
    }
    Ok(bands_at(true_theta, x))
}

/// Grid described by per-axis bounds and a common pitch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    pub pitch: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<ThetaGrid> {
        ThetaGrid::uniform(&self.bounds, self.pitch)
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `rep` at sample size `n`.
pub fn replication_seed(base_seed: u64, n: usize, rep: usize) -> u64 {
    base_seed ^ mix64(mix64(n as u64) ^ (rep as u64).rotate_left(32))
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` observations; the output depends only on `(dgp, n, seed)`.
pub fn simulate(dgp: &DgpSpec, n: usize, seed: u64) -> Result<Sample> {
    dgp.validate()?;
    let mut rng = rng_for(seed, 0);
    let mut x = Vec::with_capacity(n);
    match dgp {
        DgpSpec::MedianMissing { true_theta } => {
            let mut w = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let xi = rng.random_range(-3.0..3.0);
                let u: f64 = rng.random_range(-1.0..1.0);
                let missing = rng.random::<f64>() < missing_probability(xi);
                x.push(xi);
                if missing {
                    w.extend([f64::NEG_INFINITY, f64::INFINITY]);
                } else {
                    let v = true_theta[0] + true_theta[1] * xi + u;
                    w.extend([v, v]);
                }
            }
            Sample::new(x, w, 1, 2)
        }
        DgpSpec::SlopeCounterexample {} => {
            let mut w = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let xi: f64 = rng.random_range(-0.5..0.5);
                let el: f64 = rng.sample(StandardNormal);
                let eh: f64 = rng.sample(StandardNormal);
                x.push(xi);
                w.extend([-xi * xi + el, xi * xi + eh]);
            }
            Sample::new(x, w, 1, 2)
        }
        DgpSpec::ContactSet { theta0 } => {
            let mut w = Vec::with_capacity(n);
            for _ in 0..n {
                x.push(rng.random_range(0.0..1.0));
                let e: f64 = rng.sample(StandardNormal);
                w.push(theta0 + e);
            }
            Sample::new(x, w, 1, 1)
        }
        DgpSpec::SelectionTails { phi_m, phi_x, at } => {
            let mut y = Vec::with_capacity(n);
            let mut d = Vec::with_capacity(n);
            for _ in 0..n {
                // 1 - u keeps the draw in (0, 1]
                let u = 1.0 - rng.random::<f64>();
                let (xi, p) = match at {
                    TailSide::Finite => {
                        let xi = 1.0 - u.powf(1.0 / (phi_x + 1.0));
                        (xi, 1.0 - (1.0 - xi).powf(*phi_m))
                    }
                    TailSide::Infinity => {
                        let xi = u.powf(-1.0 / (phi_x - 1.0));
                        (xi, 1.0 - xi.powf(-phi_m))
                    }
                };
                x.push(xi);
                y.push(rng.random::<f64>());
                d.push(rng.random::<f64>() < p);
            }
            selection_sample(x, 1, &y, &d, 0.0, 1.0)
        }
    }
}
