use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::regions::{project_points, PointSet, Projection, ThetaGrid};

use super::dgp::DgpSpec;

/// Identified set of a bundled DGP, discretized on a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedSetOracle {
    pub grid: ThetaGrid,
    pub member: Vec<bool>,
    /// Points at which the band inequalities were checked.
    pub x_check: Vec<f64>,
}

impl IdentifiedSetOracle {
    pub fn count(&self) -> usize {
        self.member.iter().filter(|m| **m).count()
    }

    pub fn members(&self) -> PointSet {
        let mut set = PointSet::new(self.grid.dim());
        for (i, _) in self.member.iter().enumerate().filter(|(_, m)| **m) {
            set.push(&self.grid.point(i)).expect("grid point has grid dimension");
        }
        set
    }

    pub fn project(&self, axis: usize) -> Result<Projection> {
        project_points(&self.members(), axis)
    }
}

const BAND_TOL: f64 = 1e-12;

/// Membership by checking the band inequalities on a uniform grid of
/// `x_check_count` points over the support of `X`.
pub fn oracle_set(dgp: &DgpSpec, grid: &ThetaGrid, x_check_count: usize) -> Result<IdentifiedSetOracle> {
    dgp.validate()?;
    let theta_dim = dgp.model_spec().theta_dim();
    if grid.dim() != theta_dim {
        return Err(Error::Dimension {
            what: "oracle grid dimension",
            expected: theta_dim,
            got: grid.dim(),
        });
    }
    if let DgpSpec::SelectionTails { .. } = dgp {
        // both bounds meet at 1/2 at the edge of the support
        let member = (0..grid.len())
            .map(|i| (grid.point(i)[0] - 0.5).abs() <= 1e-9)
            .collect();
        return Ok(IdentifiedSetOracle {
            grid: grid.clone(),
            member,
            x_check: Vec::new(),
        });
    }
    if x_check_count < 2 {
        return Err(Error::config("x_check", "need at least 2 points"));
    }
    let (lo, hi) = dgp.x_support();
    let step = (hi - lo) / (x_check_count - 1) as f64;
    let x_check: Vec<f64> = (0..x_check_count)
        .map(|k| if k + 1 == x_check_count { hi } else { lo + k as f64 * step })
        .collect();
    let bands: Vec<(f64, f64)> = x_check
        .iter()
        .map(|x| dgp.line_bands(*x).expect("line-type design"))
        .collect();
    let member = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let theta = grid.point(i);
            x_check.iter().zip(&bands).all(|(x, (l, h))| {
                let line = theta[0] + theta[1] * x;
                line >= l - BAND_TOL && line <= h + BAND_TOL
            })
        })
        .collect();
    Ok(IdentifiedSetOracle {
        grid: grid.clone(),
        member,
        x_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_missing_examples() {
        let dgp = DgpSpec::median_missing();
        let grid = ThetaGrid::from_axes(vec![vec![0.25], vec![0.5, 1.0]]).unwrap();
        let o = oracle_set(&dgp, &grid, 1201).unwrap();
        assert_eq!(o.member, vec![true, false]);
    }

    #[test]
    fn true_theta_is_member() {
        let designs = [
            DgpSpec::median_missing(),
            DgpSpec::SlopeCounterexample {},
            DgpSpec::ContactSet { theta0: 0.3 },
            DgpSpec::SelectionTails {
                phi_m: 1.0,
                phi_x: 0.0,
                at: super::super::dgp::TailSide::Finite,
            },
        ];
        for dgp in designs {
            let grid = dgp.default_grid().build().unwrap();
            let o = oracle_set(&dgp, &grid, 1201).unwrap();
            assert!(o.count() > 0);
            let t = dgp.true_theta();
            let idx = (0..grid.len())
                .find(|i| grid.point(*i).iter().zip(&t).all(|(a, b)| (a - b).abs() < 1e-9))
                .expect("true theta on grid");
            assert!(o.member[idx], "{dgp:?}");
        }
    }

    #[test]
    fn slope_oracle_is_a_point() {
        let dgp = DgpSpec::SlopeCounterexample {};
        let o = oracle_set(&dgp, &dgp.default_grid().build().unwrap(), 1201).unwrap();
        assert_eq!(o.count(), 1);
    }
}
