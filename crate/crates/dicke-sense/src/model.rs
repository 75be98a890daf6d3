//! Generator selection and state preparation shared by the estimation
//! pipelines: collective-only models use the maximal sector, models with
//! local decay use the sector ladder.

use crate::dicke::{build_liouvillian, DensityMatrix, ModelParams, SpinOp, SuperOperator};
use crate::dynamics::{self, Propagator, RegressionTrace};
use crate::error::{Error, Result};
use crate::linalg::c64;
use crate::permsym;

/// How the system is prepared before the first bin.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Preparation {
    Stationary,
    /// Evolved from all spins down for time `t1`.
    FromGround { t1: f64 },
}

impl Preparation {
    pub fn t1(&self) -> Option<f64> {
        match self {
            Preparation::Stationary => None,
            Preparation::FromGround { t1 } => Some(*t1),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Preparation::Stationary => "ss".into(),
            Preparation::FromGround { t1 } => format!("{t1}"),
        }
    }
}

/// A generator together with the parameters it was built from.
#[derive(Clone, Debug)]
pub struct Model {
    pub params: ModelParams,
    pub l: SuperOperator,
}

impl Model {
    pub fn new(params: &ModelParams) -> Result<Self> {
        Self::with_guard(params, permsym::DEFAULT_MAX_N)
    }

    pub fn with_guard(params: &ModelParams, max_n: usize) -> Result<Self> {
        let l = if params.gamma_loc > 0.0 {
            permsym::build_permsym_liouvillian_guarded(params, max_n)?
        } else {
            build_liouvillian(params)?
        };
        Ok(Model { params: *params, l })
    }

    pub fn is_collective(&self) -> bool {
        self.l.space.is_single_sector()
    }

    pub fn ground(&self) -> Vec<c64> {
        self.l
            .space
            .embed_maximal(&DensityMatrix::ground(self.params.n))
            .expect("ground state fits the maximal sector")
    }

    pub fn prepare(&self, prep: Preparation) -> Result<Vec<c64>> {
        match prep {
            Preparation::Stationary => crate::cache::steady_state(&self.l),
            Preparation::FromGround { t1 } => dynamics::evolve_vec(&self.l, &self.ground(), t1),
        }
    }

    /// Regression trace for the short-time bin formulas at bin length `dt`.
    pub fn regression(&self, prep: Preparation, taus: &[f64], dt: f64) -> Result<RegressionTrace> {
        let x = self.prepare(prep)?;
        dynamics::regression_trace(&self.l, &x, taus, dt, prep == Preparation::Stationary)
    }
}

/// `<S_y>(t)` from the ground state on a uniform grid of `points` samples over
/// `[0, t_max]`.
pub fn sy_trajectory(model: &Model, t_max: f64, points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if points < 2 {
        return Err(Error::InvalidParam("need at least two samples".into()));
    }
    let h = t_max / (points - 1) as f64;
    let prop = Propagator::new(&model.l);
    let mut x = model.ground();
    let mut ts = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for k in 0..points {
        if k > 0 {
            x = prop.apply(&x, h, true);
        }
        ts.push(k as f64 * h);
        ys.push(model.l.space.expect(SpinOp::Y, &x).re);
    }
    Ok((ts, ys))
}

/// Time of the first maximum of `<S_y>` from the ground state: scan of 10^3
/// points over `Γt ∈ [0, 1]`, then a three-point parabolic refinement.
pub fn first_sy_maximum(model: &Model) -> Result<f64> {
    sy_maximum(model, 1)
}

/// Time of the `k`-th maximum (from 1) of `<S_y>` from the ground state. The
/// scan keeps 10^3 points per `1/Γ` and doubles its span, up to `Γt = 32`,
/// until `k` maxima are found.
pub fn sy_maximum(model: &Model, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParam("maxima are counted from 1".into()));
    }
    let mut span = 1.0;
    while span <= 32.0 {
        let (ts, ys) = sy_trajectory(model, span / model.params.gamma_coll, (1000.0 * span) as usize)?;
        let h = ts[1] - ts[0];
        let mut found = 0;
        for i in 1..ys.len() - 1 {
            if ys[i] > ys[i - 1] && ys[i] >= ys[i + 1] {
                found += 1;
                if found == k {
                    let (a, b, c) = (ys[i - 1], ys[i], ys[i + 1]);
                    let den = a - 2.0 * b + c;
                    let shift = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
                    return Ok(ts[i] + shift.clamp(-1.0, 1.0) * h);
                }
            }
        }
        span *= 2.0;
    }
    Err(Error::Numerical(format!("fewer than {k} maxima of <S_y> for Gamma*t in [0, 32]")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selects_generator_by_local_rate() {
        let a = Model::new(&ModelParams::from_ratios(4, 1.0, 0.0).unwrap()).unwrap();
        let b = Model::new(&ModelParams::from_ratios(4, 1.0, 0.1).unwrap()).unwrap();
        assert!(a.is_collective());
        assert!(!b.is_collective());
    }

    #[test]
    fn first_maximum_is_early_for_strong_drive() {
        let m = Model::new(&ModelParams::from_ratios(20, 2.0, 0.1).unwrap()).unwrap();
        let t = first_sy_maximum(&m).unwrap();
        assert!(t > 0.05 && t < 0.2, "{t}");
        let t3 = sy_maximum(&m, 3).unwrap();
        assert!(t3 > t);
    }
}
