//! Levenberg-Marquardt over the three PTZ parameters.
//!
//! Parameters are `[pan (deg), tilt (deg), focal (px)]`. The Jacobian is
//! taken by central differences; three parameters keep that cheap.

use nalgebra::{Matrix3, Vector3};

use crate::camera::PtzParams;

const INITIAL_DAMPING: f64 = 1e-3;
const MAX_ITERATIONS: usize = 100;
const MAX_DAMPING: f64 = 1e16;
const STEP_TOLERANCE: f64 = 1e-10;
const RELATIVE_DECREASE_TOLERANCE: f64 = 1e-12;
/// Finite-difference steps for pan, tilt and focal length.
const FD_STEPS: [f64; 3] = [1e-6, 1e-6, 1e-3];

/// Outcome of a refinement run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOutcome {
    pub ptz: PtzParams,
    /// Sum of squared residuals at `ptz`.
    pub cost: f64,
    pub initial_cost: f64,
    pub residual_count: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl LmOutcome {
    pub fn rmse(&self) -> f64 {
        if self.residual_count == 0 {
            0.0
        } else {
            (self.cost / self.residual_count as f64).sqrt()
        }
    }
}

fn to_params(p: &Vector3<f64>) -> Option<PtzParams> {
    if p.iter().all(|v| v.is_finite()) && p.z > 0.0 {
        Some(PtzParams {
            pan: p.x,
            tilt: p.y,
            focal_length: p.z,
        })
    } else {
        None
    }
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian of `residuals` at `p`. `None` if any probe
/// leaves the residual function's domain.
pub(crate) fn numeric_jacobian<F>(p: &Vector3<f64>, n: usize, residuals: &F) -> Option<Vec<[f64; 3]>>
where
    F: Fn(&PtzParams) -> Option<Vec<f64>>,
{
    let mut jac = vec![[0.0; 3]; n];
    for (k, h) in FD_STEPS.iter().enumerate() {
        let mut plus = *p;
        let mut minus = *p;
        plus[k] += h;
        minus[k] -= h;
        let rp = residuals(&to_params(&plus)?)?;
        let rm = residuals(&to_params(&minus)?)?;
        for i in 0..n {
            jac[i][k] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Some(jac)
}

/// Gradient `J^T r` of half the cost; used by callers to check optimality.
pub fn gradient<F>(ptz: &PtzParams, residuals: F) -> Option<Vector3<f64>>
where
    F: Fn(&PtzParams) -> Option<Vec<f64>>,
{
    let p = Vector3::new(ptz.pan, ptz.tilt, ptz.focal_length);
    let r = residuals(ptz)?;
    let jac = numeric_jacobian(&p, r.len(), &residuals)?;
    let mut g = Vector3::zeros();
    for (row, ri) in jac.iter().zip(&r) {
        g += Vector3::from(*row) * *ri;
    }
    Some(g)
}

/// Minimizes the sum of squared `residuals` starting from `init`.
///
/// `residuals` returns `None` outside its domain (for example when a point
/// falls behind the camera); such probes count as rejected steps. The
/// returned cost is never above the initial cost. If the initial point is
/// itself outside the domain the initial parameters come back with
/// `converged = false`.
pub fn minimize<F>(init: PtzParams, residuals: F) -> LmOutcome
where
    F: Fn(&PtzParams) -> Option<Vec<f64>>,
{
    let mut p = Vector3::new(init.pan, init.tilt, init.focal_length);
    let Some(mut r) = residuals(&init) else {
        return LmOutcome {
            ptz: init,
            cost: f64::INFINITY,
            initial_cost: f64::INFINITY,
            residual_count: 0,
            iterations: 0,
            converged: false,
        };
    };
    let n = r.len();
    let initial_cost = cost_of(&r);
    let mut cost = initial_cost;
    let mut lambda = INITIAL_DAMPING;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let Some(jac) = numeric_jacobian(&p, n, &residuals) else {
            break;
        };
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (row, ri) in jac.iter().zip(&r) {
            let j = Vector3::from(*row);
            jtj += j * j.transpose();
            jtr += j * *ri;
        }

        loop {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    break;
                }
                continue;
            };
            if step.norm() < STEP_TOLERANCE {
                converged = true;
                break;
            }
            let candidate = p + step;
            let trial = to_params(&candidate).and_then(|c| residuals(&c).map(|rr| (c, rr)));
            match trial {
                Some((_, new_r)) if cost_of(&new_r) < cost => {
                    let new_cost = cost_of(&new_r);
                    let decrease = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                    p = candidate;
                    r = new_r;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    if decrease < RELATIVE_DECREASE_TOLERANCE || cost == 0.0 {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > MAX_DAMPING {
                        break;
                    }
                }
            }
        }
        if lambda > MAX_DAMPING {
            break;
        }
    }

    LmOutcome {
        ptz: to_params(&p).unwrap_or(init),
        cost,
        initial_cost,
        residual_count: n,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let target = [10.0, -4.0, 2000.0];
        let out = minimize(PtzParams { pan: 0.0, tilt: 0.0, focal_length: 1500.0 }, |p| {
            Some(vec![
                (p.pan - target[0]) * 3.0,
                (p.tilt - target[1]) * 2.0,
                (p.focal_length - target[2]) * 0.1,
            ])
        });
        assert!(out.converged);
        assert!((out.ptz.pan - 10.0).abs() < 1e-8);
        assert!((out.ptz.tilt + 4.0).abs() < 1e-8);
        assert!((out.ptz.focal_length - 2000.0).abs() < 1e-6);
        assert!(out.cost <= out.initial_cost);
    }

    #[test]
    fn invalid_start_returns_init() {
        let init = PtzParams { pan: 1.0, tilt: 2.0, focal_length: 3.0 };
        let out = minimize(init, |_| None);
        assert!(!out.converged);
        assert_eq!(out.ptz, init);
    }

    #[test]
    fn zero_cost_start_is_converged() {
        let init = PtzParams { pan: 1.0, tilt: 2.0, focal_length: 3.0 };
        let out = minimize(init, |_| Some(vec![0.0, 0.0]));
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.ptz, init);
    }
}
