//! Derivative-free Nelder-Mead simplex minimization.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadParams {
    /// Initial simplex offset along each axis.
    pub steps: Vec<f64>,
    /// Converged once `f(worst) − f(best)` is below `f_spread` and the
    /// largest vertex-to-vertex distance is below `x_diameter`.
    pub f_spread: f64,
    pub x_diameter: f64,
    pub max_evaluations: usize,
}

impl NelderMeadParams {
    /// Defaults for a `[translation, rotation vector]` perturbation.
    pub fn pose() -> Self {
        Self {
            steps: vec![0.01; 6],
            f_spread: 1e-8,
            x_diameter: 1e-7,
            max_evaluations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

const RHO: f64 = 1.0;
const CHI: f64 = 2.0;
const PSI: f64 = 0.5;
const SIGMA: f64 = 0.5;

/// Minimizes `f` from the simplex `x0, x0 + steps[k]·e_k`. Non-finite
/// objective values are treated as `+∞`.
pub fn nelder_mead<F>(f: F, x0: &DVector<f64>, params: &NelderMeadParams) -> Result<NelderMeadResult>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    minimize(f, x0, params, |_| {})
}

fn minimize<F, C>(mut f: F, x0: &DVector<f64>, params: &NelderMeadParams, mut on_iteration: C) -> Result<NelderMeadResult>
where
    F: FnMut(&DVector<f64>) -> f64,
    C: FnMut(&DVector<f64>),
{
    let n = x0.len();
    if params.steps.len() != n || params.steps.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Argument("Nelder-Mead needs one positive step per coordinate".into()));
    }
    let evaluations = std::cell::Cell::new(0usize);
    let mut eval = |x: &DVector<f64>| {
        evaluations.set(evaluations.get() + 1);
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let f0 = eval(x0);
    if !f0.is_finite() {
        return Err(Error::Argument("objective is not finite at the starting point".into()));
    }
    let mut sim = vec![x0.clone()];
    let mut fsim = vec![f0];
    for k in 0..n {
        let mut x = x0.clone();
        x[k] += params.steps[k];
        fsim.push(eval(&x));
        sim.push(x);
    }
    let sort = |sim: &mut Vec<DVector<f64>>, fsim: &mut Vec<f64>| {
        let mut order: Vec<usize> = (0..sim.len()).collect();
        order.sort_by(|&a, &b| fsim[a].total_cmp(&fsim[b]));
        *sim = order.iter().map(|&i| sim[i].clone()).collect();
        *fsim = order.iter().map(|&i| fsim[i]).collect();
    };
    sort(&mut sim, &mut fsim);

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let spread = fsim[n] - fsim[0];
        let diameter = (0..=n)
            .flat_map(|i| (i + 1..=n).map(move |j| (i, j)))
            .map(|(i, j)| (&sim[i] - &sim[j]).norm())
            .fold(0.0, f64::max);
        if spread < params.f_spread && diameter < params.x_diameter {
            converged = true;
            break;
        }
        if evaluations.get() >= params.max_evaluations {
            break;
        }
        let mut xbar = DVector::zeros(n);
        for v in &sim[..n] {
            xbar += v;
        }
        xbar /= n as f64;
        let worst = sim[n].clone();
        let xr = &xbar * (1.0 + RHO) - &worst * RHO;
        let fxr = eval(&xr);
        let mut shrink = false;
        if fxr < fsim[0] {
            let xe = &xbar * (1.0 + RHO * CHI) - &worst * (RHO * CHI);
            let fxe = eval(&xe);
            if fxe < fxr {
                (sim[n], fsim[n]) = (xe, fxe);
            } else {
                (sim[n], fsim[n]) = (xr, fxr);
            }
        } else if fxr < fsim[n - 1] {
            (sim[n], fsim[n]) = (xr, fxr);
        } else if fxr < fsim[n] {
            let xc = &xbar * (1.0 + PSI * RHO) - &worst * (PSI * RHO);
            let fxc = eval(&xc);
            if fxc <= fxr {
                (sim[n], fsim[n]) = (xc, fxc);
            } else {
                shrink = true;
            }
        } else {
            let xcc = &xbar * (1.0 - PSI) + &worst * PSI;
            let fxcc = eval(&xcc);
            if fxcc < fsim[n] {
                (sim[n], fsim[n]) = (xcc, fxcc);
            } else {
                shrink = true;
            }
        }
        if shrink {
            for j in 1..=n {
                sim[j] = &sim[0] + (&sim[j] - &sim[0]) * SIGMA;
                fsim[j] = eval(&sim[j]);
            }
        }
        iterations += 1;
        sort(&mut sim, &mut fsim);
        on_iteration(&sim[0]);
    }
    Ok(NelderMeadResult {
        x: sim[0].clone(),
        f: fsim[0],
        evaluations: evaluations.get(),
        iterations,
        converged,
    })
}
