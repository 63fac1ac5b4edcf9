//! Short iterated Lanczos exponential stepper for time-dependent
//! real-symmetric generators.
//!
//! Each step approximates `exp(-i H(t*) dt) psi` in the Krylov subspace
//! spanned by `{psi, H psi, ..., H^(k-1) psi}` with `H` frozen at the step
//! midpoint `t* = t + dt/2`, giving second-order accuracy in `dt` for smooth
//! envelopes. The subspace residual is estimated from the first neglected
//! recurrence coefficient; steps that miss the tolerance are retried as two
//! half steps, recursively.

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fock::StateVector;
use crate::sparse::OperatorMatrix;
use crate::{Error, Result};

/// Stepper parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrylovConfig {
    /// Krylov subspace dimension, between 2 and 64.
    pub krylov_dim: usize,
    /// Base time step in the model's time units.
    pub dt: f64,
    /// Subspace-residual bound per step; exceeding it halves the step.
    pub step_tolerance: f64,
    /// Evaluate time-dependent envelopes at the step midpoint rather than at
    /// the step start.
    pub midpoint_rule: bool,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { krylov_dim: 12, dt: 0.05, step_tolerance: 1e-10, midpoint_rule: true }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=64).contains(&self.krylov_dim) {
            return Err(Error::model(format!(
                "krylov_dim must lie in [2, 64], got {}",
                self.krylov_dim
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::model(format!("dt must be positive and finite, got {}", self.dt)));
        }
        if !(self.step_tolerance > 0.0 && self.step_tolerance.is_finite()) {
            return Err(Error::model(format!(
                "step_tolerance must be positive and finite, got {}",
                self.step_tolerance
            )));
        }
        Ok(())
    }
}

/// One named observable series; `eval` may return any fixed-width record
/// (width 1 for scalars).
pub struct Observable {
    pub name: String,
    pub eval: Box<dyn Fn(f64, &StateVector) -> Vec<f64> + Send + Sync>,
}

impl Observable {
    pub fn scalar(
        name: impl Into<String>,
        f: impl Fn(f64, &StateVector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Observable { name: name.into(), eval: Box::new(move |t, psi| vec![f(t, psi)]) }
    }
}

/// One recorded observable series over the trajectory time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// One record per grid time.
    pub values: Vec<Vec<f64>>,
}

/// Propagation record: snapshot times, state norms at those times, observable
/// series, and stepper health counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub series: Vec<Series>,
    /// Largest per-step deviation of the state norm from 1 before
    /// renormalization.
    pub max_step_drift: f64,
    /// Largest accepted subspace-residual estimate.
    pub max_residual: f64,
    /// Total number of step halvings over the run.
    pub total_halvings: u64,
}

/// Reusable Lanczos workspace bound to one operator.
pub struct Stepper<'h> {
    h: &'h OperatorMatrix,
    cfg: KrylovConfig,
    basis: Vec<Vec<Complex64>>,
    w: Vec<Complex64>,
    pub max_step_drift: f64,
    pub max_residual: f64,
    pub total_halvings: u64,
}

impl<'h> Stepper<'h> {
    pub fn new(h: &'h OperatorMatrix, cfg: KrylovConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = h.dim();
        Ok(Stepper {
            h,
            cfg,
            basis: (0..cfg.krylov_dim).map(|_| vec![Complex64::new(0.0, 0.0); dim]).collect(),
            w: vec![Complex64::new(0.0, 0.0); dim],
            max_step_drift: 0.0,
            max_residual: 0.0,
            total_halvings: 0,
        })
    }

    /// Advances `psi` by `dt` starting at time `t`, halving recursively when
    /// the residual estimate misses the tolerance.
    pub fn step(&mut self, psi: &mut [Complex64], t: f64, dt: f64) -> Result<()> {
        self.step_depth(psi, t, dt, 0)
    }

    fn step_depth(&mut self, psi: &mut [Complex64], t: f64, dt: f64, depth: u32) -> Result<()> {
        let k_max = self.cfg.krylov_dim;
        let t_eval = if self.cfg.midpoint_rule { t + dt / 2.0 } else { t };

        // Lanczos recurrence seeded with the (renormalized) state.
        let mut alphas = Vec::with_capacity(k_max);
        let mut betas = Vec::with_capacity(k_max);
        let norm0 = norm(psi);
        if norm0 == 0.0 {
            return Err(Error::Propagation { t, message: "zero state vector".into() });
        }
        for (dst, src) in self.basis[0].iter_mut().zip(psi.iter()) {
            *dst = *src / norm0;
        }
        let mut k_eff = k_max;
        let mut beta_next = 0.0;
        let mut scale = 0.0f64;
        for j in 0..k_max {
            // w = H v_j - beta_{j-1} v_{j-1}
            let (head, tail) = self.basis.split_at_mut(j + 1);
            let v_j = &head[j];
            self.h.apply(t_eval, v_j, &mut self.w);
            if j > 0 {
                let b = betas[j - 1];
                for (w, v) in self.w.iter_mut().zip(head[j - 1].iter()) {
                    *w -= b * v;
                }
            }
            let alpha = dot_re(v_j, &self.w);
            for (w, v) in self.w.iter_mut().zip(v_j.iter()) {
                *w -= alpha * v;
            }
            alphas.push(alpha);
            let beta = norm(&self.w);
            scale = scale.max(alpha.abs()).max(beta);
            if beta <= 1e-13 * (1.0 + scale) {
                // Invariant subspace reached: the exponential is exact here.
                k_eff = j + 1;
                beta_next = 0.0;
                break;
            }
            if j + 1 < k_max {
                let v_next = &mut tail[0];
                for (dst, w) in v_next.iter_mut().zip(self.w.iter()) {
                    *dst = w / beta;
                }
                betas.push(beta);
            } else {
                beta_next = beta;
            }
        }

        // u = exp(-i dt T) e_1 through the eigenpairs of the small tridiagonal.
        let mut t_small = Array2::<f64>::zeros((k_eff, k_eff));
        for j in 0..k_eff {
            t_small[[j, j]] = alphas[j];
            if j + 1 < k_eff {
                t_small[[j, j + 1]] = betas[j];
                t_small[[j + 1, j]] = betas[j];
            }
        }
        let (evals, evecs) = t_small
            .eigh(UPLO::Lower)
            .map_err(|e| Error::Propagation { t, message: format!("subspace eigensolve: {e}") })?;
        let mut u = vec![Complex64::new(0.0, 0.0); k_eff];
        for l in 0..k_eff {
            let phase = Complex64::new(0.0, -evals[l] * dt).exp() * evecs[[0, l]];
            for (j, u_j) in u.iter_mut().enumerate() {
                *u_j += evecs[[j, l]] * phase;
            }
        }

        let residual = beta_next * u[k_eff - 1].norm() * dt.abs();
        if residual > self.cfg.step_tolerance {
            if depth >= 20 {
                return Err(Error::Propagation {
                    t,
                    message: format!(
                        "residual {residual:.3e} still above tolerance {:.3e} after 20 halvings",
                        self.cfg.step_tolerance
                    ),
                });
            }
            self.total_halvings += 1;
            self.step_depth(psi, t, dt / 2.0, depth + 1)?;
            return self.step_depth(psi, t + dt / 2.0, dt / 2.0, depth + 1);
        }
        self.max_residual = self.max_residual.max(residual);

        // psi <- norm0 * sum_j u_j v_j, renormalized.
        for a in psi.iter_mut() {
            *a = Complex64::new(0.0, 0.0);
        }
        for (j, u_j) in u.iter().enumerate() {
            let c = norm0 * u_j;
            for (a, v) in psi.iter_mut().zip(self.basis[j].iter()) {
                *a += c * v;
            }
        }
        let n = norm(psi);
        self.max_step_drift = self.max_step_drift.max((n - norm0).abs() / norm0);
        let corr = norm0 / n;
        for a in psi.iter_mut() {
            *a *= corr;
        }
        Ok(())
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn dot_re(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Single Krylov step `psi' = exp(-i H(t + dt/2) dt) psi` with `dt` from the
/// config. Convenience wrapper over [`Stepper`].
pub fn krylov_step(
    h: &OperatorMatrix,
    psi: &StateVector,
    t: f64,
    cfg: &KrylovConfig,
) -> Result<StateVector> {
    let mut stepper = Stepper::new(h, *cfg)?;
    let mut out = psi.clone();
    stepper.step(&mut out.amplitudes, t, cfg.dt)?;
    Ok(out)
}

/// Time-evolves `psi0` over `t_grid`, recording every observable at each grid
/// time (including t = 0). Grid times must be nonnegative multiples of
/// `cfg.dt` so that identical configurations take bit-identical step
/// sequences regardless of how many intermediate snapshots are requested.
pub fn propagate(
    h: &OperatorMatrix,
    psi0: &StateVector,
    t_grid: &[f64],
    observables: &[Observable],
    cfg: &KrylovConfig,
) -> Result<(StateVector, Trajectory)> {
    cfg.validate()?;
    if psi0.layout != h.layout {
        return Err(Error::model("initial state layout does not match the operator layout"));
    }
    if t_grid.is_empty() || t_grid[0] != 0.0 {
        return Err(Error::model("time grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::model("time grid must be strictly increasing"));
    }
    let mut grid_steps = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let ratio = t / cfg.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 {
            return Err(Error::model(format!(
                "grid time {t} is not a multiple of dt = {} (off by {:.2e} steps)",
                cfg.dt,
                (ratio - steps).abs()
            )));
        }
        grid_steps.push(steps as u64);
    }

    let mut stepper = Stepper::new(h, *cfg)?;
    let mut psi = psi0.clone();
    let mut trajectory = Trajectory {
        times: Vec::with_capacity(t_grid.len()),
        norms: Vec::with_capacity(t_grid.len()),
        series: observables
            .iter()
            .map(|o| Series { name: o.name.clone(), values: Vec::with_capacity(t_grid.len()) })
            .collect(),
        max_step_drift: 0.0,
        max_residual: 0.0,
        total_halvings: 0,
    };

    let mut step: u64 = 0;
    for (&t_target, &steps_target) in t_grid.iter().zip(&grid_steps) {
        while step < steps_target {
            let t_now = step as f64 * cfg.dt;
            stepper.step(&mut psi.amplitudes, t_now, cfg.dt).map_err(|e| match e {
                Error::Propagation { t, message } => Error::Propagation { t, message },
                other => other,
            })?;
            step += 1;
        }
        trajectory.times.push(t_target);
        trajectory.norms.push(psi.norm());
        for (series, obs) in trajectory.series.iter_mut().zip(observables) {
            series.values.push((obs.eval)(t_target, &psi));
        }
    }
    trajectory.max_step_drift = stepper.max_step_drift;
    trajectory.max_residual = stepper.max_residual;
    trajectory.total_halvings = stepper.total_halvings;
    Ok((psi, trajectory))
}
