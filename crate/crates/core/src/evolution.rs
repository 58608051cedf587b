//! Fixed-step RK4 for spectral densities and density matrices, with
//! conservation monitoring.

use crate::engine::{CMatrix, DensityMatrix};
use crate::error::{Error, Result};
use crate::photon::SpectralDensity;

/// A state that can be advanced by an explicit integrator.
pub trait OdeState: Clone {
    type Delta;

    fn time(&self) -> f64;
    fn set_time(&mut self, t: f64);
    /// `self + h * delta`, at time `time`.
    fn add_scaled(&self, delta: &Self::Delta, h: f64, time: f64) -> Self;
    fn is_finite(&self) -> bool;
    /// `|total probability - 1|` (or `|trace - 1|`).
    fn conservation_error(&self) -> f64;
    /// Smallest eigenvalue, for matrix states only.
    fn min_eigenvalue(&self) -> Option<f64> {
        None
    }
}

impl OdeState for SpectralDensity {
    type Delta = Vec<f64>;

    fn time(&self) -> f64 {
        self.time
    }

    fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    fn add_scaled(&self, delta: &Vec<f64>, h: f64, time: f64) -> Self {
        let mut out = self.clone();
        for (v, d) in out.values_mut().iter_mut().zip(delta) {
            *v += h * d;
        }
        out.time = time;
        out
    }

    fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    fn conservation_error(&self) -> f64 {
        (self.total_probability() - 1.0).abs()
    }
}

impl OdeState for TimedMatrix {
    type Delta = CMatrix;

    fn time(&self) -> f64 {
        self.time
    }

    fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    fn add_scaled(&self, delta: &CMatrix, h: f64, time: f64) -> Self {
        let rho = &self.state.rho + delta * num_complex::Complex64::from(h);
        TimedMatrix { state: DensityMatrix::from_evolved(rho), time }
    }

    fn is_finite(&self) -> bool {
        self.state.rho.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn conservation_error(&self) -> f64 {
        (self.state.trace() - 1.0).abs()
    }

    fn min_eigenvalue(&self) -> Option<f64> {
        Some(self.state.min_eigenvalue())
    }
}

/// Density matrix with its time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedMatrix {
    pub state: DensityMatrix,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub conservation_error: Vec<f64>,
    /// Empty for spectral densities.
    pub min_eigenvalue: Vec<f64>,
}

impl<S: OdeState> Trajectory<S> {
    fn start(initial: S) -> Self {
        let mut t = Self { times: vec![], states: vec![], conservation_error: vec![], min_eigenvalue: vec![] };
        t.push(initial);
        t
    }

    fn push(&mut self, s: S) {
        self.times.push(s.time());
        self.conservation_error.push(s.conservation_error());
        if let Some(m) = s.min_eigenvalue() {
            self.min_eigenvalue.push(m);
        }
        self.states.push(s);
    }

    pub fn max_conservation_error(&self) -> f64 {
        self.conservation_error.iter().cloned().fold(0.0, f64::max)
    }

    pub fn last(&self) -> &S {
        self.states.last().expect("trajectory holds the initial state")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvolveError<S: std::fmt::Debug> {
    #[error("integration diverged at t = {time}: conservation error {error:e} above ceiling {ceiling:e}")]
    Diverged { time: f64, error: f64, ceiling: f64, partial: Box<Trajectory<S>> },
    #[error(transparent)]
    Failed(#[from] Error),
}

/// One classical RK4 step from `state` (at `state.time()`) to `t + dt`.
pub fn step_rk4<S, F>(state: &S, dt: f64, rhs: &mut F) -> Result<S>
where
    S: OdeState,
    F: FnMut(&S, f64) -> Result<S::Delta>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let t = state.time();
    let h2 = 0.5 * dt;
    let k1 = rhs(state, t)?;
    let y2 = state.add_scaled(&k1, h2, t + h2);
    let k2 = rhs(&y2, t + h2)?;
    let y3 = state.add_scaled(&k2, h2, t + h2);
    let k3 = rhs(&y3, t + h2)?;
    let y4 = state.add_scaled(&k3, dt, t + dt);
    let k4 = rhs(&y4, t + dt)?;
    let out = state
        .add_scaled(&k1, dt / 6.0, t + dt)
        .add_scaled(&k2, dt / 3.0, t + dt)
        .add_scaled(&k3, dt / 3.0, t + dt)
        .add_scaled(&k4, dt / 6.0, t + dt);
    if !out.is_finite() {
        return Err(Error::Numerical(format!("non-finite state after step to t = {}", t + dt)));
    }
    Ok(out)
}

/// Integrates from `initial.time()` to `t_end` in `n_steps` equal steps,
/// recording every state. Stops with [`EvolveError::Diverged`] once the
/// conservation error exceeds `ceiling`.
pub fn evolve<S, F>(
    initial: S,
    t_end: f64,
    n_steps: usize,
    ceiling: f64,
    mut rhs: F,
) -> std::result::Result<Trajectory<S>, EvolveError<S>>
where
    S: OdeState + std::fmt::Debug,
    F: FnMut(&S, f64) -> Result<S::Delta>,
{
    let t0 = initial.time();
    if !(t_end > t0) || n_steps == 0 {
        return Err(Error::Domain(format!("need t_end > {t0} and n_steps >= 1")).into());
    }
    let dt = (t_end - t0) / n_steps as f64;
    let mut traj = Trajectory::start(initial);
    for n in 1..=n_steps {
        let mut next = step_rk4(traj.last(), dt, &mut rhs)?;
        // pin the clock to the grid of step times to avoid drift
        let t = if n == n_steps { t_end } else { t0 + n as f64 * dt };
        next.set_time(t);
        let err = next.conservation_error();
        traj.push(next);
        if err > ceiling {
            return Err(EvolveError::Diverged { time: t, error: err, ceiling, partial: Box::new(traj) });
        }
    }
    Ok(traj)
}
