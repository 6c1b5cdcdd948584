//! Explicit Ito (left-endpoint) evolution of the coupled state
//! `(lambda, psi, phi, sigma, f)` in log-scale time.
//!
//! Per step, with every right-hand-side coefficient frozen at the pre-step
//! state and `D*` the evaluated driver fields of the increment:
//!
//! ```text
//! psi   += Dpsi
//! phi   += eps (Dphi + phi^i d_i Dphi)
//! sigma += eps (Dsigma + sigma^i d_i Dphi + Dpsi phi) + (eps^2/(2 lambda)) ds J phi
//! f     += eps ( f grad Dphi + (phi^i a - sigma^i J) grad(d_i Dphi)
//!                - (J grad Dpsi) ⊗ phi )
//! ```
//!
//! `lambda` advances by its closed form `sqrt(1 + eps^2 s)` rather than by
//! Euler. The gradients of `phi` and `sigma` needed by the residuum are
//! maintained by accumulating the analytic per-step gradient increments
//! (product rule applied to the updates above), so no evolving field is
//! ever differentiated numerically.
//!
//! The residuum `r = a(id + grad phi) - lambda id - J grad sigma - f`
//! vanishes for the continuum dynamics; its ensemble mean square decays
//! linearly in the step size and serves as the discretization diagnostic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::algebra::Mat2;
use crate::config::SimConfig;
use crate::driver::{
    evaluate_drivers_into, sample_increment, DriverError, DriverFields, DriverIncrement,
};
use crate::grid::{EndoGrid, GridError, GridSpec, ScalarGrid, VectorGrid};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("log-scale time must be nonnegative, got s = {0}")]
    NegativeTime(f64),
    #[error("increment does not match state: state (s = {state_s}, lambda = {state_lambda}), increment (s = {inc_s}, lambda = {inc_lambda})")]
    MismatchedIncrement {
        state_s: f64,
        state_lambda: f64,
        inc_s: f64,
        inc_lambda: f64,
    },
    #[error("non-finite value in field `{field}` after step to s = {s}")]
    NonfiniteField { field: &'static str, s: f64 },
    #[error("state does not track corrector gradients; enable gradient accumulation to evaluate the residuum")]
    GradientUnavailable,
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("path {path_index} failed at step {step_index}: {source}")]
    PathStep {
        path_index: u64,
        step_index: usize,
        source: Box<EvolutionError>,
    },
}

/// Exact solution `sqrt(1 + eps^2 s)` of `d lambda = eps^2/(2 lambda) ds`,
/// `lambda(0) = 1`.
pub fn lambda_closed_form(s: f64, epsilon: f64) -> Result<f64, EvolutionError> {
    if s < 0.0 {
        return Err(EvolutionError::NegativeTime(s));
    }
    Ok((1.0 + epsilon * epsilon * s).sqrt())
}

/// The evolving fields on a fixed evaluation grid, together with `s` and
/// the proxy diffusivity.
#[derive(Clone, Debug)]
pub struct ScaleState {
    pub s: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub psi: ScalarGrid,
    pub phi: VectorGrid,
    pub sigma: VectorGrid,
    pub f: EndoGrid,
    grad_phi: Option<EndoGrid>,
    grad_sigma: Option<EndoGrid>,
}

impl ScaleState {
    /// The zero initial state at `s = 0` (`lambda = 1`, all fields zero).
    pub fn initial(spec: GridSpec, epsilon: f64, track_gradients: bool) -> Self {
        ScaleState {
            s: 0.0,
            epsilon,
            lambda: 1.0,
            psi: ScalarGrid::zeros(spec),
            phi: VectorGrid::zeros(spec),
            sigma: VectorGrid::zeros(spec),
            f: EndoGrid::zeros(spec),
            grad_phi: track_gradients.then(|| EndoGrid::zeros(spec)),
            grad_sigma: track_gradients.then(|| EndoGrid::zeros(spec)),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.psi.spec()
    }

    pub fn tracks_gradients(&self) -> bool {
        self.grad_phi.is_some()
    }

    pub fn grad_phi(&self) -> Option<&EndoGrid> {
        self.grad_phi.as_ref()
    }

    pub fn grad_sigma(&self) -> Option<&EndoGrid> {
        self.grad_sigma.as_ref()
    }
}

/// Knobs for the stepper. `include_sigma_drift` exists as a negative
/// control: dropping the drift term of the flux-corrector update leaves a
/// step-size-independent floor in `E|r|^2`.
#[derive(Clone, Copy, Debug)]
pub struct StepOptions {
    pub include_sigma_drift: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            include_sigma_drift: true,
        }
    }
}

/// The coefficient field `a = id + eps psi J` at the current state.
pub fn coefficient_field(state: &ScaleState) -> EndoGrid {
    let mut out = EndoGrid::zeros(state.spec());
    for (o, &p) in out.values_mut().iter_mut().zip(state.psi.values()) {
        *o = Mat2::IDENTITY.add(Mat2::J.scale(state.epsilon * p));
    }
    out
}

fn residuum_at(state: &ScaleState, g_phi: &EndoGrid, g_sig: &EndoGrid, idx: usize) -> Mat2 {
    let a = Mat2::IDENTITY.add(Mat2::J.scale(state.epsilon * state.psi.get(idx)));
    a.mul(Mat2::IDENTITY.add(g_phi.get(idx)))
        .sub(Mat2::IDENTITY.scale(state.lambda))
        .sub(g_sig.get(idx).j_left())
        .sub(state.f.get(idx))
}

/// The residuum `r = a(id + grad phi) - lambda id - J grad sigma - f`,
/// evaluated pointwise from the accumulated gradients.
pub fn residuum(state: &ScaleState) -> Result<EndoGrid, EvolutionError> {
    let (g_phi, g_sig) = match (&state.grad_phi, &state.grad_sigma) {
        (Some(p), Some(s)) => (p, s),
        _ => return Err(EvolutionError::GradientUnavailable),
    };
    let mut out = EndoGrid::zeros(state.spec());
    for idx in 0..state.spec().num_points() {
        out.set(idx, residuum_at(state, g_phi, g_sig, idx));
    }
    Ok(out)
}

/// Advances the state by one increment. The increment must have been
/// sampled at the state's `(s, lambda)`.
pub fn step(
    state: ScaleState,
    inc: &DriverIncrement,
    opts: &StepOptions,
) -> Result<ScaleState, EvolutionError> {
    let mut scratch = DriverFields::zeros(state.spec());
    step_with_scratch(state, inc, opts, &mut scratch)
}

/// [`step`] with a caller-provided scratch buffer for the evaluated driver
/// fields (the hot path for ensembles).
pub fn step_with_scratch(
    mut state: ScaleState,
    inc: &DriverIncrement,
    opts: &StepOptions,
    scratch: &mut DriverFields,
) -> Result<ScaleState, EvolutionError> {
    let tol = 1e-12;
    if (inc.s_start - state.s).abs() > tol || (inc.lambda_at_start - state.lambda).abs() > tol {
        return Err(EvolutionError::MismatchedIncrement {
            state_s: state.s,
            state_lambda: state.lambda,
            inc_s: inc.s_start,
            inc_lambda: inc.lambda_at_start,
        });
    }
    let spec = state.spec();
    evaluate_drivers_into(inc, spec, scratch);

    let eps = state.epsilon;
    let lambda = state.lambda;
    let drift_coeff = if opts.include_sigma_drift {
        eps * eps / (2.0 * lambda) * inc.ds
    } else {
        0.0
    };

    let track = state.tracks_gradients();
    let mut g_phi = state.grad_phi.take();
    let mut g_sig = state.grad_sigma.take();

    for idx in 0..spec.num_points() {
        let dpsi = scratch.dpsi.get(idx);
        let dphi = scratch.dphi.get(idx);
        let dsig = scratch.dsigma.get(idx);
        let gdpsi = scratch.grad_dpsi.get(idx);
        let gdphi = scratch.grad_dphi.get(idx);
        let gdsig = scratch.grad_dsigma.get(idx);
        let gpd = scratch.grad_partial_dphi.get(idx);

        let psi0 = state.psi.get(idx);
        let phi0 = state.phi.get(idx);
        let sig0 = state.sigma.get(idx);
        let f0 = state.f.get(idx);
        let a0 = Mat2::IDENTITY.add(Mat2::J.scale(eps * psi0));

        // transport terms phi^i d_i Dphi and sigma^i d_i Dphi
        let tr_phi = gdphi.transpose_apply(phi0);
        let tr_sig = gdphi.transpose_apply(sig0);

        let phi_new = phi0.add(dphi.add(tr_phi).scale(eps));
        let sigma_new = sig0
            .add(dsig.add(tr_sig).add(phi0.scale(dpsi)).scale(eps))
            .add(phi0.rot90().scale(drift_coeff));

        // f update: f grad Dphi + (phi^i a - sigma^i J) grad(d_i Dphi)
        //           - (J grad Dpsi) ⊗ phi
        let mut df = f0.mul(gdphi);
        for i in 0..2 {
            let coeff = a0
                .scale(phi0.component(i))
                .sub(Mat2::J.scale(sig0.component(i)));
            df = df.add(coeff.mul(gpd[i]));
        }
        df = df.sub(Mat2::outer(gdpsi.rot90(), phi0));
        let f_new = f0.add(df.scale(eps));

        if track {
            let gp0 = g_phi.as_ref().unwrap().get(idx);
            let gs0 = g_sig.as_ref().unwrap().get(idx);
            // d grad(phi) = eps ((id + grad phi) grad Dphi + phi^i grad(d_i Dphi))
            let mut dgp = Mat2::IDENTITY.add(gp0).mul(gdphi);
            dgp = dgp
                .add(gpd[0].scale(phi0.x))
                .add(gpd[1].scale(phi0.y));
            g_phi.as_mut().unwrap().set(idx, gp0.add(dgp.scale(eps)));
            // d grad(sigma) = eps (grad Dsigma + grad sigma grad Dphi
            //   + sigma^i grad(d_i Dphi) + grad Dpsi ⊗ phi + Dpsi grad phi)
            //   - (eps^2/(2 lambda)) ds grad(phi) J
            let mut dgs = gdsig
                .add(gs0.mul(gdphi))
                .add(gpd[0].scale(sig0.x))
                .add(gpd[1].scale(sig0.y))
                .add(Mat2::outer(gdpsi, phi0))
                .add(gp0.scale(dpsi));
            dgs = dgs.scale(eps).sub(gp0.j_right().scale(drift_coeff));
            g_sig.as_mut().unwrap().set(idx, gs0.add(dgs));
        }

        state.psi.set(idx, psi0 + dpsi);
        state.phi.set(idx, phi_new);
        state.sigma.set(idx, sigma_new);
        state.f.set(idx, f_new);
    }

    state.grad_phi = g_phi;
    state.grad_sigma = g_sig;
    state.s = inc.s_start + inc.ds;
    state.epsilon = eps;
    state.lambda = lambda_closed_form(state.s, eps)?;
    debug_assert!(
        (state.lambda * state.lambda - (1.0 + eps * eps * state.s)).abs() <= 1e-12,
        "proxy diffusivity drifted off its closed form"
    );

    check_finite(&state)?;
    Ok(state)
}

fn check_finite(state: &ScaleState) -> Result<(), EvolutionError> {
    let s = state.s;
    if !state.psi.values().iter().all(|v| v.is_finite()) {
        return Err(EvolutionError::NonfiniteField { field: "psi", s });
    }
    if !state.phi.values().iter().all(|v| v.is_finite()) {
        return Err(EvolutionError::NonfiniteField { field: "phi", s });
    }
    if !state.sigma.values().iter().all(|v| v.is_finite()) {
        return Err(EvolutionError::NonfiniteField { field: "sigma", s });
    }
    if !state.f.values().iter().all(|v| v.is_finite()) {
        return Err(EvolutionError::NonfiniteField { field: "f", s });
    }
    if let Some(g) = &state.grad_phi {
        if !g.values().iter().all(|v| v.is_finite()) {
            return Err(EvolutionError::NonfiniteField { field: "grad_phi", s });
        }
    }
    if let Some(g) = &state.grad_sigma {
        if !g.values().iter().all(|v| v.is_finite()) {
            return Err(EvolutionError::NonfiniteField {
                field: "grad_sigma",
                s,
            });
        }
    }
    Ok(())
}

/// Per-path ensemble statistics at one output time: space averages of the
/// squared field magnitudes (`phi4` is the space average of `|phi|^4`), and
/// the signed cross moment `sigma . J phi` that enters the flux-corrector
/// drift diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct StepSummary {
    pub s_end: f64,
    pub space_avg_psi2: f64,
    pub space_avg_phi2: f64,
    pub space_avg_sigma2: f64,
    pub space_avg_phi4: f64,
    pub space_avg_f2: f64,
    pub space_avg_r2: f64,
    pub space_avg_sigma_dot_jphi: f64,
}

pub fn summarize(state: &ScaleState) -> Result<StepSummary, EvolutionError> {
    let (g_phi, g_sig) = match (&state.grad_phi, &state.grad_sigma) {
        (Some(p), Some(s)) => (p, s),
        _ => return Err(EvolutionError::GradientUnavailable),
    };
    let n_pts = state.spec().num_points() as f64;
    let mut psi2 = 0.0;
    let mut phi2 = 0.0;
    let mut sigma2 = 0.0;
    let mut phi4 = 0.0;
    let mut f2 = 0.0;
    let mut r2 = 0.0;
    let mut cross = 0.0;
    for idx in 0..state.spec().num_points() {
        let p = state.psi.get(idx);
        psi2 += p * p;
        let ph = state.phi.get(idx);
        let ph2 = ph.norm2();
        phi2 += ph2;
        phi4 += ph2 * ph2;
        let sg = state.sigma.get(idx);
        sigma2 += sg.norm2();
        cross += sg.dot(ph.rot90());
        f2 += state.f.get(idx).frob2();
        r2 += residuum_at(state, g_phi, g_sig, idx).frob2();
    }
    Ok(StepSummary {
        s_end: state.s,
        space_avg_psi2: psi2 / n_pts,
        space_avg_phi2: phi2 / n_pts,
        space_avg_sigma2: sigma2 / n_pts,
        space_avg_phi4: phi4 / n_pts,
        space_avg_f2: f2 / n_pts,
        space_avg_r2: r2 / n_pts,
        space_avg_sigma_dot_jphi: cross / n_pts,
    })
}

/// Runs one path from `s = 0` to `config.s_max`, calling `observer` on the
/// state at every output time (including the initial state), and returns a
/// [`StepSummary`] per output time. Bit-reproducible for fixed
/// `(config, seed)`.
pub fn run_path_with<F: FnMut(&ScaleState)>(
    config: &SimConfig,
    seed: u64,
    opts: &StepOptions,
    mut observer: F,
) -> Result<Vec<StepSummary>, EvolutionError> {
    let spec = GridSpec::new(config.grid_n, config.box_length)?;
    let sampler = config.sampler_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ScaleState::initial(spec, config.epsilon, true);
    let mut scratch = DriverFields::zeros(spec);

    let mut summaries = Vec::new();
    observer(&state);
    summaries.push(summarize(&state)?);

    let n_steps = (config.s_max / config.ds).round() as usize;
    let mut next_output = config.output_every;
    for i in 0..n_steps {
        let s = i as f64 * config.ds;
        // land exactly on s_max in the last step
        let ds = if i + 1 == n_steps {
            config.s_max - s
        } else {
            config.ds
        };
        let inc = sample_increment(s, ds, state.lambda, &sampler, &mut rng)
            .map_err(EvolutionError::from)
            .map_err(|e| at_step(e, seed, i))?;
        state = step_with_scratch(state, &inc, opts, &mut scratch).map_err(|e| at_step(e, seed, i))?;
        let is_last = i + 1 == n_steps;
        if state.s + 1e-9 >= next_output || is_last {
            observer(&state);
            summaries.push(summarize(&state)?);
            while next_output <= state.s + 1e-9 {
                next_output += config.output_every;
            }
        }
    }
    Ok(summaries)
}

fn at_step(e: EvolutionError, path_index: u64, step_index: usize) -> EvolutionError {
    EvolutionError::PathStep {
        path_index,
        step_index,
        source: Box::new(e),
    }
}

/// [`run_path_with`] without an observer.
pub fn run_path(config: &SimConfig, seed: u64) -> Result<Vec<StepSummary>, EvolutionError> {
    run_path_with(config, seed, &StepOptions::default(), |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Mat2, Vec2};
    use crate::driver::{SamplerConfig, WaveMode};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;

    #[test]
    fn lambda_closed_form_values() {
        assert_eq!(lambda_closed_form(0.0, 0.3).unwrap(), 1.0);
        assert_relative_eq!(
            lambda_closed_form(5.0, 0.1).unwrap(),
            1.024695077,
            max_relative = 1e-9
        );
        assert!(matches!(
            lambda_closed_form(-0.1, 0.1),
            Err(EvolutionError::NegativeTime(_))
        ));
    }

    #[test]
    fn lambda_matches_rk4_ode_integration() {
        // independent route: RK4 on d lambda = eps^2 / (2 lambda) ds
        for (s_max, eps) in [(5.0, 0.1), (2.0, 0.3), (10.0, 0.05)] {
            let n = 20_000;
            let h = s_max / n as f64;
            let mut lam: f64 = 1.0;
            let f = |l: f64| eps * eps / (2.0 * l);
            for _ in 0..n {
                let k1 = f(lam);
                let k2 = f(lam + 0.5 * h * k1);
                let k3 = f(lam + 0.5 * h * k2);
                let k4 = f(lam + h * k3);
                lam += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            let closed = lambda_closed_form(s_max, eps).unwrap();
            assert_abs_diff_eq!(lam, closed, epsilon = 1e-10);
        }
    }

    fn small_spec() -> GridSpec {
        GridSpec::new(8, std::f64::consts::TAU * 2.0).unwrap()
    }

    #[test]
    fn coefficient_field_identities() {
        let spec = small_spec();
        let state = ScaleState::initial(spec, 0.5, false);
        let a = coefficient_field(&state);
        assert_eq!(a.get(0), Mat2::IDENTITY);

        // psi = 1 constant, eps = 0.5 -> a = [[1, -0.5], [0.5, 1]]
        let mut state = ScaleState::initial(spec, 0.5, false);
        for v in state.psi.values_mut() {
            *v = 1.0;
        }
        let a = coefficient_field(&state);
        assert_eq!(a.get(3), Mat2::new(1.0, -0.5, 0.5, 1.0));

        // det a = 1 + eps^2 psi^2 pointwise
        for v in state.psi.values_mut() {
            *v = -1.7;
        }
        let a = coefficient_field(&state);
        let expected = 1.0 + 0.25 * 1.7 * 1.7;
        for m in a.values() {
            assert_abs_diff_eq!(m.det(), expected, epsilon = 1e-14);
        }
    }

    fn single_mode_increment(ds: f64) -> DriverIncrement {
        DriverIncrement {
            s_start: 0.0,
            ds,
            lambda_at_start: 1.0,
            modes: vec![WaveMode {
                k: Vec2::new(1.0, 0.0),
                amplitude: 1.0,
                phase: 0.0,
            }],
        }
    }

    #[test]
    fn first_step_from_zero_state() {
        // phi gains exactly eps * Dphi, f stays zero, sigma gains eps * Dsigma
        let spec = small_spec();
        let eps = 0.1;
        let ds = 0.01;
        let state = ScaleState::initial(spec, eps, true);
        let inc = single_mode_increment(ds);
        let new = step(state, &inc, &StepOptions::default()).unwrap();
        let n = spec.n();
        let h = spec.spacing();
        for ix in 0..n {
            for iy in 0..n {
                let idx = ix * n + iy;
                let x1 = ix as f64 * h;
                let phi = new.phi.get(idx);
                assert_abs_diff_eq!(phi.x, 0.0, epsilon = 1e-13);
                assert_abs_diff_eq!(phi.y, eps * x1.sin(), epsilon = 1e-12);
                let sig = new.sigma.get(idx);
                assert_abs_diff_eq!(sig.x, eps * x1.sin(), epsilon = 1e-12);
                assert_abs_diff_eq!(sig.y, 0.0, epsilon = 1e-13);
                assert_eq!(new.f.get(idx), Mat2::ZERO);
            }
        }
        assert_relative_eq!(new.lambda, (1.0 + eps * eps * ds).sqrt(), max_relative = 1e-14);
        // gradient accumulation after the first step is exactly eps * grad Dphi
        let g = new.grad_phi().unwrap();
        for ix in 0..n {
            let idx = ix * n;
            let x1 = ix as f64 * h;
            assert_abs_diff_eq!(g.get(idx).get(0, 1), eps * x1.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(g.get(idx).get(0, 0), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn initial_residuum_is_zero() {
        let state = ScaleState::initial(small_spec(), 0.1, true);
        let r = residuum(&state).unwrap();
        assert_eq!(r.mean_frob2(), 0.0);
    }

    #[test]
    fn residuum_requires_gradients() {
        let state = ScaleState::initial(small_spec(), 0.1, false);
        assert!(matches!(
            residuum(&state),
            Err(EvolutionError::GradientUnavailable)
        ));
    }

    #[test]
    fn residuum_after_one_step_is_order_ds() {
        // a deterministic single-mode increment with the white-noise
        // amplitude sqrt(2 ds) collapses the one-step residuum to its
        // quadratic terms, so |r| scales linearly in ds
        let spec = small_spec();
        let eps = 0.1;
        let mut norms = Vec::new();
        for ds in [0.02, 0.01, 0.005] {
            let state = ScaleState::initial(spec, eps, true);
            let inc = DriverIncrement {
                s_start: 0.0,
                ds,
                lambda_at_start: 1.0,
                modes: vec![WaveMode {
                    k: Vec2::new(0.6, 0.8),
                    amplitude: (2.0 * ds).sqrt(),
                    phase: 0.3,
                }],
            };
            let new = step(state, &inc, &StepOptions::default()).unwrap();
            let r = residuum(&new).unwrap();
            norms.push(r.mean_frob2().sqrt());
        }
        // halving ds should halve |r| up to O(ds) corrections
        assert!(
            norms[0] / norms[1] > 1.8 && norms[0] / norms[1] < 2.2,
            "{norms:?}"
        );
        assert!(
            norms[1] / norms[2] > 1.8 && norms[1] / norms[2] < 2.2,
            "{norms:?}"
        );
    }

    #[test]
    fn mismatched_increment_is_rejected() {
        let state = ScaleState::initial(small_spec(), 0.1, true);
        let mut inc = single_mode_increment(0.01);
        inc.s_start = 0.5;
        assert!(matches!(
            step(state, &inc, &StepOptions::default()),
            Err(EvolutionError::MismatchedIncrement { .. })
        ));
    }

    #[test]
    fn nan_aborts_the_path() {
        let mut state = ScaleState::initial(small_spec(), 0.1, true);
        state.psi.set(0, f64::NAN);
        let inc = single_mode_increment(0.01);
        let err = step(state, &inc, &StepOptions::default()).unwrap_err();
        assert!(matches!(err, EvolutionError::NonfiniteField { .. }));
    }

    #[test]
    fn run_path_zero_smax_gives_single_zero_summary() {
        let config = SimConfig {
            s_max: 0.0,
            ..SimConfig::default_desk()
        };
        let sums = run_path(&config, 1).unwrap();
        assert_eq!(sums.len(), 1);
        let s0 = &sums[0];
        assert_eq!(s0.s_end, 0.0);
        assert_eq!(s0.space_avg_phi2, 0.0);
        assert_eq!(s0.space_avg_psi2, 0.0);
        assert_eq!(s0.space_avg_r2, 0.0);
    }

    #[test]
    fn run_path_is_deterministic() {
        let config = SimConfig {
            s_max: 0.2,
            ds: 0.02,
            grid_n: 16,
            n_modes: 8,
            ..SimConfig::default_desk()
        };
        let a = run_path(&config, 7).unwrap();
        let b = run_path(&config, 7).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.space_avg_phi2.to_bits(), y.space_avg_phi2.to_bits());
            assert_eq!(x.space_avg_r2.to_bits(), y.space_avg_r2.to_bits());
        }
        let c = run_path(&config, 8).unwrap();
        assert_ne!(
            a[1].space_avg_phi2.to_bits(),
            c[1].space_avg_phi2.to_bits()
        );
    }

    #[test]
    fn lambda_law_holds_along_a_path() {
        let config = SimConfig {
            s_max: 1.0,
            ds: 0.05,
            grid_n: 16,
            n_modes: 8,
            epsilon: 0.3,
            ..SimConfig::default_desk()
        };
        let mut worst = 0.0f64;
        run_path_with(&config, 3, &StepOptions::default(), |state| {
            let dev =
                (state.lambda * state.lambda - (1.0 + 0.3 * 0.3 * state.s)).abs();
            worst = worst.max(dev);
        })
        .unwrap();
        assert!(worst <= 1e-12, "lambda law violated by {worst}");
    }
}
