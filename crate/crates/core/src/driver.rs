//! Shell-supported white-noise increments and their derived driver fields.
//!
//! One log-scale increment of width `ds` starting at `s` consists of plane
//! waves `A cos(k.x + theta)` with `|k| = e^-s`. Two samplers are provided:
//!
//! * **plane-wave** (default): `n_modes` directions drawn uniformly on the
//!   circle of radius `e^-s`. Exactly isotropic in law; the fields are
//!   stationary but not periodic on the box.
//! * **lattice-shell**: all modes of the lattice `(2pi/box_length) Z^2`
//!   inside the annulus `e^-(s+ds) < |k| <= e^-s` (half-plane
//!   representatives, so the field is real). Periodic on the box and exactly
//!   mean zero over the grid, but only approximately isotropic.
//!
//! Amplitudes are equal across modes, `A = sqrt(2 ds / n_modes)`, so that
//! `E[dpsi(x)^2] = ds` at every point; with `gaussian_amplitudes` each mode
//! is additionally weighted by an independent normalized Rayleigh factor,
//! which makes the increment exactly Gaussian at any mode count.
//!
//! From `dpsi` the driver pair is derived in closed form per mode (with
//! `u = k.x + theta`, `kappa = |k|`):
//!
//! ```text
//! dpsi   =  A cos u                 grad dpsi    = -A sin u * k
//! dphi   = (A / (lambda kappa^2)) sin u * (Jk)
//! dsigma = (A / kappa^2) sin u * k
//! ```
//!
//! together with the analytic gradients and second derivatives; no finite
//! differences are involved, so the pointwise relations
//! `tr grad dphi = 0`, `lambda tr(grad dphi J) = dpsi` and
//! `lambda grad dphi + dpsi J = J grad dsigma` hold to rounding on every
//! sample.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::algebra::{Mat2, Vec2};
use crate::grid::{EndoGrid, GridSpec, ScalarGrid, Tensor3Grid, VectorGrid};

#[derive(Debug, Error, PartialEq)]
pub enum DriverError {
    #[error("log-scale step must be positive, got ds = {0}")]
    NonpositiveStep(f64),
    #[error("proxy diffusivity must satisfy lambda >= 1, got {0}")]
    InvalidLambda(f64),
    #[error("plane-wave sampler needs n_modes >= 1")]
    NoModes,
    #[error(
        "lattice shell e^-(s+ds) < |k| <= e^-s contains no modes for box_length {box_length}; \
         need box_length >= {required_box_length}"
    )]
    EmptyShell {
        box_length: f64,
        required_box_length: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    PlaneWave,
    LatticeShell,
}

/// How driver increments are drawn.
#[derive(Clone, Copy, Debug)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Modes per increment (plane-wave sampler; the lattice sampler uses
    /// every annulus mode).
    pub n_modes: usize,
    /// Weight each mode by an independent normalized Rayleigh amplitude.
    pub gaussian_amplitudes: bool,
    /// Torus period for the lattice sampler; ignored by the plane-wave one.
    pub box_length: f64,
}

impl SamplerConfig {
    pub fn plane_wave(n_modes: usize) -> Self {
        SamplerConfig {
            kind: SamplerKind::PlaneWave,
            n_modes,
            gaussian_amplitudes: false,
            box_length: 0.0,
        }
    }

    pub fn lattice_shell(box_length: f64) -> Self {
        SamplerConfig {
            kind: SamplerKind::LatticeShell,
            n_modes: 0,
            gaussian_amplitudes: false,
            box_length,
        }
    }
}

/// One plane wave of an increment.
#[derive(Clone, Copy, Debug)]
pub struct WaveMode {
    /// Wavevector (cotangent components), `|k| = e^-s` for the plane-wave
    /// sampler, lattice annulus modes otherwise.
    pub k: Vec2,
    pub amplitude: f64,
    /// Phase in `[0, 2pi)`.
    pub phase: f64,
}

/// A sampled white-noise increment `dpsi` over `[s, s + ds)`.
#[derive(Clone, Debug)]
pub struct DriverIncrement {
    pub s_start: f64,
    pub ds: f64,
    /// The proxy diffusivity entering the Helmholtz relation for this
    /// increment (left endpoint value).
    pub lambda_at_start: f64,
    pub modes: Vec<WaveMode>,
}

/// Samples one increment.
///
/// The plane-wave sampler draws `n_modes` uniform directions on the circle
/// `|k| = e^-s`; the lattice sampler takes all torus modes in the annulus
/// `(e^-(s+ds), e^-s]` and distributes the variance `ds` uniformly over
/// them (Hermitian symmetry is built in by the real cosine form).
pub fn sample_increment(
    s: f64,
    ds: f64,
    lambda: f64,
    sampler: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DriverIncrement, DriverError> {
    if !(ds > 0.0) {
        return Err(DriverError::NonpositiveStep(ds));
    }
    if !(lambda >= 1.0) {
        return Err(DriverError::InvalidLambda(lambda));
    }
    let kappa = (-s).exp();
    let wavevectors: Vec<Vec2> = match sampler.kind {
        SamplerKind::PlaneWave => {
            if sampler.n_modes == 0 {
                return Err(DriverError::NoModes);
            }
            (0..sampler.n_modes)
                .map(|_| {
                    let ang = rng.random::<f64>() * std::f64::consts::TAU;
                    Vec2::new(kappa * ang.cos(), kappa * ang.sin())
                })
                .collect()
        }
        SamplerKind::LatticeShell => lattice_shell_modes(s, ds, sampler.box_length)?,
    };
    let base_amp = (2.0 * ds / wavevectors.len() as f64).sqrt();
    let modes = wavevectors
        .into_iter()
        .map(|k| {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let amplitude = if sampler.gaussian_amplitudes {
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                base_amp * (0.5 * (g1 * g1 + g2 * g2)).sqrt()
            } else {
                base_amp
            };
            WaveMode { k, amplitude, phase }
        })
        .collect();
    Ok(DriverIncrement {
        s_start: s,
        ds,
        lambda_at_start: lambda,
        modes,
    })
}

/// Half-plane representatives of the lattice annulus
/// `e^-(s+ds) < |k| <= e^-s`, in deterministic order.
fn lattice_shell_modes(s: f64, ds: f64, box_length: f64) -> Result<Vec<Vec2>, DriverError> {
    let r_hi = (-s).exp();
    let r_lo = (-(s + ds)).exp();
    if !(box_length > 0.0) {
        return Err(DriverError::EmptyShell {
            box_length,
            required_box_length: std::f64::consts::TAU / (r_hi - r_lo),
        });
    }
    let delta = std::f64::consts::TAU / box_length;
    let m_max = (r_hi / delta).floor() as i64;
    let mut modes = Vec::new();
    for m1 in 0..=m_max {
        for m2 in -m_max..=m_max {
            // half-plane: m1 > 0, or m1 == 0 and m2 > 0
            if m1 == 0 && m2 <= 0 {
                continue;
            }
            let k = Vec2::new(m1 as f64 * delta, m2 as f64 * delta);
            let kn = k.norm2().sqrt();
            if kn > r_lo && kn <= r_hi {
                modes.push(k);
            }
        }
    }
    if modes.is_empty() {
        // a lattice axis point falls in the annulus once the spacing is
        // below the annulus width
        return Err(DriverError::EmptyShell {
            box_length,
            required_box_length: std::f64::consts::TAU / (r_hi - r_lo),
        });
    }
    Ok(modes)
}

/// One increment and every derived field evaluated on a grid.
#[derive(Clone, Debug)]
pub struct DriverFields {
    pub ds: f64,
    pub s_start: f64,
    pub lambda: f64,
    pub dpsi: ScalarGrid,
    pub dphi: VectorGrid,
    pub dsigma: VectorGrid,
    /// Cotangent components of `grad dpsi`.
    pub grad_dpsi: VectorGrid,
    pub grad_dphi: EndoGrid,
    pub grad_dsigma: EndoGrid,
    /// `grad_partial_dphi[p][i]` is the endomorphism `grad(d_i dphi)` at
    /// point `p`.
    pub grad_partial_dphi: Tensor3Grid,
}

impl DriverFields {
    pub fn zeros(spec: GridSpec) -> Self {
        DriverFields {
            ds: 0.0,
            s_start: 0.0,
            lambda: 1.0,
            dpsi: ScalarGrid::zeros(spec),
            dphi: VectorGrid::zeros(spec),
            dsigma: VectorGrid::zeros(spec),
            grad_dpsi: VectorGrid::zeros(spec),
            grad_dphi: EndoGrid::zeros(spec),
            grad_dsigma: EndoGrid::zeros(spec),
            grad_partial_dphi: Tensor3Grid::zeros(spec),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.dpsi.spec()
    }
}

/// Per-mode constants for the factorized mode sums. Twelve scalar sums per
/// grid point reconstruct all 23 field components; the shared sums make the
/// pointwise driver relations hold to rounding by construction.
struct ModeTables {
    // cosine-weighted sums
    p_a: Vec<f64>,   // A
    p_b11: Vec<f64>, // A k1 k1 / kappa^2
    p_b12: Vec<f64>, // A k1 k2 / kappa^2
    p_b22: Vec<f64>, // A k2 k2 / kappa^2
    // sine-weighted sums
    p_c1: Vec<f64>,   // A k1 / kappa^2
    p_c2: Vec<f64>,   // A k2 / kappa^2
    p_d1: Vec<f64>,   // A k1
    p_d2: Vec<f64>,   // A k2
    p_e111: Vec<f64>, // A k1 k1 k1 / kappa^2
    p_e112: Vec<f64>, // A k1 k1 k2 / kappa^2
    p_e122: Vec<f64>, // A k1 k2 k2 / kappa^2
    p_e222: Vec<f64>, // A k2 k2 k2 / kappa^2
    // phase stepping along a grid row (x-direction) and per-row offset
    k1h: Vec<f64>,
    k2h: Vec<f64>,
    phase: Vec<f64>,
    // working buffers: current cos/sin per mode, rotation constants
    cos_u: Vec<f64>,
    sin_u: Vec<f64>,
    rot_c: Vec<f64>,
    rot_s: Vec<f64>,
}

impl ModeTables {
    fn build(inc: &DriverIncrement, h: f64) -> Self {
        let m = inc.modes.len();
        let mut t = ModeTables {
            p_a: Vec::with_capacity(m),
            p_b11: Vec::with_capacity(m),
            p_b12: Vec::with_capacity(m),
            p_b22: Vec::with_capacity(m),
            p_c1: Vec::with_capacity(m),
            p_c2: Vec::with_capacity(m),
            p_d1: Vec::with_capacity(m),
            p_d2: Vec::with_capacity(m),
            p_e111: Vec::with_capacity(m),
            p_e112: Vec::with_capacity(m),
            p_e122: Vec::with_capacity(m),
            p_e222: Vec::with_capacity(m),
            k1h: Vec::with_capacity(m),
            k2h: Vec::with_capacity(m),
            phase: Vec::with_capacity(m),
            cos_u: vec![0.0; m],
            sin_u: vec![0.0; m],
            rot_c: Vec::with_capacity(m),
            rot_s: Vec::with_capacity(m),
        };
        for mode in &inc.modes {
            let a = mode.amplitude;
            let (k1, k2) = (mode.k.x, mode.k.y);
            let kap2 = k1 * k1 + k2 * k2;
            t.p_a.push(a);
            t.p_b11.push(a * k1 * k1 / kap2);
            t.p_b12.push(a * k1 * k2 / kap2);
            t.p_b22.push(a * k2 * k2 / kap2);
            t.p_c1.push(a * k1 / kap2);
            t.p_c2.push(a * k2 / kap2);
            t.p_d1.push(a * k1);
            t.p_d2.push(a * k2);
            t.p_e111.push(a * k1 * k1 * k1 / kap2);
            t.p_e112.push(a * k1 * k1 * k2 / kap2);
            t.p_e122.push(a * k1 * k2 * k2 / kap2);
            t.p_e222.push(a * k2 * k2 * k2 / kap2);
            t.k1h.push(k1 * h);
            t.k2h.push(k2 * h);
            t.phase.push(mode.phase);
            let (sd, cd) = (k1 * h).sin_cos();
            t.rot_c.push(cd);
            t.rot_s.push(sd);
        }
        t
    }

    /// Re-seed the per-mode phases at the start of row `ix = 0`, `iy` fixed.
    fn seed_row(&mut self, iy: usize) {
        for m in 0..self.phase.len() {
            let u0 = self.k2h[m] * iy as f64 + self.phase[m];
            let (s, c) = u0.sin_cos();
            self.cos_u[m] = c;
            self.sin_u[m] = s;
        }
    }

    /// Advance every mode phase by one grid spacing in x.
    fn step_x(&mut self) {
        for m in 0..self.cos_u.len() {
            let (c, s) = (self.cos_u[m], self.sin_u[m]);
            self.cos_u[m] = c * self.rot_c[m] - s * self.rot_s[m];
            self.sin_u[m] = s * self.rot_c[m] + c * self.rot_s[m];
        }
    }
}

/// Evaluates an increment and all derived driver fields on the grid,
/// overwriting `out`. Sums over modes are analytic per mode; derivatives are
/// never taken numerically.
pub fn evaluate_drivers_into(inc: &DriverIncrement, spec: GridSpec, out: &mut DriverFields) {
    debug_assert_eq!(out.spec(), spec);
    out.ds = inc.ds;
    out.s_start = inc.s_start;
    out.lambda = inc.lambda_at_start;
    let n = spec.n();
    let h = spec.spacing();
    let lambda_inv = 1.0 / inc.lambda_at_start;

    if inc.modes.is_empty() {
        for v in out.dpsi.values_mut() {
            *v = 0.0;
        }
        for v in out.dphi.values_mut() {
            *v = Vec2::ZERO;
        }
        for v in out.dsigma.values_mut() {
            *v = Vec2::ZERO;
        }
        for v in out.grad_dpsi.values_mut() {
            *v = Vec2::ZERO;
        }
        for v in out.grad_dphi.values_mut() {
            *v = Mat2::ZERO;
        }
        for v in out.grad_dsigma.values_mut() {
            *v = Mat2::ZERO;
        }
        for v in out.grad_partial_dphi.values_mut() {
            *v = [Mat2::ZERO; 2];
        }
        return;
    }

    let mut t = ModeTables::build(inc, h);
    let nm = inc.modes.len();

    // Grid layout is index = ix * n + iy, i.e. x varies with the outer
    // index. We walk y in the outer loop so the phase recurrence can step
    // along x; writes are strided but the grids stay within cache at desk
    // scales.
    for iy in 0..n {
        t.seed_row(iy);
        for ix in 0..n {
            let mut s_a = 0.0;
            let (mut s_b11, mut s_b12, mut s_b22) = (0.0, 0.0, 0.0);
            let (mut s_c1, mut s_c2) = (0.0, 0.0);
            let (mut s_d1, mut s_d2) = (0.0, 0.0);
            let (mut s_e111, mut s_e112, mut s_e122, mut s_e222) = (0.0, 0.0, 0.0, 0.0);
            for m in 0..nm {
                let c = t.cos_u[m];
                let s = t.sin_u[m];
                s_a += t.p_a[m] * c;
                s_b11 += t.p_b11[m] * c;
                s_b12 += t.p_b12[m] * c;
                s_b22 += t.p_b22[m] * c;
                s_c1 += t.p_c1[m] * s;
                s_c2 += t.p_c2[m] * s;
                s_d1 += t.p_d1[m] * s;
                s_d2 += t.p_d2[m] * s;
                s_e111 += t.p_e111[m] * s;
                s_e112 += t.p_e112[m] * s;
                s_e122 += t.p_e122[m] * s;
                s_e222 += t.p_e222[m] * s;
            }
            t.step_x();

            let idx = ix * n + iy;
            out.dpsi.set(idx, s_a);
            out.grad_dpsi.set(idx, Vec2::new(-s_d1, -s_d2));
            out.dsigma.set(idx, Vec2::new(s_c1, s_c2));
            // dphi = (1/lambda) J (dsigma-sums)
            out.dphi
                .set(idx, Vec2::new(-lambda_inv * s_c2, lambda_inv * s_c1));
            out.grad_dsigma
                .set(idx, Mat2::new(s_b11, s_b12, s_b12, s_b22));
            out.grad_dphi.set(
                idx,
                Mat2::new(
                    -lambda_inv * s_b12,
                    lambda_inv * s_b11,
                    -lambda_inv * s_b22,
                    lambda_inv * s_b12,
                ),
            );
            // grad(d_i dphi)[j][m]: m = 1 picks +E_{ij2}/lambda, m = 2 picks
            // -E_{ij1}/lambda (from (Jk)_1 = -k2, (Jk)_2 = k1).
            let t0 = Mat2::new(
                lambda_inv * s_e112,
                -lambda_inv * s_e111,
                lambda_inv * s_e122,
                -lambda_inv * s_e112,
            );
            let t1 = Mat2::new(
                lambda_inv * s_e122,
                -lambda_inv * s_e112,
                lambda_inv * s_e222,
                -lambda_inv * s_e122,
            );
            out.grad_partial_dphi.set(idx, [t0, t1]);
        }
    }
}

/// Allocating variant of [`evaluate_drivers_into`].
pub fn evaluate_drivers(inc: &DriverIncrement, spec: GridSpec) -> DriverFields {
    let mut out = DriverFields::zeros(spec);
    evaluate_drivers_into(inc, spec, &mut out);
    out
}

/// Maximum over grid points of the three pointwise driver relations:
/// `|tr grad dphi|`, `|lambda tr(grad dphi J) - dpsi|`, and the Frobenius
/// norm of `lambda grad dphi + dpsi J - J grad dsigma`.
///
/// For fields built by [`evaluate_drivers`] the result is rounding noise;
/// anything above `1e-10 * max|dpsi|` indicates a corrupted field.
pub fn verify_pointwise_relations(df: &DriverFields, lambda: f64) -> f64 {
    let mut worst = 0.0f64;
    let n_pts = df.spec().num_points();
    for idx in 0..n_pts {
        let g_phi = df.grad_dphi.get(idx);
        let g_sig = df.grad_dsigma.get(idx);
        let dpsi = df.dpsi.get(idx);
        let r1 = g_phi.trace().abs();
        let r2 = (lambda * g_phi.j_right().trace() - dpsi).abs();
        let resid = g_phi
            .scale(lambda)
            .add(Mat2::J.scale(dpsi))
            .sub(g_sig.j_left());
        let r3 = resid.frob2().sqrt();
        worst = worst.max(r1).max(r2).max(r3);
    }
    worst
}
