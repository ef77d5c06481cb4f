//! Diffusion-process mathematics: variance schedules, forward noising,
//! velocity targets, clean-latent recovery, trailing timestep selection, and
//! the deterministic DDIM update.
//!
//! Conventions:
//! - timesteps are 1-based, `t in 1..=T`, matching the usual formulation;
//!   array storage is 0-based, so `alpha_bar(t)` reads index `t - 1`;
//! - the velocity parameterization is
//!   `v*_t = sqrt(abar_t) * eps - sqrt(1 - abar_t) * x0`, giving the exact
//!   inversion `x0 = sqrt(abar_t) * x_t - sqrt(1 - abar_t) * v*_t`;
//! - DDIM runs with eta = 0 only (fully deterministic).
//!
//! All operations are pure functions over immutable inputs.

use ndarray::Array3;
use thiserror::Error;

/// Latent-space tensor `[channels, h, w]`.
pub type Latent = Array3<f64>;

/// Terminal-signal bound for single-step use: `abar_T` must be below this so
/// a zero input latent carries essentially no signal.
pub const SINGLE_STEP_ALPHA_BAR_MAX: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("invalid beta range: need 0 < start <= end < 1, got [{start}, {end}]")]
    InvalidBetaRange { start: f64, end: f64 },
    #[error("T must be >= 1")]
    InvalidLength,
    #[error("timestep {t} out of range 1..={t_max}")]
    TimestepOutOfRange { t: usize, t_max: usize },
    #[error("n_steps {n} exceeds T {t_max}")]
    TooManySteps { n: usize, t_max: usize },
    #[error("n_steps must be >= 1")]
    ZeroSteps,
    #[error("ddim: t_prev {t_prev} must be < t {t}")]
    NonDecreasingStep { t: usize, t_prev: usize },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),
    #[error(
        "schedule unsuitable for single-step use: abar_T = {abar_t:.3e} >= {SINGLE_STEP_ALPHA_BAR_MAX:.0e}"
    )]
    UnsuitableForSingleStep { abar_t: f64 },
}

/// How beta interpolates between the endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `beta_t` linear in `t`.
    Linear,
    /// `sqrt(beta_t)` linear in `t` (Stable-Diffusion convention).
    ScaledLinear,
}

/// Precomputed variance schedule tables for `t = 1..=T`.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Build a schedule from endpoint betas.
pub fn make_schedule(
    t_total: usize,
    beta_start: f64,
    beta_end: f64,
    kind: ScheduleKind,
) -> Result<NoiseSchedule, ScheduleError> {
    if t_total == 0 {
        return Err(ScheduleError::InvalidLength);
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(ScheduleError::InvalidBetaRange {
            start: beta_start,
            end: beta_end,
        });
    }
    let betas: Vec<f64> = (0..t_total)
        .map(|i| {
            let u = if t_total == 1 {
                0.0
            } else {
                i as f64 / (t_total - 1) as f64
            };
            match kind {
                ScheduleKind::Linear => beta_start + u * (beta_end - beta_start),
                ScheduleKind::ScaledLinear => {
                    let s = beta_start.sqrt() + u * (beta_end.sqrt() - beta_start.sqrt());
                    s * s
                }
            }
        })
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t_total);
    let mut prod = 1.0;
    for a in &alphas {
        prod *= a;
        alpha_bars.push(prod);
    }
    Ok(NoiseSchedule {
        betas,
        alphas,
        alpha_bars,
    })
}

impl NoiseSchedule {
    /// Default schedule: linear DDPM betas `1e-4 -> 0.02`, `T = 1000`.
    /// Satisfies the single-step gate (`abar_T` is about `4e-5`).
    pub fn default_linear() -> Self {
        make_schedule(1000, 1e-4, 0.02, ScheduleKind::Linear).expect("valid constants")
    }

    /// Stable-Diffusion style preset: scaled-linear, `0.00085 -> 0.012`,
    /// `T = 1000`. Note its `abar_T` is about `4.7e-3`, above the
    /// single-step gate; use [`NoiseSchedule::check_single_step`] before
    /// relying on it for one-step prediction.
    pub fn scaled_linear_sd() -> Self {
        make_schedule(1000, 0.00085, 0.012, ScheduleKind::ScaledLinear).expect("valid constants")
    }

    /// Short profile for fast tests: same endpoints as the default, `T = 100`.
    pub fn toy() -> Self {
        make_schedule(100, 1e-4, 0.02, ScheduleKind::Linear).expect("valid constants")
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check_t(&self, t: usize) -> Result<(), ScheduleError> {
        if t == 0 || t > self.len() {
            return Err(ScheduleError::TimestepOutOfRange {
                t,
                t_max: self.len(),
            });
        }
        Ok(())
    }

    /// `abar_t` for a 1-based timestep.
    pub fn alpha_bar(&self, t: usize) -> Result<f64, ScheduleError> {
        self.check_t(t)?;
        Ok(self.alpha_bars[t - 1])
    }

    /// Errors when the terminal signal is too large for single-step use.
    pub fn check_single_step(&self) -> Result<(), ScheduleError> {
        let abar_t = *self.alpha_bars.last().expect("nonempty");
        if abar_t >= SINGLE_STEP_ALPHA_BAR_MAX {
            return Err(ScheduleError::UnsuitableForSingleStep { abar_t });
        }
        Ok(())
    }
}

fn check_shapes(a: &Latent, b: &Latent) -> Result<(), ScheduleError> {
    if a.dim() != b.dim() {
        let (a0, a1, a2) = a.dim();
        let (b0, b1, b2) = b.dim();
        return Err(ScheduleError::ShapeMismatch([a0, a1, a2], [b0, b1, b2]));
    }
    Ok(())
}

/// Forward process: `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn add_noise(
    x0: &Latent,
    eps: &Latent,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Latent, ScheduleError> {
    check_shapes(x0, eps)?;
    let ab = sched.alpha_bar(t)?;
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0 * sa + eps * sb)
}

/// Training target: `v*_t = sqrt(abar_t) eps - sqrt(1 - abar_t) x0`.
pub fn target_velocity(
    x0: &Latent,
    eps: &Latent,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Latent, ScheduleError> {
    check_shapes(x0, eps)?;
    let ab = sched.alpha_bar(t)?;
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(eps * sa - x0 * sb)
}

/// Clean-latent recovery: `x0_hat = sqrt(abar_t) x_t - sqrt(1 - abar_t) v_hat`.
pub fn predict_x0_from_v(
    x_t: &Latent,
    v_hat: &Latent,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Latent, ScheduleError> {
    check_shapes(x_t, v_hat)?;
    let ab = sched.alpha_bar(t)?;
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_t * sa - v_hat * sb)
}

/// Noise recovery: `eps_hat = sqrt(1 - abar_t) x_t + sqrt(abar_t) v_hat`.
pub fn predict_eps_from_v(
    x_t: &Latent,
    v_hat: &Latent,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Latent, ScheduleError> {
    check_shapes(x_t, v_hat)?;
    let ab = sched.alpha_bar(t)?;
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_t * sb + v_hat * sa)
}

/// Trailing timestep selection: `t_i = T - round(i * T / n)`, clipped to 1,
/// deduplicated, descending. The first element is always `T`, which is what
/// makes single-step prediction well-posed.
pub fn trailing_timesteps(t_total: usize, n_steps: usize) -> Result<Vec<usize>, ScheduleError> {
    if n_steps == 0 {
        return Err(ScheduleError::ZeroSteps);
    }
    if n_steps > t_total {
        return Err(ScheduleError::TooManySteps {
            n: n_steps,
            t_max: t_total,
        });
    }
    let mut out: Vec<usize> = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        let offset = (i as f64 * t_total as f64 / n_steps as f64).round() as usize;
        let t = t_total.saturating_sub(offset).max(1);
        if out.last() != Some(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

/// One deterministic DDIM update from `t` to `t_prev`.
///
/// Computes `x0_hat` and `eps_hat` from the predicted velocity and re-noises
/// to `t_prev`; with `t_prev = None` (the final step) returns `x0_hat`.
pub fn ddim_step(
    x_t: &Latent,
    v_hat: &Latent,
    t: usize,
    t_prev: Option<usize>,
    sched: &NoiseSchedule,
) -> Result<Latent, ScheduleError> {
    let x0_hat = predict_x0_from_v(x_t, v_hat, t, sched)?;
    let Some(tp) = t_prev else {
        return Ok(x0_hat);
    };
    if tp >= t {
        return Err(ScheduleError::NonDecreasingStep { t, t_prev: tp });
    }
    let eps_hat = predict_eps_from_v(x_t, v_hat, t, sched)?;
    let ab_prev = sched.alpha_bar(tp)?;
    Ok(x0_hat * ab_prev.sqrt() + eps_hat * (1.0 - ab_prev).sqrt())
}
