//! Discrete diffusion algebra: schedules, forward noising, deterministic DDIM
//! stepping and the pixel/latent codec.

mod codec;
mod latent;
mod schedule;

pub use codec::LatentCodec;
pub use latent::Latent;
pub use schedule::{NoiseSchedule, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_NUM_STEPS};

use crate::error::{Error, Result};
use crate::scalar::Real;

fn check_step<S: Real>(i: usize, schedule: &NoiseSchedule<S>) -> Result<()> {
    if i == 0 || i > schedule.num_steps() {
        return Err(Error::StepOutOfRange { index: i, max: schedule.num_steps() });
    }
    Ok(())
}

/// `z_i = sqrt(ᾱ_i) z0 + sqrt(1 − ᾱ_i) ε`
pub fn forward_noise<S: Real>(
    z0: &Latent<S>,
    i: usize,
    eps: &Latent<S>,
    schedule: &NoiseSchedule<S>,
) -> Result<Latent<S>> {
    check_step(i, schedule)?;
    if z0.step != 0 {
        return Err(Error::InvalidArgument(format!(
            "forward_noise expects a clean latent, got step {}",
            z0.step
        )));
    }
    z0.ensure_same_shape(eps)?;
    let ab = schedule.alpha_bar(i);
    let (sa, sn) = (ab.sqrt(), (S::one() - ab).sqrt());
    let mut out = z0.zip_map(eps, |x, e| sa * x + sn * e);
    out.step = i;
    Ok(out)
}

/// Clean-latent estimate `z_{0←i} = (z_i − sqrt(1 − ᾱ_i) ε̂) / sqrt(ᾱ_i)`.
pub fn predict_clean<S: Real>(
    z_i: &Latent<S>,
    eps_hat: &Latent<S>,
    i: usize,
    schedule: &NoiseSchedule<S>,
) -> Result<Latent<S>> {
    check_step(i, schedule)?;
    z_i.ensure_same_shape(eps_hat)?;
    let ab = schedule.alpha_bar(i);
    let (sa, sn) = (ab.sqrt(), (S::one() - ab).sqrt());
    let mut out = z_i.zip_map(eps_hat, |z, e| (z - sn * e) / sa);
    out.step = 0;
    Ok(out)
}

/// Deterministic update written in terms of the clean estimate:
/// `z_{i−1} = a_i z_i + b_i z_{0←i}`.
pub fn ddim_update<S: Real>(
    z_i: &Latent<S>,
    z0_hat: &Latent<S>,
    i: usize,
    schedule: &NoiseSchedule<S>,
) -> Result<Latent<S>> {
    check_step(i, schedule)?;
    z_i.ensure_same_shape(z0_hat)?;
    let (a, b) = (schedule.a(i), schedule.b(i));
    let mut out = z_i.zip_map(z0_hat, |z, x| a * z + b * x);
    out.step = i - 1;
    Ok(out)
}

/// One DDIM step. Returns `(z_{i−1}, z_{0←i})`.
pub fn ddim_step<S: Real>(
    z_i: &Latent<S>,
    eps_hat: &Latent<S>,
    i: usize,
    schedule: &NoiseSchedule<S>,
) -> Result<(Latent<S>, Latent<S>)> {
    check_step(i, schedule)?;
    if z_i.step != i {
        return Err(Error::InvalidArgument(format!(
            "latent is tagged with step {}, asked to step from {i}",
            z_i.step
        )));
    }
    let z0_hat = predict_clean(z_i, eps_hat, i, schedule)?;
    let z_prev = ddim_update(z_i, &z0_hat, i, schedule)?;
    Ok((z_prev, z0_hat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::linear(3, 0.1, 0.3).unwrap()
    }

    fn scalar(v: f64, step: usize) -> Latent<f64> {
        let mut l = Latent::from_vec(1, 1, 1, vec![v]).unwrap();
        l.step = step;
        l
    }

    #[test]
    fn forward_noise_scalar() {
        // ᾱ_2 = 0.72
        let z = forward_noise(&scalar(1.0, 0), 2, &scalar(1.0, 0), &sched()).unwrap();
        assert!((z.data[0] - (0.72f64.sqrt() + 0.28f64.sqrt())).abs() < 1e-15);
        assert!((z.data[0] - 1.3777).abs() < 1e-4);
        assert_eq!(z.step, 2);
    }

    #[test]
    fn forward_noise_zero_eps_scales() {
        let s = sched();
        let z = forward_noise(&scalar(2.0, 0), 3, &scalar(0.0, 0), &s).unwrap();
        assert_eq!(z.data[0], s.alpha_bar(3).sqrt() * 2.0);
    }

    #[test]
    fn forward_noise_identity_limit() {
        let s = NoiseSchedule::<f64>::linear(1, 1e-12, 1e-12).unwrap();
        let z = forward_noise(&scalar(0.3, 0), 1, &scalar(5.0, 0), &s).unwrap();
        assert!((z.data[0] - 0.3).abs() < 1e-5);
    }

    #[test]
    fn step_errors() {
        let s = sched();
        assert!(matches!(
            forward_noise(&scalar(1.0, 0), 0, &scalar(1.0, 0), &s),
            Err(Error::StepOutOfRange { .. })
        ));
        assert!(forward_noise(&scalar(1.0, 0), 4, &scalar(1.0, 0), &s).is_err());
        assert!(ddim_step(&scalar(1.0, 0), &scalar(1.0, 0), 0, &s).is_err());
        let two = Latent::<f64>::zeros(1, 1, 2);
        assert!(forward_noise(&scalar(1.0, 0), 1, &two, &s).is_err());
    }

    #[test]
    fn terminal_step_lands_on_clean_estimate() {
        let s = sched();
        let (prev, x0) = ddim_step(&scalar(0.7, 1), &scalar(-0.2, 0), 1, &s).unwrap();
        assert_eq!(prev.data, x0.data);
        assert_eq!(prev.step, 0);
    }

    #[test]
    fn true_noise_recovers_clean() {
        let s = sched();
        let z0 = Latent::from_vec(1, 1, 3, vec![0.1, -0.4, 0.9]).unwrap();
        let eps = Latent::from_vec(1, 1, 3, vec![1.2, 0.3, -2.0]).unwrap();
        for i in 1..=3 {
            let zi = forward_noise(&z0, i, &eps, &s).unwrap();
            let (_, x0) = ddim_step(&zi, &eps, i, &s).unwrap();
            for (a, b) in x0.data.iter().zip(&z0.data) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
