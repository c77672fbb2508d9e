//! Classic fixed-step fourth-order Runge-Kutta for small first-order systems.

use crate::error::{Error, Result};

/// One RK4 step of `y' = f(t, y)` from `t` with step `h`, written into `out`.
pub fn rk4_step<F>(f: &F, t: f64, y: &[f64], h: f64, out: &mut [f64])
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    f(t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates through the increasing sample times `times`, taking equal
/// sub-steps no longer than `max_step` between consecutive samples.
///
/// Returns the state at every sample (the first is `y0`).
pub fn integrate_samples<F>(f: &F, y0: &[f64], times: &[f64], max_step: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if !(max_step.is_finite() && max_step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {max_step}")));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut y = y0.to_vec();
    let mut next = vec![0.0; y.len()];
    out.push(y.clone());
    for w in times.windows(2) {
        let span = w[1] - w[0];
        if span <= 0.0 {
            return Err(Error::Domain("sample times must increase".into()));
        }
        let steps = (span / max_step).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for s in 0..steps {
            rk4_step(f, w[0] + s as f64 * h, &y, h, &mut next);
            std::mem::swap(&mut y, &mut next);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Truncated {
                last_valid_t: w[0],
                reason: "state became non-finite".into(),
            });
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Runs [`integrate_samples`] with `step` and `step / 2` and returns the finer
/// solution together with the largest difference between the two.
pub fn integrate_with_estimate<F>(
    f: &F,
    y0: &[f64],
    times: &[f64],
    step: f64,
) -> Result<(Vec<Vec<f64>>, f64)>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let coarse = integrate_samples(f, y0, times, step)?;
    let fine = integrate_samples(f, y0, times, step / 2.0)?;
    let estimate = coarse
        .iter()
        .zip(&fine)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    Ok((fine, estimate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * std::f64::consts::TAU / 100.0).collect();
        let ys = integrate_samples(&f, &[1.0, 0.0], &times, 1e-3).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-12);
            assert!((y[1] + t.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0];
        let err = |h: f64| {
            let ys = integrate_samples(&f, &[1.0], &[0.0, 1.0], h).unwrap();
            (ys[1][0] - 1f64.exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn estimate_shrinks_with_step() {
        let f = |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = t.cos();
        let times = [0.0, 2.0, 4.0];
        let (_, e1) = integrate_with_estimate(&f, &[0.0], &times, 0.5).unwrap();
        let (sol, e2) = integrate_with_estimate(&f, &[0.0], &times, 0.05).unwrap();
        assert!(e2 < e1 / 1000.0);
        assert!((sol[2][0] - 4f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = |_t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = 0.0;
        assert!(integrate_samples(&f, &[0.0], &[0.0, 1.0], 0.0).is_err());
        assert!(integrate_samples(&f, &[0.0], &[1.0, 0.0], 0.1).is_err());
    }
}
