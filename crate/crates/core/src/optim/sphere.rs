use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    pub initial_step: f64,
    pub shrink_factor: f64,
    pub max_iters: usize,
    /// Stop once the tangent gradient norm falls below this fraction of the
    /// full gradient norm (floored at 1).
    pub convergence_tol: f64,
    /// Step halvings tried before declaring the ascent stalled.
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink_factor: 0.5,
            max_iters: 500,
            convergence_tol: 1e-6,
            max_backtracks: 40,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::config("initial_step must be positive"));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return Err(Error::config("shrink_factor must lie in (0, 1)"));
        }
        if self.max_iters == 0 || self.max_backtracks == 0 {
            return Err(Error::config("max_iters and max_backtracks must be positive"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::config("convergence_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SphereResult {
    pub x: Tensor,
    pub value: f64,
    /// f at the starting point followed by f after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

fn unit(shape: &[usize], v: &[f64]) -> Result<Tensor> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::argument("cannot project a zero or non-finite vector onto the sphere"));
    }
    let scaled: Vec<f64> = v.iter().map(|a| a / n).collect();
    Tensor::from_f64(shape, &scaled)
}

fn evaluate<F>(f: &mut F, x: &Tensor, iter: usize) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(&Tensor) -> Result<(f64, Vec<f64>)>,
{
    let (v, g) = f(x)?;
    if g.len() != x.len() {
        return Err(Error::geometry(format!(
            "gradient has {} entries for a point with {}",
            g.len(),
            x.len()
        )));
    }
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("objective is {v} at iteration {iter}")));
    }
    if let Some(i) = g.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient entry {i} is {} at iteration {iter}",
            g[i]
        )));
    }
    Ok((v, g))
}

/// Projected gradient ascent on the unit sphere. `f` returns the value and
/// its gradient with respect to every entry of the point.
pub fn maximize_on_sphere<F>(mut f: F, x0: &Tensor, cfg: &LineSearchConfig) -> Result<SphereResult>
where
    F: FnMut(&Tensor) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let shape = x0.shape().to_vec();
    let mut x = unit(&shape, &x0.to_f64())?;
    let (mut fx, mut g) = evaluate(&mut f, &x, 0)?;
    let mut trace = vec![fx];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let xv = x.to_f64();
        let radial: f64 = g.iter().zip(&xv).map(|(a, b)| a * b).sum();
        let tangent: Vec<f64> = g.iter().zip(&xv).map(|(a, b)| a - radial * b).collect();
        let gnorm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        let tnorm = tangent.iter().map(|a| a * a).sum::<f64>().sqrt();
        if tnorm <= cfg.convergence_tol * gnorm.max(1.0) {
            break;
        }
        iterations += 1;
        let mut step = cfg.initial_step;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let moved: Vec<f64> = xv
                .iter()
                .zip(&tangent)
                .map(|(a, t)| a + step * t / tnorm)
                .collect();
            let cand = unit(&shape, &moved)?;
            let (fc, gc) = evaluate(&mut f, &cand, iterations)?;
            if fc > fx {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= cfg.shrink_factor;
        }
        match accepted {
            Some((cand, fc, gc)) => {
                x = cand;
                fx = fc;
                g = gc;
                trace.push(fx);
            }
            None => break,
        }
    }
    Ok(SphereResult {
        x,
        value: fx,
        trace,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: Vec<f64>) -> impl FnMut(&Tensor) -> Result<(f64, Vec<f64>)> {
        move |x: &Tensor| {
            let v = x.to_f64().iter().zip(&w).map(|(a, b)| a * b).sum();
            Ok((v, w.clone()))
        }
    }

    #[test]
    fn linear_maximizer_is_normalized_weight() {
        let w = vec![0.3, -1.2, 0.5, 2.0];
        let n = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        let x0 = Tensor::new(vec![4], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let r = maximize_on_sphere(linear(w.clone()), &x0, &LineSearchConfig::default()).unwrap();
        for (a, b) in r.x.to_f64().iter().zip(&w) {
            assert!((a - b / n).abs() < 1e-4);
        }
        assert!((r.x.norm() - 1.0).abs() < 1e-6);
        assert!(r.trace.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn fixed_point_is_kept() {
        let w = vec![0.6, 0.8];
        let x0 = Tensor::new(vec![2], vec![0.6, 0.8]).unwrap();
        let r = maximize_on_sphere(linear(w), &x0, &LineSearchConfig::default()).unwrap();
        assert!(r.x.max_abs_diff(&x0) < 1e-6);
        assert!((r.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_zero_start_and_nan() {
        let x0 = Tensor::zeros(&[3]);
        assert!(maximize_on_sphere(linear(vec![1.0; 3]), &x0, &LineSearchConfig::default()).is_err());
        let x1 = Tensor::full(&[3], 1.0);
        let err = maximize_on_sphere(|_: &Tensor| Ok((f64::NAN, vec![0.0; 3])), &x1, &LineSearchConfig::default());
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = LineSearchConfig { shrink_factor: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
