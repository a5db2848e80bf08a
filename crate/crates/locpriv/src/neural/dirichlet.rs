//! Dirichlet sampling and log-density with concentration gradients.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::neural::special::{digamma, log_gamma};

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    xi: Vec<f64>,
}

impl DirichletParams {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if xi.is_empty() {
            return Err(Error::Domain("empty concentration vector".into()));
        }
        if xi.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::Domain(
                "concentrations must be strictly positive and finite".into(),
            ));
        }
        Ok(Self { xi })
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.xi
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.xi.iter().sum()
    }
}

/// One draw from Dirichlet(xi) via normalized gamma variates. rand_distr's
/// gamma sampler handles shapes below 1 with the shape+1 boost internally.
pub fn dirichlet_sample<R: Rng + ?Sized>(d: &DirichletParams, rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> =
        d.xi.iter()
            .map(|&shape| {
                let g = Gamma::new(shape, 1.0).expect("positive shape");
                g.sample(rng)
            })
            .collect();
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        // all-underflow corner: fall back to the concentration mean
        let total = d.total();
        return d.xi.iter().map(|&x| x / total).collect();
    }
    for v in &mut draws {
        *v /= sum;
    }
    draws
}

/// Log density of a simplex point and its gradient in the concentrations:
/// d/dxi_i = psi(sum xi) - psi(xi_i) + ln x_i.
pub fn dirichlet_log_density(x: &[f64], d: &DirichletParams) -> Result<(f64, Vec<f64>)> {
    if x.len() != d.len() {
        return Err(Error::ShapeMismatch {
            expected: d.len(),
            got: x.len(),
        });
    }
    if x.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::Domain(
            "simplex point must be strictly positive; clamp before calling".into(),
        ));
    }
    let total = d.total();
    let mut logp = log_gamma(total)?;
    let psi_total = digamma(total)?;
    let mut grad = Vec::with_capacity(d.len());
    for (&xi, &xv) in d.xi.iter().zip(x) {
        logp -= log_gamma(xi)?;
        logp += (xi - 1.0) * xv.ln();
        grad.push(psi_total - digamma(xi)? + xv.ln());
    }
    Ok((logp, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_live_on_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DirichletParams::new(vec![0.3, 2.0, 5.0, 0.01]).unwrap();
        for _ in 0..1000 {
            let s = dirichlet_sample(&d, &mut rng);
            let sum: f64 = s.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(s.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn symmetric_ones_have_uniform_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = 4;
        let d = DirichletParams::new(vec![1.0; k]).unwrap();
        let reps = 100_000;
        let mut mean = vec![0.0; k];
        for _ in 0..reps {
            let s = dirichlet_sample(&d, &mut rng);
            for (m, v) in mean.iter_mut().zip(&s) {
                *m += v;
            }
        }
        // Var of each coordinate = (1/k)(1-1/k)/(k+1)
        let p = 1.0 / k as f64;
        let sigma = (p * (1.0 - p) / (k as f64 + 1.0) / reps as f64).sqrt();
        for m in &mut mean {
            *m /= reps as f64;
            assert!((*m - p).abs() < 4.0 * sigma, "mean {m}");
        }
    }

    #[test]
    fn skewed_concentrations_have_dirichlet_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xi = vec![1.0; 16];
        xi[0] = 100.0;
        let d = DirichletParams::new(xi).unwrap();
        let total = 115.0;
        let reps = 100_000;
        let mut first = 0.0;
        for _ in 0..reps {
            first += dirichlet_sample(&d, &mut rng)[0];
        }
        first /= reps as f64;
        let mean = 100.0 / total;
        let var = mean * (1.0 - mean) / (total + 1.0);
        let sigma = (var / reps as f64).sqrt();
        assert!((first - mean).abs() < 4.0 * sigma, "mean {first} vs {mean}");
    }

    #[test]
    fn log_density_known_values() {
        // uniform density on the 1-simplex
        let d = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        let (lp, _) = dirichlet_log_density(&[0.5, 0.5], &d).unwrap();
        assert!(lp.abs() < 1e-12);
        // Dir(2,1) at (0.5, 0.5): Gamma(3)/(Gamma(2)Gamma(1)) * 0.5 = 1
        let d = DirichletParams::new(vec![2.0, 1.0]).unwrap();
        let (lp, _) = dirichlet_log_density(&[0.5, 0.5], &d).unwrap();
        assert!(lp.abs() < 1e-12, "log density {lp}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let k = rng.gen_range(2..6);
            let xi: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..20.0)).collect();
            let d = DirichletParams::new(xi.clone()).unwrap();
            let mut x = dirichlet_sample(&d, &mut rng);
            // keep strictly inside the simplex
            let sum_after: f64 = x.iter().map(|v| v.max(1e-6)).sum();
            for v in &mut x {
                *v = v.max(1e-6) / sum_after;
            }
            let (_, grad) = dirichlet_log_density(&x, &d).unwrap();
            let h = 1e-5;
            for i in 0..k {
                let mut xp = xi.clone();
                xp[i] += h;
                let mut xm = xi.clone();
                xm[i] -= h;
                let lp = dirichlet_log_density(&x, &DirichletParams::new(xp).unwrap())
                    .unwrap()
                    .0;
                let lm = dirichlet_log_density(&x, &DirichletParams::new(xm).unwrap())
                    .unwrap()
                    .0;
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(grad[i].abs()).max(1e-6);
                assert!(
                    (fd - grad[i]).abs() / denom < 1e-4,
                    "i={i}: fd {fd} vs grad {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn boundary_points_are_rejected() {
        let d = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        assert!(dirichlet_log_density(&[1.0, 0.0], &d).is_err());
    }

    #[test]
    fn sample_density_consistency_by_importance() {
        // E[x_0] under Dir(2,1,1) is 0.5; estimate it by reweighting samples
        // from Dir(1,1,1) with the density ratio.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let prop = DirichletParams::new(vec![1.0, 1.0, 1.0]).unwrap();
        let target = DirichletParams::new(vec![2.0, 1.0, 1.0]).unwrap();
        let reps = 200_000;
        let mut num = 0.0;
        let mut den = 0.0;
        for _ in 0..reps {
            let mut s = dirichlet_sample(&prop, &mut rng);
            let z: f64 = s.iter().map(|v| v.max(1e-12)).sum();
            for v in &mut s {
                *v = v.max(1e-12) / z;
            }
            let lt = dirichlet_log_density(&s, &target).unwrap().0;
            let lq = dirichlet_log_density(&s, &prop).unwrap().0;
            let w = (lt - lq).exp();
            num += w * s[0];
            den += w;
        }
        let est = num / den;
        assert!((est - 0.5).abs() < 0.01, "estimate {est}");
    }

    #[test]
    fn tiny_shapes_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = DirichletParams::new(vec![1e-3, 1e-3, 5.0]).unwrap();
        for _ in 0..10_000 {
            let s = dirichlet_sample(&d, &mut rng);
            assert!(s.iter().all(|v| v.is_finite()));
            let sum: f64 = s.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
