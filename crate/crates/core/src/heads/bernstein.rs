use super::QuantileLevels;

pub const BERNSTEIN_COEFFS: usize = 13;
const DEGREE: usize = BERNSTEIN_COEFFS - 1;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Degree-12 Bernstein basis evaluated at `tau`.
pub fn bernstein_basis(tau: f64) -> [f64; BERNSTEIN_COEFFS] {
    std::array::from_fn(|i| {
        binomial(DEGREE, i) * tau.powi(i as i32) * (1.0 - tau).powi((DEGREE - i) as i32)
    })
}

pub fn bernstein_quantile(coeffs: &[f64], tau: f64) -> f64 {
    bernstein_basis(tau)
        .iter()
        .zip(coeffs)
        .map(|(b, c)| b * c)
        .sum()
}

/// Quantile (pinball) loss of predicting `q` for level `tau` when `y` occurs.
pub fn pinball_loss(q: f64, y: f64, tau: f64) -> f64 {
    if y >= q {
        tau * (y - q)
    } else {
        (1.0 - tau) * (q - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinLead {
    pub coeffs: [f64; BERNSTEIN_COEFFS],
}

impl BernsteinLead {
    /// Coefficients are the raw outputs offset by the ensemble mean.
    pub fn anchored(raw: &[f64], ens_mean: f64) -> Self {
        BernsteinLead {
            coeffs: std::array::from_fn(|i| raw[i] + ens_mean),
        }
    }

    pub fn quantile(&self, tau: f64) -> f64 {
        bernstein_quantile(&self.coeffs, tau)
    }

    /// Probability level at which the quantile curve reaches `y`, found by
    /// bisection on `[0, 1]`. Assumes a non-decreasing quantile curve; with
    /// crossings the result is still in `[0, 1]` but not unique.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= self.quantile(0.0) {
            return 0.0;
        }
        if y >= self.quantile(1.0) {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.quantile(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

pub(super) fn lead_loss(
    raw: &[f64],
    ens_mean: f64,
    y: f64,
    levels: &QuantileLevels,
    basis: &[[f64; BERNSTEIN_COEFFS]],
    grad: Option<&mut [f64]>,
) -> f64 {
    let n = levels.len() as f64;
    let mut loss = 0.0;
    let mut dq = vec![0.0; levels.len()];
    for (k, (&tau, b)) in levels.as_slice().iter().zip(basis).enumerate() {
        let q = ens_mean + b.iter().zip(raw).map(|(bi, r)| bi * r).sum::<f64>();
        loss += pinball_loss(q, y, tau);
        dq[k] = if y >= q { -tau } else { 1.0 - tau };
    }
    if let Some(g) = grad {
        for (d, b) in dq.iter().zip(basis) {
            for i in 0..BERNSTEIN_COEFFS {
                g[i] += d * b[i] / n;
            }
        }
    }
    loss / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_constants_and_endpoints() {
        let c = [2.5; BERNSTEIN_COEFFS];
        for t in [0.0, 0.13, 0.5, 0.99, 1.0] {
            assert!((bernstein_quantile(&c, t) - 2.5).abs() < 1e-12);
        }
        let a: Vec<f64> = (0..13).map(|i| (i as f64).sin()).collect();
        assert_eq!(bernstein_quantile(&a, 0.0), a[0]);
        assert_eq!(bernstein_quantile(&a, 1.0), a[12]);
    }

    #[test]
    fn reproduces_linear_functions() {
        let c: Vec<f64> = (0..13).map(|i| i as f64 / 12.0).collect();
        for t in [0.0, 0.2, 0.5, 0.77, 1.0] {
            assert!((bernstein_quantile(&c, t) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball_loss(1.0, 2.0, 0.5), 0.5);
        assert!((pinball_loss(1.0, 2.0, 0.9) - 0.9).abs() < 1e-15);
        assert!((pinball_loss(1.0, 0.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cdf_inverts_quantile() {
        let b = BernsteinLead {
            coeffs: std::array::from_fn(|i| (i as f64 - 6.0).powi(3) / 50.0 + i as f64 * 0.1),
        };
        for t in [0.05, 0.3, 0.5, 0.81, 0.97] {
            assert!((b.cdf(b.quantile(t)) - t).abs() < 1e-9);
        }
        assert_eq!(b.cdf(-1e9), 0.0);
        assert_eq!(b.cdf(1e9), 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let levels = QuantileLevels::default();
        let basis: Vec<_> = levels.as_slice().iter().map(|&t| bernstein_basis(t)).collect();
        let raw: Vec<f64> = (0..13).map(|i| -1.5 + 0.25 * i as f64).collect();
        let mut g = vec![0.0; 13];
        lead_loss(&raw, 0.2, 0.37, &levels, &basis, Some(&mut g));
        for i in 0..13 {
            let h = 1e-7;
            let mut a = raw.clone();
            let mut b = raw.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (lead_loss(&a, 0.2, 0.37, &levels, &basis, None)
                - lead_loss(&b, 0.2, 0.37, &levels, &basis, None))
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "i={i} fd={fd} g={}", g[i]);
        }
    }
}
