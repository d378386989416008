use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::norm;

/// Running tracking cost `L(x, v, mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tracking {
    /// `|v - int w dmu(y, w)|^2`: distance to the mean velocity.
    #[default]
    VelocityVariance,
    /// `L = 0`; only the control penalty is charged.
    None,
}

/// Control penalty `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Penalty {
    /// `psi(u) = gamma |u|`.
    L1 { gamma: f64 },
    /// `psi(u) = gamma |u|^q`, `q >= 1`.
    LqPower { gamma: f64, q: f64 },
}

impl Penalty {
    #[inline]
    pub fn eval(&self, u: &[f64]) -> f64 {
        match *self {
            Penalty::L1 { gamma } => gamma * norm(u),
            Penalty::LqPower { gamma, q } => gamma * norm(u).powf(q),
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            Penalty::L1 { gamma } | Penalty::LqPower { gamma, .. } => gamma,
        }
    }

    /// Growth exponent `q` in `Lip(psi, B(0,R)) <= C R^{q-1}`.
    pub fn growth_exponent(&self) -> f64 {
        match *self {
            Penalty::L1 { .. } => 1.0,
            Penalty::LqPower { q, .. } => q,
        }
    }

    /// The constant `C` in `Lip(psi, B(0,R)) <= C R^{q-1}`.
    pub fn growth_constant(&self) -> f64 {
        match *self {
            Penalty::L1 { gamma } => gamma.abs(),
            Penalty::LqPower { gamma, q } => gamma.abs() * q,
        }
    }

    /// Whether the proximal split treats this penalty as the nonsmooth part.
    pub fn is_nonsmooth(&self) -> bool {
        matches!(self, Penalty::L1 { .. }) || matches!(self, Penalty::LqPower { q, .. } if *q <= 1.0)
    }
}

/// The pair `(L, psi)` defining the running cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    #[serde(default)]
    pub tracking: Tracking,
    pub penalty: Penalty,
}

impl CostSpec {
    pub fn l1(gamma: f64) -> Self {
        Self {
            tracking: Tracking::VelocityVariance,
            penalty: Penalty::L1 { gamma },
        }
    }

    /// Sampled checks of the penalty's structural assumptions, in fixed order.
    pub fn violations<R: Rng>(&self, dim: usize, rng: &mut R) -> Vec<String> {
        let mut out = Vec::new();
        let gamma = self.penalty.gamma();
        let q = self.penalty.growth_exponent();
        if !gamma.is_finite() || !q.is_finite() || q < 1.0 {
            out.push(format!("ψ parameters (gamma = {gamma}, q = {q}) out of range"));
            return out;
        }
        let random_vec = |rng: &mut R, scale: f64| -> Vec<f64> {
            (0..dim).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
        };
        let pts: Vec<Vec<f64>> = (0..64).map(|_| random_vec(rng, 4.0)).collect();
        if pts.iter().any(|u| self.penalty.eval(u) < 0.0) {
            out.push("ψ nonnegativity".to_string());
            // convexity and growth are only meaningful for a valid sign
            return out;
        }
        let convex = pts.windows(2).all(|w| {
            let mid: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect();
            self.penalty.eval(&mid) <= 0.5 * (self.penalty.eval(&w[0]) + self.penalty.eval(&w[1])) + 1e-12
        });
        if !convex {
            out.push("ψ convexity".to_string());
        }
        let c = self.penalty.growth_constant();
        for radius in [1.0, 2.0, 4.0] {
            let mut slope: f64 = 0.0;
            for _ in 0..64 {
                let u = clip(random_vec(rng, radius), radius);
                let w = clip(random_vec(rng, radius), radius);
                let gap = crate::linalg::dist(&u, &w);
                if gap > 1e-9 {
                    slope = slope.max((self.penalty.eval(&u) - self.penalty.eval(&w)).abs() / gap);
                }
            }
            if slope > c * radius.powf(q - 1.0) * (1.0 + 1e-9) + 1e-12 {
                out.push(format!("ψ growth at R = {radius}"));
            }
        }
        out
    }
}

fn clip(mut u: Vec<f64>, radius: f64) -> Vec<f64> {
    let n = norm(&u);
    if n > radius {
        u.iter_mut().for_each(|c| *c *= radius / n);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn well_formed_penalties_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in [
            CostSpec::l1(0.3),
            CostSpec {
                tracking: Tracking::None,
                penalty: Penalty::LqPower { gamma: 2.0, q: 2.0 },
            },
            CostSpec {
                tracking: Tracking::VelocityVariance,
                penalty: Penalty::LqPower { gamma: 0.1, q: 3.0 },
            },
        ] {
            assert!(spec.violations(2, &mut rng).is_empty(), "{spec:?}");
        }
    }

    #[test]
    fn negative_weight_is_a_single_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(CostSpec::l1(-1.0).violations(2, &mut rng), vec!["ψ nonnegativity"]);
    }

    #[test]
    fn concave_power_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = CostSpec {
            tracking: Tracking::None,
            penalty: Penalty::LqPower { gamma: 1.0, q: 0.5 },
        };
        assert!(!spec.violations(1, &mut rng).is_empty());
    }

    #[test]
    fn penalty_values() {
        assert_eq!(Penalty::L1 { gamma: 2.0 }.eval(&[3.0, 4.0]), 10.0);
        assert_eq!(Penalty::LqPower { gamma: 0.5, q: 2.0 }.eval(&[3.0, 4.0]), 12.5);
    }
}
