//! Constant-coefficient Itô market and its numeraire portfolio.
//!
//! Prices follow `dS^i / S^i = mu^i dt + sum_k sigma^{ik} dW^k`. In the
//! absolute parametrization of a general continuous semimartingale market the
//! drift density is `a = diag(S) mu`, the covariance density is
//! `c = diag(S) (sigma sigma^T) diag(S)` and the clock is calendar time,
//! `G(t) = t`. The numeraire portfolio holds `xi^i = pi^i / S^i` shares per
//! unit of wealth, where `pi` solves `c_rel pi = mu`; its integrated squared
//! volatility `xi^T c xi` equals `pi^T c_rel pi`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance of the pseudo-inverse solve and of the range test.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    mu: Vec<f64>,
    /// Row-major `d x m` relative volatility.
    sigma: Vec<Vec<f64>>,
    s0: Vec<f64>,
}

impl MarketSpec {
    pub fn new(mu: Vec<f64>, sigma: Vec<Vec<f64>>, s0: Vec<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidMarket("at least one asset is required".into()));
        }
        if sigma.len() != d {
            return Err(Error::InvalidMarket(format!("sigma has {} rows, expected {d}", sigma.len())));
        }
        let m = sigma[0].len();
        if m == 0 {
            return Err(Error::InvalidMarket("at least one Brownian driver is required".into()));
        }
        if let Some(row) = sigma.iter().position(|r| r.len() != m) {
            return Err(Error::InvalidMarket(format!(
                "sigma row {} has {} columns, expected {m}",
                row + 1,
                sigma[row].len()
            )));
        }
        if s0.len() != d {
            return Err(Error::InvalidMarket(format!("s0 has {} entries, expected {d}", s0.len())));
        }
        if let Some(i) = s0.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidMarket(format!("s0[{}] = {} is not strictly positive", i + 1, s0[i])));
        }
        let finite = mu.iter().chain(sigma.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidMarket("mu and sigma must be finite".into()));
        }
        Ok(Self { mu, sigma, s0 })
    }

    /// Single asset driven by a single Brownian motion.
    pub fn black_scholes(mu: f64, sigma: f64, s0: f64) -> Result<Self> {
        Self::new(vec![mu], vec![vec![sigma]], vec![s0])
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn m(&self) -> usize {
        self.sigma[0].len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[Vec<f64>] {
        &self.sigma
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d(), self.m(), |i, k| self.sigma[i][k])
    }

    /// `c_rel = sigma sigma^T`.
    pub fn relative_covariance(&self) -> DMatrix<f64> {
        let s = self.sigma_matrix();
        let c = &s * s.transpose();
        // exact symmetry, whatever the summation order did
        DMatrix::from_fn(self.d(), self.d(), |i, k| if i <= k { c[(i, k)] } else { c[(k, i)] })
    }

    /// Absolute covariance density `diag(S) c_rel diag(S)` at prices `s`.
    pub fn absolute_covariance(&self, s: &[f64]) -> DMatrix<f64> {
        let c = self.relative_covariance();
        DMatrix::from_fn(self.d(), self.d(), |i, k| s[i] * c[(i, k)] * s[k])
    }

    /// Absolute drift density `diag(S) mu` at prices `s`.
    pub fn absolute_drift(&self, s: &[f64]) -> Vec<f64> {
        self.mu.iter().zip(s).map(|(m, s)| m * s).collect()
    }

    pub fn with_mu(&self, mu: Vec<f64>) -> Result<Self> {
        Self::new(mu, self.sigma.clone(), self.s0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumeraireStrategy {
    /// Wealth fractions, minimal-norm solution of `c_rel pi = mu`.
    pub pi: Vec<f64>,
    /// Market price of risk `sigma^T pi`.
    pub lambda: Vec<f64>,
    /// `pi^T c_rel pi = |lambda|^2`, the growth integrand per unit time.
    pub growth_rate: f64,
}

impl NumeraireStrategy {
    /// Share counts per unit of wealth at prices `s`: `xi^i = pi^i / S^i`.
    pub fn shares_per_unit_wealth(&self, s: &[f64]) -> Vec<f64> {
        self.pi.iter().zip(s).map(|(p, s)| p / s).collect()
    }

    pub fn lambda_norm(&self) -> f64 {
        self.growth_rate.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViabilityReport {
    pub na1_holds: bool,
    pub asymptotically_suboptimal: bool,
    pub diagnostics: String,
}

struct PseudoSolve {
    pi: DVector<f64>,
    /// Norm of the component of `mu` in the numerical null space of `c_rel`.
    null_residual: f64,
    rank: usize,
}

fn pseudo_solve(spec: &MarketSpec) -> PseudoSolve {
    let c = spec.relative_covariance();
    let mu = DVector::from_column_slice(spec.mu());
    let eig = SymmetricEigen::new(c);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let cutoff = SOLVE_TOLERANCE * top;

    let mut pi = DVector::zeros(spec.d());
    let mut null_part = DVector::zeros(spec.d());
    let mut rank = 0;
    for (j, &ev) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(j);
        let coef = v.dot(&mu);
        if top > 0.0 && ev > cutoff {
            pi += v * (coef / ev);
            rank += 1;
        } else {
            null_part += v * coef;
        }
    }
    PseudoSolve { pi, null_residual: null_part.norm(), rank }
}

fn in_range(spec: &MarketSpec, solve: &PseudoSolve) -> bool {
    let scale = spec.mu().iter().map(|v| v * v).sum::<f64>().sqrt();
    solve.null_residual <= SOLVE_TOLERANCE * scale
}

pub fn solve_numeraire_strategy(spec: &MarketSpec) -> Result<NumeraireStrategy> {
    let solve = pseudo_solve(spec);
    if !in_range(spec, &solve) {
        return Err(Error::NoViability { residual: solve.null_residual });
    }
    let lambda = spec.sigma_matrix().transpose() * &solve.pi;
    let growth_rate = lambda.dot(&lambda);
    Ok(NumeraireStrategy {
        pi: solve.pi.iter().copied().collect(),
        lambda: lambda.iter().copied().collect(),
        growth_rate,
    })
}

pub fn check_na1(spec: &MarketSpec) -> ViabilityReport {
    let solve = pseudo_solve(spec);
    let na1_holds = in_range(spec, &solve);
    if !na1_holds {
        return ViabilityReport {
            na1_holds,
            asymptotically_suboptimal: false,
            diagnostics: format!(
                "NoViability: mu has a component of norm {:e} outside range(c_rel) (rank {} of {})",
                solve.null_residual,
                solve.rank,
                spec.d()
            ),
        };
    }
    let strategy = solve_numeraire_strategy(spec).expect("range test passed");
    let asymptotically_suboptimal = strategy.growth_rate > 0.0;
    ViabilityReport {
        na1_holds,
        asymptotically_suboptimal,
        diagnostics: format!(
            "NA1 holds (rank {} of {}); growth rate {}; {}",
            solve.rank,
            spec.d(),
            strategy.growth_rate,
            if asymptotically_suboptimal { "growth integral diverges" } else { "growth integral is identically zero" }
        ),
    }
}

/// `int_0^t xi^T c xi dG` for constant coefficients.
pub fn growth_integral(strategy: &NumeraireStrategy, t: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    Ok(strategy.growth_rate * t)
}
