//! GP-MRO, its worst-case/average-case trade-off variant, and the comparison
//! strategies (StableOpt, GP-UCB, RandMaxMin and the known-objective CLSS).

pub mod baselines;
pub mod gp_mro;
pub mod mwu;
pub mod trace;

use serde::{Deserialize, Serialize};

use crate::domain::{argmax, DecisionGrid, Objective, ParamSet, PriorQ};
use crate::error::{Error, Result};
use crate::gp::{olcb, oucb, BetaSchedule, GpModel, PosteriorCache};

pub use baselines::{run_clss, run_gp_ucb, run_randmaxmin, run_stableopt};
pub use gp_mro::{run_gp_mro, run_gp_mro_with};
pub use mwu::{default_eta, MwuState};
pub use trace::{AlgorithmKind, IterationRecord, RunTrace};

/// GP input vector for every `(x, θ_i)` pair, stored at `x * m + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointInputs {
    num_points: usize,
    num_params: usize,
    data: Vec<Vec<f64>>,
}

impl JointInputs {
    /// `z = (x, θ)` by concatenating decision and parameter coordinates.
    pub fn product(grid: &DecisionGrid, params: &ParamSet) -> Self {
        let mut data = Vec::with_capacity(grid.len() * params.len());
        for p in grid.points() {
            for theta in params.values() {
                let mut z = p.coords.clone();
                z.extend_from_slice(theta);
                data.push(z);
            }
        }
        Self {
            num_points: grid.len(),
            num_params: params.len(),
            data,
        }
    }

    /// Arbitrary embedding, e.g. features computed from a simulation of `(x, θ)`.
    pub fn from_fn(num_points: usize, num_params: usize, mut f: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(num_points * num_params);
        for x in 0..num_points {
            for i in 0..num_params {
                data.push(f(x, i));
            }
        }
        let d = data.first().map(Vec::len).unwrap_or(0);
        if let Some(z) = data.iter().find(|z| z.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: z.len(),
            });
        }
        Ok(Self {
            num_points,
            num_params,
            data,
        })
    }

    pub fn get(&self, x: usize, i: usize) -> &[f64] {
        &self.data[x * self.num_params + i]
    }

    pub fn as_slice(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }
}

/// Everything a GP-based run needs: the discretized domain, the oracle, the
/// GP input embedding and the model hyperparameters.
pub struct RobustProblem {
    pub grid: DecisionGrid,
    pub params: ParamSet,
    pub oracle: Box<dyn Objective>,
    pub inputs: JointInputs,
    pub model: GpModel,
}

impl RobustProblem {
    pub fn new(
        grid: DecisionGrid,
        params: ParamSet,
        oracle: Box<dyn Objective>,
        inputs: JointInputs,
        model: GpModel,
    ) -> Result<Self> {
        let (n, m) = (grid.len(), params.len());
        if oracle.num_points() != n || oracle.num_params() != m {
            return Err(Error::domain(format!(
                "oracle is {}x{}, domain is {n}x{m}",
                oracle.num_points(),
                oracle.num_params()
            )));
        }
        if inputs.num_points() != n || inputs.num_params() != m {
            return Err(Error::domain("joint inputs do not match the domain"));
        }
        if let Some(z) = inputs.as_slice().first() {
            if z.len() < model.kernel.input_dim() {
                return Err(Error::Dimension {
                    expected: model.kernel.input_dim(),
                    got: z.len(),
                });
            }
        }
        Ok(Self {
            grid,
            params,
            oracle,
            inputs,
            model,
        })
    }

    pub fn num_points(&self) -> usize {
        self.grid.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }
}

fn default_chi() -> f64 {
    1.0
}

/// Run parameters shared by all algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub horizon: usize,
    pub beta: BetaSchedule,
    /// Overrides the default MWU rate `√(8 ln m / T)`.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_chi")]
    pub chi: f64,
    #[serde(default)]
    pub prior_q: Option<PriorQ>,
    #[serde(default)]
    pub seed: u64,
    /// Skip the oracle query when `σ_{t-1}(x_t, θ_t)` is at most this value.
    #[serde(default)]
    pub variance_gate: Option<f64>,
    /// Target accuracy, carried along for reporting only.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl AlgorithmConfig {
    pub fn new(horizon: usize, beta: BetaSchedule, seed: u64) -> Self {
        Self {
            horizon,
            beta,
            eta: None,
            chi: 1.0,
            prior_q: None,
            seed,
            variance_gate: None,
            epsilon: None,
        }
    }

    pub fn validate(&self, num_params: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::domain("horizon must be at least 1"));
        }
        self.beta.validate()?;
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::domain(format!("eta must be positive, got {eta}")));
            }
        }
        if !(0.0..=1.0).contains(&self.chi) {
            return Err(Error::domain(format!("chi = {} outside [0, 1]", self.chi)));
        }
        match &self.prior_q {
            Some(q) if q.len() != num_params => {
                return Err(Error::Dimension {
                    expected: num_params,
                    got: q.len(),
                })
            }
            None if self.chi < 1.0 => return Err(Error::domain("chi < 1 requires a prior Q")),
            _ => {}
        }
        if let Some(g) = self.variance_gate {
            if !(g >= 0.0) {
                return Err(Error::domain(format!("variance gate must be >= 0, got {g}")));
            }
        }
        Ok(())
    }

    pub fn eta_for(&self, num_params: usize) -> f64 {
        self.eta.unwrap_or_else(|| default_eta(num_params, self.horizon))
    }
}

/// Truncated confidence bounds and variances for every `(x, θ_i)` pair under
/// one posterior and one `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsTable {
    rows: usize,
    cols: usize,
    oucb: Vec<f64>,
    olcb: Vec<f64>,
    var: Vec<f64>,
}

impl BoundsTable {
    pub fn from_cache(cache: &PosteriorCache<'_>, beta: f64, rows: usize, cols: usize) -> Result<Self> {
        if cache.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: cache.len(),
            });
        }
        let mut t = Self {
            rows,
            cols,
            oucb: Vec::with_capacity(rows * cols),
            olcb: Vec::with_capacity(rows * cols),
            var: Vec::with_capacity(rows * cols),
        };
        for c in 0..cache.len() {
            let (mu, var) = cache.moments(c)?;
            t.oucb.push(oucb(mu, var, beta));
            t.olcb.push(olcb(mu, var, beta));
            t.var.push(var);
        }
        Ok(t)
    }

    /// Builds the table directly from precomputed moments, mainly for tests.
    pub fn from_moments(rows: usize, cols: usize, mu: &[f64], var: &[f64], beta: f64) -> Result<Self> {
        if mu.len() != rows * cols || var.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: mu.len().min(var.len()),
            });
        }
        Ok(Self {
            rows,
            cols,
            oucb: mu.iter().zip(var).map(|(&m, &v)| oucb(m, v, beta)).collect(),
            olcb: mu.iter().zip(var).map(|(&m, &v)| olcb(m, v, beta)).collect(),
            var: var.to_vec(),
        })
    }

    /// Table with given upper bounds and unit variances; lower bounds are zero.
    pub fn from_upper(rows: usize, cols: usize, upper: Vec<f64>) -> Result<Self> {
        if upper.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: upper.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            olcb: vec![0.0; upper.len()],
            var: vec![1.0; upper.len()],
            oucb: upper,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn oucb(&self, x: usize, i: usize) -> f64 {
        self.oucb[x * self.cols + i]
    }

    pub fn olcb(&self, x: usize, i: usize) -> f64 {
        self.olcb[x * self.cols + i]
    }

    pub fn var(&self, x: usize, i: usize) -> f64 {
        self.var[x * self.cols + i]
    }

    pub fn oucb_row(&self, x: usize) -> &[f64] {
        &self.oucb[x * self.cols..(x + 1) * self.cols]
    }

    pub fn olcb_row(&self, x: usize) -> &[f64] {
        &self.olcb[x * self.cols..(x + 1) * self.cols]
    }

    pub fn var_row(&self, x: usize) -> &[f64] {
        &self.var[x * self.cols..(x + 1) * self.cols]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn row_min(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `argmax_x Σ_i w[i] · oucb(x, θ_i)`, lowest index on ties.
pub fn best_response(bounds: &BoundsTable, weights: &[f64]) -> usize {
    let scores: Vec<f64> = (0..bounds.rows()).map(|x| dot(weights, bounds.oucb_row(x))).collect();
    argmax(&scores)
}

/// `argmax_x (1-χ) E_{θ~Q}[oucb(x, θ)] + χ Σ_i w[i] oucb(x, θ_i)`. With `χ = 1`
/// this is exactly [`best_response`].
pub fn best_response_tradeoff(bounds: &BoundsTable, weights: &[f64], q: &PriorQ, chi: f64) -> usize {
    if chi == 1.0 {
        return best_response(bounds, weights);
    }
    let scores: Vec<f64> = (0..bounds.rows())
        .map(|x| {
            let row = bounds.oucb_row(x);
            (1.0 - chi) * dot(q.weights(), row) + chi * dot(weights, row)
        })
        .collect();
    argmax(&scores)
}

/// `argmax_θ σ_{t-1}(x, θ)`, lowest index on ties.
pub fn select_theta(bounds: &BoundsTable, x: usize) -> usize {
    argmax(bounds.var_row(x))
}

/// `argmax_x min_θ oucb(x, θ)`: StableOpt's optimistic max-min selection.
pub fn maxmin_optimistic(bounds: &BoundsTable) -> usize {
    let scores: Vec<f64> = (0..bounds.rows()).map(|x| row_min(bounds.oucb_row(x))).collect();
    argmax(&scores)
}

/// `argmax_x min_θ olcb(x, θ)`: pessimistic max-min report.
pub fn maxmin_pessimistic(bounds: &BoundsTable) -> usize {
    let scores: Vec<f64> = (0..bounds.rows()).map(|x| row_min(bounds.olcb_row(x))).collect();
    argmax(&scores)
}

/// Joint `argmax_{(x, θ)} oucb(x, θ)` in row-major order.
pub fn joint_ucb_argmax(bounds: &BoundsTable) -> (usize, usize) {
    let k = argmax(&bounds.oucb);
    (k / bounds.cols, k % bounds.cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bounds(rows: usize, cols: usize, seed: u64) -> BoundsTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let upper = (0..rows * cols).map(|_| rng.random::<f64>() * 0.7).collect();
        BoundsTable::from_upper(rows, cols, upper).unwrap()
    }

    fn random_weights(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn best_response_matches_double_loop() {
        let b = random_bounds(100, 30, 3);
        let w = random_weights(30, 4);
        let mut best = (0, f64::NEG_INFINITY);
        for x in 0..100 {
            let mut s = 0.0;
            for i in 0..30 {
                s += w[i] * b.oucb(x, i);
            }
            if s > best.1 {
                best = (x, s);
            }
        }
        assert_eq!(best_response(&b, &w), best.0);
    }

    #[test]
    fn best_response_single_param_and_dirac() {
        let b = random_bounds(20, 1, 5);
        let single = (0..20).map(|x| b.oucb(x, 0)).collect::<Vec<_>>();
        assert_eq!(best_response(&b, &[1.0]), argmax(&single));
        let b = random_bounds(20, 4, 6);
        let col: Vec<f64> = (0..20).map(|x| b.oucb(x, 2)).collect();
        assert_eq!(best_response(&b, &[0.0, 0.0, 1.0, 0.0]), argmax(&col));
    }

    #[test]
    fn best_response_invariant_to_shift() {
        let b = random_bounds(50, 8, 7);
        let w = random_weights(8, 8);
        let shifted = BoundsTable::from_upper(50, 8, b.oucb.iter().map(|v| v + 0.25).collect()).unwrap();
        assert_eq!(best_response(&b, &w), best_response(&shifted, &w));
    }

    #[test]
    fn tradeoff_reductions() {
        let q = PriorQ::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        for seed in 0..20 {
            let b = random_bounds(30, 4, seed);
            let w = random_weights(4, seed + 100);
            assert_eq!(best_response_tradeoff(&b, &w, &q, 1.0), best_response(&b, &w));
            let avg: Vec<f64> = (0..30).map(|x| dot(q.weights(), b.oucb_row(x))).collect();
            assert_eq!(best_response_tradeoff(&b, &w, &q, 0.0), argmax(&avg));
        }
    }

    #[test]
    fn tradeoff_hand_expanded() {
        // rows: brake, left, right; cols: HV straight, HV left, HV right
        let upper = vec![
            0.6, 0.6, 0.6, //
            1.0, 0.3, 1.0, //
            1.0, 1.0, 0.2,
        ];
        let b = BoundsTable::from_upper(3, 3, upper.clone()).unwrap();
        let q = PriorQ::dirac(3, 0).unwrap();
        let w = [0.2, 0.5, 0.3];
        let chi = 0.8;
        let hand: Vec<f64> = (0..3)
            .map(|x| {
                let r = &upper[3 * x..3 * x + 3];
                (1.0 - chi) * r[0] + chi * (w[0] * r[0] + w[1] * r[1] + w[2] * r[2])
            })
            .collect();
        assert_eq!(best_response_tradeoff(&b, &w, &q, chi), argmax(&hand));
        assert_eq!(argmax(&hand), 2);
    }

    #[test]
    fn select_theta_ties_and_single() {
        let b = BoundsTable::from_moments(2, 3, &[0.0; 6], &[0.5; 6], 1.0).unwrap();
        assert_eq!(select_theta(&b, 1), 0);
        let b = BoundsTable::from_moments(1, 1, &[0.0], &[0.2], 1.0).unwrap();
        assert_eq!(select_theta(&b, 0), 0);
    }

    #[test]
    fn config_validation() {
        let c = AlgorithmConfig::new(10, BetaSchedule::Constant { beta: 2.0 }, 0);
        assert!(c.validate(3).is_ok());
        let mut bad = c.clone();
        bad.chi = 0.5;
        assert!(bad.validate(3).is_err());
        bad.prior_q = Some(PriorQ::uniform(3).unwrap());
        assert!(bad.validate(3).is_ok());
        assert!(bad.validate(4).is_err());
        let mut bad = c.clone();
        bad.horizon = 0;
        assert!(bad.validate(3).is_err());
        assert!((c.eta_for(4) - (8.0 * 4f64.ln() / 10.0).sqrt()).abs() < 1e-15);
    }
}
