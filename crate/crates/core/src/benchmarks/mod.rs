//! The two synthetic experiments: a random GP sample on `[-1, 1]²`, and the
//! perturbed polynomial `f(x, θ) = g_poly(x - θ)` with `θ` from the unit ball.

pub mod evaluate;
pub mod gpoly;
pub mod synthetic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algorithms::{JointInputs, RobustProblem};
use crate::domain::{DecisionGrid, Normalization, ParamSet, PayoffTable, TableOracle};
use crate::error::{Error, Result};
use crate::gp::{fit_by_likelihood, GpModel};
use crate::kernels::KernelSpec;

pub use evaluate::{evaluate_run, full_curve};
pub use gpoly::{g_poly, g_poly_gradient};
pub use synthetic::{covariance_factor, draw_with_factor, joint_inputs, sample_gp_function, sample_unit_ball, SampledFunction};

/// Stream for the pilot observations used to fit hyperparameters, separate
/// from the algorithms' noise streams.
const PILOT_STREAM: u64 = 7;

/// Which synthetic objective to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SyntheticSpec {
    /// `f ~ GP(0, k)` on a uniform grid of `[-1, 1]` for `x` and for `θ`.
    RandomGpSample {
        kernel: KernelSpec,
        grid_x: usize,
        grid_theta: usize,
        seed: u64,
    },
    /// `g_poly(x - θ)` on a `grid_x`-point square grid over the standard box,
    /// with `num_theta` perturbations drawn uniformly from the unit disc.
    PolyRobust { grid_x: usize, num_theta: usize, ball_seed: u64 },
}

impl SyntheticSpec {
    /// The first experiment: `k = k_lin · k_se` on the joint input with
    /// lengthscale `l`.
    pub fn synth_1d(grid_x: usize, grid_theta: usize, lengthscale: f64, seed: u64) -> Result<Self> {
        Ok(SyntheticSpec::RandomGpSample {
            kernel: lin_se_kernel(lengthscale)?,
            grid_x,
            grid_theta,
            seed,
        })
    }

    fn check(&self) -> Result<()> {
        let (a, b) = match *self {
            SyntheticSpec::RandomGpSample { grid_x, grid_theta, .. } => (grid_x, grid_theta),
            SyntheticSpec::PolyRobust { grid_x, num_theta, .. } => (grid_x, num_theta),
        };
        if a == 0 || b == 0 {
            return Err(Error::domain("grid sizes must be at least 1"));
        }
        Ok(())
    }
}

/// `½ k_lin((x, θ)) · k_se((x, θ))` for scalar `x` and `θ`, written per
/// block: `(k_lin(x) + k_lin(θ)) / 2 · k_se(x) · k_se(θ)`. The halving keeps
/// `k(z, z) <= 1` on `[-1, 1]²` without projecting the inputs.
pub fn lin_se_kernel(lengthscale: f64) -> Result<KernelSpec> {
    Ok(KernelSpec::product(
        KernelSpec::sum(KernelSpec::linear(0..1)?, KernelSpec::linear(1..2)?),
        KernelSpec::product(
            KernelSpec::squared_exponential(lengthscale, 0..1)?,
            KernelSpec::squared_exponential(lengthscale, 1..2)?,
        ),
    ))
}

/// A built objective: the normalized noise-free table plus everything needed
/// to run the algorithms on it.
pub struct Benchmark {
    pub grid: DecisionGrid,
    pub params: ParamSet,
    pub table: PayoffTable,
    pub normalization: Normalization,
    /// Observation noise on the normalized scale.
    pub noise_sigma: f64,
}

impl Benchmark {
    /// Builds the objective; `noise_sigma` is given in raw (unnormalized)
    /// units and rescaled with the table.
    pub fn build(spec: &SyntheticSpec, noise_sigma: f64) -> Result<Self> {
        spec.check()?;
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::domain(format!("noise sigma {noise_sigma} must be >= 0")));
        }
        let (grid, params, table, normalization) = match spec {
            SyntheticSpec::RandomGpSample {
                kernel,
                grid_x,
                grid_theta,
                seed,
            } => {
                let grid = DecisionGrid::uniform_1d(*grid_x, -1.0, 1.0)?;
                let params = ParamSet::uniform_1d(*grid_theta, -1.0, 1.0)?;
                let xs: Vec<Vec<f64>> = grid.points().iter().map(|p| p.coords.clone()).collect();
                let sample = sample_gp_function(kernel, &xs, params.values(), *seed)?;
                (grid, params, sample.table, sample.normalization)
            }
            SyntheticSpec::PolyRobust {
                grid_x,
                num_theta,
                ball_seed,
            } => {
                let side = (*grid_x as f64).sqrt().round() as usize;
                if side * side != *grid_x {
                    return Err(Error::domain(format!("poly grid size {grid_x} is not a perfect square")));
                }
                let grid = DecisionGrid::uniform_2d(side, side, gpoly::X1_RANGE, gpoly::X2_RANGE)?;
                let params = ParamSet::new(sample_unit_ball(*num_theta, 2, *ball_seed)?)?;
                let (table, norm) = build_perturbed_objective(&grid, &params)?;
                (grid, params, table, norm)
            }
        };
        Ok(Self {
            grid,
            params,
            table,
            noise_sigma: noise_sigma / normalization.scale,
            normalization,
        })
    }

    pub fn oracle(&self) -> Result<TableOracle> {
        Ok(TableOracle::new(self.table.clone(), self.noise_sigma)?.with_normalization(self.normalization))
    }

    pub fn joint_inputs(&self) -> JointInputs {
        JointInputs::product(&self.grid, &self.params)
    }

    pub fn problem(&self, model: GpModel) -> Result<RobustProblem> {
        RobustProblem::new(
            self.grid.clone(),
            self.params.clone(),
            Box::new(self.oracle()?),
            self.joint_inputs(),
            model,
        )
    }

    /// `n` noisy observations at uniformly random `(x, θ)` pairs, for fitting
    /// hyperparameters before a run.
    pub fn pilot_data(&self, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PILOT_STREAM);
        let inputs = self.joint_inputs();
        let (rows, cols) = (self.table.num_points(), self.table.num_params());
        let mut zs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.random_range(0..rows);
            let i = rng.random_range(0..cols);
            let xi: f64 = rng.sample(StandardNormal);
            zs.push(inputs.get(x, i).to_vec());
            ys.push(self.table.get(x, i) + self.noise_sigma * xi);
        }
        (zs, ys)
    }

    /// The generating prior mapped onto the normalized scale: `GP(0, k)` on
    /// raw values with noise variance `lambda`, for sampled objectives.
    pub fn raw_prior_model(&self, kernel: KernelSpec, lambda: f64) -> Result<GpModel> {
        let n = self.normalization;
        GpModel::new(kernel, lambda)?.with_output(-n.offset / n.scale, 1.0 / n.scale)
    }

    /// Maximum-likelihood Matérn model over a grid of `ν`, lengthscales,
    /// output scales and `λ`, fitted on pilot data. The prior mean is the
    /// pilot average.
    pub fn fit_matern(&self, grid: &HyperGrid, pilot: usize, seed: u64) -> Result<GpModel> {
        let dim = self.grid.dim() + self.params.dim();
        let (zs, ys) = self.pilot_data(pilot, seed);
        let mean = ys.iter().sum::<f64>() / ys.len().max(1) as f64;
        let mut candidates = Vec::new();
        for &nu in &grid.nus {
            for &l in &grid.lengthscales {
                for &s in &grid.output_scales {
                    for &lambda in &grid.lambdas {
                        candidates.push(GpModel::new(KernelSpec::matern(nu, l, 0..dim)?, lambda)?.with_output(mean, s)?);
                    }
                }
            }
        }
        Ok(fit_by_likelihood(&candidates, &zs, &ys)?.0)
    }
}

/// Candidate hyperparameters for [`Benchmark::fit_matern`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub nus: Vec<f64>,
    pub lengthscales: Vec<f64>,
    pub output_scales: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            nus: vec![1.5, 2.5],
            lengthscales: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            output_scales: vec![0.025, 0.05, 0.1, 0.2, 0.4, 0.8],
            lambdas: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0],
        }
    }
}

/// `f(x, θ) = g_poly(x - θ)` over the grid, normalized over the whole table.
pub fn build_perturbed_objective(grid: &DecisionGrid, params: &ParamSet) -> Result<(PayoffTable, Normalization)> {
    if grid.dim() != 2 || params.dim() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: if grid.dim() != 2 { grid.dim() } else { params.dim() },
        });
    }
    if let Some(t) = params.values().iter().find(|t| t[0] * t[0] + t[1] * t[1] > 1.0 + 1e-12) {
        return Err(Error::domain(format!("perturbation {t:?} lies outside the unit ball")));
    }
    let raw = PayoffTable::from_fn(grid.len(), params.len(), |x, i| {
        let p = &grid.point(x).coords;
        let t = params.value(i);
        g_poly([p[0] - t[0], p[1] - t[1]])
    })?;
    Ok(raw.normalized())
}
