//! Gaussian-process posterior over the joint space, confidence bounds and
//! information-gain diagnostics.
//!
//! [`GpState`] keeps the lower Cholesky factor `L` of `K_t + λI` together with
//! `L⁻¹ y`. Appending an observation adds one row to `L` in `O(t²)`; the
//! factor is rebuilt from scratch with escalated jitter only if the new pivot
//! collapses.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, JITTER};

/// Pivot below which an appended Cholesky row triggers a full refactorization.
const MIN_PIVOT: f64 = 1e-10;
/// Negative variances beyond this are reported instead of clamped.
const NEG_VAR_TOL: f64 = -1e-6;
const MAX_JITTER: f64 = 1e-2;

fn one() -> f64 {
    1.0
}

/// Kernel plus likelihood-noise hyperparameter `λ`, with an optional affine
/// output map: the GP models `(y - prior_mean) / output_scale`, so the prior
/// on `y` is `GP(prior_mean, output_scale² k)` with noise variance
/// `output_scale² λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub kernel: KernelSpec,
    pub lambda: f64,
    #[serde(default)]
    pub prior_mean: f64,
    #[serde(default = "one")]
    pub output_scale: f64,
}

impl GpModel {
    pub fn new(kernel: KernelSpec, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            kernel,
            lambda,
            prior_mean: 0.0,
            output_scale: 1.0,
        })
    }

    pub fn with_output(mut self, prior_mean: f64, output_scale: f64) -> Result<Self> {
        if !prior_mean.is_finite() || !(output_scale > 0.0 && output_scale.is_finite()) {
            return Err(Error::domain(format!(
                "output map needs a finite mean and a positive scale, got {prior_mean}, {output_scale}"
            )));
        }
        self.prior_mean = prior_mean;
        self.output_scale = output_scale;
        Ok(self)
    }

    /// Noise variance on the scale of `y`.
    pub fn effective_lambda(&self) -> f64 {
        self.output_scale * self.output_scale * self.lambda
    }

    fn to_latent(&self, y: f64) -> f64 {
        (y - self.prior_mean) / self.output_scale
    }
}

/// Schedule for the confidence multiplier `β_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `β_t = B + σ λ^{-1/2} √(2 (γ_{t-1} + ln(1/δ)))`.
    Theoretical { rkhs_bound: f64, noise_sigma: f64, delta: f64 },
    Constant { beta: f64 },
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Theoretical {
                rkhs_bound,
                noise_sigma,
                delta,
            } => {
                if !(rkhs_bound > 0.0) || !(noise_sigma >= 0.0) || !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::domain(format!(
                        "theoretical beta needs B > 0, sigma >= 0, delta in (0,1); got {rkhs_bound}, {noise_sigma}, {delta}"
                    )));
                }
            }
            BetaSchedule::Constant { beta } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::domain(format!("constant beta must be positive, got {beta}")));
                }
            }
        }
        Ok(())
    }

    pub fn is_theoretical(&self) -> bool {
        matches!(self, BetaSchedule::Theoretical { .. })
    }
}

/// Evaluates `β_t` given the information gain `γ_{t-1}` of the data so far.
pub fn beta(schedule: &BetaSchedule, t: usize, gamma_prev: f64, lambda: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::domain("beta is indexed from t = 1"));
    }
    match *schedule {
        BetaSchedule::Theoretical {
            rkhs_bound,
            noise_sigma,
            delta,
        } => Ok(rkhs_bound + noise_sigma / lambda.sqrt() * (2.0 * (gamma_prev.max(0.0) + (1.0 / delta).ln())).sqrt()),
        BetaSchedule::Constant { beta } => Ok(beta),
    }
}

/// Upper and lower confidence bounds at one point, raw and truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceBounds {
    pub ucb: f64,
    pub lcb: f64,
    pub oucb: f64,
    pub olcb: f64,
}

impl ConfidenceBounds {
    pub fn from_moments(mu: f64, sigma: f64, beta: f64) -> Self {
        let ucb = mu + beta * sigma;
        let lcb = mu - beta * sigma;
        Self {
            ucb,
            lcb,
            oucb: ucb.min(1.0),
            olcb: lcb.max(0.0),
        }
    }
}

/// Truncated upper bound, `μ + βσ` clipped to `[0, 1]`.
#[inline]
pub fn oucb(mu: f64, var: f64, beta: f64) -> f64 {
    (mu + beta * var.sqrt()).clamp(0.0, 1.0)
}

/// Truncated lower bound, `μ - βσ` clipped to `[0, 1]`.
#[inline]
pub fn olcb(mu: f64, var: f64, beta: f64) -> f64 {
    (mu - beta * var.sqrt()).clamp(0.0, 1.0)
}

/// GP posterior conditioned on the observations so far.
#[derive(Debug, Clone)]
pub struct GpState {
    model: GpModel,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    /// Row `i` of the lower Cholesky factor, `i + 1` entries.
    chol: Vec<Vec<f64>>,
    /// `L⁻¹ r` for the latent targets `r = (y - prior_mean) / output_scale`.
    proj_y: Vec<f64>,
    jitter: f64,
    /// Incremented whenever the factor is rebuilt rather than extended.
    generation: u64,
}

impl GpState {
    pub fn new(model: GpModel) -> Self {
        Self {
            model,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: Vec::new(),
            proj_y: Vec::new(),
            jitter: JITTER,
            generation: 0,
        }
    }

    /// Conditions a fresh state on a batch of observations by full factorization.
    pub fn from_data(model: GpModel, inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        for z in &inputs {
            check_dim(&model.kernel, z)?;
        }
        let mut state = Self::new(model);
        state.inputs = inputs;
        state.targets = targets;
        state.refactor()?;
        Ok(state)
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.model.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.model.lambda
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn chol_row(&self, i: usize) -> &[f64] {
        &self.chol[i]
    }

    pub(crate) fn proj_y(&self) -> &[f64] {
        &self.proj_y
    }

    /// Dense lower Cholesky factor of `K_t + (λ + jitter) I`.
    pub fn cholesky_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| if j <= i { self.chol[i][j] } else { 0.0 })
    }

    /// `(K_t + λI)⁻¹ r` by back substitution, on the latent scale.
    pub fn alpha(&self) -> Vec<f64> {
        let n = self.len();
        let mut a = self.proj_y.clone();
        for i in (0..n).rev() {
            let mut s = a[i];
            for j in i + 1..n {
                s -= self.chol[j][i] * a[j];
            }
            a[i] = s / self.chol[i][i];
        }
        a
    }

    fn diag_term(&self) -> f64 {
        self.model.lambda + self.jitter
    }

    /// Solves `L v = k_t(z)`.
    fn project(&self, z: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let row = &self.chol[i];
            let mut s = self.model.kernel.eval_unchecked(&self.inputs[i], z);
            for (l, vj) in row[..i].iter().zip(&v) {
                s -= l * vj;
            }
            v.push(s / row[i]);
        }
        v
    }

    /// Posterior mean and variance of `f(z)` on the scale of `y`. The variance
    /// is clamped to `[0, output_scale² k(z, z)]`.
    pub fn posterior(&self, z: &[f64]) -> Result<(f64, f64)> {
        check_dim(&self.model.kernel, z)?;
        let prior = self.model.kernel.eval_unchecked(z, z);
        let v = self.project(z);
        let mu: f64 = v.iter().zip(&self.proj_y).map(|(a, b)| a * b).sum();
        let var = clamp_variance(prior - v.iter().map(|a| a * a).sum::<f64>(), prior)?;
        let s = self.model.output_scale;
        Ok((self.model.prior_mean + s * mu, s * s * var))
    }

    pub fn conf_bounds(&self, z: &[f64], beta_next: f64) -> Result<ConfidenceBounds> {
        if !(beta_next > 0.0) {
            return Err(Error::domain("beta must be positive"));
        }
        let (mu, var) = self.posterior(z)?;
        Ok(ConfidenceBounds::from_moments(mu, var.sqrt(), beta_next))
    }

    /// Returns a new state with `(z, y)` appended.
    pub fn update(&self, z: &[f64], y: f64) -> Result<GpState> {
        let mut next = self.clone();
        next.observe(z, y)?;
        Ok(next)
    }

    /// Appends `(z, y)` in place.
    pub fn observe(&mut self, z: &[f64], y: f64) -> Result<()> {
        check_dim(&self.model.kernel, z)?;
        if !y.is_finite() {
            return Err(Error::domain("observation is not finite"));
        }
        let l = self.project(z);
        let pivot_sq = self.model.kernel.eval_unchecked(z, z) + self.diag_term() - l.iter().map(|a| a * a).sum::<f64>();
        self.inputs.push(z.to_vec());
        self.targets.push(y);
        if pivot_sq < MIN_PIVOT {
            return self.refactor();
        }
        let d = pivot_sq.sqrt();
        let py = (self.model.to_latent(y) - l.iter().zip(&self.proj_y).map(|(a, b)| a * b).sum::<f64>()) / d;
        let mut row = l;
        row.push(d);
        self.chol.push(row);
        self.proj_y.push(py);
        Ok(())
    }

    /// Rebuilds the factor from scratch, escalating the jitter until the
    /// factorization succeeds.
    fn refactor(&mut self) -> Result<()> {
        loop {
            match self.try_factor() {
                Ok(()) => {
                    self.generation += 1;
                    return Ok(());
                }
                Err(e) if self.jitter >= MAX_JITTER => return Err(e),
                Err(_) => self.jitter *= 10.0,
            }
        }
    }

    fn try_factor(&mut self) -> Result<()> {
        let n = self.len();
        let diag = self.diag_term();
        let mut chol: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = vec![0.0; i + 1];
            for j in 0..=i {
                let mut s = self.model.kernel.eval_unchecked(&self.inputs[i], &self.inputs[j]);
                if i == j {
                    s += diag;
                }
                for k in 0..j {
                    s -= row[k] * if j == i { row[k] } else { chol[j][k] };
                }
                if i == j {
                    if s < MIN_PIVOT {
                        return Err(Error::numeric(format!(
                            "Cholesky pivot {s:e} at row {i} with jitter {:e}",
                            self.jitter
                        )));
                    }
                    row[j] = s.sqrt();
                } else {
                    row[j] = s / chol[j][j];
                }
            }
            chol.push(row);
        }
        let mut proj = Vec::with_capacity(n);
        for i in 0..n {
            let mut s = self.model.to_latent(self.targets[i]);
            for k in 0..i {
                s -= chol[i][k] * proj[k];
            }
            proj.push(s / chol[i][i]);
        }
        self.chol = chol;
        self.proj_y = proj;
        Ok(())
    }

    /// `½ log det(I + λ⁻¹ K_t)` for the observed inputs.
    pub fn info_gain_observed(&self) -> f64 {
        let n = self.len() as f64;
        let log_det: f64 = self.chol.iter().enumerate().map(|(i, r)| r[i].ln()).sum();
        log_det - 0.5 * n * self.model.lambda.ln()
    }

    /// Gaussian log marginal likelihood of the targets under `K_t + λI`.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::domain("log marginal likelihood needs at least one observation"));
        }
        let n = self.len() as f64;
        let quad: f64 = self.proj_y.iter().map(|v| v * v).sum();
        let log_det: f64 = self.chol.iter().enumerate().map(|(i, r)| r[i].ln()).sum();
        Ok(-0.5 * quad - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln() - n * self.model.output_scale.ln())
    }

    /// Writes the observations as CSV (`z_1..z_d,y`); the factor is rebuilt on load.
    pub fn write_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.inputs.first().map(Vec::len).unwrap_or(self.model.kernel.input_dim());
        let mut header: Vec<String> = (1..=d).map(|k| format!("z_{k}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (z, y) in self.inputs.iter().zip(&self.targets) {
            let mut rec: Vec<String> = z.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(model: GpModel, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let width = r.headers()?.len();
        if width < 2 {
            return Err(Error::Parse("checkpoint needs at least one input column and y".into()));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for record in r.records() {
            let record = record?;
            let vals = record
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != width {
                return Err(Error::Parse(format!("checkpoint row has {} fields, expected {width}", vals.len())));
            }
            targets.push(vals[width - 1]);
            inputs.push(vals[..width - 1].to_vec());
        }
        Self::from_data(model, inputs, targets)
    }
}

fn check_dim(kernel: &KernelSpec, z: &[f64]) -> Result<()> {
    if z.len() < kernel.input_dim() {
        return Err(Error::Dimension {
            expected: kernel.input_dim(),
            got: z.len(),
        });
    }
    Ok(())
}

fn clamp_variance(var: f64, prior: f64) -> Result<f64> {
    if var < NEG_VAR_TOL || var.is_nan() {
        return Err(Error::numeric(format!("posterior variance {var:e} is negative")));
    }
    Ok(var.clamp(0.0, prior.max(0.0)))
}

/// Posterior moments over a fixed candidate set, kept in sync with a growing
/// [`GpState`] at `O(candidates)` cost per appended observation.
///
/// For each candidate it stores `v = L⁻¹ k_t(z)`; appending row `j` to `L`
/// only adds the component `v_j`, so the mean `vᵀ L⁻¹y` and the explained
/// variance `‖v‖²` are accumulated incrementally.
#[derive(Debug, Clone)]
pub struct PosteriorCache<'a> {
    points: &'a [Vec<f64>],
    prior: Vec<f64>,
    proj: Vec<Vec<f64>>,
    mean: Vec<f64>,
    explained: Vec<f64>,
    synced: usize,
    generation: u64,
    prior_mean: f64,
    output_scale: f64,
}

impl<'a> PosteriorCache<'a> {
    pub fn new(kernel: &KernelSpec, points: &'a [Vec<f64>]) -> Result<Self> {
        for z in points {
            check_dim(kernel, z)?;
        }
        let prior = points.par_iter().map(|z| kernel.eval_unchecked(z, z)).collect();
        Ok(Self {
            points,
            prior,
            proj: vec![Vec::new(); points.len()],
            mean: vec![0.0; points.len()],
            explained: vec![0.0; points.len()],
            synced: 0,
            generation: 0,
            prior_mean: 0.0,
            output_scale: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &'a [Vec<f64>] {
        self.points
    }

    /// Brings the cache up to date with `gp`, which must only have grown
    /// since the last sync (or been refactored, which forces a rebuild).
    pub fn sync(&mut self, gp: &GpState) {
        self.prior_mean = gp.model().prior_mean;
        self.output_scale = gp.model().output_scale;
        if gp.generation() != self.generation || gp.len() < self.synced {
            self.proj.iter_mut().for_each(Vec::clear);
            self.mean.iter_mut().for_each(|m| *m = 0.0);
            self.explained.iter_mut().for_each(|e| *e = 0.0);
            self.synced = 0;
            self.generation = gp.generation();
        }
        if gp.len() == self.synced {
            return;
        }
        let from = self.synced;
        let kernel = gp.kernel();
        let proj_y = gp.proj_y();
        self.proj
            .par_iter_mut()
            .zip(self.mean.par_iter_mut())
            .zip(self.explained.par_iter_mut())
            .zip(self.points.par_iter())
            .for_each(|(((v, mean), explained), z)| {
                for j in from..gp.len() {
                    let row = gp.chol_row(j);
                    let mut s = kernel.eval_unchecked(&gp.inputs()[j], z);
                    for (l, vk) in row[..j].iter().zip(v.iter()) {
                        s -= l * vk;
                    }
                    let vj = s / row[j];
                    v.push(vj);
                    *mean += vj * proj_y[j];
                    *explained += vj * vj;
                }
            });
        self.synced = gp.len();
    }

    pub fn mean(&self, c: usize) -> f64 {
        self.prior_mean + self.output_scale * self.mean[c]
    }

    /// Posterior variance, clamped to `[0, output_scale² k(z, z)]`.
    pub fn variance(&self, c: usize) -> Result<f64> {
        let var = clamp_variance(self.prior[c] - self.explained[c], self.prior[c])?;
        Ok(self.output_scale * self.output_scale * var)
    }

    pub fn moments(&self, c: usize) -> Result<(f64, f64)> {
        Ok((self.mean(c), self.variance(c)?))
    }

    pub fn sigma(&self, c: usize) -> Result<f64> {
        Ok(self.variance(c)?.sqrt())
    }
}

/// Picks the candidate model with the highest log marginal likelihood on the
/// given data (grid-search maximum likelihood). Ties keep the earlier model.
pub fn fit_by_likelihood(candidates: &[GpModel], inputs: &[Vec<f64>], targets: &[f64]) -> Result<(GpModel, f64)> {
    if candidates.is_empty() {
        return Err(Error::domain("no candidate models"));
    }
    let scores = candidates
        .par_iter()
        .map(|m| GpState::from_data(m.clone(), inputs.to_vec(), targets.to_vec())?.log_marginal_likelihood())
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((candidates[best].clone(), scores[best]))
}

/// Greedy approximation of the maximum information gain: `t` rounds of picking
/// the candidate with the largest posterior variance (lowest index on ties).
pub fn info_gain_greedy(model: &GpModel, candidates: &[Vec<f64>], t: usize) -> Result<f64> {
    if t > candidates.len() {
        return Err(Error::domain(format!(
            "greedy information gain for t = {t} needs at least t candidates, got {}",
            candidates.len()
        )));
    }
    let mut gp = GpState::new(model.clone());
    let mut cache = PosteriorCache::new(&model.kernel, candidates)?;
    for _ in 0..t {
        cache.sync(&gp);
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..cache.len() {
            let v = cache.variance(c)?;
            if v > best.1 {
                best = (c, v);
            }
        }
        gp.observe(&candidates[best.0], 0.0)?;
    }
    Ok(gp.info_gain_observed())
}
