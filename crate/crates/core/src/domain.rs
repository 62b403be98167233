//! Decision grids, parameter sets, payoff tables and mixed strategies, plus the
//! evaluation metrics every algorithm is scored with.
//!
//! Decisions and parameters are always identified by their index: `x` indexes
//! a [`DecisionGrid`], `i` indexes a [`ParamSet`]. Payoff tables are stored
//! row-major with one row per decision and one column per parameter.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algorithms::mwu::MwuState;
use crate::error::{Error, Result};

/// Tolerance used when checking that probability vectors sum to one.
pub const PROB_TOL: f64 = 1e-12;

/// A single decision `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub coords: Vec<f64>,
}

impl DecisionPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("decision point has non-finite coordinates"));
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Finite discretization of the decision set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionGrid {
    points: Vec<DecisionPoint>,
    dim: usize,
}

impl DecisionGrid {
    pub fn new(points: Vec<DecisionPoint>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::domain("decision grid must be nonempty"))?;
        let dim = first.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: p.dim(),
            });
        }
        Ok(Self { points, dim })
    }

    /// `n` evenly spaced points on `[lo, hi]`, endpoints included.
    pub fn uniform_1d(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(linspace(lo, hi, n)?.into_iter().map(|v| DecisionPoint { coords: vec![v] }).collect())
    }

    /// Cartesian grid of `nx * ny` points over an axis-aligned box. The second
    /// coordinate varies fastest.
    pub fn uniform_2d(nx: usize, ny: usize, x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self> {
        let xs = linspace(x_range.0, x_range.1, nx)?;
        let ys = linspace(y_range.0, y_range.1, ny)?;
        let mut points = Vec::with_capacity(nx * ny);
        for &x in &xs {
            for &y in &ys {
                points.push(DecisionPoint { coords: vec![x, y] });
            }
        }
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[DecisionPoint] {
        &self.points
    }

    pub fn point(&self, index: usize) -> &DecisionPoint {
        &self.points[index]
    }
}

/// The finite set of adversarial parameters `θ_1..θ_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    values: Vec<Vec<f64>>,
}

impl ParamSet {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let first = values
            .first()
            .ok_or_else(|| Error::domain("parameter set must contain at least one value"))?;
        let dim = first.len();
        for (i, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::domain(format!("parameter {i} is not finite")));
            }
            if values[..i].iter().any(|w| w == v) {
                return Err(Error::domain(format!("parameter {i} duplicates an earlier entry")));
            }
        }
        Ok(Self { values })
    }

    pub fn uniform_1d(m: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(linspace(lo, hi, m)?.into_iter().map(|v| vec![v]).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn value(&self, index: usize) -> &[f64] {
        &self.values[index]
    }
}

/// Prior distribution `Q` over the parameter indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorQ {
    weights: Vec<f64>,
}

impl PriorQ {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights, "prior Q")?;
        Ok(Self { weights })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("prior over an empty parameter set"));
        }
        Ok(Self {
            weights: vec![1.0 / m as f64; m],
        })
    }

    pub fn dirac(m: usize, index: usize) -> Result<Self> {
        if index >= m {
            return Err(Error::domain(format!("dirac index {index} out of range for m = {m}")));
        }
        let mut weights = vec![0.0; m];
        weights[index] = 1.0;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn check_simplex(weights: &[f64], what: &str) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::domain(format!("{what} is empty")));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::domain(format!("{what} has negative or non-finite entries")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::domain(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// A probability distribution with finite support over decision indices.
///
/// The support is kept sorted by index with duplicates merged, and the
/// masses always sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    support: Vec<(usize, f64)>,
}

impl MixedStrategy {
    /// Builds a strategy from nonnegative masses, merging repeated indices and
    /// renormalizing. Zero-mass entries are dropped.
    pub fn from_masses<I>(masses: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (index, mass) in masses {
            if !mass.is_finite() || mass < 0.0 {
                return Err(Error::domain(format!("invalid probability mass {mass} at index {index}")));
            }
            *merged.entry(index).or_insert(0.0) += mass;
        }
        let total: f64 = merged.values().sum();
        if merged.is_empty() || total <= 0.0 {
            return Err(Error::domain("mixed strategy has empty support"));
        }
        let support = merged
            .into_iter()
            .filter(|(_, m)| *m > 0.0)
            .map(|(i, m)| (i, m / total))
            .collect();
        Ok(Self { support })
    }

    /// Like [`from_masses`](Self::from_masses) but insists the masses already
    /// sum to one.
    pub fn new(pairs: Vec<(usize, f64)>) -> Result<Self> {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        Self::from_masses(pairs)
    }

    pub fn dirac(index: usize) -> Self {
        Self {
            support: vec![(index, 1.0)],
        }
    }

    /// Uniform distribution over a multiset of indices: each distinct index
    /// receives `multiplicity / len`.
    pub fn uniform_over(indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::domain("uniform strategy over an empty sequence"));
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &i in indices {
            *counts.entry(i).or_insert(0) += 1;
        }
        let n = indices.len() as f64;
        Ok(Self {
            support: counts.into_iter().map(|(i, c)| (i, c as f64 / n)).collect(),
        })
    }

    pub fn support(&self) -> &[(usize, f64)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.support
            .binary_search_by_key(&index, |p| p.0)
            .map(|k| self.support[k].1)
            .unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|p| p.1).sum()
    }

    /// Draws one decision index.
    pub fn sample(&self, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rand::Rng::random(rng);
        let mut acc = 0.0;
        for &(i, p) in &self.support {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.support.last().map(|p| p.0).unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["point_index", "probability"])?;
        for &(i, p) in &self.support {
            w.write_record([i.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["point_index", "probability"] {
            return Err(Error::Parse(format!("unexpected strategy header {headers:?}")));
        }
        let mut pairs = Vec::new();
        for record in r.records() {
            let record = record?;
            let index = record[0]
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("point_index: {e}")))?;
            let prob = record[1]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("probability: {e}")))?;
            pairs.push((index, prob));
        }
        Self::new(pairs)
    }
}

/// Affine map `(v - offset) / scale` that brought raw objective values into
/// `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: f64,
    pub scale: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization { offset: 0.0, scale: 1.0 };

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }
}

/// Dense `|X| x m` payoff matrix, rows indexed by decision, columns by parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PayoffTable {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::domain("payoff table must be nonempty"));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("payoff table has non-finite entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Dimension {
                expected: cols,
                got: r.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for x in 0..rows {
            for i in 0..cols {
                data.push(f(x, i));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn num_points(&self) -> usize {
        self.rows
    }

    pub fn num_params(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, x: usize, i: usize) -> f64 {
        self.data[x * self.cols + i]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.cols..(x + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_unit_range(&self) -> Result<()> {
        match self.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            Some(k) => Err(Error::domain(format!(
                "payoff ({}, {}) = {} lies outside [0, 1]",
                k / self.cols,
                k % self.cols,
                self.data[k]
            ))),
            None => Ok(()),
        }
    }

    /// Affinely rescales the table onto `[0, 1]` using its own min and max. A
    /// constant table maps to all zeros.
    pub fn normalized(&self) -> (PayoffTable, Normalization) {
        let (lo, hi) = (self.min(), self.max());
        let scale = if hi > lo { hi - lo } else { 1.0 };
        let norm = Normalization { offset: lo, scale };
        let data = self.data.iter().map(|&v| norm.apply(v).clamp(0.0, 1.0)).collect();
        (
            PayoffTable {
                rows: self.rows,
                cols: self.cols,
                data,
            },
            norm,
        )
    }

    /// Largest pure worst-case value `max_x min_i f(x, θ_i)` with its row.
    pub fn pure_maximin(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for x in 0..self.rows {
            let worst = self.row(x).iter().copied().fold(f64::INFINITY, f64::min);
            if worst > best.1 {
                best = (x, worst);
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.cols).map(|i| format!("theta_{i}")))?;
        for x in 0..self.rows {
            w.write_record(self.row(x).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let cols = r.headers()?.len();
        let mut data = Vec::new();
        let mut rows = 0;
        for record in r.records() {
            let record = record?;
            if record.len() != cols {
                return Err(Error::Parse(format!("row {rows} has {} fields, expected {cols}", record.len())));
            }
            for field in record.iter() {
                data.push(field.parse::<f64>().map_err(|e| Error::Parse(format!("row {rows}: {e}")))?);
            }
            rows += 1;
        }
        Self::new(rows, cols, data)
    }
}

/// Access to the unknown reward `f(x, θ)` by grid and parameter index.
pub trait Objective: Send + Sync {
    fn num_points(&self) -> usize;
    fn num_params(&self) -> usize;

    /// Noise-free value; reserved for metrics and tests.
    fn exact(&self, x: usize, theta: usize) -> f64;

    fn noise_sigma(&self) -> f64;

    /// One noisy observation `f(x, θ) + ξ` with `ξ ~ N(0, σ²)`.
    fn noisy(&self, x: usize, theta: usize, rng: &mut dyn RngCore) -> f64 {
        let xi: f64 = StandardNormal.sample(rng);
        self.exact(x, theta) + self.noise_sigma() * xi
    }
}

/// An objective backed by a precomputed payoff table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOracle {
    pub table: PayoffTable,
    pub noise_sigma: f64,
    /// Constants that mapped the raw objective onto the table's scale.
    pub normalization: Normalization,
}

impl TableOracle {
    pub fn new(table: PayoffTable, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::domain(format!("noise sigma {noise_sigma} must be >= 0")));
        }
        Ok(Self {
            table,
            noise_sigma,
            normalization: Normalization::IDENTITY,
        })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }
}

impl Objective for TableOracle {
    fn num_points(&self) -> usize {
        self.table.num_points()
    }

    fn num_params(&self) -> usize {
        self.table.num_params()
    }

    fn exact(&self, x: usize, theta: usize) -> f64 {
        self.table.get(x, theta)
    }

    fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }
}

fn check_support(strategy: &MixedStrategy, oracle: &dyn Objective) -> Result<()> {
    if strategy.is_empty() {
        return Err(Error::domain("strategy has empty support"));
    }
    if let Some(&(i, _)) = strategy.support().iter().find(|(i, _)| *i >= oracle.num_points()) {
        return Err(Error::domain(format!(
            "strategy index {i} out of range for {} decisions",
            oracle.num_points()
        )));
    }
    Ok(())
}

/// Expected reward `E_{x~P}[f(x, θ_i)]` for every parameter `i`.
pub fn expected_rewards(strategy: &MixedStrategy, oracle: &dyn Objective) -> Result<Vec<f64>> {
    check_support(strategy, oracle)?;
    let m = oracle.num_params();
    let mut out = vec![0.0; m];
    for &(x, p) in strategy.support() {
        for (i, o) in out.iter_mut().enumerate() {
            *o += p * oracle.exact(x, i);
        }
    }
    Ok(out)
}

/// Worst-case expected reward `min_θ E_{x~P}[f(x, θ)]` of a strategy.
pub fn performance(strategy: &MixedStrategy, oracle: &dyn Objective) -> Result<f64> {
    Ok(expected_rewards(strategy, oracle)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Mixture `(1 - χ) E_{θ~Q, x~P}[f] + χ min_θ E_{x~P}[f]` of average-case and
/// worst-case reward.
pub fn tradeoff_value(strategy: &MixedStrategy, oracle: &dyn Objective, q: &PriorQ, chi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&chi) {
        return Err(Error::domain(format!("trade-off chi = {chi} outside [0, 1]")));
    }
    if q.len() != oracle.num_params() {
        return Err(Error::Dimension {
            expected: oracle.num_params(),
            got: q.len(),
        });
    }
    let rewards = expected_rewards(strategy, oracle)?;
    let worst = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    if chi == 1.0 {
        return Ok(worst);
    }
    let average: f64 = rewards.iter().zip(q.weights()).map(|(r, w)| r * w).sum();
    Ok((1.0 - chi) * average + chi * worst)
}

/// Result of solving the maximin game on a known table.
#[derive(Debug, Clone)]
pub struct MaximinSolution {
    /// Worst-case value of `strategy`; a certified lower bound on `τ*`.
    pub value: f64,
    pub strategy: MixedStrategy,
    /// Certified upper bound on `τ*` from the averaged adversary.
    pub upper_bound: f64,
    pub iterations: usize,
}

/// Default accuracy of [`maximin_value`].
pub const DEFAULT_ORACLE_EPS: f64 = 1e-3;

/// Approximates `τ* = max_P min_θ E_{x~P} f(x, θ)` by multiplicative-weights
/// self-play against an exact best responder.
///
/// Runs at most `⌈ln m / (2 eps²)⌉` rounds, enough for the averaged learner to be
/// `eps`-optimal, and stops early once the duality gap certified by the
/// averaged adversary falls below `eps`.
pub fn maximin_value(table: &PayoffTable, eps: f64) -> Result<MaximinSolution> {
    if !(eps > 0.0) {
        return Err(Error::domain("oracle accuracy must be positive"));
    }
    table.check_unit_range()?;
    let (n, m) = (table.num_points(), table.num_params());
    if m == 1 {
        let (x, v) = table.pure_maximin();
        return Ok(MaximinSolution {
            value: v,
            strategy: MixedStrategy::dirac(x),
            upper_bound: v,
            iterations: 0,
        });
    }
    let max_rounds = ((m as f64).ln() / (2.0 * eps * eps)).ceil() as usize;
    let eta = (8.0 * (m as f64).ln() / max_rounds as f64).sqrt();
    let mut mwu = MwuState::new(m, eta)?;
    let mut counts = vec![0usize; n];
    let mut weight_sum = vec![0.0; m];
    let mut scores = vec![0.0; n];
    let check_every = 256.max(max_rounds / 1000);
    let mut best_upper = f64::INFINITY;
    let mut rounds = 0;
    let oracle = TableOracle::new(table.clone(), 0.0)?;

    while rounds < max_rounds {
        let w = mwu.weights();
        for (x, s) in scores.iter_mut().enumerate() {
            *s = table.row(x).iter().zip(w).map(|(f, w)| f * w).sum();
        }
        let x = argmax(&scores);
        best_upper = best_upper.min(scores[x]);
        counts[x] += 1;
        for (acc, wi) in weight_sum.iter_mut().zip(w) {
            *acc += wi;
        }
        mwu.update(table.row(x))?;
        rounds += 1;

        if rounds % check_every == 0 || rounds == max_rounds {
            let strategy = strategy_from_counts(&counts)?;
            let lower = performance(&strategy, &oracle)?;
            let upper = averaged_adversary_bound(table, &weight_sum).min(best_upper);
            if upper - lower <= eps || rounds == max_rounds {
                return Ok(MaximinSolution {
                    value: lower,
                    strategy,
                    upper_bound: upper,
                    iterations: rounds,
                });
            }
        }
    }
    unreachable!("loop returns at the final round")
}

fn strategy_from_counts(counts: &[usize]) -> Result<MixedStrategy> {
    MixedStrategy::from_masses(
        counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(x, c)| (x, *c as f64)),
    )
}

fn averaged_adversary_bound(table: &PayoffTable, weight_sum: &[f64]) -> f64 {
    let total: f64 = weight_sum.iter().sum();
    (0..table.num_points())
        .map(|x| {
            table
                .row(x)
                .iter()
                .zip(weight_sum)
                .map(|(f, w)| f * w / total)
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Index of the smallest value, lowest index on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = k;
        }
    }
    best
}

fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("grid size must be at least 1"));
    }
    if n == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|k| if k == n - 1 { hi } else { lo + step * k as f64 }).collect())
}
