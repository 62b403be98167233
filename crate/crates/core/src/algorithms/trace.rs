//! Per-iteration run records and their CSV export.

use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::MixedStrategy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    GpMro,
    StableOpt,
    GpUcb,
    RandMaxMin,
    Clss,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 5] = [
        AlgorithmKind::GpMro,
        AlgorithmKind::StableOpt,
        AlgorithmKind::GpUcb,
        AlgorithmKind::RandMaxMin,
        AlgorithmKind::Clss,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::GpMro => "gp_mro",
            AlgorithmKind::StableOpt => "stable_opt",
            AlgorithmKind::GpUcb => "gp_ucb",
            AlgorithmKind::RandMaxMin => "rand_max_min",
            AlgorithmKind::Clss => "clss",
        }
    }

    /// Whether the reported strategy is the uniform distribution over all
    /// selections so far (as opposed to an explicit per-round report).
    pub fn reports_history(&self) -> bool {
        matches!(self, AlgorithmKind::GpMro | AlgorithmKind::Clss)
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown algorithm `{s}`")))
    }
}

/// What happened in round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// Adversary weights `w_t` (empty for algorithms without an adversary).
    pub weights: Vec<f64>,
    pub x: usize,
    pub theta: usize,
    /// Observation, absent when the variance gate skipped the query.
    pub y: Option<f64>,
    /// `β_t`, the multiplier applied to `σ_{t-1}` this round.
    pub beta: f64,
    /// `σ_{t-1}(x_t, θ_t)`.
    pub sigma: f64,
    pub queried: bool,
    /// Support of the point(s) the algorithm would report after this round,
    /// for algorithms that do not report their selection history.
    pub report: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: AlgorithmKind,
    pub num_params: usize,
    pub records: Vec<IterationRecord>,
    pub strategy: MixedStrategy,
    /// `½ log det(I + λ⁻¹K_t)` after each round.
    pub info_gain: Vec<f64>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn queries(&self) -> usize {
        self.records.iter().filter(|r| r.queried).count()
    }

    /// Strategy the algorithm would report after `t` rounds.
    pub fn strategy_at(&self, t: usize) -> Result<MixedStrategy> {
        if t == 0 || t > self.records.len() {
            return Err(Error::domain(format!("checkpoint {t} outside 1..={}", self.records.len())));
        }
        if self.algorithm.reports_history() {
            let xs: Vec<usize> = self.records[..t].iter().map(|r| r.x).collect();
            MixedStrategy::uniform_over(&xs)
        } else {
            MixedStrategy::uniform_over(&self.records[t - 1].report)
        }
    }

    /// Same records and final strategy; ignores timing.
    pub fn same_run(&self, other: &RunTrace) -> bool {
        self.algorithm == other.algorithm
            && self.records == other.records
            && self.strategy == other.strategy
            && self.info_gain == other.info_gain
    }

    /// `t,w_1..w_m,x_index,theta_index,y,beta,sigma,queried`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.num_params).map(|i| format!("w_{i}")));
        header.extend(["x_index", "theta_index", "y", "beta", "sigma", "queried"].map(String::from));
        w.write_record(&header)?;
        for r in &self.records {
            let mut rec = vec![r.t.to_string()];
            if r.weights.is_empty() {
                rec.extend(std::iter::repeat_n(String::new(), self.num_params));
            } else {
                rec.extend(r.weights.iter().map(|v| v.to_string()));
            }
            rec.push(r.x.to_string());
            rec.push(r.theta.to_string());
            rec.push(r.y.map(|v| v.to_string()).unwrap_or_default());
            rec.push(r.beta.to_string());
            rec.push(r.sigma.to_string());
            rec.push(r.queried.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
