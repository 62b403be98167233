//! Driving study: offline policy precomputation and closed-loop batches
//! against the deterministic max-min comparator.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use gpmro_driving::{maxmin_policy, precompute_policy, run_batch, BatchStats, DrivingConfig, DrivingPolicy, EpisodeStats, Precomputed, Scenario, ScenarioTables};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{create_file, relative, write_config, Manifest, RunRecord, SeedRecord};

pub const MIXED: &str = "gp_mro";
pub const COMPARATOR: &str = "maxmin";

pub fn tables(config: &DrivingConfig, scenarios: &[Scenario]) -> gpmro::Result<ScenarioTables> {
    ScenarioTables::build(&config.world, scenarios)
}

pub fn precompute(config: &DrivingConfig, scenarios: &[Scenario], tables: &ScenarioTables, seed: u64) -> gpmro::Result<Precomputed> {
    let mut policy = config.policy.clone();
    policy.seed = seed;
    precompute_policy(&config.world, scenarios, tables, &policy)
}

/// All traces in one file, each row prefixed by its scenario index.
fn write_traces<W: Write>(pre: &Precomputed, mut w: W) -> anyhow::Result<()> {
    for (k, trace) in pre.traces.iter().enumerate() {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        let text = String::from_utf8(buf)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if k == 0 {
            writeln!(w, "scenario,{header}")?;
        }
        for line in lines {
            writeln!(w, "{k},{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run_drive_precompute(config: &ExperimentConfig, out: &Path, command: &str) -> anyhow::Result<Manifest> {
    config.validate()?;
    let hash = write_config(out, config)?;
    let d = &config.drive;
    let scenarios = d.scenarios.scenarios();
    let tables = tables(d, &scenarios)?;
    let mut manifest = Manifest::new(command, hash);

    let comparator_path = out.join("maxmin_policy.csv");
    maxmin_policy(&scenarios, &tables).write_csv(create_file(&comparator_path)?)?;
    for &seed in &config.seeds {
        manifest.seeds.push(SeedRecord {
            seed,
            normalization: None,
            tau: None,
            tau_upper_bound: None,
            pure_maximin: None,
            error: None,
        });
        let result = precompute(d, &scenarios, &tables, seed).map_err(anyhow::Error::from).and_then(|pre| {
            let dir = out.join(format!("seed{seed}"));
            let policy_path = dir.join("policy.csv");
            let traces_path = dir.join("traces.csv");
            pre.policy.write_csv(create_file(&policy_path)?)?;
            write_traces(&pre, create_file(&traces_path)?)?;
            Ok((pre.queries(), vec![relative(out, &policy_path), relative(out, &traces_path)]))
        });
        manifest.runs.push(match result {
            Ok((queries, files)) => RunRecord {
                label: MIXED.into(),
                seed,
                ok: true,
                error: None,
                final_performance: None,
                queries: Some(queries),
                files,
            },
            Err(e) => failed(MIXED, seed, e),
        });
    }
    manifest.runs.push(RunRecord {
        label: COMPARATOR.into(),
        seed: 0,
        ok: true,
        error: None,
        final_performance: None,
        queries: None,
        files: vec![relative(out, &comparator_path)],
    });
    manifest.write(out)?;
    Ok(manifest)
}

fn failed(label: &str, seed: u64, e: anyhow::Error) -> RunRecord {
    RunRecord {
        label: label.into(),
        seed,
        ok: false,
        error: Some(format!("{e:#}")),
        final_performance: None,
        queries: None,
        files: Vec::new(),
    }
}

/// One row of `summary.csv`, matching the columns of the overtaking table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriveSummary {
    pub seed: u64,
    pub policy: String,
    pub episodes: usize,
    pub overtakes: usize,
    pub mean_av_final_x: f64,
    pub mean_hv_final_x: f64,
    pub queries: Option<usize>,
}

fn summary(seed: u64, policy: &str, b: &BatchStats, queries: Option<usize>) -> DriveSummary {
    DriveSummary {
        seed,
        policy: policy.into(),
        episodes: b.episodes,
        overtakes: b.overtakes,
        mean_av_final_x: b.mean_av_final_x,
        mean_hv_final_x: b.mean_hv_final_x,
        queries,
    }
}

fn write_episodes<W: Write>(rows: &[(&str, u64, &EpisodeStats)], w: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["policy", "episode_seed", "overtake", "av_final_x", "hv_final_x", "min_separation", "plans"])?;
    for (policy, seed, e) in rows {
        w.write_record([
            policy.to_string(),
            seed.to_string(),
            e.overtake.to_string(),
            e.av_final_x.to_string(),
            e.hv_final_x.to_string(),
            e.min_separation.to_string(),
            e.plans.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-loop batches for the mixed policy (precomputed per seed, or read
/// from `policy_csv`) and the comparator. Seed `s` precomputes with seed `s`
/// and runs episodes `episode_seed + s·episodes ..`.
pub fn run_drive_closed_loop(config: &ExperimentConfig, out: &Path, command: &str, policy_csv: Option<&Path>) -> anyhow::Result<(Manifest, Vec<DriveSummary>)> {
    config.validate()?;
    let hash = write_config(out, config)?;
    let d = &config.drive;
    let loaded = match policy_csv {
        Some(p) => Some(DrivingPolicy::read_csv(std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?),
        None => None,
    };
    let scenarios = match &loaded {
        Some(p) => p.scenarios.clone(),
        None => d.scenarios.scenarios(),
    };
    let tables = tables(d, &scenarios)?;
    let comparator = maxmin_policy(&scenarios, &tables);
    let mut manifest = Manifest::new(command, hash);
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        manifest.seeds.push(SeedRecord {
            seed,
            normalization: None,
            tau: None,
            tau_upper_bound: None,
            pure_maximin: None,
            error: None,
        });
        let first_episode = d.episode_seed.wrapping_add(seed.wrapping_mul(d.episodes as u64));
        let result = (|| -> anyhow::Result<(Vec<DriveSummary>, Vec<String>)> {
            let (mixed, queries) = match &loaded {
                Some(p) => (p.clone(), None),
                None => {
                    let pre = precompute(d, &scenarios, &tables, seed)?;
                    let q = pre.queries();
                    (pre.policy, Some(q))
                }
            };
            let (me, ms) = run_batch(&d.world, &mixed, &tables, &d.closed_loop, d.episodes, first_episode)?;
            let (ce, cs) = run_batch(&d.world, &comparator, &tables, &d.closed_loop, d.episodes, first_episode)?;
            let dir = out.join(format!("seed{seed}"));
            let episodes_path = dir.join("episodes.csv");
            let policy_path = dir.join("policy.csv");
            let mut episode_rows: Vec<(&str, u64, &EpisodeStats)> = Vec::new();
            for (e, stats) in me.iter().enumerate() {
                episode_rows.push((MIXED, first_episode.wrapping_add(e as u64), stats));
            }
            for (e, stats) in ce.iter().enumerate() {
                episode_rows.push((COMPARATOR, first_episode.wrapping_add(e as u64), stats));
            }
            write_episodes(&episode_rows, create_file(&episodes_path)?)?;
            mixed.write_csv(create_file(&policy_path)?)?;
            Ok((
                vec![summary(seed, MIXED, &ms, queries), summary(seed, COMPARATOR, &cs, None)],
                vec![relative(out, &episodes_path), relative(out, &policy_path)],
            ))
        })();
        match result {
            Ok((summaries, files)) => {
                manifest.runs.push(RunRecord {
                    label: "closed_loop".into(),
                    seed,
                    ok: true,
                    error: None,
                    final_performance: None,
                    queries: summaries[0].queries,
                    files,
                });
                rows.extend(summaries);
            }
            Err(e) => manifest.runs.push(failed("closed_loop", seed, e)),
        }
    }
    let mut w = csv::Writer::from_writer(create_file(&out.join("summary.csv"))?);
    w.write_record(["seed", "policy", "episodes", "overtakes", "mean_av_final_x", "mean_hv_final_x", "queries"])?;
    for r in &rows {
        w.write_record([
            r.seed.to_string(),
            r.policy.clone(),
            r.episodes.to_string(),
            r.overtakes.to_string(),
            r.mean_av_final_x.to_string(),
            r.mean_hv_final_x.to_string(),
            r.queries.map(|q| q.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    manifest.write(out)?;
    Ok((manifest, rows))
}
