//! Runs, sweeps and method comparisons.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use secnoma_learn::nn::NetSpec;
use secnoma_learn::{build_agent, checkpoint, train, AgentKind, EpisodeMetrics};
use serde::{Deserialize, Serialize};

use crate::config::{check_axis, AxisValue, ExperimentConfig, SweepAxis};
use crate::stats::{final_window, mean, pooled_se, MeanStd};
use crate::HarnessError;

/// One CSV row: a single episode of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: String,
    pub method: String,
    pub model: String,
    /// Relative channel and battery uncertainty.
    pub uncertainty: f64,
    pub scenario: String,
    pub battery_max: f64,
    pub seed: u64,
    pub episode: usize,
    pub slots: usize,
    pub avg_secrecy_rate: f64,
    pub energy_consumption: f64,
    pub pfee: f64,
    pub mean_reward: f64,
    pub true_secrecy_rate: f64,
    pub true_energy_consumption: f64,
    pub violations_c1: usize,
    pub violations_c2: usize,
    pub violations_c3: usize,
    pub violations_c4: usize,
    pub violations_c5: usize,
    pub violations_c6: usize,
    pub violations_c7: usize,
    pub depleted: bool,
    pub updates: usize,
}

impl MetricRecord {
    pub fn new(cfg: &ExperimentConfig, run_id: &str, seed: u64, m: &EpisodeMetrics) -> Self {
        let v = m.violations;
        Self {
            run_id: run_id.to_string(),
            method: cfg.method.name().to_string(),
            model: cfg.env.uncertainty.kind.name().to_string(),
            uncertainty: cfg.env.uncertainty.channel_delta,
            scenario: cfg.scenario_label(),
            battery_max: cfg.env.pap_battery_capacity.max(cfg.env.sap_battery_capacity),
            seed,
            episode: m.episode,
            slots: m.slots,
            avg_secrecy_rate: m.avg_secrecy_rate,
            energy_consumption: m.energy_consumption,
            pfee: m.pfee,
            mean_reward: m.mean_reward,
            true_secrecy_rate: m.true_secrecy_rate,
            true_energy_consumption: m.true_energy_consumption,
            violations_c1: v[0],
            violations_c2: v[1],
            violations_c3: v[2],
            violations_c4: v[3],
            violations_c5: v[4],
            violations_c6: v[5],
            violations_c7: v[6],
            depleted: m.depleted,
            updates: m.updates,
        }
    }

    pub fn numeric_fields(&self) -> [f64; 8] {
        [
            self.uncertainty,
            self.battery_max,
            self.avg_secrecy_rate,
            self.energy_consumption,
            self.pfee,
            self.mean_reward,
            self.true_secrecy_rate,
            self.true_energy_consumption,
        ]
    }
}

/// Final-window means of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMeans {
    pub avg_secrecy_rate: f64,
    pub energy_consumption: f64,
    pub pfee: f64,
    pub mean_reward: f64,
    pub true_secrecy_rate: f64,
    pub true_energy_consumption: f64,
}

impl WindowMeans {
    /// Means over the final window of one run's rows, in episode order.
    pub fn of(rows: &[MetricRecord]) -> Self {
        let w = final_window(rows);
        let f = |g: fn(&MetricRecord) -> f64| mean(&w.iter().map(g).collect::<Vec<_>>());
        Self {
            avg_secrecy_rate: f(|r| r.avg_secrecy_rate),
            energy_consumption: f(|r| r.energy_consumption),
            pfee: f(|r| r.pfee),
            mean_reward: f(|r| r.mean_reward),
            true_secrecy_rate: f(|r| r.true_secrecy_rate),
            true_energy_consumption: f(|r| r.true_energy_consumption),
        }
    }
}

/// Seed-level spread of final-window means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub avg_secrecy_rate: MeanStd,
    pub energy_consumption: MeanStd,
    pub pfee: MeanStd,
    pub mean_reward: MeanStd,
    pub true_secrecy_rate: MeanStd,
    pub true_energy_consumption: MeanStd,
}

impl Aggregate {
    pub fn of(runs: &[WindowMeans]) -> Self {
        let f = |g: fn(&WindowMeans) -> f64| MeanStd::of(&runs.iter().map(g).collect::<Vec<_>>());
        Self {
            avg_secrecy_rate: f(|r| r.avg_secrecy_rate),
            energy_consumption: f(|r| r.energy_consumption),
            pfee: f(|r| r.pfee),
            mean_reward: f(|r| r.mean_reward),
            true_secrecy_rate: f(|r| r.true_secrecy_rate),
            true_energy_consumption: f(|r| r.true_energy_consumption),
        }
    }
}

/// Outcome of training one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub run_id: String,
    pub seed: u64,
    pub records: Vec<MetricRecord>,
    pub window: WindowMeans,
    pub networks: Vec<(String, NetSpec, Vec<f64>)>,
}

pub fn run_id(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}-{}-s{}", cfg.name, cfg.method.name(), seed)
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, HarnessError> {
    let id = run_id(cfg, seed);
    let mut agent = build_agent(cfg.method, &cfg.agent, seed);
    let trace = train(&cfg.env_config(), agent.as_mut(), &cfg.training, seed, |_| {})?;
    let records: Vec<MetricRecord> = trace.iter().map(|m| MetricRecord::new(cfg, &id, seed, m)).collect();
    let networks = agent
        .networks()
        .into_iter()
        .map(|n| (n.name, n.spec.clone(), n.params.to_vec()))
        .collect();
    Ok(SeedRun {
        window: WindowMeans::of(&records),
        run_id: id,
        seed,
        records,
        networks,
    })
}

/// All seeds of one configuration, in seed-list order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>, HarnessError> {
    cfg.validate()?;
    cfg.seeds.par_iter().map(|s| run_seed(cfg, *s)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummaryEntry {
    pub run_id: String,
    pub seed: u64,
    pub episodes: usize,
    pub final_window: WindowMeans,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub final_window_fraction: f64,
    pub runs: Vec<RunSummaryEntry>,
    pub aggregate: Aggregate,
}

impl RunSummary {
    pub fn new(cfg: &ExperimentConfig, runs: &[SeedRun]) -> Self {
        Self {
            config: cfg.clone(),
            final_window_fraction: crate::stats::FINAL_WINDOW,
            runs: runs
                .iter()
                .map(|r| RunSummaryEntry {
                    run_id: r.run_id.clone(),
                    seed: r.seed,
                    episodes: r.records.len(),
                    final_window: r.window,
                })
                .collect(),
            aggregate: Aggregate::of(&runs.iter().map(|r| r.window).collect::<Vec<_>>()),
        }
    }
}

pub fn write_csv<'a>(path: &Path, rows: impl IntoIterator<Item = &'a MetricRecord>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

fn write_checkpoint(dir: &Path, cfg: &ExperimentConfig, runs: &[SeedRun]) -> Result<(), HarnessError> {
    let named: Vec<(String, &NetSpec, &[f64])> = runs
        .iter()
        .flat_map(|r| {
            r.networks
                .iter()
                .map(move |(n, spec, p)| (format!("seed{}/{}", r.seed, n), spec, p.as_slice()))
        })
        .collect();
    let params: Vec<secnoma_learn::agent::NamedParams<'_>> = named
        .iter()
        .map(|(name, spec, p)| secnoma_learn::agent::NamedParams {
            name: name.clone(),
            spec,
            params: p,
        })
        .collect();
    checkpoint::save(&dir.join("checkpoint"), cfg.method.name(), &params)?;
    Ok(())
}

/// Trains every seed and writes `metrics.csv`, `summary.json` and
/// `checkpoint.bin` with its manifest into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, HarnessError> {
    let runs = run_all(cfg)?;
    fs::create_dir_all(out)?;
    write_csv(&out.join("metrics.csv"), runs.iter().flat_map(|r| &r.records))?;
    let summary = RunSummary::new(cfg, &runs);
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    write_checkpoint(out, cfg, &runs)?;
    Ok(summary)
}

/// Final-window means of one (value, seed) sweep cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub seed: u64,
    pub run_id: String,
    pub final_window: WindowMeans,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub method: AgentKind,
    pub rows: Vec<SweepRow>,
    pub points: Vec<SweepPoint>,
    #[serde(skip)]
    pub records: Vec<MetricRecord>,
}

impl SweepTable {
    pub fn point(&self, label: &str) -> Option<&Aggregate> {
        self.points.iter().find(|p| p.value == label).map(|p| &p.aggregate)
    }

    /// Per-seed final-window secrecy rates at one value.
    pub fn secrecy_samples(&self, label: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.value == label)
            .map(|r| r.final_window.avg_secrecy_rate)
            .collect()
    }
}

/// Cross product of axis values and seeds; cells run in parallel.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[AxisValue]) -> Result<SweepTable, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    base.validate()?;
    check_axis(base, axis)?;
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|v| {
            let mut c = v.apply(base);
            c.name = format!("{}-{}", base.name, v.label());
            c.validate().map(|_| c)
        })
        .collect::<Result<_, _>>()?;
    let cells: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|i| base.seeds.iter().map(move |s| (i, *s)))
        .collect();
    let runs: Vec<SeedRun> = cells
        .par_iter()
        .map(|(i, s)| run_seed(&configs[*i], *s))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(runs.len());
    let mut records = Vec::new();
    for ((i, _), run) in cells.iter().zip(&runs) {
        rows.push(SweepRow {
            value: values[*i].label(),
            seed: run.seed,
            run_id: run.run_id.clone(),
            final_window: run.window,
        });
        records.extend(run.records.iter().cloned());
    }
    let points = values
        .iter()
        .map(|v| {
            let label = v.label();
            let windows: Vec<WindowMeans> = rows
                .iter()
                .filter(|r| r.value == label)
                .map(|r| r.final_window)
                .collect();
            SweepPoint {
                value: label,
                aggregate: Aggregate::of(&windows),
            }
        })
        .collect();
    Ok(SweepTable {
        axis,
        method: base.method,
        rows,
        points,
        records,
    })
}

pub fn write_sweep(table: &SweepTable, out: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out)?;
    write_csv(&out.join("metrics.csv"), &table.records)?;
    fs::write(out.join("sweep.json"), serde_json::to_string_pretty(table)?)?;
    Ok(())
}

/// Sign of a mean difference, with whether it clears two standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Better,
    Worse,
    Tied,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub a: AgentKind,
    pub b: AgentKind,
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub difference: f64,
    /// Difference relative to `|mean_b|`, percent.
    pub relative_percent: f64,
    pub pooled_std_err: f64,
    pub verdict: Verdict,
    /// `|difference| > 2 * pooled_std_err`.
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub methods: Vec<AgentKind>,
    pub rows: Vec<ComparisonRow>,
    /// Per method, per-seed final-window means.
    pub samples: Vec<(AgentKind, Vec<WindowMeans>)>,
}

impl ComparisonReport {
    pub fn row(&self, a: AgentKind, b: AgentKind, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.a == a && r.b == b && r.metric == metric)
    }
}

pub const COMPARED_METRICS: [&str; 3] = ["avg_secrecy_rate", "energy_consumption", "pfee"];

fn metric_of(w: &WindowMeans, metric: &str) -> f64 {
    match metric {
        "avg_secrecy_rate" => w.avg_secrecy_rate,
        "energy_consumption" => w.energy_consumption,
        "pfee" => w.pfee,
        other => unreachable!("unknown metric {other}"),
    }
}

pub fn compare_samples(a: &[f64], b: &[f64]) -> (f64, f64, Verdict, bool) {
    let diff = mean(a) - mean(b);
    let se = pooled_se(a, b);
    let verdict = if diff > 0.0 {
        Verdict::Better
    } else if diff < 0.0 {
        Verdict::Worse
    } else {
        Verdict::Tied
    };
    (diff, se, verdict, diff.abs() > 2.0 * se)
}

/// Trains every method on `base` and reports pairwise differences of
/// final-window means. Pairs follow the order of `methods`.
pub fn compare(base: &ExperimentConfig, methods: &[AgentKind]) -> Result<ComparisonReport, HarnessError> {
    if methods.len() < 2 {
        return Err(HarnessError::Config("compare needs at least two methods".into()));
    }
    base.validate()?;
    let mut samples = Vec::with_capacity(methods.len());
    for m in methods {
        let cfg = ExperimentConfig {
            method: *m,
            ..base.clone()
        };
        let runs = run_all(&cfg)?;
        samples.push((*m, runs.iter().map(|r| r.window).collect::<Vec<_>>()));
    }
    let mut rows = Vec::new();
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            for metric in COMPARED_METRICS {
                let a: Vec<f64> = samples[i].1.iter().map(|w| metric_of(w, metric)).collect();
                let b: Vec<f64> = samples[j].1.iter().map(|w| metric_of(w, metric)).collect();
                let (difference, pooled_std_err, verdict, significant) = compare_samples(&a, &b);
                let mean_b = mean(&b);
                rows.push(ComparisonRow {
                    a: methods[i],
                    b: methods[j],
                    metric: metric.to_string(),
                    mean_a: mean(&a),
                    mean_b,
                    difference,
                    relative_percent: if mean_b != 0.0 {
                        100.0 * difference / mean_b.abs()
                    } else {
                        0.0
                    },
                    pooled_std_err,
                    verdict,
                    significant,
                });
            }
        }
    }
    Ok(ComparisonReport {
        methods: methods.to_vec(),
        rows,
        samples,
    })
}
