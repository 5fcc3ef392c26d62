//! Command pipelines behind the `bnn-knockoffs` binary: configuration,
//! CSV ingestion and emission, run manifests.
//!
//! Every output CSV has a header row and a fixed column order; floats are
//! written with 9 significant digits so reruns compare byte-for-byte.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::filter::knockoff_threshold;
use crate::forest::ForestConfig;
use crate::neural::{predict, train_mlp, TrainConfig};
use crate::numerics::{vector_moments, Mat, RngStream, Standardizer};
use crate::pipeline::{empirical_knockoffs, knockoff_statistics, ImportanceSettings, Statistic};
use crate::simulation::{mean_and_se, run_study, SimConfig, StudyOutput};
use crate::stats_tests::test_report;

pub const TOOL_NAME: &str = "bnn-knockoffs";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Target FDR grid used for real data unless configured.
pub const REAL_DATA_FDR_GRID: [f64; 5] = [0.2, 0.25, 0.3, 0.4, 0.5];
pub const MIN_COMPLETE_ROWS: usize = 10;

/// One or several statistics; accepts `"ARD_L2"` or `["ARD_L2", "RF_MDA"]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatisticList {
    One(Statistic),
    Many(Vec<Statistic>),
}

impl StatisticList {
    pub fn to_vec(&self) -> Vec<Statistic> {
        match self {
            StatisticList::One(s) => vec![*s],
            StatisticList::Many(v) => v.clone(),
        }
    }
}

/// Flat configuration file. Keys mirror the simulation and training
/// settings plus the real-data keys; unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_signals: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<StatisticList>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_init: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trees: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_leaf: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features_per_split: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_column: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initialisations: Option<usize>,
}

impl Config {
    /// Parses a config file or a `manifest.json` from an earlier run (whose
    /// resolved `config` is reused as is).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let body = match &value {
            Value::Object(map) if map.get("tool").and_then(Value::as_str) == Some(TOOL_NAME) => map
                .get("config")
                .cloned()
                .ok_or_else(|| Error::config("config", "manifest has no `config` section"))?,
            _ => value,
        };
        serde_json::from_value(body).map_err(|e| {
            let msg = e.to_string();
            let key = backticked(&msg).unwrap_or_else(|| "config".to_string());
            Error::config(key, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            hidden_sizes: self.hidden_sizes.clone().unwrap_or(d.hidden_sizes),
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            outer_iterations: self.outer_iterations.unwrap_or(d.outer_iterations),
            seed: self.seed_or_default(),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            alpha_init: self.alpha_init.unwrap_or(d.alpha_init),
        }
    }

    pub fn forest_config(&self) -> ForestConfig {
        let d = ForestConfig::default();
        ForestConfig {
            n_trees: self.n_trees.unwrap_or(d.n_trees),
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            min_leaf: self.min_leaf.unwrap_or(d.min_leaf),
            features_per_split: self.features_per_split.or(d.features_per_split),
        }
    }

    pub fn importance_settings(&self) -> Result<ImportanceSettings> {
        let settings = ImportanceSettings {
            train: self.train_config(),
            forest: self.forest_config(),
        };
        settings.train.validate()?;
        settings.forest.validate()?;
        Ok(settings)
    }

    fn statistics(&self) -> Vec<Statistic> {
        self.statistic
            .as_ref()
            .map_or_else(|| Statistic::ALL.to_vec(), StatisticList::to_vec)
    }

    fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("output"))
    }

    /// Simulation settings; `p` is the one key without a default.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let d = SimConfig::default();
        let p = self.p.ok_or_else(|| Error::config("p", "missing required key `p`"))?;
        let cfg = SimConfig {
            n: self.n.unwrap_or(d.n),
            p,
            rho: self.rho.unwrap_or(d.rho),
            n_signals: self.n_signals.unwrap_or(d.n_signals.min(p)),
            amplitude: self.amplitude.unwrap_or(d.amplitude),
            noise_sd: self.noise_sd.unwrap_or(d.noise_sd),
            fdr_grid: self.fdr_grid.clone().unwrap_or(d.fdr_grid),
            replications: self.replications.unwrap_or(d.replications),
            statistics: self.statistics(),
            seed: self.seed_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully populated copy for the `simulate` manifest.
    pub fn resolved_for_simulate(&self) -> Result<Config> {
        let sim = self.sim_config()?;
        let mut out = self.resolved_common()?;
        out.n = Some(sim.n);
        out.p = Some(sim.p);
        out.rho = Some(sim.rho);
        out.n_signals = Some(sim.n_signals);
        out.amplitude = Some(sim.amplitude);
        out.noise_sd = Some(sim.noise_sd);
        out.fdr_grid = Some(sim.fdr_grid);
        out.replications = Some(sim.replications);
        Ok(out)
    }

    fn resolved_common(&self) -> Result<Config> {
        let settings = self.importance_settings()?;
        let t = settings.train;
        let f = settings.forest;
        Ok(Config {
            statistic: Some(StatisticList::Many(self.statistics())),
            seed: Some(self.seed_or_default()),
            hidden_sizes: Some(t.hidden_sizes),
            epochs: Some(t.epochs),
            learning_rate: Some(t.learning_rate),
            batch_size: Some(t.batch_size),
            outer_iterations: Some(t.outer_iterations),
            weight_decay: Some(t.weight_decay),
            alpha_init: Some(t.alpha_init),
            n_trees: Some(f.n_trees),
            max_depth: Some(f.max_depth),
            min_leaf: Some(f.min_leaf),
            features_per_split: f.features_per_split,
            output_dir: Some(self.output_dir()),
            ..Config::default()
        })
    }

    pub fn real_data_config(&self, with_split: bool) -> Result<RealDataConfig> {
        let target_column = self
            .target_column
            .clone()
            .ok_or_else(|| Error::config("target_column", "missing required key `target_column`"))?;
        let fdr_grid = self.fdr_grid.clone().unwrap_or_else(|| REAL_DATA_FDR_GRID.to_vec());
        if fdr_grid.is_empty() || fdr_grid.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::config("fdr_grid", "needs values in (0, 1)"));
        }
        let statistics = self.statistics();
        if statistics.is_empty() {
            return Err(Error::config("statistic", "at least one statistic is required"));
        }
        let test_fraction = self.test_fraction.unwrap_or(0.25);
        if with_split && !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::config("test_fraction", "must lie in (0, 1)"));
        }
        let initialisations = self.initialisations.unwrap_or(30);
        if with_split && initialisations == 0 {
            return Err(Error::config("initialisations", "must be positive"));
        }
        Ok(RealDataConfig {
            target_column,
            fdr_grid,
            statistics,
            settings: self.importance_settings()?,
            seed: self.seed_or_default(),
            test_fraction,
            initialisations,
        })
    }

    pub fn resolved_for_real_data(&self, with_split: bool) -> Result<Config> {
        let rd = self.real_data_config(with_split)?;
        let mut out = self.resolved_common()?;
        out.target_column = Some(rd.target_column);
        out.fdr_grid = Some(rd.fdr_grid);
        if with_split {
            out.test_fraction = Some(rd.test_fraction);
            out.initialisations = Some(rd.initialisations);
        }
        Ok(out)
    }
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealDataConfig {
    pub target_column: String,
    pub fdr_grid: Vec<f64>,
    pub statistics: Vec<Statistic>,
    pub settings: ImportanceSettings,
    pub seed: u64,
    pub test_fraction: f64,
    pub initialisations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Mat,
    pub y: Vec<f64>,
    /// Rows dropped because a cell was empty.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Reads a header-first CSV; empty cells mark a row as incomplete.
    pub fn from_csv_reader<R: Read>(reader: R, target_column: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut seen = BTreeSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::Data(format!("duplicate column name `{h}`")));
            }
        }
        let target = headers
            .iter()
            .position(|h| h == target_column)
            .ok_or_else(|| Error::config("target_column", format!("column `{target_column}` not found")))?;
        if headers.len() < 2 {
            return Err(Error::Data("need at least one feature column besides the target".into()));
        }
        let feature_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(_, h)| h.clone())
            .collect();
        let mut data = Vec::new();
        let mut y = Vec::new();
        let mut dropped_rows = 0;
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(feature_names.len());
            let mut target_value = None;
            let mut missing = false;
            for (i, cell) in record.iter().enumerate() {
                if cell.is_empty() {
                    missing = true;
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "non-numeric value `{cell}` in column `{}` on data row {}",
                        headers[i],
                        line + 1
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!("non-finite value in column `{}`", headers[i])));
                }
                if i == target {
                    target_value = Some(v);
                } else {
                    row.push(v);
                }
            }
            if missing {
                dropped_rows += 1;
                continue;
            }
            data.extend(row);
            y.push(target_value.expect("complete row has a target"));
        }
        if y.len() < MIN_COMPLETE_ROWS {
            return Err(Error::TooFewRows {
                rows: y.len(),
                required: MIN_COMPLETE_ROWS,
            });
        }
        let x = Mat::from_vec(y.len(), feature_names.len(), data)?;
        Ok(Dataset {
            feature_names,
            x,
            y,
            dropped_rows,
        })
    }

    pub fn from_csv_path(path: &Path, target_column: &str) -> Result<Self> {
        let file = fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv_reader(file, target_column)
    }
}

/// 9 significant digits, plain notation where it reads naturally.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{exp}")
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    pub seed: u64,
    pub config: Config,
    pub started_at: String,
    pub finished_at: String,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<String>,
}

struct ManifestBuilder {
    command: String,
    data_path: Option<PathBuf>,
    config: Config,
    started_at: String,
    stages: Vec<StageTiming>,
    stage_start: Instant,
}

impl ManifestBuilder {
    fn new(command: &str, data_path: Option<&Path>, config: Config) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            data_path: data_path.map(Path::to_path_buf),
            config,
            started_at: chrono::Utc::now().to_rfc3339(),
            stages: Vec::new(),
            stage_start: Instant::now(),
        }
    }

    fn stage(&mut self, name: &str) {
        self.stages.push(StageTiming {
            name: name.to_string(),
            seconds: self.stage_start.elapsed().as_secs_f64(),
        });
        self.stage_start = Instant::now();
    }

    fn write(self, dir: &Path, outputs: &[&str]) -> Result<()> {
        let manifest = RunManifest {
            tool: TOOL_NAME.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            command: self.command,
            data_path: self.data_path,
            seed: self.config.seed.unwrap_or(0),
            config: self.config,
            started_at: self.started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            stages: self.stages,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

/// Runs the simulation study and writes `replications.csv`, `curves.csv`,
/// `tests.csv`, `failures.csv` and `manifest.json` into the output directory.
pub fn cmd_simulate(config: &Config) -> Result<PathBuf> {
    let resolved = config.resolved_for_simulate()?;
    let sim = resolved.sim_config()?;
    let settings = resolved.importance_settings()?;
    let out_dir = resolved.output_dir();
    let mut manifest = ManifestBuilder::new("simulate", None, resolved);

    let study = run_study(&sim, &settings)?;
    manifest.stage("replications");

    fs::create_dir_all(&out_dir)?;
    write_simulation_outputs(&out_dir, &sim, &study)?;
    manifest.stage("write");
    manifest.write(
        &out_dir,
        &["replications.csv", "curves.csv", "tests.csv", "failures.csv"],
    )?;
    Ok(out_dir)
}

pub fn write_simulation_outputs(dir: &Path, sim: &SimConfig, study: &StudyOutput) -> Result<()> {
    write_csv(
        &dir.join("replications.csv"),
        &["rep", "statistic", "q", "power", "fdp", "n_selected", "threshold"],
        study.results.iter().map(|r| {
            vec![
                r.rep.to_string(),
                r.statistic.to_string(),
                format_float(r.q),
                format_float(r.power),
                format_float(r.fdp),
                r.selected.len().to_string(),
                format_float(r.threshold),
            ]
        }),
    )?;
    write_csv(
        &dir.join("curves.csv"),
        &[
            "statistic", "q", "mean_power", "se_power", "mean_fdp", "se_fdp", "n_ok", "n_failed",
            "frac_empty",
        ],
        study.curves.iter().map(|c| {
            vec![
                c.statistic.to_string(),
                format_float(c.q),
                format_float(c.mean_power),
                format_float(c.se_power),
                format_float(c.mean_fdp),
                format_float(c.se_fdp),
                c.n_ok.to_string(),
                c.n_failed.to_string(),
                format_float(c.frac_empty),
            ]
        }),
    )?;
    write_csv(
        &dir.join("failures.csv"),
        &["rep", "statistic", "message"],
        study
            .failures
            .iter()
            .map(|f| vec![f.rep.to_string(), f.statistic.to_string(), f.message.clone()]),
    )?;

    // Power comparisons across statistics, one block per target FDR.
    let mut rows = Vec::new();
    if sim.statistics.len() >= 2 {
        for &q in &sim.fdr_grid {
            let groups: Vec<Vec<f64>> = sim
                .statistics
                .iter()
                .map(|&st| {
                    study
                        .results
                        .iter()
                        .filter(|r| r.statistic == st && r.q == q)
                        .map(|r| r.power)
                        .collect()
                })
                .collect();
            let Ok(report) = test_report(&groups) else {
                continue;
            };
            rows.push(vec![
                format_float(q),
                "kruskal_wallis".into(),
                "all".into(),
                String::new(),
                format_float(report.h_statistic),
                report.degrees_of_freedom.to_string(),
                format_float(report.p_value),
                String::new(),
            ]);
            for pw in &report.pairwise {
                rows.push(vec![
                    format_float(q),
                    "mann_whitney_bonferroni".into(),
                    sim.statistics[pw.group_a].to_string(),
                    sim.statistics[pw.group_b].to_string(),
                    format_float(pw.u_statistic),
                    String::new(),
                    format_float(pw.raw_p),
                    format_float(pw.adjusted_p),
                ]);
            }
        }
    }
    write_csv(
        &dir.join("tests.csv"),
        &["q", "test", "group_a", "group_b", "statistic", "df", "p_value", "adjusted_p"],
        rows,
    )
}

const KNOCKOFF_STREAM: u64 = 11;
const PREDICTOR_STREAM: u64 = 12;
const SPLIT_STREAM: u64 = 13;

/// Per-feature W statistics and selections for one statistic at one q.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSelection {
    pub statistic: Statistic,
    pub q: f64,
    pub threshold: f64,
    pub z: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub w: Vec<f64>,
    pub selected: Vec<usize>,
}

/// Knockoff filter on a dataset: one knockoff draw, one fit per statistic,
/// thresholded at every q.
pub fn select_features(
    x: &Mat,
    y: &[f64],
    statistics: &[Statistic],
    fdr_grid: &[f64],
    settings: &ImportanceSettings,
    rng: &RngStream,
) -> Result<Vec<FeatureSelection>> {
    let (xs, xk) = empirical_knockoffs(x, &mut rng.derive(KNOCKOFF_STREAM))?;
    let mut out = Vec::new();
    for &statistic in statistics {
        let w = knockoff_statistics(&xs, &xk, y, statistic, settings, &rng.derive(statistic.stream_label()))?;
        for &q in fdr_grid {
            let sel = knockoff_threshold(&w.w, q)?;
            out.push(FeatureSelection {
                statistic,
                q,
                threshold: sel.threshold,
                z: w.z.clone(),
                z_tilde: w.z_tilde.clone(),
                w: w.w.clone(),
                selected: sel.selected,
            });
        }
    }
    Ok(out)
}

/// Runs the knockoff filter on a CSV and writes `selection.csv` and `manifest.json`.
pub fn cmd_filter(data_path: &Path, config: &Config) -> Result<PathBuf> {
    let resolved = config.resolved_for_real_data(false)?;
    let rd = resolved.real_data_config(false)?;
    let out_dir = resolved.output_dir();
    let mut manifest = ManifestBuilder::new("filter", Some(data_path), resolved);
    let data = Dataset::from_csv_path(data_path, &rd.target_column)?;
    if data.dropped_rows > 0 {
        log::warn!("dropped {} row(s) with missing cells", data.dropped_rows);
    }
    manifest.stage("load");
    let selections = select_features(
        &data.x,
        &data.y,
        &rd.statistics,
        &rd.fdr_grid,
        &rd.settings,
        &RngStream::new(rd.seed, 0),
    )?;
    manifest.stage("select");
    fs::create_dir_all(&out_dir)?;
    write_selection_csv(&out_dir.join("selection.csv"), &data.feature_names, &selections)?;
    manifest.stage("write");
    manifest.write(&out_dir, &["selection.csv"])?;
    Ok(out_dir)
}

pub fn write_selection_csv(path: &Path, names: &[String], selections: &[FeatureSelection]) -> Result<()> {
    let mut rows = Vec::new();
    for s in selections {
        for (j, name) in names.iter().enumerate() {
            rows.push(vec![
                s.statistic.to_string(),
                format_float(s.q),
                name.clone(),
                format_float(s.z[j]),
                format_float(s.z_tilde[j]),
                format_float(s.w[j]),
                format_float(s.threshold),
                s.selected.contains(&j).to_string(),
            ]);
        }
    }
    write_csv(
        path,
        &["statistic", "q", "feature", "z", "z_tilde", "w", "threshold", "selected"],
        rows,
    )
}

/// Seeded uniform train/test partition; returns `(train, test)` row indices.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..n).collect();
    RngStream::new(seed, 0).derive(SPLIT_STREAM).shuffle(&mut rows);
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let test = rows[..n_test].to_vec();
    let train = rows[n_test..].to_vec();
    (train, test)
}

/// Train/test split of a dataset with standardization fitted on the training rows.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub x_train: Mat,
    pub y_train: Vec<f64>,
    pub x_test: Mat,
    pub y_test: Vec<f64>,
}

impl SplitData {
    pub fn new(data: &Dataset, test_fraction: f64, seed: u64) -> Self {
        let (train, test) = train_test_split(data.n_rows(), test_fraction, seed);
        SplitData {
            x_train: data.x.select_rows(&train),
            y_train: train.iter().map(|&r| data.y[r]).collect(),
            x_test: data.x.select_rows(&test),
            y_test: test.iter().map(|&r| data.y[r]).collect(),
        }
    }
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    (pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / truth.len() as f64).sqrt()
}

/// Test RMSE of a fresh MLP trained on the given columns of the training
/// split; the train-mean predictor when `columns` is empty.
pub fn selection_rmse(split: &SplitData, columns: &[usize], train: &TrainConfig, rng: &RngStream) -> Result<f64> {
    let (mean, sd) = vector_moments(&split.y_train);
    if columns.is_empty() {
        return Ok(rmse(&vec![mean; split.y_test.len()], &split.y_test));
    }
    let xtr = split.x_train.select_columns(columns);
    let xte = split.x_test.select_columns(columns);
    let scaler = Standardizer::fit(&xtr);
    let ys: Vec<f64> = split.y_train.iter().map(|v| (v - mean) / sd).collect();
    let params = train_mlp(&scaler.transform(&xtr)?, &ys, train, &mut rng.clone())?;
    let pred: Vec<f64> = predict(&params, &scaler.transform(&xte)?)?
        .into_iter()
        .map(|v| v * sd + mean)
        .collect();
    Ok(rmse(&pred, &split.y_test))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationRun {
    pub init: usize,
    pub statistic: Statistic,
    pub q: f64,
    pub selected: Vec<usize>,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationSummary {
    pub statistic: Statistic,
    pub q: f64,
    pub mean_rmse: f64,
    pub se_rmse: f64,
    pub mean_n_selected: f64,
    pub n_empty: usize,
    pub initialisations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRun {
    pub init: usize,
    pub rmse_all_features: f64,
    pub rmse_train_mean: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub runs: Vec<EvaluationRun>,
    pub summary: Vec<EvaluationSummary>,
    pub baseline: Vec<BaselineRun>,
}

/// Stream used by initialisation `init` of [`evaluate_dataset`].
pub fn initialisation_stream(seed: u64, init: usize) -> RngStream {
    RngStream::new(seed, 1 + init as u64)
}

/// The stream that trains the predictive MLP in initialisation `init`.
pub fn predictor_stream(seed: u64, init: usize) -> RngStream {
    initialisation_stream(seed, init).derive(PREDICTOR_STREAM)
}

/// Selection-then-predict protocol: per initialisation, knockoffs and
/// importance models are refitted on the training split and a fresh MLP is
/// trained on each selected feature set. The split itself is fixed by the seed.
pub fn evaluate_dataset(data: &Dataset, rd: &RealDataConfig) -> Result<Evaluation> {
    let split = SplitData::new(data, rd.test_fraction, rd.seed);
    let p = data.x.cols();
    let all: Vec<usize> = (0..p).collect();
    let mut runs = Vec::new();
    let mut baseline = Vec::new();
    for init in 0..rd.initialisations {
        let root = initialisation_stream(rd.seed, init);
        let predictor_rng = predictor_stream(rd.seed, init);
        let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut score = |cols: &[usize]| -> Result<f64> {
            if let Some(v) = cache.get(cols) {
                return Ok(*v);
            }
            let v = selection_rmse(&split, cols, &rd.settings.train, &predictor_rng)?;
            cache.insert(cols.to_vec(), v);
            Ok(v)
        };
        baseline.push(BaselineRun {
            init,
            rmse_all_features: score(&all)?,
            rmse_train_mean: score(&[])?,
        });
        let selections = select_features(
            &split.x_train,
            &split.y_train,
            &rd.statistics,
            &rd.fdr_grid,
            &rd.settings,
            &root,
        )?;
        for s in selections {
            let rmse = score(&s.selected)?;
            runs.push(EvaluationRun {
                init,
                statistic: s.statistic,
                q: s.q,
                selected: s.selected,
                rmse,
            });
        }
    }
    let mut summary = Vec::new();
    for &statistic in &rd.statistics {
        for &q in &rd.fdr_grid {
            let group: Vec<&EvaluationRun> = runs
                .iter()
                .filter(|r| r.statistic == statistic && r.q == q)
                .collect();
            let rmses: Vec<f64> = group.iter().map(|r| r.rmse).collect();
            let (mean_rmse, se_rmse) = mean_and_se(&rmses);
            summary.push(EvaluationSummary {
                statistic,
                q,
                mean_rmse,
                se_rmse,
                mean_n_selected: group.iter().map(|r| r.selected.len() as f64).sum::<f64>()
                    / group.len() as f64,
                n_empty: group.iter().filter(|r| r.selected.is_empty()).count(),
                initialisations: group.len(),
            });
        }
    }
    Ok(Evaluation {
        runs,
        summary,
        baseline,
    })
}

/// Writes `rmse.csv`, `rmse_runs.csv`, `baseline.csv` and `manifest.json`.
pub fn cmd_evaluate(data_path: &Path, config: &Config) -> Result<PathBuf> {
    let resolved = config.resolved_for_real_data(true)?;
    let rd = resolved.real_data_config(true)?;
    let out_dir = resolved.output_dir();
    let mut manifest = ManifestBuilder::new("evaluate", Some(data_path), resolved);
    let data = Dataset::from_csv_path(data_path, &rd.target_column)?;
    if data.dropped_rows > 0 {
        log::warn!("dropped {} row(s) with missing cells", data.dropped_rows);
    }
    manifest.stage("load");
    let eval = evaluate_dataset(&data, &rd)?;
    manifest.stage("evaluate");
    fs::create_dir_all(&out_dir)?;
    write_evaluation_outputs(&out_dir, &data.feature_names, &eval)?;
    manifest.stage("write");
    manifest.write(&out_dir, &["rmse.csv", "rmse_runs.csv", "baseline.csv"])?;
    Ok(out_dir)
}

pub fn write_evaluation_outputs(dir: &Path, names: &[String], eval: &Evaluation) -> Result<()> {
    write_csv(
        &dir.join("rmse.csv"),
        &[
            "statistic", "q", "mean_rmse", "se_rmse", "mean_n_selected", "n_empty", "initialisations",
        ],
        eval.summary.iter().map(|s| {
            vec![
                s.statistic.to_string(),
                format_float(s.q),
                format_float(s.mean_rmse),
                format_float(s.se_rmse),
                format_float(s.mean_n_selected),
                s.n_empty.to_string(),
                s.initialisations.to_string(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("rmse_runs.csv"),
        &["init", "statistic", "q", "n_selected", "selected", "rmse", "empty_selection"],
        eval.runs.iter().map(|r| {
            let selected: Vec<&str> = r.selected.iter().map(|&j| names[j].as_str()).collect();
            vec![
                r.init.to_string(),
                r.statistic.to_string(),
                format_float(r.q),
                r.selected.len().to_string(),
                selected.join(";"),
                format_float(r.rmse),
                r.selected.is_empty().to_string(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("baseline.csv"),
        &["init", "rmse_all_features", "rmse_train_mean"],
        eval.baseline.iter().map(|b| {
            vec![
                b.init.to_string(),
                format_float(b.rmse_all_features),
                format_float(b.rmse_train_mean),
            ]
        }),
    )
}
