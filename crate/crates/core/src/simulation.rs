//! Synthetic power/FDR study.
//!
//! Each replication draws a random support of `n_signals` features, an AR(1)
//! Gaussian design, the cubic response `y = (x·β)³/2 + ε`, and Gaussian
//! knockoffs from the population covariance. Every statistic then sees the
//! identical `(X, X̃, y)`, fits once, and is thresholded at every target FDR.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::knockoff_threshold;
use crate::knockoff::KnockoffModel;
use crate::numerics::{ar1_covariance, cholesky, sample_standard_normal, Mat, RngStream};
use crate::pipeline::{knockoff_statistics, ImportanceSettings, Statistic};

// Sub-stream labels within a replication.
const TRUTH_STREAM: u64 = 1;
const DESIGN_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const KNOCKOFF_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub n_signals: usize,
    pub amplitude: f64,
    pub noise_sd: f64,
    pub fdr_grid: Vec<f64>,
    pub replications: usize,
    pub statistics: Vec<Statistic>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 1000,
            p: 100,
            rho: 0.5,
            n_signals: 10,
            amplitude: 3.5,
            noise_sd: 1.0,
            fdr_grid: (1..=10).map(|i| f64::from(i) * 0.05).collect(),
            replications: 100,
            statistics: Statistic::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::config("p", "must be positive"));
        }
        if self.n < 2 {
            return Err(Error::config("n", "need at least two samples"));
        }
        if self.n_signals > self.p {
            return Err(Error::config("n_signals", "cannot exceed p"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::config("rho", "must lie in [0, 1)"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config("noise_sd", "must be non-negative"));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::config("amplitude", "must be finite"));
        }
        if self.fdr_grid.is_empty() || self.fdr_grid.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::config("fdr_grid", "needs values in (0, 1)"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be positive"));
        }
        if self.statistics.is_empty() {
            return Err(Error::config("statistic", "at least one statistic is required"));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Mat {
        ar1_covariance(self.p, self.rho)
    }
}

/// Rows i.i.d. `N(0, Σ)` with `Σ_jk = ρ^|j−k|`.
pub fn gen_design(cfg: &SimConfig, rng: &mut RngStream) -> Result<Mat> {
    let l = cholesky(&cfg.covariance())?;
    let z = sample_standard_normal(rng, cfg.n, cfg.p);
    z.matmul_t(&l)
}

/// `β` with `amplitude` on the support and zero elsewhere.
pub fn beta_coefficients(p: usize, truth: &[usize], amplitude: f64) -> Vec<f64> {
    let mut beta = vec![0.0; p];
    for &j in truth {
        beta[j] = amplitude;
    }
    beta
}

/// `y_i = (x_i·β)³ / 2 + ε_i` with `ε_i ~ N(0, noise_sd²)`.
pub fn gen_response(x: &Mat, beta: &[f64], noise_sd: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if beta.len() != x.cols() {
        return Err(Error::dims(x.cols(), beta.len()));
    }
    Ok((0..x.rows())
        .map(|r| {
            let eta: f64 = x.row(r).iter().zip(beta).map(|(a, b)| a * b).sum();
            eta.powi(3) / 2.0 + noise_sd * rng.standard_normal()
        })
        .collect())
}

/// Everything a replication feeds to the statistics; independent of which
/// statistic is evaluated.
#[derive(Clone, Debug)]
pub struct ReplicationData {
    pub truth: Vec<usize>,
    pub x: Mat,
    pub x_knockoff: Mat,
    pub y: Vec<f64>,
}

pub fn replication_data(cfg: &SimConfig, knockoffs: &KnockoffModel, rep_index: usize) -> Result<ReplicationData> {
    let root = RngStream::new(cfg.seed, rep_index as u64);
    let truth = root.derive(TRUTH_STREAM).choose_indices(cfg.p, cfg.n_signals);
    let x = gen_design(cfg, &mut root.derive(DESIGN_STREAM))?;
    let beta = beta_coefficients(cfg.p, &truth, cfg.amplitude);
    let y = gen_response(&x, &beta, cfg.noise_sd, &mut root.derive(NOISE_STREAM))?;
    let x_knockoff = knockoffs.sample_knockoffs(&x, &mut root.derive(KNOCKOFF_STREAM))?;
    Ok(ReplicationData {
        truth,
        x,
        x_knockoff,
        y,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub statistic: Statistic,
    pub q: f64,
    pub selected: Vec<usize>,
    pub truth: Vec<usize>,
    pub power: f64,
    pub fdp: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicationFailure {
    pub rep: usize,
    pub statistic: Statistic,
    pub message: String,
}

/// `(power, fdp)`; power is 0 when the truth set is empty.
pub fn power_and_fdp(selected: &[usize], truth: &[usize]) -> (f64, f64) {
    let hits = selected.iter().filter(|j| truth.contains(j)).count();
    let power = if truth.is_empty() {
        0.0
    } else {
        hits as f64 / truth.len() as f64
    };
    let fdp = (selected.len() - hits) as f64 / selected.len().max(1) as f64;
    (power, fdp)
}

#[derive(Clone, Debug, Default)]
pub struct ReplicationOutcome {
    pub results: Vec<ReplicationResult>,
    pub failures: Vec<ReplicationFailure>,
}

/// One replication for every configured statistic, thresholded over the
/// whole FDR grid.
pub fn run_replication(
    cfg: &SimConfig,
    settings: &ImportanceSettings,
    knockoffs: &KnockoffModel,
    rep_index: usize,
) -> ReplicationOutcome {
    let mut outcome = ReplicationOutcome::default();
    let data = match replication_data(cfg, knockoffs, rep_index) {
        Ok(d) => d,
        Err(e) => {
            for &statistic in &cfg.statistics {
                outcome.failures.push(ReplicationFailure {
                    rep: rep_index,
                    statistic,
                    message: e.to_string(),
                });
            }
            return outcome;
        }
    };
    let root = RngStream::new(cfg.seed, rep_index as u64);
    for &statistic in &cfg.statistics {
        let model_rng = root.derive(statistic.stream_label());
        let stats = knockoff_statistics(&data.x, &data.x_knockoff, &data.y, statistic, settings, &model_rng);
        let w = match stats {
            Ok(s) => s.w,
            Err(e) => {
                warn!("replication {rep_index} failed for {statistic}: {e}");
                outcome.failures.push(ReplicationFailure {
                    rep: rep_index,
                    statistic,
                    message: e.to_string(),
                });
                continue;
            }
        };
        for &q in &cfg.fdr_grid {
            let sel = knockoff_threshold(&w, q).expect("fdr grid validated");
            let (power, fdp) = power_and_fdp(&sel.selected, &data.truth);
            outcome.results.push(ReplicationResult {
                rep: rep_index,
                statistic,
                q,
                selected: sel.selected,
                truth: data.truth.clone(),
                power,
                fdp,
                threshold: sel.threshold,
            });
        }
    }
    outcome
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub statistic: Statistic,
    pub q: f64,
    pub mean_power: f64,
    pub se_power: f64,
    pub mean_fdp: f64,
    pub se_fdp: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Fraction of successful replications with an empty selection.
    pub frac_empty: f64,
}

/// Mean and standard error (sample sd / √n; 0 for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups results by `(statistic, q)` in statistic then grid order.
pub fn aggregate(results: &[ReplicationResult], failures: &[ReplicationFailure]) -> Result<Vec<CurvePoint>> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut groups: BTreeMap<(Statistic, u64), Vec<&ReplicationResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.statistic, r.q.to_bits())).or_default().push(r);
    }
    let mut curves: Vec<CurvePoint> = groups
        .into_values()
        .map(|rs| {
            let powers: Vec<f64> = rs.iter().map(|r| r.power).collect();
            let fdps: Vec<f64> = rs.iter().map(|r| r.fdp).collect();
            let (mean_power, se_power) = mean_and_se(&powers);
            let (mean_fdp, se_fdp) = mean_and_se(&fdps);
            let statistic = rs[0].statistic;
            let empty = rs.iter().filter(|r| r.selected.is_empty()).count();
            CurvePoint {
                statistic,
                q: rs[0].q,
                mean_power,
                se_power,
                mean_fdp,
                se_fdp,
                n_ok: rs.len(),
                n_failed: failures.iter().filter(|f| f.statistic == statistic).count(),
                frac_empty: empty as f64 / rs.len() as f64,
            }
        })
        .collect();
    curves.sort_by(|a, b| a.statistic.cmp(&b.statistic).then(a.q.total_cmp(&b.q)));
    Ok(curves)
}

#[derive(Clone, Debug)]
pub struct StudyOutput {
    pub results: Vec<ReplicationResult>,
    pub failures: Vec<ReplicationFailure>,
    pub curves: Vec<CurvePoint>,
}

/// Runs all replications (in parallel on the current rayon pool) and
/// aggregates them. Output order is by replication index regardless of
/// scheduling.
pub fn run_study(cfg: &SimConfig, settings: &ImportanceSettings) -> Result<StudyOutput> {
    cfg.validate()?;
    settings.train.validate()?;
    settings.forest.validate()?;
    let knockoffs = KnockoffModel::fit_second_order(&cfg.covariance())?;
    let outcomes: Vec<ReplicationOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, settings, &knockoffs, rep))
        .collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        results.extend(o.results);
        failures.extend(o.failures);
    }
    let curves = aggregate(&results, &failures)?;
    Ok(StudyOutput {
        results,
        failures,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::covariance;

    fn small_cfg() -> SimConfig {
        SimConfig {
            n: 100_000,
            p: 3,
            ..Default::default()
        }
    }

    #[test]
    fn independent_design_has_no_correlation() {
        let cfg = SimConfig {
            rho: 0.0,
            ..small_cfg()
        };
        let x = gen_design(&cfg, &mut RngStream::new(1, 0)).unwrap();
        let c = covariance(&x);
        let bound = 4.0 / (cfg.n as f64).sqrt();
        for i in 0..3 {
            for j in 0..i {
                let r = c[(i, j)] / (c[(i, i)] * c[(j, j)]).sqrt();
                assert!(r.abs() <= bound, "r = {r}");
            }
        }
    }

    #[test]
    fn ar1_design_lag_two_correlation() {
        let x = gen_design(&small_cfg(), &mut RngStream::new(2, 0)).unwrap();
        let c = covariance(&x);
        let r = c[(0, 2)] / (c[(0, 0)] * c[(2, 2)]).sqrt();
        assert!((r - 0.25).abs() <= 0.02, "r = {r}");
    }

    #[test]
    fn design_is_deterministic() {
        let cfg = SimConfig {
            n: 20,
            p: 5,
            ..Default::default()
        };
        let a = gen_design(&cfg, &mut RngStream::new(3, 1)).unwrap();
        let b = gen_design(&cfg, &mut RngStream::new(3, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn response_examples() {
        let x = Mat::from_rows(&[[1.0, -1.0], [2.0, 0.0]]).unwrap();
        let beta = [1.0, 1.0];
        let y = gen_response(&x, &beta, 0.0, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(y, vec![0.0, 4.0]);

        let n = 10_000;
        let x = Mat::zeros(n, 2);
        let y = gen_response(&x, &[0.0, 0.0], 1.0, &mut RngStream::new(4, 0)).unwrap();
        let (_, sd) = crate::numerics::vector_moments(&y);
        assert!((sd * sd - 1.0).abs() <= 0.05);
    }

    #[test]
    fn power_and_fdp_definitions() {
        let (power, fdp) = power_and_fdp(&[1, 2, 3], &[1, 2]);
        assert_eq!(power, 1.0);
        assert!((fdp - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(power_and_fdp(&[], &[1, 2]), (0.0, 0.0));
        assert_eq!(power_and_fdp(&[4], &[]), (0.0, 1.0));
    }

    fn result(statistic: Statistic, q: f64, power: f64, fdp: f64) -> ReplicationResult {
        ReplicationResult {
            rep: 0,
            statistic,
            q,
            selected: vec![],
            truth: vec![],
            power,
            fdp,
            threshold: f64::INFINITY,
        }
    }

    #[test]
    fn aggregate_examples() {
        let one = aggregate(&[result(Statistic::ArdL2, 0.1, 1.0, 0.0)], &[]).unwrap();
        assert_eq!(one[0].mean_power, 1.0);
        assert_eq!(one[0].mean_fdp, 0.0);
        assert_eq!(one[0].se_power, 0.0);

        let two = aggregate(
            &[result(Statistic::ArdL2, 0.1, 0.4, 0.0), result(Statistic::ArdL2, 0.1, 0.6, 0.0)],
            &[],
        )
        .unwrap();
        assert!((two[0].mean_power - 0.5).abs() < 1e-15);
        assert!((two[0].se_power - 0.1).abs() < 1e-15);
        assert!(matches!(aggregate(&[], &[]), Err(Error::EmptyResults)));
    }

    #[test]
    fn aggregate_matches_two_pass_recomputation() {
        let mut rng = RngStream::new(5, 0);
        let results: Vec<ReplicationResult> = (0..100)
            .map(|i| {
                let st = Statistic::ALL[i % 3];
                result(st, if i % 2 == 0 { 0.1 } else { 0.2 }, rng.uniform(), rng.uniform())
            })
            .collect();
        let curves = aggregate(&results, &[]).unwrap();
        for c in &curves {
            // Welford's online update as an independent second implementation.
            let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
            for r in results.iter().filter(|r| r.statistic == c.statistic && r.q == c.q) {
                count += 1.0;
                let delta = r.power - mean;
                mean += delta / count;
                m2 += delta * (r.power - mean);
            }
            let se = (m2 / (count - 1.0) / count).sqrt();
            assert!((c.mean_power - mean).abs() < 1e-12);
            assert!((c.se_power - se).abs() < 1e-12);
            assert_eq!(c.n_ok as f64, count);
        }
    }

    #[test]
    fn validate_rejects_bad_values() {
        let bad = SimConfig {
            n_signals: 200,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "n_signals"));
        let bad = SimConfig {
            fdr_grid: vec![0.2, 1.0],
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "fdr_grid"));
    }
}
