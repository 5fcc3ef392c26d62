use bnn_knockoffs::forest::{fit_forest, oob_mda_importance, ForestConfig};
use bnn_knockoffs::knockoff::KnockoffModel;
use bnn_knockoffs::numerics::{sample_standard_normal, vector_moments, RngStream};
use bnn_knockoffs::pipeline::{ImportanceSettings, Statistic};
use bnn_knockoffs::simulation::{replication_data, run_replication, SimConfig};
use bnn_knockoffs::TrainConfig;

fn small_sim(statistics: Vec<Statistic>) -> SimConfig {
    SimConfig {
        n: 150,
        p: 8,
        n_signals: 3,
        replications: 2,
        fdr_grid: vec![0.2, 0.5],
        statistics,
        seed: 9,
        ..SimConfig::default()
    }
}

fn small_settings() -> ImportanceSettings {
    ImportanceSettings {
        train: TrainConfig {
            hidden_sizes: vec![6],
            epochs: 15,
            outer_iterations: 2,
            ..TrainConfig::default()
        },
        forest: ForestConfig {
            n_trees: 20,
            ..ForestConfig::default()
        },
    }
}

#[test]
fn replication_data_is_shared_across_statistics() {
    let a = small_sim(vec![Statistic::ArdL2]);
    let b = small_sim(vec![Statistic::RfMda, Statistic::MlpL2]);
    let ko = KnockoffModel::fit_second_order(&a.covariance()).unwrap();
    for rep in 0..2 {
        let da = replication_data(&a, &ko, rep).unwrap();
        let db = replication_data(&b, &ko, rep).unwrap();
        assert_eq!(da.truth, db.truth);
        assert_eq!(da.x, db.x);
        assert_eq!(da.x_knockoff, db.x_knockoff);
        assert_eq!(da.y, db.y);
    }
}

#[test]
fn statistic_results_do_not_depend_on_the_statistic_list() {
    let settings = small_settings();
    let alone = small_sim(vec![Statistic::MlpL2]);
    let all = small_sim(Statistic::ALL.to_vec());
    let ko = KnockoffModel::fit_second_order(&alone.covariance()).unwrap();
    let a = run_replication(&alone, &settings, &ko, 1);
    let b = run_replication(&all, &settings, &ko, 1);
    let b_mlp: Vec<_> = b.results.into_iter().filter(|r| r.statistic == Statistic::MlpL2).collect();
    assert_eq!(a.results, b_mlp);
}

fn oob_rmse(forest: &bnn_knockoffs::forest::ForestModel, x: &bnn_knockoffs::Mat, y: &[f64]) -> f64 {
    let (sq, count) = forest
        .oob_predictions(x)
        .iter()
        .zip(y)
        .filter_map(|(p, t)| p.map(|p| (p - t).powi(2)))
        .fold((0.0, 0), |(s, c), v| (s + v, c + 1));
    (sq / count as f64).sqrt()
}

#[test]
fn forest_recovers_a_step_function() {
    let mut rng = RngStream::new(1, 0);
    let x = sample_standard_normal(&mut rng, 1000, 3);
    let y: Vec<f64> = (0..1000).map(|r| if x[(r, 0)] > 0.0 { 2.0 } else { -2.0 }).collect();
    let cfg = ForestConfig {
        n_trees: 100,
        ..ForestConfig::default()
    };
    let forest = fit_forest(&x, &y, &cfg, &RngStream::new(2, 0)).unwrap();
    let rmse = oob_rmse(&forest, &x, &y);
    let (_, sd) = vector_moments(&y);
    assert!(rmse <= 0.1 * sd, "oob rmse {rmse}, sd {sd}");
}

#[test]
fn sole_signal_dominates_mda() {
    let mut rng = RngStream::new(4, 0);
    let x = sample_standard_normal(&mut rng, 500, 4);
    let y: Vec<f64> = (0..500).map(|r| 3.0 * x[(r, 0)] + rng.standard_normal()).collect();
    let cfg = ForestConfig {
        n_trees: 100,
        ..ForestConfig::default()
    };
    let forest = fit_forest(&x, &y, &cfg, &RngStream::new(5, 0)).unwrap();
    let mda = oob_mda_importance(&forest, &x, &y, &RngStream::new(6, 0)).unwrap();
    let null = mda[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(mda[0] > 10.0 * null, "{mda:?}");
}

#[test]
fn null_feature_mda_is_centred_on_zero() {
    let cfg = ForestConfig {
        n_trees: 50,
        ..ForestConfig::default()
    };
    let values: Vec<f64> = (0..20u64)
        .map(|seed| {
            let mut rng = RngStream::new(seed, 7);
            let x = sample_standard_normal(&mut rng, 200, 3);
            let y: Vec<f64> = (0..200).map(|r| 2.0 * x[(r, 0)] + rng.standard_normal()).collect();
            let forest = fit_forest(&x, &y, &cfg, &rng.derive(1)).unwrap();
            oob_mda_importance(&forest, &x, &y, &rng.derive(2)).unwrap()[2]
        })
        .collect();
    let (mean, sd) = vector_moments(&values);
    let se = sd / (values.len() as f64).sqrt();
    assert!(mean.abs() <= 2.0 * se, "mean {mean}, se {se}");
}

#[test]
fn ard_power_exceeds_half_in_most_replications() {
    let cfg = SimConfig {
        n: 500,
        p: 50,
        amplitude: 3.5,
        replications: 20,
        fdr_grid: vec![0.3],
        statistics: vec![Statistic::ArdL2],
        seed: 31,
        ..SimConfig::default()
    };
    let settings = ImportanceSettings {
        train: TrainConfig {
            hidden_sizes: vec![20],
            epochs: 100,
            ..TrainConfig::default()
        },
        ..ImportanceSettings::default()
    };
    let study = bnn_knockoffs::simulation::run_study(&cfg, &settings).unwrap();
    let strong = study.results.iter().filter(|r| r.power > 0.5).count();
    assert!(strong > 10, "{strong}/20 replications with power above 0.5");
}
