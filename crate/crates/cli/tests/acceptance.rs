//! Acceptance gate: one test per criterion, one pass/fail line each.
//!
//! Every test prints `ACCEPTANCE <n> PASS <evidence>` when it holds, so
//! `cargo test --test acceptance -- --nocapture` reads as a checklist; the
//! libtest summary line per test is the machine-readable verdict. Failures
//! panic with the measured value so the gap is visible without re-running.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsforge_core::analysis::{
    adf_pvalue, box_pierce, brute_force_cost, pam_cluster, seasonal_strength, spectral_entropy,
};
use tsforge_core::autodiff::{check_gradients, Tape, Tensor};
use tsforge_core::dataset::{input_sizes_for_horizon, TimeSeries};
use tsforge_core::evaluation::{
    build_cd_report, friedman_statistic, mape, per_series_scores, read_records_csv,
    rolling_evaluate, smape,
};
use tsforge_core::forecasters::network::{
    build_network, CnnConfig, EarlyStopPolicy, LstmConfig, NetworkConfig, NetworkSettings,
    TcnConfig,
};
use tsforge_core::forecasters::{fit_classical, ClassicalFamily, Forecaster};
use tsforge_core::transfer::{
    assemble_source_corpus, fine_tune_target, pretrain_global, FineTunePolicy,
};

use tsforge_cli::{execute, load_experiment_config, load_model, persist_model, Goal};

fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| common::gaussian(&mut rng)).collect()
}

/// Default settings per family, with the LSTM narrowed to the smallest grid
/// width so every network stays under the 10^4-parameter probe budget.
fn reduced_width_settings() -> Vec<(&'static str, NetworkSettings)> {
    vec![
        ("cnn", NetworkSettings::Cnn(CnnConfig::default())),
        (
            "lstm",
            NetworkSettings::Lstm(LstmConfig {
                units: 12,
                ..LstmConfig::default()
            }),
        ),
        ("tcn", NetworkSettings::Tcn(TcnConfig::default())),
    ]
}

// Criterion 1: analytic vs central finite-difference gradients for all three
// families at default architecture (reduced width), max relative error below
// 1e-4, under 60 s total.
#[test]
fn c01_gradient_correctness() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for (family, settings) in reduced_width_settings() {
        let config = NetworkConfig::new(12, 6, settings);
        let mut net = build_network(&config, 2024).expect("build network");
        let params = net.params().scalar_count();
        assert!(
            params <= 10_000,
            "ACCEPTANCE 1 FAIL {family} has {params} params, budget is 10000"
        );

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let warm: Vec<f64> = (0..12).map(|_| rng.gen_range(0.2..1.2)).collect();
        let input: Vec<f64> = (0..12).map(|_| rng.gen_range(0.2..1.2)).collect();
        let target: Vec<f64> = (0..6).map(|_| rng.gen_range(0.3..1.0)).collect();

        // Give batch-norm statistics a non-trivial state before probing.
        net.set_training(true);
        let mut tape = Tape::new();
        net.forward_train(&Tensor::from_series(&warm), &mut tape)
            .expect("warm-up pass");
        net.set_training(false);

        let report = check_gradients(&mut net, &Tensor::from_series(&input), &target, 1e-5)
            .expect("gradient check");
        assert!(
            report.max_relative_error < 1e-4,
            "ACCEPTANCE 1 FAIL {family}: max rel err {} at {}",
            report.max_relative_error,
            report.worst_parameter
        );
        worst = worst.max(report.max_relative_error);
        detail.push_str(&format!(
            " {family}={params}p/{}el",
            report.elements_checked
        ));
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "ACCEPTANCE 1 FAIL gradient checks took {elapsed:?}, budget is 60 s"
    );
    println!("ACCEPTANCE 1 PASS gradients: max rel err {worst:.2e},{detail}, {elapsed:?}");
}

// Criterion 2: fine-tuning any family leaves every non-head parameter
// bit-identical to the global model it started from.
#[test]
fn c02_transfer_freezing() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let source: Vec<TimeSeries<f64>> = (0..6)
        .map(|i| TimeSeries {
            id: format!("S{i}"),
            values: common::seasonal_series(72, &mut rng),
            period: 12,
        })
        .collect();
    let target = TimeSeries {
        id: "target".to_string(),
        values: common::seasonal_series(72, &mut rng),
        period: 12,
    };
    let pretrain_policy = EarlyStopPolicy {
        patience: 2,
        restore_best: true,
        max_epochs: 3,
    };
    let tune_policy = FineTunePolicy {
        learning_rate: 5e-6,
        early_stop: EarlyStopPolicy {
            patience: 2,
            restore_best: true,
            max_epochs: 5,
        },
    };

    for (family, settings) in reduced_width_settings() {
        let config = NetworkConfig::new(6, 3, settings);
        let corpus = assemble_source_corpus(&source, 6, 3, 12).expect("assemble corpus");
        let global = pretrain_global(&config, &corpus, &pretrain_policy, 99).expect("pretrain");
        let tuned = fine_tune_target(&global, &target, 12, &tune_policy, 100).expect("fine-tune");

        let before: Vec<_> = global.network.params().iter().collect();
        let after: Vec<_> = tuned.network.params().iter().collect();
        assert_eq!(before.len(), after.len(), "parameter sets diverged");
        for (b, a) in before.iter().zip(after.iter()) {
            assert_eq!(b.name, a.name, "parameter order diverged");
            if b.name == "head.weight" || b.name == "head.bias" {
                continue;
            }
            for (i, (x, y)) in b.data.iter().zip(a.data.iter()).enumerate() {
                assert_eq!(
                    x.to_bits(),
                    y.to_bits(),
                    "ACCEPTANCE 2 FAIL {family}: {}[{i}] moved from {x} to {y}",
                    b.name
                );
            }
        }
    }
    println!("ACCEPTANCE 2 PASS transfer freezing: non-head parameters bit-identical for cnn, lstm, tcn");
}

// Criterion 3: an 18-point test block yields 18, 16, 13, 7 rolling-origin
// instances for horizons 1, 3, 6, 12.
#[test]
fn c03_windowing_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ts = TimeSeries {
        id: "w".to_string(),
        values: common::seasonal_series(96, &mut rng),
        period: 12,
    };
    let model =
        fit_classical(ClassicalFamily::SeasonalNaive, &ts.values[..96 - 18]).expect("fit");
    let mut counts = Vec::new();
    for h in [1usize, 3, 6, 12] {
        let records = rolling_evaluate(&model, &ts, h).expect("rolling evaluation");
        let origins: BTreeSet<usize> = records.iter().map(|r| r.origin).collect();
        assert_eq!(records.len(), origins.len() * h, "steps per origin");
        counts.push(origins.len());
    }
    assert_eq!(
        counts,
        vec![18, 16, 13, 7],
        "ACCEPTANCE 3 FAIL windowing counts {counts:?}"
    );
    println!("ACCEPTANCE 3 PASS windowing: 18/16/13/7 instances at h=1/3/6/12");
}

// Criterion 4: the per-horizon input-size candidate sets.
#[test]
fn c04_input_size_sets() {
    let expected: BTreeMap<usize, Vec<usize>> = BTreeMap::from([
        (1, vec![3, 12]),
        (3, vec![3, 4, 12]),
        (6, vec![6, 8, 12]),
        (12, vec![12, 15]),
    ]);
    for (h, want) in &expected {
        let got = input_sizes_for_horizon(*h).expect("supported horizon");
        assert_eq!(
            &got, want,
            "ACCEPTANCE 4 FAIL input sizes for h={h}: {got:?}"
        );
    }
    println!("ACCEPTANCE 4 PASS input sizes: {{3,12}} {{3,4,12}} {{6,8,12}} {{12,15}}");
}

// Criterion 5: metric oracles and scale invariance.
#[test]
fn c05_metric_oracles() {
    let m = mape(&[100.0], &[110.0]).unwrap();
    assert!(
        (m - 0.10).abs() < 1e-12,
        "ACCEPTANCE 5 FAIL mape([100],[110]) = {m}"
    );
    let s = smape(&[100.0], &[300.0]).unwrap();
    assert!(
        (s - 0.5).abs() < 1e-12,
        "ACCEPTANCE 5 FAIL smape([100],[300]) = {s}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y: Vec<f64> = (0..50).map(|_| rng.gen_range(10.0..200.0)).collect();
    let f: Vec<f64> = (0..50).map(|_| rng.gen_range(10.0..200.0)).collect();
    let (m0, s0) = (mape(&y, &f).unwrap(), smape(&y, &f).unwrap());
    for c in [1e-3, 1.0, 1e6] {
        let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
        let fc: Vec<f64> = f.iter().map(|v| v * c).collect();
        let mc = mape(&yc, &fc).unwrap();
        let sc = smape(&yc, &fc).unwrap();
        assert!(
            (mc - m0).abs() < 1e-12 && (sc - s0).abs() < 1e-12,
            "ACCEPTANCE 5 FAIL scale c={c}: mape drift {}, smape drift {}",
            (mc - m0).abs(),
            (sc - s0).abs()
        );
    }
    println!("ACCEPTANCE 5 PASS metrics: oracles exact, scale-invariant at c=1e-3/1/1e6");
}

// Criterion 6: Friedman/Nemenyi oracles.
#[test]
fn c06_ranking_oracles() {
    // All-tied scores: every rank is the midrank, the statistic is exactly 0.
    let tied = vec![vec![1.0; 4]; 6];
    let r = friedman_statistic(&tied).unwrap();
    assert_eq!(r.statistic, 0.0, "ACCEPTANCE 6 FAIL tied statistic {}", r.statistic);

    // k=3, N=4, strict orders. Rank sums 5, 8, 11; mean ranks 1.25, 2, 2.75;
    // chi^2 = 12*4/(3*4) * ((1.25-2)^2 + 0 + (2.75-2)^2) = 4 * 1.125 = 4.5.
    let fixture = vec![
        vec![0.1, 0.2, 0.3],
        vec![0.1, 0.2, 0.3],
        vec![0.1, 0.3, 0.2],
        vec![0.2, 0.1, 0.3],
    ];
    let r = friedman_statistic(&fixture).unwrap();
    assert!(
        (r.statistic - 4.5).abs() < 1e-9,
        "ACCEPTANCE 6 FAIL fixture statistic {} (want 4.5)",
        r.statistic
    );

    // Nemenyi CD at k=10, N=1000, alpha=.05: 3.164 * sqrt(10*11 / (6*1000)).
    let models: Vec<String> = (0..10).map(|j| format!("m{j}")).collect();
    let matrix: Vec<Vec<f64>> = (0..1000)
        .map(|i| (0..10).map(|j| j as f64 + (i % 7) as f64 * 0.001).collect())
        .collect();
    let report = build_cd_report(&models, &matrix, 0.05, "smape").unwrap();
    let expected = 3.164 * (110.0f64 / 6000.0).sqrt();
    assert!(
        (report.critical_difference - expected).abs() < 1e-6,
        "ACCEPTANCE 6 FAIL CD {} (want {expected})",
        report.critical_difference
    );
    println!(
        "ACCEPTANCE 6 PASS ranking: tied=0, fixture=4.5, CD(k=10,N=1000)={:.6}",
        report.critical_difference
    );
}

// Criterion 7: PAM matches the exhaustive optimum on at least 48 of 50 small
// random instances, in under 10 s.
#[test]
fn c07_pam_optimality() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut optimal = 0usize;
    for instance in 0..50 {
        let n = rng.gen_range(4..=12usize);
        let k = rng.gen_range(2..=3usize);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let pam = pam_cluster(&points, k).expect("pam").total_cost;
        let best = brute_force_cost(&points, k).expect("exhaustive");
        let gap = pam - best;
        if gap.abs() <= 1e-9 * best.max(1.0) {
            optimal += 1;
        } else {
            println!(
                "ACCEPTANCE 7 note: instance {instance} (n={n}, k={k}) gap {gap:.6} over optimum {best:.6}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(
        optimal >= 48,
        "ACCEPTANCE 7 FAIL PAM optimal on {optimal}/50 instances"
    );
    assert!(
        elapsed.as_secs() < 10,
        "ACCEPTANCE 7 FAIL took {elapsed:?}, budget is 10 s"
    );
    println!("ACCEPTANCE 7 PASS pam: optimal on {optimal}/50, {elapsed:?}");
}

// Criterion 8: feature battery over 20 fixed seeds.
#[test]
fn c08_feature_battery() {
    let mut adf_pairs = 0usize;
    for seed in 0..20u64 {
        let h = spectral_entropy(&noise(seed, 400)).unwrap();
        assert!(h > 0.9, "ACCEPTANCE 8 FAIL seed {seed}: noise entropy {h}");

        let phase = seed as f64 * 0.31;
        let sinusoid: Vec<f64> = (0..120)
            .map(|t| (std::f64::consts::TAU * t as f64 / 12.0 + phase).sin())
            .collect();
        let h = spectral_entropy(&sinusoid).unwrap();
        assert!(h < 0.3, "ACCEPTANCE 8 FAIL seed {seed}: sinusoid entropy {h}");

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seasonal: Vec<f64> = (0..120)
            .map(|t| {
                10.0 * (std::f64::consts::TAU * t as f64 / 12.0 + phase).sin()
                    + 0.05 * common::gaussian(&mut rng)
            })
            .collect();
        let strength = seasonal_strength(&seasonal).unwrap();
        assert!(
            strength > 0.99,
            "ACCEPTANCE 8 FAIL seed {seed}: seasonal strength {strength}"
        );

        let steps = noise(seed, 500);
        let mut walk = Vec::with_capacity(500);
        let mut level = 0.0;
        for s in &steps {
            level += s;
            walk.push(level);
        }
        let p_walk = adf_pvalue(&walk).unwrap();
        let p_noise = adf_pvalue(&noise(seed + 1000, 500)).unwrap();
        if p_walk > 0.10 && p_noise < 0.01 {
            adf_pairs += 1;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2000);
        let mut x = 0.0;
        let ar1: Vec<f64> = (0..350)
            .map(|_| {
                x = 0.9 * x + common::gaussian(&mut rng);
                x
            })
            .skip(50)
            .collect();
        let q = box_pierce(&ar1).unwrap();
        assert!(q > 200.0, "ACCEPTANCE 8 FAIL seed {seed}: AR(1) Q {q}");
    }
    assert!(
        adf_pairs >= 18,
        "ACCEPTANCE 8 FAIL ADF pair held in {adf_pairs}/20 trials"
    );
    println!("ACCEPTANCE 8 PASS features: entropy/strength/Q strict, ADF pair {adf_pairs}/20");
}

// Criterion 9: end-to-end smoke on the synthetic corpus — 40 source series,
// 10 targets, TCN with transfer vs from-scratch TCN vs theta vs seasonal
// naive at h=3; all report artifacts; fine-tuned TCN at or below the
// from-scratch TCN per-series sMAPE on at least 6 of 10 targets. The
// directional check is soft by design (re-seed via the config's `seed` to
// probe other draws); budget 10 minutes on one core.
#[test]
fn c09_end_to_end_smoke() {
    let dir = tempfile::tempdir().expect("tempdir");
    let (source, target) = common::mixed_corpus(dir.path(), 9, 40, 10, 72);
    let out = dir.path().join("run");
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        common::config_json(
            &source,
            &target,
            &out,
            &[3],
            &[
                ("tcn", None),
                ("tcn", Some(false)),
                ("theta", None),
                ("seasonal_naive", None),
            ],
            42,
            4,
        ),
    )
    .expect("write config");

    let started = Instant::now();
    let config = load_experiment_config(&config_path).expect("load config");
    let manifest = execute(config, Goal::Run).expect("pipeline run");
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 600,
        "ACCEPTANCE 9 FAIL smoke run took {elapsed:?}, budget is 600 s"
    );

    for rel in [
        "report.md",
        "records.csv",
        "summary.csv",
        "features.csv",
        "assignment.csv",
        "profiles.csv",
        "quality.csv",
        "ranking/h3_mape.json",
        "ranking/h3_smape.json",
        "figures/cd_h3_mape.svg",
        "figures/cd_h3_smape.svg",
    ] {
        assert!(
            manifest.files.contains_key(rel) && out.join(rel).is_file(),
            "ACCEPTANCE 9 FAIL missing artifact {rel}"
        );
    }

    let records = read_records_csv(out.join("records.csv")).expect("read records");
    let scores = per_series_scores(&records).expect("per-series scores");
    let mut tuned: BTreeMap<&str, f64> = BTreeMap::new();
    let mut scratch: BTreeMap<&str, f64> = BTreeMap::new();
    for s in &scores {
        if s.model == "tcn" {
            tuned.insert(&s.series_id, s.smape);
        } else if s.model == "tcn_wot" {
            scratch.insert(&s.series_id, s.smape);
        }
    }
    assert_eq!(tuned.len(), 10, "fine-tuned TCN missing on some targets");
    assert_eq!(scratch.len(), 10, "from-scratch TCN missing on some targets");
    let wins = tuned
        .iter()
        .filter(|(sid, &s)| s <= scratch[**sid])
        .count();
    assert!(
        wins >= 6,
        "ACCEPTANCE 9 FAIL transfer at or below scratch on {wins}/10 targets\ntuned: {tuned:?}\nscratch: {scratch:?}"
    );
    println!(
        "ACCEPTANCE 9 PASS smoke: {} files, transfer <= scratch on {wins}/10 targets, {elapsed:?}",
        manifest.files.len()
    );
}

// Criterion 10: one seed, two runs, identical checksums; and a persisted
// model reproduces its predictions bit-exactly through a save/load cycle on
// 100 random windows.
#[test]
fn c10_determinism_and_persistence() {
    let dir = tempfile::tempdir().expect("tempdir");
    let (source, target) = common::mixed_corpus(dir.path(), 11, 8, 5, 72);
    let models = [("cnn", None), ("theta", None)];
    let mut manifests = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let config_path = dir.path().join(format!("config_{run}.json"));
        std::fs::write(
            &config_path,
            common::config_json(&source, &target, &out, &[1], &models, 7, 2),
        )
        .expect("write config");
        let config = load_experiment_config(&config_path).expect("load config");
        manifests.push(execute(config, Goal::Run).expect("pipeline run"));
    }
    let sums_a = common::dir_checksums(&dir.path().join("a"));
    let sums_b = common::dir_checksums(&dir.path().join("b"));
    assert_eq!(
        sums_a, sums_b,
        "ACCEPTANCE 10 FAIL run directories differ for one seed"
    );
    assert_eq!(manifests[0].files, manifests[1].files);

    // Round-trip one adapted model and compare forecasts bitwise, including
    // against the same artifact from the independent second run.
    let rel = "models/cnn/h1/T000.json";
    let f_a = load_model(dir.path().join("a").join(rel))
        .expect("load artifact")
        .into_forecaster()
        .expect("forecaster payload");
    let artifact = load_model(dir.path().join("a").join(rel)).expect("reload artifact");
    let cycled_path = dir.path().join("cycled.json");
    persist_model(&artifact, &cycled_path).expect("persist");
    let f_cycled = load_model(&cycled_path)
        .expect("load cycled")
        .into_forecaster()
        .expect("forecaster payload");
    let f_b = load_model(dir.path().join("b").join(rel))
        .expect("load twin artifact")
        .into_forecaster()
        .expect("forecaster payload");

    let w = f_a.input_size();
    assert!(w > 0, "adapted model must expose its window");
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for _ in 0..100 {
        let window: Vec<f64> = (0..w).map(|_| rng.gen_range(40.0..160.0)).collect();
        let p = f_a.forecast(&window, 1).expect("forecast");
        let p_cycled = f_cycled.forecast(&window, 1).expect("cycled forecast");
        let p_twin = f_b.forecast(&window, 1).expect("twin forecast");
        for ((x, y), z) in p.iter().zip(&p_cycled).zip(&p_twin) {
            assert_eq!(
                x.to_bits(),
                y.to_bits(),
                "ACCEPTANCE 10 FAIL round-trip drifted: {x} vs {y}"
            );
            assert_eq!(
                x.to_bits(),
                z.to_bits(),
                "ACCEPTANCE 10 FAIL cross-run drift: {x} vs {z}"
            );
        }
    }
    println!("ACCEPTANCE 10 PASS determinism: identical checksums, bit-exact round trip on 100 windows");
}
