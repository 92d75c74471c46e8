//! Acceptance gate: one test per criterion, each printing a PASS line
//! (or SKIPPED for the real-model reproductions when the environment
//! does not provide a backend). Every expected value here is computed by
//! an oracle that is independent of the implementation path it checks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use biasprobe::audit::{
    employment_audit, load_attribute_list, load_gap, neither_gap_analysis, run_gpr_audit,
    train_gpr, AttributeFormat, EmploymentTemplate, Gender, GprModelConfig, NeitherSample,
};
use biasprobe::backend::{MockBackend, MockConfig};
use biasprobe::stats::{default_stopwords, nmf, spearman, PermutationConfig};
use biasprobe::stimuli::{NumberAgreement, TargetWord, Template};
use biasprobe::{
    increased_log_probability, log_prob_bias_score, permutation_pvalue, run_category_test,
    weat_association, weat_test, CachedBackend, EmbeddedWordSet, HttpBackend, StaticVectorBackend,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/stimuli").join(name)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

// ---------------------------------------------------------------------
// criterion 1: permutation oracle equivalence
// ---------------------------------------------------------------------

/// Independent enumerator: bitmask subsets of the pooled indices.
fn brute_force_exact_p(a: &[f64], b: &[f64]) -> (f64, u64) {
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let n = pooled.len();
    let na = a.len();
    let observed = mean(a) - mean(b);
    let mut exceed = 0u64;
    let mut total = 0u64;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let mut ga = Vec::with_capacity(na);
        let mut gb = Vec::with_capacity(n - na);
        for (i, &v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                ga.push(v);
            } else {
                gb.push(v);
            }
        }
        if mean(&ga) - mean(&gb) > observed {
            exceed += 1;
        }
        total += 1;
    }
    (exceed as f64 / total as f64, total)
}

#[test]
fn criterion_01_permutation_oracle_equivalence() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let diff = |a: &[f64], b: &[f64]| mean(a) - mean(b);

    for na in 1..=6usize {
        for nb in 1..=6usize {
            let a: Vec<f64> = (0..na).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (oracle_p, oracle_total) = brute_force_exact_p(&a, &b);
            let out = permutation_pvalue(&a, &b, diff, &PermutationConfig::default()).unwrap();
            assert!(out.exact, "{na}+{nb} should enumerate");
            assert_eq!(out.n_used, oracle_total);
            assert_eq!(out.p_value, oracle_p, "exact mismatch at {na}+{nb}");
        }
    }

    // Monte Carlo agreement at m = 10,000, within three binomial
    // standard errors (plus the (b+1)/(m+1) correction offset).
    let m = 10_000u64;
    for seed in [7u64, 8, 9] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (exact_p, _) = brute_force_exact_p(&a, &b);
        let config = PermutationConfig {
            exact_threshold: 1,
            monte_carlo_samples: m,
            seed,
        };
        let out = permutation_pvalue(&a, &b, diff, &config).unwrap();
        assert!(!out.exact);
        let se = (exact_p * (1.0 - exact_p) / m as f64).sqrt();
        let tolerance = 3.0 * se + 2.0 / (m as f64 + 1.0);
        assert!(
            (out.p_value - exact_p).abs() <= tolerance,
            "seed {seed}: mc {} vs exact {exact_p} (tolerance {tolerance})",
            out.p_value
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!("[criterion 1] PASS - exact p equals brute force for all sizes to 6+6; MC within 3 SE ({elapsed:?})");
}

// ---------------------------------------------------------------------
// criterion 2: log-prob engine correctness
// ---------------------------------------------------------------------

fn mock_two_targets(
    p_he_tgt: f64,
    p_she_tgt: f64,
    p_he_prior: f64,
    p_she_prior: f64,
) -> MockBackend {
    let config: MockConfig = serde_json::from_value(serde_json::json!({
        "vocabulary": ["he", "she", "it", "is", "a", "programmer"],
        "distributions": {
            "[MASK] is a programmer": {
                "0": {"he": p_he_tgt, "she": p_she_tgt, "it": 1.0 - p_he_tgt - p_she_tgt}
            },
            "[MASK] is a [MASK]": {
                "0": {"he": p_he_prior, "she": p_she_prior, "it": 1.0 - p_he_prior - p_she_prior},
                "3": {"programmer": 0.4, "it": 0.6}
            }
        }
    }))
    .unwrap();
    MockBackend::from_config(config).unwrap()
}

#[test]
fn criterion_02_log_prob_engine_correctness() {
    let template = Template::new("t1", "[TARGET] is a [ATTRIBUTE]", NumberAgreement::Singular).unwrap();
    let he = TargetWord::new("he", NumberAgreement::Singular);
    let she = TargetWord::new("she", NumberAgreement::Singular);

    // Hand-computed natural-log ratios.
    let backend = mock_two_targets(0.2, 0.05, 0.1, 0.1);
    let rec = increased_log_probability(&backend, &template, &he, "programmer").unwrap();
    assert!((rec.score - 2.0f64.ln()).abs() < 1e-12);
    let rec = increased_log_probability(&backend, &template, &she, "programmer").unwrap();
    assert!((rec.score - 0.5f64.ln()).abs() < 1e-12);
    let bias = log_prob_bias_score(&backend, &template, &he, &she, "programmer").unwrap();
    assert!((bias - (2.0f64.ln() - 0.5f64.ln())).abs() < 1e-12);

    // Antisymmetry and the zero case over 1,000 randomized tables.
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for round in 0..1000 {
        let p = |rng: &mut ChaCha8Rng| rng.random_range(0.01..0.45);
        let backend = mock_two_targets(p(&mut rng), p(&mut rng), p(&mut rng), p(&mut rng));
        let forward = log_prob_bias_score(&backend, &template, &he, &she, "programmer").unwrap();
        let backward = log_prob_bias_score(&backend, &template, &she, &he, "programmer").unwrap();
        assert_eq!(forward, -backward, "antisymmetry broke in round {round}");
        let zero = log_prob_bias_score(&backend, &template, &he, &he, "programmer").unwrap();
        assert_eq!(zero, 0.0, "zero case broke in round {round}");
    }
    println!("[criterion 2] PASS - ln ratios to 1e-12; antisymmetry and zero case over 1000 random tables");
}

// ---------------------------------------------------------------------
// criterion 3: WEAT oracle equivalence
// ---------------------------------------------------------------------

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn oracle_association(t: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let ma = mean(&a.iter().map(|v| oracle_cosine(t, v)).collect::<Vec<_>>());
    let mb = mean(&b.iter().map(|v| oracle_cosine(t, v)).collect::<Vec<_>>());
    ma - mb
}

/// Full independent computation of S, d, and the exact permutation p.
fn oracle_weat(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    a: &[Vec<f64>],
    b: &[Vec<f64>],
) -> (f64, f64, f64) {
    let sx: Vec<f64> = x.iter().map(|t| oracle_association(t, a, b)).collect();
    let sy: Vec<f64> = y.iter().map(|t| oracle_association(t, a, b)).collect();
    let statistic = mean(&sx) - mean(&sy);
    let pooled: Vec<f64> = sx.iter().chain(sy.iter()).copied().collect();
    let mu = mean(&pooled);
    let std = (pooled.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / pooled.len() as f64).sqrt();
    let effect = statistic / std;
    let (p, _) = brute_force_exact_p(&sx, &sy);
    (statistic, effect, p)
}

fn random_unit_vectors(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let v = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            if v.iter().map(|x| x * x).sum::<f64>().sqrt() > 0.1 {
                break v;
            }
        })
        .collect()
}

#[test]
fn criterion_03_weat_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for n in 2..=4usize {
        for round in 0..20 {
            let x = random_unit_vectors(&mut rng, n);
            let y = random_unit_vectors(&mut rng, n);
            let a = random_unit_vectors(&mut rng, 3);
            let b = random_unit_vectors(&mut rng, 3);
            let (s_oracle, d_oracle, p_oracle) = oracle_weat(&x, &y, &a, &b);

            let to_set = |label: &str, vs: &[Vec<f64>]| {
                EmbeddedWordSet::new(
                    label,
                    vs.iter()
                        .enumerate()
                        .map(|(i, v)| (format!("{label}{i}"), v.clone()))
                        .collect(),
                )
                .unwrap()
            };
            let result = weat_test(
                &to_set("x", &x),
                &to_set("y", &y),
                &to_set("a", &a),
                &to_set("b", &b),
                &PermutationConfig::default(),
                1,
                "toy",
            )
            .unwrap();
            assert!(result.exact);
            assert!(
                (result.statistic - s_oracle).abs() < 1e-9,
                "S mismatch n={n} round={round}"
            );
            assert!(
                (result.effect_size - d_oracle).abs() < 1e-9,
                "d mismatch n={n} round={round}"
            );
            assert!(
                (result.p_value - p_oracle).abs() < 1e-9,
                "p mismatch n={n} round={round}: {} vs {p_oracle}",
                result.p_value
            );

            // Property checks: antisymmetry and scale invariance of s.
            let sa = to_set("a", &a);
            let sb = to_set("b", &b);
            let t = &x[0];
            let s1 = weat_association(t, &sa, &sb).unwrap();
            let s2 = weat_association(t, &sb, &sa).unwrap();
            assert_eq!(s1, -s2);
            let scaled: Vec<f64> = t.iter().map(|v| v * 17.0).collect();
            let s3 = weat_association(&scaled, &sa, &sb).unwrap();
            assert!((s1 - s3).abs() < 1e-12);
        }
    }
    println!("[criterion 3] PASS - S, d, exact p match brute force to 1e-9 on toy sets up to 4+4");
}

// ---------------------------------------------------------------------
// criterion 4: Spearman oracle
// ---------------------------------------------------------------------

/// Counting-based average ranks: 1 + #smaller + (#equal - 1) / 2.
fn oracle_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let smaller = values.iter().filter(|&&o| o < v).count() as f64;
            let equal = values.iter().filter(|&&o| o == v).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn criterion_04_spearman_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(3..60usize);
        // Quantized values so ties actually occur.
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..12) as f64 / 2.0).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..12) as f64 / 2.0).collect();
        let constant = |v: &[f64]| v.iter().all(|&e| e == v[0]);
        if constant(&x) || constant(&y) {
            continue;
        }
        let oracle = oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y));
        if !oracle.is_finite() {
            continue;
        }
        let (rho, _) = spearman(&x, &y).unwrap();
        assert!(
            (rho - oracle).abs() < 1e-12,
            "rho {rho} vs oracle {oracle} (n={n})"
        );

        // Strictly increasing transforms leave rho unchanged.
        let xt: Vec<f64> = x.iter().map(|v| (v * 0.5).exp()).collect();
        let yt: Vec<f64> = y.iter().map(|v| 3.0 * v + 11.0).collect();
        let (rho_t, _) = spearman(&xt, &yt).unwrap();
        assert!((rho - rho_t).abs() < 1e-12);
        checked += 1;
    }
    println!("[criterion 4] PASS - rho matches counting-rank Pearson oracle to 1e-12 on 1000 inputs with ties");
}

// ---------------------------------------------------------------------
// criterion 5: NMF behavior
// ---------------------------------------------------------------------

#[test]
fn criterion_05_nmf_monotonicity_and_recovery() {
    let vocab = |n: usize| (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>();

    for seed in [1u64, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..50).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let out = nmf(&matrix, &vocab(50), 5, 200, 0.0, seed).unwrap();
        assert_eq!(out.error_trace.len(), 200);
        for pair in out.error_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-10,
                "seed {seed}: error rose {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(out.model.w.iter().flatten().all(|&v| v >= 0.0));
        assert!(out.model.h.iter().flatten().all(|&v| v >= 0.0));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let u: Vec<f64> = (0..12).map(|_| rng.random_range(0.1..1.0)).collect();
    let v: Vec<f64> = (0..9).map(|_| rng.random_range(0.1..1.0)).collect();
    let matrix: Vec<Vec<f64>> = u
        .iter()
        .map(|&ui| v.iter().map(|&vj| ui * vj).collect())
        .collect();
    let out = nmf(&matrix, &vocab(9), 1, 2000, 0.0, 4).unwrap();
    let final_error = *out.error_trace.last().unwrap();
    assert!(final_error < 1e-6, "rank-1 error {final_error}");
    println!("[criterion 5] PASS - error monotone over 200 iters (3 seeds); rank-1 recovered to {final_error:.2e}");
}

// ---------------------------------------------------------------------
// criterion 6: GPR pipeline smoke
// ---------------------------------------------------------------------

/// Exhaustive gender-shuffle oracle over all size-preserving splits.
fn oracle_neither_p(samples: &[NeitherSample]) -> f64 {
    let probs: Vec<f64> = samples.iter().map(|s| s.neither_probability).collect();
    let nf = samples.iter().filter(|s| s.gender == Gender::Female).count();
    let female: Vec<f64> = samples
        .iter()
        .filter(|s| s.gender == Gender::Female)
        .map(|s| s.neither_probability)
        .collect();
    let male: Vec<f64> = samples
        .iter()
        .filter(|s| s.gender == Gender::Male)
        .map(|s| s.neither_probability)
        .collect();
    let observed = mean(&female) - mean(&male);
    let n = probs.len();
    let mut exceed = 0u64;
    let mut total = 0u64;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != nf {
            continue;
        }
        let mut f = Vec::new();
        let mut m = Vec::new();
        for (i, &p) in probs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                f.push(p);
            } else {
                m.push(p);
            }
        }
        if mean(&f) - mean(&m) > observed {
            exceed += 1;
        }
        total += 1;
    }
    exceed as f64 / total as f64
}

#[test]
fn criterion_06_gpr_pipeline_smoke() {
    let corpus = load_gap(fixture("gap_small.tsv")).unwrap();
    assert_eq!(corpus.instances.len(), 10);
    assert!(corpus.skipped.is_empty());

    let backend = MockBackend::from_file(fixture("mock_full.json")).unwrap();
    let config = GprModelConfig {
        seed: 11,
        ..GprModelConfig::default()
    };
    let stopwords = default_stopwords();
    let permutation = PermutationConfig {
        exact_threshold: 200_000,
        monte_carlo_samples: 10_000,
        seed: 11,
    };
    let report1 = run_gpr_audit(&backend, &corpus, &config, 3, 5, &permutation, &stopwords).unwrap();
    let report2 = run_gpr_audit(&backend, &corpus, &config, 3, 5, &permutation, &stopwords).unwrap();
    assert_eq!(
        serde_json::to_string(&report1).unwrap(),
        serde_json::to_string(&report2).unwrap(),
        "pipeline must be deterministic under a fixed seed"
    );

    // Valid 3-class simplexes from the trained classifier.
    let features = biasprobe::audit::extract_all_features(&backend, &corpus.instances).unwrap();
    let labels: Vec<usize> = corpus
        .instances
        .iter()
        .map(|i| biasprobe::audit::label_index(i.label()))
        .collect();
    let classifier = train_gpr(&features, &labels, &config).unwrap();
    for row in classifier.predict_proba(&features).unwrap() {
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    // neither_gap_analysis equals the exhaustive shuffle oracle on toys.
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for (nf, nm) in [(1usize, 1usize), (1, 2), (2, 2), (3, 3), (2, 4)] {
        for _ in 0..10 {
            let mut samples = Vec::new();
            for _ in 0..nf {
                samples.push(NeitherSample {
                    gender: Gender::Female,
                    neither_probability: rng.random_range(0.0..1.0),
                    gold_is_neither: rng.random_range(0.0..1.0) < 0.2,
                });
            }
            for _ in 0..nm {
                samples.push(NeitherSample {
                    gender: Gender::Male,
                    neither_probability: rng.random_range(0.0..1.0),
                    gold_is_neither: rng.random_range(0.0..1.0) < 0.2,
                });
            }
            let report = neither_gap_analysis(&samples, &permutation).unwrap();
            assert!(report.exact);
            assert_eq!(report.p_value, oracle_neither_p(&samples), "{nf}+{nm}");

            // Relabeling genders maps one-sided p to its complement
            // (minus the tied splits) when group sizes are equal.
            if nf == nm {
                let flipped: Vec<NeitherSample> = samples
                    .iter()
                    .map(|s| NeitherSample {
                        gender: match s.gender {
                            Gender::Male => Gender::Female,
                            Gender::Female => Gender::Male,
                        },
                        ..*s
                    })
                    .collect();
                let flipped_report = neither_gap_analysis(&flipped, &permutation).unwrap();
                let probs: Vec<f64> =
                    samples.iter().map(|s| s.neither_probability).collect();
                let female: Vec<f64> = samples
                    .iter()
                    .filter(|s| s.gender == Gender::Female)
                    .map(|s| s.neither_probability)
                    .collect();
                let male: Vec<f64> = samples
                    .iter()
                    .filter(|s| s.gender == Gender::Male)
                    .map(|s| s.neither_probability)
                    .collect();
                let observed = mean(&female) - mean(&male);
                let n = probs.len();
                let mut ties = 0u64;
                let mut total = 0u64;
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize != nf {
                        continue;
                    }
                    let mut f = Vec::new();
                    let mut m = Vec::new();
                    for (i, &p) in probs.iter().enumerate() {
                        if mask & (1 << i) != 0 {
                            f.push(p);
                        } else {
                            m.push(p);
                        }
                    }
                    if mean(&f) - mean(&m) == observed {
                        ties += 1;
                    }
                    total += 1;
                }
                let complement =
                    1.0 - report.p_value - ties as f64 / total as f64;
                assert!(
                    (flipped_report.p_value - complement).abs() < 1e-12,
                    "complement property at {nf}+{nm}"
                );
            }
        }
    }
    println!("[criterion 6] PASS - 10-row fixture deterministic end to end; simplexes valid; shuffle oracle matched");
}

// ---------------------------------------------------------------------
// criterion 7: CLI replay and exit codes
// ---------------------------------------------------------------------

#[test]
fn criterion_07_cli_replay_and_exit_codes() {
    let run = |args: &[&str]| {
        std::process::Command::new(env!("CARGO_BIN_EXE_biasprobe"))
            .args(args)
            .env_remove("BIASPROBE_SEED")
            .output()
            .expect("binary runs")
    };
    let mock = format!("mock:{}", fixture("mock_full.json").display());
    let category = shipped("logprob/career_family.json");
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    for out in [&out1, &out2] {
        let result = run(&[
            "probe",
            "--backend",
            &mock,
            "--category",
            category.to_str().unwrap(),
            "--seed",
            "21",
            "--out",
            out.path().to_str().unwrap(),
        ]);
        assert_eq!(result.status.code(), Some(0));
    }
    assert_eq!(
        std::fs::read(out1.path().join("results.json")).unwrap(),
        std::fs::read(out2.path().join("results.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(out1.path().join("summary.csv")).unwrap(),
        std::fs::read(out2.path().join("summary.csv")).unwrap()
    );

    // Documented exit codes: 1 for bad inputs, 2 for unreachable backends.
    let out = tempfile::tempdir().unwrap();
    let bad_input = run(&[
        "probe",
        "--backend",
        &mock,
        "--category",
        "missing.json",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(bad_input.status.code(), Some(1));
    let bad_backend = run(&[
        "probe",
        "--backend",
        "http://127.0.0.1:9",
        "--category",
        category.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(bad_backend.status.code(), Some(2));
    println!("[criterion 7] PASS - byte-identical replay; exit codes 0/1/2 as documented");
}

// ---------------------------------------------------------------------
// criteria 8-10: real-model reproductions (environment dependent)
// ---------------------------------------------------------------------

fn mlm_backend_from_env() -> Option<CachedBackend<HttpBackend>> {
    let url = std::env::var("BIASPROBE_MLM_URL").ok()?;
    match HttpBackend::connect(&url) {
        Ok(b) => Some(CachedBackend::new(b)),
        Err(e) => panic!("BIASPROBE_MLM_URL is set but unreachable: {e}"),
    }
}

#[test]
fn criterion_08_effect_size_reproduction() {
    // Shipped category -> published effect size for the log-prob method.
    let logprob_targets: [(&str, f64); 5] = [
        ("logprob/flowers_insects.json", 0.8744),
        ("logprob/ea_aa.json", 0.8864),
        ("logprob/career_family.json", 1.126),
        ("logprob/math_arts.json", 0.8495),
        ("logprob/science_arts.json", 0.9572),
    ];
    let Some(backend) = mlm_backend_from_env() else {
        println!(
            "[criterion 8] SKIPPED - real masked-LM reproduction; set BIASPROBE_MLM_URL \
             (python/serve_mlm.py) and optionally BIASPROBE_VECTORS for the static baseline"
        );
        return;
    };
    let config = PermutationConfig::default();

    // Regression check against the live adapter: a masked query returns
    // a usable probability.
    {
        let template =
            Template::new("t", "[TARGET] is a [ATTRIBUTE]", NumberAgreement::Singular).unwrap();
        let he = TargetWord::new("he", NumberAgreement::Singular);
        let record = increased_log_probability(&backend, &template, &he, "programmer").unwrap();
        assert!(record.p_target > 0.0 && record.p_target < 1.0);
        assert!(record.p_prior > 0.0 && record.p_prior < 1.0);
    }

    let mut reproduced = BTreeMap::new();
    for (name, expected) in logprob_targets {
        let category = biasprobe::load_category(shipped(name)).unwrap();
        let run = run_category_test(&backend, &category, &config, 42).unwrap();
        let effect = run.result.effect_size;
        assert!(
            (effect - expected).abs() <= 0.10,
            "{name}: effect {effect} vs published {expected} (tolerance 0.10)"
        );
        assert!(
            run.result.p_value < 0.01,
            "{name}: p {} not significant at 0.01",
            run.result.p_value
        );
        reproduced.insert(name, effect);
    }

    if let Ok(vectors) = std::env::var("BIASPROBE_VECTORS") {
        let static_backend = StaticVectorBackend::from_file(&vectors).unwrap();
        let category = biasprobe::load_category(shipped("weat/career_family.json")).unwrap();
        let (x, y, a, b, _) = biasprobe::static_word_sets(&static_backend, &category, 42).unwrap();
        let result = weat_test(&x, &y, &a, &b, &config, 42, &category.name).unwrap();
        assert!(
            (result.effect_size - 1.814).abs() <= 0.10,
            "static career/family effect {} vs 1.814",
            result.effect_size
        );
        println!("[criterion 8] PASS - log-prob effects {reproduced:?}; static career/family {:.4}", result.effect_size);
    } else {
        println!("[criterion 8] PASS (log-prob only) - effects {reproduced:?}; set BIASPROBE_VECTORS for the static baseline");
    }
}

#[test]
fn criterion_09_employment_percentage_reproduction() {
    let Some(backend) = mlm_backend_from_env() else {
        println!(
            "[criterion 9] SKIPPED - real masked-LM reproduction; set BIASPROBE_MLM_URL plus \
             BIASPROBE_SALARY_LIST, BIASPROBE_POS_TRAITS, BIASPROBE_NEG_TRAITS, BIASPROBE_SKILLS_LIST"
        );
        return;
    };
    let datasets: [(&str, f64, EmploymentTemplate); 4] = [
        ("BIASPROBE_SALARY_LIST", 88.5, EmploymentTemplate::Is),
        ("BIASPROBE_POS_TRAITS", 80.0, EmploymentTemplate::Is),
        ("BIASPROBE_NEG_TRAITS", 78.9, EmploymentTemplate::Is),
        ("BIASPROBE_SKILLS_LIST", 84.0, EmploymentTemplate::CanDo),
    ];
    let mut summary = Vec::new();
    for (var, expected, template) in datasets {
        let Ok(path) = std::env::var(var) else {
            println!("[criterion 9] SKIPPED - {var} not set");
            return;
        };
        let attributes = load_attribute_list(&path, &AttributeFormat::Lines).unwrap();
        let report = employment_audit(&backend, &attributes, template).unwrap();
        assert!(
            (report.percentage_male - expected).abs() <= 3.0,
            "{var}: {} vs published {expected} (tolerance 3 points; {} of {} scored)",
            report.percentage_male,
            report.scored_attributes,
            report.total_attributes
        );
        summary.push(format!(
            "{var}={:.1}% (dropped {})",
            report.percentage_male,
            report.dropped.len()
        ));
    }
    println!("[criterion 9] PASS - {}", summary.join(", "));
}

#[test]
fn criterion_10_pronoun_resolution_reproduction() {
    let Some(backend) = mlm_backend_from_env() else {
        println!(
            "[criterion 10] SKIPPED - real masked-LM reproduction; set BIASPROBE_MLM_URL and \
             BIASPROBE_GAP_TSV (training split of the pronoun dataset)"
        );
        return;
    };
    let Ok(gap_path) = std::env::var("BIASPROBE_GAP_TSV") else {
        println!("[criterion 10] SKIPPED - BIASPROBE_GAP_TSV not set");
        return;
    };
    let corpus = load_gap(&gap_path).unwrap();
    // The published training split holds 1,000 pronouns per gender with
    // 103 male and 98 female NEITHER labels.
    if corpus.counts.male == 1000 && corpus.counts.female == 1000 {
        assert_eq!(corpus.counts.neither_male, 103);
        assert_eq!(corpus.counts.neither_female, 98);
    }
    let report = run_gpr_audit(
        &backend,
        &corpus,
        &GprModelConfig::default(),
        20,
        15,
        &PermutationConfig::default(),
        &default_stopwords(),
    )
    .unwrap();
    assert!(
        report.neither.female_mean_predicted > report.neither.male_mean_predicted,
        "female NEITHER mean {} must exceed male {}",
        report.neither.female_mean_predicted,
        report.neither.male_mean_predicted
    );
    assert!(
        report.neither.p_value < 0.05,
        "permutation p {} not below 0.05",
        report.neither.p_value
    );
    let rho = report.topics.spearman_rho.expect("spearman defined");
    assert!(
        (rho - 0.207).abs() <= 0.07,
        "spearman rho {rho} vs published 0.207 (tolerance 0.07)"
    );
    println!(
        "[criterion 10] PASS - female {:.3} > male {:.3}, p {:.4}, rho {:.3}",
        report.neither.female_mean_predicted,
        report.neither.male_mean_predicted,
        report.neither.p_value,
        rho
    );
}
