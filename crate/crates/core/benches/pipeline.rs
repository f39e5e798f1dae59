use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qpplab::effectiveness::{evaluate_run_with, Gain, Metric};
use qpplab::outliers::{trc_detect_with, DetectionMethod, DetectorOptions};
use qpplab::predictors::{build_feature_matrix_with, PredictorConfig, PredictorInputs, PredictorKind, PredictorSpec};
use qpplab::synthetic::{planted_outlier_scenario, Xoshiro256PlusPlus};
use qpplab::trec_io::{QrelsSet, RunSet};
use qpplab::Execution;

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn synthetic_run(queries: usize, depth: usize) -> (RunSet, QrelsSet) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    let mut triples = Vec::with_capacity(queries * depth);
    let mut qrels = QrelsSet::new();
    for q in 0..queries {
        for d in 0..depth {
            let (qid, did) = (format!("q{q}"), format!("d{d}"));
            if rng.next_f64() < 0.05 {
                qrels.insert(&qid, &did, 1).unwrap();
            }
            triples.push((qid, did, 10.0 + rng.next_normal()));
        }
    }
    (RunSet::from_scores("bench", triples).unwrap(), qrels)
}

fn bench_evaluate(c: &mut Criterion) {
    let (run, qrels) = synthetic_run(200, 1000);
    let mut g = c.benchmark_group("evaluate_run");
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| {
            b.iter(|| evaluate_run_with(exec, black_box(&run), &qrels, Metric::Ap, 1000, Gain::Linear).unwrap())
        });
    }
    g.finish();
}

fn bench_predictors(c: &mut Criterion) {
    let (run, _) = synthetic_run(200, 1000);
    let specs = [
        PredictorSpec::new("nqc", PredictorKind::Nqc { k: None }),
        PredictorSpec::new("uqc", PredictorKind::Uqc { k: None }),
    ];
    let inputs = PredictorInputs::new(&run);
    let config = PredictorConfig::default();
    let mut g = c.benchmark_group("build_feature_matrix");
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| {
            b.iter(|| build_feature_matrix_with(exec, &config, black_box(&inputs), &specs).unwrap())
        });
    }
    g.finish();
}

fn bench_trc(c: &mut Criterion) {
    let mut g = c.benchmark_group("trc_detect");
    for n in [100, 2000] {
        let sc = planted_outlier_scenario(n, 8, 0.1, 6.0, 1).unwrap();
        for (name, exec) in STRATEGIES {
            let opts = DetectorOptions {
                exec,
                ..DetectorOptions::new(DetectionMethod::Trc, 0.95)
            };
            g.bench_with_input(BenchmarkId::new(name, n), &sc.matrix, |b, m| {
                b.iter(|| trc_detect_with(black_box(m), &opts).unwrap())
            });
        }
    }
    g.finish();
}

fn bench_seed_sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("seed_sweep_recall");
    g.sample_size(20);
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| {
            b.iter(|| {
                let recalls = exec.map_range(64, |seed| {
                    let sc = planted_outlier_scenario(100, 4, 0.1, 6.0, seed as u64).unwrap();
                    let opts = DetectorOptions {
                        exec: Execution::Sequential,
                        ..DetectorOptions::new(DetectionMethod::Trc, 0.95)
                    };
                    let r = trc_detect_with(&sc.matrix, &opts).unwrap();
                    r.flags.iter().zip(&sc.truth_flags).filter(|(a, b)| **a && **b).count()
                });
                black_box(recalls)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_evaluate, bench_predictors, bench_trc, bench_seed_sweep);
criterion_main!(benches);
