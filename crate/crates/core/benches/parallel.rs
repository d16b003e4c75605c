use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pottstree::asr::{estimate_error_channel, root_hit_samples, RootEstimator};
use pottstree::metric::DistortedMetric;
use pottstree::reconstruct::{reconstruct_homogeneous, ReconstructParams};
use pottstree::rng::rng_from_seed;
use pottstree::simulate::{sample_alignment, Sampler};
use pottstree::{potts_rate_matrix, Execution, Phylogeny};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn root_estimation(c: &mut Criterion) {
    let phy = Phylogeny::uniform(8, 0.5).unwrap();
    let model = potts_rate_matrix(64).unwrap();
    let mut g = c.benchmark_group("diluted-root-samples");
    g.sample_size(10);
    for exec in MODES {
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{exec:?}")),
            &exec,
            |b, &exec| {
                b.iter(|| {
                    root_hit_samples(&phy, &model, RootEstimator::Diluted { l: 3 }, 4096, 1, exec)
                        .unwrap()
                })
            },
        );
    }
    g.finish();

    let mut g = c.benchmark_group("error-channel");
    g.sample_size(10);
    for exec in MODES {
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{exec:?}")),
            &exec,
            |b, &exec| b.iter(|| estimate_error_channel(&phy, 16, 2, 4096, 2, exec).unwrap()),
        );
    }
    g.finish();
}

fn distances_and_reconstruction(c: &mut Criterion) {
    let phy = Phylogeny::uniform(7, 0.2).unwrap();
    let model = potts_rate_matrix(2).unwrap();
    let data = sample_alignment(
        &phy,
        &model,
        4000,
        &mut rng_from_seed(3),
        Sampler::Broadcast,
        false,
    )
    .unwrap()
    .leaves;
    let rows: Vec<&[u16]> = (0..data.n_rows()).map(|r| data.row(r)).collect();

    let mut g = c.benchmark_group("distance-matrix");
    for exec in MODES {
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{exec:?}")),
            &exec,
            |b, &exec| {
                b.iter(|| {
                    DistortedMetric::from_sequences(
                        data.labels().to_vec(),
                        &rows,
                        2,
                        1.0,
                        20.0,
                        exec,
                    )
                    .unwrap()
                })
            },
        );
    }
    g.finish();

    let params = ReconstructParams::new(2, 1.1 - 5f64.ln(), 20.0, 0.2).unwrap();
    let mut g = c.benchmark_group("reconstruct-h7");
    g.sample_size(10);
    for exec in MODES {
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{exec:?}")),
            &exec,
            |b, &exec| b.iter(|| reconstruct_homogeneous(&data, &params, 5, exec)),
        );
    }
    g.finish();
}

criterion_group!(benches, root_estimation, distances_and_reconstruction);
criterion_main!(benches);
