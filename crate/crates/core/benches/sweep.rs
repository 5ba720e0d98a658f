use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ris_core::channel::{generate_channels, spawn_users, BlockageModel, GeometryConfig, MobilityModel};
use ris_core::par::{self, Exec};
use ris_core::{beam_sweep_with, dft_bs_codebook, ris_phase_codebook, LinkBudget};

fn sweep(c: &mut Criterion) {
    let geo = GeometryConfig::default();
    let users = spawn_users(&geo, &BlockageModel::default(), &MobilityModel::default(), 1);
    let real = generate_channels(&geo, &users, 1).unwrap();
    let budget = LinkBudget { p_max: 1.0, sigma2: 1e-5, r_min: 2.0 };
    let mut group = c.benchmark_group("beam_sweep");
    for size in [8usize, 32] {
        let bs = dft_bs_codebook(geo.n_bs_antennas, size);
        let ris = ris_phase_codebook(geo.n_ris_elements, size);
        for exec in [Exec::Sequential, Exec::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), size), &size, |b, _| {
                b.iter(|| beam_sweep_with(exec, &real, &bs, &ris, &budget).unwrap())
            });
        }
    }
    group.finish();
}

fn monte_carlo_channels(c: &mut Criterion) {
    let geo = GeometryConfig::default();
    let mut group = c.benchmark_group("channel_monte_carlo");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| {
                par::map_indexed(exec, 256, |s| {
                    let s = s as u64;
                    let users = spawn_users(&geo, &BlockageModel::default(), &MobilityModel::default(), s);
                    let r = generate_channels(&geo, &users, s).unwrap();
                    r.h_d.iter().map(|z| z.norm_sqr()).sum::<f64>()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, monte_carlo_channels);
criterion_main!(benches);
