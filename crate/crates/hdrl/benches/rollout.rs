use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ris_core::{generate_channels, spawn_users, Exec};
use ris_encoder::{ChannelEncoder, EncoderConfig, EncoderParams, InputScaling};
use ris_hdrl::{eval_seeds, evaluate, roll_many, AgentConfig, Dims, EnvConfig, HdrlAgent};

fn setup() -> (EnvConfig, ChannelEncoder) {
    let env = EnvConfig::default();
    let g = &env.geometry;
    let chans: Vec<_> = (0..32u64)
        .map(|s| generate_channels(g, &spawn_users(g, &env.blockage, &env.mobility, s), s).unwrap())
        .collect();
    let cfg = EncoderConfig::toy(g.n_ris_elements + 1, g.n_bs_antennas, 12, 32).unwrap();
    let params = EncoderParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    (env.clone(), ChannelEncoder::new(params, InputScaling::fit(&chans)))
}

fn rollouts(c: &mut Criterion) {
    let (env, enc) = setup();
    let agent_cfg = AgentConfig::default();
    let seeds = eval_seeds(0xE7A1, 20);
    let dims = Dims::new(&env, &enc).unwrap();
    let agent = HdrlAgent::new(dims, &agent_cfg, env.budget, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let traces = roll_many(Exec::Parallel, &env, &enc, &seeds, 1, agent_cfg.macro_len).unwrap();

    let mut group = c.benchmark_group("trace_embedding");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| roll_many(exec, &env, &enc, &seeds, 1, agent_cfg.macro_len).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("greedy_evaluation");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| b.iter(|| evaluate(&agent, exec, &traces).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, rollouts);
criterion_main!(benches);
