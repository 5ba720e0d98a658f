use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ris_core::{
    dft_bs_codebook, effective_channel, ris_phase_codebook, spawn_users, BlockageModel, ChannelProcess,
    GeometryConfig, LinkBudget, MobilityModel, PhaseConfig, C64,
};
use ris_encoder::model::{cls_rows, patch_rows};
use ris_encoder::*;
use ris_learn::{check_gradients, sample_indices, AdamConfig, Checkpoint};

fn tiny_config() -> EncoderConfig {
    // 2×2 complex input, 4 patches of length 2
    EncoderConfig { n_patches: 4, patch_len: 2, d_model: 8, n_layers: 2, n_heads: 2, d_ff: 16, d_e: 3 }
}

fn random_seq(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> PatchSequence {
    PatchSequence::new(Array2::from_shape_fn((cfg.n_patches, cfg.patch_len), |_| rng.random_range(-1.0..1.0)))
}

fn random_params(cfg: EncoderConfig, seed: u64) -> EncoderParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = EncoderParams::init(cfg, &mut rng).unwrap();
    // move layer-norm gains and biases off their trivial values so every path is exercised
    for l in p.layers.iter_mut() {
        for v in [&mut l.ln1_gain, &mut l.ln2_gain, &mut l.b_q, &mut l.b_v, &mut l.b_ff1] {
            v.mapv_inplace(|x| x + rng.random_range(-0.3..0.3));
        }
    }
    p.positional_encoding.mapv_inplace(|x| x + rng.random_range(-0.1..0.1));
    p
}

fn toy_channels(seed: u64, count: usize) -> Vec<ris_core::ChannelRealization> {
    let geo = GeometryConfig::default();
    let mut users = spawn_users(&geo, &BlockageModel::default(), &MobilityModel::default(), seed);
    let mut proc = ChannelProcess::new(&geo, seed).unwrap();
    (0..count)
        .map(|i| {
            proc.advance_fading(0.5);
            if i % 7 == 0 {
                users = spawn_users(&geo, &BlockageModel::default(), &MobilityModel::default(), seed + i as u64);
            }
            proc.realize(&users).unwrap()
        })
        .collect()
}

#[test]
fn zero_patches_give_expected_shapes() {
    let cfg = EncoderConfig::toy(9, 8, 12, 32).unwrap();
    assert_eq!(cfg.patch_len, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut p = EncoderParams::init(cfg, &mut rng).unwrap();
    p.patch_projection.fill(0.0);
    let seq = PatchSequence::new(Array2::zeros((12, 12)));
    let (cls, patches) = encode(&seq, &p).unwrap();
    assert_eq!(cls.len(), 128);
    assert_eq!(patches.dim(), (12, 128));
    assert!(cls.iter().all(|x| x.is_finite()));
}

#[test]
fn wrong_patch_shape_is_rejected() {
    let cfg = tiny_config();
    let p = random_params(cfg, 1);
    let seq = PatchSequence::new(Array2::zeros((3, 2)));
    assert!(matches!(encode(&seq, &p), Err(EncoderError::Dimension { .. })));
    let bad = EncoderConfig { n_heads: 3, ..cfg };
    assert!(bad.validate().is_err());
}

#[test]
fn swapping_patches_changes_the_output() {
    let cfg = tiny_config();
    let p = random_params(cfg, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let seq = random_seq(&cfg, &mut rng);
    let mut swapped = seq.clone();
    for c in 0..cfg.patch_len {
        swapped.patches.swap([0, c], [2, c]);
    }
    let (a, _) = encode(&seq, &p).unwrap();
    let (b, _) = encode(&swapped, &p).unwrap();
    assert!((&a - &b).iter().map(|x| x.abs()).sum::<f64>() > 1e-6);
}

#[test]
fn attention_rows_are_stochastic() {
    let cfg = EncoderConfig::toy(9, 8, 12, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = EncoderParams::init(cfg, &mut rng).unwrap();
    let batch: Vec<PatchSequence> = (0..3).map(|_| random_seq(&cfg, &mut rng)).collect();
    let (_, cache) = forward(&p, &batch).unwrap();
    for b in 0..3 {
        for l in 0..cfg.n_layers {
            for h in 0..cfg.n_heads {
                let a = cache.attention(b, l, h);
                assert_eq!(a.dim(), (13, 13));
                for row in a.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-6);
                    assert!(row.iter().all(|&x| x >= 0.0));
                }
            }
        }
    }
}

#[test]
fn batched_forward_matches_single_sequences() {
    let cfg = tiny_config();
    let p = random_params(cfg, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch: Vec<PatchSequence> = (0..4).map(|_| random_seq(&cfg, &mut rng)).collect();
    let (z, _) = forward(&p, &batch).unwrap();
    let cls = cls_rows(&z, &cfg);
    for (i, s) in batch.iter().enumerate() {
        let (c, _) = encode(s, &p).unwrap();
        for j in 0..cfg.d_model {
            assert!((cls[[i, j]] - c[j]).abs() < 1e-12);
        }
    }
}

/// Masked reconstruction plus a CLS-projection term, so every tensor carries gradient.
fn combined_loss(p: &EncoderParams, batch: &[PatchSequence], targets: &Array2<f64>) -> f64 {
    let cfg = p.config;
    let (z, _) = forward(p, batch).unwrap();
    let recon = patch_rows(&z, &cfg).dot(&p.recon_weight) + &p.recon_bias;
    let mut loss = 0.0;
    for (b, s) in batch.iter().enumerate() {
        for j in 0..cfg.n_patches {
            if s.mask[j] {
                let d = &recon.row(b * cfg.n_patches + j) - &s.patches.row(j);
                loss += d.dot(&d);
            }
        }
    }
    let e = cls_rows(&z, &cfg).dot(&p.output_projection) - targets;
    loss + e.iter().map(|x| x * x).sum::<f64>()
}

fn combined_grads(p: &EncoderParams, batch: &[PatchSequence], targets: &Array2<f64>) -> Vec<f64> {
    let cfg = p.config;
    let t = cfg.seq_len();
    let (z, cache) = forward(p, batch).unwrap();
    let mut g = EncoderParams::zeros(cfg);
    let pr = patch_rows(&z, &cfg);
    let recon = pr.dot(&p.recon_weight) + &p.recon_bias;
    let mut drecon = Array2::zeros(recon.raw_dim());
    for (b, s) in batch.iter().enumerate() {
        for j in 0..cfg.n_patches {
            if s.mask[j] {
                let r = b * cfg.n_patches + j;
                drecon.row_mut(r).assign(&((&recon.row(r) - &s.patches.row(j)) * 2.0));
            }
        }
    }
    g.recon_weight = pr.t().dot(&drecon);
    g.recon_bias = drecon.sum_axis(ndarray::Axis(0));
    let dpr = drecon.dot(&p.recon_weight.t());
    let cls = cls_rows(&z, &cfg);
    let de = (cls.dot(&p.output_projection) - targets) * 2.0;
    g.output_projection = cls.t().dot(&de);
    let dcls = de.dot(&p.output_projection.t());
    let mut dz = Array2::zeros(z.raw_dim());
    for b in 0..batch.len() {
        dz.row_mut(b * t).assign(&dcls.row(b));
        for j in 0..cfg.n_patches {
            dz.row_mut(b * t + 1 + j).assign(&dpr.row(b * cfg.n_patches + j));
        }
    }
    backward(p, &cache, &dz, &mut g);
    g.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let cfg = tiny_config();
    let mut p = random_params(cfg, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch: Vec<PatchSequence> = (0..2)
        .map(|i| random_seq(&cfg, &mut rng).with_mask(vec![i == 0, true, false, i == 1]))
        .collect();
    let targets = Array2::from_shape_fn((2, cfg.d_e), |_| rng.random_range(-1.0..1.0));
    let analytic = combined_grads(&p, &batch, &targets);
    assert_eq!(analytic.len(), p.num_params());
    let idx = sample_indices(p.num_params(), 200, &mut rng);
    let report = check_gradients(&mut p, |q| combined_loss(q, &batch, &targets), &analytic, &idx, 1e-5);
    assert_eq!(report.checked, 200);
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn library_masked_loss_gradients_match_finite_differences() {
    let cfg = tiny_config();
    let mut p = random_params(cfg, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let batch: Vec<PatchSequence> =
        (0..3).map(|_| random_seq(&cfg, &mut rng).with_mask(draw_mask(4, 0.4, &mut rng))).collect();
    let (_, g) = masked_loss_and_grads(&p, &batch).unwrap();
    let analytic: Vec<f64> = g.tensors().iter().flat_map(|t| t.data.iter().copied()).collect();
    let idx = sample_indices(p.num_params(), 200, &mut rng);
    let report =
        check_gradients(&mut p, |q| masked_loss_and_grads(q, &batch).unwrap().0, &analytic, &idx, 1e-5);
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn masking_counts_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    assert_eq!(draw_mask(4, 0.15, &mut rng).iter().filter(|&&m| m).count(), 1);
    assert_eq!(draw_mask(12, 0.15, &mut rng).iter().filter(|&&m| m).count(), 2);

    let cfg = tiny_config();
    let data: Vec<PatchSequence> = (0..8).map(|_| random_seq(&cfg, &mut rng)).collect();
    let run = || {
        let mut p = random_params(cfg, 12);
        let mut opt = pretrain_optimizer(&p, AdamConfig::adamw(1e-3, 0.01));
        let mut r = ChaCha8Rng::seed_from_u64(13);
        let l = masked_pretrain_step(&data, &mut p, 0.15, &mut opt, &mut r).unwrap();
        (l, p)
    };
    let (l1, p1) = run();
    let (l2, p2) = run();
    assert!(l1 >= 0.0);
    assert_eq!(l1, l2);
    assert_eq!(p1, p2);
    let mut p = random_params(cfg, 12);
    let mut opt = pretrain_optimizer(&p, AdamConfig::default());
    assert!(masked_pretrain_step(&data, &mut p, 1.0, &mut opt, &mut rng).is_err());
}

fn finetune_batch(cfg: &EncoderConfig, p: &EncoderParams, rng: &mut ChaCha8Rng, exact: bool) -> Vec<(PatchSequence, Vec<f64>)> {
    let seqs: Vec<PatchSequence> = (0..6).map(|_| random_seq(cfg, rng)).collect();
    let (z, _) = forward(p, &seqs).unwrap();
    let own = cls_rows(&z, cfg).dot(&p.output_projection);
    seqs.into_iter()
        .enumerate()
        .map(|(i, s)| {
            let target =
                if exact { own.row(i).to_vec() } else { (0..cfg.d_e).map(|_| rng.random_range(-1.0..1.0)).collect() };
            (s, target)
        })
        .collect()
}

#[test]
fn finetune_on_own_output_is_a_fixed_point() {
    let cfg = tiny_config();
    let mut p = random_params(cfg, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let batch = finetune_batch(&cfg, &p, &mut rng, true);
    let before = p.clone();
    // decoupled weight decay would shrink the head even at zero loss, so it is disabled here
    let mut opt = finetune_optimizer(&p, AdamConfig::adamw(1e-5, 0.0));
    let loss = finetune_step(&batch, &mut p, &mut opt).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(p, before);
}

#[test]
fn finetune_touches_only_the_projection() {
    let cfg = tiny_config();
    let mut p = random_params(cfg, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let batch = finetune_batch(&cfg, &p, &mut rng, false);
    let frozen = p.frozen_values();
    let head = p.output_projection.clone();
    let mut opt = finetune_optimizer(&p, AdamConfig::adamw(1e-5, 0.01));
    for _ in 0..100 {
        finetune_step(&batch, &mut p, &mut opt).unwrap();
    }
    let after = p.frozen_values();
    assert!(frozen.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_ne!(head, p.output_projection);
}

#[test]
fn finetune_loss_decreases_on_a_repeated_batch() {
    let cfg = tiny_config();
    let mut p = random_params(cfg, 18);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let batch = finetune_batch(&cfg, &p, &mut rng, false);
    let mut opt = finetune_optimizer(&p, AdamConfig::adamw(1e-4, 0.0));
    let mut prev = f64::INFINITY;
    for _ in 0..200 {
        let l = finetune_step(&batch, &mut p, &mut opt).unwrap();
        assert!(l < prev, "{l} !< {prev}");
        prev = l;
    }
}

#[test]
fn embeddings_are_repeatable_and_phase_sensitive() {
    let cfg = EncoderConfig::toy(9, 8, 12, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let p = EncoderParams::init(cfg, &mut rng).unwrap();
    let h = Array2::from_shape_fn((9, 8), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let e1 = embed_channel(&h, &p).unwrap();
    let e2 = embed_channel(&h, &p).unwrap();
    assert_eq!(e1, e2);
    assert_eq!(e1.e.len(), 32);
    assert!(e1.is_finite());
    let rotated = h.mapv(|z| z * C64::from_polar(1.0, 0.7));
    let e3 = embed_channel(&rotated, &p).unwrap();
    assert!(e1.e.iter().zip(&e3.e).any(|(a, b)| (a - b).abs() > 1e-6));
}

#[test]
fn user_matrix_sums_to_the_effective_channel() {
    let chans = toy_channels(21, 1);
    let r = &chans[0];
    let theta = PhaseConfig::zeros(r.n_ris());
    for k in 0..r.n_users() {
        let h = user_channel_matrix(r, k).unwrap();
        assert_eq!(h.dim(), (r.n_ris() + 1, r.n_bs()));
        let eff = effective_channel(r.h_d.row(k), r.h_r.row(k), r.g.view(), &theta, true).unwrap();
        let sum: Array1<C64> = h.sum_axis(ndarray::Axis(0));
        for (a, b) in sum.iter().zip(eff.iter()) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }
    assert!(user_channel_matrix(r, 99).is_err());
}

#[test]
fn scaling_normalizes_row_power() {
    let chans = toy_channels(22, 40);
    let s = InputScaling::fit(&chans);
    let (mut pd, mut pc, mut nd, mut nc) = (0.0, 0.0, 0, 0);
    for r in &chans {
        for k in 0..r.n_users() {
            let mut h = user_channel_matrix(r, k).unwrap();
            s.apply(&mut h);
            pd += h.row(0).iter().map(|z| z.norm_sqr()).sum::<f64>();
            nd += h.ncols();
            pc += h.rows().into_iter().skip(1).flatten().map(|z| z.norm_sqr()).sum::<f64>();
            nc += h.ncols() * (h.nrows() - 1);
        }
    }
    assert!((pd / nd as f64 - 1.0).abs() < 1e-9);
    assert!((pc / nc as f64 - 1.0).abs() < 1e-9);
}

#[test]
fn encoder_checkpoint_round_trips() {
    let cfg = tiny_config();
    let enc = ChannelEncoder::new(random_params(cfg, 23), InputScaling { direct: 2e-4, cascaded: 3e-6 });
    let mut buf = Vec::new();
    enc.to_checkpoint().write_to(&mut buf).unwrap();
    let back = ChannelEncoder::from_checkpoint(&Checkpoint::read_from(&mut buf.as_slice()).unwrap()).unwrap();
    assert_eq!(back.scaling, enc.scaling);
    assert_eq!(back.params.config, enc.params.config);
    for (a, b) in enc.params.tensors().iter().zip(back.params.tensors()) {
        assert!(a.data.iter().zip(b.data).all(|(x, y)| (*x as f32) == (*y as f32)));
    }
    let wrong = Checkpoint::new("agent", serde_json::Value::Null, vec![]);
    assert!(ChannelEncoder::from_checkpoint(&wrong).is_err());
}

#[test]
fn flat_embedding_stacks_users_in_order() {
    let chans = toy_channels(24, 3);
    let cfg = EncoderConfig::toy(9, 8, 12, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let enc = ChannelEncoder::new(EncoderParams::init(cfg, &mut rng).unwrap(), InputScaling::fit(&chans));
    let flat = enc.embed_flat(&chans[0]).unwrap();
    assert_eq!(flat.len(), 4 * 32);
    for (k, seq) in enc.sequences(&chans[0]).unwrap().iter().enumerate() {
        let (cls, _) = encode(seq, &enc.params).unwrap();
        let e = cls.dot(&enc.params.output_projection);
        for j in 0..32 {
            assert!((e[j] - flat[k * 32 + j]).abs() < 1e-10);
        }
    }
    let seq = enc.embed_many(ris_core::Exec::Sequential, &chans).unwrap();
    let par = enc.embed_many(ris_core::Exec::Parallel, &chans).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn pca_targets_are_whitened() {
    let chans = toy_channels(26, 60);
    let cfg = EncoderConfig::toy(9, 8, 12, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let enc = ChannelEncoder::new(EncoderParams::init(cfg, &mut rng).unwrap(), InputScaling::fit(&chans));
    let seqs: Vec<PatchSequence> = chans.iter().flat_map(|r| enc.sequences(r).unwrap()).collect();
    let pca = PcaSketch::fit(&seqs, 8).unwrap();
    let t: Vec<Vec<f64>> = seqs.iter().map(|s| pca.transform(s)).collect();
    let n = t.len() as f64;
    for j in 0..8 {
        let mean = t.iter().map(|v| v[j]).sum::<f64>() / n;
        let var = t.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6, "component {j} variance {var}");
    }
}

#[test]
fn sweep_targets_have_codebook_layout() {
    let chans = toy_channels(28, 1);
    let budget = LinkBudget { p_max: 1.0, sigma2: 1e-9, r_min: 2.0 };
    let bs = dft_bs_codebook(8, 8);
    let ris = ris_phase_codebook(8, 8);
    let t = sweep_targets(&chans[0], 0, &bs, &ris, &budget, 32).unwrap();
    assert_eq!(t.len(), 32);
    assert!(t[16..].iter().all(|&x| x == 0.0));
    let best_bs = t[..8].iter().copied().fold(f64::MIN, f64::max);
    let best_ris = t[8..16].iter().copied().fold(f64::MIN, f64::max);
    assert!((best_bs - best_ris).abs() < 1e-12);
}

#[test]
fn short_pretraining_reduces_the_masked_loss() {
    let chans = toy_channels(29, 24);
    let cfg = EncoderConfig { d_model: 32, d_ff: 64, ..EncoderConfig::toy(9, 8, 12, 8).unwrap() };
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let enc = ChannelEncoder::new(EncoderParams::init(cfg, &mut rng).unwrap(), InputScaling::fit(&chans));
    let data: Vec<PatchSequence> = chans.iter().flat_map(|r| enc.sequences(r).unwrap()).collect();
    let mut p = enc.params.clone();
    let before = masked_eval_loss(&p, &data, 0.15, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let sched = TrainSchedule { steps: 60, batch_size: 16, ..TrainSchedule::pretrain() };
    let losses = pretrain(&mut p, &data, &sched, &mut rng).unwrap();
    assert_eq!(losses.len(), 60);
    let after = masked_eval_loss(&p, &data, 0.15, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(after < before, "{after} !< {before}");
    let mut csv = Vec::new();
    write_loss_csv(&mut csv, &losses).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 61);
}
