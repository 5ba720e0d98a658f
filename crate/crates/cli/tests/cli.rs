use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;

use ris_cli::commands::{
    cmd_experiment, cmd_generate, cmd_pretrain, cmd_report, cmd_sweep, cmd_train, load_encoder, log_path, render_plot,
    summary_path,
};
use ris_cli::config::{nearest_divisor, CodebookSettings, ExperimentKind};
use ris_cli::experiment::{Results, SeRow, SWEEP_METHOD};
use ris_cli::pipeline::{init_encoder, read_dataset_file, sha256_hex, split_plan};
use ris_cli::report::{parse_csv, to_csv};
use ris_cli::{CliError, ExperimentConfig};
use ris_core::par::Exec;
use ris_hdrl::Algo;
use ris_learn::Checkpoint;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seeds = vec![1, 2];
    cfg.geometry.n_bs_antennas = 4;
    cfg.geometry.n_ris_elements = 4;
    cfg.geometry.n_users = 2;
    cfg.encoder.patch_len = 4;
    cfg.encoder.d_model = 16;
    cfg.encoder.n_layers = 1;
    cfg.encoder.n_heads = 2;
    cfg.encoder.d_ff = 32;
    cfg.encoder.d_e = 8;
    cfg.encoder.pretrain.steps = 10;
    cfg.encoder.finetune.steps = 10;
    cfg.dataset.records = 40;
    cfg.agent.hidden = [32, 32];
    cfg.agent.batch = 16;
    cfg.train.episodes = 20;
    cfg.train.eval_every = 10;
    cfg.train.eval_seeds = 3;
    cfg.codebook = CodebookSettings { bs: 4, ris: 4 };
    cfg
}

fn data_rows(text: &str) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .records()
        .collect::<Result<_, _>>()
        .expect("well-formed csv")
}

fn column(rows: &[csv::StringRecord], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().expect("number")).collect()
}

#[test]
fn config_round_trips_through_toml_and_json() {
    let cfg = tiny();
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let json = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
}

#[test]
fn partial_and_misspelled_configs() {
    let cfg = ExperimentConfig::from_toml("seeds = [7]\n[link]\np_max_dbm = 20.0\n").unwrap();
    assert_eq!(cfg.seeds, vec![7]);
    assert_eq!(cfg.link.p_max_dbm, 20.0);
    assert_eq!(cfg.geometry, ExperimentConfig::default().geometry);
    assert!(ExperimentConfig::from_toml("[link]\np_max_dbn = 20.0\n").is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seeds = []\n").unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap_err().exit_code(), 1);
    let mut cfg = tiny();
    cfg.experiment.methods.push("random".into());
    assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
}

#[test]
fn patch_length_snaps_to_a_divisor() {
    assert_eq!(nearest_divisor(144, 12), 12);
    assert_eq!(nearest_divisor(10, 3), 2);
    // 2 and 4 are both one away from 3
    assert_eq!(nearest_divisor(8, 3), 4);
    let cfg = tiny();
    let enc = cfg.encoder.encoder_config(&cfg.geometry).unwrap();
    assert_eq!(enc.n_patches * enc.patch_len, 2 * 5 * 4);
}

#[test]
fn default_split_is_70_15_15() {
    let [train, val, test] = split_plan(400, 1000);
    assert_eq!((train.records, val.records, test.records), (280, 60, 60));
    assert_eq!(val.seed_start, 1280);
    assert_eq!(test.seed_start, 1340);
}

proptest! {
    #[test]
    fn splits_partition_the_seed_range(n in 1usize..5000, start in 0u64..1_000_000) {
        let parts = split_plan(n, start);
        prop_assert_eq!(parts.iter().map(|s| s.records).sum::<usize>(), n);
        prop_assert_eq!(parts[0].records, (7 * n).div_ceil(10));
        prop_assert!(parts[1].records.abs_diff(parts[2].records) <= 1);
        let mut next = start;
        for s in &parts {
            prop_assert_eq!(s.seed_start, next);
            next += s.records as u64;
        }
    }
}

#[test]
fn dataset_file_matches_header_and_checksum() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let a = cmd_generate(Exec::Parallel, &cfg, &dir.path().join("a.bin"), false).unwrap();
    let b = cmd_generate(Exec::Sequential, &cfg, &dir.path().join("b.bin"), false).unwrap();
    assert_eq!(a[0].checksum, b[0].checksum);
    let bytes = fs::read(&a[0].path).unwrap();
    assert_eq!(sha256_hex(&bytes), a[0].checksum);
    let (header, records) = read_dataset_file(&a[0].path).unwrap();
    assert_eq!(bytes.len(), header.file_bytes());
    assert_eq!(records.len(), 40);
    assert_eq!((header.n, header.records), (4, 40));
}

#[test]
fn split_files_are_disjoint() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let files = cmd_generate(Exec::Parallel, &cfg, &dir.path().join("channels.bin"), true).unwrap();
    let names: Vec<String> = files.iter().map(|f| f.path.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["channels.train.bin", "channels.val.bin", "channels.test.bin"]);
    assert_eq!(files.iter().map(|f| f.records).collect::<Vec<_>>(), [28, 6, 6]);
    let (_, train) = read_dataset_file(&files[0].path).unwrap();
    let (_, val) = read_dataset_file(&files[1].path).unwrap();
    assert!(train.iter().all(|r| !val.contains(r)));
}

#[test]
fn zero_step_pretraining_keeps_the_initialization() {
    let mut cfg = tiny();
    cfg.encoder.pretrain.steps = 0;
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    cmd_generate(Exec::Parallel, &cfg, &data, false).unwrap();
    let ck = dir.path().join("enc.ck");
    assert!(cmd_pretrain(&cfg, &data, &ck).unwrap().is_empty());
    let (_, records) = read_dataset_file(&data).unwrap();
    let fresh = init_encoder(&cfg.encoder, &cfg.geometry, &records).unwrap();
    // checkpoints hold f32 tensors, so compare in that form
    assert_eq!(Checkpoint::load(&ck).unwrap(), fresh.to_checkpoint());
    assert_eq!(load_encoder(&ck).unwrap().params.config, fresh.params.config);
    assert!(data_rows(&fs::read_to_string(dir.path().join("enc.loss.csv")).unwrap()).is_empty());

    cfg.encoder.pretrain.steps = 7;
    let losses = cmd_pretrain(&cfg, &data, &ck).unwrap();
    let rows = data_rows(&fs::read_to_string(dir.path().join("enc.loss.csv")).unwrap());
    assert_eq!(rows.len(), 7);
    assert_eq!(column(&rows, 1), losses);
}

#[test]
fn dataset_geometry_mismatch_is_a_config_error() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    cmd_generate(Exec::Parallel, &cfg, &data, false).unwrap();
    let mut other = tiny();
    other.geometry.n_bs_antennas = 8;
    let err = cmd_pretrain(&other, &data, &dir.path().join("enc.ck")).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn training_writes_per_seed_logs_and_their_mean() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    let ck = dir.path().join("enc.ck");
    cmd_generate(Exec::Parallel, &cfg, &data, false).unwrap();
    cmd_pretrain(&cfg, &data, &ck).unwrap();
    let out = dir.path().join("runs");
    let written = cmd_train(Exec::Parallel, &cfg, &ck, Algo::FmHdrl, &out).unwrap();
    assert_eq!(written.len(), 3);

    let logs: Vec<Vec<csv::StringRecord>> = cfg
        .seeds
        .iter()
        .map(|&s| data_rows(&fs::read_to_string(log_path(&out, Algo::FmHdrl, s)).unwrap()))
        .collect();
    assert!(logs.iter().all(|l| l.len() == 20));
    assert!(log_path(&out, Algo::FmHdrl, 1).with_extension("ck").exists());

    let summary = data_rows(&fs::read_to_string(summary_path(&out, Algo::FmHdrl)).unwrap());
    let (a, b) = (column(&logs[0], 1), column(&logs[1], 1));
    for (row, (x, y)) in column(&summary, 1).iter().zip(a.iter().zip(&b)) {
        approx::assert_relative_eq!(*row, (x + y) / 2.0, max_relative = 1e-12);
    }

    // a log cut after any complete line is still valid csv
    let text = fs::read_to_string(log_path(&out, Algo::FmHdrl, 2)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    for cut in 2..lines.len() {
        assert_eq!(data_rows(&lines[..cut].join("\n")).len(), cut - 2);
    }
}

#[test]
fn power_sweep_table_is_complete() {
    let mut cfg = tiny();
    cfg.seeds = vec![1];
    cfg.experiment.kind = ExperimentKind::SeVsPower;
    let dir = tempfile::tempdir().unwrap();
    let (path, results) = cmd_experiment(Exec::Parallel, &cfg, None, dir.path(), true).unwrap();
    let Results::Se { rows, .. } = &results else { panic!("expected an SE table") };
    assert_eq!(rows.len(), 4 * 3);
    for p in [0.0, 10.0, 20.0, 30.0] {
        let mut methods: Vec<&str> = rows.iter().filter(|r| r.x == p).map(|r| r.method.as_str()).collect();
        methods.sort();
        assert_eq!(methods, ["fm-drl", "fm-hdrl", "sweep"]);
    }
    let sweep: Vec<f64> = rows.iter().filter(|r| r.method == SWEEP_METHOD).map(|r| r.mean).collect();
    assert!(sweep.windows(2).all(|w| w[1] >= w[0]), "{sweep:?}");

    assert_eq!(parse_csv(&fs::read_to_string(&path).unwrap()).unwrap(), results);
    assert!(path.with_extension("svg").exists());
    let report = cmd_report(&[path], false).unwrap();
    assert!(report.contains("p_max_dbm"));
}

#[test]
fn results_csv_round_trips() {
    let results = Results::Se {
        kind: ExperimentKind::SeVsRis,
        rows: vec![SeRow::new(4.0, "fm-hdrl", vec![1.5, 2.25, 3.0]), SeRow::new(16.0, "sweep", vec![0.1; 3])],
    };
    let text = to_csv(&results);
    assert!(text.starts_with("# ris-results se_vs_ris v1\n"));
    let back = parse_csv(&text).unwrap();
    assert_eq!(back, results);
    assert_eq!(to_csv(&back), text);
    assert!(parse_csv("ris_elements,method\n").is_err());
    assert!(parse_csv("# ris-results se_vs_ris v9\n").is_err());
}

#[test]
fn plots_are_svg_documents() {
    let results = Results::Se { kind: ExperimentKind::SeVsPower, rows: vec![SeRow::new(0.0, "sweep", vec![1.0]), SeRow::new(10.0, "sweep", vec![2.0])] };
    let svg = render_plot(&results);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("<path d=\"M"));
}

#[test]
fn sweep_command_writes_every_slot() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let mean = cmd_sweep(Exec::Parallel, &cfg, &out).unwrap();
    let rows = data_rows(&fs::read_to_string(&out).unwrap());
    let slots = cfg.train.eval_seeds * cfg.train.macro_slots_per_episode * cfg.agent.macro_len;
    assert_eq!(rows.len(), slots);
    let se = column(&rows, 2);
    approx::assert_relative_eq!(mean, se.iter().sum::<f64>() / se.len() as f64, max_relative = 1e-12);
}

fn ris(dir: &Path, args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_ris")).current_dir(dir).args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), tiny().to_toml()).unwrap();
    assert_eq!(ris(dir.path(), &["--config", "missing.toml", "sweep"]), 1);
    assert_eq!(ris(dir.path(), &["--config", "tiny.toml", "--threads", "0", "sweep"]), 1);
    assert_eq!(ris(dir.path(), &["--config", "tiny.toml", "train", "--encoder", "none.ck"]), 2);
    assert_eq!(ris(dir.path(), &["--config", "tiny.toml", "--threads", "1", "sweep"]), 0);
    assert!(dir.path().join("out/sweep.csv").exists());
    assert_eq!(ris(dir.path(), &["--config", "tiny.toml", "generate", "--split"]), 0);
    assert!(dir.path().join("out/channels.test.bin").exists());
}
