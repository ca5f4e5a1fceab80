//! End-to-end tests of the command-line interface and its exit-code
//! contract (0 ok, 2 usage, 3 data/format, 4 numeric).

use std::path::Path;
use std::process::{Command, Output};

use dcasa_core::metrics::snr;

fn dcasa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcasa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn config_dump_round_trips_byte_for_byte() {
    let out = dcasa(&["config", "--dump", "--preset", "desk"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("[dense_unet]"));

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, &text).unwrap();
    let again = dcasa(&["config", "--dump", "--config", cfg_path.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(text, stdout(&again), "dumped config re-ingests identically");
}

#[test]
fn unknown_config_key_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    let mut text = stdout(&dcasa(&["config", "--dump"]));
    text.push_str("\nmystery_knob = 3\n");
    std::fs::write(&cfg_path, text).unwrap();
    let out = dcasa(&["config", "--dump", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_2() {
    let out = dcasa(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_data_is_seed_reproducible_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.toml");
    let mut cfg = dcasa::config::RunConfig::preset(dcasa::config::Preset::Desk);
    cfg.data.n_train = 3;
    cfg.data.n_valid = 1;
    cfg.data.n_test = 2;
    cfg.data.train_speakers = 4;
    cfg.data.test_speakers = 3;
    cfg.data.duration_s = 1.0;
    std::fs::write(&cfg_path, cfg.dump()).unwrap();
    let cfg_arg = cfg_path.to_str().unwrap();

    let d1 = dir.path().join("a");
    let d2 = dir.path().join("b");
    for d in [&d1, &d2] {
        let out = dcasa(&[
            "synth-data",
            "--config",
            cfg_arg,
            "--seed",
            "5",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let m1 = std::fs::read(d1.join("manifest.tsv")).unwrap();
    let m2 = std::fs::read(d2.join("manifest.tsv")).unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn separate_oracle_cirm_reaches_60_db_and_writes_plot() {
    let dir = tempfile::tempdir().unwrap();
    // synthesize one mixture directly
    let mut rng = dcasa_core::rng::rng_for(3, 0);
    let spk_a = dcasa_core::synth::SyntheticSpeaker::sample(1, &mut rng);
    let spk_b = dcasa_core::synth::SyntheticSpeaker::sample(2, &mut rng);
    let s1 = dcasa_core::synth::synth_source::<f32>(&spk_a, 1.5, 11).unwrap();
    let s2 = dcasa_core::synth::synth_source::<f32>(&spk_b, 1.5, 12).unwrap();
    let m = dcasa_core::synth::mix(&s1, &s2, 3.0).unwrap();
    let mix_path = dir.path().join("utt.wav");
    let r1_path = dir.path().join("r1.wav");
    let r2_path = dir.path().join("r2.wav");
    dcasa::wav::write_wav(&mix_path, &m.mixture).unwrap();
    dcasa::wav::write_wav(&r1_path, &m.source1).unwrap();
    dcasa::wav::write_wav(&r2_path, &m.source2).unwrap();

    let out_dir = dir.path().join("sep");
    let out = dcasa(&[
        "separate",
        "--mixture",
        mix_path.to_str().unwrap(),
        "--oracle-cirm",
        "--ref1",
        r1_path.to_str().unwrap(),
        "--ref2",
        r2_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--plot",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let e1 = dcasa::wav::read_wav(&out_dir.join("utt.s1.wav")).unwrap();
    let e2 = dcasa::wav::read_wav(&out_dir.join("utt.s2.wav")).unwrap();
    let ref1 = dcasa::wav::read_wav(&r1_path).unwrap();
    let ref2 = dcasa::wav::read_wav(&r2_path).unwrap();
    // 16-bit storage bounds the measurable SNR near the quantization floor;
    // the in-memory pipeline bound (>= 60 dB) is asserted in core and in the
    // acceptance suite. Here both streams must sit far above separation
    // quality, i.e. at the quantization ceiling.
    let snr1 = snr(&e1, &ref1).unwrap();
    let snr2 = snr(&e2, &ref2).unwrap();
    assert!(snr1 >= 45.0, "stream 1 SNR {snr1}");
    assert!(snr2 >= 45.0, "stream 2 SNR {snr2}");
    assert!(out_dir.join("utt.png").exists());
}

#[test]
fn stereo_wav_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("st.wav");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&40u32.to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes());
    bytes.extend_from_slice(&8000u32.to_le_bytes());
    bytes.extend_from_slice(&32000u32.to_le_bytes());
    bytes.extend_from_slice(&4u16.to_le_bytes());
    bytes.extend_from_slice(&16u16.to_le_bytes());
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&4u32.to_le_bytes());
    bytes.extend_from_slice(&[0, 0, 0, 0]);
    std::fs::write(&path, bytes).unwrap();
    let out = dcasa(&[
        "separate",
        "--mixture",
        path.to_str().unwrap(),
        "--oracle-cirm",
        "--ref1",
        path.to_str().unwrap(),
        "--ref2",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let wav_path = dir.path().join("m.wav");
    dcasa::wav::write_wav(&wav_path, &vec![0.01f32; 8000]).unwrap();
    let out = dcasa(&[
        "separate",
        "--mixture",
        wav_path.to_str().unwrap(),
        "--stage1",
        dir.path().join("nope.ckpt").to_str().unwrap(),
        "--assignment",
        "default",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
