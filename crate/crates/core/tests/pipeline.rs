use std::process::Command;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mcsm::channel::{
    apply_channel, cfo_phase_step, draw_channel, ChannelPreset, SnrSpec, UplinkTx,
};
use mcsm::csmud::GompConfig;
use mcsm::harness::{self, loopback, ExperimentConfig, Simulation, SweepAxis};
use mcsm::rxchain::{decode_node, process_frame, receive_frame, ReceivedFrame};
use mcsm::waveform::{read_iq, FrameLayout, FrameProfile, OfdmConfig, ReferenceMode};
use mcsm::{CodeConfig, Link, LinkConfig, PskConfig};

fn ideal(active: usize) -> ExperimentConfig {
    ExperimentConfig {
        channel: ChannelPreset::Ideal,
        snr_db: None,
        sweep: SweepAxis::ActiveCount(vec![active]),
        frames_per_point: 20,
        ..ExperimentConfig::default()
    }
}

#[test]
fn single_node_time_domain_loopback_is_exact() {
    let sim = Simulation::new(ideal(1)).unwrap();
    let trial = sim.draw_trial(&sim.point(0), 0, 0).unwrap();
    let frame = sim.receive_time_frame(&trial, 0, 0).unwrap();
    let rx = receive_frame(
        ReceivedFrame::Time(&frame),
        &sim.link,
        &GompConfig::default(),
    )
    .unwrap();
    let node = trial.activity.iter().position(|&a| a).unwrap();
    assert_eq!(rx.detection.support, vec![node]);
    let err = rx.streams[0]
        .1
        .iter()
        .zip(&trial.node_symbols[node])
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "max symbol error {err}");
}

#[test]
fn silent_frame_has_empty_support() {
    let sim = Simulation::new(ideal(0)).unwrap();
    let trial = sim.draw_trial(&sim.point(0), 0, 0).unwrap();
    let y = sim.receive_blocks(&trial, 0, 0).unwrap();
    let rx = receive_frame(ReceivedFrame::Freq(&y), &sim.link, &GompConfig::default()).unwrap();
    assert!(rx.detection.support.is_empty());
}

#[test]
fn six_nodes_on_ideal_channel_decode_exactly() {
    let sim = Simulation::new(ideal(6)).unwrap();
    for t in 0..20 {
        let trial = sim.draw_trial(&sim.point(0), 0, t).unwrap();
        let y = sim.receive_blocks(&trial, 0, t).unwrap();
        let (_, score) = process_frame(
            ReceivedFrame::Freq(&y),
            &sim.link,
            &sim.gomp_config(&trial),
            &trial.payloads,
            &trial.activity,
        )
        .unwrap();
        assert_eq!(score.active_nodes, 6);
        assert_eq!(
            (score.frame_errors, score.false_alarms, score.bit_errors),
            (0, 0, 0),
            "trial {t}"
        );
    }
}

#[test]
fn decoding_ignores_complex_gain() {
    let link = Link::new(LinkConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = link.random_payload(&mut rng);
    let b = link.modulate_node(&u).unwrap();
    for h in [
        Complex64::new(0.01, 0.0),
        Complex64::new(-3.0, 2.0),
        Complex64::from_polar(50.0, 1.1),
    ] {
        let scaled: Vec<Complex64> = b.iter().map(|z| z * h).collect();
        assert_eq!(decode_node(&scaled, &link).unwrap(), u);
    }
}

#[test]
fn neighbouring_symbol_error_is_corrected_anywhere() {
    let link = Link::new(LinkConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let u = link.random_payload(&mut rng);
        let b = link.modulate_node(&u).unwrap();
        for i in 0..b.len() {
            for rot in [Complex64::i(), -Complex64::i()] {
                let mut bad = b.clone();
                bad[i] *= rot;
                assert_eq!(
                    decode_node(&bad, &link).unwrap(),
                    u,
                    "symbol {i}, rotation {rot}"
                );
            }
        }
    }
}

/// An antipodal symbol error flips four adjacent coded bits, beyond what the
/// K=3 code always corrects. The decoder must still return a codeword at
/// least as close to the received word as the transmitted one.
#[test]
fn antipodal_symbol_error_decodes_to_a_nearest_codeword() {
    let link = Link::new(LinkConfig::default()).unwrap();
    let code = link.config.effective_code();
    let psk = link.config.psk.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let u = link.random_payload(&mut rng);
    let b = link.modulate_node(&u).unwrap();
    let sent = mcsm::encode(&u, &code).unwrap();
    let hamming = |x: &[u8], y: &[u8]| x.iter().zip(y).filter(|(p, q)| p != q).count();
    let mut failures = 0;
    for i in 1..b.len() {
        let mut bad = b.clone();
        bad[i] = -bad[i];
        let received =
            mcsm::demap_psk(&link.layout.differential_decisions(&bad).unwrap(), &psk).unwrap();
        let decoded = decode_node(&bad, &link).unwrap();
        let recoded = mcsm::encode(&decoded, &code).unwrap();
        assert!(hamming(&recoded, &received) <= hamming(&sent, &received));
        failures += usize::from(decoded != u);
    }
    assert!(failures > 0);
}

#[test]
fn noise_matches_requested_snr() {
    let link = Link::new(LinkConfig::default()).unwrap();
    let k = link.config.num_nodes;
    let n_sc = link.config.ofdm.num_subcarriers;
    let snr = SnrSpec::new(10.0).unwrap();
    let real = draw_channel(
        &ChannelPreset::Ideal,
        k,
        &link.schedule.center_bins(),
        2048,
        0,
    )
    .with_snr(Some(snr), n_sc);
    let silent = vec![false; k];
    let streams = vec![Vec::new(); k];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut energy, mut count) = (0.0, 0usize);
    for _ in 0..30 {
        let y = apply_channel(
            &UplinkTx {
                spreading: &link.spreading,
                node_symbols: &streams,
                activity: &silent,
                num_symbols: link.layout.num_symbols,
                hop_interval: link.config.ofdm.hop_interval,
            },
            &real,
            &link.config.ofdm,
            &mut rng,
        )
        .unwrap();
        energy += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        count += y.len();
    }
    let measured = energy / count as f64;
    let expected = 1.0 / (n_sc as f64 * 10.0);
    assert!(
        (measured / expected - 1.0).abs() < 0.02,
        "measured {measured}, expected {expected}"
    );
}

#[test]
fn carrier_offset_phase_step() {
    let step = cfo_phase_step(5_000.0, &OfdmConfig::default());
    assert!((step - 2.648_604).abs() < 1e-6, "step {step}");
}

#[test]
fn frame_geometry() {
    let code = CodeConfig::default();
    let psk = PskConfig::default();
    let sc = FrameLayout::new(
        150,
        &code,
        &psk,
        10,
        ReferenceMode::Continuous,
        FrameProfile::SelfConsistent,
    )
    .unwrap();
    assert_eq!(
        (sc.coded_len, sc.data_symbols, sc.num_symbols),
        (304, 152, 153)
    );
    let hop = FrameLayout::new(
        150,
        &code,
        &psk,
        10,
        ReferenceMode::PerHop,
        FrameProfile::SelfConsistent,
    )
    .unwrap();
    assert_eq!(hop.num_symbols, 169);
    let exact = FrameLayout::new(
        150,
        &code,
        &psk,
        10,
        ReferenceMode::Continuous,
        FrameProfile::Nominal,
    )
    .unwrap();
    assert_eq!(exact.num_symbols, 150);
    assert_eq!(
        OfdmConfig::default().frame_samples(exact.num_symbols),
        328_800
    );
    let nominal = LinkConfig {
        profile: FrameProfile::Nominal,
        ..LinkConfig::default()
    };
    assert!(Link::new(nominal).is_err());
}

#[test]
fn per_hop_references_survive_hop_boundaries() {
    let cfg = ExperimentConfig {
        link: LinkConfig {
            reference: ReferenceMode::PerHop,
            ..LinkConfig::default()
        },
        channel: ChannelPreset::NlosSelective(Default::default()),
        ..ideal(4)
    };
    let sim = Simulation::new(cfg).unwrap();
    for t in 0..10 {
        let trial = sim.draw_trial(&sim.point(0), 0, t).unwrap();
        let y = sim.receive_blocks(&trial, 0, t).unwrap();
        let (_, score) = process_frame(
            ReceivedFrame::Freq(&y),
            &sim.link,
            &sim.gomp_config(&trial),
            &trial.payloads,
            &trial.activity,
        )
        .unwrap();
        assert_eq!(score.bit_errors, 0, "trial {t}");
    }
}

#[test]
fn loopback_suite_passes() {
    let report = loopback(&ExperimentConfig::default(), 40, 3, 4).unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.time_domain_frames, 4);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: usize, name: &str| {
        let cfg = ExperimentConfig {
            sweep: SweepAxis::ActiveCount(vec![4, 12]),
            frames_per_point: 40,
            output: Some(dir.path().join(name)),
            ..ExperimentConfig::default()
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| harness::run_sweep(&cfg).unwrap());
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run(1, "a.csv");
    let b = run(4, "b.csv");
    assert_eq!(a, b);
    let rows = harness::parse_csv(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
}

#[test]
fn iq_dump_has_frame_length_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frame.iq");
    let hdr = harness::dump_frame(&ExperimentConfig::default(), 3, &path).unwrap();
    let samples = read_iq(&path).unwrap();
    assert_eq!(samples.len(), 153 * 2192);
    let text = std::fs::read_to_string(hdr).unwrap();
    assert!(text.contains("sample_rate=26000000"));
    assert!(text.contains("seed=3"));
}

#[test]
fn imported_spreading_set_drives_the_link() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seqs.txt");
    let link = Link::new(LinkConfig {
        spreading_seed: 77,
        ..LinkConfig::default()
    })
    .unwrap();
    link.spreading.save(&path).unwrap();
    let mut cfg = ideal(3);
    cfg.spreading_file = Some(path);
    let sim = Simulation::new(cfg).unwrap();
    assert_eq!(sim.link.spreading.matrix(), link.spreading.matrix());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcsm"))
}

#[test]
fn cli_run_writes_csv_and_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, "sweep.values = 2\nexperiment.frames_per_point = 5\n").unwrap();
    let out = dir.path().join("out.csv");
    let status = cli()
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--set",
            "experiment.master_seed=4",
            "--output",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# experiment.master_seed = 4"));
    assert_eq!(harness::parse_csv(&text).unwrap().len(), 1);

    let missing = cli().args(["run", "/no/such/config"]).status().unwrap();
    assert!(!missing.success());
    let bad_key = cli()
        .args(["run", cfg.to_str().unwrap(), "--set", "nope=1"])
        .status()
        .unwrap();
    assert!(!bad_key.success());
    let unwritable = cli()
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--output",
            "/no/such/dir/out.csv",
        ])
        .status()
        .unwrap();
    assert!(!unwritable.success());
}

#[test]
fn cli_loopback_and_dump() {
    assert!(cli()
        .args(["loopback", "--frames", "8"])
        .status()
        .unwrap()
        .success());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.iq");
    assert!(cli()
        .args(["dump-frame", "--seed", "1", "--output"])
        .arg(&out)
        .status()
        .unwrap()
        .success());
    assert!(out.exists());
}
