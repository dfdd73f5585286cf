use redtide::data::synth::{generate_benchmark, BenchmarkConfig};
use redtide::models::InitScheme;
use redtide::training::{
    load_checkpoint, run, run_single_stage, run_stage1, run_stage2, run_stage3, train_detection, RunOptions,
    RunOutcome, Stage, TrainConfig, TrainMode, TrainState, TrainingData, FINAL_CHECKPOINT, TELEMETRY_FILE,
};

fn tiny_data(seed: u64) -> TrainingData {
    let mut b = BenchmarkConfig {
        train_positive: 1,
        train_negative: 1,
        test_positive: 1,
        test_negative: 1,
        ..BenchmarkConfig::default()
    };
    b.scene.height = 48;
    b.scene.width = 48;
    b.scene.labels_per_raster = 30;
    b.scene.band_length = 40;
    TrainingData::from_dataset(&generate_benchmark(&b, seed).unwrap()).unwrap()
}

fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig {
        bank_width: 3,
        trunk_width: 4,
        detector_init: InitScheme::He,
        generator_width: 2,
        discriminator_widths: vec![2, 2, 2, 2],
        stage_iterations: 3,
        single_stage_iterations: 4,
        lr_drop_every: 2,
        single_stage_lr_drop_every: 2,
        checkpoint_every: 2,
        adversarial_batch: 8,
        generated_per_iteration: 8,
        ..TrainConfig::default()
    };
    c.sampler.window_count = 2;
    c.sampler.batch_size = 8;
    c
}

fn final_digest(state: &TrainState) -> Vec<u8> {
    state.to_archive().to_bytes()
}

#[test]
fn same_seed_same_telemetry() {
    let data = tiny_data(0);
    let cfg = tiny_config();
    let (a, _) = train_detection(&data, &cfg, &RunOptions::default()).unwrap();
    let (b, _) = train_detection(&data, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(a.telemetry, b.telemetry);
    assert_eq!(final_digest(&a), final_digest(&b));
    assert_eq!(a.telemetry.len(), 9);

    let other = TrainConfig { seed: 1, ..cfg };
    let (c, _) = train_detection(&data, &other, &RunOptions::default()).unwrap();
    assert_ne!(a.telemetry, c.telemetry);
}

#[test]
fn each_stage_freezes_the_other_network() {
    let data = tiny_data(1);
    let cfg = tiny_config();
    let s1 = run_stage1(&data, &cfg, 3).unwrap();
    assert_eq!(s1.stage, Stage::Stage2);
    let s2 = run_stage2(s1.clone(), &data).unwrap();
    assert_eq!(s2.detector, s1.detector, "stage 2 must not touch the detector");
    assert_ne!(s2.generator, s1.generator);
    assert_ne!(s2.discriminator, s1.discriminator);

    let s3 = run_stage3(s2.clone(), &data).unwrap();
    assert_eq!(s3.generator, s2.generator, "stage 3 must not touch the generator");
    assert_ne!(s3.detector, s2.detector);
    assert!(s3.telemetry.iter().filter(|r| r.stage == Stage::Stage3).all(|r| r.sampler.is_some()));
    assert!(s3.telemetry.iter().filter(|r| r.stage == Stage::Stage2).all(|r| r.generator_loss.is_some()));

    // Stages must run in order.
    assert!(run_stage3(s1, &data).is_err());
}

#[test]
fn zero_budget_leaves_the_initialization() {
    let data = tiny_data(2);
    let cfg = tiny_config();
    let fresh = TrainState::initialize(&cfg, data.channels, 1, data.stats.clone()).unwrap();
    let mut state = fresh.clone();
    let outcome = run(
        &mut state,
        &data,
        &RunOptions {
            out_dir: None,
            max_iterations: Some(0),
        },
    )
    .unwrap();
    assert_eq!(outcome, RunOutcome::Interrupted);
    assert_eq!(final_digest(&state), final_digest(&fresh));
    assert!(state.telemetry.is_empty());
}

#[test]
fn interrupted_runs_resume_bit_exactly() {
    let data = tiny_data(3);
    for mode in [TrainMode::RtdThreeStage, TrainMode::RtdSingle] {
        let cfg = TrainConfig { mode, ..tiny_config() };
        let full_dir = tempfile::tempdir().unwrap();
        let (full, outcome) = train_detection(
            &data,
            &cfg,
            &RunOptions {
                out_dir: Some(full_dir.path().into()),
                max_iterations: None,
            },
        )
        .unwrap();
        assert_eq!(outcome, RunOutcome::Finished);

        // Stop early, midway and just before the end, then resume from the file.
        let total = full.telemetry.len();
        for cut in [1, total / 2, total - 1] {
            let dir = tempfile::tempdir().unwrap();
            let opts = RunOptions {
                out_dir: Some(dir.path().into()),
                max_iterations: Some(cut),
            };
            let (_, outcome) = train_detection(&data, &cfg, &opts).unwrap();
            assert_eq!(outcome, RunOutcome::Interrupted);
            let mut resumed = load_checkpoint(&dir.path().join("interrupted.ckpt")).unwrap();
            let opts = RunOptions {
                out_dir: Some(dir.path().into()),
                max_iterations: None,
            };
            assert_eq!(run(&mut resumed, &data, &opts).unwrap(), RunOutcome::Finished);
            assert_eq!(resumed.telemetry, full.telemetry, "{mode:?} cut {cut}");
            assert_eq!(
                std::fs::read(dir.path().join(FINAL_CHECKPOINT)).unwrap(),
                std::fs::read(full_dir.path().join(FINAL_CHECKPOINT)).unwrap(),
                "{mode:?} cut {cut}"
            );
            assert_eq!(
                std::fs::read(dir.path().join(TELEMETRY_FILE)).unwrap(),
                std::fs::read(full_dir.path().join(TELEMETRY_FILE)).unwrap()
            );
        }
    }
}

#[test]
fn single_stage_runs_only_the_detector() {
    let data = tiny_data(4);
    let cfg = tiny_config();
    let s = run_single_stage(&data, &cfg, 5).unwrap();
    let init = TrainState::initialize(
        &TrainConfig {
            mode: TrainMode::RtdSingle,
            seed: 5,
            ..cfg
        },
        data.channels,
        1,
        data.stats.clone(),
    )
    .unwrap();
    assert_eq!(s.telemetry.len(), 4);
    assert_eq!(s.generator, init.generator);
    assert_eq!(s.discriminator, init.discriminator);
    assert!(s.telemetry.iter().all(|r| r.generator_loss.is_none() && r.detector_loss.is_some()));
}
