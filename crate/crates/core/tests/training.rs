use scout_core::graph::{AdjacencyMode, DEFAULT_RADIUS};
use scout_core::loss::LossConfig;
use scout_core::model::{Model, ModelConfig, OutputMode, Variant};
use scout_core::synth::{synthetic_tracks, SynthConfig};
use scout_core::train::{scenes_from_tracks, train, LrSchedule, TrainConfig};
use scout_core::traj::WindowConfig;

#[test]
fn overfit_fixture_loss_falls_over_the_first_fifty_steps() {
    let tracks = synthetic_tracks(&SynthConfig {
        scenes: 10,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let scenes = scenes_from_tracks(&tracks, WindowConfig::default(), AdjacencyMode::Kernel, DEFAULT_RADIUS).unwrap();
    let mut falling = 0;
    for seed in 0..3 {
        let cfg = ModelConfig {
            variant: Variant::Attention,
            hidden_dim: 48,
            dropout_p: 0.0,
            attention_dropout_p: 0.0,
            output_mode: OutputMode::Positions,
            ..ModelConfig::default()
        };
        // Full batch, so 50 epochs are the first 50 steps of the 5000-step schedule.
        let tc = TrainConfig {
            lr: 1e-2,
            batch_size: scenes.len(),
            weight_decay: 0.0,
            max_epochs: 50,
            max_steps: Some(5000),
            schedule: LrSchedule::Cosine { min_lr: 1e-4 },
            seed,
            ..TrainConfig::default()
        };
        let out = train(Model::init(cfg, seed).unwrap(), &scenes, &[], &LossConfig::default(), &tc).unwrap();
        assert_eq!(out.step_losses.len(), 50);
        // Adam at this rate overshoots by a few percent once the loss has
        // fallen about 50-fold, so the trend is judged on 10-step means.
        let means: Vec<f64> = out.step_losses.chunks(10).map(|c| c.iter().sum::<f64>() / 10.0).collect();
        if means.windows(2).all(|w| w[1] <= w[0]) {
            falling += 1;
        }
    }
    assert!(falling >= 2, "only {falling} of 3 seeds had falling 10-step means");
}
