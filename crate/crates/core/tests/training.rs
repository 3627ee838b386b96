use fri_forge::autodiff::{checkpoint, AdamW, ParamId};
use fri_forge::encoder::{Encoder, EncoderConfig};
use fri_forge::kernels::{BSplineKernel, Kernel, TwoExpKernel};
use fri_forge::sampler::{ExampleDraw, ExampleSpec, SampleGrid, SnrPolicy};
use fri_forge::signal::{GenerationRanges, PulseShape};
use fri_forge::trainer::{batch_gradients, train, TrainConfig, TrainMode};

fn small_encoder(seed: u64) -> Encoder {
    let mut cfg = EncoderConfig::standard(21, 2);
    cfg.hidden = vec![24];
    cfg.param_target = None;
    Encoder::new(cfg, seed).unwrap()
}

fn small_config(mode: TrainMode, grid: SampleGrid) -> TrainConfig {
    let mut cfg = TrainConfig::desk(mode, grid, 2);
    cfg.epochs = 3;
    cfg.batch_size = 64;
    cfg.examples_per_epoch = 256;
    cfg.heldout_examples = 32;
    cfg.chunk_size = 32;
    cfg.lr_kernel = 5e-2;
    cfg
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

#[test]
fn same_seed_same_loss_trace() {
    let grid = SampleGrid::observation_window(-0.48, 0.52, 21).unwrap();
    let run = || {
        let kernel: Kernel = BSplineKernel::smooth_init(52, 0.3, 2).unwrap().into();
        single_thread(|| train(&small_config(TrainMode::Joint, grid), kernel, small_encoder(5), None).unwrap())
    };
    let (a, b) = (run(), run());
    // Everything except wall-clock time.
    assert_eq!(serde_json::to_vec(&a.report).unwrap(), serde_json::to_vec(&b.report).unwrap());
    assert_eq!(a.report.loss_trace().len(), 3);
}

#[test]
fn two_exp_checkpoints_stay_in_the_box() {
    let dir = tempfile::tempdir().unwrap();
    let init = TwoExpKernel::new(13.0, 14.0).unwrap();
    let bounds = init.bounds();
    let grid = SampleGrid::causal_window(-0.48, 0.52, 21).unwrap();
    let mut cfg = small_config(TrainMode::Joint, grid);
    cfg.checkpoint_every = 1;
    // A large kernel rate pushes the poles against the gap constraint.
    cfg.lr_kernel = 0.5;
    train(&cfg, init.into(), small_encoder(6), Some(dir.path())).unwrap();
    let mut seen = 0;
    for entry in std::fs::read_dir(dir.path().join("checkpoints")).unwrap() {
        let path = entry.unwrap().path();
        if !path.file_name().unwrap().to_string_lossy().starts_with("kernel_") {
            continue;
        }
        let tensors = checkpoint::read_tensors(std::fs::File::open(&path).unwrap()).unwrap();
        let logits = tensors[0].1.data();
        let k = TwoExpKernel::from_logits(logits[0], logits[1], bounds).unwrap();
        let (a1, a2) = k.alphas();
        assert!(bounds.alpha_min <= a1 && a1 < a2 && a2 <= bounds.alpha_max, "{a1} {a2}");
        assert!(a2 - a1 >= bounds.min_gap, "{a1} {a2}");
        seen += 1;
    }
    assert_eq!(seen, 3);
}

// A tiny AdamW step moves each coordinate by about lr against its gradient sign,
// so the first-order change is −lr·‖g‖₁ ≤ 0.
#[test]
fn one_small_step_does_not_increase_batch_loss() {
    let grid = SampleGrid::observation_window(-0.48, 0.52, 21).unwrap();
    let kernel: Kernel = BSplineKernel::gaussian_init(52, 0.3, 0.038).unwrap().into();
    let spec = ExampleSpec {
        ranges: GenerationRanges::standard(2),
        resolution_band: None,
        snr: SnrPolicy::Uniform { lo_db: 5.0, hi_db: 40.0 },
        n: 21,
    };
    for batch in 0..10u64 {
        let draws: Vec<ExampleDraw> = (0..32).map(|i| ExampleDraw::generate(&spec, 77, batch, i).unwrap()).collect();
        let mut enc = small_encoder(batch);
        let before = batch_gradients(&enc, &kernel, &draws, PulseShape::Dirac, &grid, false, 1.0 / 32.0).unwrap();
        let params = enc.params_mut();
        for (i, g) in before.encoder.iter().enumerate() {
            params.get_mut(ParamId::from_index(i)).grad.data_mut().copy_from_slice(g);
        }
        AdamW::default().step(params, 1e-6).unwrap();
        let after = batch_gradients(&enc, &kernel, &draws, PulseShape::Dirac, &grid, false, 1.0 / 32.0).unwrap();
        assert!(after.loss <= before.loss, "batch {batch}: {} -> {}", before.loss, after.loss);
    }
}

#[test]
fn encoder_only_leaves_kernel_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let grid = SampleGrid::observation_window(-0.48, 0.52, 21).unwrap();
    let kernel = Kernel::standard_gaussian_pair();
    let before = serde_json::to_vec(&kernel.to_json()).unwrap();
    let out = train(&small_config(TrainMode::EncoderOnly, grid), kernel, small_encoder(8), Some(dir.path())).unwrap();
    assert_eq!(serde_json::to_vec(&out.kernel.to_json()).unwrap(), before);
    let saved: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("kernel.json")).unwrap()).unwrap();
    assert_eq!(serde_json::to_vec(&saved).unwrap(), before);
}
