use rand::Rng;

use powerdrop::model::{backward, map_loss, sample_masks};
use powerdrop::numeric::finite_difference_check;
use powerdrop::{Architecture, DropoutSpec, Example, ModelParams, Sharing, SplitSeed};

fn check(arch: Architecture, sharing: Sharing, draw: u64) -> f64 {
    let seed = SplitSeed::new(500 + draw);
    let mut rng = seed.rng();
    let sites = arch.mask_sites();
    let spec = DropoutSpec::uniform(&sites, 0.3).with_sharing(sharing);
    let mut params = ModelParams::init(arch.clone(), &seed.child(0)).unwrap();
    // move biases away from zero too
    let flat: Vec<f64> = params
        .flatten()
        .iter()
        .map(|v| v + rng.random_range(-0.3..0.3))
        .collect();
    params.set_flat(&flat).unwrap();
    let batch: Vec<Example> = match &arch {
        Architecture::Mlp {
            inputs, classes, ..
        } => (0..3)
            .map(|_| Example::Labeled {
                features: (0..*inputs).map(|_| rng.random_range(-1.5..1.5)).collect(),
                label: rng.random_range(0..*classes),
            })
            .collect(),
        Architecture::Lstm { vocab, .. } => (0..2)
            .map(|_| Example::Sequence((0..6).map(|_| rng.random_range(0..*vocab)).collect()))
            .collect(),
    };
    let masks: Vec<_> = batch
        .iter()
        .enumerate()
        .map(|(i, ex)| sample_masks(&spec, &sites, &seed.child(1 + i as u64), ex.input().steps(), 1.0).unwrap())
        .collect();
    let wd = 0.01;
    let grads = backward(&params, &batch, &masks, wd).unwrap().flatten();
    let mut probe = params.clone();
    finite_difference_check(
        |theta| {
            probe.set_flat(theta).unwrap();
            map_loss(&probe, &batch, &masks, wd).unwrap().total
        },
        &params.flatten(),
        &grads,
        1e-5,
    )
    .unwrap()
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let arch = Architecture::Mlp {
        inputs: 3,
        hidden: vec![4, 3],
        classes: 3,
    };
    for sharing in [Sharing::SharedAcrossTime, Sharing::PerStep] {
        for draw in 0..10 {
            let err = check(arch.clone(), sharing, draw);
            assert!(err < 1e-4, "{sharing:?} draw {draw}: {err:e}");
        }
    }
}

#[test]
fn lstm_gradients_match_finite_differences() {
    for tied in [false, true] {
        let arch = Architecture::Lstm {
            vocab: 5,
            embed: 4,
            hidden: 4,
            tied,
        };
        for sharing in [Sharing::SharedAcrossTime, Sharing::PerStep] {
            for draw in 0..10 {
                let err = check(arch.clone(), sharing, draw);
                assert!(err < 1e-4, "tied {tied} {sharing:?} draw {draw}: {err:e}");
            }
        }
    }
}
