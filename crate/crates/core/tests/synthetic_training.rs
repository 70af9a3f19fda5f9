use std::time::Instant;

use ocugaze::dataset::{features_and_labels, split, synthesize, SplitSpec, SynthNoise};
use ocugaze::metrics::report;
use ocugaze::nn::{train, TrainConfig};

#[test]
fn synthetic_mixture_is_learned() {
    let start = Instant::now();
    let data = synthesize(500, SynthNoise::default(), 7).unwrap();
    let (train_set, test_set) = split(&data, &SplitSpec { balanced: true, ..SplitSpec::default() }).unwrap();
    let (x, y) = features_and_labels(&train_set);
    let outcome = train(&x, &y, &TrainConfig { seed: 7, ..TrainConfig::default() }).unwrap();
    let predictions: Vec<_> = test_set.iter().map(|i| outcome.network.predict(&i.features).class).collect();
    let truth: Vec<_> = test_set.iter().map(|i| i.label).collect();
    let r = report(&truth, &predictions).unwrap();
    assert!(start.elapsed().as_secs_f64() < 60.0);
    assert!(r.accuracy >= 0.85, "accuracy {}", r.accuracy);
    assert!(r.macro_avg.f1 >= 0.85);
    assert_eq!(format!("{:.4}", r.macro_avg.f1), format!("{:.4}", r.weighted_avg.f1));

    // Mean loss of consecutive 10-epoch blocks never goes up.
    let smoothed: Vec<f64> = outcome.loss_trace.chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in smoothed.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "{:?}", &outcome.loss_trace);
    }
}
