use domshift_core::divergence::{bootstrap_divergence, sample_size_sweep, CellKey, ItemSet, Metric};
use domshift_core::metadata::LesionClass;
use domshift_core::synth::{class_items, gen_corpus, monotonicity_experiment, ShiftSpec};
use domshift_core::BootstrapConfig;

fn cfg(seed: u64) -> BootstrapConfig {
    BootstrapConfig {
        seed,
        ..BootstrapConfig::default()
    }
}

#[test]
fn identical_seeds_give_identical_bootstraps() {
    let a = gen_corpus(120, 1, &ShiftSpec::identity());
    let b = gen_corpus(120, 2, &ShiftSpec::acquisition(1.0, 2));
    let ia = class_items(&a, LesionClass::Nevus, Metric::Jsd, 0);
    let ib = class_items(&b, LesionClass::Nevus, Metric::Jsd, 0);
    let key = CellKey::new("a", "b", LesionClass::Nevus);
    let first = bootstrap_divergence(&ia.as_item_set(), &ib.as_item_set(), &key, &cfg(4)).unwrap();
    let second = bootstrap_divergence(&ia.as_item_set(), &ib.as_item_set(), &key, &cfg(4)).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.values.len(), 30);
    let other = bootstrap_divergence(&ia.as_item_set(), &ib.as_item_set(), &key, &cfg(5)).unwrap();
    assert_ne!(first.values, other.values);
}

#[test]
fn sweep_entry_equals_direct_call() {
    let a = gen_corpus(100, 3, &ShiftSpec::identity());
    let b = gen_corpus(100, 4, &ShiftSpec::identity());
    let ia = class_items(&a, LesionClass::Melanoma, Metric::Cosine, 7);
    let ib = class_items(&b, LesionClass::Melanoma, Metric::Cosine, 7);
    let key = CellKey::new("a", "b", LesionClass::Melanoma);
    let sweep = sample_size_sweep(&ia.as_item_set(), &ib.as_item_set(), &key, &[50, 250], &cfg(8)).unwrap();
    let direct = bootstrap_divergence(&ia.as_item_set(), &ib.as_item_set(), &key, &cfg(8)).unwrap();
    assert_eq!(sweep[&250], direct);
    assert_eq!(sweep[&50].sample_size, 50);
}

#[test]
fn spread_shrinks_with_sample_size() {
    let a = gen_corpus(300, 10, &ShiftSpec::identity());
    let b = gen_corpus(300, 11, &ShiftSpec::acquisition(0.5, 11));
    let ia = class_items(&a, LesionClass::Nevus, Metric::Jsd, 0);
    let ib = class_items(&b, LesionClass::Nevus, Metric::Jsd, 0);
    let key = CellKey::new("a", "b", LesionClass::Nevus);
    let mut wins = 0;
    for seed in 0..10 {
        let s = sample_size_sweep(&ia.as_item_set(), &ib.as_item_set(), &key, &[50, 250], &cfg(seed)).unwrap();
        if s[&250].std < s[&50].std {
            wins += 1;
        }
    }
    assert!(wins >= 9, "{wins}/10");
}

#[test]
fn jsd_grows_and_cosine_falls_with_brightness() {
    let deltas = [0.0, 0.1, 0.2, 0.3];
    let c = BootstrapConfig {
        iterations: 10,
        sample_size: 100,
        ..cfg(1)
    };
    let jsd = monotonicity_experiment(Metric::Jsd, &deltas, 160, 5, LesionClass::Nevus, &c).unwrap();
    let means: Vec<f64> = jsd.iter().map(|(_, s)| s.mean).collect();
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    let cos = monotonicity_experiment(Metric::Cosine, &deltas, 160, 5, LesionClass::Nevus, &c).unwrap();
    let means: Vec<f64> = cos.iter().map(|(_, s)| s.mean).collect();
    assert!(means.windows(2).all(|w| w[0] > w[1]), "{means:?}");
}

#[test]
fn empty_class_is_an_error() {
    let a = gen_corpus(20, 1, &ShiftSpec::identity());
    let ia = class_items(&a, LesionClass::Nevus, Metric::Jsd, 0);
    let empty: Vec<domshift_core::divergence::PixelHistogram> = Vec::new();
    let key = CellKey::new("a", "b", LesionClass::Nevus);
    assert!(bootstrap_divergence(&ia.as_item_set(), &ItemSet::Histograms(&empty), &key, &cfg(0)).is_err());
}
