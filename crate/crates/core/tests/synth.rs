use std::path::Path;

use crossgp_core::ingest::load_raw_dir;
use crossgp_core::synth::{generate, SynthConfig};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n_subjects: 3,
        days_per_subject: 20,
        seed,
        ..Default::default()
    }
}

fn write(dir: &Path, cfg: &SynthConfig) -> Vec<Vec<u8>> {
    let files = generate(cfg).unwrap().write_csvs(dir).unwrap();
    files.iter().map(|f| std::fs::read(f).unwrap()).collect()
}

#[test]
fn csvs_parse_strictly() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), &small(1));
    let (bundles, rejected) = load_raw_dir(dir.path(), true).unwrap();
    assert!(rejected.is_empty());
    assert_eq!(bundles.len(), 3 * 20);
    for b in &bundles {
        assert_eq!(b.cgm.len(), 288);
        assert!(
            b.cgm.iter().all(|r| (39.0..=401.0).contains(&r.bg)),
            "{} {}",
            b.subject.as_str(),
            b.date
        );
    }
}

#[test]
fn output_depends_only_on_seed() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let first = write(a.path(), &small(8));
    assert_eq!(first, write(b.path(), &small(8)));
    assert_ne!(first, write(c.path(), &small(9)));
}

#[test]
fn tiny_config_is_reproducible() {
    let cfg = SynthConfig {
        n_subjects: 1,
        days_per_subject: 2,
        seed: 7,
        ..Default::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(write(a.path(), &cfg), write(b.path(), &cfg));
}

#[test]
fn default_cohort_daily_means_in_envelope() {
    use crossgp_core::featurize::{featurize_bundles, DEFAULT_MIN_CGM};
    let bundles = generate(&SynthConfig::default()).unwrap().into_bundles();
    let (days, skipped) = featurize_bundles(&bundles, DEFAULT_MIN_CGM);
    assert_eq!(skipped, 0);
    assert!(days.iter().all(|d| d.satisfies_invariants()));
    let n = days.len() as f64;
    let mean = |f: fn(&crossgp_core::featurize::DailyFeatures) -> f64| days.iter().map(f).sum::<f64>() / n;
    for (name, got, target) in [
        ("meal", mean(|d| d.meal), 170.31),
        ("meal_bolus", mean(|d| d.meal_bolus), 15.54),
        ("total_bolus", mean(|d| d.total_bolus), 42.40),
    ] {
        assert!((got / target - 1.0).abs() <= 0.2, "{name}: {got:.2} vs {target}");
    }
}
