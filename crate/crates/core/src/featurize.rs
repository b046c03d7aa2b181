//! Daily features, glycemic-control labels, next-day pairing and the
//! chronological train/test split.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{InsulinKind, SubjectDayBundle, SubjectId};
use crate::par;

pub const N_FEATURES: usize = 7;
pub const N_CLASSES: usize = 3;

/// Column order of every feature vector in the crate.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "tir",
    "tbr",
    "tar",
    "correction_bolus",
    "meal",
    "meal_bolus",
    "total_bolus",
];

pub type FeatureVector = [f64; N_FEATURES];

/// Lower TIR bound (inclusive) in mg/dL.
pub const RANGE_LOW: f64 = 70.0;
/// Upper TIR bound (inclusive) in mg/dL.
pub const RANGE_HIGH: f64 = 180.0;

/// Daily TIR strictly above this is Good.
pub const GOOD_ABOVE: f64 = 0.70;
/// Daily TIR strictly below this is Poor.
pub const POOR_BELOW: f64 = 0.55;

/// 50% of the 288 readings expected at a 5-minute cadence.
pub const DEFAULT_MIN_CGM: usize = 144;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlycemicClass {
    Good = 0,
    Moderate = 1,
    Poor = 2,
}

impl GlycemicClass {
    pub const ALL: [GlycemicClass; N_CLASSES] = [
        GlycemicClass::Good,
        GlycemicClass::Moderate,
        GlycemicClass::Poor,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GlycemicClass::Good => "good",
            GlycemicClass::Moderate => "moderate",
            GlycemicClass::Poor => "poor",
        }
    }
}

impl fmt::Display for GlycemicClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeFractions {
    pub tir: f64,
    pub tbr: f64,
    pub tar: f64,
}

/// Fractions of readings in, below and above the 70–180 mg/dL range.
pub fn compute_ranges(readings: &[f64]) -> Result<RangeFractions> {
    if readings.is_empty() {
        return Err(Error::EmptyDay);
    }
    let (mut below, mut above) = (0usize, 0usize);
    for &bg in readings {
        if bg < RANGE_LOW {
            below += 1;
        } else if bg > RANGE_HIGH {
            above += 1;
        }
    }
    let n = readings.len();
    let within = n - below - above;
    let n = n as f64;
    Ok(RangeFractions {
        tir: within as f64 / n,
        tbr: below as f64 / n,
        tar: above as f64 / n,
    })
}

pub fn label_of(tir: f64) -> Result<GlycemicClass> {
    if !(0.0..=1.0).contains(&tir) {
        return Err(Error::Domain(tir));
    }
    Ok(if tir > GOOD_ABOVE {
        GlycemicClass::Good
    } else if tir < POOR_BELOW {
        GlycemicClass::Poor
    } else {
        GlycemicClass::Moderate
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyFeatures {
    pub subject: SubjectId,
    pub date: NaiveDate,
    pub tir: f64,
    pub tbr: f64,
    pub tar: f64,
    pub correction_bolus: f64,
    pub meal: f64,
    pub meal_bolus: f64,
    pub total_bolus: f64,
    pub cgm_count: usize,
}

impl DailyFeatures {
    pub fn vector(&self) -> FeatureVector {
        [
            self.tir,
            self.tbr,
            self.tar,
            self.correction_bolus,
            self.meal,
            self.meal_bolus,
            self.total_bolus,
        ]
    }

    pub fn set_vector(&mut self, v: &FeatureVector) {
        self.tir = v[0];
        self.tbr = v[1];
        self.tar = v[2];
        self.correction_bolus = v[3];
        self.meal = v[4];
        self.meal_bolus = v[5];
        self.total_bolus = v[6];
    }

    /// Range fractions sum to one and aggregates are non-negative.
    pub fn satisfies_invariants(&self) -> bool {
        let v = self.vector();
        let sum_ok = self.cgm_count == 0 || (self.tir + self.tbr + self.tar - 1.0).abs() <= 1e-9;
        let ranges_ok = v[..3].iter().all(|f| (0.0..=1.0).contains(f));
        sum_ok && ranges_ok && v[3..].iter().all(|a| *a >= 0.0)
    }
}

/// Sums one subject-day into its feature vector. Days with fewer than
/// `min_cgm` readings are refused rather than fabricated.
pub fn daily_features(bundle: &SubjectDayBundle, min_cgm: usize) -> Result<DailyFeatures> {
    let cgm_count = bundle.cgm.len();
    if cgm_count < min_cgm.max(1) {
        return Err(Error::InsufficientCoverage {
            subject: bundle.subject.to_string(),
            date: bundle.date,
            cgm_count,
        });
    }
    let bg: Vec<f64> = bundle.cgm.iter().map(|r| r.bg).collect();
    let ranges = compute_ranges(&bg)?;
    let units_of = |kind: InsulinKind| -> f64 {
        bundle
            .insulin
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.units)
            .sum()
    };
    Ok(DailyFeatures {
        subject: bundle.subject.clone(),
        date: bundle.date,
        tir: ranges.tir,
        tbr: ranges.tbr,
        tar: ranges.tar,
        correction_bolus: units_of(InsulinKind::Correction),
        meal: bundle.meals.iter().map(|m| m.carbs).sum(),
        meal_bolus: units_of(InsulinKind::Meal),
        total_bolus: units_of(InsulinKind::Total),
        cgm_count,
    })
}

/// Featurizes every bundle, dropping (and counting) low-coverage days.
pub fn featurize_bundles(
    bundles: &[SubjectDayBundle],
    min_cgm: usize,
) -> (Vec<DailyFeatures>, usize) {
    let results = par::map_slice(bundles, |b| daily_features(b, min_cgm));
    let mut days = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(d) => days.push(d),
            Err(e) => {
                log::debug!("skipping day: {e}");
                skipped += 1;
            }
        }
    }
    (days, skipped)
}

/// Day-d features with the glycemic class of day d+1.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: DailyFeatures,
    pub label: GlycemicClass,
    pub label_date: NaiveDate,
}

impl LabeledExample {
    pub fn subject(&self) -> &SubjectId {
        &self.features.subject
    }

    pub fn feature_date(&self) -> NaiveDate {
        self.features.date
    }
}

/// Pairs each day with the next calendar day of the same subject. Gaps in
/// the date sequence produce no example.
pub fn pair_cross_day(days: &[DailyFeatures]) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for pair in days.windows(2) {
        let (today, tomorrow) = (&pair[0], &pair[1]);
        if today.subject != tomorrow.subject
            || today.date.checked_add_days(Days::new(1)) != Some(tomorrow.date)
        {
            continue;
        }
        out.push(LabeledExample {
            features: today.clone(),
            label: label_of(tomorrow.tir)?,
            label_date: tomorrow.date,
        });
    }
    Ok(out)
}

/// Per-feature z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: FeatureVector,
    pub std: FeatureVector,
}

impl Normalization {
    pub fn fit(rows: &[FeatureVector]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidSplit("no training rows".into()));
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; N_FEATURES];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; N_FEATURES];
        for row in rows {
            for j in 0..N_FEATURES {
                std[j] += (row[j] - mean[j]).powi(2);
            }
        }
        for (j, s) in std.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12) {
                return Err(Error::DegenerateFeature(FEATURE_NAMES[j]));
            }
        }
        Ok(Normalization { mean, std })
    }

    pub fn apply(&self, x: &FeatureVector) -> FeatureVector {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.std[j])
    }

    pub fn apply_all(&self, rows: &[FeatureVector]) -> Vec<FeatureVector> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    /// Fitted on `train` only.
    pub normalization: Normalization,
}

pub const MIN_EXAMPLES: usize = 10;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Chronological per-subject split: the last ⌈fraction·n⌉ examples of each
/// subject are held out.
pub fn split_chronological(
    examples: &[LabeledExample],
    test_fraction: f64,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>)> {
    if examples.len() < MIN_EXAMPLES {
        return Err(Error::InvalidSplit(format!(
            "need at least {MIN_EXAMPLES} examples, got {}",
            examples.len()
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let mut by_subject: BTreeMap<&SubjectId, Vec<&LabeledExample>> = BTreeMap::new();
    for ex in examples {
        by_subject.entry(ex.subject()).or_default().push(ex);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut rows) in by_subject {
        rows.sort_by_key(|e| e.feature_date());
        // Guard against 0.2 * 5 landing a hair above 1.
        let n_test = ((test_fraction * rows.len() as f64) - 1e-9).ceil() as usize;
        let cut = rows.len() - n_test.min(rows.len());
        train.extend(rows[..cut].iter().map(|e| (*e).clone()));
        test.extend(rows[cut..].iter().map(|e| (*e).clone()));
    }
    Ok((train, test))
}

pub fn split_and_normalize(
    examples: &[LabeledExample],
    test_fraction: f64,
) -> Result<SplitDataset> {
    let (train, test) = split_chronological(examples, test_fraction)?;
    let rows: Vec<FeatureVector> = train.iter().map(|e| e.features.vector()).collect();
    let normalization = Normalization::fit(&rows)?;
    Ok(SplitDataset {
        train,
        test,
        normalization,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRow {
    subject: SubjectId,
    date: NaiveDate,
    tir: f64,
    tbr: f64,
    tar: f64,
    correction_bolus: f64,
    meal: f64,
    meal_bolus: f64,
    total_bolus: f64,
    cgm_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExampleRow {
    subject: SubjectId,
    date: NaiveDate,
    tir: f64,
    tbr: f64,
    tar: f64,
    correction_bolus: f64,
    meal: f64,
    meal_bolus: f64,
    total_bolus: f64,
    cgm_count: usize,
    label: usize,
    label_date: NaiveDate,
}

impl From<&DailyFeatures> for FeatureRow {
    fn from(d: &DailyFeatures) -> Self {
        FeatureRow {
            subject: d.subject.clone(),
            date: d.date,
            tir: d.tir,
            tbr: d.tbr,
            tar: d.tar,
            correction_bolus: d.correction_bolus,
            meal: d.meal,
            meal_bolus: d.meal_bolus,
            total_bolus: d.total_bolus,
            cgm_count: d.cgm_count,
        }
    }
}

impl From<FeatureRow> for DailyFeatures {
    fn from(r: FeatureRow) -> Self {
        DailyFeatures {
            subject: r.subject,
            date: r.date,
            tir: r.tir,
            tbr: r.tbr,
            tar: r.tar,
            correction_bolus: r.correction_bolus,
            meal: r.meal,
            meal_bolus: r.meal_bolus,
            total_bolus: r.total_bolus,
            cgm_count: r.cgm_count,
        }
    }
}

/// `subject,date,tir,tbr,tar,correction_bolus,meal,meal_bolus,total_bolus,cgm_count`
pub fn write_features_csv(path: &Path, days: &[DailyFeatures]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    for d in days {
        w.serialize(FeatureRow::from(d)).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_features_csv(path: &Path) -> Result<Vec<DailyFeatures>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    r.deserialize::<FeatureRow>()
        .map(|row| row.map(DailyFeatures::from).map_err(Error::csv(path)))
        .collect()
}

/// Feature columns followed by `label,label_date`; `label` is the class code.
pub fn write_examples_csv(path: &Path, examples: &[LabeledExample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    for ex in examples {
        let f = FeatureRow::from(&ex.features);
        w.serialize(ExampleRow {
            subject: f.subject,
            date: f.date,
            tir: f.tir,
            tbr: f.tbr,
            tar: f.tar,
            correction_bolus: f.correction_bolus,
            meal: f.meal,
            meal_bolus: f.meal_bolus,
            total_bolus: f.total_bolus,
            cgm_count: f.cgm_count,
            label: ex.label.code(),
            label_date: ex.label_date,
        })
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_examples_csv(path: &Path) -> Result<Vec<LabeledExample>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<ExampleRow>().enumerate() {
        let row = row.map_err(Error::csv(path))?;
        let label = GlycemicClass::from_code(row.label).ok_or_else(|| Error::MalformedRow {
            file: path.to_path_buf(),
            line: i as u64 + 2,
            reason: format!("label code {} not in 0..3", row.label),
        })?;
        out.push(LabeledExample {
            features: DailyFeatures {
                subject: row.subject,
                date: row.date,
                tir: row.tir,
                tbr: row.tbr,
                tar: row.tar,
                correction_bolus: row.correction_bolus,
                meal: row.meal,
                meal_bolus: row.meal_bolus,
                total_bolus: row.total_bolus,
                cgm_count: row.cgm_count,
            },
            label,
            label_date: row.label_date,
        });
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn day(subject: &str, date: &str, tir: f64) -> DailyFeatures {
        let rest = 1.0 - tir;
        DailyFeatures {
            subject: SubjectId::new(subject).unwrap(),
            date: date.parse().unwrap(),
            tir,
            tbr: rest * 0.25,
            tar: rest * 0.75,
            correction_bolus: 9.0,
            meal: 170.0,
            meal_bolus: 15.0,
            total_bolus: 42.0,
            cgm_count: 288,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::day;
    use super::*;
    use crate::ingest::{CgmReading, InsulinEvent, MealEvent};
    use chrono::NaiveDateTime;
    use proptest::prelude::*;

    #[test]
    fn ranges_examples() {
        let r = compute_ranges(&[100.0, 120.0, 150.0]).unwrap();
        assert_eq!((r.tir, r.tbr, r.tar), (1.0, 0.0, 0.0));
        let r = compute_ranges(&[65.0, 100.0, 190.0, 150.0]).unwrap();
        assert_eq!((r.tir, r.tbr, r.tar), (0.5, 0.25, 0.25));
        let r = compute_ranges(&[70.0, 180.0]).unwrap();
        assert_eq!((r.tir, r.tbr, r.tar), (1.0, 0.0, 0.0));
        assert!(matches!(compute_ranges(&[]), Err(Error::EmptyDay)));
    }

    #[test]
    fn label_boundaries() {
        assert_eq!(label_of(0.74).unwrap(), GlycemicClass::Good);
        assert_eq!(label_of(0.70).unwrap(), GlycemicClass::Moderate);
        assert_eq!(label_of(0.55).unwrap(), GlycemicClass::Moderate);
        assert_eq!(label_of(0.54).unwrap(), GlycemicClass::Poor);
        assert_eq!(label_of(0.0).unwrap(), GlycemicClass::Poor);
        assert_eq!(label_of(1.0).unwrap(), GlycemicClass::Good);
        assert!(matches!(label_of(1.01), Err(Error::Domain(_))));
        assert!(label_of(f64::NAN).is_err());
    }

    #[test]
    fn class_codes_are_stable() {
        for (i, c) in GlycemicClass::ALL.iter().enumerate() {
            assert_eq!(c.code(), i);
            assert_eq!(GlycemicClass::from_code(i), Some(*c));
        }
        assert_eq!(
            serde_json::to_string(&GlycemicClass::Moderate).unwrap(),
            "\"moderate\""
        );
    }

    fn bundle(n_cgm: usize) -> SubjectDayBundle {
        let subject = SubjectId::new("S01").unwrap();
        let start: NaiveDateTime = "2013-04-02T00:00:00".parse().unwrap();
        let at = |min: i64| start + chrono::Duration::minutes(min);
        let ins = |kind, units| InsulinEvent {
            subject: subject.clone(),
            timestamp: at(60),
            kind,
            units,
        };
        let mut insulin = vec![
            ins(InsulinKind::Correction, 1.5),
            ins(InsulinKind::Correction, 2.0),
            ins(InsulinKind::Meal, 4.0),
        ];
        insulin.extend((0..10).map(|_| ins(InsulinKind::Total, 0.3)));
        SubjectDayBundle {
            subject: subject.clone(),
            date: start.date(),
            cgm: (0..n_cgm)
                .map(|i| CgmReading {
                    subject: subject.clone(),
                    timestamp: at(5 * i as i64),
                    bg: 70.0 + (i % 111) as f64,
                })
                .collect(),
            insulin,
            meals: [45.0, 60.0]
                .iter()
                .map(|&carbs| MealEvent {
                    subject: subject.clone(),
                    timestamp: at(55),
                    carbs,
                })
                .collect(),
        }
    }

    #[test]
    fn daily_sums() {
        let d = daily_features(&bundle(288), DEFAULT_MIN_CGM).unwrap();
        assert_eq!(d.correction_bolus, 3.5);
        assert_eq!(d.meal_bolus, 4.0);
        assert!((d.total_bolus - 3.0).abs() < 1e-12);
        assert_eq!(d.meal, 105.0);
        assert_eq!(d.tir, 1.0);
        assert_eq!(d.cgm_count, 288);
        assert!(d.satisfies_invariants());

        let mut b = bundle(288);
        b.meals.clear();
        assert_eq!(daily_features(&b, DEFAULT_MIN_CGM).unwrap().meal, 0.0);
    }

    #[test]
    fn coverage_threshold() {
        assert!(daily_features(&bundle(144), DEFAULT_MIN_CGM).is_ok());
        assert!(matches!(
            daily_features(&bundle(143), DEFAULT_MIN_CGM),
            Err(Error::InsufficientCoverage { cgm_count: 143, .. })
        ));
        let (days, skipped) = featurize_bundles(&[bundle(288), bundle(10)], DEFAULT_MIN_CGM);
        assert_eq!((days.len(), skipped), (1, 1));
    }

    #[test]
    fn pairing() {
        let days = vec![
            day("A", "2013-04-02", 0.9),
            day("A", "2013-04-03", 0.8),
            day("A", "2013-04-04", 0.5),
        ];
        let ex = pair_cross_day(&days).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[1].features.tir, 0.8);
        assert_eq!(ex[1].label, GlycemicClass::Poor);
        assert_eq!(ex[0].label, GlycemicClass::Good);

        let gap = vec![day("A", "2013-04-02", 0.9), day("A", "2013-04-04", 0.9)];
        assert!(pair_cross_day(&gap).unwrap().is_empty());

        let cross_subject = vec![day("A", "2013-04-02", 0.9), day("B", "2013-04-03", 0.9)];
        assert!(pair_cross_day(&cross_subject).unwrap().is_empty());
    }

    fn examples(subject: &str, n: usize) -> Vec<LabeledExample> {
        let days: Vec<DailyFeatures> = (0..=n)
            .map(|i| {
                let mut d = day(subject, "2013-01-01", 0.5 + 0.01 * i as f64);
                d.date = d.date + Days::new(i as u64);
                d.meal = 100.0 + i as f64;
                d.correction_bolus = (i % 3) as f64;
                d.meal_bolus = (i % 5) as f64;
                d.total_bolus = 30.0 + (i % 7) as f64;
                d
            })
            .collect();
        pair_cross_day(&days).unwrap()
    }

    #[test]
    fn chronological_split() {
        let ex = examples("A", 10);
        let s = split_and_normalize(&ex, 0.2).unwrap();
        assert_eq!(s.test.len(), 2);
        let last_train = s.train.iter().map(|e| e.feature_date()).max().unwrap();
        assert!(s.test.iter().all(|e| e.feature_date() > last_train));

        let mut two = examples("A", 5);
        two.extend(examples("B", 5));
        let s = split_and_normalize(&two, 0.2).unwrap();
        assert_eq!(s.test.len(), 2);
        assert_eq!(
            s.test
                .iter()
                .filter(|e| e.subject().as_str() == "A")
                .count(),
            1
        );

        assert!(matches!(
            split_and_normalize(&ex[..9], 0.2),
            Err(Error::InvalidSplit(_))
        ));
        assert!(matches!(
            split_and_normalize(&ex, 1.0),
            Err(Error::InvalidSplit(_))
        ));
    }

    #[test]
    fn population_std() {
        let mut a = [1.0; N_FEATURES];
        let mut b = [2.0; N_FEATURES];
        a[0] = 1.0;
        b[0] = 3.0;
        b[1] = 5.0;
        let norm = Normalization::fit(&[a, b]).unwrap();
        assert_eq!(norm.mean[0], 2.0);
        assert_eq!(norm.std[0], 1.0);
        assert_eq!(norm.apply(&b)[0], 1.0);

        let err = Normalization::fit(&[a, a]).unwrap_err();
        assert!(matches!(err, Error::DegenerateFeature("tir")));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ex = examples("S 1", 12);
        let path = dir.path().join("examples.csv");
        write_examples_csv(&path, &ex).unwrap();
        assert_eq!(read_examples_csv(&path).unwrap(), ex);

        let days: Vec<DailyFeatures> = ex.iter().map(|e| e.features.clone()).collect();
        let path = dir.path().join("features.csv");
        write_features_csv(&path, &days).unwrap();
        assert_eq!(read_features_csv(&path).unwrap(), days);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with(
            "subject,date,tir,tbr,tar,correction_bolus,meal,meal_bolus,total_bolus,cgm_count\n"
        ));
    }

    proptest! {
        #[test]
        fn ranges_partition(readings in proptest::collection::vec(20.0f64..600.0, 1..400)) {
            let r = compute_ranges(&readings).unwrap();
            prop_assert!((r.tir + r.tbr + r.tar - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn split_never_leaks(sizes in proptest::collection::vec(1usize..30, 1..5), frac in 0.05f64..0.95) {
            let mut all = Vec::new();
            for (i, n) in sizes.iter().enumerate() {
                all.extend(examples(&format!("S{i}"), *n));
            }
            prop_assume!(all.len() >= MIN_EXAMPLES);
            let (train, test) = split_chronological(&all, frac).unwrap();
            prop_assert_eq!(train.len() + test.len(), all.len());
            for t in &test {
                prop_assert!(train.iter().all(|r| r.subject() != t.subject() || r.feature_date() < t.feature_date()));
            }
        }
    }
}
