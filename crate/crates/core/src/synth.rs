//! Synthetic multi-subject CGM, bolus and meal streams.
//!
//! Each subject carries a standard-normal latent control level `w`. The
//! level follows
//!
//! ```text
//! w[d+1] = a·w[d] + b·z[d] + sqrt(1 − a² − b²)·ε
//! ```
//!
//! where `z[d]` is the standardized log of day `d`'s total insulin, so both
//! today's glucose profile and today's insulin carry signal about tomorrow.
//! `Φ(w)` picks the day's control class according to the configured mix and
//! a target in-range count, which a mean-reverting glucose path is rank-mapped
//! onto exactly.

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::GlycemicClass;
use crate::ingest::{
    bundle_by_day, CgmReading, InsulinEvent, InsulinKind, MealEvent, RawEvent, StreamKind,
    SubjectDayBundle, SubjectId, TIMESTAMP_FORMAT,
};
use crate::par;
use crate::seed::{child_seed, derive_seed};

pub const READINGS_PER_DAY: usize = 288;
const CGM_STEP_MINUTES: i64 = 5;
const TOTAL_BOLUS_EVENTS: usize = 96;

// Value bands for rank-mapped readings; all within the device's 39–401 range.
const BELOW_BAND: (f64, f64) = (40.0, 69.0);
const IN_BAND: (f64, f64) = (72.0, 178.0);
const ABOVE_BAND: (f64, f64) = (182.0, 400.0);
const OU_PERSISTENCE: f64 = 0.98;
const MAX_BELOW_SHARE: f64 = 0.16;

// Daily insulin and carbohydrate scales.
const MEAL_CARBS_MEAN: f64 = 48.7;
const MEAL_CARBS_LOG_SD: f64 = 0.5;
const CORRECTION_MEAN: f64 = 3.1;
const CORRECTION_LOG_SD: f64 = 0.6;
const TOTAL_BOLUS_MEAN: f64 = 42.4;
const TOTAL_BOLUS_SIGNAL: f64 = 0.4;
const TOTAL_BOLUS_NOISE: f64 = 0.15;

/// Strength of the day-to-day dependence of the latent control level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// Weight on the previous day's level.
    pub persistence: f64,
    /// Weight on the previous day's standardized total insulin.
    pub insulin: f64,
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling {
            persistence: 0.6,
            insulin: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub days_per_subject: usize,
    pub seed: u64,
    /// Target Good / Moderate / Poor day proportions.
    pub control_mix: [f64; 3],
    pub coupling: Coupling,
    pub start_date: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 30,
            days_per_subject: 90,
            seed: 42,
            control_mix: [0.6, 0.2, 0.2],
            coupling: Coupling::default(),
            start_date: NaiveDate::from_ymd_opt(2013, 1, 1).expect("valid date"),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_subjects == 0 {
            return bad("at least one subject is required".into());
        }
        if self.days_per_subject < 2 {
            return bad(format!(
                "days per subject must be at least 2, got {}",
                self.days_per_subject
            ));
        }
        let mix = self.control_mix;
        if mix.iter().any(|v| !(*v >= 0.0)) || (mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!(
                "control mix {mix:?} must be non-negative and sum to 1"
            ));
        }
        let Coupling {
            persistence,
            insulin,
        } = self.coupling;
        if !(persistence >= 0.0 && insulin >= 0.0)
            || persistence * persistence + insulin * insulin > 1.0
        {
            return bad(format!(
                "coupling ({persistence}, {insulin}) must be non-negative with a² + b² ≤ 1"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthData {
    pub cgm: Vec<CgmReading>,
    pub insulin: Vec<InsulinEvent>,
    pub meals: Vec<MealEvent>,
}

impl SynthData {
    pub fn into_events(self) -> impl Iterator<Item = RawEvent> {
        self.cgm
            .into_iter()
            .map(RawEvent::Cgm)
            .chain(self.insulin.into_iter().map(RawEvent::Insulin))
            .chain(self.meals.into_iter().map(RawEvent::Meal))
    }

    pub fn into_bundles(self) -> Vec<SubjectDayBundle> {
        bundle_by_day(self.into_events())
    }

    /// Writes `cgm.csv`, `bolus.csv` and `meal.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let ts = |t: &NaiveDateTime| t.format(TIMESTAMP_FORMAT).to_string();
        let cgm = write_csv(
            dir,
            StreamKind::Cgm,
            self.cgm
                .iter()
                .map(|r| vec![r.subject.to_string(), ts(&r.timestamp), format!("{}", r.bg)]),
        )?;
        let bolus = write_csv(
            dir,
            StreamKind::Bolus,
            self.insulin.iter().map(|e| {
                vec![
                    e.subject.to_string(),
                    ts(&e.timestamp),
                    e.kind.as_str().to_string(),
                    format!("{:.3}", e.units),
                ]
            }),
        )?;
        let meal = write_csv(
            dir,
            StreamKind::Meal,
            self.meals.iter().map(|m| {
                vec![
                    m.subject.to_string(),
                    ts(&m.timestamp),
                    format!("{:.1}", m.carbs),
                ]
            }),
        )?;
        Ok(vec![cgm, bolus, meal])
    }
}

fn write_csv(
    dir: &Path,
    kind: StreamKind,
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<PathBuf> {
    let path = dir.join(kind.file_name());
    let mut w = csv::Writer::from_path(&path).map_err(Error::csv(&path))?;
    w.write_record(kind.header()).map_err(Error::csv(&path))?;
    for row in rows {
        w.write_record(&row).map_err(Error::csv(&path))?;
    }
    w.flush().map_err(Error::io(&path))?;
    Ok(path)
}

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn subject_name(index: usize) -> SubjectId {
    SubjectId::new(format!("S{:02}", index + 1)).expect("non-empty")
}

/// Generates every subject in parallel from per-subject derived seeds.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let base = derive_seed(cfg.seed, "synth");
    let subjects = par::map_range(cfg.n_subjects, |i| {
        generate_subject(cfg, i, child_seed(base, i as u64))
    });
    let mut out = SynthData::default();
    for s in subjects {
        out.cgm.extend(s.cgm);
        out.insulin.extend(s.insulin);
        out.meals.extend(s.meals);
    }
    Ok(out)
}

/// In-range reading count for a day of the given class, `t ∈ [0, 1)` being
/// the position inside that class's quantile band.
fn in_range_count(class: GlycemicClass, t: f64) -> usize {
    let n = READINGS_PER_DAY as f64;
    match class {
        GlycemicClass::Poor => ((0.25 + 0.30 * t) * n).round().clamp(72.0, 158.0) as usize,
        GlycemicClass::Moderate => (159 + (t * 43.0) as usize).min(201),
        GlycemicClass::Good => ((0.70 + 0.30 * t.sqrt()) * n).round().clamp(202.0, n) as usize,
    }
}

fn class_of(u: f64, mix: &[f64; 3]) -> (GlycemicClass, f64) {
    let (good, moderate, poor) = (mix[0], mix[1], mix[2]);
    if u < poor {
        (GlycemicClass::Poor, u / poor)
    } else if u < poor + moderate {
        (GlycemicClass::Moderate, (u - poor) / moderate)
    } else {
        (GlycemicClass::Good, ((u - poor - moderate) / good).min(1.0))
    }
}

fn band_value(band: (f64, f64), rank: usize, count: usize) -> f64 {
    (band.0 + (band.1 - band.0) * (rank as f64 + 0.5) / count as f64).round()
}

/// 288 readings with exactly `in_range` inside 70–180.
fn cgm_day(in_range: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let out_of_range = READINGS_PER_DAY - in_range;
    let below = (rng.random_range(0.0..MAX_BELOW_SHARE) * out_of_range as f64).round() as usize;
    let above = out_of_range - below;

    let mut path = Vec::with_capacity(READINGS_PER_DAY);
    let mut x: f64 = StandardNormal.sample(rng);
    let shock = (1.0 - OU_PERSISTENCE * OU_PERSISTENCE).sqrt();
    for _ in 0..READINGS_PER_DAY {
        path.push(x);
        x = OU_PERSISTENCE * x + shock * rng.sample::<f64, _>(StandardNormal);
    }
    let mut order: Vec<usize> = (0..READINGS_PER_DAY).collect();
    order.sort_by(|&a, &b| path[a].total_cmp(&path[b]).then(a.cmp(&b)));

    let mut values = vec![0.0; READINGS_PER_DAY];
    for (rank, &slot) in order.iter().enumerate() {
        values[slot] = if rank < below {
            band_value(BELOW_BAND, rank, below)
        } else if rank < below + in_range {
            band_value(IN_BAND, rank - below, in_range)
        } else {
            band_value(ABOVE_BAND, rank - below - in_range, above)
        };
    }
    values
}

fn generate_subject(cfg: &SynthConfig, index: usize, seed: u64) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subject = subject_name(index);
    let Coupling {
        persistence,
        insulin,
    } = cfg.coupling;
    let residual = (1.0 - persistence * persistence - insulin * insulin)
        .max(0.0)
        .sqrt();

    let carbs_dist = LogNormal::new(
        MEAL_CARBS_MEAN.ln() - 0.5 * MEAL_CARBS_LOG_SD.powi(2),
        MEAL_CARBS_LOG_SD,
    )
    .expect("valid lognormal");
    let correction_dist = LogNormal::new(
        CORRECTION_MEAN.ln() - 0.5 * CORRECTION_LOG_SD.powi(2),
        CORRECTION_LOG_SD,
    )
    .expect("valid lognormal");
    let carb_ratio = rng.random_range(9.0..13.0);

    let mut out = SynthData::default();
    let mut w: f64 = StandardNormal.sample(&mut rng);
    for day in 0..cfg.days_per_subject {
        let midnight = (cfg.start_date + Duration::days(day as i64))
            .and_hms_opt(0, 0, 0)
            .expect("midnight");
        let at = |minute: i64| midnight + Duration::minutes(minute);

        let (class, t) = class_of(phi(w), &cfg.control_mix);
        for (i, bg) in cgm_day(in_range_count(class, t), &mut rng)
            .into_iter()
            .enumerate()
        {
            out.cgm.push(CgmReading {
                subject: subject.clone(),
                timestamp: at(i as i64 * CGM_STEP_MINUTES),
                bg,
            });
        }

        // meals spread over 06:00–22:00, one per window, each with its bolus
        let n_meals = rng.random_range(2..=5usize);
        let window = 16 * 60 / n_meals as i64;
        for m in 0..n_meals {
            let minute = 6 * 60 + m as i64 * window + rng.random_range(0..window);
            let carbs = carbs_dist.sample(&mut rng).clamp(5.0, 300.0);
            let noise = rng.random_range(0.9..1.1);
            out.meals.push(MealEvent {
                subject: subject.clone(),
                timestamp: at(minute),
                carbs: (carbs * 10.0).round() / 10.0,
            });
            out.insulin.push(InsulinEvent {
                subject: subject.clone(),
                timestamp: at(minute),
                kind: InsulinKind::Meal,
                units: round3((carbs / carb_ratio * noise).clamp(0.03, 18.0)),
            });
        }

        let n_corrections = rng.random_range(0..=6usize);
        let mut minutes: Vec<i64> = (0..n_corrections)
            .map(|_| rng.random_range(0..24 * 60))
            .collect();
        minutes.sort_unstable();
        for minute in minutes {
            out.insulin.push(InsulinEvent {
                subject: subject.clone(),
                timestamp: at(minute),
                kind: InsulinKind::Correction,
                units: round3(correction_dist.sample(&mut rng).clamp(0.05, 30.0)),
            });
        }

        let z: f64 = StandardNormal.sample(&mut rng);
        let noise: f64 = StandardNormal.sample(&mut rng);
        let daily_total = TOTAL_BOLUS_MEAN
            * (TOTAL_BOLUS_SIGNAL * z - 0.5 * TOTAL_BOLUS_SIGNAL.powi(2)).exp()
            * (TOTAL_BOLUS_NOISE * noise - 0.5 * TOTAL_BOLUS_NOISE.powi(2)).exp();
        let shares: Vec<f64> = (0..TOTAL_BOLUS_EVENTS)
            .map(|_| rng.random_range(0.0..1.0f64))
            .collect();
        let share_sum: f64 = shares.iter().sum();
        for (i, s) in shares.iter().enumerate() {
            out.insulin.push(InsulinEvent {
                subject: subject.clone(),
                timestamp: at(i as i64 * 15),
                kind: InsulinKind::Total,
                units: round3(daily_total * s / share_sum),
            });
        }

        let eps: f64 = StandardNormal.sample(&mut rng);
        w = persistence * w + insulin * z + residual * eps;
    }
    out.insulin
        .sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.kind.cmp(&b.kind)));
    out
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}
