//! Seeded synthetic movement generator for desk-scale runs.
//!
//! The generator is defined by two independent random streams:
//!
//! * a count stream, `ChaCha8Rng::seed_from_u64(seed)`, which draws one
//!   Poisson count per `(day, slot, hotspot)` in that nesting order, with
//!   rate `base_rate * daily_profile[slot] * weekly_profile[day % 7]`;
//!   zero-rate cells draw nothing and yield zero;
//! * a detail stream, `ChaCha8Rng::seed_from_u64(seed ^ DETAIL_STREAM_SALT)`,
//!   which draws positions, times, and payload for each record in the same order.

use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{BBox, LonLat};
use crate::ingest::{local_offset, MovementRecord, Span, SLOTS_PER_DAY};

pub const DETAIL_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const SLOT_SECONDS: i64 = 30 * 60;
const TAXI_FLEET: u32 = 5000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("hotspot spec is empty")]
    NoHotspots,
    #[error("at least 8 days are required, got {0}")]
    TooFewDays(usize),
    #[error("daily profile needs {SLOTS_PER_DAY} values, got {0}")]
    DailyProfile(usize),
    #[error("weekly profile needs 7 values, got {0}")]
    WeeklyProfile(usize),
    #[error("invalid hotspot {index}: {reason}")]
    Hotspot { index: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
    #[error("json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub lon: f64,
    pub lat: f64,
    pub sigma_deg: f64,
    pub base_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub days: usize,
    pub hotspots: Vec<Hotspot>,
    pub daily_profile: Vec<f64>,
    pub weekly_profile: Vec<f64>,
}

fn bump(x: f64, center: f64, width: f64) -> f64 {
    (-0.5 * ((x - center) / width).powi(2)).exp()
}

/// Demand shape per half-hour: a post-midnight trough, a morning peak at
/// slot 18 (09:00), a midday plateau, and an evening peak.
pub fn default_daily_profile() -> Vec<f64> {
    (0..SLOTS_PER_DAY)
        .map(|s| {
            let x = s as f64;
            let late_night = 0.35 * bump(x, -1.0, 3.0) + 0.35 * bump(x, 48.0, 3.0);
            0.05 + late_night + 1.0 * bump(x, 18.0, 2.5) + 0.55 * bump(x, 27.0, 5.0) + 0.8 * bump(x, 37.0, 3.5)
        })
        .collect()
}

impl SynthSpec {
    /// Three urban hotspots plus a wide, weak background over the Shenzhen extent.
    pub fn default_with(seed: u64, days: usize) -> Self {
        Self {
            seed,
            days,
            hotspots: vec![
                Hotspot { lon: 114.055, lat: 22.540, sigma_deg: 0.030, base_rate: 60.0 },
                Hotspot { lon: 114.120, lat: 22.550, sigma_deg: 0.025, base_rate: 40.0 },
                Hotspot { lon: 113.935, lat: 22.525, sigma_deg: 0.035, base_rate: 30.0 },
                Hotspot { lon: 114.200, lat: 22.650, sigma_deg: 0.250, base_rate: 25.0 },
            ],
            daily_profile: default_daily_profile(),
            weekly_profile: vec![1.0, 1.0, 1.0, 1.0, 1.05, 0.85, 0.8],
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.hotspots.is_empty() {
            return Err(SynthError::NoHotspots);
        }
        if self.days < 8 {
            return Err(SynthError::TooFewDays(self.days));
        }
        if self.daily_profile.len() != SLOTS_PER_DAY {
            return Err(SynthError::DailyProfile(self.daily_profile.len()));
        }
        if self.weekly_profile.len() != 7 {
            return Err(SynthError::WeeklyProfile(self.weekly_profile.len()));
        }
        for (index, h) in self.hotspots.iter().enumerate() {
            let bad = |reason: &str| SynthError::Hotspot { index, reason: reason.into() };
            if !(h.base_rate.is_finite() && h.base_rate >= 0.0) {
                return Err(bad("base_rate must be finite and non-negative"));
            }
            if !(h.sigma_deg.is_finite() && h.sigma_deg >= 0.0) {
                return Err(bad("sigma_deg must be finite and non-negative"));
            }
            if !h.lon.is_finite() || !h.lat.is_finite() {
                return Err(bad("non-finite center"));
            }
        }
        if self
            .daily_profile
            .iter()
            .chain(&self.weekly_profile)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(SynthError::Json("profiles must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn rate(&self, hotspot: usize, day: usize, slot: usize) -> f64 {
        self.hotspots[hotspot].base_rate * self.daily_profile[slot] * self.weekly_profile[day % 7]
    }

    pub fn from_json_file(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| SynthError::Json(e.to_string()))
    }
}

/// Poisson counts indexed `[(day * 48 + slot) * hotspots + hotspot]`.
pub fn synth_counts(spec: &SynthSpec) -> Result<Vec<u64>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut counts = Vec::with_capacity(spec.days * SLOTS_PER_DAY * spec.hotspots.len());
    for day in 0..spec.days {
        for slot in 0..SLOTS_PER_DAY {
            for h in 0..spec.hotspots.len() {
                let rate = spec.rate(h, day, slot);
                let n = if rate > 0.0 {
                    Poisson::new(rate).expect("positive finite rate").sample(&mut rng) as u64
                } else {
                    0
                };
                counts.push(n);
            }
        }
    }
    Ok(counts)
}

fn gaussian(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(mean, sigma).expect("finite sigma").sample(rng)
    } else {
        mean
    }
}

fn clamp_to(b: &BBox, p: LonLat) -> LonLat {
    LonLat::new(p.lon.clamp(b.lon_min, b.lon_max), p.lat.clamp(b.lat_min, b.lat_max))
}

/// Generates movement records starting at local midnight of `start`, sorted by get-on time.
pub fn synth_generate(spec: &SynthSpec, bbox: &BBox, start: NaiveDate) -> Result<Vec<MovementRecord>, SynthError> {
    bbox.validate().map_err(|e| SynthError::Json(e.to_string()))?;
    let counts = synth_counts(spec)?;
    let span = Span::from_days(start, spec.days).map_err(|e| SynthError::Json(e.to_string()))?;
    let t0 = span.start_time();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ DETAIL_STREAM_SALT);
    let total: u64 = counts.iter().sum();
    let mut out = Vec::with_capacity(total as usize);
    let k = spec.hotspots.len();
    for (cell, &n) in counts.iter().enumerate() {
        let h = &spec.hotspots[cell % k];
        let abs_slot = (cell / k) as i64;
        for _ in 0..n {
            let on_pos = clamp_to(
                bbox,
                LonLat::new(gaussian(&mut rng, h.lon, h.sigma_deg), gaussian(&mut rng, h.lat, h.sigma_deg)),
            );
            let offset_s = rng.random_range(0..SLOT_SECONDS);
            let duration_s = rng.random_range(300..=3600i64);
            let off_pos = clamp_to(
                bbox,
                LonLat::new(gaussian(&mut rng, on_pos.lon, 0.02), gaussian(&mut rng, on_pos.lat, 0.02)),
            );
            let taxi = rng.random_range(0..TAXI_FLEET);
            let on_time = t0 + Duration::seconds(abs_slot * SLOT_SECONDS + offset_s);
            // ~103 km per degree of longitude at this latitude, ~111 km per degree of latitude.
            let dx = (off_pos.lon - on_pos.lon) * 103.0;
            let dy = (off_pos.lat - on_pos.lat) * 111.0;
            let mileage = ((dx * dx + dy * dy).sqrt() * 1.3 * 100.0).round() / 100.0;
            out.push(MovementRecord {
                taxi_id: format!("T{taxi:05}"),
                on_time: on_time.with_timezone(&local_offset()),
                on_pos,
                off_time: (on_time + Duration::seconds(duration_s)).with_timezone(&local_offset()),
                off_pos,
                price: ((10.0 + 2.6 * mileage) * 10.0).round() / 10.0,
                mileage,
            });
        }
    }
    out.sort_by(|a, b| a.on_time.cmp(&b.on_time).then_with(|| a.taxi_id.cmp(&b.taxi_id)));
    Ok(out)
}
