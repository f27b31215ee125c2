//! Hourly load/PV profiles: CSV ingestion, rescaling to household level,
//! assignment to customers, and a seeded synthetic generator.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::customer::CustomerProfile;
use crate::env::HOURS_PER_DAY;
use crate::error::{ConfigError, DataError};

pub const LOAD_COLUMN: &str = "load_kwh";
pub const PV_COLUMN: &str = "pv_kwh";
/// `source` value selecting the built-in generator instead of a file.
pub const SYNTHETIC_SOURCE: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSeries {
    pub load: Vec<f64>,
    pub pv: Vec<f64>,
}

impl ProfileSeries {
    pub fn new(load: Vec<f64>, pv: Vec<f64>) -> Result<Self, DataError> {
        if load.len() != pv.len() {
            return Err(DataError::LengthMismatch {
                load: load.len(),
                pv: pv.len(),
            });
        }
        Ok(Self { load, pv })
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn mean_load(&self) -> f64 {
        if self.load.is_empty() {
            0.0
        } else {
            self.load.iter().sum::<f64>() / self.load.len() as f64
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let io = |e: csv::Error| DataError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record([LOAD_COLUMN, PV_COLUMN]).map_err(io)?;
        for (l, p) in self.load.iter().zip(&self.pv) {
            w.write_record([l.to_string(), p.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV path, or `"synthetic"` for the built-in generator.
    pub source: String,
    /// Optional separate profile for prosumers; `None` reuses `source`.
    pub prosumer_source: Option<String>,
    /// Mean household load after rescaling (kWh per hour).
    pub target_mean_load: f64,
    pub customer_count: usize,
    pub prosumer_fraction: f64,
    /// Per-customer multiplicative jitter amplitude.
    pub jitter: f64,
    /// Length of the synthetic series when `source` is synthetic.
    pub synthetic_length: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: SYNTHETIC_SOURCE.to_string(),
            prosumer_source: None,
            target_mean_load: 1.5,
            customer_count: 10,
            prosumer_fraction: 0.5,
            jitter: 0.2,
            synthetic_length: 8760,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.customer_count == 0 {
            return Err(ConfigError::Invalid("customer_count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.prosumer_fraction) {
            return Err(ConfigError::Invalid(format!(
                "prosumer_fraction must lie in [0, 1], got {}",
                self.prosumer_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(ConfigError::Invalid(format!(
                "jitter must lie in [0, 1), got {}",
                self.jitter
            )));
        }
        if !(self.target_mean_load > 0.0 && self.target_mean_load.is_finite()) {
            return Err(ConfigError::Invalid("target_mean_load must be positive".into()));
        }
        Ok(())
    }

    /// Number of prosumers; the first ids are prosumers.
    pub fn prosumer_count(&self) -> usize {
        // guard against 10 * 0.7 = 7.000000000000001
        let raw = self.customer_count as f64 * self.prosumer_fraction;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(self.customer_count)
    }
}

/// Reads a `load_kwh,pv_kwh` table. Row numbers in errors count data rows
/// from 1, excluding the header.
pub fn load_csv(path: &Path) -> Result<ProfileSeries, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let malformed = |e: csv::Error| DataError::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let headers = reader.headers().map_err(malformed)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let load_idx = column(LOAD_COLUMN)?;
    let pv_idx = column(PV_COLUMN)?;

    let mut load = Vec::new();
    let mut pv = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(malformed)?;
        load.push(parse_cell(path, &record, row, load_idx, LOAD_COLUMN)?);
        pv.push(parse_cell(path, &record, row, pv_idx, PV_COLUMN)?);
    }
    if load.is_empty() {
        return Err(DataError::Malformed {
            path: path.to_path_buf(),
            reason: "no data rows".into(),
        });
    }
    ProfileSeries::new(load, pv)
}

fn parse_cell(path: &Path, record: &csv::StringRecord, row: usize, idx: usize, column: &str) -> Result<f64, DataError> {
    let bad = |reason: String| DataError::BadCell {
        path: PathBuf::from(path),
        row,
        column: column.to_string(),
        reason,
    };
    let raw = record.get(idx).ok_or_else(|| bad("missing cell".into()))?;
    let v: f64 = raw.parse().map_err(|_| bad(format!("not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(bad(format!("non-finite value {raw:?}")));
    }
    if v < 0.0 {
        return Err(bad(format!("negative value {raw}")));
    }
    Ok(v)
}

/// Multiplies load and PV by `target_mean / mean(load)`.
pub fn scale_profiles(series: &ProfileSeries, target_mean: f64) -> Result<ProfileSeries, DataError> {
    let mean = series.mean_load();
    if mean <= 0.0 {
        return Err(DataError::ZeroLoad);
    }
    let factor = target_mean / mean;
    Ok(ProfileSeries {
        load: series.load.iter().map(|v| v * factor).collect(),
        pv: series.pv.iter().map(|v| v * factor).collect(),
    })
}

fn customer_rng(seed: u64, id: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn draw_jitter(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    if amplitude == 0.0 {
        0.0
    } else {
        rng.random_range(-amplitude..=amplitude)
    }
}

/// Builds the customer list from one (already scaled) series.
pub fn assign_customers(series: &ProfileSeries, cfg: &DatasetConfig) -> Vec<CustomerProfile> {
    assign_customers_split(series, series, cfg)
}

/// Like [`assign_customers`] but with a separate source for prosumers.
pub fn assign_customers_split(
    consumer_series: &ProfileSeries,
    prosumer_series: &ProfileSeries,
    cfg: &DatasetConfig,
) -> Vec<CustomerProfile> {
    let prosumers = cfg.prosumer_count();
    (0..cfg.customer_count)
        .map(|id| {
            let mut rng = customer_rng(cfg.seed, id);
            let load_mult = 1.0 + draw_jitter(&mut rng, cfg.jitter);
            let pv_mult = 1.0 + draw_jitter(&mut rng, cfg.jitter);
            if id < prosumers {
                let s = prosumer_series;
                CustomerProfile::prosumer(
                    id,
                    s.load.iter().map(|v| v * load_mult).collect(),
                    s.pv.iter().map(|v| v * pv_mult).collect(),
                )
            } else {
                CustomerProfile::consumer(id, consumer_series.load.iter().map(|v| v * load_mult).collect())
            }
        })
        .collect()
}

/// Loads (or synthesizes), rescales and assigns profiles per `cfg`.
pub fn build_customers(cfg: &DatasetConfig) -> Result<Vec<CustomerProfile>, DataError> {
    let read = |source: &str| -> Result<ProfileSeries, DataError> {
        let raw = if source == SYNTHETIC_SOURCE {
            synth_profiles(cfg.synthetic_length.max(HOURS_PER_DAY), cfg.seed)
        } else {
            load_csv(Path::new(source))?
        };
        scale_profiles(&raw, cfg.target_mean_load)
    };
    let base = read(&cfg.source)?;
    match &cfg.prosumer_source {
        Some(p) => {
            let pro = read(p)?;
            Ok(assign_customers_split(&base, &pro, cfg))
        }
        None => Ok(assign_customers(&base, cfg)),
    }
}

/// Seeded hourly household profile with morning and evening load peaks, a
/// daylight PV arc, seasonal swing, and day-level cloud cover. Hour 0 of the
/// series is midnight.
pub fn synth_profiles(length: usize, seed: u64) -> ProfileSeries {
    assert!(length >= HOURS_PER_DAY, "synthetic profile needs at least one day");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut load = Vec::with_capacity(length);
    let mut pv = Vec::with_capacity(length);
    let mut cloud = 1.0;
    for t in 0..length {
        let h = (t % HOURS_PER_DAY) as f64;
        let day = (t / HOURS_PER_DAY) as f64;
        if t % HOURS_PER_DAY == 0 {
            cloud = rng.random_range(0.3..=1.0);
        }
        let winter = (2.0 * PI * (day - 15.0) / 365.0).cos();
        let base = 0.6 + 0.25 * (-(h - 8.0).powi(2) / 8.0).exp() + 0.6 * (-(h - 19.0).powi(2) / 6.0).exp();
        let l = base * (1.0 + 0.15 * winter) * (1.0 + 0.1 * noise.sample(&mut rng));
        load.push(l.max(0.0));

        // sunrise/sunset drift by +-1.5 h over the year
        let half_day = 6.0 - 1.5 * winter;
        let (rise, set) = (12.0 - half_day, 12.0 + half_day);
        let g = if h > rise && h < set {
            let arc = (PI * (h - rise) / (set - rise)).sin();
            3.0 * arc * (1.0 - 0.3 * winter) * cloud * (1.0 + 0.05 * noise.sample(&mut rng))
        } else {
            0.0
        };
        pv.push(g.max(0.0));
    }
    ProfileSeries { load, pv }
}
