//! Synthetic daily weather with the ten-column schema, for demos and tests.
//!
//! Seasonal cycles plus AR(1) anomalies; precipitation is intermittent and
//! non-negative, so it has plenty of exact zeros like real tropical records.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::data::WeatherSeries;
use crate::error::Result;

/// Climate knobs for [`synthetic_weather`].
#[derive(Clone, Debug)]
pub struct Climate {
    pub mean_temp: f64,
    pub temp_amplitude: f64,
    pub mean_pressure: f64,
    pub rain_probability: f64,
}

impl Default for Climate {
    fn default() -> Self {
        Self {
            mean_temp: 27.0,
            temp_amplitude: 2.0,
            mean_pressure: 100.6,
            rain_probability: 0.35,
        }
    }
}

pub fn synthetic_weather(
    city: &str,
    start: NaiveDate,
    days: usize,
    climate: &Climate,
    seed: u64,
) -> Result<WeatherSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let rain = Exp::new(0.25).expect("positive rate");
    let dates = (0..days as u64).map(|d| start + chrono::Days::new(d)).collect();
    let mut values = Vec::with_capacity(days * 10);
    let (mut temp_anom, mut ps_anom, mut wet) = (0.0, 0.0, 0.0);
    for d in 0..days {
        let season = 2.0 * std::f64::consts::PI * d as f64 / 365.25;
        temp_anom = 0.7 * temp_anom + 0.5 * noise.sample(&mut rng);
        ps_anom = 0.8 * ps_anom + 0.08 * noise.sample(&mut rng);
        let raining = rng.random::<f64>() < climate.rain_probability * (1.0 + 0.6 * season.sin());
        let prec: f64 = if raining { rain.sample(&mut rng) } else { 0.0 };
        wet = 0.6 * wet + prec.min(20.0) / 20.0;

        let t2m = climate.mean_temp + climate.temp_amplitude * season.cos() + temp_anom - 0.4 * wet;
        let rh = (78.0 + 6.0 * season.sin() + 8.0 * wet + 2.0 * noise.sample(&mut rng)).clamp(30.0, 100.0);
        let dew = t2m - (100.0 - rh) / 5.0;
        let wet_bulb = 0.5 * (t2m + dew);
        let qv = 3.8 * (0.0622 * dew).exp();
        let ps = climate.mean_pressure + 0.25 * (season + 0.8).cos() + ps_anom;
        let clear = 26.0 + 3.0 * (season - 0.3).cos();
        let sw = clear * (0.85 - 0.25 * wet + 0.05 * noise.sample(&mut rng)).clamp(0.2, 1.0);
        let lw = 36.0 + 0.3 * t2m + 1.5 * wet + 0.3 * noise.sample(&mut rng);
        values.extend([t2m, qv, rh, prec, ps, sw, clear, lw, dew, wet_bulb]);
    }
    WeatherSeries::new(city, dates, values)
}
