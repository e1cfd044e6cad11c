use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::event::{Payload, Value};

/// Technical characteristics of one measurement channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Measurement id, also the payload key of the reading.
    pub id: String,
    /// Name the readings are emitted under.
    pub source: String,
    pub description: String,
    /// Reporting latency in seconds.
    pub delay: f64,
    pub min: f64,
    pub max: f64,
    pub precision: f64,
    pub noisesigma: f64,
    /// Sampling interval in seconds.
    pub period: f64,
    /// Overrides the seed derived from the scenario seed.
    pub seed: Option<u64>,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            id: String::new(),
            source: String::new(),
            description: String::new(),
            delay: 0.0,
            min: f64::MIN,
            max: f64::MAX,
            precision: 1e-6,
            noisesigma: 0.0,
            period: 1800.0,
            seed: None,
        }
    }
}

impl SensorConfig {
    pub fn new(id: &str, source: &str) -> Self {
        SensorConfig { id: id.to_owned(), source: source.to_owned(), ..SensorConfig::default() }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let who = format!("sensor {}/{}", self.source, self.id);
        if self.id.is_empty() || self.source.is_empty() {
            problems.push(format!("{who}: id and source must be non-empty"));
        }
        if !(self.min < self.max) {
            problems.push(format!("{who}: min {} must be below max {}", self.min, self.max));
        }
        if !(self.precision > 0.0) {
            problems.push(format!("{who}: precision must be positive"));
        }
        if !(self.noisesigma >= 0.0) {
            problems.push(format!("{who}: noisesigma must be non-negative"));
        }
        if !(self.period > 0.0) {
            problems.push(format!("{who}: period must be positive"));
        }
        if !(self.delay >= 0.0) {
            problems.push(format!("{who}: delay must be non-negative"));
        }
        problems
    }

    /// Applies a configuration command payload, rejecting the whole update
    /// if the result would be invalid.
    pub fn apply(&mut self, args: &Payload) -> Result<(), String> {
        let mut next = self.clone();
        for (key, value) in args.iter() {
            let number = || value.as_number().ok_or_else(|| format!("`{key}` must be a number"));
            match key {
                "id" => {
                    if value.as_text() != Some(self.id.as_str()) {
                        return Err(format!("config for `{:?}` sent to sensor {}", value, self.id));
                    }
                }
                "description" => {
                    if let Value::Text(s) = value {
                        next.description = s.clone();
                    }
                }
                "delay" => next.delay = number()?,
                "max" => next.max = number()?,
                "min" => next.min = number()?,
                "precision" => next.precision = number()?,
                "noisesigma" => next.noisesigma = number()?,
                "period" => next.period = number()?,
                "seed" => next.seed = Some(number()? as u64),
                other => return Err(format!("unknown sensor parameter `{other}`")),
            }
        }
        let problems = next.validate();
        if !problems.is_empty() {
            return Err(problems.join("; "));
        }
        *self = next;
        Ok(())
    }

    /// Independent noise stream for this sensor.
    pub fn rng(&self, scenario_seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(scenario_seed));
        rng.set_stream(stream_id(&self.source, &self.id));
        rng
    }
}

/// Stable 64-bit FNV-1a hash of `source/id`, used as a noise stream number.
pub fn stream_id(source: &str, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in source.bytes().chain(std::iter::once(b'/')).chain(id.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Rounds to the nearest multiple of `precision`, halves away from zero.
pub fn quantize(x: f64, precision: f64) -> f64 {
    let q = (x / precision).round();
    scale(q, precision)
}

fn scale(q: f64, precision: f64) -> f64 {
    let inv = 1.0 / precision;
    if (inv - inv.round()).abs() < 1e-9 * inv.max(1.0) {
        q / inv.round()
    } else {
        q * precision
    }
}

/// Reported value for a true signal: noise, saturation, quantization.
pub fn sensor_measure(truth: f64, cfg: &SensorConfig, rng: &mut ChaCha8Rng) -> f64 {
    let noisy = if cfg.noisesigma > 0.0 {
        truth + Normal::new(0.0, cfg.noisesigma).expect("validated sigma").sample(rng)
    } else {
        truth
    };
    let clamped = noisy.clamp(cfg.min, cfg.max);
    let mut q = (clamped / cfg.precision).round();
    let tol = 1e-9 * cfg.max.abs().max(cfg.min.abs()).max(1.0);
    if scale(q, cfg.precision) > cfg.max + tol {
        q -= 1.0;
    }
    if scale(q, cfg.precision) < cfg.min - tol {
        q += 1.0;
    }
    let v = scale(q, cfg.precision);
    if v < cfg.min || v > cfg.max {
        // No multiple of the precision fits between the bounds, or a
        // rounding ulp crossed one of them.
        v.clamp(cfg.min, cfg.max)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide(precision: f64, sigma: f64) -> SensorConfig {
        SensorConfig { min: -1e6, max: 1e6, precision, noisesigma: sigma, ..SensorConfig::new("DOX", "SimSenO") }
    }

    #[test]
    fn saturates_at_max() {
        let cfg = SensorConfig { max: 30.0, min: 0.0, precision: 0.1, ..SensorConfig::new("DOX", "SimSenO") };
        assert_eq!(sensor_measure(35.0, &cfg, &mut cfg.rng(1)), 30.0);
    }

    #[test]
    fn quantizes_to_precision() {
        let cfg = wide(0.1, 0.0);
        assert_eq!(sensor_measure(11.83, &cfg, &mut cfg.rng(1)), 11.8);
        assert_eq!(quantize(0.25, 0.1), 0.3);
        assert_eq!(quantize(-0.25, 0.1), -0.3);
        assert_eq!(quantize(0.152_4, 0.001), 0.152);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let cfg = wide(1e-6, 0.2);
        let mut rng = cfg.rng(42);
        let draws: Vec<f64> = (0..10_000).map(|_| sensor_measure(11.8, &cfg, &mut rng)).collect();
        assert_ne!(draws[0], draws[1]);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((var.sqrt() - 0.2).abs() < 0.2 * 0.05, "std {}", var.sqrt());
    }

    #[test]
    fn streams_differ_per_sensor() {
        let a = SensorConfig::new("DOX", "SimSenO");
        let b = SensorConfig::new("NOX", "SimSenN");
        assert_ne!(stream_id(&a.source, &a.id), stream_id(&b.source, &b.id));
        assert_eq!(stream_id("SimSenO", "DOX"), stream_id("SimSenO", "DOX"));
    }

    #[test]
    fn apply_config_command() {
        let mut cfg = SensorConfig::new("DOX", "SimSenO");
        let args: Payload = [
            ("id", Value::from("DOX")),
            ("description", Value::from("Oxigen Sensor(mg/L)")),
            ("delay", Value::from(5.0)),
            ("max", Value::from(30.0)),
            ("min", Value::from(0.0)),
            ("precision", Value::from(0.1)),
            ("noisesigma", Value::from(0.2)),
        ]
        .into_iter()
        .collect();
        cfg.apply(&args).unwrap();
        assert_eq!((cfg.delay, cfg.max, cfg.min, cfg.precision, cfg.noisesigma), (5.0, 30.0, 0.0, 0.1, 0.2));

        let bad: Payload = [("min", 40.0)].into_iter().collect();
        assert!(cfg.apply(&bad).is_err());
        assert_eq!(cfg.min, 0.0);
    }
}
