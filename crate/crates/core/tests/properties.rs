use chrono::{Duration, NaiveDate, NaiveDateTime};
use habsim_core::cloud::{infer_sediment, predict_bloom, PredictionParams, SedimentParams};
use habsim_core::edge::{quantize, sensor_measure, usv_power_step, SensorConfig, UsvParams, UsvState};
use habsim_core::env::{generate_synthetic_scenario, RainEpisode, SyntheticSpec};
use habsim_core::event::{parse_event_line, parse_timestamp, Event};
use habsim_core::fog::{inference_step, repair_outliers, BloomEstimate, BloomInputs, BloomParams, OutlierConfig};
use habsim_core::geo::Geo;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t0() -> NaiveDateTime {
    parse_timestamp("2008-08-23 00:00:00").unwrap()
}

/// Robust z-score of point `k` against the window of `half` points on each
/// side, centre included, truncated at the ends.
fn hampel_z(s: &[(f64, f64)], k: usize, half: usize) -> f64 {
    let med = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let m = v.len();
        if m % 2 == 1 { v[m / 2] } else { (v[m / 2 - 1] + v[m / 2]) / 2.0 }
    };
    let window: Vec<f64> = s[k.saturating_sub(half)..(k + half + 1).min(s.len())].iter().map(|p| p.1).collect();
    let m = med(window.clone());
    let mad = med(window.iter().map(|x| (x - m).abs()).collect());
    (s[k].1 - m).abs() / (1.4826 * mad)
}

fn name() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9_]{0,7}"
}

fn value() -> impl Strategy<Value = habsim_core::event::Value> {
    prop_oneof![
        (-1e6f64..1e6).prop_map(habsim_core::event::Value::Number),
        "[ -~]{0,12}".prop_map(habsim_core::event::Value::Text),
    ]
}

proptest! {
    #[test]
    fn event_line_round_trip(
        id in name(),
        source in name(),
        offset in 0i64..400_000_000,
        entries in prop::collection::vec((name(), value()), 0..6),
    ) {
        let mut e = Event::new(id, source, t0() + Duration::seconds(offset));
        for (k, v) in entries {
            if !e.payload.contains_key(&k) {
                e = e.with(k, v);
            }
        }
        let line = e.to_string();
        let back = parse_event_line(&line).unwrap();
        prop_assert_eq!(&back, &e);
        prop_assert_eq!(back.to_string(), line);
    }

    #[test]
    fn readings_are_saturated_and_quantized(
        truth in -100.0f64..100.0,
        min in -50.0f64..0.0,
        span in 1.0f64..80.0,
        digits in 0i32..4,
        sigma in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let precision = 10f64.powi(-digits);
        let cfg = SensorConfig { min, max: min + span, precision, noisesigma: sigma, ..SensorConfig::new("X", "S") };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = sensor_measure(truth, &cfg, &mut rng);
        prop_assert!(v >= cfg.min && v <= cfg.max, "{} outside [{}, {}]", v, cfg.min, cfg.max);
        prop_assert!((quantize(v, precision) - v).abs() < 1e-9, "{} not a multiple of {}", v, precision);
    }

    #[test]
    fn bloom_density_never_negative(
        r in 0.0f64..5.0,
        sun in 0.0f64..1.0,
        nox in 0.0f64..2.0,
        dox in 0.0f64..20.0,
        dt in 1.0f64..86_400.0,
    ) {
        let p = BloomParams::default();
        let est = BloomEstimate { r, ..BloomEstimate::initial(t0(), 47.5, -122.22, &p) };
        let inputs = BloomInputs { sun, nox, dox, wfv: 0.1, wfu: -0.1 };
        let next = inference_step(&est, &inputs, dt, &p, &Geo::new(47.5)).unwrap();
        prop_assert!(next.r >= 0.0);
        prop_assert_eq!(next.detected, next.r >= p.detect_threshold);
    }

    #[test]
    fn outlier_repair_touches_only_points_above_the_threshold(
        seed in any::<u64>(),
        n in 25usize..120,
        slope in -0.01f64..0.01,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = rand_distr::Normal::new(0.0, 0.1).unwrap();
        let s: Vec<(f64, f64)> = (0..n)
            .map(|k| (k as f64 * 60.0, 5.0 + slope * k as f64 + rand_distr::Distribution::sample(&noise, &mut rng)))
            .collect();
        let cfg = OutlierConfig { window: 11, z: 5.0, cadence: Some(60.0) };
        let once = repair_outliers(&s, &cfg);
        let replaced: Vec<f64> = once.replacements.iter().map(|r| r.t).collect();
        let expected: Vec<f64> = (0..n).filter(|&k| hampel_z(&s, k, 5) > cfg.z).map(|k| s[k].0).collect();
        prop_assert_eq!(&replaced, &expected);
        for (k, p) in once.series.iter().enumerate() {
            if !expected.contains(&p.0) {
                prop_assert_eq!(*p, s[k]);
            }
        }
        if expected.is_empty() {
            prop_assert_eq!(&repair_outliers(&once.series, &cfg).series, &once.series);
        }
    }

    #[test]
    fn sediment_filter_is_linear(
        a in prop::collection::vec(0.0f64..20.0, 2..60),
        b_seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(b_seed);
        let b: Vec<f64> = a.iter().map(|_| rand::Rng::random_range(&mut rng, 0.0..20.0)).collect();
        let p = SedimentParams::default();
        let series = |v: &[f64]| -> Vec<(f64, f64)> { v.iter().enumerate().map(|(k, r)| (k as f64 * 0.5, *r)).collect() };
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let sa = infer_sediment(&series(&a), &p);
        let sb = infer_sediment(&series(&b), &p);
        let ss = infer_sediment(&series(&sum), &p);
        for k in 0..a.len() {
            prop_assert!((ss[k] - sa[k] - sb[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn battery_never_leaves_unit_interval(
        power in 0.0f64..1.0,
        sun in 0.0f64..1.0,
        e_lat in -0.01f64..0.01,
        e_lon in -0.01f64..0.01,
    ) {
        let s = UsvState { power, sun, e_lat, e_lon, ..UsvState::default() };
        let p = usv_power_step(&s, &UsvParams::default());
        prop_assert!((0.0..=1.0).contains(&p));
        if sun == 0.0 {
            prop_assert!(p <= power);
        }
    }
}

#[test]
fn impulse_and_steady_state_of_the_sediment_filter() {
    let p = SedimentParams { tau_hours: 10.0, gain: 0.5, initial: 0.0 };
    // One hour of 4 mm/h, then nothing.
    let rain: Vec<(f64, f64)> = (0..=30).map(|h| (h as f64, if h == 0 { 4.0 } else { 0.0 })).collect();
    let s = infer_sediment(&rain, &p);
    assert!((s[1] - 2.0).abs() < 1e-12);
    assert!((s[21] - 2.0 * (-2.0f64).exp()).abs() < 1e-12);

    let steady: Vec<(f64, f64)> = (0..=2000).map(|h| (h as f64 * 0.1, 3.0)).collect();
    let s = infer_sediment(&steady, &p);
    // Discrete first-order filter: limit gain·R·dt / (1 − e^{−dt/τ}).
    let dt: f64 = 0.1;
    let limit = p.gain * 3.0 * dt / (1.0 - (-dt / p.tau_hours).exp());
    assert!((s[2000] - limit).abs() < 1e-6);
    assert!((limit - p.gain * 3.0 * p.tau_hours).abs() / limit < 0.01);
}

/// Runs of consecutive days with at least one detection.
fn bloom_day_runs(days: impl Iterator<Item = (NaiveDate, bool)>) -> Vec<(NaiveDate, NaiveDate)> {
    let mut bloom_days: Vec<NaiveDate> = days.filter(|d| d.1).map(|d| d.0).collect();
    bloom_days.dedup();
    let mut runs: Vec<(NaiveDate, NaiveDate)> = Vec::new();
    for d in bloom_days {
        match runs.last_mut() {
            Some(run) if run.1.succ_opt() == Some(d) => run.1 = d,
            _ => runs.push((d, d)),
        }
    }
    runs
}

fn single_rain_spec(seed: u64, total_mm: Option<f64>) -> SyntheticSpec {
    let mut spec = SyntheticSpec { seed, hours: 96, ..SyntheticSpec::default() };
    spec.weather.rain_probability = 0.0;
    spec.weather.rain = total_mm
        .map(|total_mm| RainEpisode { start: t0() + Duration::hours(2), hours: 3.0, total_mm })
        .into_iter()
        .collect();
    spec
}

#[test]
fn single_rain_day_gives_one_predicted_bloom_after_the_precursor_peak() {
    let params = PredictionParams::default();
    let threshold = params.bloom.detect_threshold;
    let geo = Geo::new(47.5);
    for total in [4.0, 8.0, 12.0, 25.0] {
        for seed in 1..=5 {
            let d = generate_synthetic_scenario(&single_rain_spec(seed, Some(total))).unwrap();
            let truth = bloom_day_runs(d.truth.iter().map(|t| (t.t.date(), t.r >= threshold)));
            assert_eq!(truth.len(), 1, "{total} mm, seed {seed}: generator bloom days {truth:?}");

            let f = predict_bloom(&d.forecast, &params, &geo).unwrap();
            let predicted = bloom_day_runs(f.horizon.iter().map(|p| (p.t.date(), p.detected)));
            assert_eq!(predicted.len(), 1, "{total} mm, seed {seed}: predicted bloom days {predicted:?}");
            assert_eq!(predicted[0].0, truth[0].0);

            let first_day: Vec<usize> = (0..f.horizon.len()).filter(|&k| f.horizon[k].t.date() == predicted[0].0).collect();
            let argmax = |v: &dyn Fn(usize) -> f64| first_day.iter().copied().max_by(|&x, &y| v(x).total_cmp(&v(y))).unwrap();
            let precursor_peak = argmax(&|k| f.precursor[k]);
            let density_peak = argmax(&|k| f.horizon[k].r);
            assert!(density_peak > precursor_peak, "{total} mm, seed {seed}: density peak {density_peak}, precursor peak {precursor_peak}");
            assert_eq!(predict_bloom(&d.forecast, &params, &geo).unwrap(), f);
        }
    }
    for seed in 1..=5 {
        let dry = generate_synthetic_scenario(&single_rain_spec(seed, None)).unwrap();
        assert!(predict_bloom(&dry.forecast, &params, &geo).unwrap().horizon.iter().all(|p| !p.detected));
    }
}
