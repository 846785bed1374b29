mod common;

use common::*;
use microdispatch::scenario::*;

fn opts() -> GenerationOptions {
    GenerationOptions::for_network(&mg10(), 0.9, 4)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn sample_moments_match_the_error_model() {
    let f = mg10_day();
    let errs = ForecastErrorModel::default();
    let set = generate_scenarios(&f, &errs, 10_000, 42, &opts()).unwrap();
    for t in [0, 11, 19] {
        // Load and price are unbounded above and far from zero, so no clipping.
        for (fc, sd, real, da) in [
            (f.load.values[t], errs.load, 0usize, 3usize),
            (f.price.values[t], errs.price, 1, 2),
        ] {
            let r: Vec<f64> = set.scenarios.iter().map(|s| if real == 0 { s.load[t] } else { s.price[t] }).collect();
            let d: Vec<f64> = set.scenarios.iter().map(|s| s.day_ahead[t][da]).collect();
            let (m, s) = mean_std(&r);
            let (md, sd_da) = mean_std(&d);
            let want = fc * ((1.0 + sd[0] * sd[0]) * (1.0 + sd[1] * sd[1]) - 1.0).sqrt();
            assert!((m - fc).abs() < 0.05 * want, "mean {m} vs {fc}");
            assert!((s - want).abs() < 0.05 * want, "std {s} vs {want}");
            assert!((md - fc).abs() < 0.05 * fc * sd[0]);
            assert!((sd_da - fc * sd[0]).abs() < 0.05 * fc * sd[0]);
        }
    }
}

#[test]
fn same_seed_same_scenarios() {
    let f = mg10_day();
    let errs = ForecastErrorModel::default();
    let a = generate_scenarios(&f, &errs, 5, 3, &opts()).unwrap();
    let b = generate_scenarios(&f, &errs, 5, 3, &opts()).unwrap();
    let c = generate_scenarios(&f, &errs, 5, 4, &opts()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
    assert_ne!(a.scenarios, c.scenarios);
    assert_eq!(ScenarioSet::from_json(&a.to_json()).unwrap(), a);
}

#[test]
fn renewables_are_clipped_to_capacity() {
    let f = mg10_day();
    let wild = ForecastErrorModel {
        wind: [2.0, 2.0],
        pv: [2.0, 2.0],
        ..ForecastErrorModel::default()
    };
    let o = opts();
    let set = generate_scenarios(&f, &wild, 500, 1, &o).unwrap();
    let mut hit_cap = false;
    for s in &set.scenarios {
        for t in 0..s.horizon() {
            assert!((0.0..=o.wind_capacity).contains(&s.wind[t]));
            assert!((0.0..=o.pv_capacity).contains(&s.pv[t]));
            assert!(s.day_ahead[t][1] <= o.wind_capacity && s.day_ahead[t][0] <= o.pv_capacity);
            assert!(s.load[t] >= 0.0 && s.price[t] >= 0.0);
            hit_cap |= s.wind[t] == o.wind_capacity;
        }
    }
    assert!(hit_cap);
}

#[test]
fn window_holds_the_next_day_ahead_values() {
    let sc = mg10_scenario(4);
    let n = sc.horizon();
    let e = sc.exogenous(3);
    assert_eq!(e.forecast.len(), 4);
    assert_eq!(e.forecast[0], sc.day_ahead[4]);
    // Beyond the horizon the last point repeats.
    let tail = sc.exogenous(n - 2);
    assert_eq!(tail.forecast[1], sc.day_ahead[n - 1]);
    assert_eq!(tail.forecast[3], sc.day_ahead[n - 1]);
}

#[test]
fn historical_split_keeps_whole_days() {
    let text = std::fs::read_to_string(repo("data/mg10_day.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    let mut csv = format!("{header}\n");
    for day in 0..3 {
        for (h, l) in lines.iter().enumerate() {
            let rest = l.split_once(',').unwrap().1;
            csv.push_str(&format!("{},{rest}\n", day * 24 + h));
        }
    }
    let f = parse_timeseries(&csv).unwrap();
    let (train, test) = f.split_days(24, 2);
    assert_eq!((train.len(), test.len()), (2, 1));
    assert_eq!(test[0].load.values, mg10_day().load.values);
}
