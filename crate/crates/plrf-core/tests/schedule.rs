use plrf_core::{Schedule, ScheduleKind};
use proptest::prelude::*;

fn demo() -> Schedule {
    Schedule::wsd(1000, 0.05, 0.9, 0.091, 1.0)
}

#[test]
fn reference_values() {
    assert_eq!(demo().multiplier(500.0), 1.0);
    assert!((demo().multiplier(25.0) - 0.5).abs() < 1e-15);
    assert!((Schedule::linear(10_000).multiplier(10_000.0) - 0.01).abs() < 1e-15);
    assert_eq!(Schedule::constant(20).cumulative(7.5), 7.5);
    assert_eq!(Schedule::constant(20).multiplier(3.0), 1.0);
    assert!((demo().cumulative(900.0) - 875.0).abs() < 1e-12);
    assert!((Schedule::cosine(1000).cumulative(1000.0) - 500.5).abs() < 1e-9);
}

#[test]
fn argument_is_clamped_above_n() {
    let s = demo();
    assert_eq!(s.multiplier(5000.0), s.multiplier(1000.0));
    assert_eq!(s.cumulative(5000.0), s.cumulative(1000.0));
}

#[test]
fn validation() {
    assert!(Schedule::wsd(100, 0.5, 0.9, 0.1, 1.0).validate().is_err());
    assert!(Schedule::wsd(100, 0.05, 1.2, 0.1, 1.0).validate().is_err());
    assert!(Schedule::wsd(100, 0.05, 0.9, 1.0, 1.0).validate().is_err());
    assert!(Schedule::wsd(100, 0.05, 0.9, 0.1, 0.0).validate().is_err());
    assert!(demo().validate().is_ok());
}

#[test]
fn json_form_uses_lowercase_kinds() {
    let js = serde_json::to_string(&demo()).unwrap();
    assert!(js.contains("\"warmupstabledecay\""));
    assert!(!js.contains("total_steps"));
    let s: Schedule = serde_json::from_str(r#"{"kind":"wsd","w":0.05,"p":0.9,"c":0.091,"tau":1}"#).unwrap();
    assert_eq!(s.kind, ScheduleKind::WarmupStableDecay);
    assert_eq!(s.with_total_steps(1000), demo());
    let c: Schedule = serde_json::from_str(r#"{"kind":"cosine"}"#).unwrap();
    assert_eq!(c.kind, ScheduleKind::Cosine);
}

#[test]
fn stable_decay_keeps_at_least_p_n() {
    for &n in &[10u64, 1000, 100_000] {
        for &p in &[0.1, 0.5, 0.9, 1.0] {
            for &c in &[0.05, 0.5, 0.95] {
                let s = Schedule::stable_decay(n, p, c, 1.0);
                assert!(s.cumulative(n as f64) >= p * n as f64);
            }
        }
    }
}

#[test]
fn wsd_keeps_at_least_p_n_at_the_demo_setting() {
    for &n in &[1000u64, 10_000, 1_000_000] {
        let s = Schedule::wsd(n, 0.05, 0.9, 1.0 / 11.0, 1.0);
        assert!(s.cumulative(n as f64) >= 0.9 * n as f64);
    }
}

fn any_schedule() -> impl Strategy<Value = Schedule> {
    (0usize..5, 100u64..100_000, 0.0f64..0.2, 0.5f64..1.0, 0.05f64..0.95, 0.1f64..5.0).prop_map(
        |(kind, n, w, p, c, tau)| match kind {
            0 => Schedule::constant(n),
            1 => Schedule::wsd(n, w.min(p / 2.0 - 1e-3), p, c, tau),
            2 => Schedule::stable_decay(n, p, c, tau),
            3 => Schedule::linear(n),
            _ => Schedule::cosine(n),
        },
    )
}

proptest! {
    #[test]
    fn cumulative_differentiates_to_multiplier(s in any_schedule(), t in 0.0f64..1.0) {
        let n = s.total_steps as f64;
        let h = 1e-4 * n;
        let k = h + t * (n - 2.0 * h);
        prop_assume!(s.breakpoints().iter().all(|b| (k - b).abs() > 2.0 * h));
        let fd = (s.cumulative(k + h) - s.cumulative(k - h)) / (2.0 * h);
        let f = s.multiplier(k);
        prop_assert!((fd - f).abs() < 1e-3 * f.max(1e-3), "fd {} f {}", fd, f);
    }

    #[test]
    fn multiplier_in_unit_interval_and_cumulative_increasing(s in any_schedule(), t in 0.001f64..1.0) {
        let n = s.total_steps as f64;
        let k = t * n;
        let f = s.multiplier(k);
        prop_assert!(f > 0.0 && f <= 1.0);
        prop_assert!(s.cumulative(k) > s.cumulative(k * 0.999));
    }

    #[test]
    fn nonincreasing_after_warmup(s in any_schedule(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let n = s.total_steps as f64;
        let start = s.breakpoints()[0].max(0.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let k0 = start + lo * (n - start);
        let k1 = start + hi * (n - start);
        prop_assert!(s.multiplier(k1) <= s.multiplier(k0) + 1e-15);
    }
}
