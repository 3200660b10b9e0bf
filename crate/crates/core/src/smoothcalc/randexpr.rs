//! Seeded random smooth models: bounded trigonometric sums used by the
//! verification suites as generic test fields.

use super::chart::{Chart, SampleRng};
use super::expr::Expr;
use super::map::SmoothMap;

/// A random expression `c0 + sum_k a_k sin(b_k . x + phi_k)` whose value is
/// bounded by `amp` (the `|a_k|` sum to at most `amp - |c0|`).
pub fn random_trig_expr(chart: &Chart, rng: &mut SampleRng, terms: usize, amp: f64) -> Expr {
    let c0 = rng.symmetric(0.25 * amp);
    let budget = amp - c0.abs();
    let mut weights: Vec<f64> = (0..terms.max(1)).map(|_| rng.uniform(0.2, 1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w *= budget / total;
    }
    let mut e = Expr::num(c0);
    for w in weights {
        let a = if rng.unit() < 0.5 { w } else { -w };
        let mut phase = Expr::num(rng.symmetric(3.0));
        for i in 0..chart.dim() {
            let b = rng.symmetric(1.5);
            phase = phase.add(Expr::num(b).mul(Expr::coord(i)));
        }
        e = e.add(Expr::num(a).mul(phase.sin()));
    }
    e
}

/// A map with `codim` independent random bounded components.
pub fn random_trig_map(chart: &Chart, codim: usize, rng: &mut SampleRng, amp: f64) -> SmoothMap {
    let exprs = (0..codim)
        .map(|_| random_trig_expr(chart, rng, 3, amp))
        .collect();
    SmoothMap::from_exprs(chart.clone(), exprs).expect("random exprs match the chart")
}

/// A random map from `source` into the box of `target`, staying inside it
/// with the given margin (`0 < margin < 1`).
pub fn random_map_into(
    source: &Chart,
    target: &Chart,
    rng: &mut SampleRng,
    margin: f64,
) -> SmoothMap {
    assert!(margin > 0.0 && margin < 1.0);
    let exprs = target
        .bounds()
        .iter()
        .map(|&(lo, hi)| {
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let s = random_trig_expr(source, rng, 3, 1.0);
            Expr::num(center).add(Expr::num(half * margin).mul(s))
        })
        .collect();
    SmoothMap::from_exprs(source.clone(), exprs).expect("random exprs match the chart")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trig_expr_respects_amplitude_bound() {
        let chart = Chart::cube(2, -1.0, 1.0);
        let mut rng = SampleRng::new(41);
        for _ in 0..10 {
            let e = random_trig_expr(&chart, &mut rng, 3, 0.7);
            for p in chart.sample_points(200, 9) {
                let v: f64 = e.eval(&p);
                assert!(v.abs() <= 0.7 + 1e-12, "value {v} exceeds bound");
            }
        }
    }

    #[test]
    fn map_into_stays_in_target_box() {
        let source = Chart::prefixed("u", 2, -1.0, 1.0);
        let target = Chart::new(vec!["a", "b"], vec![(0.0, 2.0), (-3.0, -1.0)]).unwrap();
        let mut rng = SampleRng::new(5);
        let f = random_map_into(&source, &target, &mut rng, 0.9);
        for p in source.sample_points(200, 3) {
            let y = f.eval(&p).unwrap();
            assert!(target.contains(&y, 0.0), "image {y:?} left the target box");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let chart = Chart::cube(2, -1.0, 1.0);
        let a = random_trig_expr(&chart, &mut SampleRng::new(11), 3, 1.0);
        let b = random_trig_expr(&chart, &mut SampleRng::new(11), 3, 1.0);
        assert_eq!(a, b);
    }
}
