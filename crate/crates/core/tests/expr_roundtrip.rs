//! Property tests for the expression grammar: print/parse round trips and
//! dual-number jacobians against the finite-difference oracle.

use nlgauge_core::smoothcalc::chart::Chart;
use nlgauge_core::smoothcalc::expr::{parse_expr, Expr};
use nlgauge_core::smoothcalc::map::SmoothMap;
use proptest::prelude::*;

fn chart() -> Chart {
    Chart::cube(2, -1.0, 1.0)
}

/// ASTs in the image of the parser: literals non-negative and finite,
/// exponents small, depth bounded.
fn parser_image_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..4000).prop_map(|k| Expr::Num(k as f64 / 128.0)),
        (0usize..2).prop_map(Expr::Coord),
    ];
    leaf.prop_recursive(5, 64, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.sub(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.div(b)),
            (inner.clone(), -3i32..4).prop_map(|(a, n)| a.pow(n)),
            inner.clone().prop_map(|a| a.neg()),
            inner.clone().prop_map(|a| a.sin()),
            inner.clone().prop_map(|a| a.cos()),
            inner.prop_map(|a| a.exp()),
        ]
    })
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(ast in parser_image_expr()) {
        let c = chart();
        let printed = ast.print(&c);
        let reparsed = parse_expr(&printed, &c)
            .unwrap_or_else(|e| panic!("printed `{printed}` failed to parse: {e}"));
        prop_assert_eq!(&ast, &reparsed);
        // and printing is idempotent through one more cycle
        let printed2 = reparsed.print(&c);
        prop_assert_eq!(printed, printed2);
    }

    #[test]
    fn jacobian_matches_central_differences(ast in parser_image_expr(), x in -0.9f64..0.9, y in -0.9f64..0.9) {
        let c = chart();
        let map = SmoothMap::from_exprs(c, vec![ast]).unwrap();
        let p = [x, y];
        // compare only where the difference oracle is itself trustworthy:
        // two step sizes must agree (random ASTs can have huge higher
        // derivatives that invalidate any fixed-step difference)
        if let (Ok(v), Ok(j), Ok(fd1), Ok(fd2)) = (
            map.eval(&p),
            map.jacobian(&p),
            map.fd_jacobian(&p, 1e-5),
            map.fd_jacobian(&p, 5e-6),
        ) {
            // large values next to small slopes starve the difference of
            // significant digits, so bound the value scale as well
            if j.max_abs() < 1e3 && fd1.max_abs() < 1e3 && v[0].abs() < 1e4 {
                for mu in 0..2 {
                    let exact = j.get(0, mu);
                    let fd = fd1.get(0, mu);
                    let oracle_jitter = (fd1.get(0, mu) - fd2.get(0, mu)).abs();
                    if oracle_jitter <= 1e-7 * (1.0 + fd.abs()) {
                        prop_assert!(
                            (exact - fd).abs() <= 1e-5 * (1.0 + exact.abs()),
                            "dual {} vs fd {} at {:?}", exact, fd, p
                        );
                    }
                }
            }
        }
    }
}
