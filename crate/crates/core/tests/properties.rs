//! Property tests: parse/render round trips, coordinate-map inverses, and
//! calculus identities on random polynomial data, plus a smoke check that
//! the generic numerics instantiate at f32.

use confdirac::{
    frac_derivative, frac_integral, s_of_x, solve_phi, x_of_s, AlphaOrder, Expression, GridFn,
    Model, ModelSpec, SGrid,
};
use proptest::prelude::*;
use std::sync::Arc;

fn leaf() -> impl Strategy<Value = Expression> {
    prop_oneof![
        (-4.0..4.0f64).prop_map(|v| Expression::parse(&format!("{v:.4}")).unwrap()),
        Just(Expression::parse("x").unwrap()),
        Just(Expression::parse("t").unwrap()),
        Just(Expression::parse("pi").unwrap()),
    ]
}

fn arb_expr() -> impl Strategy<Value = Expression> {
    leaf().prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expression::parse(&format!(
                "({a}) + ({b})"
            ))
            .unwrap()),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expression::parse(&format!(
                "({a}) * ({b})"
            ))
            .unwrap()),
            inner.clone().prop_map(|a| Expression::parse(&format!("sin({a})")).unwrap()),
            inner.clone().prop_map(|a| Expression::parse(&format!("-({a})")).unwrap()),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn render_then_parse_evaluates_identically(e in arb_expr()) {
        let rendered = e.to_string();
        let back = Expression::parse(&rendered).unwrap();
        for &(x, t) in &[(0.1f64, 0.2f64), (1.0, 0.5), (2.4, 3.0)] {
            let a: Result<f64, _> = e.eval(x, t);
            let b: Result<f64, _> = back.eval(x, t);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "mismatch: {:?}", other),
            }
        }
    }

    #[test]
    fn coordinate_maps_are_inverse(alpha in 0.05..1.0f64, x in 0.0..std::f64::consts::PI) {
        let a = AlphaOrder::new(alpha).unwrap();
        let s = s_of_x(x, a).unwrap();
        let back = x_of_s(s, a).unwrap();
        prop_assert!((back - x).abs() <= 1e-10 * (1.0 + x));
    }

    #[test]
    fn calculus_identities_on_random_cubics(
        alpha in 0.25..1.0f64,
        c0 in -1.0..1.0f64,
        c1 in -1.0..1.0f64,
        c2 in -1.0..1.0f64,
        c3 in -0.5..0.5f64,
    ) {
        let grid = SGrid::shared(AlphaOrder::new(alpha).unwrap(), 1025).unwrap();
        let f = GridFn::from_values(
            Arc::clone(&grid),
            grid.s_values()
                .iter()
                .map(|&s| c0 + s * (c1 + s * (c2 + s * c3)))
                .collect(),
        )
        .unwrap();
        let h = grid.h();
        let scale = 1.0 + f.max_abs();
        // D(I f) = f
        let di = frac_derivative(&frac_integral(&f)).unwrap();
        for k in 0..grid.n_points() {
            prop_assert!((di.value(k) - f.value(k)).abs() <= 50.0 * h * h * scale);
        }
        // I(D f) = f - f(0)
        let id = frac_integral(&frac_derivative(&f).unwrap());
        for k in 0..grid.n_points() {
            prop_assert!((id.value(k) - (f.value(k) - f.value(0))).abs() <= 50.0 * h * h * scale);
        }
    }
}

#[test]
fn f32_instantiation_smoke() {
    let spec = ModelSpec::<f32> {
        alpha: 1.0,
        theta: 0.0,
        beta: 0.0,
        p: "0".into(),
        r: "0".into(),
        m11: "0".into(),
        m12: "0".into(),
        m21: "0".into(),
        m22: "0".into(),
        grid_points: 257,
    };
    let model = Model::from_spec(&spec).unwrap();
    let tr = solve_phi(&model, 3.0f32).unwrap();
    let s = model.grid().s_values();
    let worst = tr
        .phi1
        .values()
        .iter()
        .zip(s)
        .map(|(&v, &sv)| (v - (3.0 * sv).cos()).abs())
        .fold(0.0f32, f32::max);
    assert!(worst < 1e-3, "f32 trace error {worst}");
}
