use std::f64::consts::PI;

use inviscid_core::evolve::{check_apriori, run, SolverConfig};
use inviscid_core::field::{make_initial_data, norms, random_band_limited, Grid2D, InitialDataKind, ScalarField2D};

fn l2_diff(a: &ScalarField2D, b: &ScalarField2D) -> f64 {
    norms(&a.sub(b).unwrap()).unwrap().l2
}

#[test]
fn taylor_green_matches_analytic_decay() {
    let g = Grid2D::new(64, 2.0 * PI).unwrap();
    let w0 = make_initial_data(g, &InitialDataKind::TaylorGreen { amplitude: 2.0 })
        .unwrap()
        .field;
    let mut cfg = SolverConfig::new(0.01, 1e-3, 1.0);
    cfg.record_every = 100;
    let tr = run(&w0, &cfg).unwrap();
    let exact = w0.scale((-2.0 * 0.01_f64).exp());
    let rel = l2_diff(tr.final_state(), &exact) / norms(&exact).unwrap().l2;
    assert!(rel < 1e-6, "relative error {rel}");
    assert_eq!(tr.times.len(), 11);
    // Linf monitor follows exp(-2 nu t).
    for (t, m) in tr.times.iter().zip(&tr.monitors) {
        assert!((m.linf - 2.0 * (-0.02 * t).exp()).abs() < 1e-9);
    }
    assert!(check_apriori(&tr, 1e-9).unwrap().passed());
}

#[test]
fn fourth_order_in_time() {
    let g = Grid2D::new(32, 2.0 * PI).unwrap();
    let w0 = random_band_limited(g, 7, 4);
    let t_end = 0.8;
    let solve = |dt: f64| run(&w0, &SolverConfig::new(0.005, dt, t_end)).unwrap().final_state().clone();
    let dt = 0.1;
    let reference = solve(dt / 4.0);
    let e1 = l2_diff(&solve(dt), &reference);
    let e2 = l2_diff(&solve(dt / 2.0), &reference);
    let ratio = e1 / e2;
    // Global error C dt^4 against a dt/4 reference: ratio 16 * (255/256) / (15/16) = 17.
    assert!((12.0..22.0).contains(&ratio), "ratio {ratio} ({e1:e}, {e2:e})");
}

#[test]
fn euler_patch_keeps_l1_and_linf() {
    let g = Grid2D::new(128, 1.0).unwrap();
    let d = make_initial_data(g, &InitialDataKind::default_patch_pair(&g)).unwrap();
    let t_end = (2.0 / d.meta.linf / 0.01).round() * 0.01;
    let mut cfg = SolverConfig::new(0.0, 0.01, t_end);
    cfg.record_every = 20;
    let tr = run(&d.field, &cfg).unwrap();
    let rep = check_apriori(&tr, 1e-2).unwrap();
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn viscous_linf_is_non_increasing() {
    let g = Grid2D::new(64, 1.0).unwrap();
    let d = make_initial_data(g, &InitialDataKind::default_patch_pair(&g)).unwrap();
    let mut cfg = SolverConfig::new(1e-3, 0.01, 0.5);
    cfg.record_every = 5;
    let tr = run(&d.field, &cfg).unwrap();
    for w in tr.monitors.windows(2) {
        assert!(w[1].linf <= w[0].linf + 1e-6);
    }
    assert!(tr.resolved);
}

#[test]
fn grid_refinement_below_time_error() {
    // Smooth datum resolved on both grids: the spatial change is tiny next to
    // the time-step error at this dt.
    let coarse = Grid2D::new(32, 2.0 * PI).unwrap();
    let fine = Grid2D::new(64, 2.0 * PI).unwrap();
    let datum = |g: Grid2D| {
        ScalarField2D::from_fn(g, |x, y| (x).sin() * (2.0 * y).cos() + 0.5 * (2.0 * x + y).cos())
            .unwrap()
            .remove_mean()
    };
    let cfg = SolverConfig::new(0.01, 0.05, 1.0);
    let a = run(&datum(coarse), &cfg).unwrap();
    let b = run(&datum(fine), &cfg).unwrap();
    let a_ref = run(&datum(coarse), &SolverConfig::new(0.01, 0.0125, 1.0)).unwrap();
    let time_err = l2_diff(a.final_state(), a_ref.final_state());
    // Compare on the coarse vertices (every other fine vertex).
    let sub: Vec<f64> = (0..32)
        .flat_map(|i| (0..32).map(move |j| (i, j)))
        .map(|(i, j)| b.final_state().at(2 * i, 2 * j))
        .collect();
    let b_on_coarse = ScalarField2D::new(coarse, sub).unwrap();
    let space_err = l2_diff(a.final_state(), &b_on_coarse);
    assert!(space_err < time_err, "space {space_err:e} time {time_err:e}");
}

#[test]
fn monitor_csv_layout() {
    let g = Grid2D::new(16, 1.0).unwrap();
    let w0 = random_band_limited(g, 1, 3);
    let mut cfg = SolverConfig::new(0.01, 0.01, 0.03);
    cfg.record_every = 1;
    let tr = run(&w0, &cfg).unwrap();
    let mut buf = Vec::new();
    tr.write_monitor_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,l1,l2,linf,hm1");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,"));
    assert!(!text.contains('\r'));
}

#[test]
fn runs_are_deterministic() {
    let g = Grid2D::new(32, 1.0).unwrap();
    let w0 = random_band_limited(g, 9, 5);
    let cfg = SolverConfig::new(1e-3, 0.01, 0.1);
    let a = run(&w0, &cfg).unwrap();
    let b = run(&w0, &cfg).unwrap();
    assert_eq!(a.final_state().values(), b.final_state().values());
}
