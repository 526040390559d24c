use std::path::Path;

use num_complex::Complex64;
use proptest::prelude::*;

use selftune::adaptation::AdaptationLaw;
use selftune::analysis::{
    floquet_from_coefficients, kyp_storage, positive_real_margin, storage_max_increase,
};
use selftune::dynamics::{ChartTag, ClosedLoop};
use selftune::ode::{integrate, IntegratorConfig, VectorField};
use selftune::scenario::Scenario;

fn laws() -> Vec<AdaptationLaw> {
    vec![
        AdaptationLaw::log(1.0, 1.0).unwrap(),
        AdaptationLaw::log(0.5, 2.0).unwrap(),
        AdaptationLaw::Sigmoid,
        AdaptationLaw::bounded_osc(1.0, 1.0).unwrap(),
    ]
}

fn eval(f: &impl VectorField, t: f64, y: &[f64]) -> Vec<f64> {
    let mut dy = vec![0.0; y.len()];
    f.eval(t, y, &mut dy);
    dy
}

/// Row-major Jacobian of the chart map by central differences.
fn numeric_jacobian(system: &ClosedLoop, chart: ChartTag, y: &[f64]) -> Vec<f64> {
    let field = system.transformed(chart).unwrap();
    let n = y.len();
    let mut jac = vec![0.0; n * n];
    for j in 0..n {
        let h = 1e-6 * (1.0 + y[j].abs());
        let (mut yp, mut ym) = (y.to_vec(), y.to_vec());
        yp[j] += h;
        ym[j] -= h;
        let (zp, zm) = (
            field.from_original(&yp).unwrap(),
            field.from_original(&ym).unwrap(),
        );
        for i in 0..n {
            let mut d = zp[i] - zm[i];
            if chart == ChartTag::QphiP && i == 1 {
                d = (d + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
                    - std::f64::consts::PI;
            }
            jac[i * n + j] = d / (2.0 * h);
        }
    }
    jac
}

fn check_conjugacy(
    system: &ClosedLoop,
    chart: ChartTag,
    t: f64,
    y: &[f64],
) -> Result<(), TestCaseError> {
    let field = system.transformed(chart).unwrap();
    let z = field.from_original(y).unwrap();
    let lhs = eval(&field, t, &z);
    let rhs = eval(system, t, y);
    let jac = system.chart_jacobian(y, chart).unwrap();
    let fd = numeric_jacobian(system, chart, y);
    let n = y.len();
    for i in 0..n {
        let pushed: f64 = (0..n).map(|j| jac[i * n + j] * rhs[j]).sum();
        let scale = 1.0 + lhs[i].abs();
        prop_assert!(
            (lhs[i] - pushed).abs() < 1e-9 * scale,
            "row {i}: {} vs {}",
            lhs[i],
            pushed
        );
        for j in 0..n {
            let (a, b) = (jac[i * n + j], fd[i * n + j]);
            prop_assert!(
                (a - b).abs() < 1e-5 * (1.0 + a.abs()),
                "d{i}/d{j}: {a} vs {b}"
            );
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn log_chart_conjugates_first_order_field(
        law in 0usize..4,
        mu0 in 0.05f64..0.95,
        x in 0.05f64..20.0,
        mu in -2.0f64..2.0,
        t in 0.0f64..50.0,
    ) {
        let system = ClosedLoop::first_order(mu0, laws()[law].clone()).unwrap();
        check_conjugacy(&system, ChartTag::Log, t, &[x, mu])?;
    }

    #[test]
    fn qphip_chart_conjugates_oscillator_field(
        law in 0usize..2,
        mu0 in 0.05f64..1.0,
        omega in 0.5f64..3.0,
        r in 0.1f64..5.0,
        phi in 0.0f64..std::f64::consts::TAU,
        mu in -1.0f64..1.0,
    ) {
        let system = ClosedLoop::oscillator(mu0, omega, laws()[law].clone()).unwrap();
        let y = [r * phi.cos(), -r * omega * phi.sin(), mu];
        check_conjugacy(&system, ChartTag::QphiP, 0.0, &y)?;
    }

    #[test]
    fn positive_real_margin_matches_frequency_response(a in 0.05f64..10.0, b in 0.2f64..4.0) {
        // H(jw) = a / (-w^2 + j b w); the loop is positive real iff Re[H + 1] >= 0 for all w.
        let min_re = (1..4000)
            .map(|k| {
                let w = 1e-2 * 1.005f64.powi(k);
                let h = Complex64::new(a, 0.0) / Complex64::new(-w * w, b * w);
                (h + 1.0).re
            })
            .fold(f64::INFINITY, f64::min);
        let margin = positive_real_margin(a, b);
        if margin.abs() > 1e-3 {
            prop_assert_eq!(margin > 0.0, min_re > 0.0, "a = {}, b = {}, min Re = {}", a, b, min_re);
        }
    }

    #[test]
    fn floquet_determinant_matches_liouville(a in 0.05f64..4.0, b in 0.1f64..3.0, omega in 0.5f64..5.0) {
        let r = floquet_from_coefficients(a, b, omega).unwrap();
        prop_assert!((r.det() - r.liouville_det).abs() < 1e-10 * (1.0 + r.liouville_det));
        prop_assert!((r.liouville_det - (-b * r.period).exp()).abs() < 1e-10);
    }
}

#[test]
fn kyp_storage_is_nonincreasing_on_oscillator_orbits() {
    for (a, b) in [(1.0, 1.0), (1.0, 2.0), (0.25, 1.0)] {
        let cert = kyp_storage(a, b, 3).unwrap();
        let system = ClosedLoop::oscillator(0.3, 1.0, AdaptationLaw::log(a, b).unwrap()).unwrap();
        for start in [[2.0, 0.0, 0.0], [0.2, 0.1, 1.0], [-1.0, 3.0, -0.5]] {
            let traj = integrate(
                &system,
                &start,
                0.0,
                60.0,
                &IntegratorConfig::adaptive(1e-11, 1e-11),
            )
            .unwrap();
            let rise = storage_max_increase(&system, &traj, &cert.storage).unwrap();
            assert!(
                rise <= 1e-8,
                "a = {a}, b = {b}, start {start:?}: storage rose by {rise:e}"
            );
        }
    }
}

#[test]
fn presets_roundtrip_through_toml() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let s = Scenario::load(&path).unwrap();
        let again = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(s, again, "{}", path.display());
    }
}
