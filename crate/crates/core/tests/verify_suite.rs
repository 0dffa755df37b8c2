use ortholax_core::real;
use ortholax_core::verify::{
    self, chebyshev_points, deformation_residual, run_all, Deformation, FaultInjection, CHECK_NAMES,
};
use ortholax_core::{Model, Potential, Real, SolveOptions, VerifyConfig};
use rug::Float;

fn quartic(prec: u32) -> Potential {
    Potential::from_f64(prec, &[(4, 1.0)]).unwrap()
}

fn mixed(prec: u32) -> Potential {
    Potential::parse_text(prec, "2=1,3=0.3,4=1").unwrap()
}

fn config(p: &Potential, prec: u32, n_max: usize) -> VerifyConfig {
    let mut c = VerifyConfig::new(p, prec);
    c.n_max = Some(n_max);
    c.ortho_n_max = Some(4);
    c
}

#[test]
fn default_reports_pass_for_even_and_non_even_potentials() {
    for p in [quartic(192), mixed(192)] {
        let rep = run_all(&config(&p, 192, 8)).unwrap();
        let fails: Vec<_> = rep.failures().map(|c| format!("{} {} {}", c.check, c.item, c.label())).collect();
        assert!(fails.is_empty(), "{fails:?}");
        assert_eq!(rep.header.n_range, [1, 8]);
        assert_eq!(rep.header.k_range, [1, 3]);
    }
}

#[test]
fn every_group_reports_each_requested_index_once() {
    let rep = run_all(&config(&quartic(128), 128, 5)).unwrap();
    for name in ["ode", "flow_sum", "uv_recurrences"] {
        let mut ns: Vec<(usize, &str)> = rep.group(name).map(|c| (c.n.unwrap(), c.item)).collect();
        let before = ns.len();
        ns.sort();
        ns.dedup();
        assert_eq!(before, ns.len(), "{name} has duplicates");
        assert!(ns.iter().any(|(n, _)| *n == 1) && ns.iter().any(|(n, _)| *n == 5));
    }
    let defs: Vec<_> = rep.group("deformation").map(|c| (c.k.unwrap(), c.n.unwrap())).collect();
    assert_eq!(defs.len(), 3 * 5);
}

#[test]
fn report_is_deterministic() {
    let c = config(&mixed(128), 128, 4);
    let a = run_all(&c).unwrap().to_json();
    let b = run_all(&c).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn gamma_fault_is_localized() {
    let mut c = config(&quartic(128), 128, 8);
    c.fault = Some(FaultInjection::parse(128, "n=4,delta=1e-10").unwrap());
    let rep = run_all(&c).unwrap();
    assert!(!rep.passed());
    let string_fails: Vec<usize> = rep
        .group("string_equations")
        .filter(|r| !r.pass)
        .filter_map(|r| r.n)
        .collect();
    assert!(!string_fails.is_empty());
    assert!(string_fails.iter().all(|n| (3..=5).contains(n)), "{string_fails:?}");
    // structural identities hold for any coefficients
    assert!(rep.group("structure").all(|r| r.pass));
    // far from the fault nothing moves
    assert!(rep.group("flow_sum").filter(|r| r.n == Some(1)).all(|r| r.pass));
}

#[test]
fn beta_fault_is_detected() {
    let mut c = config(&quartic(128), 128, 6);
    c.fault = Some(FaultInjection::parse(128, "n=2,delta=1e-10,target=beta").unwrap());
    let rep = run_all(&c).unwrap();
    assert!(rep.group("string_equations").any(|r| !r.pass));
}

/// Residuals of every identity shrink when the precision goes from 128 to 256 bits.
#[test]
fn residuals_decrease_with_precision() {
    let mut low = config(&quartic(128), 128, 6);
    let mut high = config(&quartic(256), 256, 6);
    for c in [&mut low, &mut high] {
        c.only = [
            "string_equations",
            "uv_recurrences",
            "eta_expansion",
            "flow_sum",
            "flow_recursion",
            "divided_difference",
            "ode",
            "deformation",
            "trace_identity",
            "diag_identity",
            "orthonormality",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
    }
    let a = run_all(&low).unwrap();
    let b = run_all(&high).unwrap();
    for name in &low.only {
        let ra = a.max_residual(name).unwrap();
        let rb = b.max_residual(name).unwrap();
        assert!(rb < ra, "{name}: 128-bit {} vs 256-bit {}", real::to_sci(&ra), real::to_sci(&rb));
    }
}

/// Central differences in x converge with order close to 2.
#[test]
fn fd_in_x_has_order_two() {
    let prec = 256;
    let m = Model::build(&mixed(prec), 16, prec, 3).unwrap();
    let x = real::from_f64(prec, 0.7);
    let n = 4;
    let d = m.lax.d_matrix(n).unwrap();
    let psi = m.waves.eval_psi_all(n, &x).unwrap();
    let exact = d.apply(&x, &[psi[n - 1].clone(), psi[n].clone()]);
    let err = |h: f64| -> f64 {
        let fd = m.waves.fd_derivative(n, &x, &real::from_f64(prec, h)).unwrap();
        Float::with_val(prec, fd - &exact[1]).abs().to_f64()
    };
    let order = (err(1e-3) / err(5e-4)).log2();
    assert!((1.9..2.1).contains(&order), "order {order}");
}

/// Central differences in u_k converge with order close to 2.
#[test]
fn fd_in_u_k_has_order_two() {
    let prec = 256;
    let p = mixed(prec);
    let base = Model::build(&p, 16, prec, 3).unwrap();
    let xs = chebyshev_points(&verify::sample_radius(&base, 6), 5);
    for k in 1..=3 {
        let res = |delta: f64| -> Real {
            let def = Deformation::build(&p, k, &real::from_f64(prec, delta), 16, prec, &SolveOptions::default())
                .unwrap();
            deformation_residual(&base, &def, 3, &xs).unwrap().0
        };
        let ratio = (res(1e-4) / res(5e-5)).to_f64();
        assert!(ratio > 3.8 && ratio < 4.2, "k={k} ratio {ratio}");
    }
}

/// Even perturbations keep the weight symmetric: beta stays zero.
#[test]
fn even_deformation_keeps_beta_zero() {
    let prec = 192;
    let p = quartic(prec);
    let d = real::from_f64(prec, 1e-6);
    let even = Deformation::build(&p, 2, &d, 12, prec, &SolveOptions::default()).unwrap();
    assert!(even.plus.recurrence().beta.iter().all(|b| b.is_zero()));
    let odd = Deformation::build(&p, 3, &d, 12, prec, &SolveOptions::default()).unwrap();
    assert!(odd.plus.recurrence().beta.iter().any(|b| !b.is_zero()));
}

#[test]
fn backends_agree_far_beyond_working_tolerance() {
    for p in [quartic(256), mixed(256)] {
        let m = Model::build(&p, 24, 256, 1).unwrap();
        let cert = m.certified.unwrap();
        assert!(cert.agreement.max < 1e-60, "{:e}", cert.agreement.max);
    }
}

#[test]
fn check_names_are_stable() {
    assert_eq!(CHECK_NAMES.len(), 14);
    assert!(CHECK_NAMES.contains(&"trace_identity"));
}
