//! Acceptance criteria 1-11 at 256-bit precision. Prints one PASS/FAIL line
//! per criterion.
//!
//! Exit status: nonzero if any criterion fails, except criteria listed in
//! `KNOWN_RED` (printed with their reason). Set `ACCEPTANCE_STRICT=1` to
//! fail on those as well.

use std::time::Instant;

use ortholax_core::moments::cross_validate;
use ortholax_core::real;
use ortholax_core::verify::{
    chebyshev_points, deformation_residual, ode_residual, run_all, sample_radius,
    trace_identity_terms, Deformation, FaultInjection,
};
use ortholax_core::wavefunction::default_fd_step;
use ortholax_core::{Model, Potential, Real, SolveOptions, VerifyConfig};
use rug::Float;

const PREC: u32 = 256;

type Criterion = (usize, &'static str, fn() -> Outcome);

/// Criteria expected to fail, with the reason.
const KNOWN_RED: &[(usize, &str)] = &[(
    7,
    "stated sign of d ln gamma_n/du_k = tr U_k is reversed: differentiating the \
     normalization gives d ln h_n/du_k = -(Q^k)_nn/k, hence tr U_k = -d ln gamma_n/du_k",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn sci(x: &Real) -> String {
    real::to_sci(x)
}

fn f(prec: u32, v: f64) -> Real {
    real::from_f64(prec, v)
}

fn hermite() -> Potential {
    Potential::parse_text(PREC, "2=2").unwrap()
}

fn quartic() -> Potential {
    Potential::parse_text(PREC, "4=1").unwrap()
}

fn mixed() -> Potential {
    Potential::parse_text(PREC, "2=1,3=0.3,4=1").unwrap()
}

fn potentials() -> Vec<(&'static str, Potential)> {
    vec![("hermite", hermite()), ("quartic", quartic()), ("mixed", mixed())]
}

fn max(a: Real, b: &Real) -> Real {
    if *b > a {
        b.clone()
    } else {
        a
    }
}

fn model(p: &Potential, n_max: usize, max_k: usize) -> Model {
    let order = Model::default_order(n_max, p.vprime_degree().max(max_k));
    Model::build(p, order, PREC, max_k).expect("pipeline builds")
}

fn c1_hermite_closed_form() -> Outcome {
    let m = model(&hermite(), 20, 1);
    let mut worst_g = f(PREC, 0.0);
    let mut worst_b = f(PREC, 0.0);
    for n in 0..=20 {
        if n >= 1 {
            let g2 = Float::with_val(PREC, m.recurrence().gamma(n).square_ref());
            let exact = f(PREC, n as f64 / 2.0);
            worst_g = max(worst_g, &real::rel_diff(&g2, &exact, &real::zero(PREC)));
        }
        worst_b = max(worst_b, &Float::with_val(PREC, m.recurrence().beta(n).abs_ref()));
    }
    let tol = f(PREC, 1e-30);
    outcome(
        worst_g < tol && worst_b < tol,
        format!("max rel err gamma^2 {}, max |beta| {} (< 1e-30)", sci(&worst_g), sci(&worst_b)),
    )
}

fn c2_backend_agreement() -> Outcome {
    let m = model(&quartic(), 20, 1);
    let cert = m.certified.as_ref().unwrap();
    let cv = cross_validate(&cert.from_moments, &cert.from_stieltjes);
    let worst = cv
        .per_n
        .iter()
        .filter(|(n, _, _)| *n <= 20)
        .map(|&(_, dg, db)| dg.max(db))
        .fold(0.0f64, f64::max);
    outcome(
        worst < 1e-25,
        format!(
            "quartic n<=20: max relative discrepancy {worst:.3e} (< 1e-25); moments at {} bits, Stieltjes with {} nodes",
            cert.moment_prec, cert.stieltjes_nodes
        ),
    )
}

fn group_max(p: &Potential, group: &str, n_max: usize) -> Real {
    let mut c = VerifyConfig::new(p, PREC);
    c.n_max = Some(n_max);
    c.only = vec![group.to_string()];
    let rep = run_all(&c).unwrap();
    assert!(rep.group(group).all(|r| r.error.is_none()), "{group} errored");
    rep.max_residual(group).unwrap()
}

fn c3_string_equations() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, p) in potentials() {
        let r = group_max(&p, "string_equations", 15);
        pass &= r < f(PREC, 1e-25);
        parts.push(format!("{name} {}", sci(&r)));
    }
    outcome(pass, format!("n<=15 max residual: {} (< 1e-25)", parts.join(", ")))
}

fn c4_ode() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, p) in potentials() {
        let m = model(&p, 10, 1);
        let xs = chebyshev_points(&sample_radius(&m, 10), 7);
        let h = default_fd_step(PREC, &real::zero(PREC));
        let mut worst = f(PREC, 0.0);
        let mut at_one = f(PREC, 0.0);
        for n in 1..=10 {
            let (r, _) = ode_residual(&m, n, &xs, &h).unwrap();
            if n == 1 {
                at_one = r.clone();
            }
            worst = max(worst, &r);
        }
        pass &= worst < f(PREC, 1e-10);
        parts.push(format!("{name} {} (n=1: {})", sci(&worst), sci(&at_one)));
    }
    outcome(pass, format!("7-point grid, n in [1,10]: {} (< 1e-10)", parts.join(", ")))
}

fn c5_uv_recurrences() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, p) in potentials() {
        let m = model(&p, 15, 1);
        let scale = real::max_abs(PREC, p.vprime_coeffs().iter()).max(&real::one(PREC));
        let mut worst = f(PREC, 0.0);
        for n in 1..=15 {
            let (a, b) = m.lax.uv_recurrence_residuals(n).unwrap();
            worst = max(worst, &a.max_abs_coeff());
            worst = max(worst, &b.max_abs_coeff());
        }
        let rel = worst / &scale;
        pass &= rel < f(PREC, 1e-25);
        parts.push(format!("{name} {}", sci(&rel)));
    }
    outcome(pass, format!("max coefficient / scale: {} (< 1e-25)", parts.join(", ")))
}

fn deformation_max(p: &Potential, base: &Model, k: usize, delta: f64, xs: &[Real]) -> Real {
    let def = Deformation::build(p, k, &f(PREC, delta), base.order, PREC, &SolveOptions::default())
        .unwrap();
    let mut worst = f(PREC, 0.0);
    for n in 1..=6 {
        worst = max(worst, &deformation_residual(base, &def, n, xs).unwrap().0);
    }
    worst
}

fn c6_deformation() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, p) in potentials() {
        let d = p.vprime_degree();
        let base = model(&p, 6, d);
        let xs = chebyshev_points(&sample_radius(&base, 6), 7);
        for k in 1..=d {
            let r1 = deformation_max(&p, &base, k, 1e-6, &xs);
            let r2 = deformation_max(&p, &base, k, 5e-7, &xs);
            let r3 = deformation_max(&p, &base, k, 1e-8, &xs);
            let ratio = Float::with_val(PREC, &r1 / &r2).to_f64();
            let ok = (3.8..=4.2).contains(&ratio) && r3 < f(PREC, 1e-8);
            pass &= ok;
            parts.push(format!("{name} k={k}: ratio {ratio:.4}, res(1e-8) {}", sci(&r3)));
        }
    }
    outcome(pass, parts.join("; "))
}

/// As stated: tr U_k is x-independent, equals the FD of ln gamma_n to
/// O(delta^2), and for Hermite with variable u_2 equals -1/(2 u_2).
fn c7_trace_identity() -> Outcome {
    let mut structural = true;
    let mut worst_fd = f(PREC, 0.0);
    let mut worst_fd_corrected = f(PREC, 0.0);
    let mut ratios = Vec::new();
    for (_, p) in potentials() {
        let d = p.vprime_degree();
        let base = model(&p, 10, d.max(2));
        for k in 1..=d {
            for n in 1..=10 {
                let tr = base.lax.cal_u_matrix(k, n).unwrap().trace();
                structural &= tr.coeffs().iter().skip(1).all(|c| c.is_zero());
            }
            let opts = SolveOptions::default();
            let d1 = Deformation::build(&p, k, &f(PREC, 1e-6), base.order, PREC, &opts).unwrap();
            let d2 = Deformation::build(&p, k, &f(PREC, 5e-7), base.order, PREC, &opts).unwrap();
            for n in 1..=10 {
                let (tr, fd1) = trace_identity_terms(&base, &d1, n).unwrap();
                let (_, fd2) = trace_identity_terms(&base, &d2, n).unwrap();
                let stated1 = Float::with_val(PREC, &tr - &fd1).abs();
                let stated2 = Float::with_val(PREC, &tr - &fd2).abs();
                worst_fd = max(worst_fd, &stated1);
                ratios.push(Float::with_val(PREC, &stated1 / &stated2).to_f64());
                let corr = Float::with_val(PREC, &tr + &fd1).abs();
                worst_fd_corrected = max(worst_fd_corrected, &corr);
            }
        }
    }
    let fd_ok = worst_fd < f(PREC, 1e-8) && ratios.iter().all(|r| (3.8..=4.2).contains(r));

    // Hermite with variable u_2: gamma_n^2 = n / u_2.
    let p = hermite();
    let u2 = p.u(2);
    let base = model(&p, 10, 2);
    let mut worst_closed = f(PREC, 0.0);
    let mut worst_closed_corrected = f(PREC, 0.0);
    let stated = Float::with_val(PREC, -1) / Float::with_val(PREC, &u2 * 2u32);
    for n in 1..=10 {
        let g2 = Float::with_val(PREC, base.recurrence().gamma(n).square_ref());
        let exact = Float::with_val(PREC, n as u32) / &u2;
        assert!(real::rel_diff(&g2, &exact, &real::zero(PREC)) < f(PREC, 1e-60));
        let tr = base.lax.cal_u_matrix(2, n).unwrap().trace().coeff(0);
        worst_closed = max(worst_closed, &Float::with_val(PREC, &tr - &stated).abs());
        worst_closed_corrected =
            max(worst_closed_corrected, &Float::with_val(PREC, &tr + &stated).abs());
    }
    let closed_ok = worst_closed < f(PREC, 1e-25);
    let ratio_range = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    outcome(
        structural && fd_ok && closed_ok,
        format!(
            "x-independent: {structural}; |tr U_k - FD ln gamma_n| max {} (delta-halving ratios {:.3}..{:.3}); \
             Hermite |tr U_2 + 1/(2u_2)| max {} | with reversed sign: |tr U_k + FD ln gamma_n| max {}, |tr U_2 - 1/(2u_2)| max {}",
            sci(&worst_fd),
            ratio_range.0,
            ratio_range.1,
            sci(&worst_closed),
            sci(&worst_fd_corrected),
            sci(&worst_closed_corrected),
        ),
    )
}

fn c8_flow_sum() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, p) in potentials() {
        let m = model(&p, 10, p.vprime_degree());
        let mut worst = f(PREC, 0.0);
        for n in 1..=10 {
            let d = m.lax.d_matrix(n).unwrap();
            let s = d.max_abs_coeff().max(&real::one(PREC));
            let r = d.max_abs_diff(&m.lax.d_from_flows(n).unwrap()) / s;
            worst = max(worst, &r);
        }
        pass &= worst < f(PREC, 1e-25);
        parts.push(format!("{name} {}", sci(&worst)));
    }
    outcome(pass, format!("n in [1,10], coefficientwise / scale: {} (< 1e-25)", parts.join(", ")))
}

fn c9_structure() -> Outcome {
    let mut failures = Vec::new();
    for (name, p) in potentials() {
        let d = p.vprime_degree();
        let kmax = d + 1;
        let m = model(&p, 10, kmax);
        let lax = &m.lax;
        if !lax.p_matrix().max_antisymmetry_defect().is_zero() {
            failures.push(format!("{name}: P"));
        }
        for k in 0..=kmax {
            if k >= 1 && !lax.u_k_matrix(k).unwrap().max_antisymmetry_defect().is_zero() {
                failures.push(format!("{name}: U_{k}"));
            }
            if !lax.powers().get(k).max_outside_band(k).is_zero() {
                failures.push(format!("{name}: Q^{k} band"));
            }
        }
        let thr = ortholax_core::jacobi::trim_threshold(PREC);
        for n in 1..=10usize {
            for mm in n.saturating_sub(d)..=n + d {
                if lax.r_entry(n, mm).unwrap() != lax.r_entry(mm, n).unwrap() {
                    failures.push(format!("{name}: R_({n},{mm})"));
                }
            }
            let dd = lax.derivative_data(n).unwrap();
            let du = dd.u.trimmed_degree(&thr).map_or(-1, |v| v as i64);
            let dv = dd.v.trimmed_degree(&thr).map_or(-1, |v| v as i64);
            if du > d as i64 - 2 || dv > d as i64 - 1 {
                failures.push(format!("{name}: deg u_{n} = {du}, deg v_{n} = {dv}"));
            }
            for k in 1..=kmax {
                let deg = lax.cal_u_matrix(k, n).unwrap().trimmed_degree();
                if deg.is_some_and(|g| g > k) {
                    failures.push(format!("{name}: deg U_{k} at n={n}"));
                }
            }
        }
    }
    let pass = failures.is_empty();
    let detail = if pass {
        "P, U_k antisymmetric; R symmetric; degree bounds; Q^k band: all exact".to_string()
    } else {
        failures.join(", ")
    };
    outcome(pass, detail)
}

fn c10_fault_injection() -> Outcome {
    let mut missed = Vec::new();
    let mut tried = 0;
    for (name, p) in [("quartic", quartic()), ("mixed", mixed())] {
        for n in 1..=10 {
            let mut c = VerifyConfig::new(&p, PREC);
            c.n_max = Some(10);
            c.fault = Some(FaultInjection::parse(PREC, &format!("n={n},delta=1e-10")).unwrap());
            let rep = run_all(&c).unwrap();
            tried += 1;
            if rep.passed() {
                missed.push(format!("{name} gamma_{n}"));
            }
        }
    }
    let note = if missed.is_empty() {
        String::new()
    } else {
        format!("; missed {}", missed.join(", "))
    };
    outcome(
        missed.is_empty(),
        format!("{} of {tried} single-gamma shifts by 1e-10 detected{note}", tried - missed.len()),
    )
}

fn c11_orthonormality() -> Outcome {
    let m = model(&quartic(), 10, 1);
    let rows = m.waves.orthonormality_residuals(10).unwrap();
    let worst = rows.iter().flatten().fold(f(PREC, 0.0), max);
    outcome(
        worst < f(PREC, 1e-20),
        format!("quartic n,m<=10: max |<psi_n,psi_m> - delta| {} (< 1e-20)", sci(&worst)),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--list`; answer them briefly.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: Vec<Criterion> = vec![
        (1, "Hermite closed form", c1_hermite_closed_form),
        (2, "cross-backend agreement", c2_backend_agreement),
        (3, "string equations", c3_string_equations),
        (4, "ODE in x", c4_ode),
        (5, "u_n/v_n recurrences", c5_uv_recurrences),
        (6, "deformation in u_k", c6_deformation),
        (7, "trace identity", c7_trace_identity),
        (8, "flow-sum consistency", c8_flow_sum),
        (9, "structural suite", c9_structure),
        (10, "fault-injection sensitivity", c10_fault_injection),
        (11, "orthonormality", c11_orthonormality),
    ];
    let mut hard_failures = 0;
    let mut known = 0;
    for (id, name, run) in criteria {
        let t = Instant::now();
        let o = run();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "{} criterion {id:>2} {name}: {} [{secs:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            match KNOWN_RED.iter().find(|(k, _)| *k == id) {
                Some((_, why)) if !strict => {
                    known += 1;
                    println!("     criterion {id:>2} is a known failure: {why}");
                }
                _ => hard_failures += 1,
            }
        }
    }
    println!("acceptance: {hard_failures} unexpected failure(s), {known} known failure(s)");
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
