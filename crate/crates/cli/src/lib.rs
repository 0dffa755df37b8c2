//! Front end for `ortholax-core`: argument parsing, dispatch and output.
//!
//! Every number is printed as a decimal string; JSON output carries the
//! working precision so results can be compared across runs and languages.

mod args;

use std::io::Write;

use clap::Parser;
use ortholax_core::real::{self, Real, MIN_PRECISION};
use ortholax_core::verify::{self, Deformation, FaultInjection, VerifyConfig};
use ortholax_core::{Error, Model, Potential, Result};
use serde::Serialize;
use serde_json::json;

pub use args::{Cli, Command, Common, Format};

/// Runs one command with `argv` (including the program name), writing
/// results to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok((text, code)) => {
            let _ = out.write_all(text.as_bytes());
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command) -> Result<(String, i32)> {
    match cmd {
        Command::Coeffs { common, n } => coeffs(common, *n).map(|s| (s, 0)),
        Command::Lax { common, n, k, k_max } => lax(common, *n, k, *k_max).map(|s| (s, 0)),
        Command::Psi {
            common,
            n,
            x,
            points,
        } => psi(common, *n, x, *points).map(|s| (s, 0)),
        Command::Verify { .. } => verify_cmd(cmd),
        Command::Deform {
            common,
            k,
            n,
            delta,
            x,
        } => deform(common, *k, *n, delta.as_deref(), x).map(|s| (s, 0)),
    }
}

fn potential(common: &Common) -> Result<Potential> {
    if common.precision < MIN_PRECISION {
        return Err(Error::Parse(format!(
            "--precision must be at least {MIN_PRECISION} bits"
        )));
    }
    let p = Potential::parse_text(common.precision, &common.potential)?;
    p.check_admissible()?;
    Ok(p)
}

fn parse_reals(prec: u32, xs: &[String]) -> Result<Vec<Real>> {
    xs.iter().map(|s| real::parse(prec, s)).collect()
}

fn order_for(common: &Common, p: &Potential, n: usize, k: usize) -> usize {
    common
        .truncation
        .unwrap_or_else(|| Model::default_order(n, p.vprime_degree().max(k)))
}

fn to_json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn coeffs(common: &Common, n: usize) -> Result<String> {
    let p = potential(common)?;
    let prec = common.precision;
    let order = common
        .truncation
        .unwrap_or_else(|| Model::default_order(n, p.vprime_degree()));
    if n >= order {
        return Err(Error::OutsideTrustWindow {
            n,
            m: n,
            trust: order,
        });
    }
    let model = Model::build(&p, order, prec, 1)?;
    let rc = model.recurrence();
    let cert = model.certified.as_ref().expect("built from scratch");
    let rows: Vec<Vec<String>> = (0..=n)
        .map(|i| {
            vec![
                i.to_string(),
                real::to_decimal(rc.gamma(i)),
                real::to_decimal(rc.beta(i)),
                real::to_decimal(rc.h(i)),
            ]
        })
        .collect();
    Ok(match common.format.unwrap_or(Format::Json) {
        Format::Csv => csv_string(&["n", "gamma", "beta", "h"], rows),
        Format::Json => to_json(&json!({
            "precision": prec,
            "potential": p.to_text(),
            "N": order,
            "stieltjes_nodes": cert.stieltjes_nodes,
            "moment_precision": cert.moment_prec,
            "backend_agreement": format!("{:.6e}", cert.agreement.max),
            "coefficients": rows.iter().map(|r| json!({
                "n": r[0].parse::<usize>().unwrap(),
                "gamma": r[1],
                "beta": r[2],
                "h": r[3],
            })).collect::<Vec<_>>(),
        })),
        Format::Text => {
            let mut s = format!(
                "# potential {} | precision {prec} | N {order}\n",
                p.to_text()
            );
            for r in rows {
                s.push_str(&format!("{}\t{}\t{}\t{}\n", r[0], r[1], r[2], r[3]));
            }
            s
        }
    })
}

fn lax(common: &Common, n: usize, ks: &[usize], k_max: Option<usize>) -> Result<String> {
    let p = potential(common)?;
    let prec = common.precision;
    if n == 0 {
        return Err(Error::InvalidIndex("--n must be at least 1".into()));
    }
    let mut all_k: Vec<usize> = ks.to_vec();
    if let Some(km) = k_max {
        all_k.extend(1..=km);
    }
    all_k.sort_unstable();
    all_k.dedup();
    if all_k.first() == Some(&0) {
        return Err(Error::InvalidIndex("k must be at least 1".into()));
    }
    let top_k = all_k.last().copied().unwrap_or(1);
    let order = order_for(common, &p, n, top_k);
    let model = Model::build(&p, order, prec, top_k)?;
    let lax = &model.lax;
    let dm = lax.d_matrix(n)?;
    let dd = lax.derivative_data(n)?;
    let us = all_k
        .iter()
        .map(|&k| Ok((k, lax.cal_u_matrix(k, n)?)))
        .collect::<Result<Vec<_>>>()?;

    Ok(match common.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({
            "precision": prec,
            "potential": p.to_text(),
            "N": order,
            "n": n,
            "gamma_n": real::to_decimal(lax.gamma(n)),
            "u_n": dd.u.to_decimal_strings(),
            "v_n": dd.v.to_decimal_strings(),
            "d_matrix": dm.to_json(),
            "cal_u": us.iter().map(|(k, u)| json!({"k": k, "matrix": u.to_json()})).collect::<Vec<_>>(),
        })),
        fmt => {
            let mut rows = Vec::new();
            let mut push = |name: &str, k: String, m: &ortholax_core::PolyMatrix2x2| {
                for (r, row) in m.entries.iter().enumerate() {
                    for (c, e) in row.iter().enumerate() {
                        for (pw, v) in e.coeffs().iter().enumerate() {
                            rows.push(vec![
                                name.to_string(),
                                k.clone(),
                                r.to_string(),
                                c.to_string(),
                                pw.to_string(),
                                real::to_decimal(v),
                            ]);
                        }
                    }
                }
            };
            push("D", String::new(), &dm);
            for (k, u) in &us {
                push("U", k.to_string(), u);
            }
            let header = ["matrix", "k", "row", "col", "power", "coefficient"];
            if fmt == Format::Csv {
                csv_string(&header, rows)
            } else {
                let mut s = format!(
                    "# potential {} | precision {prec} | N {order} | n {n}\n",
                    p.to_text()
                );
                for r in rows {
                    s.push_str(&r.join("\t"));
                    s.push('\n');
                }
                s
            }
        }
    })
}

fn sample_points(model: &Model, n: usize, xs: &[String], points: usize) -> Result<Vec<Real>> {
    if xs.is_empty() {
        let a = verify::sample_radius(model, n.max(1));
        Ok(verify::chebyshev_points(&a, points.max(1)))
    } else {
        parse_reals(model.prec, xs)
    }
}

fn psi(common: &Common, n: usize, xs: &[String], points: usize) -> Result<String> {
    let p = potential(common)?;
    let prec = common.precision;
    let order = order_for(common, &p, n.max(1), 1);
    let model = Model::build(&p, order, prec, 1)?;
    let xs = sample_points(&model, n, xs, points)?;
    let dm = if n >= 1 { Some(model.lax.d_matrix(n)?) } else { None };
    let mut rows = Vec::new();
    for x in &xs {
        let all = model.waves.eval_psi_all(n, x)?;
        let mut row = vec![real::to_decimal(x), real::to_decimal(&all[n])];
        match &dm {
            Some(d) => {
                let pair = [all[n - 1].clone(), all[n].clone()];
                let dp = d.apply(x, &pair);
                row.push(real::to_decimal(&pair[0]));
                row.push(real::to_decimal(&dp[0]));
                row.push(real::to_decimal(&dp[1]));
            }
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        rows.push(row);
    }
    let header = ["x", "psi_n", "psi_n_minus_1", "dpsi_n_minus_1", "dpsi_n"];
    Ok(match common.format.unwrap_or(Format::Json) {
        Format::Csv => csv_string(&header, rows),
        Format::Json => to_json(&json!({
            "precision": prec,
            "potential": p.to_text(),
            "N": order,
            "n": n,
            "points": rows.iter().map(|r| {
                let mut o = serde_json::Map::new();
                for (h, v) in header.iter().zip(r) {
                    if !v.is_empty() {
                        o.insert(h.to_string(), json!(v));
                    }
                }
                serde_json::Value::Object(o)
            }).collect::<Vec<_>>(),
        })),
        Format::Text => {
            let mut s = format!("# {}\n", header.join("\t"));
            for r in rows {
                s.push_str(&r.join("\t"));
                s.push('\n');
            }
            s
        }
    })
}

fn verify_cmd(cmd: &Command) -> Result<(String, i32)> {
    let Command::Verify {
        common,
        n_max,
        k_max,
        delta,
        h,
        tol_algebraic,
        tol_fd,
        fd_constant,
        ortho_n_max,
        x_samples,
        only,
        fault_inject,
        json,
    } = cmd
    else {
        unreachable!("verify_cmd called with another subcommand")
    };
    let p = potential(common)?;
    let prec = common.precision;
    let opt_real = |s: &Option<String>| -> Result<Option<Real>> {
        s.as_deref().map(|v| real::parse(prec, v)).transpose()
    };
    let mut cfg = VerifyConfig::new(&p, prec);
    cfg.order = common.truncation;
    cfg.n_max = *n_max;
    cfg.k_max = *k_max;
    cfg.delta = opt_real(delta)?;
    cfg.fd_step = opt_real(h)?;
    cfg.tol_algebraic = opt_real(tol_algebraic)?;
    cfg.tol_fd = opt_real(tol_fd)?;
    if let Some(c) = fd_constant {
        cfg.fd_constant = *c;
    }
    cfg.ortho_n_max = *ortho_n_max;
    cfg.x_samples = *x_samples;
    cfg.seed = common.seed;
    cfg.only = only.clone();
    cfg.fault = fault_inject
        .as_deref()
        .map(|s| FaultInjection::parse(prec, s))
        .transpose()?;
    let report = verify::run_all(&cfg)?;
    let format = if *json {
        Format::Json
    } else {
        common.format.unwrap_or(Format::Text)
    };
    let text = match format {
        Format::Json => {
            let mut s = report.to_json();
            s.push('\n');
            s
        }
        Format::Text => report.to_text(),
        Format::Csv => csv_string(
            &["check", "item", "k", "n", "m", "residual", "tolerance", "pass", "error"],
            report
                .checks
                .iter()
                .map(|c| {
                    let opt = |v: Option<usize>| v.map(|i| i.to_string()).unwrap_or_default();
                    vec![
                        c.check.to_string(),
                        c.item.to_string(),
                        opt(c.k),
                        opt(c.n),
                        opt(c.m),
                        c.residual.as_ref().map(real::to_sci).unwrap_or_default(),
                        real::to_sci(&c.tolerance),
                        c.pass.to_string(),
                        c.error.clone().unwrap_or_default(),
                    ]
                })
                .collect(),
        ),
    };
    Ok((text, report.exit_code()))
}

fn deform(common: &Common, k: usize, n: usize, delta: Option<&str>, xs: &[String]) -> Result<String> {
    let p = potential(common)?;
    let prec = common.precision;
    if n == 0 || k == 0 {
        return Err(Error::InvalidIndex("--k and --n must be at least 1".into()));
    }
    let order = order_for(common, &p, n, k);
    let delta = match delta {
        Some(s) => real::parse(prec, s)?,
        None => real::pow2(prec, -((prec / 4) as i32)),
    };
    let opts = ortholax_core::SolveOptions::default();
    let base = Model::build(&p, order, prec, k)?;
    let def = Deformation::build(&p, k, &delta, order, prec, &opts)?;
    let xs = sample_points(&base, n, xs, 7)?;
    let (residual, scale) = verify::deformation_residual(&base, &def, n, &xs)?;
    let (trace, dlg) = verify::trace_identity_terms(&base, &def, n)?;
    let (qkk, dlh) = verify::diag_identity_terms(&base, &def, n)?;
    let fields: Vec<(&str, String)> = vec![
        ("k", k.to_string()),
        ("n", n.to_string()),
        ("delta", real::to_sci(&delta)),
        ("residual", real::to_sci(&residual)),
        ("scale", real::to_sci(&scale)),
        ("trace_u", real::to_decimal(&trace)),
        ("dlngamma_du", real::to_decimal(&dlg)),
        ("qk_nn_over_k", real::to_decimal(&qkk)),
        ("dlnh_du", real::to_decimal(&dlh)),
    ];
    Ok(match common.format.unwrap_or(Format::Text) {
        Format::Text => {
            let mut s = fields
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ");
            s.push('\n');
            s
        }
        Format::Csv => csv_string(
            &fields.iter().map(|(k, _)| *k).collect::<Vec<_>>(),
            vec![fields.iter().map(|(_, v)| v.clone()).collect()],
        ),
        Format::Json => {
            let mut o = serde_json::Map::new();
            o.insert("precision".into(), json!(prec));
            o.insert("potential".into(), json!(p.to_text()));
            o.insert("N".into(), json!(order));
            o.insert(
                "x".into(),
                json!(xs.iter().map(real::to_sci).collect::<Vec<_>>()),
            );
            for (k, v) in &fields {
                o.insert(k.to_string(), json!(v));
            }
            to_json(&serde_json::Value::Object(o))
        }
    })
}
