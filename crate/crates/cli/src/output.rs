//! CSV and JSON artifacts. Numbers are written with 17 significant digits.

use std::fmt::Write;

use gspline::bvpspline::PiecewiseSpline;
use gspline::spline::GeneralizedSpline;
use gspline::{Matrix, ProblemFile, Result};
use serde_json::{json, Value};

fn num(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").unwrap();
}

/// Uniform grid with both ends included: `samples + 1` points.
fn grid(t0: f64, t1: f64, samples: usize) -> impl Iterator<Item = f64> {
    (0..=samples).map(move |k| {
        if k == samples {
            t1
        } else {
            t0 + (t1 - t0) * k as f64 / samples as f64
        }
    })
}

pub fn lq_csv(s: &GeneralizedSpline, n: usize, samples: usize) -> Result<String> {
    let mut out = String::from("t");
    for prefix in ["x", "u", "psi"] {
        for j in 1..=n {
            write!(out, ",{prefix}_{j}").unwrap();
        }
    }
    out.push_str(",segment\n");
    for (i, seg) in s.segments().iter().enumerate() {
        for t in grid(seg.t_start(), seg.t_end(), samples) {
            num(&mut out, t);
            let x = seg.state(t);
            let u = seg.control(t)?;
            let psi = seg.costate(t);
            for v in x.iter().chain(u.iter()).chain(psi.iter()) {
                out.push(',');
                num(&mut out, *v);
            }
            writeln!(out, ",{i}").unwrap();
        }
    }
    Ok(out)
}

fn derivative_name(k: usize) -> String {
    match k {
        0 => "s".into(),
        1..=3 => format!("s{}", "'".repeat(k)),
        _ => format!("s^({k})"),
    }
}

pub fn spline_csv(s: &PiecewiseSpline, samples: usize) -> String {
    let (n, q) = (s.dim(), 2 * s.order());
    let mut out = String::from("t");
    for k in 0..q {
        for j in 1..=n {
            if n == 1 {
                write!(out, ",{}", derivative_name(k)).unwrap();
            } else {
                write!(out, ",{}_{j}", derivative_name(k)).unwrap();
            }
        }
    }
    out.push_str(",segment\n");
    let knots = s.knots();
    for i in 0..s.interval_count() {
        for t in grid(knots[i], knots[i + 1], samples) {
            num(&mut out, t);
            for v in s.jet_on(i, t).iter() {
                out.push(',');
                num(&mut out, *v);
            }
            writeln!(out, ",{i}").unwrap();
        }
    }
    out
}

pub fn lq_summary(file: &ProblemFile, s: &GeneralizedSpline, quadrature_cost: f64) -> String {
    let segments: Vec<Value> = s
        .segments()
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            json!({
                "index": i,
                "t_start": seg.t_start(),
                "t_end": seg.t_end(),
                "cost": seg.cost(),
                "psi_start": seg.psi_start().as_slice(),
            })
        })
        .collect();
    let hypotheses = match s.hypotheses() {
        Some(h) => json!({
            "checked": true,
            "smooth": h.smooth,
            "nonsingular_input": h.nonsingular_input,
            "controllable": h.controllable(),
        }),
        None => json!({ "checked": false }),
    };
    let summary = json!({
        "mode": file.mode.name(),
        "profile": file.profile.name,
        "samples": file.samples,
        "segments": segments,
        "total_cost": s.total_cost(),
        "quadrature_cost": quadrature_cost,
        "hypotheses": hypotheses,
        "fault": file.fault.map(|f| json!({"segment": f.segment, "costate_scale": f.costate_scale})),
    });
    serde_json::to_string_pretty(&summary).unwrap() + "\n"
}

pub fn spline_summary(file: &ProblemFile, s: &PiecewiseSpline, energy: f64) -> String {
    let summary = json!({
        "mode": file.mode.name(),
        "profile": file.profile.name,
        "samples": file.samples,
        "order": s.order(),
        "dimension": s.dim(),
        "intervals": s.interval_count(),
        "energy": energy,
        "collocation_pivot_ratio": s.pivot_ratio(),
    });
    serde_json::to_string_pretty(&summary).unwrap() + "\n"
}

pub fn matrix_rows(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:>24.16e}")).collect();
        writeln!(out, "  [{}]", cells.join(", ")).unwrap();
    }
    out
}
