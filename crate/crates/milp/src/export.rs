//! CPLEX LP-format writer, for handing models to an external solver.

use crate::model::{MilpModel, RowSense, Sense, VarKind};
use crate::Scalar;
use std::fmt::Write;

/// Render `model` as LP-format text.
///
/// Unnamed variables and constraints get generated names (`x0`, `c0`, ...).
pub fn export_model<S: Scalar>(model: &MilpModel<S>) -> String {
    let var_name = |i: usize| -> String {
        model.variables[i]
            .name
            .clone()
            .unwrap_or_else(|| format!("x{i}"))
    };

    let mut out = String::new();
    out.push_str(match model.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    if model.objective.is_empty() {
        // LP format needs at least one term in the objective.
        out.push_str(" 0 x_const");
    }
    for &(v, c) in &model.objective {
        write_term(&mut out, c, &var_name(v));
    }
    out.push('\n');

    out.push_str("Subject To\n");
    for (i, con) in model.constraints.iter().enumerate() {
        let name = con.name.clone().unwrap_or_else(|| format!("c{i}"));
        write!(out, " {name}:").unwrap();
        if con.terms.is_empty() {
            out.push_str(" 0 x_const");
        }
        for &(v, c) in &con.terms {
            write_term(&mut out, c, &var_name(v));
        }
        let op = match con.sense {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        };
        writeln!(out, " {op} {}", fmt_num(con.rhs)).unwrap();
    }

    out.push_str("Bounds\n");
    if model.objective.is_empty() || model.constraints.iter().any(|c| c.terms.is_empty()) {
        out.push_str(" x_const = 0\n");
    }
    for (i, v) in model.variables.iter().enumerate() {
        let name = var_name(i);
        if v.kind == VarKind::Binary {
            continue; // implied [0,1]
        }
        if v.upper.is_finite() {
            writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), name, fmt_num(v.upper)).unwrap();
        } else {
            writeln!(out, " {} <= {} <= +inf", fmt_num(v.lower), name).unwrap();
        }
    }

    let binaries: Vec<String> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| var_name(i))
        .collect();
    out.push_str("Binaries\n");
    for b in &binaries {
        writeln!(out, " {b}").unwrap();
    }
    let generals: Vec<String> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Integer)
        .map(|(i, _)| var_name(i))
        .collect();
    if !generals.is_empty() {
        out.push_str("Generals\n");
        for g in &generals {
            writeln!(out, " {g}").unwrap();
        }
    }
    out.push_str("End\n");
    out
}

fn write_term<S: Scalar>(out: &mut String, coeff: S, name: &str) {
    if coeff < S::zero() {
        write!(out, " - {} {}", fmt_num(-coeff), name).unwrap();
    } else {
        write!(out, " + {} {}", fmt_num(coeff), name).unwrap();
    }
}

fn fmt_num<S: Scalar>(v: S) -> String {
    let f = v.to_f64().unwrap_or(f64::NAN);
    if f == f.trunc() && f.abs() < 1e15 {
        format!("{}", f as i64)
    } else {
        format!("{f}")
    }
}
