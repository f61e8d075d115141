//! CSV and JSON emitters. Wall times are written only when asked for, so
//! that reports of seeded runs are byte-identical across invocations.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use super::experiments::{Exp1Row, Exp2Curve, StreamExperiment};
use super::monte_carlo::McSummary;
use crate::error::{LpsError, Result};
use crate::fewshot::StreamMethod;

fn io_err(e: impl std::fmt::Display) -> LpsError {
    LpsError::InvalidArgument(format!("report output failed: {e}"))
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per trial.
pub fn write_trials_csv<W: Write>(w: W, summary: &McSummary, timings: bool) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["trial", "seed", "init_nrmse", "final_nrmse", "iterations"];
    if timings {
        header.extend(["init_secs", "total_secs"]);
    }
    out.write_record(&header).map_err(io_err)?;
    for r in &summary.results {
        let mut row = vec![
            r.trial.to_string(),
            r.seed.to_string(),
            r.init_nrmse.to_string(),
            r.final_nrmse.to_string(),
            r.iterations.to_string(),
        ];
        if timings {
            row.extend([r.init_secs.to_string(), r.total_secs.to_string()]);
        }
        out.write_record(&row).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Summary statistics as a JSON object.
pub fn summary_json(summary: &McSummary, timings: bool) -> Result<Value> {
    let mut v = serde_json::to_value(summary).map_err(io_err)?;
    if !timings {
        if let Value::Object(map) = &mut v {
            map.remove("mean_init_secs");
            map.remove("mean_total_secs");
        }
    }
    Ok(v)
}

/// Mean NRMSE per iteration, one column per curve. Row 0 is the init error.
pub fn write_curves_csv<W: Write>(w: W, curves: &[Exp2Curve]) -> Result<()> {
    let means: Vec<Vec<f64>> = curves.iter().map(|c| c.summary.mean_curve()).collect();
    let len = means.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = csv_writer(w);
    let mut header = vec!["iteration".to_string()];
    header.extend(curves.iter().map(|c| c.label.clone()));
    out.write_record(&header).map_err(io_err)?;
    for i in 0..len {
        let mut row = vec![i.to_string()];
        row.extend(means.iter().map(|m| m[i.min(m.len() - 1)].to_string()));
        out.write_record(&row).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// One row per (magnitude, method) with init errors.
pub fn write_exp1_csv<W: Write>(w: W, rows: &[Exp1Row], timings: bool) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["magnitude", "method", "trials", "mean_nrmse", "std_nrmse"];
    if timings {
        header.push("mean_init_secs");
    }
    out.write_record(&header).map_err(io_err)?;
    for row in rows {
        for s in [&row.lps, &row.lr] {
            let mut rec = vec![
                row.magnitude.to_string(),
                s.solver.to_string(),
                s.trials.to_string(),
                s.mean_nrmse.to_string(),
                s.std_nrmse.to_string(),
            ];
            if timings {
                rec.push(s.mean_init_secs.to_string());
            }
            out.write_record(&rec).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

pub fn exp1_json(rows: &[Exp1Row], timings: bool) -> Result<Value> {
    let items = rows
        .iter()
        .map(|r| Ok(json!({ "magnitude": r.magnitude, "lps": summary_json(&r.lps, timings)?, "lr": summary_json(&r.lr, timings)? })))
        .collect::<Result<Vec<_>>>()?;
    Ok(Value::Array(items))
}

pub fn exp2_json(curves: &[Exp2Curve], timings: bool) -> Result<Value> {
    let items = curves
        .iter()
        .map(|c| Ok(json!({ "label": c.label, "m": c.m, "summary": summary_json(&c.summary, timings)? })))
        .collect::<Result<Vec<_>>>()?;
    Ok(Value::Array(items))
}

fn method_name(m: StreamMethod) -> &'static str {
    match m {
        StreamMethod::FsLr => "fs-lr",
        StreamMethod::FsLps => "fs-lps",
    }
}

/// One row per (method, frame).
pub fn write_stream_csv<W: Write>(w: W, exp: &StreamExperiment, timings: bool) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["method", "frame", "burst", "low_latency_error", "delayed_error"];
    if timings {
        header.push("latency_secs");
    }
    out.write_record(&header).map_err(io_err)?;
    for r in &exp.results {
        for f in &r.frames {
            let mut rec = vec![
                method_name(r.method).to_string(),
                f.frame.to_string(),
                u8::from(f.burst).to_string(),
                opt(f.low_latency_error),
                f.delayed_error.to_string(),
            ];
            if timings {
                rec.push(opt(f.latency_secs));
            }
            out.write_record(&rec).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

pub fn stream_json(exp: &StreamExperiment, timings: bool) -> Result<Value> {
    let items = exp
        .results
        .iter()
        .map(|r| {
            let mut batches = serde_json::to_value(&r.batches).map_err(io_err)?;
            if !timings {
                if let Value::Array(bs) = &mut batches {
                    for b in bs {
                        if let Value::Object(map) = b {
                            map.remove("elapsed_secs");
                        }
                    }
                }
            }
            Ok(json!({
                "method": method_name(r.method),
                "mean_low_latency_error": r.mean_low_latency_error(),
                "mean_burst_error": r.mean_burst_error(),
                "batches": batches,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({ "burst_frames": exp.truth.burst_frames, "methods": items }))
}

/// Pretty JSON followed by a newline.
pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(io_err)?;
    writeln!(w).map_err(io_err)
}
