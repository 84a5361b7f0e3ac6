//! File formats: trajectory CSV, basin CSV, the binary pixmap rendering,
//! and flat key=value reports. Floats in CSV carry 17 significant digits so
//! a written grid reclassifies bit-identically after a round trip.

use crate::basin::{BasinMap, BasinSummary, BoxCountResult, CellClass, GridSpec};
use crate::error::{Error, Result};
use crate::integrator::{IntegrationOutcome, Status};
use crate::melnikov::MelnikovReport;
use crate::model::ModelParams;
use crate::poincare::{AttractorClass, PoincareOptions};
use std::io::{BufRead, Write};

/// Lossless 17-significant-digit form used in CSV bodies.
pub fn csv_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn params_header(params: &ModelParams) -> String {
    format!(
        "# alpha={} beta={} beta1={} gamma={} delta={} a={} omega1={}",
        params.alpha, params.beta, params.beta1, params.gamma, params.delta, params.a,
        params.omega1
    )
}

/// Trajectory CSV: a parameter echo, a `t,p,q` header, one row per sample,
/// and a trailing escape comment when the run diverged.
pub fn write_trajectory_csv<W: Write>(
    w: &mut W,
    params: &ModelParams,
    outcome: &IntegrationOutcome,
) -> std::io::Result<()> {
    writeln!(w, "{}", params_header(params))?;
    writeln!(w, "t,p,q")?;
    if let Some(traj) = &outcome.trajectory {
        for (t, s) in traj.iter() {
            writeln!(w, "{},{},{}", csv_num(t), csv_num(s.p), csv_num(s.q))?;
        }
    }
    if outcome.status == Status::Escaped {
        let sign = outcome.escape_sign.expect("escaped outcome carries a sign");
        writeln!(w, "# escaped sign={} t={}", sign, outcome.final_time)?;
    }
    Ok(())
}

/// Key=value report of the closed-form chaos threshold analysis.
pub fn write_melnikov_report<W: Write>(
    w: &mut W,
    params: &ModelParams,
    report: &MelnikovReport,
    with_forcing: bool,
) -> std::io::Result<()> {
    writeln!(w, "{}", params_header(params))?;
    writeln!(w, "threshold_a={}", report.threshold_a)?;
    writeln!(w, "integral_I={}", report.integral_i)?;
    writeln!(w, "offset_term={}", report.offset_term)?;
    if with_forcing {
        writeln!(w, "amplitude_term={}", report.amplitude_term)?;
        writeln!(w, "has_simple_roots={}", report.has_simple_roots)?;
        if let Some(ratio) = report.root_ratio {
            writeln!(w, "root_ratio={ratio}")?;
        }
        if let Some([r0, r1]) = report.principal_roots {
            writeln!(w, "principal_roots={r0},{r1}")?;
        }
    }
    Ok(())
}

/// Classification report: one summary line, then the cycle as CSV rows
/// `k,index,p,q` when periodic.
pub fn write_classification<W: Write>(
    w: &mut W,
    params: &ModelParams,
    class: &AttractorClass,
) -> std::io::Result<()> {
    writeln!(w, "{}", params_header(params))?;
    match class {
        AttractorClass::Periodic {
            period,
            cycle,
            iterations,
        } => {
            writeln!(w, "kind=periodic period={period} iters={iterations}")?;
            writeln!(w, "k,index,p,q")?;
            for (index, s) in cycle.iter().enumerate() {
                writeln!(w, "{period},{index},{},{}", csv_num(s.p), csv_num(s.q))?;
            }
        }
        AttractorClass::Escape { sign, iterations } => {
            let kind = match sign.as_i8() {
                1 => "escape_positive",
                _ => "escape_negative",
            };
            writeln!(w, "kind={kind} period=0 iters={iterations}")?;
        }
        AttractorClass::Undecided { iterations } => {
            writeln!(w, "kind=undecided period=0 iters={iterations}")?;
        }
    }
    Ok(())
}

/// Basin CSV: parameter/window/options echo, a header row, then one row per
/// cell in row-major order (`j` outer, `i` inner).
pub fn write_basin_csv<W: Write>(w: &mut W, map: &BasinMap) -> std::io::Result<()> {
    writeln!(w, "{}", params_header(&map.params))?;
    writeln!(
        w,
        "# window={},{},{},{} res={},{}",
        csv_num(map.grid.p_min),
        csv_num(map.grid.p_max),
        csv_num(map.grid.q_min),
        csv_num(map.grid.q_max),
        map.grid.nx,
        map.grid.ny
    )?;
    writeln!(
        w,
        "# phase={} transient={} max_iterations={} period_max={} match_tol={} confirm_count={}",
        map.opts.phase,
        map.opts.transient,
        map.opts.max_iterations,
        map.opts.period_max,
        map.opts.match_tol,
        map.opts.confirm_count
    )?;
    writeln!(w, "i,j,p0,q0,class,period")?;
    for j in 0..map.grid.ny {
        for i in 0..map.grid.nx {
            let center = map.grid.cell_center(i, j);
            writeln!(
                w,
                "{i},{j},{},{},{},{}",
                csv_num(center.p),
                csv_num(center.q),
                map.class_at(i, j).code(),
                map.period_at(i, j)
            )?;
        }
    }
    Ok(())
}

fn parse_kv(line: &str, key: &str) -> Option<String> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).map(str::to_owned))
}

fn parse_f64(text: &str, what: &str) -> Result<f64> {
    text.parse::<f64>()
        .map_err(|_| Error::MalformedCsv(format!("bad {what}: `{text}`")))
}

fn parse_usize(text: &str, what: &str) -> Result<usize> {
    text.parse::<usize>()
        .map_err(|_| Error::MalformedCsv(format!("bad {what}: `{text}`")))
}

/// Read a basin CSV back into a map. The window and parameters come from the
/// comment echo when present; otherwise the geometry is reconstructed from
/// the cell centers. Classification options are not recoverable from disk
/// and are filled with sweep defaults.
pub fn read_basin_csv<R: BufRead>(reader: R) -> Result<BasinMap> {
    let mut window: Option<(f64, f64, f64, f64)> = None;
    let mut res: Option<(usize, usize)> = None;
    let mut params: Option<ModelParams> = None;

    struct Row {
        i: usize,
        j: usize,
        p0: f64,
        q0: f64,
        class: CellClass,
        period: u32,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut saw_header = false;

    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(win) = parse_kv(comment, "window=") {
                let parts: Vec<&str> = win.split(',').collect();
                if parts.len() != 4 {
                    return Err(Error::MalformedCsv(format!("bad window: `{win}`")));
                }
                window = Some((
                    parse_f64(parts[0], "window bound")?,
                    parse_f64(parts[1], "window bound")?,
                    parse_f64(parts[2], "window bound")?,
                    parse_f64(parts[3], "window bound")?,
                ));
            }
            if let Some(r) = parse_kv(comment, "res=") {
                let parts: Vec<&str> = r.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::MalformedCsv(format!("bad res: `{r}`")));
                }
                res = Some((
                    parse_usize(parts[0], "resolution")?,
                    parse_usize(parts[1], "resolution")?,
                ));
            }
            if let Some(alpha) = parse_kv(comment, "alpha=") {
                let grab = |key: &str, default: f64| -> Result<f64> {
                    match parse_kv(comment, key) {
                        Some(v) => parse_f64(&v, key),
                        None => Ok(default),
                    }
                };
                params = Some(
                    ModelParams::new(
                        parse_f64(&alpha, "alpha")?,
                        grab("beta=", 1.0)?,
                        grab("beta1=", 0.25)?,
                        grab("gamma=", 1.0)?,
                        grab("delta=", 0.0)?,
                        grab("a=", 0.0)?,
                        grab("omega1=", std::f64::consts::PI)?,
                    )
                    .map_err(|e| Error::MalformedCsv(format!("bad parameter echo: {e}")))?,
                );
            }
            continue;
        }
        if !saw_header {
            if line != "i,j,p0,q0,class,period" {
                return Err(Error::MalformedCsv(format!(
                    "expected header `i,j,p0,q0,class,period`, got `{line}`"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::MalformedCsv(format!(
                "expected 6 fields, got {}: `{line}`",
                fields.len()
            )));
        }
        rows.push(Row {
            i: parse_usize(fields[0], "cell index i")?,
            j: parse_usize(fields[1], "cell index j")?,
            p0: parse_f64(fields[2], "p0")?,
            q0: parse_f64(fields[3], "q0")?,
            class: CellClass::from_code(
                fields[4]
                    .parse::<u8>()
                    .map_err(|_| Error::MalformedCsv(format!("bad class: `{}`", fields[4])))?,
            )?,
            period: fields[5]
                .parse::<u32>()
                .map_err(|_| Error::MalformedCsv(format!("bad period: `{}`", fields[5])))?,
        });
    }

    if rows.is_empty() {
        return Err(Error::MalformedCsv("no data rows".into()));
    }
    let (nx, ny) = match res {
        Some(r) => r,
        None => (
            rows.iter().map(|r| r.i).max().unwrap() + 1,
            rows.iter().map(|r| r.j).max().unwrap() + 1,
        ),
    };
    if nx < 2 || ny < 2 {
        return Err(Error::MalformedCsv(format!("degenerate grid {nx}x{ny}")));
    }
    if rows.len() != nx * ny {
        return Err(Error::MalformedCsv(format!(
            "expected {} rows for a {nx}x{ny} grid, got {}",
            nx * ny,
            rows.len()
        )));
    }
    let grid = match window {
        Some((p_min, p_max, q_min, q_max)) => GridSpec::new(p_min, p_max, q_min, q_max, nx, ny),
        None => {
            // recover the window from the first/last cell centers
            let p_lo = rows.iter().map(|r| r.p0).fold(f64::INFINITY, f64::min);
            let p_hi = rows.iter().map(|r| r.p0).fold(f64::NEG_INFINITY, f64::max);
            let q_lo = rows.iter().map(|r| r.q0).fold(f64::INFINITY, f64::min);
            let q_hi = rows.iter().map(|r| r.q0).fold(f64::NEG_INFINITY, f64::max);
            let dp = (p_hi - p_lo) / (nx - 1) as f64;
            let dq = (q_hi - q_lo) / (ny - 1) as f64;
            GridSpec::new(
                p_lo - 0.5 * dp,
                p_hi + 0.5 * dp,
                q_lo - 0.5 * dq,
                q_hi + 0.5 * dq,
                nx,
                ny,
            )
        }
    }
    .map_err(|e| Error::MalformedCsv(format!("bad grid: {e}")))?;

    let params = params.unwrap_or(ModelParams {
        alpha: 1.0,
        beta: 1.0,
        beta1: 0.25,
        gamma: 1.0,
        delta: 0.0,
        a: 0.0,
        omega1: std::f64::consts::PI,
    });
    let mut classes = vec![None; nx * ny];
    let mut periods = vec![0u32; nx * ny];
    for row in rows {
        if row.i >= nx || row.j >= ny {
            return Err(Error::MalformedCsv(format!(
                "cell ({}, {}) outside the {nx}x{ny} grid",
                row.i, row.j
            )));
        }
        let idx = row.j * nx + row.i;
        if classes[idx].is_some() {
            return Err(Error::MalformedCsv(format!(
                "duplicate cell ({}, {})",
                row.i, row.j
            )));
        }
        classes[idx] = Some(row.class);
        periods[idx] = row.period;
    }
    let classes: Vec<CellClass> = classes
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| Error::MalformedCsv("missing cells".into()))?;
    Ok(BasinMap {
        grid,
        classes,
        periods,
        params,
        opts: PoincareOptions::for_sweep(&params),
    })
}

/// Fixed render palette, one pixel per cell.
pub fn palette(class: CellClass, period: u32) -> [u8; 3] {
    match class {
        CellClass::Periodic => match period {
            1 => [255, 255, 255],
            3 => [0, 160, 0],
            _ => [230, 200, 0],
        },
        CellClass::EscapePositive => [200, 0, 0],
        CellClass::EscapeNegative => [0, 0, 200],
        CellClass::Undecided => [0, 0, 0],
    }
}

/// Binary pixmap (P6, max value 255) with row `j = ny - 1` at the top.
pub fn write_basin_ppm<W: Write>(w: &mut W, map: &BasinMap) -> std::io::Result<()> {
    let (nx, ny) = (map.grid.nx, map.grid.ny);
    write!(w, "P6\n{nx} {ny}\n255\n")?;
    let mut pixels = Vec::with_capacity(3 * nx * ny);
    for j in (0..ny).rev() {
        for i in 0..nx {
            pixels.extend_from_slice(&palette(map.class_at(i, j), map.period_at(i, j)));
        }
    }
    w.write_all(&pixels)
}

/// Key=value summary block printed by the basin sweep.
pub fn write_basin_summary<W: Write>(w: &mut W, summary: &BasinSummary) -> std::io::Result<()> {
    writeln!(w, "cells={}", summary.cells)?;
    writeln!(w, "periodic={}", summary.periodic)?;
    writeln!(w, "escape_positive={}", summary.escape_positive)?;
    writeln!(w, "escape_negative={}", summary.escape_negative)?;
    writeln!(w, "undecided={}", summary.undecided)?;
    for (period, count) in &summary.period_counts {
        writeln!(w, "period_{period}={count}")?;
    }
    Ok(())
}

/// Key=value block for a box-count estimate.
pub fn write_box_count<W: Write>(w: &mut W, result: &BoxCountResult) -> std::io::Result<()> {
    let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(",");
    writeln!(
        w,
        "scales={}",
        join(&mut result.scales.iter().map(|s| s.to_string()))
    )?;
    writeln!(
        w,
        "counts={}",
        join(&mut result.counts.iter().map(|c| c.to_string()))
    )?;
    writeln!(w, "dimension={}", result.dimension)?;
    writeln!(w, "r_squared={}", result.r_squared)?;
    Ok(())
}
