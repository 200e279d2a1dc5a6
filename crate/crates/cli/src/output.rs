//! CSV emission. Every file gets a header row; numbers carry 12
//! significant digits; identical inputs always produce identical bytes.

use std::io::{self, Write};

use rankpersist_core::{CmcCurve, RankCurve, RpcTable, VfdSeries};

/// Format with 12 significant digits, in plain decimal notation.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float");
    format!("{rounded}")
}

pub fn write_curves_csv<W: Write>(w: &mut W, curves: &[RankCurve]) -> io::Result<()> {
    writeln!(w, "probe_id,time,rank,gallery_size")?;
    for curve in curves {
        for bp in &curve.breakpoints {
            writeln!(
                w,
                "{},{},{},{}",
                curve.probe_id,
                fmt_f64(bp.time),
                bp.rank,
                bp.gallery_size
            )?;
        }
    }
    Ok(())
}

pub fn write_rpc_csv<W: Write>(w: &mut W, table: &RpcTable) -> io::Result<()> {
    writeln!(w, "rank,duration,fraction")?;
    for curve in &table.curves {
        for (d, fraction) in table.breakpoints_for(curve) {
            writeln!(w, "{},{},{}", curve.rank, fmt_f64(d), fmt_f64(fraction))?;
        }
    }
    Ok(())
}

/// Resample each RPC on a fixed duration grid (step seconds, from 0 up to
/// the last breakpoint). Formatting convenience only; rpc.csv stays exact.
pub fn write_rpc_grid_csv<W: Write>(w: &mut W, table: &RpcTable, step: f64) -> io::Result<()> {
    writeln!(w, "rank,duration,fraction")?;
    let max_d = table
        .curves
        .iter()
        .flat_map(|c| table.breakpoints_for(c).last().map(|&(d, _)| d))
        .fold(0.0f64, f64::max);
    for curve in &table.curves {
        let mut k = 0u64;
        loop {
            let d = k as f64 * step;
            if d > max_d {
                break;
            }
            let fraction = table.fraction_at(curve.rank, d).expect("rank in table");
            writeln!(w, "{},{},{}", curve.rank, fmt_f64(d), fmt_f64(fraction))?;
            k += 1;
        }
    }
    Ok(())
}

pub fn write_cmc_csv<W: Write>(w: &mut W, cmc: &CmcCurve) -> io::Result<()> {
    writeln!(w, "k,fraction")?;
    for (i, value) in cmc.values().iter().enumerate() {
        writeln!(w, "{},{}", i + 1, fmt_f64(*value))?;
    }
    Ok(())
}

pub fn write_vfd_csv<W: Write>(w: &mut W, series: &VfdSeries) -> io::Result<()> {
    writeln!(w, "window_start,density")?;
    for window in &series.windows {
        writeln!(w, "{},{}", fmt_f64(window.start), fmt_f64(window.density))?;
    }
    Ok(())
}

/// Side-by-side RPC summary for `compare`: one block per method, in the
/// order the methods were given.
pub fn write_rpc_summary_csv<W: Write>(
    w: &mut W,
    methods: &[(String, RpcTable)],
) -> io::Result<()> {
    writeln!(w, "method,rank,duration,fraction")?;
    for (name, table) in methods {
        for curve in &table.curves {
            for (d, fraction) in table.breakpoints_for(curve) {
                writeln!(w, "{name},{},{},{}", curve.rank, fmt_f64(d), fmt_f64(fraction))?;
            }
        }
    }
    Ok(())
}

pub fn write_tracklets_csv<W: Write>(
    w: &mut W,
    tracklets: &[crate::ingest::RawTracklet],
) -> io::Result<()> {
    writeln!(
        w,
        "label,camera_id,start_frame,end_frame,start_time,end_time,n_detections"
    )?;
    for t in tracklets {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            t.label,
            t.camera_id,
            t.start_frame,
            t.end_frame,
            fmt_f64(t.start_time),
            fmt_f64(t.end_time),
            t.detection_ids.len()
        )?;
    }
    Ok(())
}
