//! Result-set writers: per-trial CSV, aggregate tables, SVG figures, the
//! population snapshot and the run manifest.
//!
//! Floats are written with 17 significant digits so that reruns diff
//! byte-for-byte; figures are self-contained SVG with no display
//! dependency.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::correction::BasisKind;
use crate::error::Result;
use crate::simmodel::PopulationModel;
use crate::spectra::KappaMode;

use super::{Aggregate, RunSummary, Stat};

/// 17 significant digits, enough to round-trip any f64 exactly.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub(super) fn write_outputs(summary: &RunSummary, population: &PopulationModel) -> Result<()> {
    let dir = &summary.config.output_dir;
    fs::create_dir_all(dir)?;
    write_trials(summary, &dir.join("trials.csv"))?;
    write_vol_table(summary, &dir.join("table_vol.csv"))?;
    write_discrep_table(summary, &dir.join("table_discrep.csv"))?;
    write_optbias_table(summary, &dir.join("table_optbias.csv"))?;
    write_gps_table(summary, &dir.join("table_gps.csv"))?;
    write_hb_table(summary, &dir.join("table_hb.csv"))?;
    write_vol_figure(summary, &dir.join("fig_vol.svg"))?;
    write_discrep_figure(summary, &dir.join("fig_discrep.svg"))?;
    population.save(&dir.join("population_model.json"))?;
    write_manifest(summary, &dir.join("run_manifest"))?;
    Ok(())
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_trials(summary: &RunSummary, path: &Path) -> Result<()> {
    let header = [
        "p",
        "estimator",
        "trial",
        "v_p",
        "d_hat",
        "q_hat",
        "q_realized",
        "abs_bias",
        "abs_phi",
        "projection_err",
        "diag_norm",
        "sigma_min",
        "scaled_bias_sq",
    ];
    let rows = summary
        .rows
        .iter()
        .map(|r| {
            vec![
                r.p.to_string(),
                r.estimator.label().to_string(),
                r.trial.to_string(),
                fmt(r.v_p),
                fmt(r.d_hat),
                fmt(r.q_hat),
                fmt(r.q_realized),
                fmt(r.abs_bias),
                fmt(r.abs_phi),
                fmt(r.projection_err),
                fmt(r.diag_norm),
                fmt(r.sigma_min),
                fmt(r.scaled_bias_sq),
            ]
        })
        .collect();
    write_csv(path, &header, rows)
}

/// Missing cells (estimator not part of the run) become NaN columns.
fn stat_of<'a>(
    summary: &'a RunSummary,
    p: usize,
    kind: BasisKind,
    pick: fn(&'a Aggregate) -> Stat,
) -> Stat {
    summary.aggregate(p, kind).map(pick).unwrap_or(Stat {
        mean: f64::NAN,
        sd: f64::NAN,
        se: f64::NAN,
    })
}

fn push_stat(row: &mut Vec<String>, stat: Stat) {
    row.push(fmt(stat.mean));
    row.push(fmt(stat.sd));
    row.push(fmt(stat.se));
}

fn write_vol_table(summary: &RunSummary, path: &Path) -> Result<()> {
    let header = [
        "p",
        "sigma_min",
        "vol_pca",
        "vol_pca_sd",
        "vol_pca_se",
        "vol_flat",
        "vol_flat_sd",
        "vol_flat_se",
        "vol_sharp",
        "vol_sharp_sd",
        "vol_sharp_se",
    ];
    let rows = summary
        .truth
        .iter()
        .map(|t| {
            let mut row = vec![t.p.to_string(), fmt(t.sigma_min)];
            for kind in [BasisKind::Pca, BasisKind::Flat, BasisKind::Sharp] {
                push_stat(&mut row, stat_of(summary, t.p, kind, |a| a.v_p));
            }
            row
        })
        .collect();
    write_csv(path, &header, rows)
}

fn write_discrep_table(summary: &RunSummary, path: &Path) -> Result<()> {
    let header = [
        "p",
        "q_true_max",
        "q_realized_pca",
        "q_realized_pca_sd",
        "q_realized_pca_se",
        "d_hat_pca",
        "d_hat_pca_sd",
        "d_hat_pca_se",
        "q_realized_sharp",
        "q_realized_sharp_sd",
        "q_realized_sharp_se",
        "d_hat_sharp",
        "d_hat_sharp_sd",
        "d_hat_sharp_se",
    ];
    let rows = summary
        .truth
        .iter()
        .map(|t| {
            let mut row = vec![t.p.to_string(), fmt(t.true_max)];
            for kind in [BasisKind::Pca, BasisKind::Sharp] {
                push_stat(&mut row, stat_of(summary, t.p, kind, |a| a.q_realized));
                push_stat(&mut row, stat_of(summary, t.p, kind, |a| a.d_hat));
            }
            row
        })
        .collect();
    write_csv(path, &header, rows)
}

fn write_optbias_table(summary: &RunSummary, path: &Path) -> Result<()> {
    let header = [
        "p",
        "abs_phi",
        "abs_phi_sd",
        "abs_phi_se",
        "abs_bias_pca",
        "abs_bias_pca_sd",
        "abs_bias_pca_se",
        "abs_bias_sharp",
        "abs_bias_sharp_sd",
        "abs_bias_sharp_se",
        "scaled_bias_sq_pca",
        "scaled_bias_sq_pca_sd",
        "scaled_bias_sq_pca_se",
        "scaled_bias_sq_sharp",
        "scaled_bias_sq_sharp_sd",
        "scaled_bias_sq_sharp_se",
    ];
    let rows = summary
        .truth
        .iter()
        .map(|t| {
            let mut row = vec![t.p.to_string()];
            // abs_phi is spectrum-level; read it off the first estimator present
            let phi = summary
                .aggregates
                .iter()
                .find(|a| a.p == t.p)
                .map(|a| a.abs_phi)
                .unwrap_or(Stat {
                    mean: f64::NAN,
                    sd: f64::NAN,
                    se: f64::NAN,
                });
            push_stat(&mut row, phi);
            for kind in [BasisKind::Pca, BasisKind::Sharp] {
                push_stat(&mut row, stat_of(summary, t.p, kind, |a| a.abs_bias));
            }
            for kind in [BasisKind::Pca, BasisKind::Sharp] {
                push_stat(&mut row, stat_of(summary, t.p, kind, |a| a.scaled_bias_sq));
            }
            row
        })
        .collect();
    write_csv(path, &header, rows)
}

fn write_gps_table(summary: &RunSummary, path: &Path) -> Result<()> {
    let header = [
        "p",
        "q_true_max",
        "q_realized_flat",
        "q_realized_flat_sd",
        "q_realized_flat_se",
        "d_hat_flat",
        "d_hat_flat_sd",
        "d_hat_flat_se",
        "abs_bias_flat",
        "abs_bias_flat_sd",
        "abs_bias_flat_se",
        "scaled_bias_sq_flat",
        "scaled_bias_sq_flat_sd",
        "scaled_bias_sq_flat_se",
    ];
    let rows = summary
        .truth
        .iter()
        .map(|t| {
            let mut row = vec![t.p.to_string(), fmt(t.true_max)];
            push_stat(
                &mut row,
                stat_of(summary, t.p, BasisKind::Flat, |a| a.q_realized),
            );
            push_stat(
                &mut row,
                stat_of(summary, t.p, BasisKind::Flat, |a| a.d_hat),
            );
            push_stat(
                &mut row,
                stat_of(summary, t.p, BasisKind::Flat, |a| a.abs_bias),
            );
            push_stat(
                &mut row,
                stat_of(summary, t.p, BasisKind::Flat, |a| a.scaled_bias_sq),
            );
            row
        })
        .collect();
    write_csv(path, &header, rows)
}

fn write_hb_table(summary: &RunSummary, path: &Path) -> Result<()> {
    let header = [
        "p",
        "proj_err_sharp",
        "proj_err_sharp_sd",
        "proj_err_sharp_se",
        "diag_norm_sharp",
        "diag_norm_sharp_sd",
        "diag_norm_sharp_se",
        "proj_err_pca",
        "proj_err_pca_sd",
        "proj_err_pca_se",
        "diag_norm_pca",
        "diag_norm_pca_sd",
        "diag_norm_pca_se",
    ];
    let rows = summary
        .truth
        .iter()
        .map(|t| {
            let mut row = vec![t.p.to_string()];
            for kind in [BasisKind::Sharp, BasisKind::Pca] {
                push_stat(&mut row, stat_of(summary, t.p, kind, |a| a.projection_err));
                push_stat(&mut row, stat_of(summary, t.p, kind, |a| a.diag_norm));
            }
            row
        })
        .collect();
    write_csv(path, &header, rows)
}

fn write_manifest(summary: &RunSummary, path: &Path) -> Result<()> {
    let cfg = &summary.config;
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    line("version", env!("CARGO_PKG_VERSION").to_string());
    line("seed", cfg.seed.to_string());
    line(
        "p_list",
        cfg.p_list
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    line("n", cfg.n.to_string());
    line("q", cfg.q.to_string());
    line("trials", cfg.trials.to_string());
    line(
        "centering",
        if cfg.centering { "on" } else { "off" }.to_string(),
    );
    line(
        "kappa_mode",
        match cfg.kappa_mode {
            KappaMode::Plain => "plain",
            KappaMode::Mp => "mp",
        }
        .to_string(),
    );
    line(
        "estimators",
        cfg.estimators
            .iter()
            .map(|e| e.label())
            .collect::<Vec<_>>()
            .join(","),
    );
    line("c0", fmt(cfg.c0));
    line("c1", fmt(cfg.c1));
    line("out", cfg.output_dir.display().to_string());
    line("attempted", summary.attempted.to_string());
    line("skipped", summary.skipped.to_string());
    // tables carry both the trial standard deviation (_sd) and the standard
    // error of the mean (_se); the figures plot mean +/- 2 se bands
    line("error_bars", "mean_pm_2se".to_string());
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// SVG figures
// ---------------------------------------------------------------------------

struct Series {
    label: &'static str,
    color: &'static str,
    /// (p, mean, se); se = 0 suppresses the band.
    points: Vec<(f64, f64, f64)>,
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 25.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

fn color_for(kind: BasisKind) -> &'static str {
    match kind {
        BasisKind::Pca => "#d62728",
        BasisKind::Flat => "#1f77b4",
        BasisKind::Sharp => "#2ca02c",
    }
}

fn write_vol_figure(summary: &RunSummary, path: &Path) -> Result<()> {
    let mut series = vec![Series {
        label: "true minimum",
        color: "#7f7f7f",
        points: summary
            .truth
            .iter()
            .map(|t| (t.p as f64, t.sigma_min, 0.0))
            .collect(),
    }];
    for kind in [BasisKind::Pca, BasisKind::Flat, BasisKind::Sharp] {
        let points: Vec<_> = summary
            .truth
            .iter()
            .filter_map(|t| {
                summary
                    .aggregate(t.p, kind)
                    .map(|a| (t.p as f64, a.v_p.mean, a.v_p.se))
            })
            .collect();
        if !points.is_empty() {
            series.push(Series {
                label: kind.label(),
                color: color_for(kind),
                points,
            });
        }
    }
    render_svg(
        path,
        "Realized minimum-variance volatility",
        "dimension p",
        "volatility (percent annualized)",
        &series,
    )
}

fn write_discrep_figure(summary: &RunSummary, path: &Path) -> Result<()> {
    let mut series = Vec::new();
    for kind in [BasisKind::Pca, BasisKind::Flat, BasisKind::Sharp] {
        let points: Vec<_> = summary
            .truth
            .iter()
            .filter_map(|t| {
                summary
                    .aggregate(t.p, kind)
                    .map(|a| (t.p as f64, a.d_hat.mean, a.d_hat.se))
            })
            .collect();
        if !points.is_empty() {
            series.push(Series {
                label: kind.label(),
                color: color_for(kind),
                points,
            });
        }
    }
    render_svg(
        path,
        "Plug-in discrepancy",
        "dimension p",
        "discrepancy",
        &series,
    )
}

/// Minimal line chart with mean +/- 2 se bands, log-scaled x axis.
fn render_svg(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<()> {
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(_, m, se) in &s.points {
            ys.push(m - 2.0 * se);
            ys.push(m + 2.0 * se);
        }
    }
    let (x_lo, x_hi) = log_range(&xs);
    let (y_lo, y_hi) = lin_range(&ys);
    let x_pos =
        |x: f64| MARGIN_L + (x.log10() - x_lo) / (x_hi - x_lo) * (PLOT_W - MARGIN_L - MARGIN_R);
    let y_pos =
        |y: f64| PLOT_H - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (PLOT_H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
         viewBox=\"0 0 {PLOT_W} {PLOT_H}\" font-family=\"Helvetica, Arial, sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        (MARGIN_L + PLOT_W - MARGIN_R) / 2.0
    ));

    // axes
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        PLOT_H - MARGIN_B,
        PLOT_W - MARGIN_R,
        PLOT_H - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        PLOT_H - MARGIN_B
    ));

    // x ticks at the observed dimensions
    let mut seen = Vec::new();
    for &x in &xs {
        if !seen.contains(&(x as u64)) {
            seen.push(x as u64);
        }
    }
    seen.sort_unstable();
    for x in seen {
        let px = x_pos(x as f64);
        svg.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{:.1}\" x2=\"{px:.2}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            PLOT_H - MARGIN_B,
            PLOT_H - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{x}</text>\n",
            PLOT_H - MARGIN_B + 20.0
        ));
    }
    // y ticks
    for k in 0..=5 {
        let y = y_lo + (y_hi - y_lo) * k as f64 / 5.0;
        let py = y_pos(y);
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{py:.2}\" x2=\"{MARGIN_L}\" y2=\"{py:.2}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 8.0,
            py + 4.0,
            format_tick(y)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        (MARGIN_L + PLOT_W - MARGIN_R) / 2.0,
        PLOT_H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.1})\">{y_label}</text>\n",
        (MARGIN_T + PLOT_H - MARGIN_B) / 2.0,
        (MARGIN_T + PLOT_H - MARGIN_B) / 2.0
    ));

    // bands then lines
    for s in series {
        if s.points.iter().any(|&(_, _, se)| se > 0.0) {
            let mut d = String::from("M");
            for &(x, m, se) in &s.points {
                d.push_str(&format!(" {:.2},{:.2}", x_pos(x), y_pos(m + 2.0 * se)));
            }
            for &(x, m, se) in s.points.iter().rev() {
                d.push_str(&format!(" L {:.2},{:.2}", x_pos(x), y_pos(m - 2.0 * se)));
            }
            d.push_str(" Z");
            svg.push_str(&format!(
                "<path d=\"{d}\" fill=\"{}\" opacity=\"0.15\" stroke=\"none\"/>\n",
                s.color
            ));
        }
    }
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, m, _)| format!("{:.2},{:.2}", x_pos(x), y_pos(m)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
            pts.join(" "),
            s.color
        ));
        for &(x, m, _) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
                x_pos(x),
                y_pos(m),
                s.color
            ));
        }
    }

    // legend
    for (i, s) in series.iter().enumerate() {
        let ly = MARGIN_T + 8.0 + 18.0 * i as f64;
        let lx = PLOT_W - MARGIN_R - 150.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            lx + 24.0,
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            lx + 30.0,
            ly + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");

    let mut file = fs::File::create(path)?;
    file.write_all(svg.as_bytes())?;
    Ok(())
}

fn log_range(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min).log10();
    let hi = xs.iter().cloned().fold(0.0f64, f64::max).log10();
    if (hi - lo).abs() < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn lin_range(ys: &[f64]) -> (f64, f64) {
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo).abs() < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = (hi - lo) * 0.08;
        (lo - pad, hi + pad)
    }
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v.abs() < 0.01 && v != 0.0) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}
