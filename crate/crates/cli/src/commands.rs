//! Subcommand bodies. Each returns an [`Outcome`]; nothing here touches the filesystem.

use anyhow::{Context, Result};
use holedim::covering::{verify_cover, CoverReport, SurvivorSpec};
use holedim::dimension::{calibrate, deficit_sweep, DeficitRow, SweepProtocol};
use holedim::mixing::{
    choose_t, correlation_series, fit_correlations, verify_measure_estimate, Correlation,
    DecaySeries, MeasureReport, MixingParams, Quadrature,
};
use holedim::mollifier::{build_psi, verify_norm_scaling, LeafBump, NormScaling};
use holedim::scalar::unit_ball_volume;
use holedim::system::ToralSystem;
use holedim::Hole;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::plot::{render, Series};

pub const VERSION: &str = concat!("holedim-cli ", env!("CARGO_PKG_VERSION"));

/// Tables, plots and a JSON summary produced by one subcommand.
pub struct Outcome {
    pub name: &'static str,
    pub pass: bool,
    pub summary: Value,
    pub tables: Vec<(String, Vec<u8>)>,
    pub plots: Vec<(String, String)>,
}

fn table<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

pub fn cover_verify(cfg: &ExperimentConfig, sys: &ToralSystem<f64>) -> Result<Outcome> {
    let c = &cfg.cover;
    let mut reports: Vec<CoverReport> = Vec::new();
    for &t in &c.t {
        for &r in &c.radii {
            for &k in &c.k {
                let hole = Hole::new(cfg.point(&cfg.hole.center), r)?;
                let spec = SurvivorSpec::new(t, r, hole, cfg.point(&c.base), k)?;
                let rep = verify_cover(sys, &spec, r / c.delta_ratio, c.sample_count, cfg.seed)
                    .with_context(|| format!("cover-verify at t={t}, r={r}, k={k}"))?;
                reports.push(rep);
            }
        }
    }
    let pass = reports.iter().all(|r| r.ok && r.refined_le_bound);
    let failures: Vec<String> = reports
        .iter()
        .filter(|r| !(r.ok && r.refined_le_bound))
        .map(|r| format!("t={} r={} k={}", r.t, r.r, r.k))
        .collect();
    Ok(Outcome {
        name: "cover-verify",
        pass,
        summary: json!({
            "cases": reports.len(),
            "exact_oracle_counts": reports.iter().filter(|r| r.actual_exact).count(),
            "failures": failures,
            "max_count_over_allowed": reports.iter().map(|r| r.actual_count as f64 / (r.bound * (1.0 + r.slack).powi(r.k.max(1) as i32))).fold(0.0, f64::max),
        }),
        tables: vec![("cover_reports.csv".into(), table(&reports)?)],
        plots: Vec::new(),
    })
}

#[derive(Serialize)]
struct NormRow {
    d: usize,
    ell: u32,
    eps: f64,
    norm: f64,
    grad_sup: f64,
}

pub fn mollifier_scaling(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mc = &cfg.mollifier;
    let mut fits: Vec<NormScaling> = Vec::new();
    for &d in &mc.d {
        for &ell in &mc.ell {
            fits.push(
                verify_norm_scaling(d, mc.radius, ell, &mc.eps)
                    .with_context(|| format!("mollifier-scaling at d={d}, ell={ell}"))?,
            );
        }
    }
    let rows: Vec<NormRow> = fits
        .iter()
        .flat_map(|f| {
            f.eps
                .iter()
                .zip(&f.norms)
                .zip(&f.grad_sups)
                .map(|((&eps, &norm), &grad_sup)| NormRow {
                    d: f.d,
                    ell: f.ell,
                    eps,
                    norm,
                    grad_sup,
                })
        })
        .collect();
    let series: Vec<Series> = fits
        .iter()
        .map(|f| {
            Series::line(
                format!("d={} l={} slope {:.2}", f.d, f.ell, f.slope),
                f.eps
                    .iter()
                    .zip(&f.norms)
                    .map(|(e, n)| ((1.0 / e).ln(), n.ln()))
                    .collect(),
            )
        })
        .collect();
    let plot = render(
        "Sobolev norm growth",
        "log(1/eps)",
        "log norm",
        &series,
        VERSION,
    );
    Ok(Outcome {
        name: "mollifier-scaling",
        pass: fits.iter().all(|f| f.pass),
        summary: json!({
            "fits": fits.iter().map(|f| json!({
                "d": f.d, "ell": f.ell, "slope": f.slope, "bound": f.bound, "r_squared": f.r_squared,
                "grad_slope": f.grad_slope, "sandwich": f.sandwich, "monotone": f.monotone, "pass": f.pass,
            })).collect::<Vec<_>>(),
        }),
        tables: vec![("norm_scaling.csv".into(), table(&rows)?)],
        plots: vec![("norm_scaling.svg".into(), plot)],
    })
}

/// Correlation series and its fit; the fit may fail without aborting the run.
pub struct Decay {
    pub series: Vec<Correlation>,
    pub fit: std::result::Result<DecaySeries, holedim::Error>,
}

pub fn decay(cfg: &ExperimentConfig, sys: &ToralSystem<f64>) -> Result<Decay> {
    let mx = &cfg.mixing;
    let f = LeafBump::new(sys.n(), mx.leaf_radius, mx.eps)?;
    let psi = build_psi(sys, &cfg.point(&cfg.hole.center), mx.psi_radius, mx.eps)?;
    let times: Vec<u64> = (1..=mx.t_max).collect();
    let quad = Quadrature {
        leaf_cells: mx.leaf_cells,
        torus_points: mx.torus_points,
    };
    let series = correlation_series(sys, &f, &psi, &cfg.point(&mx.base), &times, quad)
        .context("mixing correlations")?;
    let fit = fit_correlations(&series);
    Ok(Decay { series, fit })
}

/// `λ′` from the config, or derived from the fitted decay rate.
pub fn lambda_prime(
    cfg: &ExperimentConfig,
    sys: &ToralSystem<f64>,
    decay: Option<&Decay>,
) -> Result<Option<MixingParams>> {
    let mx = &cfg.mixing;
    if let Some(l) = mx.lambda_prime {
        return Ok(Some(MixingParams {
            lambda_prime: l,
            p: mx.p,
            ell: mx.ell,
            k_em: mx.k_em,
        }));
    }
    let owned;
    let d = match decay {
        Some(d) => d,
        None => {
            owned = self::decay(cfg, sys)?;
            &owned
        }
    };
    Ok(d.fit
        .as_ref()
        .ok()
        .map(|f| MixingParams::derive(f.fitted_lambda, sys.m(), sys.n(), mx.ell, mx.k_em, mx.p)))
}

#[derive(Serialize)]
struct CorrelationRow {
    t: u64,
    value: f64,
    error: f64,
    floor: f64,
    used: bool,
}

#[derive(Serialize)]
struct MeasureRow {
    r: f64,
    t: usize,
    entry_measure: f64,
}

pub fn mixing_fit(cfg: &ExperimentConfig, sys: &ToralSystem<f64>) -> Result<Outcome> {
    let mx = &cfg.mixing;
    let d = decay(cfg, sys)?;
    let used: Vec<bool> = match &d.fit {
        Ok(f) => f.used.clone(),
        Err(_) => vec![false; d.series.len()],
    };
    let rows: Vec<CorrelationRow> = d
        .series
        .iter()
        .zip(&used)
        .map(|(c, &u)| CorrelationRow {
            t: c.t,
            value: c.value,
            error: c.error,
            floor: c.floor,
            used: u,
        })
        .collect();
    let decay_pass =
        matches!(&d.fit, Ok(f) if f.fitted_lambda > 0.0 && f.r_squared >= mx.min_r_squared);
    let params = lambda_prime(cfg, sys, Some(&d))?;
    let mut measures: Vec<MeasureReport> = Vec::new();
    let mut measure_rows = Vec::new();
    let mut constraint = Value::Null;
    if let Some(p) = params {
        if let Ok(f) = &d.fit {
            constraint = json!(p.constraint_holds(f.fitted_lambda, sys.m(), sys.n()));
        }
        for &r in &mx.measure_radii {
            let t_max = choose_t(sys.m(), sys.n(), p.p, p.lambda_prime, r)?.ceil() as u64
                + mx.measure_extra_t;
            let rep = verify_measure_estimate(
                sys,
                &mx.measure_base,
                &cfg.hole.center,
                r,
                r * mx.measure_delta_ratio,
                t_max,
                p,
            )
            .with_context(|| format!("measure estimate at r={r}"))?;
            measure_rows.extend(
                rep.entry_measures
                    .iter()
                    .enumerate()
                    .map(|(t, &v)| MeasureRow {
                        r,
                        t,
                        entry_measure: v,
                    }),
            );
            measures.push(rep);
        }
    }
    let measure_pass = params.is_some() && measures.iter().all(|m| m.pass);
    let fit_json = match &d.fit {
        Ok(f) => json!({
            "fitted_lambda": f.fitted_lambda, "fitted_amplitude": f.fitted_amplitude,
            "r_squared": f.r_squared, "noise_floor": f.noise_floor,
            "points_used": f.used.iter().filter(|u| **u).count(),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let measure_json: Vec<Value> = measures
        .iter()
        .map(|m| {
            json!({
                "r": m.r, "t_threshold": m.t_threshold, "choose_t": m.choose_t, "limit": m.limit,
                "limit_std": m.limit_std, "product": m.product, "limit_ratio": m.limit_ratio,
                "D": m.fitted_d, "E": m.fitted_e, "lambda_prime": m.fitted_lambda_prime,
                "fit_points": m.fit_points, "fit_r_squared": m.fit_r_squared,
                "limit_within_10pct": m.limit_within_10pct, "pass": m.pass,
            })
        })
        .collect();
    let decay_plot = render(
        "Correlation decay",
        "t",
        "log10 |correlation|",
        &[
            Series::markers(
                "|c(t)|",
                d.series
                    .iter()
                    .filter(|c| c.value != 0.0)
                    .map(|c| (c.t as f64, c.value.abs().log10()))
                    .collect(),
            ),
            Series::line(
                "noise floor",
                d.series
                    .iter()
                    .map(|c| (c.t as f64, c.floor.log10()))
                    .collect(),
            ),
        ],
        VERSION,
    );
    let measure_plot = render(
        "Entry measure of A(t, x)",
        "t",
        "nu(A) / (nu(B) mu(B(r/2)))",
        &measures
            .iter()
            .map(|m| {
                Series::line(
                    format!("r={}", m.r),
                    m.entry_measures
                        .iter()
                        .enumerate()
                        .map(|(t, v)| (t as f64, v / m.product))
                        .collect(),
                )
            })
            .collect::<Vec<_>>(),
        VERSION,
    );
    Ok(Outcome {
        name: "mixing-fit",
        pass: decay_pass && measure_pass,
        summary: json!({
            "decay": fit_json,
            "decay_pass": decay_pass,
            "min_r_squared": mx.min_r_squared,
            "mixing_params": params.map(|p| json!({"lambda_prime": p.lambda_prime, "p": p.p, "ell": p.ell, "k_em": p.k_em})),
            "constraint_holds": constraint,
            "measure_estimates": measure_json,
            "measure_pass": measure_pass,
        }),
        tables: vec![
            ("correlations.csv".into(), table(&rows)?),
            ("entry_measures.csv".into(), table(&measure_rows)?),
        ],
        plots: vec![
            ("decay.svg".into(), decay_plot),
            ("entry_measure.svg".into(), measure_plot),
        ],
    })
}

#[derive(Serialize)]
struct CountRow {
    r: f64,
    scale: f64,
    count: u64,
    in_window: bool,
}

pub fn dim_sweep(cfg: &ExperimentConfig, sys: &ToralSystem<f64>) -> Result<Outcome> {
    let radii = cfg.sweep_radii()?.to_vec();
    let params = lambda_prime(cfg, sys, None)?;
    let protocol = SweepProtocol {
        observation: cfg.observation()?,
        k_max: cfg.dimension.k_max,
        refine: cfg.dimension.refine,
        base: cfg.dimension.base.clone(),
        lambda_prime: params.map_or(f64::NAN, |p| p.lambda_prime),
        p: cfg.mixing.p,
    };
    let sweep =
        deficit_sweep(sys, &cfg.point(&cfg.hole.center), &radii, &protocol).context("dim-sweep")?;
    let rows: Vec<&DeficitRow> = sweep.rows.iter().collect();
    let counts: Vec<CountRow> = sweep
        .rows
        .iter()
        .zip(&sweep.slices)
        .flat_map(|(row, est)| {
            est.scales
                .iter()
                .zip(&est.counts)
                .enumerate()
                .map(move |(i, (&scale, &count))| CountRow {
                    r: row.r,
                    scale,
                    count,
                    in_window: i >= est.window.0 && i < est.window.1,
                })
        })
        .collect();
    let m = sys.m() as i32;
    let vm = unit_ball_volume::<f64>(sys.m());
    let count_plot = render(
        "Box counts of survivor slices",
        "log(1/delta)",
        "log N(delta)",
        &sweep
            .rows
            .iter()
            .zip(&sweep.slices)
            .map(|(row, est)| {
                Series::line(
                    format!("r={} slope {:.4}", row.r, est.slope),
                    est.scales
                        .iter()
                        .zip(&est.counts)
                        .filter(|(_, &c)| c > 0)
                        .map(|(s, &c)| ((1.0 / s).ln(), (c as f64).ln()))
                        .collect(),
                )
            })
            .collect::<Vec<_>>(),
        VERSION,
    );
    let (lo, hi) = radii
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &r| (a.min(r), b.max(r)));
    let grid: Vec<f64> = (0..=50).map(|i| lo + (hi - lo) * i as f64 / 50.0).collect();
    let deficit_plot = render(
        "Dimension deficit against hole radius",
        "r",
        "deficit",
        &[
            Series::markers(
                "measured",
                sweep.rows.iter().map(|r| (r.r, r.deficit)).collect(),
            ),
            Series::line(
                "D'' r^m / log(1/r)",
                grid.iter()
                    .map(|&r| (r, sweep.d_double_prime * r.powi(m) / (1.0 / r).ln()))
                    .collect(),
            ),
            Series::line(
                "C mu(B(r))",
                grid.iter()
                    .map(|&r| (r, sweep.c * vm * r.powi(m)))
                    .collect(),
            ),
        ],
        VERSION,
    );
    Ok(Outcome {
        name: "dim-sweep",
        pass: sweep.deficits_positive && sweep.deficits_monotone,
        summary: json!({
            "D_double_prime": sweep.d_double_prime,
            "C": sweep.c,
            "deficits_positive": sweep.deficits_positive,
            "deficits_monotone": sweep.deficits_monotone,
            "protocol": sweep.protocol,
            "rows": sweep.rows,
        }),
        tables: vec![
            ("deficits.csv".into(), table(&rows)?),
            ("box_counts.csv".into(), table(&counts)?),
        ],
        plots: vec![
            ("box_counts.svg".into(), count_plot),
            ("deficit.svg".into(), deficit_plot),
        ],
    })
}

#[derive(Serialize)]
struct CalibrationRow {
    set: &'static str,
    slope: f64,
    slope_stderr: f64,
    target: f64,
    tolerance: f64,
    pass: bool,
}

pub fn calibrate_cmd() -> Result<Outcome> {
    let c = calibrate()?;
    let rows = vec![
        CalibrationRow {
            set: "interval",
            slope: c.interval.slope,
            slope_stderr: c.interval.slope_stderr,
            target: 1.0,
            tolerance: 0.02,
            pass: c.interval_ok,
        },
        CalibrationRow {
            set: "cantor",
            slope: c.cantor.slope,
            slope_stderr: c.cantor.slope_stderr,
            target: c.cantor_exact,
            tolerance: 0.02,
            pass: c.cantor_ok,
        },
    ];
    Ok(Outcome {
        name: "calibrate",
        pass: c.interval_ok && c.cantor_ok,
        summary: json!({ "interval": c.interval, "cantor": c.cantor, "cantor_exact": c.cantor_exact }),
        tables: vec![("calibration.csv".into(), table(&rows)?)],
        plots: Vec::new(),
    })
}
