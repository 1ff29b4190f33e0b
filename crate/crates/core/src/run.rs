//! End-to-end search from a configuration, output files and the summary block.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{Method, Prepared, RunConfig};
use crate::error::{Error, Result};
use crate::model::{profile_function_eval, uniform_grid, ModelAssembly};
use crate::objective::{GlmObjective, LinearObjective};
use crate::optimizer::{multi_start, ProgressFn, SearchResult};
use crate::priors::{mc_sample, quadrature_grid};

/// Prior points and weights for the GLM expectation.
///
/// The Monte Carlo sample is drawn once per search from `seed`, so every
/// candidate design is scored on the same draws.
pub fn prior_points(prepared: &Prepared, seed: u64) -> Result<Option<(DMatrix<f64>, Vec<f64>)>> {
    let Some(plan) = &prepared.glm else {
        return Ok(None);
    };
    let p = prepared.terms.num_params();
    Ok(Some(match plan.method {
        Method::Quadrature => {
            let grid = quadrature_grid(&plan.prior, plan.level, p)?;
            (grid.nodes, grid.weights)
        }
        Method::MonteCarlo => {
            let sample = mc_sample(&plan.prior, plan.b, p, seed)?;
            (sample, vec![1.0 / plan.b as f64; plan.b])
        }
    }))
}

/// Validate the configuration and run the multi-start search.
pub fn run_design_search(config: &RunConfig, progress: Option<&ProgressFn<'_>>) -> Result<SearchResult> {
    let prepared = config.prepare()?;
    let assembly = ModelAssembly::assemble(prepared.terms.clone(), &prepared.factors)?;
    let starts = prepared.starts.clone();
    match prior_points(&prepared, prepared.search.seed)? {
        None => {
            let objective = LinearObjective::new(&assembly, prepared.criterion);
            multi_start(
                &objective,
                &prepared.search,
                &prepared.factors,
                prepared.n_runs,
                starts,
                progress,
            )
        }
        Some((points, weights)) => {
            let family = prepared.glm.as_ref().map(|g| g.family).expect("glm plan present");
            let objective = GlmObjective::new(&assembly, prepared.criterion, family, points, weights)?;
            multi_start(
                &objective,
                &prepared.search,
                &prepared.factors,
                prepared.n_runs,
                starts,
                progress,
            )
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    criterion: &'a str,
    objval: f64,
    nits: usize,
    bestrep: usize,
    allobjvals: &'a [f64],
    allnits: &'a [usize],
    elapsed_seconds: f64,
    elapsed: String,
    factors: &'a [String],
}

/// Files written for a search result, in writing order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WrittenFiles {
    pub manifest: PathBuf,
    pub designs: Vec<PathBuf>,
    pub profiles: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
}

/// Write the manifest, coefficient CSVs, profile CSVs and SVG plots into the output directory.
pub fn write_outputs(result: &SearchResult, config: &RunConfig) -> Result<WrittenFiles> {
    if result.allobjvals.is_empty() || result.design.num_factors() == 0 {
        return Err(Error::Config("nothing to write: the search result is empty".into()));
    }
    let prepared = config.prepare()?;
    let dir = config.output_dir();
    fs::create_dir_all(&dir)?;
    let mut files = WrittenFiles {
        manifest: dir.join("result.json"),
        ..Default::default()
    };

    let label = prepared.criterion.label();
    let manifest = Manifest {
        criterion: label,
        objval: result.objval,
        nits: result.nits,
        bestrep: result.bestrep,
        allobjvals: &result.allobjvals,
        allnits: &result.allnits,
        elapsed_seconds: result.elapsed.as_secs_f64(),
        elapsed: format_elapsed(result.elapsed),
        factors: result.design.names(),
    };
    fs::write(&files.manifest, serde_json::to_string_pretty(&manifest)?)?;

    let tb = prepared.terms.tbounds();
    let grid = uniform_grid(tb.start, tb.end, config.output.grid_size);
    for (j, f) in prepared.factors.iter().enumerate() {
        let coefs = result.design.factor(j);
        let path = dir.join(format!("design_{}.csv", f.name));
        let header: Vec<String> = (1..=coefs.ncols()).map(|l| l.to_string()).collect();
        write_matrix_csv(&path, &header, coefs)?;
        files.designs.push(path);

        let values = profile_function_eval(coefs, &f.basis, &grid)?;
        let path = dir.join(format!("profile_{}.csv", f.name));
        let header: Vec<String> = grid.iter().map(|t| t.to_string()).collect();
        write_matrix_csv(&path, &header, &values)?;
        files.profiles.push(path);

        let path = dir.join(format!("profile_{}.svg", f.name));
        let svg = profile_svg(&f.name, &grid, &values, (tb.start, tb.end), (prepared.search.dlbound, prepared.search.dubound));
        fs::write(&path, svg)?;
        files.plots.push(path);
    }
    Ok(files)
}

fn write_matrix_csv(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Line plot of every run's profile function over `[t0, t1] × [lo, hi]`.
pub fn profile_svg(name: &str, grid: &[f64], values: &DMatrix<f64>, (t0, t1): (f64, f64), (lo, hi): (f64, f64)) -> String {
    let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (SVG_W - 2.0 * MARGIN);
    let sy = |v: f64| SVG_H - MARGIN - (v.clamp(lo, hi) - lo) / (hi - lo) * (SVG_H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        SVG_W - 2.0 * MARGIN,
        SVG_H - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="16">{}</text>"#,
        SVG_W / 2.0,
        MARGIN / 2.0 + 5.0,
        xml_escape(name)
    );
    for (t, anchor) in [(t0, "start"), (t1, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}" font-size="12">{t}</text>"#,
            sx(t),
            SVG_H - MARGIN + 18.0
        );
    }
    for v in [lo, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="12">{v}</text>"#,
            MARGIN - 6.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">time</text>"#,
        SVG_W / 2.0,
        SVG_H - 12.0
    );
    for i in 0..values.nrows() {
        let hue = (i * 360) / values.nrows().max(1);
        let points: Vec<String> = grid
            .iter()
            .enumerate()
            .map(|(k, &t)| format!("{:.2},{:.2}", sx(t), sy(values[(i, k)])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="hsl({hue},70%,40%)" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Whole seconds as `HH:MM:SS`, truncating any fraction.
pub fn format_elapsed(d: Duration) -> String {
    let s = d.as_secs();
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

/// Seven significant digits with trailing zeros dropped, as R prints a double.
pub fn format_objective(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.6e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (6 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// The printed summary block, one statement per line.
pub fn summary_text(result: &SearchResult, config: &RunConfig) -> String {
    let label = match config.criterion.kind {
        crate::criteria::CriterionKind::A => "A-optimality",
        crate::criteria::CriterionKind::D => "D-optimality",
    };
    let mut lines = vec![
        format!("The number of profile factors is: {}", config.model.npf),
        format!("The number of runs is: {}", config.search.nruns),
        format!("The objective criterion is: {label}"),
        format!("The objective value is: {}", format_objective(result.objval)),
        format!("The number of iterations is: {}", result.nits),
    ];
    if let Some(g) = &config.glm {
        lines.push(format!("The method of approximation is: {}", g.method.as_str()));
        lines.push(format!(
            "The family distribution and the link function are: {} and {}",
            g.family.to_ascii_lowercase(),
            g.link_name().to_ascii_lowercase()
        ));
    }
    lines.push(format!("The computing elapsed time is: {}", format_elapsed(result.elapsed)));
    lines.join("\n")
}
