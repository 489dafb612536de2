//! Browser bindings: B plots of simulated samples, population comparison
//! curves, and analysis of pasted values.

use wasm_bindgen::prelude::*;

use ccgof::alternatives::AltSpec;
use ccgof::analysis::{analyze, parse_values, AnalysisRequest, BandSpec};
use ccgof::calibrate::{CalibrationTable, MIN_REPS};
use ccgof::ccurve::{empirical_cc, population_cc, NullMode, NullSpec, Sample};
use ccgof::dyadic::DyadicGrid;
use ccgof::gofstats::Competitor;
use ccgof::refmodels::ReferenceCdf;
use ccgof::render::{render_bplot, render_curve, PlotStyle};

/// Grid points used for population curves.
const CURVE_MESH: usize = 300;

fn null_for(mode: &str) -> Result<NullSpec, String> {
    match mode.parse::<NullMode>().map_err(|e| e.to_string())? {
        NullMode::Simple => Ok(NullSpec::Simple(ReferenceCdf::StdNormal)),
        NullMode::Composite => Ok(NullSpec::CompositeGaussian),
    }
}

pub fn sample_bplot_svg(alt: &str, n: usize, seed: u32, mode: &str, level: u32) -> Result<String, String> {
    let spec: AltSpec = alt.parse().map_err(|e: ccgof::Error| e.to_string())?;
    let null = null_for(mode)?;
    let sample = Sample::new(spec.sample(n, seed as u64)).map_err(|e| e.to_string())?;
    let grid = DyadicGrid::new(level).map_err(|e| e.to_string())?;
    let series = empirical_cc(&sample, &null, &grid, level).map_err(|e| e.to_string())?;
    let style = PlotStyle { title: Some(format!("{spec}, n = {n}, {mode} null")), ..PlotStyle::default() };
    Ok(render_bplot(&series, &[], &style))
}

pub fn population_curve_svg(alt: &str, mode: &str) -> Result<String, String> {
    let spec: AltSpec = alt.parse().map_err(|e: ccgof::Error| e.to_string())?;
    let pc = population_cc(&spec, &null_for(mode)?).map_err(|e| e.to_string())?;
    let pts = (1..CURVE_MESH)
        .map(|i| {
            let p = i as f64 / CURVE_MESH as f64;
            pc.cc(p).map(|v| (p, v))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let style = PlotStyle { title: Some(format!("CC of {spec}, {mode} null")), ..PlotStyle::default() };
    Ok(render_curve(&pts, &style))
}

/// JSON `{"report": …, "svg": …}`. Constants are simulated on the spot with
/// the minimum replication count.
pub fn analyze_text(text: &str, mode: &str, alpha: f64, bands: &str, seed: u32) -> Result<String, String> {
    let values = parse_values(text, 0, false).map_err(|e| e.to_string())?;
    let sample = Sample::new(values).map_err(|e| e.to_string())?;
    let mut req = AnalysisRequest::new(null_for(mode)?);
    req.alpha = alpha;
    req.bands = bands
        .split([',', ' '])
        .filter(|b| !b.trim().is_empty())
        .map(|b| b.trim().parse::<BandSpec>())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    req.competitors = vec![Competitor::AD];
    req.reps = MIN_REPS;
    req.seed = seed as u64;
    req.auto_calibrate = true;
    req.p_values = true;
    let mut table = CalibrationTable::new();
    let res = analyze(&sample, &req, &mut table).map_err(|e| e.to_string())?;
    let style = PlotStyle { title: Some(format!("B plot, n = {}", res.report.sample.n)), ..PlotStyle::default() };
    let out = serde_json::json!({
        "report": res.report,
        "svg": render_bplot(&res.series, &res.bands, &style),
    });
    Ok(out.to_string())
}

#[wasm_bindgen(js_name = sampleBplot)]
pub fn sample_bplot(alt: &str, n: usize, seed: u32, mode: &str, level: u32) -> Result<String, JsError> {
    sample_bplot_svg(alt, n, seed, mode, level).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = populationCurve)]
pub fn population_curve(alt: &str, mode: &str) -> Result<String, JsError> {
    population_curve_svg(alt, mode).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = analyzeValues)]
pub fn analyze_values(text: &str, mode: &str, alpha: f64, bands: &str, seed: u32) -> Result<String, JsError> {
    analyze_text(text, mode, alpha, bands, seed).map_err(|e| JsError::new(&e))
}
