use ccgof_web::{analyze_text, population_curve_svg, sample_bplot_svg};

#[test]
fn sample_plot_is_svg_and_repeatable() {
    let a = sample_bplot_svg("A5_0:0.15", 100, 4, "simple", 5).unwrap();
    assert!(a.starts_with("<svg"));
    assert_eq!(a.matches(r#"class="bar""#).count(), 63);
    assert_eq!(a, sample_bplot_svg("A5_0:0.15", 100, 4, "simple", 5).unwrap());
}

#[test]
fn curve_for_composite_alternative() {
    let svg = population_curve_svg("A9:0.1", "composite").unwrap();
    assert!(svg.contains("<polyline"));
}

#[test]
fn bad_inputs_give_messages() {
    assert!(sample_bplot_svg("A99:1", 50, 1, "simple", 4).is_err());
    assert!(population_curve_svg("A9:0.1", "both").is_err());
    assert!(analyze_text("", "composite", 0.05, "", 1).unwrap_err().contains("empty"));
}

#[test]
fn pasted_values_report() {
    let text: String = ccgof::alternatives::AltSpec::gaussian(3.0, 1.0)
        .unwrap()
        .sample(60, 2)
        .iter()
        .map(|v| format!("{v}\n"))
        .collect();
    let out: serde_json::Value = serde_json::from_str(&analyze_text(&text, "composite", 0.05, "1:3:upper", 1).unwrap()).unwrap();
    assert_eq!(out["report"]["schema"], "ccgof-report/1");
    assert_eq!(out["report"]["bands"].as_array().unwrap().len(), 1);
    assert!(out["report"]["test"]["p_value"].as_f64().is_some());
    assert!(out["svg"].as_str().unwrap().contains("stripe"));
}
