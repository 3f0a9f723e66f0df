//! WebAssembly entry points. Every function takes an experiment
//! configuration as TOML text and returns JSON text.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use diracflow::flow::{FamilySampler, RadialSampler, measure};
use diracflow::gauge::predicted_sf;
use diracflow::harness::{ExperimentConfig, parse_config};

/// Largest radial N accepted in the browser.
pub const MAX_WEB_N: usize = 512;
/// Largest number of curve samples accepted in the browser.
pub const MAX_WEB_SAMPLES: usize = 401;

#[derive(Serialize)]
struct Prediction {
    predicted_sf: i64,
    components: usize,
}

#[derive(Serialize)]
struct Curves {
    t: Vec<f64>,
    /// Eigenvalues inside the window at each `t`, ascending.
    levels: Vec<Vec<f64>>,
    window: f64,
}

fn parse(text: &str) -> Result<ExperimentConfig, String> {
    let cfg = parse_config(text).map_err(|e| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    if cfg.radial.n > MAX_WEB_N {
        return Err(format!("radial n = {} exceeds the browser limit {MAX_WEB_N}", cfg.radial.n));
    }
    Ok(cfg)
}

fn radial(cfg: &ExperimentConfig) -> Result<RadialSampler, String> {
    let d = cfg.domain.build().map_err(|e| e.to_string())?;
    RadialSampler::new(&d, &cfg.gauge.build(), &cfg.radial).map_err(|e| e.to_string())
}

pub fn predict_json(text: &str) -> Result<String, String> {
    let cfg = parse(text)?;
    let d = cfg.domain.build().map_err(|e| e.to_string())?;
    let p = predicted_sf(&cfg.gauge.build(), &d).map_err(|e| e.to_string())?;
    serde_json::to_string(&Prediction { predicted_sf: p, components: d.holes().len() + 1 }).map_err(|e| e.to_string())
}

pub fn curves_json(text: &str, samples: usize) -> Result<String, String> {
    if !(2..=MAX_WEB_SAMPLES).contains(&samples) {
        return Err(format!("samples must lie in [2, {MAX_WEB_SAMPLES}]"));
    }
    let cfg = parse(text)?;
    let s = radial(&cfg)?;
    let mut out = Curves { t: Vec::new(), levels: Vec::new(), window: f64::INFINITY };
    for k in 0..samples {
        let t = k as f64 / (samples - 1) as f64;
        let sample = s.sample(t).map_err(|e| e.to_string())?;
        out.window = out.window.min(sample.window);
        out.t.push(t);
        out.levels.push(sample.eigenvalues);
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

pub fn flow_json(text: &str) -> Result<String, String> {
    let cfg = parse(text)?;
    let s = radial(&cfg)?;
    let d = cfg.domain.build().map_err(|e| e.to_string())?;
    let run = measure(&s, &d, &cfg.gauge.build(), &cfg.flow).map_err(|e| e.to_string())?;
    serde_json::to_string(&run.result).map_err(|e| e.to_string())
}

/// Predicted spectral flow: the winding of the gauge factor over the
/// positive boundary.
#[wasm_bindgen]
pub fn predict_sf(config: &str) -> Result<String, JsError> {
    predict_json(config).map_err(|e| JsError::new(&e))
}

/// Radial window spectra at `samples` equally spaced values of `t`.
#[wasm_bindgen]
pub fn radial_curves(config: &str, samples: usize) -> Result<String, JsError> {
    curves_json(config, samples).map_err(|e| JsError::new(&e))
}

/// Measured spectral flow on the radial backend.
#[wasm_bindgen]
pub fn spectral_flow(config: &str) -> Result<String, JsError> {
    flow_json(config).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ANNULUS: &str = "[domain]\nshape = \"annulus\"\nr_inner = 0.5\nr_outer = 1.0\nb_inner = -1.0\nb_outer = 1.0\n[gauge]\nwindings = [2]\n[radial]\nn = 64\n";

    #[test]
    fn predict_returns_the_winding() {
        let v: serde_json::Value = serde_json::from_str(&predict_json(ANNULUS).unwrap()).unwrap();
        assert_eq!(v["predicted_sf"], 2);
        assert_eq!(v["components"], 2);
    }

    #[test]
    fn curves_cover_the_interval() {
        let v: serde_json::Value = serde_json::from_str(&curves_json(ANNULUS, 5).unwrap()).unwrap();
        assert_eq!(v["t"].as_array().unwrap().len(), 5);
        assert_eq!(v["levels"][0], v["levels"][4]);
        assert!(curves_json(ANNULUS, 1).is_err());
    }

    #[test]
    fn flow_matches_prediction() {
        let v: serde_json::Value = serde_json::from_str(&flow_json(ANNULUS).unwrap()).unwrap();
        assert_eq!(v["sf"], 2);
        assert_eq!(v["predicted"], 2);
    }

    #[test]
    fn oversized_and_invalid_inputs_are_errors() {
        assert!(predict_json(&ANNULUS.replace("n = 64", "n = 4096")).unwrap_err().contains("browser limit"));
        assert!(predict_json("[domain]\nshape = \"square\"\n").is_err());
    }
}
