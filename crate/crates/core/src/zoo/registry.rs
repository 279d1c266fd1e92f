//! Name-addressable construction of the zoo models.

use serde::{Deserialize, Serialize};

use super::{
    goldstein_taylor_three_scale, goldstein_taylor_two_scale, granular_model, jin_xin_three_scale, jin_xin_two_scale,
    profile_gain, shallow_water, shallow_water_three_scale, traffic_model, Flux, GranularParams, ModelInstance, Profile,
    TemperatureField, TrafficParams,
};
use crate::error::{Error, Result};
use crate::system::MatrixField;

pub const MODEL_NAMES: [&str; 8] = [
    "jin-xin-2",
    "jin-xin-3",
    "goldstein-taylor-2",
    "goldstein-taylor-3",
    "shallow-water-2",
    "shallow-water-3",
    "traffic",
    "granular",
];

/// One-line description per registered model.
pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "jin-xin-2" => "Jin-Xin relaxation, slow (u, v), fast w",
        "jin-xin-3" => "three-scale Jin-Xin, macro (u, v, w), meso p, micro q",
        "goldstein-taylor-2" => "Goldstein-Taylor, slow rho, fast J; reduces to the heat equation",
        "goldstein-taylor-3" => "three-scale Goldstein-Taylor, macro (rho, J, w), meso p, micro q",
        "shallow-water-2" => "shallow water, slow (h, f), fast g; reduces to inviscid Burgers",
        "shallow-water-3" => "three-scale shallow water, macro (h, f, k), meso (g, p), micro q",
        "traffic" => "second-order traffic flow, slow (rho, g), fast f",
        "granular" => "granular gas, slow (rho, v, w), fast phi",
        _ => return None,
    })
}

/// Model parameters; anything left out takes the model default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Number of cells.
    pub d: Option<usize>,
    /// Length of the periodic domain; `dx = length / d`.
    pub length: Option<f64>,
    pub epsilon: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `burgers`, `zero`, `identity` or `linear:<c>`.
    pub flux: Option<String>,
    pub flux1: Option<String>,
    pub h_scale: Option<f64>,
    pub h_profile: Option<String>,
    pub g_scale: Option<f64>,
    pub g_profile: Option<String>,
    pub k_scale: Option<f64>,
    pub k_profile: Option<String>,
    /// Traffic relaxation strength `A`.
    pub relaxation: Option<f64>,
    /// Granular restitution coefficient.
    pub restitution: Option<f64>,
    pub gravity: Option<f64>,
    /// Granular temperature: a number for a constant field or `recovered`.
    pub temperature: Option<serde_json::Value>,
}

pub fn parse_flux(s: &str) -> Result<Flux> {
    match s {
        "burgers" => Ok(Flux::burgers()),
        "zero" => Ok(Flux::zero()),
        "identity" => Ok(Flux::linear(1.0)),
        _ => match s.strip_prefix("linear:").map(str::parse::<f64>) {
            Some(Ok(c)) if c.is_finite() => Ok(Flux::linear(c)),
            _ => Err(Error::InvalidArgument(format!("unknown flux {s}"))),
        },
    }
}

fn temperature(v: &Option<serde_json::Value>) -> Result<TemperatureField> {
    match v {
        None => Ok(TemperatureField::constant(1.0)),
        Some(serde_json::Value::Number(n)) => match n.as_f64() {
            Some(t) if t >= 0.0 => Ok(TemperatureField::constant(t)),
            _ => Err(Error::InvalidArgument(format!("temperature must be >= 0, got {n}"))),
        },
        Some(serde_json::Value::String(s)) if s == "recovered" => Ok(TemperatureField::recovered()),
        Some(other) => Err(Error::InvalidArgument(format!("bad temperature {other}"))),
    }
}

/// Builds a registered model from its name and parameters.
pub fn build_model(name: &str, params: &ModelParams) -> Result<ModelInstance> {
    if describe(name).is_none() {
        return Err(Error::InvalidArgument(format!("unknown model {name}; try one of {}", MODEL_NAMES.join(", "))));
    }
    let d = params.d.unwrap_or(16);
    let length = params.length.unwrap_or(1.0);
    if d == 0 || !(length > 0.0) {
        return Err(Error::InvalidArgument(format!("bad grid: d = {d}, length = {length}")));
    }
    let dx = length / d as f64;
    let eps = params.epsilon.unwrap_or(0.1);
    let gain = |scale: Option<f64>, default_scale: f64, profile: &Option<String>, default_profile: Profile| -> Result<MatrixField> {
        let profile = match profile {
            Some(p) => Profile::parse(p)?,
            None => default_profile,
        };
        Ok(profile_gain(d, dx, scale.unwrap_or(default_scale), profile))
    };
    let h_default = if name == "traffic" { 0.1 } else { 0.3 };
    let h = gain(params.h_scale, h_default, &params.h_profile, Profile::Sine)?;
    let g_default = if name == "traffic" { 0.05 } else { 0.2 };
    let g = gain(params.g_scale, g_default, &params.g_profile, Profile::Cosine)?;
    let k_default = if name == "granular" { 0.2 } else { 0.5 };
    let k = gain(params.k_scale, k_default, &params.k_profile, Profile::Uniform)?;
    let flux = parse_flux(params.flux.as_deref().unwrap_or("burgers"))?;
    let flux1 = parse_flux(params.flux1.as_deref().unwrap_or("identity"))?;
    let a = params.a.unwrap_or(1.0);
    let b = params.b.unwrap_or(1.0);

    match name {
        "jin-xin-2" => jin_xin_two_scale(d, dx, a, flux, h, g, eps),
        "jin-xin-3" => jin_xin_three_scale(d, dx, a, b, flux, flux1, h, g, k, eps),
        "goldstein-taylor-2" => goldstein_taylor_two_scale(d, dx, h, g, eps),
        "goldstein-taylor-3" => goldstein_taylor_three_scale(d, dx, a, b, flux1, h, g, k, eps),
        "shallow-water-2" => shallow_water(d, dx, h, g, eps),
        "shallow-water-3" => shallow_water_three_scale(d, dx, flux1, h, g, k, eps),
        "traffic" => {
            let tp = TrafficParams { a: params.relaxation.unwrap_or(1.0), ..TrafficParams::default() };
            traffic_model(d, dx, &tp, h, g, eps)
        }
        _ => {
            let gp = GranularParams {
                e: params.restitution.unwrap_or(0.5),
                gravity: params.gravity.unwrap_or(0.0),
                temperature: temperature(&params.temperature)?,
                ..GranularParams::default()
            };
            granular_model(d, dx, &gp, h, g, k, eps)
        }
    }
}
