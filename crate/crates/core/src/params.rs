//! Physical constants of the structure and run configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Physical constants of the deck, cables and geometry, in SI units.
///
/// The JSON configuration keys match the symbols below (`L`, `ell`, `M`,
/// `EI`, `GK`, `m`, `H0`, `Lc`, `s0`, `A`, `E`, `g`); bending and torsional
/// stiffness are stored as the products `EI` and `GK` since the equations
/// only ever use the products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeParams {
    /// Deck length between the towers (m).
    #[serde(rename = "L")]
    pub span: f64,
    /// Half width of the deck (m).
    #[serde(rename = "ell")]
    pub half_width: f64,
    /// Linear mass density of the deck (kg/m).
    #[serde(rename = "M")]
    pub deck_mass: f64,
    /// Bending stiffness of the deck, Young modulus times inertia density (N·m²).
    #[serde(rename = "EI")]
    pub flexural_rigidity: f64,
    /// Torsional stiffness of the deck, shear modulus times torsional constant (N·m²).
    #[serde(rename = "GK")]
    pub torsional_rigidity: f64,
    /// Linear mass density of one cable (kg/m).
    #[serde(rename = "m")]
    pub cable_mass: f64,
    /// Horizontal component of the tension of each cable (N).
    #[serde(rename = "H0")]
    pub tension: f64,
    /// Length of each cable (m).
    #[serde(rename = "Lc")]
    pub cable_length: f64,
    /// Tower height above deck level, i.e. the longest hanger (m).
    #[serde(rename = "s0")]
    pub tower_height: f64,
    /// Cross-section area of one cable (m²).
    #[serde(rename = "A")]
    pub cable_area: f64,
    /// Young modulus of the cable (Pa).
    #[serde(rename = "E")]
    pub cable_young: f64,
    /// Gravitational acceleration (m/s²).
    #[serde(rename = "g")]
    pub gravity: f64,
}

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("configuration parse failure: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("configuration value for {key:?} must be strictly positive, got {value}")]
    NonPositive { key: &'static str, value: f64 },
    #[error("deck too wide: 2*ell = {width} must be below L/10 = {limit}")]
    DeckTooWide { width: f64, limit: f64 },
    #[error("cable length Lc = {lc} must exceed deck length L = {l}")]
    CableTooShort { lc: f64, l: f64 },
}

/// Constants of the collapsed Tacoma Narrows Bridge.
pub fn default_tnb() -> BridgeParams {
    BridgeParams {
        span: 853.44,
        half_width: 6.0,
        deck_mass: 7198.0,
        flexural_rigidity: 210e9 * 0.15,
        torsional_rigidity: 81e9 * 6.44e-6,
        cable_mass: 981.0,
        tension: 5.83e7,
        cable_length: 868.62,
        tower_height: 72.0,
        cable_area: 0.1228,
        cable_young: 210e9,
        gravity: 9.81,
    }
}

const KEYS: [&str; 12] = [
    "L", "ell", "M", "EI", "GK", "m", "H0", "Lc", "s0", "A", "E", "g",
];

/// Parses a flat JSON configuration document. Missing keys default to the
/// TNB values; unknown keys are rejected; the result is validated.
pub fn load_config(text: &str) -> Result<BridgeParams, ParamsError> {
    let overrides: serde_json::Map<String, serde_json::Value> = if text.trim().is_empty() {
        serde_json::Map::new()
    } else {
        serde_json::from_str(text)?
    };
    for key in overrides.keys() {
        if !KEYS.contains(&key.as_str()) {
            return Err(ParamsError::UnknownKey(key.clone()));
        }
    }
    let mut merged = match serde_json::to_value(default_tnb())? {
        serde_json::Value::Object(map) => map,
        _ => unreachable!("params serialize to an object"),
    };
    for (key, value) in overrides {
        merged.insert(key, value);
    }
    let params: BridgeParams = serde_json::from_value(serde_json::Value::Object(merged))?;
    params.validate()?;
    Ok(params)
}

impl BridgeParams {
    /// Checks positivity and the geometric sanity constraints.
    pub fn validate(&self) -> Result<(), ParamsError> {
        let fields: [(&'static str, f64); 12] = [
            ("L", self.span),
            ("ell", self.half_width),
            ("M", self.deck_mass),
            ("EI", self.flexural_rigidity),
            ("GK", self.torsional_rigidity),
            ("m", self.cable_mass),
            ("H0", self.tension),
            ("Lc", self.cable_length),
            ("s0", self.tower_height),
            ("A", self.cable_area),
            ("E", self.cable_young),
            ("g", self.gravity),
        ];
        for (key, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ParamsError::NonPositive { key, value });
            }
        }
        if 2.0 * self.half_width >= self.span / 10.0 {
            return Err(ParamsError::DeckTooWide {
                width: 2.0 * self.half_width,
                limit: self.span / 10.0,
            });
        }
        if self.cable_length <= self.span {
            return Err(ParamsError::CableTooShort {
                lc: self.cable_length,
                l: self.span,
            });
        }
        Ok(())
    }

    /// Serializes to the flat JSON configuration format.
    pub fn to_config_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    /// Stable hex fingerprint of the exact parameter values (bit patterns).
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf29ce484222325;
        let mut mix = |bits: u64| {
            for byte in bits.to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        };
        for value in [
            self.span,
            self.half_width,
            self.deck_mass,
            self.flexural_rigidity,
            self.torsional_rigidity,
            self.cable_mass,
            self.tension,
            self.cable_length,
            self.tower_height,
            self.cable_area,
            self.cable_young,
            self.gravity,
        ] {
            mix(value.to_bits());
        }
        format!("{hash:016x}")
    }
}
