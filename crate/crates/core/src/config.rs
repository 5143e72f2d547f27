//! TOML scenario files.
//!
//! Angles are in degrees. Lengths are meters, either as a bare number or as
//! a string with a unit suffix (`"40 um"`, `"280µm"`, `"351.1 nm"`,
//! `"0.2 m"`, `"4 mm"`, `"2 cm"`). Lengths are written back as bare meters.
//! Unknown keys are rejected.
//!
//! ```toml
//! [source]
//! a = 0.92
//! b = 0.38
//! phi_degrees = 180
//!
//! [interferometer]
//! gamma1_degrees = 35
//! gamma2_degrees = 20
//!
//! [geometry]
//! half_width = "40 um"
//! separation = "280 um"
//! wavelength = "351.1 nm"
//! distance = "20 cm"
//!
//! [counting]
//! coincidence_rate = 20
//! integration_time = 10
//! seed = 7
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::counts::{CountRates, ImperfectionModel};
use crate::error::{Error, Result};
use crate::jones::MachZehnderSettings;
use crate::pattern::{linspace, SlitGeometry};
use crate::pipeline::{SlitPhase, SourcePolarization};

pub const PUMP_WAVELENGTH: f64 = 351.1e-9;

/// A length in meters.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Length(pub f64);

impl Length {
    pub fn meters(self) -> f64 {
        self.0
    }
}

impl FromStr for Length {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let units: [(&str, f64); 7] = [
            ("nm", 1e-9),
            ("µm", 1e-6),
            ("um", 1e-6),
            ("mm", 1e-3),
            ("cm", 1e-2),
            ("km", 1e3),
            ("m", 1.0),
        ];
        let (number, scale) = units
            .iter()
            .find_map(|(u, f)| s.strip_suffix(u).map(|n| (n, *f)))
            .unwrap_or((s, 1.0));
        let v: f64 = number
            .trim()
            .parse()
            .map_err(|_| format!("cannot read `{s}` as a length"))?;
        if !v.is_finite() {
            return Err(format!("length `{s}` is not finite"));
        }
        Ok(Length(v * scale))
    }
}

impl Serialize for Length {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct LengthVisitor;
        impl Visitor<'_> for LengthVisitor {
            type Value = Length;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a length in meters or a string with a unit suffix")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Length, E> {
                Ok(Length(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Length, E> {
                Ok(Length(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Length, E> {
                Ok(Length(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Length, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(LengthVisitor)
    }
}

/// A source amplitude: a real number or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(f64),
    Complex([f64; 2]),
}

impl Amplitude {
    pub fn value(self) -> C64 {
        match self {
            Amplitude::Real(r) => C64::new(r, 0.0),
            Amplitude::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub a: Amplitude,
    pub b: Amplitude,
    /// Rescale `(a, b)` to unit norm instead of rejecting them.
    pub normalize: bool,
    pub phi_degrees: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            a: Amplitude::Real(0.92),
            b: Amplitude::Real(0.38),
            normalize: true,
            phi_degrees: 180.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InterferometerSection {
    pub gamma1_degrees: f64,
    pub gamma2_degrees: f64,
    pub path_phase_degrees: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub min: Length,
    pub max: Length,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            min: Length(-4e-3),
            max: Length(4e-3),
            points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub half_width: Length,
    pub separation: Length,
    /// At most one of `wavelength` and `wavenumber` (1/m) may be set;
    /// with neither, the 351.1 nm pump wavelength is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<Length>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavenumber: Option<f64>,
    pub distance: Length,
    /// Exchange the plate orientations behind the two slits.
    pub swap_plates: bool,
    pub grid: GridSection,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            half_width: Length(40e-6),
            separation: Length(280e-6),
            wavelength: Some(Length(PUMP_WAVELENGTH)),
            wavenumber: None,
            distance: Length(0.2),
            swap_plates: false,
            grid: GridSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountingSection {
    pub coincidence_rate: f64,
    pub singles_signal_rate: f64,
    pub singles_idler_rate: f64,
    pub background_rate: f64,
    pub integration_time: f64,
    pub seed: u64,
    /// Independent Monte Carlo repetitions.
    pub repetitions: usize,
}

impl Default for CountingSection {
    fn default() -> Self {
        CountingSection {
            coincidence_rate: 20.0,
            singles_signal_rate: 2000.0,
            singles_idler_rate: 2000.0,
            background_rate: 0.0,
            integration_time: 10.0,
            seed: 1,
            repetitions: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputsSection {
    fn default() -> Self {
        OutputsSection {
            directory: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub source: SourceSection,
    pub interferometer: InterferometerSection,
    pub geometry: GeometrySection,
    pub imperfections: ImperfectionModel,
    pub counting: CountingSection,
    pub outputs: OutputsSection,
}

fn field(path: &str, e: Error) -> Error {
    Error::Config(format!("{path}: {e}"))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Re-checks every referenced domain invariant.
    pub fn validate(&self) -> Result<()> {
        self.source_polarization().map_err(|e| field("source", e))?;
        self.geometry().map_err(|e| field("geometry", e))?;
        let g = &self.geometry.grid;
        if g.points < 2 || !(g.max.0 > g.min.0) {
            return Err(Error::Config(
                "geometry.grid: need at least 2 points and max > min".into(),
            ));
        }
        self.imperfections
            .validate()
            .map_err(|e| field("imperfections", e))?;
        self.rates().validate().map_err(|e| field("counting", e))?;
        if self.counting.repetitions == 0 {
            return Err(Error::Config("counting.repetitions: must be at least 1".into()));
        }
        for (name, v) in [
            ("source.phi_degrees", self.source.phi_degrees),
            ("interferometer.gamma1_degrees", self.interferometer.gamma1_degrees),
            ("interferometer.gamma2_degrees", self.interferometer.gamma2_degrees),
            ("interferometer.path_phase_degrees", self.interferometer.path_phase_degrees),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name}: must be finite")));
            }
        }
        Ok(())
    }

    pub fn source_polarization(&self) -> Result<SourcePolarization> {
        let (a, b) = (self.source.a.value(), self.source.b.value());
        if self.source.normalize {
            SourcePolarization::normalized(a, b)
        } else {
            SourcePolarization::new(a, b)
        }
    }

    pub fn phi(&self) -> SlitPhase {
        SlitPhase::from_degrees(self.source.phi_degrees)
    }

    pub fn settings(&self) -> MachZehnderSettings {
        let i = &self.interferometer;
        MachZehnderSettings::new(
            i.gamma1_degrees.to_radians(),
            i.gamma2_degrees.to_radians(),
            i.path_phase_degrees.to_radians(),
        )
    }

    pub fn geometry(&self) -> Result<SlitGeometry> {
        let g = &self.geometry;
        let k = match (g.wavelength, g.wavenumber) {
            (Some(w), None) => {
                if !(w.0 > 0.0) {
                    return Err(Error::invalid("wavelength", "must be positive"));
                }
                std::f64::consts::TAU / w.0
            }
            (None, Some(k)) => k,
            (None, None) => std::f64::consts::TAU / PUMP_WAVELENGTH,
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "wavelength",
                    "set only one of `wavelength` and `wavenumber`",
                ))
            }
        };
        SlitGeometry::new(g.half_width.0, g.separation.0, k, g.distance.0)
    }

    pub fn grid(&self) -> Vec<f64> {
        let g = &self.geometry.grid;
        linspace(g.min.0, g.max.0, g.points)
    }

    pub fn rates(&self) -> CountRates {
        let c = &self.counting;
        CountRates {
            coincidence_rate: c.coincidence_rate,
            singles_signal_rate: c.singles_signal_rate,
            singles_idler_rate: c.singles_idler_rate,
            background_rate: c.background_rate,
            integration_time: c.integration_time,
        }
    }

    pub fn with_gamma1_degrees(&self, gamma1: f64) -> Self {
        let mut c = self.clone();
        c.interferometer.gamma1_degrees = gamma1;
        c
    }
}
