//! Detection records exchanged between edge agents and the relay.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

use crate::streams::ClassScores;
use crate::videoio::ActionLabel;

/// Mean Earth radius used for proximity checks.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gps {
    pub lat: f64,
    pub lon: f64,
}

impl Gps {
    pub fn new(lat: f64, lon: f64) -> Result<Self, FieldError> {
        let g = Self { lat, lon };
        g.validate("gps")?;
        Ok(g)
    }

    pub fn validate(&self, path: &str) -> Result<(), FieldError> {
        if !(self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat)) {
            return Err(FieldError::new(
                format!("{path}.lat"),
                "latitude must lie in [-90, 90]",
            ));
        }
        if !(self.lon.is_finite() && (-180.0..=180.0).contains(&self.lon)) {
            return Err(FieldError::new(
                format!("{path}.lon"),
                "longitude must lie in [-180, 180]",
            ));
        }
        Ok(())
    }
}

/// Great-circle distance in metres.
pub fn haversine_m(a: Gps, b: Gps) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventScores {
    pub spatial: [f64; 4],
    pub temporal: [f64; 4],
    pub fused: [f64; 4],
}

impl EventScores {
    pub fn new(spatial: &ClassScores, temporal: &ClassScores, fused: &ClassScores) -> Self {
        Self {
            spatial: spatial.probs,
            temporal: temporal.probs,
            fused: fused.probs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeEvent {
    pub event_id: Uuid,
    pub camera_id: String,
    pub gps: Gps,
    pub timestamp_ms: u64,
    pub label: ActionLabel,
    pub confidence: f64,
    pub scores: EventScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_ref: Option<String>,
    /// Set when the ring held less history than the requested clip length.
    #[serde(default)]
    pub short: bool,
}

/// A validation failure tied to a JSON field path such as `gps.lat`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for FieldError {}

fn field<'a>(v: &'a Value, path: &str) -> Result<&'a Value, FieldError> {
    let mut cur = v;
    for part in path.split('.') {
        cur = cur
            .get(part)
            .filter(|x| !x.is_null())
            .ok_or_else(|| FieldError::new(path, "missing field"))?;
    }
    Ok(cur)
}

fn number(v: &Value, path: &str) -> Result<f64, FieldError> {
    field(v, path)?
        .as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| FieldError::new(path, "expected a finite number"))
}

fn prob_vector(v: &Value, path: &str) -> Result<[f64; 4], FieldError> {
    let arr = field(v, path)?
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| FieldError::new(path, "expected 4 numbers"))?;
    let mut out = [0.0; 4];
    for (i, x) in arr.iter().enumerate() {
        out[i] = x
            .as_f64()
            .filter(|x| x.is_finite() && *x >= 0.0)
            .ok_or_else(|| {
                FieldError::new(format!("{path}.{i}"), "expected a non-negative number")
            })?;
    }
    Ok(out)
}

impl CrimeEvent {
    /// Parses and validates an event body, naming the first offending field.
    pub fn from_json(v: &Value) -> Result<Self, FieldError> {
        if !v.is_object() {
            return Err(FieldError::new("", "expected a JSON object"));
        }
        let id = field(v, "event_id")?
            .as_str()
            .and_then(|s| Uuid::parse_str(s).ok())
            .ok_or_else(|| FieldError::new("event_id", "expected a UUID"))?;
        let camera_id = field(v, "camera_id")?
            .as_str()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| FieldError::new("camera_id", "expected a non-empty string"))?
            .to_string();
        let gps = Gps {
            lat: number(v, "gps.lat")?,
            lon: number(v, "gps.lon")?,
        };
        let timestamp_ms = field(v, "timestamp_ms")?
            .as_u64()
            .ok_or_else(|| FieldError::new("timestamp_ms", "expected a non-negative integer"))?;
        let label = field(v, "label")?
            .as_str()
            .and_then(ActionLabel::from_name)
            .ok_or_else(|| FieldError::new("label", "unknown action label"))?;
        let confidence = number(v, "confidence")?;
        let scores = EventScores {
            spatial: prob_vector(v, "scores.spatial")?,
            temporal: prob_vector(v, "scores.temporal")?,
            fused: prob_vector(v, "scores.fused")?,
        };
        let clip_ref = match v.get("clip_ref") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(FieldError::new("clip_ref", "expected a string")),
        };
        let short = match v.get("short") {
            None | Some(Value::Null) => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => return Err(FieldError::new("short", "expected a boolean")),
        };
        let ev = Self {
            event_id: id,
            camera_id,
            gps,
            timestamp_ms,
            label,
            confidence,
            scores,
            clip_ref,
            short,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.camera_id.is_empty() {
            return Err(FieldError::new("camera_id", "expected a non-empty string"));
        }
        self.gps.validate("gps")?;
        if self.label == ActionLabel::NoAction {
            return Err(FieldError::new("label", "no_action is not a crime"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(FieldError::new("confidence", "must lie in [0, 1]"));
        }
        for (name, p) in [
            ("spatial", &self.scores.spatial),
            ("temporal", &self.scores.temporal),
            ("fused", &self.scores.fused),
        ] {
            if (p.iter().sum::<f64>() - 1.0).abs() > 1e-4 {
                return Err(FieldError::new(format!("scores.{name}"), "must sum to 1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> CrimeEvent {
        let s = ClassScores::new([0.1, 0.1, 0.7, 0.1]).unwrap();
        CrimeEvent {
            event_id: Uuid::new_v4(),
            camera_id: "cam-1".into(),
            gps: Gps {
                lat: 42.34,
                lon: -71.09,
            },
            timestamp_ms: 1_700_000_000_000,
            label: ActionLabel::Shooting,
            confidence: 0.7,
            scores: EventScores::new(&s, &s, &s),
            clip_ref: Some("c1".into()),
            short: false,
        }
    }

    #[test]
    fn json_round_trip() {
        let ev = sample();
        let v = serde_json::to_value(&ev).unwrap();
        assert_eq!(CrimeEvent::from_json(&v).unwrap(), ev);
    }

    #[test]
    fn missing_latitude_names_the_path() {
        let mut v = serde_json::to_value(sample()).unwrap();
        v["gps"].as_object_mut().unwrap().remove("lat");
        assert_eq!(CrimeEvent::from_json(&v).unwrap_err().field, "gps.lat");
        let mut v = serde_json::to_value(sample()).unwrap();
        v.as_object_mut().unwrap().remove("gps");
        assert_eq!(CrimeEvent::from_json(&v).unwrap_err().field, "gps.lat");
    }

    #[test]
    fn no_action_and_bad_ranges_are_rejected() {
        let mut ev = sample();
        ev.label = ActionLabel::NoAction;
        assert_eq!(ev.validate().unwrap_err().field, "label");
        let mut ev = sample();
        ev.gps.lon = 200.0;
        assert_eq!(ev.validate().unwrap_err().field, "gps.lon");
        let mut ev = sample();
        ev.confidence = 1.5;
        assert_eq!(ev.validate().unwrap_err().field, "confidence");
    }

    #[test]
    fn haversine_known_distance() {
        let civilian = Gps {
            lat: 42.3398,
            lon: -71.0892,
        };
        let center = Gps {
            lat: 42.3601,
            lon: -71.0589,
        };
        let d = haversine_m(civilian, center);
        assert!((d - 3360.84).abs() < 0.5, "{d}");
        assert!(d > 2000.0);
        assert_eq!(haversine_m(center, center), 0.0);
    }

    fn gps() -> impl Strategy<Value = Gps> {
        (-89.0..89.0f64, -179.0..179.0f64).prop_map(|(lat, lon)| Gps { lat, lon })
    }

    proptest! {
        #[test]
        fn haversine_is_a_metric(a in gps(), b in gps(), c in gps()) {
            let ab = haversine_m(a, b);
            prop_assert_eq!(ab, haversine_m(b, a));
            prop_assert!(ab >= 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
            let tri = haversine_m(a, c) + haversine_m(c, b);
            prop_assert!(ab <= tri * (1.0 + 1e-6) + 1e-6);
        }
    }
}
