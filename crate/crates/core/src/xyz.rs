//! Serde adapter that writes a `Vector3<f64>` as an `{x, y, z}` table so
//! configuration keys such as `gains.Kp.x` address single components.

use nalgebra::Vector3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Xyz {
    x: f64,
    y: f64,
    z: f64,
}

pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
    Xyz { x: v.x, y: v.y, z: v.z }.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
    let Xyz { x, y, z } = Xyz::deserialize(d)?;
    Ok(Vector3::new(x, y, z))
}
