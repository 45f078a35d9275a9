//! JSON shapes for nalgebra values: plain arrays, matrices as row lists.

use nalgebra::{Matrix6, Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod vec3 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::from(a))
    }
}

pub mod vec2_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vector2<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 2]> = v.iter().map(|p| [p.x, p.y]).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vector2<f64>>, D::Error> {
        let rows = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(rows.into_iter().map(Vector2::from).collect())
    }
}

pub mod mat6 {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix6<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 6]> = (0..6).map(|r| std::array::from_fn(|c| m[(r, c)])).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix6<f64>, D::Error> {
        let rows = <[[f64; 6]; 6]>::deserialize(d)?;
        Ok(Matrix6::from_fn(|r, c| rows[r][c]))
    }
}
