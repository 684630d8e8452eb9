//! Serde adapters storing nalgebra matrices as row-major nested arrays.

use nalgebra::{Matrix2, Matrix3, RowVector2, Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod mat2 {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix2<f64>, s: S) -> Result<S::Ok, S::Error> {
        [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix2<f64>, D::Error> {
        let r = <[[f64; 2]; 2]>::deserialize(d)?;
        Ok(Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1]))
    }
}

pub mod mat3 {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let r = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| r[i][j]))
    }
}

pub mod vec2 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector2<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v[0], v[1]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector2<f64>, D::Error> {
        let r = <[f64; 2]>::deserialize(d)?;
        Ok(Vector2::new(r[0], r[1]))
    }
}

pub mod row2 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &RowVector2<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v[0], v[1]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RowVector2<f64>, D::Error> {
        let r = <[f64; 2]>::deserialize(d)?;
        Ok(RowVector2::new(r[0], r[1]))
    }
}

pub mod vec3 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v[0], v[1], v[2]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let r = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::new(r[0], r[1], r[2]))
    }
}
