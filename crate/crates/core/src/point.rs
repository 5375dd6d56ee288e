use std::fmt;
use std::ops::{Add, Index, IndexMut, Sub};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

/// A point (or displacement) in R^d. Stored inline for d <= 4.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(SmallVec<[f64; 4]>);

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Point(SmallVec::from_vec(coords.into()))
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Point(SmallVec::from_slice(coords))
    }

    pub fn zeros(d: usize) -> Self {
        Point(SmallVec::from_elem(0.0, d))
    }

    /// The i-th standard basis vector.
    pub fn unit(d: usize, i: usize) -> Self {
        let mut p = Point::zeros(d);
        p.0[i] = 1.0;
        p
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Point::from_slice(&[x, y])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, c: f64) -> Point {
        Point(self.0.iter().map(|v| v * c).collect())
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &Point) -> Point {
        Point(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + c * b).collect())
    }

    /// Unit vector in the direction of `self`, with the convention that 0 maps to 0.
    pub fn unit_or_zero(&self) -> Point {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n)
        } else {
            Point::zeros(self.dim())
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Polar angle in [0, 2π) of a planar point.
    pub fn angle(&self) -> f64 {
        let a = self.0[1].atan2(self.0[0]);
        if a < 0.0 {
            a + std::f64::consts::TAU
        } else {
            a
        }
    }
}

impl Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Point {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Sub for &Point {
    type Output = Point;
    fn sub(self, rhs: &Point) -> Point {
        Point(self.0.iter().zip(rhs.0.iter()).map(|(a, b)| a - b).collect())
    }
}

impl Add for &Point {
    type Output = Point;
    fn add(self, rhs: &Point) -> Point {
        Point(self.0.iter().zip(rhs.0.iter()).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0.as_slice())
    }
}

impl From<[f64; 2]> for Point {
    fn from(c: [f64; 2]) -> Self {
        Point::from_slice(&c)
    }
}

impl From<[f64; 3]> for Point {
    fn from(c: [f64; 3]) -> Self {
        Point::from_slice(&c)
    }
}
