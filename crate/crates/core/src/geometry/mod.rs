//! Admissible-region predicates.
//!
//! From a point `x` with history `H`, a target `y` in the unit ball is
//! admissible when the half-open segment `(x, y]` misses the convex hull of
//! `H ∪ {0, x}`. Equivalently `y − x` lies outside the cone with vertex `x`
//! spanned by the hull, so every test reduces to a conical-combination
//! feasibility problem on at most `k + 2` generators.
//!
//! Boundary points form a null set; membership there is decided by the
//! residual tolerance and may go either way.

mod simplex;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;

/// Default residual tolerance for cone membership (on unit-normalised data).
pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative threshold below which a generator point is considered equal to the apex.
const COINCIDENT_EPS: f64 = 1e-12;

/// Which far-field object the walk avoids alongside its recent history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// The hull includes the origin.
    Origin,
    /// The origin is replaced by a semi-infinite cylinder in direction `-ell`.
    Homogeneous { ell: Point },
}

impl ConstraintMode {
    pub fn ell(&self) -> Option<&Point> {
        match self {
            ConstraintMode::Origin => None,
            ConstraintMode::Homogeneous { ell } => Some(ell),
        }
    }
}

/// Generators of the blocked cone at `apex`: nonzero directions `p − apex`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeGenerators {
    apex: Point,
    directions: Vec<Point>,
}

impl ConeGenerators {
    pub fn new(apex: Point) -> Self {
        ConeGenerators {
            apex,
            directions: Vec::new(),
        }
    }

    /// Builds generators from raw directions (zero directions dropped).
    pub fn from_directions(apex: Point, directions: impl IntoIterator<Item = Point>) -> Result<Self> {
        let mut g = ConeGenerators::new(apex);
        for dir in directions {
            g.push_direction(dir)?;
        }
        Ok(g)
    }

    /// The cone generated at `x` by the constraint set of `mode`: history
    /// plus origin, or history plus the ray `-ell`.
    pub fn for_state<'a>(
        x: &Point,
        history: impl IntoIterator<Item = &'a Point>,
        mode: &ConstraintMode,
    ) -> Result<Self> {
        let mut g = ConeGenerators::new(x.clone());
        for h in history {
            g.push_point(h)?;
        }
        match mode {
            ConstraintMode::Origin => g.push_point(&Point::zeros(x.dim()))?,
            ConstraintMode::Homogeneous { ell } => {
                check_unit(ell, x.dim())?;
                g.push_direction(ell.scale(-1.0))?;
            }
        }
        Ok(g)
    }

    /// Adds the direction towards `p`; dropped if `p` coincides with the apex.
    pub fn push_point(&mut self, p: &Point) -> Result<()> {
        check_dim(p, self.apex.dim())?;
        let dir = p - &self.apex;
        let scale = self.apex.norm().max(1.0);
        if dir.norm() > COINCIDENT_EPS * scale {
            self.directions.push(dir);
        }
        Ok(())
    }

    pub fn push_direction(&mut self, dir: Point) -> Result<()> {
        check_dim(&dir, self.apex.dim())?;
        if !dir.is_finite() {
            return Err(Error::InvalidInput("non-finite cone direction".into()));
        }
        if dir.norm() > 0.0 {
            self.directions.push(dir);
        }
        Ok(())
    }

    pub fn apex(&self) -> &Point {
        &self.apex
    }

    pub fn directions(&self) -> &[Point] {
        &self.directions
    }

    pub fn dim(&self) -> usize {
        self.apex.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

fn check_dim(p: &Point, d: usize) -> Result<()> {
    if p.dim() != d {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: expected {d}, got {}",
            p.dim()
        )));
    }
    Ok(())
}

fn check_unit(ell: &Point, d: usize) -> Result<()> {
    check_dim(ell, d)?;
    if (ell.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "ell must be a unit vector, has norm {}",
            ell.norm()
        )));
    }
    Ok(())
}

/// Is `direction` a nonnegative combination of the cone generators?
///
/// Both the direction and the generators are normalised first, so the
/// answer is invariant under positive rescaling and `tol` is relative.
/// The zero direction is always contained.
pub fn cone_contains(direction: &Point, gens: &ConeGenerators, tol: f64) -> Result<bool> {
    check_dim(direction, gens.dim())?;
    if !direction.is_finite() {
        return Err(Error::InvalidInput("non-finite direction".into()));
    }
    let n = direction.norm();
    if n == 0.0 {
        return Ok(true);
    }
    if gens.is_empty() {
        return Ok(false);
    }
    let b = direction.scale(1.0 / n);
    let units: Vec<Point> = gens.directions.iter().map(|g| g.scale(1.0 / g.norm())).collect();
    let cols: Vec<&[f64]> = units.iter().map(|u| u.coords()).collect();
    let sol = simplex::phase_one(&cols, b.coords());
    Ok(sol.residual <= tol)
}

/// Is `y` reachable from `x` without the segment `(x, y]` meeting the hull?
///
/// Targets farther than `1 + tol` from `x` are simply not admissible.
pub fn admissible_point<'a>(
    y: &Point,
    x: &Point,
    history: impl IntoIterator<Item = &'a Point>,
    mode: &ConstraintMode,
) -> Result<bool> {
    check_dim(y, x.dim())?;
    let step = y - x;
    if step.norm() > 1.0 + DEFAULT_TOL {
        return Ok(false);
    }
    let gens = ConeGenerators::for_state(x, history, mode)?;
    Ok(!cone_contains(&step, &gens, DEFAULT_TOL)?)
}

/// An arc of directions `{start + t mod 2π : 0 <= t <= width}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: f64,
    pub width: f64,
}

impl Arc {
    pub const FULL: Arc = Arc {
        start: 0.0,
        width: TAU,
    };

    /// Magnitude of the hull's interior angle at the apex, `2π − width`.
    pub fn interior_angle(&self) -> f64 {
        (TAU - self.width).max(0.0)
    }

    /// Area of the unit-disk sector spanned by the arc.
    pub fn sector_area(&self) -> f64 {
        0.5 * self.width
    }

    /// Angular offset of `angle` from `start`, in [0, 2π).
    pub fn offset(&self, angle: f64) -> f64 {
        (angle - self.start).rem_euclid(TAU)
    }

    pub fn contains(&self, angle: f64) -> bool {
        self.width >= TAU || self.offset(angle) <= self.width
    }

    /// Angular distance from `angle` to the nearer arc endpoint.
    pub fn distance_to_endpoints(&self, angle: f64) -> f64 {
        if self.width >= TAU {
            return f64::INFINITY;
        }
        let o = self.offset(angle);
        let to_start = o.min(TAU - o);
        let e = (o - self.width).rem_euclid(TAU);
        let to_end = e.min(TAU - e);
        to_start.min(to_end)
    }

    /// The direction at fraction `u` along the arc, wrapped to [0, 2π).
    pub fn at(&self, u: f64) -> f64 {
        (self.start + u * self.width).rem_euclid(TAU)
    }
}

/// The admissible directions at `x` in the plane: the complement of the
/// smallest arc enclosing all blocked directions.
///
/// Sorting the direction angles and taking the largest gap gives the
/// admissible arc directly. Its width is in `[π, 2π]` for every extremal `x`.
pub fn admissible_sector_2d<'a>(
    x: &Point,
    history: impl IntoIterator<Item = &'a Point>,
    mode: &ConstraintMode,
) -> Result<Arc> {
    if x.dim() != 2 {
        return Err(Error::UnsupportedDimension(x.dim()));
    }
    let gens = ConeGenerators::for_state(x, history, mode)?;
    sector_from_generators(&gens)
}

pub(crate) fn sector_from_generators(gens: &ConeGenerators) -> Result<Arc> {
    if gens.dim() != 2 {
        return Err(Error::UnsupportedDimension(gens.dim()));
    }
    let mut angles: smallvec::SmallVec<[f64; 8]> =
        gens.directions().iter().map(Point::angle).collect();
    match angles.len() {
        0 => return Ok(Arc::FULL),
        1 => {
            return Ok(Arc {
                start: angles[0],
                width: TAU,
            })
        }
        _ => {}
    }
    angles.sort_by(f64::total_cmp);
    let mut best = (angles[angles.len() - 1], angles[0] + TAU - angles[angles.len() - 1]);
    for w in angles.windows(2) {
        let gap = w[1] - w[0];
        if gap > best.1 {
            best = (w[0], gap);
        }
    }
    let (start, width) = best;
    if width < PI - 1e-12 {
        return Err(Error::DegenerateConfiguration(format!(
            "blocked directions span an arc of {:.6} > π",
            TAU - width
        )));
    }
    Ok(Arc {
        start,
        width: width.clamp(PI, TAU),
    })
}
