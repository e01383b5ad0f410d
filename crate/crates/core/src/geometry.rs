//! Spatial grids, the star phantom, transducer arrays and the recording timebase.
//!
//! All grids are 2D planes embedded in 3D at a fixed `z`. Points are stored
//! row-major: index `n = row * n_x + col`, with `col` running along `x` and
//! `row` along `y`. Every operator and covariance in the crate shares this
//! ordering.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Uniform rectangular grid of `n_x * n_y` points centered on the origin in x and y.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectGrid {
    n_x: usize,
    n_y: usize,
    extent_x: f64,
    extent_y: f64,
    plane_z: f64,
    points: Vec<Point3>,
}

impl ObjectGrid {
    pub fn new(n_x: usize, n_y: usize, extent_x: f64, extent_y: f64, plane_z: f64) -> Result<Self> {
        if n_x == 0 || n_y == 0 || n_x * n_y < 2 {
            return Err(Error::InvalidDimension(format!(
                "grid needs at least 2 points, got {n_x}x{n_y}"
            )));
        }
        if !(extent_x > 0.0 && extent_y > 0.0) || !extent_x.is_finite() || !extent_y.is_finite() {
            return Err(Error::InvalidDimension(format!(
                "grid extents must be positive, got {extent_x} x {extent_y}"
            )));
        }
        if !plane_z.is_finite() {
            return Err(Error::InvalidParameter("plane_z must be finite".into()));
        }
        // a single-point axis sits at the centre with spacing equal to its extent
        let axis = |n: usize, extent: f64| if n > 1 { (extent / (n - 1) as f64, -0.5 * extent) } else { (extent, 0.0) };
        let (sx, x0) = axis(n_x, extent_x);
        let (sy, y0) = axis(n_y, extent_y);
        let mut points = Vec::with_capacity(n_x * n_y);
        for row in 0..n_y {
            for col in 0..n_x {
                points.push([
                    x0 + col as f64 * sx,
                    y0 + row as f64 * sy,
                    plane_z,
                ]);
            }
        }
        Ok(Self {
            n_x,
            n_y,
            extent_x,
            extent_y,
            plane_z,
            points,
        })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    /// Total number of points `N`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extent_x(&self) -> f64 {
        self.extent_x
    }

    pub fn extent_y(&self) -> f64 {
        self.extent_y
    }

    pub fn plane_z(&self) -> f64 {
        self.plane_z
    }

    pub fn spacing_x(&self) -> f64 {
        self.extent_x / self.n_x.saturating_sub(1).max(1) as f64
    }

    pub fn spacing_y(&self) -> f64 {
        self.extent_y / self.n_y.saturating_sub(1).max(1) as f64
    }

    /// Smaller of the two spacings.
    pub fn min_spacing(&self) -> f64 {
        self.spacing_x().min(self.spacing_y())
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Point3 {
        self.points[index]
    }

    pub fn center(&self) -> Point3 {
        [0.0, 0.0, self.plane_z]
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_x + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.n_x, index % self.n_x)
    }

    /// Two grids describe the same discretization.
    pub fn same_discretization(&self, other: &ObjectGrid) -> bool {
        self.n_x == other.n_x
            && self.n_y == other.n_y
            && self.extent_x == other.extent_x
            && self.extent_y == other.extent_y
            && self.plane_z == other.plane_z
    }
}

/// Absorption coefficients on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectField {
    grid: ObjectGrid,
    rho: Vec<f64>,
}

impl ObjectField {
    pub fn new(grid: ObjectGrid, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::mismatch("object field", grid.len(), rho.len()));
        }
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("object field has non-finite entries".into()));
        }
        Ok(Self { grid, rho })
    }

    pub fn grid(&self) -> &ObjectGrid {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn into_rho(self) -> Vec<f64> {
        self.rho
    }
}

/// Binary star: a filled core disk plus `n_arms` wedges of equal angle
/// alternating with empty wedges between `inner_radius` and `outer_radius`.
pub fn star_phantom(
    grid: &ObjectGrid,
    n_arms: usize,
    inner_radius: f64,
    outer_radius: f64,
) -> Result<ObjectField> {
    if n_arms < 3 {
        return Err(Error::InvalidParameter(format!("star needs at least 3 arms, got {n_arms}")));
    }
    let limit = 0.5 * grid.extent_x().min(grid.extent_y());
    if !(inner_radius >= 0.0 && inner_radius < outer_radius && outer_radius <= limit) {
        return Err(Error::RadiusOutOfBounds {
            inner: inner_radius,
            outer: outer_radius,
            limit,
        });
    }
    let sectors = 2 * n_arms;
    let sector_angle = 2.0 * PI / sectors as f64;
    let rho: Vec<f64> = grid
        .points()
        .iter()
        .map(|p| {
            let r = p[0].hypot(p[1]);
            if r <= inner_radius {
                return 1.0;
            }
            if r > outer_radius {
                return 0.0;
            }
            let theta = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
            let sector = ((theta / sector_angle).floor() as usize).min(sectors - 1);
            if sector % 2 == 0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    if rho.iter().all(|&v| v == 0.0) {
        return Err(Error::EmptyPhantom);
    }
    ObjectField::new(grid.clone(), rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Square,
    Circular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransducerArray {
    positions: Vec<Point3>,
    kind: ArrayKind,
}

impl TransducerArray {
    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `m_side x m_side` lattice spanning `extent` in x and y, `standoff` above the object plane.
pub fn square_array(
    m_side: usize,
    standoff: f64,
    extent: f64,
    grid: &ObjectGrid,
) -> Result<TransducerArray> {
    if m_side == 0 {
        return Err(Error::NonSquareArray(0));
    }
    if !(standoff > 0.0) || !standoff.is_finite() {
        return Err(Error::InvalidParameter(format!("standoff must be positive, got {standoff}")));
    }
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::InvalidParameter(format!("array extent must be positive, got {extent}")));
    }
    let z = grid.plane_z() + standoff;
    let coord = |i: usize| {
        if m_side == 1 {
            0.0
        } else {
            -0.5 * extent + extent * i as f64 / (m_side - 1) as f64
        }
    };
    let mut positions = Vec::with_capacity(m_side * m_side);
    for row in 0..m_side {
        for col in 0..m_side {
            positions.push([coord(col), coord(row), z]);
        }
    }
    Ok(TransducerArray {
        positions,
        kind: ArrayKind::Square,
    })
}

/// Square array from a total transducer count, which must be a perfect square.
pub fn square_array_from_count(
    count: usize,
    standoff: f64,
    extent: f64,
    grid: &ObjectGrid,
) -> Result<TransducerArray> {
    let side = (count as f64).sqrt().round() as usize;
    if side * side != count || count == 0 {
        return Err(Error::NonSquareArray(count));
    }
    square_array(side, standoff, extent, grid)
}

/// `count` transducers equally spaced on a circle in the object plane, first at angle 0.
pub fn circular_array(count: usize, radius: f64, grid: &ObjectGrid) -> Result<TransducerArray> {
    if count == 0 {
        return Err(Error::InvalidParameter("circular array needs at least one transducer".into()));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let [cx, cy, cz] = grid.center();
    let positions = (0..count)
        .map(|m| {
            let angle = 2.0 * PI * m as f64 / count as f64;
            let (s, c) = angle.sin_cos();
            [cx + radius * c, cy + radius * s, cz]
        })
        .collect();
    Ok(TransducerArray {
        positions,
        kind: ArrayKind::Circular,
    })
}

/// Uniform sampling times `t0 + i * dt`, `i = 0..samples`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timebase {
    samples: usize,
    dt: f64,
    t0: f64,
}

impl Timebase {
    pub fn new(samples: usize, dt: f64, t0: f64) -> Result<Self> {
        if samples < 2 {
            return Err(Error::InvalidDimension(format!("timebase needs at least 2 samples, got {samples}")));
        }
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid timebase dt={dt}, t0={t0}")));
        }
        Ok(Self { samples, dt, t0 })
    }

    /// Timebase whose last sample sits at `t0 + duration`.
    pub fn from_duration(samples: usize, duration: f64, t0: f64) -> Result<Self> {
        if samples < 2 {
            return Err(Error::InvalidDimension(format!("timebase needs at least 2 samples, got {samples}")));
        }
        Self::new(samples, duration / (samples - 1) as f64, t0)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn duration(&self) -> f64 {
        (self.samples - 1) as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.duration()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }
}
