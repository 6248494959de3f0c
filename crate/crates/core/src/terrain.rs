//! Terrain height fields with bilinear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// A regular grid of terrain heights over a rectangle of the xy plane.
///
/// Node `(ix, iy)` sits at `origin + (ix, iy) * resolution`; queries
/// interpolate bilinearly and error outside the covered rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField<T: Real> {
    origin: [T; 2],
    resolution: T,
    nx: usize,
    ny: usize,
    data: Vec<T>,
}

impl<T: Real> HeightField<T> {
    pub fn new(origin: [T; 2], resolution: T, nx: usize, ny: usize, data: Vec<T>) -> Result<Self> {
        if !(resolution > T::zero()) {
            return Err(Error::InvalidParameter(
                "height field resolution must be > 0".into(),
            ));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(
                "height field needs at least 2x2 nodes".into(),
            ));
        }
        if data.len() != nx * ny {
            return Err(Error::InvalidParameter(format!(
                "height field data length {} != {nx} x {ny}",
                data.len()
            )));
        }
        if data.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidParameter(
                "height field contains non-finite heights".into(),
            ));
        }
        Ok(Self {
            origin,
            resolution,
            nx,
            ny,
            data,
        })
    }

    /// A flat field of the given height covering a centered square.
    pub fn flat(extent: T, resolution: T, height: T) -> Result<Self> {
        let nodes = (extent / resolution).ceil().to_usize().unwrap_or(0) + 1;
        let nodes = nodes.max(2);
        let half = extent / real(2.0);
        Self::new(
            [-half, -half],
            resolution,
            nodes,
            nodes,
            vec![height; nodes * nodes],
        )
    }

    /// Builds a field from a closure over node coordinates.
    pub fn from_fn(
        origin: [T; 2],
        resolution: T,
        nx: usize,
        ny: usize,
        mut f: impl FnMut(T, T) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let x = origin[0] + T::from_usize(ix).unwrap() * resolution;
                let y = origin[1] + T::from_usize(iy).unwrap() * resolution;
                data.push(f(x, y));
            }
        }
        Self::new(origin, resolution, nx, ny, data)
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn node_counts(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn node(&self, ix: usize, iy: usize) -> T {
        self.data[iy * self.nx + ix]
    }

    pub fn min_height(&self) -> T {
        self.data
            .iter()
            .copied()
            .fold(T::max_value().unwrap(), T::min)
    }

    pub fn max_height(&self) -> T {
        self.data
            .iter()
            .copied()
            .fold(T::min_value().unwrap(), T::max)
    }

    /// Bilinear height at `(x, y)`; errors outside the grid.
    pub fn height_at(&self, x: T, y: T) -> Result<T> {
        let fx = (x - self.origin[0]) / self.resolution;
        let fy = (y - self.origin[1]) / self.resolution;
        let max_x = T::from_usize(self.nx - 1).unwrap();
        let max_y = T::from_usize(self.ny - 1).unwrap();
        if fx < T::zero() || fy < T::zero() || fx > max_x || fy > max_y {
            return Err(Error::TerrainOutOfBounds {
                x: x.to_f64().unwrap_or(f64::NAN),
                y: y.to_f64().unwrap_or(f64::NAN),
            });
        }
        let ix = fx.floor().to_usize().unwrap().min(self.nx - 2);
        let iy = fy.floor().to_usize().unwrap().min(self.ny - 2);
        let tx = fx - T::from_usize(ix).unwrap();
        let ty = fy - T::from_usize(iy).unwrap();
        let h00 = self.node(ix, iy);
        let h10 = self.node(ix + 1, iy);
        let h01 = self.node(ix, iy + 1);
        let h11 = self.node(ix + 1, iy + 1);
        let one = T::one();
        Ok(h00 * (one - tx) * (one - ty)
            + h10 * tx * (one - ty)
            + h01 * (one - tx) * ty
            + h11 * tx * ty)
    }
}
