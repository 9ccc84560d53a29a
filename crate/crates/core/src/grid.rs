//! Dense row-major raster container shared by images, masks, depth and
//! confidence maps, and pointmaps.

use nalgebra::Vector3;

/// 2D raster indexed as `(x, y)` with row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Mask = Grid<bool>;
pub type ScalarField = Grid<f64>;
pub type ColorImage = Grid<Vector3<f64>>;
pub type PointField = Grid<Vector3<f64>>;

impl<T: Clone> Grid<T> {
    pub fn fill(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn map<U: Clone>(&self, mut f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| f(v)).collect(),
        }
    }
}

impl<T> Grid<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Iterate `(x, y, &value)` in row-major order.
    pub fn enumerate(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i % w, i / w, v))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (x, y): (usize, usize)) -> &T {
        &self.data[y * self.width + x]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (x, y): (usize, usize)) -> &mut T {
        &mut self.data[y * self.width + x]
    }
}

impl Mask {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }

    /// Tight bounding box of true pixels as `(x0, y0, x1, y1)` inclusive,
    /// or `None` for an all-false mask.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (x, y, &v) in self.enumerate() {
            if v {
                bb = Some(match bb {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
        bb
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for (x, y, &v) in self.enumerate() {
            if v {
                n += 1;
                sx += x as f64;
                sy += y as f64;
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Morphological dilation with a square structuring element of the given
    /// radius (Chebyshev distance).
    pub fn dilate(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        Mask::from_fn(self.width, self.height, |x, y| {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if self.contains(nx, ny) && self[(nx as usize, ny as usize)] {
                        return true;
                    }
                }
            }
            false
        })
    }
}

impl ColorImage {
    /// Rec. 601 luma.
    pub fn to_gray(&self) -> ScalarField {
        self.map(|c| 0.299 * c.x + 0.587 * c.y + 0.114 * c.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let mut g = Grid::fill(4, 3, 0.0f64);
        g[(3, 2)] = 7.0;
        assert_eq!(g[(3, 2)], 7.0);
        assert_eq!(g.data()[2 * 4 + 3], 7.0);
    }

    #[test]
    fn mask_bounding_box_and_centroid() {
        let mut m = Mask::fill(5, 5, false);
        m[(1, 2)] = true;
        m[(3, 4)] = true;
        assert_eq!(m.bounding_box(), Some((1, 2, 3, 4)));
        assert_eq!(m.centroid(), Some((2.0, 3.0)));
        assert!(Mask::fill(2, 2, false).bounding_box().is_none());
    }

    #[test]
    fn dilate_grows_by_radius() {
        let mut m = Mask::fill(5, 5, false);
        m[(2, 2)] = true;
        let d = m.dilate(1);
        assert!(d[(1, 1)] && d[(3, 3)] && d[(2, 1)]);
        assert!(!d[(0, 0)]);
    }
}
