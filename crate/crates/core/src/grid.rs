//! Row-major 2-D rasters shared by every stage of the pipeline.

use std::path::Path;

use image::{GrayImage, Luma};

/// A `width × height` raster stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Binary raster; `true` is foreground.
pub type Mask = Grid<bool>;

/// Real-valued raster, usually a probability map in `[0, 1]`.
pub type Map = Grid<f64>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    /// Panics when `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Self {
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
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
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
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, V>(&self, other: &Grid<U>, mut f: impl FnMut(&T, &U) -> V) -> Grid<V> {
        assert!(self.same_dims(other), "grid dimension mismatch");
        Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if *self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    /// Foreground is any value `>= 128`.
    pub fn from_gray(img: &GrayImage) -> Self {
        Grid::from_fn(img.width() as usize, img.height() as usize, |x, y| {
            img.get_pixel(x as u32, y as u32)[0] >= 128
        })
    }

    pub fn union_with(&mut self, other: &Mask) {
        assert!(self.same_dims(other), "grid dimension mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }
}

impl Map {
    /// Quantizes `[0, 1]` values to 8 bits with rounding.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize).clamp(0.0, 1.0);
            Luma([(v * 255.0).round() as u8])
        })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Grid::from_fn(img.width() as usize, img.height() as usize, |x, y| {
            f64::from(img.get_pixel(x as u32, y as u32)[0]) / 255.0
        })
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn threshold(&self, t: f64) -> Mask {
        self.map(|&v| v >= t)
    }

    /// Bilinear resampling with half-pixel centers (`align_corners = false`).
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Map {
        let cols = interp_weights(self.width, width);
        let rows = interp_weights(self.height, height);
        Grid::from_fn(width, height, |x, y| {
            let (y0, y1, wy) = rows[y];
            let (x0, x1, wx) = cols[x];
            let top = self.get(x0, y0) * (1.0 - wx) + self.get(x1, y0) * wx;
            let bottom = self.get(x0, y1) * (1.0 - wx) + self.get(x1, y1) * wx;
            top * (1.0 - wy) + bottom * wy
        })
    }
}

/// Per output index: the two source taps and the weight of the second one, for
/// half-pixel-center linear interpolation from `src` to `dst` samples.
pub fn interp_weights(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            let w = if i1 == i0 { 0.0 } else { pos - i0 as f64 };
            (i0, i1, w)
        })
        .collect()
}

pub fn read_mask_png(path: &Path) -> image::ImageResult<Mask> {
    Ok(Mask::from_gray(&image::open(path)?.to_luma8()))
}

pub fn read_map_png(path: &Path) -> image::ImageResult<Map> {
    Ok(Map::from_gray(&image::open(path)?.to_luma8()))
}
