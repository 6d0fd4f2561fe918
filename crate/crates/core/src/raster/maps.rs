//! Dense per-pixel grids: binary masks, depth maps and polygon label maps.
//!
//! All grids are row-major with pixel `(x, y)` at index `y * width + x`.

use crate::geometry::CameraIntrinsics;

/// A packed binary image.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for BitMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BitMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        BitMask {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        let mut m = Self::new(width, height);
        for i in 0..width * height {
            m.set_index(i);
        }
        m
    }

    pub fn for_camera(k: &CameraIntrinsics) -> Self {
        Self::new(k.width as usize, k.height as usize)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y);
                }
            }
        }
        m
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
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn same_shape(&self, other: &BitMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.get_index(y * self.width + x)
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize) {
        self.set_index(y * self.width + x)
    }

    #[inline]
    pub fn set_index(&mut self, i: usize) {
        self.words[i >> 6] |= 1 << (i & 63);
    }

    #[inline]
    pub fn clear_index(&mut self, i: usize) {
        self.words[i >> 6] &= !(1 << (i & 63));
    }

    /// Sets pixels `[x0, x1)` of row `y`.
    pub fn set_span(&mut self, y: usize, x0: usize, x1: usize) {
        let base = y * self.width;
        for i in base + x0..base + x1 {
            self.set_index(i);
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn intersection_count(&self, other: &BitMask) -> usize {
        debug_assert!(self.same_shape(other));
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_count(&self, other: &BitMask) -> usize {
        debug_assert!(self.same_shape(other));
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    /// Intersection over union; two empty masks score 0.
    pub fn iou(&self, other: &BitMask) -> f64 {
        let union = self.union_count(other);
        if union == 0 {
            0.0
        } else {
            self.intersection_count(other) as f64 / union as f64
        }
    }

    pub fn union_with(&mut self, other: &BitMask) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &BitMask) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn subtract(&mut self, other: &BitMask) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    /// Indices of set pixels in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        let len = self.len();
        self.words.iter().enumerate().flat_map(move |(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
            .filter(move |&i| i < len)
        })
    }

    /// Euclidean-disk erosion: a pixel survives when every pixel within
    /// `radius` is set. Pixels outside the image count as unset.
    pub fn eroded(&self, radius: usize) -> BitMask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as isize;
        let offsets: Vec<(isize, isize)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = BitMask::new(self.width, self.height);
        for i in self.ones() {
            let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
            let keep = offsets.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && self.get(nx as usize, ny as usize)
            });
            if keep {
                out.set_index(i);
            }
        }
        out
    }
}

/// A per-pixel z-depth map in meters. Non-finite or non-positive values
/// mark invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        DepthMap {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    /// Panics if `values.len() != width * height`.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "depth map size mismatch");
        DepthMap {
            width,
            height,
            values,
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
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_valid_value(v: f64) -> bool {
        v.is_finite() && v > 0.0
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        Self::is_valid_value(self.values[i])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| Self::is_valid_value(v)).count()
    }

    pub fn matches(&self, k: &CameraIntrinsics) -> bool {
        self.width == k.width as usize && self.height == k.height as usize
    }

    /// Rounds every value to the nearest `f32`, the precision of the PFM
    /// file format.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.values {
            *v = *v as f32 as f64;
        }
    }
}

/// Per-pixel polygon ids; `None` is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<Option<u32>>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize) -> Self {
        LabelMap {
            width,
            height,
            labels: vec![None; width * height],
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
    pub fn get(&self, x: usize, y: usize) -> Option<u32> {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<u32> {
        self.labels[i]
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, label: Option<u32>) {
        self.labels[i] = label;
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    pub fn mask_of(&self, id: u32) -> BitMask {
        let mut m = BitMask::new(self.width, self.height);
        for (i, l) in self.labels.iter().enumerate() {
            if *l == Some(id) {
                m.set_index(i);
            }
        }
        m
    }

    /// Sorted distinct ids present in the map.
    pub fn ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}
