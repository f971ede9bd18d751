use std::collections::VecDeque;

use super::{BinaryImage, BoundingBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }

    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// A connected set of ink pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    /// Discovery ordinal in a row-major scan.
    pub id: usize,
    pub bbox: BoundingBox,
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Mean row of the component's pixels.
    pub fn centroid_row(&self) -> f64 {
        self.pixels.iter().map(|&(_, y)| y as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// The component's own pixels on a canvas the size of its bounding box.
    pub fn to_image(&self) -> BinaryImage {
        let mut img = BinaryImage::new(self.bbox.width(), self.bbox.height());
        for &(x, y) in &self.pixels {
            img.set(x - self.bbox.x0, y - self.bbox.y0, true);
        }
        img
    }
}

/// Labels connected ink regions by breadth-first flood fill.
///
/// Components come back ordered by `(bbox.x0, bbox.y0, id)`.
pub fn connected_components(img: &BinaryImage, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = (img.width(), img.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || img.bits()[start] == 0 {
            continue;
        }
        let (sx, sy) = (start % w, start / w);
        seen[start] = true;
        queue.push_back((sx, sy));
        let mut bbox = BoundingBox::new(sx, sy, sx + 1, sy + 1);
        let mut pixels = Vec::new();
        while let Some((x, y)) = queue.pop_front() {
            pixels.push((x, y));
            bbox.include(x, y);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let idx = ny as usize * w + nx as usize;
                if !seen[idx] && img.bits()[idx] != 0 {
                    seen[idx] = true;
                    queue.push_back((nx as usize, ny as usize));
                }
            }
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        out.push(Component {
            id: out.len(),
            bbox,
            pixels,
        });
    }
    out.sort_by_key(|c| (c.bbox.x0, c.bbox.y0, c.id));
    out
}
