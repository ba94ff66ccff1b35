use nalgebra::Point3;

/// Static 3-D tree for nearest-neighbour queries. Stored implicitly: the
/// node of a range `[lo, hi)` sits at its midpoint.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    /// original index of each slot
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build_range(points, &mut order, &mut axes, 0, points.len());
        let sorted = order.iter().map(|&i| points[i]).collect();
        Self {
            points: sorted,
            order,
            axes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index (into the build slice) and squared distance of the closest
    /// point to `q`.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.points.len(), &mut best);
        Some((self.order[best.0], best.1))
    }

    fn search(&self, q: &Point3<f64>, lo: usize, hi: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let p = &self.points[mid];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && self.order[mid] < self.order.get(best.0).copied().unwrap_or(usize::MAX)) {
            *best = (mid, d2);
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }
}

fn build_range(points: &[Point3<f64>], order: &mut [usize], axes: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= 1 {
        return;
    }
    let slice = &mut order[lo..hi];
    let mut span = [0.0f64; 3];
    for (a, s) in span.iter_mut().enumerate() {
        let (mn, mx) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &i| {
            (mn.min(points[i][a]), mx.max(points[i][a]))
        });
        *s = mx - mn;
    }
    let axis = (0..3).max_by(|&a, &b| span[a].total_cmp(&span[b])).unwrap();
    let mid = (hi - lo) / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    axes[lo + mid] = axis as u8;
    build_range(points, order, axes, lo, lo + mid);
    build_range(points, order, axes, lo + mid + 1, hi);
}
