//! Actor-of-interest pooling: bilinear sampling of a feature map on a grid
//! inside each proposal box, averaged over time.

use crate::error::{Error, Result};
use crate::geometry::{BBox, Tube};
use crate::tensor::Tensor;

/// Sampling points of one proposal, `frames x X x Y`, stored as `(x, y)` in
/// feature-map coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    nx: usize,
    ny: usize,
    points: Vec<(f64, f64)>,
    degenerate: bool,
}

impl SamplingGrid {
    pub fn new(nx: usize, ny: usize, points: Vec<(f64, f64)>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Shape("grid needs at least one point per axis".into()));
        }
        if !points.len().is_multiple_of(nx * ny) {
            return Err(Error::Shape(format!(
                "{} grid points do not form whole {nx}x{ny} frames",
                points.len()
            )));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Shape("grid coordinates must be finite".into()));
        }
        Ok(SamplingGrid {
            nx,
            ny,
            points,
            degenerate: false,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn num_frames(&self) -> usize {
        self.points.len() / (self.nx * self.ny)
    }

    pub fn point(&self, n: usize, i: usize, j: usize) -> (f64, f64) {
        self.points[(n * self.nx + i) * self.ny + j]
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// True when some projected box had zero width or height and its points
    /// collapsed onto a line or its center.
    pub fn degenerate(&self) -> bool {
        self.degenerate
    }
}

fn push_box_points(b: &BBox, (sx, sy): (f64, f64), nx: usize, ny: usize, out: &mut Vec<(f64, f64)>) -> bool {
    let (x1, y1, x2, y2) = (b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy);
    let (cw, ch) = ((x2 - x1) / nx as f64, (y2 - y1) / ny as f64);
    for i in 0..nx {
        for j in 0..ny {
            out.push((x1 + (i as f64 + 0.5) * cw, y1 + (j as f64 + 0.5) * ch));
        }
    }
    x2 <= x1 || y2 <= y1
}

/// Grid over every box of the tube, in frame order.
pub fn build_grid(tube: &Tube, projection: (f64, f64), nx: usize, ny: usize) -> Result<SamplingGrid> {
    let frames: Vec<usize> = tube.boxes().iter().map(|b| b.frame).collect();
    build_grid_at(tube, &frames, projection, nx, ny)
}

/// Grid over the tube's boxes at the given video frames. Frames outside the
/// tube's span use the nearest end box.
pub fn build_grid_at(
    tube: &Tube,
    frames: &[usize],
    projection: (f64, f64),
    nx: usize,
    ny: usize,
) -> Result<SamplingGrid> {
    if tube.is_empty() {
        return Err(Error::InvalidTube("cannot sample an empty tube".into()));
    }
    let mut points = Vec::with_capacity(frames.len() * nx * ny);
    let mut degenerate = false;
    for &f in frames {
        let b = tube
            .box_at(f.clamp(tube.start(), tube.end()))
            .expect("tube frames are consecutive");
        degenerate |= push_box_points(b, projection, nx, ny, &mut points);
    }
    let mut grid = SamplingGrid::new(nx, ny, points)?;
    grid.degenerate = degenerate;
    Ok(grid)
}

/// Feature cells with non-zero weight under `k(d) = max(0, 1 - |d|)`.
fn taps(c: f64, len: usize) -> impl Iterator<Item = (usize, f64)> {
    let f = c.floor();
    let lo = f as i64;
    let t = c - f;
    [(lo, 1.0 - t), (lo + 1, t)]
        .into_iter()
        .filter(move |&(i, w)| w > 0.0 && i >= 0 && (i as usize) < len)
        .map(|(i, w)| (i as usize, w))
}

fn check_shapes(u: &Tensor, grids: &[SamplingGrid]) -> Result<([usize; 4], usize, usize)> {
    let [n, c, w, h] = u.dims4()?;
    let (nx, ny) = grids.first().map_or((1, 1), |g| (g.nx, g.ny));
    for (p, g) in grids.iter().enumerate() {
        if g.num_frames() != n {
            return Err(Error::Shape(format!(
                "grid of proposal {p} has {} frames, feature map has {n}",
                g.num_frames()
            )));
        }
        if (g.nx, g.ny) != (nx, ny) {
            return Err(Error::Shape(format!("grid of proposal {p} is not {nx}x{ny}")));
        }
    }
    Ok(([n, c, w, h], nx, ny))
}

/// Pools `U: [N, C, W', H']` into `[P, C, X, Y]`, one slice per grid.
pub fn actor_of_interest_pool(u: &Tensor, grids: &[SamplingGrid]) -> Result<Tensor> {
    let ([n, c, w, h], nx, ny) = check_shapes(u, grids)?;
    let cells = nx * ny;
    let mut out = Tensor::zeros(vec![grids.len(), c, nx, ny]);
    let ud = u.data();
    let od = out.data_mut();
    let mut kernel: Vec<(usize, f64)> = Vec::with_capacity(4);
    for (p, g) in grids.iter().enumerate() {
        for fr in 0..n {
            for cell in 0..cells {
                let (x, y) = g.points[fr * cells + cell];
                kernel.clear();
                for (a, wa) in taps(x, w) {
                    for (b, wb) in taps(y, h) {
                        kernel.push((a * h + b, wa * wb));
                    }
                }
                for ch in 0..c {
                    let base = (fr * c + ch) * w * h;
                    let v: f64 = kernel.iter().map(|&(o, k)| ud[base + o] * k).sum();
                    od[(p * c + ch) * cells + cell] += v;
                }
            }
        }
    }
    let inv = 1.0 / n as f64;
    od.iter_mut().for_each(|v| *v *= inv);
    Ok(out)
}

/// Gradient of the pooled output with respect to `U`, given `d_pooled` of
/// shape `[P, C, X, Y]`. Grid coordinates are treated as constants.
pub fn pool_backward(u_dims: &[usize], grids: &[SamplingGrid], d_pooled: &Tensor) -> Result<Tensor> {
    let probe = Tensor::zeros(u_dims.to_vec());
    let ([n, c, w, h], nx, ny) = check_shapes(&probe, grids)?;
    let cells = nx * ny;
    if d_pooled.dims() != [grids.len(), c, nx, ny] {
        return Err(Error::Shape(format!(
            "pooled gradient has dims {:?}, expected {:?}",
            d_pooled.dims(),
            [grids.len(), c, nx, ny]
        )));
    }
    let mut du = probe;
    let dd = d_pooled.data();
    let gd = du.data_mut();
    let inv = 1.0 / n as f64;
    for (p, g) in grids.iter().enumerate() {
        for fr in 0..n {
            for cell in 0..cells {
                let (x, y) = g.points[fr * cells + cell];
                for (a, wa) in taps(x, w) {
                    for (b, wb) in taps(y, h) {
                        let k = wa * wb * inv;
                        for ch in 0..c {
                            gd[((fr * c + ch) * w + a) * h + b] += dd[(p * c + ch) * cells + cell] * k;
                        }
                    }
                }
            }
        }
    }
    Ok(du)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel(d: f64) -> f64 {
        (1.0 - d.abs()).max(0.0)
    }

    /// Literal double sum over every feature cell, then the temporal mean.
    fn brute_force_pool(u: &Tensor, grids: &[SamplingGrid]) -> Tensor {
        let [n, c, w, h] = u.dims4().unwrap();
        let (nx, ny) = (grids[0].nx(), grids[0].ny());
        let mut out = Tensor::zeros(vec![grids.len(), c, nx, ny]);
        for (p, g) in grids.iter().enumerate() {
            for ch in 0..c {
                for i in 0..nx {
                    for j in 0..ny {
                        let mut total = 0.0;
                        for fr in 0..n {
                            let (x, y) = g.point(fr, i, j);
                            let mut v = 0.0;
                            for a in 0..w {
                                for b in 0..h {
                                    v += u.get(&[fr, ch, a, b]) * kernel(a as f64 - x) * kernel(b as f64 - y);
                                }
                            }
                            total += v;
                        }
                        out.set(&[p, ch, i, j], total / n as f64);
                    }
                }
            }
        }
        out
    }

    fn tube(boxes: &[(f64, f64, f64, f64)]) -> Tube {
        Tube::new(
            boxes
                .iter()
                .enumerate()
                .map(|(f, &(a, b, c, d))| BBox::new(f, a, b, c, d).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn grid_cell_centers() {
        let g = build_grid(&tube(&[(0.0, 0.0, 4.0, 4.0)]), (1.0, 1.0), 2, 2).unwrap();
        assert_eq!(g.points(), &[(1.0, 1.0), (1.0, 3.0), (3.0, 1.0), (3.0, 3.0)]);
        let one = build_grid(&tube(&[(2.0, 4.0, 6.0, 10.0)]), (1.0, 1.0), 1, 1).unwrap();
        assert_eq!(one.points(), &[(4.0, 7.0)]);
        let half = build_grid(&tube(&[(0.0, 0.0, 4.0, 4.0)]), (0.5, 0.5), 2, 2).unwrap();
        assert_eq!(half.points(), &[(0.5, 0.5), (0.5, 1.5), (1.5, 0.5), (1.5, 1.5)]);
        assert!(!g.degenerate());
    }

    #[test]
    fn zero_area_box_collapses_to_center() {
        let g = build_grid(&tube(&[(3.0, 5.0, 3.0, 5.0)]), (1.0, 1.0), 3, 3).unwrap();
        assert!(g.points().iter().all(|&p| p == (3.0, 5.0)));
        assert!(g.degenerate());
    }

    #[test]
    fn frames_outside_the_tube_use_end_boxes() {
        let t = Tube::new(vec![
            BBox::new(2, 0.0, 0.0, 2.0, 2.0).unwrap(),
            BBox::new(3, 4.0, 4.0, 6.0, 6.0).unwrap(),
        ])
        .unwrap();
        let g = build_grid_at(&t, &[0, 3, 9], (1.0, 1.0), 1, 1).unwrap();
        assert_eq!(g.points(), &[(1.0, 1.0), (5.0, 5.0), (5.0, 5.0)]);
    }

    #[test]
    fn constant_map_pools_to_constant() {
        let u = Tensor::filled(vec![2, 3, 8, 6], 0.75);
        let g = build_grid(&tube(&[(1.0, 1.0, 6.0, 4.5), (1.3, 1.2, 5.0, 4.0)]), (1.0, 1.0), 5, 5).unwrap();
        let v = actor_of_interest_pool(&u, &[g]).unwrap();
        for x in v.data() {
            assert!((x - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn integer_points_read_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = Tensor::new(vec![1, 2, 5, 4], (0..40).map(|_| rng.gen()).collect()).unwrap();
        let g = SamplingGrid::new(1, 1, vec![(3.0, 2.0)]).unwrap();
        let v = actor_of_interest_pool(&u, &[g]).unwrap();
        assert_eq!(v.data(), &[u.get(&[0, 0, 3, 2]), u.get(&[0, 1, 3, 2])]);
    }

    #[test]
    fn outside_points_pool_to_zero() {
        let u = Tensor::filled(vec![1, 1, 3, 3], 1.0);
        let g = SamplingGrid::new(1, 2, vec![(-1.0, 1.0), (3.0, 1.0)]).unwrap();
        assert_eq!(actor_of_interest_pool(&u, &[g]).unwrap().data(), &[0.0, 0.0]);
        let edge = SamplingGrid::new(1, 1, vec![(2.5, 1.0)]).unwrap();
        assert_eq!(actor_of_interest_pool(&u, &[edge]).unwrap().data(), &[0.5]);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u = Tensor::new(vec![2, 3, 5, 4], (0..120).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let boxes: Vec<_> = (0..2)
                .map(|_| {
                    let x1 = rng.gen_range(-1.0..4.0);
                    let y1 = rng.gen_range(-1.0..3.0);
                    (x1, y1, x1 + rng.gen_range(0.0..3.0), y1 + rng.gen_range(0.0..3.0))
                })
                .collect();
            let grids = vec![build_grid(&tube(&boxes), (1.0, 1.0), 3, 2).unwrap()];
            let fast = actor_of_interest_pool(&u, &grids).unwrap();
            let slow = brute_force_pool(&u, &grids);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn interior_kernel_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = rng.gen_range(1.0..6.0);
            let y = rng.gen_range(1.0..4.0);
            let s: f64 = taps(x, 8).flat_map(|(_, a)| taps(y, 6).map(move |(_, b)| a * b)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_frames_rejected() {
        let u = Tensor::zeros(vec![3, 1, 4, 4]);
        let g = build_grid(&tube(&[(0.0, 0.0, 2.0, 2.0)]), (1.0, 1.0), 2, 2).unwrap();
        assert!(matches!(actor_of_interest_pool(&u, &[g]), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <pool(U), G> == <U, pool_backward(G)> for a linear map.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = Tensor::new(vec![2, 2, 4, 5], (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let grids = vec![
            build_grid(&tube(&[(0.2, 0.4, 3.1, 4.4), (0.0, 1.0, 2.0, 3.0)]), (1.0, 1.0), 2, 3).unwrap(),
            build_grid(&tube(&[(1.5, 0.5, 3.9, 2.5), (-0.5, 0.1, 1.0, 5.2)]), (1.0, 1.0), 2, 3).unwrap(),
        ];
        let g = Tensor::new(vec![2, 2, 2, 3], (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let v = actor_of_interest_pool(&u, &grids).unwrap();
        let du = pool_backward(u.dims(), &grids, &g).unwrap();
        let lhs: f64 = v.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.data().iter().zip(du.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
