//! Task-normalized coordinates. With `σ = k_c·D` centred on the midpoint,
//! the initialization noise is `N(0, I)` and the endpoints sit 3 units from
//! the origin when `k_c = 1/6`. No rotation is applied so vertical
//! direction survives normalization.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{midpoint, Point, TaskSpec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskFrame {
    pub center: Point,
    pub scale: f64,
}

impl TaskFrame {
    pub fn new(task: &TaskSpec, k_c: f64) -> Result<Self> {
        let scale = k_c * task.distance();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Degenerate("task frame scale"));
        }
        Ok(Self { center: midpoint(task), scale })
    }

    pub fn to_z(&self, p: Point) -> Point {
        (p - self.center) * (1.0 / self.scale)
    }

    pub fn from_z(&self, z: Point) -> Point {
        self.center + z * self.scale
    }

    pub fn nodes_to_z(&self, nodes: &[Point]) -> Vec<Point> {
        nodes.iter().map(|&p| self.to_z(p)).collect()
    }

    /// Back to screen units, pinning endpoints exactly and padding masks.
    pub fn to_trajectory(&self, task: &TaskSpec, z: &[Point]) -> Result<Trajectory> {
        let mut nodes: Vec<Point> = z.iter().map(|&q| self.from_z(q)).collect();
        let last = nodes.len() - 1;
        nodes[0] = task.start();
        nodes[last] = task.end();
        Trajectory::new(nodes, task.n_max())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::DEFAULT_KC;

    #[test]
    fn endpoints_at_three_units() {
        let t = TaskSpec::new(Point::new(100., 50.), Point::new(400., 450.), 5, 0.5, 8).unwrap();
        let f = TaskFrame::new(&t, DEFAULT_KC).unwrap();
        assert!((f.to_z(t.start()).norm() - 3.0).abs() < 1e-12);
        assert!((f.to_z(t.end()).norm() - 3.0).abs() < 1e-12);
        let p = Point::new(123.4, -56.7);
        let back = f.from_z(f.to_z(p));
        assert!((back.x - p.x).abs() < 1e-9 && (back.y - p.y).abs() < 1e-9);
    }
}
