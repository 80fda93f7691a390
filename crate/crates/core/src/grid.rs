//! Rectangular grids, rasterized domains and exterior-ball data at boundary nodes.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODE_CAP: usize = 2_000_000;

/// Tensor grid; node index runs with axis 0 fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    count: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

pub fn build_grid(bounds: &[(f64, f64)], resolution: &[usize]) -> Result<Grid> {
    Grid::with_cap(bounds, resolution, DEFAULT_NODE_CAP)
}

impl Grid {
    pub fn with_cap(bounds: &[(f64, f64)], resolution: &[usize], cap: usize) -> Result<Grid> {
        if bounds.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one axis".into()));
        }
        if bounds.len() != resolution.len() {
            return Err(Error::DimensionMismatch { expected: bounds.len(), got: resolution.len() });
        }
        let mut len = 1usize;
        let mut strides = Vec::with_capacity(bounds.len());
        for (axis, (&(lo, hi), &n)) in bounds.iter().zip(resolution).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBounds { axis, lo, hi });
            }
            if n < 3 {
                return Err(Error::GridTooSmall { axis, count: n });
            }
            strides.push(len);
            len = len.saturating_mul(n);
        }
        if len > cap {
            return Err(Error::GridTooLarge { nodes: len, cap });
        }
        Ok(Grid {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
            count: resolution.to_vec(),
            spacing: bounds.iter().zip(resolution).map(|(b, &n)| (b.1 - b.0) / (n - 1) as f64).collect(),
            strides,
            len,
        })
    }

    pub fn dim(&self) -> usize {
        self.count.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count(&self) -> &[usize] {
        &self.count
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (*a, *b)).collect()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Volume `∏ hᵢ` of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_into(&self, mut node: usize, out: &mut [usize]) {
        for (axis, o) in out.iter_mut().enumerate() {
            *o = node % self.count[axis];
            node /= self.count[axis];
        }
    }

    pub fn multi(&self, node: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.multi_into(node, &mut out);
        out
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.count[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.spacing[axis]
        }
    }

    pub fn coord_into(&self, node: usize, out: &mut [f64]) {
        let mut rest = node;
        for (axis, o) in out.iter_mut().enumerate() {
            let i = rest % self.count[axis];
            rest /= self.count[axis];
            *o = self.axis_coord(axis, i);
        }
    }

    pub fn coord(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coord_into(node, &mut out);
        out
    }

    /// Nearest node to `x`, or `None` when `x` lies outside the grid box by
    /// more than half a cell.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut node = 0;
        for axis in 0..self.dim() {
            let t = ((x[axis] - self.lo[axis]) / self.spacing[axis]).round();
            if !(t >= 0.0) || t > (self.count[axis] - 1) as f64 {
                return None;
            }
            node += t as usize * self.strides[axis];
        }
        Some(node)
    }

    /// Neighbor of `node` shifted by `offset` along each axis.
    pub fn offset(&self, node: usize, offset: &[i64]) -> Option<usize> {
        let mut rest = node;
        let mut out = 0usize;
        for axis in 0..self.dim() {
            let i = (rest % self.count[axis]) as i64 + offset[axis];
            rest /= self.count[axis];
            if i < 0 || i >= self.count[axis] as i64 {
                return None;
            }
            out += i as usize * self.strides[axis];
        }
        Some(out)
    }

    pub fn on_face(&self, node: usize) -> bool {
        let mut rest = node;
        for axis in 0..self.dim() {
            let i = rest % self.count[axis];
            rest /= self.count[axis];
            if i == 0 || i + 1 == self.count[axis] {
                return true;
            }
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Interior,
    Boundary,
    Exterior,
}

/// How a mask was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Lens { x0: Vec<f64>, h0: Vec<f64>, eps: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Custom { description: String },
}

impl Shape {
    /// Strict membership in the open set.
    pub fn contains(&self, x: &[f64]) -> Option<bool> {
        match self {
            Shape::Lens { x0, h0, eps } => {
                let (cp, cm, r) = lens_centers(x0, h0, *eps);
                Some(dist(x, &cp) < r && dist(x, &cm) < r)
            }
            Shape::Ball { center, radius } => Some(dist(x, center) < *radius),
            Shape::Box { lo, hi } => Some(x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| a < v && v < b)),
            Shape::Custom { .. } => None,
        }
    }

    /// Membership in the closure, with a relative tolerance of `1e-12`.
    pub fn closure_contains(&self, x: &[f64]) -> Option<bool> {
        const TOL: f64 = 1e-12;
        match self {
            Shape::Lens { x0, h0, eps } => {
                let (cp, cm, r) = lens_centers(x0, h0, *eps);
                Some(dist(x, &cp) <= r * (1.0 + TOL) && dist(x, &cm) <= r * (1.0 + TOL))
            }
            Shape::Ball { center, radius } => Some(dist(x, center) <= radius * (1.0 + TOL)),
            Shape::Box { lo, hi } => Some(
                x.iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (a, b))| *a - TOL * (1.0 + a.abs()) <= *v && *v <= *b + TOL * (1.0 + b.abs())),
            ),
            Shape::Custom { .. } => None,
        }
    }
}

/// Centers `x₀ ± h₀/ε` and common radius `1/ε + ε²` of a lens.
pub fn lens_centers(x0: &[f64], h0: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let plus = x0.iter().zip(h0).map(|(x, h)| x + h / eps).collect();
    let minus = x0.iter().zip(h0).map(|(x, h)| x - h / eps).collect();
    (plus, minus, 1.0 / eps + eps * eps)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

const NO_SLOT: u32 = u32::MAX;

/// Rasterized open set with interior, boundary and exterior nodes.
#[derive(Debug, Clone)]
pub struct DomainMask {
    grid: Grid,
    status: Vec<NodeStatus>,
    shape: Shape,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    slot: Vec<u32>,
    closed: Vec<bool>,
}

impl DomainMask {
    /// Interior nodes are those strictly inside `inside` and off the grid faces;
    /// boundary nodes are the remaining nodes adjacent (axis or diagonal) to one.
    pub fn from_predicate<F>(grid: Grid, shape: Shape, inside: F) -> Result<DomainMask>
    where
        F: Fn(&[f64]) -> bool + Sync,
    {
        let closure = shape.clone();
        Self::from_predicates(grid, shape, inside, move |x| closure.closure_contains(x).unwrap_or(false))
    }

    /// As [`DomainMask::from_predicate`], with an explicit test for membership
    /// of boundary nodes in the closure of the set.
    pub fn from_predicates<F, G>(grid: Grid, shape: Shape, inside: F, closed: G) -> Result<DomainMask>
    where
        F: Fn(&[f64]) -> bool + Sync,
        G: Fn(&[f64]) -> bool,
    {
        let dim = grid.dim();
        let is_interior: Vec<bool> = (0..grid.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; dim],
                |x, node| {
                    if grid.on_face(node) {
                        return false;
                    }
                    grid.coord_into(node, x);
                    inside(x)
                },
            )
            .collect();
        let mut mask = Self::from_interior(grid, shape, is_interior)?;
        let mut x = vec![0.0; dim];
        for k in 0..mask.boundary.len() {
            mask.grid.coord_into(mask.boundary[k], &mut x);
            if closed(&x) {
                mask.closed[mask.boundary[k]] = true;
            }
        }
        Ok(mask)
    }

    pub fn from_interior(grid: Grid, shape: Shape, mut is_interior: Vec<bool>) -> Result<DomainMask> {
        for node in 0..grid.len() {
            if is_interior[node] && grid.on_face(node) {
                is_interior[node] = false;
            }
        }
        let offsets = neighborhood_offsets(grid.dim());
        let mut status = vec![NodeStatus::Exterior; grid.len()];
        for node in 0..grid.len() {
            if is_interior[node] {
                status[node] = NodeStatus::Interior;
                for off in &offsets {
                    if let Some(q) = grid.offset(node, off) {
                        if !is_interior[q] {
                            status[q] = NodeStatus::Boundary;
                        }
                    }
                }
            }
        }
        let interior: Vec<usize> = (0..grid.len()).filter(|&n| status[n] == NodeStatus::Interior).collect();
        if interior.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let boundary: Vec<usize> = (0..grid.len()).filter(|&n| status[n] == NodeStatus::Boundary).collect();
        let mut slot = vec![NO_SLOT; grid.len()];
        for (k, &n) in interior.iter().enumerate() {
            slot[n] = k as u32;
        }
        for (k, &n) in boundary.iter().enumerate() {
            slot[n] = k as u32;
        }
        let closed = status.iter().map(|s| *s == NodeStatus::Interior).collect();
        let mask = DomainMask { grid, status, shape, interior, boundary, slot, closed };
        let components = mask.count_components();
        if components != 1 {
            return Err(Error::DisconnectedDomain { components });
        }
        Ok(mask)
    }

    /// The mask whose interior is this mask's interior and boundary nodes, so
    /// that the closure of `self` lies inside the result.
    pub fn dilated(&self) -> Result<DomainMask> {
        if let Some(&n) = self.boundary.iter().find(|&&n| self.grid.on_face(n)) {
            return Err(Error::InvalidParameter(format!("boundary node {n} lies on the grid face; enlarge the grid to dilate")));
        }
        let is_interior = self.status.iter().map(|s| *s != NodeStatus::Exterior).collect();
        let shape = Shape::Custom { description: format!("one-node dilation of {:?}", self.shape) };
        let mut out = Self::from_interior(self.grid.clone(), shape, is_interior)?;
        out.closed.iter_mut().zip(&out.status).for_each(|(c, s)| *c = *s != NodeStatus::Exterior);
        Ok(out)
    }

    fn count_components(&self) -> usize {
        let dim = self.grid.dim();
        let mut seen = vec![false; self.interior.len()];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.interior.len() {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(self.interior[start]);
            while let Some(node) = queue.pop_front() {
                for axis in 0..dim {
                    for q in [node + self.grid.stride(axis), node - self.grid.stride(axis)] {
                        if let Some(k) = self.interior_pos(q) {
                            if !seen[k] {
                                seen[k] = true;
                                queue.push_back(q);
                            }
                        }
                    }
                }
            }
        }
        components
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn status(&self, node: usize) -> NodeStatus {
        self.status[node]
    }

    /// True for interior nodes and for boundary nodes lying in the closure
    /// of the rasterized set.
    pub fn in_closure(&self, node: usize) -> bool {
        self.closed[node]
    }

    pub fn statuses(&self) -> &[NodeStatus] {
        &self.status
    }

    /// Interior nodes in increasing node order; position in this list is the
    /// row index used by assembled systems.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    pub fn interior_pos(&self, node: usize) -> Option<usize> {
        (self.status[node] == NodeStatus::Interior).then(|| self.slot[node] as usize)
    }

    pub fn boundary_pos(&self, node: usize) -> Option<usize> {
        (self.status[node] == NodeStatus::Boundary).then(|| self.slot[node] as usize)
    }

    /// Graph distance (axis steps) from each interior node to the boundary,
    /// indexed by interior position.
    pub fn boundary_distance(&self) -> Vec<usize> {
        let dim = self.dim();
        let mut d = vec![usize::MAX; self.interior.len()];
        let mut queue = VecDeque::new();
        for &b in &self.boundary {
            for axis in 0..dim {
                let s = self.grid.stride(axis);
                for q in [b.checked_add(s), b.checked_sub(s)].into_iter().flatten() {
                    if q < self.grid.len() {
                        if let Some(k) = self.interior_pos(q) {
                            if d[k] == usize::MAX {
                                d[k] = 1;
                                queue.push_back(q);
                            }
                        }
                    }
                }
            }
        }
        while let Some(node) = queue.pop_front() {
            let here = d[self.slot[node] as usize];
            for axis in 0..dim {
                let s = self.grid.stride(axis);
                for q in [node + s, node - s] {
                    if let Some(k) = self.interior_pos(q) {
                        if d[k] == usize::MAX {
                            d[k] = here + 1;
                            queue.push_back(q);
                        }
                    }
                }
            }
        }
        d
    }

    /// Interior node closest to `x` (ties broken by node index).
    pub fn nearest_interior(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, self.interior[0]);
        let mut c = vec![0.0; self.dim()];
        for &n in &self.interior {
            self.grid.coord_into(n, &mut c);
            let d = dist(&c, x);
            if d < best.0 {
                best = (d, n);
            }
        }
        best.1
    }

    /// Largest Euclidean distance between two interior nodes.
    pub fn interior_diameter(&self) -> f64 {
        let pts: Vec<Vec<f64>> = self.interior.iter().map(|&n| self.grid.coord(n)).collect();
        let mut best = 0.0f64;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.max(dist(&pts[i], &pts[j]));
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index");
        for i in 0..self.dim() {
            out.push_str(&format!(",x{}", i + 1));
        }
        out.push_str(",status\n");
        let mut c = vec![0.0; self.dim()];
        for node in 0..self.grid.len() {
            self.grid.coord_into(node, &mut c);
            out.push_str(&node.to_string());
            for v in &c {
                out.push_str(&format!(",{v}"));
            }
            let s = match self.status[node] {
                NodeStatus::Interior => "interior",
                NodeStatus::Boundary => "boundary",
                NodeStatus::Exterior => "exterior",
            };
            out.push(',');
            out.push_str(s);
            out.push('\n');
        }
        out
    }
}

/// All nonzero offsets in `{-1, 0, 1}^dim`.
pub fn neighborhood_offsets(dim: usize) -> Vec<Vec<i64>> {
    let total = 3usize.pow(dim as u32);
    (0..total)
        .map(|mut k| {
            (0..dim)
                .map(|_| {
                    let v = (k % 3) as i64 - 1;
                    k /= 3;
                    v
                })
                .collect::<Vec<i64>>()
        })
        .filter(|o| o.iter().any(|v| *v != 0))
        .collect()
}

/// Rasterizes `Ω(ε) = B(x₀+h₀/ε, 1/ε+ε²) ∩ B(x₀−h₀/ε, 1/ε+ε²)`.
pub fn lens_domain(x0: &[f64], h0: &[f64], eps: f64, grid: Grid) -> Result<DomainMask> {
    if x0.len() != grid.dim() || h0.len() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: x0.len().min(h0.len()) });
    }
    let norm = h0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("lens direction must be a unit vector, |h0| = {norm}")));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("lens_eps must be positive, got {eps}")));
    }
    let shape = Shape::Lens { x0: x0.to_vec(), h0: h0.to_vec(), eps };
    let (cp, cm, r) = lens_centers(x0, h0, eps);
    DomainMask::from_predicate(grid, shape, move |x| dist(x, &cp) < r && dist(x, &cm) < r)
}

pub fn ball_domain(center: &[f64], radius: f64, grid: Grid) -> Result<DomainMask> {
    if center.len() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: center.len() });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius must be positive, got {radius}")));
    }
    let shape = Shape::Ball { center: center.to_vec(), radius };
    let c = center.to_vec();
    DomainMask::from_predicate(grid, shape, move |x| dist(x, &c) < radius)
}

pub fn box_domain(lo: &[f64], hi: &[f64], grid: Grid) -> Result<DomainMask> {
    if lo.len() != grid.dim() || hi.len() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: lo.len().min(hi.len()) });
    }
    let shape = Shape::Box { lo: lo.to_vec(), hi: hi.to_vec() };
    let (l, h) = (lo.to_vec(), hi.to_vec());
    DomainMask::from_predicate(grid, shape, move |x| x.iter().zip(l.iter().zip(&h)).all(|(v, (a, b))| a < v && v < b))
}

/// Exterior ball `B(y+ν, |ν|)` whose closure meets the nodes of the closed
/// set only at `y`.
#[derive(Debug, Clone, Serialize)]
pub struct ExteriorBall {
    pub node: usize,
    pub y: Vec<f64>,
    pub nu: Vec<f64>,
    /// `min |p − (y+ν)| − |ν|` over closure nodes `p ≠ y`.
    pub certificate: f64,
    /// True when ν came from the analytic shape normal.
    pub analytic: bool,
}

impl ExteriorBall {
    pub fn unit_normal(&self) -> Vec<f64> {
        let n = self.nu.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.nu.iter().map(|v| v / n).collect()
    }
}

fn analytic_normal(shape: &Shape, y: &[f64]) -> Option<Vec<f64>> {
    let raw: Vec<f64> = match shape {
        Shape::Lens { x0, h0, eps } => {
            let (cp, cm, r) = lens_centers(x0, h0, *eps);
            let (dp, dm) = (dist(y, &cp) - r, dist(y, &cm) - r);
            let c = if dp >= dm { cp } else { cm };
            y.iter().zip(&c).map(|(a, b)| a - b).collect()
        }
        Shape::Ball { center, .. } => y.iter().zip(center).map(|(a, b)| a - b).collect(),
        Shape::Box { lo, hi } => y
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(v, (a, b))| if v >= b { 1.0 } else if v <= a { -1.0 } else { 0.0 })
            .collect(),
        Shape::Custom { .. } => return None,
    };
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    (n > 0.0).then(|| raw.iter().map(|v| v / n).collect())
}

/// Evaluates the certificate for the ball `B(y+ν,|ν|)` against the interior
/// nodes and the boundary nodes in the closure, other than `y`.
pub fn ball_certificate(mask: &DomainMask, node: usize, nu: &[f64]) -> f64 {
    let grid = mask.grid();
    let dim = grid.dim();
    let y = grid.coord(node);
    let r = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
    let center: Vec<f64> = y.iter().zip(nu).map(|(a, b)| a + b).collect();
    let reach: Vec<i64> = grid.spacing().iter().map(|h| (2.0 * r / h).ceil() as i64 + 1).collect();
    let base = grid.multi(node);
    let mut best = f64::INFINITY;
    let mut off = vec![0i64; dim];
    let mut idx = reach.iter().map(|r| -r).collect::<Vec<i64>>();
    let mut c = vec![0.0; dim];
    loop {
        let mut ok = true;
        for a in 0..dim {
            let i = base[a] as i64 + idx[a];
            if i < 0 || i >= grid.count()[a] as i64 {
                ok = false;
                break;
            }
            off[a] = idx[a];
        }
        if ok && off.iter().any(|v| *v != 0) {
            let q = grid.offset(node, &off).expect("offset within bounds");
            if mask.in_closure(q) {
                grid.coord_into(q, &mut c);
                best = best.min(dist(&c, &center) - r);
            }
        }
        let mut a = 0;
        loop {
            if a == dim {
                return best;
            }
            idx[a] += 1;
            if idx[a] > reach[a] {
                idx[a] = -reach[a];
                a += 1;
            } else {
                break;
            }
        }
    }
}

/// Finds an exterior ball at boundary node `node`: the analytic outward normal
/// first, then lattice directions, at radii `4h`, `2h`, `h`.
pub fn exterior_ball(mask: &DomainMask, node: usize) -> Result<ExteriorBall> {
    if mask.status(node) != NodeStatus::Boundary {
        return Err(Error::PreconditionViolated(format!("node {node} is not a boundary node")));
    }
    let grid = mask.grid();
    let y = grid.coord(node);
    let h = grid.max_spacing();
    let mut directions: Vec<(Vec<f64>, bool)> = Vec::new();
    if let Some(n) = analytic_normal(mask.shape(), &y) {
        directions.push((n, true));
    }
    for off in neighborhood_offsets(grid.dim()) {
        let n = (off.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt();
        directions.push((off.iter().map(|v| *v as f64 / n).collect(), false));
    }
    if grid.dim() == 2 {
        for k in 0..32 {
            let t = std::f64::consts::PI * k as f64 / 16.0;
            directions.push((vec![t.cos(), t.sin()], false));
        }
    }
    for scale in [4.0, 2.0, 1.0] {
        for (dir, analytic) in &directions {
            let nu: Vec<f64> = dir.iter().map(|v| v * scale * h).collect();
            let cert = ball_certificate(mask, node, &nu);
            if cert > 1e-12 * scale * h {
                return Ok(ExteriorBall { node, y: y.clone(), nu, certificate: cert, analytic: *analytic });
            }
        }
    }
    Err(Error::NoExteriorBall { node })
}

/// A 2-D slice through the grid along axes `(a, b)`, other axes fixed at `fixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub axes: (usize, usize),
    pub fixed: Vec<usize>,
}

impl Slice {
    /// Slice along the first two axes through the middle of the others.
    pub fn middle(grid: &Grid) -> Slice {
        Slice { axes: (0, 1.min(grid.dim() - 1)), fixed: grid.count().iter().map(|n| n / 2).collect() }
    }

    /// Node indices row by row (top row = largest second-axis coordinate).
    pub fn nodes(&self, grid: &Grid) -> (usize, usize, Vec<usize>) {
        let (a, b) = self.axes;
        let w = grid.count()[a];
        let h = if grid.dim() == 1 { 1 } else { grid.count()[b] };
        let mut out = Vec::with_capacity(w * h);
        let mut multi = self.fixed.clone();
        for row in (0..h).rev() {
            for col in 0..w {
                multi[a] = col;
                if grid.dim() > 1 {
                    multi[b] = row;
                }
                out.push(grid.index(&multi));
            }
        }
        (w, h, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Grid {
        build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[n, n]).unwrap()
    }

    #[test]
    fn grid_arithmetic() {
        let g = build_grid(&[(0.0, 1.0)], &[5]).unwrap();
        assert_eq!(g.spacing(), &[0.25]);
        let xs: Vec<f64> = (0..5).map(|i| g.coord(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(square(33).len(), 1089);
        assert!(matches!(build_grid(&[(0.0, 1.0)], &[2]), Err(Error::GridTooSmall { .. })));
        assert!(matches!(build_grid(&[(1.0, 0.0)], &[4]), Err(Error::InvalidBounds { .. })));
        assert!(matches!(
            Grid::with_cap(&[(0.0, 1.0), (0.0, 1.0)], &[100, 100], 5000),
            Err(Error::GridTooLarge { nodes: 10000, cap: 5000 })
        ));
    }

    #[test]
    fn index_maps_are_inverse() {
        let g = build_grid(&[(0.0, 1.0), (-2.0, 2.0), (0.0, 3.0)], &[4, 5, 6]).unwrap();
        for n in 0..g.len() {
            assert_eq!(g.index(&g.multi(n)), n);
            assert_eq!(g.locate(&g.coord(n)), Some(n));
        }
    }

    #[test]
    fn lens_membership() {
        let grid = build_grid(&[(-2.0, 2.0), (-2.0, 2.0)], &[33, 33]).unwrap();
        let m = lens_domain(&[0.0, 0.0], &[1.0, 0.0], 1.0, grid).unwrap();
        let center = m.grid().locate(&[0.0, 0.0]).unwrap();
        assert_eq!(m.status(center), NodeStatus::Interior);
        // 1.5 ε² along the axis lies outside the lens
        let shape = m.shape().clone();
        assert_eq!(shape.contains(&[1.5, 0.0]), Some(false));
        assert_eq!(shape.contains(&[0.99, 0.0]), Some(true));
        let far = m.grid().locate(&[1.5, 0.0]).unwrap();
        assert_eq!(m.status(far), NodeStatus::Exterior);
    }

    #[test]
    fn lens_shrinks_with_eps() {
        let mut prev = f64::INFINITY;
        for eps in [1.0, 0.5, 0.25] {
            let grid = build_grid(&[(-0.6, 0.6), (-1.8, 1.8)], &[49, 145]).unwrap();
            let m = lens_domain(&[0.0, 0.0], &[1.0, 0.0], eps, grid);
            let d = match m {
                Ok(m) => m.interior_diameter(),
                Err(Error::EmptyDomain) => 0.0,
                Err(e) => panic!("{e}"),
            };
            assert!(d < prev, "eps {eps}: {d} vs {prev}");
            prev = d;
        }
    }

    #[test]
    fn boundary_classification() {
        let m = ball_domain(&[0.0, 0.0], 0.7, square(17)).unwrap();
        let offsets = neighborhood_offsets(2);
        for node in 0..m.grid().len() {
            let touches = offsets.iter().any(|o| {
                m.grid().offset(node, o).map(|q| m.status(q) == NodeStatus::Interior).unwrap_or(false)
            });
            match m.status(node) {
                NodeStatus::Interior => {
                    for axis in 0..2 {
                        for s in [-1i64, 1] {
                            let mut o = vec![0; 2];
                            o[axis] = s;
                            let q = m.grid().offset(node, &o).unwrap();
                            assert_ne!(m.status(q), NodeStatus::Exterior);
                        }
                    }
                }
                NodeStatus::Boundary => assert!(touches),
                NodeStatus::Exterior => assert!(!touches),
            }
        }
    }

    #[test]
    fn disconnected_and_empty() {
        let g = square(21);
        let two = DomainMask::from_predicate(g.clone(), Shape::Custom { description: "two blobs".into() }, |x| {
            ((x[0] + 0.5).powi(2) + x[1] * x[1]) < 0.09 || ((x[0] - 0.5).powi(2) + x[1] * x[1]) < 0.09
        });
        assert!(matches!(two, Err(Error::DisconnectedDomain { components: 2 })));
        assert!(matches!(ball_domain(&[5.0, 5.0], 0.1, g), Err(Error::EmptyDomain)));
    }

    #[test]
    fn exterior_balls_on_ball_and_lens() {
        let m = ball_domain(&[0.0, 0.0], 0.8, square(33)).unwrap();
        let mut analytic = 0;
        for &b in m.boundary() {
            let eb = exterior_ball(&m, b).unwrap();
            assert!(eb.certificate > 0.0);
            analytic += eb.analytic as usize;
        }
        assert!(analytic > 0);

        let m = lens_domain(&[0.0, 0.0], &[1.0, 0.0], 1.0, square(33)).unwrap();
        let y = m
            .boundary()
            .iter()
            .copied()
            .find(|&b| {
                let c = m.grid().coord(b);
                c[1] == 0.0 && c[0] > 0.0
            })
            .unwrap();
        let eb = exterior_ball(&m, y).unwrap();
        assert!(eb.analytic);
        // right sphere is centred at x₀ − h₀/ε = (−1, 0)
        let n = eb.unit_normal();
        assert!((n[0] - 1.0).abs() < 1e-12 && n[1].abs() < 1e-12);
    }

    #[test]
    fn reentrant_corner_has_no_exterior_ball() {
        let m = DomainMask::from_predicates(
            square(9),
            Shape::Custom { description: "L".into() },
            |x| !(x[0] >= 0.0 && x[1] >= 0.0),
            |x| !(x[0] > 0.0 && x[1] > 0.0),
        )
        .unwrap();
        let corner = m.grid().locate(&[0.0, 0.0]).unwrap();
        assert_eq!(m.status(corner), NodeStatus::Boundary);
        assert!(matches!(exterior_ball(&m, corner), Err(Error::NoExteriorBall { .. })));
        let interior = m.interior()[0];
        assert!(matches!(exterior_ball(&m, interior), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn boundary_distance_layers() {
        let m = box_domain(&[-1.0, -1.0], &[1.0, 1.0], square(9)).unwrap();
        let d = m.boundary_distance();
        let center = m.interior_pos(m.grid().locate(&[0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(d[center], 4);
        assert_eq!(*d.iter().min().unwrap(), 1);
    }

    #[test]
    fn slice_rows() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], &[3, 4, 5]).unwrap();
        let s = Slice::middle(&g);
        let (w, h, nodes) = s.nodes(&g);
        assert_eq!((w, h, nodes.len()), (3, 4, 12));
        assert_eq!(g.multi(nodes[0]), vec![0, 3, 2]);
    }
}
