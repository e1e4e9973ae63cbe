//! Uniform-grid discretization: box domains, nodal scalar/vector fields,
//! finite measures, gradients, distribution functions and ball families.
//!
//! All set memberships are nodal: a node belongs to a ball iff its center
//! lies strictly inside, level sets are counted by nodal indicator with
//! weight `h^n`, and every module of the crate uses the same counter.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Cap on nodes per grid; guards accidental huge allocations.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 28;

/// Uniform rectangular grid over a box in dimension 2 or 3.
///
/// Nodes sit at `origin + i * h` per axis, `i = 0..=cells`; spacing is the
/// same on every axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    origin: [f64; 3],
    extent: [f64; 3],
    cells: [usize; 3],
    h: f64,
}

impl Grid {
    pub fn new(n: usize, origin: &[f64], extent: &[f64], cells: &[usize]) -> Result<Self> {
        Self::with_budget(n, origin, extent, cells, DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(
        n: usize,
        origin: &[f64],
        extent: &[f64],
        cells: &[usize],
        budget: usize,
    ) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::GridError(format!("dimension must be 2 or 3, got {n}")));
        }
        if origin.len() < n || extent.len() < n || cells.len() < n {
            return Err(Error::GridError("origin/extent/cells shorter than dimension".into()));
        }
        let mut o = [0.0; 3];
        let mut e = [0.0; 3];
        let mut c = [1usize; 3];
        for d in 0..n {
            if !(extent[d] > 0.0) || cells[d] == 0 {
                return Err(Error::GridError("extent and cells must be positive".into()));
            }
            o[d] = origin[d];
            e[d] = extent[d];
            c[d] = cells[d];
        }
        let h = e[0] / c[0] as f64;
        for d in 1..n {
            let hd = e[d] / c[d] as f64;
            if (hd - h).abs() > 1e-9 * h {
                return Err(Error::GridError(format!(
                    "cell width must be uniform across axes: {h} vs {hd}"
                )));
            }
        }
        let mut nodes = 1usize;
        for d in 0..n {
            nodes = nodes
                .checked_mul(c[d] + 1)
                .ok_or_else(|| Error::GridError("node count overflow".into()))?;
        }
        if nodes > budget {
            return Err(Error::GridError(format!(
                "node count {nodes} exceeds the budget {budget}"
            )));
        }
        Ok(Grid { n, origin: o, extent: e, cells: c, h })
    }

    /// Square/cube grid on `[-half, half]^n`.
    pub fn centered_cube(n: usize, half: f64, cells_per_axis: usize) -> Result<Self> {
        let origin = [-half; 3];
        let extent = [2.0 * half; 3];
        let cells = [cells_per_axis; 3];
        Grid::new(n, &origin[..n], &extent[..n], &cells[..n])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }
    #[inline]
    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.n]
    }
    #[inline]
    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.n]
    }
    #[inline]
    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.n]
    }

    /// Nodes per axis.
    #[inline]
    pub fn npts(&self, d: usize) -> usize {
        self.cells[d] + 1
    }

    pub fn node_count(&self) -> usize {
        (0..self.n).map(|d| self.npts(d)).product()
    }

    /// Nodal quadrature weight `h^n`.
    #[inline]
    pub fn cell_measure(&self) -> f64 {
        let mut m = 1.0;
        for _ in 0..self.n {
            m *= self.h;
        }
        m
    }

    /// Largest box side.
    pub fn diameter(&self) -> f64 {
        let mut s = 0.0;
        for d in 0..self.n {
            s += self.extent[d] * self.extent[d];
        }
        math::sqrt(s)
    }

    pub fn center(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for d in 0..self.n {
            c[d] = self.origin[d] + 0.5 * self.extent[d];
        }
        c
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        match self.n {
            2 => ijk[1] * self.npts(0) + ijk[0],
            _ => (ijk[2] * self.npts(1) + ijk[1]) * self.npts(0) + ijk[0],
        }
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.npts(0);
        match self.n {
            2 => [idx % nx, idx / nx, 0],
            _ => {
                let ny = self.npts(1);
                [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
            }
        }
    }

    #[inline]
    pub fn pos(&self, ijk: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for d in 0..self.n {
            x[d] = self.origin[d] + ijk[d] as f64 * self.h;
        }
        x
    }

    pub fn pos_of(&self, idx: usize) -> [f64; 3] {
        self.pos(self.coords(idx))
    }

    /// Whether a point lies inside the closed box.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        (0..self.n).all(|d| {
            x[d] >= self.origin[d] - 1e-12 * self.h
                && x[d] <= self.origin[d] + self.extent[d] + 1e-12 * self.h
        })
    }

    /// Index of the node nearest to `x`.
    pub fn nearest_node(&self, x: &[f64]) -> [usize; 3] {
        let mut ijk = [0usize; 3];
        for d in 0..self.n {
            let rel = (x[d] - self.origin[d]) / self.h;
            let i = math::round(rel);
            ijk[d] = if i < 0.0 { 0 } else { (i as usize).min(self.cells[d]) };
        }
        ijk
    }

    /// Grid with the same box and doubled resolution.
    pub fn refined(&self) -> Result<Grid> {
        let cells: Vec<usize> = self.cells().iter().map(|&c| c * 2).collect();
        Grid::new(self.n, self.origin(), self.extent(), &cells)
    }

    /// Whether a node index sits on the box boundary.
    pub fn is_boundary(&self, ijk: [usize; 3]) -> bool {
        (0..self.n).any(|d| ijk[d] == 0 || ijk[d] == self.cells[d])
    }

    /// Iterate all node indices (flat order).
    pub fn node_positions(&self) -> NodeIter<'_> {
        NodeIter { grid: self, idx: 0, total: self.node_count() }
    }
}

pub struct NodeIter<'a> {
    grid: &'a Grid,
    idx: usize,
    total: usize,
}

impl<'a> Iterator for NodeIter<'a> {
    type Item = (usize, [f64; 3]);
    fn next(&mut self) -> Option<Self::Item> {
        if self.idx >= self.total {
            return None;
        }
        let i = self.idx;
        self.idx += 1;
        Some((i, self.grid.pos_of(i)))
    }
}

/// Scalar or vector field sampled at grid nodes. Vector components are
/// stored in contiguous blocks.
#[derive(Clone, Debug)]
pub struct GridField {
    grid: Grid,
    ncomp: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        let n = grid.node_count() * ncomp;
        GridField { grid, ncomp, values: vec![0.0; n] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let n = grid.node_count();
        GridField { grid, ncomp: 1, values: vec![value; n] }
    }

    /// Scalar field from a function of position.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        for (_, x) in grid.node_positions() {
            values.push(f(&x[..grid.dim()]));
        }
        GridField { grid, ncomp: 1, values }
    }

    pub fn from_values(grid: Grid, ncomp: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() * ncomp {
            return Err(Error::GridError(format!(
                "value count {} does not match {} nodes x {} components",
                values.len(),
                grid.node_count(),
                ncomp
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::GridError("field contains non-finite values".into()));
        }
        Ok(GridField { grid, ncomp, values })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    #[inline]
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }
    #[inline]
    pub fn is_scalar(&self) -> bool {
        self.ncomp == 1
    }

    #[inline]
    pub fn value(&self, comp: usize, node: usize) -> f64 {
        self.values[comp * self.grid.node_count() + node]
    }

    #[inline]
    pub fn set(&mut self, comp: usize, node: usize, v: f64) {
        let n = self.grid.node_count();
        self.values[comp * n + node] = v;
    }

    /// Component slice.
    pub fn comp(&self, comp: usize) -> &[f64] {
        let n = self.grid.node_count();
        &self.values[comp * n..(comp + 1) * n]
    }

    pub fn comp_mut(&mut self, comp: usize) -> &mut [f64] {
        let n = self.grid.node_count();
        &mut self.values[comp * n..(comp + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pointwise Euclidean magnitude across components.
    pub fn magnitude(&self) -> GridField {
        if self.ncomp == 1 {
            let mut out = self.clone();
            for v in out.values.iter_mut() {
                *v = math::abs(*v);
            }
            return out;
        }
        let n = self.grid.node_count();
        let mut values = vec![0.0; n];
        for c in 0..self.ncomp {
            let block = self.comp(c);
            for (i, item) in values.iter_mut().enumerate() {
                *item += block[i] * block[i];
            }
        }
        for v in values.iter_mut() {
            *v = math::sqrt(*v);
        }
        GridField { grid: self.grid, ncomp: 1, values }
    }

    /// Apply a scalar map to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        let values = self.values.iter().map(|&v| f(v)).collect();
        GridField { grid: self.grid, ncomp: self.ncomp, values }
    }

    pub fn scale(&self, c: f64) -> GridField {
        self.map(|v| c * v)
    }

    /// Multilinear interpolation of a scalar field at a point (clamped to
    /// the box).
    pub fn interp(&self, x: &[f64]) -> f64 {
        debug_assert!(self.is_scalar());
        let grid = &self.grid;
        let n = grid.dim();
        let h = grid.h();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..n {
            let rel = ((x[d] - grid.origin()[d]) / h).clamp(0.0, grid.cells()[d] as f64);
            let i = (rel as usize).min(grid.cells()[d] - 1);
            base[d] = i;
            frac[d] = rel - i as f64;
        }
        let vals = self.comp(0);
        let corners = 1usize << n;
        let mut acc = 0.0;
        for c in 0..corners {
            let mut ijk = base;
            let mut w = 1.0;
            for d in 0..n {
                if c >> d & 1 == 1 {
                    ijk[d] += 1;
                    w *= frac[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            acc += w * vals[grid.index(ijk)];
        }
        acc
    }

    /// Resample a scalar field onto another grid by multilinear
    /// interpolation.
    pub fn resample(&self, grid: &Grid) -> Result<GridField> {
        if !self.is_scalar() {
            return Err(Error::GridError("resampling needs a scalar field".into()));
        }
        if self.grid() == grid {
            return Ok(self.clone());
        }
        if self.grid().dim() != grid.dim() {
            return Err(Error::GridError("resampling cannot change the dimension".into()));
        }
        Ok(GridField::from_fn(*grid, |x| self.interp(x)))
    }

    /// Pointwise difference; grids must match.
    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        if self.grid != other.grid || self.ncomp != other.ncomp {
            return Err(Error::GridError("field shapes do not match".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridField { grid: self.grid, ncomp: self.ncomp, values })
    }
}

/// Euclidean ball; nodal membership is strict (`|x - center| < radius`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Ball {
    pub fn new(center: &[f64], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("ball radius must be > 0, got {radius}")));
        }
        let mut c = [0.0; 3];
        c[..center.len().min(3)].copy_from_slice(&center[..center.len().min(3)]);
        Ok(Ball { center: c, radius })
    }

    /// Ball with the same center and rescaled radius.
    pub fn scaled(&self, factor: f64) -> Ball {
        Ball { center: self.center, radius: self.radius * factor }
    }

    #[inline]
    pub fn contains(&self, n: usize, x: &[f64]) -> bool {
        dist2(n, &self.center, x) < self.radius * self.radius
    }

    /// Whether `inner` is contained in `self` (center distance + radius).
    pub fn contains_ball(&self, n: usize, inner: &Ball) -> bool {
        let d = math::sqrt(dist2(n, &self.center, &inner.center));
        d + inner.radius <= self.radius + 1e-12 * self.radius
    }
}

#[inline]
pub(crate) fn dist2(n: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..n {
        let t = a[d] - b[d];
        s += t * t;
    }
    s
}

/// Nodal evaluation region.
#[derive(Clone, Copy, Debug)]
pub enum Region {
    /// The whole grid box.
    All,
    Ball(Ball),
    /// Closed coordinate box.
    Box { lo: [f64; 3], hi: [f64; 3] },
    /// `r_inner <= |x - center| < r_outer`.
    Annulus { center: [f64; 3], r_inner: f64, r_outer: f64 },
}

impl Region {
    #[inline]
    pub fn contains(&self, n: usize, x: &[f64]) -> bool {
        match self {
            Region::All => true,
            Region::Ball(b) => b.contains(n, x),
            Region::Box { lo, hi } => (0..n).all(|d| x[d] >= lo[d] && x[d] <= hi[d]),
            Region::Annulus { center, r_inner, r_outer } => {
                let d2 = dist2(n, center, x);
                d2 >= r_inner * r_inner && d2 < r_outer * r_outer
            }
        }
    }

    /// Whether a ball is contained in the region (used by bracketed norms).
    pub fn contains_ball(&self, n: usize, grid: &Grid, ball: &Ball) -> bool {
        match self {
            Region::All => (0..n).all(|d| {
                ball.center[d] - ball.radius >= grid.origin()[d] - 1e-12 * grid.h()
                    && ball.center[d] + ball.radius
                        <= grid.origin()[d] + grid.extent()[d] + 1e-12 * grid.h()
            }),
            Region::Ball(outer) => outer.contains_ball(n, ball),
            Region::Box { lo, hi } => (0..n).all(|d| {
                ball.center[d] - ball.radius >= lo[d] && ball.center[d] + ball.radius <= hi[d]
            }),
            Region::Annulus { .. } => false,
        }
    }

    /// A ball covering the region, used to seed radius ladders.
    pub fn bounding_ball(&self, grid: &Grid) -> Ball {
        match self {
            Region::All => {
                let c = grid.center();
                let mut r2 = 0.0;
                for d in 0..grid.dim() {
                    r2 += 0.25 * grid.extent()[d] * grid.extent()[d];
                }
                Ball { center: c, radius: math::sqrt(r2) }
            }
            Region::Ball(b) => *b,
            Region::Box { lo, hi } => {
                let mut c = [0.0; 3];
                let mut r2 = 0.0;
                for d in 0..grid.dim() {
                    c[d] = 0.5 * (lo[d] + hi[d]);
                    let half = 0.5 * (hi[d] - lo[d]);
                    r2 += half * half;
                }
                Ball { center: c, radius: math::sqrt(r2) }
            }
            Region::Annulus { center, r_outer, .. } => {
                // the outer radius may be infinite for level-set regions
                Ball { center: *center, radius: math::fmin(*r_outer, grid.diameter()) }
            }
        }
    }
}

/// Finite signed Borel measure: point atoms plus an optional nodal density.
#[derive(Clone, Debug)]
pub struct MeasureData {
    pub atoms: Vec<([f64; 3], f64)>,
    pub density: Option<GridField>,
    pub total_mass_bound: f64,
}

impl MeasureData {
    pub fn zero() -> Self {
        MeasureData { atoms: Vec::new(), density: None, total_mass_bound: 0.0 }
    }

    pub fn atom(location: &[f64], mass: f64) -> Self {
        let mut loc = [0.0; 3];
        loc[..location.len().min(3)].copy_from_slice(&location[..location.len().min(3)]);
        MeasureData { atoms: vec![(loc, mass)], density: None, total_mass_bound: math::abs(mass) }
    }

    pub fn from_density(density: GridField) -> Self {
        let total = integral(&density.magnitude(), &Region::All);
        MeasureData { atoms: Vec::new(), density: Some(density), total_mass_bound: total }
    }

    /// Total variation over the whole domain: atom masses plus the density
    /// integral, nodally counted.
    pub fn total_variation(&self) -> f64 {
        let mut s: f64 = self.atoms.iter().map(|(_, m)| math::abs(*m)).sum();
        if let Some(d) = &self.density {
            s += integral(&d.magnitude(), &Region::All);
        }
        s
    }

    /// Total variation of the measure on a ball: atoms strictly inside plus
    /// the nodal integral of `|density|`.
    pub fn variation_on_ball(&self, n: usize, ball: &Ball) -> f64 {
        let mut s = 0.0;
        for (loc, mass) in &self.atoms {
            if ball.contains(n, loc) {
                s += math::abs(*mass);
            }
        }
        if let Some(d) = &self.density {
            s += integral(&d.magnitude(), &Region::Ball(*ball));
        }
        s
    }

    /// Whether the measure is given purely by a density.
    pub fn is_density(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// How point atoms are loaded onto the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DiracLoading {
    /// All mass on the nearest node (sharpest desk-scale Dirac).
    #[default]
    NearestNode,
    /// Tent stencil of width 3h: 1D weights (1/4, 1/2, 1/4) per axis.
    Tent,
}

/// Bounded nodal density representing the measure on the grid: atoms become
/// `mass/h^n` loads, densities are passed through. The nodal integral equals
/// the total mass exactly (up to accumulation rounding).
pub fn discretize_measure(mu: &MeasureData, grid: &Grid, loading: DiracLoading) -> Result<GridField> {
    let mut out = match &mu.density {
        Some(d) => {
            if d.grid() == grid {
                d.clone()
            } else {
                // resample onto the solve grid, renormalized so the nodal
                // signed mass is preserved exactly (skipped for nearly
                // cancelling densities where the ratio is ill-conditioned)
                let resampled = d.resample(grid)?;
                let original = integral(d, &Region::All);
                let new_mass = integral(&resampled, &Region::All);
                let variation = integral(&d.magnitude(), &Region::All);
                let ratio = original / new_mass;
                if original.abs() > 1e-6 * variation && (0.5..=2.0).contains(&ratio) {
                    resampled.scale(ratio)
                } else {
                    resampled
                }
            }
        }
        None => GridField::zeros(*grid, 1),
    };
    let inv_cell = 1.0 / grid.cell_measure();
    for (loc, mass) in &mu.atoms {
        if !grid.contains_point(&loc[..grid.dim()]) {
            return Err(Error::AtomOutsideDomain { location: *loc });
        }
        let near = grid.nearest_node(&loc[..grid.dim()]);
        match loading {
            DiracLoading::NearestNode => {
                let idx = grid.index(near);
                let v = out.value(0, idx) + mass * inv_cell;
                out.set(0, idx, v);
            }
            DiracLoading::Tent => {
                let w1 = [0.25, 0.5, 0.25];
                let n = grid.dim();
                let offsets: &[i64] = &[-1, 0, 1];
                let mut stack = vec![(0usize, [0usize; 3], 1.0f64)];
                // depth-first over the 3^n stencil; weights folded onto
                // clamped nodes so mass is conserved at the boundary
                while let Some((d, mut ijk, w)) = stack.pop() {
                    if d == n {
                        let idx = grid.index(ijk);
                        let v = out.value(0, idx) + mass * w * inv_cell;
                        out.set(0, idx, v);
                        continue;
                    }
                    for (k, &off) in offsets.iter().enumerate() {
                        let raw = near[d] as i64 + off;
                        let clamped = raw.clamp(0, grid.cells()[d] as i64) as usize;
                        ijk[d] = clamped;
                        stack.push((d + 1, ijk, w * w1[k]));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient by central differences in the interior and second-order
/// one-sided stencils on the boundary; exact for affine fields.
pub fn gradient(u: &GridField) -> Result<GridField> {
    if !u.is_scalar() {
        return Err(Error::GridError("gradient needs a scalar field".into()));
    }
    let grid = *u.grid();
    let n = grid.dim();
    let h = grid.h();
    let mut out = GridField::zeros(grid, n);
    let vals = u.comp(0);
    let mut stride = [0usize; 3];
    stride[0] = 1;
    stride[1] = grid.npts(0);
    if n == 3 {
        stride[2] = grid.npts(0) * grid.npts(1);
    }
    for d in 0..n {
        let s = stride[d];
        let m = grid.cells()[d];
        let block = out.comp_mut(d);
        for idx in 0..grid.node_count() {
            let i = grid.coords(idx)[d];
            let v = if i == 0 {
                (-3.0 * vals[idx] + 4.0 * vals[idx + s] - vals[idx + 2 * s]) / (2.0 * h)
            } else if i == m {
                (3.0 * vals[idx] - 4.0 * vals[idx - s] + vals[idx - 2 * s]) / (2.0 * h)
            } else {
                (vals[idx + s] - vals[idx - s]) / (2.0 * h)
            };
            block[idx] = v;
        }
    }
    Ok(out)
}

/// `h^n * #\{x in region : |f(x)| > lambda\}` — the nodal distribution
/// function. Nonincreasing in `lambda`.
pub fn distribution_function(f: &GridField, lambda: f64, region: &Region) -> f64 {
    debug_assert!(lambda >= 0.0);
    let grid = f.grid();
    let n = grid.dim();
    let vals = f.comp(0);
    let mut count = 0usize;
    match region {
        Region::All => {
            for &v in vals {
                if math::abs(v) > lambda {
                    count += 1;
                }
            }
        }
        _ => {
            for (idx, x) in grid.node_positions() {
                if region.contains(n, &x[..n]) && math::abs(vals[idx]) > lambda {
                    count += 1;
                }
            }
        }
    }
    count as f64 * grid.cell_measure()
}

/// Nodal measure of a region, `h^n * node count`.
pub fn region_measure(grid: &Grid, region: &Region) -> f64 {
    match region {
        Region::All => grid.node_count() as f64 * grid.cell_measure(),
        _ => {
            let n = grid.dim();
            let count = grid
                .node_positions()
                .filter(|(_, x)| region.contains(n, &x[..n]))
                .count();
            count as f64 * grid.cell_measure()
        }
    }
}

/// Signed nodal integral over a region.
pub fn integral(f: &GridField, region: &Region) -> f64 {
    let grid = f.grid();
    let n = grid.dim();
    let vals = f.comp(0);
    let mut acc = 0.0;
    match region {
        Region::All => {
            for &v in vals {
                acc += v;
            }
        }
        _ => {
            for (idx, x) in grid.node_positions() {
                if region.contains(n, &x[..n]) {
                    acc += vals[idx];
                }
            }
        }
    }
    acc * grid.cell_measure()
}

/// Average of `|f|` over a region (zero for empty regions).
pub fn mean_abs(f: &GridField, region: &Region) -> f64 {
    let grid = f.grid();
    let n = grid.dim();
    let vals = f.comp(0);
    let mut acc = 0.0;
    let mut count = 0usize;
    for (idx, x) in grid.node_positions() {
        if region.contains(n, &x[..n]) {
            acc += math::abs(vals[idx]);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Average of `f` over a region (zero for empty regions).
pub fn mean(f: &GridField, region: &Region) -> f64 {
    let grid = f.grid();
    let n = grid.dim();
    let vals = f.comp(0);
    let mut acc = 0.0;
    let mut count = 0usize;
    for (idx, x) in grid.node_positions() {
        if region.contains(n, &x[..n]) {
            acc += vals[idx];
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Visit every node strictly inside a ball.
pub fn for_ball_nodes(grid: &Grid, ball: &Ball, mut f: impl FnMut(usize, &[f64; 3])) {
    let n = grid.dim();
    let h = grid.h();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for d in 0..n {
        let a = (ball.center[d] - ball.radius - grid.origin()[d]) / h;
        let b = (ball.center[d] + ball.radius - grid.origin()[d]) / h;
        lo[d] = math::fmax(math::ceil(a), 0.0) as usize;
        let top = math::fmin(math::floor(b), grid.cells()[d] as f64);
        if top < lo[d] as f64 {
            return;
        }
        hi[d] = top as usize;
    }
    let r2 = ball.radius * ball.radius;
    let kk = if n == 3 { lo[2]..=hi[2] } else { 0..=0 };
    for k in kk {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let ijk = [i, j, k];
                let x = grid.pos(ijk);
                if dist2(n, &ball.center, &x) < r2 {
                    f(grid.index(ijk), &x);
                }
            }
        }
    }
}

/// Dyadic radius ladder `r_max * 2^-j`, `j = 0..levels`.
pub fn dyadic_ladder(r_max: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|j| r_max * math::pow(0.5, j as f64)).collect()
}

/// Options for [`enumerate_balls`].
#[derive(Clone, Copy, Debug)]
pub struct BallEnumOpts {
    /// Keep only balls contained in the outer ball.
    pub restricted: bool,
    /// Center spacing as a fraction of the ladder radius: spacing is about
    /// `radius / fraction`, clamped to at least one node. `None` puts a
    /// center at every node.
    pub center_spacing_fraction: Option<f64>,
}

impl Default for BallEnumOpts {
    fn default() -> Self {
        BallEnumOpts { restricted: false, center_spacing_fraction: Some(4.0) }
    }
}

/// Result of a ball enumeration: the family plus a flag marking a ladder
/// truncated at the grid resolution.
#[derive(Clone, Debug)]
pub struct BallFamily {
    pub balls: Vec<Ball>,
    pub truncated: bool,
}

/// All balls with centers on grid nodes inside `outer` and radii from the
/// ladder; radii below `h` are dropped with a warning flag.
pub fn enumerate_balls(grid: &Grid, outer: &Ball, radii: &[f64], opts: BallEnumOpts) -> BallFamily {
    let n = grid.dim();
    let h = grid.h();
    let mut balls = Vec::new();
    let mut truncated = false;
    for &r in radii {
        if !(r > 0.0) {
            continue;
        }
        if r < h {
            truncated = true;
            continue;
        }
        let stride = match opts.center_spacing_fraction {
            None => 1usize,
            Some(frac) => math::fmax(math::floor(r / (frac * h)), 1.0) as usize,
        };
        // Scan the bounding box of `outer` on the strided subgrid.
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut empty = false;
        for d in 0..n {
            let a = (outer.center[d] - outer.radius - grid.origin()[d]) / h;
            let b = (outer.center[d] + outer.radius - grid.origin()[d]) / h;
            lo[d] = math::fmax(math::ceil(a), 0.0) as usize;
            let top = math::fmin(math::floor(b), grid.cells()[d] as f64);
            if top < lo[d] as f64 {
                empty = true;
                break;
            }
            hi[d] = top as usize;
        }
        if empty {
            continue;
        }
        let max_center_dist = if opts.restricted { outer.radius - r } else { outer.radius };
        if opts.restricted && max_center_dist < 0.0 {
            continue;
        }
        let kk: Vec<usize> = if n == 3 {
            (lo[2]..=hi[2]).step_by(stride).collect()
        } else {
            vec![0]
        };
        for &k in &kk {
            for j in (lo[1]..=hi[1]).step_by(stride) {
                for i in (lo[0]..=hi[0]).step_by(stride) {
                    let x = grid.pos([i, j, k]);
                    let d = math::sqrt(dist2(n, &outer.center, &x));
                    let ok = if opts.restricted {
                        d <= max_center_dist + 1e-12 * outer.radius
                    } else {
                        d < outer.radius
                    };
                    if ok {
                        balls.push(Ball { center: x, radius: r });
                    }
                }
            }
        }
    }
    BallFamily { balls, truncated }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_construction_checks_uniformity() {
        assert!(Grid::new(2, &[0.0, 0.0], &[1.0, 1.0], &[16, 16]).is_ok());
        assert!(Grid::new(2, &[0.0, 0.0], &[1.0, 2.0], &[16, 16]).is_err());
        assert!(Grid::new(2, &[0.0, 0.0], &[1.0, 2.0], &[16, 32]).is_ok());
        assert!(Grid::with_budget(2, &[0.0, 0.0], &[1.0, 1.0], &[1000, 1000], 100).is_err());
    }

    #[test]
    fn gradient_of_affine_is_exact() {
        for cells in [8usize, 17] {
            let grid = Grid::new(2, &[0.0, 0.0], &[1.0, 1.0], &[cells, cells]).unwrap();
            let u = GridField::from_fn(grid, |x| 3.0 * x[0] + 2.0 * x[1]);
            let du = gradient(&u).unwrap();
            for idx in 0..grid.node_count() {
                assert!((du.value(0, idx) - 3.0).abs() < 1e-12);
                assert!((du.value(1, idx) - 2.0).abs() < 1e-12);
            }
        }
        let grid = Grid::new(3, &[0.0; 3], &[1.0; 3], &[6, 6, 6]).unwrap();
        let u = GridField::constant(grid, 5.0);
        let du = gradient(&u).unwrap();
        assert!(du.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_of_quadratic_is_second_order() {
        let grid = Grid::new(2, &[-1.0, -1.0], &[2.0, 2.0], &[200, 200]).unwrap();
        let u = GridField::from_fn(grid, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let du = gradient(&u).unwrap();
        let mut max_err = 0.0f64;
        for (idx, x) in grid.node_positions() {
            let ijk = grid.coords(idx);
            if grid.is_boundary(ijk) {
                continue;
            }
            max_err = max_err.max((du.value(0, idx) - x[0]).abs());
            max_err = max_err.max((du.value(1, idx) - x[1]).abs());
        }
        // central differences are exact on quadratics up to rounding
        assert!(max_err < 1e-10, "interior error {max_err}");
    }

    #[test]
    fn distribution_function_basics() {
        let grid = Grid::new(2, &[0.0, 0.0], &[1.0, 1.0], &[64, 64]).unwrap();
        let f = GridField::constant(grid, 1.0);
        let full = distribution_function(&f, 0.5, &Region::All);
        assert!((full - 1.0).abs() < 3.0 * grid.h(), "nodal counting has h-boundary slack");
        assert_eq!(distribution_function(&f, 2.0, &Region::All), 0.0);
        // nonincreasing in lambda
        let g = GridField::from_fn(grid, |x| x[0]);
        let mut prev = f64::INFINITY;
        for k in 0..64 {
            let lam = k as f64 / 63.0;
            let v = distribution_function(&g, lam, &Region::All);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn level_set_volume_of_inverse_square() {
        // |x|^{-2} > 100 on a ball of radius 0.1; nodal volume approaches
        // (4 pi / 3) * 1e-3 as the grid refines.
        let exact = 4.0 * core::f64::consts::PI / 3.0 * 1e-3;
        let mut errs = Vec::new();
        for cells in [64usize, 128] {
            let grid = Grid::centered_cube(3, 1.0, cells).unwrap();
            let f = GridField::from_fn(grid, |x| {
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                if r2 == 0.0 {
                    0.0
                } else {
                    1.0 / r2
                }
            });
            let v = distribution_function(&f, 100.0, &Region::All);
            errs.push((v - exact).abs() / exact);
        }
        // refinement h -> h/2 shrinks the error of the nodal counter
        assert!(errs[1] < errs[0], "errors {errs:?}");
        assert!(errs[1] < 0.05, "error at h=1/64 too large: {}", errs[1]);
    }

    #[test]
    fn measure_discretization_conserves_mass() {
        let grid = Grid::new(2, &[-0.5, -0.5], &[1.0, 1.0], &[10, 10]).unwrap();
        let mu = MeasureData::atom(&[0.0, 0.0], 1.0);
        let rho = discretize_measure(&mu, &grid, DiracLoading::NearestNode).unwrap();
        let idx = grid.index(grid.nearest_node(&[0.0, 0.0]));
        assert!((rho.value(0, idx) - 100.0).abs() < 1e-9, "nodal load is mass/h^n");
        assert!((integral(&rho, &Region::All) - 1.0).abs() < 1e-12);

        let tent = discretize_measure(&mu, &grid, DiracLoading::Tent).unwrap();
        assert!((integral(&tent, &Region::All) - 1.0).abs() < 1e-12);
        let sup = tent.values().iter().cloned().fold(0.0f64, f64::max);
        assert!((sup - 0.25 * 100.0).abs() < 1e-9, "tent peak is w_max/h^n, got {sup}");

        let dens = GridField::constant(grid, 1.0);
        let mud = MeasureData::from_density(dens);
        let rho2 = discretize_measure(&mud, &grid, DiracLoading::NearestNode).unwrap();
        assert!(rho2.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let outside = MeasureData::atom(&[2.0, 0.0], 1.0);
        assert!(discretize_measure(&outside, &grid, DiracLoading::NearestNode).is_err());
    }

    #[test]
    fn mixed_measure_mass() {
        let grid = Grid::new(2, &[-0.5, -0.5], &[1.0, 1.0], &[20, 20]).unwrap();
        let dens = GridField::from_fn(grid, |x| x[0] + 0.3);
        let mut mu = MeasureData::from_density(dens);
        mu.atoms.push(([0.1, 0.2, 0.0], -0.5));
        let rho = discretize_measure(&mu, &grid, DiracLoading::NearestNode).unwrap();
        let total = integral(&rho, &Region::All);
        let expect_signed = integral(&GridField::from_fn(grid, |x| x[0] + 0.3), &Region::All) - 0.5;
        assert!((total - expect_signed).abs() < 1e-12);
    }

    #[test]
    fn ball_enumeration_counts() {
        let grid = Grid::new(2, &[0.0, 0.0], &[1.0, 1.0], &[16, 16]).unwrap();
        let outer = Ball::new(&[0.5, 0.5], 0.45).unwrap();
        // single radius, centers on every node inside the outer ball
        let fam = enumerate_balls(
            &grid,
            &outer,
            &[0.2],
            BallEnumOpts { restricted: false, center_spacing_fraction: None },
        );
        let mut count = 0;
        for (_, x) in grid.node_positions() {
            if outer.contains(2, &x[..2]) {
                count += 1;
            }
        }
        assert_eq!(fam.balls.len(), count);
        assert!(!fam.truncated);

        // restricted variant drops ladder entries larger than the outer ball
        let fam2 = enumerate_balls(
            &grid,
            &outer,
            &[1.0, 0.2],
            BallEnumOpts { restricted: true, center_spacing_fraction: None },
        );
        assert!(fam2.balls.iter().all(|b| b.radius < 1.0));
        assert!(fam2.balls.iter().all(|b| outer.contains_ball(2, b)));

        // sub-h radii are truncated with a flag
        let fam3 = enumerate_balls(&grid, &outer, &[grid.h() * 0.5], BallEnumOpts::default());
        assert!(fam3.balls.is_empty());
        assert!(fam3.truncated);
    }

    #[test]
    fn strided_enumeration_matches_brute_force_recount() {
        let grid = Grid::new(2, &[0.0, 0.0], &[1.0, 1.0], &[128, 128]).unwrap();
        let outer = Ball::new(&[0.5, 0.5], 0.4).unwrap();
        let radii = dyadic_ladder(0.4, 6);
        let opts = BallEnumOpts { restricted: true, center_spacing_fraction: Some(4.0) };
        let fam = enumerate_balls(&grid, &outer, &radii, opts);
        let mut expected = 0usize;
        for &r in &radii {
            if r < grid.h() {
                continue;
            }
            let stride = ((r / (4.0 * grid.h())).floor() as usize).max(1);
            let lo = ((0.5 - 0.4) / grid.h()).ceil().max(0.0) as usize;
            let hi = ((0.5 + 0.4) / grid.h()).floor().min(128.0) as usize;
            for j in (lo..=hi).step_by(stride) {
                for i in (lo..=hi).step_by(stride) {
                    let x = grid.pos([i, j, 0]);
                    let d = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
                    if d <= 0.4 - r + 1e-12 * 0.4 {
                        expected += 1;
                    }
                }
            }
        }
        assert_eq!(fam.balls.len(), expected);
    }
}
