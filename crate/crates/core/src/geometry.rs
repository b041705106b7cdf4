//! Rectangular cell-centered grids with tagged boundary faces.
//!
//! A grid is an interval (1D) or an axis-aligned rectangle (2D) split into
//! uniform cells. Every boundary face carries exactly one [`BoundaryKind`].
//! 1D grids are stored as `nx x 1` grids with unit transverse extent so that
//! face areas and cell volumes share one code path.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
            Side::Bottom => 2,
            Side::Top => 3,
        }
    }

    /// Axis the side is normal to.
    pub fn axis(self) -> usize {
        self.index() / 2
    }

    pub fn is_high(self) -> bool {
        self.index() % 2 == 1
    }

    /// Sign of the outward normal along [`Side::axis`].
    pub fn outward_sign(self) -> f64 {
        if self.is_high() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn sides(dim: usize) -> &'static [Side] {
        &Self::ALL[..2 * dim]
    }
}

/// Which part of the boundary a distance is measured to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundarySelector {
    FullBoundary,
    DirichletOnly,
    NeumannOnly,
}

/// Per-face boundary tags, one vector per side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTags {
    sides: Vec<Vec<BoundaryKind>>,
}

impl BoundaryTags {
    /// Uniform tag per side. `kinds` lists `[left, right]` in 1D and
    /// `[left, right, bottom, top]` in 2D.
    pub fn uniform(cells: [usize; 2], dim: usize, kinds: &[BoundaryKind]) -> Result<Self> {
        if kinds.len() != 2 * dim {
            return Err(Error::InvalidGeometry(format!(
                "expected {} side tags for a {dim}D grid, got {}",
                2 * dim,
                kinds.len()
            )));
        }
        let sides = Side::sides(dim)
            .iter()
            .zip(kinds)
            .map(|(s, k)| vec![*k; faces_on_side(cells, *s)])
            .collect();
        Ok(Self { sides })
    }

    pub fn side(&self, side: Side) -> &[BoundaryKind] {
        &self.sides[side.index()]
    }

    pub fn set(&mut self, side: Side, segment: usize, kind: BoundaryKind) -> Result<()> {
        let faces = self
            .sides
            .get_mut(side.index())
            .ok_or_else(|| Error::InvalidGeometry(format!("side {side:?} not present")))?;
        let slot = faces.get_mut(segment).ok_or_else(|| {
            Error::InvalidGeometry(format!("segment {segment} out of range on {side:?}"))
        })?;
        *slot = kind;
        Ok(())
    }

    pub fn count(&self, kind: BoundaryKind) -> usize {
        self.sides.iter().flatten().filter(|k| **k == kind).count()
    }
}

fn faces_on_side(cells: [usize; 2], side: Side) -> usize {
    if side.axis() == 0 {
        cells[1]
    } else {
        cells[0]
    }
}

/// One face of the grid. Normal values on faces are oriented along `+axis`.
#[derive(Clone, Debug)]
pub struct Face<T> {
    pub axis: usize,
    pub center: [T; 2],
    pub area: T,
    /// Cell on the low-coordinate side.
    pub low: Option<usize>,
    /// Cell on the high-coordinate side.
    pub high: Option<usize>,
    /// Side and segment index for boundary faces.
    pub boundary: Option<(Side, usize)>,
    /// Center-to-center (interior) or center-to-face (boundary) distance.
    pub normal_distance: T,
}

impl<T: Real> Face<T> {
    pub fn is_boundary(&self) -> bool {
        self.boundary.is_some()
    }

    /// The only cell adjacent to a boundary face, and the outward sign.
    pub fn boundary_cell(&self) -> Option<(usize, T)> {
        match (self.low, self.high) {
            (Some(c), None) => Some((c, T::one())),
            (None, Some(c)) => Some((c, -T::one())),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StructuredGrid<T> {
    dim: usize,
    extents: [T; 2],
    cells: [usize; 2],
    spacing: [T; 2],
    tags: BoundaryTags,
    faces: Vec<Face<T>>,
    cell_faces: Vec<Vec<usize>>,
}

impl<T: Real> StructuredGrid<T> {
    pub fn new(dim: usize, extents: [T; 2], cells: [usize; 2], tags: BoundaryTags) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGeometry(format!("dimension must be 1 or 2, got {dim}")));
        }
        let (extents, cells) = if dim == 1 {
            ([extents[0], T::one()], [cells[0], 1])
        } else {
            (extents, cells)
        };
        for a in 0..dim {
            if cells[a] < 2 {
                return Err(Error::InvalidGeometry(format!(
                    "axis {a} needs at least 2 cells, got {}",
                    cells[a]
                )));
            }
            if !(extents[a] > T::zero()) || !extents[a].is_finite() {
                return Err(Error::InvalidGeometry(format!("axis {a} extent must be positive")));
            }
        }
        if tags.sides.len() != 2 * dim {
            return Err(Error::InvalidGeometry("boundary tags do not match dimension".into()));
        }
        for s in Side::sides(dim) {
            if tags.side(*s).len() != faces_on_side(cells, *s) {
                return Err(Error::InvalidGeometry(format!(
                    "side {s:?} has {} tags, expected {}",
                    tags.side(*s).len(),
                    faces_on_side(cells, *s)
                )));
            }
        }
        if tags.count(BoundaryKind::Dirichlet) == 0 {
            return Err(Error::InvalidGeometry(
                "at least one boundary face must be Dirichlet".into(),
            ));
        }
        let spacing = [
            extents[0] / T::from_usize(cells[0]).unwrap(),
            extents[1] / T::from_usize(cells[1]).unwrap(),
        ];
        let mut grid = Self {
            dim,
            extents,
            cells,
            spacing,
            tags,
            faces: Vec::new(),
            cell_faces: Vec::new(),
        };
        grid.build_faces();
        Ok(grid)
    }

    /// Interval `[0, length]` with `n` cells.
    pub fn interval(length: T, n: usize, left: BoundaryKind, right: BoundaryKind) -> Result<Self> {
        let cells = [n, 1];
        let tags = BoundaryTags::uniform(cells, 1, &[left, right])?;
        Self::new(1, [length, T::one()], cells, tags)
    }

    /// Rectangle `[0, lx] x [0, ly]` with a uniform tag per side
    /// (`[left, right, bottom, top]`).
    pub fn rectangle(extents: [T; 2], cells: [usize; 2], kinds: [BoundaryKind; 4]) -> Result<Self> {
        let tags = BoundaryTags::uniform(cells, 2, &kinds)?;
        Self::new(2, extents, cells, tags)
    }

    fn build_faces(&mut self) {
        let [nx, ny] = self.cells;
        let [hx, hy] = self.spacing;
        let half = T::lit(0.5);
        let mut faces = Vec::new();
        let mut cell_faces = vec![Vec::with_capacity(2 * self.dim); nx * ny];
        let area_x = if self.dim == 1 { T::one() } else { hy };
        for j in 0..ny {
            for k in 0..=nx {
                let low = (k > 0).then(|| self.cell_index(k - 1, j));
                let high = (k < nx).then(|| self.cell_index(k, j));
                let boundary = if k == 0 {
                    Some((Side::Left, j))
                } else if k == nx {
                    Some((Side::Right, j))
                } else {
                    None
                };
                let y = if self.dim == 1 {
                    T::zero()
                } else {
                    (T::from_usize(j).unwrap() + half) * hy
                };
                let nd = if boundary.is_some() { hx * half } else { hx };
                let id = faces.len();
                faces.push(Face {
                    axis: 0,
                    center: [T::from_usize(k).unwrap() * hx, y],
                    area: area_x,
                    low,
                    high,
                    boundary,
                    normal_distance: nd,
                });
                for c in [low, high].into_iter().flatten() {
                    cell_faces[c].push(id);
                }
            }
        }
        if self.dim == 2 {
            for l in 0..=ny {
                for i in 0..nx {
                    let low = (l > 0).then(|| self.cell_index(i, l - 1));
                    let high = (l < ny).then(|| self.cell_index(i, l));
                    let boundary = if l == 0 {
                        Some((Side::Bottom, i))
                    } else if l == ny {
                        Some((Side::Top, i))
                    } else {
                        None
                    };
                    let nd = if boundary.is_some() { hy * half } else { hy };
                    let id = faces.len();
                    faces.push(Face {
                        axis: 1,
                        center: [(T::from_usize(i).unwrap() + half) * hx, T::from_usize(l).unwrap() * hy],
                        area: hx,
                        low,
                        high,
                        boundary,
                        normal_distance: nd,
                    });
                    for c in [low, high].into_iter().flatten() {
                        cell_faces[c].push(id);
                    }
                }
            }
        }
        self.faces = faces;
        self.cell_faces = cell_faces;
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> [T; 2] {
        self.extents
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn spacing(&self) -> [T; 2] {
        self.spacing
    }

    /// Largest cell width, the `h` of convergence statements.
    pub fn h(&self) -> T {
        if self.dim == 1 {
            self.spacing[0]
        } else {
            self.spacing[0].max(self.spacing[1])
        }
    }

    pub fn tags(&self) -> &BoundaryTags {
        &self.tags
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &[Face<T>] {
        &self.faces
    }

    pub fn face(&self, id: usize) -> &Face<T> {
        &self.faces[id]
    }

    /// Face ids touching a cell.
    pub fn faces_of_cell(&self, c: usize) -> &[usize] {
        &self.cell_faces[c]
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i + self.cells[0] * j
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.cells[0], c / self.cells[0])
    }

    pub fn cell_volume(&self) -> T {
        if self.dim == 1 {
            self.spacing[0]
        } else {
            self.spacing[0] * self.spacing[1]
        }
    }

    pub fn measure(&self) -> T {
        self.cell_volume() * T::from_usize(self.n_cells()).unwrap()
    }

    pub fn cell_center(&self, c: usize) -> [T; 2] {
        let (i, j) = self.cell_ij(c);
        let half = T::lit(0.5);
        let x = (T::from_usize(i).unwrap() + half) * self.spacing[0];
        let y = if self.dim == 1 {
            T::zero()
        } else {
            (T::from_usize(j).unwrap() + half) * self.spacing[1]
        };
        [x, y]
    }

    /// Boundary tag of a boundary face, `None` for interior faces.
    pub fn boundary_kind(&self, face: usize) -> Option<BoundaryKind> {
        self.faces[face]
            .boundary
            .map(|(side, seg)| self.tags.side(side)[seg])
    }

    /// Euclidean distance between two points, ignoring `y` in 1D.
    pub fn point_distance(&self, a: [T; 2], b: [T; 2]) -> T {
        let dx = a[0] - b[0];
        if self.dim == 1 {
            dx.abs()
        } else {
            (dx * dx + (a[1] - b[1]) * (a[1] - b[1])).sqrt()
        }
    }

    /// Same cell layout with different boundary tags.
    pub fn with_tags(&self, tags: BoundaryTags) -> Result<Self> {
        Self::new(self.dim, self.extents, self.cells, tags)
    }

    /// Same domain with every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let cells = [
            self.cells[0] * factor,
            if self.dim == 1 { 1 } else { self.cells[1] * factor },
        ];
        let mut sides = Vec::new();
        for s in Side::sides(self.dim) {
            let coarse = self.tags.side(*s);
            let n = faces_on_side(cells, *s);
            sides.push((0..n).map(|k| coarse[k / factor]).collect());
        }
        Self::new(self.dim, self.extents, cells, BoundaryTags { sides })
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.cells == other.cells
            && self.extents == other.extents
            && self.tags == other.tags
    }

    /// Boundary pieces of the selected kind, merged into maximal runs.
    pub fn boundary_segments(&self, selector: BoundarySelector) -> Vec<BoundarySegment<T>> {
        let mut out = Vec::new();
        for side in Side::sides(self.dim) {
            let tags = self.tags.side(*side);
            let axis = side.axis();
            let other = 1 - axis;
            let coord = if side.is_high() { self.extents[axis] } else { T::zero() };
            let step = self.spacing[other];
            let mut start: Option<usize> = None;
            for k in 0..=tags.len() {
                let keep = k < tags.len()
                    && match selector {
                        BoundarySelector::FullBoundary => true,
                        BoundarySelector::DirichletOnly => tags[k] == BoundaryKind::Dirichlet,
                        BoundarySelector::NeumannOnly => tags[k] == BoundaryKind::Neumann,
                    };
                match (keep, start) {
                    (true, None) => start = Some(k),
                    (false, Some(s)) => {
                        out.push(BoundarySegment {
                            side: *side,
                            coord,
                            lo: T::from_usize(s).unwrap() * step,
                            hi: T::from_usize(k).unwrap() * step,
                        });
                        start = None;
                    }
                    _ => {}
                }
            }
        }
        out
    }

    /// Distance from a point to a boundary subset together with the nearest
    /// boundary point. `None` when the subset is empty.
    pub fn nearest_boundary_point(
        &self,
        point: [T; 2],
        segments: &[BoundarySegment<T>],
    ) -> Option<(T, [T; 2], Side)> {
        let mut best: Option<(T, [T; 2], Side)> = None;
        for seg in segments {
            let q = seg.nearest(point, self.dim);
            let d = self.point_distance(point, q);
            if best.map_or(true, |(bd, _, _)| d < bd) {
                best = Some((d, q, seg.side));
            }
        }
        best
    }

    /// Distance from an arbitrary point to the selected boundary subset.
    pub fn distance_at(&self, point: [T; 2], selector: BoundarySelector) -> Option<T> {
        if selector == BoundarySelector::FullBoundary {
            let mut d = point[0].min(self.extents[0] - point[0]);
            if self.dim == 2 {
                d = d.min(point[1]).min(self.extents[1] - point[1]);
            }
            return Some(d.max(T::zero()));
        }
        let segs = self.boundary_segments(selector);
        self.nearest_boundary_point(point, &segs).map(|(d, _, _)| d)
    }
}

/// Straight piece of the boundary lying on one side.
#[derive(Clone, Copy, Debug)]
pub struct BoundarySegment<T> {
    pub side: Side,
    /// Coordinate of the side along its normal axis.
    pub coord: T,
    /// Extent along the tangential axis (ignored in 1D).
    pub lo: T,
    pub hi: T,
}

impl<T: Real> BoundarySegment<T> {
    fn nearest(&self, p: [T; 2], dim: usize) -> [T; 2] {
        let axis = self.side.axis();
        let mut q = p;
        q[axis] = self.coord;
        if dim == 2 {
            let other = 1 - axis;
            q[other] = p[other].clamp_to(self.lo, self.hi);
        }
        q
    }
}

/// One real value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &StructuredGrid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &StructuredGrid<T>, value: T) -> Self {
        Self {
            values: vec![value; grid.n_cells()],
        }
    }

    pub fn from_vec(grid: &StructuredGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(c) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at cell {c}")));
        }
        Ok(Self { values })
    }

    pub fn from_fn(grid: &StructuredGrid<T>, mut f: impl FnMut(usize, [T; 2]) -> T) -> Self {
        Self {
            values: (0..grid.n_cells()).map(|c| f(c, grid.cell_center(c))).collect(),
        }
    }

    /// Builds from raw values without validation; used for solver output.
    pub(crate) fn from_raw(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// `sum |v| * volume`.
    pub fn l1_norm(&self, grid: &StructuredGrid<T>) -> T {
        self.values.iter().map(|v| v.abs()).sum::<T>() * grid.cell_volume()
    }

    /// `sum v * volume`.
    pub fn integral(&self, grid: &StructuredGrid<T>) -> T {
        self.values.iter().copied().sum::<T>() * grid.cell_volume()
    }

    pub fn l1_distance(&self, other: &Self, grid: &StructuredGrid<T>) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .sum::<T>()
            * grid.cell_volume()
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Cell averages onto a grid coarser by an integer `factor` per axis.
    pub fn restrict(&self, fine: &StructuredGrid<T>, factor: usize) -> Self {
        let [nx, ny] = fine.cells();
        let cx = nx / factor;
        let fy = if fine.dimension() == 1 { 1 } else { factor };
        let cy = ny / fy;
        let mut out = vec![T::zero(); cx * cy];
        let w = T::one() / T::from_usize(factor * fy).unwrap();
        for (c, v) in self.values.iter().enumerate() {
            let (i, j) = fine.cell_ij(c);
            out[i / factor + cx * (j / fy)] += *v * w;
        }
        Self { values: out }
    }

    /// CSV with one row per cell: indices, center coordinates, value.
    pub fn write_csv<W: Write>(&self, grid: &StructuredGrid<T>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if grid.dimension() == 1 {
            w.write_record(["i", "x", "value"])?;
        } else {
            w.write_record(["i", "j", "x", "y", "value"])?;
        }
        for (c, v) in self.values.iter().enumerate() {
            let (i, j) = grid.cell_ij(c);
            let [x, y] = grid.cell_center(c);
            if grid.dimension() == 1 {
                w.write_record([i.to_string(), x.to_string(), v.to_string()])?;
            } else {
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    x.to_string(),
                    y.to_string(),
                    v.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-cell Euclidean distance to the selected boundary subset.
pub fn distance_to_boundary<T: Real>(
    grid: &StructuredGrid<T>,
    selector: BoundarySelector,
) -> Result<ScalarField<T>> {
    match selector {
        BoundarySelector::FullBoundary => Ok(ScalarField::from_fn(grid, |_, x| {
            grid.distance_at(x, selector).unwrap_or_else(T::zero)
        })),
        _ => {
            let segs = grid.boundary_segments(selector);
            if segs.is_empty() {
                return Err(Error::InvalidGeometry(format!(
                    "no boundary faces match {selector:?}"
                )));
            }
            Ok(ScalarField::from_fn(grid, |_, x| {
                grid.nearest_boundary_point(x, &segs).map(|(d, _, _)| d).unwrap()
            }))
        }
    }
}

/// The boundary cutoff `min(h, d(x, boundary)) / h` sampled at cell centers.
pub fn cutoff_xi_h<T: Real>(grid: &StructuredGrid<T>, h: T) -> Result<ScalarField<T>> {
    if !(h > T::zero()) {
        return Err(Error::InvalidParameter(format!("cutoff width must be positive, got {h}")));
    }
    let d = distance_to_boundary(grid, BoundarySelector::FullBoundary)?;
    Ok(d.map(|dist| cutoff_value(dist, h)))
}

#[inline]
pub fn cutoff_value<T: Real>(dist: T, h: T) -> T {
    dist.min(h) / h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use BoundaryKind::{Dirichlet as D, Neumann as N};

    #[test]
    fn distance_examples() {
        let g = StructuredGrid::<f64>::interval(1.0, 10, D, D).unwrap();
        let d = distance_to_boundary(&g, BoundarySelector::FullBoundary).unwrap();
        // centers at 0.05, 0.15, ...: the second cell from the left sits at 0.15
        assert_abs_diff_eq!(d.values()[0], 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(g.distance_at([0.5, 0.0], BoundarySelector::FullBoundary).unwrap(), 0.5);
        assert_abs_diff_eq!(g.distance_at([0.1, 0.0], BoundarySelector::FullBoundary).unwrap(), 0.1);

        let sq = StructuredGrid::<f64>::rectangle([1.0, 1.0], [10, 10], [D, D, D, D]).unwrap();
        assert_abs_diff_eq!(
            sq.distance_at([0.3, 0.5], BoundarySelector::FullBoundary).unwrap(),
            0.3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn dirichlet_only_distance() {
        let g = StructuredGrid::<f64>::interval(1.0, 4, N, D).unwrap();
        let d = distance_to_boundary(&g, BoundarySelector::DirichletOnly).unwrap();
        assert_eq!(d.values(), &[0.875, 0.625, 0.375, 0.125]);

        // door on the middle of the right side
        let mut tags = BoundaryTags::uniform([4, 4], 2, &[N, N, N, N]).unwrap();
        tags.set(Side::Right, 1, D).unwrap();
        tags.set(Side::Right, 2, D).unwrap();
        let g = StructuredGrid::<f64>::new(2, [1.0, 1.0], [4, 4], tags).unwrap();
        let segs = g.boundary_segments(BoundarySelector::DirichletOnly);
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].lo, segs[0].hi), (0.25, 0.75));
        // corner cell (3,0) with center (0.875, 0.125): nearest door point (1, 0.25)
        let dc = g.distance_at([0.875, 0.125], BoundarySelector::DirichletOnly).unwrap();
        assert_abs_diff_eq!(dc, (0.125f64.powi(2) * 2.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn no_dirichlet_is_rejected() {
        assert!(matches!(
            StructuredGrid::<f64>::interval(1.0, 4, N, N),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(StructuredGrid::<f64>::interval(1.0, 1, D, D).is_err());
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff_value(0.0, 0.2), 0.0);
        assert_eq!(cutoff_value(0.3, 0.2), 1.0);
        assert_eq!(cutoff_value(0.1, 0.2), 0.5);
        let g = StructuredGrid::<f64>::interval(1.0, 20, D, N).unwrap();
        assert!(cutoff_xi_h(&g, 0.0).is_err());
        let xi = cutoff_xi_h(&g, 0.2).unwrap();
        assert!(xi.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn face_layout_2d() {
        let g = StructuredGrid::<f64>::rectangle([2.0, 1.0], [4, 3], [D, N, N, N]).unwrap();
        assert_eq!(g.n_faces(), 5 * 3 + 4 * 4);
        for c in 0..g.n_cells() {
            assert_eq!(g.faces_of_cell(c).len(), 4);
        }
        let boundary = g.faces().iter().filter(|f| f.is_boundary()).count();
        assert_eq!(boundary, 2 * 3 + 2 * 4);
        assert_eq!(g.tags().count(D), 3);
    }

    #[test]
    fn restriction_averages() {
        let fine = StructuredGrid::<f64>::interval(1.0, 4, D, D).unwrap();
        let f = ScalarField::from_vec(&fine, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(f.restrict(&fine, 2).values(), &[2.0, 6.0]);
    }

    proptest! {
        #[test]
        fn cutoff_properties(n in 4usize..30, h1 in 0.01f64..0.5, dh in 0.0f64..0.5) {
            let g = StructuredGrid::<f64>::rectangle([1.0, 0.7], [n, n], [D, N, D, N]).unwrap();
            let h2 = h1 + dh;
            let x1 = cutoff_xi_h(&g, h1).unwrap();
            let x2 = cutoff_xi_h(&g, h2).unwrap();
            for c in 0..g.n_cells() {
                prop_assert!(x1.values()[c] >= x2.values()[c] - 1e-15);
                prop_assert!((0.0..=1.0).contains(&x1.values()[c]));
                for &f in g.faces_of_cell(c) {
                    let face = g.face(f);
                    if let (Some(a), Some(b)) = (face.low, face.high) {
                        let dist = g.point_distance(g.cell_center(a), g.cell_center(b));
                        prop_assert!((x1.values()[a] - x1.values()[b]).abs() <= dist / h1 + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn distance_is_one_lipschitz(n in 3usize..20, door in 0usize..3) {
            let mut tags = BoundaryTags::uniform([n, n], 2, &[N, N, N, N]).unwrap();
            tags.set(Side::ALL[door], n / 2, D).unwrap();
            let g = StructuredGrid::<f64>::new(2, [1.0, 1.0], [n, n], tags).unwrap();
            let d = distance_to_boundary(&g, BoundarySelector::DirichletOnly).unwrap();
            for face in g.faces() {
                if let (Some(a), Some(b)) = (face.low, face.high) {
                    let dist = g.point_distance(g.cell_center(a), g.cell_center(b));
                    prop_assert!((d.values()[a] - d.values()[b]).abs() <= dist + 1e-12);
                }
            }
        }
    }
}
