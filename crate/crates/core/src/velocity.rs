//! Face-staggered drift fields.

use crate::error::{Error, Result};
use crate::geometry::{BoundaryKind, BoundarySelector, ScalarField, StructuredGrid};
use crate::scalar::Real;
use serde::Serialize;

/// Normal velocity components on every face (oriented along `+axis`) with
/// the derived conservative divergence.
#[derive(Clone, Debug)]
pub struct VelocityField<T> {
    face_values: Vec<T>,
    divergence: ScalarField<T>,
    div_bound: T,
}

impl<T: Real> VelocityField<T> {
    pub fn new(grid: &StructuredGrid<T>, face_values: Vec<T>) -> Result<Self> {
        if face_values.len() != grid.n_faces() {
            return Err(Error::InvalidParameter(format!(
                "velocity has {} face values, grid has {} faces",
                face_values.len(),
                grid.n_faces()
            )));
        }
        if let Some(f) = face_values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite velocity on face {f}")));
        }
        let divergence = divergence_of(grid, &face_values);
        let div_bound = divergence.sup_norm();
        Ok(Self {
            face_values,
            divergence,
            div_bound,
        })
    }

    /// Samples the normal component `v(face)` on every face.
    pub fn from_faces(
        grid: &StructuredGrid<T>,
        f: impl Fn(&crate::geometry::Face<T>) -> T,
    ) -> Result<Self> {
        Self::new(grid, grid.faces().iter().map(f).collect())
    }

    pub fn zero(grid: &StructuredGrid<T>) -> Self {
        Self::new(grid, vec![T::zero(); grid.n_faces()]).expect("zero field is valid")
    }

    pub fn constant(grid: &StructuredGrid<T>, v: [T; 2]) -> Result<Self> {
        Self::from_faces(grid, |f| v[f.axis])
    }

    /// `V_a(x) = slope[a] * x_a + offset[a]` on each axis.
    pub fn linear(grid: &StructuredGrid<T>, slope: [T; 2], offset: [T; 2]) -> Result<Self> {
        Self::from_faces(grid, |f| slope[f.axis] * f.center[f.axis] + offset[f.axis])
    }

    /// Copy with the normal component zeroed on Neumann faces.
    pub fn zero_on_neumann(&self, grid: &StructuredGrid<T>) -> Self {
        let mut v = self.face_values.clone();
        for (id, val) in v.iter_mut().enumerate() {
            if grid.boundary_kind(id) == Some(BoundaryKind::Neumann) {
                *val = T::zero();
            }
        }
        Self::new(grid, v).expect("zeroing keeps the field valid")
    }

    pub fn face_values(&self) -> &[T] {
        &self.face_values
    }

    pub fn divergence(&self) -> &ScalarField<T> {
        &self.divergence
    }

    pub fn div_bound(&self) -> T {
        self.div_bound
    }

    pub fn sup_norm(&self) -> T {
        self.face_values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Outward flux density `V . nu` on a boundary face.
    pub fn outward_normal_value(&self, grid: &StructuredGrid<T>, face: usize) -> Option<T> {
        grid.face(face)
            .boundary_cell()
            .map(|(_, sign)| sign * self.face_values[face])
    }

    /// `sum |V_f|^2 * dual volume`, the discrete `int |V|^2`.
    pub fn l2_norm_sq(&self, grid: &StructuredGrid<T>) -> T {
        grid.faces()
            .iter()
            .zip(&self.face_values)
            .map(|(f, v)| *v * *v * f.area * f.normal_distance)
            .sum()
    }
}

fn divergence_of<T: Real>(grid: &StructuredGrid<T>, face_values: &[T]) -> ScalarField<T> {
    let mut div = vec![T::zero(); grid.n_cells()];
    let vol = grid.cell_volume();
    for (face, v) in grid.faces().iter().zip(face_values) {
        let flux = *v * face.area / vol;
        if let Some(c) = face.low {
            div[c] += flux;
        }
        if let Some(c) = face.high {
            div[c] -= flux;
        }
    }
    ScalarField::from_raw(div)
}

/// Conservative discrete divergence: outward face fluxes over cell volume.
pub fn divergence<T: Real>(grid: &StructuredGrid<T>, v: &VelocityField<T>) -> ScalarField<T> {
    divergence_of(grid, v.face_values())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub dirichlet_min_outflux: f64,
    pub neumann_max_abs_flux: f64,
    pub passed: bool,
    pub tolerance: f64,
}

/// Outward-pointing drift test: `V . nu >= 0` on Dirichlet faces, `V . nu = 0`
/// on Neumann faces, both up to `tol`.
pub fn check_admissibility<T: Real>(
    grid: &StructuredGrid<T>,
    v: &VelocityField<T>,
    tol: T,
) -> AdmissibilityReport {
    let mut dmin = T::infinity();
    let mut nmax = T::zero();
    for (id, face) in grid.faces().iter().enumerate() {
        let Some((_, sign)) = face.boundary_cell() else {
            continue;
        };
        let flux = sign * v.face_values()[id];
        match grid.boundary_kind(id) {
            Some(BoundaryKind::Dirichlet) => dmin = dmin.min(flux),
            Some(BoundaryKind::Neumann) => nmax = nmax.max(flux.abs()),
            None => {}
        }
    }
    let passed = dmin >= -tol && nmax <= tol;
    AdmissibilityReport {
        dirichlet_min_outflux: dmin.to_f64_lossy(),
        neumann_max_abs_flux: nmax.to_f64_lossy(),
        passed,
        tolerance: tol.to_f64_lossy(),
    }
}

/// Unit-speed field toward the nearest Dirichlet point, faded linearly to
/// zero within `blend_width` of the Neumann boundary.
pub fn crowd_motion_field<T: Real>(grid: &StructuredGrid<T>, blend_width: T) -> Result<VelocityField<T>> {
    if !(blend_width > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "blend width must be positive, got {blend_width}"
        )));
    }
    let doors = grid.boundary_segments(BoundarySelector::DirichletOnly);
    if doors.is_empty() {
        return Err(Error::InvalidGeometry("crowd field needs a Dirichlet boundary".into()));
    }
    let walls = grid.boundary_segments(BoundarySelector::NeumannOnly);
    let tiny = T::epsilon() * T::lit(64.0) * grid.h();
    VelocityField::from_faces(grid, |face| {
        let x = face.center;
        let (d, q, side) = grid.nearest_boundary_point(x, &doors).unwrap();
        let dir = if d > tiny {
            (q[face.axis] - x[face.axis]) / d
        } else if side.axis() == face.axis {
            // on the door itself: the limit direction is the outward normal
            T::lit(side.outward_sign())
        } else {
            T::zero()
        };
        let ramp = grid
            .nearest_boundary_point(x, &walls)
            .map_or(T::one(), |(dn, _, _)| (dn / blend_width).min(T::one()));
        dir * ramp
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryTags, Side};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use BoundaryKind::{Dirichlet as D, Neumann as N};

    #[test]
    fn admissibility_examples() {
        let g = StructuredGrid::<f64>::interval(1.0, 10, N, D).unwrap();
        let v = VelocityField::constant(&g, [1.0, 0.0]).unwrap();
        let r = check_admissibility(&g, &v, 1e-12);
        assert_eq!(r.dirichlet_min_outflux, 1.0);
        assert_eq!(r.neumann_max_abs_flux, 1.0);
        assert!(!r.passed);

        let g2 = StructuredGrid::<f64>::interval(1.0, 10, D, D).unwrap();
        let v2 = VelocityField::constant(&g2, [1.0, 0.0]).unwrap();
        let r2 = check_admissibility(&g2, &v2, 1e-12);
        // inflow through the left Dirichlet end
        assert_eq!(r2.dirichlet_min_outflux, -1.0);
        assert!(!r2.passed);
        let fixed = v.zero_on_neumann(&g);
        assert!(check_admissibility(&g, &fixed, 1e-12).passed);

        assert!(check_admissibility(&g, &VelocityField::zero(&g), 0.0).passed);

        let mut vals = vec![0.0; g.n_faces()];
        vals[0] = -1.0;
        let bad = VelocityField::new(&g, vals).unwrap();
        let r = check_admissibility(&g, &bad, 1e-12);
        assert!(!r.passed);
        assert_eq!(r.neumann_max_abs_flux, 1.0);
    }

    #[test]
    fn crowd_field_1d() {
        let g = StructuredGrid::<f64>::interval(1.0, 100, N, D).unwrap();
        let v = crowd_motion_field(&g, 0.1).unwrap();
        assert_eq!(v.face_values()[0], 0.0);
        assert_abs_diff_eq!(v.face_values()[50], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v.face_values()[5], 0.5, epsilon = 1e-14);
        assert!(check_admissibility(&g, &v, 1e-12).passed);
        let div = divergence(&g, &v);
        for c in 0..10 {
            assert_abs_diff_eq!(div.values()[c], 10.0, epsilon = 1e-9);
        }
        for c in 10..100 {
            assert_abs_diff_eq!(div.values()[c], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn crowd_requires_door() {
        let g = StructuredGrid::<f64>::interval(1.0, 10, N, D).unwrap();
        assert!(crowd_motion_field(&g, 0.0).is_err());
    }

    #[test]
    fn divergence_examples() {
        let g = StructuredGrid::<f64>::interval(1.0, 16, D, D).unwrap();
        let one = VelocityField::constant(&g, [1.0, 0.0]).unwrap();
        assert!(one.divergence().values().iter().all(|d| *d == 0.0));
        let lin = VelocityField::linear(&g, [1.0, 0.0], [0.0, 0.0]).unwrap();
        for d in lin.divergence().values() {
            assert_abs_diff_eq!(*d, 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(lin.div_bound(), 1.0, epsilon = 1e-12);
    }

    fn door_grid(n: usize, side: usize) -> StructuredGrid<f64> {
        let mut tags = BoundaryTags::uniform([n, n], 2, &[N, N, N, N]).unwrap();
        for k in n / 3..(2 * n / 3).max(n / 3 + 1) {
            tags.set(Side::ALL[side], k, D).unwrap();
        }
        StructuredGrid::new(2, [1.0, 1.0], [n, n], tags).unwrap()
    }

    proptest! {
        #[test]
        fn divergence_theorem(n in 3usize..16, seed in 0u64..1000) {
            let g = StructuredGrid::<f64>::rectangle([1.0, 2.0], [n, n + 1], [D, N, D, N]).unwrap();
            let vals: Vec<f64> = (0..g.n_faces())
                .map(|k| ((k as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0)
                .collect();
            let v = VelocityField::new(&g, vals).unwrap();
            let total: f64 = v.divergence().integral(&g);
            let boundary: f64 = (0..g.n_faces())
                .filter_map(|f| v.outward_normal_value(&g, f).map(|fl| fl * g.face(f).area))
                .sum();
            prop_assert!((total - boundary).abs() < 1e-12);
            prop_assert!(v.div_bound().is_finite());
        }

        #[test]
        fn crowd_field_always_admissible(n in 3usize..14, side in 0usize..4, bw in 0.05f64..0.5) {
            let g = door_grid(n, side);
            let v = crowd_motion_field(&g, bw).unwrap();
            prop_assert!(check_admissibility(&g, &v, 1e-12).passed);
            prop_assert!(v.div_bound().is_finite());
        }
    }
}
