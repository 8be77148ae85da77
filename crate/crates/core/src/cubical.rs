//! Filtered cubical complexes of voxel volumes (T-construction).
//!
//! Cells live on the doubled grid of extent `2n + 1` per axis: a coordinate
//! is even where the cell is a point along that axis and odd where it spans
//! an interval, so the dimension of a cell is its count of odd coordinates.
//! Each voxel is the 3-cube at odd coordinates `(2i+1, 2j+1, 2k+1)`, and
//! every lower cell carries the minimum intensity of the cubes around it,
//! making each sublevel set `{value <= t}` a closed subcomplex.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::Volume3D;

/// A cell addressed by doubled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CubicalCell {
    pub coords: [usize; 3],
}

impl CubicalCell {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        CubicalCell { coords: [x, y, z] }
    }

    pub fn dim(&self) -> usize {
        self.coords.iter().filter(|&&c| c % 2 == 1).count()
    }
}

/// The `2 * dim` facets of a cell: each odd coordinate replaced by its two
/// even neighbours.
pub fn boundary(c: &CubicalCell) -> Vec<CubicalCell> {
    let mut out = Vec::with_capacity(2 * c.dim());
    for axis in 0..3 {
        if c.coords[axis] % 2 == 1 {
            for delta in [-1isize, 1] {
                let mut f = c.coords;
                f[axis] = (f[axis] as isize + delta) as usize;
                out.push(CubicalCell { coords: f });
            }
        }
    }
    out
}

/// Total order key for filtration values. `-0.0` is folded onto `0.0`
/// before it ever reaches a complex, so plain bit tricks suffice.
#[inline]
fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

#[derive(Debug, Clone)]
pub struct FilteredCubicalComplex {
    voxel_dims: [usize; 3],
    grid: [usize; 3],
    values: Vec<f64>,
}

/// Cells of a complex sorted by (value, dimension, coordinates), plus the
/// inverse permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filtration {
    pub order: Vec<u32>,
    pub rank: Vec<u32>,
}

/// Min over incident voxels along one axis: position `c` of the doubled
/// axis covers voxels `(c-1)/2` and `c/2`, clipped to the volume.
fn expand_axis(src: &[f64], shape: [usize; 3], axis: usize) -> (Vec<f64>, [usize; 3]) {
    let n = shape[axis];
    let mut out_shape = shape;
    out_shape[axis] = 2 * n + 1;
    let strides = |s: [usize; 3]| [s[1] * s[2], s[2], 1];
    let (si, so) = (strides(shape), strides(out_shape));
    let mut out = vec![0.0; out_shape.iter().product()];

    let outer: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let (a, b) = (outer[0], outer[1]);
    for ia in 0..shape[a] {
        for ib in 0..shape[b] {
            let base_in = ia * si[a] + ib * si[b];
            let base_out = ia * so[a] + ib * so[b];
            for c in 0..=2 * n {
                let lo = if c == 0 { 0 } else { (c - 1) / 2 };
                let hi = (c / 2).min(n - 1);
                let mut m = src[base_in + lo * si[axis]];
                if hi != lo {
                    m = m.min(src[base_in + hi * si[axis]]);
                }
                out[base_out + c * so[axis]] = m;
            }
        }
    }
    (out, out_shape)
}

impl FilteredCubicalComplex {
    /// Builds the sublevel filtration of a volume.
    pub fn build(v: &Volume3D) -> Self {
        let voxel_dims = v.dims();
        // fold -0.0 onto 0.0 so equal values share one bit pattern
        let mut cur: Vec<f64> = v.data().iter().map(|&x| x + 0.0).collect();
        let mut shape = voxel_dims;
        for axis in 0..3 {
            let (next, next_shape) = expand_axis(&cur, shape, axis);
            cur = next;
            shape = next_shape;
        }
        FilteredCubicalComplex {
            voxel_dims,
            grid: shape,
            values: cur,
        }
    }

    pub fn voxel_dims(&self) -> [usize; 3] {
        self.voxel_dims
    }

    /// Extent of the doubled grid, `2n + 1` per axis.
    pub fn grid(&self) -> [usize; 3] {
        self.grid
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        [self.grid[1] * self.grid[2], self.grid[2], 1]
    }

    #[inline]
    pub fn index_of(&self, c: &CubicalCell) -> usize {
        let [x, y, z] = c.coords;
        (x * self.grid[1] + y) * self.grid[2] + z
    }

    #[inline]
    pub fn cell(&self, idx: usize) -> CubicalCell {
        let z = idx % self.grid[2];
        let rest = idx / self.grid[2];
        CubicalCell::new(rest / self.grid[1], rest % self.grid[1], z)
    }

    pub fn contains(&self, c: &CubicalCell) -> bool {
        (0..3).all(|a| c.coords[a] < self.grid[a])
    }

    #[inline]
    pub fn dim_of(&self, idx: usize) -> usize {
        self.cell(idx).dim()
    }

    pub fn value_of(&self, c: &CubicalCell) -> f64 {
        self.values[self.index_of(c)]
    }

    /// Linear indices of the facets of cell `idx`.
    pub fn boundary_indices(&self, idx: usize, out: &mut Vec<usize>) {
        out.clear();
        let c = self.cell(idx).coords;
        let s = self.strides();
        for axis in 0..3 {
            if c[axis] % 2 == 1 {
                out.push(idx - s[axis]);
                out.push(idx + s[axis]);
            }
        }
    }

    /// Linear indices of the cofacets of cell `idx`.
    pub fn coboundary_indices(&self, idx: usize, out: &mut Vec<usize>) {
        out.clear();
        let c = self.cell(idx).coords;
        let s = self.strides();
        for axis in 0..3 {
            if c[axis] % 2 == 0 {
                if c[axis] > 0 {
                    out.push(idx - s[axis]);
                }
                if c[axis] + 1 < self.grid[axis] {
                    out.push(idx + s[axis]);
                }
            }
        }
    }

    /// Number of cells of each dimension.
    pub fn census(&self) -> [usize; 4] {
        census_formula(self.voxel_dims)
    }

    /// Number of cells of each dimension with value `<= t`.
    pub fn sublevel_census(&self, t: f64) -> [usize; 4] {
        let mut counts = [0usize; 4];
        let [g0, g1, g2] = self.grid;
        let mut idx = 0;
        for x in 0..g0 {
            for y in 0..g1 {
                for z in 0..g2 {
                    if self.values[idx] <= t {
                        counts[(x & 1) + (y & 1) + (z & 1)] += 1;
                    }
                    idx += 1;
                }
            }
        }
        counts
    }

    /// Sorts cells by (value, dimension, lexicographic coordinates). Faces
    /// always precede their cofaces.
    pub fn filtration(&self) -> Filtration {
        let n = self.values.len();
        assert!(n <= u32::MAX as usize, "complex too large for 32-bit cell ranks");
        let [_, g1, g2] = self.grid;
        let mut keys: Vec<u128> = self
            .values
            .par_iter()
            .enumerate()
            .map(|(idx, &v)| {
                let z = idx % g2;
                let y = (idx / g2) % g1;
                let x = idx / (g1 * g2);
                let dim = ((x & 1) + (y & 1) + (z & 1)) as u128;
                (u128::from(ordered_bits(v)) << 64) | (dim << 48) | idx as u128
            })
            .collect();
        keys.par_sort_unstable();
        let order: Vec<u32> = keys.par_iter().map(|&k| (k & 0xffff_ffff) as u32).collect();
        drop(keys);
        let mut rank = vec![0u32; n];
        for (pos, &cell) in order.iter().enumerate() {
            rank[cell as usize] = pos as u32;
        }
        Filtration { order, rank }
    }

    /// The cells themselves, in filtration order.
    pub fn cells_in_filtration_order(&self) -> Vec<CubicalCell> {
        self.filtration()
            .order
            .iter()
            .map(|&i| self.cell(i as usize))
            .collect()
    }

    /// Debug dump, one `x,y,z,dim,value` row per cell. Meant for small grids.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,z,dim,value")?;
        for idx in 0..self.values.len() {
            let c = self.cell(idx);
            let [x, y, z] = c.coords;
            writeln!(w, "{x},{y},{z},{},{}", c.dim(), self.values[idx])?;
        }
        Ok(())
    }

    /// Exhaustively checks that every facet value is `<=` its cell's value.
    pub fn check_monotone(&self) -> Result<()> {
        let mut facets = Vec::with_capacity(6);
        for idx in 0..self.values.len() {
            self.boundary_indices(idx, &mut facets);
            for &f in &facets {
                if self.values[f] > self.values[idx] {
                    return Err(Error::Invariant(format!(
                        "facet {:?} ({}) exceeds cell {:?} ({})",
                        self.cell(f),
                        self.values[f],
                        self.cell(idx),
                        self.values[idx]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Cell counts by dimension for voxel dims `n`: per axis there are `n + 1`
/// point positions and `n` interval positions.
pub fn census_formula(n: [usize; 3]) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for mask in 0..8usize {
        let mut prod = 1;
        for (axis, &extent) in n.iter().enumerate() {
            prod *= if mask >> axis & 1 == 1 { extent } else { extent + 1 };
        }
        counts[mask.count_ones() as usize] += prod;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(dims: [usize; 3], data: &[f64]) -> Volume3D {
        Volume3D::new(dims, data.to_vec()).unwrap()
    }

    /// Minimum over voxels whose closed cube contains the cell, found by
    /// scanning every voxel.
    fn brute_value(v: &Volume3D, c: &CubicalCell) -> f64 {
        let [n0, n1, n2] = v.dims();
        let mut m = f64::INFINITY;
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let cube = [2 * i + 1, 2 * j + 1, 2 * k + 1];
                    let inside = (0..3).all(|a| c.coords[a].abs_diff(cube[a]) <= 1);
                    if inside {
                        m = m.min(v.get(i, j, k));
                    }
                }
            }
        }
        m
    }

    #[test]
    fn single_voxel() {
        let f = FilteredCubicalComplex::build(&vol([1, 1, 1], &[5.0]));
        assert_eq!(f.num_cells(), 27);
        assert!(f.values().iter().all(|&v| v == 5.0));
        assert_eq!(f.census(), [8, 12, 6, 1]);
    }

    #[test]
    fn shared_face_takes_the_min() {
        let f = FilteredCubicalComplex::build(&vol([2, 1, 1], &[3.0, 9.0]));
        assert_eq!(f.grid(), [5, 3, 3]);
        assert_eq!(f.value_of(&CubicalCell::new(2, 1, 1)), 3.0);
        assert_eq!(f.value_of(&CubicalCell::new(1, 1, 1)), 3.0);
        assert_eq!(f.value_of(&CubicalCell::new(3, 1, 1)), 9.0);
    }

    #[test]
    fn central_edge_of_2x2x1() {
        let v = vol([2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let f = FilteredCubicalComplex::build(&v);
        let edge = CubicalCell::new(2, 2, 1);
        assert_eq!(edge.dim(), 1);
        assert_eq!(f.value_of(&edge), 1.0);
        assert_eq!(brute_value(&v, &edge), 1.0);
    }

    #[test]
    fn values_match_brute_force_enumeration() {
        let v = Volume3D::from_fn([3, 2, 4], |i, j, k| ((i * 7 + j * 13 + k * 5) % 11) as f64)
            .unwrap();
        let f = FilteredCubicalComplex::build(&v);
        for idx in 0..f.num_cells() {
            let c = f.cell(idx);
            assert_eq!(f.value(idx), brute_value(&v, &c), "cell {c:?}");
        }
        f.check_monotone().unwrap();
    }

    #[test]
    fn boundary_examples() {
        assert!(boundary(&CubicalCell::new(0, 0, 0)).is_empty());
        assert_eq!(
            boundary(&CubicalCell::new(1, 0, 0)),
            vec![CubicalCell::new(0, 0, 0), CubicalCell::new(2, 0, 0)]
        );
        let faces = boundary(&CubicalCell::new(1, 1, 1));
        assert_eq!(faces.len(), 6);
        assert!(faces.iter().all(|f| f.dim() == 2));
    }

    #[test]
    fn boundary_of_boundary_cancels_mod_2() {
        for cube in [CubicalCell::new(1, 1, 1), CubicalCell::new(3, 1, 5)] {
            let mut counts = std::collections::HashMap::new();
            for f in boundary(&cube) {
                for e in boundary(&f) {
                    *counts.entry(e).or_insert(0u32) += 1;
                }
            }
            assert!(counts.values().all(|c| c % 2 == 0));
        }
    }

    #[test]
    fn index_helpers_agree_with_cell_boundary() {
        let f = FilteredCubicalComplex::build(&vol([2, 3, 2], &[0.0; 12]));
        let mut out = Vec::new();
        for idx in 0..f.num_cells() {
            let c = f.cell(idx);
            assert_eq!(f.index_of(&c), idx);
            f.boundary_indices(idx, &mut out);
            let mut a: Vec<_> = out.iter().map(|&i| f.cell(i)).collect();
            let mut b = boundary(&c);
            a.sort();
            b.sort();
            assert_eq!(a, b);
            f.coboundary_indices(idx, &mut out);
            for &co in &out {
                assert!(boundary(&f.cell(co)).contains(&c));
            }
        }
    }

    #[test]
    fn filtration_order_single_voxel() {
        let f = FilteredCubicalComplex::build(&vol([1, 1, 1], &[5.0]));
        let cells = f.cells_in_filtration_order();
        assert_eq!(cells.len(), 27);
        assert!(cells[..8].iter().all(|c| c.dim() == 0));
        assert_eq!(cells[26], CubicalCell::new(1, 1, 1));
        let dims: Vec<usize> = cells.iter().map(|c| c.dim()).collect();
        assert!(dims.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn filtration_order_two_cubes() {
        let f = FilteredCubicalComplex::build(&vol([2, 1, 1], &[3.0, 9.0]));
        let cells = f.cells_in_filtration_order();
        assert_eq!(cells.len(), 45);
        // cube A and its closure (27 cells) come first, then B's 18 private cells
        assert!(cells[..27].iter().all(|c| f.value_of(c) == 3.0));
        assert!(cells[27..].iter().all(|c| f.value_of(c) == 9.0));
        assert_eq!(cells[27..].len(), 18);
        assert_eq!(cells[26], CubicalCell::new(1, 1, 1));
    }

    #[test]
    fn filtration_is_deterministic_and_face_first() {
        let v = Volume3D::from_fn([3, 3, 2], |i, j, k| ((i + 2 * j + k) % 3) as f64).unwrap();
        let f = FilteredCubicalComplex::build(&v);
        let a = f.filtration();
        assert_eq!(a, f.filtration());
        let mut facets = Vec::new();
        for idx in 0..f.num_cells() {
            f.boundary_indices(idx, &mut facets);
            for &fa in &facets {
                assert!(a.rank[fa] < a.rank[idx]);
            }
        }
    }

    #[test]
    fn census_matches_counting() {
        for dims in [[1, 1, 1], [2, 3, 4], [5, 1, 2]] {
            let f = FilteredCubicalComplex::build(&Volume3D::new(dims, vec![1.0; dims.iter().product()]).unwrap());
            let counted = f.sublevel_census(1.0);
            assert_eq!(counted, f.census());
            assert_eq!(counted.iter().sum::<usize>(), f.num_cells());
            assert_eq!(counted[3], dims.iter().product::<usize>());
            assert_eq!(f.sublevel_census(0.5), [0; 4]);
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_cell() {
        let f = FilteredCubicalComplex::build(&vol([1, 1, 1], &[2.5]));
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,z,dim,value");
        assert_eq!(lines.len(), 28);
        assert_eq!(lines[1], "0,0,0,0,2.5");
    }
}
