//! Top-dimensional pairs through the dual graph.
//!
//! Voxels plus one exterior node form the vertices of the dual graph and
//! 2-faces are its edges. Sweeping the faces in decreasing filtration order
//! and merging with the elder rule (a component is as old as its latest
//! cube; the exterior is oldest of all) reproduces exactly the pairs of the
//! reduced top boundary matrix.

use super::union_find::UnionFind;
use crate::cubical::{Filtration, FilteredCubicalComplex};

const EXTERIOR_AGE: u32 = u32::MAX;

pub(crate) fn dual_top_pairs(
    complex: &FilteredCubicalComplex,
    filt: &Filtration,
    paired: &mut [bool],
) -> Vec<(u32, u32)> {
    let [n0, n1, n2] = complex.voxel_dims();
    let n_vox = n0 * n1 * n2;
    let exterior = n_vox;
    let voxel_of = |cell: usize| {
        let c = complex.cell(cell).coords;
        ((c[0] - 1) / 2 * n1 + (c[1] - 1) / 2) * n2 + (c[2] - 1) / 2
    };

    let mut uf = UnionFind::new(n_vox + 1);
    // latest cube rank of each component, kept at its root
    let mut age = vec![EXTERIOR_AGE; n_vox + 1];
    let s = complex.strides();
    for x in 0..n0 {
        for y in 0..n1 {
            for z in 0..n2 {
                let cell = (2 * x + 1) * s[0] + (2 * y + 1) * s[1] + 2 * z + 1;
                age[(x * n1 + y) * n2 + z] = filt.rank[cell];
            }
        }
    }

    let mut pairs = Vec::with_capacity(n_vox);
    let mut cofaces = Vec::with_capacity(2);
    for (pos, &face) in filt.order.iter().enumerate().rev() {
        let face = face as usize;
        if complex.dim_of(face) != 2 {
            continue;
        }
        complex.coboundary_indices(face, &mut cofaces);
        let a = voxel_of(cofaces[0]);
        let b = if cofaces.len() == 2 {
            voxel_of(cofaces[1])
        } else {
            exterior
        };
        let (ra, rb) = (uf.find(a), uf.find(b));
        if ra == rb {
            continue;
        }
        let (young, old) = if age[ra] < age[rb] { (ra, rb) } else { (rb, ra) };
        let death = age[young];
        pairs.push((pos as u32, death));
        paired[face] = true;
        paired[filt.order[death as usize] as usize] = true;
        let root = uf.link(ra, rb);
        age[root] = age[old];
    }
    pairs.sort_unstable_by_key(|&(b, _)| b);
    pairs
}
