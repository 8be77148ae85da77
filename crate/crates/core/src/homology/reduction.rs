//! Column reduction of cubical boundary matrices over GF(2).
//!
//! Everything here works in rank space: rows and columns are positions in
//! the filtration order, so a column's pivot is simply its largest entry.

use crate::cubical::{Filtration, FilteredCubicalComplex};

const NO_PIVOT: u32 = u32::MAX;

/// Reduces the boundary matrix whose columns are the `col_dim`-cells.
///
/// Columns already marked in `paired` are skipped: they were identified as
/// births by the reduction one dimension up, so their columns reduce to
/// zero (clearing). Every pair found is marked in `paired` on both ends and
/// returned as `(birth rank, death rank)`.
pub(crate) fn reduce_boundary(
    complex: &FilteredCubicalComplex,
    filt: &Filtration,
    col_dim: usize,
    paired: &mut [bool],
) -> Vec<(u32, u32)> {
    let mut pivot_slot = vec![NO_PIVOT; complex.num_cells()];
    let mut arena: Vec<u32> = Vec::new();
    let mut slots: Vec<(usize, usize)> = Vec::new();
    let mut pairs = Vec::new();

    let mut facets = Vec::with_capacity(6);
    let mut col: Vec<u32> = Vec::new();
    let mut scratch: Vec<u32> = Vec::new();

    for (pos, &cell) in filt.order.iter().enumerate() {
        let cell = cell as usize;
        if complex.dim_of(cell) != col_dim || paired[cell] {
            continue;
        }
        complex.boundary_indices(cell, &mut facets);
        col.clear();
        col.extend(facets.iter().map(|&f| filt.rank[f]));
        col.sort_unstable();

        while let Some(&low) = col.last() {
            let slot = pivot_slot[low as usize];
            if slot == NO_PIVOT {
                break;
            }
            let (start, len) = slots[slot as usize];
            xor_sorted(&col, &arena[start..start + len], &mut scratch);
            std::mem::swap(&mut col, &mut scratch);
        }

        if let Some(&low) = col.last() {
            pivot_slot[low as usize] = slots.len() as u32;
            slots.push((arena.len(), col.len()));
            arena.extend_from_slice(&col);
            pairs.push((low, pos as u32));
            paired[filt.order[low as usize] as usize] = true;
            paired[cell] = true;
        }
    }
    pairs
}

/// Symmetric difference of two ascending sequences.
fn xor_sorted(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}
