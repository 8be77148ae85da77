//! Persistence diagrams of filtered cubical complexes over GF(2).
//!
//! Dimension 0 comes from a union-find sweep over vertices and edges with
//! the elder rule. Dimension 2 is either read off the dual graph
//! ([`Engine::Dual`], the default) or obtained by reducing the top boundary
//! matrix ([`Engine::Matrix`]). Dimension 1 is always a boundary-matrix
//! reduction, with the 2-faces already paired one level up cleared away.
//!
//! Pairs are reported in filtration values. Pairs whose birth and death
//! values coincide are dropped from the diagrams and only counted.

mod dual;
mod oracle;
mod reduction;
pub mod union_find;

use std::io::Write;

use crate::cubical::{census_formula, Filtration, FilteredCubicalComplex};
use crate::error::{Error, Result};

pub use oracle::{betti_rank_oracle, betti_rank_oracle_full, gf2_rank, ORACLE_CELL_CAP};
use union_find::UnionFind;

/// A (birth, death) pair; essential classes die at `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistencePair {
    pub birth: f64,
    pub death: f64,
}

impl PersistencePair {
    pub fn new(birth: f64, death: f64) -> Self {
        PersistencePair { birth, death }
    }

    pub fn essential(birth: f64) -> Self {
        PersistencePair {
            birth,
            death: f64::INFINITY,
        }
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_essential(&self) -> bool {
        self.death == f64::INFINITY
    }

    /// Alive on the half-open interval `[birth, death)`.
    #[inline]
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && t < self.death
    }
}

/// The multiset of pairs of one homology dimension, kept sorted by
/// (birth, death).
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    pub dim: usize,
    pub pairs: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    pub fn new(dim: usize, mut pairs: Vec<PersistencePair>) -> Self {
        pairs.sort_by(|a, b| a.birth.total_cmp(&b.birth).then(a.death.total_cmp(&b.death)));
        PersistenceDiagram { dim, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn essential_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_essential()).count()
    }

    /// Number of classes alive at `t`.
    pub fn betti_at(&self, t: f64) -> usize {
        self.pairs.iter().filter(|p| p.alive_at(t)).count()
    }
}

/// Which route computes the dimension-2 pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Dual,
    Matrix,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(Engine::Dual),
            "matrix" => Ok(Engine::Matrix),
            other => Err(Error::Config(format!("unknown engine '{other}'"))),
        }
    }
}

/// Diagrams for dimensions 0 through 3 of one complex.
#[derive(Debug, Clone, PartialEq)]
pub struct Persistence {
    diagrams: [PersistenceDiagram; 4],
    zero_persistence: [usize; 4],
    cells: [usize; 4],
}

impl Persistence {
    pub fn diagram(&self, k: usize) -> &PersistenceDiagram {
        &self.diagrams[k]
    }

    /// The exported diagrams, dimensions 0 to 2.
    pub fn diagrams(&self) -> &[PersistenceDiagram] {
        &self.diagrams[..3]
    }

    pub fn zero_persistence_counts(&self) -> [usize; 4] {
        self.zero_persistence
    }

    /// `(b0, b1, b2, b3)` at threshold `t`, read off the diagrams.
    pub fn betti_at(&self, t: f64) -> [usize; 4] {
        [0, 1, 2, 3].map(|k| self.diagrams[k].betti_at(t))
    }

    /// Checks that every cell is accounted for: each `k`-cell is the birth
    /// of a `k`-class, the death of a `(k-1)`-class, or an essential birth.
    pub fn audit(&self) -> Result<()> {
        let finite = |k: usize| {
            self.diagrams[k].len() - self.diagrams[k].essential_count() + self.zero_persistence[k]
        };
        for k in 0..4 {
            let births = finite(k) + self.diagrams[k].essential_count();
            let deaths = if k == 0 { 0 } else { finite(k - 1) };
            if births + deaths != self.cells[k] {
                return Err(Error::Invariant(format!(
                    "dimension {k}: {births} births + {deaths} deaths != {} cells",
                    self.cells[k]
                )));
            }
        }
        Ok(())
    }

    /// CSV export, `dim,birth,death` with `inf` for essential classes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dim,birth,death")?;
        for d in self.diagrams() {
            for p in &d.pairs {
                if p.is_essential() {
                    writeln!(w, "{},{},inf", d.dim, p.birth)?;
                } else {
                    writeln!(w, "{},{},{}", d.dim, p.birth, p.death)?;
                }
            }
        }
        Ok(())
    }
}

/// Accumulates rank-space pairs into value-space diagrams.
struct Collector<'a> {
    complex: &'a FilteredCubicalComplex,
    filt: &'a Filtration,
    pairs: [Vec<PersistencePair>; 4],
    zero: [usize; 4],
}

impl<'a> Collector<'a> {
    fn new(complex: &'a FilteredCubicalComplex, filt: &'a Filtration) -> Self {
        Collector {
            complex,
            filt,
            pairs: Default::default(),
            zero: [0; 4],
        }
    }

    fn value_at(&self, rank: u32) -> f64 {
        self.complex.value(self.filt.order[rank as usize] as usize)
    }

    fn add(&mut self, dim: usize, ranked: &[(u32, u32)]) {
        for &(b, d) in ranked {
            let (birth, death) = (self.value_at(b), self.value_at(d));
            if birth == death {
                self.zero[dim] += 1;
            } else {
                self.pairs[dim].push(PersistencePair::new(birth, death));
            }
        }
    }

    /// Unpaired cells are essential births in their own dimension.
    fn add_essential(&mut self, paired: &[bool]) {
        for (idx, &p) in paired.iter().enumerate() {
            if !p {
                let dim = self.complex.dim_of(idx);
                self.pairs[dim].push(PersistencePair::essential(self.complex.value(idx)));
            }
        }
    }

    fn finish(self) -> Persistence {
        let [p0, p1, p2, p3] = self.pairs;
        Persistence {
            diagrams: [
                PersistenceDiagram::new(0, p0),
                PersistenceDiagram::new(1, p1),
                PersistenceDiagram::new(2, p2),
                PersistenceDiagram::new(3, p3),
            ],
            zero_persistence: self.zero,
            cells: census_formula(self.complex.voxel_dims()),
        }
    }
}

/// Elder-rule union-find over vertices and edges; returns rank pairs.
fn dim0_pairs(complex: &FilteredCubicalComplex, filt: &Filtration, paired: &mut [bool]) -> Vec<(u32, u32)> {
    let [n0, n1, n2] = complex.voxel_dims();
    let m = [n0 + 1, n1 + 1, n2 + 1];
    let s = complex.strides();
    let vertex_of = |cell: usize| {
        let c = complex.cell(cell).coords;
        (c[0] / 2 * m[1] + c[1] / 2) * m[2] + c[2] / 2
    };

    let n_vert = m[0] * m[1] * m[2];
    let mut uf = UnionFind::new(n_vert);
    // earliest vertex rank of each component, kept at its root
    let mut birth = vec![0u32; n_vert];
    for x in 0..m[0] {
        for y in 0..m[1] {
            for z in 0..m[2] {
                birth[(x * m[1] + y) * m[2] + z] = filt.rank[2 * x * s[0] + 2 * y * s[1] + 2 * z];
            }
        }
    }

    let mut pairs = Vec::new();
    let mut ends = Vec::with_capacity(2);
    for (pos, &edge) in filt.order.iter().enumerate() {
        let edge = edge as usize;
        if complex.dim_of(edge) != 1 {
            continue;
        }
        complex.boundary_indices(edge, &mut ends);
        let (ra, rb) = (uf.find(vertex_of(ends[0])), uf.find(vertex_of(ends[1])));
        if ra == rb {
            continue;
        }
        let (young, old) = if birth[ra] > birth[rb] { (ra, rb) } else { (rb, ra) };
        let dying = birth[young];
        pairs.push((dying, pos as u32));
        paired[filt.order[dying as usize] as usize] = true;
        paired[edge] = true;
        let root = uf.link(ra, rb);
        birth[root] = birth[old];
    }
    pairs
}

/// Full persistence of a complex with the default engine.
pub fn compute_persistence(complex: &FilteredCubicalComplex) -> Persistence {
    compute_persistence_with(complex, Engine::Dual)
}

pub fn compute_persistence_with(complex: &FilteredCubicalComplex, engine: Engine) -> Persistence {
    let filt = complex.filtration();
    persistence_from_filtration(complex, &filt, engine)
}

pub fn persistence_from_filtration(
    complex: &FilteredCubicalComplex,
    filt: &Filtration,
    engine: Engine,
) -> Persistence {
    let mut paired = vec![false; complex.num_cells()];
    let mut out = Collector::new(complex, filt);

    let top = match engine {
        Engine::Dual => dual::dual_top_pairs(complex, filt, &mut paired),
        Engine::Matrix => reduction::reduce_boundary(complex, filt, 3, &mut paired),
    };
    out.add(2, &top);
    drop(top);
    let loops = reduction::reduce_boundary(complex, filt, 2, &mut paired);
    out.add(1, &loops);
    drop(loops);
    let components = dim0_pairs(complex, filt, &mut paired);
    out.add(0, &components);
    out.add_essential(&paired);
    out.finish()
}

/// Dimension-0 diagram by union-find alone.
pub fn persistence_dim0(complex: &FilteredCubicalComplex) -> PersistenceDiagram {
    let filt = complex.filtration();
    let mut paired = vec![false; complex.num_cells()];
    let pairs = dim0_pairs(complex, &filt, &mut paired);
    let mut out = Collector::new(complex, &filt);
    out.add(0, &pairs);
    let mut pd = out.pairs[0].clone();
    for (idx, &p) in paired.iter().enumerate() {
        if !p && complex.dim_of(idx) == 0 {
            pd.push(PersistencePair::essential(complex.value(idx)));
        }
    }
    PersistenceDiagram::new(0, pd)
}

/// Dimension-1 or dimension-2 diagram by boundary-matrix reduction only,
/// reducing from the top dimension down with clearing.
pub fn persistence_reduction(complex: &FilteredCubicalComplex, k: usize) -> Result<PersistenceDiagram> {
    if !(1..=2).contains(&k) {
        return Err(Error::OutOfRange(format!(
            "reduction serves dimensions 1 and 2, not {k}"
        )));
    }
    Ok(compute_persistence_with(complex, Engine::Matrix).diagrams[k].clone())
}

/// `sum_k (-1)^k * #{k-cells with value <= t}`.
pub fn euler_characteristic(complex: &FilteredCubicalComplex, t: f64) -> i64 {
    let c = complex.sublevel_census(t);
    c[0] as i64 - c[1] as i64 + c[2] as i64 - c[3] as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume3D;

    fn complex(dims: [usize; 3], data: Vec<f64>) -> FilteredCubicalComplex {
        FilteredCubicalComplex::build(&Volume3D::new(dims, data).unwrap())
    }

    fn ring() -> FilteredCubicalComplex {
        let mut data = vec![10.0; 9];
        data[4] = 200.0;
        complex([3, 3, 1], data)
    }

    fn shell() -> FilteredCubicalComplex {
        let mut data = vec![10.0; 27];
        data[13] = 200.0;
        complex([3, 3, 3], data)
    }

    #[test]
    fn single_voxel_dim0() {
        let f = complex([1, 1, 1], vec![42.0]);
        let pd = persistence_dim0(&f);
        assert_eq!(pd.pairs, vec![PersistencePair::essential(42.0)]);
    }

    #[test]
    fn bridge_merge_dim0() {
        let f = complex([3, 1, 1], vec![0.0, 255.0, 0.0]);
        let pd = persistence_dim0(&f);
        assert_eq!(
            pd.pairs,
            vec![PersistencePair::new(0.0, 255.0), PersistencePair::essential(0.0)]
        );
        assert_eq!(compute_persistence(&f).diagram(0), &pd);
    }

    #[test]
    fn constant_volume_dim0() {
        let f = complex([3, 2, 2], vec![7.0; 12]);
        assert_eq!(persistence_dim0(&f).pairs, vec![PersistencePair::essential(7.0)]);
    }

    #[test]
    fn solid_block_has_no_higher_classes() {
        let f = complex([3, 3, 3], vec![50.0; 27]);
        for k in 1..=2 {
            assert!(persistence_reduction(&f, k).unwrap().is_empty());
        }
        let p = compute_persistence(&f);
        assert!(p.diagram(1).is_empty() && p.diagram(2).is_empty());
        assert_eq!(betti_rank_oracle(&f, 50.0).unwrap(), [1, 0, 0]);
    }

    #[test]
    fn ring_has_one_loop() {
        let f = ring();
        let pd1 = persistence_reduction(&f, 1).unwrap();
        assert_eq!(pd1.pairs, vec![PersistencePair::new(10.0, 200.0)]);
        assert!(persistence_reduction(&f, 2).unwrap().is_empty());
        let p = compute_persistence(&f);
        assert_eq!(p.diagram(1), &pd1);
        assert!(p.diagram(2).is_empty());
        assert_eq!(betti_rank_oracle(&f, 100.0).unwrap(), [1, 1, 0]);
    }

    #[test]
    fn shell_has_one_cavity() {
        let f = shell();
        let pd2 = persistence_reduction(&f, 2).unwrap();
        assert_eq!(pd2.pairs, vec![PersistencePair::new(10.0, 200.0)]);
        assert!(persistence_reduction(&f, 1).unwrap().is_empty());
        for engine in [Engine::Dual, Engine::Matrix] {
            let p = compute_persistence_with(&f, engine);
            assert_eq!(p.diagram(2), &pd2);
            assert!(p.diagram(1).is_empty());
        }
        assert_eq!(betti_rank_oracle(&f, 100.0).unwrap(), [1, 0, 1]);
        assert_eq!(euler_characteristic(&f, 100.0), 2);
    }

    #[test]
    fn oracle_edge_cases() {
        let f = shell();
        assert_eq!(betti_rank_oracle(&f, 5.0).unwrap(), [0, 0, 0]);
        assert_eq!(betti_rank_oracle(&f, 200.0).unwrap(), [1, 0, 0]);
        let big = complex([12, 12, 12], vec![0.0; 1728]);
        assert!(matches!(
            betti_rank_oracle(&big, 0.0),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn euler_examples() {
        let f = complex([1, 1, 1], vec![3.0]);
        assert_eq!(euler_characteristic(&f, 3.0), 1);
        assert_eq!(euler_characteristic(&f, 2.0), 0);
    }

    #[test]
    fn reduction_rejects_other_dimensions() {
        let f = complex([1, 1, 1], vec![3.0]);
        assert!(persistence_reduction(&f, 0).is_err());
        assert!(persistence_reduction(&f, 3).is_err());
    }

    #[test]
    fn zero_persistence_pairs_are_counted_and_audited() {
        let f = complex([2, 2, 2], vec![1.0, 5.0, 3.0, 3.0, 9.0, 2.0, 4.0, 4.0]);
        let p = compute_persistence(&f);
        p.audit().unwrap();
        assert!(p.zero_persistence_counts().iter().sum::<usize>() > 0);
        assert!(p.diagrams().iter().all(|d| d.pairs.iter().all(|q| q.birth < q.death)));
    }

    #[test]
    fn diagram_csv_export() {
        let f = ring();
        let mut buf = Vec::new();
        compute_persistence(&f).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "dim,birth,death\n0,10,inf\n1,10,200\n");
    }
}
