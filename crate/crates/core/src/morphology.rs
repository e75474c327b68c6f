//! Genome to voxel phenotype expansion.
//!
//! A phenotype is a 100³ occupancy grid (0.3 mm voxels). Each z-slice holds a
//! square ring platform and four identical blades, blade 0 growing east from
//! the platform along the `y = 50` centerline and the others obtained by
//! quarter turns about the grid center.

use std::fmt::Write as _;

use crate::error::GenomeError;
use crate::genome::{Genome, BASE_LEN, BASE_MAX, BASE_MIN};

pub const GRID: usize = 100;
pub const VOXEL_SIZE_MM: f64 = 0.3;
pub const LAYER_CELLS: usize = GRID * GRID;
pub const GRID_CELLS: usize = GRID * GRID * GRID;

const WORDS: usize = LAYER_CELLS.div_ceil(64);

pub const PLATFORM_MIN: usize = 42;
pub const PLATFORM_MAX: usize = 57;
/// Blade columns start just outside the platform ring.
const BLADE_ORIGIN_X: usize = PLATFORM_MAX + 1;
const CENTERLINE_Y: usize = 50;
/// Largest transverse offset from the centerline that stays inside the grid.
pub const MAX_OFFSET: i16 = (GRID - 1 - CENTERLINE_Y) as i16;
/// Axial blade length in voxels.
const BLADE_LENGTH: usize = BASE_MAX as usize;

/// z-section boundaries, `floor(100 j / 6)`.
pub const SECTION_BOUNDS: [usize; 7] = [0, 16, 33, 50, 66, 83, 100];

/// One 100×100 occupancy plane, bit-packed row-major (`y * 100 + x`).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Layer {
    bits: Vec<u64>,
}

impl std::fmt::Debug for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Layer {{ enabled: {} }}", self.count())
    }
}

impl Default for Layer {
    fn default() -> Self {
        Self::empty()
    }
}

impl Layer {
    pub fn empty() -> Self {
        Self { bits: vec![0; WORDS] }
    }

    #[inline]
    fn index(x: usize, y: usize) -> usize {
        debug_assert!(x < GRID && y < GRID);
        y * GRID + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = Self::index(x, y);
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        let i = Self::index(x, y);
        if on {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of cells whose occupancy differs from `other`.
    pub fn mismatches(&self, other: &Layer) -> usize {
        self.bits.iter().zip(&other.bits).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }

    /// Quarter turn about the grid center, `(x, y) -> (y, 99 - x)`.
    pub fn rotated(&self) -> Layer {
        let mut out = Layer::empty();
        for (x, y) in self.cells() {
            out.set(y, GRID - 1 - x, true);
        }
        out
    }

    /// Enabled cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..LAYER_CELLS).filter(|&i| self.bits[i / 64] >> (i % 64) & 1 == 1).map(|i| (i % GRID, i / GRID))
    }

    /// Plain (ASCII) PBM bitmap, north (`y = 99`) at the top.
    pub fn to_pbm(&self) -> String {
        let mut out = String::with_capacity(LAYER_CELLS * 2 + 16);
        out.push_str("P1\n100 100\n");
        for y in (0..GRID).rev() {
            for x in 0..GRID {
                if x > 0 {
                    out.push(' ');
                }
                out.push(if self.get(x, y) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

/// 100³ boolean occupancy, stored as one [`Layer`] per z-slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    slices: Vec<Layer>,
}

impl Default for VoxelGrid {
    fn default() -> Self {
        Self::empty()
    }
}

impl VoxelGrid {
    pub fn empty() -> Self {
        Self { slices: vec![Layer::empty(); GRID] }
    }

    /// Every slice set to `layer`.
    pub fn extruded(layer: &Layer) -> Self {
        Self { slices: vec![layer.clone(); GRID] }
    }

    pub fn voxel_size_mm(&self) -> f64 {
        VOXEL_SIZE_MM
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.slices[z].get(x, y)
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        self.slices[z].set(x, y, on);
    }

    pub fn slice(&self, z: usize) -> &Layer {
        &self.slices[z]
    }

    pub fn slices(&self) -> &[Layer] {
        &self.slices
    }

    pub fn enabled_count(&self) -> usize {
        self.slices.iter().map(Layer::count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.iter().all(|s| s.bits.iter().all(|&w| w == 0))
    }

    /// The shared slice when all 100 slices are identical.
    pub fn uniform_layer(&self) -> Option<&Layer> {
        let first = &self.slices[0];
        self.slices[1..].iter().all(|s| s == first).then_some(first)
    }

    /// Voxels (out of 10⁶) with equal occupancy in both grids.
    pub fn matching_voxels(&self, other: &VoxelGrid) -> usize {
        let differing: usize = self.slices.iter().zip(&other.slices).map(|(a, b)| a.mismatches(b)).sum();
        GRID_CELLS - differing
    }
}

/// Transverse extent `[lower, upper]` of one blade segment, measured in
/// voxels from the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BladeBand {
    pub segment: usize,
    pub lower: i16,
    pub upper: i16,
}

impl BladeBand {
    pub fn height(&self) -> usize {
        (self.upper - self.lower + 1) as usize
    }
}

/// Axial span `[start, end)` of segment `i`, `floor(42 i / 10)`.
pub fn segment_span(i: usize) -> (usize, usize) {
    (BLADE_LENGTH * i / BASE_LEN, BLADE_LENGTH * (i + 1) / BASE_LEN)
}

/// Applies the three blade drawing rules segment by segment.
///
/// Segment 0 fills from the centerline up to its allele. Afterwards, with `u`
/// the current allele and `(lo, hi)` the previous band:
/// * `u >= hi`: `[max(0, hi - 2), u]`
/// * `u <= lo`: `[u, min(49, lo + 2)]`
/// * otherwise: `[max(0, u - 1), u]`
pub fn compute_blade_bands(base: &[i16; BASE_LEN]) -> Result<[BladeBand; BASE_LEN], GenomeError> {
    for (index, &value) in base.iter().enumerate() {
        if !(BASE_MIN..=BASE_MAX).contains(&value) {
            return Err(GenomeError::BaseOutOfRange { index, value: value.into() });
        }
    }
    let mut bands = [BladeBand { segment: 0, lower: 0, upper: base[0] }; BASE_LEN];
    for i in 1..BASE_LEN {
        let upper = base[i];
        let prev = bands[i - 1];
        let (lower, upper) = if upper >= prev.upper {
            ((prev.upper - 2).max(0), upper)
        } else if upper <= prev.lower {
            (upper, (prev.lower + 2).min(MAX_OFFSET))
        } else {
            ((upper - 1).max(0), upper)
        };
        bands[i] = BladeBand { segment: i, lower, upper };
    }
    Ok(bands)
}

fn platform_ring(layer: &mut Layer) {
    for x in PLATFORM_MIN..=PLATFORM_MAX {
        for y in PLATFORM_MIN..=PLATFORM_MAX {
            let edge = x == PLATFORM_MIN || x == PLATFORM_MAX || y == PLATFORM_MIN || y == PLATFORM_MAX;
            if edge {
                layer.set(x, y, true);
            }
        }
    }
}

/// Cells of the reference (east) blade.
pub fn blade_cells(base: &[i16; BASE_LEN]) -> Result<Vec<(usize, usize)>, GenomeError> {
    let bands = compute_blade_bands(base)?;
    let mut cells = Vec::new();
    for band in &bands {
        let (start, end) = segment_span(band.segment);
        for s in start..end {
            for t in band.lower..=band.upper {
                cells.push((BLADE_ORIGIN_X + s, CENTERLINE_Y + t as usize));
            }
        }
    }
    Ok(cells)
}

/// One z-slice: the platform ring plus four quarter-turned copies of the
/// reference blade.
pub fn build_layer(base: &[i16; BASE_LEN]) -> Result<Layer, GenomeError> {
    let mut layer = Layer::empty();
    platform_ring(&mut layer);
    for (x, y) in blade_cells(base)? {
        let (mut x, mut y) = (x, y);
        for _ in 0..4 {
            layer.set(x, y, true);
            (x, y) = (y, GRID - 1 - x);
        }
    }
    Ok(layer)
}

/// Base alleles for each z-section: one entry in z-uniform mode, six in
/// z-mode where section `j` adds `z[j-1]` to every allele of section `j-1`
/// and clamps to `[1, 42]`.
pub fn section_alleles(g: &Genome) -> Vec<[i16; BASE_LEN]> {
    let mut sections = vec![*g.base()];
    if let Some(z) = g.z_alleles() {
        for &shift in z {
            let prev = sections[sections.len() - 1];
            sections.push(prev.map(|a| (a + shift).clamp(BASE_MIN, BASE_MAX)));
        }
    }
    sections
}

pub fn build_phenotype(g: &Genome) -> VoxelGrid {
    let sections = section_alleles(g);
    let layers: Vec<Layer> =
        sections.iter().map(|alleles| build_layer(alleles).expect("genome alleles are validated")).collect();
    if layers.len() == 1 {
        return VoxelGrid::extruded(&layers[0]);
    }
    let mut slices = Vec::with_capacity(GRID);
    for (j, layer) in layers.iter().enumerate() {
        for _ in SECTION_BOUNDS[j]..SECTION_BOUNDS[j + 1] {
            slices.push(layer.clone());
        }
    }
    VoxelGrid { slices }
}

/// Enabled cells of a slice as `[[x, y], ...]` JSON-ready pairs.
pub fn slice_cells(layer: &Layer) -> Vec<[usize; 2]> {
    layer.cells().map(|(x, y)| [x, y]).collect()
}

/// Text table of a band list, mostly for debugging output.
pub fn describe_bands(bands: &[BladeBand]) -> String {
    let mut out = String::new();
    for b in bands {
        let (start, end) = segment_span(b.segment);
        let _ = writeln!(out, "segment {} s=[{start},{end}) t=[{},{}]", b.segment, b.lower, b.upper);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::genome::random_genome;

    const FIG1: [i16; 10] = [2, 2, 3, 4, 5, 8, 13, 20, 34, 40];

    fn bands_of(base: [i16; 10]) -> Vec<(i16, i16)> {
        compute_blade_bands(&base).unwrap().iter().map(|b| (b.lower, b.upper)).collect()
    }

    #[test]
    fn reference_genome_bands() {
        assert_eq!(
            bands_of(FIG1),
            vec![(0, 2), (0, 2), (0, 3), (1, 4), (2, 5), (3, 8), (6, 13), (11, 20), (18, 34), (32, 40)]
        );
    }

    #[test]
    fn all_ones_bands() {
        assert_eq!(bands_of([1; 10]), vec![(0, 1); 10]);
    }

    #[test]
    fn case_b_and_c() {
        // 10 sits inside [0, 30] -> C [9, 10]; 5 <= 9 -> B [5, 11];
        // 40 -> A [9, 40]; 41 -> A [38, 41]; 20 <= 38 -> B [20, 40];
        // 20 <= 20 -> B [20, 22]; 42 -> A [20, 42]; 1 -> B [1, 22]; 1 -> B [1, 3].
        let got = bands_of([30, 10, 5, 40, 41, 20, 20, 42, 1, 1]);
        assert_eq!(
            got,
            vec![(0, 30), (9, 10), (5, 11), (9, 40), (38, 41), (20, 40), (20, 22), (20, 42), (1, 22), (1, 3)]
        );
    }

    #[test]
    fn case_b_extends_above_previous_lower() {
        // [40, 42] from Case A; 41 inside -> C [40, 41]; 40 <= 40 -> B [40, 42].
        let got = bands_of([42, 42, 41, 40, 40, 40, 40, 40, 40, 40]);
        assert_eq!(got[2], (40, 41));
        assert_eq!(got[3], (40, 42));
        assert!(got.iter().all(|&(lo, hi)| lo <= hi && hi <= MAX_OFFSET));
    }

    #[test]
    fn monotone_alleles_take_case_a() {
        let base = [1, 3, 3, 7, 9, 12, 20, 21, 30, 42];
        let bands = compute_blade_bands(&base).unwrap();
        for i in 1..10 {
            assert_eq!(bands[i].upper, base[i]);
            assert_eq!(bands[i].lower, (bands[i - 1].upper - 2).max(0));
        }
    }

    #[test]
    fn out_of_range_allele_rejected() {
        let mut base = FIG1;
        base[4] = 43;
        assert!(matches!(compute_blade_bands(&base), Err(GenomeError::BaseOutOfRange { index: 4, .. })));
        base[4] = 0;
        assert!(build_layer(&base).is_err());
    }

    #[test]
    fn segment_lengths() {
        let lengths: Vec<usize> = (0..10).map(|i| segment_span(i).1 - segment_span(i).0).collect();
        assert_eq!(lengths, vec![4, 4, 4, 4, 5, 4, 4, 4, 4, 5]);
        assert_eq!(segment_span(9).1, 42);
    }

    #[test]
    fn platform_ring_has_sixty_cells() {
        let mut layer = Layer::empty();
        platform_ring(&mut layer);
        assert_eq!(layer.count(), 60);
        assert_eq!(layer.rotated(), layer);
        // Hollow interior.
        assert!(!layer.get(43, 43) && !layer.get(56, 56));
    }

    #[test]
    fn reference_layer_counts() {
        assert_eq!(blade_cells(&FIG1).unwrap().len(), 285);
        let layer = build_layer(&FIG1).unwrap();
        assert_eq!(layer.count(), 1200);
        assert_eq!(layer.rotated(), layer);
    }

    #[test]
    fn reference_phenotype_count() {
        let g = Genome::new(FIG1, None).unwrap();
        let grid = build_phenotype(&g);
        assert_eq!(grid.enabled_count(), 120_000);
        assert!(grid.uniform_layer().is_some());
    }

    #[test]
    fn zero_z_alleles_match_uniform() {
        let uniform = build_phenotype(&Genome::new(FIG1, None).unwrap());
        let zeroed = build_phenotype(&Genome::new(FIG1, Some([0; 5])).unwrap());
        assert_eq!(uniform, zeroed);
    }

    #[test]
    fn cumulative_clamped_z_transform() {
        let g = Genome::new([1; 10], Some([42, 0, 0, 0, 0])).unwrap();
        let sections = section_alleles(&g);
        assert_eq!(sections[0], [1; 10]);
        assert!(sections[1..].iter().all(|s| *s == [42; 10]));
        let grid = build_phenotype(&g);
        let top = build_layer(&[42; 10]).unwrap();
        assert_eq!(grid.slice(0), &build_layer(&[1; 10]).unwrap());
        assert_eq!(grid.slice(15), grid.slice(0));
        assert_eq!(grid.slice(16), &top);
        assert_eq!(grid.slice(99), &top);
        assert_ne!(grid.slice(0), grid.slice(16));
        assert!(grid.uniform_layer().is_none());

        // Clamping is applied before the next shift.
        let g = Genome::new([40; 10], Some([10, -5, 0, 0, 0])).unwrap();
        assert_eq!(section_alleles(&g)[2], [37; 10]);
    }

    #[test]
    fn random_phenotype_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut ring = Layer::empty();
        platform_ring(&mut ring);
        for i in 0..100 {
            let g = random_genome(&mut rng, i % 2 == 1);
            let grid = build_phenotype(&g);
            for z in [0, 16, 33, 50, 66, 83, 99] {
                let s = grid.slice(z);
                assert_eq!(&s.rotated(), s);
                assert!(ring.cells().all(|(x, y)| s.get(x, y)));
            }
            for (x, y) in blade_cells(g.base()).unwrap() {
                assert!(x >= 58 && (50..=99).contains(&y));
            }
            assert_eq!(build_phenotype(&g), grid);
        }
    }

    #[test]
    fn pbm_shape() {
        let pbm = build_layer(&FIG1).unwrap().to_pbm();
        let mut lines = pbm.lines();
        assert_eq!(lines.next(), Some("P1"));
        assert_eq!(lines.next(), Some("100 100"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 100);
        let ones: usize = rows.iter().map(|r| r.split(' ').filter(|c| *c == "1").count()).sum();
        assert_eq!(ones, 1200);
    }
}
