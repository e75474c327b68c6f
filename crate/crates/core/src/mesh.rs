//! Voxel grid to triangle mesh, umbrella Laplacian smoothing, and STL output.
//!
//! Extraction is plain face culling: every enabled voxel face whose neighbor
//! is empty becomes a quad, split into two triangles along the diagonal that
//! starts at the quad's smallest corner. Corners are welded by coordinate,
//! except where the surface touches itself along an edge or at a point;
//! there each sheet keeps its own vertex so that every edge stays shared by
//! exactly two triangles.

use std::collections::HashMap;
use std::io::Write;
use std::sync::OnceLock;

use crate::error::MeshError;
use crate::morphology::{VoxelGrid, GRID, VOXEL_SIZE_MM};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    /// Counter-clockwise when viewed from outside.
    pub triangles: Vec<[u32; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StlFormat {
    Binary,
    Ascii,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Enclosed volume by the divergence theorem, in mm³.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                dot(a, cross(b, c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_degrees(&self) -> HashMap<(u32, u32), usize> {
        let mut degrees = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *degrees.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        degrees
    }

    /// Every edge is used by exactly two triangles, in opposite directions.
    pub fn is_closed_manifold(&self) -> bool {
        let mut directed: HashMap<(u32, u32), usize> = HashMap::with_capacity(self.triangles.len() * 3);
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    pub fn bounding_box_volume(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (0..3).map(|k| (hi[k] - lo[k]).max(0.0)).product()
    }

    /// Sorted, de-duplicated neighbor lists derived from triangle edges.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut neighbors = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                neighbors[a as usize].push(b);
                neighbors[b as usize].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        neighbors
    }

    pub fn to_stl_bytes(&self, format: StlFormat) -> Result<Vec<u8>, MeshError> {
        let mut out = Vec::with_capacity(84 + self.triangles.len() * 50);
        write_stl(self, format, &mut out)?;
        Ok(out)
    }
}

fn cross(a: Point, b: Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

// Around a lattice corner the 2x2x2 block of voxels is indexed by octant
// `o`, at offset (o & 1, o >> 1 & 1, o >> 2 & 1) from the corner minus one.
// A boundary face at the corner separates solid octant `s` from empty
// octant `s ^ 1 << b` and gets slot `3 s + b`. The corner's six incident
// edges are numbered `2 k + side`: axis `k`, pointing away from the corner
// towards the octants whose bit `k` equals `side`.
//
// Faces meeting at an edge are paired; faces chained by pairings around the
// corner form a cycle and each cycle gets its own vertex. An edge with four
// faces (solid octants diagonal across it) is paired by default with both
// faces of the same solid octant. When that pinches the corner at both ends
// of the edge, the edge is paired around the empty octants instead.

const NO_FACE: u8 = u8::MAX;

struct CornerTable {
    /// `[mask][flips][slot]`: smallest slot of the face's cycle.
    labels: Vec<[u8; 24]>,
    /// `[mask]`: bit `e` set when edge `e` has four faces.
    ambiguous: [u8; 256],
    /// `[mask]`: bit `e` set when, with default pairing, both solid octants
    /// at ambiguous edge `e` lie on the same cycle.
    pinched: [u8; 256],
}

fn edge_octants(e: usize) -> [usize; 4] {
    let (k, side) = (e / 2, e % 2);
    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
    // Cyclic order around the edge.
    [(0, 0), (1, 0), (1, 1), (0, 1)].map(|(di, dj)| side << k | di << i | dj << j)
}

fn face_slot(a: usize, b: usize, mask: usize) -> Option<usize> {
    let (sa, sb) = (mask >> a & 1 == 1, mask >> b & 1 == 1);
    let bit = (a ^ b).trailing_zeros() as usize;
    match (sa, sb) {
        (true, false) => Some(a * 3 + bit),
        (false, true) => Some(b * 3 + bit),
        _ => None,
    }
}

fn find(parent: &mut [u8; 24], x: u8) -> u8 {
    let mut r = x;
    while parent[r as usize] != r {
        r = parent[r as usize];
    }
    parent[x as usize] = r;
    r
}

fn corner_cycles(mask: usize, flips: usize) -> [u8; 24] {
    let mut parent = [NO_FACE; 24];
    for s in (0..8).filter(|s| mask >> s & 1 == 1) {
        for b in 0..3 {
            if mask >> (s ^ 1 << b) & 1 == 0 {
                parent[s * 3 + b] = (s * 3 + b) as u8;
            }
        }
    }
    let union = |parent: &mut [u8; 24], a: usize, b: usize| {
        let (ra, rb) = (find(parent, a as u8), find(parent, b as u8));
        parent[ra.max(rb) as usize] = ra.min(rb);
    };
    for e in 0..6 {
        let ring = edge_octants(e);
        // faces[q] lies between ring[q] and ring[q + 1].
        let faces: Vec<Option<usize>> = (0..4).map(|q| face_slot(ring[q], ring[(q + 1) % 4], mask)).collect();
        let present: Vec<usize> = (0..4).filter(|&q| faces[q].is_some()).collect();
        match present.len() {
            2 => union(&mut parent, faces[present[0]].unwrap(), faces[present[1]].unwrap()),
            4 => {
                let solid_first = mask >> ring[0] & 1 == 1;
                // Faces q-1 and q flank ring[q]; pair them around the solid
                // octants by default, around the empty ones when flipped.
                let flipped = flips >> e & 1 == 1;
                let start = if solid_first != flipped { 0 } else { 1 };
                for q in [start, start + 2] {
                    union(&mut parent, faces[(q + 3) % 4].unwrap(), faces[q].unwrap());
                }
            }
            _ => {}
        }
    }
    let mut labels = [NO_FACE; 24];
    for slot in 0..24 {
        if parent[slot] != NO_FACE {
            labels[slot] = find(&mut parent, slot as u8);
        }
    }
    labels
}

fn corner_table() -> &'static CornerTable {
    static TABLE: OnceLock<CornerTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut labels = Vec::with_capacity(256 * 64);
        for mask in 0..256 {
            for flips in 0..64 {
                labels.push(corner_cycles(mask, flips));
            }
        }
        let mut ambiguous = [0u8; 256];
        let mut pinched = [0u8; 256];
        for mask in 0..256 {
            let default = &labels[mask * 64];
            for e in 0..6 {
                let ring = edge_octants(e);
                let solid: Vec<bool> = ring.iter().map(|&o| mask >> o & 1 == 1).collect();
                if solid[0] == solid[2] && solid[1] == solid[3] && solid[0] != solid[1] {
                    ambiguous[mask] |= 1 << e;
                    let q = if solid[0] { 0 } else { 1 };
                    let a = face_slot(ring[q], ring[q + 1], mask).unwrap();
                    let b = face_slot(ring[q + 2], ring[(q + 3) % 4], mask).unwrap();
                    if default[a] == default[b] {
                        pinched[mask] |= 1 << e;
                    }
                }
            }
        }
        CornerTable { labels, ambiguous, pinched }
    })
}

fn occupied(grid: &VoxelGrid, x: i32, y: i32, z: i32) -> bool {
    let n = GRID as i32;
    (0..n).contains(&x) && (0..n).contains(&y) && (0..n).contains(&z) && grid.get(x as usize, y as usize, z as usize)
}

fn corner_mask(grid: &VoxelGrid, c: [i32; 3]) -> usize {
    let mut mask = 0;
    for o in 0..8 {
        if occupied(grid, c[0] - 1 + (o & 1), c[1] - 1 + (o >> 1 & 1), c[2] - 1 + (o >> 2 & 1)) {
            mask |= 1 << o;
        }
    }
    mask
}

struct Welder<'a> {
    grid: &'a VoxelGrid,
    corners: HashMap<[i32; 3], (usize, usize)>,
    index: HashMap<([i32; 3], u8), u32>,
    vertices: Vec<Point>,
}

impl Welder<'_> {
    /// Mask and flipped edges at `corner`.
    fn corner(&mut self, corner: [i32; 3]) -> (usize, usize) {
        if let Some(&known) = self.corners.get(&corner) {
            return known;
        }
        let table = corner_table();
        let mask = corner_mask(self.grid, corner);
        let mut flips = 0;
        for e in 0..6 {
            if table.pinched[mask] >> e & 1 == 0 {
                continue;
            }
            let (k, side) = (e / 2, e % 2);
            let mut other = corner;
            other[k] += if side == 1 { 1 } else { -1 };
            let far = corner_mask(self.grid, other);
            if table.pinched[far] >> (2 * k + 1 - side) & 1 == 1 {
                flips |= 1 << e;
            }
        }
        debug_assert_eq!(flips & !usize::from(table.ambiguous[mask]), 0);
        self.corners.insert(corner, (mask, flips));
        (mask, flips)
    }

    /// Vertex at `corner` for the face of `voxel` normal to `axis`.
    fn vertex(&mut self, corner: [i32; 3], voxel: [i32; 3], axis: usize) -> u32 {
        let (mask, flips) = self.corner(corner);
        let own =
            ((voxel[0] - corner[0] + 1) | (voxel[1] - corner[1] + 1) << 1 | (voxel[2] - corner[2] + 1) << 2) as usize;
        let label = corner_table().labels[mask * 64 + flips][own * 3 + axis];
        debug_assert_ne!(label, NO_FACE);
        let next = self.vertices.len() as u32;
        let id = *self.index.entry((corner, label)).or_insert(next);
        if id == next {
            self.vertices.push(corner.map(|c| f64::from(c) * VOXEL_SIZE_MM));
        }
        id
    }
}

/// Boxy surface of the enabled voxels, in millimetres.
pub fn voxels_to_mesh(grid: &VoxelGrid) -> Result<TriangleMesh, MeshError> {
    if grid.is_empty() {
        return Err(MeshError::EmptyGrid);
    }
    let mut welder = Welder { grid, corners: HashMap::new(), index: HashMap::new(), vertices: Vec::new() };
    let mut triangles = Vec::new();
    for z in 0..GRID {
        for (x, y) in grid.slice(z).cells() {
            let p = [x as i32, y as i32, z as i32];
            for axis in 0..3 {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                for positive in [false, true] {
                    let mut n = p;
                    n[axis] += if positive { 1 } else { -1 };
                    if occupied(grid, n[0], n[1], n[2]) {
                        continue;
                    }
                    let mut q0 = p;
                    if positive {
                        q0[axis] += 1;
                    }
                    let mut qu = q0;
                    qu[u] += 1;
                    let mut quv = qu;
                    quv[v] += 1;
                    let mut qv = q0;
                    qv[v] += 1;
                    let quad = if positive { [q0, qu, quv, qv] } else { [q0, qv, quv, qu] };
                    let ids = quad.map(|c| welder.vertex(c, p, axis));
                    triangles.push([ids[0], ids[1], ids[2]]);
                    triangles.push([ids[0], ids[2], ids[3]]);
                }
            }
        }
    }
    Ok(TriangleMesh { vertices: welder.vertices, triangles })
}

/// Uniform umbrella smoothing: each step moves every vertex to the mean of
/// its edge neighbors, all vertices updated from the previous positions.
pub fn laplacian_smooth(mesh: &TriangleMesh, steps: i64) -> Result<TriangleMesh, MeshError> {
    if steps < 0 {
        return Err(MeshError::NegativeSteps(steps));
    }
    let neighbors = mesh.vertex_neighbors();
    let mut current = mesh.vertices.clone();
    let mut next = current.clone();
    for _ in 0..steps {
        for (i, ring) in neighbors.iter().enumerate() {
            if ring.is_empty() {
                next[i] = current[i];
                continue;
            }
            let mut sum = [0.0; 3];
            for &j in ring {
                let p = current[j as usize];
                sum[0] += p[0];
                sum[1] += p[1];
                sum[2] += p[2];
            }
            let k = ring.len() as f64;
            next[i] = [sum[0] / k, sum[1] / k, sum[2] / k];
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(TriangleMesh { vertices: current, triangles: mesh.triangles.clone() })
}

fn facet_normal(mesh: &TriangleMesh, t: &[u32; 3]) -> [f32; 3] {
    let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
    let n = cross(sub(b, a), sub(c, a));
    let len = dot(n, n).sqrt();
    if len > 0.0 {
        n.map(|x| (x / len) as f32)
    } else {
        [0.0; 3]
    }
}

const STL_HEADER: &[u8] = b"binary STL, voxel turbine phenotype, units mm";

/// Binary: 80-byte header, `u32` count, then 50 bytes per facet. ASCII:
/// `solid` / `facet normal` / `outer loop` text.
pub fn write_stl<W: Write>(mesh: &TriangleMesh, format: StlFormat, out: &mut W) -> Result<(), MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::EmptyGrid);
    }
    match format {
        StlFormat::Binary => {
            let mut header = [0u8; 80];
            header[..STL_HEADER.len()].copy_from_slice(STL_HEADER);
            out.write_all(&header)?;
            out.write_all(&(mesh.triangles.len() as u32).to_le_bytes())?;
            let mut record = [0u8; 50];
            for t in &mesh.triangles {
                let normal = facet_normal(mesh, t);
                let mut floats = normal.to_vec();
                for &i in t {
                    floats.extend(mesh.vertices[i as usize].map(|c| c as f32));
                }
                for (k, f) in floats.iter().enumerate() {
                    record[k * 4..k * 4 + 4].copy_from_slice(&f.to_le_bytes());
                }
                record[48] = 0;
                record[49] = 0;
                out.write_all(&record)?;
            }
        }
        StlFormat::Ascii => {
            writeln!(out, "solid turbine")?;
            for t in &mesh.triangles {
                let n = facet_normal(mesh, t);
                writeln!(out, "  facet normal {:e} {:e} {:e}", n[0], n[1], n[2])?;
                writeln!(out, "    outer loop")?;
                for &i in t {
                    let v = mesh.vertices[i as usize].map(|c| c as f32);
                    writeln!(out, "      vertex {:e} {:e} {:e}", v[0], v[1], v[2])?;
                }
                writeln!(out, "    endloop")?;
                writeln!(out, "  endfacet")?;
            }
            writeln!(out, "endsolid turbine")?;
        }
    }
    Ok(())
}

/// `<hash>.stl` for the raw mesh, `<hash>-s<steps>.stl` when smoothed.
pub fn stl_file_name(genome_hash: &str, smooth_steps: u32) -> String {
    if smooth_steps == 0 {
        format!("{genome_hash}.stl")
    } else {
        format!("{genome_hash}-s{smooth_steps}.stl")
    }
}
