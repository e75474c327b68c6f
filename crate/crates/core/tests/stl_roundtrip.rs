//! Reads exported STL back with a minimal reader written here, independent
//! of the writer.

use vawt_core::{build_phenotype, laplacian_smooth, voxels_to_mesh, write_stl, Genome, StlFormat, TriangleMesh};

struct Facet {
    normal: [f32; 3],
    vertices: [[f32; 3]; 3],
}

fn read_binary(bytes: &[u8]) -> Vec<Facet> {
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    assert_eq!(bytes.len(), 84 + 50 * count, "length does not match facet count");
    let f = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    (0..count)
        .map(|i| {
            let base = 84 + 50 * i;
            let v = |k: usize| [f(base + 12 * k), f(base + 12 * k + 4), f(base + 12 * k + 8)];
            assert_eq!(&bytes[base + 48..base + 50], &[0, 0]);
            Facet { normal: v(0), vertices: [v(1), v(2), v(3)] }
        })
        .collect()
}

fn read_ascii(text: &str) -> Vec<Facet> {
    let mut lines = text.lines().map(str::trim);
    assert!(lines.next().unwrap().starts_with("solid"));
    let floats = |line: &str, prefix: &str| -> [f32; 3] {
        let rest = line.strip_prefix(prefix).unwrap_or_else(|| panic!("expected {prefix:?}, got {line:?}"));
        let v: Vec<f32> = rest.split_whitespace().map(|t| t.parse().unwrap()).collect();
        [v[0], v[1], v[2]]
    };
    let mut facets = Vec::new();
    loop {
        let line = lines.next().unwrap();
        if line.starts_with("endsolid") {
            break;
        }
        let normal = floats(line, "facet normal");
        assert_eq!(lines.next(), Some("outer loop"));
        let vertices = [(); 3].map(|_| floats(lines.next().unwrap(), "vertex"));
        assert_eq!(lines.next(), Some("endloop"));
        assert_eq!(lines.next(), Some("endfacet"));
        facets.push(Facet { normal, vertices });
    }
    facets
}

fn mesh_for(genome: &str, steps: i64) -> TriangleMesh {
    let g: Genome = genome.parse().unwrap();
    laplacian_smooth(&voxels_to_mesh(&build_phenotype(&g)).unwrap(), steps).unwrap()
}

fn check_against(mesh: &TriangleMesh, facets: &[Facet]) {
    assert_eq!(facets.len(), mesh.triangles.len());
    for (facet, t) in facets.iter().zip(&mesh.triangles) {
        for (read, &i) in facet.vertices.iter().zip(t) {
            let expected = mesh.vertices[i as usize].map(|c| c as f32);
            assert_eq!(*read, expected);
        }
        // The stored normal agrees with the right-hand winding.
        let [a, b, c] = facet.vertices.map(|v| v.map(f64::from));
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let stored = facet.normal.map(f64::from);
        let cos = (n[0] * stored[0] + n[1] * stored[1] + n[2] * stored[2]) / len;
        assert!(cos > 0.999, "normal disagrees with winding: cos = {cos}");
    }
}

#[test]
fn binary_roundtrip_raw_and_smoothed() {
    for steps in [0, 5] {
        let mesh = mesh_for("[2,2,3,4,5,8,13,20,34,40]", steps);
        let mut bytes = Vec::new();
        write_stl(&mesh, StlFormat::Binary, &mut bytes).unwrap();
        check_against(&mesh, &read_binary(&bytes));
    }
}

#[test]
fn ascii_roundtrip() {
    let mesh = mesh_for("[5,9,1,30,12,12,40,3,3,18,0,-7,20,4,-30]", 2);
    let mut bytes = Vec::new();
    write_stl(&mesh, StlFormat::Ascii, &mut bytes).unwrap();
    check_against(&mesh, &read_ascii(&String::from_utf8(bytes).unwrap()));
}

#[test]
fn raw_reference_mesh_volume() {
    let mesh = mesh_for("[2,2,3,4,5,8,13,20,34,40]", 0);
    // 1200 cells per layer, 100 layers, 0.3 mm cubes.
    assert!((mesh.signed_volume() - 120_000.0 * 0.027).abs() < 1e-6);
    let smoothed = mesh_for("[2,2,3,4,5,8,13,20,34,40]", 50);
    assert_eq!(smoothed.triangles, mesh.triangles);
    assert_ne!(smoothed.vertices, mesh.vertices);
}
