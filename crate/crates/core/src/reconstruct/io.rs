//! Text exports for meshes and slices. Everything is plain ASCII with fixed
//! float formatting so repeated runs produce byte-identical files.

use std::fs;
use std::path::Path;

use super::{ReconstructError, SliceField, TriangleMesh};

fn write_text<P: AsRef<Path>>(path: P, text: &str) -> Result<(), ReconstructError> {
    let path_str = path.as_ref().display().to_string();
    fs::write(&path, text).map_err(|source| ReconstructError::Io {
        path: path_str,
        source,
    })
}

/// Wavefront OBJ: vertex lines then 1-based face lines.
pub fn save_obj<P: AsRef<Path>>(mesh: &TriangleMesh, path: P) -> Result<(), ReconstructError> {
    let mut out = String::new();
    out.push_str(&format!(
        "# {} vertices, {} triangles, {} degenerate dropped\n",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.degenerate_dropped
    ));
    for v in &mesh.vertices {
        out.push_str(&format!("v {:.8e} {:.8e} {:.8e}\n", v.x, v.y, v.z));
    }
    for t in &mesh.triangles {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    write_text(path, &out)
}

/// ASCII PLY with the same content as the OBJ export.
pub fn save_ply<P: AsRef<Path>>(mesh: &TriangleMesh, path: P) -> Result<(), ReconstructError> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    out.push_str(&format!("element face {}\n", mesh.triangles.len()));
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in &mesh.vertices {
        out.push_str(&format!("{:.8e} {:.8e} {:.8e}\n", v.x, v.y, v.z));
    }
    for t in &mesh.triangles {
        out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    write_text(path, &out)
}

/// Gray value of a signed distance: white saturates one meter out, black one
/// meter in, 128 at the surface.
pub fn shade(sdf: f64) -> u8 {
    if sdf >= 0.0 {
        128 + (127.0 * sdf.min(1.0)) as u8
    } else {
        127 - (127.0 * (-sdf).min(1.0)) as u8
    }
}

/// Portable graymap (P2). Rows run along y so the image is x-right, y-down.
pub fn save_pgm<P: AsRef<Path>>(slice: &SliceField, path: P) -> Result<(), ReconstructError> {
    let (nx, ny) = slice.resolution;
    let mut out = String::new();
    out.push_str(&format!("P2\n{nx} {ny}\n255\n"));
    for iy in 0..ny {
        let mut row = Vec::with_capacity(nx);
        for ix in 0..nx {
            row.push(shade(slice.values[slice.index(ix, iy)]).to_string());
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Slice values as `x,y,sdf` rows, one per lattice point, x-major.
pub fn save_slice_csv<P: AsRef<Path>>(
    slice: &SliceField,
    path: P,
) -> Result<(), ReconstructError> {
    let (nx, ny) = slice.resolution;
    let mut out = String::from("x,y,sdf\n");
    for ix in 0..nx {
        for iy in 0..ny {
            let p = slice.lattice_point(ix, iy);
            out.push_str(&format!(
                "{:.8e},{:.8e},{:.8e}\n",
                p.x,
                p.y,
                slice.values[slice.index(ix, iy)]
            ));
        }
    }
    write_text(path, &out)
}
