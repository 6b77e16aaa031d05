//! ASCII tetmesh format.
//!
//! Header `tetmesh 1`, then `v x y z` vertex lines, `t i j k l` tet lines
//! (0-based ids), and optional `p face-index label` patch lines. The parse is
//! strict: unknown or malformed lines are errors.

use super::{MeshError, SimplicialComplex3};
use nalgebra::Vector3;

pub fn parse_tetmesh(text: &str) -> Result<SimplicialComplex3, MeshError> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, msg: &str| MeshError::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(0, "empty file"))?;
    if header.trim() != "tetmesh 1" {
        return Err(err(hline, "expected header `tetmesh 1`"));
    }
    let mut verts = Vec::new();
    let mut tets = Vec::new();
    let mut patches: Vec<(usize, String)> = Vec::new();
    for (ln, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut c = [0.0f64; 3];
                for ci in c.iter_mut() {
                    *ci = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(ln, "bad vertex line"))?;
                }
                if parts.next().is_some() {
                    return Err(err(ln, "trailing tokens on vertex line"));
                }
                verts.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("t") => {
                let mut t = [0usize; 4];
                for ti in t.iter_mut() {
                    *ti = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(ln, "bad tet line"))?;
                }
                if parts.next().is_some() {
                    return Err(err(ln, "trailing tokens on tet line"));
                }
                tets.push(t);
            }
            Some("p") => {
                let fid: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(ln, "bad patch line"))?;
                let label = parts
                    .next()
                    .ok_or_else(|| err(ln, "patch line missing label"))?;
                if parts.next().is_some() {
                    return Err(err(ln, "trailing tokens on patch line"));
                }
                patches.push((fid, label.to_string()));
            }
            _ => return Err(err(ln, "unknown line kind")),
        }
    }
    let mut k = SimplicialComplex3::build(verts, tets)?;
    for (bface_index, label) in patches {
        let fid = *k
            .boundary_faces
            .get(bface_index)
            .ok_or_else(|| err(0, "patch face index out of range"))?;
        k.patch_labels.insert(fid, label);
    }
    Ok(k)
}

pub fn write_tetmesh(k: &SimplicialComplex3) -> String {
    let mut out = String::from("tetmesh 1\n");
    for v in &k.vertices {
        out.push_str(&format!("v {:.17} {:.17} {:.17}\n", v.x, v.y, v.z));
    }
    for (t, s) in k.tets.iter().zip(&k.tet_signs) {
        // restore a positively oriented vertex order
        if *s > 0 {
            out.push_str(&format!("t {} {} {} {}\n", t[0], t[1], t[2], t[3]));
        } else {
            out.push_str(&format!("t {} {} {} {}\n", t[0], t[2], t[1], t[3]));
        }
    }
    for (bi, fid) in k.boundary_faces.iter().enumerate() {
        if let Some(label) = k.patch_labels.get(fid) {
            out.push_str(&format!("p {} {}\n", bi, label));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_cube;

    #[test]
    fn round_trip_cube() {
        let k = unit_cube(1);
        let text = write_tetmesh(&k);
        let k2 = parse_tetmesh(&text).unwrap();
        assert_eq!(k.num_tets(), k2.num_tets());
        assert_eq!(k.edges, k2.edges);
        assert_eq!(k.faces, k2.faces);
    }

    #[test]
    fn unknown_line_is_error() {
        let text = "tetmesh 1\nv 0 0 0\nq nonsense\n";
        assert!(matches!(
            parse_tetmesh(text),
            Err(MeshError::Parse { .. })
        ));
    }

    #[test]
    fn bad_header_is_error() {
        assert!(parse_tetmesh("tetmesh 2\n").is_err());
    }
}
