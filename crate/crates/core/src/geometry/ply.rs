//! ASCII PLY reader/writer for vertex clouds (`x y z [nx ny nz]`).
//!
//! The slow-time timestamp travels in a `comment timestamp <t>` header line.
//! Binary PLY is rejected.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{GeometryError, Point3, PointCloudFrame};
use crate::io::{read_text, sig9, write_text};

pub fn save_ply(cloud: &PointCloudFrame, path: &Path) -> Result<(), GeometryError> {
    write_text(path, &to_ply_string(cloud))?;
    Ok(())
}

pub fn load_ply(path: &Path) -> Result<PointCloudFrame, GeometryError> {
    parse_ply(&read_text(path)?)
}

pub(crate) fn to_ply_string(cloud: &PointCloudFrame) -> String {
    let mut s = String::with_capacity(64 + cloud.len() * 100);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "comment timestamp {}", sig9(cloud.timestamp));
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.normals.is_some() {
        s.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(s, "{} {} {}", sig9(p.x), sig9(p.y), sig9(p.z));
        if let Some(ns) = &cloud.normals {
            let n = ns[i];
            let _ = write!(s, " {} {} {}", sig9(n.x), sig9(n.y), sig9(n.z));
        }
        s.push('\n');
    }
    s
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Prop>,
}

enum Prop {
    Scalar(String),
    List,
}

pub(crate) fn parse_ply(text: &str) -> Result<PointCloudFrame, GeometryError> {
    let err = |line: usize, msg: &str| GeometryError::ParseError {
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(err(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut timestamp = 0.0;
    let mut saw_format = false;
    let mut header_end = None;
    for (ln, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => saw_format = true,
            ["format", other, ..] => {
                return Err(err(ln, &format!("unsupported format '{other}', only ascii")))
            }
            ["comment", "timestamp", t] => {
                timestamp = t.parse().map_err(|_| err(ln, "bad timestamp comment"))?
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| err(ln, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ..] => elements
                .last_mut()
                .ok_or_else(|| err(ln, "property before element"))?
                .props
                .push(Prop::List),
            ["property", _ty, name] => elements
                .last_mut()
                .ok_or_else(|| err(ln, "property before element"))?
                .props
                .push(Prop::Scalar(name.to_string())),
            ["end_header"] => {
                header_end = Some(ln);
                break;
            }
            _ => return Err(err(ln, &format!("unrecognized header line '{line}'"))),
        }
    }
    let header_end = header_end.ok_or_else(|| err(0, "missing end_header"))?;
    if !saw_format {
        return Err(err(header_end, "missing format line"));
    }
    let vi = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| err(header_end, "no vertex element"))?;
    let find = |e: &Element, name: &str| {
        e.props
            .iter()
            .position(|p| matches!(p, Prop::Scalar(n) if n == name))
    };
    let vertex = &elements[vi];
    let (x, y, z) = match (find(vertex, "x"), find(vertex, "y"), find(vertex, "z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(err(header_end, "vertex element lacks x, y or z")),
    };
    let normal_idx = match (find(vertex, "nx"), find(vertex, "ny"), find(vertex, "nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        (None, None, None) => None,
        _ => return Err(err(header_end, "partial normal properties")),
    };
    if vertex.props.iter().any(|p| matches!(p, Prop::List)) {
        return Err(err(header_end, "list properties on vertex are unsupported"));
    }

    let mut points = Vec::with_capacity(vertex.count);
    let mut normals = normal_idx.map(|_| Vec::with_capacity(vertex.count));
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for (ei, element) in elements.iter().enumerate() {
        for _ in 0..element.count {
            let (ln, line) = body
                .next()
                .ok_or_else(|| err(0, &format!("unexpected end of file in '{}'", element.name)))?;
            if ei != vi {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(ln, &format!("bad number: {e}")))?;
            if vals.len() != element.props.len() {
                return Err(err(
                    ln,
                    &format!("expected {} values, found {}", element.props.len(), vals.len()),
                ));
            }
            points.push(Point3::new(vals[x], vals[y], vals[z]));
            if let (Some(ns), Some((a, b, c))) = (normals.as_mut(), normal_idx) {
                let n = Vector3::new(vals[a], vals[b], vals[c]);
                let norm = n.norm();
                if !(norm > 0.0) {
                    return Err(err(ln, "zero normal"));
                }
                // re-normalize away the 9-digit serialization error
                ns.push(n / norm);
            }
        }
    }
    let frame = PointCloudFrame {
        points,
        normals,
        timestamp,
    };
    frame.validate()?;
    Ok(frame)
}
