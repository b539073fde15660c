//! Labelled triangle meshes and their ASCII PLY / OBJ readers and writers.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, io_err, Error, Result};
use crate::geometry::Vec3;

/// Per-face semantic class. Numeric values match the label-image classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum FaceClass {
    Parenchyma = 1,
    Vessel = 2,
}

impl FaceClass {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(Self::Parenchyma),
            2 => Some(Self::Vessel),
            _ => None,
        }
    }

    pub fn label(self) -> u8 {
        self as u8
    }

    fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "1" | "class_1" | "class1" | "parenchyma" => Some(Self::Parenchyma),
            "2" | "class_2" | "class2" | "vessel" | "vessels" => Some(Self::Vessel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    face_class: Vec<FaceClass>,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, face_class: Vec<FaceClass>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(invalid("mesh needs at least 3 vertices"));
        }
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite("mesh vertex coordinate".into()));
        }
        if faces.len() != face_class.len() {
            return Err(invalid(format!(
                "{} faces but {} face classes",
                faces.len(),
                face_class.len()
            )));
        }
        let n = vertices.len() as u32;
        if let Some((i, f)) = faces.iter().enumerate().find(|(_, f)| f.iter().any(|&v| v >= n)) {
            return Err(invalid(format!("face {i} references vertex out of range: {f:?}")));
        }
        if !face_class.contains(&FaceClass::Vessel) {
            return Err(invalid("mesh has no vessel-labelled face"));
        }
        Ok(Self {
            vertices,
            faces,
            face_class,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_classes(&self) -> &[FaceClass] {
        &self.face_class
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Largest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                best = best.max((a - b).norm_squared());
            }
        }
        best.sqrt()
    }

    /// Same mesh with every vertex shifted by `offset`.
    pub fn translated(&self, offset: Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            ..self.clone()
        }
    }

    /// Reads `.ply` or `.obj` by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        let parsed = match ext.as_str() {
            "ply" => parse_ply(&text),
            "obj" => parse_obj(&text),
            _ => Err(format!("unsupported mesh extension `{ext}`")),
        };
        match parsed {
            Ok(m) => Ok(m),
            Err(message) => Err(Error::Format {
                path: path.to_path_buf(),
                message,
            }),
        }
        .and_then(|(v, f, c)| Self::new(v, f, c))
    }

    pub fn save_ply(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ply()).map_err(io_err(path))
    }

    pub fn to_ply(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ply\nformat ascii 1.0");
        let _ = writeln!(s, "element vertex {}", self.vertices.len());
        s.push_str("property double x\nproperty double y\nproperty double z\n");
        let _ = writeln!(s, "element face {}", self.faces.len());
        s.push_str("property list uchar int vertex_indices\nproperty uchar class\nend_header\n");
        for v in &self.vertices {
            let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
        }
        for (f, c) in self.faces.iter().zip(&self.face_class) {
            let _ = writeln!(s, "3 {} {} {} {}", f[0], f[1], f[2], c.label());
        }
        s
    }
}

type Parsed = (Vec<Vec3>, Vec<[u32; 3]>, Vec<FaceClass>);

fn fan(poly: &[u32], class: FaceClass, faces: &mut Vec<[u32; 3]>, classes: &mut Vec<FaceClass>) {
    for k in 1..poly.len().saturating_sub(1) {
        faces.push([poly[0], poly[k], poly[k + 1]]);
        classes.push(class);
    }
}

fn parse_ply(text: &str) -> std::result::Result<Parsed, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing `ply` magic".into());
    }
    #[derive(Default)]
    struct Element {
        name: String,
        count: usize,
        props: Vec<(String, bool)>,
    }
    let mut elements: Vec<Element> = Vec::new();
    for line in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(format!("only ASCII PLY is supported, got `{fmt}`"))
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count `{count}`"))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or("property before element")?
                .props
                .push((name.to_string(), true)),
            ["property", _, name] => elements
                .last_mut()
                .ok_or("property before element")?
                .props
                .push((name.to_string(), false)),
            ["end_header"] => break,
            _ => {}
        }
    }
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut classes = Vec::new();
    let mut body = lines.filter(|l| !l.trim().is_empty());
    for el in &elements {
        for row in 0..el.count {
            let line = body
                .next()
                .ok_or_else(|| format!("unexpected end of data in element `{}`", el.name))?;
            let mut toks = line.split_whitespace();
            let mut scalars: Vec<(&str, f64)> = Vec::new();
            let mut list: Option<Vec<u32>> = None;
            for (name, is_list) in &el.props {
                if *is_list {
                    let n: usize = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| format!("bad list length in {} row {row}", el.name))?;
                    let items = (0..n)
                        .map(|_| toks.next().and_then(|t| t.parse::<u32>().ok()))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| format!("bad list item in {} row {row}", el.name))?;
                    if name == "vertex_indices" || name == "vertex_index" {
                        list = Some(items);
                    }
                } else {
                    let v: f64 = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| format!("bad `{name}` value in {} row {row}", el.name))?;
                    scalars.push((name.as_str(), v));
                }
            }
            let get = |k: &str| scalars.iter().find(|(n, _)| *n == k).map(|(_, v)| *v);
            match el.name.as_str() {
                "vertex" => {
                    let (x, y, z) = (get("x"), get("y"), get("z"));
                    match (x, y, z) {
                        (Some(x), Some(y), Some(z)) => vertices.push(Vec3::new(x, y, z)),
                        _ => return Err(format!("vertex row {row} lacks x/y/z")),
                    }
                }
                "face" => {
                    let poly = list.ok_or_else(|| format!("face row {row} lacks vertex_indices"))?;
                    let code = get("class")
                        .ok_or_else(|| format!("face row {row} lacks the `class` property"))?;
                    let class = FaceClass::from_code(code as i64)
                        .ok_or_else(|| format!("face row {row}: unknown class {code}"))?;
                    fan(&poly, class, &mut faces, &mut classes);
                }
                _ => {}
            }
        }
    }
    Ok((vertices, faces, classes))
}

/// OBJ faces take their class from the most recent `usemtl` or `g` name
/// (`parenchyma`/`vessel`, `class_1`/`class_2`, or a bare `1`/`2`).
fn parse_obj(text: &str) -> std::result::Result<Parsed, String> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut classes = Vec::new();
    let mut current: Option<FaceClass> = None;
    for (lineno, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<f64> = toks
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| format!("line {}: bad vertex", lineno + 1))?;
                if c.len() != 3 {
                    return Err(format!("line {}: vertex needs 3 coordinates", lineno + 1));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("usemtl") | Some("g") => {
                if let Some(name) = toks.next() {
                    current = FaceClass::from_name(name).or(current);
                }
            }
            Some("f") => {
                let class = current
                    .ok_or_else(|| format!("line {}: face before any class group", lineno + 1))?;
                let poly = toks
                    .map(|t| {
                        let idx: i64 = t
                            .split('/')
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| format!("line {}: bad face index", lineno + 1))?;
                        let resolved = if idx < 0 {
                            vertices.len() as i64 + idx
                        } else {
                            idx - 1
                        };
                        u32::try_from(resolved).map_err(|_| format!("line {}: bad face index", lineno + 1))
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                fan(&poly, class, &mut faces, &mut classes);
            }
            _ => {}
        }
    }
    Ok((vertices, faces, classes))
}
