//! Text scene format: `#` comments, one `key values...` pair per line,
//! grouped into `camera`, `environment`, `material <name>`, `sphere`, `quad`,
//! `triangle` and `options` blocks. See `docs/scene-format.md`.

use std::collections::HashMap;
use std::fmt::Write as _;

use pstf_core::bsdf::Material;
use pstf_core::math::{Rgb, Vec3};
use pstf_core::scene::{Camera, Primitive, Scene, SceneError, Shape};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown material `{name}`")]
    UnknownMaterial { line: usize, name: String },
    #[error("line {line}: {error}")]
    Invalid { line: usize, error: SceneError },
    #[error("{0}")]
    Scene(SceneError),
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::UnknownMaterial { line, .. }
            | ParseError::Invalid { line, .. } => Some(*line),
            ParseError::Scene(_) => None,
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, message: message.into() }
}

struct Block {
    kind: String,
    name: Option<String>,
    line: usize,
    fields: Vec<(usize, String, Vec<String>)>,
}

impl Block {
    fn take(&self, key: &str) -> Option<(usize, &[String])> {
        self.fields.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_slice()))
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ParseError> {
        let mut seen = Vec::new();
        for (line, key, _) in &self.fields {
            if !allowed.contains(&key.as_str()) {
                return Err(syntax(*line, format!("unknown key `{key}` in {} block", self.kind)));
            }
            if seen.contains(&key) {
                return Err(syntax(*line, format!("duplicate key `{key}`")));
            }
            seen.push(key);
        }
        Ok(())
    }

    fn required(&self, key: &str) -> Result<(usize, &[String]), ParseError> {
        self.take(key).ok_or_else(|| syntax(self.line, format!("{} block needs `{key}`", self.kind)))
    }

    fn real(&self, key: &str) -> Result<f64, ParseError> {
        let (line, v) = self.required(key)?;
        reals::<1>(line, key, v).map(|[x]| x)
    }

    fn vec3(&self, key: &str) -> Result<Vec3, ParseError> {
        let (line, v) = self.required(key)?;
        reals::<3>(line, key, v).map(|[x, y, z]| Vec3::new(x, y, z))
    }

    fn rgb_or_black(&self, key: &str) -> Result<Rgb, ParseError> {
        match self.take(key) {
            Some((line, v)) => reals::<3>(line, key, v).map(|[r, g, b]| Rgb::new(r, g, b)),
            None => Ok(Rgb::BLACK),
        }
    }

    fn flag(&self, key: &str) -> Result<bool, ParseError> {
        match self.take(key) {
            None => Ok(false),
            Some((line, v)) => match v {
                [s] if s == "true" => Ok(true),
                [s] if s == "false" => Ok(false),
                _ => Err(syntax(line, format!("`{key}` expects true or false"))),
            },
        }
    }
}

fn reals<const N: usize>(line: usize, key: &str, v: &[String]) -> Result<[f64; N], ParseError> {
    if v.len() != N {
        return Err(syntax(line, format!("`{key}` expects {N} number(s), got {}", v.len())));
    }
    let mut out = [0.0f64; N];
    for (o, s) in out.iter_mut().zip(v) {
        *o = s.parse().map_err(|_| syntax(line, format!("`{key}`: `{s}` is not a number")))?;
        if !o.is_finite() {
            return Err(syntax(line, format!("`{key}`: value must be finite")));
        }
    }
    Ok(out)
}

fn blocks(text: &str) -> Result<Vec<Block>, ParseError> {
    let mut out = Vec::new();
    let mut open: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match (&mut open, tokens.as_slice()) {
            (None, [kind, "{"]) => {
                open = Some(Block { kind: kind.to_string(), name: None, line, fields: Vec::new() });
            }
            (None, [kind, name, "{"]) => {
                open = Some(Block { kind: kind.to_string(), name: Some(name.to_string()), line, fields: Vec::new() });
            }
            (None, _) => return Err(syntax(line, "expected `<block> {` or `<block> <name> {`")),
            (Some(_), ["}"]) => out.push(open.take().expect("open block")),
            (Some(b), [key, values @ ..]) => {
                if values.contains(&"{") || values.contains(&"}") || *key == "{" {
                    return Err(syntax(line, "blocks cannot nest; `}` must stand alone"));
                }
                b.fields.push((line, key.to_string(), values.iter().map(|s| s.to_string()).collect()));
            }
            (Some(_), []) => unreachable!("empty lines are skipped"),
        }
    }
    if let Some(b) = open {
        return Err(syntax(b.line, format!("{} block is not closed", b.kind)));
    }
    Ok(out)
}

/// Parses and validates a scene description.
pub fn parse_scene(text: &str) -> Result<Scene, ParseError> {
    let blocks = blocks(text)?;
    let mut camera = None;
    let mut environment = None;
    let mut allow_no_emitters = false;
    let mut materials = Vec::new();
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut shapes: Vec<(usize, Shape, usize, String)> = Vec::new();

    for b in &blocks {
        if b.kind != "material" && b.name.is_some() {
            return Err(syntax(b.line, format!("{} block takes no name", b.kind)));
        }
        match b.kind.as_str() {
            "camera" => {
                b.check_keys(&["origin", "look_at", "up", "fov", "resolution"])?;
                if camera.is_some() {
                    return Err(syntax(b.line, "second camera block"));
                }
                let (line, res) = b.required("resolution")?;
                let [w, h] = reals::<2>(line, "resolution", res)?;
                if w.fract() != 0.0 || h.fract() != 0.0 || w < 1.0 || h < 1.0 || w > 1e6 || h > 1e6 {
                    return Err(syntax(line, "`resolution` expects two positive integers"));
                }
                camera = Some((
                    b.line,
                    Camera {
                        origin: b.vec3("origin")?,
                        look_at: b.vec3("look_at")?,
                        up: b.vec3("up")?,
                        vertical_fov: b.real("fov")?,
                        width: w as u32,
                        height: h as u32,
                    },
                ));
            }
            "environment" => {
                b.check_keys(&["radiance"])?;
                if environment.is_some() {
                    return Err(syntax(b.line, "second environment block"));
                }
                environment = Some(b.rgb_or_black("radiance")?);
            }
            "options" => {
                b.check_keys(&["allow_no_emitters"])?;
                allow_no_emitters = b.flag("allow_no_emitters")?;
            }
            "material" => {
                b.check_keys(&["diffuse", "glossy", "exponent", "emission"])?;
                let name = b.name.clone().ok_or_else(|| syntax(b.line, "material block needs a name"))?;
                if name.parse::<usize>().is_ok() {
                    return Err(syntax(b.line, "material names cannot be plain numbers"));
                }
                if names.insert(name.clone(), materials.len()).is_some() {
                    return Err(syntax(b.line, format!("material `{name}` defined twice")));
                }
                let exponent = match b.take("exponent") {
                    Some(_) => b.real("exponent")?,
                    None => Material::default().exponent,
                };
                let m = Material {
                    diffuse: b.rgb_or_black("diffuse")?,
                    glossy: b.rgb_or_black("glossy")?,
                    exponent,
                    emission: b.rgb_or_black("emission")?,
                };
                m.validate().map_err(|reason| ParseError::Invalid {
                    line: b.line,
                    error: SceneError::InvalidMaterial { material: materials.len(), reason },
                })?;
                materials.push(m);
            }
            "sphere" => {
                b.check_keys(&["center", "radius", "inward", "material"])?;
                let shape =
                    Shape::Sphere { center: b.vec3("center")?, radius: b.real("radius")?, inward: b.flag("inward")? };
                shapes.push((b.line, shape, b.required("material")?.0, material_ref(b)?));
            }
            "quad" => {
                b.check_keys(&["origin", "edge_u", "edge_v", "material"])?;
                let shape =
                    Shape::Quad { origin: b.vec3("origin")?, edge_u: b.vec3("edge_u")?, edge_v: b.vec3("edge_v")? };
                shapes.push((b.line, shape, b.required("material")?.0, material_ref(b)?));
            }
            "triangle" => {
                b.check_keys(&["v0", "v1", "v2", "material"])?;
                let shape = Shape::Triangle { v0: b.vec3("v0")?, v1: b.vec3("v1")?, v2: b.vec3("v2")? };
                shapes.push((b.line, shape, b.required("material")?.0, material_ref(b)?));
            }
            other => return Err(syntax(b.line, format!("unknown block `{other}`"))),
        }
    }

    let (camera_line, camera) = camera.ok_or_else(|| syntax(1, "scene has no camera block"))?;
    let mut lines = Vec::with_capacity(shapes.len());
    let mut primitives = Vec::with_capacity(shapes.len());
    for (line, shape, ref_line, name) in shapes {
        let material = match (names.get(&name), name.parse::<usize>()) {
            (Some(&i), _) => i,
            (None, Ok(i)) if i < materials.len() => i,
            _ => return Err(ParseError::UnknownMaterial { line: ref_line, name }),
        };
        lines.push(line);
        primitives.push(Primitive { shape, material });
    }
    Scene::new(primitives, materials, camera, environment, allow_no_emitters).map_err(|e| {
        let line = match &e {
            SceneError::DegeneratePrimitive { primitive } => Some(lines[*primitive]),
            SceneError::UnknownMaterial { primitive, .. } => Some(lines[*primitive]),
            SceneError::InvalidCamera { .. } => Some(camera_line),
            _ => None,
        };
        match line {
            Some(line) => ParseError::Invalid { line, error: e },
            None => ParseError::Scene(e),
        }
    })
}

fn material_ref(b: &Block) -> Result<String, ParseError> {
    match b.required("material")? {
        (_, [name]) => Ok(name.clone()),
        (line, _) => Err(syntax(line, "`material` expects one name or index")),
    }
}

fn v3(v: Vec3) -> String {
    format!("{:?} {:?} {:?}", v.x, v.y, v.z)
}

fn c3(c: Rgb) -> String {
    format!("{:?} {:?} {:?}", c.r, c.g, c.b)
}

/// Writes a scene in the text format. Numbers use the shortest
/// representation that reads back to the same `f64`, so the output
/// re-parses to an identical scene. Materials are named by `names` when
/// given, else `m0`, `m1`, ...
pub fn write_scene(scene: &Scene, names: Option<&[&str]>) -> String {
    let mut s = String::new();
    let c = scene.camera();
    let _ = writeln!(
        s,
        "camera {{\n  origin {}\n  look_at {}\n  up {}\n  fov {:?}\n  resolution {} {}\n}}",
        v3(c.origin),
        v3(c.look_at),
        v3(c.up),
        c.vertical_fov,
        c.width,
        c.height
    );
    if let Some(env) = scene.environment() {
        let _ = writeln!(s, "\nenvironment {{\n  radiance {}\n}}", c3(env));
    }
    if !scene.has_emitters() {
        let _ = writeln!(s, "\noptions {{\n  allow_no_emitters true\n}}");
    }
    let name = |i: usize| match names.and_then(|n| n.get(i)) {
        Some(n) => n.to_string(),
        None => format!("m{i}"),
    };
    for (i, m) in scene.materials().iter().enumerate() {
        let _ = writeln!(s, "\nmaterial {} {{", name(i));
        if !m.diffuse.is_black() {
            let _ = writeln!(s, "  diffuse {}", c3(m.diffuse));
        }
        if !m.glossy.is_black() {
            let _ = writeln!(s, "  glossy {}", c3(m.glossy));
        }
        if m.exponent != Material::default().exponent {
            let _ = writeln!(s, "  exponent {:?}", m.exponent);
        }
        if !m.emission.is_black() {
            let _ = writeln!(s, "  emission {}", c3(m.emission));
        }
        s.push_str("}\n");
    }
    for p in scene.primitives() {
        match p.shape {
            Shape::Sphere { center, radius, inward } => {
                let _ = write!(s, "\nsphere {{\n  center {}\n  radius {:?}\n", v3(center), radius);
                if inward {
                    s.push_str("  inward true\n");
                }
            }
            Shape::Quad { origin, edge_u, edge_v } => {
                let _ =
                    write!(s, "\nquad {{\n  origin {}\n  edge_u {}\n  edge_v {}\n", v3(origin), v3(edge_u), v3(edge_v));
            }
            Shape::Triangle { v0, v1, v2 } => {
                let _ = write!(s, "\ntriangle {{\n  v0 {}\n  v1 {}\n  v2 {}\n", v3(v0), v3(v1), v3(v2));
            }
        }
        let _ = writeln!(s, "  material {}\n}}", name(p.material));
    }
    s
}
