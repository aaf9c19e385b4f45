//! Template-driven skeleton generation.
//!
//! A mapping directory holds one descriptor (`*.gemm`) and the template files
//! it names. Descriptor lines:
//!
//! ```text
//! mapping <name> target "<label>" extension <ext>
//! template <kind> <role|*> <file>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ArchElement, Architecture, Direction, ElementKind, RoleTag, Stage};
use crate::parser::render_behaviour;

pub const MANIFEST: &str = "MANIFEST";

/// Placeholders a template may use.
pub const PLACEHOLDERS: [&str; 5] = ["name", "ports", "connections", "behaviour_stub", "children"];

/// Substituted for placeholders with nothing to show.
const NONE: &str = "(none)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodegenMapping {
    pub name: String,
    pub target_label: String,
    pub extension: String,
    /// `None` role: fallback for every role of that kind.
    pub templates: BTreeMap<(ElementKind, Option<RoleTag>), String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("missing-template({kind}, {role})", kind = .0.as_str(), role = .1.as_str())]
    MissingTemplate(ElementKind, RoleTag),
    #[error("unsubstituted-placeholder: `{placeholder}` in {file}")]
    UnsubstitutedPlaceholder { file: String, placeholder: String },
    #[error("codegen needs a GESM model, got {}", .0.as_str())]
    WrongStage(Stage),
    #[error("duplicate output path `{0}`")]
    DuplicatePath(String),
    #[error("{origin}:{line}: {message}")]
    Descriptor { origin: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: std::io::Error) -> CodegenError {
    CodegenError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl CodegenMapping {
    pub fn new(name: &str, target_label: &str, extension: &str) -> Self {
        CodegenMapping {
            name: name.to_string(),
            target_label: target_label.to_string(),
            extension: extension.to_string(),
            templates: BTreeMap::new(),
        }
    }

    pub fn with_template(mut self, kind: ElementKind, role: Option<RoleTag>, text: &str) -> Self {
        self.templates.insert((kind, role), text.to_string());
        self
    }

    pub fn template_for(&self, kind: ElementKind, role: RoleTag) -> Option<&str> {
        self.templates
            .get(&(kind, Some(role)))
            .or_else(|| self.templates.get(&(kind, None)))
            .map(String::as_str)
    }

    /// Parses a descriptor; `load` fetches template text by file name.
    pub fn parse(
        text: &str,
        origin: &str,
        mut load: impl FnMut(&str) -> Result<String, CodegenError>,
    ) -> Result<Self, CodegenError> {
        let mut header: Option<CodegenMapping> = None;
        let mut pending = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let err = |message: String| CodegenError::Descriptor {
                origin: origin.to_string(),
                line: i + 1,
                message,
            };
            let line = raw.split("--").next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["mapping", name, "target", rest @ ..] => {
                    if header.is_some() {
                        return Err(err("second `mapping` line".into()));
                    }
                    let after = line.split_once("target").map(|x| x.1.trim()).unwrap_or("");
                    let (label, tail) = after
                        .strip_prefix('"')
                        .and_then(|s| s.split_once('"'))
                        .ok_or_else(|| err("target label must be quoted".into()))?;
                    let tail: Vec<&str> = tail.split_whitespace().collect();
                    let ["extension", ext] = tail.as_slice() else {
                        return Err(err(format!("expected `extension <ext>` after the label, found {rest:?}")));
                    };
                    header = Some(CodegenMapping::new(name, label, ext));
                }
                ["template", kind, role, file] => {
                    let kind = ElementKind::parse(kind).ok_or_else(|| err(format!("unknown element kind `{kind}`")))?;
                    let role = match *role {
                        "*" => None,
                        r => Some(RoleTag::parse(r).ok_or_else(|| err(format!("unknown role tag `{r}`")))?),
                    };
                    pending.push((kind, role, file.to_string()));
                }
                _ => return Err(err(format!("malformed line `{line}`"))),
            }
        }
        let mut m = header.ok_or_else(|| CodegenError::Descriptor {
            origin: origin.to_string(),
            line: 0,
            message: "missing `mapping` line".into(),
        })?;
        for (kind, role, file) in pending {
            let text = load(&file)?;
            m.templates.insert((kind, role), text);
        }
        Ok(m)
    }

    /// Loads the single `*.gemm` descriptor in `dir` and its templates.
    pub fn load_dir(dir: &Path) -> Result<Self, CodegenError> {
        let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
        let mut descriptors: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "gemm"))
            .collect();
        descriptors.sort();
        let [desc] = descriptors.as_slice() else {
            return Err(CodegenError::Io {
                path: dir.display().to_string(),
                message: format!("expected exactly one .gemm descriptor, found {}", descriptors.len()),
            });
        };
        let text = fs::read_to_string(desc).map_err(|e| io_err(desc, e))?;
        CodegenMapping::parse(&text, &desc.display().to_string(), |file| {
            let p = dir.join(file);
            fs::read_to_string(&p).map_err(|e| io_err(&p, e))
        })
    }
}

/// Generated files in output order; the manifest comes last.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileSet {
    pub files: Vec<(String, Vec<u8>)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl FileSet {
    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.iter().find(|(p, _)| p == path).map(|(_, c)| c.as_slice())
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(p, _)| p.as_str())
    }

    pub fn manifest(&self) -> Option<&str> {
        self.get(MANIFEST).and_then(|b| std::str::from_utf8(b).ok())
    }

    /// True when the manifest lists every other file with its current digest.
    pub fn verify(&self) -> bool {
        let expected = manifest_text(self.files.iter().filter(|(p, _)| p != MANIFEST));
        self.manifest() == Some(expected.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (p, c) in &self.files {
            fs::write(dir.join(p), c)?;
        }
        Ok(())
    }
}

fn manifest_text<'a>(files: impl Iterator<Item = &'a (String, Vec<u8>)>) -> String {
    let mut s = String::new();
    for (p, c) in files {
        let _ = writeln!(s, "{}  {p}", sha256_hex(c));
    }
    s
}

fn or_none(s: String) -> String {
    if s.is_empty() {
        NONE.to_string()
    } else {
        s
    }
}

fn ports_text(e: &ArchElement) -> String {
    let mut lines = Vec::new();
    for p in &e.ports {
        for c in p.connections() {
            let dir = match c.direction {
                Direction::Incoming => "in",
                Direction::Outgoing => "out",
            };
            lines.push(format!("{}::{} {dir} {}", p.name, c.name, c.payload));
        }
    }
    lines.join("\n")
}

fn connections_text(arch: &Architecture, e: &ArchElement) -> String {
    let mut lines: Vec<String> = arch
        .channels
        .iter()
        .filter(|c| c.from.head() == e.name || c.to.head() == e.name)
        .map(|c| format!("{} -> {}", c.from, c.to))
        .collect();
    lines.sort();
    lines.dedup();
    lines.join("\n")
}

fn values(arch: &Architecture, e: &ArchElement) -> BTreeMap<&'static str, String> {
    let children: Vec<&str> = e.children.iter().map(|c| c.name.as_str()).collect();
    BTreeMap::from([
        ("name", e.name.clone()),
        ("ports", or_none(ports_text(e))),
        ("connections", or_none(connections_text(arch, e))),
        (
            "behaviour_stub",
            or_none(e.behaviour.as_ref().map(render_behaviour).unwrap_or_default()),
        ),
        ("children", or_none(children.join(", "))),
    ])
}

/// Single pass over `template`; substituted text is never rescanned.
/// Multi-line values keep the line prefix of their marker. Also returns the
/// first marker of the template that has no value.
fn substitute(template: &str, vals: &BTreeMap<&'static str, String>) -> (String, Option<String>) {
    let mut out = String::with_capacity(template.len());
    let mut unknown = None;
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) if vals.contains_key(after[..end].trim()) => {
                // continuation lines repeat whatever precedes the marker on its line
                let prefix = out[out.rfind('\n').map_or(0, |i| i + 1)..].to_string();
                let value = &vals[after[..end].trim()];
                out.push_str(&value.replace('\n', &format!("\n{prefix}")));
                rest = &after[end + 2..];
            }
            found => {
                let end = found.map_or_else(|| after.char_indices().nth(30).map_or(after.len(), |(i, _)| i), |e| e + 2);
                unknown.get_or_insert_with(|| format!("{{{{{}", &after[..end]));
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    (out, unknown)
}

pub fn generate_code(arch: &Architecture, mapping: &CodegenMapping) -> Result<FileSet, CodegenError> {
    if arch.stage != Stage::Gesm {
        return Err(CodegenError::WrongStage(arch.stage));
    }
    let mut fs = FileSet::default();
    for e in &arch.elements {
        let role = e.effective_role();
        let template = mapping
            .template_for(e.kind, role)
            .ok_or(CodegenError::MissingTemplate(e.kind, role))?;
        let path = format!("{}.{}", e.name, mapping.extension);
        let (text, unknown) = substitute(template, &values(arch, e));
        if let Some(placeholder) = unknown {
            return Err(CodegenError::UnsubstitutedPlaceholder { file: path, placeholder });
        }
        if path == MANIFEST || fs.get(&path).is_some() {
            return Err(CodegenError::DuplicatePath(path));
        }
        fs.files.push((path, text.into_bytes()));
    }
    let manifest = manifest_text(fs.files.iter());
    fs.files.push((MANIFEST.to_string(), manifest.into_bytes()));
    Ok(fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> CodegenMapping {
        CodegenMapping::new("m", "txt", "txt").with_template(ElementKind::Component, None, "C {{name}} [{{children}}]\n")
    }

    #[test]
    fn empty_gesm_yields_only_manifest() {
        let mut a = Architecture::new("e");
        a.stage = Stage::Gesm;
        let fs = generate_code(&a, &mapping()).unwrap();
        assert_eq!(fs.paths().collect::<Vec<_>>(), vec![MANIFEST]);
        assert_eq!(fs.manifest(), Some(""));
        assert!(fs.verify());
    }

    #[test]
    fn missing_connector_template() {
        let mut a = Architecture::new("e");
        a.stage = Stage::Gesm;
        a.elements.push(ArchElement::new("X", ElementKind::Connector));
        assert_eq!(
            generate_code(&a, &mapping()).unwrap_err().to_string(),
            "missing-template(connector, plain)"
        );
    }

    #[test]
    fn unknown_placeholder_is_reported() {
        let mut a = Architecture::new("e");
        a.stage = Stage::Gesm;
        a.elements.push(ArchElement::new("X", ElementKind::Component));
        let m = CodegenMapping::new("m", "t", "t").with_template(ElementKind::Component, None, "{{name}} {{owner}}");
        assert!(matches!(
            generate_code(&a, &m),
            Err(CodegenError::UnsubstitutedPlaceholder { placeholder, .. }) if placeholder == "{{owner}}"
        ));
    }

    #[test]
    fn substitution_and_manifest() {
        let mut a = Architecture::new("e");
        a.stage = Stage::Gesm;
        a.elements.push(ArchElement::new("X", ElementKind::Component));
        let fs = generate_code(&a, &mapping()).unwrap();
        assert_eq!(fs.get("X.txt"), Some(&b"C X [(none)]\n"[..]));
        let digest = sha256_hex(b"C X [(none)]\n");
        assert_eq!(fs.manifest().unwrap(), format!("{digest}  X.txt\n"));
    }

    #[test]
    fn multiline_values_keep_prefix() {
        let vals = BTreeMap::from([("ports", "a\nb".to_string())]);
        assert_eq!(substitute("x\n// {{ports}}\n", &vals).0, "x\n// a\n// b\n");
    }

    #[test]
    fn braces_inside_values_are_kept() {
        let vals = BTreeMap::from([("name", "{{name}}".to_string())]);
        assert_eq!(substitute("<{{name}}>", &vals), ("<{{name}}>".to_string(), None));
    }

    #[test]
    fn descriptor_parsing() {
        let m = CodegenMapping::parse(
            "-- skeletons\nmapping J target \"java-skeleton\" extension java\ntemplate component service svc.tmpl\ntemplate connector * conn.tmpl\n",
            "d",
            |f| Ok(format!("<{f}>")),
        )
        .unwrap();
        assert_eq!(m.target_label, "java-skeleton");
        assert_eq!(m.template_for(ElementKind::Component, RoleTag::Service), Some("<svc.tmpl>"));
        assert_eq!(m.template_for(ElementKind::Connector, RoleTag::Plain), Some("<conn.tmpl>"));
        assert_eq!(m.template_for(ElementKind::Component, RoleTag::Plain), None);
        assert!(CodegenMapping::parse("template component * x\n", "d", |_| Ok(String::new())).is_err());
    }
}
