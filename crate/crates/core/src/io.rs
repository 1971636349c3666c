//! Delimited-text formats and run manifests.
//!
//! Feature files: optional `# classes=a;b;c` and `# split=train|test` comment
//! lines, then a header `f0,…,f{n-1},label[,group][,id]`. Head files: header
//! `class,w0,…,w{n-1}[,bias]`, one row per class; the `bias` column is the
//! bias flag. Floats are written with 17 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::ClassifierHead;
use crate::metrics::{LabeledFeatureSet, PointCloudInstance, Split};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn parse_err(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, column, message: message.into() }
}

struct Table {
    comments: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path, text: &str) -> Result<Table> {
    let comments = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').trim().split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, e.position().map_or(1, |p| p.line()), 0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { comments, header, rows })
}

fn parse_f64(path: &Path, line: u64, column: usize, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| parse_err(path, line, column, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, column, format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn parse_usize(path: &Path, line: u64, column: usize, s: &str) -> Result<usize> {
    s.parse().map_err(|_| parse_err(path, line, column, format!("`{s}` is not a non-negative integer")))
}

fn comment<'a>(t: &'a Table, key: &str) -> Option<&'a str> {
    t.comments.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Reads a feature file. With `classes = None` the class list comes from the
/// `# classes=` line, else from the order of first appearance.
pub fn read_feature_set(path: &Path, classes: Option<&[String]>) -> Result<LabeledFeatureSet<f64>> {
    parse_feature_set(path, &read_text(path)?, classes)
}

pub fn parse_feature_set(path: &Path, text: &str, classes: Option<&[String]>) -> Result<LabeledFeatureSet<f64>> {
    let t = read_table(path, text)?;
    let label_col = t.header.iter().position(|h| h == "label").ok_or_else(|| parse_err(path, 1, 0, "missing `label` column"))?;
    for (k, h) in t.header[..label_col].iter().enumerate() {
        if *h != format!("f{k}") {
            return Err(parse_err(path, 1, k + 1, format!("expected header `f{k}`, found `{h}`")));
        }
    }
    let extra = &t.header[label_col + 1..];
    let group_col = extra.iter().position(|h| h == "group").map(|p| p + label_col + 1);
    let id_col = extra.iter().position(|h| h == "id").map(|p| p + label_col + 1);
    if let Some(bad) = extra.iter().position(|h| h != "group" && h != "id") {
        return Err(parse_err(path, 1, label_col + bad + 2, format!("unexpected column `{}`", extra[bad])));
    }

    let fixed: Option<Vec<String>> = classes
        .map(<[String]>::to_vec)
        .or_else(|| comment(&t, "classes").map(|c| c.split(';').map(str::to_string).collect()));
    let mut names = fixed.clone().unwrap_or_default();
    let mut vectors = Vec::with_capacity(t.rows.len());
    let mut labels = Vec::with_capacity(t.rows.len());
    let mut groups = Vec::new();
    let mut ids = Vec::new();
    for (line, row) in &t.rows {
        let v = row[..label_col]
            .iter()
            .enumerate()
            .map(|(k, s)| parse_f64(path, *line, k + 1, s))
            .collect::<Result<Vec<_>>>()?;
        let name = &row[label_col];
        let label = match names.iter().position(|n| n == name) {
            Some(l) => l,
            None if fixed.is_none() => {
                names.push(name.clone());
                names.len() - 1
            }
            None => return Err(Error::UnknownLabel { path: path.display().to_string(), line: *line, label: name.clone() }),
        };
        vectors.push(v);
        labels.push(label);
        if let Some(c) = group_col {
            groups.push(parse_usize(path, *line, c + 1, &row[c])?);
        }
        if let Some(c) = id_col {
            ids.push(parse_usize(path, *line, c + 1, &row[c])?);
        }
    }
    let mut set = LabeledFeatureSet::new(vectors, labels, names)?;
    if group_col.is_some() {
        set = set.with_groups(groups)?;
    }
    if id_col.is_some() {
        set = set.with_ids(ids)?;
    }
    let split = match comment(&t, "split") {
        Some("test") => Split::Test,
        _ => Split::Train,
    };
    Ok(set.with_split(split))
}

pub fn format_feature_set(set: &LabeledFeatureSet<f64>) -> String {
    let mut out = String::new();
    out.push_str(&format!("# classes={}\n", set.class_names().join(";")));
    out.push_str(&format!("# split={}\n", if set.split() == Split::Test { "test" } else { "train" }));
    let mut header: Vec<String> = (0..set.dim()).map(|k| format!("f{k}")).collect();
    header.push("label".into());
    if set.groups().is_some() {
        header.push("group".into());
    }
    if set.ids().is_some() {
        header.push("id".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (r, v) in set.vectors().iter().enumerate() {
        let mut fields: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
        fields.push(set.class_names()[set.labels()[r]].clone());
        if let Some(g) = set.groups() {
            fields.push(g[r].to_string());
        }
        if let Some(i) = set.ids() {
            fields.push(i[r].to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_feature_set(path: &Path, set: &LabeledFeatureSet<f64>) -> Result<()> {
    write_text(path, &format_feature_set(set))
}

pub fn read_head(path: &Path) -> Result<ClassifierHead<f64>> {
    parse_head(path, &read_text(path)?)
}

pub fn parse_head(path: &Path, text: &str) -> Result<ClassifierHead<f64>> {
    let t = read_table(path, text)?;
    if t.header.first().map(String::as_str) != Some("class") {
        return Err(parse_err(path, 1, 1, "first column must be `class`"));
    }
    let has_bias = t.header.last().map(String::as_str) == Some("bias");
    let n = t.header.len() - 1 - has_bias as usize;
    for k in 0..n {
        if t.header[k + 1] != format!("w{k}") {
            return Err(parse_err(path, 1, k + 2, format!("expected header `w{k}`, found `{}`", t.header[k + 1])));
        }
    }
    let mut names: Vec<String> = Vec::new();
    let mut weights = Vec::new();
    let mut bias = Vec::new();
    for (line, row) in &t.rows {
        if names.contains(&row[0]) {
            return Err(Error::DuplicateClassName(row[0].clone()));
        }
        names.push(row[0].clone());
        weights.push(row[1..=n].iter().enumerate().map(|(k, s)| parse_f64(path, *line, k + 2, s)).collect::<Result<Vec<_>>>()?);
        if has_bias {
            bias.push(parse_f64(path, *line, n + 2, &row[n + 1])?);
        }
    }
    ClassifierHead::new(weights, has_bias.then_some(bias), names)
}

pub fn format_head(head: &ClassifierHead<f64>) -> String {
    let mut header = vec!["class".to_string()];
    header.extend((0..head.dim()).map(|k| format!("w{k}")));
    if head.has_bias() {
        header.push("bias".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..head.n_classes() {
        let mut fields = vec![head.class_names()[i].clone()];
        fields.extend(head.row(i).iter().map(|&x| fmt_f64(x)));
        if let Some(b) = head.bias() {
            fields.push(fmt_f64(b[i]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_head(path: &Path, head: &ClassifierHead<f64>) -> Result<()> {
    write_text(path, &format_head(head))
}

/// Point clouds: header `x,y,z,part,instance`, one row per point; instances
/// keep their order of first appearance.
pub fn read_point_clouds(path: &Path) -> Result<Vec<PointCloudInstance<f64>>> {
    let t = read_table(path, &read_text(path)?)?;
    let expected = ["x", "y", "z", "part", "instance"];
    if t.header != expected {
        return Err(parse_err(path, 1, 0, format!("header must be `{}`", expected.join(","))));
    }
    let mut order: Vec<String> = Vec::new();
    let mut clouds: Vec<(Vec<[f64; 3]>, Vec<usize>)> = Vec::new();
    for (line, row) in &t.rows {
        let p = [parse_f64(path, *line, 1, &row[0])?, parse_f64(path, *line, 2, &row[1])?, parse_f64(path, *line, 3, &row[2])?];
        let part = parse_usize(path, *line, 4, &row[3])?;
        let k = match order.iter().position(|i| *i == row[4]) {
            Some(k) => k,
            None => {
                order.push(row[4].clone());
                clouds.push((Vec::new(), Vec::new()));
                order.len() - 1
            }
        };
        clouds[k].0.push(p);
        clouds[k].1.push(part);
    }
    order.into_iter().zip(clouds).map(|(id, (pts, parts))| PointCloudInstance::new(id, pts, parts)).collect()
}

/// One row of a correlation table: `[group,]name,c_r,s_r,l_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub group: Option<String>,
    pub name: String,
    pub c_r: f64,
    pub s_r: f64,
    pub l_r: f64,
}

pub fn read_ratio_table(path: &Path) -> Result<Vec<RatioRow>> {
    parse_ratio_table(path, &read_text(path)?)
}

pub fn parse_ratio_table(path: &Path, text: &str) -> Result<Vec<RatioRow>> {
    let t = read_table(path, text)?;
    let col = |name: &str| t.header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| parse_err(path, 1, 0, format!("missing `{name}` column")));
    let (name, c, s, l) = (need("name")?, need("c_r")?, need("s_r")?, need("l_r")?);
    let group = col("group");
    t.rows
        .iter()
        .map(|(line, row)| {
            Ok(RatioRow {
                group: group.map(|g| row[g].clone()),
                name: row[name].clone(),
                c_r: parse_f64(path, *line, c + 1, &row[c])?,
                s_r: parse_f64(path, *line, s + 1, &row[s])?,
                l_r: parse_f64(path, *line, l + 1, &row[l])?,
            })
        })
        .collect()
}

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// A reproducible description of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub schema_version: u32,
    pub command: String,
    pub params: serde_json::Value,
    #[serde(default)]
    pub inputs: Vec<InputDigest>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub outputs: Vec<PathBuf>,
    #[serde(default)]
    pub notes: String,
}

impl ExperimentManifest {
    pub fn new(command: impl Into<String>, params: serde_json::Value) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA,
            command: command.into(),
            params,
            inputs: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
            notes: String::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest { path: path.to_path_buf(), sha256 });
        Ok(())
    }

    /// Loads a manifest and checks every input digest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })?;
        if m.schema_version != MANIFEST_SCHEMA {
            return Err(Error::BadSpec(format!("unsupported manifest schema {}", m.schema_version)));
        }
        m.verify()?;
        Ok(m)
    }

    pub fn verify(&self) -> Result<()> {
        for input in &self.inputs {
            let actual = sha256_file(&input.path)?;
            if actual != input.sha256 {
                return Err(Error::DigestMismatch { path: input.path.clone(), expected: input.sha256.clone(), actual });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json { path: path.into(), source })?;
        write_text(path, &(text + "\n"))
    }
}

/// Reads any JSON document.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn feature_round_trip_is_exact() {
        let v = vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-300, std::f64::consts::PI]];
        let set = LabeledFeatureSet::new(v, vec![1, 0], vec!["cat".into(), "dog".into()]).unwrap().with_groups(vec![0, 3]).unwrap();
        let text = format_feature_set(&set);
        let back = parse_feature_set(p(), &text, None).unwrap();
        assert_eq!(back, set);
        assert_eq!(format_feature_set(&back), text);
    }

    #[test]
    fn ragged_row_reports_line() {
        let text = "f0,f1,label\n1,2,a\n3,b\n";
        match parse_feature_set(p(), text, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_column() {
        match parse_feature_set(p(), "f0,f1,label\n1,x,a\n", None) {
            Err(Error::Parse { line: 2, column: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_label_with_fixed_classes() {
        let classes = vec!["a".to_string()];
        assert!(matches!(
            parse_feature_set(p(), "f0,label\n1,b\n", Some(&classes)),
            Err(Error::UnknownLabel { line: 2, .. })
        ));
    }

    #[test]
    fn head_round_trip_and_duplicates() {
        let head = ClassifierHead::new(vec![vec![1.0, 0.1], vec![-0.3, 2.0]], Some(vec![0.5, -1e-17]), vec!["x".into(), "y".into()])
            .unwrap();
        let text = format_head(&head);
        assert!(text.starts_with("class,w0,w1,bias\n"));
        assert_eq!(parse_head(p(), &text).unwrap(), head);
        assert!(matches!(parse_head(p(), "class,w0\na,1\na,2\n"), Err(Error::DuplicateClassName(_))));
    }

    #[test]
    fn ratio_table_with_groups() {
        let rows = parse_ratio_table(p(), "group,name,c_r,s_r,l_r\nv,s1,0.5,0.5,2\n").unwrap();
        assert_eq!(rows[0].group.as_deref(), Some("v"));
        assert_eq!(rows[0].l_r, 2.0);
    }
}
