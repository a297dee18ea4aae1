//! Columnar in-memory storage of base relations.
//!
//! Relations are ingested from CSV files described by a JSON schema. Every
//! column is stored as a `Vec<i64>`; string columns declared `Utf8Dict` are
//! dictionary encoded at ingestion with dense ids assigned in first-occurrence
//! order, so join keys are always 64-bit integers. Each row carries an
//! implicit id equal to its ordinal.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of tuples per [`DataChunk`].
pub const DEFAULT_CHUNK_SIZE: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnType {
    Int64,
    Utf8Dict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

/// Relation name to ordered column list, as read from a schema file.
pub type Schema = BTreeMap<String, Vec<ColumnDef>>;

pub fn read_schema(path: &Path) -> Result<Schema> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
    pub values: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    pub columns: Vec<Column>,
    pub row_count: usize,
}

impl Relation {
    /// Builds a relation of `Int64` columns, checking lengths and names.
    pub fn from_columns(name: impl Into<String>, columns: Vec<(String, Vec<i64>)>) -> Result<Self> {
        let name = name.into();
        let row_count = columns.first().map_or(0, |(_, v)| v.len());
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(columns.len());
        for (col, values) in columns {
            if !seen.insert(col.clone()) {
                return Err(Error::Schema(format!("duplicate column `{col}` in `{name}`")));
            }
            if values.len() != row_count {
                return Err(Error::Schema(format!(
                    "column `{col}` of `{name}` has {} values, expected {row_count}",
                    values.len()
                )));
            }
            out.push(Column {
                name: col,
                ty: ColumnType::Int64,
                values,
            });
        }
        Ok(Relation {
            name,
            columns: out,
            row_count,
        })
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn values(&self, name: &str) -> Result<&[i64]> {
        self.column(name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| Error::UnknownAttribute {
                relation: self.name.clone(),
                attribute: name.to_string(),
            })
    }

    pub fn is_empty(&self) -> bool {
        self.row_count == 0
    }
}

/// Dense string dictionary for one `Utf8Dict` column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dictionary {
    values: Vec<String>,
    ids: HashMap<String, i64>,
}

impl Dictionary {
    pub fn encode(&mut self, s: &str) -> i64 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.values.len() as i64;
        self.values.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    pub fn lookup(&self, s: &str) -> Option<i64> {
        self.ids.get(s).copied()
    }

    pub fn decode(&self, id: i64) -> Option<&str> {
        usize::try_from(id)
            .ok()
            .and_then(|i| self.values.get(i))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    fn from_values(values: Vec<String>) -> Self {
        let ids = values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i as i64))
            .collect();
        Dictionary { values, ids }
    }
}

/// Immutable set of named relations plus the dictionaries of their string
/// columns, keyed by `(relation, column)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    relations: BTreeMap<String, Relation>,
    dictionaries: BTreeMap<(String, String), Dictionary>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, relation: Relation) -> Result<()> {
        if self.relations.contains_key(&relation.name) {
            return Err(Error::Schema(format!("duplicate relation `{}`", relation.name)));
        }
        self.relations.insert(relation.name.clone(), relation);
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Result<&Relation> {
        self.relations
            .get(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn dictionary(&self, relation: &str, column: &str) -> Option<&Dictionary> {
        self.dictionaries
            .get(&(relation.to_string(), column.to_string()))
    }

    /// Join key columns for the condition `left.left_attrs = right.right_attrs`,
    /// encoded into a shared 64-bit domain. A single integer attribute on each
    /// side is passed through; string columns (whose dictionaries are private
    /// to a relation) and composite keys are re-encoded jointly.
    pub fn join_keys(
        &self,
        left: &str,
        left_attrs: &[String],
        right: &str,
        right_attrs: &[String],
    ) -> Result<(Vec<i64>, Vec<i64>)> {
        if left_attrs.len() != right_attrs.len() || left_attrs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "join between `{left}` and `{right}` has mismatched attribute lists"
            )));
        }
        let cols = |rel: &str, attrs: &[String]| -> Result<Vec<&Column>> {
            let r = self.relation(rel)?;
            attrs
                .iter()
                .map(|a| {
                    r.column(a).ok_or_else(|| Error::UnknownAttribute {
                        relation: rel.to_string(),
                        attribute: a.clone(),
                    })
                })
                .collect()
        };
        let (lc, rc) = (cols(left, left_attrs)?, cols(right, right_attrs)?);
        if lc.len() == 1 && lc[0].ty == ColumnType::Int64 && rc[0].ty == ColumnType::Int64 {
            return Ok((lc[0].values.clone(), rc[0].values.clone()));
        }
        #[derive(PartialEq, Eq, Hash)]
        enum Part<'a> {
            Int(i64),
            Str(&'a str),
            Missing(i64),
        }
        let mut ids: HashMap<Vec<Part>, i64> = HashMap::new();
        let mut encode = |rel: &str, cs: &[&Column]| -> Vec<i64> {
            let n = cs[0].values.len();
            (0..n)
                .map(|row| {
                    let key: Vec<Part> = cs
                        .iter()
                        .map(|c| {
                            let v = c.values[row];
                            match c.ty {
                                ColumnType::Int64 => Part::Int(v),
                                ColumnType::Utf8Dict => self
                                    .dictionary(rel, &c.name)
                                    .and_then(|d| d.decode(v))
                                    .map_or(Part::Missing(v), Part::Str),
                            }
                        })
                        .collect();
                    let next = ids.len() as i64;
                    *ids.entry(key).or_insert(next)
                })
                .collect()
        };
        let l = encode(left, &lc);
        let r = encode(right, &rc);
        Ok((l, r))
    }

    /// Renders a cell back to its source text, decoding dictionary ids.
    pub fn render(&self, relation: &Relation, column: &Column, row: usize) -> String {
        let v = column.values[row];
        match column.ty {
            ColumnType::Int64 => v.to_string(),
            ColumnType::Utf8Dict => self
                .dictionary(&relation.name, &column.name)
                .and_then(|d| d.decode(v))
                .map_or_else(|| v.to_string(), str::to_string),
        }
    }

    /// Writes the catalog as a directory: `catalog.json` (schema, row counts,
    /// dictionaries) and one encoded CSV per relation.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = CatalogManifest {
            schema_version: 1,
            relations: Vec::new(),
            dictionaries: BTreeMap::new(),
        };
        for rel in self.relations.values() {
            manifest.relations.push(ManifestRelation {
                name: rel.name.clone(),
                file: format!("{}.csv", rel.name),
                row_count: rel.row_count,
                columns: rel
                    .columns
                    .iter()
                    .map(|c| ColumnDef {
                        name: c.name.clone(),
                        ty: c.ty,
                    })
                    .collect(),
            });
            let path = dir.join(format!("{}.csv", rel.name));
            write_encoded_csv(rel, &path)?;
        }
        for ((r, c), d) in &self.dictionaries {
            manifest
                .dictionaries
                .insert(format!("{r}.{c}"), d.values.clone());
        }
        let path = dir.join("catalog.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("catalog.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CatalogManifest = serde_json::from_str(&text)?;
        let mut catalog = Catalog::new();
        for rel in &manifest.relations {
            // Encoded files hold integers only.
            let int_schema: Vec<ColumnDef> = rel
                .columns
                .iter()
                .map(|c| ColumnDef {
                    name: c.name.clone(),
                    ty: ColumnType::Int64,
                })
                .collect();
            let mut loaded = read_relation(&rel.name, &int_schema, &dir.join(&rel.file), &mut BTreeMap::new())?;
            for (col, def) in loaded.columns.iter_mut().zip(&rel.columns) {
                col.ty = def.ty;
            }
            catalog.insert(loaded)?;
        }
        for (key, values) in manifest.dictionaries {
            let (r, c) = key
                .split_once('.')
                .ok_or_else(|| Error::Schema(format!("bad dictionary key `{key}`")))?;
            catalog
                .dictionaries
                .insert((r.to_string(), c.to_string()), Dictionary::from_values(values));
        }
        Ok(catalog)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogManifest {
    schema_version: u32,
    relations: Vec<ManifestRelation>,
    dictionaries: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRelation {
    name: String,
    file: String,
    row_count: usize,
    columns: Vec<ColumnDef>,
}

fn write_encoded_csv(rel: &Relation, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(rel.columns.iter().map(|c| c.name.as_str()))
        .map_err(csv_err)?;
    let mut record = Vec::with_capacity(rel.columns.len());
    for row in 0..rel.row_count {
        record.clear();
        record.extend(rel.columns.iter().map(|c| c.values[row].to_string()));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_relation(
    name: &str,
    columns: &[ColumnDef],
    path: &Path,
    dictionaries: &mut BTreeMap<(String, String), Dictionary>,
) -> Result<Relation> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let expected: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
    if header != expected {
        return Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            expected,
            found: header,
        });
    }
    let mut values: Vec<Vec<i64>> = vec![Vec::new(); columns.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for (i, def) in columns.iter().enumerate() {
            let field = record.get(i).unwrap_or("").trim();
            if field.is_empty() {
                return Err(Error::NullValue {
                    path: path.to_path_buf(),
                    row,
                    column: def.name.clone(),
                });
            }
            let v = match def.ty {
                ColumnType::Int64 => field.parse::<i64>().map_err(|_| Error::NotAnInteger {
                    path: path.to_path_buf(),
                    row,
                    column: def.name.clone(),
                    value: field.to_string(),
                })?,
                ColumnType::Utf8Dict => dictionaries
                    .entry((name.to_string(), def.name.clone()))
                    .or_default()
                    .encode(field),
            };
            values[i].push(v);
        }
    }
    let row_count = values.first().map_or(0, Vec::len);
    Ok(Relation {
        name: name.to_string(),
        columns: columns
            .iter()
            .zip(values)
            .map(|(def, values)| Column {
                name: def.name.clone(),
                ty: def.ty,
                values,
            })
            .collect(),
        row_count,
    })
}

/// Loads every relation of `schema` from its CSV file. Empty relations
/// (header only) are allowed.
pub fn ingest_csv(schema: &Schema, files: &BTreeMap<String, PathBuf>) -> Result<Catalog> {
    let mut catalog = Catalog::new();
    let mut dictionaries = BTreeMap::new();
    for (name, columns) in schema {
        let mut names = std::collections::HashSet::new();
        if let Some(dup) = columns.iter().find(|c| !names.insert(&c.name)) {
            return Err(Error::Schema(format!("duplicate column `{}` in `{name}`", dup.name)));
        }
        let path = files
            .get(name)
            .ok_or_else(|| Error::Schema(format!("no input file for relation `{name}`")))?;
        let rel = read_relation(name, columns, path, &mut dictionaries)?;
        catalog.insert(rel)?;
    }
    catalog.dictionaries = dictionaries;
    Ok(catalog)
}

/// Convenience wrapper: each relation `R` is read from `<dir>/R.csv`.
pub fn ingest_dir(schema: &Schema, dir: &Path) -> Result<Catalog> {
    let files = schema
        .keys()
        .map(|name| (name.clone(), dir.join(format!("{name}.csv"))))
        .collect();
    ingest_csv(schema, &files)
}

/// A batch of tuples: equal-length columns plus an optional selection bitmap.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataChunk {
    pub columns: Vec<Vec<i64>>,
    pub selection: Option<Vec<bool>>,
}

impl DataChunk {
    pub fn with_columns(width: usize, capacity: usize) -> Self {
        DataChunk {
            columns: (0..width).map(|_| Vec::with_capacity(capacity)).collect(),
            selection: None,
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn is_selected(&self, row: usize) -> bool {
        self.selection.as_ref().is_none_or(|s| s[row])
    }

    pub fn selected_count(&self) -> usize {
        match &self.selection {
            Some(s) => s.iter().filter(|&&b| b).count(),
            None => self.len(),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        let n = self.len();
        self.columns.iter().all(|c| c.len() == n)
            && self.selection.as_ref().is_none_or(|s| s.len() == n)
    }
}

/// Splits a relation into consecutive chunks of `chunk_size` rows; all chunks
/// are full except possibly the last.
pub fn chunk_scan(relation: &Relation, chunk_size: usize) -> impl Iterator<Item = DataChunk> + '_ {
    let chunk_size = chunk_size.max(1);
    (0..relation.row_count)
        .step_by(chunk_size)
        .map(move |start| {
            let end = (start + chunk_size).min(relation.row_count);
            DataChunk {
                columns: relation
                    .columns
                    .iter()
                    .map(|c| c.values[start..end].to_vec())
                    .collect(),
                selection: None,
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn int(name: &str) -> ColumnDef {
        ColumnDef {
            name: name.into(),
            ty: ColumnType::Int64,
        }
    }

    #[test]
    fn parses_int_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.csv", "a\n1\n2\n2\n");
        let schema: Schema = [("r".to_string(), vec![int("a")])].into();
        let cat = ingest_csv(&schema, &[("r".to_string(), p)].into()).unwrap();
        let r = cat.relation("r").unwrap();
        assert_eq!(r.row_count, 3);
        assert_eq!(r.values("a").unwrap(), &[1, 2, 2]);
    }

    #[test]
    fn dictionary_encodes_first_seen() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.csv", "city\nx\ny\nx\n");
        let schema: Schema = [(
            "r".to_string(),
            vec![ColumnDef {
                name: "city".into(),
                ty: ColumnType::Utf8Dict,
            }],
        )]
        .into();
        let cat = ingest_csv(&schema, &[("r".to_string(), p)].into()).unwrap();
        assert_eq!(cat.relation("r").unwrap().values("city").unwrap(), &[0, 1, 0]);
        let d = cat.dictionary("r", "city").unwrap();
        assert_eq!(d.lookup("x"), Some(0));
        assert_eq!(d.lookup("y"), Some(1));
        assert_eq!(d.decode(1), Some("y"));
    }

    #[test]
    fn ingestion_errors() {
        let dir = tempfile::tempdir().unwrap();
        let schema: Schema = [("r".to_string(), vec![int("a")])].into();
        let missing = ingest_csv(&schema, &[("r".to_string(), dir.path().join("nope.csv"))].into());
        assert!(matches!(missing, Err(Error::Io { .. })));

        let p = write(dir.path(), "h.csv", "b\n1\n");
        let bad_header = ingest_csv(&schema, &[("r".to_string(), p)].into());
        assert!(matches!(bad_header, Err(Error::HeaderMismatch { .. })));

        let p = write(dir.path(), "n.csv", "a\n1\nfoo\n");
        let not_int = ingest_csv(&schema, &[("r".to_string(), p)].into());
        assert!(matches!(not_int, Err(Error::NotAnInteger { row: 1, .. })));

        let schema2: Schema = [("r".to_string(), vec![int("a"), int("b")])].into();
        let p = write(dir.path(), "null.csv", "a,b\n1,\n");
        let null = ingest_csv(&schema2, &[("r".to_string(), p)].into());
        assert!(matches!(null, Err(Error::NullValue { .. })));

        let p = write(dir.path(), "e.csv", "a\n");
        let empty = ingest_csv(&schema, &[("r".to_string(), p)].into()).unwrap();
        assert_eq!(empty.relation("r").unwrap().row_count, 0);
    }

    #[test]
    fn chunk_sizes() {
        let rel = Relation::from_columns("r", vec![("a".into(), (0..5000).collect())]).unwrap();
        let sizes: Vec<usize> = chunk_scan(&rel, 2048).map(|c| c.len()).collect();
        assert_eq!(sizes, vec![2048, 2048, 904]);
        let rel5 = Relation::from_columns("r", vec![("a".into(), (0..5).collect())]).unwrap();
        assert_eq!(chunk_scan(&rel5, 5).map(|c| c.len()).collect::<Vec<_>>(), vec![5]);
        let empty = Relation::from_columns("r", vec![("a".into(), vec![])]).unwrap();
        assert_eq!(chunk_scan(&empty, 7).count(), 0);
    }

    #[test]
    fn catalog_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.csv", "k,city\n1,x\n2,y\n3,x\n");
        let schema: Schema = [(
            "r".to_string(),
            vec![
                int("k"),
                ColumnDef {
                    name: "city".into(),
                    ty: ColumnType::Utf8Dict,
                },
            ],
        )]
        .into();
        let cat = ingest_csv(&schema, &[("r".to_string(), p)].into()).unwrap();
        let out = dir.path().join("cat");
        cat.save_dir(&out).unwrap();
        let back = Catalog::load_dir(&out).unwrap();
        assert_eq!(cat, back);
        let r = back.relation("r").unwrap();
        assert_eq!(back.render(r, r.column("city").unwrap(), 2), "x");
    }

    proptest! {
        #[test]
        fn scan_reproduces_relation(values in prop::collection::vec(-50i64..50, 0..300), chunk in 1usize..64) {
            let rel = Relation::from_columns("r", vec![("a".into(), values.clone())]).unwrap();
            let chunks: Vec<DataChunk> = chunk_scan(&rel, chunk).collect();
            let total: usize = chunks.iter().map(DataChunk::len).sum();
            prop_assert_eq!(total, values.len());
            for c in chunks.iter().rev().skip(1) {
                prop_assert_eq!(c.len(), chunk);
            }
            let concat: Vec<i64> = chunks.iter().flat_map(|c| c.columns[0].clone()).collect();
            prop_assert_eq!(concat, values);
        }

        #[test]
        fn ingest_then_scan_round_trips(words in prop::collection::vec("[a-d]{1,3}", 1..60), chunk in 1usize..16) {
            let dir = tempfile::tempdir().unwrap();
            let body = std::iter::once("w".to_string()).chain(words.iter().cloned()).collect::<Vec<_>>().join("\n");
            let p = write(dir.path(), "r.csv", &body);
            let schema: Schema = [("r".to_string(), vec![ColumnDef { name: "w".into(), ty: ColumnType::Utf8Dict }])].into();
            let files: BTreeMap<String, PathBuf> = [("r".to_string(), p)].into();
            let cat = ingest_csv(&schema, &files).unwrap();
            let again = ingest_csv(&schema, &files).unwrap();
            prop_assert_eq!(&cat, &again);
            let rel = cat.relation("r").unwrap();
            let dict = cat.dictionary("r", "w").unwrap();
            let decoded: Vec<String> = chunk_scan(rel, chunk)
                .flat_map(|c| c.columns[0].clone())
                .map(|id| dict.decode(id).unwrap().to_string())
                .collect();
            prop_assert_eq!(decoded, words);
        }
    }
}
