//! Plaintext and encrypted partitions, cell encodings, the `MEP1` partition
//! file format, CSV ingestion/egress, and the table manifest.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::TableError;

pub const PARTITION_MAGIC: &[u8; 4] = b"MEP1";
pub const PARTITION_VERSION: u16 = 1;
pub const MANIFEST_VERSION: u32 = 1;
/// CSV token for a NULL cell.
pub const NULL_TOKEN: &str = "NULL";

const INT_SIGN_FLIP: u64 = 0x8000_0000_0000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColumnType {
    Int64,
    Utf8,
}

impl ColumnType {
    fn code(self) -> u8 {
        match self {
            ColumnType::Int64 => 1,
            ColumnType::Utf8 => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ColumnType::Int64),
            2 => Some(ColumnType::Utf8),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
    #[serde(default)]
    pub nullable: bool,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType, nullable: bool) -> Self {
        Column { name: name.into(), ty, nullable }
    }

    pub fn int(name: impl Into<String>) -> Self {
        Column::new(name, ColumnType::Int64, false)
    }

    pub fn utf8(name: impl Into<String>) -> Self {
        Column::new(name, ColumnType::Utf8, false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct Schema {
    columns: Vec<Column>,
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    columns: Vec<Column>,
}

impl TryFrom<SchemaRepr> for Schema {
    type Error = TableError;
    fn try_from(r: SchemaRepr) -> Result<Self, TableError> {
        Schema::new(r.columns)
    }
}

impl From<Schema> for SchemaRepr {
    fn from(s: Schema) -> Self {
        SchemaRepr { columns: s.columns }
    }
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self, TableError> {
        if columns.is_empty() {
            return Err(TableError::InvalidSchema("at least one column required".into()));
        }
        if columns.len() > u16::MAX as usize {
            return Err(TableError::InvalidSchema("too many columns".into()));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(TableError::InvalidSchema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::InvalidSchema(format!("duplicate column {}", c.name)));
            }
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Null,
    Int(i64),
    Str(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str(NULL_TOKEN),
            Value::Int(v) => write!(f, "{v}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_owned())
    }
}

/// Maps an `i64` to a `u64` whose unsigned order equals the signed order.
pub fn int_to_ordered(v: i64) -> u64 {
    (v as u64) ^ INT_SIGN_FLIP
}

pub fn ordered_to_int(u: u64) -> i64 {
    (u ^ INT_SIGN_FLIP) as i64
}

/// Encoded length of any non-NULL value in an `Int64` column.
pub fn int_cell_len(column: &Column) -> usize {
    if column.nullable {
        9
    } else {
        8
    }
}

/// Canonical byte encoding of a cell.
///
/// `Int64` is the 8-byte big-endian sign-flipped value; nullable `Int64`
/// columns prepend a tag byte (0 = NULL with eight zero bytes, 1 = present),
/// so NULL and non-NULL cells have equal length. `Utf8` is always a tag byte
/// followed by the UTF-8 bytes.
pub fn encode_cell(value: &Value, column: &Column) -> Result<Vec<u8>, TableError> {
    let mismatch = || TableError::TypeMismatch { column: column.name.clone(), value: format!("{value:?}") };
    match (column.ty, value) {
        (_, Value::Null) if !column.nullable => Err(mismatch()),
        (ColumnType::Int64, Value::Int(v)) => {
            let body = int_to_ordered(*v).to_be_bytes();
            if column.nullable {
                let mut out = Vec::with_capacity(9);
                out.push(1);
                out.extend_from_slice(&body);
                Ok(out)
            } else {
                Ok(body.to_vec())
            }
        }
        (ColumnType::Int64, Value::Null) => Ok(vec![0; 9]),
        (ColumnType::Utf8, Value::Str(s)) => {
            let mut out = Vec::with_capacity(1 + s.len());
            out.push(1);
            out.extend_from_slice(s.as_bytes());
            Ok(out)
        }
        (ColumnType::Utf8, Value::Null) => Ok(vec![0]),
        _ => Err(mismatch()),
    }
}

pub fn decode_cell(bytes: &[u8], column: &Column) -> Result<Value, TableError> {
    let bad = || TableError::MalformedCell(column.name.clone());
    match column.ty {
        ColumnType::Int64 => {
            let body = if column.nullable {
                match bytes.split_first() {
                    Some((0, rest)) if rest.len() == 8 => return Ok(Value::Null),
                    Some((1, rest)) => rest,
                    _ => return Err(bad()),
                }
            } else {
                bytes
            };
            let arr: [u8; 8] = body.try_into().map_err(|_| bad())?;
            Ok(Value::Int(ordered_to_int(u64::from_be_bytes(arr))))
        }
        ColumnType::Utf8 => match bytes.split_first() {
            Some((0, [])) if column.nullable => Ok(Value::Null),
            Some((1, rest)) => Ok(Value::Str(String::from_utf8(rest.to_vec()).map_err(|_| bad())?)),
            _ => Err(bad()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainPartition {
    pub id: u32,
    pub rows: Vec<Vec<Value>>,
}

impl PlainPartition {
    pub fn new(id: u32, rows: Vec<Vec<Value>>) -> Result<Self, TableError> {
        if id == 0 {
            return Err(TableError::ZeroPartitionId);
        }
        Ok(PlainPartition { id, rows })
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), TableError> {
        if self.id == 0 {
            return Err(TableError::ZeroPartitionId);
        }
        for row in &self.rows {
            if row.len() != schema.len() {
                return Err(TableError::SchemaMismatch(format!(
                    "row has {} cells, schema has {}",
                    row.len(),
                    schema.len()
                )));
            }
            for (v, c) in row.iter().zip(schema.columns()) {
                encode_cell(v, c)?;
            }
        }
        Ok(())
    }

    /// Sum of encoded cell sizes; the "uncompressed plaintext size".
    pub fn encoded_size(&self, schema: &Schema) -> usize {
        self.rows
            .iter()
            .flat_map(|row| row.iter().zip(schema.columns()))
            .map(|(v, c)| encode_cell(v, c).map(|b| b.len()).unwrap_or(0))
            .sum()
    }

    /// Encodes every cell; the result carries no family columns.
    pub fn to_encoded(&self, schema: &Schema) -> Result<EncryptedPartition, TableError> {
        let mut cells = Vec::with_capacity(self.rows.len() * schema.len());
        for row in &self.rows {
            if row.len() != schema.len() {
                return Err(TableError::SchemaMismatch("row width".into()));
            }
            for (v, c) in row.iter().zip(schema.columns()) {
                cells.push(encode_cell(v, c)?);
            }
        }
        Ok(EncryptedPartition {
            id: self.id,
            schema: schema.clone(),
            row_count: self.rows.len(),
            cells,
            families: BTreeMap::new(),
        })
    }

    pub fn from_encoded(part: &EncryptedPartition) -> Result<Self, TableError> {
        let rows = (0..part.row_count)
            .map(|r| {
                part.row(r)
                    .iter()
                    .zip(part.schema.columns())
                    .map(|(b, c)| decode_cell(b, c))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PlainPartition { id: part.id, rows })
    }
}

/// Per-row projection, selection and tagging material for one family.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FamilyColumns {
    pub projection: Vec<Vec<u8>>,
    pub selection: Vec<Vec<u8>>,
    pub tagging: Vec<Vec<u8>>,
}

impl FamilyColumns {
    pub fn byte_size(&self) -> usize {
        [&self.projection, &self.selection, &self.tagging].iter().flat_map(|col| col.iter()).map(|v| v.len()).sum()
    }
}

/// A partition as stored: row-major cell byte strings plus family columns.
///
/// The same layout holds plaintext encodings (no families) and ciphertexts;
/// the two have identical lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedPartition {
    pub id: u32,
    pub schema: Schema,
    pub row_count: usize,
    pub cells: Vec<Vec<u8>>,
    pub families: BTreeMap<u32, FamilyColumns>,
}

impl EncryptedPartition {
    pub fn row(&self, r: usize) -> &[Vec<u8>] {
        let n = self.schema.len();
        &self.cells[r * n..(r + 1) * n]
    }

    pub fn cell(&self, r: usize, c: usize) -> &[u8] {
        &self.cells[r * self.schema.len() + c]
    }

    pub fn cell_bytes(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn family_bytes(&self) -> usize {
        self.families.values().map(FamilyColumns::byte_size).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.cell_bytes() + self.family_bytes());
        out.extend_from_slice(PARTITION_MAGIC);
        out.extend_from_slice(&PARTITION_VERSION.to_be_bytes());
        out.extend_from_slice(&self.id.to_be_bytes());
        out.extend_from_slice(&(self.row_count as u32).to_be_bytes());
        out.extend_from_slice(&(self.schema.len() as u16).to_be_bytes());
        for c in self.schema.columns() {
            out.extend_from_slice(&(c.name.len() as u16).to_be_bytes());
            out.extend_from_slice(c.name.as_bytes());
            out.push(c.ty.code());
            out.push(c.nullable as u8);
        }
        for cell in &self.cells {
            put_bytes(&mut out, cell);
        }
        out.extend_from_slice(&(self.families.len() as u16).to_be_bytes());
        for (id, fam) in &self.families {
            out.extend_from_slice(&id.to_be_bytes());
            for r in 0..self.row_count {
                put_bytes(&mut out, &fam.projection[r]);
                put_bytes(&mut out, &fam.selection[r]);
                put_bytes(&mut out, &fam.tagging[r]);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TableError> {
        let mut rd = Reader(bytes);
        if rd.take(4)? != PARTITION_MAGIC {
            return Err(TableError::BadMagic);
        }
        let version = rd.u16()?;
        if version != PARTITION_VERSION {
            return Err(TableError::UnsupportedVersion(version));
        }
        let id = rd.u32()?;
        let row_count = rd.u32()? as usize;
        let ncol = rd.u16()? as usize;
        let mut columns = Vec::with_capacity(ncol);
        for _ in 0..ncol {
            let len = rd.u16()? as usize;
            let name = String::from_utf8(rd.take(len)?.to_vec())
                .map_err(|_| TableError::SchemaMismatch("column name is not UTF-8".into()))?;
            let ty = ColumnType::from_code(rd.u8()?)
                .ok_or_else(|| TableError::SchemaMismatch("unknown column type".into()))?;
            let nullable = match rd.u8()? {
                0 => false,
                1 => true,
                _ => return Err(TableError::SchemaMismatch("bad nullable flag".into())),
            };
            columns.push(Column { name, ty, nullable });
        }
        let schema = Schema::new(columns)?;
        let ncells = row_count.checked_mul(ncol).ok_or(TableError::Truncated)?;
        // Every cell needs at least its length word.
        if ncells > rd.0.len() / 4 {
            return Err(TableError::Truncated);
        }
        let cells = (0..ncells).map(|_| rd.bytes().map(<[u8]>::to_vec)).collect::<Result<_, _>>()?;
        let nfam = rd.u16()? as usize;
        let mut families = BTreeMap::new();
        for _ in 0..nfam {
            let fid = rd.u32()?;
            if row_count > rd.0.len() / 12 {
                return Err(TableError::Truncated);
            }
            let mut fam = FamilyColumns::default();
            for _ in 0..row_count {
                fam.projection.push(rd.bytes()?.to_vec());
                fam.selection.push(rd.bytes()?.to_vec());
                fam.tagging.push(rd.bytes()?.to_vec());
            }
            families.insert(fid, fam);
        }
        if !rd.0.is_empty() {
            return Err(TableError::TrailingBytes);
        }
        Ok(EncryptedPartition { id, schema, row_count, cells, families })
    }

    /// Parses a partition file and checks it against the manifest schema.
    pub fn read_checked(bytes: &[u8], schema: &Schema) -> Result<Self, TableError> {
        let part = Self::from_bytes(bytes)?;
        if &part.schema != schema {
            return Err(TableError::SchemaMismatch(format!("partition {}", part.id)));
        }
        Ok(part)
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_be_bytes());
    out.extend_from_slice(b);
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TableError> {
        if self.0.len() < n {
            return Err(TableError::Truncated);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, TableError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TableError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TableError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8], TableError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

pub fn write_partition(path: &std::path::Path, part: &EncryptedPartition) -> std::io::Result<()> {
    std::fs::write(path, part.to_bytes())
}

pub fn read_partition(path: &std::path::Path, schema: &Schema) -> crate::Result<EncryptedPartition> {
    let bytes = std::fs::read(path)?;
    Ok(EncryptedPartition::read_checked(&bytes, schema)?)
}

/// Parses CSV with a header row naming the schema's columns in order.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Vec<Vec<Value>>, TableError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| TableError::Csv(e.to_string()))?;
    let names: Vec<&str> = schema.columns().iter().map(|c| c.name.as_str()).collect();
    if headers.iter().collect::<Vec<_>>() != names {
        return Err(TableError::SchemaMismatch(format!(
            "csv header {:?} does not match schema {:?}",
            headers.iter().collect::<Vec<_>>(),
            names
        )));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| TableError::Csv(e.to_string()))?;
            parse_csv_record(rec.iter(), schema)
        })
        .collect()
}

/// Parses one record without a header, e.g. `101,Interlake,blue`.
pub fn parse_csv_line(line: &str, schema: &Schema) -> Result<Vec<Value>, TableError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(line.as_bytes());
    let rec = rdr
        .records()
        .next()
        .ok_or_else(|| TableError::Csv("empty line".into()))?
        .map_err(|e| TableError::Csv(e.to_string()))?;
    parse_csv_record(rec.iter(), schema)
}

fn parse_csv_record<'a>(fields: impl Iterator<Item = &'a str>, schema: &Schema) -> Result<Vec<Value>, TableError> {
    let fields: Vec<&str> = fields.collect();
    if fields.len() != schema.len() {
        return Err(TableError::Csv(format!("expected {} fields, got {}", schema.len(), fields.len())));
    }
    fields
        .into_iter()
        .zip(schema.columns())
        .map(|(f, c)| {
            let v = if f == NULL_TOKEN {
                Value::Null
            } else {
                match c.ty {
                    ColumnType::Int64 => Value::Int(
                        f.trim()
                            .parse()
                            .map_err(|_| TableError::TypeMismatch { column: c.name.clone(), value: f.to_owned() })?,
                    ),
                    ColumnType::Utf8 => Value::Str(f.to_owned()),
                }
            };
            encode_cell(&v, c)?;
            Ok(v)
        })
        .collect()
}

pub fn write_csv<W: Write>(writer: W, columns: &[Column], rows: &[Vec<Value>]) -> Result<(), TableError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| TableError::Csv(e.to_string());
    wtr.write_record(columns.iter().map(|c| c.name.as_str())).map_err(err)?;
    for row in rows {
        wtr.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    wtr.flush().map_err(|e| TableError::Csv(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub id: u32,
    pub rows: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub family_id: u32,
    /// The family's SQL text, re-parsed to match views against it.
    pub sql: String,
    /// Hex of the serialized canonical family.
    pub canonical: String,
    pub tag_length_bytes: usize,
    pub branching_factor_bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableManifest {
    pub format_version: u32,
    pub table: String,
    pub schema: Schema,
    pub partitions: Vec<PartitionEntry>,
    pub families: Vec<FamilyRecord>,
}

impl TableManifest {
    pub fn new(table: impl Into<String>, schema: Schema) -> Self {
        TableManifest {
            format_version: MANIFEST_VERSION,
            table: table.into(),
            schema,
            partitions: Vec::new(),
            families: Vec::new(),
        }
    }

    pub fn family(&self, id: u32) -> Option<&FamilyRecord> {
        self.families.iter().find(|f| f.family_id == id)
    }

    pub fn validate(&self) -> Result<(), TableError> {
        if self.format_version != MANIFEST_VERSION {
            return Err(TableError::Manifest(format!("unsupported version {}", self.format_version)));
        }
        let mut ids = HashSet::new();
        for p in &self.partitions {
            if p.id == 0 || !ids.insert(p.id) {
                return Err(TableError::Manifest(format!("bad partition id {}", p.id)));
            }
        }
        let mut fids = HashSet::new();
        for f in &self.families {
            if !fids.insert(f.family_id) {
                return Err(TableError::Manifest(format!("duplicate family id {}", f.family_id)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TableError> {
        let m: TableManifest = serde_json::from_str(s).map_err(|e| TableError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn boats_schema() -> Schema {
        Schema::new(vec![Column::int("bid"), Column::utf8("bname"), Column::utf8("color")]).unwrap()
    }

    #[test]
    fn int_encoding_offsets_zero() {
        assert_eq!(encode_cell(&Value::Int(0), &Column::int("x")).unwrap(), 0x8000_0000_0000_0000u64.to_be_bytes());
    }

    #[test]
    fn int_encoding_preserves_order() {
        let c = Column::int("x");
        let e = |v| encode_cell(&Value::Int(v), &c).unwrap();
        assert!(e(-1) < e(0) && e(0) < e(1));
        assert!(e(i64::MIN) < e(i64::MIN + 1));
        assert!(e(i64::MAX - 1) < e(i64::MAX));
    }

    #[test]
    fn nullable_encodings_have_fixed_width() {
        let c = Column::new("x", ColumnType::Int64, true);
        assert_eq!(encode_cell(&Value::Null, &c).unwrap(), vec![0; 9]);
        assert_eq!(encode_cell(&Value::Int(5), &c).unwrap().len(), 9);
        assert_eq!(decode_cell(&[0; 9], &c).unwrap(), Value::Null);
        let s = Column::new("s", ColumnType::Utf8, true);
        assert_eq!(encode_cell(&Value::Null, &s).unwrap(), vec![0]);
        assert_eq!(encode_cell(&Value::from(""), &s).unwrap(), vec![1]);
    }

    #[test]
    fn null_rejected_in_non_nullable_column() {
        assert!(encode_cell(&Value::Null, &Column::int("x")).is_err());
        assert!(encode_cell(&Value::from("a"), &Column::int("x")).is_err());
    }

    #[test]
    fn decode_rejects_bad_tag() {
        assert!(decode_cell(&[2, b'a'], &Column::utf8("s")).is_err());
        assert!(decode_cell(&[], &Column::utf8("s")).is_err());
        assert!(decode_cell(&[0], &Column::utf8("s")).is_err());
        assert!(decode_cell(&[1, 2, 3], &Column::int("x")).is_err());
    }

    #[test]
    fn schema_rules() {
        assert!(Schema::new(vec![]).is_err());
        assert!(Schema::new(vec![Column::int("a"), Column::utf8("a")]).is_err());
        assert!(Schema::new(vec![Column::int("")]).is_err());
    }

    #[test]
    fn boats_csv_row_parses() {
        let row = parse_csv_line("101,Interlake,blue", &boats_schema()).unwrap();
        assert_eq!(row, vec![Value::Int(101), Value::from("Interlake"), Value::from("blue")]);
    }

    #[test]
    fn csv_quoting_and_null() {
        let schema = Schema::new(vec![Column::int("a"), Column::new("b", ColumnType::Utf8, true)]).unwrap();
        let data = "a,b\n1,\"x, \"\"y\"\"\"\n2,NULL\n";
        let rows = read_csv(data.as_bytes(), &schema).unwrap();
        assert_eq!(rows[0][1], Value::from("x, \"y\""));
        assert_eq!(rows[1][1], Value::Null);
        let mut out = Vec::new();
        write_csv(&mut out, schema.columns(), &rows).unwrap();
        assert_eq!(read_csv(out.as_slice(), &schema).unwrap(), rows);
    }

    #[test]
    fn csv_header_mismatch() {
        assert!(read_csv("x,y,z\n".as_bytes(), &boats_schema()).is_err());
    }

    #[test]
    fn partition_file_round_trip() {
        let schema = boats_schema();
        let plain = PlainPartition::new(
            3,
            vec![
                vec![101.into(), "Interlake".into(), "blue".into()],
                vec![102.into(), "Interlake".into(), "red".into()],
            ],
        )
        .unwrap();
        let mut enc = plain.to_encoded(&schema).unwrap();
        enc.families.insert(
            9,
            FamilyColumns {
                projection: vec![vec![1; 16], vec![2; 16]],
                selection: vec![vec![3; 32], vec![4; 32]],
                tagging: vec![vec![5; 8], vec![6; 8]],
            },
        );
        let bytes = enc.to_bytes();
        assert_eq!(&bytes[..4], b"MEP1");
        let back = EncryptedPartition::read_checked(&bytes, &schema).unwrap();
        assert_eq!(back, enc);
        assert_eq!(PlainPartition::from_encoded(&back).unwrap(), plain);
    }

    #[test]
    fn empty_partition_round_trips() {
        let schema = boats_schema();
        let enc = PlainPartition::new(1, vec![]).unwrap().to_encoded(&schema).unwrap();
        assert_eq!(EncryptedPartition::from_bytes(&enc.to_bytes()).unwrap(), enc);
    }

    #[test]
    fn partition_read_errors() {
        let schema = boats_schema();
        let enc =
            PlainPartition::new(1, vec![vec![1.into(), "a".into(), "b".into()]]).unwrap().to_encoded(&schema).unwrap();
        let bytes = enc.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(EncryptedPartition::from_bytes(&bad), Err(TableError::BadMagic)));
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(matches!(EncryptedPartition::from_bytes(&bad), Err(TableError::UnsupportedVersion(9))));
        assert!(matches!(EncryptedPartition::from_bytes(&bytes[..bytes.len() - 3]), Err(TableError::Truncated)));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(EncryptedPartition::from_bytes(&longer), Err(TableError::TrailingBytes)));
        let other = Schema::new(vec![Column::int("bid")]).unwrap();
        assert!(matches!(EncryptedPartition::read_checked(&bytes, &other), Err(TableError::SchemaMismatch(_))));
    }

    #[test]
    fn zero_partition_id_rejected() {
        assert!(PlainPartition::new(0, vec![]).is_err());
    }

    #[test]
    fn manifest_json_round_trip() {
        let mut m = TableManifest::new("boats", boats_schema());
        m.partitions.push(PartitionEntry { id: 1, rows: 4 });
        let back = TableManifest::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        m.partitions.push(PartitionEntry { id: 1, rows: 4 });
        assert!(TableManifest::from_json(&m.to_json()).is_err());
    }
}
