//! `lakeveil` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or crypto errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::{OsRng, StdRng};
use rand::{Rng, SeedableRng};
use serde_json::json;

use lakeveil_core::backend::keys::KeyBlob;
use lakeveil_core::backend::{FamilyParams, RevealParams, ViewKeySet};
use lakeveil_core::orchestrator::{self, load_manifest, LocalDir, MemStorage, PipelineConfig, PlainInput};
use lakeveil_core::planner::{plan_family, plan_literals, plan_view, CanonicalFamily, PlannerParams};
use lakeveil_core::table::{Column, ColumnType, PlainPartition, Schema, Value};
use lakeveil_core::{oracle, SymKey};

/// An error in how the tool was invoked rather than in the data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "lakeveil", version, about = "Encrypted views over partitioned tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encrypt a directory of CSV partitions into a new table.
    EncryptTable(EncryptTableArgs),
    /// Instantiate a view family on every partition of a table.
    AddFamily(AddFamilyArgs),
    /// Mint the key set for one view of a family.
    ViewGen(ViewGenArgs),
    /// Decrypt the rows a view key set grants into CSV files.
    RevealView(RevealViewArgs),
    /// Show the canonical form of a family, and of a view when given.
    Plan(PlanArgs),
    /// Compare encrypted evaluation with plaintext evaluation.
    Check(CheckArgs),
    /// Time an operation on a synthetic in-memory table.
    Bench(BenchArgs),
}

#[derive(Args)]
struct StoreArgs {
    /// Storage root holding one directory per table.
    #[arg(long)]
    root: PathBuf,
    /// Directory for key files.
    #[arg(long)]
    keys: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Worker threads [default: physical cores].
    #[arg(long)]
    workers: Option<usize>,
    /// Partitions per batch [default: one per worker].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Run fetch, compute and store one after another.
    #[arg(long)]
    no_pipeline: bool,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<PipelineConfig> {
        let cfg = PipelineConfig {
            workers: self.workers.unwrap_or_else(num_cpus::get_physical),
            batch_size: self.batch_size,
            pipelined: !self.no_pipeline,
            ..Default::default()
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct PlannerArgs {
    /// log2 of the range-tree branching factor (1, 2, 4, 8 or 16).
    #[arg(long, default_value_t = 8)]
    branching_bits: u32,
}

impl PlannerArgs {
    fn params(&self) -> anyhow::Result<PlannerParams> {
        let p = PlannerParams { branching_bits: self.branching_bits, ..Default::default() };
        p.validate().map_err(|e| usage(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Args)]
struct EncryptTableArgs {
    #[command(flatten)]
    store: StoreArgs,
    /// Directory with `schema.json` and one CSV file per partition; files
    /// become partitions 1, 2, ... in name order.
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    table: String,
    #[command(flatten)]
    run: RunArgs,
    /// Also print the new table key in hex.
    #[arg(long)]
    insecure_print_keys: bool,
}

#[derive(Args)]
struct AddFamilyArgs {
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long)]
    table: String,
    /// Family SQL with `?name` wildcards.
    #[arg(long)]
    family: String,
    /// Bytes kept per tag (1 to 16).
    #[arg(long, default_value_t = 4)]
    tag_length: usize,
    /// Selection cache entries (0 disables the cache).
    #[arg(long, default_value_t = 512)]
    cache_capacity: usize,
    #[command(flatten)]
    planner: PlannerArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Also print the new family key in hex.
    #[arg(long)]
    insecure_print_keys: bool,
}

#[derive(Args)]
struct ViewGenArgs {
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long)]
    table: String,
    /// Family id as printed by add-family (8 hex digits).
    #[arg(long)]
    family_id: String,
    /// View SQL: the family's SQL with literals in place of wildcards.
    #[arg(long)]
    view: String,
    /// Where to write the view key set; a `.hex` copy is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Also print the view keys in hex.
    #[arg(long)]
    insecure_print_keys: bool,
}

#[derive(Args)]
struct RevealViewArgs {
    /// Storage root holding one directory per table.
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    table: String,
    /// View key set file from view-gen.
    #[arg(long)]
    view_keys: PathBuf,
    /// Output directory for `part-NNNNN.csv` files.
    #[arg(long)]
    out: PathBuf,
    /// Fetch only partitions FIRST..=LAST, as `FIRST:LAST`.
    #[arg(long, value_parser = parse_fil)]
    fil: Option<(u32, u32)>,
    /// Try every key on every row instead of following tags.
    #[arg(long)]
    no_tags: bool,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("schema_source").required(true).args(["schema", "columns", "table"]))]
struct PlanArgs {
    #[arg(long)]
    family: String,
    /// A view of the family to expand into wildcard values.
    #[arg(long)]
    view: Option<String>,
    /// Schema JSON file.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Inline schema, e.g. `x:int64,name:utf8?` (`?` marks nullable).
    #[arg(long)]
    columns: Option<String>,
    /// Read the schema from this table's manifest (needs --root).
    #[arg(long, requires = "root")]
    table: Option<String>,
    #[arg(long)]
    root: Option<PathBuf>,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Plaintext table directory, as for encrypt-table.
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    family: String,
    #[arg(long)]
    view: String,
    #[arg(long, default_value_t = 4)]
    tag_length: usize,
    #[command(flatten)]
    planner: PlannerArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchOp {
    Encrypt,
    Addfamily,
    Reveal,
}

#[derive(Args)]
struct BenchArgs {
    op: BenchOp,
    #[arg(long, default_value_t = 100_000)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    partitions: u32,
    /// Distinct values in the filtered column.
    #[arg(long, default_value_t = 64)]
    distinct: i64,
    #[arg(long, default_value_t = 4)]
    tag_length: usize,
    #[arg(long, default_value_t = 512)]
    cache_capacity: usize,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    json: bool,
}

fn parse_fil(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected FIRST:LAST")?;
    let a: u32 = a.trim().parse().map_err(|_| format!("bad partition id {a:?}"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad partition id {b:?}"))?;
    if a > b {
        return Err(format!("{a} is after {b}"));
    }
    Ok((a, b))
}

fn parse_columns(spec: &str) -> anyhow::Result<Schema> {
    let cols = spec
        .split(',')
        .map(|c| {
            let (name, ty) =
                c.trim().split_once(':').ok_or_else(|| usage(format!("column {c:?}: expected name:type")))?;
            let (ty, nullable) = match ty.strip_suffix('?') {
                Some(t) => (t, true),
                None => (ty, false),
            };
            let ty = match ty.to_ascii_lowercase().as_str() {
                "int" | "int64" => ColumnType::Int64,
                "utf8" | "string" | "str" => ColumnType::Utf8,
                other => return Err(usage(format!("column {name}: unknown type {other}"))),
            };
            Ok(Column::new(name, ty, nullable))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Schema::new(cols).map_err(|e| usage(e.to_string()))
}

fn read_schema(path: &Path) -> anyhow::Result<Schema> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Schema and CSV partitions of a plaintext source directory.
fn read_source(src: &Path) -> anyhow::Result<(Schema, Vec<PlainInput>)> {
    let schema = read_schema(&src.join("schema.json"))?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(src)
        .with_context(|| format!("reading {}", src.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(anyhow!("no CSV partitions in {}", src.display()));
    }
    let inputs = files.into_iter().zip(1u32..).map(|(path, id)| PlainInput::Csv { id, path }).collect();
    Ok((schema, inputs))
}

fn table_key_path(keys: &Path, table: &str) -> PathBuf {
    keys.join(format!("{table}.table.key"))
}

fn family_key_path(keys: &Path, table: &str, family_id: u32) -> PathBuf {
    keys.join(format!("{table}.family-{family_id:08x}.key"))
}

fn parse_family_id(s: &str) -> anyhow::Result<u32> {
    u32::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|_| usage(format!("family id {s:?} is not hex")))
}

fn write_key(blob: &KeyBlob, path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    blob.write(path).with_context(|| format!("writing {}", path.display()))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn secs(d: std::time::Duration) -> f64 {
    d.as_secs_f64()
}

fn times_json(t: &orchestrator::StageTimes) -> serde_json::Value {
    json!({ "fetch_s": secs(t.fetch), "compute_s": secs(t.compute), "store_s": secs(t.store), "wall_s": secs(t.wall) })
}

fn encrypt_table(a: EncryptTableArgs) -> anyhow::Result<()> {
    let cfg = a.run.config()?;
    let (schema, inputs) = read_source(&a.src)?;
    let key_path = table_key_path(&a.store.keys, &a.table);
    if key_path.exists() {
        return Err(anyhow!("{} already exists", key_path.display()));
    }
    let storage = LocalDir::new(&a.store.root)?;
    let key = SymKey::random(&mut OsRng);
    let report = orchestrator::run_encrypt_table(&storage, &a.table, &schema, inputs, &key, &cfg)?;
    write_key(&KeyBlob::Table(key.clone()), &key_path)?;
    let rows: u64 = report.manifest.partitions.iter().map(|p| p.rows).sum();
    println!("table {}: {} partitions, {rows} rows", a.table, report.manifest.partitions.len());
    println!("table key: {}", key_path.display());
    if a.insecure_print_keys {
        println!("table key hex: {}", key.to_hex());
    }
    Ok(())
}

fn add_family(a: AddFamilyArgs) -> anyhow::Result<()> {
    let cfg = a.run.config()?;
    let planner = a.planner.params()?;
    let params = FamilyParams { tag_len: a.tag_length, cache_capacity: a.cache_capacity };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let table_key = KeyBlob::read(&table_key_path(&a.store.keys, &a.table))?.into_table()?;
    let storage = LocalDir::new(&a.store.root)?;
    let family_key = SymKey::random(&mut OsRng);
    let report =
        orchestrator::run_add_family(&storage, &a.table, &table_key, &a.family, &planner, &params, &family_key, &cfg)?;
    let path = family_key_path(&a.store.keys, &a.table, report.family_id);
    write_key(&KeyBlob::Family { family_id: report.family_id, key: family_key.clone() }, &path)?;
    println!("family {:08x}: {} predicates, {} rows", report.family_id, report.n_pred, report.stats.rows);
    println!("family key: {}", path.display());
    if a.insecure_print_keys {
        println!("family key hex: {}", family_key.to_hex());
    }
    Ok(())
}

fn view_gen(a: ViewGenArgs) -> anyhow::Result<()> {
    let family_id = parse_family_id(&a.family_id)?;
    let (stored_id, key) = KeyBlob::read(&family_key_path(&a.store.keys, &a.table, family_id))?.into_family()?;
    if stored_id != family_id {
        return Err(anyhow!("key file holds family {stored_id:08x}, not {family_id:08x}"));
    }
    let storage = LocalDir::new(&a.store.root)?;
    let manifest = load_manifest(&storage, &a.table)?;
    let bits = orchestrator::stored_family(&manifest, family_id)?.1.branching_factor_bits;
    let planner = PlannerParams { branching_bits: bits, ..Default::default() };
    let keys = orchestrator::run_view_gen(&storage, &a.table, family_id, &key, &a.view, &planner)?;
    write_key(&KeyBlob::View(keys.clone()), &a.out)?;
    let per_pred: Vec<usize> = keys.keys.iter().map(Vec::len).collect();
    println!("view keys: {} ({} keys, per predicate {per_pred:?})", a.out.display(), keys.key_count());
    if a.insecure_print_keys {
        for (j, list) in keys.keys.iter().enumerate() {
            for (x, k) in list {
                println!("predicate {j} value {} key {}", hex::encode(x), k.to_hex());
            }
        }
    }
    Ok(())
}

fn reveal_view(a: RevealViewArgs) -> anyhow::Result<()> {
    let cfg = a.run.config()?;
    let keys: ViewKeySet = KeyBlob::read(&a.view_keys)?.into_view()?;
    let storage = LocalDir::new(&a.root)?;
    let params = RevealParams { tagged: !a.no_tags };
    let report = orchestrator::run_reveal_view(&storage, &a.table, &keys, a.fil, &a.out, &params, &cfg)?;
    if a.json {
        let parts: Vec<_> = report
            .partitions
            .iter()
            .map(|p| {
                json!({ "id": p.id, "rows": p.rows, "tag_hits": p.stats.tag_hits,
                        "false_positives": p.stats.false_positives, "trials": p.stats.trials })
            })
            .collect();
        print_json(
            &json!({ "version": 1, "rows": report.rows(), "partitions": parts, "times": times_json(&report.times) }),
        );
    } else {
        println!("{} rows from {} partitions into {}", report.rows(), report.partitions.len(), a.out.display());
    }
    Ok(())
}

fn plan_schema(a: &PlanArgs) -> anyhow::Result<Schema> {
    if let Some(spec) = &a.columns {
        return parse_columns(spec);
    }
    if let Some(path) = &a.schema {
        return read_schema(path);
    }
    let (Some(table), Some(root)) = (&a.table, &a.root) else {
        return Err(usage("one of --schema, --columns or --table is required"));
    };
    Ok(load_manifest(&LocalDir::new(root)?, table)?.schema)
}

fn plan_json(family: &CanonicalFamily, schema: &Schema, values: Option<&[Vec<Vec<u8>>]>) -> serde_json::Value {
    let names = |c: usize| schema.column(c).name.clone();
    let described = family.describe(&names);
    let preds: Vec<_> = family
        .predicates
        .iter()
        .zip(&described)
        .enumerate()
        .map(|(j, (p, d))| {
            let mut o = json!({ "index": j, "atoms": d, "recipes": p.recipes.len() });
            if let Some(vs) = values {
                o["values"] = json!(vs[j].len());
            }
            o
        })
        .collect();
    let mut out = json!({
        "version": 1,
        "family_id": format!("{:08x}", family.family_id()),
        "table": family.table,
        "sql": family.sql,
        "branching_bits": family.branching_bits,
        "projection": family.projection.iter().map(|&c| names(c)).collect::<Vec<_>>(),
        "wildcards": family.wildcards().into_iter().collect::<Vec<_>>(),
        "predicates": preds,
    });
    if let Some(vs) = values {
        out["total_values"] = json!(vs.iter().map(Vec::len).sum::<usize>());
    }
    out
}

fn plan(a: PlanArgs) -> anyhow::Result<()> {
    let schema = plan_schema(&a)?;
    let planner = a.planner.params()?;
    let family = plan_family(&a.family, &schema, &planner)?;
    let view = match &a.view {
        Some(v) => Some(plan_view(v, &family, &schema, &planner)?),
        None if family.wildcards().is_empty() => Some(plan_literals(&family, &planner)?),
        None => None,
    };
    let values = view.as_ref().map(|v| v.values.as_slice());
    if a.json {
        print_json(&plan_json(&family, &schema, values));
        return Ok(());
    }
    println!("family {:08x}: {}", family.family_id(), family.sql);
    for (j, d) in family.describe(&|c| schema.column(c).name.clone()).iter().enumerate() {
        match values {
            Some(vs) => println!("  g{j} = {d}  ({} values)", vs[j].len()),
            None => println!("  g{j} = {d}"),
        }
    }
    Ok(())
}

fn check(a: CheckArgs) -> anyhow::Result<bool> {
    let planner = a.planner.params()?;
    let (schema, inputs) = read_source(&a.src)?;
    let mut plain: BTreeMap<u32, Vec<Vec<Value>>> = BTreeMap::new();
    for input in &inputs {
        let PlainInput::Csv { id, path } = input else { unreachable!() };
        let rows = lakeveil_core::table::read_csv(std::fs::File::open(path)?, &schema)?;
        plain.insert(*id, rows);
    }
    let family = plan_family(&a.family, &schema, &planner)?;
    let storage = MemStorage::new();
    let cfg = PipelineConfig::default();
    let tk = SymKey::random(&mut OsRng);
    let fk = SymKey::random(&mut OsRng);
    let table = family.table.clone();
    orchestrator::run_encrypt_table(&storage, &table, &schema, inputs, &tk, &cfg)?;
    let params = FamilyParams { tag_len: a.tag_length, ..Default::default() };
    let fam = orchestrator::run_add_family(&storage, &table, &tk, &a.family, &planner, &params, &fk, &cfg)?;
    let keys = orchestrator::run_view_gen(&storage, &table, fam.family_id, &fk, &a.view, &planner)?;
    let out = tempfile::tempdir()?;
    orchestrator::run_reveal_view(&storage, &table, &keys, None, out.path(), &RevealParams::default(), &cfg)?;
    let columns: Vec<Column> = family.projection.iter().map(|&c| schema.column(c).clone()).collect();
    let mut ok = true;
    for (id, rows) in &plain {
        let expected: Vec<Vec<Value>> =
            oracle::eval_view(&schema, rows, &a.view)?.into_iter().map(|(_, r)| r).collect();
        let mut buf = Vec::new();
        lakeveil_core::table::write_csv(&mut buf, &columns, &expected)?;
        let got = std::fs::read(orchestrator::output_file(out.path(), *id))?;
        let same = got == buf;
        ok &= same;
        println!("partition {id}: {} rows, {}", expected.len(), if same { "match" } else { "MISMATCH" });
    }
    Ok(ok)
}

fn synthetic(rows: usize, partitions: u32, distinct: i64) -> anyhow::Result<(Schema, Vec<PlainInput>)> {
    let schema = Schema::new(vec![Column::int("id"), Column::int("grp"), Column::utf8("name")])?;
    let mut rng = StdRng::seed_from_u64(7);
    let per = rows.div_ceil(partitions.max(1) as usize);
    let mut inputs = Vec::new();
    let mut next = 0i64;
    for p in 1..=partitions {
        let n = per.min(rows.saturating_sub(next as usize));
        let data = (0..n)
            .map(|_| {
                next += 1;
                let name: String = (0..12).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
                vec![Value::Int(next), Value::Int(rng.gen_range(0..distinct.max(1))), Value::Str(name)]
            })
            .collect();
        inputs.push(PlainInput::Rows(PlainPartition::new(p, data)?));
    }
    Ok((schema, inputs))
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let cfg = a.run.config()?;
    if a.rows == 0 || a.partitions == 0 || a.distinct < 1 {
        return Err(usage("rows, partitions and distinct must be at least 1"));
    }
    let params = FamilyParams { tag_len: a.tag_length, cache_capacity: a.cache_capacity };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let (schema, inputs) = synthetic(a.rows, a.partitions, a.distinct)?;
    let storage = MemStorage::new();
    let planner = PlannerParams::default();
    let tk = SymKey::random(&mut OsRng);
    let fk = SymKey::random(&mut OsRng);
    let sql = "SELECT * FROM bench WHERE grp = ?g";
    let start = Instant::now();
    let enc = orchestrator::run_encrypt_table(&storage, "bench", &schema, inputs, &tk, &cfg)?;
    let plaintext = enc.plaintext_bytes;
    let (op, times, extra) = match a.op {
        BenchOp::Encrypt => ("encrypt", enc.times, json!({ "encrypted_bytes": enc.encrypted_bytes })),
        BenchOp::Addfamily | BenchOp::Reveal => {
            let fam = orchestrator::run_add_family(&storage, "bench", &tk, sql, &planner, &params, &fk, &cfg)?;
            if matches!(a.op, BenchOp::Addfamily) {
                let extra = json!({ "family_bytes": fam.family_bytes, "cache_hits": fam.stats.cache_hits,
                                    "cache_misses": fam.stats.cache_misses, "predicates": fam.n_pred });
                ("addfamily", fam.times, extra)
            } else {
                let keys = orchestrator::run_view_gen(
                    &storage,
                    "bench",
                    fam.family_id,
                    &fk,
                    "SELECT * FROM bench WHERE grp = 0",
                    &planner,
                )?;
                let out = tempfile::tempdir()?;
                let rev = orchestrator::run_reveal_view(
                    &storage,
                    "bench",
                    &keys,
                    None,
                    out.path(),
                    &RevealParams::default(),
                    &cfg,
                )?;
                ("reveal", rev.times, json!({ "rows_revealed": rev.rows() }))
            }
        }
    };
    let mb = plaintext as f64 / 1e6;
    let crypto_s = secs(times.compute);
    let wall_s = secs(times.wall);
    let report = json!({
        "version": 1,
        "op": op,
        "rows": a.rows,
        "partitions": a.partitions,
        "workers": cfg.workers,
        "plaintext_bytes": plaintext,
        "times": times_json(&times),
        "mb_per_s_crypto": if crypto_s > 0.0 { mb / crypto_s } else { 0.0 },
        "mb_per_s_wall": if wall_s > 0.0 { mb / wall_s } else { 0.0 },
        "total_s": secs(start.elapsed()),
        "detail": extra,
    });
    if a.json {
        print_json(&report);
    } else {
        println!(
            "{op}: {} rows, {:.1} MB plaintext, {:.1} MB/s crypto ({} workers), {:.1} MB/s wall",
            a.rows,
            mb,
            report["mb_per_s_crypto"].as_f64().unwrap_or(0.0),
            cfg.workers,
            report["mb_per_s_wall"].as_f64().unwrap_or(0.0)
        );
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::EncryptTable(a) => encrypt_table(a)?,
        Command::AddFamily(a) => add_family(a)?,
        Command::ViewGen(a) => view_gen(a)?,
        Command::RevealView(a) => reveal_view(a)?,
        Command::Plan(a) => plan(a)?,
        Command::Check(a) => return check(a),
        Command::Bench(a) => bench(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<Usage>() { 1 } else { 2 })
        }
    }
}
