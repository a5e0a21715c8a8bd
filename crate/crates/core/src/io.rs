//! Run configuration, verification reports and the binary operator cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{CacheError, KineticError, Result};
use crate::grid::{GridRef, GridSpec, MixtureConfig};
use crate::operator::{CollisionOperator, OperatorMetadata, Pair, DEFAULT_ANGULAR_ORDER};
use crate::radial::RadialSettings;

pub const CONFIG_SCHEMA: u32 = 1;
pub const CACHE_MAGIC: &[u8; 8] = b"BKIN1\0\0\0";
pub const CACHE_VERSION: u32 = 1;
/// Overrides the cache directory of the configuration.
pub const CACHE_DIR_ENV: &str = "KINETIC_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialSpec {
    /// Half-length X of the periodic box [-X, X).
    pub half_length: f64,
    /// Largest admissible spacing; the node count is rounded up.
    pub max_dx: f64,
    pub times: Vec<f64>,
    /// Sharpness p of the bump exp(p - p / (1 - x^2)).
    pub sharpness: f64,
}

impl Default for SpatialSpec {
    fn default() -> Self {
        Self { half_length: 80.0, max_dx: 0.055, times: vec![10.0, 20.0, 40.0, 80.0, 160.0], sharpness: 24.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Gauss order per panel of the L_BA angular integral.
    pub angular_order: usize,
    pub fine_factor: usize,
    pub inner_points: usize,
    pub moment_points: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        let r = RadialSettings::default();
        Self {
            angular_order: DEFAULT_ANGULAR_ORDER,
            fine_factor: r.fine_factor,
            inner_points: r.inner_points,
            moment_points: r.moment_points,
        }
    }
}

impl QuadratureSpec {
    pub fn radial(&self) -> RadialSettings {
        RadialSettings { fine_factor: self.fine_factor, inner_points: self.inner_points, moment_points: self.moment_points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub sound_speed: f64,
    pub null_residual: f64,
    pub self_adjoint: f64,
    pub coefficient_fit: f64,
    pub cancellation: f64,
    pub conservation: f64,
    pub resonance: f64,
    pub oddness: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sound_speed: 1e-10,
            null_residual: 1e-5,
            self_adjoint: 1e-11,
            coefficient_fit: 1e-3,
            cancellation: 1e-6,
            conservation: 1e-6,
            resonance: 1e-6,
            oddness: 1e-6,
        }
    }
}

impl Tolerances {
    fn all(&self) -> [(&'static str, f64); 8] {
        [
            ("sound_speed", self.sound_speed),
            ("null_residual", self.null_residual),
            ("self_adjoint", self.self_adjoint),
            ("coefficient_fit", self.coefficient_fit),
            ("cancellation", self.cancellation),
            ("conservation", self.conservation),
            ("resonance", self.resonance),
            ("oddness", self.oddness),
        ]
    }
}

fn default_grid() -> GridSpec {
    GridSpec::AxisymM0 { n_radial: 16, n_polar: 10 }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default)]
    pub mixture: MixtureConfig,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default)]
    pub spatial: SpatialSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA,
            mixture: MixtureConfig::default(),
            grid: default_grid(),
            spatial: SpatialSpec::default(),
            quadrature: QuadratureSpec::default(),
            tolerances: Tolerances::default(),
            cache_dir: None,
            output_dir: default_output(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| KineticError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| KineticError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(KineticError::Config(format!("unsupported schema {} (expected {CONFIG_SCHEMA})", self.schema)));
        }
        self.mixture.validate()?;
        for (name, v) in self.tolerances.all() {
            if !(v.is_finite() && v > 0.0) {
                return Err(KineticError::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        let times = &self.spatial.times;
        if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KineticError::Config("time ladder must be positive and strictly increasing".into()));
        }
        let s = &self.spatial;
        if !(s.half_length.is_finite() && s.half_length > 1.0 && s.max_dx > 0.0 && s.sharpness > 0.0) {
            return Err(KineticError::Config("spatial box needs X > 1, dx > 0 and sharpness > 0".into()));
        }
        if self.quadrature.angular_order < 2 || self.quadrature.fine_factor == 0 {
            return Err(KineticError::Config("quadrature orders too small".into()));
        }
        Ok(())
    }

    /// Content hash of the whole configuration.
    pub fn hash(&self) -> String {
        crate::digest_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Cache directory: the environment override, else the configured one.
    pub fn resolved_cache_dir(&self) -> Option<PathBuf> {
        std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from).or_else(|| self.cache_dir.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub description: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when measured <= tolerance.
    pub fn at_most(id: &str, description: &str, measured: f64, tolerance: f64) -> Self {
        Self { id: id.into(), description: description.into(), measured, tolerance, pass: measured <= tolerance }
    }

    /// Passes when measured > tolerance.
    pub fn above(id: &str, description: &str, measured: f64, tolerance: f64) -> Self {
        Self { id: id.into(), description: description.into(), measured, tolerance, pass: measured > tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub environment: Environment,
    pub config_hash: String,
    pub passed: bool,
}

impl VerificationReport {
    pub fn new(suite: &str, config_hash: &str, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.pass);
        Self { suite: suite.into(), checks, environment: Environment::current(), config_hash: config_hash.into(), passed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Pretty JSON; field order is fixed by the types, so equal values give equal bytes.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// CSV with a header row; numbers use the shortest representation that round-trips.
pub fn to_csv(header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        if r.len() != header.len() {
            return Err(KineticError::Config(format!("CSV row has {} fields, header {}", r.len(), header.len())));
        }
        let line: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    Ok(s)
}

/// Writes `contents` to `path` through a temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes a verification report as JSON, or its checks as CSV.
pub fn emit_report(report: &VerificationReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Json => to_json(report)?,
        ReportFormat::Csv => {
            let mut s = String::from("id,measured,tolerance,pass\n");
            for c in &report.checks {
                s.push_str(&format!("{},{:?},{:?},{}\n", c.id, c.measured, c.tolerance, c.pass));
            }
            s
        }
    };
    write_atomic(path, text.as_bytes())
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Serializes the operator: header (magic, version, pair, hashes, dims, metadata), then nu and K
/// as little-endian doubles, then a SHA-256 of everything before it.
pub fn encode_operator(op: &CollisionOperator) -> Vec<u8> {
    let n = op.dim();
    let meta = op.metadata();
    let mut buf = Vec::with_capacity(256 + 8 * n * (n + 1));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.push(op.pair().tag());
    put_str(&mut buf, &meta.grid_hash);
    put_str(&mut buf, &meta.config_hash);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&meta.angular_order.map_or(u64::MAX, |o| o as u64).to_le_bytes());
    buf.extend_from_slice(&meta.nu0.to_le_bytes());
    for v in op.nu() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let k = op.kernel_matrix();
    for j in 0..n {
        for i in 0..n {
            buf.extend_from_slice(&k[(i, j)].to_le_bytes());
        }
    }
    let digest = sha_bytes(&buf);
    buf.extend_from_slice(&digest);
    buf
}

fn sha_bytes(bytes: &[u8]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).into()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], CacheError> {
        if self.pos + n > self.bytes.len() {
            return Err(CacheError::CorruptHeader(format!(
                "file truncated reading {what}: need {} bytes, have {}",
                self.pos + n,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> std::result::Result<f64, CacheError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> std::result::Result<String, CacheError> {
        let len = self.u32(what)? as usize;
        if len > 1024 {
            return Err(CacheError::CorruptHeader(format!("{what} length {len}")));
        }
        String::from_utf8(self.take(len, what)?.to_vec()).map_err(|_| CacheError::CorruptHeader(format!("{what} is not UTF-8")))
    }
}

/// Decodes an operator for `grid` and `config`; rejects foreign, stale or damaged files.
pub fn decode_operator(bytes: &[u8], grid: &GridRef, config: &MixtureConfig) -> Result<CollisionOperator> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CACHE_MAGIC {
        return Err(CacheError::CorruptHeader("bad magic".into()).into());
    }
    let version = r.u32("version")?;
    if version != CACHE_VERSION {
        return Err(CacheError::Version { found: version, expected: CACHE_VERSION }.into());
    }
    let pair = Pair::from_tag(r.take(1, "pair")?[0]).ok_or_else(|| CacheError::CorruptHeader("unknown pair tag".into()))?;
    let grid_hash = r.string("grid hash")?;
    let config_hash = r.string("config hash")?;
    let n = r.u64("dimension")? as usize;
    let order = r.u64("angular order")?;
    let nu0 = r.f64("nu0")?;
    if n != grid.len() {
        return Err(CacheError::CorruptHeader(format!("dimension {n} does not match grid size {}", grid.len())).into());
    }
    let payload = 8 * n * (n + 1) + 32;
    if bytes.len() != r.pos + payload {
        return Err(CacheError::CorruptHeader(format!(
            "file truncated: expected {} bytes, found {}",
            r.pos + payload,
            bytes.len()
        ))
        .into());
    }
    let body_end = bytes.len() - 32;
    if sha_bytes(&bytes[..body_end]) != bytes[body_end..] {
        return Err(CacheError::HashMismatch { field: "payload" }.into());
    }
    if grid_hash != grid.id_hash() {
        return Err(CacheError::HashMismatch { field: "grid" }.into());
    }
    if config_hash != config.hash() {
        return Err(CacheError::HashMismatch { field: "config" }.into());
    }
    let nu = (0..n).map(|_| r.f64("nu")).collect::<std::result::Result<Vec<_>, _>>()?;
    let mut k = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            k[(i, j)] = r.f64("kernel")?;
        }
    }
    let metadata = OperatorMetadata {
        angular_order: (order != u64::MAX).then_some(order as usize),
        config_hash,
        grid_hash,
        nu0,
    };
    CollisionOperator::from_parts(pair, grid.clone(), nu, k, metadata)
}

pub fn cache_store(op: &CollisionOperator, path: &Path) -> Result<()> {
    write_atomic(path, &encode_operator(op))
}

pub fn cache_load(path: &Path, grid: &GridRef, config: &MixtureConfig) -> Result<CollisionOperator> {
    decode_operator(&fs::read(path)?, grid, config)
}

/// File name keyed by pair, grid, configuration and angular order.
pub fn cache_file_name(pair: Pair, grid: &GridRef, config: &MixtureConfig, angular_order: Option<usize>) -> String {
    let tag = match pair {
        Pair::Bb => "bb",
        Pair::Ab => "ab",
        Pair::Ba => "ba",
    };
    let order = angular_order.map_or_else(|| "na".to_string(), |o| o.to_string());
    format!("{tag}-{}-{}-{order}.bkin", &grid.id_hash()[..16], &config.hash()[..16])
}

/// Loads the operator from `dir` if a valid cache exists, otherwise builds and stores it.
pub fn cached_operator(
    dir: Option<&Path>,
    pair: Pair,
    grid: &GridRef,
    config: &MixtureConfig,
    angular_order: Option<usize>,
    build: impl FnOnce() -> Result<CollisionOperator>,
) -> Result<CollisionOperator> {
    let Some(dir) = dir else {
        return build();
    };
    let path = dir.join(cache_file_name(pair, grid, config, angular_order));
    if path.exists() {
        if let Ok(op) = cache_load(&path, grid, config) {
            return Ok(op);
        }
    }
    let op = build()?;
    cache_store(&op, &path)?;
    Ok(op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::operator::assemble_operator;

    fn operator() -> (MixtureConfig, GridRef, CollisionOperator) {
        let cfg = MixtureConfig::default();
        let grid = build_grid(&cfg, GridSpec::AxisymM0 { n_radial: 6, n_polar: 5 }).unwrap();
        let op = assemble_operator(Pair::Ab, &grid, &cfg).unwrap();
        (cfg, grid, op)
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let (cfg, grid, op) = operator();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("op.bkin");
        cache_store(&op, &path).unwrap();
        let back = cache_load(&path, &grid, &cfg).unwrap();
        assert_eq!(back.nu(), op.nu());
        let (a, b) = (back.kernel_matrix(), op.kernel_matrix());
        for j in 0..op.dim() {
            for i in 0..op.dim() {
                assert_eq!(a[(i, j)].to_bits(), b[(i, j)].to_bits());
            }
        }
        assert_eq!(back.metadata(), op.metadata());
    }

    #[test]
    fn cache_rejects_stale_or_damaged_files() {
        let (cfg, grid, op) = operator();
        let bytes = encode_operator(&op);
        let mut other = cfg.clone();
        other.sigma_ab = 1.5;
        assert!(matches!(
            decode_operator(&bytes, &grid, &other),
            Err(KineticError::Cache(CacheError::HashMismatch { field: "config" }))
        ));
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                decode_operator(&bytes[..cut], &grid, &cfg),
                Err(KineticError::Cache(CacheError::CorruptHeader(_)))
            ));
        }
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(decode_operator(&v, &grid, &cfg), Err(KineticError::Cache(CacheError::Version { found: 9, .. }))));
        let mut flipped = bytes.clone();
        let mid = bytes.len() - 100;
        flipped[mid] ^= 1;
        assert!(matches!(
            decode_operator(&flipped, &grid, &cfg),
            Err(KineticError::Cache(CacheError::HashMismatch { field: "payload" }))
        ));
    }

    #[test]
    fn config_schema_and_determinism() {
        let cfg = RunConfig::from_json(r#"{"schema": 1}"#).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(RunConfig::from_json(r#"{"schema": 2}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema": 1, "bogus": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema": 1, "tolerances": {"cancellation": 0.0}}"#).is_err());
        assert!(RunConfig::from_json(
            r#"{"schema": 1, "spatial": {"half_length": 10, "max_dx": 0.05, "times": [2, 1], "sharpness": 24}}"#
        )
        .is_err());
        let checks = vec![Check::at_most("x", "d", 0.1 + 0.2, 1.0), Check::above("y", "d", 1e-300, 0.0)];
        let a = to_json(&VerificationReport::new("s", &cfg.hash(), checks.clone())).unwrap();
        let b = to_json(&VerificationReport::new("s", &cfg.hash(), checks)).unwrap();
        assert_eq!(a, b);
        let back: VerificationReport = serde_json::from_str(&a).unwrap();
        assert_eq!(back.checks[0].measured, 0.1 + 0.2);
        assert!(back.passed);
        let csv = to_csv(&["a", "b"], &[vec![0.1 + 0.2, -1e-310]]).unwrap();
        let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1 + 0.2, -1e-310]);
    }
}
