//! Head-level trace data model, the CKVT binary trace format, and the
//! synthetic trace generator.
//!
//! A CKVT file is laid out as:
//!
//! ```text
//! "CKVT" | u32 version | u32 n_layers | u32 n_heads | u32 d | u32 L | u32 T
//! per head, layer-major: prompt_keys (L×d) prompt_values (L×d)
//!                        decode_queries (T×d) decode_keys (T×d) decode_values (T×d)
//! u32 metadata_len | metadata_len bytes of UTF-8 JSON (string → string map)
//! ```
//!
//! All integers and floats are little-endian; matrices are row-major `f32`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, validation, FormatError, Result};
use crate::tensor::Matrix;

pub const MAGIC: [u8; 4] = *b"CKVT";
pub const VERSION: u32 = 1;

/// Keys, values and queries seen by one attention head over a prompt of
/// `L` tokens followed by `T` decode steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    pub prompt_keys: Matrix,
    pub prompt_values: Matrix,
    pub decode_queries: Matrix,
    pub decode_keys: Matrix,
    pub decode_values: Matrix,
}

impl HeadTrace {
    pub fn head_dim(&self) -> usize {
        self.prompt_keys.cols()
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt_keys.rows()
    }

    pub fn decode_len(&self) -> usize {
        self.decode_queries.rows()
    }

    fn matrices(&self) -> [&Matrix; 5] {
        [
            &self.prompt_keys,
            &self.prompt_values,
            &self.decode_queries,
            &self.decode_keys,
            &self.decode_values,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (d, l, t) = (self.head_dim(), self.prompt_len(), self.decode_len());
        let expected = [(l, d), (l, d), (t, d), (t, d), (t, d)];
        for (m, (rows, cols)) in self.matrices().into_iter().zip(expected) {
            if m.rows() != rows || m.cols() != cols {
                return Err(validation(format!(
                    "head matrix is {}x{}, expected {rows}x{cols}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.is_finite() {
                return Err(validation("head trace contains non-finite values"));
            }
        }
        Ok(())
    }

    /// Prompt keys followed by decode keys, i.e. the full key cache at the end
    /// of generation.
    pub fn all_keys(&self) -> Matrix {
        let mut m = self.prompt_keys.clone();
        m.extend_rows(self.decode_keys.view());
        m
    }

    pub fn all_values(&self) -> Matrix {
        let mut m = self.prompt_values.clone();
        m.extend_rows(self.decode_values.view());
        m
    }
}

/// Every head of every layer of one traced generation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceBundle {
    pub n_layers: usize,
    pub n_heads: usize,
    /// Layer-major: head `h` of layer `l` lives at `l * n_heads + h`.
    pub traces: Vec<HeadTrace>,
    pub metadata: BTreeMap<String, String>,
}

impl TraceBundle {
    pub fn head(&self, layer: usize, head: usize) -> &HeadTrace {
        &self.traces[layer * self.n_heads + head]
    }

    pub fn head_dim(&self) -> usize {
        self.traces.first().map_or(0, HeadTrace::head_dim)
    }

    pub fn prompt_len(&self) -> usize {
        self.traces.first().map_or(0, HeadTrace::prompt_len)
    }

    pub fn decode_len(&self) -> usize {
        self.traces.first().map_or(0, HeadTrace::decode_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.traces.len() != self.n_layers * self.n_heads {
            return Err(validation(format!(
                "bundle declares {}x{} heads but holds {}",
                self.n_layers,
                self.n_heads,
                self.traces.len()
            )));
        }
        let (d, l, t) = (self.head_dim(), self.prompt_len(), self.decode_len());
        for tr in &self.traces {
            tr.validate()?;
            if (tr.head_dim(), tr.prompt_len(), tr.decode_len()) != (d, l, t) {
                return Err(validation("heads disagree on d, L or T"));
            }
        }
        Ok(())
    }

    /// Serializes into the CKVT byte layout.
    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = [self.n_layers, self.n_heads, self.head_dim(), self.prompt_len(), self.decode_len()];
        let n_floats: usize = self.traces.iter().flat_map(|t| t.matrices()).map(|m| m.as_slice().len()).sum();
        let meta = serde_json::to_vec(&self.metadata)?;
        let mut out = Vec::with_capacity(32 + 4 * n_floats + meta.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in header {
            let v = u32::try_from(v).map_err(|_| FormatError::DimensionOverflow(format!("{v} does not fit in u32")))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        for m in self.traces.iter().flat_map(|t| t.matrices()) {
            for x in m.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let meta_len = u32::try_from(meta.len()).map_err(|_| FormatError::DimensionOverflow("metadata too large".into()))?;
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(&meta);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic).into());
        }
        let version = cur.u32("version")?;
        if version != VERSION {
            return Err(FormatError::VersionMismatch {
                found: version,
                expected: VERSION,
            }
            .into());
        }
        let mut header = [0usize; 5];
        for h in &mut header {
            *h = cur.u32("header")? as usize;
        }
        let [n_layers, n_heads, d, l, t] = header;
        if d == 0 {
            return Err(FormatError::DimensionOverflow("head dimension is zero".into()).into());
        }
        let overflow = || FormatError::DimensionOverflow(format!("{n_layers}x{n_heads} heads of d={d}, L={l}, T={t}"));
        let per_head = l
            .checked_mul(2)
            .and_then(|x| t.checked_mul(3).and_then(|y| x.checked_add(y)))
            .and_then(|rows| rows.checked_mul(d))
            .ok_or_else(overflow)?;
        per_head
            .checked_mul(n_layers)
            .and_then(|x| x.checked_mul(n_heads))
            .and_then(|x| x.checked_mul(4))
            .ok_or_else(overflow)?;

        let mut traces = Vec::with_capacity(n_layers * n_heads);
        for _ in 0..n_layers * n_heads {
            let mut read = |rows: usize| -> Result<Matrix> {
                let raw = cur.take(rows * d * 4, "matrix payload")?;
                let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                Matrix::from_vec(rows, d, data)
            };
            traces.push(HeadTrace {
                prompt_keys: read(l)?,
                prompt_values: read(l)?,
                decode_queries: read(t)?,
                decode_keys: read(t)?,
                decode_values: read(t)?,
            });
        }
        let meta_len = cur.u32("metadata length")? as usize;
        let meta = cur.take(meta_len, "metadata")?;
        let metadata = serde_json::from_slice(meta).map_err(|e| FormatError::Metadata(e.to_string()))?;
        if cur.pos != bytes.len() {
            return Err(FormatError::TrailingBytes(bytes.len() - cur.pos).into());
        }
        Ok(Self {
            n_layers,
            n_heads,
            traces,
            metadata,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], FormatError> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return Err(FormatError::Truncated {
                context,
                needed: n - remaining,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, context: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }
}

pub fn write_trace(bundle: &TraceBundle, path: impl AsRef<Path>) -> Result<()> {
    let bytes = bundle.encode()?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceBundle> {
    TraceBundle::decode(&fs::read(path)?)
}

/// Parameters of the synthetic trace generator.
///
/// Keys are drawn from a mixture of `n_centers` directional clusters. A few
/// optional "outlier" channels carry large positive magnitudes that queries
/// never read, mimicking the outlier channels of real key caches; their
/// per-token jitter scales with `intra_spread` so a zero spread still yields
/// identical keys within a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_centers: usize,
    /// How far cluster centers stray from a shared anchor direction.
    pub center_spread: f32,
    /// Ratio of per-token noise norm to center norm.
    pub intra_spread: f32,
    /// Random-walk step size of the query mixture weights.
    pub query_drift: f32,
    pub seed: u64,
    pub prompt_len: usize,
    pub decode_len: usize,
    pub head_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Norm of the directional part of each key.
    pub key_scale: f32,
    pub query_scale: f32,
    /// Weight of the off-center component of each query.
    pub query_jitter: f32,
    pub outlier_channels: usize,
    /// Outlier channel magnitude relative to `key_scale`.
    pub outlier_scale: f32,
    /// Log-normal jitter of outlier magnitudes, multiplied by `intra_spread`.
    pub outlier_jitter: f32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_centers: 8,
            center_spread: 2.0,
            intra_spread: 0.6,
            query_drift: 0.12,
            seed: 7,
            prompt_len: 4096,
            decode_len: 256,
            head_dim: 128,
            n_layers: 2,
            n_heads: 4,
            key_scale: 6.0,
            query_scale: 6.0,
            query_jitter: 0.6,
            outlier_channels: 4,
            outlier_scale: 1.0,
            outlier_jitter: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_centers == 0 || self.prompt_len == 0 || self.head_dim == 0 {
            return Err(invalid("n_centers, prompt_len and head_dim must be at least 1"));
        }
        if self.n_layers == 0 || self.n_heads == 0 {
            return Err(invalid("n_layers and n_heads must be at least 1"));
        }
        if self.outlier_channels >= self.head_dim {
            return Err(invalid("outlier_channels must leave at least one directional channel"));
        }
        let reals = [
            self.center_spread,
            self.intra_spread,
            self.query_drift,
            self.key_scale,
            self.query_scale,
            self.query_jitter,
            self.outlier_scale,
            self.outlier_jitter,
        ];
        if reals.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid("spreads and scales must be finite and non-negative"));
        }
        if self.key_scale == 0.0 {
            return Err(invalid("key_scale must be positive"));
        }
        Ok(())
    }
}

/// Generator-side cluster assignment of every key (prompt then decode), per head.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub assignments: Vec<Vec<u32>>,
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<TraceBundle> {
    generate_synthetic_labeled(spec).map(|(b, _)| b)
}

pub fn generate_synthetic_labeled(spec: &SynthSpec) -> Result<(TraceBundle, GroundTruth)> {
    spec.validate()?;
    let mut traces = Vec::with_capacity(spec.n_layers * spec.n_heads);
    let mut assignments = Vec::with_capacity(traces.capacity());
    for layer in 0..spec.n_layers {
        for head in 0..spec.n_heads {
            let mut rng = ChaCha8Rng::seed_from_u64(head_seed(spec.seed, layer, head));
            let (trace, truth) = HeadGenerator::new(spec, &mut rng).generate(&mut rng);
            traces.push(trace);
            assignments.push(truth);
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".to_owned(), "synthetic-directional-mixture".to_owned());
    metadata.insert("seed".to_owned(), spec.seed.to_string());
    metadata.insert("spec".to_owned(), serde_json::to_string(spec)?);
    let bundle = TraceBundle {
        n_layers: spec.n_layers,
        n_heads: spec.n_heads,
        traces,
        metadata,
    };
    Ok((bundle, GroundTruth { assignments }))
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent, reproducible sub-seed for one (layer, head).
pub fn head_seed(seed: u64, layer: usize, head: usize) -> u64 {
    mix64(mix64(mix64(seed) ^ layer as u64) ^ (head as u64).rotate_left(32))
}

struct HeadGenerator<'a> {
    spec: &'a SynthSpec,
    /// Channels carrying directional signal; the rest are outlier channels.
    directional: Vec<usize>,
    outliers: Vec<usize>,
    centers: Vec<Vec<f32>>,
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f32]) -> bool {
    let n = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if n < 1e-12 {
        return false;
    }
    v.iter_mut().for_each(|x| *x = (f64::from(*x) / n) as f32);
    true
}

/// Gaussian direction of unit norm.
fn unit_direction(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    loop {
        let mut v = gaussian(rng, n);
        if normalize(&mut v) {
            return v;
        }
    }
}

impl<'a> HeadGenerator<'a> {
    fn new(spec: &'a SynthSpec, rng: &mut ChaCha8Rng) -> Self {
        let d = spec.head_dim;
        let mut outliers = rand::seq::index::sample(rng, d, spec.outlier_channels).into_vec();
        outliers.sort_unstable();
        let directional: Vec<usize> = (0..d).filter(|c| outliers.binary_search(c).is_err()).collect();
        let n = directional.len();
        let anchor = unit_direction(rng, n);
        let centers = (0..spec.n_centers)
            .map(|_| loop {
                let offset = unit_direction(rng, n);
                let mut c: Vec<f32> = anchor.iter().zip(&offset).map(|(a, o)| a + spec.center_spread * o).collect();
                if normalize(&mut c) {
                    break c;
                }
            })
            .collect();
        Self {
            spec,
            directional,
            outliers,
            centers,
        }
    }

    fn key(&self, rng: &mut ChaCha8Rng, center: usize) -> Vec<f32> {
        let spec = self.spec;
        let n = self.directional.len();
        let dir = loop {
            let noise = gaussian(rng, n);
            let scale = spec.intra_spread / (n as f32).sqrt();
            let mut v: Vec<f32> = self.centers[center].iter().zip(&noise).map(|(c, z)| c + scale * z).collect();
            if normalize(&mut v) {
                break v;
            }
        };
        let mut key = vec![0.0f32; spec.head_dim];
        for (&ch, x) in self.directional.iter().zip(dir) {
            key[ch] = spec.key_scale * x;
        }
        for &ch in &self.outliers {
            let z: f32 = rng.sample(StandardNormal);
            key[ch] = spec.key_scale * spec.outlier_scale * (spec.outlier_jitter * spec.intra_spread * z).exp();
        }
        key
    }

    fn keys(&self, rng: &mut ChaCha8Rng, rows: usize, truth: &mut Vec<u32>) -> Matrix {
        let mut m = Matrix::zeros(0, self.spec.head_dim);
        for _ in 0..rows {
            let c = rng.random_range(0..self.centers.len());
            truth.push(c as u32);
            m.push_row(&self.key(rng, c));
        }
        m
    }

    fn values(&self, rng: &mut ChaCha8Rng, rows: usize) -> Matrix {
        let d = self.spec.head_dim;
        Matrix::from_vec(rows, d, gaussian(rng, rows * d)).expect("shape")
    }

    /// Queries follow a random walk over mixtures of the cluster centers plus a
    /// slowly rotating off-center component.
    fn queries(&self, rng: &mut ChaCha8Rng) -> Matrix {
        let spec = self.spec;
        let n = self.directional.len();
        let mut weights = vec![0.0f32; spec.n_centers];
        weights[rng.random_range(0..spec.n_centers)] = 1.0;
        let mut off = unit_direction(rng, n);
        let mut m = Matrix::zeros(0, spec.head_dim);
        for _ in 0..spec.decode_len {
            for w in &mut weights {
                *w += spec.query_drift * rng.sample::<f32, _>(StandardNormal);
            }
            let step = gaussian(rng, n);
            let step_scale = spec.query_drift / (n as f32).sqrt();
            for (o, s) in off.iter_mut().zip(&step) {
                *o += step_scale * s;
            }
            normalize(&mut off);
            let mut dir: Vec<f32> = off.iter().map(|o| spec.query_jitter * o).collect();
            for (w, c) in weights.iter().zip(&self.centers) {
                for (x, cx) in dir.iter_mut().zip(c) {
                    *x += w * cx;
                }
            }
            if !normalize(&mut dir) {
                dir = unit_direction(rng, n);
            }
            let mut q = vec![0.0f32; spec.head_dim];
            for (&ch, x) in self.directional.iter().zip(dir) {
                q[ch] = spec.query_scale * x;
            }
            m.push_row(&q);
        }
        m
    }

    fn generate(&self, rng: &mut ChaCha8Rng) -> (HeadTrace, Vec<u32>) {
        let spec = self.spec;
        let mut truth = Vec::with_capacity(spec.prompt_len + spec.decode_len);
        let prompt_keys = self.keys(rng, spec.prompt_len, &mut truth);
        let prompt_values = self.values(rng, spec.prompt_len);
        let decode_queries = self.queries(rng);
        let decode_keys = self.keys(rng, spec.decode_len, &mut truth);
        let decode_values = self.values(rng, spec.decode_len);
        let trace = HeadTrace {
            prompt_keys,
            prompt_values,
            decode_queries,
            decode_keys,
            decode_values,
        };
        (trace, truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            prompt_len: 16,
            decode_len: 4,
            head_dim: 8,
            n_layers: 2,
            n_heads: 2,
            outlier_channels: 1,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn single_center_without_spread_gives_identical_keys() {
        let spec = SynthSpec {
            n_centers: 1,
            intra_spread: 0.0,
            prompt_len: 64,
            decode_len: 8,
            head_dim: 16,
            ..SynthSpec::default()
        };
        let b = generate_synthetic(&spec).unwrap();
        for tr in &b.traces {
            let first = tr.prompt_keys.row(0);
            for i in 1..tr.prompt_len() {
                assert_eq!(tr.prompt_keys.row(i), first);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.encode().unwrap(), b.encode().unwrap());
        let other = generate_synthetic(&SynthSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn heads_are_decorrelated() {
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_ne!(b.head(0, 0).prompt_keys, b.head(0, 1).prompt_keys);
        assert_ne!(b.head(0, 0).prompt_keys, b.head(1, 0).prompt_keys);
    }

    #[test]
    fn rejects_invalid_specs() {
        for bad in [
            SynthSpec {
                n_centers: 0,
                ..small_spec()
            },
            SynthSpec {
                prompt_len: 0,
                ..small_spec()
            },
            SynthSpec {
                head_dim: 0,
                ..small_spec()
            },
            SynthSpec {
                intra_spread: -1.0,
                ..small_spec()
            },
            SynthSpec {
                outlier_channels: 8,
                ..small_spec()
            },
        ] {
            assert!(generate_synthetic(&bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn keys_are_finite_and_nonzero() {
        let b = generate_synthetic(&small_spec()).unwrap();
        for tr in &b.traces {
            let keys = tr.all_keys();
            for r in keys.view().iter_rows() {
                assert!(r.iter().all(|x| x.is_finite()));
                assert!(crate::tensor::norm(r) > 1e-6);
            }
        }
    }

    #[test]
    fn queries_ignore_outlier_channels() {
        let spec = small_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(head_seed(spec.seed, 0, 0));
        let g = HeadGenerator::new(&spec, &mut rng);
        let q = g.queries(&mut rng);
        for r in q.view().iter_rows() {
            for &ch in &g.outliers {
                assert_eq!(r[ch], 0.0);
            }
        }
    }

    #[test]
    fn round_trips_through_bytes() {
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(TraceBundle::decode(&b.encode().unwrap()).unwrap(), b);
    }

    #[test]
    fn bad_magic_is_reported() {
        let mut bytes = generate_synthetic(&small_spec()).unwrap().encode().unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            TraceBundle::decode(&bytes),
            Err(crate::Error::Format(FormatError::BadMagic(_)))
        ));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut bytes = generate_synthetic(&small_spec()).unwrap().encode().unwrap();
        bytes[4] = 2;
        assert!(matches!(
            TraceBundle::decode(&bytes),
            Err(crate::Error::Format(FormatError::VersionMismatch { found: 2, .. }))
        ));
    }

    #[test]
    fn truncation_mid_matrix_is_reported() {
        let bytes = generate_synthetic(&small_spec()).unwrap().encode().unwrap();
        let cut = &bytes[..28 + 4 * 37];
        assert!(matches!(
            TraceBundle::decode(cut),
            Err(crate::Error::Format(FormatError::Truncated {
                context: "matrix payload",
                ..
            }))
        ));
    }

    #[test]
    fn overflowing_dimensions_are_reported() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        for v in [VERSION, u32::MAX, u32::MAX, u32::MAX, u32::MAX, u32::MAX] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(
            TraceBundle::decode(&bytes),
            Err(crate::Error::Format(FormatError::DimensionOverflow(_)))
        ));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = generate_synthetic(&small_spec()).unwrap().encode().unwrap();
        bytes.push(0);
        assert!(matches!(
            TraceBundle::decode(&bytes),
            Err(crate::Error::Format(FormatError::TrailingBytes(1)))
        ));
    }

    #[test]
    fn spec_json_fills_defaults() {
        let spec: SynthSpec = serde_json::from_str(r#"{"n_centers": 3, "seed": 11}"#).unwrap();
        assert_eq!(spec.n_centers, 3);
        assert_eq!(spec.prompt_len, SynthSpec::default().prompt_len);
        assert!(serde_json::from_str::<SynthSpec>(r#"{"bogus": 1}"#).is_err());
    }
}
