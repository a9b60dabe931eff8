//! A reusable symbolic model: tensors plus the metadata needed to
//! instantiate predictors, with a checksummed binary file format.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::tensors::{
    build_linear_tensor, build_quadratic_tensor, instantiate_linear, instantiate_quadratic,
    pair_index, pair_index_decode, LinearEntry, LinearTensor, QuadraticEntry, QuadraticTensor,
};
use super::{build_coefficient_tensor, compute_bbox, identity_indices, BoundingBox};
use crate::error::{Error, Result};
use crate::imaging::{PatchSpec, SamplePattern};
use crate::lp::{
    build_dct_mapping, solve_predictor, template_from_bbox, DctMapping, LearnerTag,
    LinearPredictor, Ridge,
};
use crate::warp::{sample_warps, WarpRanges};

const MAGIC: &[u8; 4] = b"SYLP";
const VERSION: u32 = 1;

/// Symbolic tensors for one (patch geometry, warp ranges, warp set), reusable
/// across patches. The warp set itself is not stored; it is reproducible
/// from `(ranges, num_warps, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicModel {
    pub linear: LinearTensor,
    pub quadratic: QuadraticTensor,
    pub bbox: BoundingBox,
    pub side: u32,
    pub pattern: SamplePattern,
    pub ranges: WarpRanges,
    pub num_warps: u32,
    pub seed: u64,
    /// `tr(P P^T)` of the warp matrix used to build the tensors.
    pub trace_ppt: f64,
    pub dct: Option<DctMapping>,
    /// Box indices of the patch pixels, for slicing templates out of `u`.
    identity_idx: Vec<usize>,
}

impl SymbolicModel {
    /// Builds the tensors for a patch geometry. `retained` enables the DCT
    /// path with that many coefficients.
    pub fn build(
        side: u32,
        pattern: SamplePattern,
        ranges: &WarpRanges,
        num_warps: u32,
        seed: u64,
        retained: Option<u32>,
    ) -> Result<Self> {
        let spec = PatchSpec::new((0, 0), side, pattern)?;
        let bbox = compute_bbox(&spec, ranges);
        let warps = sample_warps(ranges, num_warps as usize, seed);
        let y = build_coefficient_tensor(&spec, &warps, &bbox)?;
        let linear = build_linear_tensor(&warps, &y);
        let quadratic = build_quadratic_tensor(&y);
        let dct = match retained {
            Some(r) => Some(build_dct_mapping(side, r)?),
            None => None,
        };
        Ok(SymbolicModel {
            linear,
            quadratic,
            bbox,
            side,
            pattern,
            ranges: *ranges,
            num_warps,
            seed,
            trace_ppt: warps.iter().map(|v| v * v).sum(),
            dct,
            identity_idx: identity_indices(&spec, &bbox),
        })
    }

    pub fn patch_pixel_count(&self) -> usize {
        self.linear.num_patch_pixels
    }

    pub fn box_pixel_count(&self) -> usize {
        self.bbox.len()
    }

    fn check_u(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.box_pixel_count() {
            return Err(Error::DimensionMismatch {
                expected: self.box_pixel_count(),
                got: u.len(),
            });
        }
        Ok(())
    }

    fn predictor_from_matrix(&self, a: DMatrix<f64>, u: &DVector<f64>, tag: LearnerTag) -> LinearPredictor {
        let spec = PatchSpec::new((0, 0), self.side, self.pattern).expect("validated at build");
        LinearPredictor {
            matrix: a,
            patch: crate::imaging::TemplatePatch {
                values: template_from_bbox(u, &self.identity_idx),
                offsets: spec.offsets(),
            },
            side: self.side,
            pattern: self.pattern,
            ranges: self.ranges,
            num_warps: self.num_warps,
            learner: tag,
        }
    }
}

/// Learns the predictor for one patch from its bounding-box intensities:
/// `A = (P E^T)(E E^T + ridge I)^-1` with both terms instantiated from the
/// tensors. Identical (within accumulation error) to `learn_jd` on the
/// dense error matrix of the same warp set.
pub fn learn_symbolic(
    model: &SymbolicModel,
    u: &DVector<f64>,
    ridge: Ridge,
) -> Result<LinearPredictor> {
    model.check_u(u)?;
    let lin = instantiate_linear(&model.linear, u)?;
    let quad = instantiate_quadratic(&model.quadratic, u)?;
    let a = solve_predictor(&lin, &quad, ridge)?;
    Ok(model.predictor_from_matrix(a, u, LearnerTag::Sym))
}

/// DCT-reduced symbolic learner: projects the instantiated terms with the
/// model's mapping, `A = (P E^T W_r^T)(W_r E E^T W_r^T + ridge I)^-1 W_r`.
/// Identical (within accumulation error) to `learn_dct` on the same inputs.
pub fn learn_symbolic_dct(
    model: &SymbolicModel,
    u: &DVector<f64>,
    ridge: Ridge,
) -> Result<LinearPredictor> {
    let map = model
        .dct
        .as_ref()
        .ok_or_else(|| Error::Config("model was built without a DCT mapping".into()))?;
    learn_symbolic_dct_with(model, map, u, ridge)
}

/// Same as [`learn_symbolic_dct`] with an externally supplied mapping; the
/// tensors themselves do not depend on the retained coefficient count, so
/// one model can serve several reductions.
pub fn learn_symbolic_dct_with(
    model: &SymbolicModel,
    map: &DctMapping,
    u: &DVector<f64>,
    ridge: Ridge,
) -> Result<LinearPredictor> {
    model.check_u(u)?;
    if map.side != model.side {
        return Err(Error::Config(format!(
            "mapping side {} does not match model side {}",
            map.side, model.side
        )));
    }
    let lin = instantiate_linear(&model.linear, u)?;
    let quad = instantiate_quadratic(&model.quadratic, u)?;
    let lin_r = lin * map.reduced.transpose();
    let quad_r = &map.reduced * quad * map.reduced.transpose();
    let a_hat = solve_predictor(&lin_r, &quad_r, ridge)?;
    let a = a_hat * &map.reduced;
    Ok(model.predictor_from_matrix(a, u, LearnerTag::SymDct(map.retained)))
}

// --- file format -----------------------------------------------------------
//
// Little-endian throughout:
//   magic "SYLP", version u32,
//   n u32, m u32, l u32, q u64, r u32 (0 = no DCT), side u32, pattern u32,
//   12 range scalars f64 (lo_i, hi_i per parameter),
//   seed u64, tr(P P^T) f64,
//   bbox left/right/top/bottom i32,
//   linear count u64, entries (a u8, b u16, d u32, value f64),
//   quadratic count u64, entries (b1 u16, b2 u16, e u64, value f64),
//   crc32 u32 of all preceding bytes.

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub(crate) fn encode_model(model: &SymbolicModel) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(model.patch_pixel_count() as u32);
    w.u32(model.num_warps);
    let l = model.box_pixel_count() as u64;
    w.u32(l as u32);
    w.u64(l * (l + 1) / 2);
    w.u32(model.dct.as_ref().map_or(0, |m| m.retained));
    w.u32(model.side);
    w.u32(model.pattern.id());
    for i in 0..6 {
        w.f64(model.ranges.lo[i]);
        w.f64(model.ranges.hi[i]);
    }
    w.u64(model.seed);
    w.f64(model.trace_ppt);
    w.i32(model.bbox.left);
    w.i32(model.bbox.right);
    w.i32(model.bbox.top);
    w.i32(model.bbox.bottom);

    w.u64(model.linear.entries.len() as u64);
    for e in &model.linear.entries {
        w.u8(e.a);
        w.u16(e.b);
        w.u32(e.d);
        w.f64(e.value);
    }
    w.u64(model.quadratic.entries.len() as u64);
    for e in &model.quadratic.entries {
        w.u16(e.b1);
        w.u16(e.b2);
        w.u64(pair_index(e.d1 as u64, e.d2 as u64, l));
        w.f64(e.value);
    }

    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

pub(crate) fn decode_model(bytes: &[u8]) -> Result<SymbolicModel> {
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Format("file too short".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(Error::Format("checksum mismatch".into()));
    }

    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let m = r.u32()?;
    let l = r.u32()? as u64;
    let q = r.u64()?;
    if q != l * (l + 1) / 2 {
        return Err(Error::Format("pair count disagrees with box size".into()));
    }
    let retained = r.u32()?;
    let side = r.u32()?;
    let pattern = SamplePattern::from_id(r.u32()?)?;
    let mut lo = [0.0; 6];
    let mut hi = [0.0; 6];
    for i in 0..6 {
        lo[i] = r.f64()?;
        hi[i] = r.f64()?;
    }
    let ranges = WarpRanges::new(lo, hi).map_err(|e| Error::Format(e.to_string()))?;
    let seed = r.u64()?;
    let trace_ppt = r.f64()?;
    let bbox = BoundingBox {
        left: r.i32()?,
        right: r.i32()?,
        top: r.i32()?,
        bottom: r.i32()?,
    };
    if bbox.left < 0 || bbox.right < 0 || bbox.top < 0 || bbox.bottom < 0 || bbox.len() as u64 != l
    {
        return Err(Error::Format("inconsistent bounding box".into()));
    }

    let lin_count = r.u64()? as usize;
    let mut linear_entries = Vec::with_capacity(lin_count);
    for _ in 0..lin_count {
        let a = r.u8()?;
        let b = r.u16()?;
        let d = r.u32()?;
        let value = r.f64()?;
        if a >= 6 || b as usize >= n || d as u64 >= l {
            return Err(Error::Format("linear entry out of range".into()));
        }
        linear_entries.push(LinearEntry { a, b, d, value });
    }
    let quad_count = r.u64()? as usize;
    let mut quadratic_entries = Vec::with_capacity(quad_count);
    for _ in 0..quad_count {
        let b1 = r.u16()?;
        let b2 = r.u16()?;
        let e = r.u64()?;
        let value = r.f64()?;
        if b1 > b2 || b2 as usize >= n || e >= q {
            return Err(Error::Format("quadratic entry out of range".into()));
        }
        let (d1, d2) = pair_index_decode(e, l);
        quadratic_entries.push(QuadraticEntry {
            b1,
            b2,
            d1: d1 as u32,
            d2: d2 as u32,
            value,
        });
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after tensors".into()));
    }

    let spec =
        PatchSpec::new((0, 0), side, pattern).map_err(|e| Error::Format(e.to_string()))?;
    if spec.len() != n {
        return Err(Error::Format("pixel count disagrees with geometry".into()));
    }
    let dct = if retained > 0 {
        Some(build_dct_mapping(side, retained).map_err(|e| Error::Format(e.to_string()))?)
    } else {
        None
    };

    Ok(SymbolicModel {
        linear: LinearTensor {
            num_patch_pixels: n,
            num_box_pixels: l as usize,
            entries: linear_entries,
        },
        quadratic: QuadraticTensor {
            num_patch_pixels: n,
            num_box_pixels: l as usize,
            entries: quadratic_entries,
        },
        bbox,
        side,
        pattern,
        ranges,
        num_warps: m,
        seed,
        trace_ppt,
        dct,
        identity_idx: identity_indices(&spec, &bbox),
    })
}

/// Writes a model to disk in the checksummed binary format.
pub fn save_model(model: &SymbolicModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

/// Reads a model back; fails on bad magic, version, layout, or checksum.
pub fn load_model(path: impl AsRef<Path>) -> Result<SymbolicModel> {
    decode_model(&fs::read(path)?)
}
