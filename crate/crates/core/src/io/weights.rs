//! MLPW / MOEW parameter files and DICT dictionary files.
//!
//! MLPW: magic `MLPW`, u32 version = 1, u32 activation id (+ u32 p for the
//! power activation), u32 d_in, u32 d_hidden, u32 d_out, u32 flags
//! (bit 0 input bias, bit 1 output bias, bit 2 gated, bit 3 gate bias), then
//! f64 payloads in the order `w_in`, [input bias], [gate], [gate bias],
//! `w_out`, [output bias]. A gated layer computes
//! `w_out (σ(gate x + gate_bias) ⊙ (w_in x + bias_in)) + bias_out`.
//!
//! MOEW: magic `MOEW`, u32 version = 1, u32 activation id (+ u32 p), u32 m,
//! u32 d_in, u32 d_exp, u32 d_out, u32 k, f64 beta, u32 router form
//! (0 full, 1 low-rank, 2 oracle), u32 d_proj (0 unless low-rank), u32 flags
//! (bit 0 expert input bias, bit 1 expert output bias, bit 2 shared expert,
//! bit 3 trainable beta); then the router matrices (`R`, or `R1` then `R2`),
//! each expert's `w_in`, [input bias], `w_out`, [output bias], and finally
//! the shared expert as a complete embedded MLPW record.
//!
//! DICT: magic `DICT`, u32 version = 1, u32 m, u32 d, then the m*d f64 atoms.

use std::path::Path;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::io::binary::{write_bytes_atomic, ByteReader, ByteWriter};
use crate::layers::{Activation, GatedMlp, MlpParams, Model, MoeParams, Router, RouterForm};
use crate::linalg::DenseMatrix;

const VERSION: u32 = 1;

const MLP_BIAS_IN: u32 = 1;
const MLP_BIAS_OUT: u32 = 1 << 1;
const MLP_GATED: u32 = 1 << 2;
const MLP_GATE_BIAS: u32 = 1 << 3;

const MOE_BIAS_IN: u32 = 1;
const MOE_BIAS_OUT: u32 = 1 << 1;
const MOE_SHARED: u32 = 1 << 2;
const MOE_TRAIN_BETA: u32 = 1 << 3;

/// A teacher layer as stored in an MLPW file.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherWeights {
    Mlp(MlpParams),
    Gated(GatedMlp),
}

impl TeacherWeights {
    pub fn d_in(&self) -> usize {
        match self {
            TeacherWeights::Mlp(p) => p.d_in(),
            TeacherWeights::Gated(g) => g.d_in(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            TeacherWeights::Mlp(p) => p.d_out(),
            TeacherWeights::Gated(g) => g.d_out(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            TeacherWeights::Mlp(p) => p.forward(x),
            TeacherWeights::Gated(g) => g.forward(x),
        }
    }
}

fn put_activation(w: &mut ByteWriter, a: Activation) {
    w.u32(a.id());
    if let Activation::Power(p) = a {
        w.u32(p);
    }
}

fn get_activation(r: &mut ByteReader<'_>) -> Result<Activation> {
    let at = r.offset();
    let id = r.u32("activation id")?;
    let power = if id == 3 { Some(r.u32("power")?) } else { None };
    Activation::from_id(id, power).map_err(|e| r.error_at(at, e.to_string()))
}

fn get_matrix(r: &mut ByteReader<'_>, rows: usize, cols: usize, what: &str) -> Result<DenseMatrix> {
    DenseMatrix::from_vec(rows, cols, r.f64s(rows * cols, what)?)
}

fn get_opt(
    r: &mut ByteReader<'_>,
    present: bool,
    len: usize,
    what: &str,
) -> Result<Option<Vec<f64>>> {
    present.then(|| r.f64s(len, what)).transpose()
}

fn put_mlp_record(w: &mut ByteWriter, t: &TeacherWeights) -> Result<()> {
    let (w_in, w_out, bias_in, bias_out, act, gate) = match t {
        TeacherWeights::Mlp(p) => (
            &p.w_in,
            &p.w_out,
            &p.bias_in,
            &p.bias_out,
            p.activation,
            None,
        ),
        TeacherWeights::Gated(g) => (
            &g.w_in,
            &g.w_out,
            &g.bias_in,
            &g.bias_out,
            g.activation,
            Some((&g.gate, &g.gate_bias)),
        ),
    };
    w.bytes(b"MLPW");
    w.u32(VERSION);
    put_activation(w, act);
    w.len_u32(w_in.cols(), "d_in")?;
    w.len_u32(w_in.rows(), "d_hidden")?;
    w.len_u32(w_out.rows(), "d_out")?;
    let mut flags = 0;
    if bias_in.is_some() {
        flags |= MLP_BIAS_IN;
    }
    if bias_out.is_some() {
        flags |= MLP_BIAS_OUT;
    }
    if let Some((_, gb)) = gate {
        flags |= MLP_GATED;
        if gb.is_some() {
            flags |= MLP_GATE_BIAS;
        }
    }
    w.u32(flags);
    w.f64s(w_in.data());
    if let Some(b) = bias_in {
        w.f64s(b);
    }
    if let Some((g, gb)) = gate {
        w.f64s(g.data());
        if let Some(b) = gb {
            w.f64s(b);
        }
    }
    w.f64s(w_out.data());
    if let Some(b) = bias_out {
        w.f64s(b);
    }
    Ok(())
}

fn get_mlp_record(r: &mut ByteReader<'_>) -> Result<TeacherWeights> {
    r.magic(b"MLPW")?;
    r.version(VERSION)?;
    let activation = get_activation(r)?;
    let d_in = r.dim("d_in")?;
    let h = r.dim("d_hidden")?;
    let d_out = r.dim("d_out")?;
    let flags_at = r.offset();
    let flags = r.u32("flags")?;
    if flags & !(MLP_BIAS_IN | MLP_BIAS_OUT | MLP_GATED | MLP_GATE_BIAS) != 0 {
        return Err(r.error_at(flags_at, format!("unknown flag bits {flags:#x}")));
    }
    let gated = flags & MLP_GATED != 0;
    if !gated && flags & MLP_GATE_BIAS != 0 {
        return Err(r.error_at(flags_at, "gate bias flag without gated flag"));
    }
    let w_in = get_matrix(r, h, d_in, "w_in")?;
    let bias_in = get_opt(r, flags & MLP_BIAS_IN != 0, h, "input bias")?;
    let gate = if gated {
        let g = get_matrix(r, h, d_in, "gate")?;
        let gb = get_opt(r, flags & MLP_GATE_BIAS != 0, h, "gate bias")?;
        Some((g, gb))
    } else {
        None
    };
    let w_out = get_matrix(r, d_out, h, "w_out")?;
    let bias_out = get_opt(r, flags & MLP_BIAS_OUT != 0, d_out, "output bias")?;
    Ok(match gate {
        None => TeacherWeights::Mlp(MlpParams::new(w_out, w_in, bias_in, bias_out, activation)?),
        Some((gate, gate_bias)) => {
            let g = GatedMlp {
                w_out,
                w_in,
                gate,
                bias_in,
                gate_bias,
                bias_out,
                activation,
            };
            g.validate()?;
            TeacherWeights::Gated(g)
        }
    })
}

pub fn write_mlpw(path: &Path, weights: &TeacherWeights) -> Result<()> {
    let mut w = ByteWriter::default();
    put_mlp_record(&mut w, weights)?;
    write_bytes_atomic(path, &w.buf)
}

pub fn read_mlpw(path: &Path) -> Result<TeacherWeights> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    let t = get_mlp_record(&mut r)?;
    r.finish()?;
    Ok(t)
}

fn put_moe_record(w: &mut ByteWriter, p: &MoeParams) -> Result<()> {
    p.validate()?;
    let first = &p.experts[0];
    w.bytes(b"MOEW");
    w.u32(VERSION);
    put_activation(w, first.activation);
    w.len_u32(p.m(), "m")?;
    w.len_u32(p.d_in(), "d_in")?;
    w.len_u32(p.d_expert(), "d_exp")?;
    w.len_u32(p.d_out(), "d_out")?;
    w.len_u32(p.router.k, "k")?;
    w.f64(p.router.beta);
    let (form, d_proj) = match &p.router.form {
        RouterForm::Full(_) => (0, 0),
        RouterForm::LowRank { r1, .. } => (1, r1.cols()),
        RouterForm::Oracle => (2, 0),
    };
    w.u32(form);
    w.len_u32(d_proj, "d_proj")?;
    let bias_in = first.bias_in.is_some();
    let bias_out = first.bias_out.is_some();
    if p.experts
        .iter()
        .any(|e| e.bias_in.is_some() != bias_in || e.bias_out.is_some() != bias_out)
    {
        return Err(Error::InvalidInput(
            "experts must agree on which biases they have".into(),
        ));
    }
    let mut flags = 0;
    if bias_in {
        flags |= MOE_BIAS_IN;
    }
    if bias_out {
        flags |= MOE_BIAS_OUT;
    }
    if p.shared.is_some() {
        flags |= MOE_SHARED;
    }
    if p.router.train_beta {
        flags |= MOE_TRAIN_BETA;
    }
    w.u32(flags);
    match &p.router.form {
        RouterForm::Full(r) => w.f64s(r.data()),
        RouterForm::LowRank { r1, r2 } => {
            w.f64s(r1.data());
            w.f64s(r2.data());
        }
        RouterForm::Oracle => {}
    }
    for e in &p.experts {
        w.f64s(e.w_in.data());
        if let Some(b) = &e.bias_in {
            w.f64s(b);
        }
        w.f64s(e.w_out.data());
        if let Some(b) = &e.bias_out {
            w.f64s(b);
        }
    }
    if let Some(s) = &p.shared {
        put_mlp_record(w, &TeacherWeights::Mlp(s.clone()))?;
    }
    Ok(())
}

fn get_moe_record(r: &mut ByteReader<'_>) -> Result<MoeParams> {
    r.magic(b"MOEW")?;
    r.version(VERSION)?;
    let activation = get_activation(r)?;
    let m = r.dim("m")?;
    let d_in = r.dim("d_in")?;
    let d_exp = r.dim("d_exp")?;
    let d_out = r.dim("d_out")?;
    let k = r.dim("k")?;
    let beta = r.f64("beta")?;
    let form_at = r.offset();
    let form = r.u32("router form")?;
    let d_proj = r.u32("d_proj")? as usize;
    let flags_at = r.offset();
    let flags = r.u32("flags")?;
    if flags & !(MOE_BIAS_IN | MOE_BIAS_OUT | MOE_SHARED | MOE_TRAIN_BETA) != 0 {
        return Err(r.error_at(flags_at, format!("unknown flag bits {flags:#x}")));
    }
    let form = match form {
        0 => RouterForm::Full(get_matrix(r, m, d_in, "router")?),
        1 => {
            if d_proj == 0 {
                return Err(r.error_at(form_at, "low-rank router needs d_proj >= 1"));
            }
            let r1 = get_matrix(r, m, d_proj, "router R1")?;
            let r2 = get_matrix(r, d_proj, d_in, "router R2")?;
            RouterForm::LowRank { r1, r2 }
        }
        2 => RouterForm::Oracle,
        other => return Err(r.error_at(form_at, format!("unknown router form {other}"))),
    };
    let mut experts = Vec::with_capacity(m);
    for _ in 0..m {
        let w_in = get_matrix(r, d_exp, d_in, "expert w_in")?;
        let b_in = get_opt(r, flags & MOE_BIAS_IN != 0, d_exp, "expert input bias")?;
        let w_out = get_matrix(r, d_out, d_exp, "expert w_out")?;
        let b_out = get_opt(r, flags & MOE_BIAS_OUT != 0, d_out, "expert output bias")?;
        experts.push(MlpParams::new(w_out, w_in, b_in, b_out, activation)?);
    }
    let shared = if flags & MOE_SHARED != 0 {
        let at = r.offset();
        match get_mlp_record(r)? {
            TeacherWeights::Mlp(s) => Some(s),
            TeacherWeights::Gated(_) => return Err(r.error_at(at, "shared expert cannot be gated")),
        }
    } else {
        None
    };
    let mut router = Router::new(form, m, k, beta)?;
    router.train_beta = flags & MOE_TRAIN_BETA != 0;
    MoeParams::new(experts, router, shared)
}

pub fn write_moew(path: &Path, params: &MoeParams) -> Result<()> {
    let mut w = ByteWriter::default();
    put_moe_record(&mut w, params)?;
    write_bytes_atomic(path, &w.buf)
}

pub fn read_moew(path: &Path) -> Result<MoeParams> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    let p = get_moe_record(&mut r)?;
    r.finish()?;
    Ok(p)
}

/// Writes a trained student as MLPW or MOEW according to its family.
pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    match model {
        Model::Mlp(p) => write_mlpw(path, &TeacherWeights::Mlp(p.clone())),
        Model::Moe(p) => write_moew(path, p),
    }
}

/// A teacher or student read from either weight format, chosen by magic.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Teacher(TeacherWeights),
    Moe(MoeParams),
}

impl StoredModel {
    pub fn d_in(&self) -> usize {
        match self {
            StoredModel::Teacher(t) => t.d_in(),
            StoredModel::Moe(p) => p.d_in(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            StoredModel::Teacher(t) => t.d_out(),
            StoredModel::Moe(p) => p.d_out(),
        }
    }

    pub fn forward(&self, x: &[f64], active: Option<&[usize]>) -> Result<Vec<f64>> {
        match self {
            StoredModel::Teacher(t) => t.forward(x),
            StoredModel::Moe(p) => p.forward(x, active),
        }
    }
}

pub fn read_model(path: &Path) -> Result<StoredModel> {
    let bytes = std::fs::read(path)?;
    match bytes.get(..4) {
        Some(b"MOEW") => read_moew(path).map(StoredModel::Moe),
        Some(b"MLPW") => read_mlpw(path).map(StoredModel::Teacher),
        _ => Err(ByteReader::new(&bytes, path).error_at(0, "expected MLPW or MOEW magic")),
    }
}

pub fn write_dict(path: &Path, dict: &Dictionary) -> Result<()> {
    let mut w = ByteWriter::default();
    w.bytes(b"DICT");
    w.u32(VERSION);
    w.len_u32(dict.m(), "m")?;
    w.len_u32(dict.d(), "d")?;
    w.f64s(dict.atoms().data());
    write_bytes_atomic(path, &w.buf)
}

pub fn read_dict(path: &Path) -> Result<Dictionary> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(b"DICT")?;
    r.version(VERSION)?;
    let m = r.dim("m")?;
    let d = r.dim("d")?;
    let at = r.offset();
    let atoms = get_matrix(&mut r, m, d, "atoms")?;
    r.finish()?;
    Dictionary::new(atoms).map_err(|e| r.error_at(at, e.to_string()))
}
