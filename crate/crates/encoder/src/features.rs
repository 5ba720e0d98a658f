//! Per-user encoder inputs and the embedding front end used by the controllers.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::model::{cls_rows, forward, EncoderConfig, EncoderParams};
use crate::patch::{patchify, PatchSequence};
use crate::EncoderError;
use ris_core::par::{self, Exec};
use ris_core::{ChannelRealization, C64};
use ris_learn::{Checkpoint, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub e: Vec<f64>,
}

impl Embedding {
    pub fn is_finite(&self) -> bool {
        self.e.iter().all(|x| x.is_finite())
    }
}

/// (M+1)×N matrix for user k: row 0 is h_d,kᴴ, row m is the cascaded
/// row h_r,k[m]* · G[m, :]. With b_k = 1 and Θ = I the effective channel
/// is the column sum of this matrix.
pub fn user_channel_matrix(r: &ChannelRealization, k: usize) -> Result<Array2<C64>, EncoderError> {
    if k >= r.n_users() {
        return Err(EncoderError::Dimension { what: "user index", expected: r.n_users(), got: k });
    }
    let (m, n) = r.g.dim();
    let mut h = Array2::zeros((m + 1, n));
    h.row_mut(0).assign(&r.h_d.row(k).mapv(|z| z.conj()));
    for i in 0..m {
        let coeff = r.h_r[[k, i]].conj();
        h.row_mut(i + 1).assign(&r.g.row(i).mapv(|z| z * coeff));
    }
    Ok(h)
}

/// Dataset-level RMS of the direct and cascaded rows; inputs are divided by these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub direct: f64,
    pub cascaded: f64,
}

impl Default for InputScaling {
    fn default() -> Self {
        Self { direct: 1.0, cascaded: 1.0 }
    }
}

impl InputScaling {
    pub fn fit(records: &[ChannelRealization]) -> Self {
        let (mut sd, mut nd, mut sc, mut nc) = (0.0, 0usize, 0.0, 0usize);
        for r in records {
            for k in 0..r.n_users() {
                let h = user_channel_matrix(r, k).expect("k in range");
                sd += h.row(0).iter().map(|z| z.norm_sqr()).sum::<f64>();
                nd += h.ncols();
                sc += h.rows().into_iter().skip(1).flatten().map(|z| z.norm_sqr()).sum::<f64>();
                nc += h.ncols() * (h.nrows() - 1);
            }
        }
        let rms = |s: f64, n: usize| if n == 0 || s <= 0.0 { 1.0 } else { (s / n as f64).sqrt() };
        Self { direct: rms(sd, nd), cascaded: rms(sc, nc) }
    }

    pub fn apply(&self, h: &mut Array2<C64>) {
        let (d, c) = (1.0 / self.direct, 1.0 / self.cascaded);
        for (i, mut row) in h.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|z| z * if i == 0 { d } else { c });
        }
    }
}

/// e = CLS(patchify(H_k)) · output_projection.
pub fn embed_channel(h_k: &Array2<C64>, params: &EncoderParams) -> Result<Embedding, EncoderError> {
    let seq = patchify(h_k, params.config.n_patches)?;
    let (z, _) = forward(params, std::slice::from_ref(&seq))?;
    let e = cls_rows(&z, &params.config).dot(&params.output_projection);
    Ok(Embedding { e: e.row(0).to_vec() })
}

/// Frozen encoder plus its input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEncoder {
    pub params: EncoderParams,
    pub scaling: InputScaling,
}

pub const ENCODER_KIND: &str = "channel-encoder";

impl ChannelEncoder {
    pub fn new(params: EncoderParams, scaling: InputScaling) -> Self {
        Self { params, scaling }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.params.config
    }

    pub fn d_e(&self) -> usize {
        self.params.config.d_e
    }

    /// Normalized per-user matrices, patchified.
    pub fn sequences(&self, r: &ChannelRealization) -> Result<Vec<PatchSequence>, EncoderError> {
        (0..r.n_users())
            .map(|k| {
                let mut h = user_channel_matrix(r, k)?;
                self.scaling.apply(&mut h);
                patchify(&h, self.params.config.n_patches)
            })
            .collect()
    }

    pub fn embed_users(&self, r: &ChannelRealization) -> Result<Vec<Embedding>, EncoderError> {
        let seqs = self.sequences(r)?;
        let (z, _) = forward(&self.params, &seqs)?;
        let e = cls_rows(&z, &self.params.config).dot(&self.params.output_projection);
        Ok(e.rows().into_iter().map(|row| Embedding { e: row.to_vec() }).collect())
    }

    /// Concatenated K·d_e embedding vector.
    pub fn embed_flat(&self, r: &ChannelRealization) -> Result<Vec<f64>, EncoderError> {
        Ok(self.embed_users(r)?.into_iter().flat_map(|e| e.e).collect())
    }

    /// Embeds many realizations, optionally in parallel; output order follows input.
    pub fn embed_many(&self, exec: Exec, rs: &[ChannelRealization]) -> Result<Vec<Vec<f64>>, EncoderError> {
        par::try_map_indexed(exec, rs.len(), |i| self.embed_flat(&rs[i]))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({ "config": self.params.config, "scaling": self.scaling });
        let tensors = self
            .params
            .tensors()
            .into_iter()
            .map(|t| Tensor { name: t.name, shape: t.shape, data: t.data.iter().map(|&x| x as f32).collect() })
            .collect();
        Checkpoint::new(ENCODER_KIND, meta, tensors)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, EncoderError> {
        ck.expect_kind(ENCODER_KIND)?;
        let config: EncoderConfig = serde_json::from_value(ck.meta["config"].clone())
            .map_err(|e| EncoderError::Config(format!("checkpoint config: {e}")))?;
        let scaling: InputScaling = serde_json::from_value(ck.meta["scaling"].clone())
            .map_err(|e| EncoderError::Config(format!("checkpoint scaling: {e}")))?;
        config.validate()?;
        let mut params = EncoderParams::zeros(config);
        let names: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        for ((name, shape), dst) in names.iter().zip(params.tensors_mut()) {
            let t = ck.get(name)?;
            if &t.shape != shape {
                return Err(EncoderError::Dimension { what: "checkpoint tensor", expected: shape.iter().product(), got: t.data.len() });
            }
            for (d, &s) in dst.iter_mut().zip(&t.data) {
                *d = s as f64;
            }
        }
        Ok(Self { params, scaling })
    }
}
