//! Single-head scaled dot-product cross-attention.
//!
//! All matrices here are token-major: `q` is `(tokens_q, d)`, keys are
//! `(tokens, d)` and values `(tokens, d_v)`. Style embeddings stored
//! feature-major must be transposed before use.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Row-wise softmax of `q kᵀ / sqrt(d)`.
pub fn attention_weights(q: &Matrix, k: &Matrix) -> Result<Matrix> {
    if q.cols() != k.cols() {
        return Err(Error::Shape {
            op: "attention q·kᵀ",
            lhs: q.shape(),
            rhs: k.shape(),
        });
    }
    if k.rows() == 0 {
        return Err(Error::Dimensions("attention needs at least one key".into()));
    }
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let logits = q.matmul(&k.transpose())?.scale(scale)?;
    Ok(softmax_rows(&logits))
}

/// Numerically stable softmax over each row.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let cols = logits.cols();
    let mut data = Vec::with_capacity(logits.data().len());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        data.extend(exps.into_iter().map(|e| e / total));
    }
    Matrix::new(logits.rows(), cols, data).expect("softmax of finite logits is finite")
}

/// `softmax(q kᵀ / sqrt(d)) v`.
pub fn cross_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    if k.rows() != v.rows() {
        return Err(Error::Shape {
            op: "attention k/v tokens",
            lhs: k.shape(),
            rhs: v.shape(),
        });
    }
    attention_weights(q, k)?.matmul(v)
}

/// Queries plus text and optional style Key/Value pairs.
#[derive(Debug, Clone)]
pub struct AttentionInputs {
    pub q: Matrix,
    pub k_text: Matrix,
    pub v_text: Matrix,
    pub style: Option<(Matrix, Matrix)>,
}

impl AttentionInputs {
    pub fn new(q: Matrix, k_text: Matrix, v_text: Matrix, style: Option<(Matrix, Matrix)>) -> Result<Self> {
        let inputs = AttentionInputs {
            q,
            k_text,
            v_text,
            style,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn text_only(q: Matrix, k_text: Matrix, v_text: Matrix) -> Result<Self> {
        Self::new(q, k_text, v_text, None)
    }

    fn validate(&self) -> Result<()> {
        let pairs = std::iter::once((&self.k_text, &self.v_text))
            .chain(self.style.as_ref().map(|(k, v)| (k, v)));
        for (k, v) in pairs {
            if k.cols() != self.q.cols() {
                return Err(Error::Shape {
                    op: "attention inputs q/k",
                    lhs: self.q.shape(),
                    rhs: k.shape(),
                });
            }
            if k.rows() != v.rows() || v.cols() != self.v_text.cols() {
                return Err(Error::Shape {
                    op: "attention inputs k/v",
                    lhs: k.shape(),
                    rhs: v.shape(),
                });
            }
        }
        Ok(())
    }
}

/// Joint text–style attention: keys and values concatenated along tokens,
/// `softmax(q [K_t; K_s]ᵀ / sqrt(d)) [V_t; V_s]`.
pub fn joint_attention(inputs: &AttentionInputs) -> Result<Matrix> {
    inputs.validate()?;
    match &inputs.style {
        None => cross_attention(&inputs.q, &inputs.k_text, &inputs.v_text),
        Some((ks, vs)) => {
            let k = inputs.k_text.vstack(ks)?;
            let v = inputs.v_text.vstack(vs)?;
            cross_attention(&inputs.q, &k, &v)
        }
    }
}

/// Decoupled adapter injection: separate text and style attentions summed,
/// `text_out_weight · attn(q, K_t, V_t) + style_out_weight · attn(q, K_s, V_s)`.
///
/// A zero `style_out_weight` skips the style attention entirely.
pub fn adapter_attention(
    q: &Matrix,
    k_text: &Matrix,
    v_text: &Matrix,
    k_style: &Matrix,
    v_style: &Matrix,
    text_out_weight: f64,
    style_out_weight: f64,
) -> Result<Matrix> {
    let text = cross_attention(q, k_text, v_text)?;
    let style = cross_attention(q, k_style, v_style)?;
    if style.cols() != text.cols() {
        return Err(Error::Shape {
            op: "adapter outputs",
            lhs: text.shape(),
            rhs: style.shape(),
        });
    }
    let text = if text_out_weight == 1.0 { text } else { text.scale(text_out_weight)? };
    if style_out_weight == 0.0 {
        return Ok(text);
    }
    text.add(&style.scale(style_out_weight)?)
}
