use crate::error::{Error, Result};
use crate::tensor::{BackwardCtx, Tensor, Var};

/// Row-wise softmax of a (b, k) matrix, computed with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Vec<f64> {
    let k = logits.dims()[1];
    let mut out = Vec::with_capacity(logits.numel());
    for row in logits.data().chunks(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / total));
    }
    out
}

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn softmax_cross_entropy<'t>(logits: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let lv = logits.value();
    let dims = lv.dims();
    if dims.len() != 2 || dims[0] != labels.len() {
        return Err(Error::shape(format!("cross entropy: logits {} vs {} labels", lv.shape(), labels.len())));
    }
    let (b, k) = (dims[0], dims[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::usage(format!("label {bad} out of range for {k} classes")));
    }
    let mut loss = 0.0;
    for (row, &label) in lv.data().chunks(k).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
    }
    let probs = softmax_rows(&lv);
    let labels = labels.to_vec();
    let out = Tensor::scalar(loss / b as f64);
    Ok(logits.tape().record(&[logits], out, move |ctx: &BackwardCtx<'_>| {
        let scale = ctx.grad.item() / b as f64;
        let mut g = probs.clone();
        for (row, &label) in g.chunks_mut(k).zip(&labels) {
            row[label] -= 1.0;
        }
        g.iter_mut().for_each(|v| *v *= scale);
        vec![Some(Tensor::from_vec(vec![b, k], g).expect("logit shape"))]
    }))
}
