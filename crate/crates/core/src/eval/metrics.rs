use crate::tensor::Tensor;
use crate::{Error, Result};

fn check_pair(pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Invalid(format!(
            "prediction has {} values, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Invalid("metrics of empty vectors".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    let sq: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    let abs: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum();
    Ok(abs / pred.len() as f64)
}

/// Pearson correlation over the flattened vectors.
pub fn pcc(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mg = gt.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vg) = (0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        let (a, b) = (p - mp, g - mg);
        cov += a * b;
        vp += a * a;
        vg += b * b;
    }
    if vp == 0.0 || vg == 0.0 {
        return Err(Error::Invalid("correlation of a zero-variance vector".into()));
    }
    Ok((cov / (vp.sqrt() * vg.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    let dot: f64 = pred.iter().zip(gt).map(|(p, g)| p * g).sum();
    let np = pred.iter().map(|p| p * p).sum::<f64>().sqrt();
    let ng = gt.iter().map(|g| g * g).sum::<f64>().sqrt();
    if np == 0.0 || ng == 0.0 {
        return Err(Error::Invalid("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (np * ng)).clamp(-1.0, 1.0))
}

/// The four pose metrics of one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub pcc: f64,
    pub cosine: f64,
}

pub fn pose_metrics(pred: &Tensor, gt: &Tensor) -> Result<PoseMetrics> {
    if pred.shape() != gt.shape() {
        return Err(Error::Invalid(format!(
            "prediction shape {:?} differs from ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let (p, g) = (pred.data(), gt.data());
    Ok(PoseMetrics {
        rmse: rmse(p, g)?,
        mae: mae(p, g)?,
        pcc: pcc(p, g)?,
        cosine: cosine_similarity(p, g)?,
    })
}
