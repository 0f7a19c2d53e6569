use mdcn::data::{resize_image, Image, SrPair};
use mdcn::metrics::MetricReport;
use mdcn::model::{super_resolve, Model};
use mdcn::{Error, Result};

pub const EVAL_HEADER: &str = "name\tfactor\tpsnr\tssim\trmse\tbicubic_psnr\tbicubic_ssim\tbicubic_rmse";

/// Metrics of one reconstruction next to the bicubic upscale of the same input.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub factor: u32,
    pub model: MetricReport,
    pub bicubic: MetricReport,
}

/// Column means over a set of rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMeans {
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub bicubic_psnr: f64,
    pub bicubic_ssim: f64,
    pub bicubic_rmse: f64,
}

pub fn bicubic_upscale(lr: &Image, width: usize, height: usize) -> Result<Image> {
    resize_image(lr, width, height, true)
}

/// Scores `reconstruct` on every pair with a border shave of `factor` pixels.
pub fn evaluate(
    pairs: &[SrPair],
    factor: u32,
    mut reconstruct: impl FnMut(&SrPair) -> Result<Image>,
) -> Result<Vec<EvalRow>> {
    let shave = factor as usize;
    pairs
        .iter()
        .map(|pair| {
            let sr = reconstruct(pair)?;
            let bicubic = bicubic_upscale(&pair.lr, pair.hr.width(), pair.hr.height())?;
            Ok(EvalRow {
                name: pair.name.clone(),
                factor,
                model: MetricReport::compute(&sr, &pair.hr, shave)?,
                bicubic: MetricReport::compute(&bicubic, &pair.hr, shave)?,
            })
        })
        .collect()
}

pub fn evaluate_model(model: &Model<f32>, pairs: &[SrPair], factor: u32, ensemble: bool) -> Result<Vec<EvalRow>> {
    evaluate(pairs, factor, |pair| super_resolve(model, &pair.lr, factor, ensemble))
}

pub fn means(rows: &[EvalRow]) -> Result<EvalMeans> {
    if rows.is_empty() {
        return Err(Error::Data("no images to evaluate".into()));
    }
    let mean = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    Ok(EvalMeans {
        psnr: mean(&|r| r.model.psnr_db),
        ssim: mean(&|r| r.model.ssim),
        rmse: mean(&|r| r.model.rmse),
        bicubic_psnr: mean(&|r| r.bicubic.psnr_db),
        bicubic_ssim: mean(&|r| r.bicubic.ssim),
        bicubic_rmse: mean(&|r| r.bicubic.rmse),
    })
}

/// Header, one row per image, then a `mean` row. Values are printed at full
/// precision; identical images show `inf` PSNR.
pub fn eval_table(rows: &[EvalRow]) -> Result<String> {
    let m = means(rows)?;
    let mut out = format!("{EVAL_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.name,
            r.factor,
            r.model.psnr_db,
            r.model.ssim,
            r.model.rmse,
            r.bicubic.psnr_db,
            r.bicubic.ssim,
            r.bicubic.rmse
        ));
    }
    out.push_str(&format!(
        "mean\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        rows[0].factor, m.psnr, m.ssim, m.rmse, m.bicubic_psnr, m.bicubic_ssim, m.bicubic_rmse
    ));
    Ok(out)
}
