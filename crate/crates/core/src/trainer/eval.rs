use crate::corpus::SegmentPair;
use crate::error::{Error, Result};
use crate::metrics::{chrf_pp, ChrfConfig};
use crate::model::{translate_all, DecodeConfig, ModelTranslator, PromptEncoder, TransformerModel};
use crate::scalar::Scalar;

/// A dev metric over a model; higher is better.
pub trait Evaluate<T: Scalar>: Sync {
    fn evaluate(&self, model: &TransformerModel<T>) -> Result<f64>;
}

impl<T: Scalar, F> Evaluate<T> for F
where
    F: Fn(&TransformerModel<T>) -> Result<f64> + Sync,
{
    fn evaluate(&self, model: &TransformerModel<T>) -> Result<f64> {
        self(model)
    }
}

/// Corpus chrF++ of greedy translations against references.
#[derive(Debug, Clone)]
pub struct DevSet {
    pub sources: Vec<String>,
    pub references: Vec<String>,
    pub encoder: PromptEncoder,
    pub decode: DecodeConfig,
    pub chrf: ChrfConfig,
}

impl DevSet {
    pub fn new(pairs: &[SegmentPair], encoder: PromptEncoder, decode: DecodeConfig) -> Self {
        Self {
            sources: pairs.iter().map(|p| p.source.clone()).collect(),
            references: pairs.iter().map(|p| p.target.clone()).collect(),
            encoder,
            decode,
            chrf: ChrfConfig::default(),
        }
    }

    pub fn translations<T: Scalar>(&self, model: &TransformerModel<T>) -> Result<Vec<String>> {
        translate_all(&ModelTranslator::new(model, &self.encoder, self.decode), &self.sources)
    }
}

impl<T: Scalar> Evaluate<T> for DevSet {
    fn evaluate(&self, model: &TransformerModel<T>) -> Result<f64> {
        if self.sources.is_empty() {
            return Err(Error::Input("empty dev set".into()));
        }
        chrf_pp(&self.translations(model)?, &self.references, &self.chrf)
    }
}
