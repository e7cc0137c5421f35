use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text;
use crate::types::RCInstance;

use super::{ModelGateway, SpanScores};

const MATRIX_SCALE: f64 = 6.0;

/// Seeded bilinear reader with closed-form gradients.
///
/// Each word has a pseudo-random unit embedding derived from its lowercased
/// text. The start logit of context word `i` is `e_i · (M q)` where `q` is
/// the mean question embedding; end logits use a second matrix.
#[derive(Debug, Clone)]
pub struct ToyModel {
    id: String,
    seed: u64,
    start_matrix: Array2<f64>,
    end_matrix: Array2<f64>,
}

impl ToyModel {
    pub const DEFAULT_DIM: usize = 16;

    pub fn new(seed: u64) -> Self {
        Self::with_dim(seed, Self::DEFAULT_DIM)
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || Array2::from_shape_fn((dim, dim), |_| rng.random_range(-1.0..1.0) * MATRIX_SCALE);
        let start_matrix = draw();
        let end_matrix = draw();
        Self {
            id: format!("toy:{seed}"),
            seed,
            start_matrix,
            end_matrix,
        }
    }

    /// Both matrices zero: every output is uniform whatever the input.
    pub fn constant(dim: usize) -> Self {
        Self {
            id: "toy:constant".into(),
            seed: 0,
            start_matrix: Array2::zeros((dim, dim)),
            end_matrix: Array2::zeros((dim, dim)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.start_matrix.nrows()
    }

    pub fn start_matrix(&self) -> &Array2<f64> {
        &self.start_matrix
    }

    /// Unit embedding of one word.
    pub fn word_embedding(&self, word: &str) -> Array1<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(text::key(word).as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let v: Array1<f64> = Array1::from_shape_fn(self.dim(), |_| rng.random_range(-1.0..1.0));
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v / norm
        } else {
            v
        }
    }

    fn question_len(instance: &RCInstance, embeddings: &Array2<f64>) -> Result<usize> {
        let nq = instance.question.len();
        let expected = nq + instance.context_len();
        if nq == 0 || embeddings.nrows() != expected || embeddings.ncols() == 0 {
            return Err(Error::instance(
                &instance.id,
                format!("embedding matrix {:?} does not fit {nq} question and {} context words", embeddings.dim(), instance.context_len()),
            ));
        }
        Ok(nq)
    }

    fn probs(matrix: &Array2<f64>, embeddings: &Array2<f64>, nq: usize) -> (Array1<f64>, Array1<f64>) {
        let q_mean = embeddings.slice(ndarray::s![..nq, ..]).mean_axis(Axis(0)).expect("non-empty question");
        let direction = matrix.dot(&q_mean);
        let logits = embeddings.slice(ndarray::s![nq.., ..]).dot(&direction);
        (softmax(logits.view()), direction)
    }
}

fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|x| (x - max).exp());
    let sum = exp.sum();
    exp / sum
}

impl ModelGateway for ToyModel {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn scores(&self, instance: &RCInstance) -> Result<SpanScores> {
        let e = self.embed(instance)?;
        let nq = Self::question_len(instance, &e)?;
        Ok(SpanScores {
            start_scores: Self::probs(&self.start_matrix, &e, nq).0.to_vec(),
            end_scores: Self::probs(&self.end_matrix, &e, nq).0.to_vec(),
        })
    }

    fn supports_gradients(&self) -> bool {
        true
    }

    fn embed(&self, instance: &RCInstance) -> Result<Array2<f64>> {
        let words = instance.all_words();
        let mut out = Array2::zeros((words.len(), self.dim()));
        for (row, w) in words.iter().enumerate() {
            out.row_mut(row).assign(&self.word_embedding(w));
        }
        Ok(out)
    }

    fn start_probs_at(&self, instance: &RCInstance, embeddings: &Array2<f64>) -> Result<Vec<f64>> {
        let nq = Self::question_len(instance, embeddings)?;
        Ok(Self::probs(&self.start_matrix, embeddings, nq).0.to_vec())
    }

    fn grad_start(&self, instance: &RCInstance, embeddings: &Array2<f64>, target: usize) -> Result<Array2<f64>> {
        let nq = Self::question_len(instance, embeddings)?;
        let n = embeddings.nrows() - nq;
        if target >= n {
            return Err(Error::instance(&instance.id, format!("target {target} outside context of {n} tokens")));
        }
        let (p, direction) = Self::probs(&self.start_matrix, embeddings, nq);
        let pt = p[target];
        let context = embeddings.slice(ndarray::s![nq.., ..]);
        let mut grad = Array2::zeros(embeddings.dim());

        // context rows: p_t (delta_ti - p_i) M q
        for i in 0..n {
            let coef = pt * (if i == target { 1.0 } else { 0.0 } - p[i]);
            grad.row_mut(nq + i).assign(&(&direction * coef));
        }
        // question rows: (p_t / nq) M^T (e_t - sum_i p_i e_i)
        let expected = context.t().dot(&p);
        let diff = &context.row(target) - &expected;
        let q_grad = self.start_matrix.t().dot(&diff) * (pt / nq as f64);
        for k in 0..nq {
            grad.row_mut(k).assign(&q_grad);
        }
        Ok(grad)
    }
}
