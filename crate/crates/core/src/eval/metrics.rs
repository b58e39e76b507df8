use num_rational::Ratio;
use serde::{Deserialize, Serialize, Serializer};

/// Snippet-level confusion counts plus pair outcomes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    /// Snippets without a YES/NO answer (also counted as FN when positive).
    pub undecided: u64,
    pub pairs_correct: u64,
    pub pairs_total: u64,
}

impl std::ops::AddAssign for Confusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
        self.undecided += o.undecided;
        self.pairs_correct += o.pairs_correct;
        self.pairs_total += o.pairs_total;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Metrics {
    #[serde(flatten)]
    pub confusion: Confusion,
    #[serde(serialize_with = "as_f64")]
    pub precision: Option<Ratio<u64>>,
    #[serde(serialize_with = "as_f64")]
    pub recall: Option<Ratio<u64>>,
    #[serde(serialize_with = "as_f64")]
    pub pairwise_accuracy: Option<Ratio<u64>>,
}

fn as_f64<S: Serializer>(r: &Option<Ratio<u64>>, s: S) -> Result<S::Ok, S::Error> {
    r.map(ratio_f64).serialize(s)
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn ratio(n: u64, d: u64) -> Option<Ratio<u64>> {
    (d != 0).then(|| Ratio::new(n, d))
}

/// Precision over reported positives, recall over buggy snippets, and the
/// fraction of pairs where the buggy side is flagged and the fixed side cleared.
/// Zero denominators yield `None`.
pub fn compute_metrics(c: Confusion) -> Metrics {
    Metrics {
        confusion: c,
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        pairwise_accuracy: ratio(c.pairs_correct, c.pairs_total),
    }
}

impl Metrics {
    pub fn precision_f64(&self) -> Option<f64> {
        self.precision.map(ratio_f64)
    }

    pub fn recall_f64(&self) -> Option<f64> {
        self.recall.map(ratio_f64)
    }

    pub fn pa_f64(&self) -> Option<f64> {
        self.pairwise_accuracy.map(ratio_f64)
    }
}
