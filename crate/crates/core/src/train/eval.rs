use serde::Serialize;

use super::data::{InputPipeline, Prepared};
use super::Workers;
use crate::align::{dtw_align, extract_columns, path_to_spans, pool_tokens, pool_visual};
use crate::contrast::pair_matrices;
use crate::ctc::{average_streams, beam_decode, wer, CorpusWer, ProbStream, WerReport};
use crate::error::{Error, Result};
use crate::ndgrad::{Array, Span, Tape};
use crate::net::{Mode, Model, ModelConfig};
use crate::synthdata::Sample;

/// Which stream is decoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadChoice {
    V,
    K,
    O,
    C,
    /// Frame-wise mean of the four head probabilities.
    #[default]
    Avg,
}

impl std::str::FromStr for HeadChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v" => Ok(Self::V),
            "k" => Ok(Self::K),
            "o" => Ok(Self::O),
            "c" => Ok(Self::C),
            "avg" => Ok(Self::Avg),
            _ => Err(Error::Config(format!("unknown head {s:?}; expected v|k|o|c|avg"))),
        }
    }
}

/// Probability streams of the v, k, o and joint heads.
pub fn head_streams(model: &Model, x: &Prepared) -> Result<[ProbStream; 4]> {
    let tape = Tape::new();
    let p = model.params.bind(&tape, false);
    let out = model.forward(&p, &tape, x.inputs(), &x.glosses, Mode::Infer)?;
    let streams: Vec<ProbStream> = out
        .log_probs
        .iter()
        .map(|v| ProbStream::from_log_probs(&v.value()))
        .collect::<Result<_>>()?;
    Ok(streams.try_into().expect("four heads"))
}

pub fn select_stream(streams: [ProbStream; 4], head: HeadChoice) -> Result<ProbStream> {
    let [v, k, o, c] = streams;
    Ok(match head {
        HeadChoice::V => v,
        HeadChoice::K => k,
        HeadChoice::O => o,
        HeadChoice::C => c,
        HeadChoice::Avg => average_streams(&[v, k, o, c])?,
    })
}

pub fn decode(model: &Model, x: &Prepared, head: HeadChoice, width: usize) -> Result<Vec<String>> {
    let stream = select_stream(head_streams(model, x)?, head)?;
    Ok(model.vocab.decode(&beam_decode(&stream, width)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleResult {
    pub id: String,
    pub hypothesis: Vec<String>,
    pub report: WerReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    /// Micro-averaged over the evaluated samples.
    pub corpus: WerReport,
    pub del_pct: f64,
    pub ins_pct: f64,
    pub samples: Vec<SampleResult>,
}

pub fn evaluate(
    model: &Model,
    pipeline: &InputPipeline,
    samples: &[&Sample],
    head: HeadChoice,
    width: usize,
    workers: &Workers,
) -> Result<EvalReport> {
    let results = workers.map(samples, |s| {
        let x = pipeline.prepare(s)?;
        let hypothesis = decode(model, &x, head, width)?;
        let report = wer(&s.glosses, &hypothesis)?;
        Ok(SampleResult {
            id: s.id.clone(),
            hypothesis,
            report,
        })
    })?;
    let total: CorpusWer = results.iter().map(|r| &r.report).collect();
    Ok(EvalReport {
        corpus: total.report(),
        del_pct: total.del_pct(),
        ins_pct: total.ins_pct(),
        samples: results,
    })
}

/// DTW alignment of one sample against its own labels, with the gloss-level
/// similarity matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlignDump {
    pub id: String,
    /// Gloss index of every downsampled frame.
    pub path: Vec<usize>,
    /// Spans in downsampled frames.
    pub spans: Vec<Span>,
    pub log_score: f64,
    /// Mean absolute interior-boundary error in downsampled frames; `None` for one gloss.
    pub boundary_error: Option<f64>,
    /// Same, in input frames.
    pub boundary_error_frames: Option<f64>,
    #[serde(skip)]
    pub similarity: Array,
}

pub fn align_sample(model: &Model, pipeline: &InputPipeline, sample: &Sample) -> Result<AlignDump> {
    let x = pipeline.prepare(sample)?;
    let labels = model.vocab.encode(&x.glosses)?;
    let tape = Tape::new();
    let p = model.params.bind(&tape, false);
    let out = model.forward(&p, &tape, x.inputs(), &x.glosses, Mode::Train)?;
    let joint = ProbStream::from_log_probs(&out.log_probs[3].value())?;
    let path = dtw_align(&extract_columns(&joint, &labels)?)?;
    let spans = path_to_spans(&path);
    let text = out.text.as_ref().expect("training-mode forward");
    let visual = pool_visual(out.f_c1.expect("training-mode forward"), &spans)?;
    let textual = pool_tokens(
        out.f_t1.expect("training-mode forward"),
        &text.token_to_gloss,
        labels.len(),
    )?;
    let similarity = pair_matrices(visual, textual)?.v2t.value();

    let predicted = spans.boundaries();
    let truth: Vec<usize> = sample.true_spans.iter().skip(1).map(|s| s.0).collect();
    let (boundary_error, boundary_error_frames) = if truth.is_empty() || truth.len() != predicted.len() {
        (None, None)
    } else {
        let step = ModelConfig::DOWNSAMPLE as f64;
        let n = truth.len() as f64;
        let coarse: f64 = predicted
            .iter()
            .zip(&truth)
            .map(|(&p, &t)| (p as f64 - t as f64 / step).abs())
            .sum::<f64>()
            / n;
        (Some(coarse), Some(coarse * step))
    };
    Ok(AlignDump {
        id: sample.id.clone(),
        path: path.assignment,
        spans: spans.spans,
        log_score: path.log_score,
        boundary_error,
        boundary_error_frames,
        similarity,
    })
}
