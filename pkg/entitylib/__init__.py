from .analysis import (
    AttentionTrace,
    SimilarityRow,
    attention_trace,
    render_traces_html,
    type_similarity,
    write_similarity_tsv,
    write_traces_jsonl,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint, update_thresholds
from .classifier import (
    PredictionResult,
    TypeEmbeddingMatrix,
    nll_loss,
    predict_types,
    type_probabilities,
    write_predictions,
)
from .config import TrainConfig
from .corpus import (
    CorpusError,
    Dataset,
    DocumentRecord,
    Mention,
    TypeOntology,
    gold_paths,
    label_vector,
    load_dataset,
    load_documents,
    load_mentions,
    parse_mention_record,
    serialize_mention,
)
from .embeddings import (
    DocEmbeddingTable,
    EmbeddingError,
    WordEmbeddingTable,
    load_doc_vectors,
    load_word_vectors,
    lookup,
    write_doc_vectors,
)
from .encoders import (
    AttentionParams,
    DocMLPParams,
    FeatureVector,
    attention_weights,
    encode_document,
    encode_entity,
    encode_sentence,
)
from .lstm import BiLSTMEncoder, LSTMLayerParams, bilstm_forward, lstm_cell
from .metrics import EvaluationReport, ScoreTriple, evaluate, loose_macro, loose_micro, strict
from .model import Model, featurize, forward_backward, init_model, predict_probabilities
from .optim import AdamHyper, AdamState, adam_update
from .pvdm import PVDMConfig, PVDMModel, infer_doc_vector, train_pvdm
from .thresholds import TuningReport, tune_thresholds, write_thresholds
from .training import GradCheckReport, TrainingResult, grad_check, score_mentions, train_loop

__all__ = [
    "AdamHyper",
    "AdamState",
    "AttentionParams",
    "AttentionTrace",
    "BiLSTMEncoder",
    "CheckpointError",
    "CorpusError",
    "Dataset",
    "DocEmbeddingTable",
    "DocMLPParams",
    "DocumentRecord",
    "EmbeddingError",
    "EvaluationReport",
    "FeatureVector",
    "GradCheckReport",
    "LSTMLayerParams",
    "Mention",
    "Model",
    "PVDMConfig",
    "PVDMModel",
    "PredictionResult",
    "ScoreTriple",
    "SimilarityRow",
    "TrainConfig",
    "TrainingResult",
    "TuningReport",
    "TypeEmbeddingMatrix",
    "TypeOntology",
    "WordEmbeddingTable",
    "adam_update",
    "attention_trace",
    "attention_weights",
    "bilstm_forward",
    "encode_document",
    "encode_entity",
    "encode_sentence",
    "evaluate",
    "featurize",
    "forward_backward",
    "gold_paths",
    "grad_check",
    "infer_doc_vector",
    "init_model",
    "label_vector",
    "load_checkpoint",
    "load_dataset",
    "load_doc_vectors",
    "load_documents",
    "load_mentions",
    "load_word_vectors",
    "lookup",
    "loose_macro",
    "loose_micro",
    "lstm_cell",
    "nll_loss",
    "parse_mention_record",
    "predict_probabilities",
    "predict_types",
    "render_traces_html",
    "save_checkpoint",
    "score_mentions",
    "serialize_mention",
    "strict",
    "train_loop",
    "train_pvdm",
    "tune_thresholds",
    "type_probabilities",
    "type_similarity",
    "update_thresholds",
    "write_doc_vectors",
    "write_predictions",
    "write_similarity_tsv",
    "write_thresholds",
    "write_traces_jsonl",
]
